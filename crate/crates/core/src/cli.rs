//! Command-line front end: `build-field`, `simulate`, `localize`, `evaluate`, `compare`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::info;

use crate::config::RunConfig;
use crate::distance_field::VoxelDistanceField;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, RunReport};
use crate::geometry::Pose6D;
use crate::io;
use crate::localizer::{self, Method, RunOptions};
use crate::simulator::simulate_scenario;

#[derive(Debug, Parser)]
#[command(name = "pffloc", version, about = "3D LiDAR pose tracking with a particle filter fused with scan optimization")]
pub struct Cli {
    /// INI configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Start from the synthetic-world parameterization instead of the vehicle-scale defaults.
    #[arg(long, global = true)]
    pub synthetic: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// One of pff, mmo, mmolfm, spf, spf_odom, ekf.
    #[arg(long, global = true)]
    pub method: Option<Method>,
    /// Override a single key, e.g. `--set model.sigma_sq=0.1`. Repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a distance field from an XYZ or PCD map and save it as VDF1.
    BuildField {
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        resolution: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Simulate a world and a run, writing the map, ground truth, scans,
    /// odometry and a `run.ini` that points at them.
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Track through a scan archive starting from the first ground-truth pose.
    Localize {
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        scans: Option<PathBuf>,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long)]
        odometry: Option<PathBuf>,
        #[arg(long)]
        estimate: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score an estimated trajectory against ground truth.
    Evaluate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run several methods on freshly simulated scenarios and tabulate the errors.
    Compare {
        /// Comma-separated methods; all by default.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        /// Number of consecutive seeds starting at `--seed`.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Per-run summary CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Resolves the configuration from the file, flags and overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let base = if cli.synthetic { RunConfig::synthetic() } else { RunConfig::default() };
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let ini = ini::Ini::load_from_str_noescape(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_ini(&ini, &base)?
        }
        None => base,
    };
    cfg = cfg.with_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(method) = cli.method {
        cfg.method = method;
    }
    Ok(cfg)
}

/// Runs the command, returning the text meant for stdout.
pub fn execute(cli: &Cli) -> Result<String> {
    let mut cfg = resolve_config(cli)?;
    match &cli.command {
        Command::BuildField {
            map,
            out,
            resolution,
            margin,
        } => {
            let map = pick(map, &cfg.paths.map, "map")?;
            let out = pick(out, &cfg.paths.field, "field output")?;
            if let Some(r) = resolution {
                cfg.field.resolution = *r;
            }
            if let Some(m) = margin {
                cfg.field.margin = *m;
            }
            build_field(&map, &out, &cfg)
        }
        Command::Simulate { out } => simulate(out, &cfg),
        Command::Localize {
            field,
            scans,
            ground_truth,
            odometry,
            estimate,
            report,
        } => {
            let p = &mut cfg.paths;
            for (flag, slot) in [
                (field, &mut p.field),
                (scans, &mut p.scans),
                (ground_truth, &mut p.ground_truth),
                (odometry, &mut p.odometry),
                (estimate, &mut p.estimate),
                (report, &mut p.report),
            ] {
                if let Some(v) = flag {
                    *slot = v.clone();
                }
            }
            localize(&cfg)
        }
        Command::Evaluate {
            estimate,
            ground_truth,
            report,
        } => {
            let est = io::read_trajectory(estimate)?;
            let gt = io::read_trajectory(ground_truth)?;
            let r = evaluate(&est, &gt, Vec::new())?;
            if let Some(path) = report {
                r.save_csv(path)?;
            }
            Ok(r.summary())
        }
        Command::Compare { methods, seeds, out } => {
            let methods = if methods.is_empty() { Method::ALL.to_vec() } else { methods.clone() };
            compare(&cfg, &methods, *seeds, out.as_deref())
        }
    }
}

fn pick(flag: &Option<PathBuf>, configured: &Path, what: &str) -> Result<PathBuf> {
    match flag {
        Some(p) => Ok(p.clone()),
        None if !configured.as_os_str().is_empty() => Ok(configured.to_path_buf()),
        None => Err(Error::Config(format!("no {what} path given"))),
    }
}

fn build_field(map: &Path, out: &Path, cfg: &RunConfig) -> Result<String> {
    let points = io::read_points(map)?;
    let start = Instant::now();
    let field = VoxelDistanceField::build_with(&points, &cfg.field)?;
    let elapsed = start.elapsed().as_secs_f64();
    field.save(out)?;
    let [nx, ny, nz] = field.dims();
    Ok(format!(
        "voxels: {} ({nx}x{ny}x{nz} at {} m)\nbuild time (s): {elapsed:.3}\nwritten: {}\n",
        field.voxel_count(),
        field.resolution(),
        out.display()
    ))
}

fn simulate(dir: &Path, cfg: &RunConfig) -> Result<String> {
    let scenario = simulate_scenario(cfg.seed, &cfg.simulation)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut run = cfg.clone();
    run.paths.map = dir.join("map.xyz");
    run.paths.field = dir.join("field.vdf");
    run.paths.scans = dir.join("scans");
    run.paths.ground_truth = dir.join("ground_truth.txt");
    run.paths.odometry = dir.join("odometry.txt");
    run.paths.estimate = dir.join("estimate.txt");
    run.paths.report = dir.join("report.csv");
    let header = format!("seed {} preset {}", cfg.seed, cfg.simulation.preset);
    io::write_xyz(&run.paths.map, &scenario.world.map_points)?;
    io::write_trajectory(&run.paths.ground_truth, &scenario.ground_truth, &header)?;
    io::write_trajectory(&run.paths.odometry, &scenario.odometry, &format!("{header}\nrow t: motion from step t to t+1"))?;
    io::write_scan_archive(&run.paths.scans, &scenario.scans)?;
    let ini = dir.join("run.ini");
    run.save(&ini)?;
    Ok(format!(
        "map points: {}\nsteps: {}\nwritten: {}\n",
        scenario.world.map_points.len(),
        scenario.scans.len(),
        ini.display()
    ))
}

fn load_or_build_field(cfg: &RunConfig) -> Result<VoxelDistanceField> {
    let p = &cfg.paths;
    if !p.field.as_os_str().is_empty() && p.field.exists() {
        return VoxelDistanceField::load(&p.field);
    }
    if p.map.as_os_str().is_empty() {
        return Err(Error::Config("neither a field nor a map path is set".into()));
    }
    info!("building field from {}", p.map.display());
    VoxelDistanceField::build_with(&io::read_points(&p.map)?, &cfg.field)
}

fn localize(cfg: &RunConfig) -> Result<String> {
    let field = load_or_build_field(cfg)?;
    let scans = io::read_scan_archive(&pick(&None, &cfg.paths.scans, "scan archive")?)?;
    let gt = io::read_trajectory(pick(&None, &cfg.paths.ground_truth, "ground truth")?)?;
    let initial = gt.first().ok_or_else(|| Error::Config("ground truth is empty".into()))?;
    let odometry: Option<Vec<Pose6D>> = match cfg.paths.odometry.as_os_str().is_empty() {
        true => None,
        false if cfg.method.uses_odometry() => Some(io::read_trajectory(&cfg.paths.odometry)?),
        false => None,
    };
    let options = RunOptions {
        odometry: odometry.as_deref(),
        disturbance: cfg.disturbance(),
    };
    let out = localizer::run(cfg.method, &field, &scans, initial, &cfg.localizer, cfg.seed, &options)?;

    let mut text = String::new();
    if !cfg.paths.estimate.as_os_str().is_empty() {
        let header = format!("method {} seed {}", cfg.method, cfg.seed);
        io::write_trajectory(&cfg.paths.estimate, &out.estimates, &header)?;
        let _ = writeln!(text, "estimate: {}", cfg.paths.estimate.display());
    }
    let _ = writeln!(
        text,
        "optimizer failures: {}\nresamples: {}",
        out.optimizer_failures, out.resamples
    );
    if gt.len() == out.estimates.len() {
        let mut report = evaluate(&out.estimates, &gt, out.times_ms)?;
        report.config = format!("method = {}\nseed = {}", cfg.method, cfg.seed);
        if !cfg.paths.report.as_os_str().is_empty() {
            report.save_csv(&cfg.paths.report)?;
        }
        text.push_str(&report.summary());
    }
    Ok(text)
}

/// One row of a comparison.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub method: Method,
    pub seed: u64,
    pub report: RunReport,
}

/// Runs every method on the scenario of each seed in `seed..seed + seeds`.
pub fn compare_runs(cfg: &RunConfig, methods: &[Method], seeds: u64) -> Result<Vec<CompareRow>> {
    let mut rows = Vec::new();
    for seed in cfg.seed..cfg.seed + seeds {
        let scenario = simulate_scenario(seed, &cfg.simulation)?;
        let field = VoxelDistanceField::build_with(&scenario.world.map_points, &cfg.field)?;
        for &method in methods {
            let options = RunOptions {
                odometry: Some(&scenario.odometry),
                disturbance: cfg.disturbance(),
            };
            let out = localizer::run(
                method,
                &field,
                &scenario.scans,
                &scenario.ground_truth[0],
                &cfg.localizer,
                seed,
                &options,
            )?;
            let report = evaluate(&out.estimates, &scenario.ground_truth, out.times_ms)?;
            info!("{method} seed {seed}: {:.3} m", report.pos_mean);
            rows.push(CompareRow { method, seed, report });
        }
    }
    Ok(rows)
}

fn compare(cfg: &RunConfig, methods: &[Method], seeds: u64, out: Option<&Path>) -> Result<String> {
    let rows = compare_runs(cfg, methods, seeds)?;
    let mut csv = String::from("method,seed,pos_mean_m,pos_std_m,ang_mean_deg,ang_std_deg,time_ms,tracking_failed\n");
    for r in &rows {
        let p = &r.report;
        let _ = writeln!(
            csv,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.3},{}",
            r.method,
            r.seed,
            p.pos_mean,
            p.pos_std,
            p.ang_mean,
            p.ang_std,
            p.mean_time_ms(),
            p.tracking_failed
        );
    }
    if let Some(path) = out {
        std::fs::write(path, &csv).map_err(|e| Error::io(path, e))?;
    }

    let mut text = format!(
        "{:<9} {:>10} {:>10} {:>10} {:>9}\n",
        "method", "pos (cm)", "ang (deg)", "time (ms)", "failed"
    );
    for &m in methods {
        let runs: Vec<&RunReport> = rows.iter().filter(|r| r.method == m).map(|r| &r.report).collect();
        let n = runs.len() as f64;
        let mean = |f: fn(&RunReport) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / n;
        let _ = writeln!(
            text,
            "{:<9} {:>10.2} {:>10.3} {:>10.2} {:>6}/{}",
            m.name(),
            100.0 * mean(|r| r.pos_mean),
            mean(|r| r.ang_mean),
            mean(|r| r.mean_time_ms()),
            runs.iter().filter(|r| r.tracking_failed).count(),
            runs.len()
        );
    }
    Ok(text)
}
