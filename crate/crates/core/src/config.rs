//! INI run configuration.
//!
//! Sections `model`, `optimizer`, `filter`, `field`, `simulation`, `run` and
//! `paths`. Every key is optional; missing keys keep their defaults, unknown
//! keys are rejected. Matrices are written as 36 row-major numbers.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::{EscapePolicy, Ini, LineSeparator, WriteOption};
use nalgebra::{Matrix6, Vector6};

use crate::distance_field::FieldParams;
use crate::error::{Error, Result};
use crate::filter::LocalizerParams;
use crate::localizer::{Disturbance, Method};
use crate::measurement::MeasurementModel;
use crate::simulator::{Preset, ScenarioParams};

/// Input and output locations. Empty paths are unset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Paths {
    pub map: PathBuf,
    pub field: PathBuf,
    pub scans: PathBuf,
    pub ground_truth: PathBuf,
    pub odometry: PathBuf,
    pub estimate: PathBuf,
    pub report: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub localizer: LocalizerParams,
    pub field: FieldParams,
    pub simulation: ScenarioParams,
    pub method: Method,
    pub seed: u64,
    /// Offset injected into the optimized pose every `disturbance_every` steps; 0 disables.
    pub disturbance_every: usize,
    pub disturbance_magnitude: f64,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            localizer: LocalizerParams::default(),
            field: FieldParams::default(),
            simulation: ScenarioParams::default(),
            method: Method::Pff,
            seed: 0,
            disturbance_every: 0,
            disturbance_magnitude: 1.0,
            paths: Paths::default(),
        }
    }
}

/// Scales translation rows/columns by `trans` and rotation rows/columns by
/// `rot`, i.e. `S M S` with `S = diag(sqrt(trans) I, sqrt(rot) I)`.
pub fn scale_covariance(m: &Matrix6<f64>, trans: f64, rot: f64) -> Matrix6<f64> {
    let s = Matrix6::from_diagonal(&Vector6::new(trans, trans, trans, rot, rot, rot).map(f64::sqrt));
    s * m * s
}

/// Parameters for the synthetic simulator worlds.
///
/// The default parameterization assumes vehicle-scale motion and
/// point clouds; at desk scale the motion and proposal covariances are far too
/// wide and the measurement model too flat for the corridor scenario.
pub fn synthetic_localizer_params() -> LocalizerParams {
    let mut p = LocalizerParams::default();
    p.model.sigma_sq = 0.1;
    p.model.z_max = p.model.r_max;
    p.optimizer.delta_conv = 0.001;
    p.optimizer.voxel_filter_res = 0.5;
    p.filter.motion_cov = scale_covariance(&p.filter.motion_cov, 0.005, 5e-5);
    p.filter.proposal_cov = scale_covariance(&p.filter.proposal_cov, 0.01, 2.5e-4);
    p
}

impl RunConfig {
    /// Defaults for the synthetic worlds: [`synthetic_localizer_params`] and a 0.1 m field.
    pub fn synthetic() -> Self {
        Self {
            localizer: synthetic_localizer_params(),
            field: FieldParams {
                resolution: 0.1,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn disturbance(&self) -> Option<Disturbance> {
        (self.disturbance_every > 0).then_some(Disturbance {
            every: self.disturbance_every,
            magnitude: self.disturbance_magnitude,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.localizer.validate()?;
        self.simulation.scan.validate()?;
        if !(self.field.resolution > 0.0) || !(self.field.margin >= 0.0) {
            return Err(Error::Config("field resolution must be > 0 and margin >= 0".into()));
        }
        Ok(())
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_ini(&ini, &RunConfig::default())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_ini_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_ini_string()).map_err(|e| Error::io(path, e))
    }

    /// Applies `section.key=value` overrides on top of this configuration.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut ini = Ini::new();
        for o in overrides {
            let o = o.as_ref();
            let (lhs, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not section.key=value")))?;
            let (section, key) = lhs
                .trim()
                .split_once('.')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not section.key=value")))?;
            ini.with_section(Some(section)).set(key, value.trim());
        }
        Self::from_ini(&ini, self)
    }

    pub fn to_ini_string(&self) -> String {
        let mut buf = Vec::new();
        let opt = WriteOption {
            escape_policy: EscapePolicy::Nothing,
            line_separator: LineSeparator::CR,
            ..Default::default()
        };
        self.to_ini().write_to_opt(&mut buf, opt).expect("writing to memory");
        String::from_utf8(buf).expect("ini output is utf-8")
    }

    pub fn to_ini(&self) -> Ini {
        let (m, o, f) = (&self.localizer.model, &self.localizer.optimizer, &self.localizer.filter);
        let mut ini = Ini::new();
        ini.with_section(Some("model"))
            .set("sigma_sq", m.sigma_sq.to_string())
            .set("lambda", m.lambda.to_string())
            .set("r_max", m.r_max.to_string())
            .set("z_hit", m.z_hit.to_string())
            .set("z_rand", m.z_rand.to_string())
            .set("z_max", m.z_max.to_string())
            .set("prior_known", m.prior_known.to_string())
            .set("epsilon", m.epsilon.to_string())
            .set("measurement_model", model_name(self.localizer.measurement_model));
        ini.with_section(Some("optimizer"))
            .set("delta_trans", o.delta_trans.to_string())
            .set("delta_rot", o.delta_rot.to_string())
            .set("delta_conv", o.delta_conv.to_string())
            .set("max_iterations", o.max_iterations.to_string())
            .set("damping", o.damping.to_string())
            .set("voxel_filter_res", o.voxel_filter_res.to_string());
        ini.with_section(Some("filter"))
            .set("m_particles", f.m_particles.to_string())
            .set("l_particles", f.l_particles.to_string())
            .set("motion_cov", join(f.motion_cov.transpose().iter()))
            .set("proposal_cov", join(f.proposal_cov.transpose().iter()))
            .set("sigma_o_sq", f.sigma_o_sq.to_string())
            .set("init_spread", join(f.init_spread.iter()))
            .set("resample_threshold_fraction", f.resample_threshold_fraction.to_string());
        ini.with_section(Some("field"))
            .set("resolution", self.field.resolution.to_string())
            .set("margin", self.field.margin.to_string())
            .set("voxel_budget", self.field.voxel_budget.to_string())
            .set("max_distance", self.field.max_distance.map_or(String::new(), |d| d.to_string()));
        let s = &self.simulation;
        ini.with_section(Some("simulation"))
            .set("preset", s.preset.to_string())
            .set("density", s.density.to_string())
            .set("steps", s.steps.to_string())
            .set("points_per_scan", s.scan.points_per_scan.to_string())
            .set("range_noise_std", s.scan.range_noise_std.to_string())
            .set("unknown_fraction", s.scan.unknown_fraction.to_string())
            .set("max_range", s.scan.max_range.to_string())
            .set("dropout_prob", s.scan.dropout_prob.to_string())
            .set("odometry_trans_std", s.odometry_trans_std.to_string())
            .set("odometry_rot_std", s.odometry_rot_std.to_string());
        ini.with_section(Some("run"))
            .set("method", self.method.name())
            .set("seed", self.seed.to_string())
            .set("disturbance_every", self.disturbance_every.to_string())
            .set("disturbance_magnitude", self.disturbance_magnitude.to_string());
        let p = &self.paths;
        ini.with_section(Some("paths"))
            .set("map", p.map.display().to_string())
            .set("field", p.field.display().to_string())
            .set("scans", p.scans.display().to_string())
            .set("ground_truth", p.ground_truth.display().to_string())
            .set("odometry", p.odometry.display().to_string())
            .set("estimate", p.estimate.display().to_string())
            .set("report", p.report.display().to_string());
        ini
    }

    /// Reads every key present in `ini` over `base`.
    pub fn from_ini(ini: &Ini, base: &RunConfig) -> Result<Self> {
        let mut c = base.clone();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (key, value) in props.iter() {
                c.set(section, key, value.trim())
                    .map_err(|e| Error::Config(format!("[{section}] {key}: {e}")))?;
            }
        }
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        let m = &mut self.localizer.model;
        let o = &mut self.localizer.optimizer;
        let f = &mut self.localizer.filter;
        let s = &mut self.simulation;
        let p = &mut self.paths;
        match (section, key) {
            ("model", "sigma_sq") => m.sigma_sq = num(v)?,
            ("model", "lambda") => m.lambda = num(v)?,
            ("model", "r_max") => m.r_max = num(v)?,
            ("model", "z_hit") => m.z_hit = num(v)?,
            ("model", "z_rand") => m.z_rand = num(v)?,
            ("model", "z_max") => m.z_max = num(v)?,
            ("model", "prior_known") => m.prior_known = num(v)?,
            ("model", "epsilon") => m.epsilon = num(v)?,
            ("model", "measurement_model") => self.localizer.measurement_model = v.parse()?,
            ("optimizer", "delta_trans") => o.delta_trans = num(v)?,
            ("optimizer", "delta_rot") => o.delta_rot = num(v)?,
            ("optimizer", "delta_conv") => o.delta_conv = num(v)?,
            ("optimizer", "max_iterations") => o.max_iterations = num(v)?,
            ("optimizer", "damping") => o.damping = num(v)?,
            ("optimizer", "voxel_filter_res") => o.voxel_filter_res = num(v)?,
            ("filter", "m_particles") => f.m_particles = num(v)?,
            ("filter", "l_particles") => f.l_particles = num(v)?,
            ("filter", "motion_cov") => f.motion_cov = matrix(v)?,
            ("filter", "proposal_cov") => f.proposal_cov = matrix(v)?,
            ("filter", "sigma_o_sq") => f.sigma_o_sq = num(v)?,
            ("filter", "init_spread") => f.init_spread = Vector6::from_vec(list(v, 6)?),
            ("filter", "resample_threshold_fraction") => f.resample_threshold_fraction = num(v)?,
            ("field", "resolution") => self.field.resolution = num(v)?,
            ("field", "margin") => self.field.margin = num(v)?,
            ("field", "voxel_budget") => self.field.voxel_budget = num(v)?,
            ("field", "max_distance") => {
                self.field.max_distance = if v.is_empty() { None } else { Some(num(v)?) }
            }
            ("simulation", "preset") => s.preset = v.parse::<Preset>()?,
            ("simulation", "density") => s.density = num(v)?,
            ("simulation", "steps") => s.steps = num(v)?,
            ("simulation", "points_per_scan") => s.scan.points_per_scan = num(v)?,
            ("simulation", "range_noise_std") => s.scan.range_noise_std = num(v)?,
            ("simulation", "unknown_fraction") => s.scan.unknown_fraction = num(v)?,
            ("simulation", "max_range") => s.scan.max_range = num(v)?,
            ("simulation", "dropout_prob") => s.scan.dropout_prob = num(v)?,
            ("simulation", "odometry_trans_std") => s.odometry_trans_std = num(v)?,
            ("simulation", "odometry_rot_std") => s.odometry_rot_std = num(v)?,
            ("run", "method") => self.method = v.parse()?,
            ("run", "seed") => self.seed = num(v)?,
            ("run", "disturbance_every") => self.disturbance_every = num(v)?,
            ("run", "disturbance_magnitude") => self.disturbance_magnitude = num(v)?,
            ("paths", "map") => p.map = v.into(),
            ("paths", "field") => p.field = v.into(),
            ("paths", "scans") => p.scans = v.into(),
            ("paths", "ground_truth") => p.ground_truth = v.into(),
            ("paths", "odometry") => p.odometry = v.into(),
            ("paths", "estimate") => p.estimate = v.into(),
            ("paths", "report") => p.report = v.into(),
            _ => return Err(Error::Config(format!("unknown key {section}.{key}"))),
        }
        Ok(())
    }
}

fn model_name(m: MeasurementModel) -> &'static str {
    match m {
        MeasurementModel::ClassConditional => "class_conditional",
        MeasurementModel::LikelihoodField => "lfm",
    }
}

fn join<T: Display>(values: impl Iterator<Item = T>) -> String {
    values.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn num<T: FromStr>(v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("invalid value '{v}'")))
}

fn list(v: &str, n: usize) -> Result<Vec<f64>> {
    let out: Vec<f64> = v.split_whitespace().map(num).collect::<Result<_>>()?;
    if out.len() != n {
        return Err(Error::Config(format!("expected {n} values, found {}", out.len())));
    }
    Ok(out)
}

/// Row-major 36 values, or a single value for a scaled identity.
fn matrix(v: &str) -> Result<Matrix6<f64>> {
    if let [x] = v.split_whitespace().collect::<Vec<_>>()[..] {
        return Ok(Matrix6::identity() * num::<f64>(x)?);
    }
    Ok(Matrix6::from_row_slice(&list(v, 36)?))
}
