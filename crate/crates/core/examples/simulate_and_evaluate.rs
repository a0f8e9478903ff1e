//! Write a simulated run to disk in the text formats used by the command line
//! tool, read it back, localize with optimization only and write a report CSV.
//!
//! cargo run --release --example simulate_and_evaluate [output dir]

use std::path::PathBuf;

use pffloc::distance_field::VoxelDistanceField;
use pffloc::evaluation::evaluate;
use pffloc::io;
use pffloc::localizer::{run, Method, RunOptions};
use pffloc::simulator::{simulate_scenario, Preset, ScenarioParams};

fn main() -> pffloc::error::Result<()> {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("pffloc_simulate_example"));
    let params = ScenarioParams {
        preset: Preset::Room,
        steps: 60,
        ..Default::default()
    };
    let scenario = simulate_scenario(42, &params)?;
    std::fs::create_dir_all(&dir).ok();
    io::write_points(dir.join("map.pcd"), &scenario.world.map_points)?;
    io::write_trajectory(dir.join("ground_truth.txt"), &scenario.ground_truth, "seed 42 preset room")?;
    io::write_trajectory(dir.join("odometry.txt"), &scenario.odometry, "row t: motion from step t to t+1")?;
    io::write_scan_archive(dir.join("scans"), &scenario.scans)?;
    println!("wrote map, ground truth, odometry and {} scans to {}", scenario.scans.len(), dir.display());

    let map = io::read_points(dir.join("map.pcd"))?;
    let gt = io::read_trajectory(dir.join("ground_truth.txt"))?;
    let scans = io::read_scan_archive(dir.join("scans"))?;
    let field = VoxelDistanceField::build(&map, 0.1, 1.0)?;

    let mut lp = pffloc::config::synthetic_localizer_params();
    lp.model.sigma_sq = 0.05;
    let out = run(Method::Mmo, &field, &scans, &gt[0], &lp, 0, &RunOptions::default())?;
    io::write_trajectory(dir.join("estimate.txt"), &out.estimates, "method mmo")?;

    let est = io::read_trajectory(dir.join("estimate.txt"))?;
    let mut report = evaluate(&est, &gt, out.times_ms)?;
    report.config = "method = mmo\nseed = 42".into();
    report.save_csv(dir.join("report.csv"))?;
    print!("{}", report.summary());
    Ok(())
}
