//! Track a simulated corridor run with the fused particle filter, without
//! odometry, and score it against ground truth.
//!
//! cargo run --release --example pff_tracking [seed]

use pffloc::config::synthetic_localizer_params;
use pffloc::distance_field::VoxelDistanceField;
use pffloc::evaluation::evaluate;
use pffloc::localizer::{run, Method, RunOptions};
use pffloc::simulator::{simulate_scenario, ScenarioParams};

fn main() -> pffloc::error::Result<()> {
    env_logger::init();
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let scenario = simulate_scenario(seed, &ScenarioParams::default())?;
    let field = VoxelDistanceField::build(&scenario.world.map_points, 0.1, 2.0)?;
    let params = synthetic_localizer_params();

    let out = run(
        Method::Pff,
        &field,
        &scenario.scans,
        &scenario.ground_truth[0],
        &params,
        seed,
        &RunOptions::default(),
    )?;
    let report = evaluate(&out.estimates, &scenario.ground_truth, out.times_ms.clone())?;

    for t in (0..out.estimates.len()).step_by(25) {
        let (e, g) = (out.estimates[t], scenario.ground_truth[t]);
        println!(
            "step {t:3}: estimate ({:6.2}, {:5.2}, {:4.2})  truth ({:6.2}, {:5.2}, {:4.2})  error {:.3} m",
            e.x, e.y, e.z, g.x, g.y, g.z, report.pos_errors[t]
        );
    }
    println!("resampled on {} of {} steps", out.resamples, out.estimates.len());
    print!("{}", report.summary());
    Ok(())
}
