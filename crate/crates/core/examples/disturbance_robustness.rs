//! Inject a 1 m offset into the optimized pose every 10 steps and compare how
//! the fused filter and optimization alone cope.
//!
//! cargo run --release --example disturbance_robustness [seed]

use pffloc::config::synthetic_localizer_params;
use pffloc::distance_field::VoxelDistanceField;
use pffloc::evaluation::evaluate;
use pffloc::localizer::{run, Disturbance, Method, RunOptions};
use pffloc::simulator::{simulate_scenario, ScenarioParams};

fn main() -> pffloc::error::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let scenario = simulate_scenario(seed, &ScenarioParams::default())?;
    let field = VoxelDistanceField::build(&scenario.world.map_points, 0.1, 2.0)?;
    let params = synthetic_localizer_params();
    let disturbance = Disturbance {
        every: 10,
        magnitude: 1.0,
    };

    for method in [Method::Pff, Method::Mmo] {
        let mut means = Vec::new();
        for d in [None, Some(disturbance)] {
            let options = RunOptions {
                odometry: None,
                disturbance: d,
            };
            let out = run(method, &field, &scenario.scans, &scenario.ground_truth[0], &params, seed, &options)?;
            let report = evaluate(&out.estimates, &scenario.ground_truth, out.times_ms)?;
            means.push(report.pos_mean);
        }
        println!(
            "{method:>4}: clean {:.3} m, disturbed {:.3} m ({:.1}x)",
            means[0],
            means[1],
            means[1] / means[0]
        );
    }
    Ok(())
}
