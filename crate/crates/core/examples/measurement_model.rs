//! Per-point likelihoods of the class-conditional model and the likelihood
//! field model, and how the scan likelihood falls off around the true pose.
//!
//! cargo run --release --example measurement_model

use pffloc::distance_field::VoxelDistanceField;
use pffloc::geometry::{pose_add, Pose6D};
use pffloc::measurement::{
    class_conditional_likelihood, lfm_likelihood, likelihood_known, likelihood_unknown, residual,
    scan_log_likelihood, MeasurementModel, ModelParams,
};
use pffloc::simulator::{generate_world, simulate_scan, Preset, ScanSimParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pffloc::error::Result<()> {
    let params = ModelParams {
        z_max: 120.0,
        ..Default::default()
    };
    println!("  d (m)   known  unknown(r=20)  class-cond  residual     lfm");
    for d in [0.0, 0.25, 0.5, 1.0, 2.0] {
        let cc = class_conditional_likelihood(d, 20.0, &params);
        println!(
            "{d:7.2} {:7.4} {:14.4} {:11.4} {:9.4} {:7.4}",
            likelihood_known(d, &params),
            likelihood_unknown(20.0, &params),
            cc,
            residual(cc),
            lfm_likelihood(d, &params)
        );
    }

    let world = generate_world(1, Preset::Room, 50.0)?;
    let field = VoxelDistanceField::build(&world.map_points, 0.1, 1.0)?;
    let truth = world.default_waypoints[0];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scan = simulate_scan(&truth, &world, &ScanSimParams::default(), &mut rng)?;
    println!("\nscan log-likelihood of {} points against an x offset:", scan.len());
    for dx in [-1.0, -0.5, -0.2, 0.0, 0.2, 0.5, 1.0] {
        let pose = pose_add(&truth, &Pose6D::from_translation(dx, 0.0, 0.0));
        let cc = scan_log_likelihood(&pose, &scan, &field, &params, MeasurementModel::ClassConditional);
        let lfm = scan_log_likelihood(&pose, &scan, &field, &params, MeasurementModel::LikelihoodField);
        println!("  dx {dx:+5.1} m  class-conditional {cc:10.2}  lfm {lfm:10.2}");
    }
    Ok(())
}
