//! Recover a perturbed pose with Gauss-Newton on the distance field and read
//! off the normal approximation of the measurement model.
//!
//! cargo run --release --example scan_matching

use pffloc::distance_field::VoxelDistanceField;
use pffloc::evaluation::{angular_error, positional_error};
use pffloc::geometry::Pose6D;
use pffloc::measurement::{MeasurementModel, ModelParams};
use pffloc::optimizer::{covariance_from_hessian, gauss_newton, voxel_grid_filter, OptimizerParams};
use pffloc::simulator::{generate_world, simulate_scan, Preset, ScanSimParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pffloc::error::Result<()> {
    let world = generate_world(5, Preset::Room, 50.0)?;
    let field = VoxelDistanceField::build(&world.map_points, 0.1, 1.0)?;
    let truth = world.default_waypoints[1];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scan = simulate_scan(&truth, &world, &ScanSimParams::default(), &mut rng)?;
    let scan = voxel_grid_filter(&scan, 0.2);

    let mparams = ModelParams {
        sigma_sq: 0.02,
        ..Default::default()
    };
    let oparams = OptimizerParams {
        delta_conv: 0.001,
        ..Default::default()
    };
    let init = Pose6D::new(
        truth.x + 0.25,
        truth.y - 0.2,
        truth.z + 0.1,
        truth.roll + 0.02,
        truth.pitch - 0.02,
        truth.yaw + 0.08,
    );
    println!(
        "initial error: {:.3} m, {:.2} deg",
        positional_error(&init, &truth),
        angular_error(&init, &truth)
    );

    let result = gauss_newton(&init, &scan, &field, &mparams, MeasurementModel::ClassConditional, &oparams)?;
    println!(
        "after {} iterations (converged {}): {:.4} m, {:.3} deg, {} of {} points active",
        result.iterations,
        result.converged,
        positional_error(&result.pose_opt, &truth),
        angular_error(&result.pose_opt, &truth),
        result.active_points,
        scan.len()
    );

    let cov = covariance_from_hessian(&result.hessian, 1.0);
    let sd = cov.diagonal().map(f64::sqrt);
    println!(
        "approximate std: x {:.3} y {:.3} z {:.3} m, roll {:.4} pitch {:.4} yaw {:.4} rad",
        sd[0], sd[1], sd[2], sd[3], sd[4], sd[5]
    );
    Ok(())
}
