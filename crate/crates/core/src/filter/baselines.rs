use log::warn;
use nalgebra::Matrix6;

use super::{weights, FilterState, LocalizerParams, StepInput};
use crate::distance_field::VoxelDistanceField;
use crate::error::Result;
use crate::geometry::{pose_add, Pose6D};
use crate::measurement::scan_log_likelihood;
use crate::optimizer::{covariance_from_hessian, gauss_newton, voxel_grid_filter, OptimizationResult};

fn optimize(
    state: &FilterState,
    input: &StepInput<'_>,
    field: &VoxelDistanceField,
    params: &LocalizerParams,
) -> Result<OptimizationResult> {
    let filtered = voxel_grid_filter(input.scan, params.optimizer.voxel_filter_res);
    let mut r = gauss_newton(
        &state.interpolated_pose(),
        &filtered,
        field,
        &params.model,
        params.measurement_model,
        &params.optimizer,
    )?;
    if let Some(offset) = input.opt_offset {
        r.pose_opt = pose_add(&r.pose_opt, &offset);
    }
    r.covariance = covariance_from_hessian(&r.hessian, params.filter.sigma_o_sq);
    Ok(r)
}

/// Optimization only, initialized by linear interpolation. `params.measurement_model`
/// selects between the class-conditional model and the likelihood field model.
pub fn step_mmo(
    state: &mut FilterState,
    input: &StepInput<'_>,
    field: &VoxelDistanceField,
    params: &LocalizerParams,
) -> Result<()> {
    state.flags = Default::default();
    let estimate = match optimize(state, input, field, params) {
        Ok(r) => {
            let pose = r.pose_opt;
            state.last_opt = Some(r);
            pose
        }
        Err(e) => {
            warn!("step {}: optimizer failed ({e}); holding previous estimate", state.steps);
            state.flags.optimizer_failed = true;
            state.x_prev
        }
    };
    state.commit(estimate);
    Ok(())
}

/// Standard particle filter weighting each particle by the full scan likelihood.
///
/// Particles move by the odometry increment when one is given, otherwise by
/// the linear interpolation of the two previous estimates, plus motion noise.
pub fn step_spf(
    state: &mut FilterState,
    input: &StepInput<'_>,
    field: &VoxelDistanceField,
    params: &LocalizerParams,
) -> Result<()> {
    let fp = &params.filter;
    let m = fp.m_particles;
    state.flags = Default::default();
    state.ensure_uniform(m);

    let motion = input.odometry.unwrap_or_else(|| state.linear_motion());
    state.predict_particles(&motion, &fp.motion_cov);

    let filtered = voxel_grid_filter(input.scan, params.optimizer.voxel_filter_res);
    let log_w: Vec<f64> = state
        .particles
        .iter()
        .map(|p| scan_log_likelihood(&p.pose, &filtered, field, &params.model, params.measurement_model))
        .collect();
    if !weights::normalize_log_weights(&mut state.particles, &log_w) {
        state.flags.weights_degenerate = true;
    }
    let estimate = weights::estimate_pose(&state.particles);
    state.resample_if_needed(m, m as f64 * fp.resample_threshold_fraction);
    state.commit(estimate);
    Ok(())
}

/// Kalman update of a `(mean, cov)` pose belief with a direct pose measurement.
pub fn kalman_update(mean: &Pose6D, cov: &Matrix6<f64>, z: &Pose6D, r: &Matrix6<f64>) -> (Pose6D, Matrix6<f64>) {
    let s = cov + r;
    let Some(s_inv) = s.try_inverse() else {
        return (*mean, *cov);
    };
    let gain = cov * s_inv;
    let innovation = z.wrapped_difference(mean);
    let post = Pose6D::from_vector(&(mean.to_vector() + gain * innovation));
    let post_cov = (Matrix6::identity() - gain) * cov;
    (post, 0.5 * (post_cov + post_cov.transpose()))
}

/// Linear-interpolation prediction fused with the optimized pose by a Kalman filter.
pub fn step_ekf(
    state: &mut FilterState,
    input: &StepInput<'_>,
    field: &VoxelDistanceField,
    params: &LocalizerParams,
) -> Result<()> {
    state.flags = Default::default();
    let predicted = state.interpolated_pose();
    let predicted_cov = state.covariance + params.filter.motion_cov;
    let (estimate, cov) = match optimize(state, input, field, params) {
        Ok(r) => {
            let out = kalman_update(&predicted, &predicted_cov, &r.pose_opt, &r.covariance);
            state.last_opt = Some(r);
            out
        }
        Err(e) => {
            warn!("step {}: optimizer failed ({e}); prediction only", state.steps);
            state.flags.optimizer_failed = true;
            (predicted, predicted_cov)
        }
    };
    state.covariance = cov;
    state.commit(estimate);
    Ok(())
}
