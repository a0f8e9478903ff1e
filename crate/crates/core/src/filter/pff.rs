use log::warn;
use nalgebra::{Matrix6, Vector6};
use rand::Rng;

use super::{weights, FilterState, LocalizerParams, Origin, Particle, StepInput};
use crate::distance_field::VoxelDistanceField;
use crate::error::{Error, Result};
use crate::geometry::{pose_add, pose_delta, Pose6D};
use crate::optimizer::{covariance_from_hessian, gauss_newton, voxel_grid_filter, OptimizationResult};
use crate::stats::{sample_with_factor, sqrt_factor, standard_normal6, Gaussian6};

/// Moves every particle by `pose_delta(x_prev, x_prev2) + N(0, motion_cov)`.
pub fn predict_linear<R: Rng + ?Sized>(
    particles: &mut [Particle],
    x_prev: &Pose6D,
    x_prev2: &Pose6D,
    motion_cov: &Matrix6<f64>,
    rng: &mut R,
) {
    let mean = pose_delta(x_prev, x_prev2).to_vector();
    let factor = sqrt_factor(motion_cov);
    for p in particles.iter_mut() {
        let delta = Pose6D::from_vector(&(mean + sample_with_factor(&factor, rng)));
        p.pose = pose_add(&p.pose, &delta);
    }
}

/// Draws `count` poses `x_opt + P t` with `P P^T = opt.covariance`, `t ~ N(0, I)`.
pub fn sample_measurement_particles<R: Rng + ?Sized>(
    opt: &OptimizationResult,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Particle>> {
    let factor = if opt.covariance == Matrix6::zeros() {
        Matrix6::zeros()
    } else {
        opt.covariance
            .cholesky()
            .ok_or_else(|| Error::Cholesky("measurement covariance is not positive definite".into()))?
            .l()
    };
    let mean = opt.pose_opt.to_vector();
    Ok((0..count)
        .map(|_| Particle {
            pose: Pose6D::from_vector(&(mean + factor * standard_normal6(rng))),
            weight: 0.0,
            origin: Origin::Measurement,
        })
        .collect())
}

/// `log N(x_i; x_opt, opt.covariance)` for each particle.
pub fn log_weight_predictive(particles: &[Particle], opt: &OptimizationResult) -> Result<Vec<f64>> {
    let g = Gaussian6::new(&opt.covariance)
        .ok_or_else(|| Error::Cholesky("measurement covariance is not positive definite".into()))?;
    Ok(particles.iter().map(|p| g.log_density(&p.pose, &opt.pose_opt)).collect())
}

pub fn weight_predictive(particles: &[Particle], opt: &OptimizationResult) -> Result<Vec<f64>> {
    Ok(log_weight_predictive(particles, opt)?.into_iter().map(f64::exp).collect())
}

/// Log of the mixture `(1/M) sum_j N(x_i; xhat_j, proposal_cov)` for each measurement particle.
pub fn log_weight_measurement_samples(
    measurement: &[Particle],
    predictive: &[Particle],
    proposal_cov: &Matrix6<f64>,
) -> Result<Vec<f64>> {
    if predictive.is_empty() {
        return Err(Error::InvalidParameter("mixture needs at least one predictive particle".into()));
    }
    let ch = proposal_cov
        .cholesky()
        .ok_or_else(|| Error::Cholesky("proposal covariance is not positive definite".into()))?;
    let whiten = ch
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Cholesky("proposal covariance factor is singular".into()))?;
    let log_det = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let log_norm = -0.5 * (6.0 * (2.0 * std::f64::consts::PI).ln() + log_det) - (predictive.len() as f64).ln();

    let centers: Vec<Vector6<f64>> = predictive.iter().map(|p| p.pose.to_vector()).collect();
    let mut terms = vec![0.0; centers.len()];
    Ok(measurement
        .iter()
        .map(|m| {
            let x = m.pose.to_vector();
            let mut max = f64::NEG_INFINITY;
            for (t, c) in terms.iter_mut().zip(&centers) {
                let mut d = x - c;
                for k in 3..6 {
                    d[k] = crate::geometry::normalize_angle(d[k]);
                }
                *t = -0.5 * (whiten * d).norm_squared();
                max = max.max(*t);
            }
            let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
            log_norm + max + sum.ln()
        })
        .collect())
}

pub fn weight_measurement_samples(
    measurement: &[Particle],
    predictive: &[Particle],
    proposal_cov: &Matrix6<f64>,
) -> Result<Vec<f64>> {
    Ok(log_weight_measurement_samples(measurement, predictive, proposal_cov)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

/// One step of the fusion filter.
pub fn step_pff(
    state: &mut FilterState,
    input: &StepInput<'_>,
    field: &VoxelDistanceField,
    params: &LocalizerParams,
) -> Result<()> {
    let fp = &params.filter;
    let m = fp.m_particles;
    state.flags = Default::default();

    // A population left unresampled last step still carries M + L weighted
    // particles; bring it back to M equally weighted predictive ones.
    state.ensure_uniform(m);

    let init = state.interpolated_pose();
    let (x_prev, x_prev2) = (state.x_prev, state.x_prev2);
    predict_linear(&mut state.particles, &x_prev, &x_prev2, &fp.motion_cov, &mut state.rng);

    let filtered = voxel_grid_filter(input.scan, params.optimizer.voxel_filter_res);
    let opt = gauss_newton(
        &init,
        &filtered,
        field,
        &params.model,
        params.measurement_model,
        &params.optimizer,
    )
    .map(|mut r| {
        if let Some(offset) = input.opt_offset {
            r.pose_opt = pose_add(&r.pose_opt, &offset);
        }
        r.covariance = covariance_from_hessian(&r.hessian, fp.sigma_o_sq);
        r
    });

    match opt {
        Ok(opt) => {
            let mut samples = sample_measurement_particles(&opt, fp.l_particles, &mut state.rng)?;
            let mut log_w = log_weight_predictive(&state.particles, &opt)?;
            if !samples.is_empty() {
                log_w.extend(log_weight_measurement_samples(&samples, &state.particles, &fp.proposal_cov)?);
            }
            state.particles.append(&mut samples);
            if !weights::normalize_log_weights(&mut state.particles, &log_w) {
                warn!("step {}: degenerate weights, reset to uniform", state.steps);
                state.flags.weights_degenerate = true;
            }
            state.last_opt = Some(opt);
        }
        Err(e) => {
            warn!("step {}: optimizer failed ({e}); predictive particles only", state.steps);
            state.flags.optimizer_failed = true;
            let uniform = 1.0 / state.particles.len() as f64;
            for p in state.particles.iter_mut() {
                p.weight = uniform;
            }
        }
    }

    let estimate = weights::estimate_pose(&state.particles);
    let total = state.particles.len();
    state.resample_if_needed(m, total as f64 * fp.resample_threshold_fraction);
    state.commit(estimate);
    Ok(())
}
