//! Particle filter fusing motion prediction with measurement model optimization,
//! plus the optimization-only, standard particle filter and EKF baselines.
//!
//! Each step of the fusion filter:
//!
//! 1. predicts the particles by linear interpolation of the two previous
//!    estimates plus motion noise;
//! 2. optimizes the measurement model from the interpolated pose and
//!    approximates it by `N(x_opt, (1/sigma_o^2) H^-1)`;
//! 3. draws `L` extra particles from that normal approximation;
//! 4. weights predicted particles with the normal approximation and the drawn
//!    particles with a Gaussian mixture over the predicted particles;
//! 5. normalizes, averages and resamples when the effective sample size drops.

mod baselines;
mod pff;
pub mod weights;

pub use baselines::{step_ekf, step_mmo, step_spf};
pub use pff::{
    log_weight_measurement_samples, log_weight_predictive, predict_linear, sample_measurement_particles,
    step_pff, weight_measurement_samples, weight_predictive,
};
pub use weights::{effective_sample_size, estimate_pose, normalize_weights, resample};

use nalgebra::{Matrix6, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{pose_add, pose_delta, Pose6D, ScanFrame};
use crate::measurement::{MeasurementModel, ModelParams};
use crate::optimizer::{OptimizationResult, OptimizerParams};
use crate::stats::{sample_with_factor, sqrt_factor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// Drawn from the predictive distribution.
    Predictive,
    /// Drawn from the normal approximation of the measurement model.
    Measurement,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub pose: Pose6D,
    pub weight: f64,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterParams {
    /// Particles kept after resampling (M).
    pub m_particles: usize,
    /// Particles drawn from the measurement model each step (L).
    pub l_particles: usize,
    pub motion_cov: Matrix6<f64>,
    pub proposal_cov: Matrix6<f64>,
    pub sigma_o_sq: f64,
    pub init_spread: Vector6<f64>,
    pub resample_threshold_fraction: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        let mut motion_cov = Matrix6::from_element(0.01);
        motion_cov.fill_diagonal(0.5);
        Self {
            m_particles: 1000,
            l_particles: 1000,
            motion_cov,
            proposal_cov: Matrix6::from_diagonal(&Vector6::new(0.3, 0.3, 0.3, 0.1, 0.1, 0.1)),
            sigma_o_sq: 1.0,
            init_spread: Vector6::new(0.1, 0.1, 0.1, 0.01, 0.01, 0.01),
            resample_threshold_fraction: 0.5,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.m_particles == 0 {
            return Err(Error::InvalidParameter("m_particles must be >= 1".into()));
        }
        if self.motion_cov.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("every motion_cov entry must be positive".into()));
        }
        if self.motion_cov.cholesky().is_none() {
            return Err(Error::InvalidParameter("motion_cov must be positive definite".into()));
        }
        if self.proposal_cov.cholesky().is_none() || self.proposal_cov.diagonal().iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("proposal_cov must be positive definite".into()));
        }
        if !(self.sigma_o_sq > 0.0) {
            return Err(Error::InvalidParameter("sigma_o_sq must be > 0".into()));
        }
        if self.init_spread.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter("init_spread must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.resample_threshold_fraction) {
            return Err(Error::InvalidParameter("resample_threshold_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Every parameter a localization step needs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalizerParams {
    pub model: ModelParams,
    pub optimizer: OptimizerParams,
    pub filter: FilterParams,
    pub measurement_model: MeasurementModel,
}

impl LocalizerParams {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        self.filter.validate()
    }
}

/// Per-step inputs besides the map.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub scan: &'a ScanFrame,
    /// Motion since the previous step, when an odometry source exists.
    pub odometry: Option<Pose6D>,
    /// Offset added to the optimized pose (disturbance experiments).
    pub opt_offset: Option<Pose6D>,
}

impl<'a> StepInput<'a> {
    pub fn new(scan: &'a ScanFrame) -> Self {
        Self {
            scan,
            odometry: None,
            opt_offset: None,
        }
    }
}

/// Diagnostics from the most recent step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepFlags {
    pub optimizer_failed: bool,
    pub weights_degenerate: bool,
    pub resampled: bool,
    pub ess: f64,
}

#[derive(Debug, Clone)]
pub struct FilterState {
    pub particles: Vec<Particle>,
    pub x_prev: Pose6D,
    pub x_prev2: Pose6D,
    pub estimate: Pose6D,
    pub last_opt: Option<OptimizationResult>,
    /// Pose covariance tracked by the EKF baseline.
    pub covariance: Matrix6<f64>,
    pub flags: StepFlags,
    pub steps: usize,
    pub rng_seed: u64,
    rng: ChaCha8Rng,
}

/// Spreads `M` particles around `initial` with independent Gaussian noise.
pub fn initialize(initial: &Pose6D, params: &FilterParams, seed: u64) -> FilterState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = params.m_particles;
    let spread = Matrix6::from_diagonal(&params.init_spread);
    let particles = (0..m)
        .map(|_| {
            let noise = spread * crate::stats::standard_normal6(&mut rng);
            Particle {
                pose: Pose6D::from_vector(&(initial.to_vector() + noise)),
                weight: 1.0 / m as f64,
                origin: Origin::Predictive,
            }
        })
        .collect();
    FilterState {
        particles,
        x_prev: *initial,
        x_prev2: *initial,
        estimate: *initial,
        last_opt: None,
        covariance: Matrix6::from_diagonal(&params.init_spread.component_mul(&params.init_spread)),
        flags: StepFlags::default(),
        steps: 0,
        rng_seed: seed,
        rng,
    }
}

impl FilterState {
    /// Linear interpolation from the two previous estimates.
    pub fn interpolated_pose(&self) -> Pose6D {
        pose_add(&self.x_prev, &self.linear_motion())
    }

    pub fn linear_motion(&self) -> Pose6D {
        pose_delta(&self.x_prev, &self.x_prev2)
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    fn commit(&mut self, estimate: Pose6D) {
        self.estimate = estimate;
        self.x_prev2 = self.x_prev;
        self.x_prev = estimate;
        self.steps += 1;
    }

    /// Shifts each particle by `mean + N(0, cov)`.
    fn predict_particles(&mut self, mean: &Pose6D, cov: &Matrix6<f64>) {
        let factor = sqrt_factor(cov);
        let mean = mean.to_vector();
        for p in self.particles.iter_mut() {
            let delta = Pose6D::from_vector(&(mean + sample_with_factor(&factor, &mut self.rng)));
            p.pose = pose_add(&p.pose, &delta);
        }
    }

    /// Reduces a weighted population back to `m` equally weighted particles.
    fn ensure_uniform(&mut self, m: usize) {
        let uniform = 1.0 / m as f64;
        let already = self.particles.len() == m
            && self
                .particles
                .iter()
                .all(|p| (p.weight - uniform).abs() <= 1e-12 && p.origin == Origin::Predictive);
        if !already {
            self.particles = weights::resample(&self.particles, m, &mut self.rng);
        }
    }

    /// Systematic resampling when ESS drops below `threshold`.
    fn resample_if_needed(&mut self, m: usize, threshold: f64) {
        let ess = weights::effective_sample_size(&self.particles);
        self.flags.ess = ess;
        self.flags.resampled = ess < threshold;
        if self.flags.resampled {
            self.particles = weights::resample(&self.particles, m, &mut self.rng);
        }
    }
}
