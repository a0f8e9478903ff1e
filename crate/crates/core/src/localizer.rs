//! Drives a localization method over a sequence of scans.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distance_field::VoxelDistanceField;
use crate::error::{Error, Result};
use crate::filter::{self, FilterState, LocalizerParams, StepInput};
use crate::geometry::{Pose6D, ScanFrame};
use crate::measurement::MeasurementModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Particle filter fused with measurement model optimization.
    Pff,
    /// Optimization of the class-conditional model only.
    Mmo,
    /// Optimization of the likelihood field model only.
    MmoLfm,
    /// Standard particle filter predicting by linear interpolation.
    Spf,
    /// Standard particle filter predicting by odometry.
    SpfOdom,
    /// Optimization fused with linear prediction by a Kalman filter.
    Ekf,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Pff,
        Method::Mmo,
        Method::MmoLfm,
        Method::Spf,
        Method::SpfOdom,
        Method::Ekf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pff => "pff",
            Method::Mmo => "mmo",
            Method::MmoLfm => "mmolfm",
            Method::Spf => "spf",
            Method::SpfOdom => "spf_odom",
            Method::Ekf => "ekf",
        }
    }

    pub fn uses_odometry(self) -> bool {
        self == Method::SpfOdom
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// Position offsets added to the optimized pose at a fixed period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    pub every: usize,
    /// Length of the horizontal offset (m).
    pub magnitude: f64,
}

impl Disturbance {
    /// Offset for `step`, if one is scheduled. Directions come from `rng`.
    pub fn offset<R: Rng + ?Sized>(&self, step: usize, rng: &mut R) -> Option<Pose6D> {
        if self.every == 0 || step == 0 || step % self.every != 0 {
            return None;
        }
        let heading: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        Some(Pose6D::from_translation(
            self.magnitude * heading.cos(),
            self.magnitude * heading.sin(),
            0.0,
        ))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    /// `odometry[t]` is the motion from step `t` to `t + 1`.
    pub odometry: Option<&'a [Pose6D]>,
    pub disturbance: Option<Disturbance>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub estimates: Vec<Pose6D>,
    pub times_ms: Vec<f64>,
    pub optimizer_failures: usize,
    pub degenerate_weights: usize,
    pub resamples: usize,
}

/// Tracks from `initial` through `scans`, one estimate per scan.
///
/// The first scan is processed with zero motion from `initial`.
pub fn run(
    method: Method,
    field: &VoxelDistanceField,
    scans: &[ScanFrame],
    initial: &Pose6D,
    params: &LocalizerParams,
    seed: u64,
    options: &RunOptions<'_>,
) -> Result<RunOutput> {
    params.validate()?;
    let mut params = params.clone();
    params.measurement_model = match method {
        Method::MmoLfm => MeasurementModel::LikelihoodField,
        Method::Mmo => MeasurementModel::ClassConditional,
        _ => params.measurement_model,
    };
    if method.uses_odometry() {
        let n = options.odometry.map_or(0, |o| o.len());
        if n + 1 < scans.len() {
            return Err(Error::Config(format!(
                "{method} needs {} odometry increments, got {n}",
                scans.len().saturating_sub(1)
            )));
        }
    }

    let mut state = filter::initialize(initial, &params.filter, seed);
    let mut disturbance_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d157);
    let mut out = RunOutput::default();
    for (t, scan) in scans.iter().enumerate() {
        let mut input = StepInput::new(scan);
        if method.uses_odometry() {
            input.odometry = Some(match t {
                0 => Pose6D::identity(),
                _ => options.odometry.unwrap()[t - 1],
            });
        }
        input.opt_offset = options
            .disturbance
            .and_then(|d| d.offset(t, &mut disturbance_rng));

        let start = Instant::now();
        step(method, &mut state, &input, field, &params)?;
        out.times_ms.push(start.elapsed().as_secs_f64() * 1e3);

        out.estimates.push(state.estimate);
        out.optimizer_failures += state.flags.optimizer_failed as usize;
        out.degenerate_weights += state.flags.weights_degenerate as usize;
        out.resamples += state.flags.resampled as usize;
    }
    Ok(out)
}

pub fn step(
    method: Method,
    state: &mut FilterState,
    input: &StepInput<'_>,
    field: &VoxelDistanceField,
    params: &LocalizerParams,
) -> Result<()> {
    match method {
        Method::Pff => filter::step_pff(state, input, field, params),
        Method::Mmo | Method::MmoLfm => filter::step_mmo(state, input, field, params),
        Method::Spf | Method::SpfOdom => filter::step_spf(state, input, field, params),
        Method::Ekf => filter::step_ekf(state, input, field, params),
    }
}
