//! Per-step error metrics, aggregate statistics and the tracking-failure rule.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose6D};
use crate::stats::mean_std;

/// A run whose mean positional error exceeds this is a tracking failure (m).
pub const TRACKING_FAILURE_THRESHOLD: f64 = 1.0;

pub fn positional_error(est: &Pose6D, gt: &Pose6D) -> f64 {
    (est.translation() - gt.translation()).norm()
}

/// Root-sum-square of the wrapped roll, pitch and yaw differences, in degrees.
pub fn angular_error(est: &Pose6D, gt: &Pose6D) -> f64 {
    let d = [est.roll - gt.roll, est.pitch - gt.pitch, est.yaw - gt.yaw].map(normalize_angle);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().to_degrees()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub pos_errors: Vec<f64>,
    pub ang_errors: Vec<f64>,
    pub times_ms: Vec<f64>,
    pub pos_mean: f64,
    pub pos_std: f64,
    pub ang_mean: f64,
    pub ang_std: f64,
    pub tracking_failed: bool,
    /// Free-form description of the configuration that produced the run.
    pub config: String,
}

/// Mean and population standard deviation of each metric.
pub fn aggregate(pos_errors: Vec<f64>, ang_errors: Vec<f64>, times_ms: Vec<f64>) -> Result<RunReport> {
    if pos_errors.is_empty() {
        return Err(Error::InvalidParameter("cannot aggregate an empty run".into()));
    }
    if pos_errors.len() != ang_errors.len() {
        return Err(Error::LengthMismatch {
            estimate: ang_errors.len(),
            ground_truth: pos_errors.len(),
        });
    }
    let (pos_mean, pos_std) = mean_std(&pos_errors);
    let (ang_mean, ang_std) = mean_std(&ang_errors);
    Ok(RunReport {
        tracking_failed: pos_mean > TRACKING_FAILURE_THRESHOLD,
        pos_errors,
        ang_errors,
        times_ms,
        pos_mean,
        pos_std,
        ang_mean,
        ang_std,
        config: String::new(),
    })
}

/// Scores an estimated trajectory against ground truth, step by step.
pub fn evaluate(estimates: &[Pose6D], ground_truth: &[Pose6D], times_ms: Vec<f64>) -> Result<RunReport> {
    if estimates.len() != ground_truth.len() {
        return Err(Error::LengthMismatch {
            estimate: estimates.len(),
            ground_truth: ground_truth.len(),
        });
    }
    let pos = estimates.iter().zip(ground_truth).map(|(e, g)| positional_error(e, g)).collect();
    let ang = estimates.iter().zip(ground_truth).map(|(e, g)| angular_error(e, g)).collect();
    aggregate(pos, ang, times_ms)
}

impl RunReport {
    pub fn mean_time_ms(&self) -> f64 {
        if self.times_ms.is_empty() {
            return f64::NAN;
        }
        self.times_ms.iter().sum::<f64>() / self.times_ms.len() as f64
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "steps: {}", self.pos_errors.len());
        let _ = writeln!(
            s,
            "position error (cm): {:.2} / {:.2}",
            self.pos_mean * 100.0,
            self.pos_std * 100.0
        );
        let _ = writeln!(s, "angle error (deg): {:.3} / {:.3}", self.ang_mean, self.ang_std);
        if !self.times_ms.is_empty() {
            let _ = writeln!(s, "mean step time (ms): {:.2}", self.mean_time_ms());
        }
        let _ = writeln!(s, "tracking failed: {}", self.tracking_failed);
        s
    }

    /// One row per step (`step,pos_err_m,ang_err_deg,time_ms`), then the
    /// summary as `#` comment lines.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,pos_err_m,ang_err_deg,time_ms")?;
        for (i, (p, a)) in self.pos_errors.iter().zip(&self.ang_errors).enumerate() {
            let t = self.times_ms.get(i).copied().unwrap_or(f64::NAN);
            writeln!(w, "{i},{p:.6},{a:.6},{t:.3}")?;
        }
        for line in self.config.lines().chain(self.summary().lines()) {
            writeln!(w, "# {line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}
