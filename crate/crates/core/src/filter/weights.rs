//! Weight normalization, effective sample size, pose averaging and resampling.

use rand::Rng;

use super::{Origin, Particle};
use crate::geometry::Pose6D;

/// Divides every weight by the total. Returns `false` (and resets to uniform)
/// when the total is zero or not finite.
pub fn normalize_weights(particles: &mut [Particle]) -> bool {
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    if !(total > 0.0 && total.is_finite()) {
        let uniform = 1.0 / particles.len() as f64;
        for p in particles.iter_mut() {
            p.weight = uniform;
        }
        return false;
    }
    for p in particles.iter_mut() {
        p.weight /= total;
    }
    true
}

/// Sets normalized weights from log-weights, shifting by the maximum first.
///
/// Equivalent to exponentiating and calling [`normalize_weights`], without
/// underflow when every log-weight is very negative.
pub fn normalize_log_weights(particles: &mut [Particle], log_weights: &[f64]) -> bool {
    debug_assert_eq!(particles.len(), log_weights.len());
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        for p in particles.iter_mut() {
            p.weight = 0.0;
        }
        return normalize_weights(particles);
    }
    for (p, lw) in particles.iter_mut().zip(log_weights) {
        p.weight = (lw - max).exp();
    }
    normalize_weights(particles)
}

/// `1 / sum(w^2)` over normalized weights.
pub fn effective_sample_size(particles: &[Particle]) -> f64 {
    let sq: f64 = particles.iter().map(|p| p.weight * p.weight).sum();
    1.0 / sq
}

/// Weighted mean pose: arithmetic for the position, circular for each angle.
pub fn estimate_pose(particles: &[Particle]) -> Pose6D {
    let mut pos = [0.0f64; 3];
    let mut sin = [0.0f64; 3];
    let mut cos = [0.0f64; 3];
    let mut total = 0.0;
    for p in particles {
        let w = p.weight;
        total += w;
        pos[0] += w * p.pose.x;
        pos[1] += w * p.pose.y;
        pos[2] += w * p.pose.z;
        for (k, a) in [p.pose.roll, p.pose.pitch, p.pose.yaw].into_iter().enumerate() {
            sin[k] += w * a.sin();
            cos[k] += w * a.cos();
        }
    }
    let angle = |k: usize| sin[k].atan2(cos[k]);
    Pose6D::new(
        pos[0] / total,
        pos[1] / total,
        pos[2] / total,
        angle(0),
        angle(1),
        angle(2),
    )
}

/// Systematic (low-variance) resampling of `count` particles.
///
/// Source particle `i` is copied either `floor(count * w_i)` or
/// `ceil(count * w_i)` times. Output weights are uniform and every particle is
/// relabelled as predictive.
pub fn resample<R: Rng + ?Sized>(particles: &[Particle], count: usize, rng: &mut R) -> Vec<Particle> {
    let offset: f64 = rng.random();
    resample_with_offset(particles, count, offset)
}

/// [`resample`] with an explicit start offset in `[0, 1)`.
pub fn resample_with_offset(particles: &[Particle], count: usize, offset: f64) -> Vec<Particle> {
    let mut out = Vec::with_capacity(count);
    if particles.is_empty() || count == 0 {
        return out;
    }
    let uniform = 1.0 / count as f64;
    let mut cumulative = particles[0].weight;
    let mut i = 0;
    for m in 0..count {
        let u = (offset + m as f64) / count as f64;
        while u >= cumulative && i + 1 < particles.len() {
            i += 1;
            cumulative += particles[i].weight;
        }
        out.push(Particle {
            pose: particles[i].pose,
            weight: uniform,
            origin: Origin::Predictive,
        });
    }
    out
}

/// How many output copies each source particle received.
pub fn copy_counts(particles: &[Particle], count: usize, offset: f64) -> Vec<usize> {
    let mut counts = vec![0usize; particles.len()];
    let mut cumulative = particles[0].weight;
    let mut i = 0;
    for m in 0..count {
        let u = (offset + m as f64) / count as f64;
        while u >= cumulative && i + 1 < particles.len() {
            i += 1;
            cumulative += particles[i].weight;
        }
        counts[i] += 1;
    }
    counts
}
