//! Small Gaussian helpers shared by the filter and the simulator.

use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::Pose6D;

/// Lower factor `P` with `P P^T = cov`.
///
/// Uses Cholesky when it succeeds, otherwise the eigen-decomposition with
/// negative eigenvalues clipped to zero (covers singular and zero matrices).
pub fn sqrt_factor(cov: &Matrix6<f64>) -> Matrix6<f64> {
    let sym = 0.5 * (cov + cov.transpose());
    if let Some(ch) = sym.cholesky() {
        return ch.l();
    }
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    eig.eigenvectors * Matrix6::from_diagonal(&roots)
}

pub fn standard_normal6<R: Rng + ?Sized>(rng: &mut R) -> Vector6<f64> {
    Vector6::from_fn(|_, _| rng.sample(StandardNormal))
}

/// Draws from `N(0, P P^T)` given the factor `P`.
pub fn sample_with_factor<R: Rng + ?Sized>(factor: &Matrix6<f64>, rng: &mut R) -> Vector6<f64> {
    factor * standard_normal6(rng)
}

/// Precomputed 6-D Gaussian density `N(x; mean, cov)` with wrapped angle residuals.
#[derive(Debug, Clone)]
pub struct Gaussian6 {
    precision: Matrix6<f64>,
    log_norm: f64,
}

impl Gaussian6 {
    /// `cov` must be symmetric positive definite; callers condition it first.
    pub fn new(cov: &Matrix6<f64>) -> Option<Self> {
        let ch = cov.cholesky()?;
        let log_det = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let precision = ch.inverse();
        let log_norm = -0.5 * (6.0 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Some(Self { precision, log_norm })
    }

    /// Peak value `1 / ((2 pi)^3 sqrt(det cov))`.
    pub fn peak(&self) -> f64 {
        self.log_norm.exp()
    }

    pub fn mahalanobis_sq(&self, x: &Pose6D, mean: &Pose6D) -> f64 {
        let d = x.wrapped_difference(mean);
        (d.transpose() * self.precision * d)[(0, 0)]
    }

    pub fn log_density(&self, x: &Pose6D, mean: &Pose6D) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(x, mean)
    }

    pub fn density(&self, x: &Pose6D, mean: &Pose6D) -> f64 {
        self.log_density(x, mean).exp()
    }
}

/// Population mean and standard deviation (two-pass).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn factor_of_zero_is_zero() {
        assert_eq!(sqrt_factor(&Matrix6::zeros()), Matrix6::zeros());
    }

    #[test]
    fn factor_reproduces_covariance() {
        let mut c = Matrix6::from_element(0.01);
        c.fill_diagonal(0.5);
        let p = sqrt_factor(&c);
        assert_abs_diff_eq!(p * p.transpose(), c, epsilon = 1e-12);
    }

    #[test]
    fn identity_density() {
        let g = Gaussian6::new(&Matrix6::identity()).unwrap();
        let peak = 1.0 / (2.0 * std::f64::consts::PI).powi(3);
        assert_abs_diff_eq!(g.peak(), peak, epsilon = 1e-15);
        let x = Pose6D::from_translation(1.0, 1.0, 0.0);
        assert_abs_diff_eq!(g.density(&x, &Pose6D::identity()), peak * (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[0.0, 2.0]);
        assert_eq!((m, s), (1.0, 1.0));
    }
}
