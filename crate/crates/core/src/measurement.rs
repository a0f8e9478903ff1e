//! Per-point measurement likelihoods.
//!
//! Every density is divided by its peak value so that per-point likelihoods
//! lie in `[0, 1]` and residuals `1 - p` are well defined. The class-conditional
//! model mixes a Gaussian over the nearest-obstacle distance (the point hits a
//! mapped obstacle) with an exponential over the measured range (the point hits
//! something absent from the map).

use crate::distance_field::VoxelDistanceField;
use crate::error::{Error, Result};
use crate::geometry::{Pose6D, ScanFrame};

/// Per-point likelihoods below this are clamped before taking the log.
pub const LIKELIHOOD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeasurementModel {
    #[default]
    ClassConditional,
    LikelihoodField,
}

impl std::str::FromStr for MeasurementModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class_conditional" | "cc" => Ok(Self::ClassConditional),
            "lfm" | "likelihood_field" => Ok(Self::LikelihoodField),
            other => Err(Error::InvalidParameter(format!("unknown measurement model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Variance of the known-class Gaussian, m^2.
    pub sigma_sq: f64,
    /// Rate of the unknown-class exponential, 1/m.
    pub lambda: f64,
    pub r_max: f64,
    pub z_hit: f64,
    pub z_rand: f64,
    pub z_max: f64,
    pub prior_known: f64,
    /// Residuals above this are excluded from optimization.
    pub epsilon: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            sigma_sq: 0.4,
            lambda: 0.001,
            r_max: 120.0,
            z_hit: 0.9,
            z_rand: 0.05,
            z_max: 0.05,
            prior_known: 0.5,
            epsilon: 0.5,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.sigma_sq > 0.0) {
            return bad("sigma_sq must be > 0");
        }
        if !(self.lambda > 0.0) {
            return bad("lambda must be > 0");
        }
        if !(self.r_max > 0.0) {
            return bad("r_max must be > 0");
        }
        if !(self.z_hit >= 0.0 && self.z_rand >= 0.0 && self.z_max > 0.0) {
            return bad("LFM weights must be nonnegative and z_max > 0");
        }
        if self.z_hit + self.z_rand > 1.0 + 1e-12 {
            return bad("z_hit + z_rand must be <= 1");
        }
        if !(0.0..=1.0).contains(&self.prior_known) {
            return bad("prior_known must lie in [0, 1]");
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad("epsilon must lie in (0, 1]");
        }
        Ok(())
    }

    /// Floor of the LFM mixture, `z_rand / z_max`.
    ///
    /// With `z_rand == z_max` this is 1 and the LFM becomes flat.
    pub fn lfm_floor(&self) -> f64 {
        self.z_rand / self.z_max
    }
}

pub fn likelihood_known(d: f64, params: &ModelParams) -> f64 {
    (-d * d / (2.0 * params.sigma_sq)).exp()
}

/// Max-normalized exponential over the range; ranges beyond `r_max` are clamped.
pub fn likelihood_unknown(r: f64, params: &ModelParams) -> f64 {
    let r = r.clamp(0.0, params.r_max);
    (-params.lambda * r).exp()
}

pub fn class_conditional_likelihood(d: f64, r: f64, params: &ModelParams) -> f64 {
    params.prior_known * likelihood_known(d, params)
        + (1.0 - params.prior_known) * likelihood_unknown(r, params)
}

pub fn lfm_likelihood(d: f64, params: &ModelParams) -> f64 {
    (params.z_hit * likelihood_known(d, params) + params.lfm_floor()).min(1.0)
}

pub fn residual(p_z: f64) -> f64 {
    1.0 - p_z
}

/// Likelihood of one point given its nearest-obstacle distance and range.
#[inline]
pub fn point_likelihood(d: f64, r: f64, params: &ModelParams, model: MeasurementModel) -> f64 {
    match model {
        MeasurementModel::ClassConditional => class_conditional_likelihood(d, r, params),
        MeasurementModel::LikelihoodField => lfm_likelihood(d, params),
    }
}

/// Sum of per-point log-likelihoods of `scan` placed at `pose`.
pub fn scan_log_likelihood(
    pose: &Pose6D,
    scan: &ScanFrame,
    field: &VoxelDistanceField,
    params: &ModelParams,
    model: MeasurementModel,
) -> f64 {
    let rot = pose.rotation();
    let t = pose.translation();
    scan.iter()
        .map(|(p, r)| {
            let d = field.query(&(rot * p + t));
            point_likelihood(d, r, params, model).max(LIKELIHOOD_FLOOR).ln()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn known_examples() {
        let p = ModelParams::default();
        assert_eq!(likelihood_known(0.0, &p), 1.0);
        let q = ModelParams { sigma_sq: 2.0, ..p };
        assert_abs_diff_eq!(likelihood_known(2f64.sqrt(), &q), (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(likelihood_known(1.0, &p), 0.28650, epsilon = 1e-5);
    }

    #[test]
    fn unknown_examples() {
        let p = ModelParams::default();
        assert_eq!(likelihood_unknown(0.0, &p), 1.0);
        assert_abs_diff_eq!(likelihood_unknown(120.0, &p), 0.88692, epsilon = 1e-5);
        let near = ModelParams {
            lambda: 0.01,
            r_max: 30.0,
            ..p
        };
        assert_abs_diff_eq!(likelihood_unknown(30.0, &near), 0.74082, epsilon = 1e-5);
        assert_eq!(likelihood_unknown(500.0, &p), likelihood_unknown(120.0, &p));
    }

    #[test]
    fn class_conditional_examples() {
        let p = ModelParams::default();
        assert_eq!(class_conditional_likelihood(0.0, 0.0, &p), 1.0);
        assert_abs_diff_eq!(class_conditional_likelihood(1e6, 0.0, &p), 0.5, epsilon = 1e-15);
        let v = class_conditional_likelihood(1.0, 60.0, &p);
        let oracle = 0.5 * (-1.0f64 / 0.8).exp() + 0.5 * (-0.06f64).exp();
        assert_abs_diff_eq!(v, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.61413, epsilon = 1e-5);
        assert_abs_diff_eq!(residual(v), 0.38587, epsilon = 1e-5);
    }

    #[test]
    fn lfm_examples() {
        let p = ModelParams::default();
        assert_eq!(lfm_likelihood(0.0, &p), 1.0);
        assert_eq!(lfm_likelihood(1e6, &p), 1.0);
        let q = ModelParams { z_max: 120.0, ..p };
        assert_abs_diff_eq!(lfm_likelihood(1e6, &q), 0.05 / 120.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lfm_likelihood(1e6, &q), 0.000417, epsilon = 1e-6);
    }

    #[test]
    fn residual_examples() {
        assert_eq!(residual(1.0), 0.0);
        assert_eq!(residual(0.0), 1.0);
    }

    #[test]
    fn default_params_valid() {
        ModelParams::default().validate().unwrap();
        assert!(ModelParams { epsilon: 0.0, ..Default::default() }.validate().is_err());
        assert!(ModelParams { z_hit: 0.99, ..Default::default() }.validate().is_err());
    }

    fn field() -> VoxelDistanceField {
        let map: Vec<Point3> = (0..40)
            .flat_map(|i| (0..40).map(move |j| Point3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0)))
            .collect();
        VoxelDistanceField::build(&map, 0.1, 2.0).unwrap()
    }

    #[test]
    fn scan_log_likelihood_examples() {
        let f = field();
        let p = ModelParams::default();
        let cc = MeasurementModel::ClassConditional;

        // A point coincident with the sensor origin sitting on a map point.
        let origin_scan = ScanFrame::from_points(vec![Point3::origin()]);
        let at_map_point = Pose6D::from_translation(1.0, 1.0, 0.0);
        let d = f.query(&Point3::new(1.0, 1.0, 0.0));
        let expected = class_conditional_likelihood(d, 0.0, &p).ln();
        assert_abs_diff_eq!(scan_log_likelihood(&at_map_point, &origin_scan, &f, &p, cc), expected, epsilon = 1e-12);
        assert!(expected > -0.01);

        let one = ScanFrame::from_points(vec![Point3::new(0.3, 0.2, 0.4)]);
        let two = ScanFrame::from_points(vec![Point3::new(0.3, 0.2, 0.4); 2]);
        let pose = Pose6D::new(1.0, 1.5, 0.1, 0.05, -0.02, 0.3);
        let l1 = scan_log_likelihood(&pose, &one, &f, &p, cc);
        let l2 = scan_log_likelihood(&pose, &two, &f, &p, cc);
        assert_eq!(l2, 2.0 * l1);
    }

    #[test]
    fn scan_log_likelihood_matches_naive_loop() {
        let f = field();
        let p = ModelParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let pts: Vec<Point3> = (0..50)
            .map(|_| Point3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)))
            .collect();
        let scan = ScanFrame::from_points(pts.clone());
        let pose = Pose6D::new(2.0, 2.0, 0.5, 0.1, 0.05, -0.7);
        for model in [MeasurementModel::ClassConditional, MeasurementModel::LikelihoodField] {
            let mut naive = 0.0;
            for q in &pts {
                let world = pose.transform_point(q);
                let d = f.query(&world);
                let r = q.coords.norm();
                let l = match model {
                    MeasurementModel::ClassConditional => {
                        0.5 * (-d * d / 0.8).exp() + 0.5 * (-0.001 * r).exp()
                    }
                    MeasurementModel::LikelihoodField => (0.9 * (-d * d / 0.8).exp() + 1.0).min(1.0),
                };
                naive += l.max(1e-12).ln();
            }
            let got = scan_log_likelihood(&pose, &scan, &f, &p, model);
            assert_abs_diff_eq!(got, naive, epsilon = 1e-9);

            let mut shuffled = pts.clone();
            shuffled.reverse();
            shuffled.swap(3, 17);
            let perm = scan_log_likelihood(&pose, &ScanFrame::from_points(shuffled), &f, &p, model);
            assert_abs_diff_eq!(perm, got, epsilon = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn likelihoods_bounded_and_monotone(d in 0.0..50.0f64, dd in 1e-3..5.0f64, r in 0.0..120.0f64, dr in 1e-2..50.0f64) {
            let p = ModelParams::default();
            let k = likelihood_known(d, &p);
            prop_assert!((0.0..=1.0).contains(&k));
            let k2 = likelihood_known(d + dd, &p);
            prop_assert!(k2 < k || k == 0.0);
            let u = likelihood_unknown(r, &p);
            prop_assert!((0.0..=1.0).contains(&u));
            if r + dr <= p.r_max {
                prop_assert!(likelihood_unknown(r + dr, &p) < u);
            }
            let c = class_conditional_likelihood(d, r, &p);
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!(c >= 0.5 * u);
            prop_assert!((0.0..=1.0).contains(&residual(c)));
            prop_assert!((0.0..=1.0).contains(&lfm_likelihood(d, &p)));
        }
    }
}
