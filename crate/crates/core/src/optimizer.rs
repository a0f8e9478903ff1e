//! Measurement model optimization.
//!
//! Minimizes `1/2 * sum_k (1 - p(z_k | x, m))^2` over the 6-DoF pose with a
//! damped Gauss-Newton iteration. The Jacobian is taken by forward differences
//! of the residuals, since the distance-field lookup has no usable analytic
//! derivative. `J^T J` at the final pose doubles as the Hessian of a normal
//! approximation to the measurement model.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix6, SymmetricEigen, Vector6};

use crate::distance_field::VoxelDistanceField;
use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose6D, ScanFrame};
use crate::measurement::{point_likelihood, residual, MeasurementModel, ModelParams};

/// Smallest eigenvalue kept when conditioning the Hessian.
pub const EIGEN_FLOOR: f64 = 1e-9;

const MAX_DAMPING_RETRIES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerParams {
    /// Finite-difference step for x, y, z (m).
    pub delta_trans: f64,
    /// Finite-difference step for roll, pitch, yaw (rad).
    pub delta_rot: f64,
    /// Convergence threshold on the mean absolute residual change.
    pub delta_conv: f64,
    pub max_iterations: usize,
    /// Levenberg term added to the diagonal of `J^T J`.
    pub damping: f64,
    /// Voxel size of the scan downsampling filter (m).
    pub voxel_filter_res: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            delta_trans: 0.01,
            delta_rot: 0.005,
            delta_conv: 0.02,
            max_iterations: 30,
            damping: 1e-6,
            voxel_filter_res: 1.0,
        }
    }
}

impl OptimizerParams {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [
            self.delta_trans,
            self.delta_rot,
            self.delta_conv,
            self.damping,
            self.voxel_filter_res,
        ]
        .iter()
        .all(|v| *v > 0.0 && v.is_finite());
        if !all_positive || self.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "optimizer parameters must be positive and max_iterations >= 1".into(),
            ));
        }
        Ok(())
    }

    fn step(&self, j: usize) -> f64 {
        if j < 3 {
            self.delta_trans
        } else {
            self.delta_rot
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub pose_opt: Pose6D,
    /// `J^T J` at `pose_opt`.
    pub hessian: Matrix6<f64>,
    /// `(1/sigma_o^2) H^-1`, conditioned to be SPD. Filled with `sigma_o^2 = 1`
    /// by [`gauss_newton`]; see [`approximate_covariance`] for other scales.
    pub covariance: Matrix6<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_cost: f64,
    pub active_points: usize,
}

impl OptimizationResult {
    pub fn rescaled(mut self, sigma_o_sq: f64) -> Self {
        self.covariance = approximate_covariance(&self, sigma_o_sq);
        self
    }
}

/// Replaces the points of each occupied `res`-sized voxel by their centroid.
pub fn voxel_grid_filter(scan: &ScanFrame, res: f64) -> ScanFrame {
    let mut cells: BTreeMap<(i64, i64, i64), (nalgebra::Vector3<f64>, usize)> = BTreeMap::new();
    for p in scan.points() {
        let key = (
            (p.x / res).floor() as i64,
            (p.y / res).floor() as i64,
            (p.z / res).floor() as i64,
        );
        let e = cells.entry(key).or_insert((nalgebra::Vector3::zeros(), 0));
        e.0 += p.coords;
        e.1 += 1;
    }
    cells
        .into_values()
        .map(|(sum, n)| Point3::from(sum / n as f64))
        .collect()
}

/// Residuals of every scan point and which of them pass the `epsilon` gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub values: Vec<f64>,
    pub active: Vec<bool>,
}

impl Residuals {
    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// Residuals of the active points, in scan order.
    pub fn active_values(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.active_count(),
            self.values
                .iter()
                .zip(&self.active)
                .filter(|(_, a)| **a)
                .map(|(v, _)| *v),
        )
    }

    pub fn cost(&self) -> f64 {
        0.5 * self
            .values
            .iter()
            .zip(&self.active)
            .filter(|(_, a)| **a)
            .map(|(v, _)| v * v)
            .sum::<f64>()
    }
}

/// Everything the residual needs besides the pose.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub scan: &'a ScanFrame,
    pub field: &'a VoxelDistanceField,
    pub params: &'a ModelParams,
    pub model: MeasurementModel,
}

impl Problem<'_> {
    fn residuals_into(&self, pose: &Pose6D, out: &mut Vec<f64>) {
        let rot = pose.rotation();
        let t = pose.translation();
        out.clear();
        out.extend(self.scan.iter().map(|(p, r)| {
            let d = self.field.query(&(rot * p + t));
            residual(point_likelihood(d, r, self.params, self.model))
        }));
    }

    fn residuals(&self, pose: &Pose6D) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.scan.len());
        self.residuals_into(pose, &mut v);
        v
    }

    fn masked_cost(&self, values: &[f64], mask: &[bool]) -> f64 {
        0.5 * values
            .iter()
            .zip(mask)
            .filter(|(_, a)| **a)
            .map(|(v, _)| v * v)
            .sum::<f64>()
    }
}

pub fn residual_vector(
    pose: &Pose6D,
    scan: &ScanFrame,
    field: &VoxelDistanceField,
    mparams: &ModelParams,
    model: MeasurementModel,
) -> Result<Residuals> {
    let problem = Problem {
        scan,
        field,
        params: mparams,
        model,
    };
    gate(problem.residuals(pose), mparams.epsilon)
}

fn gate(values: Vec<f64>, epsilon: f64) -> Result<Residuals> {
    let active: Vec<bool> = values.iter().map(|e| *e <= epsilon).collect();
    if !active.iter().any(|a| *a) {
        return Err(Error::DegenerateScan {
            points: values.len(),
        });
    }
    Ok(Residuals { values, active })
}

fn perturbed(pose: &Pose6D, j: usize, step: f64) -> Pose6D {
    let mut v = pose.to_vector();
    v[j] += step;
    Pose6D::from_vector(&v)
}

/// Forward-difference Jacobian of the active residuals, `K_active x 6`.
pub fn numerical_jacobian(
    pose: &Pose6D,
    scan: &ScanFrame,
    field: &VoxelDistanceField,
    mparams: &ModelParams,
    model: MeasurementModel,
    oparams: &OptimizerParams,
) -> Result<DMatrix<f64>> {
    let problem = Problem {
        scan,
        field,
        params: mparams,
        model,
    };
    let base = gate(problem.residuals(pose), mparams.epsilon)?;
    Ok(jacobian(&problem, pose, &base, oparams))
}

fn jacobian(problem: &Problem<'_>, pose: &Pose6D, base: &Residuals, oparams: &OptimizerParams) -> DMatrix<f64> {
    let rows = base.active_count();
    let mut jac = DMatrix::zeros(rows, 6);
    let mut shifted = Vec::with_capacity(base.values.len());
    for j in 0..6 {
        let step = oparams.step(j);
        problem.residuals_into(&perturbed(pose, j, step), &mut shifted);
        let mut row = 0;
        for (k, active) in base.active.iter().enumerate() {
            if *active {
                jac[(row, j)] = (shifted[k] - base.values[k]) / step;
                row += 1;
            }
        }
    }
    jac
}

fn normal_equations(jac: &DMatrix<f64>, e: &DVector<f64>) -> (Matrix6<f64>, Vector6<f64>) {
    let jtj = jac.tr_mul(jac);
    let jte = jac.tr_mul(e);
    let mut h = Matrix6::zeros();
    h.copy_from(&jtj);
    let h = 0.5 * (h + h.transpose());
    let mut g = Vector6::zeros();
    g.copy_from(&jte);
    (h, g)
}

/// Damped Gauss-Newton from `init`.
pub fn gauss_newton(
    init: &Pose6D,
    scan: &ScanFrame,
    field: &VoxelDistanceField,
    mparams: &ModelParams,
    model: MeasurementModel,
    oparams: &OptimizerParams,
) -> Result<OptimizationResult> {
    if scan.is_empty() {
        return Err(Error::DegenerateScan { points: 0 });
    }
    let problem = Problem {
        scan,
        field,
        params: mparams,
        model,
    };

    let mut pose = *init;
    let mut current = gate(problem.residuals(&pose), mparams.epsilon)?;
    let mut iterations = 0;
    let mut converged = false;
    let mut candidate = Vec::with_capacity(scan.len());

    while iterations < oparams.max_iterations {
        iterations += 1;
        let jac = jacobian(&problem, &pose, &current, oparams);
        let (h, g) = normal_equations(&jac, &current.active_values());
        let cost = current.cost();
        if !cost.is_finite() || !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: iterations,
                detail: format!("cost {cost}, gradient {g:?} at pose {pose}"),
            });
        }

        // Reject steps that raise the cost on the current active set.
        let mut damping = oparams.damping;
        // Escalation must reach the scale of `H` to actually shorten the step.
        let escalation_floor = 1e-3 * h.trace() / 6.0;
        let mut accepted = None;
        for _ in 0..=MAX_DAMPING_RETRIES {
            let damped = h + Matrix6::identity() * damping;
            let Some(step) = damped.cholesky().map(|c| c.solve(&g)) else {
                damping *= 10.0;
                continue;
            };
            let next = Pose6D::from_vector(&(pose.to_vector() - step));
            problem.residuals_into(&next, &mut candidate);
            let next_cost = problem.masked_cost(&candidate, &current.active);
            if next_cost.is_finite() && next_cost <= cost {
                accepted = Some(next);
                break;
            }
            damping = (damping * 10.0).max(escalation_floor);
        }

        let Some(next) = accepted else {
            // No descent direction left: we are at a local minimum.
            converged = true;
            break;
        };

        let change = mean_abs_change(&current, &candidate, mparams.epsilon);
        pose = next;
        current = gate(std::mem::take(&mut candidate), mparams.epsilon)?;
        candidate = Vec::with_capacity(scan.len());
        if change < oparams.delta_conv {
            converged = true;
            break;
        }
    }

    let jac = jacobian(&problem, &pose, &current, oparams);
    let (hessian, _) = normal_equations(&jac, &current.active_values());
    let mut result = OptimizationResult {
        pose_opt: pose,
        hessian,
        covariance: Matrix6::identity(),
        iterations,
        converged,
        final_cost: current.cost(),
        active_points: current.active_count(),
    };
    result.covariance = approximate_covariance(&result, 1.0);
    Ok(result)
}

/// Mean `|e_new - e_old|` over points active at both poses.
fn mean_abs_change(old: &Residuals, new_values: &[f64], epsilon: f64) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((o, a), v) in old.values.iter().zip(&old.active).zip(new_values) {
        if *a && *v <= epsilon {
            sum += (v - o).abs();
            n += 1;
        }
    }
    if n == 0 {
        f64::INFINITY
    } else {
        sum / n as f64
    }
}

/// `(1/sigma_o_sq) * H^-1` after symmetrizing and flooring the eigenvalues of `H`.
pub fn approximate_covariance(result: &OptimizationResult, sigma_o_sq: f64) -> Matrix6<f64> {
    covariance_from_hessian(&result.hessian, sigma_o_sq)
}

pub fn covariance_from_hessian(hessian: &Matrix6<f64>, sigma_o_sq: f64) -> Matrix6<f64> {
    let sym = 0.5 * (hessian + hessian.transpose());
    let eig = SymmetricEigen::new(sym);
    let inv_vals = eig.eigenvalues.map(|l| 1.0 / (sigma_o_sq * l.max(EIGEN_FLOOR)));
    let cov = eig.eigenvectors * Matrix6::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    0.5 * (cov + cov.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn h_result(h: Matrix6<f64>) -> OptimizationResult {
        OptimizationResult {
            pose_opt: Pose6D::identity(),
            hessian: h,
            covariance: Matrix6::identity(),
            iterations: 0,
            converged: true,
            final_cost: 0.0,
            active_points: 1,
        }
    }

    #[test]
    fn covariance_examples() {
        let c = approximate_covariance(&h_result(Matrix6::identity()), 1.0);
        assert_abs_diff_eq!(c, Matrix6::identity(), epsilon = 1e-12);

        let h = Matrix6::from_diagonal(&Vector6::new(4.0, 4.0, 4.0, 100.0, 100.0, 100.0));
        let c = approximate_covariance(&h_result(h), 1.0);
        let expected = Matrix6::from_diagonal(&Vector6::new(0.25, 0.25, 0.25, 0.01, 0.01, 0.01));
        assert_abs_diff_eq!(c, expected, epsilon = 1e-12);

        let c4 = approximate_covariance(&h_result(h), 4.0);
        for i in 0..6 {
            assert_abs_diff_eq!(c4[(i, i)].sqrt(), 0.5 * c[(i, i)].sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_hessian_is_conditioned() {
        let mut h = Matrix6::zeros();
        h[(0, 0)] = 1.0;
        let c = approximate_covariance(&h_result(h), 1.0);
        assert!(c.cholesky().is_some());
        assert_abs_diff_eq!(c[(1, 1)], 1.0 / EIGEN_FLOOR, epsilon = 1.0);
    }

    #[test]
    fn voxel_filter_single_voxel() {
        let pts: Vec<Point3> = (0..8)
            .map(|i| Point3::new(0.1 + 0.1 * (i & 1) as f64, 0.1 + 0.1 * ((i >> 1) & 1) as f64, 0.1 + 0.1 * (i >> 2) as f64))
            .collect();
        let out = voxel_grid_filter(&ScanFrame::from_points(pts), 1.0);
        assert_eq!(out.len(), 1);
        assert_abs_diff_eq!(out.points()[0].coords, nalgebra::Vector3::new(0.15, 0.15, 0.15), epsilon = 1e-12);
        assert_abs_diff_eq!(out.ranges()[0], out.points()[0].coords.norm(), epsilon = 1e-15);
    }

    #[test]
    fn voxel_filter_sparse_grid_unchanged() {
        let pts: Vec<Point3> = (0..5)
            .flat_map(|i| (0..5).map(move |j| Point3::new(i as f64 * 2.0 + 0.5, j as f64 * 2.0 + 0.5, 0.5)))
            .collect();
        assert_eq!(voxel_grid_filter(&ScanFrame::from_points(pts), 1.0).len(), 25);
        assert!(voxel_grid_filter(&ScanFrame::default(), 1.0).is_empty());
    }

    #[test]
    fn voxel_filter_count_matches_hash_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Point3> = (0..10_000)
            .map(|_| Point3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-3.0..3.0)))
            .collect();
        let occupied: HashSet<(i64, i64, i64)> = pts
            .iter()
            .map(|p| (p.x.floor() as i64, p.y.floor() as i64, p.z.floor() as i64))
            .collect();
        assert_eq!(voxel_grid_filter(&ScanFrame::from_points(pts), 1.0).len(), occupied.len());
    }

    fn plane_field() -> VoxelDistanceField {
        let map: Vec<Point3> = (0..30)
            .flat_map(|i| (0..30).map(move |j| Point3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0)))
            .collect();
        VoxelDistanceField::build(&map, 0.2, 3.0).unwrap()
    }

    #[test]
    fn all_gated_is_degenerate() {
        let f = plane_field();
        // Far above the plane with a long range: residual 1 - 0.5 exp(-lambda r) > 0.5.
        let scan = ScanFrame::from_points(vec![Point3::new(0.0, 0.0, 100.0)]);
        let err = residual_vector(&Pose6D::identity(), &scan, &f, &ModelParams::default(), MeasurementModel::ClassConditional);
        assert!(matches!(err, Err(Error::DegenerateScan { points: 1 })));
    }

    #[test]
    fn max_range_point_gate() {
        let f = plane_field();
        let p = ModelParams::default();
        // Outside the field the known term vanishes: e = 1 - 0.5 exp(-lambda r).
        let scan = ScanFrame::from_points(vec![Point3::new(1.0, 1.0, 0.0), Point3::new(0.0, 0.0, 119.0)]);
        let r = residual_vector(&Pose6D::identity(), &scan, &f, &p, MeasurementModel::ClassConditional).unwrap();
        let expected = 1.0 - 0.5 * (-0.001f64 * 119.0).exp();
        assert_abs_diff_eq!(r.values[1], expected, epsilon = 1e-12);
        assert_eq!(r.active, vec![true, false]);
    }

    #[test]
    fn flat_field_gives_zero_jacobian() {
        // Single far-away map point: inside a big region the field is far beyond the
        // Gaussian support, so the known term is exactly flat at zero.
        let f = VoxelDistanceField::build(&[Point3::origin()], 0.5, 60.0).unwrap();
        let scan = ScanFrame::from_points(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)]);
        let pose = Pose6D::from_translation(40.0, 0.0, 0.0);
        // The known term vanishes here, so every residual sits above 0.5; open the gate.
        let mp = ModelParams { epsilon: 1.0, ..Default::default() };
        let j = numerical_jacobian(&pose, &scan, &f, &mp, MeasurementModel::ClassConditional, &OptimizerParams::default()).unwrap();
        assert_eq!(j.nrows(), 2);
        assert!(j.amax() < 1e-9);
    }

    #[test]
    fn jacobian_sign_and_central_difference() {
        let f = VoxelDistanceField::build(&[Point3::origin()], 0.1, 3.0).unwrap();
        let scan = ScanFrame::from_points(vec![Point3::new(1.0, 0.0, 0.0)]);
        let mp = ModelParams::default();
        let op = OptimizerParams::default();
        let pose = Pose6D::identity();
        let j = numerical_jacobian(&pose, &scan, &f, &mp, MeasurementModel::ClassConditional, &op).unwrap();
        assert!(j[(0, 0)] > 0.0, "moving away raises the residual");

        let e = |x: f64| {
            let p = Pose6D::from_translation(x, 0.0, 0.0);
            residual_vector(&p, &scan, &f, &mp, MeasurementModel::ClassConditional).unwrap().values[0]
        };
        let h = op.delta_trans / 10.0;
        let central = (e(h) - e(-h)) / (2.0 * h);
        assert!((j[(0, 0)] - central).abs() / central.abs() < 0.05);
    }

    #[test]
    fn jacobian_step_sweep_stable() {
        let map: Vec<Point3> = (0..20)
            .flat_map(|i| (0..20).map(move |j| Point3::new(i as f64 * 0.2, j as f64 * 0.2, 0.0)))
            .collect();
        let f = VoxelDistanceField::build(&map, 0.1, 2.0).unwrap();
        let scan = ScanFrame::from_points(vec![Point3::new(0.5, 0.3, -0.6), Point3::new(-0.4, 0.2, -0.7)]);
        let mp = ModelParams::default();
        let pose = Pose6D::new(2.0, 2.0, 1.0, 0.0, 0.0, 0.2);
        let op = OptimizerParams::default();
        let op2 = OptimizerParams {
            delta_trans: 2.0 * op.delta_trans,
            delta_rot: 2.0 * op.delta_rot,
            ..op
        };
        let j1 = numerical_jacobian(&pose, &scan, &f, &mp, MeasurementModel::ClassConditional, &op).unwrap();
        let j2 = numerical_jacobian(&pose, &scan, &f, &mp, MeasurementModel::ClassConditional, &op2).unwrap();
        // z is the well-conditioned direction above a plane.
        for r in 0..2 {
            assert!((j1[(r, 2)] - j2[(r, 2)]).abs() <= 0.1 * j1[(r, 2)].abs());
        }
    }

    #[test]
    fn empty_scan_rejected() {
        let f = plane_field();
        let r = gauss_newton(&Pose6D::identity(), &ScanFrame::default(), &f, &ModelParams::default(), MeasurementModel::ClassConditional, &OptimizerParams::default());
        assert!(matches!(r, Err(Error::DegenerateScan { points: 0 })));
    }
}
