//! Pose and point primitives.
//!
//! Poses are stored as a position plus ZYX Euler angles, with the rotation
//! applied as `R_z(yaw) * R_y(pitch) * R_x(roll)`. Pose "addition" and
//! "difference" are component-wise on the 6-vector, with the angle components
//! wrapped into `(-pi, pi]`. Group composition is only provided for frame
//! changes (`compose`, `inverse`). No special handling exists for gimbal lock
//! at `pitch = +-pi/2`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Vector3, Vector6};

pub type Point3 = nalgebra::Point3<f64>;

const TWO_PI: f64 = 2.0 * PI;

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % TWO_PI;
    if a <= -PI {
        a += TWO_PI;
    } else if a > PI {
        a -= TWO_PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose6D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Pose6D {
    /// Builds a pose, wrapping the angles.
    pub fn new(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z,
            roll: normalize_angle(roll),
            pitch: normalize_angle(pitch),
            yaw: normalize_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(x, y, z, 0.0, 0.0, 0.0)
    }

    /// Builds a pose from `[x, y, z, roll, pitch, yaw]`.
    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.x, self.y, self.z, self.roll, self.pitch, self.yaw)
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn position(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }

    /// Rotation matrix `R_z(yaw) * R_y(pitch) * R_x(roll)`.
    pub fn rotation(&self) -> Matrix3<f64> {
        let (sr, cr) = self.roll.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let (sy, cy) = self.yaw.sin_cos();
        Matrix3::new(
            cy * cp,
            cy * sp * sr - sy * cr,
            cy * sp * cr + sy * sr,
            sy * cp,
            sy * sp * sr + cy * cr,
            sy * sp * cr - cy * sr,
            -sp,
            cp * sr,
            cp * cr,
        )
    }

    /// Recovers a pose from a rotation matrix and translation.
    pub fn from_rotation_translation(r: &Matrix3<f64>, t: &Vector3<f64>) -> Self {
        let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        Self::new(t.x, t.y, t.z, roll, pitch, yaw)
    }

    /// Maps a point from this pose's local frame into the parent frame.
    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation() * p + self.translation()
    }

    /// Inverse rigid transform: `transform_point(inverse(p), transform_point(p, q)) == q`.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation().transpose();
        let t = -(rt * self.translation());
        Self::from_rotation_translation(&rt, &t)
    }

    /// Rigid-body composition `self * other`.
    pub fn compose(&self, other: &Pose6D) -> Self {
        let r = self.rotation();
        let rot = r * other.rotation();
        let t = r * other.translation() + self.translation();
        Self::from_rotation_translation(&rot, &t)
    }

    /// Component-wise difference `self - other`, angles wrapped.
    pub fn delta(&self, other: &Pose6D) -> Self {
        pose_delta(self, other)
    }

    /// Component-wise sum, angles wrapped.
    pub fn add(&self, d: &Pose6D) -> Self {
        pose_add(self, d)
    }

    /// Returns the 6-vector difference with wrapped angle components.
    pub fn wrapped_difference(&self, other: &Pose6D) -> Vector6<f64> {
        pose_delta(self, other).to_vector()
    }
}

impl fmt::Display for Pose6D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({:.4}, {:.4}, {:.4} | {:.4}, {:.4}, {:.4})",
            self.x, self.y, self.z, self.roll, self.pitch, self.yaw
        )
    }
}

pub fn transform_point(pose: &Pose6D, p: &Point3) -> Point3 {
    pose.transform_point(p)
}

pub fn pose_delta(a: &Pose6D, b: &Pose6D) -> Pose6D {
    Pose6D::new(
        a.x - b.x,
        a.y - b.y,
        a.z - b.z,
        a.roll - b.roll,
        a.pitch - b.pitch,
        a.yaw - b.yaw,
    )
}

pub fn pose_add(a: &Pose6D, d: &Pose6D) -> Pose6D {
    Pose6D::new(
        a.x + d.x,
        a.y + d.y,
        a.z + d.z,
        a.roll + d.roll,
        a.pitch + d.pitch,
        a.yaw + d.yaw,
    )
}

/// One LiDAR sweep in the sensor frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScanFrame {
    points: Vec<Point3>,
    ranges: Vec<f64>,
}

impl ScanFrame {
    pub fn from_points(points: Vec<Point3>) -> Self {
        let ranges = points.iter().map(|p| p.coords.norm()).collect();
        Self { points, ranges }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point3, f64)> {
        self.points.iter().zip(self.ranges.iter().copied())
    }
}

impl FromIterator<Point3> for ScanFrame {
    fn from_iter<I: IntoIterator<Item = Point3>>(iter: I) -> Self {
        Self::from_points(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn rx(a: f64) -> Matrix3<f64> {
        Matrix3::new(1.0, 0.0, 0.0, 0.0, a.cos(), -a.sin(), 0.0, a.sin(), a.cos())
    }
    fn ry(a: f64) -> Matrix3<f64> {
        Matrix3::new(a.cos(), 0.0, a.sin(), 0.0, 1.0, 0.0, -a.sin(), 0.0, a.cos())
    }
    fn rz(a: f64) -> Matrix3<f64> {
        Matrix3::new(a.cos(), -a.sin(), 0.0, a.sin(), a.cos(), 0.0, 0.0, 0.0, 1.0)
    }

    fn wrap_oracle(t: f64) -> f64 {
        t.sin().atan2(t.cos())
    }

    #[test]
    fn identity_transform() {
        let p = transform_point(&Pose6D::identity(), &Point3::new(1.0, 2.0, 3.0));
        assert_eq!(p, Point3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn yaw_quarter_turn() {
        let pose = Pose6D::new(0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2);
        let p = transform_point(&pose, &Point3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn general_transform_matches_matrix_product() {
        let pose = Pose6D::new(1.0, 0.0, 0.0, 0.3, -0.2, 1.1);
        let q = Vector3::new(0.5, -0.4, 0.2);
        let expected = rz(1.1) * ry(-0.2) * rx(0.3) * q + Vector3::new(1.0, 0.0, 0.0);
        let got = transform_point(&pose, &Point3::from(q));
        assert_abs_diff_eq!(got.coords, expected, epsilon = 1e-12);
    }

    #[test]
    fn delta_wraps() {
        let a = Pose6D::new(0.0, 0.0, 0.0, 0.0, 0.0, 3.0);
        let b = Pose6D::new(0.0, 0.0, 0.0, 0.0, 0.0, -3.0);
        assert_eq!(pose_delta(&a, &a), Pose6D::identity());
        let d = pose_delta(&a, &b);
        assert_abs_diff_eq!(d.yaw, wrap_oracle(6.0), epsilon = 1e-12);
        assert_abs_diff_eq!(d.yaw, -0.2832, epsilon = 1e-4);

        let t = pose_delta(&Pose6D::from_translation(1.0, 0.0, 0.0), &Pose6D::identity());
        assert_eq!(t, Pose6D::from_translation(1.0, 0.0, 0.0));
    }

    #[test]
    fn add_wraps() {
        let a = Pose6D::new(1.0, 2.0, 3.0, 0.1, 0.2, 3.0);
        assert_eq!(pose_add(&a, &Pose6D::identity()), a);
        let s = pose_add(&a, &Pose6D::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.5));
        assert_abs_diff_eq!(s.yaw, wrap_oracle(3.5), epsilon = 1e-12);
        assert_abs_diff_eq!(s.yaw, -2.7832, epsilon = 1e-4);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_angle(0.0), 0.0);
        assert_abs_diff_eq!(normalize_angle(TWO_PI), 0.0, epsilon = 1e-15);
        let mut oracle = 7.0;
        while oracle > PI {
            oracle -= TWO_PI;
        }
        assert_abs_diff_eq!(normalize_angle(7.0), oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(normalize_angle(7.0), 0.71681, epsilon = 1e-5);
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = Pose6D::new(1.0, -2.0, 0.5, 0.3, -0.4, 2.9);
        let id = p.compose(&p.inverse());
        for v in id.to_vector().iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-9);
        }
    }

    fn pose_strategy() -> impl Strategy<Value = Pose6D> {
        (
            -50.0..50.0f64,
            -50.0..50.0f64,
            -5.0..5.0f64,
            -PI..PI,
            -1.0..1.0f64,
            -PI..PI,
        )
            .prop_map(|(x, y, z, r, p, w)| Pose6D::new(x, y, z, r, p, w))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn transform_round_trip(pose in pose_strategy(), q in (-20.0..20.0f64, -20.0..20.0f64, -20.0..20.0f64)) {
            let q = Point3::new(q.0, q.1, q.2);
            let back = pose.inverse().transform_point(&pose.transform_point(&q));
            prop_assert!((back - q).norm() < 1e-9);
        }

        #[test]
        fn add_delta_inverse(a in pose_strategy(), b in pose_strategy()) {
            let r = pose_add(&a, &pose_delta(&b, &a));
            let d = pose_delta(&r, &b).to_vector();
            prop_assert!(d.amax() < 1e-9);
        }

        #[test]
        fn normalize_idempotent(t in -1e3..1e3f64) {
            let a = normalize_angle(t);
            prop_assert!(a > -PI && a <= PI);
            prop_assert_eq!(normalize_angle(a), a);
            prop_assert!((a.sin() - t.sin()).abs() < 1e-9 && (a.cos() - t.cos()).abs() < 1e-9);
        }
    }
}
