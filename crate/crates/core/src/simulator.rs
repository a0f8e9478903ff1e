//! Synthetic worlds, ground-truth trajectories, scans and odometry.
//!
//! Worlds are built from planar rectangles sampled uniformly at a given areal
//! density. Mapped structure goes into `map_points`; clutter objects that the
//! localizer must treat as unknown go into `unknown_points`.
//!
//! Scans use point-sampling visibility: each return picks a random world point
//! within `max_range` of the sensor, with no occlusion test.
//!
//! Draw order for a full run with one generator: world, then one scan per
//! trajectory step in order, then the odometry noise.

use std::str::FromStr;

use nalgebra::{Matrix6, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, pose_add, pose_delta, Point3, Pose6D, ScanFrame};
use crate::stats::{sample_with_factor, sqrt_factor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Room,
    Corridor,
    UrbanBlock,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "room" => Ok(Preset::Room),
            "corridor" => Ok(Preset::Corridor),
            "urban_block" | "urban" => Ok(Preset::UrbanBlock),
            other => Err(Error::InvalidParameter(format!("unknown world preset '{other}'"))),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Room => "room",
            Preset::Corridor => "corridor",
            Preset::UrbanBlock => "urban_block",
        })
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - 1e-9 && p[i] <= self.max[i] + 1e-9)
    }

    pub fn size(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn surface_area(&self) -> f64 {
        let s = self.size();
        2.0 * (s.x * s.y + s.y * s.z + s.x * s.z)
    }
}

/// Planar rectangle `corner + u * a + v * b`, `u, v` in `[0, 1]`.
#[derive(Debug, Clone, Copy)]
struct Rect {
    corner: Point3,
    a: Vector3<f64>,
    b: Vector3<f64>,
}

impl Rect {
    fn area(&self) -> f64 {
        self.a.cross(&self.b).norm()
    }

    fn sample<R: Rng + ?Sized>(&self, density: f64, rng: &mut R, out: &mut Vec<Point3>) {
        let n = ((self.area() * density).round() as usize).max(1);
        for _ in 0..n {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            out.push(self.corner + self.a * u + self.b * v);
        }
    }
}

fn box_faces(b: &Aabb) -> [Rect; 6] {
    let s = b.size();
    let (ex, ey, ez) = (Vector3::x() * s.x, Vector3::y() * s.y, Vector3::z() * s.z);
    let lo = b.min;
    [
        Rect { corner: lo, a: ex, b: ey },
        Rect { corner: lo + ez, a: ex, b: ey },
        Rect { corner: lo, a: ex, b: ez },
        Rect { corner: lo + ey, a: ex, b: ez },
        Rect { corner: lo, a: ey, b: ez },
        Rect { corner: lo + ex, a: ey, b: ez },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    pub preset: Preset,
    pub map_points: Vec<Point3>,
    pub unknown_points: Vec<Point3>,
    pub bounds: Aabb,
    /// Total sampled area of the mapped structure, m^2.
    pub map_area: f64,
    /// Mapped solid boxes other than the enclosing shell.
    pub structures: Vec<Aabb>,
    /// Unmapped clutter objects.
    pub clutter: Vec<Aabb>,
    /// Nominal sensor path for this preset.
    pub default_waypoints: Vec<Pose6D>,
}

struct WorldBuilder<'a, R: Rng> {
    rng: &'a mut R,
    density: f64,
    map: Vec<Point3>,
    unknown: Vec<Point3>,
    area: f64,
    structures: Vec<Aabb>,
    clutter: Vec<Aabb>,
}

impl<'a, R: Rng> WorldBuilder<'a, R> {
    fn rect(&mut self, r: Rect) {
        self.area += r.area();
        r.sample(self.density, self.rng, &mut self.map);
    }

    fn solid(&mut self, b: Aabb) {
        for f in box_faces(&b) {
            self.rect(f);
        }
        self.structures.push(b);
    }

    fn clutter_box(&mut self, b: Aabb) {
        for f in box_faces(&b) {
            f.sample(self.density, self.rng, &mut self.unknown);
        }
        self.clutter.push(b);
    }

    fn clutter_sphere(&mut self, center: Point3, radius: f64) {
        let n = ((4.0 * std::f64::consts::PI * radius * radius * self.density).round() as usize).max(1);
        for _ in 0..n {
            let v = Vector3::new(
                self.rng.sample::<f64, _>(StandardNormal),
                self.rng.sample::<f64, _>(StandardNormal),
                self.rng.sample::<f64, _>(StandardNormal),
            );
            let v = if v.norm() > 0.0 { v.normalize() } else { Vector3::z() };
            self.unknown.push(center + v * radius);
        }
        let r = Vector3::repeat(radius);
        self.clutter.push(Aabb::new(center - r, center + r));
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }
}

/// Builds a deterministic world from `seed`.
///
/// Every rectangle receives at least one point, so tiny densities degrade to
/// one point per surface rather than an empty map.
pub fn generate_world(seed: u64, preset: Preset, density: f64) -> Result<WorldModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_world_with(&mut rng, preset, density)
}

pub fn generate_world_with<R: Rng>(rng: &mut R, preset: Preset, density: f64) -> Result<WorldModel> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::InvalidParameter(format!("density must be > 0, got {density}")));
    }
    let mut b = WorldBuilder {
        rng,
        density,
        map: Vec::new(),
        unknown: Vec::new(),
        area: 0.0,
        structures: Vec::new(),
        clutter: Vec::new(),
    };
    let (bounds, waypoints) = match preset {
        Preset::Room => build_room(&mut b),
        Preset::Corridor => build_corridor(&mut b),
        Preset::UrbanBlock => build_urban(&mut b),
    };
    Ok(WorldModel {
        preset,
        map_points: b.map,
        unknown_points: b.unknown,
        bounds,
        map_area: b.area,
        structures: b.structures,
        clutter: b.clutter,
        default_waypoints: waypoints,
    })
}

fn shell<R: Rng>(b: &mut WorldBuilder<'_, R>, size: Vector3<f64>, ceiling: bool) {
    let lo = Point3::origin();
    let (ex, ey, ez) = (Vector3::x() * size.x, Vector3::y() * size.y, Vector3::z() * size.z);
    b.rect(Rect { corner: lo, a: ex, b: ey });
    if ceiling {
        b.rect(Rect { corner: lo + ez, a: ex, b: ey });
    }
    b.rect(Rect { corner: lo, a: ex, b: ez });
    b.rect(Rect { corner: lo + ey, a: ex, b: ez });
    b.rect(Rect { corner: lo, a: ey, b: ez });
    b.rect(Rect { corner: lo + ex, a: ey, b: ez });
}

fn build_room<R: Rng>(b: &mut WorldBuilder<'_, R>) -> (Aabb, Vec<Pose6D>) {
    let size = Vector3::new(10.0, 10.0, 3.0);
    shell(b, size, true);
    // Furniture along the walls.
    let furniture = [
        (0.3, 1.0, 1.2, 2.5, 0.8),
        (7.5, 0.3, 2.0, 0.6, 1.8),
        (8.8, 6.0, 0.9, 2.2, 1.0),
        (2.0, 8.9, 3.0, 0.8, 2.2),
    ];
    for (x, y, dx, dy, h) in furniture {
        let jx = b.range(-0.2, 0.2);
        let jy = b.range(-0.2, 0.2);
        let lo = Point3::new((x + jx).clamp(0.05, 9.0), (y + jy).clamp(0.05, 9.0), 0.0);
        let hi = Point3::new((lo.x + dx).min(9.95), (lo.y + dy).min(9.95), h);
        b.solid(Aabb::new(lo, hi));
    }
    // A free-standing pillar.
    let px = b.range(4.2, 5.2);
    b.solid(Aabb::new(Point3::new(px, 6.2, 0.0), Point3::new(px + 0.5, 6.7, 3.0)));

    for _ in 0..3 {
        let x = b.range(1.5, 8.0);
        let y = b.range(2.5, 3.5);
        let s = b.range(0.4, 0.8);
        b.clutter_box(Aabb::new(Point3::new(x, y, 0.0), Point3::new(x + s, y + s, s)));
    }
    let cx = b.range(6.0, 8.0);
    b.clutter_sphere(Point3::new(cx, 4.0, 0.5), 0.4);

    let z = 1.2;
    let waypoints = vec![
        Pose6D::new(2.0, 5.0, z, 0.0, 0.0, 0.0),
        Pose6D::new(6.0, 4.8, z, 0.0, 0.0, 0.3),
        Pose6D::new(7.0, 7.0, z, 0.0, 0.0, 1.6),
        Pose6D::new(3.0, 7.0, z, 0.0, 0.0, 3.0),
    ];
    (Aabb::new(Point3::origin(), Point3::from(size)), waypoints)
}

fn build_corridor<R: Rng>(b: &mut WorldBuilder<'_, R>) -> (Aabb, Vec<Pose6D>) {
    let size = Vector3::new(60.0, 3.0, 3.0);
    shell(b, size, true);

    // Pillars on both walls at irregular spacing.
    for side in [0.0, 1.0] {
        let mut x = b.range(1.0, 3.0);
        while x < size.x - 1.5 {
            let depth = b.range(0.2, 0.4);
            let width = b.range(0.3, 0.6);
            let (y0, y1) = if side == 0.0 { (0.0, depth) } else { (size.y - depth, size.y) };
            b.solid(Aabb::new(Point3::new(x, y0, 0.0), Point3::new(x + width, y1, size.z)));
            x += b.range(3.0, 6.5);
        }
    }
    // Ceiling beams across the corridor.
    let mut x = b.range(2.0, 5.0);
    while x < size.x - 1.0 {
        let depth = b.range(0.25, 0.5);
        b.solid(Aabb::new(Point3::new(x, 0.0, size.z - depth), Point3::new(x + 0.3, size.y, size.z)));
        x += b.range(4.0, 9.0);
    }
    // Low cabinets.
    for _ in 0..6 {
        let x = b.range(2.0, 56.0);
        let left = b.rng.random_bool(0.5);
        let d = b.range(0.3, 0.5);
        let (y0, y1) = if left { (0.0, d) } else { (size.y - d, size.y) };
        let h = b.range(0.6, 1.4);
        let w = b.range(0.8, 2.0);
        b.solid(Aabb::new(Point3::new(x, y0, 0.0), Point3::new(x + w, y1, h)));
    }

    // Clutter near the walls, clear of the centerline.
    let mut x = b.range(2.0, 5.0);
    while x < size.x - 2.0 {
        let left = b.rng.random_bool(0.5);
        if b.rng.random_bool(0.6) {
            let s = b.range(0.4, 0.7);
            let y0 = if left { 0.45 } else { size.y - 0.45 - s };
            let h = b.range(0.5, 1.6);
            b.clutter_box(Aabb::new(Point3::new(x, y0, 0.0), Point3::new(x + s, y0 + s, h)));
        } else {
            let r = b.range(0.25, 0.45);
            let y = if left { 0.5 + r } else { size.y - 0.5 - r };
            b.clutter_sphere(Point3::new(x, y, r), r);
        }
        x += b.range(3.0, 6.0);
    }

    let z = 1.3;
    let waypoints = vec![
        Pose6D::new(5.0, 1.5, z, 0.0, 0.0, 0.0),
        Pose6D::new(15.0, 1.3, z, 0.0, 0.02, 0.08),
        Pose6D::new(25.0, 1.7, z, 0.02, 0.0, -0.06),
        Pose6D::new(35.0, 1.5, z, 0.0, -0.02, 0.05),
        Pose6D::new(45.0, 1.4, z, -0.02, 0.0, 0.0),
        Pose6D::new(55.0, 1.5, z, 0.0, 0.0, 0.04),
    ];
    (Aabb::new(Point3::origin(), Point3::from(size)), waypoints)
}

fn build_urban<R: Rng>(b: &mut WorldBuilder<'_, R>) -> (Aabb, Vec<Pose6D>) {
    let extent = 80.0;
    let street = 12.0;
    b.rect(Rect {
        corner: Point3::origin(),
        a: Vector3::x() * extent,
        b: Vector3::y() * extent,
    });
    // Four blocks around a crossroads at the center, each split into buildings.
    let half = (extent - street) / 2.0;
    let mut top: f64 = 0.0;
    for (bx, by) in [(0.0, 0.0), (half + street, 0.0), (0.0, half + street), (half + street, half + street)] {
        let mut x = bx + 2.0;
        while x < bx + half - 6.0 {
            let w = b.range(6.0, 12.0).min(bx + half - 2.0 - x);
            let h = b.range(6.0, 15.0);
            top = top.max(h);
            let inset = b.range(1.0, 3.0);
            b.solid(Aabb::new(
                Point3::new(x, by + inset, 0.0),
                Point3::new(x + w, by + half - inset, h),
            ));
            x += w + b.range(1.0, 3.0);
        }
    }
    // Parked cars and pedestrians along the streets.
    let mid = extent / 2.0;
    let mut x = b.range(4.0, 8.0);
    while x < extent - 6.0 {
        if (x - mid).abs() > street {
            let curb = if b.rng.random_bool(0.5) { mid - street / 2.0 + 0.5 } else { mid + street / 2.0 - 2.3 };
            b.clutter_box(Aabb::new(Point3::new(x, curb, 0.0), Point3::new(x + 4.2, curb + 1.8, 1.5)));
        }
        x += b.range(6.0, 12.0);
    }
    for _ in 0..6 {
        let x = b.range(5.0, extent - 5.0);
        let side = if b.rng.random_bool(0.5) { mid - street / 2.0 + 0.4 } else { mid + street / 2.0 - 0.4 };
        b.clutter_sphere(Point3::new(x, side, 0.9), 0.3);
    }

    let z = 1.8;
    let waypoints = vec![
        Pose6D::new(5.0, mid, z, 0.0, 0.0, 0.0),
        Pose6D::new(mid - 2.0, mid + 1.0, z, 0.0, 0.0, 0.05),
        Pose6D::new(mid + 1.0, mid + 4.0, z, 0.0, 0.0, 1.5),
        Pose6D::new(mid + 1.0, extent - 5.0, z, 0.0, 0.0, 1.57),
    ];
    (
        Aabb::new(Point3::origin(), Point3::new(extent, extent, top.max(3.0))),
        waypoints,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub waypoints: Vec<Pose6D>,
    pub steps: usize,
}

/// Piecewise-linear poses, uniform in step index across the waypoints.
pub fn interpolate_trajectory(spec: &TrajectorySpec) -> Result<Vec<Pose6D>> {
    if spec.waypoints.len() < 2 {
        return Err(Error::InvalidParameter("a trajectory needs at least 2 waypoints".into()));
    }
    if spec.steps == 0 {
        return Ok(Vec::new());
    }
    if spec.steps == 1 {
        return Ok(vec![spec.waypoints[0]]);
    }
    let segments = spec.waypoints.len() - 1;
    Ok((0..spec.steps)
        .map(|i| {
            let s = i as f64 / (spec.steps - 1) as f64 * segments as f64;
            let seg = (s.floor() as usize).min(segments - 1);
            let f = s - seg as f64;
            let (a, b) = (&spec.waypoints[seg], &spec.waypoints[seg + 1]);
            let d = pose_delta(b, a).to_vector() * f;
            pose_add(a, &Pose6D::from_vector(&d))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSimParams {
    pub points_per_scan: usize,
    pub range_noise_std: f64,
    pub unknown_fraction: f64,
    pub max_range: f64,
    pub dropout_prob: f64,
}

impl Default for ScanSimParams {
    fn default() -> Self {
        Self {
            points_per_scan: 1000,
            range_noise_std: 0.02,
            unknown_fraction: 0.2,
            max_range: 30.0,
            dropout_prob: 0.0,
        }
    }
}

impl ScanSimParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.range_noise_std >= 0.0
            && (0.0..1.0).contains(&self.unknown_fraction)
            && self.max_range > 0.0
            && (0.0..=1.0).contains(&self.dropout_prob);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid scan simulation parameters {self:?}")))
        }
    }
}

/// A simulated scan with the provenance of each return.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScan {
    pub scan: ScanFrame,
    /// `true` where the return came from an unmapped clutter object.
    pub unknown: Vec<bool>,
    /// Index of the source point in `map_points` or `unknown_points`.
    pub source: Vec<usize>,
}

pub fn simulate_scan<R: Rng + ?Sized>(
    gt_pose: &Pose6D,
    world: &WorldModel,
    params: &ScanSimParams,
    rng: &mut R,
) -> Result<ScanFrame> {
    simulate_scan_labeled(gt_pose, world, params, rng).map(|l| l.scan)
}

pub fn simulate_scan_labeled<R: Rng + ?Sized>(
    gt_pose: &Pose6D,
    world: &WorldModel,
    params: &ScanSimParams,
    rng: &mut R,
) -> Result<LabeledScan> {
    params.validate()?;
    let origin = gt_pose.position();
    let r2 = params.max_range * params.max_range;
    let within = |pts: &[Point3]| -> Vec<usize> {
        pts.iter()
            .enumerate()
            .filter(|(_, p)| (*p - origin).norm_squared() <= r2)
            .map(|(i, _)| i)
            .collect()
    };
    let visible_map = within(&world.map_points);
    let visible_unknown = within(&world.unknown_points);
    if visible_map.is_empty() && visible_unknown.is_empty() {
        return Err(Error::NoVisiblePoints {
            max_range: params.max_range,
        });
    }

    let inverse = gt_pose.inverse();
    let mut points = Vec::with_capacity(params.points_per_scan);
    let mut unknown = Vec::with_capacity(params.points_per_scan);
    let mut source = Vec::with_capacity(params.points_per_scan);
    for _ in 0..params.points_per_scan {
        let pick_unknown = rng.random::<f64>() < params.unknown_fraction;
        let from_unknown = (pick_unknown && !visible_unknown.is_empty()) || visible_map.is_empty();
        let (pool, pts) = if from_unknown {
            (&visible_unknown, &world.unknown_points)
        } else {
            (&visible_map, &world.map_points)
        };
        let idx = pool[rng.random_range(0..pool.len())];
        let noise = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ) * params.range_noise_std;
        let dropped = rng.random::<f64>() < params.dropout_prob;
        let world_pt = pts[idx] + noise;
        if dropped || (world_pt - origin).norm_squared() > r2 {
            continue;
        }
        points.push(inverse.transform_point(&world_pt));
        unknown.push(from_unknown);
        source.push(idx);
    }
    Ok(LabeledScan {
        scan: ScanFrame::from_points(points),
        unknown,
        source,
    })
}

/// Noisy per-step motion `pose_delta(gt[t], gt[t-1]) + N(0, noise_cov)`.
pub fn simulate_odometry<R: Rng + ?Sized>(
    gt: &[Pose6D],
    noise_cov: &Matrix6<f64>,
    rng: &mut R,
) -> Result<Vec<Pose6D>> {
    if gt.len() < 2 {
        return Err(Error::InvalidParameter("odometry needs at least 2 poses".into()));
    }
    let factor = sqrt_factor(noise_cov);
    Ok(gt
        .windows(2)
        .map(|w| {
            let exact = pose_delta(&w[1], &w[0]).to_vector();
            Pose6D::from_vector(&(exact + sample_with_factor(&factor, rng)))
        })
        .collect())
}

/// Diagonal odometry noise from per-axis translation / rotation std-devs.
pub fn odometry_noise(trans_std: f64, rot_std: f64) -> Matrix6<f64> {
    let t = trans_std * trans_std;
    let r = rot_std * rot_std;
    Matrix6::from_diagonal(&nalgebra::Vector6::new(t, t, t, r, r, r))
}

/// Everything a localization run consumes.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub world: WorldModel,
    pub ground_truth: Vec<Pose6D>,
    pub scans: Vec<ScanFrame>,
    /// `odometry[t]` is the motion from step `t` to `t + 1`.
    pub odometry: Vec<Pose6D>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub preset: Preset,
    pub density: f64,
    pub steps: usize,
    pub scan: ScanSimParams,
    pub odometry_trans_std: f64,
    pub odometry_rot_std: f64,
    /// Overrides the preset's default waypoints.
    pub waypoints: Option<Vec<Pose6D>>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            preset: Preset::Corridor,
            density: 50.0,
            steps: 200,
            scan: ScanSimParams::default(),
            odometry_trans_std: 0.05,
            odometry_rot_std: 0.01,
            waypoints: None,
        }
    }
}

/// Simulates a full run from a single seeded generator.
pub fn simulate_scenario(seed: u64, params: &ScenarioParams) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = generate_world_with(&mut rng, params.preset, params.density)?;
    let waypoints = params
        .waypoints
        .clone()
        .unwrap_or_else(|| world.default_waypoints.clone());
    let ground_truth = interpolate_trajectory(&TrajectorySpec {
        waypoints,
        steps: params.steps,
    })?;
    let scans = ground_truth
        .iter()
        .map(|gt| simulate_scan(gt, &world, &params.scan, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let odometry = if ground_truth.len() >= 2 {
        let cov = odometry_noise(params.odometry_trans_std, params.odometry_rot_std);
        simulate_odometry(&ground_truth, &cov, &mut rng)?
    } else {
        Vec::new()
    };
    Ok(Scenario {
        world,
        ground_truth,
        scans,
        odometry,
    })
}

/// Wraps an angle difference for linear interpolation.
pub fn lerp_angle(a: f64, b: f64, f: f64) -> f64 {
    normalize_angle(a + normalize_angle(b - a) * f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn world_is_deterministic() {
        for preset in [Preset::Room, Preset::Corridor, Preset::UrbanBlock] {
            let a = generate_world(5, preset, 5.0).unwrap();
            let b = generate_world(5, preset, 5.0).unwrap();
            assert_eq!(a, b);
            assert!(!a.map_points.is_empty());
            assert!(a.map_points.iter().all(|p| a.bounds.contains(p)));
            assert!(a.unknown_points.iter().all(|p| a.bounds.contains(p)));
        }
        assert_ne!(
            generate_world(1, Preset::Room, 5.0).unwrap().map_points,
            generate_world(2, Preset::Room, 5.0).unwrap().map_points
        );
    }

    #[test]
    fn room_point_count_matches_area() {
        let density = 100.0;
        let w = generate_world(3, Preset::Room, density).unwrap();
        // Shell 10x10x3 plus every furniture box.
        let area = 2.0 * 100.0 + 4.0 * 30.0 + w.structures.iter().map(Aabb::surface_area).sum::<f64>();
        let expected = area * density;
        let n = w.map_points.len() as f64;
        assert!((n - expected).abs() <= 0.1 * expected, "{n} vs {expected}");
    }

    #[test]
    fn nonpositive_density_rejected_and_tiny_density_floored() {
        assert!(generate_world(0, Preset::Room, 0.0).is_err());
        assert!(generate_world(0, Preset::Room, -1.0).is_err());
        let w = generate_world(0, Preset::Room, 1e-9).unwrap();
        // One point per rectangle: 6 shell faces + 6 per furniture box.
        assert_eq!(w.map_points.len(), 6 + 6 * w.structures.len());
    }

    #[test]
    fn interpolation_examples() {
        let a = Pose6D::identity();
        let b = Pose6D::from_translation(2.0, 0.0, 0.0);
        let t = interpolate_trajectory(&TrajectorySpec { waypoints: vec![a, b], steps: 3 }).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.iter().filter(|p| **p == Pose6D::from_translation(1.0, 0.0, 0.0)).count(), 1);

        let ya = Pose6D::new(0.0, 0.0, 0.0, 0.0, 0.0, 3.0);
        let yb = Pose6D::new(0.0, 0.0, 0.0, 0.0, 0.0, -3.0);
        let t = interpolate_trajectory(&TrajectorySpec { waypoints: vec![ya, yb], steps: 3 }).unwrap();
        let oracle = lerp_angle(3.0, -3.0, 0.5);
        assert_abs_diff_eq!(t[1].yaw.abs(), PI, epsilon = 1e-9);
        assert_abs_diff_eq!(t[1].yaw, oracle, epsilon = 1e-12);

        let c = Pose6D::new(1.0, 2.0, 3.0, 0.1, 0.2, 0.3);
        let t = interpolate_trajectory(&TrajectorySpec { waypoints: vec![c, c, c], steps: 7 }).unwrap();
        assert!(t.iter().all(|p| (p.to_vector() - c.to_vector()).amax() < 1e-12));
    }

    #[test]
    fn clean_scan_round_trips_onto_map() {
        let w = generate_world(1, Preset::Room, 20.0).unwrap();
        let gt = Pose6D::new(5.0, 5.0, 1.2, 0.05, -0.03, 0.7);
        let params = ScanSimParams {
            points_per_scan: 300,
            range_noise_std: 0.0,
            unknown_fraction: 0.0,
            max_range: 30.0,
            dropout_prob: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = simulate_scan_labeled(&gt, &w, &params, &mut rng).unwrap();
        assert_eq!(l.scan.len(), 300);
        for (p, src) in l.scan.points().iter().zip(&l.source) {
            assert!((gt.transform_point(p) - w.map_points[*src]).norm() < 1e-9);
        }
    }

    #[test]
    fn unknown_fraction_is_binomial() {
        let w = generate_world(2, Preset::Corridor, 10.0).unwrap();
        let gt = w.default_waypoints[0];
        let params = ScanSimParams {
            points_per_scan: 1000,
            unknown_fraction: 0.3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = simulate_scan_labeled(&gt, &w, &params, &mut rng).unwrap();
        let n = l.unknown.iter().filter(|u| **u).count() as f64;
        let sd = (1000.0f64 * 0.3 * 0.7).sqrt();
        assert!((n - 300.0).abs() < 4.0 * sd, "{n} unknown points");
        assert!(l.scan.ranges().iter().all(|r| *r <= params.max_range));
    }

    #[test]
    fn noisy_scan_within_three_sigma() {
        let w = generate_world(4, Preset::Room, 20.0).unwrap();
        let gt = Pose6D::new(4.0, 5.0, 1.2, 0.0, 0.0, -0.4);
        let std = 0.02;
        let params = ScanSimParams {
            points_per_scan: 2000,
            range_noise_std: std,
            unknown_fraction: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let l = simulate_scan_labeled(&gt, &w, &params, &mut rng).unwrap();
        // Per-axis 3 sigma: the 3-D offset norm follows a chi distribution with 3 dof.
        let inside = l
            .scan
            .points()
            .iter()
            .zip(&l.source)
            .filter(|(p, s)| {
                let d = gt.transform_point(p) - w.map_points[**s];
                d.iter().all(|c| c.abs() <= 3.0 * std)
            })
            .count() as f64;
        assert!(inside / l.scan.len() as f64 > 0.99);
    }

    #[test]
    fn no_visible_points_is_an_error() {
        let w = generate_world(0, Preset::Room, 5.0).unwrap();
        let params = ScanSimParams { max_range: 0.01, ..Default::default() };
        let far = Pose6D::from_translation(500.0, 500.0, 500.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(simulate_scan(&far, &w, &params, &mut rng), Err(Error::NoVisiblePoints { .. })));
    }

    #[test]
    fn odometry_noise_free_is_exact() {
        let gt = interpolate_trajectory(&TrajectorySpec {
            waypoints: vec![Pose6D::identity(), Pose6D::new(10.0, 2.0, 0.0, 0.0, 0.0, 1.0)],
            steps: 11,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let odo = simulate_odometry(&gt, &Matrix6::zeros(), &mut rng).unwrap();
        assert_eq!(odo.len(), 10);
        for (d, w) in odo.iter().zip(gt.windows(2)) {
            assert_eq!(*d, pose_delta(&w[1], &w[0]));
        }
    }

    #[test]
    fn stationary_odometry_covariance() {
        let gt = vec![Pose6D::new(1.0, 2.0, 3.0, 0.1, 0.1, 0.1); 100_001];
        let mut cov = Matrix6::from_element(0.001);
        cov.fill_diagonal(0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let odo = simulate_odometry(&gt, &cov, &mut rng).unwrap();
        let n = odo.len() as f64;
        let mean = odo.iter().map(|d| d.to_vector()).sum::<nalgebra::Vector6<f64>>() / n;
        let mut sc = Matrix6::zeros();
        for d in &odo {
            let c = d.to_vector() - mean;
            sc += c * c.transpose();
        }
        sc /= n;
        assert!((sc - cov).norm() / cov.norm() < 0.05);
        assert!(mean.amax() < 4.0 * (0.01f64 / n).sqrt());
    }

    #[test]
    fn odometry_random_walk_grows_with_sqrt_steps() {
        let steps = 400;
        let gt = vec![Pose6D::identity(); steps + 1];
        let cov = odometry_noise(0.05, 0.0);
        let runs = 400;
        let mut at_100 = Vec::new();
        let mut at_400 = Vec::new();
        for seed in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let odo = simulate_odometry(&gt, &cov, &mut rng).unwrap();
            let mut x = 0.0;
            for (i, d) in odo.iter().enumerate() {
                x += d.x;
                if i + 1 == 100 {
                    at_100.push(x);
                }
            }
            at_400.push(x);
        }
        let (_, s100) = crate::stats::mean_std(&at_100);
        let (_, s400) = crate::stats::mean_std(&at_400);
        // Expected ratio sqrt(400/100) = 2.
        assert!((s400 / s100 - 2.0).abs() < 0.3, "ratio {}", s400 / s100);
        assert!((s100 - 0.05 * 10.0).abs() < 0.1);
    }

    #[test]
    fn scenario_is_reproducible() {
        let p = ScenarioParams {
            preset: Preset::Room,
            density: 10.0,
            steps: 5,
            ..Default::default()
        };
        let a = simulate_scenario(9, &p).unwrap();
        let b = simulate_scenario(9, &p).unwrap();
        assert_eq!(a.scans, b.scans);
        assert_eq!(a.odometry, b.odometry);
        assert_eq!(a.ground_truth.len(), 5);
        assert_eq!(a.odometry.len(), 4);
    }
}
