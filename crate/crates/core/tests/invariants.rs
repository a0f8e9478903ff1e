use proptest::prelude::*;

use pffloc::config::RunConfig;
use pffloc::distance_field::VoxelDistanceField;
use pffloc::filter::weights::{copy_counts, effective_sample_size, estimate_pose, normalize_log_weights, resample_with_offset};
use pffloc::filter::{Origin, Particle};
use pffloc::geometry::{normalize_angle, Point3, Pose6D};
use pffloc::io;

fn particles(log_w: &[f64]) -> Vec<Particle> {
    log_w
        .iter()
        .enumerate()
        .map(|(i, _)| Particle {
            pose: Pose6D::from_translation(i as f64, 0.0, 0.0),
            weight: 0.0,
            origin: if i % 2 == 0 { Origin::Predictive } else { Origin::Measurement },
        })
        .collect()
}

fn angle() -> impl Strategy<Value = f64> {
    -3.1..3.1f64
}

fn pose() -> impl Strategy<Value = Pose6D> {
    (-50.0..50.0f64, -50.0..50.0f64, -5.0..5.0f64, -1.4..1.4f64, -1.4..1.4f64, angle())
        .prop_map(|(x, y, z, r, p, w)| Pose6D::new(x, y, z, r, p, w))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_weights_normalize_and_resample_within_bounds(
        log_w in prop::collection::vec(-800.0..0.0f64, 1..60),
        count in 1usize..200,
        offset in 0.0..1.0f64,
    ) {
        let mut ps = particles(&log_w);
        prop_assert!(normalize_log_weights(&mut ps, &log_w));
        let total: f64 = ps.iter().map(|p| p.weight).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(ps.iter().all(|p| p.weight >= 0.0));
        let ess = effective_sample_size(&ps);
        prop_assert!(ess >= 1.0 - 1e-9 && ess <= ps.len() as f64 + 1e-9);

        let counts = copy_counts(&ps, count, offset);
        prop_assert_eq!(counts.iter().sum::<usize>(), count);
        for (c, p) in counts.iter().zip(&ps) {
            let expect = p.weight * count as f64;
            prop_assert!(*c as f64 >= expect.floor() - 1e-6 && *c as f64 <= expect.ceil() + 1e-6);
        }
        let out = resample_with_offset(&ps, count, offset);
        prop_assert_eq!(out.len(), count);
        prop_assert!(out.iter().all(|p| p.origin == Origin::Predictive && (p.weight - 1.0 / count as f64).abs() < 1e-12));
    }

    #[test]
    fn weighted_mean_of_one_pose_is_that_pose(p in pose(), n in 1usize..20) {
        let ps: Vec<Particle> = (0..n)
            .map(|i| Particle { pose: p, weight: 1.0 + i as f64, origin: Origin::Predictive })
            .collect();
        let m = estimate_pose(&ps);
        prop_assert!(m.wrapped_difference(&p).norm() < 1e-9);
    }

    #[test]
    fn pose_composition_round_trips(a in pose(), b in pose()) {
        prop_assert!(a.add(&b.delta(&a)).wrapped_difference(&b).norm() < 1e-9);
        let relative = a.inverse().compose(&b);
        let back = a.compose(&relative);
        let q0 = Point3::new(0.3, 0.7, -1.1);
        prop_assert!((back.transform_point(&q0) - b.transform_point(&q0)).norm() < 1e-8);
        let q = Point3::new(1.0, -2.0, 0.5);
        let r = a.inverse().transform_point(&a.transform_point(&q));
        prop_assert!((r - q).norm() < 1e-9);
        prop_assert!(normalize_angle(a.yaw + 10.0 * std::f64::consts::PI).abs() <= std::f64::consts::PI);
    }

    #[test]
    fn trajectory_files_round_trip(poses in prop::collection::vec(pose(), 1..15)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        io::write_trajectory(&path, &poses, "header").unwrap();
        let back = io::read_trajectory(&path).unwrap();
        prop_assert_eq!(back.len(), poses.len());
        for (a, b) in back.iter().zip(&poses) {
            prop_assert!((a.to_vector() - b.to_vector()).norm() < 1e-8);
        }
    }

    #[test]
    fn voxel_values_bound_the_true_distance(
        pts in prop::collection::vec((0.0..4.0f64, 0.0..4.0f64, 0.0..2.0f64), 1..30),
        res in 0.15..0.5f64,
    ) {
        let map: Vec<Point3> = pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
        let field = VoxelDistanceField::build(&map, res, 0.5).unwrap();
        let [nx, ny, nz] = field.dims();
        for (i, j, k) in [(0, 0, 0), (nx / 2, ny / 2, nz / 2), (nx - 1, ny - 1, nz - 1)] {
            let c = field.voxel_center(i, j, k);
            let exact = map.iter().map(|q| (q - c).norm()).fold(f64::INFINITY, f64::min);
            let stored = field.voxel(i, j, k);
            prop_assert!(stored >= exact - 1e-5 && stored <= exact + res * 3f64.sqrt(), "{stored} vs {exact}");
        }
    }
}

#[test]
fn config_file_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ini");
    let mut cfg = RunConfig::synthetic();
    cfg.seed = 77;
    cfg.paths.map = dir.path().join("a map.xyz");
    cfg.save(&path).unwrap();
    assert_eq!(RunConfig::load(&path).unwrap(), cfg);
}
