//! Build a voxel distance field for a simulated room, query it, and round-trip it
//! through the VDF1 file format.
//!
//! cargo run --release --example distance_field

use std::time::Instant;

use pffloc::distance_field::VoxelDistanceField;
use pffloc::geometry::Point3;
use pffloc::simulator::{generate_world, Preset};

fn main() -> pffloc::error::Result<()> {
    let world = generate_world(7, Preset::Room, 50.0)?;
    println!("room map: {} points", world.map_points.len());

    let start = Instant::now();
    let field = VoxelDistanceField::build(&world.map_points, 0.1, 1.0)?;
    let [nx, ny, nz] = field.dims();
    println!(
        "field: {nx}x{ny}x{nz} voxels at {} m, built in {:.2} s",
        field.resolution(),
        start.elapsed().as_secs_f64()
    );

    // Compare a few queries against the nearest map point.
    let center = world.default_waypoints[0].position();
    for offset in [0.0, 0.5, 1.0, 2.0] {
        let q = center + Point3::new(offset, 0.0, 0.0).coords;
        let exact = world
            .map_points
            .iter()
            .map(|p| (p - q).norm())
            .fold(f64::INFINITY, f64::min);
        println!(
            "query at ({:.2}, {:.2}, {:.2}): field {:.3} m, nearest point {:.3} m",
            q.x,
            q.y,
            q.z,
            field.query(&q),
            exact
        );
    }
    println!("outside the grid the field reports {:.2} m", field.query(&Point3::new(1e3, 0.0, 0.0)));

    let dir = std::env::temp_dir().join("pffloc_distance_field_example");
    std::fs::create_dir_all(&dir).ok();
    let path = dir.join("room.vdf");
    field.save(&path)?;
    let loaded = VoxelDistanceField::load(&path)?;
    println!(
        "saved {} bytes to {}, reload identical: {}",
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0),
        path.display(),
        loaded == field
    );
    Ok(())
}
