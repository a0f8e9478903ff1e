//! Text formats: XYZ and ASCII PCD point clouds, trajectories, scan archives.
//!
//! Trajectory rows are `step x y z roll pitch yaw` (meters, radians), space
//! separated, with `#` comments. Odometry files use the same layout, row `t`
//! holding the motion from step `t` to `t + 1`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose6D, ScanFrame};

/// Index file inside a scan archive directory.
pub const SCAN_INDEX: &str = "index.txt";

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if !body.is_empty() {
            out.push((i + 1, body.to_string()));
        }
    }
    Ok(out)
}

fn parse_floats(path: &Path, line: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("'{tok}' is not a number")))
        })
        .collect()
}

/// Reads a map, choosing the format from the extension (`.pcd` or anything else as XYZ).
pub fn read_points(path: impl AsRef<Path>) -> Result<Vec<Point3>> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pcd") => read_pcd(path),
        _ => read_xyz(path),
    }
}

pub fn write_points(path: impl AsRef<Path>, points: &[Point3]) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pcd") => write_pcd(path, points),
        _ => write_xyz(path, points),
    }
}

/// One point per line; the first three columns are x, y, z.
pub fn read_xyz(path: impl AsRef<Path>) -> Result<Vec<Point3>> {
    let path = path.as_ref();
    data_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            let v = parse_floats(path, n, &line)?;
            if v.len() < 3 {
                return Err(Error::parse(path, n, "expected at least 3 columns"));
            }
            Ok(Point3::new(v[0], v[1], v[2]))
        })
        .collect()
}

pub fn write_xyz(path: impl AsRef<Path>, points: &[Point3]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let res: std::io::Result<()> = (|| {
        for p in points {
            writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// ASCII PCD with at least `x y z` among its fields. Binary data is rejected.
pub fn read_pcd(path: impl AsRef<Path>) -> Result<Vec<Point3>> {
    let path = path.as_ref();
    let lines = data_lines(path)?;
    let mut columns: Option<[usize; 3]> = None;
    let mut points = Vec::new();
    let mut in_data = false;
    for (n, line) in lines {
        if in_data {
            let v = parse_floats(path, n, &line)?;
            let [ix, iy, iz] = columns.unwrap();
            let max = ix.max(iy).max(iz);
            if v.len() <= max {
                return Err(Error::parse(path, n, "row has fewer values than FIELDS"));
            }
            points.push(Point3::new(v[ix], v[iy], v[iz]));
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next().map(|t| t.to_ascii_uppercase()).as_deref() {
            Some("FIELDS") => {
                let names: Vec<&str> = tokens.collect();
                let find = |f: &str| names.iter().position(|n| n.eq_ignore_ascii_case(f));
                columns = match (find("x"), find("y"), find("z")) {
                    (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                    _ => return Err(Error::parse(path, n, "FIELDS must include x, y and z")),
                };
            }
            Some("DATA") => {
                if tokens.next() != Some("ascii") {
                    return Err(Error::parse(path, n, "only DATA ascii is supported"));
                }
                if columns.is_none() {
                    return Err(Error::parse(path, n, "DATA before FIELDS"));
                }
                in_data = true;
            }
            _ => {}
        }
    }
    if !in_data {
        return Err(Error::parse(path, 0, "missing DATA line"));
    }
    Ok(points)
}

pub fn write_pcd(path: impl AsRef<Path>, points: &[Point3]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let res: std::io::Result<()> = (|| {
        writeln!(w, "# .PCD v0.7 - Point Cloud Data file format")?;
        writeln!(w, "VERSION 0.7")?;
        writeln!(w, "FIELDS x y z")?;
        writeln!(w, "SIZE 8 8 8")?;
        writeln!(w, "TYPE F F F")?;
        writeln!(w, "COUNT 1 1 1")?;
        writeln!(w, "WIDTH {}", points.len())?;
        writeln!(w, "HEIGHT 1")?;
        writeln!(w, "VIEWPOINT 0 0 0 1 0 0 0")?;
        writeln!(w, "POINTS {}", points.len())?;
        writeln!(w, "DATA ascii")?;
        for p in points {
            writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Rows of `step x y z roll pitch yaw`. Steps must be consecutive from 0.
pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Vec<Pose6D>> {
    let path = path.as_ref();
    let mut poses = Vec::new();
    for (n, line) in data_lines(path)? {
        let v = parse_floats(path, n, &line)?;
        if v.len() != 7 {
            return Err(Error::parse(path, n, format!("expected 7 columns, found {}", v.len())));
        }
        if v[0] != poses.len() as f64 {
            return Err(Error::parse(
                path,
                n,
                format!("expected step {}, found {}", poses.len(), v[0]),
            ));
        }
        poses.push(Pose6D::new(v[1], v[2], v[3], v[4], v[5], v[6]));
    }
    Ok(poses)
}

pub fn write_trajectory(path: impl AsRef<Path>, poses: &[Pose6D], header: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let res: std::io::Result<()> = (|| {
        for line in header.lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "# step x y z roll pitch yaw")?;
        for (i, p) in poses.iter().enumerate() {
            writeln!(w, "{i} {} {} {} {} {} {}", p.x, p.y, p.z, p.roll, p.pitch, p.yaw)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

fn scan_file_name(step: usize) -> String {
    format!("scan_{step:06}.xyz")
}

/// Writes one XYZ file per scan plus an index of `step file` rows.
pub fn write_scan_archive(dir: impl AsRef<Path>, scans: &[ScanFrame]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let index_path = dir.join(SCAN_INDEX);
    let mut index = create(&index_path)?;
    writeln!(index, "# step file").map_err(|e| Error::io(&index_path, e))?;
    for (i, scan) in scans.iter().enumerate() {
        let name = scan_file_name(i);
        write_xyz(dir.join(&name), scan.points())?;
        writeln!(index, "{i} {name}").map_err(|e| Error::io(&index_path, e))?;
    }
    index.flush().map_err(|e| Error::io(&index_path, e))
}

/// Scan file paths listed in an archive's index, in step order.
pub fn scan_archive_paths(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let index_path = dir.join(SCAN_INDEX);
    let mut paths = Vec::new();
    for (n, line) in data_lines(&index_path)? {
        let mut tok = line.split_whitespace();
        let (Some(step), Some(file)) = (tok.next(), tok.next()) else {
            return Err(Error::parse(&index_path, n, "expected 'step file'"));
        };
        if step.parse::<usize>().ok() != Some(paths.len()) {
            return Err(Error::parse(&index_path, n, format!("expected step {}", paths.len())));
        }
        paths.push(dir.join(file));
    }
    Ok(paths)
}

pub fn read_scan_archive(dir: impl AsRef<Path>) -> Result<Vec<ScanFrame>> {
    scan_archive_paths(dir)?
        .into_iter()
        .map(|p| read_xyz(p).map(ScanFrame::from_points))
        .collect()
}
