//! Voxelized Euclidean distance field over a map point cloud.
//!
//! Construction runs a separable exact Euclidean distance transform (lower
//! envelope of parabolas, one pass per axis) over the voxel grid, seeded with
//! every voxel that contains at least one map point. The transform also carries
//! the nearest seed voxel, and each stored value is then refined to the
//! distance from the voxel center to the closest map point held in that seed
//! voxel and its 26 neighbours. Stored values therefore never underestimate the
//! true distance and exceed it by at most `resolution * sqrt(3)`; in practice
//! they are almost always exact.
//!
//! Queries interpolate trilinearly between voxel centers. Points outside the
//! grid report `max_distance`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point3;

pub const DEFAULT_VOXEL_BUDGET: usize = 200_000_000;

const MAGIC: &[u8; 4] = b"VDF1";
const NO_SEED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldParams {
    pub resolution: f64,
    pub margin: f64,
    pub voxel_budget: usize,
    /// Value reported outside the field. `None` uses the field diagonal.
    pub max_distance: Option<f64>,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self {
            resolution: 0.2,
            margin: 2.0,
            voxel_budget: DEFAULT_VOXEL_BUDGET,
            max_distance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelDistanceField {
    origin: Point3,
    resolution: f64,
    dims: [usize; 3],
    distances: Vec<f32>,
    max_distance: f64,
}

impl VoxelDistanceField {
    /// Builds a field covering the bounding box of `map` grown by `margin`.
    pub fn build(map: &[Point3], resolution: f64, margin: f64) -> Result<Self> {
        Self::build_with(
            map,
            &FieldParams {
                resolution,
                margin,
                ..FieldParams::default()
            },
        )
    }

    pub fn build_with(map: &[Point3], params: &FieldParams) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::EmptyMap);
        }
        let res = params.resolution;
        if !(res > 0.0 && res.is_finite()) {
            return Err(Error::InvalidParameter(format!("resolution must be > 0, got {res}")));
        }
        if !(params.margin >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "margin must be >= 0, got {}",
                params.margin
            )));
        }

        let mut lo = map[0].coords;
        let mut hi = map[0].coords;
        for p in map {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::InvalidParameter(format!("non-finite map point {p:?}")));
            }
            lo = lo.inf(&p.coords);
            hi = hi.sup(&p.coords);
        }
        lo.add_scalar_mut(-params.margin);
        hi.add_scalar_mut(params.margin);
        let extent = hi - lo;
        let dim = |e: f64| ((e / res).ceil() as usize).max(1);
        let dims = [dim(extent.x), dim(extent.y), dim(extent.z)];
        let total = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .unwrap_or(usize::MAX);
        if total > params.voxel_budget || total >= NO_SEED as usize {
            return Err(Error::Capacity {
                nx: dims[0],
                ny: dims[1],
                nz: dims[2],
                budget: params.voxel_budget,
            });
        }

        let origin = Point3::from(lo);
        let diagonal = (dims[0] as f64 * res).hypot(dims[1] as f64 * res).hypot(dims[2] as f64 * res);
        let max_distance = params.max_distance.unwrap_or(diagonal);

        let grid = Grid { origin, res, dims };
        let buckets = PointBuckets::new(&grid, map);
        let features = grid.feature_transform(&buckets.occupied);

        let mut distances = vec![0.0f32; total];
        for (idx, d) in distances.iter_mut().enumerate() {
            let local = grid.center(idx) - grid.origin;
            let center = [local.x as f32, local.y as f32, local.z as f32];
            let refined = buckets.nearest_around(&grid, features[idx] as usize, center);
            *d = (refined as f64).min(max_distance) as f32;
        }

        Ok(Self {
            origin,
            resolution: res,
            dims,
            distances,
            max_distance,
        })
    }

    pub fn origin(&self) -> Point3 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn max_distance(&self) -> f64 {
        self.max_distance
    }

    pub fn voxel_count(&self) -> usize {
        self.distances.len()
    }

    pub fn distances(&self) -> &[f32] {
        &self.distances
    }

    /// Upper corner of the covered box.
    pub fn upper(&self) -> Point3 {
        Point3::new(
            self.origin.x + self.dims[0] as f64 * self.resolution,
            self.origin.y + self.dims[1] as f64 * self.resolution,
            self.origin.z + self.dims[2] as f64 * self.resolution,
        )
    }

    pub fn contains(&self, p: &Point3) -> bool {
        let u = self.upper();
        p.x >= self.origin.x
            && p.y >= self.origin.y
            && p.z >= self.origin.z
            && p.x <= u.x
            && p.y <= u.y
            && p.z <= u.z
    }

    #[inline]
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn voxel(&self, i: usize, j: usize, k: usize) -> f64 {
        self.distances[self.index(i, j, k)] as f64
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Point3 {
        Point3::new(
            self.origin.x + (i as f64 + 0.5) * self.resolution,
            self.origin.y + (j as f64 + 0.5) * self.resolution,
            self.origin.z + (k as f64 + 0.5) * self.resolution,
        )
    }

    /// Distance to the nearest map point, trilinearly interpolated.
    pub fn query(&self, p: &Point3) -> f64 {
        if !self.contains(p) {
            return self.max_distance;
        }
        // Continuous coordinates in voxel-center units, clamped to the center lattice.
        let axis = |v: f64, o: f64, n: usize| -> (usize, f64) {
            let c = ((v - o) / self.resolution - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = (c.floor() as usize).min(n.saturating_sub(2));
            (i0, c - i0 as f64)
        };
        let (i, fx) = axis(p.x, self.origin.x, self.dims[0]);
        let (j, fy) = axis(p.y, self.origin.y, self.dims[1]);
        let (k, fz) = axis(p.z, self.origin.z, self.dims[2]);
        let i1 = (i + 1).min(self.dims[0] - 1);
        let j1 = (j + 1).min(self.dims[1] - 1);
        let k1 = (k + 1).min(self.dims[2] - 1);

        let v = |a, b, c| self.voxel(a, b, c);
        let c00 = v(i, j, k) * (1.0 - fx) + v(i1, j, k) * fx;
        let c10 = v(i, j1, k) * (1.0 - fx) + v(i1, j1, k) * fx;
        let c01 = v(i, j, k1) * (1.0 - fx) + v(i1, j, k1) * fx;
        let c11 = v(i, j1, k1) * (1.0 - fx) + v(i1, j1, k1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    }

    /// Writes the little-endian `VDF1` binary layout.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.origin.x, self.origin.y, self.origin.z, self.resolution] {
            w.write_all(&v.to_le_bytes())?;
        }
        for d in self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&self.max_distance.to_le_bytes())?;
        for d in &self.distances {
            w.write_all(&d.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> std::io::Result<Self> {
        use std::io::{Error as IoError, ErrorKind};

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(IoError::new(ErrorKind::InvalidData, "bad magic, expected VDF1"));
        }
        let mut f64_buf = [0u8; 8];
        let mut read_f64 = |r: &mut R| -> std::io::Result<f64> {
            r.read_exact(&mut f64_buf)?;
            Ok(f64::from_le_bytes(f64_buf))
        };
        let origin = Point3::new(read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
        let resolution = read_f64(&mut r)?;
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let max_distance = read_f64(&mut r)?;
        if !(resolution > 0.0) || dims.contains(&0) {
            return Err(IoError::new(ErrorKind::InvalidData, "invalid VDF1 header"));
        }
        let total = dims[0] * dims[1] * dims[2];
        let mut bytes = vec![0u8; total * 4];
        r.read_exact(&mut bytes)?;
        let distances = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            origin,
            resolution,
            dims,
            distances,
            max_distance,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file)).map_err(|e| Error::io(path, e))
    }
}

struct Grid {
    origin: Point3,
    res: f64,
    dims: [usize; 3],
}

impl Grid {
    fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    fn linear(&self, [i, j, k]: [usize; 3]) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    fn center(&self, idx: usize) -> Point3 {
        let [i, j, k] = self.coords(idx);
        Point3::new(
            self.origin.x + (i as f64 + 0.5) * self.res,
            self.origin.y + (j as f64 + 0.5) * self.res,
            self.origin.z + (k as f64 + 0.5) * self.res,
        )
    }

    fn voxel_of(&self, p: &Point3) -> usize {
        let cell = |v: f64, o: f64, n: usize| (((v - o) / self.res).floor().max(0.0) as usize).min(n - 1);
        self.linear([
            cell(p.x, self.origin.x, self.dims[0]),
            cell(p.y, self.origin.y, self.dims[1]),
            cell(p.z, self.origin.z, self.dims[2]),
        ])
    }

    /// For every voxel, the linear index of the nearest occupied voxel.
    fn feature_transform(&self, occupied: &[bool]) -> Vec<u32> {
        let n = self.len();
        let mut sq = vec![f64::INFINITY; n];
        let mut feat = vec![NO_SEED; n];
        for (idx, &occ) in occupied.iter().enumerate() {
            if occ {
                sq[idx] = 0.0;
                feat[idx] = idx as u32;
            }
        }

        let max_len = *self.dims.iter().max().unwrap();
        let mut scratch = EnvelopeScratch::new(max_len);
        let [nx, ny, nz] = self.dims;
        // Each line is named by its first voxel along the axis.
        for start in (0..ny * nz).map(|jk| jk * nx) {
            scratch.transform_line(&mut sq, &mut feat, start, 1, nx);
        }
        for k in 0..nz {
            for i in 0..nx {
                scratch.transform_line(&mut sq, &mut feat, i + nx * ny * k, nx, ny);
            }
        }
        for start in 0..nx * ny {
            scratch.transform_line(&mut sq, &mut feat, start, nx * ny, nz);
        }
        feat
    }
}

/// Buffers for the 1-D lower-envelope transform.
struct EnvelopeScratch {
    f: Vec<f64>,
    feat_in: Vec<u32>,
    v: Vec<usize>,
    z: Vec<f64>,
}

impl EnvelopeScratch {
    fn new(len: usize) -> Self {
        Self {
            f: vec![0.0; len],
            feat_in: vec![0; len],
            v: vec![0; len],
            z: vec![0.0; len + 1],
        }
    }

    fn transform_line(&mut self, sq: &mut [f64], feat: &mut [u32], start: usize, stride: usize, len: usize) {
        for q in 0..len {
            self.f[q] = sq[start + q * stride];
            self.feat_in[q] = feat[start + q * stride];
        }
        let f = &self.f;
        let Some(first) = (0..len).find(|&q| f[q].is_finite()) else {
            return;
        };

        let v = &mut self.v;
        let z = &mut self.z;
        let mut k = 0usize;
        v[0] = first;
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for q in first + 1..len {
            if !f[q].is_finite() {
                continue;
            }
            let intersect = |p: usize| {
                ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
            };
            let mut s = intersect(v[k]);
            while s <= z[k] {
                k -= 1;
                s = intersect(v[k]);
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
        }

        let mut k = 0usize;
        for q in 0..len {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let p = v[k];
            let dq = q as f64 - p as f64;
            sq[start + q * stride] = dq * dq + f[p];
            feat[start + q * stride] = self.feat_in[p];
        }
    }
}

/// Map points sorted by the voxel that contains them, with CSR offsets over all voxels.
///
/// Points are stored relative to the grid origin in single precision, the
/// precision of the stored distances.
struct PointBuckets {
    occupied: Vec<bool>,
    offsets: Vec<u32>,
    points: Vec<[f32; 4]>,
}

impl PointBuckets {
    fn new(grid: &Grid, map: &[Point3]) -> Self {
        let voxel_of: Vec<usize> = map.iter().map(|p| grid.voxel_of(p)).collect();
        let mut offsets = vec![0u32; grid.len() + 1];
        for &v in &voxel_of {
            offsets[v + 1] += 1;
        }
        for v in 0..grid.len() {
            offsets[v + 1] += offsets[v];
        }
        let mut fill = offsets.clone();
        let mut points = vec![[0.0f32; 4]; map.len()];
        for (p, &v) in map.iter().zip(&voxel_of) {
            let local = p - grid.origin;
            points[fill[v] as usize] = [local.x as f32, local.y as f32, local.z as f32, 0.0];
            fill[v] += 1;
        }
        let occupied = offsets.windows(2).map(|w| w[1] > w[0]).collect();
        Self {
            occupied,
            offsets,
            points,
        }
    }

    /// Distance from `center` to the closest of the points in the 3x3x3 block of voxels around `feature`.
    fn nearest_around(&self, grid: &Grid, feature: usize, center: [f32; 3]) -> f32 {
        let [fi, fj, fk] = grid.coords(feature);
        let span = |c: usize, n: usize| c.saturating_sub(1)..=(c + 1).min(n - 1);
        let (i0, i1) = (fi.saturating_sub(1), (fi + 1).min(grid.dims[0] - 1));
        let mut best = f32::INFINITY;
        for k in span(fk, grid.dims[2]) {
            for j in span(fj, grid.dims[1]) {
                let row = grid.linear([0, j, k]);
                // The three voxels along x are contiguous in the sorted point array.
                let run = self.offsets[row + i0] as usize..self.offsets[row + i1 + 1] as usize;
                for q in &self.points[run] {
                    let (dx, dy, dz) = (q[0] - center[0], q[1] - center[1], q[2] - center[2]);
                    best = best.min(dx * dx + dy * dy + dz * dz);
                }
            }
        }
        best.sqrt()
    }
}
