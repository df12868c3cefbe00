//! Point-cloud and pose I/O, down-sampling, and cell bucketing.

pub mod ply;
pub mod trajectory;

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// One LiDAR scan in the sensor frame.
#[derive(Clone, Debug, Default)]
pub struct RawScan {
    pub points: Vec<Point3>,
    pub frame_index: usize,
    pub timestamp: Option<f64>,
}

impl RawScan {
    pub fn new(points: Vec<Point3>) -> Self {
        RawScan {
            points,
            frame_index: 0,
            timestamp: None,
        }
    }
}

/// Coordinate axis; also indexes a layer's prediction direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X = 0,
    Y = 1,
    Z = 2,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
    /// Tie-break order for axis selection.
    pub const SELECTION_ORDER: [Axis; 3] = [Axis::Z, Axis::X, Axis::Y];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The two non-predicted axes, cyclic: X→(Y,Z), Y→(Z,X), Z→(X,Y).
    pub fn location_axes(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::Z, Axis::X),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }

    pub fn component(self, p: &Point3) -> f64 {
        p[self.index()]
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// Integer 3-D cell coordinates: `floor(coordinate / cell_size)` per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub ix: i64,
    pub iy: i64,
    pub iz: i64,
}

impl CellIndex {
    pub fn new(ix: i64, iy: i64, iz: i64) -> Self {
        CellIndex { ix, iy, iz }
    }

    pub fn of_point(p: &Point3, cell_size: f64) -> Self {
        CellIndex {
            ix: (p.x / cell_size).floor() as i64,
            iy: (p.y / cell_size).floor() as i64,
            iz: (p.z / cell_size).floor() as i64,
        }
    }

    /// Lower corner of the cell in world coordinates.
    pub fn min_corner(&self, cell_size: f64) -> Point3 {
        Point3::new(
            self.ix as f64 * cell_size,
            self.iy as f64 * cell_size,
            self.iz as f64 * cell_size,
        )
    }

    pub fn component(&self, axis: Axis) -> i64 {
        match axis {
            Axis::X => self.ix,
            Axis::Y => self.iy,
            Axis::Z => self.iz,
        }
    }

    /// Neighbor `d` cells away along `axis`.
    pub fn offset(&self, axis: Axis, d: i64) -> Self {
        let mut out = *self;
        match axis {
            Axis::X => out.ix += d,
            Axis::Y => out.iy += d,
            Axis::Z => out.iz += d,
        }
        out
    }
}

/// Reads a KITTI Velodyne `.bin` scan: packed little-endian `f32` records
/// of (x, y, z, reflectance). Reflectance is discarded; non-finite points
/// are dropped.
pub fn read_kitti_bin(path: &Path) -> Result<RawScan> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 16 != 0 {
        return Err(Error::Format(format!(
            "{}: byte length {} not divisible by 16",
            path.display(),
            bytes.len()
        )));
    }
    let mut points = Vec::with_capacity(bytes.len() / 16);
    for rec in bytes.chunks_exact(16) {
        let x = f32::from_le_bytes([rec[0], rec[1], rec[2], rec[3]]) as f64;
        let y = f32::from_le_bytes([rec[4], rec[5], rec[6], rec[7]]) as f64;
        let z = f32::from_le_bytes([rec[8], rec[9], rec[10], rec[11]]) as f64;
        if x.is_finite() && y.is_finite() && z.is_finite() {
            points.push(Point3::new(x, y, z));
        }
    }
    Ok(RawScan::new(points))
}

/// Writes a scan in KITTI Velodyne `.bin` layout with zero reflectance.
pub fn write_kitti_bin(scan: &RawScan, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(scan.points.len() * 16);
    for p in &scan.points {
        bytes.extend_from_slice(&(p.x as f32).to_le_bytes());
        bytes.extend_from_slice(&(p.y as f32).to_le_bytes());
        bytes.extend_from_slice(&(p.z as f32).to_le_bytes());
        bytes.extend_from_slice(&0f32.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Keeps at most one point per `res`-sized voxel: the first in input order.
pub fn downsample(scan: &RawScan, res: f64) -> Result<RawScan> {
    if !(res > 0.0) {
        return Err(Error::InvalidParam(format!(
            "downsample resolution must be > 0, got {res}"
        )));
    }
    let mut seen: HashMap<(i64, i64, i64), ()> = HashMap::with_capacity(scan.points.len());
    let mut out = Vec::new();
    for p in &scan.points {
        let key = (
            (p.x / res).floor() as i64,
            (p.y / res).floor() as i64,
            (p.z / res).floor() as i64,
        );
        if seen.insert(key, ()).is_none() {
            out.push(*p);
        }
    }
    Ok(RawScan {
        points: out,
        frame_index: scan.frame_index,
        timestamp: scan.timestamp,
    })
}

/// Voxel down-sampling by centroid, ordered by first voxel encounter.
pub fn downsample_centroid(scan: &RawScan, res: f64) -> Result<RawScan> {
    if !(res > 0.0) {
        return Err(Error::InvalidParam(format!(
            "downsample resolution must be > 0, got {res}"
        )));
    }
    let mut acc: HashMap<(i64, i64, i64), (Point3, usize, usize)> = HashMap::new();
    let mut order = Vec::new();
    for p in &scan.points {
        let key = (
            (p.x / res).floor() as i64,
            (p.y / res).floor() as i64,
            (p.z / res).floor() as i64,
        );
        match acc.get_mut(&key) {
            Some((sum, n, _)) => {
                *sum += *p;
                *n += 1;
            }
            None => {
                acc.insert(key, (*p, 1, order.len()));
                order.push(key);
            }
        }
    }
    let points = order
        .iter()
        .map(|k| {
            let (sum, n, _) = acc[k];
            sum / n as f64
        })
        .collect();
    Ok(RawScan {
        points,
        frame_index: scan.frame_index,
        timestamp: scan.timestamp,
    })
}

/// Drops points outside `[min_range, max_range]` from the sensor origin.
pub fn filter_range(scan: &RawScan, min_range: f64, max_range: f64) -> RawScan {
    let points = scan
        .points
        .iter()
        .filter(|p| {
            let r = p.norm();
            r >= min_range && r <= max_range
        })
        .copied()
        .collect();
    RawScan {
        points,
        frame_index: scan.frame_index,
        timestamp: scan.timestamp,
    }
}

/// Buckets world-frame points into cells by floor division. A coordinate
/// exactly on a boundary belongs to the upper cell.
pub fn assign_to_cells(
    points: &[Point3],
    cell_size: f64,
) -> Result<BTreeMap<CellIndex, Vec<Point3>>> {
    if !(cell_size > 0.0) {
        return Err(Error::InvalidParam(format!(
            "cell size must be > 0, got {cell_size}"
        )));
    }
    let mut map: BTreeMap<CellIndex, Vec<Point3>> = BTreeMap::new();
    for p in points {
        map.entry(CellIndex::of_point(p, cell_size))
            .or_default()
            .push(*p);
    }
    Ok(map)
}

/// Numbered scan files (`<digits>.<ext>`) in a directory, sorted numerically.
pub fn list_scan_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some(extension) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if let Ok(n) = stem.parse::<u64>() {
                files.push((n, path));
            }
        }
    }
    files.sort();
    Ok(files.into_iter().map(|(_, p)| p).collect())
}
