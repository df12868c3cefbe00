//! Triangle-face construction over layer grids, smoothed normals, and
//! whole-map mesh extraction.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::gp::Layer;
use crate::io::{Axis, CellIndex};
use crate::map::MeshMap;

/// Cross-product norms at or below this reject a face as degenerate.
const DEGENERATE_EPS: f64 = 1e-12;

/// Border vertices of adjacent layers merge when closer than this.
const MERGE_EPS: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    /// Posterior variance per vertex (exported as PLY `quality`).
    pub variances: Vec<f64>,
    pub faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Triangulates one layer grid with a fixed diagonal split.
///
/// Each grid square `(r,c)..(r+1,c+1)` yields two triangles along the
/// diagonal `(r,c)–(r+1,c+1)`; a triangle is emitted only when all three
/// vertices are valid. Winding is counter-clockwise seen from the +axis
/// side. Indices are layer-local (row-major).
pub fn connect_layer(layer: &Layer, sigma_match_sq: f64) -> Vec<[u32; 3]> {
    let g = layer.grid.g;
    let mut faces = Vec::new();
    let valid = |iu: usize, iv: usize| layer.is_valid(layer.grid.index(iu, iv), sigma_match_sq);
    for iu in 0..g - 1 {
        for iv in 0..g - 1 {
            let j00 = layer.grid.index(iu, iv) as u32;
            let j10 = layer.grid.index(iu + 1, iv) as u32;
            let j01 = layer.grid.index(iu, iv + 1) as u32;
            let j11 = layer.grid.index(iu + 1, iv + 1) as u32;
            if valid(iu, iv) && valid(iu + 1, iv) && valid(iu + 1, iv + 1) {
                faces.push([j00, j10, j11]);
            }
            if valid(iu, iv) && valid(iu + 1, iv + 1) && valid(iu, iv + 1) {
                faces.push([j00, j11, j01]);
            }
        }
    }
    faces
}

/// Unit normal of a triangle, oriented by winding.
pub fn face_normal(v0: &Point3, v1: &Point3, v2: &Point3) -> Result<Vector3<f64>> {
    let cross = (v1 - v0).cross(&(v2 - v0));
    let norm = cross.norm();
    if norm <= DEGENERATE_EPS {
        return Err(Error::DegenerateFace);
    }
    Ok(cross / norm)
}

/// Per-vertex sums of unnormalized face normals for one layer.
///
/// Shared by normal smoothing and data association: `accum[j]` is the sum of
/// cross products over valid faces incident to grid vertex `j`, and
/// `counts[j]` the number of such faces.
#[derive(Clone, Debug)]
pub struct LayerNormals {
    pub faces: Vec<[u32; 3]>,
    pub accum: Vec<Vector3<f64>>,
    pub counts: Vec<u32>,
}

pub fn layer_normals(layer: &Layer, sigma_match_sq: f64) -> LayerNormals {
    let faces = connect_layer(layer, sigma_match_sq);
    let n = layer.grid.len();
    let mut accum = vec![Vector3::zeros(); n];
    let mut counts = vec![0u32; n];
    for f in &faces {
        let v0 = layer.vertex_position(f[0] as usize);
        let v1 = layer.vertex_position(f[1] as usize);
        let v2 = layer.vertex_position(f[2] as usize);
        let cross = (v1 - v0).cross(&(v2 - v0));
        // Grid squares project to fixed right triangles in the location
        // plane, so layer faces are never degenerate.
        for &i in f {
            accum[i as usize] += cross;
            counts[i as usize] += 1;
        }
    }
    LayerNormals {
        faces,
        accum,
        counts,
    }
}

/// Smoothed normal at a grid vertex: the normalized sum of the incident
/// valid faces' cross products, oriented toward the sensor origin.
pub fn smoothed_normal(
    layer: &Layer,
    grid_index: usize,
    normals: &LayerNormals,
    sensor: &Point3,
) -> Result<Vector3<f64>> {
    if normals.counts[grid_index] == 0 {
        return Err(Error::NoValidFace);
    }
    let sum = normals.accum[grid_index];
    let norm = sum.norm();
    if norm <= DEGENERATE_EPS {
        return Err(Error::NoValidFace);
    }
    let mut n = sum / norm;
    let v = layer.vertex_position(grid_index);
    if n.dot(&(sensor - v)) < 0.0 {
        n = -n;
    }
    Ok(n)
}

/// Flattens every valid vertex and face in the map into one indexed mesh.
///
/// Border vertices shared between adjacent same-axis layers merge when
/// their 3-D positions agree within 1e-6 m; otherwise both are kept and no
/// face spans the gap. Output order is (cell index, axis, grid position).
pub fn extract_mesh(map: &MeshMap, sigma_match_sq: f64) -> TriangleMesh {
    let mut mesh = TriangleMesh::default();
    // Global index of each emitted (cell, axis, grid) vertex, including
    // aliases created by border merging.
    let mut emitted: HashMap<(CellIndex, Axis, u32), u32> = HashMap::new();

    for (cell, cell_data) in map.iter_sorted() {
        for layer in cell_data.layers() {
            let g = layer.grid.g;
            let faces = connect_layer(layer, sigma_match_sq);
            let mut local_to_global: HashMap<u32, u32> = HashMap::new();
            for j in 0..layer.grid.len() {
                if !layer.is_valid(j, sigma_match_sq) {
                    continue;
                }
                let pos = layer.vertex_position(j);
                let mut global = None;
                // Border vertices may coincide with an already-emitted
                // vertex of a neighboring same-axis layer.
                for (ncell, nj) in border_aliases(layer, j, g) {
                    if let Some(&idx) = emitted.get(&(ncell, layer.axis, nj as u32)) {
                        if (mesh.vertices[idx as usize] - pos).norm() <= MERGE_EPS {
                            global = Some(idx);
                            break;
                        }
                    }
                }
                let idx = global.unwrap_or_else(|| {
                    let idx = mesh.vertices.len() as u32;
                    mesh.vertices.push(pos);
                    mesh.variances.push(layer.variances[j]);
                    idx
                });
                emitted.insert((*cell, layer.axis, j as u32), idx);
                local_to_global.insert(j as u32, idx);
            }
            for f in faces {
                mesh.faces.push([
                    local_to_global[&f[0]],
                    local_to_global[&f[1]],
                    local_to_global[&f[2]],
                ]);
            }
        }
    }
    mesh
}

/// Positions in neighboring cells that share the world location of grid
/// vertex `j` (border and corner vertices only).
fn border_aliases(layer: &Layer, j: usize, g: usize) -> Vec<(CellIndex, usize)> {
    let (iu, iv) = layer.grid.position(j);
    let (ua, va) = layer.axis.location_axes();
    let mut du_opts = vec![0i64];
    let mut dv_opts = vec![0i64];
    if iu == 0 {
        du_opts.push(-1);
    }
    if iu == g - 1 {
        du_opts.push(1);
    }
    if iv == 0 {
        dv_opts.push(-1);
    }
    if iv == g - 1 {
        dv_opts.push(1);
    }
    let mut out = Vec::new();
    for &du in &du_opts {
        for &dv in &dv_opts {
            if du == 0 && dv == 0 {
                continue;
            }
            let ncell = layer.cell.offset(ua, du).offset(va, dv);
            let niu = if du == 0 {
                iu
            } else if du < 0 {
                g - 1
            } else {
                0
            };
            let niv = if dv == 0 {
                iv
            } else if dv < 0 {
                g - 1
            } else {
                0
            };
            out.push((ncell, niu * g + niv));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{GpConfig, Layer, LayerGrid};
    use crate::map::MeshMap;

    fn flat_layer(cell: CellIndex, axis: Axis, height: f64, cell_size: f64, g: usize) -> Layer {
        let grid = LayerGrid::new(&cell, axis, cell_size, g);
        Layer {
            axis,
            cell,
            grid,
            predictions: vec![height; g * g],
            variances: vec![0.01; g * g],
            observation_count: 1,
        }
    }

    #[test]
    fn connect_full_grid_counts() {
        let layer = flat_layer(CellIndex::new(0, 0, 0), Axis::Z, 0.5, 1.5, 6);
        let faces = connect_layer(&layer, 0.5);
        assert_eq!(faces.len(), 50);
    }

    #[test]
    fn connect_all_invalid_is_empty() {
        let mut layer = flat_layer(CellIndex::new(0, 0, 0), Axis::Z, 0.5, 1.5, 6);
        for v in layer.variances.iter_mut() {
            *v = 0.9;
        }
        assert!(connect_layer(&layer, 0.5).is_empty());
    }

    #[test]
    fn connect_one_off_diagonal_corner_invalid() {
        // Corner (0, g−1) sits on only one triangle of the fixed split.
        let mut layer = flat_layer(CellIndex::new(0, 0, 0), Axis::Z, 0.5, 1.5, 6);
        let j = layer.grid.index(0, 5);
        layer.variances[j] = 0.9;
        assert_eq!(connect_layer(&layer, 0.5).len(), 49);

        // A diagonal corner (0,0) sits on both triangles of its square.
        let mut layer = flat_layer(CellIndex::new(0, 0, 0), Axis::Z, 0.5, 1.5, 6);
        layer.variances[0] = 0.9;
        assert_eq!(connect_layer(&layer, 0.5).len(), 48);
    }

    #[test]
    fn face_normal_cases() {
        let n = face_normal(
            &Point3::new(0.0, 0.0, 0.0),
            &Point3::new(1.0, 0.0, 0.0),
            &Point3::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        assert!((n - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);

        // Swapped winding negates.
        let m = face_normal(
            &Point3::new(0.0, 0.0, 0.0),
            &Point3::new(0.0, 1.0, 0.0),
            &Point3::new(1.0, 0.0, 0.0),
        )
        .unwrap();
        assert!((m + n).norm() < 1e-15);

        // Collinear points are degenerate.
        assert!(matches!(
            face_normal(
                &Point3::new(0.0, 0.0, 0.0),
                &Point3::new(1.0, 1.0, 1.0),
                &Point3::new(2.0, 2.0, 2.0),
            ),
            Err(Error::DegenerateFace)
        ));
    }

    #[test]
    fn winding_faces_positive_axis_all_axes() {
        for axis in Axis::ALL {
            let layer = flat_layer(CellIndex::new(0, 0, 0), axis, 0.5, 1.5, 6);
            let faces = connect_layer(&layer, 0.5);
            for f in faces {
                let n = face_normal(
                    &layer.vertex_position(f[0] as usize),
                    &layer.vertex_position(f[1] as usize),
                    &layer.vertex_position(f[2] as usize),
                )
                .unwrap();
                let mut expected = Vector3::zeros();
                expected[axis.index()] = 1.0;
                assert!((n - expected).norm() < 1e-12, "axis {axis:?}");
            }
        }
    }

    #[test]
    fn smoothed_normal_flat_layer_toward_sensor() {
        let layer = flat_layer(CellIndex::new(0, 0, 0), Axis::Z, 0.5, 1.5, 6);
        let normals = layer_normals(&layer, 0.5);
        let j = layer.grid.index(3, 3);

        let above = Point3::new(0.7, 0.7, 10.0);
        let n = smoothed_normal(&layer, j, &normals, &above).unwrap();
        assert!((n - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);

        let below = Point3::new(0.7, 0.7, -10.0);
        let n = smoothed_normal(&layer, j, &normals, &below).unwrap();
        assert!((n - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn smoothed_normal_ridge_between_two_planes() {
        // Grid rows iu < 3 at height 0, a ridge rising along u afterwards:
        // slope in +u for iu ≥ 3. Vertex at the crease line sees faces of
        // both planes; its smoothed normal is the (area-weighted) average.
        let cell = CellIndex::new(0, 0, 0);
        let grid = LayerGrid::new(&cell, Axis::Z, 1.5, 6);
        let slope = 1.0;
        let predictions: Vec<f64> = (0..36)
            .map(|j| {
                let (iu, _) = grid.position(j);
                if iu <= 3 {
                    0.0
                } else {
                    slope * ((iu - 3) as f64 * grid.pitch)
                }
            })
            .collect();
        let layer = Layer {
            axis: Axis::Z,
            cell,
            grid,
            predictions,
            variances: vec![0.01; 36],
            observation_count: 1,
        };
        let normals = layer_normals(&layer, 0.5);
        let j = grid.index(3, 3);
        let sensor = Point3::new(0.7, 0.7, 50.0);
        let n = smoothed_normal(&layer, j, &normals, &sensor).unwrap();

        // Flat-plane normal and ramp normal, equal unnormalized areas on
        // both sides of the crease (3 faces each).
        let n1 = Vector3::new(0.0, 0.0, 1.0);
        let n2 = Vector3::new(-slope, 0.0, 1.0);
        let expected = (n1 * 3.0 + n2 * 3.0).normalize();
        assert!((n - expected).norm() < 1e-12, "{n:?} vs {expected:?}");
    }

    #[test]
    fn smoothed_normal_isolated_vertex_errors() {
        let mut layer = flat_layer(CellIndex::new(0, 0, 0), Axis::Z, 0.5, 1.5, 6);
        // Invalidate everything except one interior vertex: no face survives.
        for j in 0..36 {
            if j != layer.grid.index(3, 3) {
                layer.variances[j] = 0.9;
            }
        }
        let normals = layer_normals(&layer, 0.5);
        assert!(matches!(
            smoothed_normal(&layer, layer.grid.index(3, 3), &normals, &Point3::zeros()),
            Err(Error::NoValidFace)
        ));
    }

    #[test]
    fn extract_empty_map() {
        let map = MeshMap::new(1.5, GpConfig::default());
        let mesh = extract_mesh(&map, 0.5);
        assert!(mesh.is_empty());
        assert!(mesh.faces.is_empty());
    }

    #[test]
    fn extract_single_cell_counts() {
        let mut map = MeshMap::new(1.5, GpConfig::default());
        map.integrate_scan(vec![flat_layer(CellIndex::new(0, 0, 0), Axis::Z, 0.5, 1.5, 6)]);
        let mesh = extract_mesh(&map, 0.5);
        assert_eq!(mesh.vertices.len(), 36);
        assert_eq!(mesh.faces.len(), 50);
    }

    #[test]
    fn extract_merges_shared_border() {
        let mut map = MeshMap::new(1.5, GpConfig::default());
        map.integrate_scan(vec![
            flat_layer(CellIndex::new(0, 0, 0), Axis::Z, 0.5, 1.5, 6),
            flat_layer(CellIndex::new(1, 0, 0), Axis::Z, 0.5, 1.5, 6),
        ]);
        let mesh = extract_mesh(&map, 0.5);
        assert_eq!(mesh.faces.len(), 100);
        assert_eq!(mesh.vertices.len(), 66, "72 − 6 shared border vertices");
    }

    #[test]
    fn extract_keeps_mismatched_border() {
        let mut map = MeshMap::new(1.5, GpConfig::default());
        map.integrate_scan(vec![
            flat_layer(CellIndex::new(0, 0, 0), Axis::Z, 0.5, 1.5, 6),
            flat_layer(CellIndex::new(1, 0, 0), Axis::Z, 0.7, 1.5, 6),
        ]);
        let mesh = extract_mesh(&map, 0.5);
        assert_eq!(mesh.faces.len(), 100);
        assert_eq!(mesh.vertices.len(), 72, "prediction gap prevents merging");
    }

    #[test]
    fn no_face_references_invalid_vertex() {
        let mut layer = flat_layer(CellIndex::new(0, 0, 0), Axis::Z, 0.5, 1.5, 6);
        for j in [0usize, 7, 18, 35, 12] {
            layer.variances[j] = 0.8;
        }
        let sigma = 0.5;
        let faces = connect_layer(&layer, sigma);
        for f in &faces {
            for &i in f {
                assert!(layer.variances[i as usize] < sigma);
            }
        }
    }

    #[test]
    fn triangulation_is_bitwise_deterministic() {
        let layer = flat_layer(CellIndex::new(2, -1, 4), Axis::Y, -3.25, 1.6, 6);
        assert_eq!(connect_layer(&layer, 0.5), connect_layer(&layer, 0.5));
    }
}
