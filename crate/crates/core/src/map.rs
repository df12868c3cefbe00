//! The global mesh map: hash-map cell storage and layer fusion.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gp::{GpConfig, Layer, LayerKey};
use crate::io::{Axis, CellIndex};

/// Variances are floored at this in fusion weights to avoid division by zero
/// in the noise-free limit.
const VAR_FLOOR: f64 = 1e-12;

/// One voxel bucket: up to three layers keyed by axis.
#[derive(Clone, Debug)]
pub struct Cell {
    pub index: CellIndex,
    layers: [Option<Layer>; 3],
    pub points_seen: u64,
}

impl Cell {
    fn new(index: CellIndex) -> Self {
        Cell {
            index,
            layers: [None, None, None],
            points_seen: 0,
        }
    }

    pub fn layer(&self, axis: Axis) -> Option<&Layer> {
        self.layers[axis.index()].as_ref()
    }

    /// Layers in ascending axis order (X, Y, Z).
    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.layers.iter().filter_map(|l| l.as_ref())
    }

    pub fn layer_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_some()).count()
    }
}

/// Fusion behavior knobs; defaults follow the precision-weighted rule.
#[derive(Clone, Copy, Debug, Serialize, serde::Deserialize)]
pub struct FusionConfig {
    /// Scan vertices at or above this variance never update the map.
    pub sigma_update_sq: f64,
    /// Compatibility switch: weight predictions by variance instead of
    /// precision. Variance still follows the information-filter rule.
    pub literal_variance_weighting: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            sigma_update_sq: 1.0,
            literal_variance_weighting: false,
        }
    }
}

/// The global fused model: hash map from cell index to cell.
#[derive(Clone, Debug)]
pub struct MeshMap {
    cells: HashMap<CellIndex, Cell>,
    pub cell_size: f64,
    pub gp: GpConfig,
    pub fusion: FusionConfig,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct MapStats {
    pub cells: usize,
    pub layers: usize,
    pub vertices: usize,
    pub approx_bytes: usize,
}

impl MeshMap {
    pub fn new(cell_size: f64, gp: GpConfig) -> Self {
        MeshMap {
            cells: HashMap::new(),
            cell_size,
            gp,
            fusion: FusionConfig::default(),
        }
    }

    pub fn with_fusion(mut self, fusion: FusionConfig) -> Self {
        self.fusion = fusion;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, index: &CellIndex) -> Option<&Cell> {
        self.cells.get(index)
    }

    pub fn layer(&self, key: &LayerKey) -> Option<&Layer> {
        self.cells.get(&key.0).and_then(|c| c.layer(key.1))
    }

    /// Cells in sorted index order, for deterministic output passes.
    pub fn iter_sorted(&self) -> impl Iterator<Item = (&CellIndex, &Cell)> {
        let mut keys: Vec<&CellIndex> = self.cells.keys().collect();
        keys.sort();
        keys.into_iter().map(|k| (k, &self.cells[k]))
    }

    /// Bookkeeping: remember how many raw points a cell has received.
    pub fn record_points(&mut self, index: CellIndex, count: usize) {
        self.cells
            .entry(index)
            .or_insert_with(|| Cell::new(index))
            .points_seen += count as u64;
    }

    /// Inserts new layers or fuses them into existing ones. Cells are never
    /// deleted. Layers are applied in sorted (cell, axis) order.
    pub fn integrate_scan(&mut self, mut scan_layers: Vec<Layer>) {
        scan_layers.sort_by_key(|l| l.key());
        for scan_layer in scan_layers {
            let cell = self
                .cells
                .entry(scan_layer.cell)
                .or_insert_with(|| Cell::new(scan_layer.cell));
            let slot = &mut cell.layers[scan_layer.axis.index()];
            match slot {
                None => *slot = Some(scan_layer),
                Some(map_layer) => {
                    let fused = fuse_layer(
                        map_layer,
                        &scan_layer,
                        self.fusion.sigma_update_sq,
                        self.fusion.literal_variance_weighting,
                    )
                    .expect("grids of one cell/axis always agree");
                    *slot = Some(fused);
                }
            }
        }
    }

    pub fn stats(&self) -> MapStats {
        let mut layers = 0;
        let mut vertices = 0;
        for cell in self.cells.values() {
            for layer in cell.layers() {
                layers += 1;
                vertices += layer.grid.len();
            }
        }
        MapStats {
            cells: self.cells.len(),
            layers,
            vertices,
            // Two stored f64 scalars per vertex (prediction + variance) plus
            // per-layer and per-cell bookkeeping overhead.
            approx_bytes: vertices * 16 + layers * 96 + self.cells.len() * 72,
        }
    }
}

/// Fuses one scan layer into its map layer, per grid point:
/// scan variance at or above `sigma_update_sq` leaves the map entry
/// untouched; a below-threshold scan entry replaces an above-threshold map
/// entry; otherwise the entries combine by precision weighting with the
/// information-filter variance `1/(1/σ_m² + 1/σ_s²)`.
pub fn fuse_layer(
    map_layer: &Layer,
    scan_layer: &Layer,
    sigma_update_sq: f64,
    literal_variance_weighting: bool,
) -> Result<Layer> {
    if map_layer.cell != scan_layer.cell
        || map_layer.axis != scan_layer.axis
        || map_layer.grid != scan_layer.grid
    {
        return Err(Error::GridMismatch(format!(
            "cannot fuse ({:?}, {:?}) into ({:?}, {:?})",
            scan_layer.cell, scan_layer.axis, map_layer.cell, map_layer.axis
        )));
    }
    let mut fused = map_layer.clone();
    let mut changed = false;
    for j in 0..fused.grid.len() {
        let scan_var = scan_layer.variances[j];
        if scan_var >= sigma_update_sq {
            continue;
        }
        let map_var = fused.variances[j];
        if map_var >= sigma_update_sq {
            fused.predictions[j] = scan_layer.predictions[j];
            fused.variances[j] = scan_var;
            changed = true;
            continue;
        }
        let (f_m, f_s) = (fused.predictions[j], scan_layer.predictions[j]);
        let (var_m, var_s) = (map_var.max(VAR_FLOOR), scan_var.max(VAR_FLOOR));
        fused.predictions[j] = if literal_variance_weighting {
            (f_m * var_m + f_s * var_s) / (var_m + var_s)
        } else {
            (f_m / var_m + f_s / var_s) / (1.0 / var_m + 1.0 / var_s)
        };
        fused.variances[j] = (1.0 / (1.0 / var_m + 1.0 / var_s)).min(var_m).min(var_s);
        changed = true;
    }
    if changed {
        fused.observation_count = map_layer.observation_count + 1;
    }
    Ok(fused)
}
