//! Hexagonal cell lattice and uniform UE placement.
//!
//! Sites sit on a triangular lattice with spacing `isd_m`; each cell's
//! coverage area is the Voronoi hexagon around its site (inradius `isd/2`,
//! circumradius `isd/sqrt(3)`). Ring `r` adds `6*r` cells, so a grid with
//! `rings` rings holds `1 + 3*rings*(rings+1)` cells. Cell 0 is the center
//! cell; metrics are collected there while outer rings act as interference.

use crate::error::{Error, Result};
use crate::rng::{self, DOMAIN_DROP, DOMAIN_SHADOW};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Index into [`CellGrid::cells`].
pub type CellId = usize;
/// Global UE index across the whole drop.
pub type UeId = usize;

/// One site of the lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub id: CellId,
    pub x_m: f64,
    pub y_m: f64,
    /// Ring index, 0 for the center cell.
    pub ring: u32,
}

/// Hexagonal lattice of cells.
#[derive(Debug, Clone)]
pub struct CellGrid {
    isd_m: f64,
    rings: u32,
    cells: Vec<Cell>,
}

/// Closed-form cell count for a given number of rings.
pub fn cell_count_for_rings(rings: u32) -> usize {
    1 + 3 * rings as usize * (rings as usize + 1)
}

/// Unit vectors toward the six lattice neighbours (every 60 degrees).
const NEIGHBOR_DIRS: [(f64, f64); 6] = [
    (1.0, 0.0),
    (0.5, 0.866_025_403_784_438_6),
    (-0.5, 0.866_025_403_784_438_6),
    (-1.0, 0.0),
    (-0.5, -0.866_025_403_784_438_6),
    (0.5, -0.866_025_403_784_438_6),
];

impl CellGrid {
    /// Builds the lattice with the given inter-site distance and ring count.
    pub fn build(isd_m: f64, rings: u32) -> Result<Self> {
        if !(isd_m.is_finite() && isd_m > 0.0) {
            return Err(Error::invalid(format!(
                "inter-site distance must be positive, got {isd_m}"
            )));
        }
        if rings > 8 {
            return Err(Error::invalid(format!(
                "ring count {rings} exceeds the supported maximum of 8"
            )));
        }
        // Axial coordinates (q, r) map to the plane via basis vectors of
        // length isd; hex distance (|q|+|r|+|q+r|)/2 gives the ring.
        let r_i = rings as i64;
        let mut axial: Vec<(i64, i64, i64)> = Vec::new();
        for q in -r_i..=r_i {
            for r in -r_i..=r_i {
                let dist = (q.abs() + r.abs() + (q + r).abs()) / 2;
                if dist <= r_i {
                    axial.push((dist, q, r));
                }
            }
        }
        axial.sort_unstable();
        let sqrt3_half = 0.866_025_403_784_438_6;
        let cells = axial
            .iter()
            .enumerate()
            .map(|(id, &(dist, q, r))| Cell {
                id,
                x_m: isd_m * (q as f64 + r as f64 / 2.0),
                y_m: isd_m * (r as f64 * sqrt3_half),
                ring: dist as u32,
            })
            .collect();
        Ok(CellGrid {
            isd_m,
            rings,
            cells,
        })
    }

    pub fn isd_m(&self) -> f64 {
        self.isd_m
    }

    pub fn rings(&self) -> u32 {
        self.rings
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// True when the point lies in the cell's Voronoi hexagon.
    ///
    /// The hexagon is the intersection of the six half planes facing the
    /// lattice neighbours; its boundary (at isd/2 toward each neighbour) is
    /// counted as inside.
    pub fn contains(&self, cell: CellId, x_m: f64, y_m: f64) -> bool {
        let c = &self.cells[cell];
        let (dx, dy) = (x_m - c.x_m, y_m - c.y_m);
        let half = self.isd_m / 2.0;
        NEIGHBOR_DIRS
            .iter()
            .all(|&(ux, uy)| dx * ux + dy * uy <= half + 1e-9)
    }

    /// Planar distance from a point to the cell's site.
    pub fn distance_m(&self, cell: CellId, x_m: f64, y_m: f64) -> f64 {
        let c = &self.cells[cell];
        ((x_m - c.x_m).powi(2) + (y_m - c.y_m).powi(2)).sqrt()
    }
}

/// A set of dropped UEs with their static shadowing realizations.
#[derive(Debug, Clone)]
pub struct UeDrop {
    per_cell: u32,
    positions: Vec<(f64, f64)>,
    serving: Vec<CellId>,
    /// Shadowing in dB, indexed [ue][cell].
    shadow_db: Vec<Vec<f64>>,
}

impl UeDrop {
    pub fn per_cell(&self) -> u32 {
        self.per_cell
    }

    pub fn ue_count(&self) -> usize {
        self.positions.len()
    }

    pub fn position(&self, ue: UeId) -> (f64, f64) {
        self.positions[ue]
    }

    /// Cell the UE was dropped in; also its unicast serving cell.
    pub fn serving_cell(&self, ue: UeId) -> CellId {
        self.serving[ue]
    }

    /// Static shadowing between the UE and any cell, in dB.
    pub fn shadow_db(&self, ue: UeId, cell: CellId) -> f64 {
        self.shadow_db[ue][cell]
    }

    /// UE ids dropped in the given cell, in ascending order.
    pub fn ues_in_cell(&self, cell: CellId) -> Vec<UeId> {
        let n = self.per_cell as usize;
        (cell * n..(cell + 1) * n).collect()
    }
}

/// Drops `per_cell` UEs uniformly inside every cell's hexagon.
///
/// Positions come from one substream per cell and shadowing from one
/// substream per UE, so the layout for a given seed never depends on which
/// strategy consumes it. Shadowing is log-normal: Normal(0, sigma) in dB,
/// drawn independently per (UE, cell) link.
pub fn drop_ues(grid: &CellGrid, per_cell: u32, shadow_sigma_db: f64, seed: u64) -> Result<UeDrop> {
    if per_cell == 0 {
        return Err(Error::invalid("per_cell must be at least 1"));
    }
    if !(shadow_sigma_db.is_finite() && shadow_sigma_db >= 0.0) {
        return Err(Error::invalid(format!(
            "shadowing sigma must be non-negative, got {shadow_sigma_db}"
        )));
    }
    let n_cells = grid.cells().len();
    let half_x = grid.isd_m() / 2.0;
    let half_y = grid.isd_m() / 3f64.sqrt();
    let mut positions = Vec::with_capacity(n_cells * per_cell as usize);
    let mut serving = Vec::with_capacity(n_cells * per_cell as usize);
    for cell in grid.cells() {
        let mut stream = rng::substream(seed, &[DOMAIN_DROP, cell.id as u64]);
        for _ in 0..per_cell {
            // Rejection sampling from the bounding box stays uniform on the
            // hexagon; acceptance ratio is ~0.75 so this terminates fast.
            loop {
                let x = cell.x_m + stream.gen_range(-half_x..=half_x);
                let y = cell.y_m + stream.gen_range(-half_y..=half_y);
                if grid.contains(cell.id, x, y) {
                    positions.push((x, y));
                    serving.push(cell.id);
                    break;
                }
            }
        }
    }
    let normal = Normal::new(0.0, shadow_sigma_db.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::invalid(format!("shadowing distribution: {e}")))?;
    let mut shadow_db = Vec::with_capacity(positions.len());
    for ue in 0..positions.len() {
        let mut stream = rng::substream(seed, &[DOMAIN_SHADOW, ue as u64]);
        let row = if shadow_sigma_db == 0.0 {
            vec![0.0; n_cells]
        } else {
            (0..n_cells).map(|_| normal.sample(&mut stream)).collect()
        };
        shadow_db.push(row);
    }
    Ok(UeDrop {
        per_cell,
        positions,
        serving,
        shadow_db,
    })
}
