//! Regular honeycomb mesh: geometry, adjacency, node numbering and
//! boundary/interior classification.
//!
//! Cells are pointy-top regular hexagons with circumradius `cs`, laid out in
//! offset rows: horizontal pitch `sqrt(3)*cs`, vertical pitch `1.5*cs`, odd
//! rows shifted right by half a pitch. Cell ids are row-major
//! (`id = row * n_cols + col`). Shared nodes are deduplicated.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Neighbor directions in cyclic order: east first, then counter-clockwise.
///
/// Direction `m` points at angle `60*m` degrees. The edge shared with
/// neighbor `m` connects local vertices `(m + 5) % 6` and `m`; vertex `k`
/// (at angle `30 + 60*k` degrees) is shared with neighbors `k` and
/// `(k + 1) % 6`.
pub const N_DIRS: usize = 6;

#[derive(Debug, Clone)]
pub struct HexCell {
    pub id: usize,
    pub row: usize,
    pub col: usize,
    pub centroid: [f64; 2],
    /// Vertex node ids, counter-clockwise from the vertex at 30 degrees.
    pub node_ids: [usize; 6],
}

#[derive(Debug, Clone)]
pub struct HexGrid {
    n_cols: usize,
    n_rows: usize,
    cs: f64,
    cells: Vec<HexCell>,
    nodes: Vec<[f64; 2]>,
    /// Per-cell neighbor ids in the fixed cyclic order; `None` for off-grid.
    neighbor_slots: Vec<[Option<u32>; 6]>,
    /// Number of cells incident to each node (3 interior, less on the rim).
    node_cell_count: Vec<u8>,
}

impl HexGrid {
    pub fn new(n_cols: usize, n_rows: usize, cs: f64) -> Result<Self> {
        if n_cols == 0 || n_rows == 0 {
            return Err(Error::invalid(format!(
                "grid dimensions must be at least 1x1, got {n_cols}x{n_rows}"
            )));
        }
        if !(cs > 0.0) || !cs.is_finite() {
            return Err(Error::invalid(format!("cell size must be positive, got {cs}")));
        }

        let n_cells = n_cols * n_rows;
        let sx = 0.5 * 3f64.sqrt() * cs; // node lattice step in x
        let sy = 0.5 * cs; // node lattice step in y

        // Vertex offsets on the integer node lattice, CCW from 30 degrees.
        const VERT_KEYS: [(i64, i64); 6] = [(1, 1), (0, 2), (-1, 1), (-1, -1), (0, -2), (1, -1)];

        let mut nodes: Vec<[f64; 2]> = Vec::new();
        let mut node_cell_count: Vec<u8> = Vec::new();
        let mut key_to_node: HashMap<(i64, i64), usize> = HashMap::new();
        let mut cells = Vec::with_capacity(n_cells);

        for row in 0..n_rows {
            for col in 0..n_cols {
                let id = row * n_cols + col;
                let base = (2 * col as i64 + (row as i64 & 1), 3 * row as i64);
                let mut node_ids = [0usize; 6];
                for (k, (dx, dy)) in VERT_KEYS.iter().enumerate() {
                    let key = (base.0 + dx, base.1 + dy);
                    let nid = *key_to_node.entry(key).or_insert_with(|| {
                        nodes.push([key.0 as f64 * sx, key.1 as f64 * sy]);
                        node_cell_count.push(0);
                        nodes.len() - 1
                    });
                    node_cell_count[nid] += 1;
                    node_ids[k] = nid;
                }
                cells.push(HexCell {
                    id,
                    row,
                    col,
                    centroid: [base.0 as f64 * sx, base.1 as f64 * sy],
                    node_ids,
                });
            }
        }

        let mut neighbor_slots = vec![[None; 6]; n_cells];
        for row in 0..n_rows {
            for col in 0..n_cols {
                let id = row * n_cols + col;
                let r = row as i64;
                let c = col as i64;
                // E, NE, NW, W, SW, SE for this row parity.
                let offs: [(i64, i64); 6] = if row % 2 == 0 {
                    [(0, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0)]
                } else {
                    [(0, 1), (1, 1), (1, 0), (0, -1), (-1, 0), (-1, 1)]
                };
                for (m, (dr, dc)) in offs.iter().enumerate() {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr >= 0 && nr < n_rows as i64 && nc >= 0 && nc < n_cols as i64 {
                        neighbor_slots[id][m] = Some((nr as usize * n_cols + nc as usize) as u32);
                    }
                }
            }
        }

        Ok(HexGrid {
            n_cols,
            n_rows,
            cs,
            cells,
            nodes,
            neighbor_slots,
            node_cell_count,
        })
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn cs(&self) -> f64 {
        self.cs
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn cells(&self) -> &[HexCell] {
        &self.cells
    }

    pub fn cell(&self, id: usize) -> &HexCell {
        &self.cells[id]
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn centroid(&self, id: usize) -> [f64; 2] {
        self.cells[id].centroid
    }

    /// Neighbor ids in slot order (east, then counter-clockwise); `None`
    /// marks an off-grid direction.
    pub fn neighbor_slots(&self, id: usize) -> &[Option<u32>; 6] {
        &self.neighbor_slots[id]
    }

    /// Existing neighbors of `id` in the fixed cyclic order.
    pub fn neighbors(&self, id: usize) -> Result<Vec<usize>> {
        if id >= self.cells.len() {
            return Err(Error::OutOfRange(format!(
                "cell id {id} out of range (Ncells = {})",
                self.cells.len()
            )));
        }
        Ok(self.neighbor_slots[id]
            .iter()
            .flatten()
            .map(|&n| n as usize)
            .collect())
    }

    /// A boundary cell has fewer than six neighbors.
    pub fn is_boundary_cell(&self, id: usize) -> bool {
        self.neighbor_slots[id].iter().any(|n| n.is_none())
    }

    /// True for nodes on the outer rim of the mesh (incident to < 3 cells).
    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.node_cell_count[node] < 3
    }

    /// Axis-aligned bounding box of all nodes, as (min, max).
    pub fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for n in &self.nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(n[k]);
                hi[k] = hi[k].max(n[k]);
            }
        }
        (lo, hi)
    }

    /// Nearest node to a point (ties broken by lowest id).
    pub fn nearest_node(&self, p: [f64; 2]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n[0] - p[0]).powi(2) + (n[1] - p[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// All node ids inside an axis-aligned box `[x0, y0, x1, y1]`.
    pub fn nodes_in_box(&self, bx: [f64; 4]) -> Vec<usize> {
        let eps = 1e-9 * self.cs.max(1.0);
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| {
                n[0] >= bx[0] - eps && n[0] <= bx[2] + eps && n[1] >= bx[1] - eps && n[1] <= bx[3] + eps
            })
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_dimensions() {
        assert!(HexGrid::new(0, 4, 1.0).is_err());
        assert!(HexGrid::new(4, 0, 1.0).is_err());
        assert!(HexGrid::new(4, 4, 0.0).is_err());
        assert!(HexGrid::new(4, 4, -1.0).is_err());
    }

    #[test]
    fn single_cell_grid() {
        let g = HexGrid::new(1, 1, 1.0).unwrap();
        assert_eq!(g.n_cells(), 1);
        assert_eq!(g.n_nodes(), 6);
        assert!(g.neighbors(0).unwrap().is_empty());
        assert!(g.is_boundary_cell(0));
    }

    #[test]
    fn benchmark_mesh_extent() {
        let g = HexGrid::new(150, 80, 0.38).unwrap();
        assert_eq!(g.n_cells(), 12000);
        let (lo, hi) = g.bbox();
        let w = hi[0] - lo[0];
        let h = hi[1] - lo[1];
        // Pitch formulas give 150*sqrt(3)*0.38 = 98.7 and 80*1.5*0.38 = 45.6;
        // the node extent exceeds the centroid span by at most one cell.
        let w_pitch: f64 = 150.0 * 3f64.sqrt() * 0.38;
        let h_pitch: f64 = 80.0 * 1.5 * 0.38;
        assert!((w_pitch - 98.7).abs() < 0.1, "w_pitch = {w_pitch}");
        assert!((h_pitch - 45.6).abs() < 0.1, "h_pitch = {h_pitch}");
        assert!(w >= w_pitch - 1e-9 && w <= w_pitch + 2.0 * 0.38);
        assert!(h >= h_pitch - 1e-9 && h <= h_pitch + 2.0 * 0.38);
    }

    #[test]
    fn two_by_two_corner_neighbors() {
        let g = HexGrid::new(2, 2, 1.0).unwrap();
        assert_eq!(g.n_cells(), 4);
        let counts: Vec<usize> = (0..4).map(|i| g.neighbors(i).unwrap().len()).collect();
        // Corner cells see 2 or 3 neighbors depending on offset parity.
        assert_eq!(counts, vec![2, 3, 3, 2]);
    }

    #[test]
    fn adjacency_is_symmetric() {
        let g = HexGrid::new(5, 5, 0.7).unwrap();
        for i in 0..g.n_cells() {
            for j in g.neighbors(i).unwrap() {
                assert!(
                    g.neighbors(j).unwrap().contains(&i),
                    "asymmetric pair ({i}, {j})"
                );
            }
        }
    }

    #[test]
    fn handshake_lemma() {
        let g = HexGrid::new(7, 4, 1.3).unwrap();
        let total: usize = (0..g.n_cells()).map(|i| g.neighbors(i).unwrap().len()).sum();
        assert_eq!(total % 2, 0);
    }

    #[test]
    fn interior_cells_have_six_neighbors_at_pitch_distance() {
        let cs = 0.9;
        let g = HexGrid::new(10, 10, cs).unwrap();
        let pitch = 3f64.sqrt() * cs;
        let mut interior_seen = 0;
        for c in g.cells() {
            let nbrs = g.neighbors(c.id).unwrap();
            if !g.is_boundary_cell(c.id) {
                interior_seen += 1;
                assert_eq!(nbrs.len(), 6);
                for n in nbrs {
                    let q = g.centroid(n);
                    let d = ((q[0] - c.centroid[0]).powi(2) + (q[1] - c.centroid[1]).powi(2)).sqrt();
                    assert!((d - pitch).abs() < 1e-12, "pitch {d} vs {pitch}");
                }
            } else {
                assert!(nbrs.len() < 6);
            }
        }
        assert!(interior_seen > 0);
    }

    #[test]
    fn nodes_are_deduplicated() {
        let g = HexGrid::new(3, 3, 1.0).unwrap();
        assert!(g.n_nodes() < 6 * g.n_cells());
        // Every interior node is incident to exactly 3 cells.
        let interior = (0..g.n_nodes()).filter(|&n| !g.is_boundary_node(n)).count();
        assert!(interior > 0);
    }

    #[test]
    fn centroid_is_mean_of_vertices() {
        let g = HexGrid::new(4, 3, 0.38).unwrap();
        for c in g.cells() {
            let mut mx = 0.0;
            let mut my = 0.0;
            for &n in &c.node_ids {
                mx += g.nodes()[n][0];
                my += g.nodes()[n][1];
            }
            assert!((mx / 6.0 - c.centroid[0]).abs() < 1e-12);
            assert!((my / 6.0 - c.centroid[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn neighbor_slots_match_shared_edges() {
        // Neighbor m must share exactly the two vertices (m+5)%6 and m.
        let g = HexGrid::new(6, 5, 1.0).unwrap();
        for c in g.cells() {
            for (m, slot) in g.neighbor_slots(c.id).iter().enumerate() {
                if let Some(n) = slot {
                    let other = g.cell(*n as usize);
                    let va = c.node_ids[(m + 5) % 6];
                    let vb = c.node_ids[m];
                    assert!(other.node_ids.contains(&va));
                    assert!(other.node_ids.contains(&vb));
                }
            }
        }
    }

    #[test]
    fn out_of_range_id_errors() {
        let g = HexGrid::new(2, 2, 1.0).unwrap();
        assert!(matches!(g.neighbors(4), Err(Error::OutOfRange(_))));
    }
}
