//! Post-processing of converged fields: black-and-white index, 0-1
//! projection with the minimum length scale imposed, and solid/void
//! interface extraction with midpoint smoothing (rendering only).

use std::collections::BTreeMap;

use crate::error::Result;
use crate::fem::{FEModel, ObjectiveKind};
use crate::grid::HexGrid;
use crate::lengthscale::Regions;
use crate::mask::DensityField;

/// Black-and-white index `4 sum rho (1 - rho) / Ncells`: 0 for binary
/// fields, 1 for uniform gray at 0.5.
pub fn bwi(field: &DensityField) -> f64 {
    if field.rho.is_empty() {
        return 0.0;
    }
    4.0 * field.rho.iter().map(|&r| r * (1.0 - r)).sum::<f64>() / field.rho.len() as f64
}

#[derive(Debug, Clone)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

#[derive(Debug, Clone)]
pub struct ProjectedDesign {
    /// Solid/void state per cell.
    pub solid: Vec<bool>,
    /// Objective re-evaluated on the projected field.
    pub phi: f64,
    pub boundary: Vec<Polyline>,
}

/// Force `R_min` cells solid, threshold the rest at 0.5.
pub fn project_with_min_ls(field: &DensityField, regions: &Regions) -> Vec<bool> {
    field
        .rho
        .iter()
        .zip(&regions.r_min)
        .map(|(&rho, &in_min)| in_min || rho >= 0.5)
        .collect()
}

/// Binary field over the FE density floor, as used to re-evaluate the
/// objective of a projected design.
pub fn binary_field(solid: &[bool], rho_min: f64) -> DensityField {
    DensityField::from_values(
        solid.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect(),
        rho_min,
    )
}

/// Projection + objective re-evaluation + smoothed boundary in one pass.
pub fn project_and_evaluate(
    model: &FEModel,
    field: &DensityField,
    regions: &Regions,
    kind: ObjectiveKind,
    s_scale: f64,
    smooth_steps: usize,
) -> Result<ProjectedDesign> {
    let solid = project_with_min_ls(field, regions);
    let bin = binary_field(&solid, field.rho_min);
    let solve = match kind {
        ObjectiveKind::Compliance => model.assemble_solve(&bin)?,
        ObjectiveKind::Mechanism => model.assemble_solve_with_adjoint(&bin)?,
    };
    let (phi, _) = model.objective_from_solve(kind, s_scale, &bin, &solve)?;
    let boundary = smooth_boundary(model.grid(), &solid, smooth_steps);
    Ok(ProjectedDesign {
        solid,
        phi,
        boundary,
    })
}

/// Interface edges between solid cells and void (or off-grid) space, chained
/// into polylines and smoothed by `steps` rounds of midpoint averaging.
/// Chain endpoints and domain-boundary vertices stay pinned; rendering-only,
/// the FE mesh is untouched.
pub fn smooth_boundary(grid: &HexGrid, solid: &[bool], steps: usize) -> Vec<Polyline> {
    // collect interface edges as node-id pairs
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (id, cell) in grid.cells().iter().enumerate() {
        if !solid[id] {
            continue;
        }
        let slots = grid.neighbor_slots(id);
        for m in 0..6 {
            let exposed = match slots[m] {
                Some(n) => !solid[n as usize],
                None => true,
            };
            if exposed {
                let a = cell.node_ids[(m + 5) % 6];
                let b = cell.node_ids[m];
                edges.push((a.min(b), a.max(b)));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();

    // node -> incident edge list
    let mut incident: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, &(a, b)) in edges.iter().enumerate() {
        incident.entry(a).or_default().push(k);
        incident.entry(b).or_default().push(k);
    }

    let mut used = vec![false; edges.len()];
    let mut chains: Vec<(Vec<usize>, bool)> = Vec::new();

    let next_edge = |node: usize, used: &[bool], incident: &BTreeMap<usize, Vec<usize>>| -> Option<usize> {
        incident
            .get(&node)
            .and_then(|list| list.iter().copied().find(|&e| !used[e]))
    };

    // open chains first, seeded at junction or odd-degree nodes
    let mut seeds: Vec<usize> = incident
        .iter()
        .filter(|(_, l)| l.len() != 2)
        .map(|(&n, _)| n)
        .collect();
    seeds.sort_unstable();
    for phase in 0..2 {
        let starts: Vec<usize> = if phase == 0 {
            seeds.clone()
        } else {
            incident.keys().copied().collect()
        };
        for start in starts {
            loop {
                let Some(first) = next_edge(start, &used, &incident) else {
                    break;
                };
                let mut chain = vec![start];
                let mut node = start;
                let mut edge = first;
                loop {
                    used[edge] = true;
                    let (a, b) = edges[edge];
                    node = if a == node { b } else { a };
                    chain.push(node);
                    if node == start {
                        break;
                    }
                    // stop at junctions in phase 0 so loops stay clean
                    if incident[&node].len() != 2 {
                        break;
                    }
                    match next_edge(node, &used, &incident) {
                        Some(e) => edge = e,
                        None => break,
                    }
                }
                let closed = chain.len() > 2 && chain.first() == chain.last();
                chains.push((chain, closed));
            }
        }
    }

    let nodes = grid.nodes();
    let mut out = Vec::new();
    for (chain, closed) in chains {
        let mut pts: Vec<[f64; 2]> = chain.iter().map(|&n| nodes[n]).collect();
        if closed {
            pts.pop();
        }
        let pinned: Vec<bool> = chain
            .iter()
            .take(pts.len())
            .map(|&n| grid.is_boundary_node(n))
            .collect();
        let n = pts.len();
        if n >= 3 {
            // in-place sweeps: simultaneous midpoint updates leave the
            // alternating zigzag mode undamped (eigenvalue -1)
            for _ in 0..steps {
                for i in 0..n {
                    let movable = if closed {
                        !pinned[i]
                    } else {
                        i > 0 && i + 1 < n && !pinned[i]
                    };
                    if !movable {
                        continue;
                    }
                    let a = pts[(i + n - 1) % n];
                    let b = pts[(i + 1) % n];
                    pts[i] = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                }
            }
        }
        out.push(Polyline {
            points: pts,
            closed,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::HexGrid;
    use crate::lengthscale::Regions;

    #[test]
    fn bwi_extremes() {
        let binary = DensityField::from_values(vec![0.0, 1.0, 1.0, 0.0], 1e-3);
        assert_eq!(bwi(&binary), 0.0);
        let gray = DensityField::from_values(vec![0.5; 10], 1e-3);
        assert!((bwi(&gray) - 1.0).abs() < 1e-12);
        let mixed = DensityField::from_values(vec![0.9, 0.9, 0.1, 0.1], 1e-3);
        assert!((bwi(&mixed) - 0.36).abs() < 1e-12);
    }

    #[test]
    fn projection_rules() {
        let mut regions = Regions::empty(4);
        regions.r_min[0] = true;
        let field = DensityField::from_values(vec![0.2, 0.7, 0.49, 0.5], 1e-3);
        let solid = project_with_min_ls(&field, &regions);
        assert_eq!(solid, vec![true, true, false, true]);
        // idempotent: projecting the binary field changes nothing
        let bin = binary_field(&solid, 1e-3);
        let again = project_with_min_ls(&bin, &regions);
        assert_eq!(again, solid);
    }

    #[test]
    fn boundary_of_solid_block_is_closed_loop() {
        let g = HexGrid::new(6, 5, 1.0).unwrap();
        let solid = vec![true; g.n_cells()];
        let polys = smooth_boundary(&g, &solid, 0);
        assert_eq!(polys.len(), 1);
        assert!(polys[0].closed);
        // raw hull vertices are all domain-boundary nodes
        for p in &polys[0].points {
            let n = g.nearest_node(*p);
            assert!(g.is_boundary_node(n));
        }
    }

    #[test]
    fn smoothing_contracts_zigzag() {
        let g = HexGrid::new(12, 6, 1.0).unwrap();
        // bottom two rows solid: the top interface is a zigzag line
        let solid: Vec<bool> = g.cells().iter().map(|c| c.row < 2).collect();
        let raw = smooth_boundary(&g, &solid, 0);
        let smoothed = smooth_boundary(&g, &solid, 20);
        let (lo, hi) = g.bbox();
        let width = hi[0] - lo[0];
        let deviation = |polys: &[Polyline]| -> f64 {
            // zigzag amplitude over the middle of the span, away from the
            // pinned rim vertices at the chain ends
            let ys: Vec<f64> = polys
                .iter()
                .flat_map(|p| p.points.iter())
                .filter(|q| {
                    q[1] > 1.8 && q[0] > lo[0] + 0.3 * width && q[0] < hi[0] - 0.3 * width
                })
                .map(|q| q[1])
                .collect();
            assert!(ys.len() > 4);
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            ys.iter().fold(0.0f64, |m, y| m.max((y - mean).abs()))
        };
        let d0 = deviation(&raw);
        let d1 = deviation(&smoothed);
        assert!(
            d1 < 0.5 * d0,
            "smoothing must contract the zigzag: {d0} -> {d1}"
        );
        // steps = 0 returns the raw hex boundary (vertices on the node set)
        for p in &raw {
            for q in &p.points {
                let n = g.nearest_node(*q);
                let d = ((g.nodes()[n][0] - q[0]).powi(2) + (g.nodes()[n][1] - q[1]).powi(2)).sqrt();
                assert!(d < 1e-9, "raw vertices must be grid nodes");
            }
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn straight_chain_is_fixed_point() {
        // colinear equally spaced points do not move under midpoint averaging
        let pts: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        let mut moved = pts;
        for _ in 0..5 {
            let prev = moved;
            for i in 1..3 {
                moved[i] = [
                    0.5 * (prev[i - 1][0] + prev[i + 1][0]),
                    0.5 * (prev[i - 1][1] + prev[i + 1][1]),
                ];
            }
        }
        for (a, b) in pts.iter().zip(&moved) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn loop_closure_and_endpoints_preserved() {
        let g = HexGrid::new(9, 9, 1.0).unwrap();
        let c = g.centroid(4 * 9 + 4);
        let solid: Vec<bool> = g
            .cells()
            .iter()
            .map(|cell| {
                let d = ((cell.centroid[0] - c[0]).powi(2) + (cell.centroid[1] - c[1]).powi(2)).sqrt();
                d < 2.8
            })
            .collect();
        let raw = smooth_boundary(&g, &solid, 0);
        let smoothed = smooth_boundary(&g, &solid, 20);
        assert_eq!(raw.len(), smoothed.len());
        for (r, s) in raw.iter().zip(&smoothed) {
            assert_eq!(r.closed, s.closed);
            assert_eq!(r.points.len(), s.points.len());
            if !r.closed {
                assert_eq!(r.points.first(), s.points.first());
                assert_eq!(r.points.last(), s.points.last());
            }
        }
    }
}
