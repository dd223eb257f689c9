//! Minimum/maximum length-scale test regions built on the skeleton, the
//! global measures `g_min`/`g_max` and their mask-parameter gradients.
//!
//! `R_min` is the union of `min_ls` circles centered on skeleton-cell
//! centroids; `R_max` is the domain minus the union of `max_ls` circles.
//! Cells in `R_min` are meant to be solid, cells in `R_max` void.

use crate::error::{Error, Result};
use crate::grid::HexGrid;
use crate::mask::{self, DensityField, MaskSet};
use crate::skeleton::SkeletonResult;

#[derive(Debug, Clone, Copy)]
pub struct LengthScaleSpec {
    pub min_ls: f64,
    pub max_ls: f64,
    pub p: u32,
}

impl LengthScaleSpec {
    pub fn new(min_ls: f64, max_ls: f64, p: u32) -> Result<Self> {
        if !(min_ls > 0.0 && max_ls >= min_ls) {
            return Err(Error::invalid(format!(
                "length scales must satisfy 0 < min_ls <= max_ls, got {min_ls}, {max_ls}"
            )));
        }
        if p < 1 {
            return Err(Error::invalid("constraint exponent p must be >= 1".to_string()));
        }
        Ok(LengthScaleSpec { min_ls, max_ls, p })
    }
}

#[derive(Debug, Clone)]
pub struct Regions {
    pub r_min: Vec<bool>,
    pub r_max: Vec<bool>,
}

impl Regions {
    pub fn empty(n_cells: usize) -> Self {
        Regions {
            r_min: vec![false; n_cells],
            r_max: vec![false; n_cells],
        }
    }

    pub fn n_min(&self) -> usize {
        self.r_min.iter().filter(|&&b| b).count()
    }

    pub fn n_max(&self) -> usize {
        self.r_max.iter().filter(|&&b| b).count()
    }
}

/// Build `R_min`/`R_max` from skeleton-cell centroids.
///
/// An empty skeleton degenerates to `R_min` empty and `R_max` the whole
/// domain.
pub fn build_regions(grid: &HexGrid, skeleton: &SkeletonResult, spec: &LengthScaleSpec) -> Regions {
    let n = grid.n_cells();
    let mut r_min = vec![false; n];
    let mut r_max = vec![true; n];
    if skeleton.cells.is_empty() {
        return Regions { r_min, r_max };
    }
    let min2 = spec.min_ls * spec.min_ls;
    let max2 = spec.max_ls * spec.max_ls;
    let centers: Vec<[f64; 2]> = skeleton.cells.iter().map(|&c| grid.centroid(c)).collect();
    for (i, cell) in grid.cells().iter().enumerate() {
        let p = cell.centroid;
        for c in &centers {
            let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
            if d2 <= max2 {
                r_max[i] = false;
                if d2 <= min2 {
                    r_min[i] = true;
                    break;
                }
            }
        }
    }
    Regions { r_min, r_max }
}

fn term(base: f64, p: u32) -> f64 {
    // odd p keeps the stated non-negativity exactly; float noise may push
    // rho past its bounds
    let b = if p % 2 == 1 { base.max(0.0) } else { base };
    b.powi(p as i32)
}

/// `g_min = sum over R_min of (1 - rho_i)^p`.
pub fn g_min(field: &DensityField, regions: &Regions, spec: &LengthScaleSpec) -> f64 {
    field
        .rho
        .iter()
        .zip(&regions.r_min)
        .filter(|(_, &inside)| inside)
        .map(|(&rho, _)| term(1.0 - rho, spec.p))
        .sum()
}

/// `g_max = sum over R_max of (rho_i - rho_min)^p`.
pub fn g_max(field: &DensityField, regions: &Regions, spec: &LengthScaleSpec) -> f64 {
    field
        .rho
        .iter()
        .zip(&regions.r_max)
        .filter(|(_, &inside)| inside)
        .map(|(&rho, _)| term(rho - field.rho_min, spec.p))
        .sum()
}

/// Per-cell derivatives `d g_min / d rho_i` and `d g_max / d rho_i` with the
/// regions held frozen (the skeleton dependence is deliberately neglected).
pub fn measure_drho(field: &DensityField, regions: &Regions, spec: &LengthScaleSpec) -> (Vec<f64>, Vec<f64>) {
    let n = field.rho.len();
    let p = spec.p;
    let mut dmin = vec![0.0; n];
    let mut dmax = vec![0.0; n];
    for i in 0..n {
        if regions.r_min[i] {
            let base = 1.0 - field.rho[i];
            dmin[i] = if p % 2 == 1 && base < 0.0 {
                0.0
            } else {
                -(p as f64) * base.powi(p as i32 - 1)
            };
        }
        if regions.r_max[i] {
            let base = field.rho[i] - field.rho_min;
            dmax[i] = if p % 2 == 1 && base < 0.0 {
                0.0
            } else {
                (p as f64) * base.powi(p as i32 - 1)
            };
        }
    }
    (dmin, dmax)
}

/// Gradients of both measures w.r.t. the mask parameters (frozen regions).
pub fn gradients(
    grid: &HexGrid,
    field: &DensityField,
    regions: &Regions,
    spec: &LengthScaleSpec,
    masks: &MaskSet,
) -> (Vec<f64>, Vec<f64>) {
    let (dmin, dmax) = measure_drho(field, regions, spec);
    let mut outs = vec![vec![0.0; masks.dim()], vec![0.0; masks.dim()]];
    mask::accumulate_chain_multi(grid, masks, &[&dmin, &dmax], &mut outs);
    let gmax = outs.pop().expect("two outputs");
    let gmin = outs.pop().expect("two outputs");
    (gmin, gmax)
}

/// Cells violating the length scales: `blue` marks `R_min` cells that should
/// be solid but are not, `red` marks `R_max` cells that should be void but
/// are not (the diagnostic markers of the violation plots).
#[derive(Debug, Clone, Default)]
pub struct Violations {
    pub blue: Vec<usize>,
    pub red: Vec<usize>,
}

/// Solid means `rho > solid_tol`, void means `rho < void_tol`.
pub fn violations(field: &DensityField, regions: &Regions, solid_tol: f64, void_tol: f64) -> Violations {
    let mut v = Violations::default();
    for (i, &rho) in field.rho.iter().enumerate() {
        if regions.r_min[i] && rho <= solid_tol {
            v.blue.push(i);
        }
        if regions.r_max[i] && rho >= void_tol {
            v.red.push(i);
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::HexGrid;
    use crate::skeleton::SkeletonResult;

    fn skel(cells: Vec<usize>) -> SkeletonResult {
        SkeletonResult {
            cells,
            iterations: 1,
            special_case_triggered: false,
        }
    }

    #[test]
    fn spec_validation() {
        assert!(LengthScaleSpec::new(1.0, 2.0, 1).is_ok());
        assert!(LengthScaleSpec::new(2.0, 1.0, 1).is_err());
        assert!(LengthScaleSpec::new(0.0, 1.0, 1).is_err());
        assert!(LengthScaleSpec::new(1.0, 2.0, 0).is_err());
    }

    #[test]
    fn tiny_min_ls_marks_only_skeleton_cells() {
        let g = HexGrid::new(9, 9, 1.0).unwrap();
        let s = skel(vec![40]);
        let spec = LengthScaleSpec::new(0.5, 100.0, 1).unwrap();
        let r = build_regions(&g, &s, &spec);
        assert_eq!(r.n_min(), 1);
        assert!(r.r_min[40]);
        // max_ls beyond the grid diagonal empties R_max
        assert_eq!(r.n_max(), 0);
    }

    #[test]
    fn min_region_covers_two_rings_at_double_pitch() {
        let g = HexGrid::new(11, 11, 1.0).unwrap();
        let center = 5 * 11 + 5;
        let pitch = 3f64.sqrt();
        // radius strictly between lattice distances to avoid float ties
        let radius = 2.1 * pitch;
        let s = skel(vec![center]);
        let spec = LengthScaleSpec::new(radius, 10.0 * pitch, 1).unwrap();
        let r = build_regions(&g, &s, &spec);
        // brute-force distance check against the definition
        let c = g.centroid(center);
        for cell in g.cells() {
            let d = ((cell.centroid[0] - c[0]).powi(2) + (cell.centroid[1] - c[1]).powi(2)).sqrt();
            assert_eq!(r.r_min[cell.id], d <= radius, "cell {}", cell.id);
        }
        // center + first ring (6) + the straight-line part of ring 2
        assert!(r.r_min[center]);
        let count = r.n_min();
        assert!(count > 7, "two-pitch disk must reach past the first ring, got {count}");
    }

    #[test]
    fn empty_skeleton_degenerates() {
        let g = HexGrid::new(5, 5, 1.0).unwrap();
        let spec = LengthScaleSpec::new(1.0, 2.0, 1).unwrap();
        let r = build_regions(&g, &skel(vec![]), &spec);
        assert_eq!(r.n_min(), 0);
        assert_eq!(r.n_max(), g.n_cells());
    }

    #[test]
    fn regions_are_disjoint() {
        let g = HexGrid::new(12, 9, 0.7);
        let g = g.unwrap();
        let s = skel(vec![3, 40, 77]);
        for (lo, hi) in [(0.8, 1.6), (1.0, 1.0), (2.0, 5.0)] {
            let spec = LengthScaleSpec::new(lo, hi, 1).unwrap();
            let r = build_regions(&g, &s, &spec);
            for i in 0..g.n_cells() {
                assert!(!(r.r_min[i] && r.r_max[i]));
            }
            // skeleton cells always in R_min
            for &c in &s.cells {
                assert!(r.r_min[c]);
            }
        }
    }

    #[test]
    fn measure_values() {
        let spec1 = LengthScaleSpec::new(0.5, 0.6, 1).unwrap();
        let spec2 = LengthScaleSpec::new(0.5, 0.6, 2).unwrap();
        let mut regions = Regions::empty(9);
        regions.r_min[4] = true;
        regions.r_max[0] = true;

        let mut rho = vec![0.0; 9];
        rho[4] = 0.4;
        let field = DensityField::from_values(rho, 1e-3);
        assert!((g_min(&field, &regions, &spec1) - 0.6).abs() < 1e-12);
        assert!((g_min(&field, &regions, &spec2) - 0.36).abs() < 1e-12);

        // solid R_min contributes ~0
        let mut rho = vec![0.0; 9];
        rho[4] = 1.0 - 1e-12;
        let field = DensityField::from_values(rho, 1e-3);
        assert!(g_min(&field, &regions, &spec1) < 1e-11);

        // R_max at floor density contributes 0
        let mut rho = vec![0.5; 9];
        rho[0] = 1e-3;
        let field = DensityField::from_values(rho, 1e-3);
        assert_eq!(g_max(&field, &regions, &spec1), 0.0);
    }

    #[test]
    fn measures_never_negative() {
        let g = HexGrid::new(8, 8, 1.0).unwrap();
        let s = skel(vec![20, 21, 22, 30]);
        let mut seed = 7u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for p in [1u32, 2] {
            let spec = LengthScaleSpec::new(1.5, 3.0, p).unwrap();
            let r = build_regions(&g, &s, &spec);
            for _ in 0..200 {
                // include slightly out-of-range densities to exercise clamping
                let rho: Vec<f64> = (0..g.n_cells()).map(|_| next() * 1.002 - 0.001).collect();
                let field = DensityField::from_values(rho, 1e-3);
                assert!(g_min(&field, &r, &spec) >= 0.0);
                assert!(g_max(&field, &r, &spec) >= 0.0);
            }
        }
    }

    #[test]
    fn monotone_response() {
        let g = HexGrid::new(8, 8, 1.0).unwrap();
        let s = skel(vec![27]);
        let spec = LengthScaleSpec::new(2.0, 3.5, 2).unwrap();
        let r = build_regions(&g, &s, &spec);
        let base: Vec<f64> = (0..g.n_cells()).map(|i| 0.2 + 0.6 * ((i % 5) as f64 / 5.0)).collect();
        let f0 = DensityField::from_values(base.clone(), 1e-3);
        let gmin0 = g_min(&f0, &r, &spec);
        let gmax0 = g_max(&f0, &r, &spec);
        for i in 0..g.n_cells() {
            let mut rho = base.clone();
            rho[i] += 0.1;
            let f1 = DensityField::from_values(rho, 1e-3);
            if r.r_min[i] {
                assert!(g_min(&f1, &r, &spec) <= gmin0 + 1e-12);
            }
            if r.r_max[i] {
                assert!(g_max(&f1, &r, &spec) >= gmax0 - 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_frozen_region_finite_differences() {
        use crate::mask::{EllipticalMask, MaskSet, MaskShape, Polarity};
        let g = HexGrid::new(10, 8, 1.0).unwrap();
        let (lo, hi) = g.bbox();
        let masks = MaskSet::new(
            vec![
                EllipticalMask {
                    x: 0.3 * (lo[0] + hi[0]),
                    y: 0.4 * (lo[1] + hi[1]),
                    a: 2.5,
                    b: 1.5,
                    theta: 0.3,
                },
                EllipticalMask {
                    x: 0.7 * (lo[0] + hi[0]),
                    y: 0.6 * (lo[1] + hi[1]),
                    a: 2.0,
                    b: 1.2,
                    theta: -0.9,
                },
            ],
            Polarity::Negative,
            MaskShape::Elliptical,
            4.0,
            3.0,
        )
        .unwrap();
        let s = skel(vec![2 * 10 + 3, 4 * 10 + 5, 6 * 10 + 2]);
        for p in [1u32, 2] {
            let spec = LengthScaleSpec::new(2.0, 4.0, p).unwrap();
            let regions = build_regions(&g, &s, &spec);
            let field = mask::evaluate_field(&g, &masks, 1e-3);
            let (an_min, an_max) = gradients(&g, &field, &regions, &spec, &masks);
            let x0 = masks.to_vector();
            for k in 0..x0.len() {
                let h = 1e-6;
                let mut xp = x0.clone();
                xp[k] += h;
                let mut xm = x0.clone();
                xm[k] -= h;
                let fp = mask::evaluate_field(&g, &masks.with_vector(&xp).unwrap(), 1e-3);
                let fm = mask::evaluate_field(&g, &masks.with_vector(&xm).unwrap(), 1e-3);
                let fd_min = (g_min(&fp, &regions, &spec) - g_min(&fm, &regions, &spec)) / (2.0 * h);
                let fd_max = (g_max(&fp, &regions, &spec) - g_max(&fm, &regions, &spec)) / (2.0 * h);
                assert!(
                    (an_min[k] - fd_min).abs() <= 1e-7 + 1e-4 * an_min[k].abs().max(fd_min.abs()),
                    "g_min component {k} (p = {p}): {} vs {fd_min}",
                    an_min[k]
                );
                assert!(
                    (an_max[k] - fd_max).abs() <= 1e-7 + 1e-4 * an_max[k].abs().max(fd_max.abs()),
                    "g_max component {k} (p = {p}): {} vs {fd_max}",
                    an_max[k]
                );
            }
        }
    }

    #[test]
    fn empty_rmax_gives_zero_gradient() {
        use crate::mask::{EllipticalMask, MaskSet, MaskShape, Polarity};
        let g = HexGrid::new(6, 6, 1.0).unwrap();
        let masks = MaskSet::new(
            vec![EllipticalMask::circle(4.0, 4.0, 2.0)],
            Polarity::Negative,
            MaskShape::Elliptical,
            6.0,
            3.0,
        )
        .unwrap();
        let s = skel(vec![14]);
        let spec = LengthScaleSpec::new(1.0, 1e6, 1).unwrap();
        let regions = build_regions(&g, &s, &spec);
        assert_eq!(regions.n_max(), 0);
        let field = mask::evaluate_field(&g, &masks, 1e-3);
        let (_, gmax_grad) = gradients(&g, &field, &regions, &spec, &masks);
        assert!(gmax_grad.iter().all(|&v| v == 0.0));
        assert_eq!(g_max(&field, &regions, &spec), 0.0);
    }

    #[test]
    fn violation_markers() {
        let mut regions = Regions::empty(6);
        regions.r_min[0] = true;
        regions.r_min[1] = true;
        regions.r_max[4] = true;
        regions.r_max[5] = true;
        let field = DensityField::from_values(vec![0.2, 0.999, 0.5, 0.5, 0.6, 0.001], 1e-3);
        let v = violations(&field, &regions, 0.99, 0.01);
        assert_eq!(v.blue, vec![0]);
        assert_eq!(v.red, vec![4]);
    }
}
