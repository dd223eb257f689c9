//! Plane-stress finite element analysis on the hex grid: element stiffness
//! of a solid cell via Wachspress shape functions, sparse symmetric
//! assembly/solve, objective evaluation (compliance and compliant-mechanism
//! ratio) and adjoint sensitivities with respect to cell densities.

use std::sync::Arc;

use faer::sparse::linalg::solvers::{Cholesky, SpSolver, SymbolicCholesky};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};

use crate::error::{Error, Result};
use crate::grid::HexGrid;
use crate::mask::{self, DensityField, MaskSet};

pub const DOFS_PER_CELL: usize = 12;

#[derive(Debug, Clone, Copy)]
pub struct ElasticParams {
    pub e: f64,
    pub nu: f64,
    pub thickness: f64,
}

impl Default for ElasticParams {
    fn default() -> Self {
        ElasticParams {
            e: 1.0,
            nu: 0.3,
            thickness: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Compliance,
    Mechanism,
}

/// Stiffness matrix of a solid regular hexagonal cell (12 dofs: u, v per
/// vertex in the grid's vertex order).
///
/// Wachspress rational shape functions, integrated by splitting the hexagon
/// into 6 triangles from the centroid with an interior 3-point degree-2 rule
/// on each.
pub fn element_stiffness(cs: f64, params: &ElasticParams) -> Result<[[f64; 12]; 12]> {
    if !(params.e > 0.0) {
        return Err(Error::invalid(format!("elastic modulus must be positive, got {}", params.e)));
    }
    if !(params.nu >= 0.0 && params.nu < 0.5) {
        return Err(Error::invalid(format!(
            "Poisson ratio must lie in [0, 0.5), got {}",
            params.nu
        )));
    }
    if !(cs > 0.0) {
        return Err(Error::invalid(format!("cell size must be positive, got {cs}")));
    }

    // Vertices CCW from 30 degrees, matching HexCell::node_ids.
    let mut v = [[0.0f64; 2]; 6];
    for (k, vk) in v.iter_mut().enumerate() {
        let ang = (30.0 + 60.0 * k as f64).to_radians();
        *vk = [cs * ang.cos(), cs * ang.sin()];
    }

    let area = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| -> f64 {
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
    };

    // Edge j runs v[j] -> v[j+1]; its point function A_j and constant gradient.
    let mut grad_a = [[0.0f64; 2]; 6];
    for j in 0..6 {
        let a = v[j];
        let b = v[(j + 1) % 6];
        grad_a[j] = [0.5 * (a[1] - b[1]), 0.5 * (b[0] - a[0])];
    }
    let mut c_i = [0.0f64; 6];
    for i in 0..6 {
        c_i[i] = area(v[(i + 5) % 6], v[i], v[(i + 1) % 6]);
    }

    // Shape function gradients at an interior point.
    let shape_gradients = |p: [f64; 2]| -> [[f64; 2]; 6] {
        let mut aj = [0.0f64; 6];
        for j in 0..6 {
            aj[j] = area(p, v[j], v[(j + 1) % 6]);
        }
        let mut w = [0.0f64; 6];
        let mut dw = [[0.0f64; 2]; 6];
        for i in 0..6 {
            let mut prod = c_i[i];
            let mut sum = [0.0f64; 2];
            for j in 0..6 {
                if j == i || j == (i + 5) % 6 {
                    continue;
                }
                prod *= aj[j];
                sum[0] += grad_a[j][0] / aj[j];
                sum[1] += grad_a[j][1] / aj[j];
            }
            w[i] = prod;
            dw[i] = [prod * sum[0], prod * sum[1]];
        }
        let wsum: f64 = w.iter().sum();
        let dwsum = dw.iter().fold([0.0; 2], |acc, g| [acc[0] + g[0], acc[1] + g[1]]);
        let mut dn = [[0.0f64; 2]; 6];
        for i in 0..6 {
            let ni = w[i] / wsum;
            dn[i] = [
                (dw[i][0] - ni * dwsum[0]) / wsum,
                (dw[i][1] - ni * dwsum[1]) / wsum,
            ];
        }
        dn
    };

    let f = params.e / (1.0 - params.nu * params.nu);
    let d = [
        [f, f * params.nu, 0.0],
        [f * params.nu, f, 0.0],
        [0.0, 0.0, f * (1.0 - params.nu) / 2.0],
    ];

    // Degree-2 interior rule on each of the 6 centroid triangles.
    let bary = [
        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    ];

    let mut k = [[0.0f64; 12]; 12];
    let origin = [0.0f64, 0.0];
    for t in 0..6 {
        let tri = [origin, v[t], v[(t + 1) % 6]];
        let ta = area(tri[0], tri[1], tri[2]);
        for bc in &bary {
            let p = [
                bc[0] * tri[0][0] + bc[1] * tri[1][0] + bc[2] * tri[2][0],
                bc[0] * tri[0][1] + bc[1] * tri[1][1] + bc[2] * tri[2][1],
            ];
            let dn = shape_gradients(p);
            // strain-displacement rows: exx, eyy, gxy
            let mut b = [[0.0f64; 12]; 3];
            for i in 0..6 {
                b[0][2 * i] = dn[i][0];
                b[1][2 * i + 1] = dn[i][1];
                b[2][2 * i] = dn[i][1];
                b[2][2 * i + 1] = dn[i][0];
            }
            let w = ta / 3.0 * params.thickness;
            for r in 0..12 {
                let db = [
                    d[0][0] * b[0][r] + d[0][1] * b[1][r],
                    d[1][0] * b[0][r] + d[1][1] * b[1][r],
                    d[2][2] * b[2][r],
                ];
                for cidx in r..12 {
                    let val = w * (db[0] * b[0][cidx] + db[1] * b[1][cidx] + db[2] * b[2][cidx]);
                    k[r][cidx] += val;
                    if cidx != r {
                        k[cidx][r] += val;
                    }
                }
            }
        }
    }
    Ok(k)
}

#[derive(Debug, Clone)]
pub struct OutputPort {
    /// Weighted dofs of the output selector `l` (usually one axis of one node).
    pub dofs: Vec<(usize, f64)>,
}

/// Finite element model: grid, solid-cell stiffness, supports, loads and the
/// precomputed reduced sparse system.
pub struct FEModel {
    grid: Arc<HexGrid>,
    params: ElasticParams,
    k0: [[f64; 12]; 12],
    fixed: Vec<bool>,
    f: Vec<f64>,
    output: Option<OutputPort>,
    springs: Vec<(usize, f64)>,
    red: ReducedSystem,
}

struct ReducedSystem {
    n: usize,
    free_ix: Vec<Option<u32>>,
    row_idx: Vec<usize>,
    /// Per-cell ranges into the flat contribution arrays.
    cell_start: Vec<u32>,
    slot: Vec<u32>,
    li: Vec<u8>,
    lj: Vec<u8>,
    spring_slots: Vec<(u32, f64)>,
    symbolic_mat: SymbolicSparseColMat<usize>,
    symbolic_chol: SymbolicCholesky<usize>,
}

pub struct FEModelBuilder {
    grid: Arc<HexGrid>,
    params: ElasticParams,
    fixed: Vec<bool>,
    f: Vec<f64>,
    output: Option<OutputPort>,
    springs: Vec<(usize, f64)>,
}

impl FEModelBuilder {
    pub fn new(grid: Arc<HexGrid>, params: ElasticParams) -> Self {
        let ndof = 2 * grid.n_nodes();
        FEModelBuilder {
            grid,
            params,
            fixed: vec![false; ndof],
            f: vec![0.0; ndof],
            output: None,
            springs: Vec::new(),
        }
    }

    pub fn fix_node(&mut self, node: usize, fix_x: bool, fix_y: bool) -> &mut Self {
        if fix_x {
            self.fixed[2 * node] = true;
        }
        if fix_y {
            self.fixed[2 * node + 1] = true;
        }
        self
    }

    pub fn add_point_load(&mut self, node: usize, force: [f64; 2]) -> &mut Self {
        self.f[2 * node] += force[0];
        self.f[2 * node + 1] += force[1];
        self
    }

    /// Output selector `l` for mechanism objectives: unit direction at a node.
    pub fn output_port(&mut self, node: usize, dir: [f64; 2]) -> &mut Self {
        let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        let mut dofs = Vec::new();
        if norm > 0.0 {
            if dir[0] != 0.0 {
                dofs.push((2 * node, dir[0] / norm));
            }
            if dir[1] != 0.0 {
                dofs.push((2 * node + 1, dir[1] / norm));
            }
        }
        self.output = Some(OutputPort { dofs });
        self
    }

    pub fn add_spring(&mut self, node: usize, axis: usize, stiffness: f64) -> &mut Self {
        self.springs.push((2 * node + axis, stiffness));
        self
    }

    pub fn build(self) -> Result<FEModel> {
        let n_fixed = self.fixed.iter().filter(|&&b| b).count();
        if n_fixed < 3 {
            return Err(Error::invalid(format!(
                "at least 3 constrained dofs required to remove rigid-body freedom, got {n_fixed}"
            )));
        }
        for &(dof, k) in &self.springs {
            if self.fixed[dof] {
                return Err(Error::invalid(format!("spring attached to fixed dof {dof}")));
            }
            if k < 0.0 {
                return Err(Error::invalid(format!("negative spring stiffness {k}")));
            }
        }
        let k0 = element_stiffness(self.grid.cs(), &self.params)?;
        let red = ReducedSystem::build(&self.grid, &self.fixed, &self.springs)?;
        Ok(FEModel {
            grid: self.grid,
            params: self.params,
            k0,
            fixed: self.fixed,
            f: self.f,
            output: self.output,
            springs: self.springs,
            red,
        })
    }
}

impl ReducedSystem {
    fn build(grid: &HexGrid, fixed: &[bool], springs: &[(usize, f64)]) -> Result<Self> {
        let ndof = 2 * grid.n_nodes();
        let mut free_ix: Vec<Option<u32>> = vec![None; ndof];
        let mut n = 0u32;
        for (d, fx) in fixed.iter().enumerate() {
            if !fx {
                free_ix[d] = Some(n);
                n += 1;
            }
        }
        let n = n as usize;

        let cell_dofs = |cell: usize| -> [usize; 12] {
            let mut dofs = [0usize; 12];
            for (k, &node) in grid.cell(cell).node_ids.iter().enumerate() {
                dofs[2 * k] = 2 * node;
                dofs[2 * k + 1] = 2 * node + 1;
            }
            dofs
        };

        // Unique lower-triangle (col, row) positions.
        let mut pos: Vec<(u32, u32)> = Vec::with_capacity(grid.n_cells() * 80);
        for cell in 0..grid.n_cells() {
            let dofs = cell_dofs(cell);
            for i in 0..12 {
                let Some(ri) = free_ix[dofs[i]] else { continue };
                for dj in dofs.iter().take(12) {
                    let Some(rj) = free_ix[*dj] else { continue };
                    if ri >= rj {
                        pos.push((rj, ri));
                    }
                }
            }
        }
        pos.sort_unstable();
        pos.dedup();

        let nnz = pos.len();
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = vec![0usize; nnz];
        for (k, &(c, r)) in pos.iter().enumerate() {
            col_ptr[c as usize + 1] += 1;
            row_idx[k] = r as usize;
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }

        let find_slot = |col: u32, row: u32| -> u32 {
            let lo = col_ptr[col as usize];
            let hi = col_ptr[col as usize + 1];
            let off = row_idx[lo..hi]
                .binary_search(&(row as usize))
                .expect("assembly position must exist");
            (lo + off) as u32
        };

        let mut cell_start = Vec::with_capacity(grid.n_cells() + 1);
        let mut slot = Vec::new();
        let mut li = Vec::new();
        let mut lj = Vec::new();
        cell_start.push(0u32);
        for cell in 0..grid.n_cells() {
            let dofs = cell_dofs(cell);
            for i in 0..12 {
                let Some(ri) = free_ix[dofs[i]] else { continue };
                for j in 0..12 {
                    let Some(rj) = free_ix[dofs[j]] else { continue };
                    if ri >= rj {
                        slot.push(find_slot(rj, ri));
                        li.push(i as u8);
                        lj.push(j as u8);
                    }
                }
            }
            cell_start.push(slot.len() as u32);
        }

        let spring_slots = springs
            .iter()
            .map(|&(dof, k)| {
                let r = free_ix[dof].expect("spring dofs checked free");
                (find_slot(r, r), k)
            })
            .collect();

        let symbolic_mat = SymbolicSparseColMat::new_checked(n, n, col_ptr.clone(), None, row_idx.clone());
        let symbolic_chol = SymbolicCholesky::try_new(symbolic_mat.as_ref(), faer::Side::Lower)
            .map_err(|e| Error::AnalysisFailure(format!("symbolic factorization failed: {e:?}")))?;

        Ok(ReducedSystem {
            n,
            free_ix,
            row_idx,
            cell_start,
            slot,
            li,
            lj,
            spring_slots,
            symbolic_mat,
            symbolic_chol,
        })
    }
}

/// Result of one linear solve on a density field.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: Vec<f64>,
    /// 0.5 f^T u.
    pub compliance: f64,
    /// l^T u for mechanism models.
    pub output_disp: Option<f64>,
    /// Unscaled per-cell energy 0.5 u_e^T K0 u_e.
    pub cell_energy: Vec<f64>,
    /// lambda_e^T K0 u_e per cell when the adjoint was solved.
    pub cross_energy: Option<Vec<f64>>,
}

impl FEModel {
    pub fn grid(&self) -> &HexGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<HexGrid> {
        Arc::clone(&self.grid)
    }

    pub fn params(&self) -> &ElasticParams {
        &self.params
    }

    pub fn k0(&self) -> &[[f64; 12]; 12] {
        &self.k0
    }

    pub fn loads(&self) -> &[f64] {
        &self.f
    }

    pub fn fixed_dofs(&self) -> &[bool] {
        &self.fixed
    }

    pub fn springs(&self) -> &[(usize, f64)] {
        &self.springs
    }

    pub fn has_output(&self) -> bool {
        self.output.is_some()
    }

    fn interp(&self, field: &DensityField, cell: usize) -> f64 {
        field.rho_min + field.rho[cell] * (1.0 - field.rho_min)
    }

    fn factor(&self, field: &DensityField) -> Result<Cholesky<usize, f64>> {
        if field.rho.len() != self.grid.n_cells() {
            return Err(Error::invalid(format!(
                "field has {} cells, grid has {}",
                field.rho.len(),
                self.grid.n_cells()
            )));
        }
        let mut values = vec![0.0f64; self.red.row_idx.len()];
        for cell in 0..self.grid.n_cells() {
            let s = self.interp(field, cell);
            let lo = self.red.cell_start[cell] as usize;
            let hi = self.red.cell_start[cell + 1] as usize;
            for k in lo..hi {
                values[self.red.slot[k] as usize] +=
                    s * self.k0[self.red.li[k] as usize][self.red.lj[k] as usize];
            }
        }
        for &(slot, k) in &self.red.spring_slots {
            values[slot as usize] += k;
        }
        let mat = SparseColMatRef::new(self.red.symbolic_mat.as_ref(), values.as_slice());
        Cholesky::try_new_with_symbolic(self.red.symbolic_chol.clone(), mat, faer::Side::Lower)
            .map_err(|e| Error::AnalysisFailure(format!("Cholesky factorization failed: {e:?}")))
    }

    fn solve_rhs(&self, chol: &Cholesky<usize, f64>, rhs: &[f64]) -> Vec<f64> {
        let mut red = faer::Mat::<f64>::zeros(self.red.n, 1);
        for (d, &v) in rhs.iter().enumerate() {
            if let Some(r) = self.red.free_ix[d] {
                red.write(r as usize, 0, v);
            }
        }
        let sol = chol.solve(&red);
        let mut full = vec![0.0; rhs.len()];
        for (d, v) in full.iter_mut().enumerate() {
            if let Some(r) = self.red.free_ix[d] {
                *v = sol.read(r as usize, 0);
            }
        }
        full
    }

    fn cell_bilinear(&self, u: &[f64], w: &[f64], cell: usize) -> f64 {
        let c = self.grid.cell(cell);
        let mut ue = [0.0f64; 12];
        let mut we = [0.0f64; 12];
        for (k, &node) in c.node_ids.iter().enumerate() {
            ue[2 * k] = u[2 * node];
            ue[2 * k + 1] = u[2 * node + 1];
            we[2 * k] = w[2 * node];
            we[2 * k + 1] = w[2 * node + 1];
        }
        let mut acc = 0.0;
        for i in 0..12 {
            let mut row = 0.0;
            for j in 0..12 {
                row += self.k0[i][j] * ue[j];
            }
            acc += we[i] * row;
        }
        acc
    }

    /// Assemble and solve `K u = f` on the given field.
    pub fn assemble_solve(&self, field: &DensityField) -> Result<SolveResult> {
        self.solve_inner(field, false)
    }

    /// As `assemble_solve`, additionally solving the adjoint `K lambda = l`
    /// for mechanism sensitivities.
    pub fn assemble_solve_with_adjoint(&self, field: &DensityField) -> Result<SolveResult> {
        self.solve_inner(field, true)
    }

    fn solve_inner(&self, field: &DensityField, adjoint: bool) -> Result<SolveResult> {
        let chol = self.factor(field)?;
        let u = self.solve_rhs(&chol, &self.f);
        let compliance = 0.5 * self.f.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        if !compliance.is_finite() {
            return Err(Error::AnalysisFailure("non-finite compliance".into()));
        }
        let output_disp = self.output.as_ref().map(|port| {
            port.dofs.iter().map(|&(d, w)| w * u[d]).sum::<f64>()
        });
        let cell_energy: Vec<f64> = (0..self.grid.n_cells())
            .map(|c| 0.5 * self.cell_bilinear(&u, &u, c))
            .collect();
        let cross_energy = if adjoint {
            let port = self.output.as_ref().ok_or_else(|| {
                Error::invalid("adjoint solve requires an output port".to_string())
            })?;
            let mut l = vec![0.0; self.f.len()];
            for &(d, w) in &port.dofs {
                l[d] += w;
            }
            let lambda = self.solve_rhs(&chol, &l);
            Some(
                (0..self.grid.n_cells())
                    .map(|c| self.cell_bilinear(&u, &lambda, c))
                    .collect(),
            )
        } else {
            None
        };
        Ok(SolveResult {
            u,
            compliance,
            output_disp,
            cell_energy,
            cross_energy,
        })
    }

    /// Objective value and its per-cell density derivative.
    ///
    /// Compliance: `Phi = 0.5 f^T u`, `dPhi/drho_i = -0.5 (1 - rho_min)
    /// u_e^T K0 u_e` (self-adjoint). Mechanism: `Phi = -S D / (0.5 f^T u)`
    /// with the adjoint chain through `l`.
    pub fn objective_from_solve(
        &self,
        kind: ObjectiveKind,
        s_scale: f64,
        field: &DensityField,
        solve: &SolveResult,
    ) -> Result<(f64, Vec<f64>)> {
        let n = self.grid.n_cells();
        let one_minus = 1.0 - field.rho_min;
        match kind {
            ObjectiveKind::Compliance => {
                let dphi = (0..n).map(|c| -one_minus * solve.cell_energy[c]).collect();
                Ok((solve.compliance, dphi))
            }
            ObjectiveKind::Mechanism => {
                let d_out = solve.output_disp.ok_or_else(|| {
                    Error::invalid("mechanism objective requires an output port".to_string())
                })?;
                let cross = solve.cross_energy.as_ref().ok_or_else(|| {
                    Error::invalid("mechanism objective requires the adjoint solve".to_string())
                })?;
                let se = solve.compliance;
                let phi = -s_scale * d_out / se;
                let dphi = (0..n)
                    .map(|c| {
                        let dd = -one_minus * cross[c];
                        let dse = -one_minus * solve.cell_energy[c];
                        -s_scale * (dd * se - d_out * dse) / (se * se)
                    })
                    .collect();
                Ok((phi, dphi))
            }
        }
    }

    /// Full objective + gradient w.r.t. mask parameters.
    pub fn objective_and_gradient(
        &self,
        masks: &MaskSet,
        kind: ObjectiveKind,
        s_scale: f64,
        rho_min: f64,
    ) -> Result<(f64, Vec<f64>)> {
        if kind == ObjectiveKind::Mechanism && self.output.is_none() {
            return Err(Error::invalid(
                "mechanism objective requires an output port".to_string(),
            ));
        }
        let field = mask::evaluate_field(&self.grid, masks, rho_min);
        let solve = match kind {
            ObjectiveKind::Compliance => self.assemble_solve(&field)?,
            ObjectiveKind::Mechanism => self.assemble_solve_with_adjoint(&field)?,
        };
        let (phi, dphi) = self.objective_from_solve(kind, s_scale, &field, &solve)?;
        let mut grad = vec![0.0; masks.dim()];
        mask::accumulate_chain(&self.grid, masks, &dphi, &mut grad);
        Ok((phi, grad))
    }
}

/// Per-cell strain energy density `scale_i * 0.5 u_e^T K0 u_e`, normalized
/// so the maximum over cells is 1 (all-zero fields stay zero).
pub fn strain_energy_density(model: &FEModel, field: &DensityField, solve: &SolveResult) -> Vec<f64> {
    let mut sed: Vec<f64> = (0..model.grid.n_cells())
        .map(|c| model.interp(field, c) * solve.cell_energy[c])
        .collect();
    let max = sed.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        for v in &mut sed {
            *v /= max;
        }
    }
    sed
}
