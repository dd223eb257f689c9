//! Two-stage sequence-of-length-scales driver: Stage I shakes out a
//! topology under the volume constraint alone, lowering the volume fraction
//! until the maximum length scale holds; Stage II imposes the full
//! constraint set and co-adjusts the volume fraction and the relaxation
//! tolerances until a solution is accepted. Positive-mask runs delete masks
//! that only cover unloaded cells after every optimization step.

use std::cell::RefCell;

use crate::error::Result;
use crate::fem::{self, FEModel, ObjectiveKind};
use crate::grid::HexGrid;
use crate::lengthscale::{self, LengthScaleSpec, Regions};
use crate::mask::{self, DensityField, MaskSet, Polarity};
use crate::optimizer::{self, Evaluation, NlpProblem, NlpResult};
use crate::postproc;
use crate::skeleton::{self, SkeletonResult};

#[derive(Debug, Clone)]
pub struct SlsConfig {
    pub vf_init: f64,
    pub vf_min: f64,
    pub vf_max: f64,
    /// Starting relaxation tolerance (eps1 = eps2).
    pub tol_init: f64,
    /// Increment applied when both length scales are violated.
    pub delta_eps: f64,
    /// Marginal increment for the single-violation cases.
    pub eps_int: f64,
    pub ls: LengthScaleSpec,
    /// Function evaluations per optimization step.
    pub step_evals: usize,
    /// Cap on the number of optimization steps over the whole run.
    pub max_steps: usize,
    pub total_eval_budget: usize,
    /// Normalized strain-energy threshold below which covered cells count
    /// as unloaded for positive-mask deletion.
    pub sed_threshold: f64,
    /// Rebuild skeleton/regions at every optimizer outer iteration (not
    /// just between steps).
    pub refresh_regions_every_outer: bool,
    /// Optional alpha schedule appended after the main run.
    pub alpha_continuation: Vec<f64>,
    /// Bounds and seeding radius for the semi-axes.
    pub max_radius: f64,
}

impl SlsConfig {
    pub fn defaults(ls: LengthScaleSpec) -> Self {
        SlsConfig {
            vf_init: 0.2,
            vf_min: 0.1,
            vf_max: 0.5,
            tol_init: 1.0,
            delta_eps: 10.0,
            eps_int: 1.0,
            ls,
            step_evals: 100,
            max_steps: 40,
            total_eval_budget: 4000,
            sed_threshold: 1e-6,
            refresh_regions_every_outer: true,
            alpha_continuation: Vec::new(),
            max_radius: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    I,
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlsStatus {
    Accepted,
    BudgetExhausted,
    StepLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage2Action {
    /// All constraints met: stop and accept.
    Accept,
    /// Minimum length scale starved for volume: raise vf, relax marginally.
    RaiseVf,
    /// Maximum length scale violated: shed volume, relax marginally.
    LowerVf,
    /// Both violated: relax by the full increment, keep vf.
    RelaxBoth,
    /// Volume constraint itself violated: nudge vf up and retry.
    VolumeInfeasible,
}

/// The Stage-II decision table on the assessed constraint values.
pub fn stage2_action(g1: f64, gmin: f64, gmax: f64, eps1: f64, eps2: f64) -> Stage2Action {
    if g1 > 0.0 {
        return Stage2Action::VolumeInfeasible;
    }
    match (gmin <= eps1, gmax <= eps2) {
        (true, true) => Stage2Action::Accept,
        (false, true) => Stage2Action::RaiseVf,
        (true, false) => Stage2Action::LowerVf,
        (false, false) => Stage2Action::RelaxBoth,
    }
}

/// Delete positive masks whose covered cells all fall below the normalized
/// strain-energy threshold (islands and dangling appendages). The last
/// remaining mask is never deleted.
pub fn mask_deletion(
    grid: &HexGrid,
    masks: &MaskSet,
    sed_norm: &[f64],
    threshold: f64,
) -> (MaskSet, usize) {
    if masks.polarity != Polarity::Positive || masks.masks.len() <= 1 {
        return (masks.clone(), 0);
    }
    let mut keep = Vec::with_capacity(masks.masks.len());
    let mut deleted = 0;
    for m in &masks.masks {
        let mut covered = 0usize;
        let mut all_dead = true;
        for cell in grid.cells() {
            if mask::signed_measure(m, cell.centroid) <= 0.0 {
                covered += 1;
                if sed_norm[cell.id] >= threshold {
                    all_dead = false;
                    break;
                }
            }
        }
        if covered > 0 && all_dead {
            deleted += 1;
        } else {
            keep.push(*m);
        }
    }
    if keep.is_empty() {
        // keep the least-useless mask rather than none
        keep.push(masks.masks[0]);
        deleted -= 1;
    }
    let out = MaskSet {
        masks: keep,
        ..masks.clone()
    };
    (out, deleted)
}

#[derive(Debug, Clone)]
pub struct HistoryRow {
    pub eval: usize,
    pub phi: f64,
    pub g1: f64,
    pub gmin: f64,
    pub gmax: f64,
    pub vf: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub bwi: f64,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub stage: Stage,
    pub action: Option<Stage2Action>,
    pub vf: f64,
    pub eps1: f64,
    pub evals: usize,
    pub masks_deleted: usize,
}

pub struct SlsOutcome {
    pub status: SlsStatus,
    pub stage1_exhausted: bool,
    pub masks: MaskSet,
    pub field: DensityField,
    pub skeleton: SkeletonResult,
    pub regions: Regions,
    pub history: Vec<HistoryRow>,
    pub steps: Vec<StepRecord>,
    pub vf: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub phi: f64,
    pub g1: f64,
    pub gmin: f64,
    pub gmax: f64,
    pub bwi: f64,
    pub evals_used: usize,
    pub masks_deleted: usize,
}

pub struct SlsDriver {
    pub model: FEModel,
    pub kind: ObjectiveKind,
    pub s_scale: f64,
    pub rho_min: f64,
    pub cfg: SlsConfig,
}

struct Assessment {
    field: DensityField,
    skeleton: SkeletonResult,
    regions: Regions,
    phi: f64,
    g1: f64,
    gmin: f64,
    gmax: f64,
}

impl SlsDriver {
    fn grid(&self) -> &HexGrid {
        self.model.grid()
    }

    fn solve_for(&self, field: &DensityField) -> Result<fem::SolveResult> {
        match self.kind {
            ObjectiveKind::Compliance => self.model.assemble_solve(field),
            ObjectiveKind::Mechanism => self.model.assemble_solve_with_adjoint(field),
        }
    }

    fn lower_ab(&self, masks: &MaskSet) -> f64 {
        match masks.polarity {
            Polarity::Negative => self.cfg.ls.min_ls.min(self.cfg.max_radius * 0.99),
            Polarity::Positive => 1e-2,
        }
    }

    fn bounds(&self, masks: &MaskSet) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = self.grid().bbox();
        let m_r = self.cfg.max_radius;
        let lower_ab = self.lower_ab(masks);
        let vp = masks.vars_per_mask();
        let mut lower = Vec::with_capacity(masks.dim());
        let mut upper = Vec::with_capacity(masks.dim());
        for _ in 0..masks.masks.len() {
            lower.push(lo[0] - m_r);
            upper.push(hi[0] + m_r);
            lower.push(lo[1] - m_r);
            upper.push(hi[1] + m_r);
            lower.push(lower_ab);
            upper.push(m_r);
            if vp == 5 {
                lower.push(lower_ab);
                upper.push(m_r);
                // orientations live on the circle; wide finite box, reported
                // wrapped to [-pi, pi]
                lower.push(-16.0 * std::f64::consts::PI);
                upper.push(16.0 * std::f64::consts::PI);
            }
        }
        (lower, upper)
    }

    fn assess(&self, masks: &MaskSet) -> Result<Assessment> {
        let field = mask::evaluate_field(self.grid(), masks, self.rho_min);
        let skeleton = skeleton::skeletonize(self.grid(), &field);
        let regions = lengthscale::build_regions(self.grid(), &skeleton, &self.cfg.ls);
        let solve = self.solve_for(&field)?;
        let (phi, _) = self
            .model
            .objective_from_solve(self.kind, self.s_scale, &field, &solve)?;
        let gmin = lengthscale::g_min(&field, &regions, &self.cfg.ls);
        let gmax = lengthscale::g_max(&field, &regions, &self.cfg.ls);
        Ok(Assessment {
            g1: field.volume(),
            field,
            skeleton,
            regions,
            phi,
            gmin,
            gmax,
        })
    }

    /// One budgeted optimization step from `masks` at fixed `vf`/`eps`.
    #[allow(clippy::too_many_arguments)]
    fn optimize_step(
        &self,
        masks: &MaskSet,
        vf: f64,
        eps: (f64, f64),
        with_ls: bool,
        start_regions: Regions,
        history: &mut Vec<HistoryRow>,
        budget: usize,
    ) -> Result<(MaskSet, NlpResult)> {
        let grid = self.grid();
        let n_cells = grid.n_cells() as f64;
        let v_star = vf * n_cells;
        let template = masks.clone();
        let (lower, upper) = self.bounds(masks);

        let regions = RefCell::new(start_regions);
        let last_rho = RefCell::new(None::<Vec<f64>>);
        let history = RefCell::new(history);

        let eval = |x: &[f64]| -> Result<Evaluation> {
            let m = template.with_vector(x)?;
            let field = mask::evaluate_field(grid, &m, self.rho_min);
            let solve = self.solve_for(&field)?;
            let (phi, dphi) = self
                .model
                .objective_from_solve(self.kind, self.s_scale, &field, &solve)?;
            let regions = regions.borrow();
            let g1 = field.volume() - v_star;
            let gmin = lengthscale::g_min(&field, &regions, &self.cfg.ls);
            let gmax = lengthscale::g_max(&field, &regions, &self.cfg.ls);

            let mut grad = vec![0.0; m.dim()];
            let ones = vec![1.0; grid.n_cells()];
            let (cons, cons_grads) = if with_ls {
                let (dmin, dmax) = lengthscale::measure_drho(&field, &regions, &self.cfg.ls);
                let mut outs = vec![
                    vec![0.0; m.dim()],
                    vec![0.0; m.dim()],
                    vec![0.0; m.dim()],
                    vec![0.0; m.dim()],
                ];
                mask::accumulate_chain_multi(
                    grid,
                    &m,
                    &[&dphi, &ones, &dmin, &dmax],
                    &mut outs,
                );
                let dgmax = outs.pop().expect("four outputs");
                let dgmin = outs.pop().expect("four outputs");
                let dg1 = outs.pop().expect("four outputs");
                grad = outs.pop().expect("four outputs");
                (
                    vec![g1, gmin - eps.0, gmax - eps.1],
                    vec![dg1, dgmin, dgmax],
                )
            } else {
                let mut outs = vec![vec![0.0; m.dim()], vec![0.0; m.dim()]];
                mask::accumulate_chain_multi(grid, &m, &[&dphi, &ones], &mut outs);
                let dg1 = outs.pop().expect("two outputs");
                grad = outs.pop().expect("two outputs");
                (vec![g1], vec![dg1])
            };

            let mut hist = history.borrow_mut();
            let eval_no = hist.len() + 1;
            hist.push(HistoryRow {
                eval: eval_no,
                phi,
                g1,
                gmin,
                gmax,
                vf,
                eps1: eps.0,
                eps2: eps.1,
                bwi: postproc::bwi(&field),
            });
            *last_rho.borrow_mut() = Some(field.rho);
            Ok(Evaluation {
                f: phi,
                grad,
                cons,
                cons_grads,
            })
        };

        let refresh = self.cfg.refresh_regions_every_outer && with_ls;
        let on_outer: Option<Box<dyn FnMut(usize) -> bool>> = if refresh {
            Some(Box::new(|outer: usize| -> bool {
                if outer == 0 {
                    return false;
                }
                let Some(rho) = last_rho.borrow().clone() else {
                    return false;
                };
                let field = DensityField::from_values(rho, self.rho_min);
                let skel = skeleton::skeletonize(grid, &field);
                *regions.borrow_mut() = lengthscale::build_regions(grid, &skel, &self.cfg.ls);
                true
            }))
        } else {
            None
        };

        let problem = NlpProblem {
            x0: masks.to_vector(),
            lower,
            upper,
            n_cons: if with_ls { 3 } else { 1 },
            eval: Box::new(eval),
            eval_budget: budget,
            on_outer,
        };
        let nlp = optimizer::minimize(problem);
        let out = template.with_vector(&nlp.x)?;
        Ok((out, nlp))
    }

    fn delete_step(&self, masks: MaskSet) -> Result<(MaskSet, usize)> {
        if masks.polarity != Polarity::Positive {
            return Ok((masks, 0));
        }
        let field = mask::evaluate_field(self.grid(), &masks, self.rho_min);
        let solve = self.solve_for(&field)?;
        let sed = fem::strain_energy_density(&self.model, &field, &solve);
        Ok(mask_deletion(
            self.grid(),
            &masks,
            &sed,
            self.cfg.sed_threshold,
        ))
    }

    pub fn run(&self, masks0: MaskSet) -> Result<SlsOutcome> {
        let cfg = &self.cfg;
        let n_cells = self.grid().n_cells() as f64;
        let mut masks = masks0;
        let mut vf = cfg.vf_init.clamp(cfg.vf_min, cfg.vf_max);
        let mut eps1 = cfg.tol_init;
        let mut eps2 = cfg.tol_init;
        let mut history: Vec<HistoryRow> = Vec::new();
        let mut steps: Vec<StepRecord> = Vec::new();
        let mut evals_used = 0usize;
        let mut stage1_exhausted = false;
        let mut deleted_total = 0usize;
        let mut status = SlsStatus::StepLimit;

        let mut assessment = self.assess(&masks)?;

        // Stage I: volume constraint only, shrink vf until max_ls holds
        loop {
            if steps.len() >= cfg.max_steps {
                break;
            }
            let budget = cfg.step_evals.min(cfg.total_eval_budget - evals_used);
            if budget == 0 {
                status = SlsStatus::BudgetExhausted;
                break;
            }
            let regions = assessment.regions.clone();
            let (m2, nlp) =
                self.optimize_step(&masks, vf, (eps1, eps2), false, regions, &mut history, budget)?;
            evals_used += nlp.evals_used;
            masks = m2;
            let (m3, deleted) = self.delete_step(masks)?;
            masks = m3;
            deleted_total += deleted;
            assessment = self.assess(&masks)?;
            steps.push(StepRecord {
                stage: Stage::I,
                action: None,
                vf,
                eps1,
                evals: nlp.evals_used,
                masks_deleted: deleted,
            });
            if assessment.gmax <= eps2 {
                break;
            }
            if vf <= cfg.vf_min + 1e-12 {
                stage1_exhausted = true;
                break;
            }
            vf = (vf - assessment.gmax / n_cells).max(cfg.vf_min);
        }

        // Stage II: full constraint set with systematic vf/eps updates
        if status != SlsStatus::BudgetExhausted {
            loop {
                if steps.len() >= cfg.max_steps {
                    status = SlsStatus::StepLimit;
                    break;
                }
                let budget = cfg.step_evals.min(cfg.total_eval_budget - evals_used);
                if budget == 0 {
                    status = SlsStatus::BudgetExhausted;
                    break;
                }
                let regions = assessment.regions.clone();
                let (m2, nlp) =
                    self.optimize_step(&masks, vf, (eps1, eps2), true, regions, &mut history, budget)?;
                evals_used += nlp.evals_used;
                masks = m2;
                let (m3, deleted) = self.delete_step(masks)?;
                masks = m3;
                deleted_total += deleted;
                assessment = self.assess(&masks)?;
                let g1 = assessment.g1 - vf * n_cells;
                let action = stage2_action(g1, assessment.gmin, assessment.gmax, eps1, eps2);
                steps.push(StepRecord {
                    stage: Stage::II,
                    action: Some(action),
                    vf,
                    eps1,
                    evals: nlp.evals_used,
                    masks_deleted: deleted,
                });
                match action {
                    Stage2Action::Accept => {
                        status = SlsStatus::Accepted;
                        break;
                    }
                    Stage2Action::RaiseVf => {
                        vf = (vf + assessment.gmin / n_cells).min(cfg.vf_max);
                        eps1 += cfg.eps_int;
                        eps2 += cfg.eps_int;
                    }
                    Stage2Action::LowerVf => {
                        vf = (vf - assessment.gmax / n_cells).max(cfg.vf_min);
                        eps1 += cfg.eps_int;
                        eps2 += cfg.eps_int;
                    }
                    Stage2Action::RelaxBoth => {
                        eps1 += cfg.delta_eps;
                        eps2 += cfg.delta_eps;
                    }
                    Stage2Action::VolumeInfeasible => {
                        if vf >= cfg.vf_max - 1e-12 {
                            // vf is pinned at its cap, so the volume cannot
                            // be granted; the squeeze comes from the minimum
                            // length scale, relax the tolerances instead
                            eps1 += cfg.delta_eps;
                            eps2 += cfg.delta_eps;
                        } else {
                            vf = (vf + g1.max(1.0) / n_cells).min(cfg.vf_max);
                        }
                    }
                }
            }
        }

        // optional continuation on alpha, warm-started from the result
        for &alpha in &cfg.alpha_continuation {
            if evals_used >= cfg.total_eval_budget || steps.len() >= cfg.max_steps {
                break;
            }
            masks.alpha = alpha;
            assessment = self.assess(&masks)?;
            let budget = cfg.step_evals.min(cfg.total_eval_budget - evals_used);
            let regions = assessment.regions.clone();
            let (m2, nlp) =
                self.optimize_step(&masks, vf, (eps1, eps2), true, regions, &mut history, budget)?;
            evals_used += nlp.evals_used;
            masks = m2;
            let (m3, deleted) = self.delete_step(masks)?;
            masks = m3;
            deleted_total += deleted;
            assessment = self.assess(&masks)?;
            steps.push(StepRecord {
                stage: Stage::II,
                action: None,
                vf,
                eps1,
                evals: nlp.evals_used,
                masks_deleted: deleted,
            });
        }

        let g1 = assessment.g1 - vf * n_cells;
        let bwi = postproc::bwi(&assessment.field);
        Ok(SlsOutcome {
            status,
            stage1_exhausted,
            masks,
            phi: assessment.phi,
            g1,
            gmin: assessment.gmin,
            gmax: assessment.gmax,
            bwi,
            field: assessment.field,
            skeleton: assessment.skeleton,
            regions: assessment.regions,
            history,
            steps,
            vf,
            eps1,
            eps2,
            evals_used,
            masks_deleted: deleted_total,
        })
    }
}

/// Evenly spread `nx * ny` masks over the grid bounding box.
pub fn evenly_spread_masks(
    grid: &HexGrid,
    nx: usize,
    ny: usize,
    polarity: Polarity,
    shape: mask::MaskShape,
    alpha: f64,
    eta: f64,
    a_init: f64,
) -> Result<MaskSet> {
    let (lo, hi) = grid.bbox();
    let w = hi[0] - lo[0];
    let h = hi[1] - lo[1];
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = lo[0] + (i as f64 + 0.5) * w / nx as f64;
            let y = lo[1] + (j as f64 + 0.5) * h / ny as f64;
            out.push(mask::EllipticalMask {
                x,
                y,
                a: a_init,
                b: a_init,
                theta: 0.0,
            });
        }
    }
    MaskSet::new(out, polarity, shape, alpha, eta)
}
