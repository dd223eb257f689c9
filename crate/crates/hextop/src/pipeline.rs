//! End-to-end orchestration: run a config to an output directory, verify
//! gradients, skeletonize standalone density files and re-render saved
//! states. The CLI is a thin wrapper over these entry points.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::config::{BuiltProblem, RunConfig};
use crate::error::{Error, Result};
use crate::fem::ObjectiveKind;
use crate::grid::HexGrid;
use crate::io;
use crate::lengthscale::{self, Violations};
use crate::mask::{self, DensityField};
use crate::postproc::{self, ProjectedDesign};
use crate::render::{self, Overlays};
use crate::skeleton::{self, SkeletonResult};
use crate::sls::{SlsOutcome, SlsStatus};

/// Density thresholds delimiting "solid" and "void" in the violation
/// diagnostics (the paper counts filled cells at rho > 0.99).
pub const SOLID_TOL: f64 = 0.99;
pub const VOID_TOL: f64 = 0.01;

pub struct RunArtifacts {
    pub outdir: PathBuf,
    pub grid: Arc<HexGrid>,
    pub outcome: SlsOutcome,
    pub projected: ProjectedDesign,
    pub violations: Violations,
    pub support_nodes: Vec<usize>,
    pub load_nodes: Vec<usize>,
}

/// Run a config end to end and write all artifacts into `outdir`.
pub fn run_to_dir(cfg: &RunConfig, outdir: &Path) -> Result<RunArtifacts> {
    let built: BuiltProblem = cfg.build()?;
    let BuiltProblem {
        grid,
        driver,
        masks0,
        support_nodes,
        load_nodes,
        smooth_steps,
    } = built;

    let outcome = driver.run(masks0)?;

    let violations = lengthscale::violations(&outcome.field, &outcome.regions, SOLID_TOL, VOID_TOL);
    let projected = postproc::project_and_evaluate(
        &driver.model,
        &outcome.field,
        &outcome.regions,
        driver.kind,
        driver.s_scale,
        smooth_steps,
    )?;

    io::ensure_dir(outdir)?;
    io::atomic_write(&outdir.join("config.toml"), &cfg.to_toml())?;
    io::atomic_write(&outdir.join("density.csv"), &io::density_csv(&grid, &outcome.field))?;
    io::atomic_write(&outdir.join("masks.csv"), &io::masks_csv(&outcome.masks))?;
    io::atomic_write(&outdir.join("history.csv"), &io::history_csv(&outcome.history))?;
    io::atomic_write(&outdir.join("regions.csv"), &io::regions_csv(&outcome.regions))?;

    let ls = &driver.cfg.ls;
    let final_svg = render::render_svg(
        &grid,
        &outcome.field,
        &Overlays {
            masks: Some(&outcome.masks),
            violations: Some(&violations),
            ls_inset: Some((ls.min_ls, ls.max_ls)),
            ..Overlays::default()
        },
    );
    io::atomic_write(&outdir.join("final.svg"), &final_svg)?;

    let skel_svg = render::render_svg(
        &grid,
        &outcome.field,
        &Overlays {
            skeleton: Some(&outcome.skeleton.cells),
            ..Overlays::default()
        },
    );
    io::atomic_write(&outdir.join("skeleton.svg"), &skel_svg)?;

    let proj_field = postproc::binary_field(&projected.solid, outcome.field.rho_min);
    let proj_svg = render::render_svg(
        &grid,
        &proj_field,
        &Overlays {
            boundary: Some(&projected.boundary),
            ls_inset: Some((ls.min_ls, ls.max_ls)),
            ..Overlays::default()
        },
    );
    io::atomic_write(&outdir.join("projected.svg"), &proj_svg)?;

    let status = match outcome.status {
        SlsStatus::Accepted => "accepted",
        SlsStatus::BudgetExhausted => "budget-exhausted",
        SlsStatus::StepLimit => "step-limit",
    };
    let report = io::ReportData {
        phi: outcome.phi,
        phi_projected: projected.phi,
        vf: outcome.vf,
        g1: outcome.g1,
        gmin: outcome.gmin,
        gmax: outcome.gmax,
        eps1: outcome.eps1,
        eps2: outcome.eps2,
        bwi: outcome.bwi,
        mask_count: outcome.masks.masks.len(),
        masks_deleted: outcome.masks_deleted,
        evals_used: outcome.evals_used,
        status: format!(
            "{status}{}",
            if outcome.stage1_exhausted {
                " (stage-1 exhausted at vf_min)"
            } else {
                ""
            }
        ),
        skeleton_cells: outcome.skeleton.cells.len(),
        blue_cells: violations.blue.len(),
        red_cells: violations.red.len(),
    };
    io::atomic_write(&outdir.join("report.txt"), &io::report_txt(&report))?;

    Ok(RunArtifacts {
        outdir: outdir.to_path_buf(),
        grid,
        outcome,
        projected,
        violations,
        support_nodes,
        load_nodes,
    })
}

#[derive(Debug, Clone)]
pub struct FdRow {
    pub component: usize,
    pub quantity: &'static str,
    pub analytic: f64,
    pub fd: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub rows: Vec<FdRow>,
    pub max_rel_err: f64,
}

impl FdReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Verify analytic gradients of the objective and all three constraint
/// measures against central finite differences at the config's initial
/// masks, on `samples` evenly spread components.
pub fn fd_check(cfg: &RunConfig, samples: usize) -> Result<FdReport> {
    let built = cfg.build()?;
    let grid = &built.grid;
    let driver = &built.driver;
    let mut masks = built.masks0;
    // stagger the seeded circles into generic ellipses: at exact a = b the
    // theta-derivative vanishes identically and central differences measure
    // nothing but solver roundoff
    for (j, m) in masks.masks.iter_mut().enumerate() {
        let t = (j % 7) as f64 / 7.0;
        m.a *= 1.0 + 0.12 * t;
        m.b *= 1.0 - 0.09 * t;
        m.theta = 0.15 + 0.3 * t;
        m.x += 0.2 * grid.cs() * (t - 0.5);
        m.y -= 0.15 * grid.cs() * (t - 0.5);
    }
    let rho_min = driver.rho_min;
    let ls = driver.cfg.ls;

    let field0 = mask::evaluate_field(grid, &masks, rho_min);
    let skel = skeleton::skeletonize(grid, &field0);
    let regions = lengthscale::build_regions(grid, &skel, &ls);

    // analytic gradients
    let (_, grad_phi) =
        driver
            .model
            .objective_and_gradient(&masks, driver.kind, driver.s_scale, rho_min)?;
    let mut grad_g1 = vec![0.0; masks.dim()];
    mask::accumulate_chain(grid, &masks, &vec![1.0; grid.n_cells()], &mut grad_g1);
    let (grad_gmin, grad_gmax) = lengthscale::gradients(grid, &field0, &regions, &ls, &masks);

    let values = |x: &[f64]| -> Result<[f64; 4]> {
        let m = masks.with_vector(x)?;
        let field = mask::evaluate_field(grid, &m, rho_min);
        let solve = match driver.kind {
            ObjectiveKind::Compliance => driver.model.assemble_solve(&field)?,
            ObjectiveKind::Mechanism => driver.model.assemble_solve_with_adjoint(&field)?,
        };
        let (phi, _) = driver
            .model
            .objective_from_solve(driver.kind, driver.s_scale, &field, &solve)?;
        Ok([
            phi,
            field.volume(),
            lengthscale::g_min(&field, &regions, &ls),
            lengthscale::g_max(&field, &regions, &ls),
        ])
    };

    let x0 = masks.to_vector();
    let dim = x0.len();
    let n = samples.max(1).min(dim);
    let stride = (dim as f64 / n as f64).max(1.0);
    let scales = [
        grad_phi.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        grad_g1.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        grad_gmin.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        grad_gmax.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    ];

    let mut rows = Vec::new();
    let mut max_rel: f64 = 0.0;
    for s in 0..n {
        let k = ((s as f64 * stride) as usize).min(dim - 1);
        let h = 1e-5 * (1.0 + x0[k].abs());
        let mut xp = x0.clone();
        xp[k] += h;
        let mut xm = x0.clone();
        xm[k] -= h;
        let vp = values(&xp)?;
        let vm = values(&xm)?;
        for (qi, name) in ["phi", "g1", "gmin", "gmax"].iter().enumerate() {
            let an = match qi {
                0 => grad_phi[k],
                1 => grad_g1[k],
                2 => grad_gmin[k],
                _ => grad_gmax[k],
            };
            let fd = (vp[qi] - vm[qi]) / (2.0 * h);
            let denom = an.abs().max(fd.abs()).max(1e-6 * scales[qi].max(1e-12));
            let rel = (an - fd).abs() / denom;
            max_rel = max_rel.max(rel);
            rows.push(FdRow {
                component: k,
                quantity: name,
                analytic: an,
                fd,
                rel_err: rel,
            });
        }
    }
    Ok(FdReport {
        rows,
        max_rel_err: max_rel,
    })
}

#[derive(Debug)]
pub struct SkeletonizeSummary {
    pub n_cols: usize,
    pub n_rows: usize,
    pub filled: usize,
    pub skeleton_cells: usize,
    pub iterations: usize,
    pub special_case: bool,
}

/// Standalone skeletonization of a density-grid CSV; writes the skeleton as
/// a 0/1 density CSV next to the summary returned.
pub fn skeletonize_file(input: &Path, output: &Path) -> Result<SkeletonizeSummary> {
    let text = io::read_to_string(input)?;
    let (n_cols, n_rows, rho) = io::parse_density_csv(input, &text)?;
    // adjacency is all that matters here; unit cell size
    let grid = HexGrid::new(n_cols, n_rows, 1.0)?;
    let field = DensityField::from_values(rho, 1e-3);
    let filled = field
        .rho
        .iter()
        .filter(|&&r| r >= skeleton::FILL_THRESHOLD)
        .count();
    let result: SkeletonResult = skeleton::skeletonize(&grid, &field);
    let mask = result.mask(grid.n_cells());
    let out_field = DensityField::from_values(
        mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        1e-3,
    );
    io::atomic_write(output, &io::density_csv(&grid, &out_field))?;
    Ok(SkeletonizeSummary {
        n_cols,
        n_rows,
        filled,
        skeleton_cells: result.cells.len(),
        iterations: result.iterations,
        special_case: result.special_case_triggered,
    })
}

/// Re-render a saved run directory (config.toml + density.csv + masks.csv)
/// into `render.svg`; the skeleton and violation markers are recomputed
/// from the stored density field.
pub fn render_state_dir(dir: &Path) -> Result<PathBuf> {
    let cfg_text = io::read_to_string(&dir.join("config.toml"))?;
    let cfg = RunConfig::from_toml(&cfg_text)?;
    let density_path = dir.join("density.csv");
    let (n_cols, n_rows, rho) = io::parse_density_csv(&density_path, &io::read_to_string(&density_path)?)?;
    if n_cols != cfg.grid.n_cols || n_rows != cfg.grid.n_rows {
        return Err(Error::Config(format!(
            "density.csv is {n_cols}x{n_rows} but config grid is {}x{}",
            cfg.grid.n_cols, cfg.grid.n_rows
        )));
    }
    let grid = HexGrid::new(cfg.grid.n_cols, cfg.grid.n_rows, cfg.grid.cs)?;
    let field = DensityField::from_values(rho, cfg.fe.rho_min);
    let masks_path = dir.join("masks.csv");
    let masks = io::parse_masks_csv(
        &masks_path,
        &io::read_to_string(&masks_path)?,
        cfg.masks.alpha,
        cfg.masks.eta,
    )?;
    let ls = crate::lengthscale::LengthScaleSpec::new(
        cfg.lengthscale.min_ls.resolve(cfg.grid.cs),
        cfg.lengthscale.max_ls.resolve(cfg.grid.cs),
        cfg.lengthscale.p,
    )?;
    let skel = skeleton::skeletonize(&grid, &field);
    let regions = lengthscale::build_regions(&grid, &skel, &ls);
    let violations = lengthscale::violations(&field, &regions, SOLID_TOL, VOID_TOL);
    let svg = render::render_svg(
        &grid,
        &field,
        &Overlays {
            masks: Some(&masks),
            skeleton: Some(&skel.cells),
            violations: Some(&violations),
            ls_inset: Some((ls.min_ls, ls.max_ls)),
            ..Overlays::default()
        },
    );
    let out = dir.join("render.svg");
    io::atomic_write(&out, &svg)?;
    Ok(out)
}
