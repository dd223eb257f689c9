//! Bounded, inequality-constrained, gradient-based minimizer under a strict
//! function-evaluation budget: an augmented-Lagrangian outer loop over
//! `g_k(x) <= 0` with box-projected L-BFGS inner solves.
//!
//! One "evaluation" is one call of the combined objective+constraints
//! callback, line-search probes included. Every accepted inner step
//! decreases the current augmented objective; iterates stay inside the box.

use crate::error::Result;

/// Combined objective/constraint evaluation at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub f: f64,
    pub grad: Vec<f64>,
    /// Constraint values, `g_k <= 0` feasible.
    pub cons: Vec<f64>,
    pub cons_grads: Vec<Vec<f64>>,
}

pub type EvalFn<'a> = Box<dyn FnMut(&[f64]) -> Result<Evaluation> + 'a>;

pub struct NlpProblem<'a> {
    pub x0: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub n_cons: usize,
    pub eval: EvalFn<'a>,
    /// Maximum number of objective+constraint evaluations.
    pub eval_budget: usize,
    /// Hook run at the start of every outer iteration; returning `true`
    /// signals that the constraint definitions changed (e.g. refreshed
    /// length-scale regions) and forces a re-evaluation.
    pub on_outer: Option<Box<dyn FnMut(usize) -> bool + 'a>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlpStatus {
    Converged,
    BudgetExhausted,
    Stalled,
}

#[derive(Debug, Clone)]
pub struct NlpResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub cons: Vec<f64>,
    /// Augmented-Lagrangian multiplier estimates, one per constraint.
    pub multipliers: Vec<f64>,
    pub evals_used: usize,
    pub status: NlpStatus,
    /// Projected-gradient infinity norm of the Lagrangian at the result.
    pub first_order: f64,
    /// Raw objective at every accepted iterate (initial point first).
    pub accepted_objectives: Vec<f64>,
}

const FIRST_ORDER_TOL: f64 = 1e-6;
const STEP_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-8;
const LBFGS_MEMORY: usize = 10;
const MAX_OUTER: usize = 80;
const MAX_BACKTRACKS: usize = 40;

fn clamp(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].max(lo[i]).min(hi[i]);
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Augmented objective `f + sum_k [max(0, l_k + mu g_k)^2 - l_k^2] / (2 mu)`.
fn al_value(ev: &Evaluation, lambda: &[f64], mu: f64) -> f64 {
    let mut v = ev.f;
    for (k, &g) in ev.cons.iter().enumerate() {
        let t = (lambda[k] + mu * g).max(0.0);
        v += (t * t - lambda[k] * lambda[k]) / (2.0 * mu);
    }
    v
}

fn al_gradient(ev: &Evaluation, lambda: &[f64], mu: f64) -> Vec<f64> {
    let mut g = ev.grad.clone();
    for (k, &c) in ev.cons.iter().enumerate() {
        let w = (lambda[k] + mu * c).max(0.0);
        if w > 0.0 {
            for (gi, ci) in g.iter_mut().zip(&ev.cons_grads[k]) {
                *gi += w * ci;
            }
        }
    }
    g
}

/// Infinity norm of `x - P(x - g)`, the box-projected first-order measure.
fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut m = 0.0f64;
    for i in 0..x.len() {
        let p = (x[i] - g[i]).max(lo[i]).min(hi[i]);
        m = m.max((x[i] - p).abs());
    }
    m
}

struct LbfgsMemory {
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    rho: Vec<f64>,
}

impl LbfgsMemory {
    fn new() -> Self {
        LbfgsMemory {
            s: Vec::new(),
            y: Vec::new(),
            rho: Vec::new(),
        }
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if sy > 1e-10 * inf_norm(&s) * inf_norm(&y) && sy > 0.0 {
            if self.s.len() == LBFGS_MEMORY {
                self.s.remove(0);
                self.y.remove(0);
                self.rho.remove(0);
            }
            self.rho.push(1.0 / sy);
            self.s.push(s);
            self.y.push(y);
        }
    }

    /// Two-loop recursion for `-H g`.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let m = self.s.len();
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            alpha[i] = self.rho[i] * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if m > 0 {
            let y = &self.y[m - 1];
            let gamma = dot(&self.s[m - 1], y) / dot(y, y).max(1e-300);
            for qj in q.iter_mut() {
                *qj *= gamma;
            }
        }
        for i in 0..m {
            let beta = self.rho[i] * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        for qj in q.iter_mut() {
            *qj = -*qj;
        }
        q
    }
}

/// Minimize the problem. Stops on budget exhaustion, a first-order measure
/// below 1e-6, or steps below 1e-10.
pub fn minimize(problem: NlpProblem) -> NlpResult {
    let NlpProblem {
        x0,
        lower,
        upper,
        n_cons,
        mut eval,
        eval_budget,
        mut on_outer,
    } = problem;

    let n = x0.len();
    let budget = eval_budget.max(1);
    let mut x = x0;
    clamp(&mut x, &lower, &upper);

    let mut evals = 0usize;
    let mut accepted = Vec::new();

    macro_rules! try_eval {
        ($xt:expr, $fallback:expr) => {{
            if evals >= budget {
                None
            } else {
                evals += 1;
                match eval($xt) {
                    Ok(ev) => Some(ev),
                    Err(_) => {
                        return $fallback(NlpStatus::Stalled, evals);
                    }
                }
            }
        }};
    }

    let mut lambda = vec![0.0f64; n_cons];

    // first evaluation
    evals += 1;
    let mut ev = match eval(&x) {
        Ok(e) => e,
        Err(_) => {
            return NlpResult {
                x,
                f: f64::NAN,
                cons: vec![f64::NAN; n_cons],
                multipliers: lambda,
                evals_used: evals,
                status: NlpStatus::Stalled,
                first_order: f64::NAN,
                accepted_objectives: accepted,
            };
        }
    };
    accepted.push(ev.f);

    let viol = |cons: &[f64]| -> f64 { cons.iter().fold(0.0f64, |m, &g| m.max(g.max(0.0))) };

    // penalty start balancing objective and squared violation
    let v0 = ev.cons.iter().map(|&g| g.max(0.0).powi(2)).sum::<f64>();
    let mut mu = if n_cons == 0 || v0 == 0.0 {
        10.0
    } else {
        (10.0 * ev.f.abs().max(1.0) / v0).clamp(1e-4, 1e4)
    };

    let mut prev_viol = viol(&ev.cons);
    // unconstrained problems run one outer pass to full precision; the
    // constrained path tightens the inner tolerance per outer iteration
    let mut inner_tol = if n_cons == 0 {
        1e-9
    } else {
        1e-3 * (1.0 + inf_norm(&ev.grad))
    };
    let mut first_order = f64::INFINITY;
    let mut status = NlpStatus::BudgetExhausted;
    let mut inner_made_progress = true;

    let make_result = |x: Vec<f64>,
                       ev: &Evaluation,
                       lambda: Vec<f64>,
                       first_order: f64,
                       accepted: Vec<f64>,
                       status: NlpStatus,
                       evals: usize| NlpResult {
        x,
        f: ev.f,
        cons: ev.cons.clone(),
        multipliers: lambda,
        evals_used: evals,
        status,
        first_order,
        accepted_objectives: accepted,
    };

    'outer: for outer in 0..MAX_OUTER {
        if let Some(hook) = on_outer.as_mut() {
            if hook(outer) {
                // constraint data changed under our feet; refresh the cache
                let fallback = |st, ev_used| make_result(x.clone(), &ev, lambda.clone(), first_order, accepted.clone(), st, ev_used);
                match try_eval!(&x, fallback) {
                    Some(e) => ev = e,
                    None => break 'outer,
                }
            }
        }

        let mut mem = LbfgsMemory::new();
        let mut g_al = al_gradient(&ev, &lambda, mu);
        let mut first_step = true;

        // inner projected quasi-Newton loop
        loop {
            let pg = projected_gradient_norm(&x, &g_al, &lower, &upper);
            if pg <= inner_tol.max(1e-9) {
                break;
            }
            if evals >= budget {
                break 'outer;
            }

            let mut d = mem.direction(&g_al);
            if dot(&d, &g_al) >= -1e-12 * inf_norm(&d) * inf_norm(&g_al) {
                d = g_al.iter().map(|&g| -g).collect();
            }

            let mut t = if first_step {
                (1.0 / inf_norm(&g_al).max(1e-12)).min(1.0)
            } else {
                1.0
            };
            let al0 = al_value(&ev, &lambda, mu);
            let mut accepted_step = false;
            for _ in 0..MAX_BACKTRACKS {
                let mut xt = x.clone();
                for i in 0..n {
                    xt[i] += t * d[i];
                }
                clamp(&mut xt, &lower, &upper);
                let step: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
                let step_norm = inf_norm(&step);
                if step_norm < STEP_TOL * (1.0 + inf_norm(&x)) {
                    break;
                }
                let fallback = |st, ev_used| make_result(x.clone(), &ev, lambda.clone(), first_order, accepted.clone(), st, ev_used);
                let Some(evt) = try_eval!(&xt, fallback) else {
                    break 'outer;
                };
                let descent = dot(&g_al, &step);
                if al_value(&evt, &lambda, mu) <= al0 + 1e-4 * descent {
                    let g_new = al_gradient(&evt, &lambda, mu);
                    let y: Vec<f64> = g_new.iter().zip(&g_al).map(|(a, b)| a - b).collect();
                    mem.push(step, y);
                    x = xt;
                    ev = evt;
                    g_al = g_new;
                    accepted.push(ev.f);
                    accepted_step = true;
                    first_step = false;
                    break;
                }
                t *= 0.5;
            }
            if !accepted_step {
                // no acceptable step along this direction
                inner_made_progress = false;
                break;
            }
            inner_made_progress = true;
        }

        if n_cons == 0 {
            first_order = projected_gradient_norm(&x, &ev.grad, &lower, &upper);
            status = if first_order <= FIRST_ORDER_TOL {
                NlpStatus::Converged
            } else if evals >= budget {
                NlpStatus::BudgetExhausted
            } else {
                NlpStatus::Stalled
            };
            break 'outer;
        }

        // multiplier and penalty updates
        for (k, l) in lambda.iter_mut().enumerate() {
            *l = (*l + mu * ev.cons[k]).max(0.0).min(1e12);
        }
        let v = viol(&ev.cons);
        let lagr_grad = al_gradient(&ev, &lambda, 1e-12); // plain Lagrangian gradient
        first_order = projected_gradient_norm(&x, &lagr_grad, &lower, &upper);
        let f_scale = 1.0 + ev.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if v <= FEAS_TOL && first_order <= FIRST_ORDER_TOL * f_scale {
            status = NlpStatus::Converged;
            break 'outer;
        }
        if !inner_made_progress && v <= FEAS_TOL {
            // feasible and no descent direction accepted: practical optimum
            status = NlpStatus::Converged;
            break 'outer;
        }
        if v > 0.25 * prev_viol && outer > 0 {
            mu = (mu * 4.0).min(1e10);
        }
        prev_viol = v;
        inner_tol = (inner_tol * 0.3).max(1e-9);
        if evals >= budget {
            break 'outer;
        }
    }

    if n_cons > 0 && status == NlpStatus::BudgetExhausted {
        let v = viol(&ev.cons);
        let lagr_grad = al_gradient(&ev, &lambda, 1e-12);
        first_order = projected_gradient_norm(&x, &lagr_grad, &lower, &upper);
        let f_scale = 1.0 + ev.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if v <= FEAS_TOL && first_order <= FIRST_ORDER_TOL * f_scale {
            status = NlpStatus::Converged;
        }
    }

    make_result(x, &ev, lambda, first_order, accepted, status, evals)
}
