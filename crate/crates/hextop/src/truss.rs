//! Closed-form solver for the three-truss example: strain energy, KKT
//! stationary points for p = 1 and p = 2 (three-member and two-member
//! skeletons) and feasibility bounds. Serves as the primary correctness
//! oracle for the numeric optimizer.

use crate::error::{Error, Result};
use crate::optimizer::{self, Evaluation, NlpProblem, NlpResult, NlpStatus};

/// `SE = C (x1 + x2 + x3) / (x1 x2 + x1 x3)` with `C = 1 / (2 sqrt(2))`.
pub const C: f64 = 0.353_553_390_593_273_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrussSkeleton {
    /// All three members retained.
    ThreeMember,
    /// `x2 = 0`; only the length-scale terms of `x1`, `x3` remain.
    TwoMember,
}

#[derive(Debug, Clone, Copy)]
pub struct TrussSpec {
    pub p: u32,
    pub v_star: f64,
    pub x_m: f64,
    pub eps1: f64,
    pub skeleton: TrussSkeleton,
}

impl TrussSpec {
    pub fn new(p: u32, v_star: f64, x_m: f64, eps1: f64, skeleton: TrussSkeleton) -> Result<Self> {
        if p != 1 && p != 2 {
            return Err(Error::invalid(format!("p must be 1 or 2, got {p}")));
        }
        if !(v_star > 0.0 && x_m > 0.0 && eps1 >= 0.0) {
            return Err(Error::invalid(format!(
                "require v_star > 0, x_m > 0, eps1 >= 0 (got {v_star}, {x_m}, {eps1})"
            )));
        }
        Ok(TrussSpec {
            p,
            v_star,
            x_m,
            eps1,
            skeleton,
        })
    }

    /// `g1 = x1 + x2 + x3 - V*`.
    pub fn g1(&self, x: [f64; 3]) -> f64 {
        x[0] + x[1] + x[2] - self.v_star
    }

    /// Length-scale constraint; only skeleton members contribute terms.
    pub fn g2(&self, x: [f64; 3]) -> f64 {
        let term = |w: f64| (self.x_m - w).powi(self.p as i32);
        match self.skeleton {
            TrussSkeleton::ThreeMember => term(x[0]) + term(x[1]) + term(x[2]) - self.eps1,
            TrussSkeleton::TwoMember => term(x[0]) + term(x[2]) - self.eps1,
        }
    }

    /// Whether any width assignment satisfies both constraints.
    pub fn is_feasible(&self) -> bool {
        kkt_solve(self).iter().any(|s| s.feasible)
    }
}

/// Strain energy of the assemblage for in-plane widths `(x1, x2, x3)`.
pub fn strain_energy(x1: f64, x2: f64, x3: f64) -> Result<f64> {
    if !(x1 > 0.0) || !(x2 + x3 > 0.0) {
        return Err(Error::invalid(format!(
            "no load path: x1 = {x1}, x2 + x3 = {}",
            x2 + x3
        )));
    }
    Ok(C * (x1 + x2 + x3) / (x1 * x2 + x1 * x3))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KktCase {
    /// Volume active, length scale slack.
    I,
    /// Length scale active, volume slack.
    II,
    /// Both active.
    III,
}

#[derive(Debug, Clone)]
pub struct KktSolution {
    pub case: KktCase,
    pub feasible: bool,
    /// Representative widths (continua are reported at their symmetric
    /// point); meaningful only when feasible.
    pub widths: [f64; 3],
    pub lambda1: f64,
    pub lambda2: f64,
    pub strain_energy: f64,
    /// `V*` range admitting this case, when the case imposes one.
    pub vstar_bounds: Option<(f64, f64)>,
    /// Lowest strain energy among the feasible cases of this spec.
    pub best: bool,
}

impl KktSolution {
    fn infeasible(case: KktCase, bounds: Option<(f64, f64)>) -> Self {
        KktSolution {
            case,
            feasible: false,
            widths: [f64::NAN; 3],
            lambda1: f64::NAN,
            lambda2: f64::NAN,
            strain_energy: f64::INFINITY,
            vstar_bounds: bounds,
            best: false,
        }
    }
}

/// Enumerate the KKT cases of the spec. Infeasible cases report the violated
/// `V*` bounds; when several cases are feasible the lowest-energy one is
/// flagged `best`.
pub fn kkt_solve(spec: &TrussSpec) -> Vec<KktSolution> {
    let mut out = match (spec.skeleton, spec.p) {
        (TrussSkeleton::ThreeMember, 1) => three_member_p1(spec),
        (TrussSkeleton::ThreeMember, 2) => three_member_p2(spec),
        (TrussSkeleton::TwoMember, _) => two_member(spec),
        _ => unreachable!("validated p"),
    };
    let best = out
        .iter()
        .enumerate()
        .filter(|(_, s)| s.feasible)
        .min_by(|a, b| a.1.strain_energy.total_cmp(&b.1.strain_energy))
        .map(|(i, _)| i);
    if let Some(i) = best {
        out[i].best = true;
    }
    out
}

fn se(x: [f64; 3]) -> f64 {
    strain_energy(x[0], x[1], x[2]).unwrap_or(f64::INFINITY)
}

fn three_member_p1(spec: &TrussSpec) -> Vec<KktSolution> {
    let (v, xm, e1) = (spec.v_star, spec.x_m, spec.eps1);
    let mut out = Vec::new();

    // Case I: x1 = V*/2, x2 + x3 = V*/2; feasible iff 3 x_m <= V* + eps1
    {
        let feasible = 3.0 * xm <= v + e1;
        if feasible {
            let x = [v / 2.0, v / 4.0, v / 4.0];
            out.push(KktSolution {
                case: KktCase::I,
                feasible: true,
                widths: x,
                lambda1: 4.0 * C / (v * v),
                lambda2: 0.0,
                strain_energy: se(x),
                vstar_bounds: Some((3.0 * xm - e1, f64::INFINITY)),
                best: false,
            });
        } else {
            out.push(KktSolution::infeasible(
                KktCase::I,
                Some((3.0 * xm - e1, f64::INFINITY)),
            ));
        }
    }

    // Case II: lambda2 = -C/x1^2 < 0, never a KKT point
    out.push(KktSolution::infeasible(KktCase::II, None));

    // Case III: active only on the knife edge V* = 3 x_m - eps1; the two
    // stationarity relations pin lambda1 - lambda2 = 4C/V*^2 only, so the
    // boundary representative lambda2 = 0 is reported
    {
        let target = 3.0 * xm - e1;
        if target > 0.0 && (v - target).abs() <= 1e-12 * target.max(1.0) {
            let x = [v / 2.0, v / 4.0, v / 4.0];
            out.push(KktSolution {
                case: KktCase::III,
                feasible: true,
                widths: x,
                lambda1: 4.0 * C / (v * v),
                lambda2: 0.0,
                strain_energy: se(x),
                vstar_bounds: Some((target, target)),
                best: false,
            });
        } else {
            out.push(KktSolution::infeasible(KktCase::III, Some((target, target))));
        }
    }
    out
}

fn three_member_p2(spec: &TrussSpec) -> Vec<KktSolution> {
    let (v, xm, e1) = (spec.v_star, spec.x_m, spec.eps1);
    let mut out = Vec::new();

    // Case I: x1 = V*/2; x2 free within the g2 ball slice; symmetric
    // representative x2 = x3 = V*/4 (the slice midpoint, where g2 is
    // smallest). Realistic bounds need D = -3V*^2 + 16 xm V* - 24 xm^2
    // + 8 eps1 >= 0, i.e. V* within 8xm/3 +- (2/3) sqrt(6 eps1 - 2 xm^2).
    {
        let disc = 6.0 * e1 - 2.0 * xm * xm;
        let bounds = if disc >= 0.0 {
            let half = 2.0 / 3.0 * disc.sqrt();
            Some((8.0 * xm / 3.0 - half, 8.0 * xm / 3.0 + half))
        } else {
            None
        };
        let d_big = -3.0 * v * v + 16.0 * xm * v - 24.0 * xm * xm + 8.0 * e1;
        if e1 > xm * xm / 3.0 && d_big >= 0.0 {
            let x = [v / 2.0, v / 4.0, v / 4.0];
            out.push(KktSolution {
                case: KktCase::I,
                feasible: true,
                widths: x,
                lambda1: 4.0 * C / (v * v),
                lambda2: 0.0,
                strain_energy: se(x),
                vstar_bounds: bounds,
                best: false,
            });
        } else {
            out.push(KktSolution::infeasible(KktCase::I, bounds));
        }
    }

    // Case II: volume slack, x_i = x_m + delta_i with
    // delta1 = C/(2 lambda2 x1^2), delta2 = C/(8 lambda2 x2^2); solved by
    // damped fixed point on (x1, x2). Requires eps1 > 0 and
    // V* > 3 x_m + delta1 + 2 delta2.
    {
        let mut pushed = false;
        if e1 > 0.0 {
            let mut x1 = xm + (e1 / 3.0).sqrt();
            let mut x2 = xm + (e1 / 3.0).sqrt();
            let mut converged = false;
            for _ in 0..500 {
                let l2 = C / (2.0 * e1.sqrt()) * (1.0 / x1.powi(4) + 1.0 / (8.0 * x2.powi(4))).sqrt();
                let nx1 = xm + C / (2.0 * l2 * x1 * x1);
                let nx2 = xm + C / (8.0 * l2 * x2 * x2);
                let change = (nx1 - x1).abs().max((nx2 - x2).abs());
                x1 = 0.5 * x1 + 0.5 * nx1;
                x2 = 0.5 * x2 + 0.5 * nx2;
                if change < 1e-14 * (1.0 + x1.abs()) {
                    converged = true;
                    break;
                }
            }
            if converged {
                let l2 = C / (2.0 * e1.sqrt()) * (1.0 / x1.powi(4) + 1.0 / (8.0 * x2.powi(4))).sqrt();
                let d1 = x1 - xm;
                let d2 = x2 - xm;
                let need = 3.0 * xm + d1 + 2.0 * d2;
                let feasible = v > need;
                let x = [x1, x2, x2];
                out.push(KktSolution {
                    case: KktCase::II,
                    feasible,
                    widths: if feasible { x } else { [f64::NAN; 3] },
                    lambda1: 0.0,
                    lambda2: l2,
                    strain_energy: if feasible { se(x) } else { f64::INFINITY },
                    vstar_bounds: Some((need, f64::INFINITY)),
                    best: false,
                });
                pushed = true;
            }
        }
        if !pushed {
            out.push(KktSolution::infeasible(KktCase::II, None));
        }
    }

    // Case III: both active; x2 = x3 = V*/3 + delta3 with the discriminant
    // requiring 3 x_m - sqrt(3 eps1) <= V* <= 3 x_m + sqrt(3 eps1).
    {
        let lo = 3.0 * xm - (3.0 * e1).sqrt();
        let hi = 3.0 * xm + (3.0 * e1).sqrt();
        let disc = 16.0 * v * v - 24.0 * (3.0 * xm * xm - 2.0 * v * xm + v * v - e1);
        if disc >= 0.0 {
            for sign in [1.0, -1.0] {
                let delta3 = sign * disc.sqrt() / 12.0;
                let x2 = v / 3.0 + delta3;
                let x1 = v - 2.0 * x2;
                if !(x1 > 0.0 && x2 > 0.0) {
                    out.push(KktSolution::infeasible(KktCase::III, Some((lo, hi))));
                    continue;
                }
                let lambda2 = if delta3.abs() < 1e-14 {
                    0.0
                } else {
                    -9.0 * C * v * (v + 12.0 * delta3)
                        / (8.0 * delta3 * (v + 3.0 * delta3).powi(2) * (v - 6.0 * delta3).powi(2))
                };
                let lambda1 = C / (4.0 * x2 * x2) - 2.0 * lambda2 * (x2 - xm);
                let x = [x1, x2, x2];
                // a KKT point needs both multipliers non-negative
                let feasible = lambda1 >= -1e-12 && lambda2 >= -1e-12;
                out.push(KktSolution {
                    case: KktCase::III,
                    feasible,
                    widths: x,
                    lambda1,
                    lambda2,
                    strain_energy: if feasible { se(x) } else { f64::INFINITY },
                    vstar_bounds: Some((lo, hi)),
                    best: false,
                });
            }
        } else {
            out.push(KktSolution::infeasible(KktCase::III, Some((lo, hi))));
        }
    }
    out
}

fn two_member(spec: &TrussSpec) -> Vec<KktSolution> {
    let (v, xm, e1) = (spec.v_star, spec.x_m, spec.eps1);
    let p = spec.p;
    let mut out = Vec::new();

    if p == 1 {
        // g2 = 2 x_m - x1 - x3 - eps1: Case I feasible iff 2 x_m <= V* + eps1
        let feasible = 2.0 * xm <= v + e1;
        let x = [v / 2.0, 0.0, v / 2.0];
        if feasible {
            out.push(KktSolution {
                case: KktCase::I,
                feasible: true,
                widths: x,
                lambda1: 4.0 * C / (v * v),
                lambda2: 0.0,
                strain_energy: se(x),
                vstar_bounds: Some((2.0 * xm - e1, f64::INFINITY)),
                best: false,
            });
        } else {
            out.push(KktSolution::infeasible(
                KktCase::I,
                Some((2.0 * xm - e1, f64::INFINITY)),
            ));
        }
        return out;
    }

    // p = 2
    // Case I: x1 = x3 = V*/2; feasible iff 2(x_m - sqrt(eps1/2)) <= V* <=
    // 2(x_m + sqrt(eps1/2)).
    {
        let half = (e1 / 2.0).sqrt();
        let (lo, hi) = (2.0 * (xm - half), 2.0 * (xm + half));
        if v >= lo && v <= hi {
            let x = [v / 2.0, 0.0, v / 2.0];
            out.push(KktSolution {
                case: KktCase::I,
                feasible: true,
                widths: x,
                lambda1: 4.0 * C / (v * v),
                lambda2: 0.0,
                strain_energy: se(x),
                vstar_bounds: Some((lo, hi)),
                best: false,
            });
        } else {
            out.push(KktSolution::infeasible(KktCase::I, Some((lo, hi))));
        }
    }

    // Case II: volume slack, symmetric x1 = x3 = x_m + sqrt(eps1/2);
    // requires eps1 > 0 and 2 x_m + 2 delta < V*.
    {
        if e1 > 0.0 {
            let delta = (e1 / 2.0).sqrt();
            let x1 = xm + delta;
            let l2 = C / (2.0 * delta * x1 * x1);
            let feasible = 2.0 * xm + 2.0 * delta < v;
            let x = [x1, 0.0, x1];
            out.push(KktSolution {
                case: KktCase::II,
                feasible,
                widths: if feasible { x } else { [f64::NAN; 3] },
                lambda1: 0.0,
                lambda2: l2,
                strain_energy: if feasible { se(x) } else { f64::INFINITY },
                vstar_bounds: Some((2.0 * xm + 2.0 * delta, f64::INFINITY)),
                best: false,
            });
        } else {
            out.push(KktSolution::infeasible(KktCase::II, None));
        }
    }

    // Case III: both active; x3 = V*/2 +- sqrt(2 eps1 - (V* - 2 x_m)^2)/2,
    // exists iff 2 x_m - sqrt(2 eps1) <= V* <= 2 x_m + sqrt(2 eps1).
    {
        let lo = 2.0 * xm - (2.0 * e1).sqrt();
        let hi = 2.0 * xm + (2.0 * e1).sqrt();
        let disc = 2.0 * e1 - (v - 2.0 * xm).powi(2);
        if disc >= 0.0 {
            for sign in [1.0, -1.0] {
                let x3 = v / 2.0 + sign * disc.sqrt() / 2.0;
                let x1 = v - x3;
                if !(x1 > 0.0 && x3 > 0.0) {
                    out.push(KktSolution::infeasible(KktCase::III, Some((lo, hi))));
                    continue;
                }
                let (l1, l2) = if (x1 - x3).abs() < 1e-14 {
                    (4.0 * C / (v * v), 0.0)
                } else {
                    let l2 = (C / (x1 * x1) - C / (x3 * x3)) / (2.0 * (x1 - x3));
                    (C / (x1 * x1) - 2.0 * l2 * (x1 - xm), l2)
                };
                let x = [x1, 0.0, x3];
                let feasible = l1 >= -1e-12 && l2 >= -1e-12;
                out.push(KktSolution {
                    case: KktCase::III,
                    feasible,
                    widths: x,
                    lambda1: l1,
                    lambda2: l2,
                    strain_energy: if feasible { se(x) } else { f64::INFINITY },
                    vstar_bounds: Some((lo, hi)),
                    best: false,
                });
            }
        } else {
            out.push(KktSolution::infeasible(KktCase::III, Some((lo, hi))));
        }
    }
    out
}

/// Human-readable case table for a spec.
pub fn case_table(spec: &TrussSpec) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "three-truss spec: p = {}, V* = {}, x_m = {}, eps1 = {}, skeleton = {}",
        spec.p,
        spec.v_star,
        spec.x_m,
        spec.eps1,
        match spec.skeleton {
            TrussSkeleton::ThreeMember => "three-member",
            TrussSkeleton::TwoMember => "two-member (x2 = 0)",
        }
    );
    let _ = writeln!(
        out,
        "{:<6} {:<10} {:<26} {:<12} {:<12} {:<12} {:<24} {}",
        "case", "feasible", "widths (x1, x2, x3)", "lambda1", "lambda2", "SE", "V* bounds", "best"
    );
    for s in kkt_solve(spec) {
        let case = match s.case {
            KktCase::I => "I",
            KktCase::II => "II",
            KktCase::III => "III",
        };
        let widths = if s.feasible {
            format!("({:.5}, {:.5}, {:.5})", s.widths[0], s.widths[1], s.widths[2])
        } else {
            "-".to_string()
        };
        let bounds = match s.vstar_bounds {
            Some((lo, hi)) if hi.is_finite() => format!("[{lo:.5}, {hi:.5}]"),
            Some((lo, _)) => format!("[{lo:.5}, inf)"),
            None => "-".to_string(),
        };
        let fmt_l = |v: f64| if v.is_nan() { "-".to_string() } else { format!("{v:.5}") };
        let se = if s.strain_energy.is_finite() {
            format!("{:.6}", s.strain_energy)
        } else {
            "-".to_string()
        };
        let _ = writeln!(
            out,
            "{:<6} {:<10} {:<26} {:<12} {:<12} {:<12} {:<24} {}",
            case,
            s.feasible,
            widths,
            fmt_l(s.lambda1),
            fmt_l(s.lambda2),
            se,
            bounds,
            if s.best { "*" } else { "" }
        );
    }
    out
}

#[derive(Debug)]
pub struct CrossCheckReport {
    pub nlp: NlpResult,
    pub best_kkt: Option<KktSolution>,
    /// Max abs width difference against the best KKT point.
    pub width_err: f64,
    pub objective_gap: f64,
}

/// Run the numeric optimizer on the truss problem and compare against the
/// closed-form KKT solution.
pub fn numeric_cross_check(spec: &TrussSpec, eval_budget: usize) -> CrossCheckReport {
    let two_member = spec.skeleton == TrussSkeleton::TwoMember;
    let dim = if two_member { 2 } else { 3 };
    let sp = *spec;
    let expand = move |z: &[f64]| -> [f64; 3] {
        if two_member {
            [z[0], 0.0, z[1]]
        } else {
            [z[0], z[1], z[2]]
        }
    };
    let problem = NlpProblem {
        x0: vec![spec.v_star / 3.0; dim],
        lower: vec![1e-6; dim],
        upper: vec![spec.v_star.max(3.0 * spec.x_m) * 2.0; dim],
        n_cons: 2,
        eval: Box::new(move |z: &[f64]| {
            let x = expand(z);
            let f = strain_energy(x[0], x[1], x[2])?;
            // dSE/dx1 = -C/x1^2, dSE/dx2 = dSE/dx3 = -C/(x2+x3)^2
            let g_full = [
                -C / (x[0] * x[0]),
                -C / ((x[1] + x[2]) * (x[1] + x[2])),
                -C / ((x[1] + x[2]) * (x[1] + x[2])),
            ];
            let grad: Vec<f64> = if two_member {
                vec![g_full[0], g_full[2]]
            } else {
                g_full.to_vec()
            };
            let g1 = sp.g1(x);
            let dg1 = vec![1.0; dim];
            let g2 = sp.g2(x);
            let term_d = |w: f64| -> f64 {
                if sp.p == 1 {
                    -1.0
                } else {
                    -2.0 * (sp.x_m - w)
                }
            };
            let dg2: Vec<f64> = if two_member {
                vec![term_d(x[0]), term_d(x[2])]
            } else {
                vec![term_d(x[0]), term_d(x[1]), term_d(x[2])]
            };
            Ok(Evaluation {
                f,
                grad,
                cons: vec![g1, g2],
                cons_grads: vec![dg1, dg2],
            })
        }),
        eval_budget,
        on_outer: None,
    };
    let nlp = optimizer::minimize(problem);
    let solutions = kkt_solve(spec);
    let best_kkt = solutions.into_iter().find(|s| s.best);
    let x_num = if two_member {
        [nlp.x[0], 0.0, nlp.x[1]]
    } else {
        [nlp.x[0], nlp.x[1], nlp.x[2]]
    };
    let (width_err, objective_gap) = match &best_kkt {
        Some(k) => {
            let we = x_num
                .iter()
                .zip(&k.widths)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            (we, (nlp.f - k.strain_energy).abs())
        }
        None => (f64::NAN, f64::NAN),
    };
    CrossCheckReport {
        nlp,
        best_kkt,
        width_err,
        objective_gap,
    }
}

/// True when the numeric result sits on a Case-I point (volume active,
/// length-scale multiplier zero).
pub fn matches_case_i(spec: &TrussSpec, nlp: &NlpResult) -> bool {
    let x1 = nlp.x[0];
    (x1 - spec.v_star / 2.0).abs() < 1e-3
        && nlp.cons[0].abs() < 1e-4
        && nlp.cons[1] < 1e-6
        && nlp.status == NlpStatus::Converged
}
