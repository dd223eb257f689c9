//! Per-cell densities from a set of elliptical masks and their analytic
//! gradients with respect to mask parameters.
//!
//! Each mask contributes a logistic factor `sigma = 1/(1 + exp(-alpha*d))`
//! of the signed elliptical measure `d` at a cell centroid. Negative masks
//! multiply factors (material removed under masks); positive masks use the
//! complement form (material deposited under masks).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::HexGrid;

/// Exponent magnitude beyond which the logistic is fully saturated in f64.
const SATURATION_Z: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Negative,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskShape {
    /// Five design variables per mask: x, y, a, b, theta.
    Elliptical,
    /// Three design variables per mask: x, y, a (b = a, theta = 0).
    Circular,
}

#[derive(Debug, Clone, Copy)]
pub struct EllipticalMask {
    pub x: f64,
    pub y: f64,
    /// Semi-major axis, > 0.
    pub a: f64,
    /// Semi-minor axis, > 0.
    pub b: f64,
    /// Orientation w.r.t. the horizontal, kept in [-pi, pi].
    pub theta: f64,
}

impl EllipticalMask {
    pub fn circle(x: f64, y: f64, r: f64) -> Self {
        EllipticalMask {
            x,
            y,
            a: r,
            b: r,
            theta: 0.0,
        }
    }
}

/// Wrap an angle to [-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut t = (theta + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if t < -std::f64::consts::PI {
        t += two_pi;
    }
    t
}

/// Signed elliptical measure of Eq. `d = (X/a)^2 + (Y/b)^2 - 1`: negative
/// inside the mask, zero on its boundary, positive outside.
pub fn signed_measure(mask: &EllipticalMask, p: [f64; 2]) -> f64 {
    let (s, c) = mask.theta.sin_cos();
    let dx = p[0] - mask.x;
    let dy = p[1] - mask.y;
    let xr = dx * c + dy * s;
    let yr = -dx * s + dy * c;
    (xr / mask.a).powi(2) + (yr / mask.b).powi(2) - 1.0
}

/// Signed measure plus its five partials w.r.t. (x, y, a, b, theta).
pub fn signed_measure_partials(mask: &EllipticalMask, p: [f64; 2]) -> (f64, [f64; 5]) {
    let (s, c) = mask.theta.sin_cos();
    let dx = p[0] - mask.x;
    let dy = p[1] - mask.y;
    let xr = dx * c + dy * s;
    let yr = -dx * s + dy * c;
    let a2 = mask.a * mask.a;
    let b2 = mask.b * mask.b;
    let d = xr * xr / a2 + yr * yr / b2 - 1.0;
    let partials = [
        -2.0 * xr * c / a2 + 2.0 * yr * s / b2,
        -2.0 * xr * s / a2 - 2.0 * yr * c / b2,
        -2.0 * xr * xr / (a2 * mask.a),
        -2.0 * yr * yr / (b2 * mask.b),
        2.0 * xr * yr * (1.0 / a2 - 1.0 / b2),
    ];
    (d, partials)
}

/// Numerically safe logistic `1/(1 + exp(-z))`.
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigma(z))`, accurate for large positive z where sigma ~ 1.
fn ln_logistic(z: f64) -> f64 {
    if z >= SATURATION_Z {
        0.0
    } else if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[derive(Debug, Clone)]
pub struct MaskSet {
    pub masks: Vec<EllipticalMask>,
    pub polarity: Polarity,
    pub shape: MaskShape,
    /// Global logistic sharpness, > 0.
    pub alpha: f64,
    /// Global exponent, >= 1.
    pub eta: f64,
}

impl MaskSet {
    pub fn new(
        masks: Vec<EllipticalMask>,
        polarity: Polarity,
        shape: MaskShape,
        alpha: f64,
        eta: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }
        if !(eta >= 1.0) {
            return Err(Error::invalid(format!("eta must be >= 1, got {eta}")));
        }
        for (j, m) in masks.iter().enumerate() {
            if !(m.a > 0.0 && m.b > 0.0) {
                return Err(Error::invalid(format!(
                    "mask {j}: semi-axes must be positive (a = {}, b = {})",
                    m.a, m.b
                )));
            }
        }
        Ok(MaskSet {
            masks,
            polarity,
            shape,
            alpha,
            eta,
        })
    }

    pub fn vars_per_mask(&self) -> usize {
        match self.shape {
            MaskShape::Elliptical => 5,
            MaskShape::Circular => 3,
        }
    }

    pub fn dim(&self) -> usize {
        self.masks.len() * self.vars_per_mask()
    }

    /// Flatten mask parameters into an optimization vector.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for m in &self.masks {
            x.push(m.x);
            x.push(m.y);
            x.push(m.a);
            if self.shape == MaskShape::Elliptical {
                x.push(m.b);
                x.push(m.theta);
            }
        }
        x
    }

    /// Rebuild masks from an optimization vector; theta wrapped to [-pi, pi].
    pub fn with_vector(&self, x: &[f64]) -> Result<MaskSet> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "vector length {} does not match mask dim {}",
                x.len(),
                self.dim()
            )));
        }
        let vp = self.vars_per_mask();
        let masks = x
            .chunks_exact(vp)
            .map(|c| match self.shape {
                MaskShape::Elliptical => EllipticalMask {
                    x: c[0],
                    y: c[1],
                    a: c[2],
                    b: c[3],
                    theta: wrap_angle(c[4]),
                },
                MaskShape::Circular => EllipticalMask::circle(c[0], c[1], c[2]),
            })
            .collect();
        MaskSet::new(masks, self.polarity, self.shape, self.alpha, self.eta)
    }

    /// Sum of `ln(sigma_j)` over masks; `exp(eta * s)` is the negative-mask
    /// density, `(-expm1(s))^eta` the positive-mask one.
    fn log_product(&self, p: [f64; 2]) -> f64 {
        self.masks
            .iter()
            .map(|m| ln_logistic(self.alpha * signed_measure(m, p)))
            .sum()
    }

    /// Density at a point for the set's polarity.
    ///
    /// Empty sets: negative -> 1 (empty product), positive -> 0 (no material
    /// delivered).
    pub fn density(&self, p: [f64; 2]) -> f64 {
        let s = self.log_product(p);
        match self.polarity {
            Polarity::Negative => (self.eta * s).exp(),
            Polarity::Positive => {
                if self.masks.is_empty() {
                    0.0
                } else {
                    (-s.exp_m1()).max(0.0).powf(self.eta)
                }
            }
        }
    }

    /// Gradient of the density w.r.t. the parameters of mask `j`
    /// (x, y, a, b, theta; the circular specialization folds b into a and
    /// zeroes theta).
    pub fn density_gradient(&self, p: [f64; 2], j: usize) -> Result<[f64; 5]> {
        if j >= self.masks.len() {
            return Err(Error::OutOfRange(format!(
                "mask index {j} out of range ({} masks)",
                self.masks.len()
            )));
        }
        let mut grads = vec![[0.0; 5]; self.masks.len()];
        self.density_with_gradients(p, &mut grads);
        Ok(grads[j])
    }

    /// Density at `p` plus per-mask parameter gradients written to `grads`
    /// (one `[dx, dy, da, db, dtheta]` row per mask).
    pub fn density_with_gradients(&self, p: [f64; 2], grads: &mut [[f64; 5]]) -> f64 {
        debug_assert_eq!(grads.len(), self.masks.len());
        let mut s = 0.0;
        // chain factor per mask: alpha * (1 - sigma_j) * dd_j
        for (g, m) in grads.iter_mut().zip(&self.masks) {
            let (d, dd) = signed_measure_partials(m, p);
            let z = self.alpha * d;
            s += ln_logistic(z);
            let one_minus_sigma = logistic(-z);
            let f = self.alpha * one_minus_sigma;
            for k in 0..5 {
                g[k] = f * dd[k];
            }
            if self.shape == MaskShape::Circular {
                // d(a) for a circle: -2 (X^2 + Y^2)/a^3 = da + db slots combined.
                g[2] += g[3];
                g[3] = 0.0;
                g[4] = 0.0;
            }
        }
        match self.polarity {
            Polarity::Negative => {
                let rho = (self.eta * s).exp();
                let w = self.eta * rho;
                for g in grads.iter_mut() {
                    for v in g.iter_mut() {
                        *v *= w;
                    }
                }
                rho
            }
            Polarity::Positive => {
                if self.masks.is_empty() {
                    return 0.0;
                }
                let prod = s.exp();
                let one_minus = (-s.exp_m1()).max(0.0);
                let rho = one_minus.powf(self.eta);
                let w = if one_minus > 0.0 {
                    -self.eta * one_minus.powf(self.eta - 1.0) * prod
                } else {
                    0.0
                };
                for g in grads.iter_mut() {
                    for v in g.iter_mut() {
                        *v *= w;
                    }
                }
                rho
            }
        }
    }
}

/// Density evaluated at every cell centroid with per-mask `(alpha_j, eta_j)`
/// overrides; diagnostic path only, not part of the optimized model.
pub fn density_per_mask_params(
    masks: &[(EllipticalMask, f64, f64)],
    polarity: Polarity,
    p: [f64; 2],
) -> f64 {
    match polarity {
        Polarity::Negative => masks
            .iter()
            .map(|(m, alpha, eta)| (eta * ln_logistic(alpha * signed_measure(m, p))).exp())
            .product(),
        Polarity::Positive => {
            if masks.is_empty() {
                return 0.0;
            }
            let s: f64 = masks
                .iter()
                .map(|(m, alpha, _)| ln_logistic(alpha * signed_measure(m, p)))
                .sum();
            // the complement form shares one exponent; use the first mask's eta
            let eta = masks[0].2;
            (-s.exp_m1()).max(0.0).powf(eta)
        }
    }
}

/// Per-cell density field.
#[derive(Debug, Clone)]
pub struct DensityField {
    pub rho: Vec<f64>,
    /// Floor density of a void cell in the stiffness interpolation.
    pub rho_min: f64,
}

impl DensityField {
    pub fn from_values(rho: Vec<f64>, rho_min: f64) -> Self {
        DensityField { rho, rho_min }
    }

    pub fn volume(&self) -> f64 {
        self.rho.iter().sum()
    }
}

/// Evaluate the mask set at every cell centroid.
pub fn evaluate_field(grid: &HexGrid, masks: &MaskSet, rho_min: f64) -> DensityField {
    let rho = grid
        .cells()
        .iter()
        .map(|c| masks.density(c.centroid))
        .collect();
    DensityField { rho, rho_min }
}

/// Accumulate `sum_i w_i * d rho_i / d psi` into `out` (length = mask dim).
///
/// This is the adjoint chain shared by the objective and every density-sum
/// constraint: `w` holds `d(quantity)/d(rho_i)` per cell.
pub fn accumulate_chain(grid: &HexGrid, masks: &MaskSet, w: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), grid.n_cells());
    debug_assert_eq!(out.len(), masks.dim());
    let vp = masks.vars_per_mask();
    let mut grads = vec![[0.0; 5]; masks.masks.len()];
    for (c, &wi) in grid.cells().iter().zip(w) {
        if wi == 0.0 {
            continue;
        }
        masks.density_with_gradients(c.centroid, &mut grads);
        for (j, g) in grads.iter().enumerate() {
            for k in 0..vp {
                out[j * vp + k] += wi * g[k];
            }
        }
    }
}

/// Chain several weight vectors through the mask gradients in one sweep over
/// cells. `ws` and `outs` pair up; each `outs[k]` accumulates the chain of
/// `ws[k]`.
pub fn accumulate_chain_multi(grid: &HexGrid, masks: &MaskSet, ws: &[&[f64]], outs: &mut [Vec<f64>]) {
    debug_assert_eq!(ws.len(), outs.len());
    let vp = masks.vars_per_mask();
    let mut grads = vec![[0.0; 5]; masks.masks.len()];
    for (i, c) in grid.cells().iter().enumerate() {
        if ws.iter().all(|w| w[i] == 0.0) {
            continue;
        }
        masks.density_with_gradients(c.centroid, &mut grads);
        for (w, out) in ws.iter().zip(outs.iter_mut()) {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            for (j, g) in grads.iter().enumerate() {
                for k in 0..vp {
                    out[j * vp + k] += wi * g[k];
                }
            }
        }
    }
}
