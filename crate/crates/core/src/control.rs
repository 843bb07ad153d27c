//! Optimal dividend barrier, barrier value functions and generator
//! residuals.
//!
//! With `ℋ` the Omega scale function of `ω_q = q + ω`, the value of the
//! barrier strategy at level `b ≥ 0` is
//!
//! ```text
//! v_b(x) = ℋ(x)/ℋ'(b)              x ≤ b,
//! v_b(x) = x − b + ℋ(b)/ℋ'(b)      x ≥ b,
//! ```
//!
//! and the optimal level is `b* = argmin_{b ≥ 0} ℋ'(b)`, with `ℋ'(0)` read
//! as `ℋ'(0+)`.

use std::cell::RefCell;

use crate::error::{OmegaError, Result};
use crate::levy::LevyModel;
use crate::omega::BankruptcyRate;
use crate::quad::{integrate_with_breaks, QuadTol};
use crate::volterra::{solve_h, ConvexityReport, OmegaScale, SolverConfig};

const GOLDEN_WIDTH: f64 = 1e-8;
const MAX_EXTENSIONS: usize = 8;

/// Diagnostics attached to a [`BarrierSolution`].
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierDiagnostics {
    pub convexity: ConvexityReport,
    /// `|ℋ''(b*)| / max |ℋ''|` over grid nodes within 0.5 of `b*`; `None`
    /// when `b* = 0`.
    pub smooth_fit: Option<f64>,
    /// Number of times the search domain was doubled.
    pub extensions: usize,
}

/// The optimal barrier and the value function it induces.
#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub b_star: f64,
    pub h_at_b: f64,
    pub h1_at_b: f64,
    pub diagnostics: BarrierDiagnostics,
    model: LevyModel,
    scale: OmegaScale,
}

/// Golden-section minimiser of a unimodal `f` on `[lo, hi]`.
pub fn golden_section<F: FnMut(f64) -> Result<f64>>(mut f: F, mut lo: f64, mut hi: f64, width: f64) -> Result<f64> {
    let inv = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv * (hi - lo);
    let mut d = lo + inv * (hi - lo);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while hi - lo > width {
        // ties keep the left part so the smallest minimiser wins
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv * (hi - lo);
            fc = f(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv * (hi - lo);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Shift `omega` by `q`, solve for `ℋ` and locate `b*`.
pub fn optimal_barrier(model: &LevyModel, omega: &BankruptcyRate, q: f64, cfg: &SolverConfig) -> Result<BarrierSolution> {
    let omega_q = omega.shift(q)?;
    let scale = solve_h(model, &omega_q, cfg)?;
    find_barrier(model, scale)
}

/// `b* = argmin_{b ≥ 0} ℋ'(b)`: grid scan, then golden section on the
/// bracketing panels. When the scan minimum sits at the right end of the
/// grid the domain is doubled, either through the closed form of `ℋ'` on
/// `[0, ∞)` (when `p = ρ`) or by re-solving.
pub fn find_barrier(model: &LevyModel, scale: OmegaScale) -> Result<BarrierSolution> {
    let mut scale = scale;
    let mut extensions = 0;
    let (imin, lo, hi) = loop {
        let samples = scan_points(&scale, extensions)?;
        let (imin, _) = samples
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bv), (i, &(_, v))| if v < bv { (i, v) } else { (bi, bv) });
        if imin + 1 < samples.len() {
            break (imin, samples[imin.saturating_sub(1)].0, samples[imin + 1].0);
        }
        if extensions == MAX_EXTENSIONS {
            return Err(OmegaError::numeric(format!(
                "minimum not bracketed: H' still decreasing at x = {}",
                samples[imin].0
            )));
        }
        extensions += 1;
        if !scale.has_closed_tail() {
            let meta = &scale.table().meta;
            let a = scale.a();
            let cfg = SolverConfig {
                p: Some(meta.p),
                grid_step: meta.grid_step,
                x_max: Some(a + 2.0 * (meta.x_max - a)),
                picard_tol: meta.picard_tol,
                picard_max_iter: 500,
                method: meta.method,
            };
            log::info!("extending H to x_max = {:?}", cfg.x_max);
            scale = solve_h(model, scale.omega_q(), &cfg)?;
        }
    };
    // ℋ''(0+) ≥ 0 with the scan minimum at 0 means ℋ' increases from 0+
    let at_origin = imin == 0 && scale.second(f64::MIN_POSITIVE)? >= 0.0;
    let mut b_star = if at_origin {
        0.0
    } else {
        golden_section(|x| scale.deriv(x), lo, hi, GOLDEN_WIDTH)?
    };
    if b_star > 0.0 {
        let h1 = scale.deriv(b_star)?;
        if scale.deriv(0.0)? <= h1 + 1e-10 * h1.abs() {
            b_star = 0.0;
        }
    }
    let h_at_b = scale.value(b_star)?;
    let h1_at_b = scale.deriv(b_star)?;
    let smooth_fit = if b_star > 0.0 {
        let t = scale.table();
        let local = t
            .grid
            .iter()
            .zip(&t.h2)
            .filter(|(&x, _)| x > 0.0 && (x - b_star).abs() <= 0.5)
            .fold(0.0_f64, |m, (_, v)| m.max(v.abs()));
        Some(scale.second(b_star)?.abs() / local.max(f64::MIN_POSITIVE))
    } else {
        None
    };
    Ok(BarrierSolution {
        b_star,
        h_at_b,
        h1_at_b,
        diagnostics: BarrierDiagnostics {
            convexity: scale.convexity_report(),
            smooth_fit,
            extensions,
        },
        model: model.clone(),
        scale,
    })
}

/// `(x, ℋ'(x))` at grid nodes in `[0, x_max]`, continued through the closed
/// tail to `x_max · 2^ext` when available.
fn scan_points(scale: &OmegaScale, ext: usize) -> Result<Vec<(f64, f64)>> {
    let t = scale.table();
    let mut pts: Vec<(f64, f64)> = t
        .grid
        .iter()
        .zip(&t.h1)
        .filter(|(&x, _)| x >= 0.0)
        .map(|(&x, &d)| (x, d))
        .collect();
    if pts.is_empty() {
        return Err(OmegaError::usage("solved grid does not reach 0"));
    }
    if ext > 0 && scale.has_closed_tail() {
        let step = t.meta.grid_step;
        let x_max = scale.x_max();
        let end = x_max.max(1.0) * 2f64.powi(ext as i32);
        let n = ((end - x_max) / step).ceil() as usize;
        for i in 1..=n {
            let x = x_max + i as f64 * step;
            pts.push((x, scale.deriv(x)?));
        }
    }
    Ok(pts)
}

impl BarrierSolution {
    pub fn scale(&self) -> &OmegaScale {
        &self.scale
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    /// `v*(x)`.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        if x <= self.b_star {
            Ok(self.scale.value(x)? / self.h1_at_b)
        } else {
            Ok(x - self.b_star + self.h_at_b / self.h1_at_b)
        }
    }

    /// `[v*, v*', v*'']` at `x`; the linear branch is used for `x ≥ b*`.
    pub fn value_derivatives(&self, x: f64) -> Result<[f64; 3]> {
        if x < self.b_star {
            let h = self.scale.value(x)?;
            let h1 = self.scale.deriv(x)?;
            let h2 = self.scale.second(x)?;
            Ok([h / self.h1_at_b, h1 / self.h1_at_b, h2 / self.h1_at_b])
        } else {
            Ok([self.value_at(x)?, 1.0, 0.0])
        }
    }

    /// `v_b(x)` for an arbitrary barrier `b ≥ 0`.
    pub fn barrier_value_at(&self, b: f64, x: f64) -> Result<f64> {
        barrier_value(&self.scale, b, x)
    }

    /// `Γv*(x) − (q + ω(x)) v*(x)`; ≈ 0 on `(0, b*)` and ≤ 0 above `b*`.
    pub fn hjb_residual(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(OmegaError::usage(format!("HJB residual needs x > 0, got {x}")));
        }
        generator_residual(&self.model, self.scale.omega_q(), self, x)
    }
}

/// `v_b(x)` from a solved `ℋ`.
pub fn barrier_value(scale: &OmegaScale, b: f64, x: f64) -> Result<f64> {
    if !(b >= 0.0) {
        return Err(OmegaError::usage(format!("barrier must be >= 0, got {b}")));
    }
    let hb = scale.value(b)?;
    let h1b = scale.deriv(b)?;
    if x <= b {
        Ok(scale.value(x)? / h1b)
    } else {
        Ok(x - b + hb / h1b)
    }
}

/// A function the generator can be applied to.
pub trait TestFunction {
    /// `[f, f', f'']` at `x`.
    fn derivatives(&self, x: f64) -> Result<[f64; 3]>;
    /// Value of `f` alone.
    fn value(&self, x: f64) -> Result<f64> {
        Ok(self.derivatives(x)?[0])
    }
    /// Points where `f` is not smooth.
    fn breaks(&self) -> Vec<f64>;
    /// `Some((y0, T))` with `T = ∫_{x−y0}^∞ f(x − z) α e^{−αz} dz` in closed
    /// form, for `y0 ≤ x`.
    fn lower_tail(&self, x: f64, alpha: f64) -> Option<(f64, f64)>;
}

/// The constant function `K`.
#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl TestFunction for Constant {
    fn derivatives(&self, _x: f64) -> Result<[f64; 3]> {
        Ok([self.0, 0.0, 0.0])
    }
    fn breaks(&self) -> Vec<f64> {
        Vec::new()
    }
    fn lower_tail(&self, x: f64, _alpha: f64) -> Option<(f64, f64)> {
        Some((x, self.0))
    }
}

impl TestFunction for BarrierSolution {
    fn derivatives(&self, x: f64) -> Result<[f64; 3]> {
        self.value_derivatives(x)
    }
    fn value(&self, x: f64) -> Result<f64> {
        self.value_at(x)
    }
    fn breaks(&self) -> Vec<f64> {
        let mut b = self.scale.omega_q().kinks().to_vec();
        b.push(self.b_star);
        b
    }
    fn lower_tail(&self, x: f64, alpha: f64) -> Option<(f64, f64)> {
        // v*(y) = e^{Φ(y − a)}/ℋ'(b*) for y ≤ a
        let a = self.scale.a();
        let phi = self.scale.big_phi();
        if x < a {
            let v = (phi * (x - a)).exp() / self.h1_at_b;
            return Some((x, alpha * v / (phi + alpha)));
        }
        Some((a, alpha * (-alpha * (x - a)).exp() / ((phi + alpha) * self.h1_at_b)))
    }
}

/// `Γf(x) − ω_q(x) f(x)` with
/// `Γf = μ f' + σ²/2 f'' + λ Σ_j w_j ∫_0^∞ (f(x − z) − f(x)) α_j e^{−α_j z} dz`.
pub fn generator_residual<F: TestFunction + ?Sized>(
    model: &LevyModel,
    omega_q: &BankruptcyRate,
    f: &F,
    x: f64,
) -> Result<f64> {
    if omega_q.kinks().contains(&x) {
        return Err(OmegaError::usage(format!("generator residual requested at kink {x}")));
    }
    let [v, d1, d2] = f.derivatives(x)?;
    let mut jumps = 0.0;
    for comp in model.active_jumps() {
        let alpha = comp.rate;
        let (cut, tail) = match f.lower_tail(x, alpha) {
            Some((y0, t)) => (x - y0, t),
            None => (36.0 / alpha, 0.0),
        };
        let head = if cut > 0.0 {
            let breaks: Vec<f64> = f
                .breaks()
                .into_iter()
                .map(|y| x - y)
                .filter(|&z| z > 0.0 && z < cut)
                .collect();
            let tol = QuadTol {
                abs: 1e-14 * v.abs().max(1e-300),
                rel: 1e-12,
                max_depth: 40,
            };
            let err = RefCell::new(None);
            let val = integrate_with_breaks(
                |z| match f.value(x - z) {
                    Ok(fz) => fz * alpha * (-alpha * z).exp(),
                    Err(e) => {
                        err.borrow_mut().get_or_insert(e);
                        0.0
                    }
                },
                0.0,
                cut,
                &breaks,
                tol,
            )?;
            if let Some(e) = err.into_inner() {
                return Err(e);
            }
            val
        } else {
            0.0
        };
        jumps += comp.weight * (head + tail - v);
    }
    let sigma2 = model.sigma * model.sigma;
    Ok(model.mu * d1 + 0.5 * sigma2 * d2 + model.lambda * jumps - omega_q.eval(x) * v)
}
