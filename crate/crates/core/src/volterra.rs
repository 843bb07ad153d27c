//! The Omega scale function `ℋ` of a discounting intensity `ω_q`.
//!
//! `ℋ` solves
//!
//! ```text
//! ℋ(x) = Z_p(x − a; Φ(φ_q)) + ∫_a^x W_p(x − y) (ω_q(y) − p) ℋ(y) dy,   x ≥ a,
//! ℋ(x) = e^{Φ(φ_q)(x − a)},                                           x ≤ a,
//! ```
//!
//! for any `p ∈ [0, ρ]`. The integral is discretised by trapezoidal product
//! integration: `g = (ω_q − p)ℋ` is replaced by its piecewise-linear
//! interpolant on a grid containing every kink of `ω_q`, and the kernel is
//! integrated exactly against it. At a kink node the panel ending there
//! sees `ω(x−)` and the panel starting there sees `ω(x)`.
//!
//! `W_p = Σ_k D_k e^{θ_k ·}`, so the integral at node `n` is `Σ_k D_k R_k(n)`
//! with the running sums
//!
//! ```text
//! R_k(n+1) = e^{θ_k h} R_k(n) + h A(θ_k h) g(x_n+) + h B(θ_k h) g(x_{n+1}−),
//! A(t) = (t e^t − e^t + 1)/t²,   B(t) = (e^t − 1 − t)/t²,   h = x_{n+1} − x_n.
//! ```
//!
//! The weight of the new node is `O(h²)` because `W_p(0) = 0`, so marching
//! needs one scalar division per node. Picard iteration applies the same
//! discrete operator with all of `g` taken from the previous iterate.
//!
//! Bounded-variation models (`σ = 0`) would add a diagonal term
//! `W_p(0)(ω(x) − p)ℋ(x)` and derivative jumps at the kinks; they are not
//! supported.

use serde::{Deserialize, Serialize};

use crate::error::{OmegaError, Result};
use crate::levy::LevyModel;
use crate::omega::BankruptcyRate;
use crate::scale::{ScaleBasis, ZFunction};

/// Solution method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Marching,
    Picard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Free level in `[0, ρ]`; `None` means `ρ`.
    pub p: Option<f64>,
    pub grid_step: f64,
    /// Right end of the grid; `None` means `a + 6`.
    pub x_max: Option<f64>,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub method: Method,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            p: None,
            grid_step: 1e-3,
            x_max: None,
            picard_tol: 1e-12,
            picard_max_iter: 500,
            method: Method::Marching,
        }
    }
}

/// Diagnostics recorded by [`solve_h`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveMeta {
    pub method: Method,
    pub p: f64,
    pub grid_step: f64,
    pub x_max: f64,
    pub picard_tol: f64,
    /// Picard sweeps performed (1 for marching).
    pub iterations: usize,
    /// Last relative sup-norm increment (0 for marching).
    pub achieved_increment: f64,
    /// Nodes where a Picard iterate fell below its predecessor by more
    /// than `1e-14 · sup ℋ`.
    pub monotonicity_violations: usize,
}

/// Grid values of `ℋ`, `ℋ'` and `ℋ''` (right limits at kinks).
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaScaleTable {
    pub grid: Vec<f64>,
    pub h: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub meta: SolveMeta,
}

/// A solved Omega scale function, evaluable between and beyond grid nodes.
#[derive(Debug, Clone)]
pub struct OmegaScale {
    omega_q: BankruptcyRate,
    basis: ScaleBasis,
    z: ZFunction,
    big_phi: f64,
    table: OmegaScaleTable,
    /// `R_k(n)` per node, row-major `n * K + k`.
    running: Vec<f64>,
    /// `g(x_n) = (ω_q(x_n) − p) ℋ(x_n)`.
    g_right: Vec<f64>,
    /// Index of the node at 0, if it lies on the grid.
    zero_node: Option<usize>,
    kinks: Vec<f64>,
}

/// Grid on `[a, x_max]` whose nodes include every kink of `ω` below `x_max`.
/// Each segment between consecutive mandatory nodes is split uniformly into
/// `ceil(len / step)` panels.
pub fn build_grid(omega: &BankruptcyRate, step: f64, x_max: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(OmegaError::usage(format!("grid step must be > 0, got {step}")));
    }
    let a = omega.a();
    if !(x_max > a) {
        return Err(OmegaError::usage(format!("x_max = {x_max} must exceed a = {a}")));
    }
    let mut anchors: Vec<f64> = omega.kinks().iter().copied().filter(|&k| k < x_max).collect();
    anchors.push(x_max);
    let mut grid = vec![anchors[0]];
    for w in anchors.windows(2) {
        let len = w[1] - w[0];
        let panels = (len / step - 1e-9).ceil().max(1.0) as usize;
        let h = len / panels as f64;
        for j in 1..panels {
            grid.push(w[0] + j as f64 * h);
        }
        grid.push(w[1]);
    }
    Ok(grid)
}

/// `(A(t), B(t))` of the product rule, by series near 0.
fn product_weights(t: f64) -> (f64, f64) {
    if t.abs() < 0.5 {
        // A = Σ (k+1) t^k/(k+2)!, B = Σ t^k/(k+2)!
        let mut term = 0.5;
        let mut a = 0.0;
        let mut b = 0.0;
        for k in 0..24 {
            a += (k as f64 + 1.0) * term;
            b += term;
            term *= t / (k as f64 + 3.0);
        }
        (a, b)
    } else {
        let em1 = t.exp_m1();
        ((t * em1 - em1 + t) / (t * t), (em1 - t) / (t * t))
    }
}

struct Discretisation<'a> {
    grid: &'a [f64],
    omega_left: Vec<f64>,
    omega_right: Vec<f64>,
    p: f64,
    coeffs: &'a [f64],
    /// Per panel and root, row-major: `e^{θ h}`, `h A(θ h)`, `h B(θ h)`.
    growth: Vec<f64>,
    wa: Vec<f64>,
    wb: Vec<f64>,
    /// `Σ_k D_k h B(θ_k h)` per panel.
    gamma: Vec<f64>,
}

impl<'a> Discretisation<'a> {
    fn new(grid: &'a [f64], omega_q: &BankruptcyRate, basis: &'a ScaleBasis, p: f64) -> Self {
        let kk = basis.roots.len();
        let panels = grid.len().saturating_sub(1);
        let mut growth = Vec::with_capacity(panels * kk);
        let mut wa = Vec::with_capacity(panels * kk);
        let mut wb = Vec::with_capacity(panels * kk);
        let mut gamma = Vec::with_capacity(panels);
        for w in grid.windows(2) {
            let h = w[1] - w[0];
            let mut gm = 0.0;
            for (&t, &d) in basis.roots.iter().zip(&basis.coeffs) {
                let (ca, cb) = product_weights(t * h);
                growth.push((t * h).exp());
                wa.push(h * ca);
                wb.push(h * cb);
                gm += d * h * cb;
            }
            gamma.push(gm);
        }
        Discretisation {
            grid,
            omega_left: grid.iter().map(|&x| omega_q.eval_left(x)).collect(),
            omega_right: grid.iter().map(|&x| omega_q.eval(x)).collect(),
            p,
            coeffs: &basis.coeffs,
            growth,
            wa,
            wb,
            gamma,
        }
    }

    /// One pass over the grid. With `prev = None` this is forward marching;
    /// with `Some(h)` it applies `ℋ ↦ Z_p + T ℋ` to `h`. Running sums are
    /// written to `running`.
    fn sweep(&self, z_vals: &[f64], prev: Option<&[f64]>, running: &mut Vec<f64>) -> Vec<f64> {
        let n_nodes = self.grid.len();
        let kk = self.coeffs.len();
        running.clear();
        running.resize(n_nodes * kk, 0.0);
        let mut out = Vec::with_capacity(n_nodes);
        out.push(z_vals[0]);
        let mut r = vec![0.0; kk];
        let mut base = vec![0.0; kk];
        for n in 0..n_nodes - 1 {
            let source = prev.map_or(out[n], |h| h[n]);
            let g_plus = (self.omega_right[n] - self.p) * source;
            let row = n * kk..(n + 1) * kk;
            let mut explicit = z_vals[n + 1];
            for (k, i) in row.clone().enumerate() {
                base[k] = self.growth[i] * r[k] + self.wa[i] * g_plus;
                explicit += self.coeffs[k] * base[k];
            }
            let c_left = self.omega_left[n + 1] - self.p;
            let (value, g_minus) = match prev {
                None => {
                    let v = explicit / (1.0 - c_left * self.gamma[n]);
                    (v, c_left * v)
                }
                Some(h) => {
                    let gm = c_left * h[n + 1];
                    (explicit + self.gamma[n] * gm, gm)
                }
            };
            for (k, i) in row.enumerate() {
                r[k] = base[k] + self.wb[i] * g_minus;
            }
            out.push(value);
            running[(n + 1) * kk..(n + 2) * kk].copy_from_slice(&r);
        }
        out
    }
}

/// Solve for `ℋ` of the discounting intensity `omega_q` (with `ρ = q > 0`).
pub fn solve_h(model: &LevyModel, omega_q: &BankruptcyRate, cfg: &SolverConfig) -> Result<OmegaScale> {
    model.validate()?;
    let rho = omega_q.rho();
    if !(rho > 0.0) {
        return Err(OmegaError::usage(
            "solve_h expects a shifted rate omega_q = q + omega with rho = q > 0",
        ));
    }
    let p = cfg.p.unwrap_or(rho);
    if !(0.0..=rho).contains(&p) {
        return Err(OmegaError::usage(format!("p = {p} must lie in [0, rho = {rho}]")));
    }
    let a = omega_q.a();
    let x_max = cfg.x_max.unwrap_or(a + 6.0);
    let grid = build_grid(omega_q, cfg.grid_step, x_max)?;
    let phi_q = omega_q.phi();
    let big_phi = model.phi(phi_q)?;
    let basis = ScaleBasis::new(model, p)?;
    let z = basis.z_function(phi_q, big_phi)?;
    let disc = Discretisation::new(&grid, omega_q, &basis, p);
    let z_vals: Vec<f64> = grid.iter().map(|&x| z.eval(x - a)).collect();

    let mut running = Vec::new();
    let mut iterations = 1;
    let mut achieved = 0.0;
    let mut violations = 0;
    let h = match cfg.method {
        Method::Marching => disc.sweep(&z_vals, None, &mut running),
        Method::Picard => {
            let mut prev = z_vals.clone();
            iterations = 0;
            loop {
                if iterations >= cfg.picard_max_iter {
                    return Err(OmegaError::numeric(format!(
                        "Picard iteration did not reach {} in {} sweeps (last increment {achieved:e})",
                        cfg.picard_tol, cfg.picard_max_iter
                    )));
                }
                let next = disc.sweep(&z_vals, Some(&prev), &mut running);
                iterations += 1;
                let scale = next.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                let mut inc = 0.0_f64;
                for (u, v) in next.iter().zip(&prev) {
                    inc = inc.max((u - v).abs());
                    if *u < v - 1e-14 * scale {
                        violations += 1;
                    }
                }
                achieved = inc / scale;
                let done = inc <= cfg.picard_tol * scale;
                prev = next;
                if done {
                    break;
                }
            }
            // running sums consistent with the returned iterate
            let last = prev.clone();
            disc.sweep(&z_vals, Some(&last), &mut running);
            prev
        }
    };
    if violations > 0 {
        log::warn!("{violations} Picard monotonicity violations");
    }
    let g_right = h.iter().zip(&disc.omega_right).map(|(v, w)| (w - p) * v).collect();
    let zero_node = grid.iter().position(|&x| x == 0.0);
    let meta = SolveMeta {
        method: cfg.method,
        p,
        grid_step: cfg.grid_step,
        x_max,
        picard_tol: cfg.picard_tol,
        iterations,
        achieved_increment: achieved,
        monotonicity_violations: violations,
    };
    let mut scale = OmegaScale {
        omega_q: omega_q.clone(),
        basis,
        z,
        big_phi,
        table: OmegaScaleTable {
            grid: grid.clone(),
            h,
            h1: Vec::new(),
            h2: Vec::new(),
            meta,
        },
        running,
        g_right,
        zero_node,
        kinks: omega_q.kinks().to_vec(),
    };
    let mut h1 = Vec::with_capacity(grid.len());
    let mut h2 = Vec::with_capacity(grid.len());
    for n in 0..grid.len() {
        let [_, d1, d2] = scale.eval_in_panel(n, grid[n]);
        h1.push(d1);
        h2.push(d2);
    }
    scale.table.h1 = h1;
    scale.table.h2 = h2;
    Ok(scale)
}

impl OmegaScale {
    pub fn table(&self) -> &OmegaScaleTable {
        &self.table
    }

    pub fn omega_q(&self) -> &BankruptcyRate {
        &self.omega_q
    }

    pub fn a(&self) -> f64 {
        self.omega_q.a()
    }

    /// `q = ρ` of the shifted rate.
    pub fn q(&self) -> f64 {
        self.omega_q.rho()
    }

    pub fn p(&self) -> f64 {
        self.table.meta.p
    }

    /// `Φ(φ_q)`, the growth rate of `ℋ` below `a`.
    pub fn big_phi(&self) -> f64 {
        self.big_phi
    }

    pub fn x_max(&self) -> f64 {
        *self.table.grid.last().expect("non-empty grid")
    }

    /// `true` when the kernel vanishes on `[0, ∞)`, so `ℋ` is available in
    /// closed form to the right of 0.
    pub fn has_closed_tail(&self) -> bool {
        self.table.meta.p == self.q() && self.zero_node.is_some()
    }

    fn kk(&self) -> usize {
        self.basis.roots.len()
    }

    /// `[ℋ, ℋ', ℋ'']` at `x ∈ [x_n, x_{n+1})`, integrating the partial panel
    /// `[x_n, x]` with the same product rule. `ℋ''` is the right limit.
    fn eval_in_panel(&self, n: usize, x: f64) -> [f64; 3] {
        let a = self.a();
        let p = self.table.meta.p;
        let kk = self.kk();
        let r = &self.running[n * kk..(n + 1) * kk];
        let delta = x - self.table.grid[n];
        let mut sums = [0.0; 3];
        let value;
        if delta == 0.0 {
            for (k, &rk) in r.iter().enumerate() {
                let t = self.basis.roots[k];
                let d = self.basis.coeffs[k];
                sums[0] += d * rk;
                sums[1] += d * t * rk;
                sums[2] += d * t * t * rk;
            }
            value = self.table.h[n];
        } else {
            let c_x = self.omega_q.eval(x) - p;
            let mut explicit = self.z.eval(x - a);
            let mut gamma = 0.0;
            let mut parts = Vec::with_capacity(kk);
            for (k, &rk) in r.iter().enumerate() {
                let t = self.basis.roots[k];
                let d = self.basis.coeffs[k];
                let (ca, cb) = product_weights(t * delta);
                let b = (t * delta).exp() * rk + delta * ca * self.g_right[n];
                explicit += d * b;
                gamma += d * delta * cb;
                parts.push((b, delta * cb));
            }
            value = explicit / (1.0 - c_x * gamma);
            for (k, (b, wb)) in parts.into_iter().enumerate() {
                let t = self.basis.roots[k];
                let d = self.basis.coeffs[k];
                let rk = b + wb * c_x * value;
                sums[0] += d * rk;
                sums[1] += d * t * rk;
                sums[2] += d * t * t * rk;
            }
        }
        let local = (self.omega_q.eval(x) - p) * value;
        [
            value,
            self.z.deriv(x - a) + sums[1],
            self.z.second(x - a) + sums[2] + self.basis.at_zero(1) * local,
        ]
    }

    /// `[ℋ, ℋ', ℋ'']` at `x ≥ 0` from the closed tail (`p = ρ`).
    fn eval_tail(&self, x: f64) -> [f64; 3] {
        let i0 = self.zero_node.expect("closed tail needs 0 on the grid");
        let a = self.a();
        let kk = self.kk();
        let r = &self.running[i0 * kk..(i0 + 1) * kk];
        let mut sums = [0.0; 3];
        for k in 0..kk {
            let t = self.basis.roots[k];
            let base = self.basis.coeffs[k] * (t * x).exp() * r[k];
            sums[0] += base;
            sums[1] += base * t;
            sums[2] += base * t * t;
        }
        [
            self.z.eval(x - a) + sums[0],
            self.z.deriv(x - a) + sums[1],
            self.z.second(x - a) + sums[2],
        ]
    }

    fn eval_all(&self, x: f64) -> Result<[f64; 3]> {
        let a = self.a();
        if !x.is_finite() {
            return Err(OmegaError::usage(format!("cannot evaluate at {x}")));
        }
        if x < a {
            let e = (self.big_phi * (x - a)).exp();
            return Ok([e, self.big_phi * e, self.big_phi * self.big_phi * e]);
        }
        if x >= 0.0 && self.has_closed_tail() {
            return Ok(self.eval_tail(x));
        }
        let grid = &self.table.grid;
        let last = grid.len() - 1;
        if x > grid[last] {
            return Err(OmegaError::usage(format!(
                "x = {x} outside solved domain [{a}, {}]",
                grid[last]
            )));
        }
        let n = grid.partition_point(|&g| g <= x).saturating_sub(1).min(last);
        Ok(self.eval_in_panel(n, x))
    }

    /// `ℋ(x)`.
    pub fn value(&self, x: f64) -> Result<f64> {
        Ok(self.eval_all(x)?[0])
    }

    /// `ℋ'(x)`; continuous when `σ > 0`, so no one-sided convention is
    /// needed beyond using `ℋ'(0+)` at 0.
    pub fn deriv(&self, x: f64) -> Result<f64> {
        Ok(self.eval_all(x)?[1])
    }

    /// `ℋ''(x)` away from the kinks of `ω_q`.
    pub fn second(&self, x: f64) -> Result<f64> {
        if self.kinks.contains(&x) {
            return Err(OmegaError::usage(format!("second derivative requested at kink {x}")));
        }
        Ok(self.eval_all(x)?[2])
    }

    /// Backward and forward difference slopes of the grid values at node
    /// `x`, which must be an interior grid node.
    pub fn one_sided_slopes(&self, x: f64) -> Result<(f64, f64)> {
        let grid = &self.table.grid;
        let n = grid
            .iter()
            .position(|&g| g == x)
            .filter(|&n| n > 0 && n + 1 < grid.len())
            .ok_or_else(|| OmegaError::usage(format!("{x} is not an interior grid node")))?;
        let h = &self.table.h;
        Ok((
            (h[n] - h[n - 1]) / (grid[n] - grid[n - 1]),
            (h[n + 1] - h[n]) / (grid[n + 1] - grid[n]),
        ))
    }

    /// Largest `ℋ(x_i) − e^{Φ(φ_q)(x_i − a)}` over the grid (≤ 0 expected).
    pub fn majorant_excess(&self) -> f64 {
        let a = self.a();
        self.table
            .grid
            .iter()
            .zip(&self.table.h)
            .map(|(&x, &h)| h - (self.big_phi * (x - a)).exp())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Convexity diagnostics of `ℋ'` on the grid nodes in `(0, x_max]`.
    pub fn convexity_report(&self) -> ConvexityReport {
        let pts: Vec<(f64, f64)> = self
            .table
            .grid
            .iter()
            .zip(&self.table.h1)
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, &d)| (x, d))
            .collect();
        convexity_of_samples(&pts)
    }
}

/// Discrete convexity and log-convexity margins of sampled `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexityReport {
    /// `min_i` of the second divided difference scaled by the panel sizes,
    /// in units of `f`.
    pub convexity_margin: f64,
    /// Same for `ln f`; `NEG_INFINITY` when `f` is not positive.
    pub log_convexity_margin: f64,
    /// `max |f|` over the samples.
    pub scale: f64,
    /// `f` increases over the final pair of samples.
    pub ultimately_increasing: bool,
}

impl ConvexityReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.convexity_margin >= -rel_tol * self.scale && self.log_convexity_margin >= -rel_tol
    }
}

/// Margins for samples `(x_i, f_i)` with increasing `x_i`. The margin at an
/// interior sample is `(h_- f_{i+1} + h_+ f_{i−1})/(h_- + h_+) − f_i`, which
/// reduces to `(f_{i+1} + f_{i−1})/2 − f_i` on uniform spacing.
pub fn convexity_of_samples(pts: &[(f64, f64)]) -> ConvexityReport {
    let mut conv = f64::INFINITY;
    let mut logc = f64::INFINITY;
    for w in pts.windows(3) {
        let (x0, f0) = w[0];
        let (x1, f1) = w[1];
        let (x2, f2) = w[2];
        let hm = x1 - x0;
        let hp = x2 - x1;
        let interp = |u: f64, v: f64| (hm * v + hp * u) / (hm + hp);
        conv = conv.min(interp(f0, f2) - f1);
        let lm = if f0 > 0.0 && f1 > 0.0 && f2 > 0.0 {
            interp(f0.ln(), f2.ln()) - f1.ln()
        } else {
            f64::NEG_INFINITY
        };
        logc = logc.min(lm);
    }
    let scale = pts.iter().fold(0.0_f64, |m, p| m.max(p.1.abs()));
    let ultimately_increasing = pts.len() >= 2 && pts[pts.len() - 1].1 > pts[pts.len() - 2].1;
    ConvexityReport {
        convexity_margin: if conv.is_finite() || conv == f64::NEG_INFINITY { conv } else { 0.0 },
        log_convexity_margin: if logc == f64::INFINITY { 0.0 } else { logc },
        scale,
        ultimately_increasing,
    }
}

/// Iterated kernels `K_m` and their partial sums on a small uniform grid.
///
/// `K_m(x, y) = F_m(x, y)(ω_q(y) − p)` with `F_1(x, y) = W_p(x − y)` and
/// `F_m(x, y) = ∫_y^x W_p(x − z)(ω_q(z) − p) F_{m−1}(z, y) dz`; the reversed
/// composition `∫_y^x F_{m−1}(x, z)(ω_q(z) − p) W_p(z − y) dz` is computed
/// separately. The bound `(φ_q − p)^m W_p^{*m}(x − y)` uses convolution
/// powers computed by the trapezoid rule on the same step.
#[derive(Debug, Clone)]
pub struct KernelTables {
    pub grid: Vec<f64>,
    /// `K_m[i][j] = K_m(x_i, x_j)`, `m = 1..=m_max`.
    pub forward: Vec<Vec<Vec<f64>>>,
    pub reversed: Vec<Vec<Vec<f64>>>,
    /// `K̄_m = Σ_{i≤m} K_i`.
    pub partial_sums: Vec<Vec<Vec<f64>>>,
    /// `(φ_q − p)^m W_p^{*m}(x_i − x_j)`.
    pub bounds: Vec<Vec<Vec<f64>>>,
    /// `ζ(x_i, x_j) = (φ_q − p) W_{φ_q}(x_i − x_j)`.
    pub zeta: Vec<Vec<f64>>,
}

impl KernelTables {
    fn max_over<F: Fn(usize, usize, usize) -> f64>(&self, f: F) -> f64 {
        let n = self.grid.len();
        let mut worst = f64::NEG_INFINITY;
        for m in 0..self.forward.len() {
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max(f(m, i, j));
                }
            }
        }
        worst
    }

    /// `max (K_m − bound_m)`; ≤ 0 when the bound holds.
    pub fn bound_excess(&self) -> f64 {
        self.max_over(|m, i, j| self.forward[m][i][j] - self.bounds[m][i][j])
    }

    /// `max (K̄_m − ζ)`.
    pub fn zeta_excess(&self) -> f64 {
        self.max_over(|m, i, j| self.partial_sums[m][i][j] - self.zeta[i][j])
    }

    /// `max |K_m^forward − K_m^reversed|`.
    pub fn composition_gap(&self) -> f64 {
        self.max_over(|m, i, j| (self.forward[m][i][j] - self.reversed[m][i][j]).abs())
    }

    /// `min K_m`.
    pub fn min_entry(&self) -> f64 {
        -self.max_over(|m, i, j| -self.forward[m][i][j])
    }
}

/// Tabulate `K_1 … K_{m_max}` on the uniform grid `x_lo + i·step`
/// (`i = 0..=n`). Every kink of `omega_q` inside the range must be a node.
pub fn picard_kernels(
    model: &LevyModel,
    omega_q: &BankruptcyRate,
    p: f64,
    m_max: usize,
    x_lo: f64,
    step: f64,
    n: usize,
) -> Result<KernelTables> {
    if m_max == 0 || m_max > 10 {
        return Err(OmegaError::usage(format!("m_max must be in 1..=10, got {m_max}")));
    }
    if !(step > 0.0) || n < 2 || n > 2000 {
        return Err(OmegaError::usage("kernel tables need step > 0 and 2 <= n <= 2000"));
    }
    let rho = omega_q.rho();
    if !(0.0..=rho).contains(&p) {
        return Err(OmegaError::usage(format!("p = {p} must lie in [0, rho = {rho}]")));
    }
    let grid: Vec<f64> = (0..=n).map(|i| x_lo + i as f64 * step).collect();
    for &k in omega_q.kinks() {
        if k > x_lo && k < grid[n] {
            let off = (k - x_lo) / step;
            if (off - off.round()).abs() > 1e-9 {
                return Err(OmegaError::usage(format!("kink {k} is not a grid node")));
            }
        }
    }
    let grid: Vec<f64> = grid
        .iter()
        .map(|&x| {
            omega_q
                .kinks()
                .iter()
                .copied()
                .find(|&k| (k - x).abs() < 1e-9 * step)
                .unwrap_or(x)
        })
        .collect();
    let size = grid.len();
    let basis = ScaleBasis::new(model, p)?;
    let phi_q = omega_q.phi();
    // W at multiples of the step
    let w_lag: Vec<f64> = (0..size).map(|l| if l == 0 { 0.0 } else { basis.w(l as f64 * step, 0) }).collect();
    // node weight of (ω(z) − p) for an interior node of the z-integral
    let c: Vec<f64> = grid
        .iter()
        .map(|&z| 0.5 * step * ((omega_q.eval_left(z) - p) + (omega_q.eval(z) - p)))
        .collect();
    let f1: Vec<Vec<f64>> = (0..size)
        .map(|i| (0..size).map(|j| if i > j { w_lag[i - j] } else { 0.0 }).collect())
        .collect();
    let mut forward_f = vec![f1.clone()];
    let mut reversed_f = vec![f1.clone()];
    for _ in 1..m_max {
        let prev_f = forward_f.last().expect("non-empty");
        let prev_r = reversed_f.last().expect("non-empty");
        let mut nf = vec![vec![0.0; size]; size];
        let mut nr = vec![vec![0.0; size]; size];
        for i in 0..size {
            for j in 0..i {
                // endpoint terms vanish: F(y, y) = 0 and W(0) = 0
                let mut sf = 0.0;
                let mut sr = 0.0;
                for l in (j + 1)..i {
                    sf += f1[i][l] * c[l] * prev_f[l][j];
                    sr += prev_r[i][l] * c[l] * f1[l][j];
                }
                nf[i][j] = sf;
                nr[i][j] = sr;
            }
        }
        forward_f.push(nf);
        reversed_f.push(nr);
    }
    let weight: Vec<f64> = grid.iter().map(|&y| omega_q.eval(y) - p).collect();
    let to_k = |f: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        f.iter()
            .map(|row| row.iter().zip(&weight).map(|(v, w)| v * w).collect())
            .collect()
    };
    let forward: Vec<_> = forward_f.iter().map(to_k).collect();
    let reversed: Vec<_> = reversed_f.iter().map(to_k).collect();
    let mut partial_sums = Vec::with_capacity(m_max);
    let mut acc = vec![vec![0.0; size]; size];
    for k in &forward {
        for i in 0..size {
            for j in 0..size {
                acc[i][j] += k[i][j];
            }
        }
        partial_sums.push(acc.clone());
    }
    // convolution powers of W_p on the lag grid
    let mut conv = vec![w_lag.clone()];
    for _ in 1..m_max {
        let prev = conv.last().expect("non-empty");
        let next: Vec<f64> = (0..size)
            .map(|l| (1..l).map(|s| step * w_lag[l - s] * prev[s]).sum())
            .collect();
        conv.push(next);
    }
    let bounds: Vec<Vec<Vec<f64>>> = conv
        .iter()
        .enumerate()
        .map(|(m, cv)| {
            let f = (phi_q - p).powi(m as i32 + 1);
            (0..size)
                .map(|i| (0..size).map(|j| if i > j { f * cv[i - j] } else { 0.0 }).collect())
                .collect()
        })
        .collect();
    let basis_phi = ScaleBasis::new(model, phi_q)?;
    let zeta = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| if i > j { (phi_q - p) * basis_phi.w(grid[i] - grid[j], 0) } else { 0.0 })
                .collect()
        })
        .collect();
    Ok(KernelTables {
        grid,
        forward,
        reversed,
        partial_sums,
        bounds,
        zeta,
    })
}
