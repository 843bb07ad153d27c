//! Classical scale functions as exponential sums.
//!
//! For the hyperexponential models of [`crate::levy`], `1/(ψ(θ) − r)` has
//! simple poles at the roots `θ_i` of `ψ(s) = r`, hence
//!
//! ```text
//! W_r(x) = Σ_i D_i e^{θ_i x},   D_i = 1/ψ'(θ_i),   x ≥ 0
//! ```
//!
//! and `W_r ≡ 0` on `(−∞, 0)`.  `Z_r(·; Φ(s))` follows by termwise
//! integration.

use crate::error::{OmegaError, Result};
use crate::levy::LevyModel;
use crate::quad::{integrate, QuadTol};

/// Exponents and weights of `W_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleBasis {
    pub r: f64,
    pub roots: Vec<f64>,
    pub coeffs: Vec<f64>,
}

const OVERFLOW_EXPONENT: f64 = 700.0;

impl ScaleBasis {
    pub fn new(model: &LevyModel, r: f64) -> Result<Self> {
        if !(r >= 0.0) {
            return Err(OmegaError::domain(format!("scale level must be >= 0, got {r}")));
        }
        let roots = model.roots_at_level(r)?.roots;
        let coeffs = roots.iter().map(|&t| 1.0 / model.psi_deriv_at(t)).collect();
        Ok(ScaleBasis { r, roots, coeffs })
    }

    /// `W_r^{(deriv)}(x)`, zero on the negative half-line.
    pub fn w(&self, x: f64, deriv: u8) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let lead = self.roots[0];
        if lead * x > OVERFLOW_EXPONENT {
            return self.ln_w(x, deriv).exp();
        }
        self.roots
            .iter()
            .zip(&self.coeffs)
            .map(|(&t, &d)| d * t.powi(deriv as i32) * (t * x).exp())
            .sum()
    }

    /// `ln W_r^{(deriv)}(x)` for large `x`, factoring out the leading
    /// exponential so the sum does not overflow.
    pub fn ln_w(&self, x: f64, deriv: u8) -> f64 {
        let lead = self.roots[0];
        let bracket: f64 = self
            .roots
            .iter()
            .zip(&self.coeffs)
            .map(|(&t, &d)| d * t.powi(deriv as i32) * ((t - lead) * x).exp())
            .sum();
        lead * x + bracket.ln()
    }

    /// `W_r^{(deriv)}(0+)`.
    pub fn at_zero(&self, deriv: u8) -> f64 {
        self.roots
            .iter()
            .zip(&self.coeffs)
            .map(|(&t, &d)| d * t.powi(deriv as i32))
            .sum()
    }

    /// `Z_r(·; Φ(s))` as a reusable evaluator.
    pub fn z_function(&self, s: f64, phi_s: f64) -> Result<ZFunction> {
        if !(s > self.r) {
            return Err(OmegaError::usage(format!(
                "Z needs s > r, got s = {s}, r = {}",
                self.r
            )));
        }
        let mut weights = Vec::with_capacity(self.roots.len());
        for (&t, &d) in self.roots.iter().zip(&self.coeffs) {
            let gap = phi_s - t;
            if gap.abs() < 1e-12 * phi_s.abs().max(1.0) {
                return Err(OmegaError::numeric(format!(
                    "Phi(s) = {phi_s} collides with root {t}"
                )));
            }
            if gap < 0.0 {
                return Err(OmegaError::numeric(format!(
                    "Phi(s) = {phi_s} must exceed every root, found {t}"
                )));
            }
            weights.push((s - self.r) * d / gap);
        }
        Ok(ZFunction {
            phi_s,
            roots: self.roots.clone(),
            weights,
        })
    }

    pub fn z(&self, x: f64, s: f64, phi_s: f64) -> Result<f64> {
        Ok(self.z_function(s, phi_s)?.eval(x))
    }

    pub fn z_deriv(&self, x: f64, s: f64, phi_s: f64) -> Result<f64> {
        Ok(self.z_function(s, phi_s)?.deriv(x))
    }

    /// `Z_r(x; Φ(s)) = e^{Φ(s)x}(1 − (s−r)∫_0^x e^{−Φ(s)y} W_r(y) dy)` with the
    /// integral done termwise. Loses precision for large `x` because of the
    /// cancellation inside the bracket; kept as an independent form.
    pub fn z_integral_form(&self, x: f64, s: f64, phi_s: f64) -> Result<f64> {
        if !(s > self.r) {
            return Err(OmegaError::usage("Z needs s > r"));
        }
        if x <= 0.0 {
            return Ok((phi_s * x).exp());
        }
        let mut integral = 0.0;
        for (&t, &d) in self.roots.iter().zip(&self.coeffs) {
            let g = t - phi_s;
            if g.abs() < 1e-12 {
                return Err(OmegaError::numeric("Phi(s) collides with a root"));
            }
            integral += d * ((g * x).exp() - 1.0) / g;
        }
        Ok((phi_s * x).exp() * (1.0 - (s - self.r) * integral))
    }
}

/// `Z_r(x; Φ(s))` and its derivatives.
///
/// For `x ≥ 0` this uses `Z_r(x; Φ(s)) = (s−r) ∫_0^∞ e^{−Φ(s)y} W_r(x+y) dy
/// = Σ_i (s−r) D_i e^{θ_i x} / (Φ(s) − θ_i)`; for `x < 0` it is `e^{Φ(s)x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZFunction {
    phi_s: f64,
    roots: Vec<f64>,
    weights: Vec<f64>,
}

impl ZFunction {
    fn tail(&self, x: f64, k: i32) -> f64 {
        self.roots
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * t.powi(k) * (t * x).exp())
            .sum()
    }

    pub fn phi_s(&self) -> f64 {
        self.phi_s
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            (self.phi_s * x).exp()
        } else {
            self.tail(x, 0)
        }
    }

    /// `Z'`; both one-sided derivatives agree at 0 because `W_r(0+) = 0`.
    pub fn deriv(&self, x: f64) -> f64 {
        if x < 0.0 {
            self.phi_s * (self.phi_s * x).exp()
        } else {
            self.tail(x, 1)
        }
    }

    /// `Z''`, right-continuous at 0 where it jumps by `−(s−r) W_r'(0+)`.
    pub fn second(&self, x: f64) -> f64 {
        if x < 0.0 {
            self.phi_s * self.phi_s * (self.phi_s * x).exp()
        } else {
            self.tail(x, 2)
        }
    }
}

fn oracle_tol() -> QuadTol {
    QuadTol {
        abs: 1e-13,
        rel: 1e-13,
        max_depth: 40,
    }
}

/// Residual of `∫_a^x W_p(x−y) W_r(y−a) dy = (W_r(x−a) − W_p(x−a))/(r−p)`,
/// with the left-hand side by adaptive quadrature.
pub fn check_identity_w(basis_p: &ScaleBasis, basis_r: &ScaleBasis, a: f64, x: f64) -> Result<f64> {
    let (p, r) = (basis_p.r, basis_r.r);
    if p == r {
        return Err(OmegaError::usage("identity needs p != r"));
    }
    if x < a {
        return Err(OmegaError::usage(format!("identity needs x >= a, got x = {x}, a = {a}")));
    }
    let left = integrate(|y| basis_p.w(x - y, 0) * basis_r.w(y - a, 0), a, x, oracle_tol())?;
    let right = (basis_r.w(x - a, 0) - basis_p.w(x - a, 0)) / (r - p);
    Ok((left - right).abs())
}

/// Residual of `∫_a^x W_p(x−y) Z_r(y−a; Φ(s)) dy = (Z_r(x−a) − Z_p(x−a))/(r−p)`.
pub fn check_identity_z(
    basis_p: &ScaleBasis,
    basis_r: &ScaleBasis,
    s: f64,
    phi_s: f64,
    a: f64,
    x: f64,
) -> Result<f64> {
    let (p, r) = (basis_p.r, basis_r.r);
    if p == r {
        return Err(OmegaError::usage("identity needs p != r"));
    }
    if !(s > p.max(r)) {
        return Err(OmegaError::usage("identity needs s > max(p, r)"));
    }
    if x < a {
        return Err(OmegaError::usage("identity needs x >= a"));
    }
    let zp = basis_p.z_function(s, phi_s)?;
    let zr = basis_r.z_function(s, phi_s)?;
    let left = integrate(|y| basis_p.w(x - y, 0) * zr.eval(y - a), a, x, oracle_tol())?;
    let right = (zr.eval(x - a) - zp.eval(x - a)) / (r - p);
    Ok((left - right).abs())
}

/// Numerical `∫_0^∞ e^{−θx} W_r(x) dx` next to the exact `1/(ψ(θ) − r)`.
/// Returns `(numeric, exact)`.
pub fn laplace_transform_check(model: &LevyModel, basis: &ScaleBasis, theta: f64) -> Result<(f64, f64)> {
    let lead = basis.roots[0];
    if !(theta > lead) {
        return Err(OmegaError::usage(format!(
            "Laplace transform needs theta > {lead}, got {theta}"
        )));
    }
    // beyond this point the integrand is below e^{-45} relative to its scale
    let horizon = 45.0 / (theta - lead);
    let panels = horizon.ceil().max(1.0) as usize;
    let width = horizon / panels as f64;
    let mut numeric = 0.0;
    for k in 0..panels {
        let lo = k as f64 * width;
        numeric += integrate(
            |x| (-theta * x).exp() * basis.w(x, 0),
            lo,
            lo + width,
            QuadTol {
                abs: 1e-16,
                rel: 1e-13,
                max_depth: 40,
            },
        )?;
    }
    let exact = 1.0 / (model.laplace_exponent(theta)? - basis.r);
    Ok((numeric, exact))
}
