//! Spectrally negative Lévy processes with a Gaussian component and
//! hyperexponential downward jumps:
//!
//! ```text
//! X_t = x + μ t + σ B_t − Σ_{i ≤ N_t} Y_i,   Y ~ Σ_j w_j Exp(α_j),   N ~ Poisson(λ)
//! ψ(θ) = μθ + σ²θ²/2 + λ Σ_j w_j (α_j/(α_j+θ) − 1)
//! ```
//!
//! The drift `μ` is the uncompensated (finite-activity) drift.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{OmegaError, Result};

/// One exponential component of the jump-size law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpComponent {
    pub weight: f64,
    pub rate: f64,
}

/// Parameters of the uncontrolled surplus process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyModel {
    pub mu: f64,
    pub sigma: f64,
    pub lambda: f64,
    #[serde(default)]
    pub jump_mix: Vec<JumpComponent>,
}

/// All real solutions of `ψ(s) = q`, sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct RootSet {
    pub q: f64,
    pub roots: Vec<f64>,
    pub phi_q: f64,
}

const ROOT_SEPARATION: f64 = 1e-9;

impl LevyModel {
    pub fn new(mu: f64, sigma: f64, lambda: f64, jump_mix: Vec<JumpComponent>) -> Result<Self> {
        let model = LevyModel {
            mu,
            sigma,
            lambda,
            jump_mix,
        };
        model.validate()?;
        Ok(model)
    }

    /// Single exponential jumps: `Y ~ Exp(alpha)`.
    pub fn exponential_jumps(mu: f64, sigma: f64, lambda: f64, alpha: f64) -> Result<Self> {
        Self::new(
            mu,
            sigma,
            lambda,
            vec![JumpComponent {
                weight: 1.0,
                rate: alpha,
            }],
        )
    }

    /// The reference model used throughout the sensitivity experiments:
    /// μ = 0.075, σ = 0.25, λ = 0.5, α = 9.
    pub fn reference() -> Self {
        Self::exponential_jumps(0.075, 0.25, 0.5, 9.0).expect("reference model is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu, self.sigma, self.lambda]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(OmegaError::validation("model parameters must be finite"));
        }
        if self.sigma <= 0.0 {
            return Err(OmegaError::validation(format!(
                "sigma must be strictly positive, got {}",
                self.sigma
            )));
        }
        if self.lambda < 0.0 {
            return Err(OmegaError::validation(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if self.lambda > 0.0 && self.jump_mix.is_empty() {
            return Err(OmegaError::validation(
                "lambda > 0 requires at least one jump component",
            ));
        }
        let mut total = 0.0;
        for (i, c) in self.jump_mix.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(OmegaError::validation(format!(
                    "jump weight {} out of (0, 1] at component {i}",
                    c.weight
                )));
            }
            if !(c.rate > 0.0 && c.rate.is_finite()) {
                return Err(OmegaError::validation(format!(
                    "jump rate {} must be positive at component {i}",
                    c.rate
                )));
            }
            total += c.weight;
        }
        if !self.jump_mix.is_empty() && (total - 1.0).abs() > 1e-12 {
            return Err(OmegaError::validation(format!(
                "jump weights sum to {total}, expected 1"
            )));
        }
        for (i, c) in self.jump_mix.iter().enumerate() {
            for d in &self.jump_mix[i + 1..] {
                if c.rate == d.rate {
                    return Err(OmegaError::validation(format!(
                        "jump rates must be distinct, {} repeated",
                        c.rate
                    )));
                }
            }
        }
        Ok(())
    }

    /// Jump components that actually contribute (none when `λ = 0`).
    pub fn active_jumps(&self) -> &[JumpComponent] {
        if self.lambda > 0.0 {
            &self.jump_mix
        } else {
            &[]
        }
    }

    /// Mean jump size `Σ w_j / α_j`.
    pub fn mean_jump(&self) -> f64 {
        self.active_jumps().iter().map(|c| c.weight / c.rate).sum()
    }

    /// `ψ(s)` for any real `s` away from the poles `−α_j`.
    pub(crate) fn psi_at(&self, s: f64) -> f64 {
        let jumps: f64 = self
            .active_jumps()
            .iter()
            .map(|c| c.weight * (c.rate / (c.rate + s) - 1.0))
            .sum();
        self.mu * s + 0.5 * self.sigma * self.sigma * s * s + self.lambda * jumps
    }

    pub(crate) fn psi_deriv_at(&self, s: f64) -> f64 {
        let jumps: f64 = self
            .active_jumps()
            .iter()
            .map(|c| c.weight * c.rate / ((c.rate + s) * (c.rate + s)))
            .sum();
        self.mu + self.sigma * self.sigma * s - self.lambda * jumps
    }

    pub(crate) fn psi_second_at(&self, s: f64) -> f64 {
        let jumps: f64 = self
            .active_jumps()
            .iter()
            .map(|c| c.weight * c.rate / (c.rate + s).powi(3))
            .sum();
        self.sigma * self.sigma + 2.0 * self.lambda * jumps
    }

    /// Laplace exponent `ψ(θ)` for `θ ≥ 0`.
    pub fn laplace_exponent(&self, theta: f64) -> Result<f64> {
        if !(theta >= 0.0) {
            return Err(OmegaError::domain(format!(
                "laplace exponent needs theta >= 0, got {theta}"
            )));
        }
        if theta == 0.0 {
            return Ok(0.0);
        }
        Ok(self.psi_at(theta))
    }

    /// `ψ'(θ)` (order 1) or `ψ''(θ)` (order 2) for `θ ≥ 0`.
    pub fn laplace_exponent_deriv(&self, theta: f64, order: u8) -> Result<f64> {
        if !(theta >= 0.0) {
            return Err(OmegaError::domain(format!(
                "laplace exponent derivative needs theta >= 0, got {theta}"
            )));
        }
        match order {
            1 => Ok(self.psi_deriv_at(theta)),
            2 => Ok(self.psi_second_at(theta)),
            _ => Err(OmegaError::usage(format!(
                "derivative order must be 1 or 2, got {order}"
            ))),
        }
    }

    /// `Φ(r) = sup{θ ≥ 0 : ψ(θ) = r}`.
    pub fn phi(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(OmegaError::domain(format!("phi needs r >= 0, got {r}")));
        }
        let mut lo = 0.0;
        if r == 0.0 {
            if self.psi_deriv_at(0.0) >= 0.0 {
                return Ok(0.0);
            }
            // ψ dips below zero first; start the bracket at the minimiser.
            lo = self.psi_minimiser()?;
        }
        let f = |t: f64| self.psi_at(t) - r;
        let mut hi = 1.0_f64.max(2.0 * lo);
        let mut doublings = 0;
        while f(hi) <= 0.0 {
            hi *= 2.0;
            doublings += 1;
            if doublings > 200 || !hi.is_finite() {
                return Err(OmegaError::numeric(format!(
                    "phi({r}): no upper bracket found, last bracket [{lo}, {hi}]"
                )));
            }
        }
        safeguarded_newton(f, |t| self.psi_deriv_at(t), lo, hi).map_err(|(a, b)| {
            OmegaError::numeric(format!("phi({r}): root search stalled in [{a}, {b}]"))
        })
    }

    fn psi_minimiser(&self) -> Result<f64> {
        // ψ' is increasing on [0, ∞) and ψ'(0) < 0 here.
        let mut hi = 1.0;
        let mut guard = 0;
        while self.psi_deriv_at(hi) <= 0.0 {
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(OmegaError::numeric("psi has no minimiser on [0, inf)"));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.psi_deriv_at(mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    /// Coefficients (ascending powers) of `(ψ(s) − r) Π_j (α_j + s)`.
    pub fn cleared_polynomial(&self, r: f64) -> Vec<f64> {
        let jumps = self.active_jumps();
        let quad = [-r, self.mu, 0.5 * self.sigma * self.sigma];
        let mut full = vec![1.0];
        for c in jumps {
            full = poly_mul(&full, &[c.rate, 1.0]);
        }
        let mut out = poly_mul(&quad, &full);
        for (j, c) in jumps.iter().enumerate() {
            let mut others = vec![1.0];
            for (k, d) in jumps.iter().enumerate() {
                if k != j {
                    others = poly_mul(&others, &[d.rate, 1.0]);
                }
            }
            // −λ w_j s Π_{k≠j}(α_k + s)
            let term = poly_mul(&others, &[0.0, -self.lambda * c.weight]);
            for (i, t) in term.iter().enumerate() {
                out[i] += t;
            }
        }
        out
    }

    /// All real roots of `ψ(s) = r`, for `r > 0`.
    pub fn psi_roots(&self, r: f64) -> Result<RootSet> {
        if !(r > 0.0) {
            return Err(OmegaError::usage(format!("psi_roots needs r > 0, got {r}")));
        }
        self.roots_at_level(r)
    }

    /// Same as [`psi_roots`](Self::psi_roots) but also accepts `r = 0`.
    pub(crate) fn roots_at_level(&self, r: f64) -> Result<RootSet> {
        let coeffs = self.cleared_polynomial(r);
        let raw = polynomial_roots(&coeffs)?;
        let mut roots = Vec::with_capacity(raw.len());
        for (re, im) in raw {
            if im.abs() > 1e-6 * re.abs().max(1.0) {
                return Err(OmegaError::numeric(format!(
                    "psi(s) = {r}: complex root {re} + {im}i where all roots should be real"
                )));
            }
            roots.push(self.polish_root(re, r));
        }
        roots.sort_by(|a, b| b.partial_cmp(a).expect("finite roots"));
        for w in roots.windows(2) {
            if (w[0] - w[1]).abs() <= ROOT_SEPARATION {
                return Err(OmegaError::numeric(format!(
                    "degenerate root configuration for psi(s) = {r}: {} and {}",
                    w[0], w[1]
                )));
            }
        }
        let tol = 1e-12 * r.max(1.0);
        for &s in &roots {
            let res = (self.psi_at(s) - r).abs();
            // Residuals close to poles are limited by |ψ'| · ulp(s).
            let limit = tol.max(4.0 * f64::EPSILON * s.abs().max(1.0) * self.psi_deriv_at(s).abs());
            if !(res <= limit) {
                return Err(OmegaError::numeric(format!(
                    "root {s} of psi(s) = {r} has residual {res:e}"
                )));
            }
        }
        let phi_q = self.phi(r)?;
        if let Some(k) = (0..roots.len())
            .min_by(|&i, &j| (roots[i] - phi_q).abs().total_cmp(&(roots[j] - phi_q).abs()))
        {
            if (roots[k] - phi_q).abs() <= 1e-10 * phi_q.max(1.0) {
                roots[k] = phi_q;
            }
        }
        if r > 0.0 {
            let positive = roots.iter().filter(|&&s| s > 0.0).count();
            if positive != 1 {
                return Err(OmegaError::numeric(format!(
                    "expected exactly one positive root of psi(s) = {r}, found {positive}"
                )));
            }
            // Agreement between the eigenvalue route and the bracketing route.
            if (roots[0] - phi_q).abs() > 1e-10 * phi_q.max(1.0) {
                return Err(OmegaError::numeric(format!(
                    "largest root {} disagrees with phi({r}) = {phi_q}",
                    roots[0]
                )));
            }
        }
        Ok(RootSet {
            q: r,
            roots,
            phi_q,
        })
    }

    fn polish_root(&self, guess: f64, r: f64) -> f64 {
        let mut s = guess;
        let mut best = (self.psi_at(s) - r).abs();
        let mut best_s = s;
        for _ in 0..60 {
            let f = self.psi_at(s) - r;
            let d = self.psi_deriv_at(s);
            if f == 0.0 || d == 0.0 || !d.is_finite() {
                break;
            }
            let next = s - f / d;
            if !next.is_finite() {
                break;
            }
            let val = (self.psi_at(next) - r).abs();
            s = next;
            if val < best {
                best = val;
                best_s = next;
            } else if val >= best && (next - best_s).abs() <= 4.0 * f64::EPSILON * next.abs() {
                break;
            }
            if best <= 1e-15 * r.max(1.0) {
                break;
            }
        }
        best_s
    }
}

/// Newton iteration kept inside a sign-change bracket.
fn safeguarded_newton(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
) -> std::result::Result<f64, (f64, f64)> {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi.abs().max(1e-300) {
            return Ok(if f(hi).abs() < f(lo).abs() { hi } else { lo });
        }
        let d = df(x);
        let newton = x - fx / d;
        x = if d.is_finite() && d != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let best = if f(hi).abs() < f(lo).abs() { hi } else { lo };
    if (hi - lo) < 1e-12 * hi.abs().max(1.0) {
        Ok(best)
    } else {
        Err((lo, hi))
    }
}

pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Roots of a polynomial (ascending coefficients) as `(re, im)` pairs, via
/// the eigenvalues of the companion matrix.
pub(crate) fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mut c = coeffs.to_vec();
    while c.len() > 1 && *c.last().expect("non-empty") == 0.0 {
        c.pop();
    }
    let n = c.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = c[n];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i] / lead;
    }
    let eig = m.complex_eigenvalues();
    let out: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    if out.iter().any(|(re, im)| !re.is_finite() || !im.is_finite()) {
        return Err(OmegaError::numeric("companion eigenvalues did not converge"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn psi_at_zero_is_exact() {
        assert_eq!(LevyModel::reference().laplace_exponent(0.0).unwrap(), 0.0);
    }

    #[test]
    fn psi_at_one_hand_arithmetic() {
        // 0.075 + 0.03125 + 0.5 (9/10 - 1)
        let v = LevyModel::reference().laplace_exponent(1.0).unwrap();
        assert_relative_eq!(v, 0.05625, epsilon = 1e-15);
    }

    #[test]
    fn negative_theta_is_domain_error() {
        let m = LevyModel::reference();
        assert!(matches!(m.laplace_exponent(-0.1), Err(OmegaError::Domain(_))));
        assert!(matches!(m.laplace_exponent_deriv(-0.1, 1), Err(OmegaError::Domain(_))));
    }

    #[test]
    fn slope_at_origin() {
        let m = LevyModel::reference();
        let expected = 0.075 - 0.5 / 9.0;
        assert_relative_eq!(m.laplace_exponent_deriv(0.0, 1).unwrap(), expected, epsilon = 1e-15);
        let fd = central_diff(|t| m.psi_at(t), 0.0, 1e-6);
        assert_relative_eq!(fd, expected, max_relative = 1e-8);
    }

    #[test]
    fn derivative_orders() {
        let m = LevyModel::reference();
        let fd = central_diff(|t| m.psi_at(t), 1.0, 1e-5);
        assert!((m.laplace_exponent_deriv(1.0, 1).unwrap() - fd).abs() < 1e-8);
        let far = m.laplace_exponent_deriv(1e6, 2).unwrap();
        assert_relative_eq!(far, 0.0625, max_relative = 1e-9);
        assert!(matches!(m.laplace_exponent_deriv(1.0, 3), Err(OmegaError::Usage(_))));
    }

    #[test]
    fn phi_at_zero_with_positive_drift() {
        assert_eq!(LevyModel::reference().phi(0.0).unwrap(), 0.0);
    }

    #[test]
    fn phi_with_negative_net_drift() {
        let m = LevyModel::exponential_jumps(0.01, 0.25, 0.5, 9.0).unwrap();
        let p0 = m.phi(0.0).unwrap();
        assert!(p0 > 0.0);
        assert!(m.psi_at(p0).abs() < 1e-12);
    }

    #[test]
    fn phi_residual_and_monotone() {
        let m = LevyModel::reference();
        let a = m.phi(0.05).unwrap();
        let b = m.phi(1.55).unwrap();
        assert!((m.psi_at(a) - 0.05).abs() < 1e-12);
        assert!((m.psi_at(b) - 1.55).abs() < 1e-12 * 1.55);
        assert!(a < b);
    }

    #[test]
    fn roots_reference_model() {
        let m = LevyModel::reference();
        let rs = m.psi_roots(0.05).unwrap();
        assert_eq!(rs.roots.len(), 3);
        assert!(rs.roots[0] > 0.0 && rs.roots[1] < 0.0 && rs.roots[2] < 0.0);
        for &s in &rs.roots {
            assert!((m.psi_at(s) - 0.05).abs() < 1e-12);
        }
        assert!((rs.roots[0] - m.phi(0.05).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn roots_satisfy_vieta() {
        // (σ²/2) s²(α+s) + μ s(α+s) − λ s − r(α+s)
        let (mu, s2, lam, alpha, r) = (0.075, 0.0625, 0.5, 9.0, 0.05);
        let c3 = s2 / 2.0;
        let c2 = s2 / 2.0 * alpha + mu;
        let c1 = mu * alpha - lam - r;
        let c0 = -r * alpha;
        let rs = LevyModel::reference().psi_roots(r).unwrap().roots;
        let sum: f64 = rs.iter().sum();
        let prod: f64 = rs.iter().product();
        let pairs = rs[0] * rs[1] + rs[0] * rs[2] + rs[1] * rs[2];
        assert!((sum + c2 / c3).abs() < 1e-10);
        assert!((pairs - c1 / c3).abs() < 1e-10);
        assert!((prod + c0 / c3).abs() < 1e-10);
    }

    #[test]
    fn nonpositive_level_rejected() {
        let m = LevyModel::reference();
        assert!(matches!(m.psi_roots(0.0), Err(OmegaError::Usage(_))));
    }

    #[test]
    fn hyperexponential_roots_all_real() {
        let m = LevyModel::new(
            0.1,
            0.3,
            1.0,
            vec![
                JumpComponent { weight: 0.3, rate: 2.0 },
                JumpComponent { weight: 0.7, rate: 15.0 },
            ],
        )
        .unwrap();
        let rs = m.psi_roots(0.2).unwrap();
        assert_eq!(rs.roots.len(), 4);
        // one root between consecutive poles, one beyond the last
        assert!(rs.roots[1] > -2.0 && rs.roots[1] < 0.0);
        assert!(rs.roots[2] > -15.0 && rs.roots[2] < -2.0);
        assert!(rs.roots[3] < -15.0);
    }

    #[test]
    fn model_validation() {
        assert!(LevyModel::exponential_jumps(0.1, 0.0, 0.5, 9.0).is_err());
        assert!(LevyModel::exponential_jumps(0.1, 0.2, -1.0, 9.0).is_err());
        assert!(LevyModel::exponential_jumps(0.1, 0.2, 0.5, 0.0).is_err());
        let bad_weights = vec![
            JumpComponent { weight: 0.5, rate: 1.0 },
            JumpComponent { weight: 0.4, rate: 2.0 },
        ];
        assert!(LevyModel::new(0.1, 0.2, 1.0, bad_weights).is_err());
        let repeated = vec![
            JumpComponent { weight: 0.5, rate: 1.0 },
            JumpComponent { weight: 0.5, rate: 1.0 },
        ];
        assert!(LevyModel::new(0.1, 0.2, 1.0, repeated).is_err());
    }

    #[test]
    fn brownian_only_model() {
        let m = LevyModel::new(0.1, 0.4, 0.0, vec![]).unwrap();
        let rs = m.psi_roots(0.05).unwrap();
        assert_eq!(rs.roots.len(), 2);
    }
}
