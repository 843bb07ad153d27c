//! Bankruptcy rate functions and discounting intensities.
//!
//! A rate function is non-increasing, equals `phi` on `(−∞, a)`, equals
//! `rho` on `[0, ∞)`, and is described on `[a, 0)` by finitely many
//! constant or affine pieces over half-open intervals `[a_k, a_{k+1})`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{OmegaError, Result};

/// Callable piece; see [`Piece::Custom`].
#[derive(Clone)]
pub struct CustomPiece(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for CustomPiece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomPiece(..)")
    }
}

/// Shape of `ω` on one interval `[a_k, a_{k+1})`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Piece {
    Constant { value: f64 },
    /// `intercept + slope · (x − a_k)`; `intercept` is the value at the left
    /// end of the interval.
    Affine { intercept: f64, slope: f64 },
    /// Arbitrary continuous function of `x`. Only the endpoint values are
    /// validated; monotonicity inside the piece is the caller's promise.
    #[serde(skip)]
    Custom(CustomPiece),
}

impl Piece {
    fn eval(&self, left: f64, x: f64) -> f64 {
        match self {
            Piece::Constant { value } => *value,
            Piece::Affine { intercept, slope } => intercept + slope * (x - left),
            Piece::Custom(f) => (f.0)(x),
        }
    }

    fn shifted(&self, q: f64) -> Piece {
        match self {
            Piece::Constant { value } => Piece::Constant { value: value + q },
            Piece::Affine { intercept, slope } => Piece::Affine {
                intercept: intercept + q,
                slope: *slope,
            },
            Piece::Custom(f) => {
                let inner = f.0.clone();
                Piece::Custom(CustomPiece(Arc::new(move |x| inner(x) + q)))
            }
        }
    }

    fn same_function(&self, self_left: f64, other: &Piece, other_left: f64) -> bool {
        match (self, other) {
            (Piece::Constant { value: u }, Piece::Constant { value: v }) => u == v,
            (
                Piece::Affine {
                    intercept: i1,
                    slope: s1,
                },
                Piece::Affine {
                    intercept: i2,
                    slope: s2,
                },
            ) => s1 == s2 && (i1 + s1 * (other_left - self_left) - i2).abs() <= 1e-14 * i2.abs().max(1.0),
            _ => false,
        }
    }
}

/// A validated discounting intensity. With `rho = 0` it is a bankruptcy
/// rate function.
#[derive(Debug, Clone)]
pub struct BankruptcyRate {
    a: f64,
    breakpoints: Vec<f64>,
    pieces: Vec<Piece>,
    phi: f64,
    rho: f64,
}

impl BankruptcyRate {
    /// Build and validate. `breakpoints` is `a = a_1 < … < a_{n+1} = 0`
    /// (just `[0]` when `a = 0`), with one piece per interval.
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Piece>, phi: f64, rho: f64) -> Result<Self> {
        let Some(&first) = breakpoints.first() else {
            return Err(OmegaError::validation("at least one breakpoint (0) is required"));
        };
        let mut rate = BankruptcyRate {
            a: first,
            breakpoints,
            pieces,
            phi,
            rho,
        };
        rate.validate()?;
        rate.merge_redundant();
        Ok(rate)
    }

    /// `ω_P = φ 1_{(−∞,0)}` with `a = 0`.
    pub fn parisian(phi: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![], phi, 0.0)
    }

    /// `ω_P` written with a constant piece on `[a, 0)`; same function as
    /// [`parisian`](Self::parisian), different normalisation point.
    pub fn parisian_from(a: f64, phi: f64) -> Result<Self> {
        if a == 0.0 {
            return Self::parisian(phi);
        }
        Self::new(vec![a, 0.0], vec![Piece::Constant { value: phi }], phi, 0.0)
    }

    /// Step family: `p_i = φ/(i+1)` on `[a/i, a/(i+1))`, last interval
    /// `[a/n, 0)`. `n = 0` gives `ω_P`.
    pub fn step_family(n: usize, a: f64, phi: f64) -> Result<Self> {
        if !(a < 0.0) {
            return Err(OmegaError::validation(format!("step family needs a < 0, got {a}")));
        }
        if n == 0 {
            return Self::parisian_from(a, phi);
        }
        let mut breakpoints: Vec<f64> = (1..=n).map(|i| a / i as f64).collect();
        breakpoints.push(0.0);
        let pieces = (1..=n)
            .map(|i| Piece::Constant {
                value: phi / (i as f64 + 1.0),
            })
            .collect();
        Self::new(breakpoints, pieces, phi, 0.0)
    }

    /// Affine family: `φ + m(x − a)` on `[a, 0)`.
    pub fn affine_family(m: f64, a: f64, phi: f64) -> Result<Self> {
        if m > 0.0 {
            return Err(OmegaError::validation(format!("affine slope must be <= 0, got {m}")));
        }
        if !(a < 0.0) {
            return Err(OmegaError::validation(format!("affine family needs a < 0, got {a}")));
        }
        if phi + m * (0.0 - a) < -1e-14 {
            return Err(OmegaError::validation(format!(
                "affine rate becomes negative before 0: phi + m*(-a) = {}",
                phi - m * a
            )));
        }
        if m == 0.0 {
            return Self::parisian_from(a, phi);
        }
        Self::new(
            vec![a, 0.0],
            vec![Piece::Affine {
                intercept: phi,
                slope: m,
            }],
            phi,
            0.0,
        )
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn phi(&self) -> f64 {
        self.phi
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Points where `ω` or its derivative may be discontinuous:
    /// `a_1, …, a_n, 0`.
    pub fn kinks(&self) -> &[f64] {
        &self.breakpoints
    }

    fn piece_index(&self, x: f64) -> Option<usize> {
        if x < self.a || x >= 0.0 {
            return None;
        }
        // last breakpoint <= x
        let k = self.breakpoints.partition_point(|&b| b <= x);
        Some(k - 1)
    }

    /// `ω(x)`, right-continuous.
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.a {
            return self.phi;
        }
        if x >= 0.0 {
            return self.rho;
        }
        let k = self.piece_index(x).expect("x inside [a, 0)");
        self.pieces[k].eval(self.breakpoints[k], x)
    }

    /// Left limit `ω(x−)`.
    pub fn eval_left(&self, x: f64) -> f64 {
        if x <= self.a {
            return self.phi;
        }
        if x > 0.0 {
            return self.rho;
        }
        // piece k with a_k < x <= a_{k+1}
        let k = self.breakpoints.partition_point(|&b| b < x) - 1;
        self.pieces[k].eval(self.breakpoints[k], x)
    }

    /// `ω_q = q + ω`: same partition, `φ_q = φ + q`, `ρ = ρ + q`.
    pub fn shift(&self, q: f64) -> Result<Self> {
        if !(q > 0.0) {
            return Err(OmegaError::usage(format!("shift needs q > 0, got {q}")));
        }
        Ok(BankruptcyRate {
            a: self.a,
            breakpoints: self.breakpoints.clone(),
            pieces: self.pieces.iter().map(|p| p.shifted(q)).collect(),
            phi: self.phi + q,
            rho: self.rho + q,
        })
    }

    /// Short description used in CSV output.
    pub fn describe(&self) -> String {
        let pieces: Vec<String> = self
            .pieces
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(p, w)| match p {
                Piece::Constant { value } => format!("[{}:{})={}", w[0], w[1], value),
                Piece::Affine { intercept, slope } => {
                    format!("[{}:{})={}{:+}*(x-{})", w[0], w[1], intercept, slope, w[0])
                }
                Piece::Custom(_) => format!("[{}:{})=custom", w[0], w[1]),
            })
            .collect();
        format!("phi={};{};rho={}", self.phi, pieces.join(";"), self.rho)
    }

    fn validate(&self) -> Result<()> {
        let bp = &self.breakpoints;
        if bp.iter().any(|v| !v.is_finite()) || !self.phi.is_finite() || !self.rho.is_finite() {
            return Err(OmegaError::validation("rate function parameters must be finite"));
        }
        if *bp.last().expect("non-empty") != 0.0 {
            return Err(OmegaError::validation("last breakpoint must be 0"));
        }
        if self.a > 0.0 {
            return Err(OmegaError::validation(format!("a must be <= 0, got {}", self.a)));
        }
        if bp.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(OmegaError::validation("breakpoints must be strictly increasing"));
        }
        if self.pieces.len() + 1 != bp.len() {
            return Err(OmegaError::validation(format!(
                "{} breakpoints need {} pieces, got {}",
                bp.len(),
                bp.len() - 1,
                self.pieces.len()
            )));
        }
        if !(self.phi > 0.0) {
            return Err(OmegaError::validation(format!("phi must be > 0, got {}", self.phi)));
        }
        if self.rho < 0.0 {
            return Err(OmegaError::validation(format!("rho must be >= 0, got {}", self.rho)));
        }
        let tol = 1e-12 * self.phi.max(1.0);
        for (k, piece) in self.pieces.iter().enumerate() {
            let (l, r) = (bp[k], bp[k + 1]);
            let at_left = piece.eval(l, l);
            let at_right = piece.eval(l, r);
            if let Piece::Affine { slope, .. } = piece {
                if *slope > 0.0 {
                    return Err(OmegaError::validation(format!(
                        "piece on [{l}, {r}) is increasing (slope {slope})"
                    )));
                }
            }
            if at_right > at_left + tol {
                return Err(OmegaError::validation(format!(
                    "piece on [{l}, {r}) is increasing"
                )));
            }
            if at_right < self.rho - tol || at_left < -tol {
                return Err(OmegaError::validation(format!(
                    "piece on [{l}, {r}) drops below rho = {}",
                    self.rho
                )));
            }
        }
        for (k, &x) in bp.iter().enumerate() {
            let left = self.eval_left(x);
            let right = self.eval(x);
            if right > left + tol {
                return Err(OmegaError::validation(format!(
                    "rate jumps upward at {x}: {left} -> {right}"
                )));
            }
            let interior = k > 0 && k + 1 < bp.len();
            if interior && (right - left).abs() <= tol {
                let (p, q) = (&self.pieces[k - 1], &self.pieces[k]);
                if !p.same_function(bp[k - 1], q, x) {
                    log::debug!("continuous breakpoint at {x} kept as a quadrature node");
                }
            }
        }
        if self.eval_left(0.0) < self.rho - tol {
            return Err(OmegaError::validation("omega(0-) must be >= rho"));
        }
        Ok(())
    }

    /// Interior breakpoints where neither value nor formula changes are
    /// dropped.
    fn merge_redundant(&mut self) {
        let mut k = 1;
        while k + 1 < self.breakpoints.len() {
            let x = self.breakpoints[k];
            let same = self.pieces[k - 1].same_function(self.breakpoints[k - 1], &self.pieces[k], x);
            if same {
                self.breakpoints.remove(k);
                self.pieces.remove(k);
            } else {
                k += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parisian_values() {
        let w = BankruptcyRate::parisian(1.5).unwrap();
        assert_eq!(w.eval(-0.5), 1.5);
        assert_eq!(w.eval(3.0), 0.0);
        assert_eq!(w.eval(0.0), 0.0);
        assert_eq!(w.eval_left(0.0), 1.5);
    }

    #[test]
    fn affine_substitution() {
        let w = BankruptcyRate::affine_family(-1.0, -1.0, 1.5).unwrap();
        assert!((w.eval(-0.25) - 0.75).abs() < 1e-15);
        let w = BankruptcyRate::affine_family(-0.5, -1.0, 1.5).unwrap();
        assert!((w.eval(-0.5) - 1.25).abs() < 1e-15);
        let w = BankruptcyRate::affine_family(-1.5, -1.0, 1.5).unwrap();
        assert!(w.eval_left(0.0).abs() < 1e-15);
        assert_eq!(w.eval(0.0), 0.0);
    }

    #[test]
    fn affine_rejects_bad_slopes() {
        assert!(BankruptcyRate::affine_family(0.5, -1.0, 1.5).is_err());
        assert!(BankruptcyRate::affine_family(-2.0, -1.0, 1.5).is_err());
    }

    #[test]
    fn affine_zero_is_parisian() {
        let w = BankruptcyRate::affine_family(0.0, -1.0, 1.5).unwrap();
        let p = BankruptcyRate::parisian(1.5).unwrap();
        for x in [-3.0, -1.0, -0.5, -1e-9, 0.0, 2.0] {
            assert_eq!(w.eval(x), p.eval(x));
        }
    }

    #[test]
    fn step_family_values() {
        let w1 = BankruptcyRate::step_family(1, -1.0, 1.5).unwrap();
        assert_eq!(w1.eval(-0.99), 0.75);
        assert_eq!(w1.eval(-1.01), 1.5);
        let w2 = BankruptcyRate::step_family(2, -1.0, 1.5).unwrap();
        assert_eq!(w2.breakpoints(), &[-1.0, -0.5, 0.0]);
        assert_eq!(w2.eval(-0.6), 0.75);
        assert_eq!(w2.eval(-0.5), 0.5);
        assert_eq!(w2.eval(-0.1), 0.5);
        let w0 = BankruptcyRate::step_family(0, -1.0, 1.5).unwrap();
        assert_eq!(w0.eval(-0.3), 1.5);
    }

    #[test]
    fn shift_adds_constant() {
        let wq = BankruptcyRate::parisian(1.5).unwrap().shift(0.05).unwrap();
        assert!((wq.eval(-0.2) - 1.55).abs() < 1e-15);
        assert_eq!(wq.eval(0.0), 0.05);
        assert_eq!(wq.rho(), 0.05);
        let s2 = BankruptcyRate::step_family(2, -1.0, 1.5).unwrap().shift(0.05).unwrap();
        assert!((s2.eval(-0.6) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn continuous_example_is_constructible() {
        // φ 1_{(−∞,−φ)} − x 1_{[−φ,0)}
        let phi = 1.5;
        let w = BankruptcyRate::new(
            vec![-phi, 0.0],
            vec![Piece::Affine {
                intercept: phi,
                slope: -1.0,
            }],
            phi,
            0.0,
        )
        .unwrap();
        assert!((w.eval(-0.4) - 0.4).abs() < 1e-15);
        assert!(w.eval_left(0.0).abs() < 1e-15);
    }

    #[test]
    fn upward_jump_rejected() {
        let r = BankruptcyRate::new(
            vec![-1.0, -0.5, 0.0],
            vec![Piece::Constant { value: 0.5 }, Piece::Constant { value: 0.8 }],
            1.5,
            0.0,
        );
        assert!(matches!(r, Err(OmegaError::Validation(_))));
    }

    #[test]
    fn zero_jump_pieces_merge() {
        let r = BankruptcyRate::new(
            vec![-1.0, -0.5, 0.0],
            vec![Piece::Constant { value: 0.5 }, Piece::Constant { value: 0.5 }],
            1.5,
            0.0,
        )
        .unwrap();
        assert_eq!(r.breakpoints(), &[-1.0, 0.0]);
        let affine = BankruptcyRate::new(
            vec![-1.0, -0.5, 0.0],
            vec![
                Piece::Affine {
                    intercept: 1.0,
                    slope: -1.0,
                },
                Piece::Affine {
                    intercept: 0.5,
                    slope: -1.0,
                },
            ],
            1.5,
            0.0,
        )
        .unwrap();
        assert_eq!(affine.breakpoints(), &[-1.0, 0.0]);
        assert!((affine.eval(-0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn increasing_piece_rejected() {
        let r = BankruptcyRate::new(
            vec![-1.0, 0.0],
            vec![Piece::Affine {
                intercept: 0.2,
                slope: 0.5,
            }],
            1.5,
            0.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn custom_piece_is_evaluated() {
        let r = BankruptcyRate::new(
            vec![-1.0, 0.0],
            vec![Piece::Custom(CustomPiece(Arc::new(|x: f64| x * x)))],
            1.5,
            0.0,
        )
        .unwrap();
        assert!((r.eval(-0.5) - 0.25).abs() < 1e-15);
    }
}
