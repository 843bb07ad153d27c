//! Monte Carlo estimates of barrier values `v_b(x)`.
//!
//! Paths of the surplus are simulated on a fixed step `dt` with exact
//! Gaussian increments; jumps occur at exact exponential event times inside
//! a step. After every increment and before every jump the barrier pays out
//! `max(U − b, 0)` and resets `U` to `b`. The hazard `ω_q = q + ω` enters
//! through a left-point rule using the position at the start of each step.
//!
//! Two estimators are available. [`Estimator::Discounted`] weights each
//! payout with `e^{−∫ω_q(U_s) ds}` and stops a path once the weight drops
//! below `weight_floor`. [`Estimator::Killed`] draws `e ~ Exp(1)`, stops when
//! `∫ω(U_s) ds > e`, and discounts by `e^{−qt}` only.
//!
//! Each path owns the random stream `(seed, path index)`, and partial
//! statistics are combined in chunk order, so results do not depend on the
//! number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OmegaError, Result};
use crate::levy::LevyModel;
use crate::omega::{BankruptcyRate, Piece};

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Discounted,
    Killed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub weight_floor: f64,
    pub seed: u64,
    pub estimator: Estimator,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            dt: 1e-3,
            n_paths: 200_000,
            weight_floor: 1e-7,
            seed: 0x5eed,
            estimator: Estimator::Discounted,
        }
    }
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(OmegaError::validation(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.n_paths == 0 {
            return Err(OmegaError::validation("n_paths must be >= 1"));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor < 1.0) {
            return Err(OmegaError::validation(format!(
                "weight_floor must lie in (0, 1), got {}",
                self.weight_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths_used: usize,
    /// Upper bound on the payout lost by truncating paths.
    pub truncation_bias_bound: f64,
}

/// Running mean and centred second moment.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64,
        }
    }

    fn estimate(&self, bias: f64) -> McEstimate {
        let var = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { 0.0 };
        McEstimate {
            mean: self.mean,
            stderr: (var / self.n as f64).sqrt(),
            n_paths_used: self.n,
            truncation_bias_bound: bias,
        }
    }
}

/// Hazard per region: `ω(u)` and the step factors `e^{−ω_q(u) dt}`.
#[derive(Debug, Clone, Copy)]
enum HazardPiece {
    Constant { omega: f64, factor: f64 },
    Affine { intercept: f64, slope: f64, left: f64 },
}

struct Simulator<'a> {
    mu: f64,
    sigma: f64,
    lambda: f64,
    cum_weights: Vec<f64>,
    rates: Vec<f64>,
    omega: &'a BankruptcyRate,
    pieces: Vec<HazardPiece>,
    q: f64,
    b: f64,
    dt: f64,
    mu_dt: f64,
    sigma_sqrt_dt: f64,
    /// `e^{−q dt}`
    q_factor: f64,
    /// `e^{−(q + φ) dt}`
    phi_factor: f64,
    floor: f64,
}

/// Payouts of one path under both estimators.
struct PathOutcome {
    discounted: f64,
    killed: f64,
}

impl<'a> Simulator<'a> {
    fn new(model: &LevyModel, omega: &'a BankruptcyRate, q: f64, b: f64, cfg: &McConfig) -> Result<Self> {
        let jumps = model.active_jumps();
        let mut acc = 0.0;
        let cum_weights = jumps
            .iter()
            .map(|j| {
                acc += j.weight;
                acc
            })
            .collect();
        let dt = cfg.dt;
        let mut pieces = Vec::with_capacity(omega.pieces().len());
        for (piece, &left) in omega.pieces().iter().zip(omega.breakpoints()) {
            pieces.push(match piece {
                Piece::Constant { value } => HazardPiece::Constant {
                    omega: *value,
                    factor: (-(q + value) * dt).exp(),
                },
                Piece::Affine { intercept, slope } => HazardPiece::Affine {
                    intercept: *intercept,
                    slope: *slope,
                    left,
                },
                Piece::Custom(_) => {
                    return Err(OmegaError::usage("Monte Carlo supports constant and affine pieces only"))
                }
            });
        }
        Ok(Simulator {
            mu: model.mu,
            sigma: model.sigma,
            lambda: model.lambda,
            cum_weights,
            rates: jumps.iter().map(|j| j.rate).collect(),
            omega,
            pieces,
            q,
            b,
            dt,
            mu_dt: model.mu * dt,
            sigma_sqrt_dt: model.sigma * dt.sqrt(),
            q_factor: (-q * dt).exp(),
            phi_factor: (-(q + omega.phi()) * dt).exp(),
            floor: cfg.weight_floor,
        })
    }

    /// `(ω(u), e^{−ω_q(u) dt})`.
    #[inline]
    fn hazard(&self, u: f64) -> (f64, f64) {
        if u >= 0.0 {
            return (self.omega.rho(), self.q_factor);
        }
        if u < self.omega.a() {
            return (self.omega.phi(), self.phi_factor);
        }
        let k = self.omega.breakpoints().partition_point(|&x| x <= u) - 1;
        match self.pieces[k] {
            HazardPiece::Constant { omega, factor } => (omega, factor),
            HazardPiece::Affine { intercept, slope, left } => {
                let w = intercept + slope * (u - left);
                (w, (-(self.q + w) * self.dt).exp())
            }
        }
    }

    #[inline]
    fn jump_size(&self, rng: &mut ChaCha8Rng) -> f64 {
        let e: f64 = rng.sample(Exp1);
        if self.rates.len() == 1 {
            return e / self.rates[0];
        }
        let v: f64 = rng.random();
        let j = self.cum_weights.iter().position(|&c| v < c).unwrap_or(self.rates.len() - 1);
        e / self.rates[j]
    }

    #[inline]
    fn next_arrival(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lambda > 0.0 {
            rng.sample::<f64, _>(Exp1) / self.lambda
        } else {
            f64::INFINITY
        }
    }

    /// Simulate one path from `x0`, tracking the requested estimators.
    fn run(&self, rng: &mut ChaCha8Rng, x0: f64, discounted: bool, killed: bool) -> PathOutcome {
        // draw order is fixed so that both modes see the same path
        let e1: f64 = rng.sample(Exp1);
        let mut until_jump = self.next_arrival(rng);
        let mut u = x0;
        let mut out = PathOutcome {
            discounted: 0.0,
            killed: 0.0,
        };
        if u > self.b {
            out.discounted = u - self.b;
            out.killed = u - self.b;
            u = self.b;
        }
        let mut w = 1.0; // e^{−∫ω_q}
        let mut disc = 1.0; // e^{−qt}
        let mut cum = 0.0; // ∫ω
        let mut alive_d = discounted;
        let mut alive_k = killed;
        while alive_d || alive_k {
            let (om, factor) = self.hazard(u);
            w *= factor;
            disc *= self.q_factor;
            cum += om * self.dt;
            if alive_k && cum > e1 {
                alive_k = false;
            }
            let mut paid = 0.0;
            if until_jump >= self.dt {
                until_jump -= self.dt;
                let z: f64 = rng.sample(StandardNormal);
                u += self.mu_dt + self.sigma_sqrt_dt * z;
            } else {
                let mut left = self.dt;
                while until_jump < left {
                    let tau = until_jump;
                    let z: f64 = rng.sample(StandardNormal);
                    u += self.mu * tau + self.sigma * tau.sqrt() * z;
                    if u > self.b {
                        paid += u - self.b;
                        u = self.b;
                    }
                    u -= self.jump_size(rng);
                    left -= tau;
                    until_jump = self.next_arrival(rng);
                }
                until_jump -= left;
                let z: f64 = rng.sample(StandardNormal);
                u += self.mu * left + self.sigma * left.sqrt() * z;
            }
            if u > self.b {
                paid += u - self.b;
                u = self.b;
            }
            if alive_d {
                out.discounted += w * paid;
                if w < self.floor {
                    alive_d = false;
                }
            }
            if alive_k {
                out.killed += disc * paid;
                if disc < self.floor {
                    alive_k = false;
                }
            }
        }
        out
    }
}

/// Positive root of `μθ + σ²θ²/2 = q`: the discounted dividends of the
/// reflected continuous part from any start are at most `1/θ`.
fn continuous_phi(model: &LevyModel, q: f64) -> f64 {
    let s2 = model.sigma * model.sigma;
    (-model.mu + (model.mu * model.mu + 2.0 * s2 * q).sqrt()) / s2
}

fn check_inputs(model: &LevyModel, omega: &BankruptcyRate, q: f64, b: f64, x0: f64, cfg: &McConfig) -> Result<()> {
    model.validate()?;
    cfg.validate()?;
    if !(b >= 0.0) {
        return Err(OmegaError::usage(format!("barrier must be >= 0, got {b}")));
    }
    if !(q > 0.0) {
        return Err(OmegaError::usage(format!("q must be > 0, got {q}")));
    }
    if omega.rho() != 0.0 {
        return Err(OmegaError::usage("pass the unshifted bankruptcy rate (rho = 0)"));
    }
    if !x0.is_finite() {
        return Err(OmegaError::usage(format!("x0 must be finite, got {x0}")));
    }
    Ok(())
}

fn run_all(
    model: &LevyModel,
    omega: &BankruptcyRate,
    q: f64,
    b: f64,
    x0: f64,
    cfg: &McConfig,
    discounted: bool,
    killed: bool,
) -> Result<(Moments, Moments)> {
    check_inputs(model, omega, q, b, x0, cfg)?;
    let sim = Simulator::new(model, omega, q, b, cfg)?;
    let n_chunks = cfg.n_paths.div_ceil(CHUNK);
    let parts: Vec<(Moments, Moments)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut md = Moments::default();
            let mut mk = Moments::default();
            let start = c * CHUNK;
            let end = (start + CHUNK).min(cfg.n_paths);
            for path in start..end {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(path as u64);
                let o = sim.run(&mut rng, x0, discounted, killed);
                md.push(o.discounted);
                mk.push(o.killed);
            }
            (md, mk)
        })
        .collect();
    Ok(parts
        .into_iter()
        .fold((Moments::default(), Moments::default()), |(a, b), (c, d)| (a.merge(c), b.merge(d))))
}

/// Estimate `v_b(x0)` for the bankruptcy rate `omega` (with `ρ = 0`) and
/// discount rate `q`.
pub fn simulate_value(
    model: &LevyModel,
    omega: &BankruptcyRate,
    q: f64,
    b: f64,
    x0: f64,
    cfg: &McConfig,
) -> Result<McEstimate> {
    let disc = cfg.estimator == Estimator::Discounted;
    let (md, mk) = run_all(model, omega, q, b, x0, cfg, disc, !disc)?;
    let bias = cfg.weight_floor / continuous_phi(model, q);
    Ok(if disc { md.estimate(bias) } else { mk.estimate(bias) })
}

/// Both estimators on common paths: `(discounted, killed)`. The estimates
/// are positively correlated, so the usual combined standard error
/// overstates the spread of their difference.
pub fn simulate_value_pair(
    model: &LevyModel,
    omega: &BankruptcyRate,
    q: f64,
    b: f64,
    x0: f64,
    cfg: &McConfig,
) -> Result<(McEstimate, McEstimate)> {
    let (md, mk) = run_all(model, omega, q, b, x0, cfg, true, true)?;
    let bias = cfg.weight_floor / continuous_phi(model, q);
    Ok((md.estimate(bias), mk.estimate(bias)))
}
