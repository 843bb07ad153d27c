use rayon::prelude::*;

use super::config::{OmegaSpec, RunConfig};
use super::CliError;
use crate::control::{optimal_barrier, BarrierSolution};
use crate::error::OmegaError;
use crate::mc::{simulate_value, simulate_value_pair, Estimator};
use crate::omega::BankruptcyRate;
use crate::scale::{laplace_transform_check, ScaleBasis};
use crate::volterra::solve_h;

pub const SCHEMA_VERSION: u32 = 1;

/// A rendered table: `#` metadata, header row, data rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    pub meta: Vec<String>,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// One-line human summary, written to stderr.
    pub summary: Option<String>,
}

impl Csv {
    fn new(command: &str, cfg: &RunConfig, header: Vec<&'static str>) -> Csv {
        Csv {
            meta: vec![
                format!("omegalab-csv schema={SCHEMA_VERSION} command={command}"),
                format!("config_hash={:016x}", cfg.hash()),
                format!("config={}", cfg.canonical_json()),
            ],
            header,
            rows: Vec::new(),
            summary: None,
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for m in &self.meta {
            out.push_str("# ");
            out.push_str(m);
            out.push('\n');
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    /// Column `name` parsed as numbers.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| *h == name)?;
        self.rows.iter().map(|r| r[k].parse().ok()).collect()
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Evenly spaced samples including both ends.
fn samples(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(CliError::config(format!(
            "invalid output range [{lo}, {hi}] with step {step}"
        )));
    }
    let n = ((hi - lo) / step - 1e-9).ceil().max(0.0) as usize;
    let mut xs: Vec<f64> = (0..n).map(|k| lo + k as f64 * step).collect();
    xs.push(hi);
    Ok(xs)
}

struct Entry {
    spec: OmegaSpec,
    rate: BankruptcyRate,
}

fn entries(cfg: &RunConfig) -> Result<Vec<Entry>, CliError> {
    cfg.entries()
        .into_iter()
        .map(|spec| {
            let rate = spec.build()?;
            Ok(Entry { spec, rate })
        })
        .collect()
}

/// Map over entries concurrently, keeping entry order.
fn per_entry<T: Send, F>(list: &[Entry], f: F) -> Result<Vec<T>, CliError>
where
    F: Fn(&Entry) -> Result<T, OmegaError> + Sync,
{
    let out: Vec<Result<T, OmegaError>> = list.par_iter().map(|e| f(e)).collect();
    out.into_iter()
        .zip(list)
        .map(|(r, e)| r.map_err(|err| CliError::from(err).context(&e.spec.label())))
        .collect()
}

fn solve_barrier(cfg: &RunConfig, e: &Entry) -> Result<BarrierSolution, OmegaError> {
    optimal_barrier(&cfg.model, &e.rate, cfg.q, &cfg.solver)
}

pub fn cmd_scale(cfg: &RunConfig) -> Result<Csv, CliError> {
    let rate = cfg.omega.build()?;
    let basis = ScaleBasis::new(&cfg.model, cfg.q)?;
    let s = cfg.q + rate.phi();
    let z = basis.z_function(s, cfg.model.phi(s)?)?;
    let mut csv = Csv::new("scale", cfg, vec!["x", "W", "W1", "Z", "Z1"]);
    csv.meta.push(format!("phi_q={} phi_s={} s={}", cfg.model.phi(cfg.q)?, z.phi_s(), s));
    let lead = basis.roots[0];
    for shift in [0.5, 1.0, 2.0] {
        let theta = lead + shift;
        let (numeric, exact) = laplace_transform_check(&cfg.model, &basis, theta)?;
        csv.meta.push(format!(
            "laplace_check theta={theta} numeric={numeric} exact={exact} rel_residual={:e}",
            ((numeric - exact) / exact).abs()
        ));
    }
    let lo = cfg.output.x_min.unwrap_or(rate.a().min(-1.0));
    let hi = cfg.output.x_max.unwrap_or(3.0);
    for x in samples(lo, hi, cfg.output.step)? {
        csv.rows.push(vec![
            num(x),
            num(basis.w(x, 0)),
            num(basis.w(x, 1)),
            num(z.eval(x)),
            num(z.deriv(x)),
        ]);
    }
    Ok(csv)
}

pub fn cmd_omega(cfg: &RunConfig) -> Result<Csv, CliError> {
    let list = entries(cfg)?;
    let solved = per_entry(&list, |e| solve_h(&cfg.model, &e.rate.shift(cfg.q)?, &cfg.solver))?;
    let mut csv = Csv::new("omega", cfg, vec!["label", "x", "omega", "H", "H1", "H2"]);
    for (e, sc) in list.iter().zip(&solved) {
        let t = sc.table();
        csv.meta.push(format!(
            "solve label={} omega={} method={:?} p={} grid_step={} x_max={} iterations={} increment={:e} monotonicity_violations={}",
            e.spec.label(),
            e.rate.describe(),
            t.meta.method,
            t.meta.p,
            t.meta.grid_step,
            t.meta.x_max,
            t.meta.iterations,
            t.meta.achieved_increment,
            t.meta.monotonicity_violations
        ));
        let lo = cfg.output.x_min.unwrap_or(f64::NEG_INFINITY);
        let hi = cfg.output.x_max.unwrap_or(f64::INFINITY);
        let kinks = e.rate.kinks();
        let mut last = f64::NEG_INFINITY;
        for (i, &x) in t.grid.iter().enumerate() {
            if x < lo || x > hi {
                continue;
            }
            let at_kink = kinks.contains(&x);
            let is_last = i + 1 == t.grid.len();
            if !(at_kink || is_last || x - last >= cfg.output.step - 1e-12) {
                continue;
            }
            last = x;
            csv.rows.push(vec![
                e.spec.label(),
                num(x),
                num(e.rate.eval(x)),
                num(t.h[i]),
                num(t.h1[i]),
                num(t.h2[i]),
            ]);
        }
    }
    Ok(csv)
}

pub fn cmd_barrier(cfg: &RunConfig) -> Result<Csv, CliError> {
    let list = entries(cfg)?;
    let sols = per_entry(&list, |e| solve_barrier(cfg, e))?;
    let mut csv = Csv::new(
        "barrier",
        cfg,
        vec![
            "label",
            "param",
            "omega",
            "b_star",
            "H_b",
            "H1_b",
            "v_0",
            "v_b",
            "extensions",
            "convexity_margin",
            "log_convexity_margin",
        ],
    );
    for (e, s) in list.iter().zip(&sols) {
        csv.rows.push(vec![
            e.spec.label(),
            e.spec.param().map(num).unwrap_or_default(),
            e.rate.describe(),
            num(s.b_star),
            num(s.h_at_b),
            num(s.h1_at_b),
            num(s.value_at(0.0)?),
            num(s.value_at(s.b_star)?),
            s.diagnostics.extensions.to_string(),
            num(s.diagnostics.convexity.convexity_margin),
            num(s.diagnostics.convexity.log_convexity_margin),
        ]);
    }
    let bs: Vec<String> = sols.iter().map(|s| format!("{:.6}", s.b_star)).collect();
    let mut summary = format!("b* = [{}]", bs.join(", "));
    if let Some(sweep) = &cfg.sweep {
        let dec = sweep.expects_nonincreasing();
        let ok = sols.windows(2).all(|w| {
            let tol = 1e-8 * w[0].b_star.abs().max(1e-3);
            if dec {
                w[1].b_star <= w[0].b_star + tol
            } else {
                w[1].b_star >= w[0].b_star - tol
            }
        });
        let dir = if dec { "nonincreasing" } else { "nondecreasing" };
        let verdict = if ok { "holds" } else { "VIOLATED" };
        csv.meta.push(format!("ordering expected={dir} result={verdict}"));
        summary.push_str(&format!("; {dir} ordering {verdict}"));
    }
    csv.summary = Some(summary);
    Ok(csv)
}

pub fn cmd_value(cfg: &RunConfig) -> Result<Csv, CliError> {
    let list = entries(cfg)?;
    let sols = per_entry(&list, |e| solve_barrier(cfg, e))?;
    let mut csv = Csv::new("value", cfg, vec!["label", "x", "v", "v1"]);
    let top = sols.iter().map(|s| s.b_star).fold(0.0, f64::max) + 2.0;
    for (e, s) in list.iter().zip(&sols) {
        csv.meta.push(format!("barrier label={} b_star={}", e.spec.label(), s.b_star));
        let lo = cfg.output.x_min.unwrap_or(e.rate.a());
        let hi = cfg.output.x_max.unwrap_or(top);
        for x in samples(lo, hi, cfg.output.step)? {
            let v1 = if x < s.b_star { s.scale().deriv(x)? / s.h1_at_b } else { 1.0 };
            csv.rows.push(vec![e.spec.label(), num(x), num(s.value_at(x)?), num(v1)]);
        }
    }
    Ok(csv)
}

pub fn cmd_mc(cfg: &RunConfig) -> Result<Csv, CliError> {
    let list = entries(cfg)?;
    let sols = per_entry(&list, |e| solve_barrier(cfg, e))?;
    let hash = format!("{:016x}", cfg.hash());
    let mut csv = Csv::new(
        "mc",
        cfg,
        vec![
            "config_hash",
            "label",
            "b",
            "x0",
            "estimator",
            "mean",
            "stderr",
            "n_paths",
            "truncation_bias_bound",
            "v_analytic",
        ],
    );
    let ests = &cfg.mc.estimators;
    if ests.is_empty() {
        return Err(CliError::config("mc.estimators must not be empty"));
    }
    let both = ests.contains(&Estimator::Discounted) && ests.contains(&Estimator::Killed);
    for (e, s) in list.iter().zip(&sols) {
        let b = s.b_star;
        let mut starts = cfg.mc.x0.clone();
        starts.push(b);
        for x0 in starts {
            let results = if both {
                let (d, k) = simulate_value_pair(
                    &cfg.model,
                    &e.rate,
                    cfg.q,
                    b,
                    x0,
                    &cfg.mc.config(Estimator::Discounted),
                )?;
                vec![(Estimator::Discounted, d), (Estimator::Killed, k)]
            } else {
                vec![(
                    ests[0],
                    simulate_value(&cfg.model, &e.rate, cfg.q, b, x0, &cfg.mc.config(ests[0]))?,
                )]
            };
            let v = s.value_at(x0)?;
            for (est, r) in results {
                csv.rows.push(vec![
                    hash.clone(),
                    e.spec.label(),
                    num(b),
                    num(x0),
                    match est {
                        Estimator::Discounted => "discounted".into(),
                        Estimator::Killed => "killed".into(),
                    },
                    num(r.mean),
                    num(r.stderr),
                    r.n_paths_used.to_string(),
                    num(r.truncation_bias_bound),
                    num(v),
                ]);
            }
        }
    }
    Ok(csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_cover_both_ends() {
        let xs = samples(-1.0, 1.0, 0.5).unwrap();
        assert_eq!(xs, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(samples(0.0, 0.0, 0.1).unwrap(), vec![0.0]);
        assert!(samples(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn scale_rows_match_trivial_values() {
        let csv = cmd_scale(&RunConfig::default()).unwrap();
        let x = csv.column("x").unwrap();
        let w = csv.column("W").unwrap();
        let z = csv.column("Z").unwrap();
        assert_eq!(x[0], -1.0);
        assert_eq!(w[0], 0.0);
        let i0 = x.iter().position(|&v| v.abs() < 1e-12).unwrap();
        assert!((z[i0] - 1.0).abs() < 1e-12);
    }
}
