use omegalab::control::BarrierSolution;
use omegalab::scale::{check_identity_w, check_identity_z};
use omegalab::*;
use proptest::prelude::*;

fn reference() -> LevyModel {
    LevyModel::reference()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, ..ProptestConfig::default() })]

    #[test]
    fn identity_residuals_on_random_tuples(
        p in 0.01f64..0.6,
        dr in 0.05f64..1.0,
        ds in 0.1f64..2.0,
        a in -2.0f64..0.0,
        dx in 0.0f64..3.0,
    ) {
        let m = reference();
        let r = p + dr;
        let s = r + ds;
        let bp = ScaleBasis::new(&m, p).unwrap();
        let br = ScaleBasis::new(&m, r).unwrap();
        let x = a + dx;
        let scale = br.w(x - a, 0).max(1.0);
        let rw = check_identity_w(&bp, &br, a, x).unwrap();
        prop_assert!(rw < 1e-8 * scale, "W identity residual {rw}");
        let phi_s = m.phi(s).unwrap();
        let zscale = br.z(x - a, s, phi_s).unwrap().max(1.0);
        let rz = check_identity_z(&bp, &br, s, phi_s, a, x).unwrap();
        prop_assert!(rz < 1e-8 * zscale, "Z identity residual {rz}");
    }

    #[test]
    fn laplace_derivatives_match_finite_differences(theta in 0.0f64..20.0) {
        let m = reference();
        let h = 1e-5 * theta.max(1.0);
        let lo = (theta - h).max(0.0);
        let hi = theta + h;
        let fd = (m.laplace_exponent(hi).unwrap() - m.laplace_exponent(lo).unwrap()) / (hi - lo);
        let d1 = m.laplace_exponent_deriv(theta, 1).unwrap();
        prop_assert!((fd - d1).abs() <= 1e-6 * d1.abs().max(1.0));
        prop_assert!(m.laplace_exponent_deriv(theta, 2).unwrap() > 0.0);
    }

    #[test]
    fn step_family_is_pointwise_ordered(n1 in 0usize..6, dn in 1usize..4, x in -3.0f64..0.0) {
        let lo = BankruptcyRate::step_family(n1, -1.0, 1.5).unwrap();
        let hi = BankruptcyRate::step_family(n1 + dn, -1.0, 1.5).unwrap();
        prop_assert!(hi.eval(x) <= lo.eval(x));
    }

    #[test]
    fn affine_family_is_pointwise_ordered(m1 in -1.5f64..0.0, dm in 0.0f64..1.5, x in -1.0f64..0.0) {
        let m2 = (m1 + dm).min(0.0);
        let w1 = BankruptcyRate::affine_family(m1, -1.0, 1.5).unwrap();
        let w2 = BankruptcyRate::affine_family(m2, -1.0, 1.5).unwrap();
        prop_assert!(w1.eval(x) <= w2.eval(x) + 1e-15);
    }

    #[test]
    fn random_step_rates_validate(
        a in -3.0f64..-0.1,
        phi in 0.1f64..5.0,
        drops in prop::collection::vec(0.0f64..1.0, 1..5),
    ) {
        let n = drops.len();
        let bps: Vec<f64> = (0..=n).map(|k| a * (1.0 - k as f64 / n as f64)).collect();
        let mut level = phi;
        let pieces: Vec<Piece> = drops
            .iter()
            .map(|d| {
                level *= d;
                Piece::Constant { value: level }
            })
            .collect();
        let w = BankruptcyRate::new(bps, pieces, phi, 0.0).unwrap();
        let xs: Vec<f64> = (0..200).map(|i| 1.5 * a + i as f64 * (-1.5 * a + 0.5) / 199.0).collect();
        for pair in xs.windows(2) {
            prop_assert!(w.eval(pair[1]) <= w.eval(pair[0]));
            prop_assert!(w.eval_left(pair[1]) >= w.eval(pair[1]));
        }
        prop_assert_eq!(w.eval(0.0), 0.0);
        prop_assert_eq!(w.eval(a - 1.0), phi);
    }
}

#[test]
fn phi_increases_strictly() {
    let m = reference();
    let vals: Vec<f64> = (1..=20).map(|k| m.phi(0.1 * k as f64).unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn root_residuals() {
    let m = reference();
    for r in [0.05, 0.5, 1.55] {
        let roots = m.psi_roots(r).unwrap();
        for &t in &roots.roots {
            let psi = 0.5 * m.sigma * m.sigma * t * t + m.mu * t + m.lambda * (9.0 / (9.0 + t) - 1.0);
            assert!((psi - r).abs() < 1e-12 * r.max(1.0), "r={r} root={t}");
        }
    }
}

#[test]
fn w_increasing_and_derivative_log_convex() {
    let m = reference();
    let b = ScaleBasis::new(&m, 0.05).unwrap();
    let xs: Vec<f64> = (1..=1000).map(|i| 5.0 * i as f64 / 1000.0).collect();
    assert!(xs.windows(2).all(|w| b.w(w[1], 0) > b.w(w[0], 0)));
    let d: Vec<f64> = xs.iter().map(|&x| b.w(x, 1)).collect();
    assert!(d.iter().all(|&v| v >= 0.0));
    let scale = d.iter().fold(0.0f64, |m, &v| m.max(v * v));
    for w in d.windows(3) {
        assert!(w[1] * w[1] <= w[0] * w[2] + 1e-10 * scale);
    }
}

#[test]
fn z_continuous_at_origin() {
    let m = reference();
    let b = ScaleBasis::new(&m, 0.05).unwrap();
    let z = b.z_function(1.55, m.phi(1.55).unwrap()).unwrap();
    assert_eq!(z.eval(-0.0), 1.0);
    assert_eq!(z.eval(0.0), 1.0);
    assert_eq!(z.eval(-1e-300), z.eval(0.0));
}

fn step3() -> BankruptcyRate {
    BankruptcyRate::step_family(3, -1.0, 1.5).unwrap()
}

#[test]
fn derivative_continuous_across_kinks() {
    let m = reference();
    let cfg = SolverConfig::default();
    for w in [step3(), BankruptcyRate::affine_family(-1.0, -1.0, 1.5).unwrap()] {
        let s = solve_h(&m, &w.shift(0.05).unwrap(), &cfg).unwrap();
        let scale = s.table().h1.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for &k in w.kinks() {
            if k == w.a() {
                continue;
            }
            let (l, r) = s.one_sided_slopes(k).unwrap();
            assert!((l - r).abs() <= 100.0 * cfg.grid_step * scale, "kink {k}: {l} vs {r}");
        }
    }
}

#[test]
fn majorant_on_step_and_affine_rates() {
    let m = reference();
    for w in [step3(), BankruptcyRate::affine_family(-0.5, -1.0, 1.5).unwrap()] {
        let s = solve_h(&m, &w.shift(0.05).unwrap(), &SolverConfig::default()).unwrap();
        let scale = s.table().h.iter().fold(0.0f64, |a, &b| a.max(b));
        assert!(s.majorant_excess() <= 1e-10 * scale);
    }
}

#[test]
fn majorant_attained_by_parisian_rate_up_to_discretisation() {
    // the bound is an identity on [a, 0) here, so only O(h²) excess remains
    let m = reference();
    let cfg = SolverConfig::default();
    let w = BankruptcyRate::parisian_from(-1.0, 1.5).unwrap().shift(0.05).unwrap();
    let s = solve_h(&m, &w, &cfg).unwrap();
    let t = s.table();
    let worst = t
        .grid
        .iter()
        .zip(&t.h)
        .map(|(&x, &h)| {
            let bound = (s.big_phi() * (x - s.a())).exp();
            (h - bound) / bound
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(worst <= 20.0 * cfg.grid_step * cfg.grid_step, "{worst}");
}

fn solve(w: &BankruptcyRate) -> BarrierSolution {
    optimal_barrier(&reference(), w, 0.05, &SolverConfig::default()).unwrap()
}

#[test]
fn value_slope_at_least_one_above_zero() {
    let sol = solve(&step3());
    let t = sol.scale().table();
    for (&x, &d) in t.grid.iter().zip(&t.h1) {
        if x > 0.0 {
            assert!(d >= sol.h1_at_b * (1.0 - 1e-12), "x={x}");
        }
    }
}

#[test]
fn smooth_fit_at_optimal_barrier() {
    for w in [BankruptcyRate::parisian_from(-1.0, 1.5).unwrap(), step3()] {
        let sol = solve(&w);
        assert!(sol.b_star > 0.0);
        assert!(sol.diagnostics.smooth_fit.unwrap() <= 1e-4);
    }
}

mod mc {
    use super::*;

    fn cfg(n: usize, dt: f64, seed: u64) -> McConfig {
        McConfig {
            dt,
            n_paths: n,
            weight_floor: 1e-7,
            seed,
            estimator: Estimator::Discounted,
        }
    }

    #[test]
    fn estimators_agree_on_benchmarks() {
        let m = reference();
        let cases = [
            (BankruptcyRate::parisian_from(-1.0, 1.5).unwrap(), 0.24, 0.0),
            (BankruptcyRate::step_family(2, -1.0, 1.5).unwrap(), 0.16, 0.1),
            (BankruptcyRate::step_family(5, -1.0, 1.5).unwrap(), 0.1, -0.3),
            (BankruptcyRate::affine_family(-1.0, -1.0, 1.5).unwrap(), 0.17, 0.0),
            (BankruptcyRate::parisian_from(-1.0, 4.0).unwrap(), 0.3, 0.2),
        ];
        for (i, (w, b, x0)) in cases.iter().enumerate() {
            let (d, k) = simulate_value_pair(&m, w, 0.05, *b, *x0, &cfg(3000, 1e-2, 11 + i as u64)).unwrap();
            let tol = 3.0 * (d.stderr.powi(2) + k.stderr.powi(2)).sqrt();
            assert!((d.mean - k.mean).abs() <= tol, "case {i}: {d:?} vs {k:?}");
        }
    }

    #[test]
    fn halving_dt_moves_estimate_within_noise() {
        let m = reference();
        let w = BankruptcyRate::step_family(2, -1.0, 1.5).unwrap();
        let coarse = simulate_value(&m, &w, 0.05, 0.16, 0.0, &cfg(3000, 2e-2, 5)).unwrap();
        let fine = simulate_value(&m, &w, 0.05, 0.16, 0.0, &cfg(3000, 1e-2, 5)).unwrap();
        let tol = 2.0 * (coarse.stderr.powi(2) + fine.stderr.powi(2)).sqrt();
        assert!((coarse.mean - fine.mean).abs() <= tol, "{coarse:?} vs {fine:?}");
    }

    #[test]
    fn estimate_nondecreasing_in_start() {
        // common seeds make paths from different starts comparable
        let m = reference();
        let w = BankruptcyRate::parisian_from(-1.0, 1.5).unwrap();
        let c = cfg(1500, 1e-2, 3);
        let vals: Vec<f64> = [-0.5, 0.0, 0.5, 1.0]
            .iter()
            .map(|&x| simulate_value(&m, &w, 0.05, 0.24, x, &c).unwrap().mean)
            .collect();
        assert!(vals.windows(2).all(|p| p[1] >= p[0]), "{vals:?}");
    }
}
