//! Adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Used by the test oracles and by the jump integral of the generator; the
//! Volterra solver itself uses kink-aligned trapezoid sums.

use crate::error::{OmegaError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_3,
    0.949_107_912_342_758_524_526_189_684_047_9,
    0.864_864_423_359_769_072_789_712_788_640_9,
    0.741_531_185_599_394_439_863_864_773_280_8,
    0.586_087_235_467_691_130_294_144_845_693_0,
    0.405_845_151_377_397_166_906_606_412_076_96,
    0.207_784_955_007_898_467_600_689_403_773_2,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_2,
    0.104_790_010_322_250_183_839_876_322_541_5,
    0.140_653_259_715_525_918_745_189_590_510_2,
    0.169_004_726_639_267_902_826_583_426_598_6,
    0.190_350_578_064_785_409_913_256_402_421_0,
    0.204_432_940_075_298_892_414_161_999_234_6,
    0.209_482_141_084_727_828_012_999_174_891_7,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_1,
    0.279_705_391_489_276_667_901_467_771_423_8,
    0.381_830_050_505_118_944_950_369_775_489_0,
    0.417_959_183_673_469_387_755_102_040_816_3,
];

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadTol {
    pub abs: f64,
    pub rel: f64,
    pub max_depth: u32,
}

impl Default for QuadTol {
    fn default() -> Self {
        QuadTol {
            abs: 1e-12,
            rel: 1e-12,
            max_depth: 40,
        }
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: (f64, f64),
    abs_tol: f64,
    tol: &QuadTol,
    depth: u32,
) -> Result<f64> {
    let (val, err) = whole;
    if err <= abs_tol.max(tol.rel * val.abs()) || (b - a).abs() < 1e-15 * a.abs().max(1.0) {
        return Ok(val);
    }
    if depth >= tol.max_depth {
        return Err(OmegaError::numeric(format!(
            "quadrature on [{a}, {b}] did not reach tolerance (error estimate {err:e})"
        )));
    }
    let m = 0.5 * (a + b);
    let left = kronrod(f, a, m);
    let right = kronrod(f, m, b);
    Ok(adapt(f, a, m, left, 0.5 * abs_tol, tol, depth + 1)?
        + adapt(f, m, b, right, 0.5 * abs_tol, tol, depth + 1)?)
}

/// `∫_a^b f`, adaptively bisecting until the Kronrod error estimate is below
/// the tolerance on every panel.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: QuadTol) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, tol).map(|v| -v);
    }
    let whole = kronrod(&f, a, b);
    adapt(&f, a, b, whole, tol.abs, &tol, 0)
}

/// `∫_a^b f` split at the given interior break points (kinks of `f`).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: QuadTol,
) -> Result<f64> {
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(|x, y| x.total_cmp(y));
    pts.dedup();
    let n = (pts.len() - 1).max(1) as f64;
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += integrate(
            &f,
            w[0],
            w[1],
            QuadTol {
                abs: tol.abs / n,
                ..tol
            },
        )?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| x.powi(5) - 2.0 * x, 0.0, 2.0, QuadTol::default()).unwrap();
        assert!((v - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
    }

    #[test]
    fn exponential_and_reversed_limits() {
        let v = integrate(f64::exp, 1.0, 0.0, QuadTol::default()).unwrap();
        assert!((v + (1f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn kink_split() {
        let v = integrate_with_breaks(|x: f64| x.abs(), -1.0, 2.0, &[0.0], QuadTol::default())
            .unwrap();
        assert!((v - 2.5).abs() < 1e-14);
    }
}
