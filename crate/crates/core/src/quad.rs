//! One-dimensional Gauss–Kronrod quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod-15 value and |K15 - G7| on one interval.
fn gk15(f: &mut impl FnMut(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let pair = f(c - dx) + f(c + dx);
        k += WGK[i] * pair;
        if i % 2 == 1 {
            g += WG[i / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

/// Adaptive Gauss–Kronrod integration of `f` over `[lo, hi]`, bisecting the
/// interval with the largest error estimate until the summed estimate is
/// below `max(abs_tol, rel_tol * |value|)`.
pub fn integrate(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quadrature> {
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(&mut f, lo, hi);
    let mut parts = vec![(lo, hi, v, e)];
    loop {
        let value: f64 = parts.iter().map(|p| p.2).sum();
        let error: f64 = parts.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(Error::Numeric(format!("integrand not finite on [{lo}, {hi}]")));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Quadrature {
                value,
                error,
                intervals: parts.len(),
            });
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Numeric(format!(
                "quadrature did not converge: error {error:e} after {MAX_INTERVALS} intervals"
            )));
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .3.total_cmp(&b.1 .3))
            .map(|(i, _)| i)
            .expect("at least one interval");
        let (a, b, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (a + b);
        let (v1, e1) = gk15(&mut f, a, mid);
        let (v2, e2) = gk15(&mut f, mid, b);
        parts.push((a, mid, v1, e1));
        parts.push((mid, b, v2, e2));
    }
}

/// Nodes and weights of the composite 15-point Kronrod rule with `panels`
/// equal panels on `[lo, hi]`.
pub fn composite_rule(lo: f64, hi: f64, panels: usize) -> Vec<(f64, f64)> {
    let w = (hi - lo) / panels as f64;
    let mut rule = Vec::with_capacity(15 * panels);
    for p in 0..panels {
        let c = lo + (p as f64 + 0.5) * w;
        let h = 0.5 * w;
        rule.push((c, WGK[7] * h));
        for i in 0..7 {
            rule.push((c - h * XGK[i], WGK[i] * h));
            rule.push((c + h * XGK[i], WGK[i] * h));
        }
    }
    rule
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let q = integrate(|x| x.powi(5) - 3.0 * x * x + 1.0, -1.0, 2.0, 1e-14, 0.0).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0) + 3.0;
        assert!((q.value - exact).abs() < 1e-13);
        assert_eq!(q.intervals, 1);
    }

    #[test]
    fn gaussian_integral() {
        let q = integrate(|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-15, 0.0).unwrap();
        assert!((q.value - std::f64::consts::PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn oscillatory_integral() {
        // int_0^pi sin(20x)^2 dx = pi / 2
        let q = integrate(|x: f64| (20.0 * x).sin().powi(2), 0.0, std::f64::consts::PI, 1e-14, 0.0)
            .unwrap();
        assert!((q.value - std::f64::consts::FRAC_PI_2).abs() < 1e-13);
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        assert!(integrate(|x: f64| 1.0 / x, -1.0, 1.0, 1e-12, 0.0).is_err());
    }

    #[test]
    fn composite_rule_integrates_exponential() {
        let rule = composite_rule(0.0, 3.0, 4);
        assert_eq!(rule.len(), 60);
        let v: f64 = rule.iter().map(|(x, w)| w * x.exp()).sum();
        assert!((v - (3.0f64.exp() - 1.0)).abs() < 1e-13);
    }
}
