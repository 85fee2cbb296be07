//! Globally adaptive Gauss–Kronrod (7/15) quadrature on a finite interval.

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

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub abs_error: f64,
    pub intervals: usize,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (k, &x) in XGK[..7].iter().enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Intervals are bisected in order of largest error estimate until the summed
/// estimate drops below `tol` or `max_intervals` is reached.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_intervals: usize,
) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature { value: 0.0, abs_error: 0.0, intervals: 0 });
    }
    let (v, e) = kronrod(&f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    loop {
        let (value, abs_error) = pieces
            .iter()
            .fold((0.0, 0.0), |(s, es), p| (s + p.2, es + p.3));
        if !value.is_finite() {
            return Err(Error::NumericalFailure {
                message: "non-finite integrand on the quadrature interval".into(),
                residual: f64::INFINITY,
            });
        }
        if abs_error <= tol {
            return Ok(Quadrature { value, abs_error, intervals: pieces.len() });
        }
        if pieces.len() >= max_intervals {
            return Err(Error::NumericalFailure {
                message: format!("adaptive quadrature did not reach tolerance {tol:e}"),
                residual: abs_error,
            });
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("non-empty");
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = kronrod(&f, lo, mid);
        let (v2, e2) = kronrod(&f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, 1e-13, 10).unwrap();
        assert!((q.value - (63.0 / 6.0 - 9.0)).abs() < 1e-13);
    }

    #[test]
    fn smooth_transcendental() {
        let q = integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-12, 100).unwrap();
        assert!((q.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reports_failure_with_residual() {
        let err = integrate(|x| 1.0 / x.abs().sqrt().max(1e-300), -1.0, 1.0, 1e-14, 4).unwrap_err();
        match err {
            Error::NumericalFailure { residual, .. } => assert!(residual > 1e-14),
            other => panic!("unexpected {other:?}"),
        }
    }
}
