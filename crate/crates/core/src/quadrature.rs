//! One-dimensional quadrature: Gauss–Legendre rules and adaptive
//! Gauss–Kronrod integration.

use crate::error::{NlsError, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule of `n` points applied on `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter().zip(&w).map(|(&xi, &wi)| wi * f(mid + half * xi)).sum::<f64>() * half
}

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
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(mid - dx) + f(mid + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration to relative tolerance `rel_tol`.
///
/// Always bisects the interval with the largest error estimate. Endpoints are
/// never evaluated, so integrable endpoint singularities are handled by
/// repeated bisection toward them.
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v0, e0) = gk15(&f, a, b);
    let mut pieces = vec![Piece { lo: a, hi: b, val: v0, err: e0 }];
    let mut total = v0;
    let mut err_total = e0;
    for _ in 0..MAX_SUBDIVISIONS {
        if err_total <= rel_tol * total.abs() {
            break;
        }
        let worst = pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| splittable(p.lo, p.hi))
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .map(|(i, _)| i);
        let Some(i) = worst else { break };
        let p = pieces.swap_remove(i);
        let mid = 0.5 * (p.lo + p.hi);
        let (lv, le) = gk15(&f, p.lo, mid);
        let (rv, re) = gk15(&f, mid, p.hi);
        total += lv + rv - p.val;
        err_total += le + re - p.err;
        pieces.push(Piece { lo: p.lo, hi: mid, val: lv, err: le });
        pieces.push(Piece { lo: mid, hi: p.hi, val: rv, err: re });
    }
    // Re-sum to shed the drift of the running updates.
    total = pieces.iter().map(|p| p.val).sum();
    err_total = pieces.iter().map(|p| p.err).sum();
    if !total.is_finite() {
        return Err(NlsError::InvalidParameter("integrand produced a non-finite value".into()));
    }
    if err_total > 10.0 * rel_tol * total.abs().max(f64::MIN_POSITIVE) {
        return Err(NlsError::InvalidParameter(format!(
            "adaptive quadrature failed to reach tolerance (error estimate {err_total:.3e})"
        )));
    }
    Ok(total)
}

const MAX_SUBDIVISIONS: usize = 5000;

struct Piece {
    lo: f64,
    hi: f64,
    val: f64,
    err: f64,
}

fn splittable(lo: f64, hi: f64) -> bool {
    let mid = 0.5 * (lo + hi);
    mid > lo.min(hi) && mid < lo.max(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(10);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((int - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_smooth_and_singular() {
        let v = integrate_adaptive(|x| x.exp(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-12);
        // ∫_0^1 y^{-3/4} dy = 4
        let s = integrate_adaptive(|y| y.powf(-0.75), 0.0, 1.0, 1e-10).unwrap();
        assert!((s - 4.0).abs() < 4e-9, "{s}");
    }
}
