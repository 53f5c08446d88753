//! The power nonlinearity `|u|^α u` and empirical quotients of the nonlinear
//! `X`-norm estimates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{NlsError, Result};
use crate::spectral::{raw_forward, raw_inverse, Field, C64};
use crate::weighted::{weighted_infimum, x_norm, SpaceParams};

/// Pointwise `|u|^α u`.
pub fn power_nonlinearity(u: &Field, alpha: f64) -> Field {
    u.map(|z| power_term(z, alpha))
}

#[inline]
pub(crate) fn power_term(z: C64, alpha: f64) -> C64 {
    let r = z.norm();
    if r == 0.0 {
        C64::new(0.0, 0.0)
    } else {
        z * r.powf(alpha)
    }
}

/// Raised-cosine taper over the top third of each axis' frequencies: 1 below
/// `2/3` of the Nyquist index, falling smoothly to 0 at Nyquist.
pub fn taper_factor(wave_index: i64, points: usize) -> f64 {
    let nyquist = (points / 2) as f64;
    let a = (wave_index.unsigned_abs() as f64) / nyquist;
    let start = 2.0 / 3.0;
    if a <= start {
        1.0
    } else {
        let theta = PI * (a - start) / (1.0 - start);
        0.5 * (1.0 + theta.cos())
    }
}

/// `|u|^α u` followed by the anti-alias taper. Used only inside the
/// time-stepping oracle.
pub fn power_nonlinearity_filtered(u: &Field, alpha: f64) -> Field {
    let grid = *u.grid();
    let raw = power_nonlinearity(u, alpha);
    let mut spec = raw_forward(&grid, raw.values());
    let dim = grid.dim();
    for (flat, c) in spec.iter_mut().enumerate() {
        let idx = grid.unflatten(flat);
        let w: f64 = (0..dim).map(|a| taper_factor(grid.wave_index(idx[a]), grid.points())).product();
        *c *= w;
    }
    Field::from_raw(grid, raw_inverse(&grid, spec))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_single: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_pair: Option<f64>,
    pub eta: f64,
    /// `X` norms of the inputs.
    pub input_x_norms: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn check_lower_bound(u: &Field, params: &SpaceParams, eta: f64, which: &str) -> Result<()> {
    if !(eta > 0.0) {
        return Err(NlsError::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    let inf = weighted_infimum(u, params.n);
    // relative slack for the exact-equality case η = 1/inf
    if eta * inf < 1.0 - 1e-12 {
        return Err(NlsError::Precondition(format!(
            "weighted lower bound η·inf ⟨x⟩^n |{which}| ≥ 1 fails: η = {eta}, inf = {inf:.6e}"
        )));
    }
    Ok(())
}

/// `‖|u|^α u‖_X / ((1 + η‖u‖_X)^{2J} ‖u‖_X^{α+1})`.
pub fn nonlinear_estimate_ratio(u: &Field, params: &SpaceParams, eta: f64) -> Result<NonlinearReport> {
    check_lower_bound(u, params, eta, "u")?;
    let xu = x_norm(u, params)?;
    let xf = x_norm(&power_nonlinearity(u, params.alpha), params)?;
    let norm = xu.total;
    let j = params.j as f64;
    // log-domain denominator: (1+ηX)^{2J} overflows quickly
    let log_den = 2.0 * j * (1.0 + eta * norm).ln() + (params.alpha + 1.0) * norm.ln();
    let ratio = (xf.total.ln() - log_den).exp();
    let mut warnings = xu.warnings;
    warnings.extend(xf.warnings);
    Ok(NonlinearReport {
        ratio_single: Some(ratio),
        ratio_pair: None,
        eta,
        input_x_norms: vec![norm],
        seed: None,
        warnings,
    })
}

/// `‖|u₁|^α u₁ − |u₂|^α u₂‖_X / ((1 + η(‖u₁‖+‖u₂‖))^{2J+1} (‖u₁‖+‖u₂‖)^α ‖u₁−u₂‖_X)`.
pub fn nonlinear_lipschitz_ratio(u1: &Field, u2: &Field, params: &SpaceParams, eta: f64) -> Result<NonlinearReport> {
    u1.grid().ensure_same(u2.grid())?;
    check_lower_bound(u1, params, eta, "u₁")?;
    check_lower_bound(u2, params, eta, "u₂")?;
    let x1 = x_norm(u1, params)?;
    let x2 = x_norm(u2, params)?;
    let mut warnings = x1.warnings.clone();
    warnings.extend(x2.warnings.iter().cloned());
    let input_x_norms = vec![x1.total, x2.total];
    if u1 == u2 {
        return Ok(NonlinearReport {
            ratio_single: None,
            ratio_pair: Some(0.0),
            eta,
            input_x_norms,
            seed: None,
            warnings,
        });
    }
    let alpha = params.alpha;
    let num = x_norm(&power_nonlinearity(u1, alpha).sub(&power_nonlinearity(u2, alpha))?, params)?;
    let diff = x_norm(&u1.sub(u2)?, params)?;
    warnings.extend(num.warnings);
    warnings.extend(diff.warnings);
    let sum = x1.total + x2.total;
    let j = params.j as f64;
    let log_den = (2.0 * j + 1.0) * (1.0 + eta * sum).ln() + alpha * sum.ln() + diff.total.ln();
    Ok(NonlinearReport {
        ratio_single: None,
        ratio_pair: Some((num.total.ln() - log_den).exp()),
        eta,
        input_x_norms,
        seed: None,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::{sample_descriptor, InitialDataDescriptor};
    use crate::spectral::make_grid;
    use crate::weighted::select_params;

    #[test]
    fn pointwise_examples() {
        let g = make_grid(1, 16, 2.0).unwrap();
        assert_eq!(power_nonlinearity(&Field::zeros(g), 2.5), Field::zeros(g));
        let two = Field::from_real_fn(g, |_| 2.0);
        let f = power_nonlinearity(&two, 2.5);
        assert!(f.values().iter().all(|v| (v.re - 2f64.powf(3.5)).abs() < 1e-12 && v.im == 0.0));
        assert!((2f64.powf(3.5) - 11.3137).abs() < 1e-4);

        let u = Field::from_fn(g, |x| C64::new(x[0], 1.0 - x[0] * x[0]));
        let rot = C64::from_polar(1.0, 0.7);
        let lhs = power_nonlinearity(&u.scale(rot), 1.3);
        let rhs = power_nonlinearity(&u, 1.3).scale(rot);
        assert!(lhs.l2_distance(&rhs).unwrap() < 1e-12);
        assert_eq!(power_nonlinearity(&u.conj(), 1.3), power_nonlinearity(&u, 1.3).conj());
    }

    #[test]
    fn taper_profile() {
        assert_eq!(taper_factor(0, 64), 1.0);
        assert_eq!(taper_factor(21, 64), 1.0);
        assert!(taper_factor(32, 64).abs() < 1e-15);
        assert!(taper_factor(27, 64) > 0.0 && taper_factor(27, 64) < 1.0);
    }

    #[test]
    fn ratios_and_preconditions() {
        let g = make_grid(1, 1024, 20.0).unwrap();
        let p = select_params(1, 2.5).unwrap();
        let u = sample_descriptor(&InitialDataDescriptor::inverse_bracket(2.0), &g, &p).unwrap();
        let r = nonlinear_estimate_ratio(&u, &p, 2.0).unwrap();
        let single = r.ratio_single.unwrap();
        assert!(single.is_finite() && single > 0.0);
        assert!(r.warnings.is_empty(), "{:?}", r.warnings);

        let u2 = u.scale(C64::new(2.0, 0.0));
        assert!(nonlinear_estimate_ratio(&u2, &p, 1.0).unwrap().ratio_single.unwrap().is_finite());

        let same = nonlinear_lipschitz_ratio(&u, &u, &p, 2.0).unwrap();
        assert_eq!(same.ratio_pair, Some(0.0));
        let pair = nonlinear_lipschitz_ratio(&u, &u2, &p, 2.0).unwrap().ratio_pair.unwrap();
        assert!(pair.is_finite() && pair > 0.0);

        let mut z = u.clone();
        z.values_mut()[300] = C64::new(0.0, 0.0);
        assert!(matches!(nonlinear_estimate_ratio(&z, &p, 2.0), Err(NlsError::Precondition(_))));
        assert!(matches!(nonlinear_lipschitz_ratio(&u, &z, &p, 2.0), Err(NlsError::Precondition(_))));
    }

    #[test]
    fn mass_of_nonlinear_term() {
        let g = make_grid(2, 16, 3.0).unwrap();
        let u = Field::from_fn(g, |x| C64::new(x[0].cos(), x[1]));
        let lhs = power_nonlinearity(&u, 2.5).l2_norm();
        let rhs = u.map(|z| C64::new(z.norm().powf(3.5), 0.0)).l2_norm();
        assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }
}
