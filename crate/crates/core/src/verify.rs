//! Numerical checks of the standalone estimates: weight derivatives, the
//! interpolation inequality, the Taylor identity for the free flow, the
//! weighted `L²` induction step, propagator growth and lower-bound persistence.
//!
//! Each check yields an [`EstimateCheck`] with the measured constant. Checks on
//! the free flow refuse times past the box-validity horizon and mark them
//! `out_of_validity` instead of failing.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{NlsError, Result};
use crate::initial_data::{sample_descriptor, InitialDataDescriptor};
use crate::quadrature::gauss_legendre;
use crate::spectral::{
    box_validity_horizon, free_propagate, gradient, laplacian_power, make_grid, multi_indices,
    spectral_derivative_with_tail, Field, GridSpec, C64,
};
use crate::weighted::{bracket_weight, weighted_infimum, x_norm, SpaceParams};

/// Top-third energy fraction above which a derivative counts as under-resolved.
const TAIL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    OutOfValidity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs_shape: String,
    pub empirical_constant: f64,
    pub pass: bool,
    pub status: CheckStatus,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, Value>,
}

impl EstimateCheck {
    fn new(name: &str, lhs: f64, rhs_shape: &str, constant: f64, pass: bool, tolerance: f64) -> Self {
        let pass = pass && constant.is_finite();
        Self {
            name: name.into(),
            lhs,
            rhs_shape: rhs_shape.into(),
            empirical_constant: constant,
            pass,
            status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
            tolerance,
            details: BTreeMap::new(),
        }
    }

    fn detail(mut self, key: &str, value: impl Serialize) -> Self {
        self.details.insert(key.into(), json!(value));
        self
    }

    fn out_of_validity(mut self) -> Self {
        self.pass = false;
        self.status = CheckStatus::OutOfValidity;
        self
    }
}

/// `c · x^a · (1+|x|²)^{η/2 − q}`.
#[derive(Clone, Copy, Debug)]
struct WeightTerm {
    coef: f64,
    pow: [u32; 3],
    q: i32,
}

/// Expansion of `D^β (1+|x|²)^{η/2}` as a sum of [`WeightTerm`]s, by repeated
/// application of `∂_i (x^a s^p) = a_i x^{a−e_i} s^p + 2p x^{a+e_i} s^{p−1}`.
fn weight_derivative_terms(eta: f64, beta: &[usize]) -> Vec<WeightTerm> {
    let mut terms = vec![WeightTerm {
        coef: 1.0,
        pow: [0; 3],
        q: 0,
    }];
    for (axis, &order) in beta.iter().enumerate() {
        for _ in 0..order {
            let mut merged: HashMap<([u32; 3], i32), f64> = HashMap::new();
            for t in &terms {
                if t.pow[axis] > 0 {
                    let mut pow = t.pow;
                    pow[axis] -= 1;
                    *merged.entry((pow, t.q)).or_default() += t.coef * t.pow[axis] as f64;
                }
                let p = eta / 2.0 - t.q as f64;
                if p != 0.0 {
                    let mut pow = t.pow;
                    pow[axis] += 1;
                    *merged.entry((pow, t.q + 1)).or_default() += 2.0 * p * t.coef;
                }
            }
            let mut next: Vec<WeightTerm> = merged
                .into_iter()
                .filter(|(_, c)| *c != 0.0)
                .map(|((pow, q), coef)| WeightTerm { coef, pow, q })
                .collect();
            next.sort_by_key(|t| (t.pow, t.q));
            terms = next;
        }
    }
    terms
}

/// Evaluates `Σ c x^a s^{e − q}` with `s = 1+|x|²`.
fn eval_terms(terms: &[WeightTerm], x: &[f64], e: f64) -> f64 {
    let s = 1.0 + x.iter().map(|c| c * c).sum::<f64>();
    terms
        .iter()
        .map(|t| {
            let mono: f64 = x.iter().zip(&t.pow).map(|(xi, &a)| xi.powi(a as i32)).product();
            t.coef * mono * s.powf(e - t.q as f64)
        })
        .sum()
}

/// `D^β ⟨x⟩^η` at `x`, exactly.
pub fn weight_derivative(eta: f64, beta: &[usize], x: &[f64]) -> f64 {
    eval_terms(&weight_derivative_terms(eta, beta), x, eta / 2.0)
}

/// Sample points for suprema of the analytic weight: the grid itself plus rays
/// out to `|x| = 10^8` (the weight is defined on all of space, not the box).
fn weight_sample_points(grid: &GridSpec) -> Vec<Vec<f64>> {
    let dim = grid.dim();
    let mut pts: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.point(i)[..dim].to_vec()).collect();
    let mut dirs = Vec::new();
    for code in 1..3usize.pow(dim as u32) {
        let mut c = code;
        let d: Vec<f64> = (0..dim)
            .map(|_| {
                let v = (c % 3) as f64 - 1.0;
                c /= 3;
                v
            })
            .collect();
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        dirs.push(d.into_iter().map(|v| v / norm).collect::<Vec<_>>());
    }
    for k in 0..=160 {
        let r = 10f64.powf(-2.0 + 10.0 * k as f64 / 160.0);
        for d in &dirs {
            pts.push(d.iter().map(|v| v * r).collect());
        }
    }
    pts
}

/// Empirical `C` in `|D^β ⟨x⟩^η| ≤ C ⟨x⟩^{η−|β|}`, with the derivative computed
/// analytically since the weight is not periodic.
pub fn check_weight_derivative(eta: f64, beta: &[usize], grid: &GridSpec) -> Result<EstimateCheck> {
    if beta.len() != grid.dim() {
        return Err(NlsError::InvalidParameter(format!(
            "multi-index has {} components for a {}-dimensional grid",
            beta.len(),
            grid.dim()
        )));
    }
    let order: usize = beta.iter().sum();
    let terms = weight_derivative_terms(eta, beta);
    // D^β⟨x⟩^η / ⟨x⟩^{η−|β|} = Σ c x^a s^{|β|/2 − q}
    let c = weight_sample_points(grid)
        .par_iter()
        .map(|x| eval_terms(&terms, x, order as f64 / 2.0).abs())
        .reduce(|| 0.0, f64::max);
    Ok(EstimateCheck::new(
        "weight_derivative",
        c,
        &format!("⟨x⟩^({eta} − {order})"),
        c,
        true,
        0.0,
    )
    .detail("eta", eta)
    .detail("beta", beta))
}

/// Smooth cut-off `Π ½(tanh((x_i+a)/δ) − tanh((x_i−a)/δ))`.
fn tanh_window(x: &[f64], a: f64, delta: f64) -> f64 {
    x.iter()
        .map(|&xi| 0.5 * (((xi + a) / delta).tanh() - ((xi - a) / delta).tanh()))
        .product()
}

/// Largest relative gap on the inner half-box between the analytic `D^β⟨x⟩^η`
/// and the spectral derivative of the tanh-windowed weight.
pub fn weight_derivative_cross_check(eta: f64, beta: &[usize], grid: &GridSpec, a: f64, delta: f64) -> Result<f64> {
    let windowed = Field::from_real_fn(*grid, |x| {
        let s = 1.0 + x.iter().map(|c| c * c).sum::<f64>();
        s.powf(eta / 2.0) * tanh_window(x, a, delta)
    });
    let (d, _) = spectral_derivative_with_tail(&windowed, beta)?;
    let inner = grid.half_width() / 2.0;
    let dim = grid.dim();
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for (i, v) in d.values().iter().enumerate() {
        let x = &grid.point(i)[..dim];
        if x.iter().all(|c| c.abs() <= inner) {
            let exact = weight_derivative(eta, beta, x);
            err = err.max((v.re - exact).abs() + v.im.abs());
            scale = scale.max(exact.abs());
        }
    }
    Ok(if scale > 0.0 { err / scale } else { err })
}

fn weighted_sup(f: &Field, weight: &Field) -> f64 {
    f.values()
        .iter()
        .zip(weight.values())
        .map(|(v, w)| v.norm() * w.re)
        .fold(0.0, f64::max)
}

fn sup_over_order(u: &Field, order: usize, weight: &Field) -> Result<(f64, f64)> {
    let mut best: f64 = 0.0;
    let mut tail: f64 = 0.0;
    for beta in multi_indices(u.grid().dim(), order) {
        let (d, t) = spectral_derivative_with_tail(u, &beta)?;
        best = best.max(weighted_sup(&d, weight));
        tail = tail.max(t);
    }
    Ok((best, tail))
}

/// Empirical `C` in
/// `sup_{|β|=j+1} ‖⟨x⟩^θ D^β u‖_∞ ≤ C (sup_{|β|=j} ‖⟨x⟩^θ D^β u‖_∞ + sup_{|β|=j+2} ‖⟨x⟩^θ D^β u‖_∞)`.
pub fn check_interpolation(u: &Field, j: usize, theta: f64) -> Result<EstimateCheck> {
    let weight = bracket_weight(u.grid(), theta);
    let (lo, t0) = sup_over_order(u, j, &weight)?;
    let (mid, t1) = sup_over_order(u, j + 1, &weight)?;
    let (hi, t2) = sup_over_order(u, j + 2, &weight)?;
    let rhs = lo + hi;
    let c = if mid == 0.0 { 0.0 } else { mid / rhs };
    let tail = t0.max(t1).max(t2);
    let mut check = EstimateCheck::new("interpolation", mid, "sup order j + sup order j+2", c, true, 0.0)
        .detail("j", j)
        .detail("theta", theta)
        .detail("rhs", rhs);
    if tail > TAIL_TOL {
        check = check.detail("warning", format!("under-resolved: top-third spectral energy fraction {tail:.3e}"));
    }
    Ok(check)
}

/// Field-valued adaptive Gauss–Legendre: accept a panel when its 16-point value
/// agrees with the sum over its halves to `abs_tol`.
fn integrate_field(f: &(dyn Fn(f64) -> Field + Sync), a: f64, b: f64, abs_tol: f64) -> Result<Field> {
    let (nodes, weights) = gauss_legendre(16);
    let panel = |lo: f64, hi: f64| -> Result<Field> {
        let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let mut acc: Option<Field> = None;
        for (x, w) in nodes.iter().zip(&weights) {
            let term = f(c + h * x).scale(C64::new(w * h, 0.0));
            acc = Some(match acc {
                None => term,
                Some(s) => s.add(&term)?,
            });
        }
        Ok(acc.unwrap())
    };
    fn recurse(
        panel: &dyn Fn(f64, f64) -> Result<Field>,
        lo: f64,
        hi: f64,
        whole: Field,
        tol: f64,
        depth: usize,
    ) -> Result<Field> {
        let mid = 0.5 * (lo + hi);
        let left = panel(lo, mid)?;
        let right = panel(mid, hi)?;
        let halves = left.add(&right)?;
        if halves.l2_distance(&whole)? <= tol || depth == 0 {
            return Ok(halves);
        }
        let l = recurse(panel, lo, mid, left, tol / 2.0, depth - 1)?;
        let r = recurse(panel, mid, hi, right, tol / 2.0, depth - 1)?;
        l.add(&r)
    }
    if a == b {
        return Ok(f(a).scale(C64::new(0.0, 0.0)));
    }
    let whole = panel(a, b)?;
    recurse(&panel, a, b, whole, abs_tol, 24)
}

pub const TAYLOR_TOL: f64 = 1e-8;

/// Residual of the Taylor formula with integral remainder for `v = e^{itΔ}ψ`,
/// expanded to order `m − r`, relative to `‖ψ‖_2`.
pub fn check_taylor_remainder(psi: &Field, t: f64, r: usize, params: &SpaceParams) -> Result<EstimateCheck> {
    if r > params.m {
        return Err(NlsError::InvalidParameter(format!("r = {r} exceeds m = {}", params.m)));
    }
    let k = params.m - r;
    let scale = psi.l2_norm();
    let mut tail: f64 = 0.0;
    for beta in multi_indices(psi.grid().dim(), 2 * (k + 1)) {
        tail = tail.max(spectral_derivative_with_tail(psi, &beta)?.1);
    }
    let v = free_propagate(psi, t);
    let mut rhs = psi.clone();
    let mut factor = C64::new(1.0, 0.0);
    for j in 1..=k {
        factor *= C64::new(0.0, t) / j as f64;
        rhs = rhs.add(&laplacian_power(psi, j as u32).scale(factor))?;
    }
    let top = laplacian_power(psi, (k + 1) as u32);
    let kernel = |s: f64| free_propagate(&top, s).scale(C64::new((t - s).powi(k as i32), 0.0));
    let integral = integrate_field(&kernel, 0.0, t, 1e-3 * TAYLOR_TOL * scale)?;
    let fact: f64 = (1..=k).map(|j| j as f64).product();
    let coef = C64::new(0.0, 1.0).powu((k + 1) as u32) / fact;
    rhs = rhs.add(&integral.scale(coef))?;
    let residual = if scale > 0.0 { v.l2_distance(&rhs)? / scale } else { 0.0 };
    let mut check = EstimateCheck::new(
        "taylor_remainder",
        residual,
        "relative L2 residual of the identity",
        residual,
        residual <= TAYLOR_TOL,
        TAYLOR_TOL,
    )
    .detail("t", t)
    .detail("r", r);
    if tail > TAIL_TOL {
        check = check.detail("warning", format!("under-resolved: top-third spectral energy fraction {tail:.3e}"));
    }
    Ok(check)
}

fn weighted_norm(f: &Field, weight: &Field) -> f64 {
    let sum: f64 = f
        .values()
        .iter()
        .zip(weight.values())
        .map(|(v, w)| v.norm_sqr() * w.re * w.re)
        .sum();
    (sum * f.grid().cell_volume()).sqrt()
}

fn weighted_gradient_norm(f: &Field, weight: &Field) -> f64 {
    gradient(f)
        .iter()
        .map(|g| weighted_norm(g, weight).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![b];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// `‖⟨x⟩^{ℓ+1}v(t)‖ ≤ ‖⟨x⟩^{ℓ+1}ψ‖ + c t sup_{s≤t} ‖⟨x⟩^ℓ∇v(s)‖`, checked with
/// `c = 2(ℓ+2)`; the outcome with `c = 2(ℓ+1)` is recorded alongside. The
/// supremum is sampled at `samples` equispaced times.
pub fn check_weighted_l2_growth(psi: &Field, ell: usize, t: f64, samples: usize) -> Result<EstimateCheck> {
    let grid = *psi.grid();
    let w_hi = bracket_weight(&grid, (ell + 1) as f64);
    let w_lo = bracket_weight(&grid, ell as f64);
    let sup_grad = linspace(0.0, t, samples.max(2))
        .par_iter()
        .map(|&s| weighted_gradient_norm(&free_propagate(psi, s), &w_lo))
        .reduce(|| 0.0, f64::max);
    let base = weighted_norm(psi, &w_hi);
    let lhs = weighted_norm(&free_propagate(psi, t), &w_hi);
    let tol = 1e-12 * base.max(f64::MIN_POSITIVE);
    let bound = |c: f64| base + c * t * sup_grad;
    let safe = 2.0 * (ell + 2) as f64;
    let stated = 2.0 * (ell + 1) as f64;
    let factor = if t > 0.0 && sup_grad > 0.0 { (lhs - base) / (t * sup_grad) } else { 0.0 };
    let horizon = box_validity_horizon(psi);
    let check = EstimateCheck::new(
        "weighted_l2_growth",
        lhs,
        "‖⟨x⟩^(ℓ+1) ψ‖ + 2(ℓ+2) t sup ‖⟨x⟩^ℓ ∇v‖",
        factor.max(0.0),
        lhs <= bound(safe) + tol,
        tol,
    )
    .detail("ell", ell)
    .detail("t", t)
    .detail("initial", base)
    .detail("sup_weighted_gradient", sup_grad)
    .detail("holds_with_2(l+2)", lhs <= bound(safe) + tol)
    .detail("holds_with_2(l+1)", lhs <= bound(stated) + tol);
    Ok(if t > horizon { check.out_of_validity() } else { check })
}

/// Least-squares slope of `‖⟨x⟩^{ℓ+1}v(t)‖ − ‖⟨x⟩^{ℓ+1}ψ‖` over `[0, t_max]`,
/// compared with `2(ℓ+2) sup ‖⟨x⟩^ℓ∇v‖`.
pub fn check_weighted_l2_slope(psi: &Field, ell: usize, t_max: f64, samples: usize) -> Result<EstimateCheck> {
    let grid = *psi.grid();
    let w_hi = bracket_weight(&grid, (ell + 1) as f64);
    let w_lo = bracket_weight(&grid, ell as f64);
    let times = linspace(0.0, t_max, samples.max(3));
    let rows: Vec<(f64, f64)> = times
        .par_iter()
        .map(|&s| {
            let v = free_propagate(psi, s);
            (weighted_norm(&v, &w_hi), weighted_gradient_norm(&v, &w_lo))
        })
        .collect();
    let base = rows[0].0;
    let sup_grad = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let growth: Vec<f64> = rows.iter().map(|r| r.0 - base).collect();
    let (slope, _) = least_squares(&times, &growth);
    let limit = 2.0 * (ell + 2) as f64 * sup_grad;
    let horizon = box_validity_horizon(psi);
    let check = EstimateCheck::new(
        "weighted_l2_slope",
        slope,
        "2(ℓ+2) sup ‖⟨x⟩^ℓ ∇v‖",
        if limit > 0.0 { slope / limit } else { 0.0 },
        slope <= limit,
        0.0,
    )
    .detail("ell", ell)
    .detail("limit", limit);
    Ok(if t_max > horizon { check.out_of_validity() } else { check })
}

/// Ordinary least squares `y ≈ slope x + intercept`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

pub const GROWTH_EXPONENT_SLACK: f64 = 0.5;

/// Fits `log(‖e^{itΔ}ψ‖_X/‖ψ‖_X)` against `log(1+t)`; the exponent must stay
/// within `m+n+1+0.5`. Times past the box horizon are dropped and listed.
pub fn check_propagator_growth(psi: &Field, params: &SpaceParams, times: &[f64]) -> Result<EstimateCheck> {
    let horizon = box_validity_horizon(psi);
    let (valid, dropped): (Vec<f64>, Vec<f64>) = times.iter().partition(|&&t| t.abs() <= horizon);
    let base = x_norm(psi, params)?.total;
    let ratios: Vec<f64> = valid
        .par_iter()
        .map(|&t| x_norm(&free_propagate(psi, t), params).map(|x| x.total / base))
        .collect::<Result<_>>()?;
    let p = params.growth_exponent() as f64;
    let limit = p + GROWTH_EXPONENT_SLACK;
    let xs: Vec<f64> = valid.iter().map(|t| t.abs().ln_1p()).collect();
    let ys: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    let distinct = {
        let mut v = xs.clone();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    };
    let (exponent, _) = least_squares(&xs, &ys);
    let c = valid
        .iter()
        .zip(&ratios)
        .map(|(t, r)| r / (1.0 + t.abs()).powf(p))
        .fold(0.0, f64::max);
    let check = EstimateCheck::new("propagator_growth", exponent, "(1+|t|)^(m+n+1)", c, exponent <= limit, GROWTH_EXPONENT_SLACK)
        .detail("times", &valid)
        .detail("ratios", &ratios)
        .detail("exponent_limit", limit)
        .detail("box_horizon", horizon)
        .detail("dropped_times", &dropped);
    Ok(if distinct < 2 { check.out_of_validity() } else { check })
}

/// `sup_{|β|≤2m} ‖⟨x⟩^n D^β(e^{itΔ}ψ − ψ)‖_∞`.
pub fn difference_sup(psi: &Field, params: &SpaceParams, t: f64) -> Result<f64> {
    let diff = free_propagate(psi, t).sub(psi)?;
    let weight = bracket_weight(psi.grid(), params.n as f64);
    let mut best: f64 = 0.0;
    for order in 0..=params.linf_order() {
        best = best.max(sup_over_order(&diff, order, &weight)?.0);
    }
    Ok(best)
}

/// Empirical `C` in the small-time difference bound
/// `D(t) ≤ C|t|(1+|t|)^{m+n+1}‖ψ‖_X`, plus the two-point ratio `D(2τ)/D(τ)` at
/// `τ = 10^{−3}`, which is 2 when the difference is linear in `t`.
pub fn check_propagator_difference(psi: &Field, params: &SpaceParams, times: &[f64]) -> Result<EstimateCheck> {
    let horizon = box_validity_horizon(psi);
    let (valid, dropped): (Vec<f64>, Vec<f64>) = times.iter().partition(|&&t| t != 0.0 && t.abs() <= horizon);
    let xn = x_norm(psi, params)?.total;
    let p = params.growth_exponent() as i32;
    let diffs: Vec<f64> = valid.par_iter().map(|&t| difference_sup(psi, params, t)).collect::<Result<_>>()?;
    let c = valid
        .iter()
        .zip(&diffs)
        .map(|(t, d)| d / (t.abs() * (1.0 + t.abs()).powi(p) * xn))
        .fold(0.0, f64::max);
    let d1 = difference_sup(psi, params, 1e-3)?;
    let d2 = difference_sup(psi, params, 2e-3)?;
    let ratio = d2 / d1;
    let linear = (ratio - 2.0).abs() <= 0.05;
    let check = EstimateCheck::new(
        "propagator_difference",
        diffs.iter().copied().fold(0.0, f64::max),
        "|t| (1+|t|)^(m+n+1) ‖ψ‖_X",
        c,
        linear,
        0.05,
    )
    .detail("times", &valid)
    .detail("differences", &diffs)
    .detail("two_point_ratio", ratio)
    .detail("dropped_times", &dropped);
    Ok(if valid.is_empty() { check.out_of_validity() } else { check })
}

/// Outcome of tracking `inf ⟨x⟩^n |e^{itΔ}ψ|` over time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersistenceTrace {
    pub times: Vec<f64>,
    pub infima: Vec<f64>,
    pub initial: f64,
    /// Last sampled time before the infimum first drops below half its
    /// initial value (the last time of the trace if it never does).
    pub t0: f64,
    pub dropped_below_half: bool,
    pub infimum_at_half_t0: f64,
    /// `max ‖⟨x⟩^n (e^{itΔ}ψ − ψ)‖_∞ / t` over the trace up to the first drop.
    pub linear_constant: f64,
}

pub fn lower_bound_trace(psi: &Field, params: &SpaceParams, times: &[f64]) -> Result<PersistenceTrace> {
    let initial = weighted_infimum(psi, params.n);
    if !(initial > 0.0) {
        return Err(NlsError::Precondition("weighted lower bound inf ⟨x⟩^n |ψ| > 0 fails".into()));
    }
    let weight = bracket_weight(psi.grid(), params.n as f64);
    let rows: Vec<(f64, f64)> = times
        .par_iter()
        .map(|&t| {
            let v = free_propagate(psi, t);
            let d = weighted_sup(&v.sub(psi).expect("same grid"), &weight);
            (weighted_infimum(&v, params.n), d)
        })
        .collect();
    let first_drop = rows.iter().position(|r| r.0 < 0.5 * initial);
    let t0 = match first_drop {
        Some(0) => 0.0,
        Some(i) => times[i - 1],
        None => *times.last().unwrap_or(&0.0),
    };
    let upto = first_drop.map_or(times.len(), |i| i + 1);
    let linear_constant = times[..upto]
        .iter()
        .zip(&rows[..upto])
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, r)| r.1 / t)
        .fold(0.0, f64::max);
    Ok(PersistenceTrace {
        times: times.to_vec(),
        infima: rows.iter().map(|r| r.0).collect(),
        initial,
        t0,
        dropped_below_half: first_drop.is_some(),
        infimum_at_half_t0: weighted_infimum(&free_propagate(psi, t0 / 2.0), params.n),
        linear_constant,
    })
}

/// Measures `t₀ > 0` and checks it against the linear-regime prediction
/// `t₀ ≥ inf₀ / (2C)` up to one sampling step.
pub fn check_lower_bound_persistence(psi: &Field, params: &SpaceParams, times: &[f64]) -> Result<EstimateCheck> {
    let trace = lower_bound_trace(psi, params, times)?;
    let step = times.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let predicted = if trace.linear_constant > 0.0 {
        trace.initial / (2.0 * trace.linear_constant)
    } else {
        f64::INFINITY
    };
    let consistent = !trace.dropped_below_half || trace.t0 + step >= predicted;
    let horizon = box_validity_horizon(psi);
    let check = EstimateCheck::new(
        "lower_bound_persistence",
        trace.t0,
        "t0 > 0 and inf at t0/2 ≥ inf0/2",
        trace.linear_constant,
        trace.t0 > 0.0 && trace.infimum_at_half_t0 >= 0.5 * trace.initial && consistent,
        0.0,
    )
    .detail("initial_infimum", trace.initial)
    .detail("infimum_at_half_t0", trace.infimum_at_half_t0)
    .detail("predicted_lower_t0", predicted)
    .detail("consistent_with_difference_bound", consistent)
    .detail("dropped_below_half", trace.dropped_below_half)
    .detail("box_horizon", horizon)
    .detail("infima", &trace.infima);
    Ok(if trace.t0 > horizon { check.out_of_validity() } else { check })
}

/// Grid and data for the full battery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub params: SpaceParams,
    pub grid: GridSpec,
    pub gaussian_sigma: f64,
    pub growth_times: Vec<f64>,
    pub persistence_times: Vec<f64>,
}

impl VerifyConfig {
    pub fn standard(params: SpaceParams) -> Result<Self> {
        let (points, half_width) = match params.dim {
            1 => (1024, 40.0),
            2 => (128, 20.0),
            _ => (48, 12.0),
        };
        Ok(Self {
            params,
            grid: make_grid(params.dim, points, half_width)?,
            gaussian_sigma: 1.0,
            growth_times: linspace(0.0, 1.0, 21),
            persistence_times: linspace(0.0, 0.5, 51),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: BTreeMap<String, EstimateCheck>,
    pub passed: usize,
    pub failed: usize,
    pub out_of_validity: usize,
    pub weight_cross_check_max: f64,
}

/// Gaussian `e^{−|x|²/(4σ)}`.
pub fn gaussian(grid: &GridSpec, sigma: f64) -> Field {
    Field::from_real_fn(*grid, |x| (-x.iter().map(|c| c * c).sum::<f64>() / (4.0 * sigma)).exp())
}

/// Runs every check on the configured grid. Keys are stable, so reports diff
/// cleanly between runs.
pub fn run_battery(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let p = cfg.params;
    let g = cfg.grid;
    let dim = g.dim();
    let bracket = sample_descriptor(&InitialDataDescriptor::inverse_bracket(p.n as f64), &g, &p)?;
    let gauss = gaussian(&g, cfg.gaussian_sigma);

    type Job<'a> = Box<dyn Fn() -> Result<EstimateCheck> + Send + Sync + 'a>;
    let mut jobs: Vec<(String, Job)> = Vec::new();
    let n = p.n as f64;
    let mut etas = vec![1.0, -1.0, 2.0, -2.0, -n];
    etas.dedup();
    etas.sort_by(f64::total_cmp);
    etas.dedup();
    for &eta in &etas {
        for order in 0..=p.j {
            for beta in multi_indices(dim, order) {
                let key = format!("weight_derivative/eta={eta}/beta={beta:?}");
                jobs.push((key, Box::new(move || check_weight_derivative(eta, &beta, &g))));
            }
        }
    }
    for j in 0..p.linf_order() {
        let u = &bracket;
        let theta = n;
        jobs.push((format!("interpolation/bracket/j={j}"), Box::new(move || check_interpolation(u, j, theta))));
    }
    for r in [0, p.m] {
        let u = &gauss;
        jobs.push((format!("taylor_remainder/r={r}"), Box::new(move || check_taylor_remainder(u, 0.1, r, &p))));
    }
    for ell in 0..=2 {
        let u = &gauss;
        jobs.push((format!("weighted_l2_growth/l={ell}"), Box::new(move || check_weighted_l2_growth(u, ell, 0.5, 51))));
    }
    {
        let u = &gauss;
        jobs.push(("weighted_l2_slope/l=0".into(), Box::new(move || check_weighted_l2_slope(u, 0, 0.5, 26))));
    }
    {
        let (u, times) = (&bracket, &cfg.growth_times);
        jobs.push(("propagator_growth".into(), Box::new(move || check_propagator_growth(u, &p, times))));
        jobs.push((
            "propagator_difference".into(),
            Box::new(move || check_propagator_difference(u, &p, &[1e-3, 2e-3, 1e-2, 0.05, 0.1])),
        ));
    }
    {
        let (u, times) = (&bracket, &cfg.persistence_times);
        jobs.push(("lower_bound_persistence".into(), Box::new(move || check_lower_bound_persistence(u, &p, times))));
    }

    let results: Vec<(String, EstimateCheck)> = jobs
        .par_iter()
        .map(|(k, f)| f().map(|c| (k.clone(), c)))
        .collect::<Result<_>>()?;

    let cross = if dim == 1 {
        etas.iter()
            .flat_map(|&eta| (0..=4usize).map(move |o| (eta, o)))
            .map(|(eta, o)| weight_derivative_cross_check(eta, &[o], &g, 0.75 * g.half_width(), 0.6))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max)
    } else {
        f64::NAN
    };

    let checks: BTreeMap<String, EstimateCheck> = results.into_iter().collect();
    let count = |s: CheckStatus| checks.values().filter(|c| c.status == s).count();
    Ok(VerifyReport {
        passed: count(CheckStatus::Pass),
        failed: count(CheckStatus::Fail),
        out_of_validity: count(CheckStatus::OutOfValidity),
        checks,
        weight_cross_check_max: cross,
    })
}

/// `sin(2πx/L)`-type test function used for the interpolation example.
pub fn periodic_sine(grid: &GridSpec, waves: f64) -> Field {
    let l = grid.half_width();
    Field::from_real_fn(*grid, |x| (PI * waves * x[0] / l).sin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weighted::select_params;

    #[test]
    fn weight_derivative_closed_forms() {
        for x in [-3.0, -0.5, 0.0, 0.7, 12.0] {
            let b = (1.0f64 + x * x).sqrt();
            assert!((weight_derivative(1.0, &[1], &[x]) - x / b).abs() < 1e-15);
            let d = weight_derivative(-2.0, &[1], &[x]);
            assert!((d + 2.0 * x / b.powi(4)).abs() < 1e-15);
            // second derivative of ⟨x⟩: ⟨x⟩^{-3}
            assert!((weight_derivative(1.0, &[2], &[x]) - b.powi(-3)).abs() < 1e-14);
            assert!((weight_derivative(3.3, &[0], &[x]) / b.powf(3.3) - 1.0).abs() < 1e-15);
        }
        // mixed 2-D: ∂_1∂_2 ⟨x⟩^2 = 0
        assert_eq!(weight_derivative(2.0, &[1, 1], &[0.4, -1.2]), 0.0);
        assert!((weight_derivative(-1.0, &[1, 1], &[0.4, -1.2]) - 3.0 * 0.4 * -1.2 / (1.0f64 + 0.16 + 1.44).powf(2.5)).abs() < 1e-15);
    }

    #[test]
    fn weight_constants() {
        let g = make_grid(1, 256, 20.0).unwrap();
        let c = check_weight_derivative(1.0, &[1], &g).unwrap();
        assert!((c.empirical_constant - 1.0).abs() < 1e-6);
        let c = check_weight_derivative(-2.0, &[1], &g).unwrap();
        assert!(c.empirical_constant <= 2.0 && c.empirical_constant > 0.5);
        for eta in [1.0, -2.0, 2.5] {
            let c = check_weight_derivative(eta, &[0], &g).unwrap();
            assert_eq!(c.empirical_constant, 1.0);
        }
        let g2 = make_grid(2, 16, 5.0).unwrap();
        assert!(check_weight_derivative(1.0, &[1], &g2).is_err());
        assert!(check_weight_derivative(-1.0, &[2, 1], &g2).unwrap().pass);
    }

    #[test]
    fn analytic_and_spectral_weight_derivatives_agree() {
        let g = make_grid(1, 1024, 40.0).unwrap();
        for eta in [1.0, -2.0, 2.0] {
            for order in 1..=4 {
                let e = weight_derivative_cross_check(eta, &[order], &g, 30.0, 0.6).unwrap();
                assert!(e < 1e-6, "eta {eta} order {order}: {e}");
            }
        }
    }

    #[test]
    fn interpolation_examples() {
        let g = make_grid(1, 256, PI).unwrap();
        let s = periodic_sine(&g, 1.0);
        let c = check_interpolation(&s, 0, 0.0).unwrap();
        assert!((c.lhs - 1.0).abs() < 1e-12);
        assert!((c.empirical_constant - 0.5).abs() < 1e-12);
        let scaled = check_interpolation(&s.scale(C64::new(7.0, 0.0)), 0, 0.0).unwrap();
        assert!((scaled.empirical_constant - c.empirical_constant).abs() < 1e-12, "{} vs {}", scaled.empirical_constant, c.empirical_constant);
        let flat = Field::from_real_fn(g, |_| 3.0);
        let c = check_interpolation(&flat, 0, 0.0).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.pass);
    }

    #[test]
    fn taylor_identity() {
        let g = make_grid(1, 512, 20.0).unwrap();
        let p = select_params(1, 2.5).unwrap();
        let psi = gaussian(&g, 1.0);
        for r in [0, 1, p.m] {
            let c = check_taylor_remainder(&psi, 0.1, r, &p).unwrap();
            assert!(c.pass, "r={r}: {}", c.lhs);
        }
        assert_eq!(check_taylor_remainder(&psi, 0.0, 0, &p).unwrap().lhs, 0.0);
        assert!(check_taylor_remainder(&psi, 0.1, 3, &p).is_err());
    }

    #[test]
    fn weighted_growth() {
        let g = make_grid(1, 512, 20.0).unwrap();
        let psi = gaussian(&g, 1.0);
        let c0 = check_weighted_l2_growth(&psi, 0, 0.0, 5).unwrap();
        assert_eq!(c0.lhs, c0.details["initial"].as_f64().unwrap());
        for ell in 0..=2 {
            let c = check_weighted_l2_growth(&psi, ell, 0.5, 26).unwrap();
            assert!(c.pass, "ell {ell}: {:?}", c);
        }
        assert!(check_weighted_l2_slope(&psi, 0, 0.5, 26).unwrap().pass);
    }

    #[test]
    fn growth_and_difference() {
        let g = make_grid(1, 1024, 40.0).unwrap();
        let p = select_params(1, 2.5).unwrap();
        let psi = sample_descriptor(&InitialDataDescriptor::inverse_bracket(2.0), &g, &p).unwrap();
        let zero = check_propagator_growth(&psi, &p, &[0.0]).unwrap();
        assert_eq!(zero.details["ratios"][0].as_f64().unwrap(), 1.0);
        assert_eq!(zero.status, CheckStatus::OutOfValidity);
        let c = check_propagator_growth(&psi, &p, &linspace(0.0, 1.0, 11)).unwrap();
        assert!(c.pass, "{c:?}");
        // times far past the horizon are dropped rather than failed
        let c = check_propagator_growth(&psi, &p, &[0.0, 0.5, 50.0]).unwrap();
        assert_eq!(c.details["dropped_times"][0].as_f64().unwrap(), 50.0);
        assert_eq!(difference_sup(&psi, &p, 0.0).unwrap(), 0.0);
        let d = check_propagator_difference(&psi, &p, &[1e-3, 1e-2]).unwrap();
        assert!(d.pass, "{d:?}");
    }

    #[test]
    fn persistence() {
        let g = make_grid(1, 1024, 40.0).unwrap();
        let p = select_params(1, 2.5).unwrap();
        let psi = sample_descriptor(&InitialDataDescriptor::inverse_bracket(2.0), &g, &p).unwrap();
        let trace = lower_bound_trace(&psi, &p, &[0.0, 0.1]).unwrap();
        assert_eq!(trace.infima[0], trace.initial);
        let c = check_lower_bound_persistence(&psi, &p, &linspace(0.0, 0.5, 51)).unwrap();
        assert!(c.pass, "{c:?}");
    }
}
