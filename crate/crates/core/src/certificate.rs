//! Contraction bookkeeping: the empirical constant `C̃`, and the local (`T`) and
//! global (`b`) schedules under which the Picard map is certified to contract.
//!
//! `C̃` is a maximum over a declared, seed-pinned sample family, not a proven
//! bound, so every certificate is labelled `empirical`. All conditions are
//! evaluated in the log domain: `(1 + ηK)^{2J}` routinely exceeds `f64` range.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::duhamel::{f_of_t, picard_solve, ProblemSpec, TimeMesh};
use crate::error::{NlsError, Result};
use crate::initial_data::sample_family;
use crate::nonlinearity::{nonlinear_estimate_ratio, nonlinear_lipschitz_ratio};
use crate::spectral::{box_validity_horizon, free_propagate, Field, GridSpec};
use crate::weighted::{weighted_infimum, x_norm, SpaceParams};

/// Times at which the propagator growth quotient is sampled, clipped to the
/// box-validity horizon of each member.
pub const GROWTH_TIMES: [f64; 5] = [0.05, 0.1, 0.2, 0.35, 0.5];

pub const DEFAULT_FAMILY_SIZE: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberRatios {
    pub member: usize,
    pub propagator_growth: f64,
    pub nonlinear_single: f64,
    /// Paired with the next member of the family (the last pairs with the first).
    pub nonlinear_pair: f64,
    pub times_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub c_tilde: f64,
    pub seed: u64,
    pub family_size: usize,
    pub grid: GridSpec,
    pub params: SpaceParams,
    pub members: Vec<MemberRatios>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// `C̃` = max over the family of the propagator growth quotient
/// `‖e^{itΔ}ψ‖_X / ((1+t)^{m+n+1} ‖ψ‖_X)` and the two nonlinear quotients.
pub fn estimate_constants(seed: u64, params: &SpaceParams, grid: &GridSpec, family_size: usize) -> Result<ConstantEstimate> {
    if family_size == 0 {
        return Err(NlsError::InvalidParameter("family must have at least one member".into()));
    }
    let family = sample_family(seed, grid, params, family_size)?;
    let norms: Vec<_> = family.par_iter().map(|f| x_norm(f, params)).collect::<Result<_>>()?;
    for (i, n) in norms.iter().enumerate() {
        if !n.warnings.is_empty() {
            return Err(NlsError::Precondition(format!(
                "family member {i} is under-resolved on this grid: {}",
                n.warnings.join("; ")
            )));
        }
    }
    let infs: Vec<f64> = family.iter().map(|f| weighted_infimum(f, params.n)).collect();
    let growth_exp = params.growth_exponent() as i32;

    let members: Vec<(MemberRatios, Vec<String>)> = (0..family_size)
        .into_par_iter()
        .map(|i| -> Result<(MemberRatios, Vec<String>)> {
            let psi = &family[i];
            let base = norms[i].total;
            let horizon = box_validity_horizon(psi);
            let mut warnings = Vec::new();
            let mut growth: f64 = 1.0;
            let mut used = 0;
            for &t in GROWTH_TIMES.iter().filter(|&&t| t <= horizon) {
                let xn = x_norm(&free_propagate(psi, t), params)?;
                warnings.extend(xn.warnings);
                growth = growth.max(xn.total / ((1.0 + t).powi(growth_exp) * base));
                used += 1;
            }
            let eta = 2.0 / infs[i];
            let single = nonlinear_estimate_ratio(psi, params, eta)?;
            warnings.extend(single.warnings);
            let j = (i + 1) % family_size;
            let pair = if j == i {
                0.0
            } else {
                let eta_pair = 2.0 / infs[i].min(infs[j]);
                let r = nonlinear_lipschitz_ratio(psi, &family[j], params, eta_pair)?;
                warnings.extend(r.warnings);
                r.ratio_pair.unwrap_or(0.0)
            };
            Ok((
                MemberRatios {
                    member: i,
                    propagator_growth: growth,
                    nonlinear_single: single.ratio_single.unwrap_or(0.0),
                    nonlinear_pair: pair,
                    times_used: used,
                },
                warnings,
            ))
        })
        .collect::<Result<_>>()?;

    let mut warnings: Vec<String> = members.iter().flat_map(|m| m.1.iter().cloned()).collect();
    warnings.sort();
    warnings.dedup();
    let members: Vec<MemberRatios> = members.into_iter().map(|m| m.0).collect();
    let c_tilde = members
        .iter()
        .map(|m| m.propagator_growth.max(m.nonlinear_single).max(m.nonlinear_pair))
        .fold(0.0, f64::max);
    Ok(ConstantEstimate {
        c_tilde,
        seed,
        family_size,
        grid: *grid,
        params: *params,
        members,
        warnings,
    })
}

/// One smallness condition, compared as `value ≤ threshold` in `log10`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub description: String,
    /// `None` when the left side vanishes (e.g. `λ = 0`).
    pub log10_value: Option<f64>,
    pub log10_threshold: f64,
    /// `log10(threshold / value)`; `None` means unbounded slack.
    pub log10_slack: Option<f64>,
    pub satisfied: bool,
}

impl Condition {
    fn new(name: &str, description: &str, ln_value: f64, ln_threshold: f64) -> Self {
        let l10 = std::f64::consts::LN_10;
        let value = (ln_value > f64::NEG_INFINITY).then_some(ln_value / l10);
        let slack = value.map(|v| ln_threshold / l10 - v);
        Self {
            name: name.into(),
            description: description.into(),
            log10_value: value,
            log10_threshold: ln_threshold / l10,
            log10_slack: slack,
            satisfied: slack.is_none_or(|s| s >= 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Local,
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: ScheduleKind,
    /// Always `"empirical"`: `C̃` is a family maximum, not a proof.
    pub label: String,
    pub eta: f64,
    pub k: f64,
    pub c_tilde: f64,
    pub data_x_norm: f64,
    pub data_weighted_infimum: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_admissible: Option<f64>,
    /// `log2` of the smallest admissible power-of-two `b`; the value itself can
    /// exceed `f64` range.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_admissible_log2: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_admissible: Option<f64>,
    pub conditions: Vec<Condition>,
    pub satisfied: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Smallest `T` the local search considers.
pub const T_FLOOR: f64 = 1e-6;
const T_REL_TOL: f64 = 1e-4;

struct Data {
    eta: f64,
    norm: f64,
    inf: f64,
    warnings: Vec<String>,
}

fn data_terms(phi: &Field, params: &SpaceParams) -> Result<Data> {
    let inf = weighted_infimum(phi, params.n);
    if !(inf > 0.0) {
        return Err(NlsError::Precondition(
            "weighted lower bound inf ⟨x⟩^n |φ′| > 0 fails for the data".into(),
        ));
    }
    let xn = x_norm(phi, params)?;
    Ok(Data {
        eta: 2.0 / inf,
        norm: xn.total,
        inf,
        warnings: xn.warnings,
    })
}

fn ln_abs(x: f64) -> f64 {
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        x.abs().ln()
    }
}

fn local_conditions(t: f64, ft: f64, d: &Data, c: f64, k: f64, lambda: f64, params: &SpaceParams) -> [Condition; 2] {
    let j = params.j as f64;
    let a = params.alpha;
    let ln2 = std::f64::consts::LN_2;
    let ln_1ek = (1.0 + d.eta * k).ln();
    let ln_f = ln_abs(ft);
    let contraction = c.ln() + j * ln2 + ln_abs(lambda) + ln_f + (2.0 * j + 1.0) * ln_1ek + a * k.ln();
    // C̃T2^J(‖φ′‖ + |λ| f(T)(1+ηK)^{2J} K^{α+1}), summed in the log domain
    let nl = ln_abs(lambda) + ln_f + 2.0 * j * ln_1ek + (a + 1.0) * k.ln();
    let sum = log_add(d.norm.ln(), nl);
    let ball = c.ln() + ln_abs(t) + j * ln2 + sum;
    [
        Condition::new(
            "local_contraction",
            "C̃ 2^J |λ| f(T) (1+ηK)^{2J+1} K^α ≤ 1/2",
            contraction,
            (0.5f64).ln(),
        ),
        Condition::new(
            "local_ball",
            "C̃ T 2^J (‖φ′‖_X + |λ| f(T) (1+ηK)^{2J} K^{α+1}) ≤ 1/η",
            ball,
            -d.eta.ln(),
        ),
    ]
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Local schedule: `η = 2/inf ⟨x⟩^n|φ′|`, `K = 2C̃2^J‖φ′‖_X`, and the largest `T`
/// (bisection to `1e−4` relative) meeting both smallness conditions.
pub fn local_schedule(phi: &Field, c_tilde: f64, prob: &ProblemSpec, params: &SpaceParams) -> Result<Certificate> {
    if !(c_tilde > 0.0) || !c_tilde.is_finite() {
        return Err(NlsError::InvalidParameter(format!("C̃ must be positive and finite, got {c_tilde}")));
    }
    let d = data_terms(phi, params)?;
    let k = 2.0 * c_tilde * 2f64.powi(params.j as i32) * d.norm;
    let lambda = prob.lambda().norm();
    let eval = |t: f64| -> Result<[Condition; 2]> {
        let ft = f_of_t(t, prob)?;
        Ok(local_conditions(t, ft, &d, c_tilde, k, lambda, params))
    };
    let ok = |t: f64| -> Result<bool> { Ok(eval(t)?.iter().all(|c| c.satisfied)) };

    // upper end of the search: just short of the weight singularity
    let t_cap = if prob.b != 0.0 && prob.gamma() > 0.0 {
        (1.0 - 1e-9) / prob.b.abs()
    } else {
        1e6
    };
    let t_adm = if !ok(T_FLOOR)? {
        None
    } else if ok(t_cap)? {
        Some(t_cap)
    } else {
        let (mut lo, mut hi) = (T_FLOOR, t_cap);
        while (hi - lo) > T_REL_TOL * lo {
            // geometric steps while the bracket spans decades, arithmetic after
            let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
            if ok(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    };
    let at = t_adm.unwrap_or(T_FLOOR);
    let conditions = eval(at)?.to_vec();
    let mut warnings = d.warnings.clone();
    if t_adm.is_none() {
        warnings.push(format!("no admissible T above the floor {T_FLOOR:e}; conditions shown at the floor"));
    }
    Ok(Certificate {
        kind: ScheduleKind::Local,
        label: "empirical".into(),
        eta: d.eta,
        k,
        c_tilde,
        data_x_norm: d.norm,
        data_weighted_infimum: d.inf,
        t_admissible: t_adm,
        b_admissible_log2: None,
        b_admissible: None,
        satisfied: t_adm.is_some(),
        conditions,
        warnings,
    })
}

struct GlobalLogs {
    /// `ln` of the coefficient multiplying `1/b` in each condition, and `ln` of
    /// its threshold.
    coeffs: [(f64, f64); 3],
    j: f64,
}

fn global_logs(d: &Data, c: f64, k: f64, lambda: f64, params: &SpaceParams) -> GlobalLogs {
    let j = params.j as f64;
    let a = params.alpha;
    let ln_1ek = (1.0 + d.eta * k).ln();
    let p = ln_abs(lambda) + 2.0 * j * ln_1ek + (a + 1.0) * k.ln();
    GlobalLogs {
        coeffs: [
            (p, d.norm.ln()),
            ((2.0 * d.eta * c).ln() + log_add(d.norm.ln(), p), 0.0),
            ((4.0 * c).ln() + ln_abs(lambda) + (2.0 * j + 1.0) * ln_1ek + a * k.ln(), 0.0),
        ],
        j,
    }
}

fn global_conditions(ln_b: f64, g: &GlobalLogs) -> Vec<Condition> {
    // (1 + 1/b)^J with 1/b = e^{−ln b}
    let dilation = g.j * (-ln_b).exp().ln_1p();
    let names = [
        ("global_nonlinear_size", "|λ| (1/b) (1+ηK)^{2J} K^{α+1} ≤ ‖φ′‖_X"),
        ("global_ball", "2ηC̃ (1/b) (‖φ′‖_X + |λ| (1+ηK)^{2J} K^{α+1}) ≤ 1"),
        ("global_contraction", "4C̃|λ| (1/b) (1+ηK)^{2J+1} K^α ≤ 1"),
    ];
    let mut out = vec![Condition::new("global_dilation", "(1 + 1/b)^J ≤ 2", dilation, std::f64::consts::LN_2)];
    for ((name, desc), (coef, thr)) in names.iter().zip(g.coeffs) {
        out.push(Condition::new(name, desc, coef - ln_b, thr));
    }
    out
}

/// Global schedule: `η = 2/inf ⟨x⟩^n|φ′|`, `K = 4C̃‖φ′‖_X`, and the smallest
/// power-of-two `b` meeting all four smallness conditions.
pub fn global_schedule(phi: &Field, c_tilde: f64, prob: &ProblemSpec, params: &SpaceParams) -> Result<Certificate> {
    if prob.dim as f64 * prob.alpha <= 2.0 {
        return Err(NlsError::InvalidParameter(format!(
            "global schedule needs α > 2/N (α = {}, N = {})",
            prob.alpha, prob.dim
        )));
    }
    if !(c_tilde > 0.0) || !c_tilde.is_finite() {
        return Err(NlsError::InvalidParameter(format!("C̃ must be positive and finite, got {c_tilde}")));
    }
    let d = data_terms(phi, params)?;
    let k = 4.0 * c_tilde * d.norm;
    let g = global_logs(&d, c_tilde, k, prob.lambda().norm(), params);
    // every condition is monotone in 1/b: solve each for its smallest ln b
    let ln2 = std::f64::consts::LN_2;
    let mut ln_b_min = -(2f64.powf(1.0 / g.j) - 1.0).ln();
    for (coef, thr) in g.coeffs {
        if coef > f64::NEG_INFINITY {
            ln_b_min = ln_b_min.max(coef - thr);
        }
    }
    let mut log2_b = (ln_b_min / ln2).ceil() as i64;
    // guard against rounding at the threshold
    while !global_conditions(log2_b as f64 * ln2, &g).iter().all(|c| c.satisfied) {
        log2_b += 1;
    }
    let conditions = global_conditions(log2_b as f64 * ln2, &g);
    let b_value = (log2_b < 1023).then(|| 2f64.powi(log2_b as i32));
    let mut warnings = d.warnings.clone();
    if b_value.is_none() {
        warnings.push(format!("admissible b = 2^{log2_b} exceeds floating-point range"));
    }
    Ok(Certificate {
        kind: ScheduleKind::Global,
        label: "empirical".into(),
        eta: d.eta,
        k,
        c_tilde,
        data_x_norm: d.norm,
        data_weighted_infimum: d.inf,
        t_admissible: None,
        b_admissible_log2: Some(log2_b),
        b_admissible: b_value,
        satisfied: true,
        conditions,
        warnings,
    })
}

/// Evaluates the global conditions at an arbitrary `b`.
pub fn global_conditions_at(phi: &Field, c_tilde: f64, prob: &ProblemSpec, params: &SpaceParams, b: f64) -> Result<Vec<Condition>> {
    let d = data_terms(phi, params)?;
    let k = 4.0 * c_tilde * d.norm;
    let g = global_logs(&d, c_tilde, k, prob.lambda().norm(), params);
    Ok(global_conditions(b.ln(), &g))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Outcome {
    Converged { iterations: usize, residual: f64, geometric: bool },
    Diverged { iterations: usize },
    NotConverged { iterations: usize, residual: f64 },
    BlowUp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub b: f64,
    pub certified: bool,
    pub outcome: Outcome,
}

/// Runs Picard at the certified `b` and at successive halvings of it, logging
/// each outcome. A certified run that fails to converge is falsification
/// evidence and is listed separately, never suppressed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FalsificationLog {
    pub certificate_b_log2: i64,
    pub records: Vec<ProbeRecord>,
    pub falsifications: Vec<ProbeRecord>,
}

pub struct ProbeSettings {
    pub k: usize,
    pub grading_rho: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub halvings: usize,
}

pub fn falsification_probe(
    phi: &Field,
    c_tilde: f64,
    prob: &ProblemSpec,
    params: &SpaceParams,
    settings: &ProbeSettings,
) -> Result<FalsificationLog> {
    let cert = global_schedule(phi, c_tilde, prob, params)?;
    let log2_b = cert.b_admissible_log2.unwrap();
    let mut records = Vec::new();
    for h in 0..=settings.halvings {
        let b = 2f64.powi((log2_b - h as i64) as i32);
        if !b.is_finite() || b == 0.0 {
            continue;
        }
        let certified = global_conditions_at(phi, c_tilde, prob, params, b)?.iter().all(|c| c.satisfied);
        let p = ProblemSpec { b, ..*prob };
        let mesh = TimeMesh::graded(b, p.gamma(), settings.k, settings.grading_rho)?;
        let outcome = match picard_solve(phi, &p, params, &mesh, settings.tol, settings.max_iter) {
            Ok(t) => Outcome::Converged {
                iterations: t.iterations,
                residual: t.residual,
                geometric: is_geometric(&t.update_history),
            },
            Err(NlsError::Divergence { iterations, .. }) => Outcome::Diverged { iterations },
            Err(NlsError::NonConvergence { iterations, residual, .. }) => Outcome::NotConverged { iterations, residual },
            Err(NlsError::BlowUp { .. }) => Outcome::BlowUp,
            Err(e) => return Err(e),
        };
        records.push(ProbeRecord { b, certified, outcome });
    }
    let falsifications = records
        .iter()
        .filter(|r| r.certified && !matches!(r.outcome, Outcome::Converged { .. }))
        .cloned()
        .collect();
    Ok(FalsificationLog {
        certificate_b_log2: log2_b,
        records,
        falsifications,
    })
}

/// Update norms shrink by at least a factor 0.8 per sweep after the second.
pub fn is_geometric(history: &[f64]) -> bool {
    history.iter().skip(1).collect::<Vec<_>>().windows(2).all(|w| *w[1] <= 0.8 * *w[0] || *w[1] == 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::{sample_descriptor, InitialDataDescriptor};
    use crate::spectral::{make_grid, C64};
    use crate::weighted::select_params;

    fn setup() -> (GridSpec, SpaceParams, Field) {
        let g = make_grid(1, 512, 20.0).unwrap();
        let p = select_params(1, 2.5).unwrap();
        let phi = sample_descriptor(&InitialDataDescriptor::inverse_bracket(2.0), &g, &p).unwrap();
        (g, p, phi)
    }

    #[test]
    fn eta_and_local_lambda_zero() {
        let (_, p, phi) = setup();
        let prob = ProblemSpec::two_sided(1, 2.5, C64::new(0.0, 0.0), 0.0, 1.0).unwrap();
        let c = 1e-12;
        let cert = local_schedule(&phi, c, &prob, &p).unwrap();
        assert!((cert.eta * cert.data_weighted_infimum - 2.0).abs() < 1e-15);
        assert!(cert.conditions[0].satisfied && cert.conditions[0].log10_value.is_none());
        let expected = 1.0 / (cert.eta * c * 2f64.powi(p.j as i32) * cert.data_x_norm);
        let t = cert.t_admissible.unwrap();
        assert!(t <= expected && t >= expected * (1.0 - 2e-4), "{t} vs {expected}");
    }

    #[test]
    fn local_monotone_in_constant() {
        let (_, p, phi) = setup();
        let prob = ProblemSpec::two_sided(1, 2.5, C64::new(1.0, 0.0), 0.0, 1.0).unwrap();
        let ts: Vec<f64> = [1e-12, 1e-11, 1e-10]
            .iter()
            .map(|&c| local_schedule(&phi, c, &prob, &p).unwrap().t_admissible.unwrap())
            .collect();
        assert!(ts[0] > ts[1] && ts[1] > ts[2], "{ts:?}");
        // shrinking T never breaks a satisfied condition
        let c = 1e-11;
        let cert = local_schedule(&phi, c, &prob, &p).unwrap();
        let d = data_terms(&phi, &p).unwrap();
        for frac in [0.5, 0.1, 1e-3] {
            let t = ts[1] * frac;
            let conds = local_conditions(t, f_of_t(t, &prob).unwrap(), &d, c, cert.k, 1.0, &p);
            assert!(conds.iter().all(|c| c.satisfied));
        }
    }

    #[test]
    fn larger_data_shrinks_local_time() {
        let (_, p, phi) = setup();
        let prob = ProblemSpec::two_sided(1, 2.5, C64::new(1.0, 0.0), 0.0, 1.0).unwrap();
        let c = 2e-9;
        let small = local_schedule(&phi, c, &prob, &p).unwrap();
        let big = local_schedule(&phi.scale(C64::new(10.0, 0.0)), c, &prob, &p).unwrap();
        // ηK is scale invariant, so the contraction condition tightens by 10^α
        let (ts, tb) = (small.t_admissible.unwrap(), big.t_admissible.unwrap());
        assert!(tb < ts / 10.0, "{tb} vs {ts}");
        assert!(!big.conditions[0].log10_slack.unwrap().is_sign_negative());
        assert!(big.conditions[0].log10_slack.unwrap() < 1e-3);
    }

    #[test]
    fn unsatisfiable_local_is_reported() {
        let (_, p, phi) = setup();
        let prob = ProblemSpec::two_sided(1, 2.5, C64::new(1.0, 0.0), 0.0, 1.0).unwrap();
        let cert = local_schedule(&phi, 1.0, &prob, &p).unwrap();
        assert!(cert.t_admissible.is_none());
        assert!(!cert.satisfied);
        assert!(cert.conditions.iter().any(|c| !c.satisfied));
    }

    #[test]
    fn global_thresholds() {
        let (_, p, phi) = setup();
        let prob = ProblemSpec::forward(1, 2.5, C64::new(0.0, 0.0), 1.0).unwrap();
        let c = 1e-9;
        let cert = global_schedule(&phi, c, &prob, &p).unwrap();
        // λ = 0: only the dilation and ball conditions bind
        let dil = 1.0 / (2f64.powf(1.0 / p.j as f64) - 1.0);
        let ball = 2.0 * cert.eta * c * cert.data_x_norm;
        let b_min = dil.max(ball);
        let b = cert.b_admissible.unwrap();
        assert!(b >= b_min && b / 2.0 < b_min);
        assert!(cert.conditions.iter().all(|c| c.satisfied));
        // doubling stays admissible, halving does not
        let up = global_conditions_at(&phi, c, &prob, &p, 2.0 * b).unwrap();
        assert!(up.iter().all(|c| c.satisfied));
        let down = global_conditions_at(&phi, c, &prob, &p, b / 2.0).unwrap();
        assert!(down.iter().any(|c| !c.satisfied));
        let mut crit = prob;
        crit.alpha = 2.0;
        assert!(global_schedule(&phi, c, &crit, &p).is_err());
    }

    #[test]
    fn singleton_and_monotone_family() {
        // finer spacing lets FFT roundoff dominate the ninth derivative's tail
        let g = make_grid(1, 1024, 30.0).unwrap();
        let p = select_params(1, 2.5).unwrap();
        let one = estimate_constants(3, &p, &g, 1).unwrap();
        let m = &one.members[0];
        assert_eq!(one.c_tilde, m.propagator_growth.max(m.nonlinear_single).max(m.nonlinear_pair));
        let two = estimate_constants(3, &p, &g, 2).unwrap();
        let four = estimate_constants(3, &p, &g, 4).unwrap();
        assert!(two.c_tilde <= four.c_tilde);
        assert!(one.c_tilde.is_finite() && one.c_tilde > 0.0);
    }

    #[test]
    fn bogus_constant_is_falsified() {
        let g = make_grid(1, 256, 20.0).unwrap();
        let p = select_params(1, 2.5).unwrap();
        let phi = sample_descriptor(&InitialDataDescriptor::inverse_bracket(2.0), &g, &p).unwrap();
        let prob = ProblemSpec::forward(1, 2.5, C64::new(200.0, 0.0), 1.0).unwrap();
        let settings = ProbeSettings {
            k: 16,
            grading_rho: 2.0,
            tol: 1e-10,
            max_iter: 40,
            halvings: 1,
        };
        let log = falsification_probe(&phi, 1e-30, &prob, &p, &settings).unwrap();
        assert_eq!(log.certificate_b_log2, 4);
        assert_eq!(log.records.len(), 2);
        assert!(log.records[0].certified);
        assert!(!log.falsifications.is_empty(), "{:?}", log.records);
    }

    #[test]
    fn geometric_detection() {
        assert!(is_geometric(&[1.0, 0.5, 0.3, 0.1]));
        assert!(!is_geometric(&[1.0, 0.5, 0.45, 0.1]));
    }
}
