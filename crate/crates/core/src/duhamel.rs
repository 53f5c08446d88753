//! Fixed-point solution of the transformed Duhamel equation
//!
//! ```text
//! v(t) = e^{itΔ}φ′ + iλ ∫_0^t (1 − bs)^{−γ} e^{i(t−s)Δ} |v|^α v(s) ds,   γ = (4 − Nα)/2,
//! ```
//!
//! on a graded time mesh, an independent Strang-splitting oracle, and the
//! singular time-weight integrals. With `b = 0` the same machinery solves the
//! untransformed equation.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NlsError, Result};
use crate::nlsf::{read_field, write_field};
use crate::nonlinearity::{power_nonlinearity, power_term, taper_factor};
use crate::quadrature::{gauss_legendre, integrate_adaptive};
use crate::spectral::{propagate_spectrum, raw_forward, raw_inverse, Field, GridSpec, C64};
use crate::weighted::{weighted_infimum, SpaceParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Direction {
    /// Solve on `[0, 1/b]`.
    Forward,
    /// Solve on `[−T, T]`.
    TwoSided { t_max: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub dim: usize,
    pub alpha: f64,
    pub lambda: [f64; 2],
    pub b: f64,
    pub direction: Direction,
}

impl ProblemSpec {
    pub fn forward(dim: usize, alpha: f64, lambda: C64, b: f64) -> Result<Self> {
        let p = Self {
            dim,
            alpha,
            lambda: [lambda.re, lambda.im],
            b,
            direction: Direction::Forward,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn two_sided(dim: usize, alpha: f64, lambda: C64, b: f64, t_max: f64) -> Result<Self> {
        let p = Self {
            dim,
            alpha,
            lambda: [lambda.re, lambda.im],
            b,
            direction: Direction::TwoSided { t_max },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(NlsError::InvalidParameter(format!("dimension must be in 1..=3, got {}", self.dim)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(NlsError::InvalidParameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !self.b.is_finite() || !self.lambda.iter().all(|c| c.is_finite()) {
            return Err(NlsError::InvalidParameter("b and lambda must be finite".into()));
        }
        match self.direction {
            Direction::Forward => {
                if !(self.b > 0.0) {
                    return Err(NlsError::InvalidParameter(format!("forward mode needs b > 0, got {}", self.b)));
                }
                self.check_integrable()?;
            }
            Direction::TwoSided { t_max } => {
                if !(t_max > 0.0) {
                    return Err(NlsError::InvalidParameter(format!("T must be positive, got {t_max}")));
                }
                if self.b != 0.0 && t_max * self.b.abs() >= 1.0 {
                    return Err(NlsError::InvalidParameter(format!(
                        "T = {t_max} reaches the weight singularity at 1/|b| = {}",
                        1.0 / self.b.abs()
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_integrable(&self) -> Result<()> {
        if self.dim as f64 * self.alpha <= 2.0 {
            return Err(NlsError::InvalidParameter(format!(
                "weight not integrable: α = {} must exceed 2/N = {}",
                self.alpha,
                2.0 / self.dim as f64
            )));
        }
        Ok(())
    }

    pub fn lambda(&self) -> C64 {
        C64::new(self.lambda[0], self.lambda[1])
    }

    /// `γ = (4 − Nα)/2`.
    pub fn gamma(&self) -> f64 {
        (4.0 - self.dim as f64 * self.alpha) / 2.0
    }

    /// Problem solved by `w(t) = conj(v(−t))`.
    fn conjugate_reversed(&self) -> Self {
        Self {
            lambda: [self.lambda[0], -self.lambda[1]],
            b: -self.b,
            ..*self
        }
    }
}

/// `(1 − bs)^{−γ}`.
pub fn time_weight(s: f64, prob: &ProblemSpec) -> Result<f64> {
    let y = 1.0 - prob.b * s;
    if !(y > 0.0) {
        return Err(NlsError::InvalidParameter(format!(
            "time weight evaluated at s = {s}, at or past the singularity 1/b = {}",
            1.0 / prob.b
        )));
    }
    Ok(y.powf(-prob.gamma()))
}

/// Closed form `∫_0^{1/b} (1 − bs)^{−γ} ds = 2/((Nα − 2)b)`.
pub fn duhamel_weight_integral(prob: &ProblemSpec) -> Result<f64> {
    prob.check_integrable()?;
    if !(prob.b > 0.0) {
        return Err(NlsError::InvalidParameter(format!("b must be positive, got {}", prob.b)));
    }
    Ok(2.0 / ((prob.dim as f64 * prob.alpha - 2.0) * prob.b))
}

/// The same integral by adaptive quadrature in `y = 1 − bs`, after `y = u^q`
/// with `q(1 − γ) ≥ 2`, which turns the endpoint singularity into a smooth zero.
/// Plain bisection toward `y = 0` stalls for `γ` near 1, where the tail
/// `∫_0^ε y^{−γ}` is still large at `ε = 10^{−300}`.
pub fn duhamel_weight_integral_quadrature(prob: &ProblemSpec) -> Result<f64> {
    prob.check_integrable()?;
    let g = prob.gamma();
    let q = if g > 0.0 { (2.0 / (1.0 - g)).ceil() } else { 1.0 };
    let integrand = |u: f64| q * u.powf(q * (1.0 - g) - 1.0);
    Ok(integrate_adaptive(integrand, 0.0, 1.0, 1e-12)? / prob.b)
}

/// `f(T) = ∫_0^T max{(1 − bs)^{−γ}, (1 + bs)^{−γ}} ds` by adaptive quadrature.
pub fn f_of_t(t: f64, prob: &ProblemSpec) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(NlsError::InvalidParameter(format!("T must be nonnegative, got {t}")));
    }
    let b = prob.b.abs();
    let g = prob.gamma();
    if b == 0.0 || g == 0.0 {
        return Ok(t);
    }
    if g > 0.0 && b * t >= 1.0 {
        return Err(NlsError::InvalidParameter(format!(
            "T = {t} reaches the weight singularity at 1/|b| = {}",
            1.0 / b
        )));
    }
    let integrand = |s: f64| (1.0 - b * s).max(f64::MIN_POSITIVE).powf(-g).max((1.0 + b * s).powf(-g));
    integrate_adaptive(integrand, 0.0, t, 1e-10)
}

/// Closed-form `f(T)`: the dominant branch is `(1 − |b|s)^{−γ}` for `γ > 0`
/// and `(1 + |b|s)^{−γ}` for `γ < 0`.
pub fn f_of_t_closed_form(t: f64, prob: &ProblemSpec) -> f64 {
    let b = prob.b.abs();
    let g = prob.gamma();
    if b == 0.0 || g == 0.0 {
        return t;
    }
    let e = 1.0 - g;
    if g > 0.0 {
        if (e).abs() < 1e-14 {
            -(1.0 - b * t).ln() / b
        } else {
            (1.0 - (1.0 - b * t).powf(e)) / (b * e)
        }
    } else {
        ((1.0 + b * t).powf(e) - 1.0) / (b * e)
    }
}

/// Time nodes plus the product-quadrature weights of each interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeMesh {
    pub nodes: Vec<f64>,
    pub grading_rho: f64,
    pub b: f64,
    pub gamma: f64,
    /// `(∫ ω ℓ_i, ∫ ω ℓ_{i+1})` over `[t_i, t_{i+1}]` with the hat functions `ℓ`.
    pub interval_weights: Vec<(f64, f64)>,
}

const INTERVAL_GL_POINTS: usize = 24;

impl TimeMesh {
    /// `t_k = (1/b)(1 − (1 − k/K)^ρ)`, clustering at `1/b`.
    pub fn graded(b: f64, gamma: f64, k: usize, rho: f64) -> Result<Self> {
        if !(b > 0.0) {
            return Err(NlsError::InvalidParameter(format!("graded mesh needs b > 0, got {b}")));
        }
        Self::graded_to(b, gamma, 1.0 / b, k, rho)
    }

    /// Nodes on `[0, t_end]`, graded toward `1/b` in the variable `y = 1 − bs`:
    /// `y_k = y_end + (1 − y_end)(1 − k/K)^ρ`. With `t_end = 1/b` this is the
    /// plain graded mesh.
    pub fn graded_to(b: f64, gamma: f64, t_end: f64, k: usize, rho: f64) -> Result<Self> {
        Self::check(k, rho)?;
        if !(b > 0.0) || !(t_end > 0.0) || b * t_end > 1.0 + 1e-15 {
            return Err(NlsError::InvalidParameter(format!(
                "graded mesh needs b > 0 and 0 < t_end ≤ 1/b (b = {b}, t_end = {t_end})"
            )));
        }
        let y_end = (1.0 - b * t_end).max(0.0);
        let nodes = (0..=k)
            .map(|i| {
                if i == k {
                    t_end
                } else {
                    let y = y_end + (1.0 - y_end) * (1.0 - i as f64 / k as f64).powf(rho);
                    (1.0 - y) / b
                }
            })
            .collect();
        Self::from_nodes(nodes, b, gamma, rho)
    }

    /// Uniform nodes on `[0, t_end]`, for local solves away from the singularity.
    pub fn uniform(t_end: f64, k: usize, b: f64, gamma: f64) -> Result<Self> {
        Self::check(k, 1.0)?;
        if !(t_end > 0.0) {
            return Err(NlsError::InvalidParameter(format!("t_end must be positive, got {t_end}")));
        }
        let nodes = (0..=k).map(|i| t_end * i as f64 / k as f64).collect();
        Self::from_nodes(nodes, b, gamma, 1.0)
    }

    fn check(k: usize, rho: f64) -> Result<()> {
        if k == 0 {
            return Err(NlsError::InvalidParameter("need at least one time interval".into()));
        }
        if !(rho >= 1.0) {
            return Err(NlsError::InvalidParameter(format!("grading exponent must be ≥ 1, got {rho}")));
        }
        Ok(())
    }

    pub fn from_nodes(nodes: Vec<f64>, b: f64, gamma: f64, rho: f64) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(NlsError::InvalidParameter("time nodes must start at 0 and increase strictly".into()));
        }
        let last = *nodes.last().unwrap();
        if b > 0.0 && b * last > 1.0 + 1e-15 {
            return Err(NlsError::InvalidParameter("time nodes pass the weight singularity".into()));
        }
        let (gx, gw) = gauss_legendre(INTERVAL_GL_POINTS);
        let interval_weights = nodes
            .windows(2)
            .map(|w| interval_weights(w[0], w[1], b, gamma, &gx, &gw))
            .collect();
        Ok(Self {
            nodes,
            grading_rho: rho,
            b,
            gamma,
            interval_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_at(&self, s: f64) -> f64 {
        (1.0 - self.b * s).powf(-self.gamma)
    }

    /// Row `j` of the product-quadrature matrix: `Σ_k w_{jk} g(t_k) ≈ ∫_0^{t_j} ω g`.
    pub fn weight_row(&self, j: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.len()];
        for (i, &(a, c)) in self.interval_weights.iter().take(j).enumerate() {
            row[i] += a;
            row[i + 1] += c;
        }
        row
    }

    /// Exact `∫_0^{t_j} ω`.
    pub fn exact_weight_integral(&self, j: usize) -> f64 {
        let t = self.nodes[j];
        if self.b == 0.0 || self.gamma == 0.0 {
            return t;
        }
        let e = 1.0 - self.gamma;
        let y = 1.0 - self.b * t;
        if e.abs() < 1e-14 {
            -y.ln() / self.b
        } else {
            (1.0 - y.powf(e)) / (self.b * e)
        }
    }
}

fn interval_weights(ta: f64, tb: f64, b: f64, gamma: f64, gx: &[f64], gw: &[f64]) -> (f64, f64) {
    let h = tb - ta;
    if b > 0.0 && (1.0 - b * tb) <= 1e-15 * b.max(1.0) {
        // singular endpoint: exact moments in y = 1 − bs, Y = 1 − b ta
        let y = 1.0 - b * ta;
        let p = y.powf(1.0 - gamma);
        let right = (p / (1.0 - gamma) - p / (2.0 - gamma)) / b;
        let left = p / (2.0 - gamma) / b;
        return (left, right);
    }
    let mut left = 0.0;
    let mut right = 0.0;
    for (&x, &w) in gx.iter().zip(gw) {
        let theta = 0.5 * (x + 1.0);
        let s = ta + h * theta;
        let om = (1.0 - b * s).powf(-gamma) * w * 0.5 * h;
        left += om * (1.0 - theta);
        right += om * theta;
    }
    (left, right)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mesh: TimeMesh,
    #[serde(skip)]
    pub fields: Vec<Field>,
    pub problem: ProblemSpec,
    pub params: Option<SpaceParams>,
    pub residual: f64,
    pub iterations: usize,
    /// Sup-in-time `L²` update size of each sweep.
    pub update_history: Vec<f64>,
    /// `inf ⟨x⟩^n |v(t_j)|` per node.
    pub infimum_trace: Vec<f64>,
    pub lower_bound_lost: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.mesh.nodes
    }

    pub fn last(&self) -> &Field {
        self.fields.last().expect("trajectory has at least one node")
    }

    pub fn grid(&self) -> &GridSpec {
        self.fields[0].grid()
    }
}

/// Picard iteration on the product-quadrature discretisation of the Duhamel
/// equation, carried out in the interaction picture:
/// `Φ(v)(t_j) = e^{it_jΔ}[φ′ + iλ Σ_k w_{jk} e^{−it_kΔ} |v|^α v(t_k)]`.
pub fn picard_solve(
    phi: &Field,
    prob: &ProblemSpec,
    params: &SpaceParams,
    mesh: &TimeMesh,
    tol: f64,
    max_iter: usize,
) -> Result<Trajectory> {
    if !(tol > 0.0) {
        return Err(NlsError::InvalidParameter("tolerance must be positive".into()));
    }
    if max_iter == 0 {
        return Err(NlsError::InvalidParameter("max_iter must be at least 1".into()));
    }
    prob.validate()?;
    if phi.grid().dim() != prob.dim {
        return Err(NlsError::InvalidParameter("data dimension does not match the problem".into()));
    }
    let inf0 = weighted_infimum(phi, params.n);
    if !(inf0 > 0.0) {
        return Err(NlsError::Precondition(
            "weighted lower bound inf ⟨x⟩^n |φ′| > 0 fails for the initial data".into(),
        ));
    }
    let grid = *phi.grid();
    let ksq = grid.wavenumber_sq_table();
    let lambda = prob.lambda();
    let alpha = prob.alpha;
    let nodes = &mesh.nodes;
    let phi_hat = raw_forward(&grid, phi.values());

    let to_physical = |hat: &[C64], t: f64| {
        let mut s = hat.to_vec();
        propagate_spectrum(&mut s, &ksq, t);
        raw_inverse(&grid, s)
    };

    // Interaction-picture iterate; free flow is the first guess.
    let mut current: Vec<Vec<C64>> = nodes.par_iter().map(|&t| to_physical(&phi_hat, t)).collect();
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    let mut growing = 0;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        // e^{−it_kΔ} |v|^α v(t_k)
        let g: Vec<Vec<C64>> = current
            .par_iter()
            .zip(nodes.par_iter())
            .map(|(v, &t)| {
                let f: Vec<C64> = v.iter().map(|&z| power_term(z, alpha)).collect();
                let mut hat = raw_forward(&grid, &f);
                propagate_spectrum(&mut hat, &ksq, -t);
                hat
            })
            .collect();
        // running sum Σ_k w_{jk} g_k
        let mut sums = Vec::with_capacity(nodes.len());
        let mut acc = vec![C64::new(0.0, 0.0); grid.len()];
        sums.push(acc.clone());
        for (i, &(a, c)) in mesh.interval_weights.iter().enumerate() {
            for ((s, x), y) in acc.iter_mut().zip(&g[i]).zip(&g[i + 1]) {
                *s += *x * a + *y * c;
            }
            sums.push(acc.clone());
        }
        let coef = C64::new(0.0, 1.0) * lambda;
        let next: Vec<Vec<C64>> = sums
            .par_iter()
            .zip(nodes.par_iter())
            .map(|(s, &t)| {
                let hat: Vec<C64> = phi_hat.iter().zip(s).map(|(p, q)| p + coef * q).collect();
                to_physical(&hat, t)
            })
            .collect();
        let update = next
            .iter()
            .zip(&current)
            .map(|(a, b)| {
                let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                crate::spectral::weighted_l2(&grid, &d)
            })
            .fold(0.0, f64::max);
        current = next;
        if !update.is_finite() {
            history.push(update);
            return Err(NlsError::Divergence { iterations, history });
        }
        if let Some(&prev) = history.last() {
            if update > prev {
                growing += 1;
            } else {
                growing = 0;
            }
        }
        history.push(update);
        residual = update;
        if growing >= 3 {
            return Err(NlsError::Divergence { iterations, history });
        }
        if update < tol {
            break;
        }
    }
    if residual >= tol {
        return Err(NlsError::NonConvergence {
            iterations,
            residual,
            history,
        });
    }
    let fields: Vec<Field> = current.into_iter().map(|v| Field::from_raw(grid, v)).collect();
    Ok(finish_trajectory(mesh.clone(), fields, prob, params, residual, iterations, history))
}

fn finish_trajectory(
    mesh: TimeMesh,
    fields: Vec<Field>,
    prob: &ProblemSpec,
    params: &SpaceParams,
    residual: f64,
    iterations: usize,
    update_history: Vec<f64>,
) -> Trajectory {
    let infimum_trace: Vec<f64> = fields.par_iter().map(|f| weighted_infimum(f, params.n)).collect();
    let lower_bound_lost = infimum_trace.iter().any(|&v| !(v > 0.0));
    let mut warnings = Vec::new();
    if lower_bound_lost {
        warnings.push("weighted lower bound lost along the trajectory: contraction hypothesis violated".into());
    }
    if fields.iter().any(|f| f.values().iter().any(|v| !v.re.is_finite() || !v.im.is_finite())) {
        warnings.push("non-finite values in trajectory".into());
    }
    Trajectory {
        mesh,
        fields,
        problem: *prob,
        params: Some(*params),
        residual,
        iterations,
        update_history,
        infimum_trace,
        lower_bound_lost,
        warnings,
    }
}

/// Two-sided solve on `[−T, T]`: the forward half directly, the backward half
/// as the forward solve of `w(t) = conj(v(−t))`, which has data `conj(φ′)`,
/// coupling `conj(λ)` and weight `(1 + bs)^{−γ}`.
pub fn picard_solve_two_sided(
    phi: &Field,
    prob: &ProblemSpec,
    params: &SpaceParams,
    k: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Trajectory> {
    let Direction::TwoSided { t_max } = prob.direction else {
        return Err(NlsError::InvalidParameter("two-sided solve needs a two-sided problem".into()));
    };
    prob.validate()?;
    let gamma = prob.gamma();
    let fwd_mesh = TimeMesh::uniform(t_max, k, prob.b, gamma)?;
    let fwd = picard_solve(phi, prob, params, &fwd_mesh, tol, max_iter)?;
    let back_prob = prob.conjugate_reversed();
    let back_mesh = TimeMesh::uniform(t_max, k, back_prob.b, gamma)?;
    let back = picard_solve(&phi.conj(), &back_prob, params, &back_mesh, tol, max_iter)?;

    let mut nodes: Vec<f64> = back_mesh.nodes.iter().rev().map(|t| -t).collect();
    nodes.extend(fwd_mesh.nodes.iter().skip(1));
    let mut fields: Vec<Field> = back.fields.iter().rev().map(|f| f.conj()).collect();
    fields.extend(fwd.fields.iter().skip(1).cloned());
    let mut infimum_trace: Vec<f64> = back.infimum_trace.iter().rev().copied().collect();
    infimum_trace.extend(fwd.infimum_trace.iter().skip(1));
    let mut update_history = back.update_history.clone();
    update_history.extend(&fwd.update_history);
    let mut warnings = back.warnings.clone();
    warnings.extend(fwd.warnings.iter().cloned());
    warnings.dedup();
    // The combined mesh is a record of the nodes only; each half carried its own weights.
    let mesh = TimeMesh {
        nodes,
        grading_rho: 1.0,
        b: prob.b,
        gamma,
        interval_weights: Vec::new(),
    };
    Ok(Trajectory {
        mesh,
        fields,
        problem: *prob,
        params: Some(*params),
        residual: fwd.residual.max(back.residual),
        iterations: fwd.iterations.max(back.iterations),
        update_history,
        lower_bound_lost: infimum_trace.iter().any(|&v| !(v > 0.0)),
        infimum_trace,
        warnings,
    })
}

/// Picard on the untransformed equation (`b = 0`, weight ≡ 1) over `[0, t_end]`.
pub fn untransformed_solve(
    phi: &Field,
    lambda: C64,
    params: &SpaceParams,
    t_end: f64,
    k: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Trajectory> {
    let prob = ProblemSpec {
        dim: params.dim,
        alpha: params.alpha,
        lambda: [lambda.re, lambda.im],
        b: 0.0,
        direction: Direction::TwoSided { t_max: t_end },
    };
    prob.validate()?;
    let mesh = TimeMesh::uniform(t_end, k, 0.0, prob.gamma())?;
    let mut traj = picard_solve(phi, &prob, params, &mesh, tol, max_iter)?;
    // node 0 is the data itself, not its round trip through the transform
    traj.fields[0] = phi.clone();
    Ok(traj)
}

/// Controls for the splitting oracle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub steps: usize,
    /// Step grading toward the singularity (ignored when `b = 0`).
    pub grading_rho: f64,
    /// Keep every `record_stride`-th node (the last node is always kept).
    pub record_stride: usize,
    /// Apply the top-third raised-cosine taper after each step.
    pub filter: bool,
}

impl OracleConfig {
    pub fn new(steps: usize) -> Self {
        Self {
            steps,
            grading_rho: 2.0,
            record_stride: 1,
            filter: true,
        }
    }
}

pub const BLOW_UP_THRESHOLD: f64 = 1e6;

/// Exact flow of `i v_t + λω(t)|v|^α v = 0` over a substep with weight
/// integral `w`: the modulus obeys `|v|^α ← |v|^α/(1 + α Im λ |v|^α w)`.
fn nonlinear_flow(v: &mut [C64], lambda: C64, alpha: f64, w: f64) -> std::result::Result<(), f64> {
    for z in v.iter_mut() {
        let r = z.norm();
        if r == 0.0 {
            continue;
        }
        let q0 = r.powf(alpha);
        let x = alpha * lambda.im * q0 * w;
        if 1.0 + x <= 0.0 {
            return Err(f64::INFINITY);
        }
        // ln(1+x)/x → 1 as x → 0
        let log_ratio = if x.abs() < 1e-12 { 1.0 - x / 2.0 } else { x.ln_1p() / x };
        let phase = lambda.re * q0 * w * log_ratio;
        let amp = if lambda.im == 0.0 { 1.0 } else { (-(x.ln_1p()) / alpha).exp() };
        *z *= C64::from_polar(amp, phase);
    }
    Ok(())
}

/// Strang splitting (half nonlinear, full linear, half nonlinear) for the
/// transformed equation with weight `(1 − bs)^{−γ}`, or for the untransformed
/// equation when `b = 0`. Weight integrals over each substep are exact.
pub fn splitting_oracle(
    phi: &Field,
    prob: &ProblemSpec,
    t_end: f64,
    config: &OracleConfig,
    params: &SpaceParams,
) -> Result<Trajectory> {
    if config.steps == 0 {
        return Err(NlsError::InvalidParameter("steps must be at least 1".into()));
    }
    if config.record_stride == 0 {
        return Err(NlsError::InvalidParameter("record stride must be at least 1".into()));
    }
    let gamma = prob.gamma();
    let b = prob.b;
    let mesh = if b > 0.0 {
        if b * t_end > 1.0 + 1e-15 {
            return Err(NlsError::InvalidParameter(format!(
                "t_end = {t_end} lies past the singularity 1/b = {}",
                1.0 / b
            )));
        }
        if b * t_end >= 1.0 - 1e-15 {
            prob.check_integrable()?;
        }
        TimeMesh::graded_to(b, gamma, t_end, config.steps, config.grading_rho)?
    } else {
        TimeMesh::uniform(t_end, config.steps, b, gamma)?
    };
    let weight_integral = |ta: f64, tb: f64| -> f64 {
        if b == 0.0 || gamma == 0.0 {
            return tb - ta;
        }
        let e = 1.0 - gamma;
        let ya = 1.0 - b * ta;
        let yb = (1.0 - b * tb).max(0.0);
        if e.abs() < 1e-14 {
            (ya.ln() - yb.ln()) / b
        } else {
            (ya.powf(e) - yb.powf(e)) / (b * e)
        }
    };

    let grid = *phi.grid();
    let ksq = grid.wavenumber_sq_table();
    let lambda = prob.lambda();
    let taper: Option<Vec<f64>> = (config.filter && lambda != C64::new(0.0, 0.0)).then(|| {
        (0..grid.len())
            .map(|flat| {
                let idx = grid.unflatten(flat);
                (0..grid.dim())
                    .map(|a| taper_factor(grid.wave_index(idx[a]), grid.points()))
                    .product()
            })
            .collect()
    });

    let nodes = mesh.nodes.clone();
    let mut v = phi.values().to_vec();
    let mut kept_times = vec![0.0];
    let mut kept = vec![phi.clone()];
    for step in 0..config.steps {
        let (ta, tb) = (nodes[step], nodes[step + 1]);
        let tm = 0.5 * (ta + tb);
        let blow = |_| NlsError::BlowUp {
            time: ta,
            sup_norm: f64::INFINITY,
        };
        if lambda != C64::new(0.0, 0.0) {
            nonlinear_flow(&mut v, lambda, prob.alpha, weight_integral(ta, tm)).map_err(blow)?;
        }
        let mut hat = raw_forward(&grid, &v);
        propagate_spectrum(&mut hat, &ksq, tb - ta);
        if let Some(t) = &taper {
            hat.iter_mut().zip(t).for_each(|(c, w)| *c *= *w);
        }
        v = raw_inverse(&grid, hat);
        if lambda != C64::new(0.0, 0.0) {
            nonlinear_flow(&mut v, lambda, prob.alpha, weight_integral(tm, tb)).map_err(blow)?;
        }
        let sup = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !(sup <= BLOW_UP_THRESHOLD) {
            return Err(NlsError::BlowUp { time: tb, sup_norm: sup });
        }
        if (step + 1) % config.record_stride == 0 || step + 1 == config.steps {
            kept_times.push(tb);
            kept.push(Field::from_raw(grid, v.clone()));
        }
    }
    let out_mesh = TimeMesh {
        nodes: kept_times,
        grading_rho: mesh.grading_rho,
        b,
        gamma,
        interval_weights: Vec::new(),
    };
    Ok(finish_trajectory(out_mesh, kept, prob, params, 0.0, config.steps, Vec::new()))
}

/// Manifest written next to the node files of a persisted trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub version: String,
    pub trajectory: Trajectory,
    pub files: Vec<String>,
}

pub fn save_trajectory(dir: &Path, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(traj.fields.len());
    for (j, f) in traj.fields.iter().enumerate() {
        let name = format!("node_{j:05}.nlsf");
        write_field(&dir.join(&name), f)?;
        files.push(name);
    }
    let manifest = TrajectoryManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        trajectory: traj.clone(),
        files,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_trajectory(dir: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: TrajectoryManifest = serde_json::from_str(&text)?;
    let mut traj = manifest.trajectory;
    traj.fields = manifest
        .files
        .iter()
        .map(|name| read_field(&dir.join(name)))
        .collect::<Result<_>>()?;
    if traj.fields.len() != traj.mesh.nodes.len() {
        return Err(NlsError::Format(format!(
            "manifest lists {} nodes but {} field files",
            traj.mesh.nodes.len(),
            traj.fields.len()
        )));
    }
    Ok(traj)
}

/// Applies `|v|^α v` node by node; exposed for reports that need the forcing term.
pub fn forcing_terms(traj: &Trajectory) -> Vec<Field> {
    traj.fields.iter().map(|f| power_nonlinearity(f, traj.problem.alpha)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::{sample_descriptor, InitialDataDescriptor};
    use crate::spectral::{free_propagate, make_grid};
    use crate::weighted::select_params;

    fn prob(b: f64) -> ProblemSpec {
        ProblemSpec::forward(1, 2.5, C64::new(1.0, 0.0), b).unwrap()
    }

    #[test]
    fn weight_examples() {
        let p = prob(2.0);
        assert_eq!(time_weight(0.0, &p).unwrap(), 1.0);
        assert!((time_weight(0.25, &p).unwrap() - 0.5f64.powf(-0.75)).abs() < 1e-12);
        assert!((time_weight(0.25, &p).unwrap() - 1.681793).abs() < 1e-6);
        assert!(time_weight(0.5, &p).is_err());
        assert!(ProblemSpec::forward(1, 4.5, C64::new(1.0, 0.0), 1.0).unwrap().gamma() < 0.0);
    }

    #[test]
    fn weight_integral_identity() {
        assert!((duhamel_weight_integral(&prob(2.0)).unwrap() - 2.0).abs() < 1e-15);
        let p = ProblemSpec::forward(2, 2.0, C64::new(1.0, 0.0), 1.0).unwrap();
        assert!((duhamel_weight_integral(&p).unwrap() - 1.0).abs() < 1e-15);
        let q = duhamel_weight_integral_quadrature(&prob(2.0)).unwrap();
        assert!((q - 2.0).abs() < 2e-8 * 2.0);
        let mut crit = prob(1.0);
        crit.alpha = 2.0;
        assert!(duhamel_weight_integral(&crit).unwrap_err().to_string().contains("not integrable"));
        assert!(ProblemSpec::forward(1, 2.0, C64::new(1.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn f_of_t_examples() {
        let mut p = prob(2.0);
        let v = f_of_t(0.25, &p).unwrap();
        let exact = (1.0 - 0.5f64.powf(0.25)) / (2.0 * 0.25);
        assert!((v - exact).abs() < 1e-8 * exact);
        assert!((f_of_t_closed_form(0.25, &p) - exact).abs() < 1e-15);
        for t in [1e-6, 1e-4, 1e-2] {
            assert!(f_of_t(t, &p).unwrap() <= 2.0 * t);
        }
        p.b = 0.0;
        assert_eq!(f_of_t(0.3, &p).unwrap(), 0.3);
        p.b = 2.0;
        assert!(f_of_t(0.5, &p).is_err());
        // γ < 0 picks the (1 + bs) branch
        let q = ProblemSpec::two_sided(1, 6.0, C64::new(1.0, 0.0), 1.0, 0.5).unwrap();
        let v = f_of_t(0.5, &q).unwrap();
        assert!((v - f_of_t_closed_form(0.5, &q)).abs() < 1e-9 * v);
    }

    #[test]
    fn mesh_calibration() {
        let p = prob(8.0);
        let mesh = TimeMesh::graded(8.0, p.gamma(), 64, 2.0).unwrap();
        assert_eq!(*mesh.nodes.last().unwrap(), 1.0 / 8.0);
        for j in 0..mesh.len() {
            let row: f64 = mesh.weight_row(j).iter().sum();
            let exact = mesh.exact_weight_integral(j);
            assert!((row - exact).abs() <= 1e-10 * exact.max(1e-300), "j={j}");
        }
        // linear integrands are reproduced too
        let j = mesh.len() - 1;
        let lin: f64 = mesh.weight_row(j).iter().zip(&mesh.nodes).map(|(w, t)| w * t).sum();
        let exact = integrate_adaptive(|y: f64| y.powf(-p.gamma()) * (1.0 - y) / 8.0, 0.0, 1.0, 1e-13).unwrap() / 8.0;
        assert!((lin - exact).abs() < 1e-10 * exact);
        assert!(TimeMesh::from_nodes(vec![0.0, 0.2, 0.1], 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn linear_case_is_free_flow() {
        let g = make_grid(1, 256, 20.0).unwrap();
        let params = select_params(1, 2.5).unwrap();
        let phi = sample_descriptor(&InitialDataDescriptor::inverse_bracket(2.0), &g, &params).unwrap();
        let p = ProblemSpec::forward(1, 2.5, C64::new(0.0, 0.0), 8.0).unwrap();
        let mesh = TimeMesh::graded(8.0, p.gamma(), 16, 2.0).unwrap();
        let traj = picard_solve(&phi, &p, &params, &mesh, 1e-12, 10).unwrap();
        assert_eq!(traj.iterations, 1);
        assert!(traj.residual <= 1e-12);
        for (f, &t) in traj.fields.iter().zip(&mesh.nodes) {
            assert!(f.l2_distance(&free_propagate(&phi, t)).unwrap() < 1e-12);
        }
        assert!(picard_solve(&phi, &p, &params, &mesh, 0.0, 10)
            .unwrap_err()
            .to_string()
            .contains("tolerance must be positive"));
    }

    #[test]
    fn nonlinear_flow_matches_ode() {
        // complex λ: compare with a fine RK4 integration of v' = iλ|v|^α v
        let lambda = C64::new(0.7, 0.3);
        let alpha = 1.5;
        let w = 0.8;
        let mut v = vec![C64::new(0.6, -0.4)];
        nonlinear_flow(&mut v, lambda, alpha, w).unwrap();
        let f = |z: C64| C64::new(0.0, 1.0) * lambda * z * z.norm().powf(alpha);
        let mut z = C64::new(0.6, -0.4);
        let n = 20_000;
        let h = w / n as f64;
        for _ in 0..n {
            let k1 = f(z);
            let k2 = f(z + k1 * (h / 2.0));
            let k3 = f(z + k2 * (h / 2.0));
            let k4 = f(z + k3 * h);
            z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        assert!((v[0] - z).norm() < 1e-12);
    }

    #[test]
    fn oracle_linear_and_mass() {
        let g = make_grid(1, 256, 20.0).unwrap();
        let params = select_params(1, 2.5).unwrap();
        let phi = sample_descriptor(&InitialDataDescriptor::inverse_bracket(2.0), &g, &params).unwrap();
        let free = ProblemSpec::two_sided(1, 2.5, C64::new(0.0, 0.0), 0.0, 1.0).unwrap();
        let t = splitting_oracle(&phi, &free, 1.0, &OracleConfig::new(10), &params).unwrap();
        assert!(t.last().l2_distance(&free_propagate(&phi, 1.0)).unwrap() < 1e-10);

        let real = ProblemSpec::two_sided(1, 2.5, C64::new(1.0, 0.0), 0.0, 1.0).unwrap();
        let t = splitting_oracle(&phi, &real, 1.0, &OracleConfig::new(200), &params).unwrap();
        let m0 = phi.l2_norm();
        assert!((t.last().l2_norm() - m0).abs() < 1e-8 * m0);
    }

    #[test]
    fn trajectory_round_trip() {
        let g = make_grid(1, 64, 10.0).unwrap();
        let params = select_params(1, 2.5).unwrap();
        let phi = sample_descriptor(&InitialDataDescriptor::inverse_bracket(2.0), &g, &params).unwrap();
        let traj = untransformed_solve(&phi, C64::new(1.0, 0.0), &params, 0.05, 4, 1e-10, 50).unwrap();
        assert_eq!(traj.fields[0], phi);
        let dir = tempfile::tempdir().unwrap();
        save_trajectory(dir.path(), &traj).unwrap();
        let back = load_trajectory(dir.path()).unwrap();
        assert_eq!(back, traj);
    }
}
