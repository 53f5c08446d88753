//! Initial-data factory and the seeded sample families used to estimate
//! constants.
//!
//! Data built from `⟨x⟩^{-p}` decays only polynomially, so its pointwise
//! samples on `[-L, L)^N` carry derivative jumps at the box edge that swamp
//! every high-order spectral derivative. The default [`Sampling::Periodized`]
//! mode instead builds the band-limited periodisation of the whole-space
//! function from its exact Fourier transform, so that spectral derivatives of
//! the sampled field are the derivatives of a smooth periodic function.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{NlsError, Result};
use crate::rng::CounterRng;
use crate::spectral::{raw_inverse, Field, GridSpec, C64};
use crate::weighted::{bracket, weighted_infimum_report, x_norm, InfimumReport, SpaceParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Plain samples `f(x_i)`.
    Pointwise,
    /// Samples of the periodisation `Σ_j f(x + 2Lj)`, band-limited to the grid.
    #[default]
    Periodized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataKind {
    /// `z ⟨(x - center)/width⟩^{-p}`.
    InverseBracket {
        p: f64,
        z: [f64; 2],
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        center: [f64; 3],
    },
    /// `z exp(-|x|²/(4σ))`.
    Gaussian { sigma: f64, z: [f64; 2] },
    /// `z (⟨x⟩^{-p} + bump_amp exp(-|x - bump_center|²/bump_width²))`.
    InverseBracketPlusBump {
        p: f64,
        z: [f64; 2],
        bump_amp: f64,
        bump_width: f64,
        #[serde(default)]
        bump_center: [f64; 3],
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialDataDescriptor {
    #[serde(flatten)]
    pub kind: DataKind,
    /// Multiplies the data by `e^{i chirp_b |x|²/4}`.
    #[serde(default)]
    pub chirp_b: f64,
    #[serde(default)]
    pub sampling: Sampling,
}

impl InitialDataDescriptor {
    pub fn inverse_bracket(p: f64) -> Self {
        Self {
            kind: DataKind::InverseBracket {
                p,
                z: [1.0, 0.0],
                width: 1.0,
                center: [0.0; 3],
            },
            chirp_b: 0.0,
            sampling: Sampling::Periodized,
        }
    }

    pub fn gaussian(sigma: f64) -> Self {
        Self {
            kind: DataKind::Gaussian { sigma, z: [1.0, 0.0] },
            chirp_b: 0.0,
            sampling: Sampling::Pointwise,
        }
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_chirp(mut self, b: f64) -> Self {
        self.chirp_b = b;
        self
    }
}

/// Lower-bound and size diagnostics attached to freshly built data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub weighted_infimum: InfimumReport,
    pub x_norm_total: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct InitialData {
    pub field: Field,
    pub admissibility: Admissibility,
}

fn complex(z: [f64; 2]) -> C64 {
    C64::new(z[0], z[1])
}

/// Samples the descriptor and attaches its admissibility report.
pub fn build_initial_data(d: &InitialDataDescriptor, grid: &GridSpec, params: &SpaceParams) -> Result<InitialData> {
    let field = sample_descriptor(d, grid, params)?;
    let mut warnings = Vec::new();
    let breakdown = x_norm(&field, params)?;
    warnings.extend(breakdown.warnings.iter().cloned());
    let inf = weighted_infimum_report(&field, params.n);
    if inf.infimum <= 0.0 {
        warnings.push("weighted lower bound fails: inf ⟨x⟩^n |φ| = 0 on the grid".into());
    }
    Ok(InitialData {
        field,
        admissibility: Admissibility {
            weighted_infimum: inf,
            x_norm_total: breakdown.total,
            warnings,
        },
    })
}

/// Samples the descriptor without computing diagnostics.
pub fn sample_descriptor(d: &InitialDataDescriptor, grid: &GridSpec, params: &SpaceParams) -> Result<Field> {
    let base = match &d.kind {
        DataKind::InverseBracket { p, z, width, center } => {
            check_bracket_power(*p, params)?;
            if !(*width > 0.0) {
                return Err(NlsError::InvalidParameter(format!("width must be positive, got {width}")));
            }
            inverse_bracket_field(grid, *p, *width, center, d.sampling).scale(complex(*z))
        }
        DataKind::Gaussian { sigma, z } => {
            if !(*sigma > 0.0) {
                return Err(NlsError::InvalidParameter(format!("sigma must be positive, got {sigma}")));
            }
            // exp(-|x|²/(4σ)) = bump of width 2√σ
            gaussian_bump(grid, 2.0 * sigma.sqrt(), &[0.0; 3], d.sampling).scale(complex(*z))
        }
        DataKind::InverseBracketPlusBump {
            p,
            z,
            bump_amp,
            bump_width,
            bump_center,
        } => {
            check_bracket_power(*p, params)?;
            if !(*bump_width > 0.0) {
                return Err(NlsError::InvalidParameter(format!("bump width must be positive, got {bump_width}")));
            }
            let bump = gaussian_bump(grid, *bump_width, bump_center, d.sampling).scale(C64::new(*bump_amp, 0.0));
            let weighted_bump = weighted_sup(&bump, *p);
            if weighted_bump >= 1.0 {
                return Err(NlsError::Precondition(format!(
                    "bump too large: ‖⟨x⟩^p ψ‖_∞ = {weighted_bump:.4} must be < 1"
                )));
            }
            inverse_bracket_field(grid, *p, 1.0, &[0.0; 3], d.sampling)
                .add(&bump)?
                .scale(complex(*z))
        }
    };
    Ok(if d.chirp_b != 0.0 {
        apply_chirp(&base, d.chirp_b)
    } else {
        base
    })
}

fn check_bracket_power(p: f64, params: &SpaceParams) -> Result<()> {
    if p < params.n as f64 {
        return Err(NlsError::Precondition(format!(
            "inverse bracket power p = {p} must be at least n = {} to lie in X",
            params.n
        )));
    }
    Ok(())
}

/// `max ⟨x⟩^p |f|` over the grid.
pub fn weighted_sup(f: &Field, p: f64) -> f64 {
    let grid = f.grid();
    f.values()
        .iter()
        .enumerate()
        .map(|(i, v)| (1.0 + grid.radius_sq(i)).powf(p / 2.0) * v.norm())
        .fold(0.0, f64::max)
}

/// Multiplies pointwise by `e^{ib|x|²/4}`.
pub fn apply_chirp(f: &Field, b: f64) -> Field {
    f.map_with_point(|x, v| {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        v * C64::from_polar(1.0, b * r2 / 4.0)
    })
}

/// Smooth `2L`-periodic surrogate of `|x|²`, `Σ (2L/π)² sin²(π x_i / (2L))`,
/// which agrees with `|x|²` to `O(|x|⁴/L²)`.
pub fn periodic_radius_sq(x: &[f64], half_width: f64) -> f64 {
    let c = 2.0 * half_width / PI;
    x.iter()
        .map(|&xi| {
            let s = (PI * xi / (2.0 * half_width)).sin();
            c * c * s * s
        })
        .sum()
}

/// `∫_0^∞ τ^{c-1} exp(-τ - κ²/(4τ)) dτ` by the trapezoid rule in `log τ`.
fn subordination_integral(c: f64, kappa: f64) -> f64 {
    let k2 = kappa * kappa / 4.0;
    let lo = if kappa > 0.0 {
        // the κ² term kills the integrand double-exponentially below ln(κ²/4) - 6
        (k2.ln() - 8.0).min(-40.0 / c.max(0.05))
    } else {
        -40.0 / c
    };
    let lo = lo.max(-200.0);
    let hi = 6.0f64.max((kappa / 2.0).max(1.0).ln() + 5.0);
    let step = 0.01;
    let n = ((hi - lo) / step).ceil() as usize;
    let mut sum = 0.0;
    for i in 0..=n {
        let u = lo + i as f64 * step;
        let e = c * u - u.exp() - k2 * (-u).exp();
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        sum += w * e.exp();
    }
    sum * step
}

/// Fourier transform `∫ (1+|x|²)^{-p/2} e^{-ik·x} dx` in `dim` dimensions at `|k| = kappa`.
/// Returns `None` at `κ = 0` when the integral diverges (`p ≤ N`).
pub fn bracket_transform(dim: usize, p: f64, kappa: f64) -> Option<f64> {
    let a = p / 2.0;
    let c = a - dim as f64 / 2.0;
    if kappa == 0.0 && c <= 0.0 {
        return None;
    }
    let gamma_a = subordination_integral(a, 0.0);
    Some(PI.powf(dim as f64 / 2.0) * subordination_integral(c, kappa) / gamma_a)
}

/// Band-limited periodisation of `⟨(x - center)/width⟩^{-p}`.
fn inverse_bracket_field(grid: &GridSpec, p: f64, width: f64, center: &[f64; 3], sampling: Sampling) -> Field {
    match sampling {
        Sampling::Pointwise => Field::from_real_fn(*grid, |x| {
            let y: Vec<f64> = x.iter().zip(center).map(|(a, c)| (a - c) / width).collect();
            bracket(&y).powf(-p)
        }),
        Sampling::Periodized => {
            let dim = grid.dim();
            let mut cache: HashMap<i64, Option<f64>> = HashMap::new();
            let transform = |k: &[f64; 3], flat: usize, cache: &mut HashMap<i64, Option<f64>>| {
                let idx = grid.unflatten(flat);
                let key: i64 = (0..dim).map(|a| grid.wave_index(idx[a]).pow(2)).sum();
                let kappa = width * (k.iter().map(|c| c * c).sum::<f64>()).sqrt();
                *cache
                    .entry(key)
                    .or_insert_with(|| bracket_transform(dim, p, kappa))
            };
            let field = periodize(grid, center, |k, flat| {
                transform(k, flat, &mut cache).map(|v| v * width.powi(dim as i32))
            });
            match field {
                Ok(f) => f,
                Err(mean_slot) => {
                    // Divergent zero mode: fix the free constant by the box mean
                    // of the pointwise samples.
                    let pointwise = inverse_bracket_field(grid, p, width, center, Sampling::Pointwise);
                    let mean = pointwise.values().iter().map(|v| v.re).sum::<f64>() / grid.len() as f64;
                    let mut vals = mean_slot;
                    let shift = mean - vals.values().iter().map(|v| v.re).sum::<f64>() / grid.len() as f64;
                    vals.values_mut().iter_mut().for_each(|v| *v += shift);
                    vals
                }
            }
        }
    }
}

/// Periodised Gaussian `exp(-|x - center|²/w²)`.
fn gaussian_bump(grid: &GridSpec, w: f64, center: &[f64; 3], sampling: Sampling) -> Field {
    match sampling {
        Sampling::Pointwise => Field::from_real_fn(*grid, |x| {
            let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum();
            (-r2 / (w * w)).exp()
        }),
        Sampling::Periodized => {
            let dim = grid.dim() as i32;
            let norm = (PI * w * w).powf(dim as f64 / 2.0);
            match periodize(grid, center, |k, _| {
                let k2: f64 = k.iter().map(|c| c * c).sum();
                Some(norm * (-w * w * k2 / 4.0).exp())
            }) {
                Ok(f) => f,
                Err(f) => f,
            }
        }
    }
}

/// Builds grid samples of `Σ_k f̂(k) e^{ik·(x - center)} / (2L)^N` from the
/// whole-space transform `f̂`. `Err` carries the field with a zero mean mode
/// when `f̂(0)` is undefined.
fn periodize(
    grid: &GridSpec,
    center: &[f64; 3],
    mut transform: impl FnMut(&[f64; 3], usize) -> Option<f64>,
) -> std::result::Result<Field, Field> {
    let dim = grid.dim();
    let l = grid.half_width();
    let volume = (2.0 * l).powi(dim as i32);
    let total = grid.len() as f64;
    let mut zero_missing = false;
    let spec: Vec<C64> = (0..grid.len())
        .map(|flat| {
            let k = grid.wave_vector(flat);
            match transform(&k, flat) {
                Some(v) => {
                    // shift to the grid origin x_0 = -L and to the centre
                    let phase: f64 = (0..dim).map(|a| -k[a] * (l + center[a])).sum();
                    C64::from_polar(total * v / volume, phase)
                }
                None => {
                    zero_missing = true;
                    C64::new(0.0, 0.0)
                }
            }
        })
        .collect();
    let mut values = raw_inverse(grid, spec);
    // the periodisation of a real even profile is real
    values.iter_mut().for_each(|v| {
        if v.im.abs() < 1e-13 * v.re.abs().max(1e-300) {
            v.im = 0.0;
        }
    });
    let field = Field::from_raw(*grid, values);
    if zero_missing {
        Err(field)
    } else {
        Ok(field)
    }
}

/// Reproducible family of admissible data: scaled, shifted and widened
/// inverse brackets with small Gaussian bumps and a smooth periodic phase
/// modulation. Member 0 is always the plain `⟨x⟩^{-n}`.
pub fn sample_family(seed: u64, grid: &GridSpec, params: &SpaceParams, size: usize) -> Result<Vec<Field>> {
    let n = params.n as f64;
    let dim = grid.dim();
    let l = grid.half_width();
    let mut out = Vec::with_capacity(size);
    for member in 0..size {
        if member == 0 {
            out.push(inverse_bracket_field(grid, n, 1.0, &[0.0; 3], Sampling::Periodized));
            continue;
        }
        let mut rng = CounterRng::new(seed, member as u64);
        let amp = rng.uniform(0.5, 2.0);
        let phase = rng.uniform(0.0, 2.0 * PI);
        let width = rng.uniform(1.0, 2.0);
        let mut center = [0.0; 3];
        for c in center.iter_mut().take(dim) {
            *c = rng.uniform(-1.0, 1.0);
        }
        let bump_width = rng.uniform(1.0, 2.0);
        let mut bump_center = [0.0; 3];
        for c in bump_center.iter_mut().take(dim) {
            *c = rng.uniform(-3.0, 3.0);
        }
        let bump_level = rng.uniform(0.0, 0.5);
        let modulation = rng.uniform(0.0, 0.2);

        let base = inverse_bracket_field(grid, n, width, &center, Sampling::Periodized);
        let bump = gaussian_bump(grid, bump_width, &bump_center, Sampling::Periodized);
        // scale the bump so that ‖⟨x⟩^n bump‖_∞ relative to the base's weighted
        // infimum stays below 1/2
        let base_inf = weighted_infimum_report(&base, params.n).infimum;
        let bump_sup = weighted_sup(&bump, n).max(f64::MIN_POSITIVE);
        let bump = bump.scale(C64::new(bump_level * base_inf / bump_sup, 0.0));
        let member_field = base
            .add(&bump)?
            .map_with_point(|x, v| v * C64::from_polar(amp, phase + modulation * periodic_radius_sq(x, l) / 4.0));
        out.push(member_field);
    }
    Ok(out)
}
