//! Periodic-box discretisation of functions on R^N and Fourier-multiplier
//! operators on it: the Schrödinger group, spectral derivatives and the
//! closed-form Gaussian used to check them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{NlsError, Result};

pub type C64 = Complex64;

/// Highest total derivative order accepted by [`spectral_derivative`].
pub const MAX_DERIVATIVE_ORDER: usize = 16;

/// Energy fraction in the top third of the frequency band above which a
/// derivative is reported as under-resolved.
pub const TAIL_THRESHOLD: f64 = 1e-6;

/// Isotropic periodic grid `[-L, L)^N` with `M` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    points: usize,
    half_width: f64,
}

impl GridSpec {
    pub fn new(dim: usize, points: usize, half_width: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(NlsError::InvalidGrid(format!(
                "dimension N must be in 1..=3, got {dim}"
            )));
        }
        if !points.is_multiple_of(2) {
            return Err(NlsError::InvalidGrid(format!("M must be even, got {points}")));
        }
        if points < 8 {
            return Err(NlsError::InvalidGrid(format!("M must be at least 8, got {points}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(NlsError::InvalidGrid(format!(
                "half-width L must be positive, got {half_width}"
            )));
        }
        Ok(Self {
            dim,
            points,
            half_width,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Grid spacing `h = 2L/M`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Total number of samples `M^N`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^N` of a single sample.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Coordinate of axis index `i`.
    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    /// Signed integer wavenumber index of DFT slot `i` (Nyquist is negative).
    pub fn wave_index(&self, i: usize) -> i64 {
        let m = self.points as i64;
        let i = i as i64;
        if i < m / 2 {
            i
        } else {
            i - m
        }
    }

    /// Angular wavenumber of DFT slot `i`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        self.wave_index(i) as f64 * std::f64::consts::PI / self.half_width
    }

    /// Largest resolved wavenumber `π/h`.
    pub fn max_wavenumber(&self) -> f64 {
        std::f64::consts::PI / self.spacing()
    }

    /// Per-axis indices of a flat (row-major, last axis fastest) index.
    pub fn unflatten(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for axis in (0..self.dim).rev() {
            idx[axis] = flat % self.points;
            flat /= self.points;
        }
        idx
    }

    /// Coordinates of the sample with flat index `flat`; unused axes are zero.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = self.coordinate(idx[axis]);
        }
        x
    }

    pub fn radius_sq(&self, flat: usize) -> f64 {
        self.point(flat).iter().map(|c| c * c).sum()
    }

    /// Wave vector of spectral slot `flat`.
    pub fn wave_vector(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let mut k = [0.0; 3];
        for axis in 0..self.dim {
            k[axis] = self.wavenumber(idx[axis]);
        }
        k
    }

    pub fn wavenumber_sq(&self, flat: usize) -> f64 {
        self.wave_vector(flat).iter().map(|c| c * c).sum()
    }

    /// All `|k|^2` values in flat spectral order.
    pub fn wavenumber_sq_table(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.wavenumber_sq(i)).collect()
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(NlsError::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

pub fn make_grid(dim: usize, points: usize, half_width: f64) -> Result<GridSpec> {
    GridSpec::new(dim, points, half_width)
}

/// Complex samples of a function on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<C64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(NlsError::InvalidParameter(format!(
                "field has {} samples, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(NlsError::InvalidParameter("field contains non-finite samples".into()));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x)` at every grid point. `x` has length `N`.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> C64) -> Self {
        let dim = grid.dim();
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.point(i);
                f(&x[..dim])
            })
            .collect();
        Self { grid, values }
    }

    pub fn from_real_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        Self::from_fn(grid, |x| C64::new(f(x), 0.0))
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Vec<C64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Discrete `L²` norm, `h^{N/2} (Σ|f_i|²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        weighted_l2(&self.grid, &self.values)
    }

    /// Grid maximum of `|f|`.
    pub fn linf_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise `f(x, u(x))`.
    pub fn map_with_point(&self, f: impl Fn(&[f64], C64) -> C64) -> Field {
        let dim = self.grid.dim();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let x = self.grid.point(i);
                f(&x[..dim], v)
            })
            .collect();
        Field::from_raw(self.grid, values)
    }

    pub fn scale(&self, c: C64) -> Field {
        self.map(|v| v * c)
    }

    pub fn conj(&self) -> Field {
        self.map(|v| v.conj())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a - b)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a * b)
    }

    pub fn zip(&self, other: &Field, f: impl Fn(C64, C64) -> C64) -> Result<Field> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Field::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    /// `‖self − other‖ / ‖other‖` in discrete `L²`.
    pub fn relative_l2_error(&self, reference: &Field) -> Result<f64> {
        let diff = self.sub(reference)?.l2_norm();
        let scale = reference.l2_norm();
        Ok(if scale == 0.0 { diff } else { diff / scale })
    }

    pub fn l2_distance(&self, other: &Field) -> Result<f64> {
        Ok(self.sub(other)?.l2_norm())
    }
}

pub(crate) fn weighted_l2(grid: &GridSpec, values: &[C64]) -> f64 {
    let sum: f64 = values.iter().map(|v| v.norm_sqr()).sum();
    (sum * grid.cell_volume()).sqrt()
}

/// Unitary DFT coefficients of a [`Field`], scaled so that
/// [`SpectralField::l2_norm`] equals the field's discrete `L²` norm.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coefficients: Vec<C64>,
}

impl SpectralField {
    pub fn from_coefficients(grid: GridSpec, coefficients: Vec<C64>) -> Result<Self> {
        if coefficients.len() != grid.len() {
            return Err(NlsError::InvalidParameter(format!(
                "spectrum has {} coefficients, grid needs {}",
                coefficients.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, coefficients })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coefficients(&self) -> &[C64] {
        &self.coefficients
    }

    pub fn l2_norm(&self) -> f64 {
        weighted_l2(&self.grid, &self.coefficients)
    }

    /// Fraction of spectral energy in the top third of the band.
    pub fn tail_fraction(&self) -> f64 {
        tail_fraction(&self.grid, &self.coefficients)
    }
}

pub fn forward_transform(f: &Field) -> SpectralField {
    let mut data = f.values.clone();
    fft_nd(&f.grid, &mut data, FftDirection::Forward);
    let scale = (f.grid.len() as f64).sqrt().recip();
    data.iter_mut().for_each(|c| *c *= scale);
    SpectralField {
        grid: f.grid,
        coefficients: data,
    }
}

pub fn inverse_transform(spectrum: &SpectralField) -> Field {
    let mut data = spectrum.coefficients.clone();
    fft_nd(&spectrum.grid, &mut data, FftDirection::Inverse);
    let scale = (spectrum.grid.len() as f64).sqrt().recip();
    data.iter_mut().for_each(|c| *c *= scale);
    Field::from_raw(spectrum.grid, data)
}

/// Unnormalised forward DFT of the samples.
pub(crate) fn raw_forward(grid: &GridSpec, values: &[C64]) -> Vec<C64> {
    let mut data = values.to_vec();
    fft_nd(grid, &mut data, FftDirection::Forward);
    data
}

/// Inverse DFT including the `1/M^N` factor, so `raw_inverse(raw_forward(f)) = f`.
pub(crate) fn raw_inverse(grid: &GridSpec, mut data: Vec<C64>) -> Vec<C64> {
    fft_nd(grid, &mut data, FftDirection::Inverse);
    let scale = 1.0 / grid.len() as f64;
    data.iter_mut().for_each(|c| *c *= scale);
    data
}

pub(crate) fn tail_fraction(grid: &GridSpec, coefficients: &[C64]) -> f64 {
    let cut = (grid.points() / 3) as i64;
    let mut total = 0.0;
    let mut tail = 0.0;
    for (i, c) in coefficients.iter().enumerate() {
        let e = c.norm_sqr();
        total += e;
        let idx = grid.unflatten(i);
        if (0..grid.dim()).any(|a| grid.wave_index(idx[a]).abs() > cut) {
            tail += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

type PlanCache = Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>;

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let key = (len, direction == FftDirection::Forward);
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(p) = cache.lock().unwrap().get(&key) {
        return Arc::clone(p);
    }
    let p = planner().lock().unwrap().plan_fft(len, direction);
    cache.lock().unwrap().insert(key, Arc::clone(&p));
    p
}

/// In-place unnormalised N-dimensional DFT, one axis at a time.
fn fft_nd(grid: &GridSpec, data: &mut [C64], direction: FftDirection) {
    let m = grid.points();
    let fft = plan(m, direction);
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut line = vec![C64::new(0.0, 0.0); m];
    for axis in 0..grid.dim() {
        let stride = m.pow((grid.dim() - 1 - axis) as u32);
        if stride == 1 {
            fft.process_with_scratch(data, &mut scratch);
            continue;
        }
        let block = stride * m;
        for outer in (0..data.len()).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (i, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + i * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    data[base + i * stride] = *v;
                }
            }
        }
    }
}

/// Applies the Fourier multiplier `symbol(flat spectral index)` to `f`.
pub fn apply_multiplier(f: &Field, symbol: impl Fn(usize) -> C64) -> Field {
    let mut spec = raw_forward(&f.grid, &f.values);
    spec.iter_mut().enumerate().for_each(|(i, c)| *c *= symbol(i));
    Field::from_raw(f.grid, raw_inverse(&f.grid, spec))
}

/// Multiplier of `e^{itΔ}` on a spectrum with precomputed `|k|²`.
pub(crate) fn propagate_spectrum(spectrum: &mut [C64], ksq: &[f64], t: f64) {
    if t == 0.0 {
        return;
    }
    for (c, &k2) in spectrum.iter_mut().zip(ksq) {
        *c *= C64::from_polar(1.0, -k2 * t);
    }
}

/// The free Schrödinger group `e^{itΔ}`, exact on the periodic grid.
pub fn free_propagate(f: &Field, t: f64) -> Field {
    if t == 0.0 {
        return f.clone();
    }
    let grid = f.grid;
    apply_multiplier(f, |i| C64::from_polar(1.0, -grid.wavenumber_sq(i) * t))
}

/// Symbol of `D^β` for spectral slot `flat`; odd derivatives kill the Nyquist mode.
pub(crate) fn derivative_symbol(grid: &GridSpec, beta: &[usize], flat: usize) -> C64 {
    let idx = grid.unflatten(flat);
    let nyquist = -(grid.points() as i64) / 2;
    let mut s = C64::new(1.0, 0.0);
    for (axis, &order) in beta.iter().enumerate() {
        if order == 0 {
            continue;
        }
        let w = grid.wave_index(idx[axis]);
        if w == nyquist && order % 2 == 1 {
            return C64::new(0.0, 0.0);
        }
        let k = grid.wavenumber(idx[axis]);
        s *= C64::new(0.0, k).powu(order as u32);
    }
    s
}

pub(crate) fn check_multi_index(grid: &GridSpec, beta: &[usize]) -> Result<()> {
    if beta.len() != grid.dim() {
        return Err(NlsError::InvalidParameter(format!(
            "multi-index {beta:?} has length {}, grid dimension is {}",
            beta.len(),
            grid.dim()
        )));
    }
    let order: usize = beta.iter().sum();
    if order > MAX_DERIVATIVE_ORDER {
        return Err(NlsError::InvalidParameter(format!(
            "derivative order {order} exceeds supported maximum {MAX_DERIVATIVE_ORDER}"
        )));
    }
    Ok(())
}

/// `D^β f` by the multiplier `(ik)^β`.
pub fn spectral_derivative(f: &Field, beta: &[usize]) -> Result<Field> {
    Ok(spectral_derivative_with_tail(f, beta)?.0)
}

/// `D^β f` together with the top-third energy fraction of its spectrum.
pub fn spectral_derivative_with_tail(f: &Field, beta: &[usize]) -> Result<(Field, f64)> {
    check_multi_index(&f.grid, beta)?;
    let spec = raw_forward(&f.grid, &f.values);
    Ok(derivative_from_spectrum(&f.grid, &spec, beta))
}

pub(crate) fn derivative_from_spectrum(grid: &GridSpec, spec: &[C64], beta: &[usize]) -> (Field, f64) {
    let d: Vec<C64> = spec
        .iter()
        .enumerate()
        .map(|(i, &c)| c * derivative_symbol(grid, beta, i))
        .collect();
    let tail = tail_fraction(grid, &d);
    (Field::from_raw(*grid, raw_inverse(grid, d)), tail)
}

/// Laplacian power `Δ^p f`.
pub fn laplacian_power(f: &Field, p: u32) -> Field {
    let grid = f.grid;
    apply_multiplier(f, |i| C64::new((-grid.wavenumber_sq(i)).powi(p as i32), 0.0))
}

/// Gradient components `∂_1 f, …, ∂_N f`.
pub fn gradient(f: &Field) -> Vec<Field> {
    let grid = f.grid;
    let spec = raw_forward(&grid, &f.values);
    (0..grid.dim())
        .map(|axis| {
            let mut beta = vec![0; grid.dim()];
            beta[axis] = 1;
            derivative_from_spectrum(&grid, &spec, &beta).0
        })
        .collect()
}

/// All multi-indices of length `dim` with total order `order`, lexicographically
/// descending in the first component.
pub fn multi_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, remaining: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == dim {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=remaining).rev() {
            prefix.push(first);
            rec(dim, remaining - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, order, &mut Vec::with_capacity(dim), &mut out);
    out
}

/// Smallest `κ` such that the spectral energy at `|k| > κ` is at most
/// `energy_tol` of the total.
pub fn effective_band_limit(f: &Field, energy_tol: f64) -> f64 {
    let grid = f.grid;
    let spec = raw_forward(&grid, &f.values);
    let mut modes: Vec<(f64, f64)> = spec
        .iter()
        .enumerate()
        .map(|(i, c)| (grid.wavenumber_sq(i).sqrt(), c.norm_sqr()))
        .collect();
    let total: f64 = modes.iter().map(|m| m.1).sum();
    if total == 0.0 {
        return 0.0;
    }
    modes.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tail = 0.0;
    for (k, e) in &modes {
        if tail + e > energy_tol * total {
            return *k;
        }
        tail += e;
    }
    0.0
}

/// Energy tolerance defining the effective band limit of the box-validity horizon.
pub const BAND_ENERGY_TOL: f64 = 1e-8;

/// Largest `t` with `2 κ t ≤ L/2`, where `κ` is the effective band limit:
/// beyond it free-flight wavefronts can reach the periodic boundary.
pub fn box_validity_horizon(f: &Field) -> f64 {
    let k = effective_band_limit(f, BAND_ENERGY_TOL);
    if k == 0.0 {
        f64::INFINITY
    } else {
        f.grid.half_width() / (4.0 * k)
    }
}

/// Closed-form free evolution of `e^{-|x|²/(4σ)}`:
/// `(σ/(σ+it))^{N/2} exp(-|x|²/(4(σ+it)))`.
pub fn gaussian_exact(grid: &GridSpec, sigma: f64, t: f64) -> Result<Field> {
    if !(sigma > 0.0) {
        return Err(NlsError::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let z = C64::new(sigma, t);
    let amp = (C64::new(sigma, 0.0) / z).powf(grid.dim() as f64 / 2.0);
    Ok(Field::from_fn(*grid, |x| {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        amp * (-r2 / (4.0 * z)).exp()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn grid_spacing_and_size() {
        let g = make_grid(1, 512, 20.0).unwrap();
        assert_eq!(g.spacing(), 0.078125);
        let g2 = make_grid(2, 128, 15.0).unwrap();
        assert_eq!(g2.len(), 16384);
        assert_eq!(g.coordinate(0), -20.0);
        assert!(approx(g.coordinate(511), 20.0 - 0.078125, 1e-15));
    }

    #[test]
    fn grid_rejects_bad_input() {
        let err = make_grid(1, 7, 20.0).unwrap_err().to_string();
        assert!(err.contains("M must be even"), "{err}");
        assert!(make_grid(0, 64, 1.0).is_err());
        assert!(make_grid(4, 64, 1.0).is_err());
        assert!(make_grid(1, 64, 0.0).is_err());
        assert!(make_grid(1, 6, 1.0).is_err());
    }

    #[test]
    fn constant_field_lives_in_zero_mode() {
        let g = make_grid(2, 16, 3.0).unwrap();
        let f = Field::from_real_fn(g, |_| 1.0);
        let s = forward_transform(&f);
        let zero = s.coefficients()[0].norm();
        let rest: f64 = s.coefficients()[1..].iter().map(|c| c.norm()).sum();
        assert!(zero > 0.0);
        assert!(rest < 1e-12);
        assert!(approx(s.l2_norm(), f.l2_norm(), 1e-13));
    }

    #[test]
    fn single_mode_has_single_coefficient() {
        let g = make_grid(1, 64, std::f64::consts::PI).unwrap();
        let f = Field::from_fn(g, |x| C64::from_polar(1.0, 3.0 * x[0]));
        let s = forward_transform(&f);
        let big: Vec<usize> = s
            .coefficients()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > 1e-9)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(big, vec![3]);
    }

    #[test]
    fn derivative_of_mode_and_constant() {
        let g = make_grid(1, 64, std::f64::consts::PI).unwrap();
        let f = Field::from_fn(g, |x| C64::from_polar(1.0, 2.0 * x[0]));
        let d = spectral_derivative(&f, &[1]).unwrap();
        let expect = f.scale(C64::new(0.0, 2.0));
        assert!(d.relative_l2_error(&expect).unwrap() < 1e-12);
        let c = Field::from_real_fn(g, |_| 4.0);
        for order in 1..6 {
            assert!(spectral_derivative(&c, &[order]).unwrap().linf_norm() < 1e-10);
        }
    }

    #[test]
    fn second_derivative_of_sine() {
        let g = make_grid(1, 64, std::f64::consts::PI).unwrap();
        let f = Field::from_real_fn(g, |x| x[0].sin());
        let d = spectral_derivative(&f, &[2]).unwrap();
        assert!(d.relative_l2_error(&f.scale(C64::new(-1.0, 0.0))).unwrap() < 1e-10);
    }

    #[test]
    fn derivative_order_limit() {
        let g = make_grid(1, 32, 1.0).unwrap();
        let f = Field::zeros(g);
        assert!(spectral_derivative(&f, &[MAX_DERIVATIVE_ORDER]).is_ok());
        assert!(spectral_derivative(&f, &[MAX_DERIVATIVE_ORDER + 1]).is_err());
        assert!(spectral_derivative(&f, &[1, 1]).is_err());
    }

    #[test]
    fn propagate_identity_at_zero() {
        let g = make_grid(1, 64, 10.0).unwrap();
        let f = gaussian_exact(&g, 1.0, 0.0).unwrap();
        assert_eq!(free_propagate(&f, 0.0), f);
    }

    #[test]
    fn gaussian_peak_modulus() {
        let g = make_grid(1, 512, 20.0).unwrap();
        let f = gaussian_exact(&g, 1.0, 1.0).unwrap();
        let peak = f.values()[256].norm();
        assert!((peak - 2f64.powf(-0.25)).abs() < 1e-12);
        let evolved = free_propagate(&gaussian_exact(&g, 1.0, 0.0).unwrap(), 1.0);
        assert!((evolved.values()[256].norm() - 0.840896).abs() < 1e-6);
        let far = gaussian_exact(&g, 1.0, 400.0).unwrap();
        let ratio = far.values()[256].norm() * 400f64.sqrt();
        assert!((ratio - 1.0).abs() < 1e-5);
    }

    #[test]
    fn gaussian_rejects_nonpositive_sigma() {
        let g = make_grid(1, 32, 5.0).unwrap();
        assert!(gaussian_exact(&g, 0.0, 1.0).is_err());
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(1, 5), vec![vec![5]]);
        assert_eq!(multi_indices(2, 3).len(), 4);
        assert_eq!(multi_indices(3, 13).len(), 105);
        assert!(multi_indices(3, 4).iter().all(|b| b.iter().sum::<usize>() == 4));
    }

    #[test]
    fn three_dimensional_round_trip() {
        let g = make_grid(3, 8, 2.0).unwrap();
        let f = Field::from_fn(g, |x| C64::new(x[0] * 0.3 - x[2], x[1] * x[0]));
        let back = inverse_transform(&forward_transform(&f));
        assert!(back.relative_l2_error(&f).unwrap() < 1e-14);
    }
}
