//! Uniform periodic grid on `[-L, L)` with the matching Fourier layout.
//!
//! Every integral in the crate is the grid-measure Riemann sum `dx * sum(..)`,
//! which for periodic band-limited data coincides with the Parseval sum
//! `(dx / n) * sum(|u_hat|^2 ...)` over the discrete spectrum.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("number of points {0} is not a power of two >= 16")]
    NotPowerOfTwo(usize),
    #[error("half length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("field has {got} samples but grid has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field contains a non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("derivative order {0} outside 1..=6")]
    DerivativeOrder(u32),
}

/// Periodic grid with precomputed FFT plans.
pub struct Grid {
    half_length: f64,
    n: usize,
    dx: f64,
    nodes: Vec<f64>,
    wavenumbers: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("half_length", &self.half_length)
            .field("n_points", &self.n)
            .field("dx", &self.dx)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.half_length == other.half_length
    }
}

/// Builds the grid `x_j = -L + j dx`, `xi_j = (pi / L) m_j`.
pub fn make_grid(half_length: f64, n_points: usize) -> Result<Arc<Grid>, GridError> {
    Grid::new(half_length, n_points).map(Arc::new)
}

impl Grid {
    pub fn new(half_length: f64, n_points: usize) -> Result<Self, GridError> {
        if !(half_length > 0.0) || !half_length.is_finite() {
            return Err(GridError::NonPositiveLength(half_length));
        }
        if n_points < 16 || !n_points.is_power_of_two() {
            return Err(GridError::NotPowerOfTwo(n_points));
        }
        let n = n_points;
        let dx = 2.0 * half_length / n as f64;
        let nodes = (0..n).map(|j| -half_length + j as f64 * dx).collect();
        let base = PI / half_length;
        let wavenumbers = (0..n)
            .map(|j| base * index_multiplier(j, n) as f64)
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Self {
            half_length,
            n,
            dx,
            nodes,
            wavenumbers,
            fwd,
            inv,
        })
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn nyquist_index(&self) -> usize {
        self.n / 2
    }

    /// Wavenumber used for odd-order operators: the Nyquist entry is zero.
    pub fn odd_wavenumber(&self, j: usize) -> f64 {
        if j == self.n / 2 {
            0.0
        } else {
            self.wavenumbers[j]
        }
    }

    /// Measure turning `sum |u_hat|^2` into `integral u^2`.
    pub fn spectral_measure(&self) -> f64 {
        self.dx / self.n as f64
    }

    /// Unnormalised forward DFT of real samples.
    pub fn forward(&self, samples: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    /// Forward DFT of a complex buffer in place.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
    }

    /// Inverse DFT (normalised by `1/n`) returning the real part.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.inv.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// Inverse DFT into an existing real buffer, reusing `work` as scratch.
    pub fn inverse_into(&self, spectrum: &[Complex64], work: &mut Vec<Complex64>, out: &mut [f64]) {
        work.clear();
        work.extend_from_slice(spectrum);
        self.inv.process(work);
        let scale = 1.0 / self.n as f64;
        for (o, c) in out.iter_mut().zip(work.iter()) {
            *o = c.re * scale;
        }
    }

    /// Index multiplier `m_j` in standard transform order.
    pub fn multiplier(&self, j: usize) -> i64 {
        index_multiplier(j, self.n)
    }

    /// Zeroes modes with `|m| > n/3` (2/3 rule).
    pub fn dealias(&self, spectrum: &mut [Complex64]) {
        let cutoff = (self.n / 3) as i64;
        for (j, s) in spectrum.iter_mut().enumerate() {
            if index_multiplier(j, self.n).abs() > cutoff {
                *s = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// `tau_r u = u(. + r)` by spectral phase shift (Nyquist mode dropped).
    pub fn shift(&self, samples: &[f64], r: f64) -> Vec<f64> {
        let mut spec = self.forward(samples);
        for (j, s) in spec.iter_mut().enumerate() {
            let xi = self.odd_wavenumber(j);
            if j == self.n / 2 {
                *s = Complex64::new(0.0, 0.0);
            } else {
                *s *= Complex64::from_polar(1.0, xi * r);
            }
        }
        self.inverse(&spec)
    }

    /// Riemann sum `dx * sum(values)`.
    pub fn integrate(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        self.dx * values.into_iter().sum::<f64>()
    }
}

fn index_multiplier(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Real samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Arc<Grid>,
    samples: Vec<f64>,
}

impl RealField {
    pub fn new(grid: Arc<Grid>, samples: Vec<f64>) -> Result<Self, GridError> {
        if samples.len() != grid.n_points() {
            return Err(GridError::LengthMismatch {
                expected: grid.n_points(),
                got: samples.len(),
            });
        }
        if let Some(j) = samples.iter().position(|s| !s.is_finite()) {
            return Err(GridError::NonFinite(j));
        }
        Ok(Self { grid, samples })
    }

    /// Samples `f(x_j)`; panics only if `f` produces non-finite values.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let samples: Vec<f64> = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::new(grid, samples).expect("sampled function must be finite")
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n_points();
        Self {
            grid,
            samples: vec![0.0; n],
        }
    }

    pub(crate) fn from_parts(grid: Arc<Grid>, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), grid.n_points());
        Self { grid, samples }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        self.grid.forward(&self.samples)
    }

    pub fn sup(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::from_parts(
            self.grid.clone(),
            self.samples.iter().map(|s| a * s).collect(),
        )
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &RealField, b: f64) -> Result<Self, GridError> {
        self.check_same_grid(other)?;
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self::from_parts(self.grid.clone(), samples))
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(
            self.grid.clone(),
            self.samples.iter().map(|&s| f(s)).collect(),
        )
    }

    pub fn shifted(&self, r: f64) -> Self {
        Self::from_parts(self.grid.clone(), self.grid.shift(&self.samples, r))
    }

    /// `integral u v dx` on the grid measure.
    pub fn dot(&self, other: &RealField) -> Result<f64, GridError> {
        self.check_same_grid(other)?;
        Ok(self
            .grid
            .integrate(self.samples.iter().zip(&other.samples).map(|(a, b)| a * b)))
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(self.samples.iter().copied())
    }

    pub(crate) fn check_same_grid(&self, other: &RealField) -> Result<(), GridError> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(GridError::GridMismatch)
        }
    }
}

/// A point `(u, v)` of the phase space `H^2 x L^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    u: RealField,
    v: RealField,
}

impl StatePair {
    pub fn new(u: RealField, v: RealField) -> Result<Self, GridError> {
        u.check_same_grid(&v)?;
        Ok(Self { u, v })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        Self {
            u: RealField::zeros(grid.clone()),
            v: RealField::zeros(grid),
        }
    }

    /// The traveling-wave pair `(phi, -c phi)`.
    pub fn traveling(profile: &RealField, c: f64) -> Self {
        Self {
            u: profile.clone(),
            v: profile.scaled(-c),
        }
    }

    pub fn u(&self) -> &RealField {
        &self.u
    }

    pub fn v(&self) -> &RealField {
        &self.v
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }

    pub fn combine(&self, a: f64, other: &StatePair, b: f64) -> Result<Self, GridError> {
        Ok(Self {
            u: self.u.combine(a, &other.u, b)?,
            v: self.v.combine(a, &other.v, b)?,
        })
    }

    pub fn shifted(&self, r: f64) -> Self {
        Self {
            u: self.u.shifted(r),
            v: self.v.shifted(r),
        }
    }

    /// `||u||_{H^2} + ||v||_{L^2}`.
    pub fn x_norm(&self) -> f64 {
        discrete_norms(&self.u).h2 + discrete_norms(&self.v).l2
    }

    pub fn into_parts(self) -> (RealField, RealField) {
        (self.u, self.v)
    }
}

/// `(i xi)^order` applied spectrally; odd orders drop the Nyquist mode.
pub fn spectral_derivative(field: &RealField, order: u32) -> Result<RealField, GridError> {
    if order == 0 || order > 6 {
        return Err(GridError::DerivativeOrder(order));
    }
    let grid = field.grid();
    let mut spec = field.spectrum();
    apply_derivative(grid, &mut spec, order);
    Ok(RealField::from_parts(grid.clone(), grid.inverse(&spec)))
}

pub(crate) fn apply_derivative(grid: &Grid, spec: &mut [Complex64], order: u32) {
    let odd = order % 2 == 1;
    for (j, s) in spec.iter_mut().enumerate() {
        let xi = if odd {
            grid.odd_wavenumber(j)
        } else {
            grid.wavenumbers()[j]
        };
        *s *= Complex64::new(0.0, xi).powu(order);
    }
}

/// Entry `j` is `xi_j^4 - beta xi_j^2 + (1 - c^2)`.
pub fn dispersion_symbol(grid: &Grid, beta: f64, c: f64) -> Vec<f64> {
    grid.wavenumbers()
        .iter()
        .map(|&xi| symbol_at(xi, beta, c))
        .collect()
}

#[inline]
pub fn symbol_at(xi: f64, beta: f64, c: f64) -> f64 {
    let xi2 = xi * xi;
    xi2 * xi2 - beta * xi2 + (1.0 - c * c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h2: f64,
    pub sup: f64,
}

pub fn discrete_norms(field: &RealField) -> Norms {
    let grid = field.grid();
    let l2 = grid.integrate(field.samples().iter().map(|s| s * s)).sqrt();
    let spec = field.spectrum();
    let h2sq: f64 = spec
        .iter()
        .zip(grid.wavenumbers())
        .map(|(s, xi)| {
            let w = 1.0 + xi * xi;
            w * w * s.norm_sqr()
        })
        .sum::<f64>()
        * grid.spectral_measure();
    Norms {
        l2,
        h2: h2sq.sqrt(),
        sup: field.sup(),
    }
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn field(coeffs: &[f64], grid: Arc<Grid>) -> RealField {
        RealField::from_fn(grid, |x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| a * (-(x - k as f64).powi(2) / (1.0 + k as f64)).exp())
                .sum()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn transform_round_trip(samples in prop::collection::vec(-10.0..10.0f64, 64)) {
            let g = make_grid(5.0, 64).unwrap();
            let back = g.inverse(&g.forward(&samples));
            for (a, b) in back.iter().zip(&samples) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn parseval(samples in prop::collection::vec(-10.0..10.0f64, 128)) {
            let g = make_grid(7.0, 128).unwrap();
            let direct = g.integrate(samples.iter().map(|s| s * s));
            let spectral: f64 = g.forward(&samples).iter().map(|z| z.norm_sqr()).sum::<f64>() * g.spectral_measure();
            prop_assert!((direct - spectral).abs() <= 1e-12 * direct.max(1.0));
        }

        #[test]
        fn derivative_is_linear(a in prop::collection::vec(-2.0..2.0f64, 4),
                                b in prop::collection::vec(-2.0..2.0f64, 4),
                                s in -3.0..3.0f64, order in 1u32..=6) {
            let g = make_grid(20.0, 256).unwrap();
            let (fa, fb) = (field(&a, g.clone()), field(&b, g.clone()));
            let lhs = spectral_derivative(&fa.combine(1.0, &fb, s).unwrap(), order).unwrap();
            let rhs = spectral_derivative(&fa, order).unwrap()
                .combine(1.0, &spectral_derivative(&fb, order).unwrap(), s).unwrap();
            // rounding is amplified by up to xi_max^order
            let xi_max = g.wavenumbers().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let scale = (1.0 + fa.sup() + s.abs() * fb.sup()) * xi_max.powi(order as i32);
            for (x, y) in lhs.samples().iter().zip(rhs.samples()) {
                prop_assert!((x - y).abs() < 1e-13 * scale);
            }
        }

        #[test]
        fn symbol_positive_in_domain(xi in -50.0..50.0f64, c in -0.999..0.999f64, t in 0.0..0.999f64) {
            let bstar = 2.0 * (1.0 - c * c).sqrt();
            // beta ranges over (-inf, beta*) via a monotone map of t
            let beta = bstar - t / (1.0 - t) - 1e-9;
            prop_assert!(symbol_at(xi, beta, c) > 0.0);
        }

        #[test]
        fn shift_commutes_with_derivative(a in prop::collection::vec(-2.0..2.0f64, 4),
                                          r in -10.0..10.0f64, order in 1u32..=4) {
            let g = make_grid(20.0, 256).unwrap();
            let f = field(&a, g);
            let lhs = spectral_derivative(&f.shifted(r), order).unwrap();
            let rhs = spectral_derivative(&f, order).unwrap().shifted(r);
            let scale = 1.0 + lhs.sup();
            for (x, y) in lhs.samples().iter().zip(rhs.samples()) {
                prop_assert!((x - y).abs() < 1e-10 * scale);
            }
        }
    }
}
