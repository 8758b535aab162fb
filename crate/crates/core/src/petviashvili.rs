//! Ground-state profiles by the Petviashvili iteration
//!
//! ```text
//! phi_hat_{k+1} = M^{p/(p-1)} f(phi_k)^ / (xi^4 - beta xi^2 + 1 - c^2),
//! M = <symbol phi_hat_k, phi_hat_k> / <f(phi_k)^, phi_hat_k>.
//! ```
//!
//! A wave is accepted only when the increment, `|M - 1|` and the profile
//! residual all pass; a boundary tail above `1e-8` of the peak is an error.

use std::io::{self, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::functionals;
use crate::grid::{dispersion_symbol, Grid, GridError, RealField};
use crate::model::{ModelError, Parity, WaveParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("no convergence after {iterations} iterations (increment {increment:e}, |M-1| {m_deviation:e})")]
    NonConvergence {
        iterations: usize,
        increment: f64,
        m_deviation: f64,
    },
    #[error("degenerate iterate at step {iteration}: K = {k:e}, M = {m:e}")]
    DegenerateIterate { iteration: usize, k: f64, m: f64 },
    #[error(transparent)]
    Domain(#[from] ModelError),
    #[error("profile tail {tail:e} of the peak at the boundary; enlarge the domain")]
    TailTruncation { tail: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid solver options: {0}")]
    Options(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Bound on `sup |phi_{k+1} - phi_k| / sup |phi_{k+1}|`.
    pub increment_tol: f64,
    pub m_tol: f64,
    pub dealias: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            increment_tol: 1e-12,
            m_tol: 1e-10,
            dealias: true,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<(), SolveError> {
        if self.max_iterations == 0 || !(self.increment_tol > 0.0) || !(self.m_tol > 0.0) {
            return Err(SolveError::Options(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Residual bound (relative to the peak) required before a wave is accepted.
pub const RESIDUAL_ACCEPT: f64 = 1e-6;
/// Boundary-cell amplitude (relative to the peak) above which the grid is too small.
pub const TAIL_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub final_increment: f64,
    pub m_deviation: f64,
    pub residual_sup: f64,
    pub ik_gap_rel: f64,
    pub pohozaev_rel: f64,
    pub boundary_tail: f64,
}

#[derive(Debug, Clone)]
pub struct SolitaryWave {
    pub params: WaveParams,
    pub profile: RealField,
    pub diagnostics: SolveDiagnostics,
}

impl SolitaryWave {
    pub fn grid(&self) -> &Arc<Grid> {
        self.profile.grid()
    }

    /// `(x, phi)` table with full double precision.
    pub fn write_profile_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let rows = self
            .grid()
            .nodes()
            .iter()
            .zip(self.profile.samples())
            .map(|(x, v)| vec![crate::csv::num(*x), crate::csv::num(*v)]);
        crate::csv::write_table(out, "x,phi", rows)
    }
}

/// `exp(-x^2 / 25)`: unit-amplitude Gaussian of width 5.
pub fn gaussian_init(grid: Arc<Grid>) -> RealField {
    gaussian(grid, 1.0, 5.0, 0.0)
}

pub fn gaussian(grid: Arc<Grid>, amplitude: f64, width: f64, center: f64) -> RealField {
    RealField::from_fn(grid, |x| {
        let z = (x - center) / width;
        amplitude * (-z * z).exp()
    })
}

pub fn petviashvili_solve(
    params: &WaveParams,
    grid: &Arc<Grid>,
    init: &RealField,
    opts: &SolveOptions,
) -> Result<SolitaryWave, SolveError> {
    params.validate()?;
    opts.validate()?;
    if init.grid().as_ref() != grid.as_ref() {
        return Err(GridError::GridMismatch.into());
    }
    let nl = params.nonlinearity();
    let symbol = dispersion_symbol(grid, params.beta, params.c);
    let exponent = params.p / (params.p - 1.0);
    let measure = grid.spectral_measure();
    let n = grid.n_points();

    let mut phi = init.samples().to_vec();
    let mut phi_hat = grid.forward(&phi);
    let mut next = vec![0.0; n];
    let mut f_hat: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n];
    let mut work = Vec::with_capacity(n);
    let mut increment = f64::INFINITY;
    let mut m_dev = f64::INFINITY;

    for iteration in 1..=opts.max_iterations {
        for (dst, &u) in f_hat.iter_mut().zip(&phi) {
            *dst = Complex64::new(nl.f(u), 0.0);
        }
        grid.forward_in_place(&mut f_hat);
        if opts.dealias {
            grid.dealias(&mut f_hat);
        }
        let quad: f64 = symbol
            .iter()
            .zip(&phi_hat)
            .map(|(s, h)| s * h.norm_sqr())
            .sum::<f64>()
            * measure;
        let k: f64 = f_hat
            .iter()
            .zip(&phi_hat)
            .map(|(a, b)| (a * b.conj()).re)
            .sum::<f64>()
            * measure;
        if !(k > 0.0) || !(quad > 0.0) {
            return Err(SolveError::DegenerateIterate {
                iteration,
                k,
                m: quad / k,
            });
        }
        let m = quad / k;
        let scale = m.powf(exponent);
        for ((dst, src), s) in phi_hat.iter_mut().zip(&f_hat).zip(&symbol) {
            *dst = src * (scale / s);
        }
        grid.inverse_into(&phi_hat, &mut work, &mut next);

        let sup = next.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let diff = next
            .iter()
            .zip(&phi)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        increment = if sup > 0.0 { diff / sup } else { f64::INFINITY };
        m_dev = (m - 1.0).abs();
        std::mem::swap(&mut phi, &mut next);
        if !increment.is_finite() {
            return Err(SolveError::DegenerateIterate { iteration, k, m });
        }

        if increment < opts.increment_tol && m_dev < opts.m_tol {
            let profile = RealField::new(grid.clone(), phi.clone())?;
            let residual = residual_with(&profile, params, opts.dealias);
            if residual <= RESIDUAL_ACCEPT * sup {
                let mut wave = SolitaryWave {
                    params: *params,
                    profile,
                    diagnostics: SolveDiagnostics {
                        iterations: iteration,
                        final_increment: increment,
                        m_deviation: m_dev,
                        ..Default::default()
                    },
                };
                fill_diagnostics(&mut wave);
                check_tail(&wave)?;
                return Ok(wave);
            }
        }
    }
    Err(SolveError::NonConvergence {
        iterations: opts.max_iterations,
        increment,
        m_deviation: m_dev,
    })
}

/// Solves from the default Gaussian initial guess.
pub fn solve_ground_state(
    params: &WaveParams,
    grid: &Arc<Grid>,
    opts: &SolveOptions,
) -> Result<SolitaryWave, SolveError> {
    petviashvili_solve(params, grid, &gaussian_init(grid.clone()), opts)
}

/// `beta` for which the sech-power family solves the profile equation.
pub fn exact_beta(p: u32, c: f64) -> f64 {
    let q = p as f64 + 1.0;
    -(q / 2.0 + 2.0 / q) * (1.0 - c * c).sqrt()
}

/// Closed-form profile `A sech^{4/(p-1)}(a x)` for integer `p >= 2`.
///
/// With `s = sqrt(1 - c^2)` the family is `s^{2/(p-1)} psi(sqrt(s) x)`, where
/// `psi` is the `c = 0` solution at `beta / s`.
pub fn exact_profile(p: u32, c: f64, grid: &Arc<Grid>) -> Result<SolitaryWave, SolveError> {
    exact_profile_for(p, c, Parity::Odd, grid)
}

/// As [`exact_profile`]; the profile is positive so either parity applies.
pub fn exact_profile_for(
    p: u32,
    c: f64,
    parity: Parity,
    grid: &Arc<Grid>,
) -> Result<SolitaryWave, SolveError> {
    if p < 2 {
        return Err(
            ModelError::Domain(format!("exact family needs integer p >= 2, got {p}")).into(),
        );
    }
    let pf = p as f64;
    let params = WaveParams::new(exact_beta(p, c), c, pf, parity)?;
    let amplitude = exact_amplitude(p, c);
    let rate = exact_rate(p, c);
    let power = 4.0 / (pf - 1.0);
    let shape = |x: f64| amplitude * (1.0 / (rate * x).cosh()).powf(power);

    let edge = shape(grid.half_length()) / amplitude;
    if edge > 1e-12 {
        return Err(SolveError::TailTruncation { tail: edge });
    }
    let profile = RealField::from_fn(grid.clone(), shape);
    let mut wave = SolitaryWave {
        params,
        profile,
        diagnostics: SolveDiagnostics::default(),
    };
    wave.diagnostics.m_deviation = (stabilizing_factor(&wave.profile, &params, true) - 1.0).abs();
    fill_diagnostics(&mut wave);
    Ok(wave)
}

/// Peak of the exact family.
pub fn exact_amplitude(p: u32, c: f64) -> f64 {
    let pf = p as f64;
    let s = (1.0 - c * c).sqrt();
    ((pf + 3.0) * (3.0 * pf + 1.0) / (8.0 * (pf + 1.0)) * s * s).powf(1.0 / (pf - 1.0))
}

/// Width parameter `a` of the exact family.
pub fn exact_rate(p: u32, c: f64) -> f64 {
    let pf = p as f64;
    let s = (1.0 - c * c).sqrt();
    let beta0 = exact_beta(p, 0.0);
    (pf - 1.0) / (4.0 * (pf + 1.0)) * (-(pf * pf + 2.0 * pf + 5.0) / beta0).sqrt() * s.sqrt()
}

/// `M` evaluated on a profile.
pub fn stabilizing_factor(profile: &RealField, params: &WaveParams, dealias: bool) -> f64 {
    let grid = profile.grid();
    let nl = params.nonlinearity();
    let symbol = dispersion_symbol(grid, params.beta, params.c);
    let phi_hat = profile.spectrum();
    let mut f_hat = grid.forward(&nl.eval_slice(profile.samples(), crate::model::Which::F));
    if dealias {
        grid.dealias(&mut f_hat);
    }
    let quad: f64 = symbol
        .iter()
        .zip(&phi_hat)
        .map(|(s, h)| s * h.norm_sqr())
        .sum();
    let k: f64 = f_hat
        .iter()
        .zip(&phi_hat)
        .map(|(a, b)| (a * b.conj()).re)
        .sum();
    quad / k
}

/// `sup |(1 - c^2) phi + beta phi'' + phi'''' - f(phi)|` with `f(phi)`
/// restricted to the 2/3-rule band, i.e. the residual of the discrete equation.
pub fn solitary_residual(wave: &SolitaryWave) -> f64 {
    solitary_residual_of(&wave.profile, &wave.params)
}

pub fn solitary_residual_of(profile: &RealField, params: &WaveParams) -> f64 {
    residual_with(profile, params, true)
}

/// As [`solitary_residual_of`]; `dealias = false` keeps every mode of `f(phi)`.
pub fn residual_with(profile: &RealField, params: &WaveParams, dealias: bool) -> f64 {
    let grid = profile.grid();
    let nl = params.nonlinearity();
    let symbol = dispersion_symbol(grid, params.beta, params.c);
    let mut f_hat = grid.forward(&nl.eval_slice(profile.samples(), crate::model::Which::F));
    if dealias {
        grid.dealias(&mut f_hat);
    }
    let diff: Vec<Complex64> = profile
        .spectrum()
        .iter()
        .zip(&symbol)
        .zip(&f_hat)
        .map(|((u, w), f)| u * *w - f)
        .collect();
    grid.inverse(&diff)
        .iter()
        .fold(0.0_f64, |a, v| a.max(v.abs()))
}

fn boundary_tail(profile: &RealField) -> f64 {
    let n = profile.samples().len();
    let band = (n / 64).max(1);
    let s = profile.samples();
    let edge = s[..band]
        .iter()
        .chain(&s[n - band..])
        .fold(0.0_f64, |a, v| a.max(v.abs()));
    let sup = profile.sup();
    if sup > 0.0 {
        edge / sup
    } else {
        0.0
    }
}

fn fill_diagnostics(wave: &mut SolitaryWave) {
    let p = &wave.params;
    let i = functionals::functional_i(&wave.profile, p.beta, p.c);
    let k = functionals::functional_k(&wave.profile, p.p, p.parity);
    let d = &mut wave.diagnostics;
    d.residual_sup = solitary_residual_of(&wave.profile, p);
    d.ik_gap_rel = if k != 0.0 {
        (i - k).abs() / k.abs()
    } else {
        0.0
    };
    d.pohozaev_rel = functionals::pohozaev_residual_of(&wave.profile, p);
    d.boundary_tail = boundary_tail(&wave.profile);
}

fn check_tail(wave: &SolitaryWave) -> Result<(), SolveError> {
    if wave.diagnostics.boundary_tail > TAIL_LIMIT {
        Err(SolveError::TailTruncation {
            tail: wave.diagnostics.boundary_tail,
        })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{discrete_norms, make_grid};

    fn l2_diff(a: &RealField, b: &RealField) -> f64 {
        discrete_norms(&a.combine(1.0, b, -1.0).unwrap()).l2
    }

    #[test]
    fn exact_profile_constants() {
        let g = make_grid(200.0, 4096).unwrap();
        let w = exact_profile(2, 0.0, &g).unwrap();
        assert!((w.params.beta + 13.0 / 6.0).abs() < 1e-15);
        assert!((w.profile.sup() - 35.0 / 24.0).abs() < 1e-14);
        assert!((exact_rate(2, 0.0) - 6f64.sqrt() / 12.0).abs() < 1e-15);
        assert!(w.diagnostics.residual_sup <= 1e-8 * w.profile.sup());
        let edge = w.profile.samples()[0].abs();
        assert!(edge <= 1e-12 * w.profile.sup());

        let w3 = exact_profile(3, 0.0, &g).unwrap();
        assert!((w3.profile.sup() - 1.875f64.sqrt()).abs() < 1e-14);
        assert!(w3.diagnostics.residual_sup <= 1e-8 * w3.profile.sup());
    }

    #[test]
    fn exact_profile_with_speed_solves_equation() {
        let g = make_grid(200.0, 4096).unwrap();
        for p in [2, 3, 4] {
            let w = exact_profile(p, 0.4, &g).unwrap();
            assert!(
                w.diagnostics.residual_sup <= 1e-8 * w.profile.sup(),
                "p={p}"
            );
            assert!(w.diagnostics.ik_gap_rel <= 1e-8);
        }
    }

    #[test]
    fn exact_profile_rejects_small_domain() {
        let g = make_grid(10.0, 256).unwrap();
        assert!(matches!(
            exact_profile(2, 0.0, &g),
            Err(SolveError::TailTruncation { .. })
        ));
    }

    #[test]
    fn residual_edge_cases() {
        let g = make_grid(20.0, 256).unwrap();
        let params = WaveParams::new(0.0, 0.0, 2.0, Parity::Odd).unwrap();
        assert_eq!(
            solitary_residual_of(&RealField::zeros(g.clone()), &params),
            0.0
        );
        let gauss = RealField::from_fn(g, |x| (-x * x).exp());
        assert!(solitary_residual_of(&gauss, &params) >= 0.1);
    }

    #[test]
    fn recovers_exact_solution() {
        let g = make_grid(200.0, 4096).unwrap();
        let exact = exact_profile(2, 0.0, &g).unwrap();
        let wave = solve_ground_state(&exact.params, &g, &SolveOptions::default()).unwrap();
        assert!(l2_diff(&wave.profile, &exact.profile) <= 1e-5);
        assert!(wave.diagnostics.ik_gap_rel <= 1e-8);
    }

    #[test]
    fn cubic_ground_state_identities() {
        let g = make_grid(200.0, 4096).unwrap();
        let params = WaveParams::new(0.0, 0.0, 3.0, Parity::Odd).unwrap();
        let wave = solve_ground_state(&params, &g, &SolveOptions::default()).unwrap();
        assert!(wave.diagnostics.ik_gap_rel <= 1e-8);
        assert!(wave.diagnostics.pohozaev_rel <= 1e-6);
    }

    #[test]
    fn rejects_supersonic_speed() {
        let g = make_grid(50.0, 512).unwrap();
        let params = WaveParams {
            beta: 0.0,
            c: 1.5,
            p: 2.0,
            parity: Parity::Odd,
        };
        let err = petviashvili_solve(
            &params,
            &g,
            &gaussian_init(g.clone()),
            &SolveOptions::default(),
        );
        assert!(matches!(err, Err(SolveError::Domain(_))));
    }

    #[test]
    fn degenerate_initial_guess() {
        let g = make_grid(50.0, 512).unwrap();
        let params = WaveParams::new(-1.0, 0.0, 2.0, Parity::Odd).unwrap();
        let init = gaussian(g.clone(), -1.0, 5.0, 0.0);
        // odd nonlinearity: K(-g) = K(g) > 0 so the iteration runs; even nonlinearity
        // makes K negative on a negative guess.
        let even = WaveParams::new(-1.0, 0.0, 2.0, Parity::Even).unwrap();
        assert!(matches!(
            petviashvili_solve(&even, &g, &init, &SolveOptions::default()),
            Err(SolveError::DegenerateIterate { iteration: 1, .. })
        ));
        let wave = petviashvili_solve(&params, &g, &init, &SolveOptions::default()).unwrap();
        assert!(wave.profile.samples()[256] < 0.0);
    }

    #[test]
    fn budget_exhaustion_reports_nonconvergence() {
        let g = make_grid(100.0, 1024).unwrap();
        let params = WaveParams::new(-1.0, 0.0, 2.0, Parity::Odd).unwrap();
        let opts = SolveOptions {
            max_iterations: 3,
            ..Default::default()
        };
        assert!(matches!(
            solve_ground_state(&params, &g, &opts),
            Err(SolveError::NonConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn profile_csv_header() {
        let g = make_grid(200.0, 4096).unwrap();
        let w = exact_profile(2, 0.0, &g).unwrap();
        let mut buf = Vec::new();
        w.write_profile_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,phi"));
        let first: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(first[0], -200.0);
        assert_eq!(text.lines().count(), 4097);
    }
}
