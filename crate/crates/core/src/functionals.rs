//! Conserved and variational functionals, the second-variation form and the
//! two test directions used for instability.
//!
//! Quadratic terms are Parseval sums over the discrete spectrum and pointwise
//! terms are grid Riemann sums, so the identities between them hold up to
//! rounding.

use serde::{Deserialize, Serialize};

use crate::grid::{apply_derivative, Grid, GridError, RealField, StatePair};
use crate::model::{Parity, WaveParams, Which};
use crate::petviashvili::SolitaryWave;

/// `(int u^2, int u_x^2, int u_xx^2)`.
fn sobolev_parts(u: &RealField) -> (f64, f64, f64) {
    let grid = u.grid();
    let spec = u.spectrum();
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (h, xi) in spec.iter().zip(grid.wavenumbers()) {
        let a = h.norm_sqr();
        let x2 = xi * xi;
        s0 += a;
        s1 += x2 * a;
        s2 += x2 * x2 * a;
    }
    let m = grid.spectral_measure();
    (s0 * m, s1 * m, s2 * m)
}

/// `int u_xx^2 - beta u_x^2 + (1 - c^2) u^2`.
pub fn functional_i(u: &RealField, beta: f64, c: f64) -> f64 {
    let (s0, s1, s2) = sobolev_parts(u);
    s2 - beta * s1 + (1.0 - c * c) * s0
}

/// `(p + 1) int F(u)`.
pub fn functional_k(u: &RealField, p: f64, parity: Parity) -> f64 {
    let nl = crate::model::Nonlinearity::new(p, parity);
    (p + 1.0)
        * u.grid()
            .integrate(u.samples().iter().map(|&s| nl.antiderivative(s)))
}

fn inner(a: &RealField, b: &RealField) -> f64 {
    a.grid()
        .integrate(a.samples().iter().zip(b.samples()).map(|(x, y)| x * y))
}

/// Values of the conserved quantities on a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conserved {
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "Q")]
    pub momentum: f64,
    #[serde(rename = "Q1")]
    pub mass_u: f64,
    #[serde(rename = "Q2")]
    pub mass_v: f64,
    #[serde(rename = "Q3_k1")]
    pub q3: f64,
}

/// `E`, `Q = int u v`, `int u`, `int v` and `int u v_xx`.
pub fn conserved_quantities(state: &StatePair, params: &WaveParams) -> Conserved {
    let (u, v) = (state.u(), state.v());
    let grid = u.grid();
    let (s0, s1, s2) = sobolev_parts(u);
    let v2 = inner(v, v);
    let energy = 0.5 * (s0 - params.beta * s1 + s2 + v2)
        - functional_k(u, params.p, params.parity) / (params.p + 1.0);
    let uh = u.spectrum();
    let vh = v.spectrum();
    let q3 = -uh
        .iter()
        .zip(&vh)
        .zip(grid.wavenumbers())
        .map(|((a, b), xi)| xi * xi * (a * b.conj()).re)
        .sum::<f64>()
        * grid.spectral_measure();
    Conserved {
        energy,
        momentum: inner(u, v),
        mass_u: u.integral(),
        mass_v: v.integral(),
        q3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionNehari {
    #[serde(rename = "L")]
    pub action: f64,
    #[serde(rename = "P")]
    pub nehari: f64,
}

fn drift_term(state: &StatePair, c: f64) -> f64 {
    let g = state.grid();
    g.integrate(
        state
            .u()
            .samples()
            .iter()
            .zip(state.v().samples())
            .map(|(u, v)| (c * u + v).powi(2)),
    )
}

/// `L = I/2 - K/(p+1) + int (cu+v)^2 / 2` and `P = I - K + int (cu+v)^2`.
pub fn action_and_nehari(state: &StatePair, params: &WaveParams) -> ActionNehari {
    let i = functional_i(state.u(), params.beta, params.c);
    let k = functional_k(state.u(), params.p, params.parity);
    let j = drift_term(state, params.c);
    ActionNehari {
        action: 0.5 * i - k / (params.p + 1.0) + 0.5 * j,
        nehari: i - k + j,
    }
}

/// Flat record of every functional on one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "Q1")]
    pub q1: f64,
    #[serde(rename = "Q2")]
    pub q2: f64,
    #[serde(rename = "Q3_k1")]
    pub q3_k1: f64,
    #[serde(rename = "action_L")]
    pub action_l: f64,
    #[serde(rename = "nehari_P")]
    pub nehari_p: f64,
    pub m_ratio: f64,
    pub d_value: f64,
}

/// `((p - 1) / (2 (p + 1))) K`.
pub fn d_from_k(k: f64, p: f64) -> f64 {
    (p - 1.0) / (2.0 * (p + 1.0)) * k
}

pub fn functional_report(state: &StatePair, params: &WaveParams) -> FunctionalReport {
    let u = state.u();
    let i = functional_i(u, params.beta, params.c);
    let k = functional_k(u, params.p, params.parity);
    let cons = conserved_quantities(state, params);
    let an = action_and_nehari(state, params);
    FunctionalReport {
        i,
        k,
        e: cons.energy,
        q: cons.momentum,
        q1: cons.mass_u,
        q2: cons.mass_v,
        q3_k1: cons.q3,
        action_l: an.action,
        nehari_p: an.nehari,
        m_ratio: if k > 0.0 {
            i / k.powf(2.0 / (params.p + 1.0))
        } else {
            f64::NAN
        },
        d_value: d_from_k(k, params.p),
    }
}

/// Report on the traveling pair `(phi, -c phi)` of a wave.
pub fn wave_report(wave: &SolitaryWave) -> FunctionalReport {
    functional_report(
        &StatePair::traveling(&wave.profile, wave.params.c),
        &wave.params,
    )
}

/// `|int 3 phi''^2 - beta phi'^2 - (1 - c^2) phi^2 + 2 F(phi)| / K(phi)`.
pub fn pohozaev_residual(wave: &SolitaryWave) -> f64 {
    pohozaev_residual_of(&wave.profile, &wave.params)
}

pub fn pohozaev_residual_of(profile: &RealField, params: &WaveParams) -> f64 {
    let (s0, s1, s2) = sobolev_parts(profile);
    let k = functional_k(profile, params.p, params.parity);
    let raw =
        3.0 * s2 - params.beta * s1 - (1.0 - params.c * params.c) * s0 + 2.0 * k / (params.p + 1.0);
    if k != 0.0 {
        raw.abs() / k.abs()
    } else {
        raw.abs()
    }
}

/// `int 4 phi''^2 - 2 beta phi'^2 - (p - 1) K / (p + 1)`, zero on ground states.
pub fn combined_identity(wave: &SolitaryWave) -> f64 {
    let p = &wave.params;
    let (_, s1, s2) = sobolev_parts(&wave.profile);
    let k = functional_k(&wave.profile, p.p, p.parity);
    4.0 * s2 - 2.0 * p.beta * s1 - (p.p - 1.0) * k / (p.p + 1.0)
}

fn linearized(u: &RealField, wave: &SolitaryWave) -> Vec<f64> {
    let grid: &Grid = u.grid();
    let p = &wave.params;
    let mut spec = u.spectrum();
    for (s, xi) in spec.iter_mut().zip(grid.wavenumbers()) {
        let x2 = xi * xi;
        *s *= x2 * x2 - p.beta * x2 + (1.0 - p.c * p.c);
    }
    let nl = p.nonlinearity();
    let fp = nl.eval_slice(wave.profile.samples(), Which::FPrime);
    grid.inverse(&spec)
        .into_iter()
        .zip(u.samples())
        .zip(fp)
        .map(|((l, &u), d)| l - d * u)
        .collect()
}

/// `<H w1, w2>` for the second variation of the action at `wave`.
pub fn h_quadratic_form(
    w1: &StatePair,
    w2: &StatePair,
    wave: &SolitaryWave,
) -> Result<f64, GridError> {
    w1.u().check_same_grid(&wave.profile)?;
    w1.u().check_same_grid(w2.u())?;
    let grid = wave.grid();
    let c = wave.params.c;
    let lu = linearized(w1.u(), wave);
    let first = grid.integrate(lu.iter().zip(w2.u().samples()).map(|(a, b)| a * b));
    let second = grid.integrate(
        w1.u()
            .samples()
            .iter()
            .zip(w1.v().samples())
            .zip(w2.u().samples().iter().zip(w2.v().samples()))
            .map(|((u1, v1), (u2, v2))| (c * u1 + v1) * (c * u2 + v2)),
    );
    Ok(first + second)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionForms {
    pub dir_i_value: f64,
    pub dir_ii_value: f64,
    pub q_orth_i: f64,
    pub q_orth_ii: f64,
}

/// `int x phi^2 / int phi^2`.
pub fn centroid(profile: &RealField) -> f64 {
    let g = profile.grid();
    let mass = g.integrate(profile.samples().iter().map(|s| s * s));
    if mass == 0.0 {
        return 0.0;
    }
    g.integrate(
        g.nodes()
            .iter()
            .zip(profile.samples())
            .map(|(x, s)| x * s * s),
    ) / mass
}

/// `phi + 2 (x - x0) phi'` with `x0` the centroid.
pub fn dilation_direction(profile: &RealField) -> RealField {
    let grid = profile.grid();
    let x0 = centroid(profile);
    let mut spec = profile.spectrum();
    apply_derivative(grid, &mut spec, 1);
    let dphi = grid.inverse(&spec);
    let samples = grid
        .nodes()
        .iter()
        .zip(profile.samples())
        .zip(dphi)
        .map(|((x, u), d)| u + 2.0 * (x - x0) * d)
        .collect();
    RealField::from_parts(grid.clone(), samples)
}

/// `<Q'(phi, -c phi), w> = int -c phi w_u + phi w_v`.
fn q_pairing(wave: &SolitaryWave, w: &StatePair) -> f64 {
    let c = wave.params.c;
    let g = wave.grid();
    g.integrate(
        wave.profile
            .samples()
            .iter()
            .zip(w.u().samples().iter().zip(w.v().samples()))
            .map(|(phi, (a, b))| -c * phi * a + phi * b),
    )
}

/// Form values along `(phi, c phi)` and `(w, -c w)`, `w = phi + 2 x phi'`,
/// with their pairings against `Q'`.
pub fn instability_direction_forms(wave: &SolitaryWave) -> DirectionForms {
    let c = wave.params.c;
    let phi = &wave.profile;
    let d1 = StatePair::new(phi.clone(), phi.scaled(c)).expect("same grid");
    let w = dilation_direction(phi);
    let d2 = StatePair::new(w.clone(), w.scaled(-c)).expect("same grid");
    DirectionForms {
        dir_i_value: h_quadratic_form(&d1, &d1, wave).expect("same grid"),
        dir_ii_value: h_quadratic_form(&d2, &d2, wave).expect("same grid"),
        q_orth_i: q_pairing(wave, &d1),
        q_orth_ii: q_pairing(wave, &d2),
    }
}

/// Closed forms of the two direction values in terms of the profile integrals:
/// `((1-p) K + 4 c^2 int phi^2, (1-p)(p-3)/(p+1) K + int 24 phi''^2 - 4 beta phi'^2)`.
pub fn direction_closed_forms(wave: &SolitaryWave) -> (f64, f64) {
    let p = &wave.params;
    let (s0, s1, s2) = sobolev_parts(&wave.profile);
    let k = functional_k(&wave.profile, p.p, p.parity);
    (
        (1.0 - p.p) * k + 4.0 * p.c * p.c * s0,
        (1.0 - p.p) * (p.p - 3.0) / (p.p + 1.0) * k + 24.0 * s2 - 4.0 * p.beta * s1,
    )
}

/// `int phi^2`, `int phi'^2`, `int phi''^2` of a profile.
pub fn profile_integrals(profile: &RealField) -> (f64, f64, f64) {
    sobolev_parts(profile)
}
