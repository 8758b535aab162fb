//! Time integration of `u_t = v_x`, `v_t = (u + beta u_xx + u_xxxx - f(u))_x`.
//!
//! The linear part is solved exactly mode by mode and the nonlinear term is
//! advanced with the classical four-stage rule in the interaction picture
//! (integrating-factor RK4), with the 2/3 rule applied to `f(u)` at every stage.

use std::io::{self, Write};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functionals::conserved_quantities;
use crate::grid::{discrete_norms, Grid, GridError, RealField, StatePair};
use crate::model::{ModelError, WaveParams};
use crate::petviashvili::SolitaryWave;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error("X-norm exceeded the blowup cap at t = {time}")]
    BlowupDetected {
        time: f64,
        summary: Box<TrajectorySummary>,
    },
    #[error("non-finite value at t = {time}")]
    NonFinite { time: f64 },
    #[error("invalid evolution spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Domain(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Monitor {
    E,
    Q,
    Q1,
    Q2,
    Q3,
    Orbital,
}

impl FromStr for Monitor {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "E" => Self::E,
            "Q" => Self::Q,
            "Q1" => Self::Q1,
            "Q2" => Self::Q2,
            "Q3" => Self::Q3,
            "orbital" | "Orbital" => Self::Orbital,
            other => return Err(format!("unknown monitor '{other}'")),
        })
    }
}

pub const ALL_MONITORS: [Monitor; 6] = [
    Monitor::E,
    Monitor::Q,
    Monitor::Q1,
    Monitor::Q2,
    Monitor::Q3,
    Monitor::Orbital,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveSpec {
    pub t_final: f64,
    pub dt: f64,
    pub record_every: usize,
    pub dealias: bool,
    pub monitors: Vec<Monitor>,
}

impl Default for EvolveSpec {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            dt: 1e-3,
            record_every: 100,
            dealias: true,
            monitors: ALL_MONITORS.to_vec(),
        }
    }
}

impl EvolveSpec {
    pub fn validate(&self) -> Result<(), EvolveError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(EvolveError::Spec(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final >= self.dt) || !self.t_final.is_finite() {
            return Err(EvolveError::Spec(format!(
                "t_final must be at least dt, got {}",
                self.t_final
            )));
        }
        if self.record_every == 0 {
            return Err(EvolveError::Spec("record_every must be at least 1".into()));
        }
        Ok(())
    }

    fn watches(&self, m: Monitor) -> bool {
        self.monitors.contains(&m)
    }
}

/// Recorded monitor values; unmonitored entries are NaN.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySummary {
    pub times: Vec<f64>,
    pub e_drift: Vec<f64>,
    pub q_drift: Vec<f64>,
    pub q1_drift: Vec<f64>,
    pub q2_drift: Vec<f64>,
    pub q3_drift: Vec<f64>,
    pub orbital_distance: Vec<f64>,
    pub blowup_flag: bool,
    #[serde(skip)]
    pub final_state: Option<StatePair>,
}

impl TrajectorySummary {
    fn empty() -> Self {
        Self {
            times: Vec::new(),
            e_drift: Vec::new(),
            q_drift: Vec::new(),
            q1_drift: Vec::new(),
            q2_drift: Vec::new(),
            q3_drift: Vec::new(),
            orbital_distance: Vec::new(),
            blowup_flag: false,
            final_state: None,
        }
    }

    fn max_of(v: &[f64]) -> f64 {
        v.iter()
            .copied()
            .filter(|x| x.is_finite())
            .fold(0.0, f64::max)
    }

    pub fn max_e_drift(&self) -> f64 {
        Self::max_of(&self.e_drift)
    }

    pub fn max_q_drift(&self) -> f64 {
        Self::max_of(&self.q_drift)
    }

    pub fn max_q1_drift(&self) -> f64 {
        Self::max_of(&self.q1_drift)
    }

    pub fn max_q2_drift(&self) -> f64 {
        Self::max_of(&self.q2_drift)
    }

    pub fn max_orbital_distance(&self) -> f64 {
        Self::max_of(&self.orbital_distance)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        use crate::csv::num;
        let rows = (0..self.times.len()).map(|i| {
            vec![
                num(self.times[i]),
                num(self.e_drift[i]),
                num(self.q_drift[i]),
                num(self.q1_drift[i]),
                num(self.q2_drift[i]),
                num(self.q3_drift[i]),
                num(self.orbital_distance[i]),
            ]
        });
        crate::csv::write_table(
            out,
            "t,E_drift,Q_drift,Q1_drift,Q2_drift,Q3_drift,orbital_distance",
            rows,
        )
    }
}

/// Per-mode coefficients of the linear group over one time span.
struct LinearGroup {
    cos: Vec<f64>,
    /// `sin(theta) / vartheta`
    sin_over: Vec<f64>,
    /// `vartheta sin(theta)`
    sin_times: Vec<f64>,
}

fn vartheta(xi: f64, beta: f64) -> f64 {
    let x2 = xi * xi;
    (1.0 - beta * x2 + x2 * x2).sqrt()
}

impl LinearGroup {
    fn new(grid: &Grid, beta: f64, t: f64) -> Self {
        let n = grid.n_points();
        let mut cos = Vec::with_capacity(n);
        let mut sin_over = Vec::with_capacity(n);
        let mut sin_times = Vec::with_capacity(n);
        for j in 0..n {
            let xi = grid.odd_wavenumber(j);
            let th = vartheta(xi, beta);
            let (s, c) = (t * xi * th).sin_cos();
            cos.push(c);
            sin_over.push(s / th);
            sin_times.push(th * s);
        }
        Self {
            cos,
            sin_over,
            sin_times,
        }
    }

    fn apply(&self, u: &mut [Complex64], v: &mut [Complex64]) {
        let i = Complex64::new(0.0, 1.0);
        for j in 0..u.len() {
            let (a, b) = (u[j], v[j]);
            u[j] = self.cos[j] * a + i * self.sin_over[j] * b;
            v[j] = i * self.sin_times[j] * a + self.cos[j] * b;
        }
    }
}

fn check_beta(beta: f64) -> Result<(), ModelError> {
    if beta < 2.0 {
        Ok(())
    } else {
        Err(ModelError::Domain(format!(
            "linear group needs beta < 2, got {beta}"
        )))
    }
}

/// Exact solution of the linearized system after time `t`.
pub fn linear_propagate(state: &StatePair, beta: f64, t: f64) -> Result<StatePair, ModelError> {
    check_beta(beta)?;
    let grid = state.grid();
    let group = LinearGroup::new(grid, beta, t);
    let mut u = state.u().spectrum();
    let mut v = state.v().spectrum();
    group.apply(&mut u, &mut v);
    Ok(StatePair::new(
        RealField::from_parts(grid.clone(), grid.inverse(&u)),
        RealField::from_parts(grid.clone(), grid.inverse(&v)),
    )
    .expect("same grid"))
}

/// `int u_xx^2 - beta u_x^2 + u^2 + v^2`, preserved by the linear group.
pub fn linear_energy(state: &StatePair, beta: f64) -> f64 {
    let grid = state.grid();
    let uh = state.u().spectrum();
    let vh = state.v().spectrum();
    let mut sum = 0.0;
    for j in 0..uh.len() {
        let xi = grid.wavenumbers()[j];
        let x2 = xi * xi;
        sum += (x2 * x2 - beta * x2 + 1.0) * uh[j].norm_sqr() + vh[j].norm_sqr();
    }
    sum * grid.spectral_measure()
}

struct Stepper {
    grid: Arc<Grid>,
    params: WaveParams,
    dealias: bool,
    h: f64,
    full: LinearGroup,
    half: LinearGroup,
    work: Vec<Complex64>,
    real: Vec<f64>,
}

type Spec = (Vec<Complex64>, Vec<Complex64>);

impl Stepper {
    /// Velocity component of the nonlinear term, `-(f(u))_x` in Fourier space.
    fn nonlinear(&mut self, u_hat: &[Complex64]) -> Vec<Complex64> {
        let grid = &self.grid;
        grid.inverse_into(u_hat, &mut self.work, &mut self.real);
        let nl = self.params.nonlinearity();
        let mut fh: Vec<Complex64> = self
            .real
            .iter()
            .map(|&u| Complex64::new(nl.f(u), 0.0))
            .collect();
        grid.forward_in_place(&mut fh);
        if self.dealias {
            grid.dealias(&mut fh);
        }
        for (j, s) in fh.iter_mut().enumerate() {
            *s *= Complex64::new(0.0, -grid.odd_wavenumber(j));
        }
        fh
    }

    fn step(&mut self, y: &mut Spec) {
        let h = self.h;
        let n = y.0.len();
        let zero = Complex64::new(0.0, 0.0);

        let k1 = self.nonlinear(&y.0);
        let mut a = (
            y.0.clone(),
            y.1.iter()
                .zip(&k1)
                .map(|(v, k)| v + 0.5 * h * k)
                .collect::<Vec<_>>(),
        );
        self.half.apply(&mut a.0, &mut a.1);
        let k2 = self.nonlinear(&a.0);

        // the nonlinear term has no displacement component, so the third
        // stage sees only the half-step linear flow of y
        let mut yh = y.clone();
        self.half.apply(&mut yh.0, &mut yh.1);
        let k3 = self.nonlinear(&yh.0);

        let mut sk3 = (vec![zero; n], k3.clone());
        self.half.apply(&mut sk3.0, &mut sk3.1);
        self.full.apply(&mut y.0, &mut y.1);
        let c: Vec<Complex64> = y.0.iter().zip(&sk3.0).map(|(s, k)| s + h * k).collect();
        let k4 = self.nonlinear(&c);

        let mut sk1 = (vec![zero; n], k1);
        self.full.apply(&mut sk1.0, &mut sk1.1);
        let mut sk23 = (
            vec![zero; n],
            k2.iter().zip(&k3).map(|(a, b)| a + b).collect::<Vec<_>>(),
        );
        self.half.apply(&mut sk23.0, &mut sk23.1);
        let w = h / 6.0;
        for (j, (u, v)) in y.0.iter_mut().zip(y.1.iter_mut()).enumerate() {
            *u += w * (sk1.0[j] + 2.0 * sk23.0[j]);
            *v += w * (sk1.1[j] + 2.0 * sk23.1[j] + k4[j]);
        }
    }

    /// `||u||_{H^2} + ||v||_{L^2}` from the spectra.
    fn x_norm(&self, y: &Spec) -> f64 {
        let m = self.grid.spectral_measure();
        let (mut hu, mut lv) = (0.0, 0.0);
        for j in 0..y.0.len() {
            let xi = self.grid.wavenumbers()[j];
            let w = 1.0 + xi * xi;
            hu += w * w * y.0[j].norm_sqr();
            lv += y.1[j].norm_sqr();
        }
        (hu * m).sqrt() + (lv * m).sqrt()
    }

    fn physical(&self, y: &Spec) -> StatePair {
        let g = &self.grid;
        StatePair::new(
            RealField::from_parts(g.clone(), g.inverse(&y.0)),
            RealField::from_parts(g.clone(), g.inverse(&y.1)),
        )
        .expect("same grid")
    }
}

fn rel_drift(x: f64, x0: f64) -> f64 {
    (x - x0).abs() / x0.abs().max(1.0)
}

struct Recorder<'a> {
    spec: &'a EvolveSpec,
    params: &'a WaveParams,
    reference: Option<&'a SolitaryWave>,
    base: crate::functionals::Conserved,
    summary: TrajectorySummary,
}

impl Recorder<'_> {
    fn record(&mut self, t: f64, state: &StatePair) {
        let cq = conserved_quantities(state, self.params);
        let pick = |m: Monitor, x: f64, x0: f64| {
            if self.spec.watches(m) {
                rel_drift(x, x0)
            } else {
                f64::NAN
            }
        };
        let s = &mut self.summary;
        s.times.push(t);
        s.e_drift
            .push(pick(Monitor::E, cq.energy, self.base.energy));
        s.q_drift
            .push(pick(Monitor::Q, cq.momentum, self.base.momentum));
        s.q1_drift
            .push(pick(Monitor::Q1, cq.mass_u, self.base.mass_u));
        s.q2_drift
            .push(pick(Monitor::Q2, cq.mass_v, self.base.mass_v));
        s.q3_drift.push(pick(Monitor::Q3, cq.q3, self.base.q3));
        let orbital = match self.reference {
            Some(w) if self.spec.watches(Monitor::Orbital) => orbital_distance(state, w)
                .map(|o| o.distance)
                .unwrap_or(f64::NAN),
            _ => f64::NAN,
        };
        s.orbital_distance.push(orbital);
    }
}

/// Advances `initial` to `spec.t_final`, recording the monitors every
/// `record_every` steps and at the final time.
pub fn evolve(
    initial: &StatePair,
    params: &WaveParams,
    spec: &EvolveSpec,
    reference: Option<&SolitaryWave>,
) -> Result<TrajectorySummary, EvolveError> {
    spec.validate()?;
    check_beta(params.beta)?;
    params.nonlinearity();
    if let Some(w) = reference {
        initial.u().check_same_grid(&w.profile)?;
    }
    let grid = initial.grid().clone();
    let steps = ((spec.t_final / spec.dt) - 1e-9).ceil().max(1.0) as usize;
    let h = spec.t_final / steps as f64;
    let mut stepper = Stepper {
        full: LinearGroup::new(&grid, params.beta, h),
        half: LinearGroup::new(&grid, params.beta, 0.5 * h),
        grid: grid.clone(),
        params: *params,
        dealias: spec.dealias,
        h,
        work: Vec::with_capacity(grid.n_points()),
        real: vec![0.0; grid.n_points()],
    };
    let mut y: Spec = (initial.u().spectrum(), initial.v().spectrum());
    let norm0 = stepper.x_norm(&y);
    let cap = 1e6 * norm0;

    let mut rec = Recorder {
        spec,
        params,
        reference,
        base: conserved_quantities(initial, params),
        summary: TrajectorySummary::empty(),
    };
    rec.record(0.0, initial);

    for step in 1..=steps {
        stepper.step(&mut y);
        let t = step as f64 * h;
        let norm = stepper.x_norm(&y);
        if !norm.is_finite() {
            return Err(EvolveError::NonFinite { time: t });
        }
        if norm > cap && norm > 0.0 {
            let mut summary = rec.summary;
            summary.blowup_flag = true;
            summary.final_state = Some(stepper.physical(&y));
            return Err(EvolveError::BlowupDetected {
                time: t,
                summary: Box::new(summary),
            });
        }
        if step % spec.record_every == 0 || step == steps {
            let state = stepper.physical(&y);
            rec.record(t, &state);
        }
    }
    let mut summary = rec.summary;
    summary.final_state = Some(stepper.physical(&y));
    Ok(summary)
}

/// Distance from a state to the orbit `{(tau_r phi, -c tau_r phi)}` and the minimizing `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitalDistance {
    pub distance: f64,
    pub best_shift: f64,
}

struct OrbitData {
    weights: Vec<f64>,
    xi: Vec<f64>,
    uh: Vec<Complex64>,
    vh: Vec<Complex64>,
    ph: Vec<Complex64>,
    c: f64,
    measure: f64,
}

impl OrbitData {
    /// `||u - tau_r phi||_{H^2} + ||v + c tau_r phi||_{L^2}`, summed term by term.
    fn distance(&self, r: f64) -> f64 {
        let (mut a, mut b) = (0.0, 0.0);
        for j in 0..self.xi.len() {
            let shifted = self.ph[j] * Complex64::from_polar(1.0, self.xi[j] * r);
            a += self.weights[j] * (self.uh[j] - shifted).norm_sqr();
            b += (self.vh[j] + self.c * shifted).norm_sqr();
        }
        (a * self.measure).sqrt() + (b * self.measure).sqrt()
    }
}

pub fn orbital_distance(
    state: &StatePair,
    wave: &SolitaryWave,
) -> Result<OrbitalDistance, GridError> {
    state.u().check_same_grid(&wave.profile)?;
    let grid = wave.grid();
    let n = grid.n_points();
    let nyq = grid.nyquist_index();
    let mut data = OrbitData {
        weights: grid
            .wavenumbers()
            .iter()
            .map(|xi| (1.0 + xi * xi).powi(2))
            .collect(),
        xi: (0..n).map(|j| grid.odd_wavenumber(j)).collect(),
        uh: state.u().spectrum(),
        vh: state.v().spectrum(),
        ph: wave.profile.spectrum(),
        c: wave.params.c,
        measure: grid.spectral_measure(),
    };
    for arr in [&mut data.uh, &mut data.vh, &mut data.ph] {
        arr[nyq] = Complex64::new(0.0, 0.0);
    }

    // correlations <u, tau_r phi>_{H^2} and <v, tau_r phi>_{L^2} at grid shifts
    let mut corr_h: Vec<Complex64> = (0..n)
        .map(|j| data.weights[j] * data.uh[j] * data.ph[j].conj())
        .collect();
    let mut corr_l: Vec<Complex64> = (0..n).map(|j| data.vh[j] * data.ph[j].conj()).collect();
    grid.forward_in_place(&mut corr_h);
    grid.forward_in_place(&mut corr_l);
    let norm = |w: &dyn Fn(usize) -> f64, a: &[Complex64]| -> f64 {
        a.iter()
            .enumerate()
            .map(|(j, z)| w(j) * z.norm_sqr())
            .sum::<f64>()
    };
    let uu = norm(&|j| data.weights[j], &data.uh);
    let pp_h = norm(&|j| data.weights[j], &data.ph);
    let vv = norm(&|_| 1.0, &data.vh);
    let pp_l = norm(&|_| 1.0, &data.ph);
    let c = data.c;
    let mut best = (f64::INFINITY, 0usize);
    for k in 0..n {
        let h = (uu + pp_h - 2.0 * corr_h[k].re).max(0.0).sqrt();
        let l = (vv + c * c * pp_l + 2.0 * c * corr_l[k].re).max(0.0).sqrt();
        if h + l < best.0 {
            best = (h + l, k);
        }
    }
    let dx = grid.dx();
    let k = best.1;
    let r0 = if k <= n / 2 {
        k as f64 * dx
    } else {
        (k as f64 - n as f64) * dx
    };

    // golden-section refinement on [r0 - dx, r0 + dx]
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (r0 - dx, r0 + dx);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = data.distance(x1);
    let mut f2 = data.distance(x2);
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = data.distance(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = data.distance(x2);
        }
        if hi - lo < 1e-14 * (1.0 + r0.abs()) {
            break;
        }
    }
    let candidates = [(f1, x1), (f2, x2), (data.distance(r0), r0)];
    let (distance, best_shift) =
        candidates.into_iter().fold(
            (f64::INFINITY, 0.0),
            |acc, c| if c.0 < acc.0 { c } else { acc },
        );
    Ok(OrbitalDistance {
        distance,
        best_shift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Scale,
    BandlimitedNoise,
    DirectionI,
}

impl FromStr for PerturbationKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scale" => Ok(Self::Scale),
            "bandlimited_noise" | "noise" => Ok(Self::BandlimitedNoise),
            "direction_i" => Ok(Self::DirectionI),
            other => Err(format!("unknown perturbation kind '{other}'")),
        }
    }
}

/// Highest wavenumber carried by the noise perturbation.
pub const NOISE_BAND: f64 = 2.0;

/// Smooth random field on the modes `0 < |xi| <= NOISE_BAND`.
fn band_noise(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> RealField {
    let modes: Vec<f64> = grid
        .wavenumbers()
        .iter()
        .copied()
        .filter(|&xi| xi > 0.0 && xi <= NOISE_BAND)
        .collect();
    let coeffs: Vec<(f64, f64)> = modes
        .iter()
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    RealField::from_fn(grid.clone(), |x| {
        modes
            .iter()
            .zip(&coeffs)
            .map(|(xi, (a, b))| a * (xi * x).cos() + b * (xi * x).sin())
            .sum()
    })
}

/// Perturbed traveling pair around `wave`.
///
/// * `Scale`: `(1 + delta)(phi, -c phi)`.
/// * `DirectionI`: `(phi, -c phi) + delta (phi, c phi)`.
/// * `BandlimitedNoise`: `(phi, -c phi) + delta ||(phi, -c phi)||_X (g1, g2)` with
///   `(g1, g2)` seeded noise normalized to unit `X`-norm.
pub fn make_perturbation(
    wave: &SolitaryWave,
    kind: PerturbationKind,
    delta: f64,
    seed: u64,
) -> StatePair {
    let phi = &wave.profile;
    let c = wave.params.c;
    let base = StatePair::traveling(phi, c);
    match kind {
        PerturbationKind::Scale => base.combine(1.0 + delta, &base, 0.0).expect("same grid"),
        PerturbationKind::DirectionI => {
            let dir = StatePair::new(phi.clone(), phi.scaled(c)).expect("same grid");
            base.combine(1.0, &dir, delta).expect("same grid")
        }
        PerturbationKind::BandlimitedNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g1 = band_noise(phi.grid(), &mut rng);
            let g2 = band_noise(phi.grid(), &mut rng);
            let size = discrete_norms(&g1).h2 + discrete_norms(&g2).l2;
            let noise = StatePair::new(g1, g2).expect("same grid");
            let amp = if size > 0.0 {
                delta * base.x_norm() / size
            } else {
                0.0
            };
            base.combine(1.0, &noise, amp).expect("same grid")
        }
    }
}

/// `X`-norm of the difference of two states.
pub fn x_distance(a: &StatePair, b: &StatePair) -> Result<f64, GridError> {
    Ok(a.combine(1.0, b, -1.0)?.x_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::model::Parity;
    use crate::petviashvili::exact_profile;

    fn smooth_state(grid: &Arc<Grid>) -> StatePair {
        StatePair::new(
            RealField::from_fn(grid.clone(), |x| {
                0.7 * (-x * x / 6.0).exp() + 0.2 * (-(x - 3.0).powi(2)).exp()
            }),
            RealField::from_fn(grid.clone(), |x| 0.3 * x * (-x * x / 5.0).exp()),
        )
        .unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn linear_group_properties() {
        let g = make_grid(30.0, 256).unwrap();
        let w = smooth_state(&g);
        let same = linear_propagate(&w, -0.5, 0.0).unwrap();
        assert!(x_distance(&same, &w).unwrap() < 1e-13);

        let a = linear_propagate(&linear_propagate(&w, -0.5, 0.7).unwrap(), -0.5, 1.1).unwrap();
        let b = linear_propagate(&w, -0.5, 1.8).unwrap();
        assert!(x_distance(&a, &b).unwrap() < 1e-12 * w.x_norm());

        let e0 = linear_energy(&w, 1.5);
        let e1 = linear_energy(&linear_propagate(&w, 1.5, 3.0).unwrap(), 1.5);
        assert!(rel(e1, e0) < 1e-12);

        let shifted = linear_propagate(&w.shifted(2.3), 0.4, 1.0).unwrap();
        let then = linear_propagate(&w, 0.4, 1.0).unwrap().shifted(2.3);
        assert!(x_distance(&shifted, &then).unwrap() < 1e-12 * w.x_norm());

        assert!(linear_propagate(&w, 2.0, 1.0).is_err());
    }

    #[test]
    fn spec_validation() {
        let bad = [
            EvolveSpec {
                dt: 0.0,
                ..Default::default()
            },
            EvolveSpec {
                t_final: 1e-4,
                ..Default::default()
            },
            EvolveSpec {
                record_every: 0,
                ..Default::default()
            },
        ];
        for spec in bad {
            assert!(matches!(spec.validate(), Err(EvolveError::Spec(_))));
        }
        assert!("E".parse::<Monitor>().is_ok());
        assert!("energy".parse::<Monitor>().is_err());
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = make_grid(20.0, 128).unwrap();
        let params = WaveParams::new(-1.0, 0.0, 2.0, Parity::Odd).unwrap();
        let spec = EvolveSpec {
            t_final: 0.1,
            dt: 1e-2,
            record_every: 2,
            ..Default::default()
        };
        let s = evolve(&StatePair::zeros(g.clone()), &params, &spec, None).unwrap();
        assert_eq!(s.times.len(), 6);
        for v in [
            &s.e_drift,
            &s.q_drift,
            &s.q1_drift,
            &s.q2_drift,
            &s.q3_drift,
        ] {
            assert!(v.iter().all(|&x| x == 0.0));
        }
        assert!(s.orbital_distance.iter().all(|x| x.is_nan()));
        assert_eq!(s.final_state.unwrap(), StatePair::zeros(g));
    }

    #[test]
    fn short_run_conserves() {
        let g = make_grid(40.0, 512).unwrap();
        let params = WaveParams::new(-1.0, 0.0, 3.0, Parity::Odd).unwrap();
        let spec = EvolveSpec {
            t_final: 1.0,
            dt: 1e-3,
            record_every: 100,
            ..Default::default()
        };
        let s = evolve(&smooth_state(&g), &params, &spec, None).unwrap();
        assert!(s.max_e_drift() < 1e-8);
        assert!(s.max_q_drift() < 1e-8);
        assert!(s.max_q1_drift() < 1e-12);
        assert!(s.max_q2_drift() < 1e-12);
        assert_eq!(s.times.len(), 11);
    }

    #[test]
    fn fourth_order_in_time() {
        let g = make_grid(30.0, 128).unwrap();
        // u^2 is smooth, unlike |u| u at sign changes
        let params = WaveParams::new(-1.0, 0.0, 2.0, Parity::Even).unwrap();
        let init = smooth_state(&g);
        let run = |dt: f64| {
            let spec = EvolveSpec {
                t_final: 1.0,
                dt,
                record_every: 1_000_000,
                monitors: vec![],
                ..Default::default()
            };
            evolve(&init, &params, &spec, None)
                .unwrap()
                .final_state
                .unwrap()
        };
        let reference = run(0.00625 / 4.0);
        let coarse = x_distance(&run(0.0125), &reference).unwrap();
        let fine = x_distance(&run(0.00625), &reference).unwrap();
        let ratio = coarse / fine;
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn orbit_member_has_zero_distance() {
        let g = make_grid(100.0, 1024).unwrap();
        let w = exact_profile(2, 0.3, &g).unwrap();
        let member = StatePair::traveling(&w.profile, 0.3).shifted(7.3);
        let od = orbital_distance(&member, &w).unwrap();
        assert!(od.distance <= 1e-10, "{od:?}");
        assert!((od.best_shift - 7.3).abs() < 1e-8);
    }

    #[test]
    fn perturbed_orbit_member() {
        let g = make_grid(100.0, 1024).unwrap();
        let w = exact_profile(3, 0.2, &g).unwrap();
        let noise = StatePair::new(
            RealField::from_fn(g.clone(), |x| 0.01 * (-(x + 4.0).powi(2) / 3.0).exp()),
            RealField::from_fn(g.clone(), |x| {
                0.02 * (0.3 * x).sin() * (-x * x / 50.0).exp()
            }),
        )
        .unwrap();
        let member = StatePair::traveling(&w.profile, 0.2).shifted(-12.6);
        let state = member.combine(1.0, &noise, 1.0).unwrap();
        let od = orbital_distance(&state, &w).unwrap();
        assert!(od.distance <= noise.x_norm());
        assert!((od.best_shift + 12.6).abs() < g.dx());
    }

    #[test]
    fn perturbation_kinds() {
        let g = make_grid(100.0, 1024).unwrap();
        let w = exact_profile(2, 0.5, &g).unwrap();
        let base = StatePair::traveling(&w.profile, 0.5);
        for kind in [
            PerturbationKind::Scale,
            PerturbationKind::DirectionI,
            PerturbationKind::BandlimitedNoise,
        ] {
            assert_eq!(make_perturbation(&w, kind, 0.0, 3), base);
        }
        let scaled = make_perturbation(&w, PerturbationKind::Scale, 1e-2, 0);
        let d = orbital_distance(&scaled, &w).unwrap().distance;
        let expect = 1e-2 * base.x_norm();
        assert!(d > 0.5 * expect && d < 2.0 * expect);

        let a = make_perturbation(&w, PerturbationKind::BandlimitedNoise, 1e-2, 42);
        let b = make_perturbation(&w, PerturbationKind::BandlimitedNoise, 1e-2, 42);
        let c = make_perturbation(&w, PerturbationKind::BandlimitedNoise, 1e-2, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let size = x_distance(&a, &base).unwrap();
        assert!(rel(size, 1e-2 * base.x_norm()) < 1e-12);
        assert_eq!("direction_i".parse(), Ok(PerturbationKind::DirectionI));
    }

    #[test]
    fn trajectory_csv_layout() {
        let g = make_grid(20.0, 128).unwrap();
        let params = WaveParams::new(-1.0, 0.0, 2.0, Parity::Odd).unwrap();
        let spec = EvolveSpec {
            t_final: 0.02,
            dt: 1e-2,
            record_every: 1,
            monitors: vec![Monitor::E],
            ..Default::default()
        };
        let s = evolve(&smooth_state(&g), &params, &spec, None).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "t,E_drift,Q_drift,Q1_drift,Q2_drift,Q3_drift,orbital_distance"
        );
        assert_eq!(lines.len(), 4);
        assert!(lines[2].ends_with(",,,,,"));
    }

    #[test]
    fn blowup_is_reported_with_partial_summary() {
        let g = make_grid(20.0, 256).unwrap();
        let params = WaveParams::new(-1.0, 0.0, 2.0, Parity::Even).unwrap();
        let big = StatePair::new(
            RealField::from_fn(g.clone(), |x| 6.0 * (-x * x).exp()),
            RealField::zeros(g.clone()),
        )
        .unwrap();
        let spec = EvolveSpec {
            t_final: 5.0,
            dt: 1e-3,
            record_every: 10,
            ..Default::default()
        };
        match evolve(&big, &params, &spec, None) {
            Err(EvolveError::BlowupDetected { summary, .. }) => assert!(summary.blowup_flag),
            Err(EvolveError::NonFinite { .. }) => {}
            other => panic!("expected blowup, got {:?}", other.map(|s| s.times.len())),
        }
    }
}
