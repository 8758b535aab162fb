//! The surface `d(beta, c) = E + cQ` on ground states and the stability data
//! derived from it.
//!
//! Along each semi-ellipse `beta = k sqrt(1 - c^2)` the surface obeys
//! `d(r beta, sqrt(1 - r^2 (1 - c^2))) = r^q d(beta, c)` with
//! `q = (3p + 5) / (2(p - 1))`, so values found on the segments
//! `S1 = {c = 0, -1 <= beta < 2}` and `S2 = {beta = -1, 0 <= c < 1}` can be
//! carried over the whole existence region.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functionals::{d_from_k, functional_k, profile_integrals};
use crate::grid::{make_grid, Grid, GridError};
use crate::model::{beta_star, c_star, in_domain, ModelError, Parity, WaveParams};
use crate::petviashvili::{solve_ground_state, SolveError, SolveOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error(transparent)]
    Domain(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("stencil c + {step} reaches the boundary c* = {c_star} from c = {c}")]
    StepTooLarge { c: f64, step: f64, c_star: f64 },
    #[error("scale factor {r} outside (0, {max}]")]
    ScaleOutOfRange { r: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Stable,
    Unstable,
    NoSolitaryWave,
    Indeterminate,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Stable => "Stable",
            Self::Unstable => "Unstable",
            Self::NoSolitaryWave => "NoSolitaryWave",
            Self::Indeterminate => "Indeterminate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    DirectSolve,
    ScalingTransport,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::DirectSolve => "DirectSolve",
            Self::ScalingTransport => "ScalingTransport",
        })
    }
}

/// Surface value and derivatives at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DPoint {
    pub beta: f64,
    pub c: f64,
    pub d: f64,
    pub d_c: f64,
    pub d_beta: f64,
    pub d_cc: Option<f64>,
    /// Second `beta` derivative, kept for transport; not part of the CSV.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub d_bb: Option<f64>,
    pub classification: Classification,
    pub provenance: Provenance,
}

/// Numerical settings shared by every solve behind the surface.
#[derive(Debug, Clone)]
pub struct SurfaceOptions {
    pub grid: Arc<Grid>,
    pub solve: SolveOptions,
}

impl SurfaceOptions {
    pub fn new(half_length: f64, n_points: usize) -> Result<Self, GridError> {
        Ok(Self {
            grid: make_grid(half_length, n_points)?,
            solve: SolveOptions::default(),
        })
    }
}

/// `q = (3p + 5) / (2(p - 1))`.
pub fn scaling_exponent(p: f64) -> f64 {
    (3.0 * p + 5.0) / (2.0 * (p - 1.0))
}

fn s_of(c: f64) -> f64 {
    (1.0 - c * c).max(0.0).sqrt()
}

/// `h_c = min(1e-2, 0.05 (c* - c))`.
pub fn c_step(beta: f64, c: f64) -> f64 {
    (0.05 * (c_star(beta) - c.abs())).min(1e-2)
}

/// `h_beta = min(1e-2, 0.05 (beta* - beta))`.
pub fn beta_step(beta: f64, c: f64) -> f64 {
    (0.05 * (beta_star(c) - beta)).min(1e-2)
}

fn direct_point(
    beta: f64,
    c: f64,
    p: f64,
    parity: Parity,
    opts: &SurfaceOptions,
) -> Result<DPoint, SurfaceError> {
    let params = WaveParams::new(beta, c, p, parity)?;
    let wave = solve_ground_state(&params, &opts.grid, &opts.solve)?;
    let (s0, s1, _) = profile_integrals(&wave.profile);
    let k = functional_k(&wave.profile, p, parity);
    Ok(DPoint {
        beta,
        c,
        d: d_from_k(k, p),
        d_c: -c * s0,
        d_beta: -0.5 * s1,
        d_cc: None,
        d_bb: None,
        classification: Classification::Indeterminate,
        provenance: Provenance::DirectSolve,
    })
}

/// Point on `S1` or `S2` whose semi-ellipse passes through `(beta, c)`.
pub fn ellipse_anchor(beta: f64, c: f64) -> (f64, f64) {
    let k = beta / s_of(c);
    if k >= -1.0 {
        (k, 0.0)
    } else {
        let s0 = -1.0 / k;
        (-1.0, s_of(s0))
    }
}

/// `d`, `d_c = -c int phi^2` and `d_beta = -int phi'^2 / 2` at one point.
///
/// Points with `|c| > 0.9 c*` are transported from the anchor of their
/// semi-ellipse instead of solved directly.
pub fn d_point(
    beta: f64,
    c: f64,
    p: f64,
    parity: Parity,
    opts: &SurfaceOptions,
) -> Result<DPoint, SurfaceError> {
    if !in_domain(beta, c) {
        WaveParams::new(beta, c, p, parity)?;
    }
    let (ab, ac) = ellipse_anchor(beta, c.abs());
    let anchored = (ab - beta).abs() < 1e-14 && (ac - c.abs()).abs() < 1e-14;
    if c.abs() > 0.9 * c_star(beta) && !anchored {
        let anchor = direct_point(ab, ac, p, parity, opts)?;
        let r = s_of(c) / s_of(ac);
        let mut out = scaling_transport(&anchor, r, p)?;
        out.beta = beta;
        out.c = c;
        if c < 0.0 {
            out.d_c = -out.d_c;
        }
        out.d_cc = None;
        out.classification = Classification::Indeterminate;
        return Ok(out);
    }
    direct_point(beta, c, p, parity, opts)
}

/// Central difference of the exact `d_c` in `c` with step `step`.
pub fn d_cc(
    beta: f64,
    c: f64,
    p: f64,
    parity: Parity,
    step: f64,
    opts: &SurfaceOptions,
) -> Result<f64, SurfaceError> {
    WaveParams::new(beta, c, p, parity)?;
    let cs = c_star(beta);
    if !(step > 0.0) || c.abs() + step >= cs {
        return Err(SurfaceError::StepTooLarge {
            c,
            step,
            c_star: cs,
        });
    }
    let plus = d_point(beta, c + step, p, parity, opts)?;
    let minus = d_point(beta, c - step, p, parity, opts)?;
    Ok((plus.d_c - minus.d_c) / (2.0 * step))
}

/// Central difference of the exact `d_beta` in `beta`.
pub fn d_bb(
    beta: f64,
    c: f64,
    p: f64,
    parity: Parity,
    step: f64,
    opts: &SurfaceOptions,
) -> Result<f64, SurfaceError> {
    let bs = beta_star(c);
    if !(step > 0.0) || beta + step >= bs {
        return Err(SurfaceError::StepTooLarge {
            c: beta,
            step,
            c_star: bs,
        });
    }
    let plus = d_point(beta + step, c, p, parity, opts)?;
    let minus = d_point(beta - step, c, p, parity, opts)?;
    Ok((plus.d_beta - minus.d_beta) / (2.0 * step))
}

/// `d_point` plus `d_cc` (and `d_bb` when `with_bb`) and the classification.
pub fn full_point(
    beta: f64,
    c: f64,
    p: f64,
    parity: Parity,
    with_bb: bool,
    opts: &SurfaceOptions,
) -> Result<DPoint, SurfaceError> {
    let mut pt = d_point(beta, c, p, parity, opts)?;
    pt.d_cc = Some(d_cc(beta, c, p, parity, c_step(beta, c), opts)?);
    if with_bb {
        pt.d_bb = Some(d_bb(beta, c, p, parity, beta_step(beta, c), opts)?);
    }
    pt.classification = classify_point(
        beta,
        c,
        p,
        parity,
        Some(Curvature {
            d: pt.d,
            d_cc: pt.d_cc.unwrap(),
        }),
    );
    Ok(pt)
}

/// `d_cc` at `(beta, c)` from data at `c = 0` on the same semi-ellipse,
/// given as `(beta0, g, g', g'')` with `g = d(beta0, 0)` and derivatives in `beta`.
pub fn d_cc_from_axis(c: f64, q: f64, beta0: f64, g: f64, g1: f64, g2: f64) -> f64 {
    let s = s_of(c);
    let bracket = c * c * (q * (q - 1.0) * g - 2.0 * (q - 1.0) * beta0 * g1 + beta0 * beta0 * g2)
        + (beta0 * g1 - q * g);
    s.powf(q - 4.0) * bracket
}

/// `d_cc` at speed `c` from `d_c`, `d_cc` at speed `c0 != 0` on the same semi-ellipse.
pub fn d_cc_from_speed(c: f64, q: f64, c0: f64, d_c0: f64, d_cc0: f64) -> f64 {
    let rho = s_of(c0) / s_of(c);
    rho.powf(2.0 - q) / (c0.powi(3) * (1.0 - c * c))
        * ((1.0 - c0 * c0) * c0 * c * c * d_cc0 + (c0 * c0 - c * c) * d_c0)
}

/// Moves a point along its semi-ellipse: `(beta, c) -> (r beta, sqrt(1 - r^2 (1 - c^2)))`.
pub fn scaling_transport(point: &DPoint, r: f64, p: f64) -> Result<DPoint, SurfaceError> {
    let s = s_of(point.c);
    let max = 1.0 / s;
    if !(r > 0.0) || r > max * (1.0 + 1e-12) {
        return Err(SurfaceError::ScaleOutOfRange { r, max });
    }
    let q = scaling_exponent(p);
    let s_new = (r * s).min(1.0);
    let c_mag = s_of(s_new);
    let c_new = if point.c < 0.0 { -c_mag } else { c_mag };
    let beta = r * point.beta;
    let d = r.powf(q) * point.d;
    let d_beta = r.powf(q - 1.0) * point.d_beta;
    let d_c = -(c_new / (s_new * s_new)) * (q * d - beta * d_beta);
    let d_bb = point.d_bb.map(|v| r.powf(q - 2.0) * v);
    let d_cc = match (point.d_bb, point.d_cc) {
        (Some(bb), _) => {
            let beta0 = point.beta / s;
            let g = point.d / s.powf(q);
            let g1 = point.d_beta / s.powf(q - 1.0);
            let g2 = bb / s.powf(q - 2.0);
            Some(d_cc_from_axis(c_new, q, beta0, g, g1, g2))
        }
        (None, Some(cc)) if point.c != 0.0 => {
            let c0 = point.c.abs();
            let dc0 = point.d_c * point.c.signum();
            Some(d_cc_from_speed(c_mag, q, c0, dc0, cc))
        }
        _ => None,
    };
    let classification = match d_cc {
        Some(v) => classify_inside(beta, c_new, p, Some(Curvature { d, d_cc: v })),
        None => classify_inside(beta, c_new, p, None),
    };
    Ok(DPoint {
        beta,
        c: c_new,
        d,
        d_c,
        d_beta,
        d_cc,
        d_bb,
        classification,
        provenance: Provenance::ScalingTransport,
    })
}

/// Axis data for the sign-change formula on the semi-ellipse through `(beta0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisData {
    pub d: f64,
    pub d_beta: f64,
    pub d_bb: f64,
}

/// `P = (2 gamma d - beta0 d_beta) / (2 gamma (2 gamma - 1) d - 2 (2 gamma - 1) beta0 d_beta + beta0^2 d_bb)`.
pub fn sign_change_fraction(beta0: f64, p: f64, data: &AxisData) -> f64 {
    let q = scaling_exponent(p);
    let num = q * data.d - beta0 * data.d_beta;
    let den =
        q * (q - 1.0) * data.d - 2.0 * (q - 1.0) * beta0 * data.d_beta + beta0 * beta0 * data.d_bb;
    num / den
}

/// Speed of the `d_cc` sign change on the semi-ellipse through `(beta0, 0)`,
/// `sqrt(P)` when `0 < P < 1`.
pub fn sign_change_location(beta0: f64, p: f64, data: &AxisData) -> Option<f64> {
    let frac = sign_change_fraction(beta0, p, data);
    (frac > 0.0 && frac < 1.0).then(|| frac.sqrt())
}

/// The same location from data at a speed `c0 != 0`:
/// `P = c0^2 d_c / ((c0^2 - 1) c0 d_cc + d_c)`.
pub fn sign_change_fraction_from_speed(c0: f64, d_c: f64, d_cc: f64) -> f64 {
    c0 * c0 * d_c / ((c0 * c0 - 1.0) * c0 * d_cc + d_c)
}

pub fn sign_change_location_from_speed(c0: f64, d_c: f64, d_cc: f64) -> Option<f64> {
    let frac = sign_change_fraction_from_speed(c0, d_c, d_cc);
    (frac > 0.0 && frac < 1.0).then(|| frac.sqrt())
}

/// `d` and `d_cc` fed to the classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature {
    pub d: f64,
    pub d_cc: f64,
}

/// Instability by either analytic criterion at a point of the domain.
pub fn analytic_instability(beta: f64, c: f64, p: f64) -> bool {
    let cs = c_star(beta);
    let first = c * c < (p - 1.0) / (p + 3.0) * cs * cs;
    let second =
        p >= 9.0 && beta < (p - 1.0) * (p - 9.0) / ((p - 1.0).powi(2) + 16.0) * beta_star(c);
    first || second
}

/// Whether solitary waves are ruled out at `c^2 >= 1`.
pub fn no_solitary_wave(beta: f64, c: f64, p: f64, parity: Parity) -> bool {
    let c2 = c * c;
    if c2 < 1.0 {
        return false;
    }
    let bound = 2.0 * ((3.0 * p + 5.0) * (p - 1.0) * (c2 - 1.0)).sqrt() / (p + 3.0);
    beta < bound || (parity == Parity::Odd && beta >= 0.0)
}

fn classify_inside(beta: f64, c: f64, p: f64, curvature: Option<Curvature>) -> Classification {
    if analytic_instability(beta, c, p) {
        return Classification::Unstable;
    }
    let Some(cv) = curvature else {
        return Classification::Indeterminate;
    };
    let gap = c_star(beta) - c.abs();
    let tol = 1e-4 * cv.d / (gap * gap);
    if cv.d_cc > tol {
        Classification::Stable
    } else if cv.d_cc < -tol {
        Classification::Unstable
    } else {
        Classification::Indeterminate
    }
}

/// Stability verdict from the analytic criteria and the sign of `d_cc`.
pub fn classify_point(
    beta: f64,
    c: f64,
    p: f64,
    parity: Parity,
    curvature: Option<Curvature>,
) -> Classification {
    if c * c >= 1.0 {
        return if no_solitary_wave(beta, c, p, parity) {
            Classification::NoSolitaryWave
        } else {
            Classification::Indeterminate
        };
    }
    if !in_domain(beta, c) {
        return Classification::Indeterminate;
    }
    classify_inside(beta, c, p, curvature)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Segment {
    S1,
    S2,
    CustomEllipse(f64),
}

impl FromStr for Segment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S1" | "s1" => Ok(Self::S1),
            "S2" | "s2" => Ok(Self::S2),
            other => other
                .strip_prefix("ellipse:")
                .and_then(|k| k.parse().ok())
                .map(Self::CustomEllipse)
                .ok_or_else(|| format!("unknown segment '{other}' (S1, S2 or ellipse:<k>)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub segment: Segment,
    pub samples: usize,
    pub p: f64,
    pub parity: Parity,
    pub options: SurfaceOptions,
    /// Also compute `d_cc` and classify each point.
    pub with_curvature: bool,
}

/// Evenly spaced parameter points of a segment, upper end excluded.
pub fn segment_points(segment: Segment, samples: usize) -> Vec<(f64, f64)> {
    let n = samples as f64;
    (0..samples)
        .map(|i| {
            let t = i as f64 / n;
            match segment {
                Segment::S1 => (-1.0 + 3.0 * t, 0.0),
                Segment::S2 => (-1.0, t),
                Segment::CustomEllipse(k) => (k * s_of(t), t),
            }
        })
        .collect()
}

/// One sweep row: the requested point and its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub beta: f64,
    pub c: f64,
    pub outcome: Result<DPoint, SurfaceError>,
}

/// Evaluates the surface along a segment in parallel; rows keep parameter order.
pub fn sweep_segment(spec: &SweepSpec) -> Vec<SweepRow> {
    segment_points(spec.segment, spec.samples)
        .into_par_iter()
        .map(|(beta, c)| {
            let outcome = if spec.with_curvature {
                full_point(beta, c, spec.p, spec.parity, false, &spec.options)
            } else {
                d_point(beta, c, spec.p, spec.parity, &spec.options)
            };
            SweepRow { beta, c, outcome }
        })
        .collect()
}

pub const SURFACE_HEADER: &str = "beta,c,d,d_c,d_beta,d_cc,classification,provenance";

fn point_row(pt: &DPoint) -> Vec<String> {
    use crate::csv::{num, opt};
    vec![
        num(pt.beta),
        num(pt.c),
        num(pt.d),
        num(pt.d_c),
        num(pt.d_beta),
        opt(pt.d_cc),
        pt.classification.to_string(),
        pt.provenance.to_string(),
    ]
}

fn failed_row(beta: f64, c: f64) -> Vec<String> {
    use crate::csv::num;
    vec![
        num(beta),
        num(c),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        Classification::Indeterminate.to_string(),
        Provenance::DirectSolve.to_string(),
    ]
}

/// Sweep table; failed points keep their coordinates with empty values.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: &mut W) -> io::Result<()> {
    crate::csv::write_table(
        out,
        SURFACE_HEADER,
        rows.iter().map(|r| match &r.outcome {
            Ok(pt) => point_row(pt),
            Err(_) => failed_row(r.beta, r.c),
        }),
    )
}

pub fn write_points_csv<W: Write>(points: &[DPoint], out: &mut W) -> io::Result<()> {
    crate::csv::write_table(out, SURFACE_HEADER, points.iter().map(point_row))
}

pub fn write_crossings_csv<W: Write>(crossings: &[(f64, f64)], out: &mut W) -> io::Result<()> {
    use crate::csv::num;
    crate::csv::write_table(
        out,
        "beta,c",
        crossings.iter().map(|(b, c)| vec![num(*b), num(*c)]),
    )
}

/// Signed samples over the domain and the `d_cc = 0` curve.
#[derive(Debug, Clone, Default)]
pub struct Atlas {
    pub points: Vec<DPoint>,
    pub crossings: Vec<(f64, f64)>,
    /// Anchors that could not be evaluated, with the reason.
    pub failures: Vec<(f64, f64, String)>,
}

impl Atlas {
    pub fn count(&self, class: Classification) -> usize {
        self.points
            .iter()
            .filter(|p| p.classification == class)
            .count()
    }
}

/// Anchors used by the atlas: `S1` points (with `d_bb`) then `S2` points (with `d_cc`).
pub fn atlas_anchors(resolution: usize) -> Vec<(f64, f64)> {
    let mut out = segment_points(Segment::S1, resolution);
    out.extend(segment_points(Segment::S2, resolution).into_iter().skip(1));
    out
}

/// Speeds sampled along each semi-ellipse, clustered toward `c = 1`.
pub fn ellipse_speeds(resolution: usize) -> Vec<f64> {
    (0..resolution)
        .map(|i| (std::f64::consts::FRAC_PI_2 * i as f64 / resolution as f64).sin())
        .collect()
}

/// Evaluates the anchors on `S1 u S2` and transports them along their
/// semi-ellipses to build the signed `d_cc` picture of the domain.
pub fn nodal_atlas(p: f64, parity: Parity, resolution: usize, opts: &SurfaceOptions) -> Atlas {
    let resolution = resolution.max(8);
    let anchors: Vec<_> = atlas_anchors(resolution)
        .into_par_iter()
        .map(|(beta, c)| {
            let res = if c == 0.0 {
                full_point(beta, c, p, parity, true, opts)
            } else {
                full_point(beta, c, p, parity, false, opts)
            };
            (beta, c, res)
        })
        .collect();

    let speeds = ellipse_speeds(resolution);
    let mut atlas = Atlas::default();
    for (beta, c, res) in anchors {
        let anchor = match res {
            Ok(a) => a,
            Err(e) => {
                atlas.failures.push((beta, c, e.to_string()));
                continue;
            }
        };
        let s0 = s_of(c);
        let k = beta / s0;
        for &target in &speeds {
            let r = s_of(target) / s0;
            if let Ok(pt) = scaling_transport(&anchor, r, p) {
                atlas.points.push(pt);
            }
        }
        let crossing = match anchor.d_bb {
            Some(bb) => sign_change_location(
                beta,
                p,
                &AxisData {
                    d: anchor.d,
                    d_beta: anchor.d_beta,
                    d_bb: bb,
                },
            ),
            None => sign_change_location_from_speed(c, anchor.d_c, anchor.d_cc.unwrap_or(f64::NAN)),
        };
        if let Some(cz) = crossing {
            atlas.crossings.push((k * s_of(cz), cz));
        }
    }
    atlas
}
