//! Parameter domain, the homogeneous nonlinearity family and the closed-form
//! fundamental kernel of `phi'''' + beta phi'' + (1 - c^2) phi`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{self, QuadratureError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameters outside the subsonic domain: {0}")]
    Domain(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Selects `f(u) = |u|^{p-1} u` (odd) or `f(u) = |u|^p` (even).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Odd,
    Even,
}

impl std::str::FromStr for Parity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "odd" => Ok(Parity::Odd),
            "even" => Ok(Parity::Even),
            other => Err(format!("unknown parity '{other}' (expected odd|even)")),
        }
    }
}

impl std::fmt::Display for Parity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Parity::Odd => "odd",
            Parity::Even => "even",
        })
    }
}

/// `beta_* = 2 sqrt(1 - c^2)`.
pub fn beta_star(c: f64) -> f64 {
    2.0 * (1.0 - c * c).max(0.0).sqrt()
}

/// `c_* = sqrt(1 - beta_+^2 / 4)`.
pub fn c_star(beta: f64) -> f64 {
    let bp = beta.max(0.0);
    (1.0 - bp * bp / 4.0).max(0.0).sqrt()
}

/// True when `c^2 < 1` and `beta < beta_*(c)`.
pub fn in_domain(beta: f64, c: f64) -> bool {
    beta.is_finite() && c.is_finite() && c * c < 1.0 && beta < beta_star(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    pub beta: f64,
    pub c: f64,
    pub p: f64,
    pub parity: Parity,
}

impl WaveParams {
    pub fn new(beta: f64, c: f64, p: f64, parity: Parity) -> Result<Self, ModelError> {
        let params = Self { beta, c, p, parity };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(ModelError::Domain(format!("p = {} must exceed 1", self.p)));
        }
        if !(self.c * self.c < 1.0) {
            return Err(ModelError::Domain(format!("c = {} needs c^2 < 1", self.c)));
        }
        if !(self.beta < beta_star(self.c)) {
            return Err(ModelError::Domain(format!(
                "beta = {} must be below beta_* = {}",
                self.beta,
                beta_star(self.c)
            )));
        }
        Ok(())
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        Nonlinearity::new(self.p, self.parity)
    }

    pub fn with_c(&self, c: f64) -> Self {
        Self { c, ..*self }
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        Self { beta, ..*self }
    }
}

/// Which member of the `(f, f', F)` triple to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    F,
    FPrime,
    Antiderivative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// Set when `f'` is requested at `u = 0` with `p < 2`.
    pub non_smooth: bool,
}

/// Homogeneous nonlinearity of degree `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nonlinearity {
    pub p: f64,
    pub parity: Parity,
}

impl Nonlinearity {
    pub fn new(p: f64, parity: Parity) -> Self {
        Self { p, parity }
    }

    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        let a = u.abs().powf(self.p);
        match self.parity {
            Parity::Odd => a.copysign(u),
            Parity::Even => a,
        }
    }

    #[inline]
    pub fn f_prime(&self, u: f64) -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        let a = self.p * u.abs().powf(self.p - 1.0);
        match self.parity {
            Parity::Odd => a,
            Parity::Even => a.copysign(u),
        }
    }

    /// `F` with `F' = f`, `F(0) = 0`.
    #[inline]
    pub fn antiderivative(&self, u: f64) -> f64 {
        u * self.f(u) / (self.p + 1.0)
    }

    pub fn eval(&self, u: f64, which: Which) -> Evaluation {
        match which {
            Which::F => Evaluation {
                value: self.f(u),
                non_smooth: false,
            },
            Which::FPrime => Evaluation {
                value: self.f_prime(u),
                non_smooth: u == 0.0 && self.p < 2.0,
            },
            Which::Antiderivative => Evaluation {
                value: self.antiderivative(u),
                non_smooth: false,
            },
        }
    }

    pub fn eval_slice(&self, u: &[f64], which: Which) -> Vec<f64> {
        u.iter().map(|&x| self.eval(x, which).value).collect()
    }
}

pub fn nonlinearity_eval(u: f64, p: f64, parity: Parity, which: Which) -> Evaluation {
    Nonlinearity::new(p, parity).eval(u, which)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// `beta < -beta_*`: monotone tails with rates `lambda1 < lambda2`.
    TwoRealRates { lambda1: f64, lambda2: f64 },
    /// `beta = -beta_*`: repeated rate `sqrt(beta_* / 2)`.
    DoubleRate { rate: f64 },
    /// `|beta| < beta_*`: decay `sigma` with oscillation `omega`.
    OscillatoryRate { sigma: f64, omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionConstants {
    pub beta_star: f64,
    pub c_star: f64,
    pub regime: Regime,
}

/// Relative band around `beta = -beta_*` routed to the double-root formula.
const DOUBLE_ROOT_BAND: f64 = 1e-12;

pub fn dispersion_constants(beta: f64, c: f64) -> Result<DispersionConstants, ModelError> {
    if !in_domain(beta, c) {
        return Err(ModelError::Domain(format!("(beta, c) = ({beta}, {c})")));
    }
    let bs = beta_star(c);
    let regime = if (beta + bs).abs() <= DOUBLE_ROOT_BAND * bs {
        Regime::DoubleRate {
            rate: (bs / 2.0).sqrt(),
        }
    } else if beta < -bs {
        let disc = (beta * beta - bs * bs).sqrt();
        // lambda1^2 lambda2^2 = 1 - c^2; use the product for the small root.
        let l2sq = 0.5 * (-beta + disc);
        let l1sq = (1.0 - c * c) / l2sq;
        Regime::TwoRealRates {
            lambda1: l1sq.sqrt(),
            lambda2: l2sq.sqrt(),
        }
    } else {
        Regime::OscillatoryRate {
            sigma: 0.5 * (bs - beta).sqrt(),
            omega: 0.5 * (bs + beta).sqrt(),
        }
    };
    Ok(DispersionConstants {
        beta_star: bs,
        c_star: c_star(beta),
        regime,
    })
}

/// Closed-form kernel with `k_hat = 1 / (xi^4 - beta xi^2 + 1 - c^2)`.
pub fn kernel_eval(x: f64, beta: f64, c: f64) -> Result<f64, ModelError> {
    let dc = dispersion_constants(beta, c)?;
    let ax = x.abs();
    Ok(match dc.regime {
        Regime::TwoRealRates { lambda1, lambda2 } => {
            // (l2^2 - l1^2) = sqrt(beta^2 - beta_*^2), computed without cancellation.
            let gap = (beta * beta - dc.beta_star * dc.beta_star).sqrt();
            PI / gap * ((-lambda1 * ax).exp() / lambda1 - (-lambda2 * ax).exp() / lambda2)
        }
        Regime::DoubleRate { rate } => {
            PI * 2f64.sqrt() / dc.beta_star.powf(1.5) * (1.0 + rate * ax) * (-rate * ax).exp()
        }
        Regime::OscillatoryRate { sigma, omega } => {
            PI * (-sigma * ax).exp() / (2.0 * sigma * omega * (sigma * sigma + omega * omega))
                * (omega * (omega * x).cos() + sigma * (omega * ax).sin())
        }
    })
}

/// Target absolute bound on the truncated tail of the kernel integral.
const ORACLE_TAIL: f64 = 1e-12;

/// Independent quadrature of `2 int_0^Xi cos(xi x) / symbol(xi) dxi`.
pub fn kernel_oracle(x: f64, beta: f64, c: f64) -> Result<f64, ModelError> {
    if !in_domain(beta, c) {
        return Err(ModelError::Domain(format!("(beta, c) = ({beta}, {c})")));
    }
    let a = 1.0 - c * c;
    // For xi^2 >= 2 max(beta, 0) the symbol exceeds xi^4 / 2, so the doubled
    // tail beyond Xi is at most 4 / (3 Xi^3).
    let xi_cut = (4.0 / (3.0 * ORACLE_TAIL))
        .cbrt()
        .max((2.0 * beta.max(0.0)).sqrt());
    let integrand = |xi: f64| {
        let xi2 = xi * xi;
        (xi * x).cos() / (xi2 * xi2 - beta * xi2 + a)
    };
    // Panels short enough to hold a couple of oscillations each.
    let width = if x == 0.0 {
        4.0
    } else {
        (2.0 * PI / x.abs()).min(4.0)
    };
    let half = quadrature::integrate_panels(integrand, 0.0, xi_cut, width, 1e-15)?;
    Ok(2.0 * half)
}
