//! Numerical laboratory for solitary waves of the generalized sixth-order
//! Boussinesq equation
//!
//! ```text
//! u_tt = u_xx + beta u_xxxx + u_xxxxxx - (f(u))_xx,
//! ```
//!
//! written as the first-order system `u_t = v_x`, `v_t = (u + beta u_xx + u_xxxx - f(u))_x`.
//!
//! * [`grid`]: periodic grid, FFT helpers, spectral derivatives and norms.
//! * [`model`]: parameter domain, nonlinearities, decay constants and the kernel.
//! * [`petviashvili`]: ground-state profiles by the Petviashvili fixed-point iteration.
//! * [`functionals`]: conserved and variational functionals, the Hessian form.
//! * [`dsurface`]: the `d(beta, c)` surface, its derivatives and stability atlas.
//! * [`evolution`]: integrating-factor time stepping and orbital distance.

pub mod dsurface;
pub mod evolution;
pub mod functionals;
pub mod grid;
pub mod model;
pub mod petviashvili;
pub mod quadrature;

mod csv;

pub use grid::{make_grid, Grid, GridError, RealField, StatePair};
pub use model::{Parity, WaveParams};
pub use petviashvili::{SolitaryWave, SolveOptions};
