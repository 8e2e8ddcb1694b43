//! Discretized fractional critical-growth problems on truncated grids.
//!
//! The crate evaluates the energy
//! `f(u) = 1/2 [u]_s^2 - eps/(q+1) int h u_+^{q+1} - 1/2* int u_+^{2*}`
//! of `(-Delta)^s u = eps h u^q + u^{2*-1}` in `R^N`, locates its nonnegative
//! local minimum and a second (mountain-pass) critical point, and checks the
//! estimates that surround them numerically.

pub mod analysis;
pub mod energies;
pub mod error;
pub mod fft;
pub mod grid;
pub mod nonlocal;
pub mod profiles;
pub mod quad;
pub mod solvers;
pub mod zeta;

pub use error::{Error, Result};
pub use grid::{make_grid, sample_field, Field, Grid, GridSpec, Point};
pub use nonlocal::{
    bilinear_form, ds_squared, frac_laplacian, gagliardo_seminorm_sq, FracOperator, FracParams,
    SeminormMethod,
};
