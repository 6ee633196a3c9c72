//! Optimal information transport on the flat torus.
//!
//! Diffeomorphic density matching built on the Fisher–Rao geometry of
//! densities: the square-root map sends densities of mass `vol(M)` onto a
//! sphere, so geodesics and distances are explicit, and horizontal lifting
//! turns a geodesic of densities into a curve of diffeomorphisms by solving
//! one Poisson equation per time step.
//!
//! | Module | What it provides |
//! |--------|------------------|
//! | [`grid`] | periodic grid, scalar/vector fields, densities, quadrature |
//! | [`spectral`] | FFT gradient, divergence, Laplacian, Poisson and inertia operators |
//! | [`geometry`] | square-root map, Fisher–Rao geodesics and distances, auxiliary divergences |
//! | [`warp`] | discrete diffeomorphisms: composition, pullback, Jacobians |
//! | [`lifting`] | horizontal lifting, exact and inexact compatible matching |
//! | [`flow`] | gradient flow for inexact matching with the divergence metric |
//! | [`compat`] | conformal and flat compatible metrics, symmetric matching |
//! | [`sampling`] | transport-based random sampling and a χ² checker |
//! | [`oracle1d`] | independent one-dimensional transport oracle |
//! | [`io`], [`cli`] | file formats, rendering and the job runner behind the `oitk` binary |
//!
//! ```no_run
//! use oitk::{grid::{Grid, ScalarField, normalize_density}, lifting::solve_oit, spectral::SpectralPlan};
//!
//! let grid = Grid::torus(256)?;
//! let plan = SpectralPlan::new(grid);
//! let raw = ScalarField::from_fn(grid, |x, y| 1.0 - 0.8 * x.cos() * (2.0 * y).cos());
//! let target = normalize_density(&raw, true)?;
//! let lift = solve_oit(&plan, &target, 20)?;
//! println!("matching residual {:.3e}", lift.residual);
//! # Ok::<(), oitk::OitError>(())
//! ```

// NaN must fail range checks, so they are written as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod compat;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod glyphs;
pub mod grid;
pub mod interp;
pub mod io;
pub mod lifting;
pub mod oracle1d;
pub mod sampling;
pub mod spectral;
pub mod warp;

pub use error::{OitError, Result};
pub use grid::{integrate, normalize_density, Density, Grid, ScalarField, VectorField};
pub use spectral::{InertiaConfig, SpectralPlan};
pub use warp::Warp;
