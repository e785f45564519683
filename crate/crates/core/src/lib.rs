//! Preconditioned primal-dual hybrid gradient (G-prox PDHG) solvers on
//! uniform grids over the unit square.
//!
//! The primal step of G-prox PDHG is taken in the metric `‖K·‖` instead of
//! the plain L² metric. For `K = grad` that amounts to inverting a shifted
//! Laplacian, which the cosine transform does exactly, and the stability
//! condition becomes `τσ < 1` regardless of grid resolution.
//!
//! Modules:
//!
//! - [`field`]: grid fields, gradient/divergence, norms, rasterizers.
//! - [`spectral`]: Helmholtz and Poisson inverses and the Leray projection.
//! - [`saddle`]: the generic solver loops (G-prox PDHG, PDHG, accelerated PDHG).
//! - [`rof`]: total-variation denoising.
//! - [`emd`]: L¹ earth mover's distance in flux form.
//! - [`bench`]: ground truths, grid sweeps and report emission.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod emd;
pub mod field;
pub mod rof;
pub mod saddle;
pub mod spectral;

pub use field::{GridFunction, GridSpec, ScalarField, VectorField};
pub use spectral::SpectralPlan;
