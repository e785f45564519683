//! Cosine-basis calculus for the discrete Neumann Laplacian.
//!
//! Extending a pixel-centred field evenly across every boundary (half-sample
//! symmetry) turns the five-point Neumann Laplacian `div ∘ grad` into a
//! circulant operator whose eigenvectors are the products of cosines
//!
//! ```text
//! φ_k(i, j) = cos(π k₁ (i + ½) / M) · cos(π k₂ (j + ½) / M)
//! ```
//!
//! with eigenvalues `-λ(k)` where
//!
//! ```text
//! λ(k₁, k₂) = (2 - 2 cos(π k₁ / M)) / h² + (2 - 2 cos(π k₂ / M)) / h².
//! ```
//!
//! A DCT-II maps samples to these coefficients and a DCT-III maps back, so
//! `(a Id - Δ)⁻¹`, the zero-mean Poisson inverse and the Leray projection are
//! all exact up to roundoff.
//!
//! A [`SpectralPlan`] is `Send + Sync`: the transforms are immutable and each
//! call allocates its own scratch buffers, so one plan can be shared between
//! threads without locking.

use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};
use thiserror::Error;

use crate::field::{div, grad, GridFunction, GridSpec, ScalarField, VectorField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("Helmholtz shift must be positive, got {0}")]
    NonPositiveShift(f64),
    #[error("Poisson right-hand side has nonzero integral {0:e}; Neumann problem is incompatible")]
    IncompatibleRhs(f64),
    #[error("grid mismatch: plan has {plan} points per side, field has {field}")]
    SpecMismatch { plan: usize, field: usize },
}

/// Mean tolerance for Neumann Poisson right-hand sides, relative to
/// `max(1, ‖rhs‖_{L¹})`.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

#[derive(Clone)]
pub struct SpectralPlan {
    spec: GridSpec,
    eigenvalues: Arc<Vec<f64>>,
    dct: Arc<dyn TransformType2And3<f64>>,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan")
            .field("side", &self.spec.side())
            .finish_non_exhaustive()
    }
}

/// 1-D symbol `(2 - 2 cos(π k / M)) / h²` of the second difference.
fn symbol(k: usize, m: usize) -> f64 {
    let h = 1.0 / m as f64;
    (2.0 - 2.0 * (std::f64::consts::PI * k as f64 / m as f64).cos()) / (h * h)
}

pub fn make_plan(spec: GridSpec) -> SpectralPlan {
    SpectralPlan::new(spec)
}

impl SpectralPlan {
    pub fn new(spec: GridSpec) -> Self {
        let m = spec.side();
        let sym: Vec<f64> = (0..m).map(|k| symbol(k, m)).collect();
        let mut eigenvalues = Vec::with_capacity(spec.len());
        for k2 in 0..m {
            for k1 in 0..m {
                eigenvalues.push(sym[k1] + sym[k2]);
            }
        }
        // exact zero for the constant mode
        eigenvalues[0] = 0.0;
        let dct = DctPlanner::new().plan_dct2(m);
        Self {
            spec,
            eigenvalues: Arc::new(eigenvalues),
            dct,
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    /// Spectrum of `-Δ`, indexed `k₂ * M + k₁`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, k1: usize, k2: usize) -> f64 {
        self.eigenvalues[k2 * self.spec.side() + k1]
    }

    /// Largest eigenvalue of `-Δ`, i.e. the operator norm `‖Δ_M‖ = ‖grad‖²`.
    pub fn max_eigenvalue(&self) -> f64 {
        let m = self.spec.side();
        2.0 * symbol(m - 1, m)
    }

    fn check(&self, spec: GridSpec) -> Result<(), SpectralError> {
        if spec != self.spec {
            return Err(SpectralError::SpecMismatch {
                plan: self.spec.side(),
                field: spec.side(),
            });
        }
        Ok(())
    }

    /// Cosine coefficients of `u` (DCT-II along both axes, unnormalized).
    ///
    /// Coefficient `(k₁, k₂)` is stored at `k₂ * M + k₁`.
    pub fn forward(&self, u: &ScalarField) -> Vec<f64> {
        assert_eq!(u.spec(), self.spec, "grid mismatch");
        let mut data = u.values().to_vec();
        self.transform(&mut data, false);
        data
    }

    /// Inverse of [`Self::forward`].
    pub fn inverse(&self, coeffs: &[f64]) -> ScalarField {
        assert_eq!(coeffs.len(), self.spec.len(), "coefficient length mismatch");
        let mut data = coeffs.to_vec();
        self.transform(&mut data, true);
        let m = self.spec.side() as f64;
        let scale = 4.0 / (m * m);
        for v in data.iter_mut() {
            *v *= scale;
        }
        ScalarField::from_values(self.spec, data).expect("length checked")
    }

    /// Separable 2-D transform: 1-D pass along rows, transpose, pass along
    /// rows again, transpose back.
    fn transform(&self, data: &mut [f64], inverse: bool) {
        let m = self.spec.side();
        let mut scratch = vec![0.0; self.dct.get_scratch_len()];
        let mut tmp = vec![0.0; data.len()];
        for _ in 0..2 {
            for row in data.chunks_exact_mut(m) {
                if inverse {
                    self.dct.process_dct3_with_scratch(row, &mut scratch);
                } else {
                    self.dct.process_dct2_with_scratch(row, &mut scratch);
                }
            }
            transpose(data, &mut tmp, m);
            data.copy_from_slice(&tmp);
        }
    }

    /// Applies the Fourier multiplier `g(λ(k))` to `u`.
    fn apply_multiplier(&self, u: &ScalarField, g: impl Fn(f64) -> f64) -> ScalarField {
        let mut coeffs = self.forward(u);
        for (c, &lam) in coeffs.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= g(lam);
        }
        self.inverse(&coeffs)
    }

    /// Solves `(a Id - Δ) w = rhs` exactly in the cosine basis.
    pub fn solve_helmholtz(&self, a: f64, rhs: &ScalarField) -> Result<ScalarField, SpectralError> {
        if !(a > 0.0) {
            return Err(SpectralError::NonPositiveShift(a));
        }
        self.check(rhs.spec())?;
        Ok(self.apply_multiplier(rhs, |lam| 1.0 / (a + lam)))
    }

    /// Zero-mean solution of `Δ ψ = rhs` with homogeneous Neumann data.
    pub fn solve_poisson_neumann(&self, rhs: &ScalarField) -> Result<ScalarField, SpectralError> {
        self.check(rhs.spec())?;
        let mean = rhs.integral();
        if mean.abs() > COMPATIBILITY_TOL * rhs.norm_l1().max(1.0) {
            return Err(SpectralError::IncompatibleRhs(mean));
        }
        Ok(self.poisson_unchecked(rhs))
    }

    /// Poisson inverse that silently drops the mean of `rhs`.
    fn poisson_unchecked(&self, rhs: &ScalarField) -> ScalarField {
        self.apply_multiplier(rhs, |lam| if lam > 0.0 { -1.0 / lam } else { 0.0 })
    }

    /// Orthogonal projection onto discretely divergence-free fields,
    /// `p - grad Δ⁻¹ div p`.
    pub fn leray_project(&self, p: &VectorField) -> VectorField {
        assert_eq!(p.spec(), self.spec, "grid mismatch");
        // div p integrates to zero exactly in exact arithmetic
        let phi = self.poisson_unchecked(&div(p));
        let mut q = p.clone();
        q.axpby(1.0, &grad(&phi), -1.0);
        q
    }
}

pub fn solve_helmholtz(
    plan: &SpectralPlan,
    a: f64,
    rhs: &ScalarField,
) -> Result<ScalarField, SpectralError> {
    plan.solve_helmholtz(a, rhs)
}

pub fn solve_poisson_neumann(
    plan: &SpectralPlan,
    rhs: &ScalarField,
) -> Result<ScalarField, SpectralError> {
    plan.solve_poisson_neumann(rhs)
}

pub fn leray_project(plan: &SpectralPlan, p: &VectorField) -> VectorField {
    plan.leray_project(p)
}

fn transpose(src: &[f64], dst: &mut [f64], m: usize) {
    const B: usize = 32;
    for jb in (0..m).step_by(B) {
        for ib in (0..m).step_by(B) {
            for j in jb..(jb + B).min(m) {
                for i in ib..(ib + B).min(m) {
                    dst[i * m + j] = src[j * m + i];
                }
            }
        }
    }
}

/// Samples the cosine eigenmode `φ_k` on the grid.
pub fn cosine_mode(spec: GridSpec, k1: usize, k2: usize) -> ScalarField {
    let pi = std::f64::consts::PI;
    // x = (i + 1/2) h, so π k (i + 1/2) / M = π k x
    ScalarField::from_fn(spec, |x, y| {
        (pi * k1 as f64 * x).cos() * (pi * k2 as f64 * y).cos()
    })
}

/// Power-iteration estimate of `‖div ∘ grad‖` using the stencil directly,
/// independent of the cosine transform.
pub fn laplacian_norm_power(spec: GridSpec, iterations: usize) -> f64 {
    // start near the checkerboard with a smooth perturbation so every mode
    // has a nonzero component
    let mut v = ScalarField::from_fn(spec, |x, y| {
        let m = spec.side() as f64;
        let (i, j) = ((x * m) as i64, (y * m) as i64);
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        sign * (1.0 + 0.1 * (7.0 * x + 3.0 * y).sin())
    });
    let mut rayleigh = 0.0;
    for _ in 0..iterations {
        let n = v.norm_l2();
        v.axpby(1.0 / n, &v.zeros_like(), 0.0);
        let w = crate::field::laplacian(&v);
        rayleigh = -w.dot(&v);
        v = w;
    }
    rayleigh
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::laplacian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scalar(spec: GridSpec, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..spec.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ScalarField::from_values(spec, v).unwrap()
    }

    fn random_vector(spec: GridSpec, seed: u64) -> VectorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..spec.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = (0..spec.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        VectorField::from_components(spec, x, y).unwrap()
    }

    #[test]
    fn roundtrip_is_identity() {
        for side in [2, 5, 16, 33] {
            let spec = GridSpec::new(side).unwrap();
            let plan = make_plan(spec);
            let u = random_scalar(spec, side as u64);
            let v = plan.inverse(&plan.forward(&u));
            assert!((&u - &v).norm_linf() <= 1e-12 * u.norm_linf());
        }
    }

    #[test]
    fn eigenvalue_bounds() {
        let spec = GridSpec::new(24).unwrap();
        let plan = make_plan(spec);
        assert_eq!(plan.eigenvalue(0, 0), 0.0);
        let h = spec.spacing();
        assert!(plan.eigenvalues()[1..].iter().all(|&l| l > 0.0));
        let max = plan.eigenvalues().iter().copied().fold(0.0, f64::max);
        assert_eq!(max, plan.max_eigenvalue());
        assert!(max <= 8.0 / (h * h));
    }

    #[test]
    fn cosine_modes_are_eigenvectors() {
        let spec = GridSpec::new(20).unwrap();
        let plan = make_plan(spec);
        for (k1, k2) in [(1, 0), (0, 3), (4, 7), (19, 19)] {
            let mode = cosine_mode(spec, k1, k2);
            let mut lhs = laplacian(&mode);
            lhs.axpby(-1.0, &mode, -plan.eigenvalue(k1, k2));
            assert!(lhs.norm_linf() <= 1e-10 * plan.eigenvalue(k1, k2), "mode {k1},{k2}");
        }
    }

    #[test]
    fn helmholtz_constant_and_mode() {
        let spec = GridSpec::new(16).unwrap();
        let plan = make_plan(spec);
        let c = ScalarField::constant(spec, 2.5);
        let w = plan.solve_helmholtz(1.0, &c).unwrap();
        assert!((&w - &c).norm_linf() < 1e-12);

        let a = 3.0;
        let mode = cosine_mode(spec, 1, 1);
        let rhs = &mode * (a + plan.eigenvalue(1, 1));
        let w = plan.solve_helmholtz(a, &rhs).unwrap();
        assert!((&w - &mode).norm_linf() < 1e-12);
    }

    #[test]
    fn helmholtz_residual_and_contraction() {
        let spec = GridSpec::new(40).unwrap();
        let plan = make_plan(spec);
        let rhs = random_scalar(spec, 9);
        for a in [1e-3, 0.5, 10.0, 1e4] {
            let w = plan.solve_helmholtz(a, &rhs).unwrap();
            let mut res = &w * a;
            res.axpby(1.0, &laplacian(&w), -1.0);
            res.axpby(1.0, &rhs, -1.0);
            assert!(res.norm_l2() <= 1e-10 * rhs.norm_l2());
            assert!(w.norm_l2() <= rhs.norm_l2() / a * (1.0 + 1e-12));
        }
        assert_eq!(
            plan.solve_helmholtz(0.0, &rhs).unwrap_err(),
            SpectralError::NonPositiveShift(0.0)
        );
    }

    #[test]
    fn poisson_mode_and_zero() {
        let spec = GridSpec::new(32).unwrap();
        let plan = make_plan(spec);
        let z = plan.solve_poisson_neumann(&ScalarField::zeros(spec)).unwrap();
        assert_eq!(z.norm_linf(), 0.0);
        let mode = cosine_mode(spec, 1, 0);
        let psi = plan.solve_poisson_neumann(&mode).unwrap();
        let expected = &mode * (-1.0 / plan.eigenvalue(1, 0));
        assert!((&psi - &expected).norm_linf() <= 1e-12 * expected.norm_linf());
        assert!(psi.mean().abs() < 1e-14);
    }

    #[test]
    fn poisson_rejects_incompatible_rhs() {
        let spec = GridSpec::new(8).unwrap();
        let plan = make_plan(spec);
        let err = plan.solve_poisson_neumann(&ScalarField::constant(spec, 1.0));
        assert!(matches!(err, Err(SpectralError::IncompatibleRhs(_))));
    }

    #[test]
    fn leray_projects_orthogonally() {
        let spec = GridSpec::new(30).unwrap();
        let plan = make_plan(spec);
        let p = random_vector(spec, 4);
        let q = plan.leray_project(&p);
        let scale = p.norm_l2();
        assert!(div(&q).norm_l2() <= 1e-10 * scale);
        let qq = plan.leray_project(&q);
        assert!((&qq - &q).norm_l2() <= 1e-10 * scale);
        let rest = &p - &q;
        assert!(q.dot(&rest).abs() <= 1e-10 * scale * scale);
        assert!(q.norm_l2() <= scale * (1.0 + 1e-12));

        let phi = random_scalar(spec, 5);
        let g = grad(&phi);
        assert!(plan.leray_project(&g).norm_l2() <= 1e-10 * g.norm_l2());
    }

    #[test]
    fn power_iteration_matches_top_eigenvalue() {
        let spec = GridSpec::new(64).unwrap();
        let plan = make_plan(spec);
        let est = laplacian_norm_power(spec, 200);
        let top = plan.max_eigenvalue();
        assert!(est <= top * (1.0 + 1e-12));
        assert!((top - est) / top < 0.01, "{est} vs {top}");
    }

    #[test]
    fn plan_is_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<SpectralPlan>();
        let spec = GridSpec::new(16).unwrap();
        let plan = make_plan(spec);
        let rhs = random_scalar(spec, 1);
        let serial = plan.solve_helmholtz(2.0, &rhs).unwrap();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..4)
                .map(|_| s.spawn(|| plan.solve_helmholtz(2.0, &rhs).unwrap()))
                .collect();
            for h in handles {
                assert_eq!(h.join().unwrap(), serial);
            }
        });
    }
}
