//! L¹ earth mover's distance in flux form.
//!
//! Any flux with `div m = ρ¹ - ρ⁰` splits as `m = u + grad ψ` where
//! `Δψ = ρ¹ - ρ⁰` (Neumann) and `u` is divergence free, so
//!
//! ```text
//! EMD(ρ¹, ρ⁰) = min_{div u = 0} ‖u + grad ψ‖_{L¹}.
//! ```
//!
//! G-prox PDHG runs on the divergence-free subspace with `K = Id`; the
//! primal step is a Leray projection and the dual step a pointwise
//! projection onto the unit disc.

use thiserror::Error;

use crate::field::{
    div, grad, laplacian, rasterize_delta, rasterize_disc, GridFunction, GridSpec, ScalarField,
    VectorField,
};
use crate::saddle::{SaddleProblem, StepPlan, StepProvenance, STABILITY_MARGIN};
use crate::spectral::{SpectralError, SpectralPlan};

/// Mass tolerance for input measures.
pub const MASS_TOL: f64 = 1e-10;

/// Relative divergence tolerance for primal iterates.
pub const DIVERGENCE_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EmdError {
    #[error("{which} has mass {mass}, expected 1")]
    NotNormalized { which: &'static str, mass: f64 },
    #[error("{which} has a negative value {value}")]
    NegativeDensity { which: &'static str, value: f64 },
    #[error("measures have {measures} points per side but the spectral plan has {plan}")]
    PlanMismatch { measures: usize, plan: usize },
    #[error("Poisson residual {0:e} exceeds tolerance")]
    PoissonResidual(f64),
    #[error("flux is not divergence free: |div u| = {div:e}, |u| = {norm:e}")]
    NotDivergenceFree { div: f64, norm: f64 },
    #[error("eps must lie in (0, 1) for singular measures, got {0}")]
    BadEps(f64),
    #[error("manual step must be positive, got {0}")]
    BadManualStep(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone)]
pub struct EmdProblem {
    rho1: ScalarField,
    rho0: ScalarField,
    psi: ScalarField,
    grad_psi: VectorField,
    plan: SpectralPlan,
}

fn check_measure(which: &'static str, rho: &ScalarField) -> Result<(), EmdError> {
    let mass = rho.integral();
    if (mass - 1.0).abs() > MASS_TOL {
        return Err(EmdError::NotNormalized { which, mass });
    }
    if let Some(&value) = rho.values().iter().find(|v| **v < 0.0) {
        return Err(EmdError::NegativeDensity { which, value });
    }
    Ok(())
}

/// Solves `Δψ = ρ¹ - ρ⁰` and precomputes `grad ψ`.
pub fn emd_setup(rho1: ScalarField, rho0: ScalarField, plan: SpectralPlan) -> Result<EmdProblem, EmdError> {
    for rho in [&rho1, &rho0] {
        if rho.spec() != plan.spec() {
            return Err(EmdError::PlanMismatch {
                measures: rho.spec().side(),
                plan: plan.spec().side(),
            });
        }
    }
    check_measure("rho1", &rho1)?;
    check_measure("rho0", &rho0)?;
    let rhs = &rho1 - &rho0;
    let psi = plan.solve_poisson_neumann(&rhs)?;
    let residual = (&laplacian(&psi) - &rhs).norm_l2();
    if residual > 1e-9 * rhs.norm_l2() {
        return Err(EmdError::PoissonResidual(residual));
    }
    let grad_psi = grad(&psi);
    Ok(EmdProblem {
        rho1,
        rho0,
        psi,
        grad_psi,
        plan,
    })
}

impl EmdProblem {
    pub fn spec(&self) -> GridSpec {
        self.psi.spec()
    }

    pub fn rho1(&self) -> &ScalarField {
        &self.rho1
    }

    pub fn rho0(&self) -> &ScalarField {
        &self.rho0
    }

    pub fn psi(&self) -> &ScalarField {
        &self.psi
    }

    pub fn grad_psi(&self) -> &VectorField {
        &self.grad_psi
    }

    pub fn plan(&self) -> &SpectralPlan {
        &self.plan
    }

    pub fn zero_flux(&self) -> VectorField {
        VectorField::zeros(self.spec())
    }

    /// The transport flux `m = u + grad ψ`.
    pub fn flux(&self, u: &VectorField) -> VectorField {
        u + &self.grad_psi
    }

    fn energy_unchecked(&self, u: &VectorField) -> f64 {
        let x = u.x().iter().zip(self.grad_psi.x());
        let y = u.y().iter().zip(self.grad_psi.y());
        let s: f64 = x
            .zip(y)
            .map(|((ux, gx), (uy, gy))| (ux + gx).hypot(uy + gy))
            .sum();
        s * self.spec().cell_area()
    }
}

/// `‖div u‖ ≤ DIVERGENCE_TOL · ‖u‖`.
pub fn check_divergence_free(u: &VectorField) -> Result<(), EmdError> {
    let d = div(u).norm_l2();
    let n = u.norm_l2();
    if d > DIVERGENCE_TOL * n {
        return Err(EmdError::NotDivergenceFree { div: d, norm: n });
    }
    Ok(())
}

/// `‖u + grad ψ‖_{L¹}` for a divergence-free `u`.
pub fn emd_energy(prob: &EmdProblem, u: &VectorField) -> Result<f64, EmdError> {
    check_divergence_free(u)?;
    Ok(prob.energy_unchecked(u))
}

/// `u - τ P(p̄)` with `P` the Leray projection.
pub fn emd_primal_update(prob: &EmdProblem, u: &VectorField, p_bar: &VectorField, tau: f64) -> VectorField {
    let mut out = u.clone();
    out.axpby(1.0, &prob.plan.leray_project(p_bar), -tau);
    out
}

/// Pointwise projection of `p + σ(u' + grad ψ)` onto the unit disc.
pub fn emd_dual_update(prob: &EmdProblem, p: &VectorField, u_next: &VectorField, sigma: f64) -> VectorField {
    let mut q = p.clone();
    q.axpby(1.0, u_next, sigma);
    q.axpby(1.0, &prob.grad_psi, sigma);
    q.project_unit_ball();
    debug_assert!(q.norm_linf() <= 1.0 + 1e-12);
    q
}

/// The feasible dual candidate behind [`emd_dual_bound`]: the gradient part
/// of `p`, rescaled into the unit ball.
pub fn emd_dual_candidate(prob: &EmdProblem, p: &VectorField) -> VectorField {
    let mut q = p.clone();
    q.axpby(1.0, &prob.plan.leray_project(p), -1.0);
    let scale = q.norm_linf().max(1.0);
    if scale > 1.0 {
        q.axpby(1.0 / scale, &q.zeros_like(), 0.0);
    }
    q
}

/// `(grad ψ, q̃)` where `q̃` is [`emd_dual_candidate`]. Since `q̃` is a
/// gradient it is orthogonal to every divergence-free `u`, and `|q̃| ≤ 1`
/// gives `(u + grad ψ, q̃) ≤ ‖u + grad ψ‖_{L¹}`.
pub fn emd_dual_bound(prob: &EmdProblem, p: &VectorField) -> f64 {
    prob.grad_psi.dot(&emd_dual_candidate(prob, p))
}

impl SaddleProblem for EmdProblem {
    type Primal = VectorField;
    type Dual = VectorField;

    fn primal_update(&self, u: &VectorField, p_bar: &VectorField, tau: f64) -> VectorField {
        emd_primal_update(self, u, p_bar, tau)
    }

    fn dual_update(&self, p: &VectorField, u_next: &VectorField, sigma: f64) -> VectorField {
        emd_dual_update(self, p, u_next, sigma)
    }

    fn primal_energy(&self, u: &VectorField) -> f64 {
        debug_assert!(check_divergence_free(u).is_ok());
        self.energy_unchecked(u)
    }

    fn dual_bound(&self, p: &VectorField) -> f64 {
        emd_dual_bound(self, p)
    }

    fn primal_metric(&self, du: &VectorField) -> f64 {
        du.norm_l2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmdSteps {
    /// Bounded densities: `τ = 1`.
    SmoothMeasures,
    /// Point masses: `τ = min(√(1/(ε |ln ε|)), 2 N^{1/4})` with `N = M²`
    /// the total number of grid points.
    SingularMeasures,
    /// Point masses without the grid cap.
    SingularGridFree,
    Manual(f64),
}

/// Step sizes for accuracy `eps`; `σ = 0.99 / τ` in every mode.
pub fn emd_step_plan(spec: GridSpec, eps: f64, steps: EmdSteps) -> Result<StepPlan, EmdError> {
    let singular = |capped: bool| {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(EmdError::BadEps(eps));
        }
        let r_theory = (1.0 / (eps * eps.ln().abs())).sqrt();
        let total = spec.len() as f64;
        let r_cap = 2.0 * total.powf(0.25);
        let plan = StepPlan::from_radii(
            r_theory,
            if capped { r_cap } else { f64::INFINITY },
            STABILITY_MARGIN,
        );
        Ok(StepPlan { r_cap, ..plan })
    };
    match steps {
        EmdSteps::SmoothMeasures => Ok(StepPlan {
            tau: 1.0,
            sigma: STABILITY_MARGIN,
            provenance: StepProvenance::Theory,
            r_theory: 1.0,
            r_cap: f64::NAN,
        }),
        EmdSteps::SingularMeasures => singular(true),
        EmdSteps::SingularGridFree => singular(false),
        EmdSteps::Manual(tau) => {
            if !(tau > 0.0) {
                return Err(EmdError::BadManualStep(tau));
            }
            Ok(StepPlan::manual(tau, STABILITY_MARGIN / tau))
        }
    }
}

/// EMD between a measure and its translate by `v`: `|v|`.
pub fn translation_ground_truth(v: (f64, f64)) -> f64 {
    v.0.hypot(v.1)
}

/// Centre of `ρ¹` in the translation presets.
pub const TARGET_CENTER: (f64, f64) = (0.625, 0.625);
/// Centre of `ρ⁰` in the translation presets.
pub const SOURCE_CENTER: (f64, f64) = (0.375, 0.375);
pub const PRESET_RADIUS: f64 = 0.25;

/// Translation vector between the preset measures, `(1/4, 1/4)`.
pub fn preset_translation() -> (f64, f64) {
    (TARGET_CENTER.0 - SOURCE_CENTER.0, TARGET_CENTER.1 - SOURCE_CENTER.1)
}

/// Uniform densities on discs of radius 1/4 at (5/8, 5/8) and (3/8, 3/8).
pub fn disc_measures(spec: GridSpec) -> (ScalarField, ScalarField) {
    let d = |c| rasterize_disc(spec, c, PRESET_RADIUS, true).expect("preset disc fits");
    (d(TARGET_CENTER), d(SOURCE_CENTER))
}

/// Point masses at (5/8, 5/8) and (3/8, 3/8).
pub fn delta_measures(spec: GridSpec) -> (ScalarField, ScalarField) {
    let d = |c| rasterize_delta(spec, c).expect("preset point inside");
    (d(TARGET_CENTER), d(SOURCE_CENTER))
}
