//! Total-variation (ROF) denoising
//!
//! ```text
//! F(u) = ‖u‖_TV + (λ/2) ‖u - I‖²
//! ```
//!
//! posed as the saddle problem `(grad u, p) + (λ/2)‖u - I‖² - χ_{|p|≤1}(p)`.
//! With `K = grad` the G-prox primal step inverts `λτ Id - Δ`, done exactly
//! in the cosine basis.

use thiserror::Error;

use crate::field::{
    div, grad, laplacian, rasterize_disc, tv_seminorm, FieldError, GridFunction, GridSpec,
    ScalarField, VectorField,
};
use crate::saddle::{
    GapWitness, L2ProxProblem, SaddleProblem, StepPlan, StronglyConvexProblem, STABILITY_MARGIN,
};
use crate::spectral::SpectralPlan;

#[derive(Debug, Error)]
pub enum RofError {
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("image value {value} at pixel {index} is outside [0, 1]")]
    ImageOutOfRange { index: usize, value: f64 },
    #[error("image has {image} points per side but the spectral plan has {plan}")]
    PlanMismatch { image: usize, plan: usize },
    #[error("eps must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("image is constant; u = I is already the minimizer")]
    ConstantImage,
    #[error("exact disc solution needs lambda > 8, got {0}")]
    LambdaTooSmall(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone)]
pub struct RofProblem {
    image: ScalarField,
    lambda: f64,
    plan: SpectralPlan,
}

impl RofProblem {
    pub fn new(image: ScalarField, lambda: f64, plan: SpectralPlan) -> Result<Self, RofError> {
        if !(lambda > 0.0) {
            return Err(RofError::NonPositiveLambda(lambda));
        }
        if image.spec() != plan.spec() {
            return Err(RofError::PlanMismatch {
                image: image.spec().side(),
                plan: plan.spec().side(),
            });
        }
        if let Some((index, &value)) = image
            .values()
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(RofError::ImageOutOfRange { index, value });
        }
        Ok(Self {
            image,
            lambda,
            plan,
        })
    }

    pub fn image(&self) -> &ScalarField {
        &self.image
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn plan(&self) -> &SpectralPlan {
        &self.plan
    }

    pub fn spec(&self) -> GridSpec {
        self.image.spec()
    }

    /// `(λ/2) ‖I₀ - I‖²` with `I₀` the mean of the image: the energy of the
    /// best constant.
    pub fn constant_energy(&self) -> f64 {
        let mean = self.image.mean();
        let d = self.image.map(|v| v - mean);
        0.5 * self.lambda * d.dot(&d)
    }

    /// Upper bound `min(‖I‖_TV, (λ/2)‖I₀ - I‖²)` on both `‖u*‖_TV` and the
    /// optimal energy.
    pub fn tv_bound(&self) -> f64 {
        tv_seminorm(&self.image).min(self.constant_energy())
    }

    pub fn zero_primal(&self) -> ScalarField {
        ScalarField::zeros(self.spec())
    }

    pub fn zero_dual(&self) -> VectorField {
        VectorField::zeros(self.spec())
    }
}

pub fn rof_energy(prob: &RofProblem, u: &ScalarField) -> f64 {
    let d = u - &prob.image;
    tv_seminorm(u) + 0.5 * prob.lambda * d.dot(&d)
}

/// `(λτ Id - Δ)⁻¹ (λτ I + τ div p̄ - Δ u)`.
pub fn rof_primal_update(prob: &RofProblem, u: &ScalarField, p_bar: &VectorField, tau: f64) -> ScalarField {
    let a = prob.lambda * tau;
    let mut rhs = div(p_bar);
    rhs.axpby(tau, &prob.image, a);
    rhs.axpby(1.0, &laplacian(u), -1.0);
    prob.plan
        .solve_helmholtz(a, &rhs)
        .expect("lambda and tau are positive")
}

/// `(p + σ grad u') / max(1, |p + σ grad u'|)` pointwise.
pub fn rof_dual_update(p: &VectorField, u_next: &ScalarField, sigma: f64) -> VectorField {
    let mut q = p.clone();
    q.axpby(1.0, &grad(u_next), sigma);
    q.project_unit_ball();
    debug_assert!(q.norm_linf() <= 1.0 + 1e-12);
    q
}

/// Exact dual value `min_u L(u, p) = (grad I, p) - ‖div p‖²/(2λ)` after
/// projecting `p` onto the pointwise unit ball.
pub fn rof_dual_bound(prob: &RofProblem, p: &VectorField) -> f64 {
    let mut q = p.clone();
    q.project_unit_ball();
    let d = div(&q);
    // (grad I, q) = -(I, div q)
    -prob.image.dot(&d) - d.dot(&d) / (2.0 * prob.lambda)
}

impl SaddleProblem for RofProblem {
    type Primal = ScalarField;
    type Dual = VectorField;

    fn primal_update(&self, u: &ScalarField, p_bar: &VectorField, tau: f64) -> ScalarField {
        rof_primal_update(self, u, p_bar, tau)
    }

    fn dual_update(&self, p: &VectorField, u_next: &ScalarField, sigma: f64) -> VectorField {
        rof_dual_update(p, u_next, sigma)
    }

    fn primal_energy(&self, u: &ScalarField) -> f64 {
        rof_energy(self, u)
    }

    fn dual_bound(&self, p: &VectorField) -> f64 {
        rof_dual_bound(self, p)
    }

    fn primal_metric(&self, du: &ScalarField) -> f64 {
        grad(du).norm_l2()
    }
}

impl L2ProxProblem for RofProblem {
    /// `(u + τ div p̄ + τλ I) / (1 + τλ)`.
    fn l2_primal_update(&self, u: &ScalarField, p_bar: &VectorField, tau: f64) -> ScalarField {
        let a = tau * self.lambda;
        let mut out = div(p_bar);
        out.axpby(tau, u, 1.0);
        out.axpby(1.0, &self.image, a);
        let inv = 1.0 / (1.0 + a);
        out.values_mut().iter_mut().for_each(|v| *v *= inv);
        out
    }

    fn operator_norm_sq(&self) -> f64 {
        self.plan.max_eigenvalue()
    }
}

impl GapWitness for RofProblem {
    /// `I + div q / λ` with `q` the projection of `p`.
    fn primal_response(&self, p: &VectorField) -> ScalarField {
        let mut q = p.clone();
        q.project_unit_ball();
        let mut u = div(&q);
        u.axpby(1.0 / self.lambda, &self.image, 1.0);
        u
    }

    /// `grad u / |grad u|`, zero where the gradient vanishes.
    fn dual_response(&self, u: &ScalarField) -> VectorField {
        let mut g = grad(u);
        let (gx, gy) = g.components_mut();
        for (x, y) in gx.iter_mut().zip(gy.iter_mut()) {
            let m = x.hypot(*y);
            if m > 0.0 {
                *x /= m;
                *y /= m;
            }
        }
        g
    }
}

impl StronglyConvexProblem for RofProblem {
    fn strong_convexity(&self) -> f64 {
        self.lambda
    }
}

/// How [`rof_step_plan`] turns the convergence theory into step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RofSteps {
    /// `τ = min(√λ B / √ε, ‖grad I‖)` with `B = min(‖I‖_TV, (λ/2)‖I₀-I‖²)`.
    #[default]
    Capped,
    /// `τ = √λ B / √ε` on every grid.
    GridFree,
    /// `τ = d √(3λ) B / √ε` with `d = 2`, keeping the dimensional constant
    /// of the ε-accuracy estimate; uncapped.
    Theorem,
}

/// Step sizes for reaching accuracy `eps`; `σ = 0.99 / τ`.
pub fn rof_step_plan(prob: &RofProblem, eps: f64, steps: RofSteps) -> Result<StepPlan, RofError> {
    if !(eps > 0.0) {
        return Err(RofError::NonPositiveEps(eps));
    }
    let bound = prob.tv_bound();
    if bound <= 0.0 {
        return Err(RofError::ConstantImage);
    }
    let sqrt_lambda = prob.lambda.sqrt();
    let r_cap = grad(&prob.image).norm_l2();
    let plan = match steps {
        RofSteps::Capped => {
            StepPlan::from_radii(sqrt_lambda * bound / eps.sqrt(), r_cap, STABILITY_MARGIN)
        }
        RofSteps::GridFree => {
            StepPlan::from_radii(sqrt_lambda * bound / eps.sqrt(), f64::INFINITY, STABILITY_MARGIN)
        }
        RofSteps::Theorem => {
            let d = 2.0;
            StepPlan::from_radii(
                d * (3.0 * prob.lambda).sqrt() * bound / eps.sqrt(),
                f64::INFINITY,
                STABILITY_MARGIN,
            )
        }
    };
    // keep the cap on record even when it was not applied
    Ok(StepPlan { r_cap, ..plan })
}

/// Indicator of the disc of radius 1/4 centred at (1/2, 1/2).
pub fn disc_image(spec: GridSpec) -> ScalarField {
    rasterize_disc(spec, (0.5, 0.5), 0.25, false).expect("disc fits in the unit square")
}

/// Continuum minimizer for the disc image, sampled at pixel centres: the
/// disc drops to `1 - 8/λ` and the background rises to `8π / (λ (16 - π))`,
/// the perimeter-to-area ratios of the two regions over `λ`. The mean of `I`
/// is preserved.
pub fn exact_disc_solution(spec: GridSpec, lambda: f64) -> Result<ScalarField, RofError> {
    if !(lambda > 8.0) {
        return Err(RofError::LambdaTooSmall(lambda));
    }
    let pi = std::f64::consts::PI;
    let scale = 1.0 - 8.0 / lambda;
    let offset = 8.0 * pi / (lambda * (16.0 - pi));
    Ok(disc_image(spec).map(|v| scale * v + offset * (1.0 - v)))
}

/// Strong convexity inequality `F(u) - F* ≥ (λ/2) ‖u - u*‖² - 1e-8`.
pub fn rof_strong_convexity_check(
    prob: &RofProblem,
    u: &ScalarField,
    u_star: &ScalarField,
    f_star: f64,
) -> bool {
    let d = u - u_star;
    rof_energy(prob, u) - f_star >= 0.5 * prob.lambda * d.dot(&d) - 1e-8
}
