//! Primal-dual solver loops for saddle problems
//!
//! ```text
//! min_u max_p  (K u, p)_Z + g(u) - f*(p)
//! ```
//!
//! Three drivers share one problem interface:
//!
//! - [`run_gprox`]: G-prox PDHG. The primal step is a proximal step in the
//!   metric `‖K·‖_Z`, which makes the iteration stable for any `τσ < 1`.
//! - [`run_pdhg`]: plain PDHG with an L² primal step, stable only when
//!   `τσ‖K‖² < 1`.
//! - [`run_cp2`]: accelerated PDHG for problems whose `g` is strongly convex
//!   in L². Its step schedule (`θ_n = 1/√(1+2γτ_n)`, `τ_{n+1} = θ_n τ_n`,
//!   `σ_{n+1} = σ_n/θ_n`, extrapolation on the primal variable) follows
//!   Chambolle and Pock's accelerated algorithm.
//!
//! Each loop records the energy of the last iterate every iteration and, at a
//! configurable stride, a duality gap built from the problem's certified dual
//! lower bound.

use std::time::Instant;

use thiserror::Error;

use crate::field::GridFunction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("step sizes must be positive, got tau={tau}, sigma={sigma}")]
    NonPositiveStep { tau: f64, sigma: f64 },
    #[error("G-prox PDHG needs tau*sigma < 1, got {0}")]
    UnstableProduct(f64),
    #[error("accelerated PDHG needs tau0*sigma0*|K|^2 <= 1, got {0}")]
    UnstableInitialSteps(f64),
    #[error("strong convexity modulus must be nonnegative, got {0}")]
    NegativeConvexity(f64),
}

/// A convex-concave saddle problem `L(u, p) = (Ku, p) + g(u) - f*(p)`,
/// exposed through the updates the solver loops need.
pub trait SaddleProblem {
    type Primal: GridFunction;
    type Dual: GridFunction;

    /// `argmin_u g(u) + (Ku, p̄) + ‖K(u - u_n)‖²/(2τ)`.
    fn primal_update(&self, u: &Self::Primal, p_bar: &Self::Dual, tau: f64) -> Self::Primal;

    /// `argmax_p -f*(p) + (K u_next, p) - ‖p - p_n‖²/(2σ)`.
    fn dual_update(&self, p: &Self::Dual, u_next: &Self::Primal, sigma: f64) -> Self::Dual;

    /// `F(u) = f(Ku) + g(u)`.
    fn primal_energy(&self, u: &Self::Primal) -> f64;

    /// A certified lower bound on `inf F` built from `p`.
    fn dual_bound(&self, p: &Self::Dual) -> f64;

    /// `‖K du‖_Z`, the norm the G-prox primal step is taken in.
    fn primal_metric(&self, du: &Self::Primal) -> f64;
}

/// Problems that also provide the plain L² primal proximal step.
pub trait L2ProxProblem: SaddleProblem {
    /// `argmin_u g(u) + (Ku, p̄) + ‖u - u_n‖²/(2τ)`.
    fn l2_primal_update(&self, u: &Self::Primal, p_bar: &Self::Dual, tau: f64) -> Self::Primal;

    /// `‖K‖²` in the L² operator norm.
    fn operator_norm_sq(&self) -> f64;
}

/// Problems whose `g` is `γ`-strongly convex in L².
pub trait StronglyConvexProblem: L2ProxProblem {
    fn strong_convexity(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepProvenance {
    /// The ε-optimal radius from the convergence theory was the smaller term.
    Theory,
    /// The grid-dependent cap was the smaller term.
    DiscreteCap,
    Manual,
}

/// Step sizes and how they were chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPlan {
    pub tau: f64,
    pub sigma: f64,
    pub provenance: StepProvenance,
    /// The theory radius `R_ε / C` (NaN for manual plans).
    pub r_theory: f64,
    /// The discrete cap `R_M` (NaN when not applicable).
    pub r_cap: f64,
}

/// Default `τσ` product used when deriving σ from τ.
pub const STABILITY_MARGIN: f64 = 0.99;

impl StepPlan {
    pub fn manual(tau: f64, sigma: f64) -> Self {
        Self {
            tau,
            sigma,
            provenance: StepProvenance::Manual,
            r_theory: f64::NAN,
            r_cap: f64::NAN,
        }
    }

    /// `τ = min(r_theory, r_cap)`, `σ = margin / τ`.
    pub fn from_radii(r_theory: f64, r_cap: f64, margin: f64) -> Self {
        let (tau, provenance) = if r_cap < r_theory {
            (r_cap, StepProvenance::DiscreteCap)
        } else {
            (r_theory, StepProvenance::Theory)
        };
        Self {
            tau,
            sigma: margin / tau,
            provenance,
            r_theory,
            r_cap,
        }
    }

    pub fn product(&self) -> f64 {
        self.tau * self.sigma
    }

    fn check_positive(&self) -> Result<(), SolveError> {
        if !(self.tau > 0.0 && self.sigma > 0.0) {
            return Err(SolveError::NonPositiveStep {
                tau: self.tau,
                sigma: self.sigma,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// `F(u_n) - f_bar < eps`, with `f_bar` a precomputed ground truth.
    EnergyBelow { f_bar: f64, eps: f64 },
    /// `F(u_n) - D(p_n) < eps`, self-certified.
    GapBelow { eps: f64 },
    /// Run to `max_iters`.
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub criterion: Criterion,
    pub max_iters: usize,
    /// Gap and trace sample spacing; 0 disables tracing after iteration 0.
    pub trace_stride: usize,
    /// Diverged once `F(u_n) > factor * max(|F(u_0)|, 1)`.
    pub divergence_factor: f64,
}

impl StoppingRule {
    pub fn new(criterion: Criterion, max_iters: usize) -> Self {
        Self {
            criterion,
            max_iters,
            trace_stride: 1,
            divergence_factor: 1e6,
        }
    }

    pub fn energy(f_bar: f64, eps: f64, max_iters: usize) -> Self {
        Self::new(Criterion::EnergyBelow { f_bar, eps }, max_iters)
    }

    pub fn gap(eps: f64, max_iters: usize) -> Self {
        Self::new(Criterion::GapBelow { eps }, max_iters)
    }

    pub fn fixed(iters: usize) -> Self {
        Self::new(Criterion::Never, iters)
    }

    pub fn with_trace_stride(mut self, stride: usize) -> Self {
        self.trace_stride = stride;
        self
    }

    pub fn with_divergence_factor(mut self, factor: f64) -> Self {
        self.divergence_factor = factor;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ToleranceMet,
    MaxIters,
    Diverged,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ToleranceMet => "tolerance_met",
            Termination::MaxIters => "max_iters",
            Termination::Diverged => "diverged",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub energy: f64,
    /// `F(u_n) - D(p_n)`; NaN between trace samples.
    pub gap: f64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport<P, D> {
    pub iterations: usize,
    pub wall_seconds: f64,
    pub trace: Vec<TracePoint>,
    pub final_primal: P,
    pub final_dual: D,
    /// `(1/N) Σ_{n=1}^N u_n`.
    pub final_ergodic: P,
    /// `(1/N) Σ_{n=1}^N p_n`.
    pub ergodic_dual: D,
    pub final_energy: f64,
    pub termination: Termination,
}

impl<P, D> SolveReport<P, D> {
    /// `(iteration, F(u_n))` for every iteration.
    pub fn energy_trace(&self) -> Vec<(usize, f64)> {
        self.trace.iter().map(|t| (t.iteration, t.energy)).collect()
    }

    /// `(iteration, gap)` at the trace stride.
    pub fn gap_trace(&self) -> Vec<(usize, f64)> {
        self.trace
            .iter()
            .filter(|t| !t.gap.is_nan())
            .map(|t| (t.iteration, t.gap))
            .collect()
    }

    /// CSV with columns `iteration,energy,gap,elapsed_seconds`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,energy,gap,elapsed_seconds\n");
        for t in &self.trace {
            let gap = if t.gap.is_nan() {
                String::new()
            } else {
                format!("{:e}", t.gap)
            };
            out.push_str(&format!(
                "{},{:e},{},{:e}\n",
                t.iteration, t.energy, gap, t.elapsed_seconds
            ));
        }
        out
    }
}

/// `F(u) - D(p)`; nonnegative up to roundoff by weak duality.
pub fn gap_certificate<S: SaddleProblem + ?Sized>(problem: &S, u: &S::Primal, p: &S::Dual) -> f64 {
    problem.primal_energy(u) - problem.dual_bound(p)
}

/// Slack allowed on weak duality before it is treated as a bug.
const WEAK_DUALITY_SLACK: f64 = 1e-9;

struct Monitor {
    rule: StoppingRule,
    start: Instant,
    threshold: f64,
    trace: Vec<TracePoint>,
}

impl Monitor {
    fn new(rule: StoppingRule, initial_energy: f64) -> Self {
        Self {
            rule,
            start: Instant::now(),
            threshold: rule.divergence_factor * initial_energy.abs().max(1.0),
            trace: Vec::new(),
        }
    }

    /// Records iteration `n` and decides whether to stop.
    fn observe<S: SaddleProblem + ?Sized>(
        &mut self,
        problem: &S,
        n: usize,
        u: &S::Primal,
        p: &S::Dual,
    ) -> Option<Termination> {
        let energy = problem.primal_energy(u);
        let sampled = n == 0 || (self.rule.trace_stride > 0 && n.is_multiple_of(self.rule.trace_stride));
        let needs_gap = matches!(self.rule.criterion, Criterion::GapBelow { .. });
        let gap = if sampled || needs_gap {
            let g = energy - problem.dual_bound(p);
            debug_assert!(
                !g.is_finite() || g >= -WEAK_DUALITY_SLACK * energy.abs().max(1.0),
                "weak duality violated at iteration {n}: gap {g:e}"
            );
            g
        } else {
            f64::NAN
        };
        self.trace.push(TracePoint {
            iteration: n,
            energy,
            gap: if sampled { gap } else { f64::NAN },
            elapsed_seconds: self.start.elapsed().as_secs_f64(),
        });
        if !energy.is_finite() || energy > self.threshold {
            return Some(Termination::Diverged);
        }
        if n == 0 {
            return None;
        }
        let met = match self.rule.criterion {
            Criterion::EnergyBelow { f_bar, eps } => energy - f_bar < eps,
            Criterion::GapBelow { eps } => gap < eps,
            Criterion::Never => false,
        };
        if met {
            return Some(Termination::ToleranceMet);
        }
        if n >= self.rule.max_iters {
            return Some(Termination::MaxIters);
        }
        None
    }
}

struct Ergodic<T> {
    avg: T,
    count: usize,
}

impl<T: GridFunction> Ergodic<T> {
    fn new(like: &T) -> Self {
        Self {
            avg: like.zeros_like(),
            count: 0,
        }
    }

    fn push(&mut self, x: &T) {
        self.count += 1;
        let w = 1.0 / self.count as f64;
        self.avg.axpby(1.0 - w, x, w);
    }
}

/// Shared loop for G-prox PDHG and PDHG: `u_{n+1} = step(u_n, p̄_n)`,
/// `p_{n+1} = dual_update(p_n, u_{n+1})`, `p̄_{n+1} = 2 p_{n+1} - p_n`.
fn run_extrapolated_dual<S, F, O>(
    problem: &S,
    plan: &StepPlan,
    u0: &S::Primal,
    p0: &S::Dual,
    stop: &StoppingRule,
    primal_step: F,
    mut observer: O,
) -> SolveReport<S::Primal, S::Dual>
where
    S: SaddleProblem + ?Sized,
    F: Fn(&S::Primal, &S::Dual) -> S::Primal,
    O: FnMut(usize, &S::Primal, &S::Dual),
{
    let mut u = u0.clone();
    let mut p = p0.clone();
    let mut p_bar = p0.clone();
    let mut u_avg = Ergodic::new(u0);
    let mut p_avg = Ergodic::new(p0);

    let mut monitor = Monitor::new(*stop, problem.primal_energy(u0));
    observer(0, &u, &p);
    let mut termination = monitor.observe(problem, 0, &u, &p);
    let mut n = 0;
    while termination.is_none() {
        n += 1;
        let u_next = primal_step(&u, &p_bar);
        let p_next = problem.dual_update(&p, &u_next, plan.sigma);
        p_bar = p_next.clone();
        p_bar.axpby(2.0, &p, -1.0);
        u = u_next;
        p = p_next;
        u_avg.push(&u);
        p_avg.push(&p);
        observer(n, &u, &p);
        termination = monitor.observe(problem, n, &u, &p);
    }

    finish(monitor, n, u, p, u_avg, p_avg, termination.unwrap())
}

fn finish<P: GridFunction, D: GridFunction>(
    monitor: Monitor,
    n: usize,
    u: P,
    p: D,
    u_avg: Ergodic<P>,
    p_avg: Ergodic<D>,
    termination: Termination,
) -> SolveReport<P, D> {
    let final_energy = monitor.trace.last().map(|t| t.energy).unwrap_or(f64::NAN);
    let (final_ergodic, ergodic_dual) = if u_avg.count == 0 {
        (u.clone(), p.clone())
    } else {
        (u_avg.avg, p_avg.avg)
    };
    SolveReport {
        iterations: n,
        wall_seconds: monitor.start.elapsed().as_secs_f64(),
        trace: monitor.trace,
        final_primal: u,
        final_dual: p,
        final_ergodic,
        ergodic_dual,
        final_energy,
        termination,
    }
}

/// G-prox PDHG.
pub fn run_gprox<S: SaddleProblem + ?Sized>(
    problem: &S,
    plan: &StepPlan,
    u0: &S::Primal,
    p0: &S::Dual,
    stop: &StoppingRule,
) -> Result<SolveReport<S::Primal, S::Dual>, SolveError> {
    run_gprox_observed(problem, plan, u0, p0, stop, |_, _, _| {})
}

/// [`run_gprox`] with a callback receiving every iterate `(n, u_n, p_n)`,
/// starting at `n = 0`.
pub fn run_gprox_observed<S, O>(
    problem: &S,
    plan: &StepPlan,
    u0: &S::Primal,
    p0: &S::Dual,
    stop: &StoppingRule,
    observer: O,
) -> Result<SolveReport<S::Primal, S::Dual>, SolveError>
where
    S: SaddleProblem + ?Sized,
    O: FnMut(usize, &S::Primal, &S::Dual),
{
    plan.check_positive()?;
    if plan.product() >= 1.0 {
        return Err(SolveError::UnstableProduct(plan.product()));
    }
    let tau = plan.tau;
    Ok(run_extrapolated_dual(
        problem,
        plan,
        u0,
        p0,
        stop,
        |u, p_bar| problem.primal_update(u, p_bar, tau),
        observer,
    ))
}

/// Plain PDHG with the L² primal step.
///
/// Step sizes with `τσ‖K‖² ≥ 1` are accepted so that instability can be
/// demonstrated; such runs usually end as [`Termination::Diverged`] or
/// [`Termination::MaxIters`].
pub fn run_pdhg<S: L2ProxProblem + ?Sized>(
    problem: &S,
    plan: &StepPlan,
    u0: &S::Primal,
    p0: &S::Dual,
    stop: &StoppingRule,
) -> Result<SolveReport<S::Primal, S::Dual>, SolveError> {
    plan.check_positive()?;
    let product = plan.product() * problem.operator_norm_sq();
    if product >= 1.0 {
        log::warn!("PDHG with tau*sigma*|K|^2 = {product:.3} is outside the stable regime");
    }
    let tau = plan.tau;
    Ok(run_extrapolated_dual(
        problem,
        plan,
        u0,
        p0,
        stop,
        |u, p_bar| problem.l2_primal_update(u, p_bar, tau),
        |_, _, _| {},
    ))
}

/// Accelerated PDHG for `γ`-strongly convex `g`:
///
/// ```text
/// p_{n+1} = dual_update(p_n, ū_n, σ_n)
/// u_{n+1} = l2_primal_update(u_n, p_{n+1}, τ_n)
/// θ_n = 1/√(1 + 2γτ_n),  τ_{n+1} = θ_n τ_n,  σ_{n+1} = σ_n/θ_n
/// ū_{n+1} = u_{n+1} + θ_n (u_{n+1} - u_n)
/// ```
pub fn run_cp2<S: StronglyConvexProblem + ?Sized>(
    problem: &S,
    gamma: f64,
    tau0: f64,
    sigma0: f64,
    u0: &S::Primal,
    p0: &S::Dual,
    stop: &StoppingRule,
) -> Result<SolveReport<S::Primal, S::Dual>, SolveError> {
    StepPlan::manual(tau0, sigma0).check_positive()?;
    if !(gamma >= 0.0) {
        return Err(SolveError::NegativeConvexity(gamma));
    }
    let product = tau0 * sigma0 * problem.operator_norm_sq();
    if product > 1.0 + 1e-12 {
        return Err(SolveError::UnstableInitialSteps(product));
    }

    let mut tau = tau0;
    let mut sigma = sigma0;
    let mut u = u0.clone();
    let mut u_bar = u0.clone();
    let mut p = p0.clone();
    let mut u_avg = Ergodic::new(u0);
    let mut p_avg = Ergodic::new(p0);

    let mut monitor = Monitor::new(*stop, problem.primal_energy(u0));
    let mut termination = monitor.observe(problem, 0, &u, &p);
    let mut n = 0;
    while termination.is_none() {
        n += 1;
        p = problem.dual_update(&p, &u_bar, sigma);
        let u_next = problem.l2_primal_update(&u, &p, tau);
        let theta = cp2_theta(gamma, tau);
        tau *= theta;
        sigma /= theta;
        u_bar = u_next.clone();
        u_bar.axpby(1.0 + theta, &u, -theta);
        u = u_next;
        u_avg.push(&u);
        p_avg.push(&p);
        termination = monitor.observe(problem, n, &u, &p);
    }

    Ok(finish(monitor, n, u, p, u_avg, p_avg, termination.unwrap()))
}

/// `θ = 1/√(1 + 2γτ)`.
pub fn cp2_theta(gamma: f64, tau: f64) -> f64 {
    1.0 / (1.0 + 2.0 * gamma * tau).sqrt()
}

/// Outcome of [`theorem22_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicBoundCheck {
    /// Full duality gap `F(u^N) - D(p^N)` at the ergodic pair.
    pub lhs: f64,
    /// `(R_u²/τ + R_p²/σ) / (2N)`.
    pub rhs: f64,
    /// Primal radius `‖K(û - u_0)‖_Z`.
    pub r_primal: f64,
    /// Dual radius `‖p̂ - p_0‖_Z`.
    pub r_dual: f64,
    pub holds: bool,
}

/// Problems whose Lagrangian has computable partial optima, so the duality
/// gap at `(u, p)` is `L(u, p̂) - L(û, p)` for explicit comparison points.
pub trait GapWitness: SaddleProblem {
    /// `û ∈ argmin_u L(u, p)`.
    fn primal_response(&self, p: &Self::Dual) -> Self::Primal;
    /// `p̂ ∈ argmax_p L(u, p)`.
    fn dual_response(&self, u: &Self::Primal) -> Self::Dual;
}

/// Checks the ergodic O(1/N) gap bound of G-prox PDHG on a completed run.
///
/// The bound `L(u^N, p) - L(u, p^N) ≤ (‖K(u - u₀)‖²/τ + ‖p - p₀‖²/σ) / (2N)`
/// holds for every comparison pair. Taking `(û, p̂)` from [`GapWitness`]
/// makes the left side the full duality gap at the ergodic pair, and the
/// radii are measured a posteriori at those points.
pub fn theorem22_check<S: GapWitness + ?Sized>(
    problem: &S,
    report: &SolveReport<S::Primal, S::Dual>,
    plan: &StepPlan,
    u0: &S::Primal,
    p0: &S::Dual,
) -> ErgodicBoundCheck {
    let n = report.iterations.max(1) as f64;
    let mut du = problem.primal_response(&report.ergodic_dual);
    du.axpby(1.0, u0, -1.0);
    let mut dp = problem.dual_response(&report.final_ergodic);
    dp.axpby(1.0, p0, -1.0);
    let r_primal = problem.primal_metric(&du);
    let r_dual = dp.norm_l2();
    let lhs = gap_certificate(problem, &report.final_ergodic, &report.ergodic_dual);
    let rhs = (r_primal * r_primal / plan.tau + r_dual * r_dual / plan.sigma) / (2.0 * n);
    ErgodicBoundCheck {
        lhs,
        rhs,
        r_primal,
        r_dual,
        holds: lhs <= rhs * (1.0 + 1e-6),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{GridSpec, ScalarField};

    /// `min_u |u - c|_{L¹}` written as `max_{|p|≤1} (u - c, p)` with `K = Id`;
    /// a scalar toy where every update has a closed form.
    struct ShiftedAbs {
        target: ScalarField,
    }

    impl SaddleProblem for ShiftedAbs {
        type Primal = ScalarField;
        type Dual = ScalarField;

        fn primal_update(&self, u: &ScalarField, p_bar: &ScalarField, tau: f64) -> ScalarField {
            let mut out = u.clone();
            out.axpby(1.0, p_bar, -tau);
            out
        }

        fn dual_update(&self, p: &ScalarField, u_next: &ScalarField, sigma: f64) -> ScalarField {
            let mut q = p.clone();
            q.axpby(1.0, u_next, sigma);
            q.axpby(1.0, &self.target, -sigma);
            q.map(|v| v.clamp(-1.0, 1.0))
        }

        fn primal_energy(&self, u: &ScalarField) -> f64 {
            (u - &self.target).norm_l1()
        }

        fn dual_bound(&self, p: &ScalarField) -> f64 {
            // inf_u (u - c, p) is -inf unless p = 0
            if p.norm_linf() == 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }

        fn primal_metric(&self, du: &ScalarField) -> f64 {
            du.norm_l2()
        }
    }

    impl L2ProxProblem for ShiftedAbs {
        fn l2_primal_update(&self, u: &ScalarField, p_bar: &ScalarField, tau: f64) -> ScalarField {
            self.primal_update(u, p_bar, tau)
        }

        fn operator_norm_sq(&self) -> f64 {
            1.0
        }
    }

    fn toy() -> (ShiftedAbs, ScalarField, ScalarField) {
        let spec = GridSpec::new(4).unwrap();
        let target = ScalarField::from_fn(spec, |x, y| x - 2.0 * y);
        let z = ScalarField::zeros(spec);
        (ShiftedAbs { target }, z.clone(), z)
    }

    #[test]
    fn gprox_rejects_unit_product() {
        let (prob, u0, p0) = toy();
        let err = run_gprox(&prob, &StepPlan::manual(1.0, 1.0), &u0, &p0, &StoppingRule::fixed(3));
        assert_eq!(err.unwrap_err(), SolveError::UnstableProduct(1.0));
        let err = run_gprox(&prob, &StepPlan::manual(0.0, 1.0), &u0, &p0, &StoppingRule::fixed(3));
        assert!(matches!(err, Err(SolveError::NonPositiveStep { .. })));
    }

    #[test]
    fn gprox_converges_on_toy() {
        let (prob, u0, p0) = toy();
        let stop = StoppingRule::energy(0.0, 1e-3, 10_000);
        let rep = run_gprox(&prob, &StepPlan::manual(0.5, 1.9), &u0, &p0, &stop).unwrap();
        assert_eq!(rep.termination, Termination::ToleranceMet);
        assert!(rep.final_energy < 1e-3);
        assert_eq!(rep.energy_trace().len(), rep.iterations + 1);
    }

    #[test]
    fn ergodic_average_is_mean_of_iterates() {
        let (prob, u0, p0) = toy();
        let mut seen = Vec::new();
        let rep = run_gprox_observed(
            &prob,
            &StepPlan::manual(0.3, 0.9),
            &u0,
            &p0,
            &StoppingRule::fixed(7),
            |n, u, _| {
                if n > 0 {
                    seen.push(u.clone())
                }
            },
        )
        .unwrap();
        assert_eq!(seen.len(), 7);
        let mut mean = u0.zeros_like();
        for u in &seen {
            mean.axpby(1.0, u, 1.0 / 7.0);
        }
        assert!((&mean - &rep.final_ergodic).norm_linf() < 1e-14);
        assert_eq!(rep.termination, Termination::MaxIters);
    }

    #[test]
    fn cp2_theta_is_one_without_convexity() {
        assert_eq!(cp2_theta(0.0, 123.0), 1.0);
        assert!((cp2_theta(1.5, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn trace_csv_has_fixed_header() {
        let (prob, u0, p0) = toy();
        let rep = run_gprox(&prob, &StepPlan::manual(0.5, 1.9), &u0, &p0, &StoppingRule::fixed(2))
            .unwrap();
        let csv = rep.trace_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iteration,energy,gap,elapsed_seconds"));
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn step_plan_takes_smaller_radius() {
        let a = StepPlan::from_radii(3.0, 5.0, 0.99);
        assert_eq!(a.tau, 3.0);
        assert_eq!(a.provenance, StepProvenance::Theory);
        let b = StepPlan::from_radii(3.0, 2.0, 0.99);
        assert_eq!(b.tau, 2.0);
        assert_eq!(b.provenance, StepProvenance::DiscreteCap);
        assert!((b.product() - 0.99).abs() < 1e-15);
    }
}
