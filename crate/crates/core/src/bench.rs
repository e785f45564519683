//! Experiment harness: gap-certified ground truths, grid sweeps and report
//! emission.
//!
//! Every sweep row runs a solver from zero until `F(u_n) - F̄ < ε`, where
//! `F̄` is a per-grid ground truth obtained from a long G-prox run whose
//! duality gap is below `ε/10`. Ground truths are cached on disk keyed by a
//! fingerprint of everything that determines them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::emd::{delta_measures, disc_measures, emd_setup, emd_step_plan, EmdError, EmdProblem, EmdSteps};
use crate::field::{read_csv, write_csv, write_pgm, FieldError, GridSpec, ScalarField};
use crate::rof::{disc_image, rof_step_plan, RofError, RofProblem, RofSteps};
use crate::saddle::{
    run_cp2, run_gprox, run_pdhg, L2ProxProblem, SaddleProblem, SolveError, SolveReport, StepPlan,
    StoppingRule, Termination, TracePoint, STABILITY_MARGIN,
};
use crate::spectral::{laplacian_norm_power, make_plan};

/// Environment variable overriding the ground-truth cache directory.
pub const CACHE_DIR_ENV: &str = "GPROX_CACHE_DIR";

/// Bumped whenever a change would alter cached ground truths.
const CACHE_VERSION: u32 = 1;

/// Smallest grid side accepted by [`ExperimentConfig::validate`].
pub const MIN_GRID: usize = 16;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "ground truth on {grid}x{grid} not certified after {iterations} iterations: \
         best gap {best_gap:e}, target {target:e}"
    )]
    Uncertified {
        grid: usize,
        iterations: usize,
        best_gap: f64,
        target: f64,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Rof(#[from] RofError),
    #[error(transparent)]
    Emd(#[from] EmdError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

fn io_err(path: &Path, source: std::io::Error) -> BenchError {
    BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// ROF denoising of the disc image.
    Rof,
    /// EMD between translated uniform discs.
    EmdDiscs,
    /// EMD between translated point masses.
    EmdDeltas,
}

impl ProblemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKind::Rof => "rof",
            ProblemKind::EmdDiscs => "emd_discs",
            ProblemKind::EmdDeltas => "emd_deltas",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Gprox,
    Pdhg,
    Cp2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Theory steps capped by the grid-dependent bound.
    Theory,
    /// Theory steps without the grid cap.
    DiscretizationIndependent,
    Manual { tau: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ProblemKind,
    pub grids: Vec<usize>,
    /// Fidelity weight; ROF only.
    pub lambda: f64,
    pub eps: Vec<f64>,
    pub solver: SolverKind,
    pub steps: StepMode,
    pub max_iterations: usize,
    /// Trace sample spacing; 0 keeps only energies.
    pub trace_stride: usize,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(kind: ProblemKind, grids: Vec<usize>, eps: Vec<f64>) -> Self {
        Self {
            kind,
            grids,
            lambda: 10.0,
            eps,
            solver: SolverKind::Gprox,
            steps: StepMode::Theory,
            max_iterations: 100_000,
            trace_stride: 0,
            output_dir: None,
        }
    }

    pub fn rof(lambda: f64, grids: Vec<usize>, eps: Vec<f64>) -> Self {
        Self {
            lambda,
            ..Self::new(ProblemKind::Rof, grids, eps)
        }
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_steps(mut self, steps: StepMode) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: String| Err(BenchError::InvalidConfig(msg));
        if let Some(&m) = self.grids.iter().find(|&&m| m < MIN_GRID) {
            return bad(format!("grid side {m} is below {MIN_GRID}"));
        }
        if let Some(&e) = self.eps.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
            return bad(format!("eps {e} is outside (0, 1)"));
        }
        if self.kind == ProblemKind::Rof && !(self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.kind != ProblemKind::Rof && self.solver != SolverKind::Gprox {
            return bad("EMD runs only with the gprox solver".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if let StepMode::Manual { tau, sigma } = self.steps {
            if !(tau > 0.0 && sigma > 0.0) {
                return bad(format!("manual steps must be positive, got tau {tau}, sigma {sigma}"));
            }
        }
        Ok(())
    }
}

/// A certified per-grid optimal energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub grid: usize,
    pub fingerprint: String,
    pub f_bar: f64,
    pub certified_gap: f64,
    pub iterations_used: usize,
    /// Gap target `ε/10` the certificate was produced for.
    pub gap_target: f64,
    /// True when loaded from disk instead of computed.
    #[serde(skip)]
    pub from_cache: bool,
}

fn fingerprint(kind: ProblemKind, grid: usize, lambda: f64, gap_target: f64) -> String {
    let mut key = format!("v={CACHE_VERSION};kind={};grid={grid};", kind.as_str());
    if kind == ProblemKind::Rof {
        write!(key, "lambda={lambda:e};").unwrap();
    }
    write!(key, "gap={gap_target:e}").unwrap();
    hex::encode(Sha256::digest(key.as_bytes()))
}

/// Disk cache of ground truths, one JSON file per fingerprint plus the ROF
/// minimizer as CSV.
#[derive(Debug, Clone)]
pub struct GroundTruthCache {
    dir: Option<PathBuf>,
}

impl GroundTruthCache {
    pub fn at(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
        }
    }

    /// Always recomputes, never persists.
    pub fn disabled() -> Self {
        Self { dir: None }
    }

    /// `$GPROX_CACHE_DIR` when set, otherwise `default`.
    pub fn from_env(default: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::at(PathBuf::from(dir)),
            _ => Self::at(default),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn json_path(&self, fp: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{fp}.json")))
    }

    fn minimizer_path(&self, fp: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{fp}.minimizer.csv")))
    }

    pub fn load(&self, fingerprint: &str) -> Result<Option<GroundTruth>, BenchError> {
        let Some(path) = self.json_path(fingerprint) else {
            return Ok(None);
        };
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path, e)),
        };
        let mut truth: GroundTruth = serde_json::from_str(&text).map_err(|source| BenchError::Json {
            path: path.display().to_string(),
            source,
        })?;
        truth.from_cache = true;
        Ok(Some(truth))
    }

    /// The stored ROF minimizer for `truth`, if any.
    pub fn load_minimizer(&self, truth: &GroundTruth) -> Result<Option<ScalarField>, BenchError> {
        match self.minimizer_path(&truth.fingerprint) {
            Some(path) if path.exists() => Ok(Some(read_csv(&path)?)),
            _ => Ok(None),
        }
    }

    fn store(&self, truth: &GroundTruth, minimizer: Option<&ScalarField>) -> Result<(), BenchError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        if let (Some(u), Some(path)) = (minimizer, self.minimizer_path(&truth.fingerprint)) {
            let tmp = temp_sibling(&path);
            write_csv(u, &tmp)?;
            fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))?;
        }
        // JSON last: its presence marks a complete entry
        let path = self.json_path(&truth.fingerprint).expect("cache dir set");
        let json = serde_json::to_string_pretty(truth).expect("ground truth serializes");
        write_atomic(&path, json.as_bytes())
    }
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Writes via a temporary sibling and a rename so readers never see a
/// partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), BenchError> {
    let tmp = temp_sibling(path);
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

enum Built {
    Rof(RofProblem),
    Emd(EmdProblem),
}

fn build(kind: ProblemKind, grid: usize, lambda: f64) -> Result<Built, BenchError> {
    let spec = GridSpec::new(grid)?;
    let plan = make_plan(spec);
    Ok(match kind {
        ProblemKind::Rof => Built::Rof(RofProblem::new(disc_image(spec), lambda, plan)?),
        ProblemKind::EmdDiscs => {
            let (a, b) = disc_measures(spec);
            Built::Emd(emd_setup(a, b, plan)?)
        }
        ProblemKind::EmdDeltas => {
            let (a, b) = delta_measures(spec);
            Built::Emd(emd_setup(a, b, plan)?)
        }
    })
}

fn gprox_plan(kind: ProblemKind, built: &Built, eps: f64, mode: StepMode) -> Result<StepPlan, BenchError> {
    if let StepMode::Manual { tau, sigma } = mode {
        return Ok(StepPlan::manual(tau, sigma));
    }
    let grid_free = mode == StepMode::DiscretizationIndependent;
    Ok(match built {
        Built::Rof(p) => {
            rof_step_plan(p, eps, if grid_free { RofSteps::GridFree } else { RofSteps::Capped })?
        }
        Built::Emd(p) => {
            let steps = match (kind, grid_free) {
                (ProblemKind::EmdDiscs, _) => EmdSteps::SmoothMeasures,
                (_, false) => EmdSteps::SingularMeasures,
                (_, true) => EmdSteps::SingularGridFree,
            };
            emd_step_plan(p.spec(), eps, steps)?
        }
    })
}

/// Certifies `F̄` on one grid: G-prox with theory steps until the gap is
/// below `eps/10`, capped at `100 · max_iterations` iterations. Results are
/// cached under `cache`.
pub fn compute_ground_truth(
    config: &ExperimentConfig,
    grid: usize,
    eps: f64,
    cache: &GroundTruthCache,
) -> Result<GroundTruth, BenchError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(BenchError::InvalidConfig(format!("eps {eps} is outside (0, 1)")));
    }
    let target = eps / 10.0;
    let fp = fingerprint(config.kind, grid, config.lambda, target);
    if let Some(truth) = cache.load(&fp)? {
        log::debug!("ground truth {grid}x{grid} loaded from cache");
        return Ok(truth);
    }

    let built = build(config.kind, grid, config.lambda)?;
    let plan = gprox_plan(config.kind, &built, target, StepMode::Theory)?;
    let cap = config.max_iterations.saturating_mul(100);
    let stop = StoppingRule::gap(target, cap).with_trace_stride(0);
    log::info!("certifying ground truth on {grid}x{grid} to gap {target:e}");

    fn certify<S: SaddleProblem>(
        problem: &S,
        plan: &StepPlan,
        u0: &S::Primal,
        p0: &S::Dual,
        stop: &StoppingRule,
    ) -> Result<(SolveReport<S::Primal, S::Dual>, f64), BenchError> {
        let report = run_gprox(problem, plan, u0, p0, stop)?;
        let gap = problem.primal_energy(&report.final_primal) - problem.dual_bound(&report.final_dual);
        Ok((report, gap))
    }

    let (iterations, termination, f_bar, gap, minimizer) = match &built {
        Built::Rof(p) => {
            let (r, gap) = certify(p, &plan, &p.zero_primal(), &p.zero_dual(), &stop)?;
            (r.iterations, r.termination, r.final_energy, gap, Some(r.final_primal))
        }
        Built::Emd(p) => {
            let (r, gap) = certify(p, &plan, &p.zero_flux(), &p.zero_flux(), &stop)?;
            (r.iterations, r.termination, r.final_energy, gap, None)
        }
    };
    if termination != Termination::ToleranceMet || !(gap < target) {
        return Err(BenchError::Uncertified {
            grid,
            iterations,
            best_gap: gap,
            target,
        });
    }
    let truth = GroundTruth {
        grid,
        fingerprint: fp,
        f_bar,
        certified_gap: gap,
        iterations_used: iterations,
        gap_target: target,
        from_cache: false,
    };
    cache.store(&truth, minimizer.as_ref())?;
    Ok(truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub grid: usize,
    pub eps: f64,
    pub iterations: usize,
    pub wall_seconds: f64,
    pub termination: Termination,
    pub final_energy: f64,
    pub f_bar: f64,
    pub tau: f64,
    pub sigma: f64,
    #[serde(skip)]
    pub trace: Vec<TracePoint>,
    /// Final ROF iterate, kept for image output.
    #[serde(skip)]
    pub image: Option<ScalarField>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TableReport {
    pub rows: Vec<TableRow>,
}

impl TableReport {
    /// True when every row met its tolerance.
    pub fn all_met(&self) -> bool {
        self.rows.iter().all(|r| r.termination == Termination::ToleranceMet)
    }

    pub fn any_diverged(&self) -> bool {
        self.rows.iter().any(|r| r.termination == Termination::Diverged)
    }

    pub fn row(&self, grid: usize, eps: f64) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.grid == grid && r.eps == eps)
    }
}

fn row_from<P, D>(
    grid: usize,
    eps: f64,
    f_bar: f64,
    tau: f64,
    sigma: f64,
    report: SolveReport<P, D>,
    image: Option<ScalarField>,
) -> TableRow {
    TableRow {
        grid,
        eps,
        iterations: report.iterations,
        wall_seconds: report.wall_seconds,
        termination: report.termination,
        final_energy: report.final_energy,
        f_bar,
        tau,
        sigma,
        trace: report.trace,
        image,
    }
}

/// `τ = σ = √(margin / ‖K‖²)`.
fn balanced_steps(norm_sq: f64, product: f64) -> (f64, f64) {
    let t = (product / norm_sq).sqrt();
    (t, t)
}

/// Runs one row per `(grid, eps)` with stopping rule `F(u_n) - F̄ < ε`.
pub fn run_table(config: &ExperimentConfig, cache: &GroundTruthCache) -> Result<TableReport, BenchError> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.grids.len() * config.eps.len());
    for &grid in &config.grids {
        let built = build(config.kind, grid, config.lambda)?;
        for &eps in &config.eps {
            let truth = compute_ground_truth(config, grid, eps, cache)?;
            let stop = StoppingRule::energy(truth.f_bar, eps, config.max_iterations)
                .with_trace_stride(config.trace_stride);
            let row = match (&built, config.solver) {
                (Built::Rof(p), SolverKind::Gprox) => {
                    let plan = gprox_plan(config.kind, &built, eps, config.steps)?;
                    let r = run_gprox(p, &plan, &p.zero_primal(), &p.zero_dual(), &stop)?;
                    let img = Some(r.final_primal.clone());
                    row_from(grid, eps, truth.f_bar, plan.tau, plan.sigma, r, img)
                }
                (Built::Rof(p), SolverKind::Pdhg) => {
                    let (tau, sigma) = match config.steps {
                        StepMode::Manual { tau, sigma } => (tau, sigma),
                        _ => balanced_steps(p.operator_norm_sq(), STABILITY_MARGIN),
                    };
                    let plan = StepPlan::manual(tau, sigma);
                    let r = run_pdhg(p, &plan, &p.zero_primal(), &p.zero_dual(), &stop)?;
                    let img = Some(r.final_primal.clone());
                    row_from(grid, eps, truth.f_bar, tau, sigma, r, img)
                }
                (Built::Rof(p), SolverKind::Cp2) => {
                    let (tau, sigma) = match config.steps {
                        StepMode::Manual { tau, sigma } => (tau, sigma),
                        _ => balanced_steps(p.operator_norm_sq(), 1.0),
                    };
                    let r = run_cp2(p, p.lambda(), tau, sigma, &p.zero_primal(), &p.zero_dual(), &stop)?;
                    let img = Some(r.final_primal.clone());
                    row_from(grid, eps, truth.f_bar, tau, sigma, r, img)
                }
                (Built::Emd(p), _) => {
                    let plan = gprox_plan(config.kind, &built, eps, config.steps)?;
                    let r = run_gprox(p, &plan, &p.zero_flux(), &p.zero_flux(), &stop)?;
                    row_from(grid, eps, truth.f_bar, plan.tau, plan.sigma, r, None)
                }
            };
            log::info!(
                "{} {grid}x{grid} eps {eps:e}: {} iterations, {}",
                config.kind.as_str(),
                row.iterations,
                row.termination
            );
            rows.push(row);
        }
    }
    Ok(TableReport { rows })
}

/// Energy growth beyond which the instability demo declares divergence.
///
/// The dual iterates stay in the unit ball, so vanilla PDHG on ROF keeps
/// `‖u‖∞ ≤ 1 + ‖div p̄‖∞ / λ`: the energy of an unstable run plateaus at a
/// grid-dependent multiple of its start instead of blowing up.
pub const INSTABILITY_FACTOR: f64 = 100.0;

/// Power iterations used for `‖K‖²` in [`instability_demo`].
const POWER_ITERATIONS: usize = 200;

/// Vanilla PDHG on the ROF disc (`λ = 10`) with `τ = σ` and
/// `τσ‖K‖² = product`, `‖K‖²` from power iteration. Stops on a duality gap
/// below `1e-2` or on energy growth past [`INSTABILITY_FACTOR`].
pub fn instability_demo(grid: usize, product: f64) -> Result<TableRow, BenchError> {
    let eps = 1e-2;
    let spec = GridSpec::new(grid)?;
    let prob = RofProblem::new(disc_image(spec), 10.0, make_plan(spec))?;
    let norm_sq = laplacian_norm_power(spec, POWER_ITERATIONS);
    let (tau, sigma) = balanced_steps(norm_sq, product);
    let stop = StoppingRule::gap(eps, 20_000)
        .with_trace_stride(0)
        .with_divergence_factor(INSTABILITY_FACTOR);
    let r = run_pdhg(&prob, &StepPlan::manual(tau, sigma), &prob.zero_primal(), &prob.zero_dual(), &stop)?;
    Ok(row_from(grid, eps, f64::NAN, tau, sigma, r, None))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

/// `%.6g`: six significant digits, trailing zeros dropped.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    } else {
        let m = trim(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

const COLUMNS: [&str; 5] = ["grid", "eps", "iterations", "seconds", "termination"];

fn row_cells(r: &TableRow) -> [String; 5] {
    [
        r.grid.to_string(),
        format_sig6(r.eps),
        r.iterations.to_string(),
        format_sig6(r.wall_seconds),
        r.termination.as_str().to_string(),
    ]
}

pub fn render(report: &TableReport, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(&COLUMNS.join(","));
            out.push('\n');
            for r in &report.rows {
                out.push_str(&row_cells(r).join(","));
                out.push('\n');
            }
        }
        ReportFormat::Markdown => {
            let _ = writeln!(out, "| {} |", COLUMNS.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(COLUMNS.len()));
            for r in &report.rows {
                let _ = writeln!(out, "| {} |", row_cells(r).join(" | "));
            }
        }
    }
    out
}

/// Writes `report` to `path` in the given format.
pub fn emit(report: &TableReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<(), BenchError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    write_atomic(path, render(report, format).as_bytes())
}

pub fn emit_image(field: &ScalarField, path: impl AsRef<Path>) -> Result<(), BenchError> {
    Ok(write_pgm(field, path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridFunction;

    fn row(grid: usize, termination: Termination) -> TableRow {
        TableRow {
            grid,
            eps: 0.01,
            iterations: 33,
            wall_seconds: 1.23456789,
            termination,
            final_energy: 0.8,
            f_bar: 0.79,
            tau: 1.0,
            sigma: 0.99,
            trace: Vec::new(),
            image: None,
        }
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.01), "0.01");
        assert_eq!(format_sig6(1e-3), "0.001");
        assert_eq!(format_sig6(1.23456789), "1.23457");
        assert_eq!(format_sig6(512.0), "512");
        assert_eq!(format_sig6(123456789.0), "1.23457e+08");
        assert_eq!(format_sig6(1e-7), "1e-07");
        assert_eq!(format_sig6(-0.5), "-0.5");
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(f64::NAN), "nan");
    }

    #[test]
    fn csv_layout() {
        let empty = render(&TableReport::default(), ReportFormat::Csv);
        assert_eq!(empty, "grid,eps,iterations,seconds,termination\n");

        let one = TableReport {
            rows: vec![row(512, Termination::ToleranceMet)],
        };
        let csv = render(&one, ReportFormat::Csv);
        assert_eq!(csv, "grid,eps,iterations,seconds,termination\n512,0.01,33,1.23457,tolerance_met\n");
        assert!(!csv.contains('\r'));

        let md = render(&one, ReportFormat::Markdown);
        assert_eq!(md.lines().count(), 3);
        assert!(md.lines().nth(2).unwrap().contains("| 512 | 0.01 | 33 |"));
    }

    #[test]
    fn report_flags() {
        let mut rep = TableReport {
            rows: vec![row(64, Termination::ToleranceMet)],
        };
        assert!(rep.all_met() && !rep.any_diverged());
        rep.rows.push(row(128, Termination::Diverged));
        assert!(!rep.all_met() && rep.any_diverged());
        assert_eq!(rep.row(128, 0.01).unwrap().termination, Termination::Diverged);
    }

    #[test]
    fn config_validation() {
        let ok = ExperimentConfig::rof(10.0, vec![64], vec![1e-2]);
        assert!(ok.validate().is_ok());
        for bad in [
            ExperimentConfig::rof(10.0, vec![8], vec![1e-2]),
            ExperimentConfig::rof(10.0, vec![64], vec![1.0]),
            ExperimentConfig::rof(0.0, vec![64], vec![1e-2]),
            ExperimentConfig::new(ProblemKind::EmdDiscs, vec![64], vec![1e-2]).with_solver(SolverKind::Cp2),
            ok.clone().with_steps(StepMode::Manual { tau: -1.0, sigma: 1.0 }),
        ] {
            assert!(matches!(bad.validate(), Err(BenchError::InvalidConfig(_))), "{bad:?}");
        }
    }

    #[test]
    fn fingerprints_separate_inputs() {
        let a = fingerprint(ProblemKind::Rof, 64, 10.0, 1e-3);
        assert_eq!(a, fingerprint(ProblemKind::Rof, 64, 10.0, 1e-3));
        assert_ne!(a, fingerprint(ProblemKind::Rof, 64, 20.0, 1e-3));
        assert_ne!(a, fingerprint(ProblemKind::Rof, 128, 10.0, 1e-3));
        assert_ne!(a, fingerprint(ProblemKind::Rof, 64, 10.0, 1e-4));
        assert_ne!(
            fingerprint(ProblemKind::EmdDiscs, 64, 10.0, 1e-3),
            fingerprint(ProblemKind::EmdDeltas, 64, 10.0, 1e-3)
        );
        // lambda is irrelevant for EMD
        assert_eq!(
            fingerprint(ProblemKind::EmdDiscs, 64, 10.0, 1e-3),
            fingerprint(ProblemKind::EmdDiscs, 64, 20.0, 1e-3)
        );
    }

    #[test]
    fn ground_truth_is_cached() {
        let dir = tempfile::tempdir().unwrap();
        let cache = GroundTruthCache::at(dir.path());
        let cfg = ExperimentConfig::rof(10.0, vec![32], vec![1e-2]);
        let first = compute_ground_truth(&cfg, 32, 1e-2, &cache).unwrap();
        assert!(!first.from_cache);
        assert!(first.iterations_used > 0);
        assert!(first.certified_gap <= 1e-3);
        let second = compute_ground_truth(&cfg, 32, 1e-2, &cache).unwrap();
        assert!(second.from_cache);
        assert_eq!(second.f_bar, first.f_bar);
        let u = cache.load_minimizer(&second).unwrap().unwrap();
        assert_eq!(u.spec().side(), 32);

        let uncached = compute_ground_truth(&cfg, 32, 1e-2, &GroundTruthCache::disabled()).unwrap();
        assert!(!uncached.from_cache);
        assert!((uncached.f_bar - first.f_bar).abs() < 1e-15);
    }

    #[test]
    fn uncertified_ground_truth_reports_gap() {
        let cfg = ExperimentConfig::rof(10.0, vec![32], vec![1e-2]).with_max_iterations(1);
        let err = compute_ground_truth(&cfg, 32, 1e-6, &GroundTruthCache::disabled()).unwrap_err();
        match err {
            BenchError::Uncertified { iterations, best_gap, .. } => {
                assert_eq!(iterations, 100);
                assert!(best_gap > 1e-7);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn emit_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let rep = TableReport {
            rows: vec![row(64, Termination::MaxIters)],
        };
        let path = dir.path().join("sub/table.csv");
        emit(&rep, ReportFormat::Csv, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
        let img = dir.path().join("u.pgm");
        emit_image(&ScalarField::constant(GridSpec::new(16).unwrap(), 0.5), &img).unwrap();
        assert!(img.exists());
        let err = emit(&rep, ReportFormat::Csv, "/proc/nonexistent/table.csv").unwrap_err();
        assert!(err.to_string().contains("/proc/nonexistent"));
    }

    #[test]
    fn emd_deltas_ground_truth_near_continuum() {
        let cfg = ExperimentConfig::new(ProblemKind::EmdDeltas, vec![64], vec![1e-2]);
        let t = compute_ground_truth(&cfg, 64, 1e-2, &GroundTruthCache::disabled()).unwrap();
        assert!((0.3..=0.42).contains(&t.f_bar), "{}", t.f_bar);
        assert!(t.certified_gap <= 1e-3);
    }

    #[test]
    fn tables_are_deterministic_and_rows_verified() {
        let dir = tempfile::tempdir().unwrap();
        let cache = GroundTruthCache::at(dir.path());
        let cfg = ExperimentConfig::rof(10.0, vec![32, 48], vec![1e-2, 1e-3]);
        let a = run_table(&cfg, &cache).unwrap();
        let b = run_table(&cfg, &cache).unwrap();
        let strip = |r: &TableReport| {
            render(r, ReportFormat::Csv)
                .lines()
                .map(|l| {
                    let mut c: Vec<&str> = l.split(',').collect();
                    c.remove(3);
                    c.join(",")
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.rows.len(), 4);
        for row in &a.rows {
            assert_eq!(row.termination, Termination::ToleranceMet);
            let spec = GridSpec::new(row.grid).unwrap();
            let prob = RofProblem::new(disc_image(spec), 10.0, make_plan(spec)).unwrap();
            let f = crate::rof::rof_energy(&prob, row.image.as_ref().unwrap());
            assert_eq!(f, row.final_energy);
            assert!(f - row.f_bar < row.eps);
        }

        let emd = ExperimentConfig::new(ProblemKind::EmdDiscs, vec![32], vec![1e-2]);
        let r = run_table(&emd, &cache).unwrap();
        assert_eq!(r.rows[0].tau, 1.0);
        assert!(r.all_met());
    }

    #[test]
    fn instability_rows() {
        assert_eq!(instability_demo(32, 4.0).unwrap().termination, Termination::Diverged);
        assert_eq!(instability_demo(32, 0.9).unwrap().termination, Termination::ToleranceMet);
    }
}
