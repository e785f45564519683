use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gprox::bench::{
    compute_ground_truth, emit, emit_image, render, run_table, ExperimentConfig, GroundTruthCache,
    ProblemKind, ReportFormat, SolverKind, StepMode, TableReport,
};

#[derive(Parser)]
#[command(name = "gprox", version, about = "G-prox PDHG solvers for ROF denoising and earth mover's distance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Denoise the disc image with the ROF model.
    Rof(RunArgs),
    /// Earth mover's distance between translated measures.
    Emd(RunArgs),
    /// Grid sweep for a preset; writes table.csv and table.md.
    Bench(RunArgs),
    /// Certify and cache ground-truth energies.
    GroundTruth(RunArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Gprox,
    Pdhg,
    Cp2,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Steps {
    Theory,
    Gridfree,
    Manual,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// ROF on the disc image.
    Disc,
    /// EMD between uniform discs.
    Discs,
    /// EMD between point masses.
    Deltas,
}

#[derive(Args)]
struct RunArgs {
    /// Grid sides, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    grid: Vec<usize>,
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    /// Error tolerances, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    eps: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Solver::Gprox)]
    solver: Solver,
    #[arg(long, value_enum, default_value_t = Steps::Theory)]
    steps: Steps,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Output directory for tables, traces and images.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    trace_stride: usize,
}

impl RunArgs {
    fn config(&self, default_preset: Preset, default_grids: &[usize], default_eps: f64) -> Result<ExperimentConfig> {
        let kind = match self.preset.unwrap_or(default_preset) {
            Preset::Disc => ProblemKind::Rof,
            Preset::Discs => ProblemKind::EmdDiscs,
            Preset::Deltas => ProblemKind::EmdDeltas,
        };
        let steps = match self.steps {
            Steps::Theory => StepMode::Theory,
            Steps::Gridfree => StepMode::DiscretizationIndependent,
            Steps::Manual => {
                let Some(tau) = self.tau else {
                    bail!("--steps manual needs --tau");
                };
                StepMode::Manual {
                    tau,
                    sigma: self.sigma.unwrap_or(0.99 / tau),
                }
            }
        };
        if self.steps != Steps::Manual && (self.tau.is_some() || self.sigma.is_some()) {
            bail!("--tau/--sigma require --steps manual");
        }
        let grids = if self.grid.is_empty() {
            default_grids.to_vec()
        } else {
            self.grid.clone()
        };
        let eps = if self.eps.is_empty() {
            vec![default_eps]
        } else {
            self.eps.clone()
        };
        let config = ExperimentConfig {
            kind,
            grids,
            lambda: self.lambda,
            eps,
            solver: match self.solver {
                Solver::Gprox => SolverKind::Gprox,
                Solver::Pdhg => SolverKind::Pdhg,
                Solver::Cp2 => SolverKind::Cp2,
            },
            steps,
            max_iterations: self.max_iters,
            trace_stride: self.trace_stride,
            output_dir: self.out.clone(),
        };
        config.validate()?;
        Ok(config)
    }

    fn cache(&self) -> GroundTruthCache {
        let default = match &self.out {
            Some(out) => out.join("ground_truth"),
            None => PathBuf::from(".gprox-cache"),
        };
        GroundTruthCache::from_env(default)
    }
}

fn write_row_artifacts(report: &TableReport, config: &ExperimentConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for row in &report.rows {
        let stem = format!("{}_{}_eps{:e}", config.kind.as_str(), row.grid, row.eps);
        if !row.trace.is_empty() {
            let mut csv = String::from("iteration,energy,gap,elapsed_seconds\n");
            for t in &row.trace {
                csv.push_str(&format!("{},{},{},{}\n", t.iteration, t.energy, t.gap, t.elapsed_seconds));
            }
            let path = out.join(format!("{stem}_trace.csv"));
            std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
        }
        if let Some(img) = &row.image {
            emit_image(img, out.join(format!("{stem}.pgm")))?;
        }
    }
    Ok(())
}

fn solve(args: &RunArgs, preset: Preset, grids: &[usize], eps: f64) -> Result<ExitCode> {
    let config = args.config(preset, grids, eps)?;
    let cache = args.cache();
    let report = run_table(&config, &cache)?;
    print!("{}", render(&report, ReportFormat::Markdown));
    if let Some(out) = &config.output_dir {
        emit(&report, ReportFormat::Csv, out.join("table.csv"))?;
        emit(&report, ReportFormat::Markdown, out.join("table.md"))?;
        write_row_artifacts(&report, &config, out)?;
    }
    Ok(if report.any_diverged() {
        ExitCode::from(2)
    } else if report.all_met() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn ground_truth(args: &RunArgs) -> Result<ExitCode> {
    let config = args.config(Preset::Disc, &[128, 256, 512], 1e-2)?;
    let cache = args.cache();
    println!("grid,eps,f_bar,certified_gap,iterations,cached");
    for &grid in &config.grids {
        for &eps in &config.eps {
            let t = compute_ground_truth(&config, grid, eps, &cache)?;
            println!(
                "{},{},{},{:e},{},{}",
                t.grid, eps, t.f_bar, t.certified_gap, t.iterations_used, t.from_cache
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Rof(a) => {
            if matches!(a.preset, Some(Preset::Discs | Preset::Deltas)) {
                bail!("rof only supports --preset disc");
            }
            solve(a, Preset::Disc, &[256], 1e-2)
        }
        Command::Emd(a) => {
            if a.preset == Some(Preset::Disc) {
                bail!("emd supports --preset discs or deltas");
            }
            solve(a, Preset::Discs, &[256], 1e-3)
        }
        Command::Bench(a) => {
            let eps = if matches!(a.preset, Some(Preset::Discs | Preset::Deltas)) { 1e-3 } else { 1e-2 };
            solve(a, Preset::Disc, &[128, 256, 512], eps)
        }
        Command::GroundTruth(a) => ground_truth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
