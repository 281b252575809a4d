use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fourier_lasso::bench::run_bench;
use fourier_lasso::io::{read_mask, read_volume, write_mask, write_volume, MaskFormat};
use fourier_lasso::ipm::{solve, IpmConfig, LassoProblem, SolveStatus};
use fourier_lasso::report::{bench_report_lines, write_lines, write_solve_report, RunMetadata};
use fourier_lasso::synthetic::{generate_synthetic, DEFAULT_MISSING_FRACTION};
use fourier_lasso::{init_threads_from_env, PcgConfig, SyntheticSpec};

/// Sparse recovery of missing samples in real volumes by l1-penalized least
/// squares in the Fourier domain.
#[derive(Parser)]
#[command(name = "fourier-lasso", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the LASSO problem for an observed volume and mask.
    Solve(SolveArgs),
    /// Solve synthetic cubes of increasing size and report timings.
    Bench(BenchArgs),
    /// Write a synthetic noisy volume, its mask and the noise-free truth.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Full-grid volume; values at missing indices are ignored.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Defaults to 0.1 |M_perp^T b|_inf.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Absolute PCG tolerance on the preconditioned residual.
    #[arg(long, default_value_t = 1e-12)]
    cg_tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Recovered coefficients, written as a volume.
    #[arg(long)]
    output: PathBuf,
    /// Line-delimited JSON report.
    #[arg(long)]
    report: PathBuf,
    /// Reconstructed full signal, written as a volume.
    #[arg(long)]
    impute: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Cube edge lengths.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Solves per size; the fastest wall time is reported.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MISSING_FRACTION)]
    missing_fraction: f64,
    /// Defaults to `seed + 1`.
    #[arg(long)]
    missing_seed: Option<u64>,
    /// Noisy volume.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, value_enum, default_value_t = MaskKind::IndexList)]
    mask_format: MaskKind,
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskKind {
    IndexList,
    ByteMask,
}

impl From<MaskKind> for MaskFormat {
    fn from(kind: MaskKind) -> Self {
        match kind {
            MaskKind::IndexList => MaskFormat::IndexList,
            MaskKind::ByteMask => MaskFormat::ByteMask,
        }
    }
}

/// Exit statuses beyond success.
const EXIT_INPUT: u8 = 1;
const EXIT_MAX_ITERS: u8 = 2;
const EXIT_SOLVER: u8 = 3;

/// Failure tagged with the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn input(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_INPUT,
        error,
    }
}

fn solver(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_SOLVER,
        error: error.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads_from_env()
        .map_err(|e| input(e.into()))
        .and_then(|_| match cli.command {
            Command::Solve(args) => run_solve(&args),
            Command::Bench(args) => run_bench_cmd(&args),
            Command::Generate(args) => run_generate(&args).map(|()| 0),
        });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn load_problem(args: &SolveArgs) -> anyhow::Result<(Vec<usize>, LassoProblem)> {
    let volume =
        read_volume(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let mask = read_mask(&args.mask).with_context(|| format!("reading {}", args.mask.display()))?;
    if mask.shape().dims() != volume.dims.as_slice() {
        bail!(
            "mask dims {:?} do not match volume dims {:?}",
            mask.shape().dims(),
            volume.dims
        );
    }
    let problem = LassoProblem::from_full_signal(&volume.values, mask)?;
    Ok((volume.dims, problem))
}

fn run_solve(args: &SolveArgs) -> Result<u8, Failure> {
    let (dims, problem) = load_problem(args).map_err(input)?;
    let config = IpmConfig {
        lambda: args.lambda,
        tol: args.tol,
        max_iters: args.max_iters,
        pcg: PcgConfig {
            abs_tol: args.cg_tol,
            ..PcgConfig::default()
        },
        ..IpmConfig::default()
    };
    config.validate().map_err(|e| input(e.into()))?;
    let out = solve(&problem, &config).map_err(solver)?;

    let write = || -> anyhow::Result<()> {
        write_volume(&args.output, &dims, &out.beta)?;
        if let Some(path) = &args.impute {
            write_volume(path, &dims, &problem.reconstruct(&out.beta))?;
        }
        let meta = RunMetadata::new(&dims, problem.mask().missing().len(), &config, &out.report);
        write_solve_report(create(&args.report)?, &meta, &out.report)?;
        Ok(())
    };
    write().map_err(input)?;

    let r = &out.report;
    eprintln!(
        "{:?} after {} IPM iterations ({} PCG), lambda {:.6e}, objective {:.9e}",
        r.status, r.iterations, r.total_krylov_iterations, r.lambda, r.final_objective
    );
    Ok(match r.status {
        SolveStatus::Converged => 0,
        SolveStatus::MaxIterations => EXIT_MAX_ITERS,
    })
}

fn run_bench_cmd(args: &BenchArgs) -> Result<u8, Failure> {
    if args.sizes.is_empty() {
        return Err(input(anyhow::anyhow!("no sizes given")));
    }
    let rows =
        run_bench(&args.sizes, args.seed, args.repeats, &IpmConfig::default()).map_err(solver)?;
    let lines = bench_report_lines(&rows).map_err(solver)?;
    create(&args.report)
        .and_then(|f| Ok(write_lines(f, &lines)?))
        .map_err(input)?;

    let mut stdout = io::stdout().lock();
    let _ = writeln!(
        stdout,
        "{:>6} {:>10} {:>12} {:>6} {:>8} {:>10}",
        "edge", "unknowns", "variables", "ipm", "pcg", "seconds"
    );
    for r in &rows {
        let _ = writeln!(
            stdout,
            "{:>6} {:>10} {:>12} {:>6} {:>8} {:>10.3}",
            r.edge,
            r.unknowns,
            r.ipm_variables,
            r.ipm_iterations,
            r.total_krylov_iterations,
            r.wall_time_s
        );
    }
    Ok(if rows.iter().all(|r| r.status == SolveStatus::Converged) {
        0
    } else {
        EXIT_MAX_ITERS
    })
}

fn run_generate(args: &GenerateArgs) -> Result<(), Failure> {
    let spec = SyntheticSpec {
        dims: args.dims.clone(),
        noise_seed: args.seed,
        missing_fraction: args.missing_fraction,
        missing_seed: args.missing_seed.unwrap_or(args.seed.wrapping_add(1)),
    };
    let data = generate_synthetic(&spec).map_err(|e| input(e.into()))?;
    let write = || -> anyhow::Result<()> {
        write_volume(&args.output, &args.dims, &data.noisy.values)?;
        write_mask(&args.mask, &data.mask, args.mask_format.into())?;
        if let Some(path) = &args.truth {
            write_volume(path, &args.dims, &data.truth.values)?;
        }
        Ok(())
    };
    write().map_err(input)
}
