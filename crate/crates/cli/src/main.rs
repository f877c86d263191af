//! Command-line front end: run covariance-corrected multiple permutation
//! tests on CSV data, drive simulation scenarios, and export contrast
//! matrices.
//!
//! Exit codes: 0 on success, 2 on validation or input errors, 3 when the
//! requested correction case is not applicable to the data.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use permcorr::contrasts::ContrastSpec;
use permcorr::engine::{self, DataSet, RunConfig};
use permcorr::error::Error;
use permcorr::io::{self, ReportFormat};
use permcorr::mtp;
use permcorr::sim::{MetricResult, Scenario};
use permcorr::statistics::KernelKind;
use permcorr::CaseMode;

#[derive(Parser)]
#[command(
    name = "permcorr",
    about = "Covariance-corrected multiple permutation tests",
    version
)]
struct Cli {
    /// Number of worker threads (default: all cores; env: PERMCORR_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multiple permutation test on a CSV dataset.
    Test(TestArgs),
    /// Run a Monte-Carlo scenario file and append metrics to a TSV.
    Simulate(SimulateArgs),
    /// Generate or check contrast matrices.
    Contrasts(ContrastArgs),
}

#[derive(Args)]
struct TestArgs {
    /// Input CSV: columns group,y1..yd, or group,time,status with --tau.
    #[arg(long)]
    input: PathBuf,

    /// Restriction time for survival data; switches to RMST analysis.
    #[arg(long)]
    tau: Option<f64>,

    /// Contrast family: dunnett, tukey, centering, or custom.
    #[arg(long, default_value = "dunnett")]
    contrast: String,

    /// CSV file with a custom contrast matrix (requires --contrast custom).
    #[arg(long)]
    contrast_file: Option<PathBuf>,

    /// Comma-separated block sizes for a custom contrast (default: one
    /// hypothesis per row).
    #[arg(long)]
    blocks: Option<String>,

    /// Merge all hypotheses into a single global test.
    #[arg(long, default_value_t = false)]
    global: bool,

    /// Statistic kernel: student, wts, or ats.
    #[arg(long, default_value = "student")]
    stat: String,

    /// Correction case: auto, 1, 2, or 3.
    #[arg(long, default_value = "auto")]
    case: String,

    /// Number of permutation replicates.
    #[arg(short = 'B', long, default_value_t = 1999)]
    b: usize,

    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Gap threshold for case 3.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,

    /// The rate factor is (min group size)^exponent.
    #[arg(long, default_value_t = 0.25)]
    rn_exponent: f64,

    /// Null contrast vector, comma-separated (default: zero).
    #[arg(long)]
    theta0: Option<String>,

    /// Report destination (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,

    /// Report format: tsv or json-lines.
    #[arg(long, default_value = "tsv")]
    format: String,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (flat key = value lines).
    #[arg(long)]
    scenario: PathBuf,

    /// TSV file to append metric rows to (default: stdout only).
    #[arg(long)]
    output: Option<PathBuf>,

    /// List the planned runs without computing anything.
    #[arg(long, default_value_t = false)]
    dry_run: bool,
}

#[derive(Args)]
struct ContrastArgs {
    /// Family to generate: dunnett, tukey, or centering.
    #[arg(long)]
    family: Option<String>,

    #[arg(short, long)]
    k: Option<usize>,

    /// Expand each scalar row to this dimension.
    #[arg(long, default_value_t = 1)]
    d: usize,

    /// Write the matrix to this CSV file (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,

    /// Check a contrast CSV instead of generating one.
    #[arg(long)]
    check: Option<PathBuf>,

    /// Block sizes for --check.
    #[arg(long)]
    blocks: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(err) = configure_workers(cli.workers) {
        eprintln!("error: {err}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Contrasts(args) => cmd_contrasts(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::CaseInapplicable(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn configure_workers(flag: Option<usize>) -> Result<(), Error> {
    let from_env = std::env::var("PERMCORR_WORKERS")
        .ok()
        .map(|v| {
            v.parse::<usize>()
                .map_err(|_| Error::InvalidInput(format!("PERMCORR_WORKERS: bad value '{v}'")))
        })
        .transpose()?;
    if let Some(workers) = flag.or(from_env) {
        if workers == 0 {
            return Err(Error::InvalidInput("worker count must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    }
    Ok(())
}

fn parse_float_list(raw: &str, what: &str) -> Result<Vec<f64>, Error> {
    raw.split(',')
        .map(|f| {
            f.trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("{what}: cannot parse '{f}'")))
        })
        .collect()
}

fn parse_usize_list(raw: &str, what: &str) -> Result<Vec<usize>, Error> {
    raw.split(',')
        .map(|f| {
            f.trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("{what}: cannot parse '{f}'")))
        })
        .collect()
}

fn build_spec(
    contrast: &str,
    contrast_file: Option<&PathBuf>,
    blocks: Option<&String>,
    k: usize,
    d: usize,
    global: bool,
) -> Result<ContrastSpec, Error> {
    let spec = match contrast.to_ascii_lowercase().as_str() {
        "dunnett" => ContrastSpec::dunnett(k)?,
        "tukey" => ContrastSpec::tukey(k)?,
        "centering" => ContrastSpec::centering(k)?,
        "custom" => {
            let path = contrast_file.ok_or_else(|| {
                Error::InvalidInput("--contrast custom requires --contrast-file".into())
            })?;
            let sizes = match blocks {
                Some(raw) => parse_usize_list(raw, "--blocks")?,
                None => Vec::new(),
            };
            let spec = io::read_contrast_csv(path, &sizes, k, d)?;
            if !spec.check_contrast() {
                eprintln!(
                    "warning: matrix does not satisfy the contrast property; \
                     permutation validity is not guaranteed"
                );
            }
            // Custom matrices are already sized for k*d columns.
            return Ok(if global { spec.as_global() } else { spec });
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown contrast '{other}' (expected dunnett, tukey, centering, or custom)"
            )))
        }
    };
    let spec = if d > 1 { spec.expand_multivariate(d)? } else { spec };
    Ok(if global { spec.as_global() } else { spec })
}

fn cmd_test(args: TestArgs) -> Result<(), Error> {
    let format: ReportFormat = args.format.parse()?;
    let kernel: KernelKind = args.stat.parse()?;
    let case_mode: CaseMode = args.case.parse()?;

    let data = match args.tau {
        Some(tau) => DataSet::Survival(io::read_survival_csv(&args.input, tau)?),
        None => DataSet::Grouped(io::read_grouped_csv(&args.input)?),
    };
    let spec = build_spec(
        &args.contrast,
        args.contrast_file.as_ref(),
        args.blocks.as_ref(),
        data.k(),
        data.analysis_dim(),
        args.global,
    )?;

    let mut cfg = RunConfig::new(args.b, args.alpha, args.seed);
    cfg.kernel = kernel;
    cfg.case_mode = case_mode;
    cfg.eps = args.eps;
    cfg.rn_exponent = args.rn_exponent;
    if let Some(raw) = &args.theta0 {
        cfg.theta0 = Some(ndarray::Array1::from(parse_float_list(raw, "--theta0")?));
    }

    let started = Instant::now();
    let run = engine::run(&data, &spec, &cfg)?;
    let report = mtp::balanced_report(
        &run.w_obs,
        run.w_perm.view(),
        &spec.labels(),
        args.alpha,
        "corrected_permutation",
    )?;
    let elapsed = started.elapsed();

    match &args.output {
        Some(path) => {
            let file = std::fs::File::create(path)?;
            io::write_report(file, &report, Some(&run.diagnostics), format)?;
        }
        None => {
            let stdout = std::io::stdout().lock();
            io::write_report(stdout, &report, Some(&run.diagnostics), format)?;
        }
    }
    for warning in &run.diagnostics.warnings {
        eprintln!("warning: {warning}");
    }
    eprintln!(
        "{} hypotheses, {} rejected, case {}, {} replicates in {:.2?}",
        report.hypotheses.len(),
        report.hypotheses.iter().filter(|h| h.reject).count(),
        run.diagnostics.case.name(),
        args.b,
        elapsed
    );
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let scenario = Scenario::from_file(&args.scenario)?;
    if args.dry_run {
        println!(
            "scenario '{}': application {}, k={}, d={}, n={:?}",
            scenario.label,
            scenario.application.name(),
            scenario.k,
            scenario.d,
            scenario.sizes
        );
        for method in &scenario.methods {
            println!(
                "  planned: method {} with n_sim={}, b={}, alpha={}",
                method.name(),
                scenario.n_sim,
                scenario.b,
                scenario.alpha
            );
        }
        return Ok(());
    }

    let started = Instant::now();
    let results = permcorr::sim::run_scenario(&scenario)?;
    let elapsed = started.elapsed();

    println!("{}", MetricResult::tsv_header());
    for row in &results {
        println!("{}", row.to_tsv_row());
    }
    eprintln!("{} repetitions in {:.2?}", scenario.n_sim, elapsed);

    if let Some(path) = &args.output {
        use std::io::Write;
        let exists = path.exists() && std::fs::metadata(path)?.len() > 0;
        let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        if !exists {
            writeln!(file, "{}", MetricResult::tsv_header())?;
        }
        for row in &results {
            writeln!(file, "{}", row.to_tsv_row())?;
        }
    }
    Ok(())
}

fn cmd_contrasts(args: ContrastArgs) -> Result<(), Error> {
    if let Some(path) = &args.check {
        let k = args
            .k
            .ok_or_else(|| Error::InvalidInput("--check requires -k".into()))?;
        let sizes = match &args.blocks {
            Some(raw) => parse_usize_list(raw, "--blocks")?,
            None => Vec::new(),
        };
        let spec = io::read_contrast_csv(path, &sizes, k, args.d)?;
        println!(
            "rows: {}, hypotheses: {}, rank: {}, contrast property: {}",
            spec.n_rows(),
            spec.n_hypotheses(),
            spec.rank(),
            if spec.check_contrast() { "satisfied" } else { "VIOLATED" }
        );
        if !spec.check_contrast() {
            eprintln!("warning: rows do not annihilate the pooled mean direction");
        }
        return Ok(());
    }

    let family = args
        .family
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("need --family or --check".into()))?;
    let k = args
        .k
        .ok_or_else(|| Error::InvalidInput("--family requires -k".into()))?;
    let spec = build_spec(family, None, None, k, args.d, false)?;
    match &args.output {
        Some(path) => {
            let file = std::fs::File::create(path)?;
            io::write_contrast_csv(file, &spec)?;
        }
        None => {
            let stdout = std::io::stdout().lock();
            io::write_contrast_csv(stdout, &spec)?;
        }
    }
    Ok(())
}
