use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use specpert::harness::report::{to_csv, CsvRow};
use specpert::harness::studies::{trial_violations, DEFAULT_RATIOS};
use specpert::harness::{
    default_levels, dp_release, load_input, resolve_rank, run_beyond_gap, run_bootstrap_suite, run_bound_study, run_metric_study,
    to_canonical_json, BootstrapConfig, ExperimentConfig, HarnessError, InputSpec, RankSpec,
};
use specpert::ingest::{select_rank, RankSelection};
use specpert::noise::NoiseKind;

#[derive(Parser)]
#[command(name = "specpert", version, about = "Perturbation bounds for low-rank approximation under noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Actual truncation error against every bound, per noise level.
    BoundsStudy(StudyArgs),
    /// Spectral, Frobenius and change-in-error metrics, per noise level.
    MetricStudy(StudyArgs),
    /// Bound ratios at fixed ||E||/δ_p, beyond the gap condition.
    BeyondGap {
        #[command(flatten)]
        study: StudyArgs,
        /// Comma-separated target ratios ||E||/δ_p.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
    },
    /// Contour identity, bootstrapping and segment-lemma checks.
    BootstrapSuite {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 10)]
        max_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Relative quadrature tolerance.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gaussian-mechanism release of A_p with a utility certificate.
    DpRelease {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        rank: RankArgs,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        sensitivity: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank chosen by the energy rule.
    RankSelect {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 0.99)]
        energy: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct InputSource {
    /// Data matrix as delimited text.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Built-in spectrum: decay:base=B,n=N | steps:n=N | census | colon | diag:v1,v2,...
    #[arg(long)]
    synthetic: Option<String>,
}

#[derive(Args)]
struct InputArgs {
    #[command(flatten)]
    source: InputSource,
    /// Skip the first line of the input file.
    #[arg(long)]
    header: bool,
    /// Divide the covariance by the number of rows.
    #[arg(long)]
    normalize_rows: bool,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

impl InputArgs {
    fn spec(&self) -> InputSpec {
        match (&self.source.input, &self.source.synthetic) {
            (Some(path), _) => InputSpec::Csv {
                path: path.display().to_string(),
                delimiter: self.delimiter,
                header: self.header,
                normalize_rows: self.normalize_rows,
            },
            (None, Some(spec)) => InputSpec::Synthetic { spec: spec.clone() },
            (None, None) => unreachable!("clap enforces one input source"),
        }
    }
}

#[derive(Args)]
#[group(multiple = false)]
struct RankArgs {
    #[arg(long)]
    p: Option<usize>,
    /// Energy fraction for rank selection.
    #[arg(long)]
    energy: Option<f64>,
}

impl RankArgs {
    fn spec(&self) -> Option<RankSpec> {
        self.p.map(RankSpec::Explicit).or(self.energy.map(RankSpec::Energy))
    }
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    rank: RankArgs,
    #[arg(long, default_value = "gaussian")]
    noise: NoiseKind,
    /// Number of evenly spaced noise levels in (0, 1].
    #[arg(long, default_value_t = 20)]
    levels: usize,
    /// Trials per level (default 100, or 20 for metric-study).
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Prepend a zero noise level.
    #[arg(long)]
    include_zero: bool,
    /// Diagonal noise variance 2 instead of 1.
    #[arg(long)]
    goe_diagonal: bool,
    /// Output file; `.csv` selects CSV, anything else JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl StudyArgs {
    fn config(&self, default_trials: usize) -> Result<ExperimentConfig, HarnessError> {
        if self.levels == 0 {
            return Err(HarnessError::Config("--levels must be >= 1".into()));
        }
        Ok(ExperimentConfig {
            input: self.input.spec(),
            rank: self.rank.spec(),
            noise: self.noise,
            goe_diagonal: self.goe_diagonal,
            levels: default_levels(self.levels, self.include_zero),
            include_zero: self.include_zero,
            trials: self.trials.unwrap_or(default_trials),
            seed: self.seed,
        })
    }
}

fn emit<T: Serialize>(kind: &str, body: &T, rows: Option<Vec<CsvRow>>, out: Option<&PathBuf>) -> Result<(), HarnessError> {
    let is_csv = out.and_then(|p| p.extension()).is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let text = match (is_csv, rows) {
        (true, Some(rows)) => to_csv(&rows)?,
        (true, None) => return Err(HarnessError::Config(format!("{kind} has no CSV form; use a .json output"))),
        (false, _) => to_canonical_json(kind, body)?,
    };
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| HarnessError::Io { path: path.display().to_string(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `Ok(true)` when a theorem-backed check failed.
fn run(cmd: Command) -> Result<bool, HarnessError> {
    match cmd {
        Command::BoundsStudy(a) => {
            let r = run_bound_study(&a.config(100)?)?;
            emit("bounds-study", &r, Some(r.csv_rows()), a.out.as_ref())?;
            for v in &r.violations {
                eprintln!("violation: {} at level {} trial {}: actual {:e} > {:e}", v.bound, v.level, v.trial, v.actual, v.value);
            }
            Ok(!r.violations.is_empty())
        }
        Command::MetricStudy(a) => {
            let r = run_metric_study(&a.config(20)?)?;
            emit("metric-study", &r, Some(r.csv_rows()), a.out.as_ref())?;
            Ok(!r.order_violations.is_empty())
        }
        Command::BeyondGap { study, ratios } => {
            let ratios = ratios.unwrap_or_else(|| DEFAULT_RATIOS.to_vec());
            let r = run_beyond_gap(&study.config(100)?, &ratios)?;
            emit("beyond-gap", &r, Some(r.csv_rows()), study.out.as_ref())?;
            Ok(false)
        }
        Command::BootstrapSuite { instances, max_n, seed, tol, out } => {
            let r = run_bootstrap_suite(&BootstrapConfig { instances, max_n, seed, rel_tol: tol })?;
            emit("bootstrap-suite", &r, None, out.as_ref())?;
            for (i, c) in r.failed_checks() {
                eprintln!("failed: instance {i} {}: {:e} > {:e}", c.name, c.lhs, c.rhs);
            }
            Ok(r.failures > 0)
        }
        Command::DpRelease { input, rank, epsilon, delta, sensitivity, seed, out } => {
            let loaded = load_input(&input.spec())?;
            let (p, _) = resolve_rank(rank.spec(), &loaded)?;
            let r = dp_release(&loaded.matrix, p, epsilon, delta, sensitivity, seed)?;
            emit("dp-release", &r, None, out.as_ref())?;
            let c = &r.certificate;
            Ok(!trial_violations(c, c.actual_error.unwrap_or(0.0), true).is_empty())
        }
        Command::RankSelect { input, energy, out } => {
            let loaded = load_input(&input.spec())?;
            let sel = select_rank(&loaded.spectrum, energy)?;
            #[derive(Serialize)]
            struct RankOut {
                n: usize,
                #[serde(flatten)]
                selection: RankSelection,
            }
            emit("rank-select", &RankOut { n: loaded.spectrum.n(), selection: sel }, None, out.as_ref())?;
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
