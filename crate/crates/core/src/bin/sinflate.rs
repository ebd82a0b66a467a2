//! Command-line driver for the experiment harness.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sample_inflation::experiments::output::{emit, to_csv, write_json};
use sample_inflation::experiments::{
    run_dmm, run_gauss, run_theorem_suite, ConfigFile, ExperimentConfig, ExperimentKind, Method, MetricSeries,
    OutputFormat,
};
use sample_inflation::models::{make_synthetic_n, ComponentFamily};
use sample_inflation::{Error, Result};

#[derive(Parser)]
#[command(name = "sinflate", version, about = "Sample inflation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gaussian toy: plain vs inflated importance sampling.
    Gauss(GaussArgs),
    /// Dirichlet mixture: plain vs inflated population Monte Carlo.
    Dmm(DmmArgs),
    /// Randomized checks of the decomposition identity, the error bound and
    /// the inflation cache. Exits with status 1 if any check fails.
    Theorems(TheoremArgs),
    /// Writes a synthetic mixture data set.
    EmitData(EmitDataArgs),
}

#[derive(Args)]
struct Common {
    /// Base seed; every replication derives its own stream from it.
    #[arg(long)]
    seed: u64,
    /// Flat TOML config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct Replicated {
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<usize>>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    method: Option<Method>,
    /// Writes every replication's estimates (and traces) as JSON.
    #[arg(long)]
    details: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Proposal {
    Centered,
    Offcenter,
}

#[derive(Args)]
struct GaussArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    replicated: Replicated,
    #[arg(long, value_enum)]
    proposal: Option<Proposal>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    proposal_df: Option<f64>,
    /// Proposal equal to the target and no evidence offset.
    #[arg(long)]
    sanity: bool,
}

#[derive(Args)]
struct DmmArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    replicated: Replicated,
    /// `gaussian` or `t`.
    #[arg(long)]
    family: Option<ComponentFamily>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    inflation_factor: Option<usize>,
    #[arg(long)]
    mean_scale: Option<f64>,
    #[arg(long)]
    mean_kernel_df: Option<f64>,
    #[arg(long)]
    positive_cv: Option<f64>,
    #[arg(long)]
    simplex_concentration: Option<f64>,
    #[arg(long)]
    label_smoothing: Option<f64>,
    #[arg(long)]
    observations: Option<usize>,
    /// Two comma-separated generating means.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    true_means: Option<Vec<f64>>,
}

#[derive(Args)]
struct TheoremArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    max_set_size: Option<usize>,
    #[arg(long)]
    max_log_weight_span: Option<f64>,
    #[arg(long)]
    cache_instances: Option<usize>,
}

#[derive(Args)]
struct EmitDataArgs {
    #[arg(long)]
    seed: u64,
    /// `gaussian` or `t`.
    #[arg(long, default_value = "gaussian")]
    kind: ComponentFamily,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-2.0, 2.0])]
    means: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    observations: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Common {
    fn layered(&self, flags: ConfigFile) -> Result<ConfigFile> {
        let base = match &self.config {
            Some(path) => ConfigFile::read(path)?,
            None => ConfigFile::default(),
        };
        Ok(base.layer(ConfigFile {
            seed: Some(self.seed),
            output: self.output.clone(),
            format: self.format.map(|f| match f {
                Format::Csv => OutputFormat::Csv,
                Format::Json => OutputFormat::Json,
            }),
            threads: self.threads,
            ..flags
        }))
    }
}

impl Replicated {
    fn flags(&self) -> ConfigFile {
        ConfigFile {
            budgets: self.budgets.clone(),
            replications: self.replications,
            method: self.method,
            ..ConfigFile::default()
        }
    }
}

/// Picks the experiment from the subcommand's flag, then the file, then
/// `fallback`; the file must not name an experiment of another kind.
fn experiment_of(
    file: &ConfigFile,
    flag: Option<ExperimentKind>,
    fallback: ExperimentKind,
    fits: fn(ExperimentKind) -> bool,
) -> Result<ExperimentKind> {
    if let Some(e) = file.experiment.filter(|&e| !fits(e)) {
        return Err(Error::Config(format!("config names experiment {e}, which this subcommand cannot run")));
    }
    Ok(flag.or(file.experiment).unwrap_or(fallback))
}

fn write_series(series: &MetricSeries, cfg: &ExperimentConfig) -> Result<()> {
    match &cfg.output {
        Some(path) => {
            emit(series, path, cfg.format)?;
            eprintln!("wrote {} rows to {}", series.len(), path.display());
        }
        None => match cfg.format {
            OutputFormat::Csv => print!("{}", to_csv(series)?),
            OutputFormat::Json => println!("{}", sample_inflation::experiments::output::to_json(series)?),
        },
    }
    Ok(())
}

fn gauss(args: GaussArgs) -> Result<ExitCode> {
    let mut flags = args.replicated.flags();
    flags.group_size = args.group_size;
    flags.proposal_df = args.proposal_df;
    flags.sanity = args.sanity.then_some(true);
    let file = args.common.layered(flags)?;
    let flag = args.proposal.map(|p| match p {
        Proposal::Centered => ExperimentKind::GaussCentered,
        Proposal::Offcenter => ExperimentKind::GaussOffcenter,
    });
    let experiment = experiment_of(&file, flag, ExperimentKind::GaussCentered, ExperimentKind::is_gauss)?;
    let cfg = ConfigFile {
        experiment: Some(experiment),
        ..file
    }
    .resolve()?;
    let run = run_gauss(&cfg)?;
    write_series(&run.series, &cfg)?;
    if let Some(path) = &args.replicated.details {
        write_json(&run, path)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn dmm(args: DmmArgs) -> Result<ExitCode> {
    let true_means = match args.true_means.as_deref() {
        None => None,
        Some(&[a, b]) => Some([a, b]),
        Some(_) => return Err(Error::Config("--true-means takes exactly two values".into())),
    };
    let flags = ConfigFile {
        generations: args.generations,
        inflation_factor: args.inflation_factor,
        mean_scale: args.mean_scale,
        mean_kernel_df: args.mean_kernel_df,
        positive_cv: args.positive_cv,
        simplex_concentration: args.simplex_concentration,
        label_smoothing: args.label_smoothing,
        observations: args.observations,
        true_means,
        ..args.replicated.flags()
    };
    let file = args.common.layered(flags)?;
    let flag = args.family.map(|f| match f {
        ComponentFamily::Gaussian => ExperimentKind::DmmGauss,
        ComponentFamily::StudentT => ExperimentKind::DmmT,
    });
    let experiment = experiment_of(&file, flag, ExperimentKind::DmmGauss, ExperimentKind::is_dmm)?;
    let cfg = ConfigFile {
        experiment: Some(experiment),
        ..file
    }
    .resolve()?;
    let run = run_dmm(&cfg)?;
    write_series(&run.series, &cfg)?;
    if let Some(path) = &args.replicated.details {
        write_json(&run, path)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn theorems(args: TheoremArgs) -> Result<ExitCode> {
    let flags = ConfigFile {
        instances: args.instances,
        max_set_size: args.max_set_size,
        max_log_weight_span: args.max_log_weight_span,
        cache_instances: args.cache_instances,
        ..ConfigFile::default()
    };
    let file = args.common.layered(flags)?;
    let fits = |e| e == ExperimentKind::TheoremSuite;
    let experiment = experiment_of(&file, None, ExperimentKind::TheoremSuite, fits)?;
    let cfg = ConfigFile {
        experiment: Some(experiment),
        ..file
    }
    .resolve()?;
    let report = run_theorem_suite(&cfg)?;
    for c in &report.checks {
        eprintln!(
            "{} {:<40} instances={:<4} max_residual={:.3e} tolerance={:.0e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.instances,
            c.max_residual,
            c.tolerance
        );
    }
    match &cfg.output {
        Some(path) => write_json(&report, path)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn emit_data(args: EmitDataArgs) -> Result<ExitCode> {
    let &[a, b] = args.means.as_slice() else {
        return Err(Error::Config("--means takes exactly two values".into()));
    };
    let means = [a, b];
    let data = make_synthetic_n(args.kind, means, args.seed, args.observations)?;
    match &args.output {
        Some(path) => data.write(path)?,
        None => print!("{}", data.to_text()),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gauss(a) => gauss(a),
        Command::Dmm(a) => dmm(a),
        Command::Theorems(a) => theorems(a),
        Command::EmitData(a) => emit_data(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
