//! Command-line front end: run experiments from JSON configs or built-in
//! presets, print convergence-mode tables, and validate configs with a
//! stability report.

use std::collections::BTreeSet;
use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::thread;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ilms::analysis::{convergence_modes, stability_check};
use ilms::experiment::{
    emit_comparison, emit_results, load_spec, preset, run_comparison, run_experiment, Format,
    LoadedSpec, OutputKind, StepRule,
};
use ilms::model::LinkMode;

#[derive(Parser)]
#[command(
    name = "ilms",
    version,
    about = "Deterministic simulator for incremental LMS adaptive networks on a ring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment or size comparison described by a config file.
    Run(RunArgs),
    /// Run a built-in experiment by name.
    Preset(PresetArgs),
    /// Print a convergence-mode table (m,mu_lambda,n_nodes,magnitude) to stdout.
    Modes(ModesArgs),
    /// Validate a config file and report mean-error stability without running trials.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to a JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct PresetArgs {
    /// Built-in experiment name; pass an unknown name to list the choices.
    name: String,
    #[command(flatten)]
    overrides: Overrides,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ModesArgs {
    /// Per-update step size (shared across the listed network sizes).
    #[arg(long)]
    mu: f64,
    /// Regressor-covariance eigenvalues, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    lambda: Vec<f64>,
    /// Network sizes to tabulate, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    nodes: Vec<usize>,
}

#[derive(Args)]
struct CheckArgs {
    /// Path to a JSON experiment config.
    #[arg(long)]
    config: PathBuf,
}

/// Config-file values a flag may override (precedence: flag > file > default).
#[derive(Args)]
struct Overrides {
    /// Root seed for all random streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Measurement times per trial.
    #[arg(long)]
    iterations: Option<usize>,
    /// Worker threads for trial execution [default: available cores].
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct OutputArgs {
    /// Directory to write result files into (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Output formats, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "csv")]
    format: Vec<FormatArg>,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(arg: FormatArg) -> Self {
        match arg {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let spec = load_spec(&args.config)
                .with_context(|| format!("invalid config {}", args.config.display()))?;
            execute(spec, &args.overrides, &args.output, None)
        }
        Command::Preset(args) => {
            let spec = preset(&args.name)?;
            execute(spec, &args.overrides, &args.output, Some(&args.name))
        }
        Command::Modes(args) => modes(&args),
        Command::Check(args) => check(&args),
    }
}

/// Apply flag overrides, run the loaded experiment, emit files, and print
/// the manifest.
fn execute(
    mut spec: LoadedSpec,
    overrides: &Overrides,
    output: &OutputArgs,
    preset_name: Option<&str>,
) -> anyhow::Result<()> {
    if let Some(seed) = overrides.seed {
        spec.set_seed(seed);
    }
    if let Some(trials) = overrides.trials {
        spec.set_trials(trials)?;
    }
    if let Some(iterations) = overrides.iterations {
        spec.set_iterations(iterations)?;
    }
    let parallelism = match overrides.parallelism {
        Some(0) => bail!("--parallelism must be at least 1"),
        Some(n) => n,
        None => thread::available_parallelism().map(NonZeroUsize::get).unwrap_or(1),
    };
    let formats: BTreeSet<Format> = output.format.iter().map(|&f| f.into()).collect();

    let manifest = match &spec {
        LoadedSpec::Experiment(experiment) => {
            let bundle = run_experiment(experiment, parallelism)?;
            emit_results(&bundle, &output.out, &formats, preset_name)?
        }
        LoadedSpec::Comparison(comparison) => {
            let bundle = run_comparison(comparison, parallelism)?;
            emit_comparison(&bundle, &output.out, &formats, preset_name)?
        }
    };
    for path in &manifest {
        println!("{}", path.display());
    }
    Ok(())
}

/// Print mode tables for each requested network size over a shared
/// eigenvalue list, in the same column layout as the modes output file.
fn modes(args: &ModesArgs) -> anyhow::Result<()> {
    if !(args.mu.is_finite() && args.mu > 0.0) {
        bail!("--mu must be a positive finite number, got {}", args.mu);
    }
    if let Some(bad) = args.lambda.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        bail!("--lambda values must be finite and non-negative, got {bad}");
    }
    if args.nodes.contains(&0) {
        bail!("--nodes values must be at least 1");
    }
    println!("m,mu_lambda,n_nodes,magnitude");
    for &n_nodes in &args.nodes {
        let table = convergence_modes(args.mu, &args.lambda, n_nodes);
        for entry in table.entries() {
            println!(
                "{},{:.16e},{},{:.16e}",
                entry.index, entry.mu_lambda, n_nodes, entry.magnitude
            );
        }
    }
    Ok(())
}

/// Validate a config and report, per network it describes, the cycle
/// transition matrix's spectral radius and the resulting stability verdict.
fn check(args: &CheckArgs) -> anyhow::Result<()> {
    let spec = load_spec(&args.config)
        .with_context(|| format!("invalid config {}", args.config.display()))?;
    let base = match &spec {
        LoadedSpec::Experiment(experiment) => experiment,
        LoadedSpec::Comparison(comparison) => comparison.base(),
    };
    let config = base.config();

    println!("config: {} (valid)", args.config.display());
    println!("dimension: {}", config.dimension());
    println!("link_mode: {}", link_mode_name(config.link_mode()));
    println!("seed: {}", config.seed());
    println!("iterations: {}", base.iterations());
    println!("trials: {}", base.trials());
    println!("window_fraction: {}", base.window_fraction());
    let outputs: Vec<&str> = base.outputs().iter().map(|&kind| output_name(kind)).collect();
    println!("outputs: {}", outputs.join(","));

    match &spec {
        LoadedSpec::Experiment(_) => {
            println!("nodes: {}", config.n_nodes());
            let report = stability_check(config);
            println!(
                "stability: spectral_radius={:.6e} {}",
                report.spectral_radius,
                verdict(report.stable)
            );
        }
        LoadedSpec::Comparison(comparison) => {
            let rule = match comparison.step_rule() {
                StepRule::Fair => "fair_eq14",
                StepRule::Fixed => "fixed",
            };
            let sizes: Vec<String> =
                comparison.sizes().iter().map(|size| size.to_string()).collect();
            println!("sizes: {} (step_rule: {})", sizes.join(","), rule);
            for &size in comparison.sizes() {
                let step_size = comparison.step_size_for(size);
                let derived = comparison.derived_experiment(size, step_size)?;
                let report = stability_check(derived.config());
                println!(
                    "stability[n={}]: step_size={:.6e} spectral_radius={:.6e} {}",
                    size,
                    step_size,
                    report.spectral_radius,
                    verdict(report.stable)
                );
            }
        }
    }
    Ok(())
}

fn verdict(stable: bool) -> &'static str {
    if stable {
        "stable"
    } else {
        "UNSTABLE"
    }
}

fn link_mode_name(mode: LinkMode) -> &'static str {
    match mode {
        LinkMode::Ideal => "ideal",
        LinkMode::Noisy => "noisy",
    }
}

fn output_name(kind: OutputKind) -> &'static str {
    match kind {
        OutputKind::LearningCurve => "learning_curve",
        OutputKind::SteadyState => "steady_state",
        OutputKind::Modes => "modes",
        OutputKind::Stability => "stability",
        OutputKind::MeanRecursion => "mean_recursion",
    }
}
