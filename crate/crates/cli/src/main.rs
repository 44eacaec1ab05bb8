//! `kanmat`: synthetic data, association matrices, rankings, transforms and
//! the HTTP service from one binary.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kanmat_core::matrix::MatrixKind;
use kanmat_core::scoring::MetricKind;
use kanmat_core::synth::{Experiment, Ordering};

use crate::config::{CliConfig, Overrides};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "kanmat", version, about = "Spline-based association matrices and feature rankings")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for splits, noise and forests.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON settings file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for matrix and ranking files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, value_enum)]
    metric: Option<Metric>,
    /// Spline grid intervals G.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Spline degree p.
    #[arg(long, global = true)]
    degree: Option<usize>,
    /// Ridge penalty.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Attribution share below which MKAN edges are pruned.
    #[arg(long = "prune-tau", global = true)]
    prune_tau: Option<f64>,
    /// Test fraction for spline fits.
    #[arg(long, global = true)]
    holdout: Option<f64>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Metric {
    Nse,
    Kge,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SynthKind {
    Nonlinear,
    Heteroscedastic,
    Lagged,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum OrderingArg {
    Iid,
    Sorted,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum KindArg {
    Pkan,
    Mkan,
    Pearson,
    Nmi,
}

impl From<KindArg> for MatrixKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Pkan => MatrixKind::Pkan,
            KindArg::Mkan => MatrixKind::Mkan,
            KindArg::Pearson => MatrixKind::Pearson,
            KindArg::Nmi => MatrixKind::Nmi,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic experiment to CSV.
    Synth {
        #[arg(value_enum)]
        experiment: SynthKind,
        #[arg(short = 'n', long, default_value_t = 5000)]
        n: usize,
        /// Lag of the lagged experiment.
        #[arg(long, default_value_t = kanmat_core::synth::DEFAULT_SHIFT)]
        shift: usize,
        #[arg(long, value_enum, default_value = "sorted")]
        ordering: OrderingArg,
        /// Lagged only: drop rows whose lag wrapped around.
        #[arg(long)]
        drop_wrapped: bool,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
    /// Compute a matrix and write `<out>/<kind>.json` and `<out>/<kind>.svg`.
    Matrix {
        #[arg(value_enum)]
        kind: KindArg,
        input: PathBuf,
        /// Comma-separated target rows.
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<String>>,
        /// Comma-separated columns kept as inputs but not as rows.
        #[arg(long = "exclude-targets", value_delimiter = ',')]
        exclude_targets: Vec<String>,
    },
    /// Rank inputs against targets and evaluate top-k forests.
    Rank {
        input: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "mkan,pearson,nmi")]
        methods: Vec<KindArg>,
        /// Input counts to evaluate; defaults to every even k up to the input count.
        #[arg(long, value_delimiter = ',')]
        topk: Option<Vec<usize>>,
        /// Apply log10(v + floor) to each target first.
        #[arg(long)]
        log_targets: bool,
    },
    /// Apply transforms, writing the result and a history sidecar.
    Transform {
        input: PathBuf,
        /// `;`-separated ops such as `lag:Ux:50;subtract_group_mean:p:time;drop:z`.
        #[arg(long, conflicts_with = "history", required_unless_present = "history")]
        ops: Option<String>,
        /// Replay a history sidecar instead of `--ops`.
        #[arg(long)]
        history: Option<PathBuf>,
        output: PathBuf,
    },
    /// Run the HTTP service until interrupted.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long = "data-dir")]
        data_dir: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("KANMAT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("KANMAT_THREADS must be an integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn settings(g: &Global) -> Result<CliConfig, CliError> {
    let overrides = Overrides {
        seed: g.seed,
        metric: g.metric.map(|m| match m {
            Metric::Nse => MetricKind::Nse,
            Metric::Kge => MetricKind::KgeSs,
        }),
        grid: g.grid,
        degree: g.degree,
        lambda: g.lambda,
        prune_tau: g.prune_tau,
        holdout: g.holdout,
    };
    let cfg = CliConfig::load(g.config.as_deref())?.apply(&overrides);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let cfg = settings(&cli.global)?;
    let out = &cli.global.out;
    match cli.command {
        Command::Synth {
            experiment,
            n,
            shift,
            ordering,
            drop_wrapped,
            output,
        } => {
            let experiment = match experiment {
                SynthKind::Nonlinear => Experiment::Nonlinear,
                SynthKind::Heteroscedastic => Experiment::Heteroscedastic,
                SynthKind::Lagged => Experiment::Lagged,
            };
            let ordering = match ordering {
                OrderingArg::Iid => Ordering::Iid,
                OrderingArg::Sorted => Ordering::Sorted,
            };
            let seed = cli.global.seed.unwrap_or(cfg.matrix.fit.seed);
            commands::synth(experiment, n, seed, shift, ordering, drop_wrapped, &output)
        }
        Command::Matrix {
            kind,
            input,
            targets,
            exclude_targets,
        } => commands::matrix(kind.into(), &input, targets, exclude_targets, &cfg, out),
        Command::Rank {
            input,
            targets,
            methods,
            topk,
            log_targets,
        } => {
            let methods: Vec<MatrixKind> = methods.into_iter().map(Into::into).collect();
            commands::rank(&input, &targets, &methods, topk, log_targets, &cfg, out)
        }
        Command::Transform {
            input,
            ops,
            history,
            output,
        } => commands::transform(&input, ops.as_deref(), history.as_deref(), &output),
        Command::Serve { port, host, data_dir } => commands::serve(&host, port, data_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
