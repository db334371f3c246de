use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

use config::RunConfig;

/// Train and evaluate knowledge-tracing models on interaction logs.
#[derive(Debug, Parser)]
#[command(name = "sfkt", version)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest a CSV log and write the prepared dataset cache.
    Prepare(PrepareArgs),
    /// Train one model per seed on a prepared cache.
    Train(TrainArgs),
    /// Score the test split and write overall and per-length reports.
    Evaluate(EvaluateArgs),
    /// Export the practice-number similarity matrices of a checkpoint.
    ExportSimilarity(SimilarityArgs),
    /// Run gradient, count-oracle and closed-form self-checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct PrepareArgs {
    /// Interaction CSV (columns student_id, question_id, concept_ids, correct, order).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output cache directory [default: cache]
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Window length L [default: 200]
    #[arg(long)]
    max_len: Option<usize>,
    /// Share of each student's sequence used for training and validation; the rest is test [default: 0.8]
    #[arg(long)]
    train_frac: Option<f64>,
    /// Share of that training prefix held out (at its end) for validation [default: 0.1]
    #[arg(long)]
    val_frac: Option<f64>,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    allow_skipped: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Prepared cache directory [default: cache]
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Checkpoint and log directory [default: checkpoints]
    #[arg(long)]
    checkpoints: Option<PathBuf>,
    /// Maximum number of epochs [default: 100]
    #[arg(long)]
    epochs: Option<usize>,
    /// Early-stopping patience in epochs [default: 5]
    #[arg(long)]
    patience: Option<usize>,
    /// Single run seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated seeds; one model is trained per seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    lr: Option<f64>,
    /// Mini-batch size [default: 24]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Hidden width d, also used for every embedding width [default: 64]
    #[arg(long)]
    dim: Option<usize>,
    /// Count buckets B [default: 100]
    #[arg(long)]
    buckets: Option<usize>,
    /// Meta-numbers M [default: 100]
    #[arg(long)]
    meta_numbers: Option<usize>,
    /// Contrastive loss weight [default: 0.5]
    #[arg(long)]
    lambda_cl: Option<f64>,
    /// Perturbation loss weight [default: 1.0]
    #[arg(long)]
    lambda_pert: Option<f64>,
    /// Contrastive temperature [default: 1.0]
    #[arg(long)]
    temperature: Option<f64>,
    /// Dropout rate of the perturbation path [default: 0.2]
    #[arg(long)]
    dropout: Option<f64>,
    /// Global gradient-norm clip, 0 disables [default: 5.0]
    #[arg(long)]
    grad_clip: Option<f64>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Prepared cache directory [default: cache]
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Checkpoint file; repeatable. Defaults to every seed-*.ckpt in the checkpoint directory.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    /// Checkpoint directory [default: checkpoints]
    #[arg(long)]
    checkpoints: Option<PathBuf>,
    /// Report directory [default: reports]
    #[arg(long)]
    reports: Option<PathBuf>,
    /// Comma-separated bucket edges [default: 10,50,100,200]
    #[arg(long, value_delimiter = ',')]
    bucket_edges: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SideArg {
    Success,
    Failure,
    Both,
}

#[derive(Debug, Args)]
struct SimilarityArgs {
    /// Checkpoint file.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Which projector to export.
    #[arg(long, value_enum, default_value_t = SideArg::Both)]
    side: SideArg,
    /// Largest practice count N; the matrix covers 0..=N [default: 50]
    #[arg(long)]
    max_count: Option<u32>,
    /// Output directory [default: reports]
    #[arg(long)]
    reports: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Coordinates sampled by the finite-difference check.
    #[arg(long, default_value_t = 200)]
    grad_coords: usize,
    /// Random sequences for the count oracle.
    #[arg(long, default_value_t = 1000)]
    count_sequences: usize,
    /// Corrupt one backward rule (affine, dot, sigmoid, relu, softmax, gather, mul, add, concat, log-sum-exp).
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<commands::CheckFailed>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Prepare(a) => {
            set(&mut config.paths.data, a.data.map(Some));
            set(&mut config.paths.cache, a.cache);
            set(&mut config.data.max_len, a.max_len);
            set(&mut config.data.train_frac, a.train_frac);
            set(&mut config.data.val_frac, a.val_frac);
            config.validate()?;
            commands::prepare(&config, a.allow_skipped)
        }
        Command::Train(a) => {
            // A lone --seed replaces any seed list from the file.
            if a.seed.is_some() && a.seeds.is_none() {
                config.seeds.clear();
            }
            set(&mut config.paths.cache, a.cache);
            set(&mut config.paths.checkpoints, a.checkpoints);
            set(&mut config.seeds, a.seeds);
            let t = &mut config.train;
            set(&mut t.max_epochs, a.epochs);
            set(&mut t.patience, a.patience);
            set(&mut t.seed, a.seed);
            set(&mut t.learning_rate, a.lr);
            set(&mut t.batch_size, a.batch_size);
            set(&mut t.grad_clip, a.grad_clip);
            if let Some(d) = a.dim {
                let m = &mut t.model;
                (m.dim, m.student_dim, m.question_dim, m.concept_dim, m.response_dim) = (d, d, d, d, d);
            }
            set(&mut t.model.buckets, a.buckets);
            set(&mut t.model.meta_numbers, a.meta_numbers);
            set(&mut t.loss.lambda_cl, a.lambda_cl);
            set(&mut t.loss.lambda_pert, a.lambda_pert);
            set(&mut t.loss.temperature, a.temperature);
            set(&mut t.loss.dropout, a.dropout);
            config.validate()?;
            commands::train(&config)
        }
        Command::Evaluate(a) => {
            set(&mut config.paths.cache, a.cache);
            set(&mut config.paths.checkpoints, a.checkpoints);
            set(&mut config.paths.reports, a.reports);
            set(&mut config.eval.bucket_edges, a.bucket_edges);
            config.validate()?;
            commands::evaluate(&config, &a.checkpoint)
        }
        Command::ExportSimilarity(a) => {
            set(&mut config.paths.reports, a.reports);
            set(&mut config.eval.similarity_max_count, a.max_count);
            let sides = match a.side {
                SideArg::Success => vec![sfkt::total_term::Side::Success],
                SideArg::Failure => vec![sfkt::total_term::Side::Failure],
                SideArg::Both => vec![sfkt::total_term::Side::Success, sfkt::total_term::Side::Failure],
            };
            commands::export_similarity(&config, &a.checkpoint, &sides)
        }
        Command::Verify(a) => {
            let fault = a.inject_fault.as_deref().map(commands::parse_op).transpose()?;
            commands::verify(&sfkt::verify::VerifyOptions {
                seed: a.seed,
                grad_coordinates: a.grad_coords,
                count_sequences: a.count_sequences,
                fault,
            })
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
