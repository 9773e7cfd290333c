use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lcg_core::config::Config;
use lcg_core::pipeline::{self, Stage};
use lcg_core::report::ConfidenceHistogram;
use lcg_core::{ErrorKind, LcgError};

/// Select low-confidence instruction data: cluster, train a small scorer on
/// centroid-near records, keep what it is unsure about.
#[derive(Parser, Debug)]
#[command(name = "lcg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    options: Options,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Run every stage in order.
    Run,
    /// Compute or import embeddings into embeddings.lcge.
    Embed,
    /// K-means over the normalized embeddings.
    Cluster,
    /// Pick centroid-proximal records as pseudo-labeled training data.
    Coreset,
    /// Train the confidence scorer on the coreset.
    Train,
    /// Score every non-coreset record.
    Score,
    /// Select the low-confidence subset and write subset.jsonl.
    Select,
    /// Build report.json and print the confidence histogram.
    Report,
    /// Learning-rate sweep on a stratified coreset split.
    Sweep,
}

/// Every option mirrors a key of the config file; flags win over the file.
#[derive(Args, Debug, Default)]
struct Options {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    dataset: Option<String>,
    /// jsonl or json-array
    #[arg(long, global = true)]
    format: Option<String>,
    /// lcge or hashing
    #[arg(long, global = true)]
    provider: Option<String>,
    #[arg(long, global = true)]
    embeddings_path: Option<String>,
    #[arg(long, global = true)]
    dim: Option<String>,
    /// number of clusters
    #[arg(long, global = true)]
    k: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    max_iter: Option<String>,
    #[arg(long, global = true)]
    tol: Option<String>,
    /// nearest_fraction or distance_percentile
    #[arg(long, global = true)]
    coreset_mode: Option<String>,
    #[arg(long, global = true)]
    coreset_param: Option<String>,
    /// mlp or mnb
    #[arg(long, global = true)]
    classifier: Option<String>,
    #[arg(long, global = true)]
    hidden: Option<String>,
    #[arg(long, global = true)]
    lr: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<String>,
    #[arg(long, global = true)]
    batch: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<String>,
    /// threshold or topk
    #[arg(long, global = true)]
    strategy: Option<String>,
    #[arg(long, global = true)]
    tau: Option<String>,
    #[arg(long, global = true)]
    k_per_cluster: Option<String>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    include_coreset: Option<String>,
    /// also run the learning-rate sweep during `run`
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    sweep: Option<String>,
    /// comma-separated learning rates
    #[arg(long, global = true)]
    sweep_lrs: Option<String>,
    #[arg(long, global = true)]
    out_dir: Option<String>,
    /// worker threads (0 = one per core); results do not depend on it
    #[arg(long, global = true)]
    threads: Option<String>,
}

impl Options {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("dataset", &self.dataset),
            ("format", &self.format),
            ("provider", &self.provider),
            ("embeddings_path", &self.embeddings_path),
            ("dim", &self.dim),
            ("k", &self.k),
            ("seed", &self.seed),
            ("max_iter", &self.max_iter),
            ("tol", &self.tol),
            ("coreset_mode", &self.coreset_mode),
            ("coreset_param", &self.coreset_param),
            ("classifier", &self.classifier),
            ("hidden", &self.hidden),
            ("lr", &self.lr),
            ("epochs", &self.epochs),
            ("batch", &self.batch),
            ("alpha", &self.alpha),
            ("strategy", &self.strategy),
            ("tau", &self.tau),
            ("k_per_cluster", &self.k_per_cluster),
            ("include_coreset", &self.include_coreset),
            ("sweep", &self.sweep),
            ("sweep_lrs", &self.sweep_lrs),
            ("out_dir", &self.out_dir),
            ("threads", &self.threads),
        ]
    }

    fn to_config(&self) -> Result<Config, LcgError> {
        let mut config = Config::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| LcgError::Config(format!("cannot read {}: {e}", path.display())))?;
            config.apply_text(&text)?;
        }
        for (key, value) in self.pairs() {
            if let Some(v) = value {
                config.set(key, v).map_err(|e| LcgError::Config(format!("--{}: {e}", key.replace('_', "-"))))?;
            }
        }
        Ok(config)
    }
}

fn exit_code(err: &LcgError) -> u8 {
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn execute(command: Command, config: &Config) -> Result<(), LcgError> {
    let stage = match command {
        Command::Run => {
            let summary = pipeline::run(config)?;
            println!(
                "{} records, {} in coreset, {} scored, {} selected -> {}",
                summary.records,
                summary.coreset,
                summary.scored,
                summary.selected,
                summary.out_dir.join(pipeline::SUBSET).display()
            );
            return Ok(());
        }
        Command::Embed => Stage::Embed,
        Command::Cluster => Stage::Cluster,
        Command::Coreset => Stage::Coreset,
        Command::Train => Stage::Train,
        Command::Score => Stage::Score,
        Command::Select => Stage::Select,
        Command::Report => Stage::Report,
        Command::Sweep => Stage::Sweep,
    };
    pipeline::run_stage(stage, config)?;
    match stage {
        Stage::Report => {
            let report = pipeline::load_report(&config.out_dir)?;
            let hist = ConfidenceHistogram {
                bins: report.histogram,
                total: report.total,
            };
            print!("{}", hist.render(40));
            println!("{} scored, {} selected", report.selection.scored, report.selection.selected);
        }
        _ => println!("{} done", stage.name()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = cli
        .options
        .to_config()
        .and_then(|config| lcg_core::par::with_threads(config.threads, || execute(cli.command, &config))?);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
