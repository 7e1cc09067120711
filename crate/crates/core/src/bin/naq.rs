use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use naq::pipeline::{self, RunConfig};
use naq::Error;

#[derive(Parser)]
#[command(name = "naq", version, about = "Label-free few-shot node classification")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or reuse the similarity index.
    Index,
    /// Generate training episodes.
    Episodes,
    /// Meta-train the encoder.
    Train,
    /// Evaluate on held-out target-class tasks.
    Eval,
    /// Class-level similarity and episode diagnostics.
    Analyze,
    /// Write a synthetic SBM dataset to the output directory.
    Synth,
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Index => {
            let a = pipeline::cmd_index(&cfg)?;
            println!("{}", a.path.display());
        }
        Command::Episodes => {
            let a = pipeline::cmd_episodes(&cfg)?;
            println!("{}", a.path.display());
        }
        Command::Train => {
            let (a, history) = pipeline::cmd_train(&cfg)?;
            println!("{}\n{}", a.path.display(), history.display());
        }
        Command::Eval => {
            let report = pipeline::cmd_eval(&cfg)?;
            println!("{report}");
        }
        Command::Analyze => {
            let report = pipeline::cmd_analyze(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Synth => {
            let mut spec = cfg.synth.clone();
            if cli.seed.is_some() {
                spec.seed = cfg.seed;
            }
            let paths = pipeline::cmd_synth(&spec, &cfg.out)?;
            println!("{}", paths.edges.parent().unwrap_or(&cfg.out).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
