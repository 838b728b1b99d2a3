use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use fgs_cli::commands::{generation_table, CompareSummary};
use fgs_cli::{cmd_compare, cmd_evaluate, cmd_generate, cmd_stats, cmd_train, thread_limit, CliError, RunConfig};
use fgs_core::fed::Variant;

#[derive(Parser)]
#[command(name = "fgs", version, about = "Federated GraphSAGE link prediction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Config file with dotted key=value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Regime to run; repeatable, overrides `train.variants`.
    #[arg(long = "variant")]
    variants: Vec<Variant>,
}

#[derive(Subcommand)]
enum Command {
    /// Write one synthetic graph file per client.
    Generate(Common),
    /// Train one regime once and write checkpoints.
    Train(Common),
    /// Score the test split with checkpoints from `train`.
    Evaluate(Common),
    /// Run every regime over all repetitions and write reports.
    Compare(Common),
    /// Structural metrics of graph files, one row per relation.
    Stats {
        files: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if !common.variants.is_empty() {
        cfg.variants = common.variants.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(command: Command, stop: &AtomicBool) -> Result<(), CliError> {
    match command {
        Command::Generate(c) => {
            let cfg = load(&c)?;
            let generated = cmd_generate(&cfg, stop)?;
            print!("{}", generation_table(&generated));
        }
        Command::Train(c) => {
            let cfg = load(&c)?;
            for f in cmd_train(&cfg, stop)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Evaluate(c) => {
            let cfg = load(&c)?;
            let (path, rows) = cmd_evaluate(&cfg)?;
            for (country, relation, m) in rows {
                println!("{country} {relation}: roc_auc={:.4} ap={:.4}", m.roc_auc, m.average_precision);
            }
            println!("wrote {}", path.display());
        }
        Command::Compare(c) => {
            let cfg = load(&c)?;
            let CompareSummary { files, runs_completed, .. } = cmd_compare(&cfg, stop)?;
            println!("{runs_completed} runs completed");
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Stats { files, out } => {
            if files.is_empty() {
                return Err(CliError::Config("stats needs at least one graph file".into()));
            }
            let table = cmd_stats(&files)?;
            for w in &table.warnings {
                eprintln!("warning: {w}");
            }
            match out {
                Some(path) => std::fs::write(&path, table.to_csv())
                    .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?,
                None => print!("{}", table.to_csv()),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let result = (|| {
        if let Some(n) = thread_limit(std::env::var("FGS_THREADS").ok().as_deref())? {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
        }
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst))
            .map_err(|e| CliError::Runtime(format!("signal handler: {e}")))?;
        run(cli.command, &stop)
    })();

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fgs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
