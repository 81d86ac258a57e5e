mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

/// Learn list-manipulating programs from input/output examples with
/// differentiable interpreters.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train models on tasks and record success ratios.
    Run(ExperimentArgs),
    /// Run the enumerative search baseline.
    Enumerate {
        #[command(flatten)]
        common: ExperimentArgs,
        /// Wall-clock limit per task, in seconds.
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        max_nodes: Option<u64>,
        /// JSON list of `{"inputs": [...], "output": ...}` to search
        /// against instead of generated examples.
        #[arg(long)]
        examples: Option<PathBuf>,
    },
    /// Render the success-ratio table of a result directory.
    Report {
        #[arg(default_value = "results")]
        dir: PathBuf,
    },
    /// List the benchmark tasks.
    Tasks,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model variants (e.g. `ctpi`, `C+T+I`, `af`, or `all`).
    #[arg(long, value_delimiter = ',')]
    model: Vec<String>,
    /// Tasks (e.g. `len`, `dupK`, or `all`).
    #[arg(long, value_delimiter = ',')]
    task: Vec<String>,
    #[arg(long)]
    k: Option<usize>,
    /// `straightline`, `simple-loop` or `loop`.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    groups: Option<u32>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel restarts.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// 100 restarts on 3 example groups with 3500 epochs each.
    #[arg(long)]
    paper_scale: bool,
}

impl ExperimentArgs {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if self.paper_scale {
            cfg.paper_scale();
        }
        if !self.model.is_empty() {
            cfg.models = self.model;
        }
        if !self.task.is_empty() {
            cfg.tasks = self.task;
        }
        cfg.k = self.k.or(cfg.k);
        cfg.preset = self.preset.or(cfg.preset);
        cfg.restarts = self.restarts.unwrap_or(cfg.restarts);
        cfg.groups = self.groups.unwrap_or(cfg.groups);
        cfg.epochs = self.epochs.unwrap_or(cfg.epochs);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.jobs = self.jobs.or(cfg.jobs);
        cfg.output = self.output.unwrap_or(cfg.output);
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => args.resolve().and_then(|cfg| commands::run(&cfg)),
        Command::Enumerate {
            common,
            time_limit,
            max_nodes,
            examples,
        } => common.resolve().and_then(|mut cfg| {
            if let Some(t) = time_limit {
                cfg.enumerate.time_limit_secs = t;
            }
            cfg.enumerate.max_nodes = max_nodes.or(cfg.enumerate.max_nodes);
            commands::run_enumerate(&cfg, examples.as_deref())
        }),
        Command::Report { dir } => report::report_dir(&dir).map(|t| print!("{t}")),
        Command::Tasks => {
            commands::list_tasks();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
