//! `raggym` — agentic retrieval-augmented QA experiments from the command
//! line.
//!
//! Subcommands: `index`, `collect`, `run`, `train-critic`, `eval`,
//! `report`, `replay`. Every command writes its outputs and a manifest
//! atomically into the `--out` directory. Exit codes: 0 success, 1 runtime
//! failure, 2 configuration error; failures print a machine-readable error
//! JSON to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use raggym_core::agents::ArchitectureName;
use raggym_core::config::GlobalConfig;
use raggym_core::experiment::{
    cmd_collect, cmd_eval, cmd_index, cmd_replay, cmd_report, cmd_run, cmd_train_critic,
    CollectArgs, CommandResult, CriticSpec, ExperimentError, RunArgs,
};
use raggym_core::process::AnnotatorKind;

#[derive(Parser)]
#[command(
    name = "raggym",
    version,
    about = "Agentic retrieval-augmented QA: environments, agents, process rewards, critics"
)]
struct Cli {
    /// Configuration file (TOML). Flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory (created atomically).
    #[arg(long)]
    out: PathBuf,

    /// Overwrite an existing output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build a lexical index from a JSONL corpus of {doc_id, title, text}.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Collect annotated trajectories and export preference data.
    Collect {
        /// QA dataset: JSONL of question records.
        #[arg(long)]
        dataset: PathBuf,
        /// Agent architecture.
        #[arg(long, default_value = "re2search", value_parser = parse_arch)]
        arch: ArchitectureName,
        /// Annotator: llm, rollout, or human-file.
        #[arg(long, default_value = "llm")]
        annotator: String,
        /// Ranking file for --annotator human-file.
        #[arg(long)]
        human_file: Option<PathBuf>,
        /// Rollouts per candidate for --annotator rollout.
        #[arg(long, default_value_t = 4)]
        rollouts: usize,
        /// Candidate actions sampled per step.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run episodes over a dataset, greedily or critic-guided.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "re2search", value_parser = parse_arch)]
        arch: ArchitectureName,
        /// Candidate actions sampled per step (best-of-N).
        #[arg(long)]
        n: Option<usize>,
        /// Critic: none, oracle, a critic file path, or an endpoint URL.
        #[arg(long, default_value = "none")]
        critic: String,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Train the linear critic on a preference-pair file.
    TrainCritic {
        /// Pairs JSONL written by collect.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        l2: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Score a run directory against a gold dataset.
    Eval {
        /// Run directory produced by `run`.
        #[arg(long)]
        pred: PathBuf,
        /// Gold QA dataset (JSONL).
        #[arg(long)]
        gold: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Aggregate eval reports across runs.
    Report {
        /// Eval output directories.
        #[arg(long, num_args = 1..)]
        runs: Vec<PathBuf>,
        /// Optional file to write the aggregate JSON to (stdout otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-execute a recorded run from its exchange log (no network).
    Replay {
        /// The recorded run directory.
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn parse_arch(s: &str) -> Result<ArchitectureName, String> {
    ArchitectureName::parse(s).ok_or_else(|| {
        format!(
            "unknown architecture {s:?}; expected one of direct, cot, rag, react, search_o1, re2search"
        )
    })
}

fn load_config(path: &Option<PathBuf>, seed: Option<u64>) -> Result<GlobalConfig, ExperimentError> {
    let mut config = match path {
        Some(p) => GlobalConfig::load(p)?,
        None => GlobalConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn parse_annotator(
    name: &str,
    human_file: Option<PathBuf>,
    rollouts: usize,
) -> Result<AnnotatorKind, ExperimentError> {
    match name {
        "llm" => Ok(AnnotatorKind::Llm),
        "rollout" => Ok(AnnotatorKind::Rollout {
            rollouts_per_candidate: rollouts,
            temperature: 1.0,
        }),
        "human-file" => {
            let path = human_file.ok_or_else(|| {
                ExperimentError::Config("--annotator human-file requires --human-file".into())
            })?;
            Ok(AnnotatorKind::HumanFile { path })
        }
        other => Err(ExperimentError::Config(format!(
            "unknown annotator {other:?}; expected llm, rollout or human-file"
        ))),
    }
}

fn announce(command: &str, result: &CommandResult) {
    println!(
        "{command}: wrote {} (run_id {})",
        result.run_dir.display(),
        result.manifest.run_id
    );
    for (key, value) in &result.manifest.counts {
        println!("  {key}: {value}");
    }
}

fn execute(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Index { corpus, out } => {
            let result = cmd_index(&corpus, &out.out, out.force)?;
            announce("index", &result);
            Ok(())
        }
        Command::Collect {
            dataset,
            arch,
            annotator,
            human_file,
            rollouts,
            n,
            max_steps,
            temperature,
            out,
        } => {
            let mut config = load_config(&cli.config, cli.seed)?;
            if let Some(n) = n {
                config.collection.n_candidates = n;
            }
            if let Some(max_steps) = max_steps {
                config.collection.max_steps = max_steps;
            }
            if let Some(t) = temperature {
                config.collection.temperature = t;
            }
            let args = CollectArgs {
                dataset,
                arch,
                annotator: parse_annotator(&annotator, human_file, rollouts)?,
            };
            let result = cmd_collect(&config, &args, &out.out, out.force)?;
            announce("collect", &result);
            Ok(())
        }
        Command::Run {
            dataset,
            arch,
            n,
            critic,
            max_steps,
            temperature,
            out,
        } => {
            let mut config = load_config(&cli.config, cli.seed)?;
            if let Some(n) = n {
                config.inference.n_candidates = n;
            }
            if let Some(max_steps) = max_steps {
                config.inference.max_steps = max_steps;
            }
            if let Some(t) = temperature {
                config.inference.temperature = t;
            }
            let args = RunArgs {
                dataset,
                arch,
                critic: CriticSpec::parse(&critic),
            };
            let result = cmd_run(&config, &args, &out.out, out.force)?;
            announce("run", &result);
            Ok(())
        }
        Command::TrainCritic {
            pairs,
            epochs,
            learning_rate,
            batch_size,
            l2,
            out,
        } => {
            let mut config = load_config(&cli.config, cli.seed)?;
            if let Some(epochs) = epochs {
                config.train.epochs = epochs;
            }
            if let Some(lr) = learning_rate {
                config.train.learning_rate = lr;
            }
            if let Some(batch_size) = batch_size {
                config.train.batch_size = batch_size;
            }
            if let Some(l2) = l2 {
                config.train.l2 = l2;
            }
            let result = cmd_train_critic(&config, &pairs, &out.out, out.force)?;
            announce("train-critic", &result);
            Ok(())
        }
        Command::Eval { pred, gold, out } => {
            let result = cmd_eval(&pred, &gold, &out.out, out.force)?;
            announce("eval", &result);
            Ok(())
        }
        Command::Report { runs, out } => {
            if runs.is_empty() {
                return Err(ExperimentError::Config("report needs --runs".into()));
            }
            let aggregate = cmd_report(&runs)?;
            let rendered = serde_json::to_string_pretty(&aggregate)
                .map_err(|e| ExperimentError::Runtime(e.to_string()))?;
            match out {
                Some(path) => std::fs::write(&path, rendered + "\n")
                    .map_err(|e| ExperimentError::Runtime(e.to_string()))?,
                None => println!("{rendered}"),
            }
            Ok(())
        }
        Command::Replay { run, out } => {
            let result = cmd_replay(&run, &out.out, out.force)?;
            announce("replay", &result);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let error_json = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{error_json}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
