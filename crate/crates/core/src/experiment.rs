//! Command implementations behind the CLI: index, collect, run,
//! train-critic, eval, report and replay.
//!
//! Every command resolves its effective configuration (file plus flag
//! overrides), executes, and writes its outputs plus a manifest into an
//! atomically created run directory. Collect and run record every model
//! exchange, so `replay` can re-execute them from the log with zero network
//! calls and byte-identical outputs.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::agents::{Agent, ArchitectureName, PromptBundle};
use crate::config::{EndpointSpec, EnvSource, GlobalConfig};
use crate::critic::{
    eval_pairwise_accuracy, load_critic, save_critic, train, ActionScorer, EndpointCritic,
    FeatureExtractor, PreferenceTuple, TrainConfig,
};
use crate::eval::{build_report, query_stats_from_counts, MetricReport};
use crate::fixtures::{FixtureActorConfig, TwoHopFixture};
use crate::gateway::{ChatBackend, Gateway, HttpChatBackend, RoleKind, ScriptBackend, ScriptMode};
use crate::inference::EpisodeRunner;
use crate::manifest::{RunDir, RunManifest, MANIFEST_FILE};
use crate::mdp::{trajectory_from_jsonl, trajectory_to_jsonl, Question, Trajectory};
use crate::process::{
    collect_dataset, export_dataset, AnnotatorKind, CollectionFailure, ExportFormat,
};
use crate::retrieval::{ingest_corpus, read_corpus_jsonl, Environment, HttpDenseRetriever, LexicalIndex};
use crate::seed::derive_seed;

/// Schema tag of preference-pair JSONL records.
pub const PAIRS_SCHEMA: &str = "raggym.pairs.v1";

/// Schema tag of per-episode result records.
pub const RESULT_SCHEMA: &str = "raggym.result.v1";

/// Command failures, split by exit code: configuration errors exit 2,
/// runtime failures exit 1.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Runtime(String),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Runtime(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentError::Config(_) => "config",
            ExperimentError::Runtime(_) => "runtime",
        }
    }
}

impl From<crate::config::ConfigError> for ExperimentError {
    fn from(e: crate::config::ConfigError) -> Self {
        ExperimentError::Config(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Runtime(e.to_string())
}

/// A finished command: where its outputs landed and the manifest.
#[derive(Debug, Clone)]
pub struct CommandResult {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
}

/// Critic selection for `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CriticSpec {
    None,
    /// A critic trained and saved by `train-critic`.
    File { path: PathBuf },
    /// A hosted critic endpoint.
    Url { url: String },
    /// The fixture's oracle critic (desk-scale validation).
    Oracle,
}

impl CriticSpec {
    /// Parses the `--critic` flag: `none`, `oracle`, a URL or a file path.
    pub fn parse(s: &str) -> Self {
        match s {
            "none" => CriticSpec::None,
            "oracle" => CriticSpec::Oracle,
            _ if s.starts_with("http://") || s.starts_with("https://") => CriticSpec::Url {
                url: s.to_string(),
            },
            _ => CriticSpec::File {
                path: PathBuf::from(s),
            },
        }
    }
}

/// Arguments of `collect`, as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectArgs {
    pub dataset: PathBuf,
    pub arch: ArchitectureName,
    pub annotator: AnnotatorKind,
}

/// Arguments of `run`, as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArgs {
    pub dataset: PathBuf,
    pub arch: ArchitectureName,
    pub critic: CriticSpec,
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Reads a QA dataset: JSONL of question records with unique ids.
pub fn read_questions_jsonl(path: &Path) -> Result<Vec<Question>, ExperimentError> {
    let file = std::fs::File::open(path)
        .map_err(|e| ExperimentError::Config(format!("dataset {}: {e}", path.display())))?;
    let mut questions = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(runtime)?;
        if line.trim().is_empty() {
            continue;
        }
        let question: Question = serde_json::from_str(&line).map_err(|e| {
            ExperimentError::Config(format!("dataset {} line {}: {e}", path.display(), i + 1))
        })?;
        question
            .validate()
            .map_err(|e| ExperimentError::Config(format!("dataset line {}: {e}", i + 1)))?;
        if !seen.insert(question.id.clone()) {
            return Err(ExperimentError::Config(format!(
                "dataset has duplicate question id {:?}",
                question.id
            )));
        }
        questions.push(question);
    }
    if questions.is_empty() {
        return Err(ExperimentError::Config(format!(
            "dataset {} contains no questions",
            path.display()
        )));
    }
    Ok(questions)
}

/// Builds the retrieval environment from the config.
pub fn build_environment(cfg: &GlobalConfig) -> Result<Environment, ExperimentError> {
    let env_config = cfg.env.env_config();
    let index = match cfg.env.source {
        EnvSource::FixtureTwoHop => {
            let fixture = TwoHopFixture::new(cfg.fixture.questions, cfg.fixture.seed);
            ingest_corpus(fixture.corpus()).map_err(runtime)?
        }
        EnvSource::Index => {
            let path = cfg
                .env
                .index_path
                .as_ref()
                .ok_or_else(|| ExperimentError::Config("env.index_path missing".into()))?;
            LexicalIndex::load(path).map_err(runtime)?
        }
    };
    let dense = match &cfg.env.dense_url {
        Some(url) => Some(Box::new(HttpDenseRetriever::new(url).map_err(runtime)?)
            as Box<dyn crate::retrieval::DenseRetriever>),
        None => None,
    };
    Environment::new(index, env_config, dense).map_err(runtime)
}

fn build_backend(
    cfg: &GlobalConfig,
    role: RoleKind,
    spec: &EndpointSpec,
) -> Result<Arc<dyn ChatBackend>, ExperimentError> {
    Ok(match spec {
        EndpointSpec::Mock { path } => Arc::new(
            ScriptBackend::load(path, ScriptMode::Mock)
                .map_err(|e| ExperimentError::Config(e.to_string()))?,
        ),
        EndpointSpec::Http {
            url,
            model,
            max_in_flight,
            retry,
        } => Arc::new(
            HttpChatBackend::new(url, model, retry.clone(), *max_in_flight)
                .map_err(|e| ExperimentError::Config(e.to_string()))?,
        ),
        EndpointSpec::FixtureTwoHop => {
            let fixture = TwoHopFixture::new(cfg.fixture.questions, cfg.fixture.seed);
            match role {
                RoleKind::Actor => Arc::new(fixture.actor(FixtureActorConfig {
                    gold_prob: cfg.fixture.gold_prob,
                    always_include_gold: cfg.fixture.always_include_gold,
                })),
                RoleKind::Summarizer => Arc::new(fixture.summarizer()),
                RoleKind::Annotator => Arc::new(fixture.annotator()),
            }
        }
        EndpointSpec::FixtureAdversarial => {
            if role != RoleKind::Actor {
                return Err(ExperimentError::Config(format!(
                    "fixture-adversarial only serves the actor role, not {role:?}"
                )));
            }
            Arc::new(crate::fixtures::AdversarialActor)
        }
    })
}

/// Builds the per-role gateway from the config, recording exchanges to
/// `record_path`.
pub fn build_gateway(cfg: &GlobalConfig, record_path: &Path) -> Result<Gateway, ExperimentError> {
    let actor = build_backend(cfg, RoleKind::Actor, &cfg.endpoints.actor)?;
    let summarizer = build_backend(cfg, RoleKind::Summarizer, &cfg.endpoints.summarizer)?;
    let annotator = build_backend(cfg, RoleKind::Annotator, &cfg.endpoints.annotator)?;
    Gateway::new(actor, summarizer, annotator)
        .record_to(record_path)
        .map_err(runtime)
}

/// Builds the agent with config knobs and prompt overrides applied.
pub fn build_agent(cfg: &GlobalConfig, arch: ArchitectureName) -> Result<Agent, ExperimentError> {
    let mut prompts = match &cfg.paths.prompt_dir {
        Some(dir) => PromptBundle::with_overrides_from_dir(dir)
            .map_err(|e| ExperimentError::Config(e.to_string()))?,
        None => PromptBundle::builtin(),
    };
    prompts.options.doc_char_budget = cfg.agent.doc_char_budget;
    let mut agent = Agent::with_prompts(arch, prompts);
    agent.max_tokens = cfg.agent.max_tokens;
    Ok(agent)
}

fn resolve_critic(
    cfg: &GlobalConfig,
    spec: &CriticSpec,
) -> Result<Option<Box<dyn ActionScorer>>, ExperimentError> {
    Ok(match spec {
        CriticSpec::None => None,
        CriticSpec::File { path } => {
            let (critic, _seed) = load_critic(path).map_err(runtime)?;
            Some(Box::new(critic))
        }
        CriticSpec::Url { url } => Some(Box::new(EndpointCritic::new(url).map_err(runtime)?)),
        CriticSpec::Oracle => {
            let fixture = TwoHopFixture::new(cfg.fixture.questions, cfg.fixture.seed);
            Some(Box::new(fixture.oracle_critic()))
        }
    })
}

fn write_lines(path: &Path, lines: &[String]) -> Result<(), ExperimentError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(runtime)?);
    for line in lines {
        writeln!(file, "{line}").map_err(runtime)?;
    }
    file.flush().map_err(runtime)
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    schema: String,
    #[serde(flatten)]
    tuple: PreferenceTuple,
}

/// Writes preference tuples as JSONL tagged with [`PAIRS_SCHEMA`].
pub fn write_pairs_jsonl(path: &Path, tuples: &[PreferenceTuple]) -> Result<(), ExperimentError> {
    let lines: Vec<String> = tuples
        .iter()
        .map(|tuple| {
            serde_json::to_string(&PairRecord {
                schema: PAIRS_SCHEMA.to_string(),
                tuple: tuple.clone(),
            })
            .map_err(runtime)
        })
        .collect::<Result<_, _>>()?;
    write_lines(path, &lines)
}

/// Reads preference tuples written by [`write_pairs_jsonl`].
pub fn read_pairs_jsonl(path: &Path) -> Result<Vec<PreferenceTuple>, ExperimentError> {
    let file = std::fs::File::open(path)
        .map_err(|e| ExperimentError::Config(format!("pairs {}: {e}", path.display())))?;
    let mut tuples = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(runtime)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord = serde_json::from_str(&line).map_err(|e| {
            ExperimentError::Config(format!("pairs line {}: {e}", i + 1))
        })?;
        if record.schema != PAIRS_SCHEMA {
            return Err(ExperimentError::Config(format!(
                "pairs line {}: unsupported schema {:?}",
                i + 1,
                record.schema
            )));
        }
        tuples.push(record.tuple);
    }
    if tuples.is_empty() {
        return Err(ExperimentError::Config(format!(
            "pairs file {} is empty",
            path.display()
        )));
    }
    Ok(tuples)
}

/// One `results.jsonl` row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResultRecord {
    pub schema: String,
    pub question_id: String,
    pub answered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_reward: Option<u8>,
    pub n_search_queries: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic_scores: Option<Vec<Vec<f64>>>,
}

fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>, ExperimentError> {
    let file = std::fs::File::open(path)
        .map_err(|e| ExperimentError::Config(format!("trajectories {}: {e}", path.display())))?;
    let mut trajectories = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(runtime)?;
        if line.trim().is_empty() {
            continue;
        }
        trajectories.push(trajectory_from_jsonl(&line).map_err(runtime)?);
    }
    Ok(trajectories)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// `index`: builds and persists the lexical index of a corpus.
pub fn cmd_index(corpus: &Path, out: &Path, force: bool) -> Result<CommandResult, ExperimentError> {
    let docs = read_corpus_jsonl(corpus).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let n_docs = docs.len();
    let index = ingest_corpus(docs).map_err(runtime)?;
    let run_dir = RunDir::create(out, force).map_err(runtime)?;
    index
        .save(&run_dir.path().join("index.json"))
        .map_err(runtime)?;
    let mut manifest = RunManifest::new(
        "index",
        json!({ "corpus": corpus.display().to_string() }),
        0,
    );
    manifest.record_input(corpus).map_err(runtime)?;
    manifest.count("documents", n_docs as u64);
    let (run_dir, manifest) = run_dir.finalize(manifest).map_err(runtime)?;
    Ok(CommandResult { run_dir, manifest })
}

/// `collect`: samples annotated trajectories, filters by outcome, builds
/// preference pairs and exports the three training-file schemas.
pub fn cmd_collect(
    cfg: &GlobalConfig,
    args: &CollectArgs,
    out: &Path,
    force: bool,
) -> Result<CommandResult, ExperimentError> {
    let make_gateway: GatewayFactory<'_> = &|record: &Path| build_gateway(cfg, record);
    collect_inner(cfg, args, out, force, make_gateway)
}

type GatewayFactory<'a> = &'a dyn Fn(&Path) -> Result<Gateway, ExperimentError>;

fn collect_inner(
    cfg: &GlobalConfig,
    args: &CollectArgs,
    out: &Path,
    force: bool,
    make_gateway: GatewayFactory<'_>,
) -> Result<CommandResult, ExperimentError> {
    cfg.validate()?;
    let questions = read_questions_jsonl(&args.dataset)?;
    let env = build_environment(cfg)?;
    let agent = build_agent(cfg, args.arch)?;
    let annotator = args
        .annotator
        .resolve()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let run_dir = RunDir::create(out, force).map_err(runtime)?;
    let gateway = make_gateway(&run_dir.path().join("exchanges.jsonl"))?;

    let mut manifest = RunManifest::new(
        "collect",
        json!({ "global": cfg, "args": args }),
        cfg.seed,
    );
    manifest.record_input(&args.dataset).map_err(runtime)?;
    let run_id = manifest.run_id.clone();

    let runner = EpisodeRunner {
        agent: &agent,
        gateway: &gateway,
        env: &env,
        critic: None,
    };
    let collection_config = cfg.collection.collection_config();
    let output = collect_dataset(
        &runner,
        &annotator,
        &questions,
        &collection_config,
        cfg.seed,
        &run_id,
    )
    .map_err(runtime)?;

    let trajectory_lines: Vec<String> = output
        .trajectories
        .iter()
        .map(|t| trajectory_to_jsonl(t).map_err(runtime))
        .collect::<Result<_, _>>()?;
    write_lines(&run_dir.path().join("trajectories.jsonl"), &trajectory_lines)?;
    write_pairs_jsonl(&run_dir.path().join("pairs.jsonl"), &output.dataset.tuples)?;
    write_failures(&run_dir.path().join("failures.jsonl"), &output.failures)?;
    for format in [ExportFormat::Sft, ExportFormat::Dpo, ExportFormat::Rm] {
        let path = run_dir.path().join(format!("{}.jsonl", format.as_str()));
        export_dataset(&output.dataset, format, &agent, &path, true).map_err(runtime)?;
    }
    std::fs::write(
        run_dir.path().join("filter_stats.json"),
        serde_json::to_string_pretty(&output.dataset.filter_stats).map_err(runtime)? + "\n",
    )
    .map_err(runtime)?;

    manifest.count("questions", questions.len() as u64);
    manifest.count("trajectories", output.trajectories.len() as u64);
    manifest.count("retained", output.dataset.filter_stats.retained as u64);
    manifest.count("dropped", output.dataset.filter_stats.dropped as u64);
    manifest.count("tuples", output.dataset.tuples.len() as u64);
    manifest.count("failures", output.failures.len() as u64);
    let (run_dir, manifest) = run_dir.finalize(manifest).map_err(runtime)?;
    Ok(CommandResult { run_dir, manifest })
}

fn write_failures(path: &Path, failures: &[CollectionFailure]) -> Result<(), ExperimentError> {
    let lines: Vec<String> = failures
        .iter()
        .map(|f| serde_json::to_string(f).map_err(runtime))
        .collect::<Result<_, _>>()?;
    write_lines(path, &lines)
}

/// `run`: executes episodes over a dataset, greedily or critic-guided.
pub fn cmd_run(
    cfg: &GlobalConfig,
    args: &RunArgs,
    out: &Path,
    force: bool,
) -> Result<CommandResult, ExperimentError> {
    let make_gateway: GatewayFactory<'_> = &|record: &Path| build_gateway(cfg, record);
    run_inner(cfg, args, out, force, make_gateway)
}

fn run_inner(
    cfg: &GlobalConfig,
    args: &RunArgs,
    out: &Path,
    force: bool,
    make_gateway: GatewayFactory<'_>,
) -> Result<CommandResult, ExperimentError> {
    cfg.validate()?;
    let questions = read_questions_jsonl(&args.dataset)?;
    let env = build_environment(cfg)?;
    let agent = build_agent(cfg, args.arch)?;
    let critic = resolve_critic(cfg, &args.critic)?;
    let inference_config = cfg.inference.inference_config(critic.is_some());
    inference_config
        .validate()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let run_dir = RunDir::create(out, force).map_err(runtime)?;
    let gateway = make_gateway(&run_dir.path().join("exchanges.jsonl"))?;

    let mut manifest = RunManifest::new("run", json!({ "global": cfg, "args": args }), cfg.seed);
    manifest.record_input(&args.dataset).map_err(runtime)?;
    let run_id = manifest.run_id.clone();

    let runner = EpisodeRunner {
        agent: &agent,
        gateway: &gateway,
        env: &env,
        critic: critic.as_deref(),
    };

    let mut trajectory_lines = Vec::new();
    let mut result_lines = Vec::new();
    let mut failures: Vec<CollectionFailure> = Vec::new();
    let mut query_counts = Vec::new();
    let mut answered = 0u64;
    for question in &questions {
        let seed = derive_seed(cfg.seed, &format!("episode/{}", question.id));
        match runner.run(question, &inference_config, seed, &run_id) {
            Ok(result) => {
                trajectory_lines.push(trajectory_to_jsonl(&result.trajectory).map_err(runtime)?);
                query_counts.push(result.n_search_queries);
                answered += u64::from(result.answered);
                let record = RunResultRecord {
                    schema: RESULT_SCHEMA.to_string(),
                    question_id: question.id.clone(),
                    answered: result.answered,
                    final_answer: result.trajectory.final_answer.clone(),
                    outcome_reward: result.trajectory.outcome_reward,
                    n_search_queries: result.n_search_queries,
                    critic_scores: result.critic_scores,
                };
                result_lines.push(serde_json::to_string(&record).map_err(runtime)?);
            }
            Err(e) => failures.push(CollectionFailure {
                question_id: question.id.clone(),
                error: e.to_string(),
            }),
        }
    }

    write_lines(&run_dir.path().join("trajectories.jsonl"), &trajectory_lines)?;
    write_lines(&run_dir.path().join("results.jsonl"), &result_lines)?;
    write_failures(&run_dir.path().join("failures.jsonl"), &failures)?;
    if !query_counts.is_empty() {
        let stats = query_stats_from_counts(&query_counts).map_err(runtime)?;
        std::fs::write(
            run_dir.path().join("query_stats.json"),
            serde_json::to_string_pretty(&stats).map_err(runtime)? + "\n",
        )
        .map_err(runtime)?;
    }

    manifest.count("questions", questions.len() as u64);
    manifest.count("episodes_ok", (questions.len() - failures.len()) as u64);
    manifest.count("episodes_failed", failures.len() as u64);
    manifest.count("answered", answered);
    let (run_dir, manifest) = run_dir.finalize(manifest).map_err(runtime)?;
    Ok(CommandResult { run_dir, manifest })
}

/// `train-critic`: trains the linear critic on a preference-pair file.
pub fn cmd_train_critic(
    cfg: &GlobalConfig,
    pairs: &Path,
    out: &Path,
    force: bool,
) -> Result<CommandResult, ExperimentError> {
    cfg.validate()?;
    let tuples = read_pairs_jsonl(pairs)?;
    let extractor = FeatureExtractor::hashed_bow(1usize << cfg.train.dimension_log2);
    let train_config = TrainConfig {
        learning_rate: cfg.train.learning_rate,
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        l2: cfg.train.l2,
        seed: derive_seed(cfg.seed, "train-critic"),
    };
    let output = train(extractor, &tuples, &train_config).map_err(runtime)?;
    let accuracy = eval_pairwise_accuracy(&output.critic, &tuples).map_err(runtime)?;

    let run_dir = RunDir::create(out, force).map_err(runtime)?;
    save_critic(
        &output.critic,
        train_config.seed,
        &run_dir.path().join("critic.bin"),
    )
    .map_err(runtime)?;
    let mut curve = String::from("epoch,mean_loss\n");
    for (epoch, loss) in output.loss_curve.iter().enumerate() {
        curve.push_str(&format!("{epoch},{loss:.12}\n"));
    }
    std::fs::write(run_dir.path().join("loss_curve.csv"), curve).map_err(runtime)?;
    std::fs::write(
        run_dir.path().join("train_metrics.json"),
        serde_json::to_string_pretty(&json!({
            "final_loss": output.loss_curve.last(),
            "pairwise_accuracy": accuracy,
            "epochs": cfg.train.epochs,
        }))
        .map_err(runtime)?
            + "\n",
    )
    .map_err(runtime)?;

    let mut manifest = RunManifest::new(
        "train-critic",
        json!({ "global": cfg, "args": { "pairs": pairs.display().to_string() } }),
        cfg.seed,
    );
    manifest.record_input(pairs).map_err(runtime)?;
    manifest.count("tuples", tuples.len() as u64);
    manifest.count("epochs", cfg.train.epochs as u64);
    let (run_dir, manifest) = run_dir.finalize(manifest).map_err(runtime)?;
    Ok(CommandResult { run_dir, manifest })
}

/// `eval`: scores a run directory against a gold dataset.
pub fn cmd_eval(
    pred_dir: &Path,
    gold: &Path,
    out: &Path,
    force: bool,
) -> Result<CommandResult, ExperimentError> {
    let questions = read_questions_jsonl(gold)?;
    let trajectories = read_trajectories(&pred_dir.join("trajectories.jsonl"))?;
    let pred_manifest = RunManifest::load(pred_dir).ok();
    let mut answers: BTreeMap<&str, Option<String>> = BTreeMap::new();
    let mut query_counts = Vec::new();
    for trajectory in &trajectories {
        answers.insert(
            trajectory.question.id.as_str(),
            trajectory.final_answer.clone(),
        );
        query_counts.push(trajectory.n_search_queries());
    }
    let pairs: Vec<(Question, Option<String>)> = questions
        .iter()
        .map(|q| {
            let prediction = answers.get(q.id.as_str()).cloned().flatten();
            (q.clone(), prediction)
        })
        .collect();
    let dataset_id = gold
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "dataset".into());
    let report = build_report(
        &dataset_id,
        &pairs,
        pred_manifest.as_ref().map(|m| m.run_id.clone()),
    )
    .map_err(runtime)?;

    let run_dir = RunDir::create(out, force).map_err(runtime)?;
    std::fs::write(
        run_dir.path().join("report.json"),
        serde_json::to_string_pretty(&report).map_err(runtime)? + "\n",
    )
    .map_err(runtime)?;
    let mut csv = String::from("question_id,em,f1,cem,acc\n");
    for m in &report.per_question {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{}\n",
            m.question_id,
            m.em,
            m.f1,
            m.cem,
            m.acc.map(|a| format!("{a:.6}")).unwrap_or_default()
        ));
    }
    std::fs::write(run_dir.path().join("report.csv"), csv).map_err(runtime)?;
    if !query_counts.is_empty() {
        let stats = query_stats_from_counts(&query_counts).map_err(runtime)?;
        std::fs::write(
            run_dir.path().join("query_stats.json"),
            serde_json::to_string_pretty(&stats).map_err(runtime)? + "\n",
        )
        .map_err(runtime)?;
    }

    let mut manifest = RunManifest::new(
        "eval",
        json!({
            "pred": pred_dir.display().to_string(),
            "gold": gold.display().to_string(),
        }),
        0,
    );
    manifest.record_input(gold).map_err(runtime)?;
    manifest.count("questions", questions.len() as u64);
    manifest.count("predictions", trajectories.len() as u64);
    let (run_dir, manifest) = run_dir.finalize(manifest).map_err(runtime)?;
    Ok(CommandResult { run_dir, manifest })
}

/// `report`: aggregates eval reports across runs (multiple-choice tasks
/// count their accuracy in both the EM and F1 columns).
pub fn cmd_report(run_dirs: &[PathBuf]) -> Result<serde_json::Value, ExperimentError> {
    let mut reports = Vec::new();
    for dir in run_dirs {
        let text = std::fs::read_to_string(dir.join("report.json")).map_err(|e| {
            ExperimentError::Config(format!("report {}: {e}", dir.display()))
        })?;
        let report: MetricReport = serde_json::from_str(&text).map_err(runtime)?;
        reports.push(report);
    }
    let aggregates = crate::eval::aggregate(&reports).map_err(runtime)?;
    Ok(json!({
        "tasks": reports
            .iter()
            .map(|r| json!({ "dataset_id": r.dataset_id, "aggregates": r.aggregates }))
            .collect::<Vec<_>>(),
        "average": aggregates,
    }))
}

// ---------------------------------------------------------------------------
// Sweep runners
// ---------------------------------------------------------------------------

/// Runs episodes over `questions` in memory (no run directory) and scores
/// them against their gold answers.
fn evaluate_in_memory(
    cfg: &GlobalConfig,
    arch: ArchitectureName,
    critic: Option<&dyn ActionScorer>,
    questions: &[Question],
    seed_label: &str,
) -> Result<MetricReport, ExperimentError> {
    let env = build_environment(cfg)?;
    let agent = build_agent(cfg, arch)?;
    let actor = build_backend(cfg, RoleKind::Actor, &cfg.endpoints.actor)?;
    let summarizer = build_backend(cfg, RoleKind::Summarizer, &cfg.endpoints.summarizer)?;
    let annotator = build_backend(cfg, RoleKind::Annotator, &cfg.endpoints.annotator)?;
    let gateway = Gateway::new(actor, summarizer, annotator);
    let inference_config = cfg.inference.inference_config(critic.is_some());
    inference_config
        .validate()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let runner = EpisodeRunner {
        agent: &agent,
        gateway: &gateway,
        env: &env,
        critic,
    };
    let mut pairs = Vec::with_capacity(questions.len());
    for question in questions {
        let seed = derive_seed(cfg.seed, &format!("{seed_label}/{}", question.id));
        let answer = runner
            .run(question, &inference_config, seed, seed_label)
            .map(|r| r.trajectory.final_answer)
            .map_err(runtime)?;
        pairs.push((question.clone(), answer));
    }
    build_report("sweep", &pairs, None).map_err(runtime)
}

/// Sweeps the number of sampled actions per step: one full inference run
/// per grid value, under shared seed discipline.
pub fn sweep_inference_n(
    cfg: &GlobalConfig,
    arch: ArchitectureName,
    critic_spec: &CriticSpec,
    questions: &[Question],
    grid: &[usize],
) -> Result<crate::eval::SweepTable, ExperimentError> {
    let critic = resolve_critic(cfg, critic_spec)?;
    Ok(crate::eval::sweep(
        crate::eval::SweepAxis::InferenceN,
        grid,
        |n| {
            let mut point_cfg = cfg.clone();
            point_cfg.inference.n_candidates = n;
            evaluate_in_memory(
                &point_cfg,
                arch,
                critic.as_deref(),
                questions,
                &format!("sweep-n/{n}"),
            )
            .map_err(|e| e.to_string())
        },
    ))
}

/// Sweeps the critic training-set size: per grid value, trains a critic on
/// a seeded subsample of `tuples` and evaluates critic-guided inference.
pub fn sweep_train_size(
    cfg: &GlobalConfig,
    arch: ArchitectureName,
    tuples: &[PreferenceTuple],
    questions: &[Question],
    grid: &[usize],
) -> Result<crate::eval::SweepTable, ExperimentError> {
    Ok(crate::eval::sweep(
        crate::eval::SweepAxis::TrainSize,
        grid,
        |size| {
            if size > tuples.len() {
                return Err(format!(
                    "grid point {size} exceeds the {} available tuples",
                    tuples.len()
                ));
            }
            let subsample = seeded_subsample(tuples, size, cfg.seed);
            let extractor = FeatureExtractor::hashed_bow(1usize << cfg.train.dimension_log2);
            let train_config = TrainConfig {
                learning_rate: cfg.train.learning_rate,
                epochs: cfg.train.epochs,
                batch_size: cfg.train.batch_size,
                l2: cfg.train.l2,
                seed: derive_seed(cfg.seed, &format!("sweep-train/{size}")),
            };
            let trained = train(extractor, &subsample, &train_config).map_err(|e| e.to_string())?;
            evaluate_in_memory(
                cfg,
                arch,
                Some(&trained.critic),
                questions,
                &format!("sweep-train/{size}"),
            )
            .map_err(|e| e.to_string())
        },
    ))
}

fn seeded_subsample(tuples: &[PreferenceTuple], size: usize, seed: u64) -> Vec<PreferenceTuple> {
    use rand::seq::SliceRandom;
    let mut indices: Vec<usize> = (0..tuples.len()).collect();
    let mut rng = crate::seed::rng_for(seed, "sweep-subsample");
    indices.shuffle(&mut rng);
    indices.truncate(size);
    indices.sort_unstable();
    indices.into_iter().map(|i| tuples[i].clone()).collect()
}

/// `replay`: re-executes a recorded collect or run from its exchange log,
/// with zero network calls.
pub fn cmd_replay(run_dir: &Path, out: &Path, force: bool) -> Result<CommandResult, ExperimentError> {
    let manifest = RunManifest::load(run_dir).map_err(|e| {
        ExperimentError::Config(format!(
            "{} has no readable {MANIFEST_FILE}: {e}",
            run_dir.display()
        ))
    })?;
    let log_path = run_dir.join("exchanges.jsonl");
    if !log_path.exists() {
        return Err(ExperimentError::Config(format!(
            "{} has no exchange log to replay",
            run_dir.display()
        )));
    }
    let global: GlobalConfig = serde_json::from_value(
        manifest
            .config
            .get("global")
            .cloned()
            .ok_or_else(|| ExperimentError::Config("manifest lacks a global config".into()))?,
    )
    .map_err(|e| ExperimentError::Config(format!("manifest config: {e}")))?;

    let make_gateway: GatewayFactory<'_> = &|record: &Path| {
        let backend: Arc<dyn ChatBackend> = Arc::new(
            ScriptBackend::load(&log_path, ScriptMode::Replay).map_err(runtime)?,
        );
        Gateway::uniform(backend).record_to(record).map_err(runtime)
    };

    match manifest.command.as_str() {
        "collect" => {
            let args: CollectArgs = serde_json::from_value(
                manifest
                    .config
                    .get("args")
                    .cloned()
                    .ok_or_else(|| ExperimentError::Config("manifest lacks args".into()))?,
            )
            .map_err(|e| ExperimentError::Config(format!("manifest args: {e}")))?;
            collect_inner(&global, &args, out, force, make_gateway)
        }
        "run" => {
            let args: RunArgs = serde_json::from_value(
                manifest
                    .config
                    .get("args")
                    .cloned()
                    .ok_or_else(|| ExperimentError::Config("manifest lacks args".into()))?,
            )
            .map_err(|e| ExperimentError::Config(format!("manifest args: {e}")))?;
            run_inner(&global, &args, out, force, make_gateway)
        }
        other => Err(ExperimentError::Config(format!(
            "replay supports collect and run, not {other:?}"
        ))),
    }
}
