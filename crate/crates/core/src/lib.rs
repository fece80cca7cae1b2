//! Engine for agentic retrieval-augmented question answering.
//!
//! The crate models multi-round question answering as a high-level decision
//! process: a state is the original question plus the information-seeking
//! history accumulated so far, and each step either issues a search query
//! against an IR environment or commits to a final answer. On top of that
//! core sit six agent architectures, a process-reward data-collection
//! pipeline with pluggable annotators, a pairwise-trained linear critic,
//! critic-guided best-of-N inference, and the evaluation metrics and
//! persistence needed to run reproducible desk-scale experiments.
//!
//! Module map:
//!
//! - [`mdp`] — states, actions, transitions, trajectories, outcome reward.
//! - [`retrieval`] — corpus ingestion, BM25, reciprocal rank fusion, the
//!   retrieval environment and the dense-retriever endpoint client.
//! - [`gateway`] — uniform chat-completion access with mock, record/replay
//!   and live HTTP backends.
//! - [`agents`] — the six agent architectures, prompt rendering and
//!   structured-output parsing.
//! - [`critic`] — pairwise contrastive loss, trainable linear scorer over
//!   hashed text features, and a client for hosted critic endpoints.
//! - [`process`] — candidate sampling, ranking annotation, outcome
//!   filtering, preference-pair construction and dataset export.
//! - [`inference`] — greedy and critic-guided best-of-N episode execution.
//! - [`eval`] — EM/F1/CEM/accuracy metrics, aggregation, query statistics
//!   and sweep runners.
//! - [`config`] / [`manifest`] / [`experiment`] — configuration, run
//!   manifests and the command implementations behind the CLI.
//! - [`fixtures`] — deterministic scripted fixtures for tests, benchmarks
//!   and offline demos.

pub mod agents;
pub mod config;
pub mod critic;
pub mod eval;
pub mod experiment;
pub mod fixtures;
pub mod gateway;
pub mod inference;
pub mod manifest;
pub mod mdp;
pub mod process;
pub mod retrieval;
pub mod seed;
pub mod text;

pub use agents::{AgentArchitecture, ArchitectureName, ParsedAction, PromptBundle};
pub use critic::{ActionScorer, FeatureExtractor, LinearCritic, PreferenceTuple, TrainConfig};
pub use gateway::{ChatBackend, ChatRequest, Gateway, GenerationConfig, RoleKind};
pub use inference::{InferenceConfig, RunResult};
pub use mdp::{
    Action, Document, Question, RetrievalRecord, State, StepRecord, TaskKind, Trajectory,
    TransitionResult,
};
pub use retrieval::{EnvConfig, Environment, LexicalIndex, RankedList};
