//! Uniform access to chat-completion models for the three roles (actor
//! reasoning, history summarization, ranking annotation).
//!
//! Backends:
//!
//! - [`ScriptBackend`] serves completions from an exchange log by request
//!   digest — the same file format doubles as a handcrafted mock script and
//!   as the record/replay store.
//! - [`HttpChatBackend`] talks to any OpenAI-compatible chat-completion
//!   endpoint with bounded exponential backoff and a per-endpoint in-flight
//!   request limit.
//!
//! The [`Gateway`] wires one backend per role and appends every exchange to
//! the run's log, so any run can be replayed later with zero network calls.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Name of the environment variable holding the live-endpoint API key.
pub const API_KEY_ENV: &str = "RAGGYM_API_KEY";

/// Gateway failures.
#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),

    #[error("live endpoint exhausted retries for request {digest}: {reason}")]
    Exhausted { digest: String, reason: String },

    #[error("mock script has no entry for request {0}")]
    MockMiss(String),

    #[error("replay log has no entry for request {0}")]
    ReplayMiss(String),

    #[error("backend returned {got} completions, expected {expected}")]
    WrongArity { expected: usize, got: usize },

    #[error("fixture backend: {0}")]
    Fixture(String),

    #[error("exchange log io: {0}")]
    Io(#[from] std::io::Error),

    #[error("exchange log line {line}: {source}")]
    MalformedLog {
        line: usize,
        source: serde_json::Error,
    },
}

/// Which model role a request is issued under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleKind {
    Actor,
    Summarizer,
    Annotator,
}

impl RoleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RoleKind::Actor => "actor",
            RoleKind::Summarizer => "summarizer",
            RoleKind::Annotator => "annotator",
        }
    }
}

/// Sampling parameters for one completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub n_samples: usize,
    pub max_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenerationConfig {
    /// Greedy decoding: temperature 0, one sample.
    pub fn greedy(max_tokens: usize) -> Self {
        GenerationConfig {
            temperature: 0.0,
            n_samples: 1,
            max_tokens,
            seed: None,
        }
    }

    /// Sampled decoding with `n` completions.
    pub fn sampled(n: usize, temperature: f64, max_tokens: usize, seed: u64) -> Self {
        GenerationConfig {
            temperature,
            n_samples: n,
            max_tokens,
            seed: Some(seed),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.temperature < 0.0 || !self.temperature.is_finite() {
            return Err(GatewayError::InvalidConfig(format!(
                "temperature {} must be finite and >= 0",
                self.temperature
            )));
        }
        if self.n_samples < 1 {
            return Err(GatewayError::InvalidConfig(
                "n_samples must be at least 1".into(),
            ));
        }
        if self.n_samples >= 2 && self.temperature <= 0.0 {
            return Err(GatewayError::InvalidConfig(format!(
                "sampling {} completions requires temperature > 0",
                self.n_samples
            )));
        }
        Ok(())
    }
}

/// A chat-completion request: system and user messages plus sampling config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub generation: GenerationConfig,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.user.trim().is_empty() {
            return Err(GatewayError::InvalidConfig("empty user message".into()));
        }
        self.generation.validate()
    }
}

/// Stable digest of a request: SHA-256 over role, messages and generation
/// config minus the seed, so replay matching is robust to seed bookkeeping.
pub fn request_digest(role: RoleKind, request: &ChatRequest) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        role: &'static str,
        system: &'a str,
        user: &'a str,
        temperature: f64,
        n_samples: usize,
        max_tokens: usize,
    }
    let canonical = serde_json::to_vec(&Canonical {
        role: role.as_str(),
        system: &request.system,
        user: &request.user,
        temperature: request.generation.temperature,
        n_samples: request.generation.n_samples,
        max_tokens: request.generation.max_tokens,
    })
    .expect("canonical request serializes");
    let mut hasher = Sha256::new();
    hasher.update(&canonical);
    hex::encode(hasher.finalize())
}

/// A completion source for one role.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, role: RoleKind, request: &ChatRequest) -> Result<Vec<String>, GatewayError>;

    /// Human-readable backend description for manifests and logs.
    fn describe(&self) -> String;
}

/// One logged exchange. `wall_time` is epoch milliseconds and is the only
/// non-deterministic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRecord {
    pub digest: String,
    pub request: ChatRequest,
    pub completions: Vec<String>,
    pub role: RoleKind,
    pub wall_time: u64,
}

/// Reads an exchange log (JSONL of [`ExchangeRecord`]).
pub fn read_exchange_log(path: &Path) -> Result<Vec<ExchangeRecord>, GatewayError> {
    let file = std::fs::File::open(path)?;
    let mut records = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|source| GatewayError::MalformedLog { line: i + 1, source })?;
        records.push(record);
    }
    Ok(records)
}

/// Whether a [`ScriptBackend`] acts as a handcrafted mock (strict mode) or
/// as a replay of a recorded run. The two differ only in the error reported
/// on a missing entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptMode {
    Mock,
    Replay,
}

/// Serves completions from an exchange log by digest.
///
/// Entries sharing a digest are consumed in file order, so a replayed run
/// that issued the same prompt twice (with different sampling seeds) gets
/// each recorded completion set back in turn.
pub struct ScriptBackend {
    entries: Mutex<HashMap<String, VecDeque<Vec<String>>>>,
    mode: ScriptMode,
    source: String,
}

impl ScriptBackend {
    pub fn from_records(records: Vec<ExchangeRecord>, mode: ScriptMode, source: &str) -> Self {
        let mut entries: HashMap<String, VecDeque<Vec<String>>> = HashMap::new();
        for record in records {
            entries
                .entry(record.digest)
                .or_default()
                .push_back(record.completions);
        }
        ScriptBackend {
            entries: Mutex::new(entries),
            mode,
            source: source.to_string(),
        }
    }

    pub fn load(path: &Path, mode: ScriptMode) -> Result<Self, GatewayError> {
        let records = read_exchange_log(path)?;
        Ok(Self::from_records(records, mode, &path.display().to_string()))
    }
}

impl ChatBackend for ScriptBackend {
    fn complete(&self, role: RoleKind, request: &ChatRequest) -> Result<Vec<String>, GatewayError> {
        let digest = request_digest(role, request);
        let mut entries = self.entries.lock().expect("script backend lock");
        let queue = entries.get_mut(&digest);
        let completions = queue.and_then(|q| q.pop_front());
        match completions {
            Some(c) => Ok(c),
            None => Err(match self.mode {
                ScriptMode::Mock => GatewayError::MockMiss(digest),
                ScriptMode::Replay => GatewayError::ReplayMiss(digest),
            }),
        }
    }

    fn describe(&self) -> String {
        match self.mode {
            ScriptMode::Mock => format!("mock:{}", self.source),
            ScriptMode::Replay => format!("replay:{}", self.source),
        }
    }
}

/// Retry policy for live endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryConfig {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            max_retries: 3,
            base_delay_ms: 200,
            max_delay_ms: 5_000,
        }
    }
}

/// Counting semaphore bounding in-flight requests per endpoint.
struct InFlightLimit {
    available: Mutex<usize>,
    cond: Condvar,
}

impl InFlightLimit {
    fn new(permits: usize) -> Self {
        InFlightLimit {
            available: Mutex::new(permits.max(1)),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> InFlightGuard<'_> {
        let mut available = self.available.lock().expect("limit lock");
        while *available == 0 {
            available = self.cond.wait(available).expect("limit wait");
        }
        *available -= 1;
        InFlightGuard { limit: self }
    }
}

struct InFlightGuard<'a> {
    limit: &'a InFlightLimit,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut available = self.limit.available.lock().expect("limit lock");
        *available += 1;
        self.limit.cond.notify_one();
    }
}

/// OpenAI-compatible chat-completion backend.
pub struct HttpChatBackend {
    url: String,
    model: String,
    api_key: Option<String>,
    retry: RetryConfig,
    limit: InFlightLimit,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ApiMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ApiRequest<'a> {
    model: &'a str,
    messages: Vec<ApiMessage<'a>>,
    temperature: f64,
    n: usize,
    max_tokens: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ApiResponse {
    choices: Vec<ApiChoice>,
}

#[derive(Deserialize)]
struct ApiChoice {
    message: ApiResponseMessage,
}

#[derive(Deserialize)]
struct ApiResponseMessage {
    content: String,
}

impl HttpChatBackend {
    /// `url` is the full chat-completions endpoint URL. The API key is read
    /// from the `RAGGYM_API_KEY` environment variable when present.
    pub fn new(
        url: &str,
        model: &str,
        retry: RetryConfig,
        max_in_flight: usize,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| GatewayError::InvalidConfig(format!("client build failed: {e}")))?;
        Ok(HttpChatBackend {
            url: url.to_string(),
            model: model.to_string(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            retry,
            limit: InFlightLimit::new(max_in_flight),
            client,
        })
    }

    fn attempt(&self, request: &ChatRequest) -> Result<Vec<String>, String> {
        let body = ApiRequest {
            model: &self.model,
            messages: vec![
                ApiMessage {
                    role: "system",
                    content: &request.system,
                },
                ApiMessage {
                    role: "user",
                    content: &request.user,
                },
            ],
            temperature: request.generation.temperature,
            n: request.generation.n_samples,
            max_tokens: request.generation.max_tokens,
            seed: request.generation.seed,
        };
        let mut http = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let response = http.send().map_err(|e| e.to_string())?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(format!("status {status}: {text}"));
        }
        let parsed: ApiResponse = response
            .json()
            .map_err(|e| format!("malformed response: {e}"))?;
        Ok(parsed
            .choices
            .into_iter()
            .map(|c| c.message.content)
            .collect())
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, role: RoleKind, request: &ChatRequest) -> Result<Vec<String>, GatewayError> {
        let _guard = self.limit.acquire();
        let mut delay = Duration::from_millis(self.retry.base_delay_ms);
        let mut last_error = String::new();
        for attempt in 0..=self.retry.max_retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay = (delay * 2).min(Duration::from_millis(self.retry.max_delay_ms));
            }
            match self.attempt(request) {
                Ok(completions) => return Ok(completions),
                Err(e) => {
                    log::warn!("attempt {attempt} against {} failed: {e}", self.url);
                    last_error = e;
                }
            }
        }
        Err(GatewayError::Exhausted {
            digest: request_digest(role, request),
            reason: last_error,
        })
    }

    fn describe(&self) -> String {
        format!("http:{} model={}", self.url, self.model)
    }
}

/// Appends exchange records to a JSONL log file.
pub struct ExchangeLogWriter {
    file: std::fs::File,
}

impl ExchangeLogWriter {
    pub fn create(path: &Path) -> Result<Self, GatewayError> {
        Ok(ExchangeLogWriter {
            file: std::fs::File::create(path)?,
        })
    }

    pub fn append(&mut self, record: &ExchangeRecord) -> Result<(), GatewayError> {
        let line = serde_json::to_string(record)
            .map_err(|source| GatewayError::MalformedLog { line: 0, source })?;
        writeln!(self.file, "{line}")?;
        Ok(())
    }
}

fn epoch_millis() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Per-role backends plus the run's exchange log.
///
/// Safe for concurrent calls from multiple episodes; completion order within
/// a single call is preserved (candidate `i` always corresponds to
/// completion `i`).
pub struct Gateway {
    actor: Arc<dyn ChatBackend>,
    summarizer: Arc<dyn ChatBackend>,
    annotator: Arc<dyn ChatBackend>,
    recorder: Option<Mutex<ExchangeLogWriter>>,
}

impl Gateway {
    pub fn new(
        actor: Arc<dyn ChatBackend>,
        summarizer: Arc<dyn ChatBackend>,
        annotator: Arc<dyn ChatBackend>,
    ) -> Self {
        Gateway {
            actor,
            summarizer,
            annotator,
            recorder: None,
        }
    }

    /// A gateway serving every role from one shared backend.
    pub fn uniform(backend: Arc<dyn ChatBackend>) -> Self {
        Gateway::new(backend.clone(), backend.clone(), backend)
    }

    /// A gateway that replays a recorded exchange log for every role, making
    /// zero network calls.
    pub fn replay_from(log_path: &Path) -> Result<Self, GatewayError> {
        let backend: Arc<dyn ChatBackend> =
            Arc::new(ScriptBackend::load(log_path, ScriptMode::Replay)?);
        Ok(Gateway::uniform(backend))
    }

    /// Starts recording every exchange to `path`.
    pub fn record_to(mut self, path: &Path) -> Result<Self, GatewayError> {
        self.recorder = Some(Mutex::new(ExchangeLogWriter::create(path)?));
        Ok(self)
    }

    fn backend(&self, role: RoleKind) -> &dyn ChatBackend {
        match role {
            RoleKind::Actor => self.actor.as_ref(),
            RoleKind::Summarizer => self.summarizer.as_ref(),
            RoleKind::Annotator => self.annotator.as_ref(),
        }
    }

    pub fn describe(&self, role: RoleKind) -> String {
        self.backend(role).describe()
    }

    /// Requests exactly `n_samples` completions from the role's backend and
    /// appends the exchange to the run log.
    pub fn complete(
        &self,
        role: RoleKind,
        request: &ChatRequest,
    ) -> Result<Vec<String>, GatewayError> {
        request.validate()?;
        let completions = self.backend(role).complete(role, request)?;
        if completions.len() != request.generation.n_samples {
            return Err(GatewayError::WrongArity {
                expected: request.generation.n_samples,
                got: completions.len(),
            });
        }
        if let Some(recorder) = &self.recorder {
            let record = ExchangeRecord {
                digest: request_digest(role, request),
                request: request.clone(),
                completions: completions.clone(),
                role,
                wall_time: epoch_millis(),
            };
            recorder
                .lock()
                .expect("exchange log lock")
                .append(&record)?;
        }
        Ok(completions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(user: &str, n: usize) -> ChatRequest {
        ChatRequest {
            system: "sys".into(),
            user: user.into(),
            generation: if n == 1 {
                GenerationConfig::greedy(256)
            } else {
                GenerationConfig::sampled(n, 1.0, 256, 7)
            },
        }
    }

    fn record(role: RoleKind, req: &ChatRequest, completions: &[&str]) -> ExchangeRecord {
        ExchangeRecord {
            digest: request_digest(role, req),
            request: req.clone(),
            completions: completions.iter().map(|s| s.to_string()).collect(),
            role,
            wall_time: 0,
        }
    }

    #[test]
    fn digest_ignores_seed() {
        let mut a = request("hello", 2);
        let mut b = a.clone();
        a.generation.seed = Some(1);
        b.generation.seed = Some(2);
        assert_eq!(
            request_digest(RoleKind::Actor, &a),
            request_digest(RoleKind::Actor, &b)
        );
    }

    #[test]
    fn digest_depends_on_role_and_text() {
        let r = request("hello", 1);
        assert_ne!(
            request_digest(RoleKind::Actor, &r),
            request_digest(RoleKind::Summarizer, &r)
        );
        assert_ne!(
            request_digest(RoleKind::Actor, &r),
            request_digest(RoleKind::Actor, &request("other", 1))
        );
    }

    #[test]
    fn mock_lookup_returns_scripted_text() {
        let req = request("prompt", 1);
        let backend = ScriptBackend::from_records(
            vec![record(RoleKind::Actor, &req, &["text"])],
            ScriptMode::Mock,
            "inline",
        );
        let gateway = Gateway::uniform(Arc::new(backend));
        assert_eq!(gateway.complete(RoleKind::Actor, &req).unwrap(), vec!["text"]);
    }

    #[test]
    fn mock_miss_is_strict() {
        let backend = ScriptBackend::from_records(Vec::new(), ScriptMode::Mock, "inline");
        let gateway = Gateway::uniform(Arc::new(backend));
        assert!(matches!(
            gateway.complete(RoleKind::Actor, &request("missing", 1)),
            Err(GatewayError::MockMiss(_))
        ));
    }

    #[test]
    fn replay_returns_n_samples_in_order() {
        let req = request("sample me", 10);
        let completions: Vec<String> = (0..10).map(|i| format!("c{i}")).collect();
        let refs: Vec<&str> = completions.iter().map(String::as_str).collect();
        let backend = ScriptBackend::from_records(
            vec![record(RoleKind::Actor, &req, &refs)],
            ScriptMode::Replay,
            "inline",
        );
        let gateway = Gateway::uniform(Arc::new(backend));
        assert_eq!(gateway.complete(RoleKind::Actor, &req).unwrap(), completions);
    }

    #[test]
    fn replay_with_altered_prompt_misses() {
        let req = request("original", 1);
        let backend = ScriptBackend::from_records(
            vec![record(RoleKind::Actor, &req, &["x"])],
            ScriptMode::Replay,
            "inline",
        );
        let gateway = Gateway::uniform(Arc::new(backend));
        assert!(matches!(
            gateway.complete(RoleKind::Actor, &request("altered", 1)),
            Err(GatewayError::ReplayMiss(_))
        ));
    }

    #[test]
    fn repeated_digests_replay_in_recorded_order() {
        let req = request("same prompt", 2);
        let backend = ScriptBackend::from_records(
            vec![
                record(RoleKind::Actor, &req, &["first-a", "first-b"]),
                record(RoleKind::Actor, &req, &["second-a", "second-b"]),
            ],
            ScriptMode::Replay,
            "inline",
        );
        let gateway = Gateway::uniform(Arc::new(backend));
        assert_eq!(
            gateway.complete(RoleKind::Actor, &req).unwrap(),
            vec!["first-a", "first-b"]
        );
        assert_eq!(
            gateway.complete(RoleKind::Actor, &req).unwrap(),
            vec!["second-a", "second-b"]
        );
        assert!(gateway.complete(RoleKind::Actor, &req).is_err());
    }

    #[test]
    fn sampling_requires_positive_temperature() {
        let bad = ChatRequest {
            system: "".into(),
            user: "u".into(),
            generation: GenerationConfig {
                temperature: 0.0,
                n_samples: 10,
                max_tokens: 64,
                seed: None,
            },
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn record_then_replay_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let log_path = dir.path().join("exchanges.jsonl");
        let req = request("record me", 1);
        let backend = ScriptBackend::from_records(
            vec![record(RoleKind::Summarizer, &req, &["summary"])],
            ScriptMode::Mock,
            "inline",
        );
        let gateway = Gateway::uniform(Arc::new(backend))
            .record_to(&log_path)
            .unwrap();
        let live = gateway.complete(RoleKind::Summarizer, &req).unwrap();

        let replayed = Gateway::replay_from(&log_path).unwrap();
        assert_eq!(replayed.complete(RoleKind::Summarizer, &req).unwrap(), live);
    }

    #[test]
    fn wrong_arity_is_an_error() {
        struct Short;
        impl ChatBackend for Short {
            fn complete(
                &self,
                _role: RoleKind,
                _request: &ChatRequest,
            ) -> Result<Vec<String>, GatewayError> {
                Ok(vec!["only one".into()])
            }
            fn describe(&self) -> String {
                "short".into()
            }
        }
        let gateway = Gateway::uniform(Arc::new(Short));
        assert!(matches!(
            gateway.complete(RoleKind::Actor, &request("x", 3)),
            Err(GatewayError::WrongArity { expected: 3, got: 1 })
        ));
    }
}
