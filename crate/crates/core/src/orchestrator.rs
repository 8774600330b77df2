//! Temperature-stratified generation across chat-completion backends, and
//! the Universal Self-Consistency (USC) baseline.
//!
//! A pool holds one completion per (provider, ladder temperature) pair.
//! Requests run concurrently under a global cap and a per-provider cap;
//! results are merged in (provider id, temperature) order so the pool layout
//! does not depend on completion timing.
//!
//! Credentials are read from the environment at request time and never
//! stored in [`ProviderSpec`], errors, or pools.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::consensus::{Candidate, CandidatePool};
use crate::planner::DEFAULT_LADDER;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited (HTTP 429)")]
    RateLimited,
    #[error("server error (HTTP {0})")]
    Server(u16),
    #[error("authentication failed (HTTP {0})")]
    Auth(u16),
    #[error("request rejected (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
    #[error("invalid provider spec: {0}")]
    InvalidSpec(String),
}

impl ProviderError {
    /// Transport, timeout, rate-limit and 5xx errors are retried; auth and
    /// validation errors are not.
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport(_) | ProviderError::RateLimited | ProviderError::Server(_))
    }

    fn from_status(status: u16, body: String) -> Self {
        match status {
            429 => ProviderError::RateLimited,
            401 | 403 => ProviderError::Auth(status),
            s if s >= 500 => ProviderError::Server(s),
            s => ProviderError::Rejected { status: s, body },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ApiFlavor {
    /// `POST {endpoint}` with an OpenAI-style chat completions body.
    #[default]
    #[serde(rename = "openai", alias = "open_ai")]
    OpenAi,
    /// `POST {endpoint}` with an Anthropic messages body.
    Anthropic,
    /// Offline backend selected by the endpoint string (`stub:deterministic`,
    /// `stub:fail`, `stub:echo`).
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSpec {
    pub id: String,
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api: ApiFlavor,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    /// Ladder used when the request does not override it.
    #[serde(default)]
    pub temperatures: Option<Vec<f64>>,
    /// Concurrent requests allowed against this provider.
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
}

fn default_timeout_secs() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_max_parallel() -> usize {
    4
}

impl ProviderSpec {
    pub fn new(id: impl Into<String>, endpoint: impl Into<String>, model: impl Into<String>, api: ApiFlavor) -> Self {
        Self {
            id: id.into(),
            endpoint: endpoint.into(),
            model: model.into(),
            api,
            credential_env: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_ms(),
            temperatures: None,
            max_parallel: default_max_parallel(),
        }
    }

    pub fn stub(id: impl Into<String>, mode: &str) -> Self {
        Self::new(id, format!("stub:{mode}"), "stub", ApiFlavor::Stub)
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let bad = |m: &str| Err(ProviderError::InvalidSpec(format!("{}: {m}", self.id)));
        if self.id.is_empty() {
            return bad("provider id is empty");
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return bad("timeout_secs must be > 0");
        }
        if self.max_parallel == 0 {
            return bad("max_parallel must be >= 1");
        }
        if let Some(ladder) = &self.temperatures {
            validate_ladder(ladder).map_err(|m| ProviderError::InvalidSpec(format!("{}: {m}", self.id)))?;
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    fn credential(&self) -> Result<Option<String>, ProviderError> {
        match &self.credential_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| ProviderError::MissingCredential(var.clone())),
        }
    }
}

fn validate_ladder(ladder: &[f64]) -> Result<(), String> {
    if ladder.is_empty() {
        return Err("temperature ladder is empty".into());
    }
    for (i, t) in ladder.iter().enumerate() {
        if !(0.0..=2.0).contains(t) {
            return Err(format!("temperature {t} outside [0, 2]"));
        }
        if ladder[..i].contains(t) {
            return Err(format!("temperature {t} repeated"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct OpenAiReply {
    choices: Vec<OpenAiChoice>,
}

#[derive(Deserialize)]
struct OpenAiChoice {
    message: OpenAiMessage,
}

#[derive(Deserialize)]
struct OpenAiMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct AnthropicReply {
    content: Vec<AnthropicBlock>,
}

#[derive(Deserialize)]
struct AnthropicBlock {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    text: String,
}

pub struct HttpChatBackend {
    spec: ProviderSpec,
    client: reqwest::Client,
}

impl HttpChatBackend {
    pub fn new(spec: ProviderSpec) -> Result<Self, ProviderError> {
        spec.validate()?;
        let client = reqwest::Client::builder()
            .timeout(spec.timeout())
            .build()
            .map_err(|e| ProviderError::InvalidSpec(e.to_string()))?;
        Ok(Self { spec, client })
    }
}

async fn read_error(resp: reqwest::Response) -> ProviderError {
    let status = resp.status().as_u16();
    let body = resp.text().await.unwrap_or_default();
    ProviderError::from_status(status, body)
}

#[async_trait]
impl ChatBackend for HttpChatBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let key = self.spec.credential()?;
        let mut builder = self.client.post(&self.spec.endpoint);
        builder = match self.spec.api {
            ApiFlavor::OpenAi => {
                if let Some(k) = &key {
                    builder = builder.bearer_auth(k);
                }
                builder.json(&ChatBody {
                    model: &request.model,
                    messages: &request.messages,
                    temperature: request.temperature,
                    max_tokens: request.max_tokens,
                })
            }
            ApiFlavor::Anthropic => {
                if let Some(k) = &key {
                    builder = builder.header("x-api-key", k);
                }
                builder.header("anthropic-version", "2023-06-01").json(&ChatBody {
                    model: &request.model,
                    messages: &request.messages,
                    temperature: request.temperature,
                    max_tokens: request.max_tokens,
                })
            }
            ApiFlavor::Stub => {
                return Err(ProviderError::InvalidSpec("stub flavor has no HTTP adapter".into()));
            }
        };
        let resp = builder
            .send()
            .await
            .map_err(|e| ProviderError::Transport(e.without_url().to_string()))?;
        if !resp.status().is_success() {
            return Err(read_error(resp).await);
        }
        let bytes = resp
            .bytes()
            .await
            .map_err(|e| ProviderError::Transport(e.without_url().to_string()))?;
        let malformed = |e: serde_json::Error| ProviderError::Malformed(e.to_string());
        match self.spec.api {
            ApiFlavor::OpenAi => {
                let reply: OpenAiReply = serde_json::from_slice(&bytes).map_err(malformed)?;
                reply
                    .choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .ok_or_else(|| ProviderError::Malformed("no choices in reply".into()))
            }
            _ => {
                let reply: AnthropicReply = serde_json::from_slice(&bytes).map_err(malformed)?;
                let text: String = reply
                    .content
                    .into_iter()
                    .filter(|b| b.kind == "text")
                    .map(|b| b.text)
                    .collect();
                if text.is_empty() {
                    Err(ProviderError::Malformed("no text blocks in reply".into()))
                } else {
                    Ok(text)
                }
            }
        }
    }
}

/// Offline backends for tests and dry runs.
pub enum StubBackend {
    /// Mostly agrees on one answer per prompt, occasionally diverges; the
    /// choice is a pure function of (seed, model, prompt, temperature).
    Deterministic { seed: u64 },
    /// Returns the last user message unchanged.
    Echo,
    /// Always returns this text.
    Fixed(String),
    /// Always fails with this error.
    Failing(ProviderError),
    /// Pops responses in order; repeats the last one when exhausted.
    Script(std::sync::Mutex<Vec<Result<String, ProviderError>>>),
}

impl StubBackend {
    pub fn script(responses: Vec<Result<String, ProviderError>>) -> Self {
        let mut r = responses;
        r.reverse();
        StubBackend::Script(std::sync::Mutex::new(r))
    }

    fn deterministic_reply(seed: u64, request: &ChatRequest) -> String {
        let prompt = request.messages.last().map(|m| m.content.as_str()).unwrap_or("");
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(request.model.as_bytes());
        h.update([0]);
        h.update(prompt.as_bytes());
        h.update(request.temperature.to_bits().to_le_bytes());
        let digest: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        let topic: String = prompt.split_whitespace().take(6).collect::<Vec<_>>().join(" ");
        if rng.random_bool((0.15 + 0.2 * request.temperature).min(0.9)) {
            format!("{topic} is best explained by claim {}", rng.random_range(0..1_000_000u32))
        } else {
            format!("the consensus answer to {topic} is the widely documented one")
        }
    }
}

#[async_trait]
impl ChatBackend for StubBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        match self {
            StubBackend::Deterministic { seed } => Ok(Self::deterministic_reply(*seed, request)),
            StubBackend::Echo => Ok(request.messages.last().map(|m| m.content.clone()).unwrap_or_default()),
            StubBackend::Fixed(text) => Ok(text.clone()),
            StubBackend::Failing(e) => Err(e.clone()),
            StubBackend::Script(queue) => {
                let mut q = queue.lock().expect("stub script poisoned");
                match q.len() {
                    0 => Err(ProviderError::Malformed("empty stub script".into())),
                    1 => q[0].clone(),
                    _ => q.pop().expect("nonempty"),
                }
            }
        }
    }
}

/// Builds the backend described by `spec`. Stub endpoints take the form
/// `stub:<mode>`; `stub:deterministic` accepts an optional `:<seed>`.
pub fn backend_for(spec: &ProviderSpec, seed: u64) -> Result<Arc<dyn ChatBackend>, ProviderError> {
    spec.validate()?;
    match spec.api {
        ApiFlavor::Stub => {
            let rest = spec
                .endpoint
                .strip_prefix("stub:")
                .ok_or_else(|| ProviderError::InvalidSpec(format!("stub endpoint must start with 'stub:', got {}", spec.endpoint)))?;
            let mut parts = rest.splitn(2, ':');
            let backend = match (parts.next(), parts.next()) {
                (Some("deterministic"), None) => StubBackend::Deterministic { seed },
                (Some("deterministic"), Some(s)) => StubBackend::Deterministic {
                    seed: s
                        .parse()
                        .map_err(|_| ProviderError::InvalidSpec(format!("bad stub seed {s}")))?,
                },
                (Some("echo"), None) => StubBackend::Echo,
                (Some("fail"), None) => StubBackend::Failing(ProviderError::Transport("stub failure".into())),
                (Some("fixed"), Some(text)) => StubBackend::Fixed(text.to_string()),
                _ => return Err(ProviderError::InvalidSpec(format!("unknown stub mode {rest}"))),
            };
            Ok(Arc::new(backend))
        }
        _ => Ok(Arc::new(HttpChatBackend::new(spec.clone())?)),
    }
}

/// Calls `backend`, retrying retryable errors with exponential backoff
/// (`base · 2^attempt`).
pub async fn complete_with_retry(
    backend: &dyn ChatBackend,
    request: &ChatRequest,
    max_retries: u32,
    backoff_base: Duration,
) -> Result<String, ProviderError> {
    let mut attempt = 0;
    loop {
        match backend.complete(request).await {
            Err(e) if e.is_retryable() && attempt < max_retries => {
                log::debug!("retrying after {e} (attempt {})", attempt + 1);
                tokio::time::sleep(backoff_base * 2u32.saturating_pow(attempt.min(16))).await;
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// A configured provider paired with its backend.
#[derive(Clone)]
pub struct Provider {
    pub spec: ProviderSpec,
    pub backend: Arc<dyn ChatBackend>,
}

impl Provider {
    pub fn new(spec: ProviderSpec, backend: Arc<dyn ChatBackend>) -> Self {
        Self { spec, backend }
    }

    pub fn from_spec(spec: ProviderSpec, seed: u64) -> Result<Self, ProviderError> {
        let backend = backend_for(&spec, seed)?;
        Ok(Self { spec, backend })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt_id: String,
    pub prompt: String,
    /// Per-provider ladder overrides.
    #[serde(default)]
    pub ladders: BTreeMap<String, Vec<f64>>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_max_tokens() -> u32 {
    512
}

impl GenerationRequest {
    pub fn new(prompt_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            prompt: prompt.into(),
            ladders: BTreeMap::new(),
            max_tokens: default_max_tokens(),
        }
    }

    /// Request override, else the provider's own ladder, else the default.
    pub fn ladder_for(&self, spec: &ProviderSpec) -> Vec<f64> {
        self.ladders
            .get(&spec.id)
            .cloned()
            .or_else(|| spec.temperatures.clone())
            .unwrap_or_else(|| DEFAULT_LADDER.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationOptions {
    /// Global cap on in-flight requests.
    pub parallelism: usize,
    /// Smallest acceptable pool; defaults to ⌈N/2⌉ of the requested size.
    pub min_pool: Option<usize>,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        Self {
            parallelism: 16,
            min_pool: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallFailure {
    pub provider_id: String,
    pub temperature: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPool {
    pub pool: CandidatePool,
    pub requested: usize,
    /// Calls that failed but left the pool above the minimum.
    pub failures: Vec<CallFailure>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("all {} provider calls failed", failures.len())]
    AllProvidersFailed { failures: Vec<CallFailure> },
    #[error("only {got} of {requested} completions succeeded; minimum is {min}")]
    PoolBelowMinimum {
        got: usize,
        min: usize,
        requested: usize,
        failures: Vec<CallFailure>,
    },
}

/// One completion per (provider, ladder temperature), dispatched concurrently.
pub async fn generate_pool(
    request: &GenerationRequest,
    providers: &[Provider],
    options: &GenerationOptions,
) -> Result<GeneratedPool, GenerationError> {
    if providers.is_empty() {
        return Err(GenerationError::InvalidRequest("no providers configured".into()));
    }
    if request.prompt.trim().is_empty() {
        return Err(GenerationError::InvalidRequest("prompt is empty".into()));
    }
    if options.parallelism == 0 {
        return Err(GenerationError::InvalidRequest("parallelism must be >= 1".into()));
    }
    let mut seen = std::collections::HashSet::new();
    let mut jobs = Vec::new();
    for p in providers {
        p.spec
            .validate()
            .map_err(|e| GenerationError::InvalidRequest(e.to_string()))?;
        if !seen.insert(p.spec.id.clone()) {
            return Err(GenerationError::InvalidRequest(format!("duplicate provider id {}", p.spec.id)));
        }
        let ladder = request.ladder_for(&p.spec);
        validate_ladder(&ladder).map_err(|m| GenerationError::InvalidRequest(format!("{}: {m}", p.spec.id)))?;
        let gate = Arc::new(Semaphore::new(p.spec.max_parallel));
        for t in ladder {
            jobs.push((p, t, gate.clone()));
        }
    }
    let requested = jobs.len();
    let global = Arc::new(Semaphore::new(options.parallelism));

    let calls = jobs.into_iter().map(|(provider, temperature, gate)| {
        let global = global.clone();
        async move {
            let _g = global.acquire_owned().await.expect("semaphore open");
            let _p = gate.acquire_owned().await.expect("semaphore open");
            let chat = ChatRequest {
                model: provider.spec.model.clone(),
                messages: vec![ChatMessage::user(request.prompt.clone())],
                temperature,
                max_tokens: request.max_tokens,
            };
            let out = complete_with_retry(
                provider.backend.as_ref(),
                &chat,
                provider.spec.max_retries,
                Duration::from_millis(provider.spec.backoff_base_ms),
            )
            .await;
            (provider.spec.id.clone(), temperature, out)
        }
    });
    let mut results = futures::future::join_all(calls).await;
    results.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for (provider_id, temperature, out) in results {
        match out {
            Ok(text) => candidates.push(Candidate::new(text, provider_id, temperature)),
            Err(e) => {
                log::warn!("{provider_id} at T={temperature} failed: {e}");
                failures.push(CallFailure {
                    provider_id,
                    temperature,
                    error: e.to_string(),
                });
            }
        }
    }
    if candidates.is_empty() {
        return Err(GenerationError::AllProvidersFailed { failures });
    }
    let min = options.min_pool.unwrap_or(requested.div_ceil(2)).max(1);
    if candidates.len() < min {
        return Err(GenerationError::PoolBelowMinimum {
            got: candidates.len(),
            min,
            requested,
            failures,
        });
    }
    let pool = CandidatePool::new(request.prompt_id.clone(), candidates)
        .map_err(|e| GenerationError::InvalidRequest(e.to_string()))?;
    Ok(GeneratedPool {
        pool,
        requested,
        failures,
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UscError {
    #[error("USC needs at least 2 responses, got {0}")]
    PoolTooSmall(usize),
    #[error("judge reply names no response: {raw:?}")]
    Unparseable { raw: String },
    #[error("judge picked response {picked} but the pool has {n}")]
    OutOfRange { picked: usize, n: usize },
    #[error("judge call failed: {0}")]
    Provider(#[from] ProviderError),
}

/// The USC meta-prompt with responses numbered from 1.
pub fn render_usc_prompt(question: &str, pool: &CandidatePool) -> String {
    let mut out = format!("I have generated the following responses to the question: {question}\n\n");
    for (i, c) in pool.candidates().iter().enumerate() {
        out.push_str(&format!("Response {}: {}\n", i + 1, c.text));
    }
    out.push_str(
        "\nEvaluate these responses. Select the most consistent response based on majority consensus. \
         Start your answer with \"The most consistent response is Response X\" (without quotes).",
    );
    out
}

fn usc_pattern() -> &'static Regex {
    static PATTERN: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"(?i)the\s+most\s+consistent\s+response\s+is\s+response\s+(\d+)").expect("valid regex"))
}

/// Zero-based index named by a judge reply.
pub fn parse_usc_reply(reply: &str, n: usize) -> Result<usize, UscError> {
    let caps = usc_pattern().captures(reply).ok_or_else(|| UscError::Unparseable { raw: reply.to_string() })?;
    let picked: usize = caps[1].parse().map_err(|_| UscError::Unparseable { raw: reply.to_string() })?;
    if picked == 0 || picked > n {
        return Err(UscError::OutOfRange { picked, n });
    }
    Ok(picked - 1)
}

/// Asks `judge` for the most consistent response. An unparseable reply is
/// re-asked once before failing.
pub async fn usc_select(pool: &CandidatePool, question: &str, judge: &Provider) -> Result<usize, UscError> {
    if pool.len() < 2 {
        return Err(UscError::PoolTooSmall(pool.len()));
    }
    let request = ChatRequest {
        model: judge.spec.model.clone(),
        messages: vec![ChatMessage::user(render_usc_prompt(question, pool))],
        temperature: 0.0,
        max_tokens: 256,
    };
    let backoff = Duration::from_millis(judge.spec.backoff_base_ms);
    let mut last = None;
    for _ in 0..2 {
        let reply = complete_with_retry(judge.backend.as_ref(), &request, judge.spec.max_retries, backoff).await?;
        match parse_usc_reply(&reply, pool.len()) {
            Err(e @ UscError::Unparseable { .. }) => last = Some(e),
            other => return other,
        }
    }
    Err(last.expect("loop ran"))
}
