//! Scout prompts, inference transport and completion parsing.

mod client;
mod synthetic;

use std::path::Path;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::inventory::ObjectInventory;
use crate::resources::SCOUT_SYSTEM_PROMPT;
use crate::schema::{parse_dna, DnaError, ScenarioDna};

pub use client::{query_scout, ChatClient, GatewayMetrics, MetricsSnapshot, RetryPolicy};
pub use synthetic::{derive_seed, render_synthetic_completion, synth_dna, synth_scout, NoiseProfile};

pub const MOCK_SCHEME: &str = "mock://";
pub const INVENTORY_HEADER: &str = "[YOLO Inventory]:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Scout,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoutConfig {
    pub name: String,
    pub endpoint_url: String,
    pub model_id: String,
    #[serde(default = "defaults::temperature")]
    pub temperature: f64,
    #[serde(default = "defaults::max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "defaults::timeout_s")]
    pub timeout_s: f64,
    #[serde(default)]
    pub role: Role,
    #[serde(default = "defaults::max_retries")]
    pub max_retries: u32,
    /// Bearer token; usually injected from the environment, never written back.
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
}

pub(crate) mod defaults {
    // Not stated for the reference models; these are starting points.
    pub fn temperature() -> f64 {
        0.6
    }
    pub fn max_tokens() -> u32 {
        8192
    }
    pub fn timeout_s() -> f64 {
        120.0
    }
    pub fn max_retries() -> u32 {
        2
    }
}

impl ScoutConfig {
    pub fn new(name: &str, endpoint_url: &str, model_id: &str, role: Role) -> Self {
        ScoutConfig {
            name: name.to_string(),
            endpoint_url: endpoint_url.to_string(),
            model_id: model_id.to_string(),
            temperature: defaults::temperature(),
            max_tokens: defaults::max_tokens(),
            timeout_s: defaults::timeout_s(),
            role,
            max_retries: defaults::max_retries(),
            api_key: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::Config(format!("{}: temperature must be >= 0", self.name)));
        }
        if !(self.timeout_s > 0.0) {
            return Err(GatewayError::Config(format!("{}: timeout_s must be > 0", self.name)));
        }
        if self.name.is_empty() {
            return Err(GatewayError::Config("scout name must not be empty".into()));
        }
        Ok(())
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint_url.starts_with(MOCK_SCHEME)
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum GatewayError {
    #[error("request timed out after {0:.1}s")]
    Timeout(f64),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    Malformed(String),
    #[error("invalid prompt: {0}")]
    Prompt(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Timeout(_) | GatewayError::Transport(_) => true,
            GatewayError::Endpoint { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePayload {
    pub mime: String,
    pub data_base64: String,
}

impl ImagePayload {
    pub fn from_bytes(mime: &str, bytes: &[u8]) -> Self {
        ImagePayload {
            mime: mime.to_string(),
            data_base64: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
    }

    pub fn from_path(path: &Path) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("png") => "image/png",
            Some("webp") => "image/webp",
            _ => "image/jpeg",
        };
        Ok(Self::from_bytes(mime, &bytes))
    }

    pub fn data_url(&self) -> String {
        format!("data:{};base64,{}", self.mime, self.data_base64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user_text: String,
    /// Left, center, right for scouts; empty for the text-only judge.
    pub images: Vec<ImagePayload>,
}

pub fn scout_user_text(inventory_text: &str) -> String {
    format!("{INVENTORY_HEADER}\n{inventory_text}")
}

pub fn build_scout_prompt(inventory_text: &str, images: Vec<ImagePayload>) -> Result<PromptBundle, GatewayError> {
    if images.len() != 3 {
        return Err(GatewayError::Prompt(format!(
            "scouts need exactly 3 images (left, center, right), got {}",
            images.len()
        )));
    }
    Ok(PromptBundle {
        system: SCOUT_SYSTEM_PROMPT.to_string(),
        user_text: scout_user_text(inventory_text),
        images,
    })
}

/// One completion as returned by an endpoint (or the synthetic backend).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCompletion {
    pub text: String,
    /// Separate reasoning channel some servers return instead of inline tags.
    #[serde(default)]
    pub reasoning_content: Option<String>,
    pub completion_tokens: Option<u64>,
    pub latency_s: f64,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "value")]
pub enum ParsedDna {
    Valid(ScenarioDna),
    Failed(DnaError),
}

impl ParsedDna {
    pub fn valid(&self) -> Option<&ScenarioDna> {
        match self {
            ParsedDna::Valid(dna) => Some(dna),
            ParsedDna::Failed(_) => None,
        }
    }
}

impl From<Result<ScenarioDna, DnaError>> for ParsedDna {
    fn from(result: Result<ScenarioDna, DnaError>) -> Self {
        match result {
            Ok(dna) => ParsedDna::Valid(dna),
            Err(e) => ParsedDna::Failed(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub reasoning_trace: String,
    pub dna: ParsedDna,
}

/// Splits a completion into its think-trace and the DNA payload.
pub fn parse_scout_response(raw: &str) -> ParsedResponse {
    const OPEN: &str = "<think>";
    const CLOSE: &str = "</think>";
    let (trace, payload) = match raw.find(OPEN) {
        Some(open) => {
            let body_start = open + OPEN.len();
            match raw[body_start..].find(CLOSE) {
                Some(rel) => {
                    let close = body_start + rel;
                    let payload = format!("{}{}", &raw[..open], &raw[close + CLOSE.len()..]);
                    (raw[body_start..close].to_string(), payload)
                }
                None => (raw[body_start..].to_string(), raw[..open].to_string()),
            }
        }
        // Chat templates that pre-fill the opening tag leave only the close.
        None => match raw.find(CLOSE) {
            Some(close) => (raw[..close].to_string(), raw[close + CLOSE.len()..].to_string()),
            None => (String::new(), raw.to_string()),
        },
    };
    ParsedResponse {
        reasoning_trace: trace.trim().to_string(),
        dna: parse_dna(&payload).into(),
    }
}

pub fn word_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoutReport {
    pub frame_id: String,
    pub scout_name: String,
    pub model_id: String,
    pub reasoning_trace: String,
    pub dna: ParsedDna,
    pub latency_s: f64,
    pub completion_tokens: u64,
    pub tokens_per_s: f64,
    /// False when token counts were approximated from word counts.
    pub usage_reported: bool,
}

impl ScoutReport {
    pub fn from_completion(frame_id: &str, scout_name: &str, raw: &RawCompletion) -> Self {
        let mut parsed = parse_scout_response(&raw.text);
        if parsed.reasoning_trace.is_empty() {
            if let Some(reasoning) = raw.reasoning_content.as_deref() {
                parsed.reasoning_trace = reasoning.trim().to_string();
            }
        }
        let (completion_tokens, usage_reported) = match raw.completion_tokens {
            Some(n) => (n, true),
            None => (word_count(&raw.text) + raw.reasoning_content.as_deref().map_or(0, word_count), false),
        };
        let latency_s = raw.latency_s.max(0.0);
        let tokens_per_s = if latency_s > 0.0 { completion_tokens as f64 / latency_s } else { 0.0 };
        ScoutReport {
            frame_id: frame_id.to_string(),
            scout_name: scout_name.to_string(),
            model_id: raw.model_id.clone(),
            reasoning_trace: parsed.reasoning_trace,
            dna: parsed.dna,
            latency_s,
            completion_tokens,
            tokens_per_s,
            usage_reported,
        }
    }

    pub fn valid_dna(&self) -> Option<&ScenarioDna> {
        self.dna.valid()
    }

    pub fn trace_tokens(&self) -> u64 {
        word_count(&self.reasoning_trace)
    }
}

/// Inputs available to a scout backend for one frame.
pub struct ScoutRequest<'a> {
    pub frame_id: &'a str,
    pub prompt: &'a PromptBundle,
    pub inventory: &'a ObjectInventory,
    /// Simulation ground truth; only synthetic backends look at it.
    pub truth: Option<&'a ScenarioDna>,
}

#[async_trait::async_trait]
pub trait ScoutBackend: Send + Sync {
    fn config(&self) -> &ScoutConfig;
    async fn complete(&self, request: &ScoutRequest<'_>) -> Result<RawCompletion, GatewayError>;
}

pub struct EndpointScout {
    config: ScoutConfig,
    client: ChatClient,
}

impl EndpointScout {
    pub fn new(config: ScoutConfig, client: ChatClient) -> Self {
        EndpointScout { config, client }
    }
}

#[async_trait::async_trait]
impl ScoutBackend for EndpointScout {
    fn config(&self) -> &ScoutConfig {
        &self.config
    }

    async fn complete(&self, request: &ScoutRequest<'_>) -> Result<RawCompletion, GatewayError> {
        self.client.query(&self.config, request.prompt).await
    }
}

/// Offline scout that perturbs the simulation truth.
pub struct SyntheticScout {
    config: ScoutConfig,
    noise: NoiseProfile,
    seed: u64,
}

impl SyntheticScout {
    pub fn new(config: ScoutConfig, noise: NoiseProfile, seed: u64) -> Self {
        SyntheticScout { config, noise, seed }
    }
}

#[async_trait::async_trait]
impl ScoutBackend for SyntheticScout {
    fn config(&self) -> &ScoutConfig {
        &self.config
    }

    async fn complete(&self, request: &ScoutRequest<'_>) -> Result<RawCompletion, GatewayError> {
        let truth = request.truth.ok_or_else(|| {
            GatewayError::Config(format!("synthetic scout {} needs simulation truth", self.config.name))
        })?;
        let seed = derive_seed(self.seed, &[&self.config.name, request.frame_id]);
        let dna = synth_dna(truth, request.inventory, &self.noise, seed);
        Ok(render_synthetic_completion(&dna, request.inventory, &self.config.model_id, self.noise.tokens_per_s))
    }
}
