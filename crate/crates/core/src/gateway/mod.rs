//! Provider-agnostic completion gateway.
//!
//! Every model call in the pipeline is a [`ModelRequest`] handed to a
//! [`CompletionProvider`]. Two providers ship: [`MockProvider`], which replays
//! fixture responses from a directory keyed by request content, and
//! [`LiveProvider`], which speaks messages-style JSON over HTTPS.

mod extract;
mod live;
mod mock;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;
use std::{env, fmt};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::sketch::RasterImage;

pub use extract::{extract_html_document, NoCodeFound};
pub use live::{LiveProvider, ProviderFamily};
pub use mock::{MockCorpus, MockProvider};

pub const ENV_API_KEY: &str = "FD_LLM_API_KEY";
pub const ENV_MODEL: &str = "FD_LLM_MODEL";
pub const ENV_ENDPOINT: &str = "FD_LLM_ENDPOINT";

pub const DEFAULT_ENDPOINT: &str = "https://api.anthropic.com/v1/messages";
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// Appended as an extra text part when a coding response carries no code.
pub const STRICT_HTML_INSTRUCTION: &str =
    "Respond with a single complete HTML document in one fenced code block.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestTag {
    Prd,
    InitialCode,
    Suggestions,
    RefineCode,
}

impl RequestTag {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestTag::Prd => "prd",
            RequestTag::InitialCode => "initial_code",
            RequestTag::Suggestions => "suggestions",
            RequestTag::RefineCode => "refine_code",
        }
    }

    pub fn default_temperature(self) -> f32 {
        match self {
            RequestTag::Prd | RequestTag::Suggestions => 0.7,
            RequestTag::InitialCode | RequestTag::RefineCode => 0.2,
        }
    }

    pub fn default_max_output_tokens(self) -> u32 {
        match self {
            RequestTag::Prd => 4096,
            RequestTag::Suggestions => 2048,
            RequestTag::InitialCode | RequestTag::RefineCode => 8192,
        }
    }
}

impl fmt::Display for RequestTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserPart {
    Text(String),
    Image(RasterImage),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub system_text: String,
    pub user_parts: Vec<UserPart>,
    pub max_output_tokens: u32,
    pub temperature: f32,
    pub request_tag: RequestTag,
}

impl ModelRequest {
    /// Builds a request with the tag's default temperature and token budget.
    pub fn new(tag: RequestTag, system_text: impl Into<String>, user_parts: Vec<UserPart>) -> Self {
        Self {
            system_text: system_text.into(),
            user_parts,
            max_output_tokens: tag.default_max_output_tokens(),
            temperature: tag.default_temperature(),
            request_tag: tag,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.user_parts.is_empty() {
            return Err(GatewayError::InvalidRequest("at least one user part is required".into()));
        }
        let images = self.user_parts.iter().filter(|p| matches!(p, UserPart::Image(_))).count();
        if images > 1 {
            return Err(GatewayError::InvalidRequest(format!(
                "at most one image part per request, got {images}"
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be in [0, 2], got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Content key of the request: SHA-256 over the user parts in order, text
    /// parts contributing their bytes and image parts their content hash.
    /// The system text is excluded; it is fixed per tag.
    pub fn content_key(&self) -> String {
        let mut hasher = Sha256::new();
        for (i, part) in self.user_parts.iter().enumerate() {
            if i > 0 {
                hasher.update([0x1f]);
            }
            match part {
                UserPart::Text(text) => hasher.update(text.as_bytes()),
                UserPart::Image(img) => hasher.update(img.content_hash.as_bytes()),
            }
        }
        hex::encode(hasher.finalize())
    }

    /// All text parts joined with blank lines; what a reviewer would read as
    /// the request body.
    pub fn user_text(&self) -> String {
        self.user_parts
            .iter()
            .filter_map(|p| match p {
                UserPart::Text(t) => Some(t.as_str()),
                UserPart::Image(_) => None,
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn image(&self) -> Option<&RasterImage> {
        self.user_parts.iter().find_map(|p| match p {
            UserPart::Image(img) => Some(img),
            UserPart::Text(_) => None,
        })
    }

    /// Copy of this request with the strict single-document instruction
    /// appended as a trailing text part.
    pub fn with_strict_html_instruction(&self) -> Self {
        let mut req = self.clone();
        req.user_parts.push(UserPart::Text(STRICT_HTML_INSTRUCTION.to_string()));
        req
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub provider_id: String,
    pub latency_ms: u64,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): base, 2*base, 4*base, ...
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64 << retry.saturating_sub(1).min(16);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor))
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    #[serde(default)]
    pub family: ProviderFamily,
    pub endpoint: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key, never the key itself.
    pub api_key_ref: String,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_request_timeout_secs")]
    pub request_timeout_secs: u64,
}

fn default_max_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

fn default_request_timeout_secs() -> u64 {
    300
}

impl LiveConfig {
    /// Messages-family config from `FD_LLM_ENDPOINT` and `FD_LLM_MODEL`, with
    /// the key read from `FD_LLM_API_KEY` at connect time.
    pub fn from_env() -> Result<Self, GatewayError> {
        let model_name = env::var(ENV_MODEL)
            .map_err(|_| GatewayError::InvalidConfig(format!("{ENV_MODEL} must name the model")))?;
        Ok(Self {
            family: ProviderFamily::Messages,
            endpoint: env::var(ENV_ENDPOINT).unwrap_or_else(|_| DEFAULT_ENDPOINT.to_string()),
            model_name,
            api_key_ref: ENV_API_KEY.to_string(),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            retry: RetryPolicy::default(),
            request_timeout_secs: default_request_timeout_secs(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockConfig {
    pub seed_corpus: PathBuf,
    /// Simulated per-call latency; zero in tests that do not need it.
    #[serde(default)]
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Live(LiveConfig),
    Mock(MockConfig),
}

impl ProviderConfig {
    pub fn mock(seed_corpus: impl Into<PathBuf>) -> Self {
        ProviderConfig::Mock(MockConfig {
            seed_corpus: seed_corpus.into(),
            latency_ms: 0,
        })
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self {
            ProviderConfig::Live(cfg) => {
                for (name, value) in [
                    ("endpoint", &cfg.endpoint),
                    ("model_name", &cfg.model_name),
                    ("api_key_ref", &cfg.api_key_ref),
                ] {
                    if value.trim().is_empty() {
                        return Err(GatewayError::InvalidConfig(format!("live provider requires {name}")));
                    }
                }
                if cfg.max_in_flight == 0 {
                    return Err(GatewayError::InvalidConfig("max_in_flight must be positive".into()));
                }
                if cfg.retry.max_attempts == 0 {
                    return Err(GatewayError::InvalidConfig("retry.max_attempts must be positive".into()));
                }
                Ok(())
            }
            ProviderConfig::Mock(cfg) => {
                if cfg.seed_corpus.as_os_str().is_empty() {
                    return Err(GatewayError::InvalidConfig("mock provider requires seed_corpus".into()));
                }
                if !cfg.seed_corpus.is_dir() {
                    return Err(GatewayError::InvalidConfig(format!(
                        "seed corpus {} is not a directory",
                        cfg.seed_corpus.display()
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid provider configuration: {0}")]
    InvalidConfig(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("invalid model request: {0}")]
    InvalidRequest(String),
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("provider rejected the request with status {status}: {detail}")]
    Rejected { status: u16, detail: String },
    #[error("provider returned an unreadable response: {0}")]
    Malformed(String),
    #[error("provider {provider} returned empty text")]
    EmptyResponse { provider: String },
    #[error("mock corpus has no {tag} response for key {key} (expected {path})")]
    CorpusMiss {
        tag: RequestTag,
        key: String,
        path: PathBuf,
    },
    #[error("mock corpus i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl GatewayError {
    /// Transport failures and 5xx rejections are worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            GatewayError::Unreachable(_) => true,
            GatewayError::Rejected { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[async_trait]
pub trait CompletionProvider: Send + Sync {
    /// Stable identity recorded in job manifests.
    fn provider_id(&self) -> String;

    async fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError>;
}

/// Builds the provider described by `cfg`. Live providers fail here, before
/// any network I/O, when the key variable is unset.
pub fn connect(cfg: &ProviderConfig) -> Result<Arc<dyn CompletionProvider>, GatewayError> {
    cfg.validate()?;
    Ok(match cfg {
        ProviderConfig::Live(live) => Arc::new(LiveProvider::new(live.clone())?),
        ProviderConfig::Mock(mock) => Arc::new(MockProvider::new(mock.clone())),
    })
}

/// One-shot completion against the provider described by `cfg`.
pub async fn complete(req: &ModelRequest, cfg: &ProviderConfig) -> Result<ModelResponse, GatewayError> {
    connect(cfg)?.complete(req).await
}

pub(crate) fn ensure_nonempty(resp: ModelResponse) -> Result<ModelResponse, GatewayError> {
    if resp.text.trim().is_empty() {
        Err(GatewayError::EmptyResponse {
            provider: resp.provider_id,
        })
    } else {
        Ok(resp)
    }
}
