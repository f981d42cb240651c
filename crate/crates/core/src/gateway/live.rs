use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use super::{
    ensure_nonempty, CompletionProvider, GatewayError, LiveConfig, ModelRequest, ModelResponse,
    UserPart,
};

const MESSAGES_API_VERSION: &str = "2023-06-01";

/// Wire dialect of a live endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderFamily {
    /// `POST /v1/messages` style: top-level `system`, content blocks, `x-api-key`.
    #[default]
    Messages,
    /// `POST /v1/chat/completions` style: system message, bearer auth.
    ChatCompletions,
}

pub struct LiveProvider {
    cfg: LiveConfig,
    api_key: String,
    http: reqwest::Client,
    in_flight: Arc<Semaphore>,
}

impl std::fmt::Debug for LiveProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveProvider")
            .field("family", &self.cfg.family)
            .field("endpoint", &self.cfg.endpoint)
            .field("model_name", &self.cfg.model_name)
            .finish_non_exhaustive()
    }
}

impl LiveProvider {
    pub fn new(cfg: LiveConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&cfg.api_key_ref)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| GatewayError::MissingApiKey(cfg.api_key_ref.clone()))?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(cfg.request_timeout_secs))
            .build()
            .map_err(|e| GatewayError::InvalidConfig(e.to_string()))?;
        let in_flight = Arc::new(Semaphore::new(cfg.max_in_flight));
        Ok(Self {
            cfg,
            api_key,
            http,
            in_flight,
        })
    }

    fn body(&self, req: &ModelRequest) -> Value {
        match self.cfg.family {
            ProviderFamily::Messages => {
                let content: Vec<Value> = req
                    .user_parts
                    .iter()
                    .map(|part| match part {
                        UserPart::Text(text) => json!({"type": "text", "text": text}),
                        UserPart::Image(img) => json!({
                            "type": "image",
                            "source": {
                                "type": "base64",
                                "media_type": img.format.media_type(),
                                "data": BASE64.encode(&img.bytes),
                            }
                        }),
                    })
                    .collect();
                json!({
                    "model": self.cfg.model_name,
                    "max_tokens": req.max_output_tokens,
                    "temperature": req.temperature,
                    "system": req.system_text,
                    "messages": [{"role": "user", "content": content}],
                })
            }
            ProviderFamily::ChatCompletions => {
                let content: Vec<Value> = req
                    .user_parts
                    .iter()
                    .map(|part| match part {
                        UserPart::Text(text) => json!({"type": "text", "text": text}),
                        UserPart::Image(img) => json!({
                            "type": "image_url",
                            "image_url": {
                                "url": format!(
                                    "data:{};base64,{}",
                                    img.format.media_type(),
                                    BASE64.encode(&img.bytes)
                                )
                            }
                        }),
                    })
                    .collect();
                json!({
                    "model": self.cfg.model_name,
                    "max_tokens": req.max_output_tokens,
                    "temperature": req.temperature,
                    "messages": [
                        {"role": "system", "content": req.system_text},
                        {"role": "user", "content": content},
                    ],
                })
            }
        }
    }

    async fn send_once(&self, body: &Value) -> Result<(String, bool), GatewayError> {
        let mut builder = self.http.post(&self.cfg.endpoint).json(body);
        builder = match self.cfg.family {
            ProviderFamily::Messages => builder
                .header("x-api-key", &self.api_key)
                .header("anthropic-version", MESSAGES_API_VERSION),
            ProviderFamily::ChatCompletions => builder.bearer_auth(&self.api_key),
        };

        let resp = builder
            .send()
            .await
            .map_err(|e| GatewayError::Unreachable(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| GatewayError::Unreachable(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Rejected {
                status: status.as_u16(),
                detail: text.chars().take(500).collect(),
            });
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| GatewayError::Malformed(e.to_string()))?;
        parse_reply(self.cfg.family, &value)
    }
}

fn parse_reply(family: ProviderFamily, value: &Value) -> Result<(String, bool), GatewayError> {
    match family {
        ProviderFamily::Messages => {
            let blocks = value["content"]
                .as_array()
                .ok_or_else(|| GatewayError::Malformed("missing content array".into()))?;
            let text: String = blocks
                .iter()
                .filter(|b| b["type"] == "text")
                .filter_map(|b| b["text"].as_str())
                .collect();
            Ok((text, value["stop_reason"] == "max_tokens"))
        }
        ProviderFamily::ChatCompletions => {
            let choice = &value["choices"][0];
            let text = choice["message"]["content"]
                .as_str()
                .ok_or_else(|| GatewayError::Malformed("missing choices[0].message.content".into()))?;
            Ok((text.to_string(), choice["finish_reason"] == "length"))
        }
    }
}

#[async_trait]
impl CompletionProvider for LiveProvider {
    fn provider_id(&self) -> String {
        let family = match self.cfg.family {
            ProviderFamily::Messages => "messages",
            ProviderFamily::ChatCompletions => "chat_completions",
        };
        format!("live:{family}:{}", self.cfg.model_name)
    }

    async fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        req.validate()?;
        let body = self.body(req);
        let _permit = self
            .in_flight
            .acquire()
            .await
            .map_err(|_| GatewayError::Unreachable("gateway shut down".into()))?;

        let started = Instant::now();
        let mut attempt = 1;
        loop {
            match self.send_once(&body).await {
                Ok((text, truncated)) => {
                    return ensure_nonempty(ModelResponse {
                        text,
                        provider_id: self.provider_id(),
                        latency_ms: started.elapsed().as_millis() as u64,
                        truncated,
                    });
                }
                Err(err) if err.is_transient() && attempt < self.cfg.retry.max_attempts => {
                    let delay = self.cfg.retry.delay(attempt);
                    tracing::warn!(%err, attempt, ?delay, "transient provider failure, retrying");
                    tokio::time::sleep(delay).await;
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }
}
