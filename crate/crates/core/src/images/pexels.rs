use std::sync::{Arc, OnceLock};
use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use tokio::sync::Mutex;
use tokio::time::Instant;

use super::{ImageCandidate, ImageError, ImageQuery, ImageSearch, SearchError};

pub const DEFAULT_API_BASE: &str = "https://api.pexels.com";

/// Spacing between live API requests across the whole process.
pub const LIVE_MIN_INTERVAL: Duration = Duration::from_millis(350);

/// Single-token bucket: callers are admitted at most once per interval.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(interval: Duration) -> Self {
        Self {
            interval,
            next_slot: Mutex::new(None),
        }
    }

    /// The limiter shared by every live client in the process.
    pub fn global() -> Arc<RateLimiter> {
        static GLOBAL: OnceLock<Arc<RateLimiter>> = OnceLock::new();
        GLOBAL
            .get_or_init(|| Arc::new(RateLimiter::new(LIVE_MIN_INTERVAL)))
            .clone()
    }

    pub async fn acquire(&self) {
        let mut next = self.next_slot.lock().await;
        let now = Instant::now();
        let slot = match *next {
            Some(t) if t > now => {
                tokio::time::sleep_until(t).await;
                t
            }
            _ => now,
        };
        *next = Some(slot + self.interval);
    }
}

#[derive(Deserialize)]
struct SearchResponse {
    #[serde(default)]
    photos: Vec<Photo>,
}

#[derive(Deserialize)]
struct Photo {
    width: u32,
    height: u32,
    src: PhotoSources,
}

#[derive(Deserialize)]
struct PhotoSources {
    original: String,
}

/// Client for a Pexels-compatible `GET /v1/search` endpoint.
pub struct PexelsClient {
    base: String,
    api_key: String,
    per_page: u32,
    http: reqwest::Client,
    limiter: Arc<RateLimiter>,
}

impl PexelsClient {
    pub fn new(base: impl Into<String>, api_key: impl Into<String>, per_page: u32) -> Result<Self, ImageError> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(20))
            .build()
            .map_err(|e| ImageError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            base: base.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            per_page: per_page.clamp(1, 80),
            http,
            limiter: RateLimiter::global(),
        })
    }

    pub fn with_rate_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = limiter;
        self
    }
}

#[async_trait]
impl ImageSearch for PexelsClient {
    fn provider_id(&self) -> String {
        format!("pexels:{}", self.base)
    }

    async fn search(&self, query: &ImageQuery) -> Result<Vec<ImageCandidate>, SearchError> {
        self.limiter.acquire().await;
        let resp = self
            .http
            .get(format!("{}/v1/search", self.base))
            .query(&[("query", query.term.as_str()), ("per_page", &self.per_page.to_string())])
            .header("Authorization", &self.api_key)
            .send()
            .await
            .map_err(|e| SearchError::Unreachable(e.to_string()))?;

        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(SearchError::Unreachable(format!("status {status}")));
        }
        if !status.is_success() {
            let detail = resp.text().await.unwrap_or_default();
            return Err(SearchError::Rejected {
                status: status.as_u16(),
                detail: detail.chars().take(300).collect(),
            });
        }
        let body: SearchResponse = resp
            .json()
            .await
            .map_err(|e| SearchError::Unreachable(format!("unreadable search response: {e}")))?;
        Ok(body
            .photos
            .into_iter()
            .map(|p| ImageCandidate {
                url: p.src.original,
                width: p.width,
                height: p.height,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test(start_paused = true)]
    async fn limiter_spaces_requests() {
        let limiter = RateLimiter::new(Duration::from_millis(350));
        let start = Instant::now();
        for _ in 0..4 {
            limiter.acquire().await;
        }
        assert_eq!(start.elapsed(), Duration::from_millis(3 * 350));
    }
}
