//! Image resolution: descriptor -> search query -> concrete URL -> substituted
//! requirements document.

mod catalog;
mod pexels;
mod substitute;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use async_trait::async_trait;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::prd::{ImageDescriptor, ImageSize};

pub use catalog::MockCatalog;
pub use pexels::{PexelsClient, RateLimiter, DEFAULT_API_BASE, LIVE_MIN_INTERVAL};
pub use substitute::{image_reference, substitute, Resolution, ResolvedPrd};

pub const ENV_IMAGE_API_KEY: &str = "FD_IMAGE_API_KEY";
pub const ENV_IMAGE_API_BASE: &str = "FD_IMAGE_API_BASE";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageQuery {
    pub term: String,
    pub min_width: u32,
    pub min_height: u32,
}

/// Minimum pixel dimensions per size bucket.
pub fn min_dimensions(size: ImageSize) -> (u32, u32) {
    match size {
        ImageSize::Small => (400, 300),
        ImageSize::Medium => (800, 600),
        ImageSize::Large => (1600, 900),
    }
}

pub fn size_to_query(d: &ImageDescriptor) -> ImageQuery {
    let (min_width, min_height) = min_dimensions(d.size);
    ImageQuery {
        term: d.term.clone(),
        min_width,
        min_height,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageSource {
    Api,
    Cache,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedImage {
    pub url: String,
    pub width: u32,
    pub height: u32,
    pub source: ImageSource,
    pub query_term: String,
}

/// One search hit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageCandidate {
    pub url: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SearchError {
    #[error("image provider unreachable: {0}")]
    Unreachable(String),
    #[error("image provider rejected the request with status {status}: {detail}")]
    Rejected { status: u16, detail: String },
}

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("invalid image provider configuration: {0}")]
    InvalidConfig(String),
    #[error("environment variable {0} holding the image API key is not set")]
    MissingApiKey(String),
    #[error("image provider rejected the request with status {status}: {detail}")]
    Rejected { status: u16, detail: String },
    #[error("resolutions do not match the document descriptors: {0}")]
    ResolutionMismatch(String),
}

#[async_trait]
pub trait ImageSearch: Send + Sync {
    fn provider_id(&self) -> String;

    async fn search(&self, query: &ImageQuery) -> Result<Vec<ImageCandidate>, SearchError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImageProviderConfig {
    Live {
        api_base: String,
        /// Name of the environment variable holding the key.
        api_key_ref: String,
        #[serde(default = "default_per_page")]
        per_page: u32,
    },
    Mock {
        catalog: PathBuf,
    },
}

fn default_per_page() -> u32 {
    15
}

impl ImageProviderConfig {
    pub fn from_env() -> Self {
        ImageProviderConfig::Live {
            api_base: std::env::var(ENV_IMAGE_API_BASE).unwrap_or_else(|_| DEFAULT_API_BASE.to_string()),
            api_key_ref: ENV_IMAGE_API_KEY.to_string(),
            per_page: default_per_page(),
        }
    }
}

pub fn connect_images(cfg: &ImageProviderConfig) -> Result<Arc<dyn ImageSearch>, ImageError> {
    Ok(match cfg {
        ImageProviderConfig::Live {
            api_base,
            api_key_ref,
            per_page,
        } => {
            let key = std::env::var(api_key_ref)
                .ok()
                .filter(|k| !k.trim().is_empty())
                .ok_or_else(|| ImageError::MissingApiKey(api_key_ref.clone()))?;
            Arc::new(PexelsClient::new(api_base.clone(), key, *per_page)?)
        }
        ImageProviderConfig::Mock { catalog } => Arc::new(MockCatalog::load(catalog)?),
    })
}

/// First candidate meeting the minimum size, else the largest by area (first
/// wins ties), else none.
pub fn select_candidate<'a>(query: &ImageQuery, candidates: &'a [ImageCandidate]) -> Option<&'a ImageCandidate> {
    candidates
        .iter()
        .find(|c| c.width >= query.min_width && c.height >= query.min_height)
        .or_else(|| {
            candidates
                .iter()
                .rev()
                .max_by_key(|c| u64::from(c.width) * u64::from(c.height))
        })
}

/// Deterministic, self-contained placeholder for a query's size bucket.
pub fn placeholder_url(min_width: u32, min_height: u32) -> String {
    let svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{min_width}\" height=\"{min_height}\" \
viewBox=\"0 0 {min_width} {min_height}\"><rect width=\"100%\" height=\"100%\" fill=\"#d9d9d9\"/></svg>"
    );
    format!("data:image/svg+xml;base64,{}", BASE64.encode(svg))
}

pub fn fallback_image(query: &ImageQuery) -> ResolvedImage {
    ResolvedImage {
        url: placeholder_url(query.min_width, query.min_height),
        width: query.min_width,
        height: query.min_height,
        source: ImageSource::Fallback,
        query_term: query.term.clone(),
    }
}

/// Resolves queries for one job, memoizing by (term, size bucket).
pub struct ImageResolver<'a> {
    search: &'a dyn ImageSearch,
    memo: HashMap<ImageQuery, ResolvedImage>,
    provider_calls: usize,
    warnings: Vec<String>,
}

impl<'a> ImageResolver<'a> {
    pub fn new(search: &'a dyn ImageSearch) -> Self {
        Self {
            search,
            memo: HashMap::new(),
            provider_calls: 0,
            warnings: Vec::new(),
        }
    }

    pub fn provider_calls(&self) -> usize {
        self.provider_calls
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn into_warnings(self) -> Vec<String> {
        self.warnings
    }

    /// Results are aligned with `queries`. Outages degrade to the placeholder
    /// with a warning; rejections (bad key) fail.
    pub async fn resolve(&mut self, queries: &[ImageQuery]) -> Result<Vec<ResolvedImage>, ImageError> {
        let mut out = Vec::with_capacity(queries.len());
        for query in queries {
            if let Some(hit) = self.memo.get(query) {
                let mut hit = hit.clone();
                if hit.source == ImageSource::Api {
                    hit.source = ImageSource::Cache;
                }
                out.push(hit);
                continue;
            }
            self.provider_calls += 1;
            let resolved = match self.search.search(query).await {
                Ok(candidates) => match select_candidate(query, &candidates) {
                    Some(c) => ResolvedImage {
                        url: c.url.clone(),
                        width: c.width,
                        height: c.height,
                        source: ImageSource::Api,
                        query_term: query.term.clone(),
                    },
                    None => fallback_image(query),
                },
                Err(SearchError::Unreachable(detail)) => {
                    self.warnings.push(format!(
                        "image search for {:?} failed ({detail}); using placeholder",
                        query.term
                    ));
                    fallback_image(query)
                }
                Err(SearchError::Rejected { status, detail }) => {
                    return Err(ImageError::Rejected { status, detail });
                }
            };
            self.memo.insert(query.clone(), resolved.clone());
            out.push(resolved);
        }
        Ok(out)
    }
}
