use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use async_trait::async_trait;

use super::{ensure_nonempty, CompletionProvider, GatewayError, MockConfig, ModelRequest, ModelResponse};

/// Directory of fixture responses named `<request_tag>-<content_key>.txt`.
#[derive(Debug, Clone)]
pub struct MockCorpus {
    dir: PathBuf,
}

impl MockCorpus {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn file_name(req: &ModelRequest) -> String {
        format!("{}-{}.txt", req.request_tag, req.content_key())
    }

    pub fn path_for(&self, req: &ModelRequest) -> PathBuf {
        self.dir.join(Self::file_name(req))
    }

    pub fn lookup(&self, req: &ModelRequest) -> Result<String, GatewayError> {
        let path = self.path_for(req);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(text),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(GatewayError::CorpusMiss {
                tag: req.request_tag,
                key: req.content_key(),
                path,
            }),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes the fixture answering `req`. Used when authoring corpora.
    pub fn record(&self, req: &ModelRequest, text: &str) -> io::Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.path_for(req);
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// Replays corpus fixtures. The response text is a pure function of the
/// request tag and content key.
#[derive(Debug, Clone)]
pub struct MockProvider {
    corpus: MockCorpus,
    latency: Duration,
}

impl MockProvider {
    pub fn new(cfg: MockConfig) -> Self {
        Self {
            corpus: MockCorpus::new(cfg.seed_corpus),
            latency: Duration::from_millis(cfg.latency_ms),
        }
    }

    pub fn corpus(&self) -> &MockCorpus {
        &self.corpus
    }
}

#[async_trait]
impl CompletionProvider for MockProvider {
    fn provider_id(&self) -> String {
        "mock".to_string()
    }

    async fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        req.validate()?;
        let started = Instant::now();
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        let text = self.corpus.lookup(req)?;
        ensure_nonempty(ModelResponse {
            text,
            provider_id: self.provider_id(),
            latency_ms: started.elapsed().as_millis() as u64,
            truncated: false,
        })
    }
}
