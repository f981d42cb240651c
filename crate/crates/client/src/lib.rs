//! Client for the pipeline service's HTTP API.
//!
//! ```no_run
//! # async fn demo() -> Result<(), fd_client::ClientError> {
//! use fd_core::job::SubmitJob;
//! let client = fd_client::Client::new("http://127.0.0.1:8080")?;
//! let id = client
//!     .submit(&SubmitJob {
//!         sketch: None,
//!         svg: Some(std::fs::read_to_string("sketch.svg").unwrap()),
//!         theme: "Neighborhood bakery".into(),
//!         iterations: Some(4),
//!         allow_empty_sketch: false,
//!     })
//!     .await?;
//! let done = client.wait(&id, |event| println!("{event:?}")).await?;
//! println!("{}", done.state);
//! # Ok(())
//! # }
//! ```

use eventsource_stream::Eventsource;
use fd_core::job::{ErrorBody, JobEvent, JobSnapshot, SubmitJob, SubmitResponse};
use futures::stream::{BoxStream, StreamExt};
use reqwest::{Response, StatusCode};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid service url {0:?}")]
    BadUrl(String),
    #[error("service returned {status}: {} ({})", .body.error, .body.detail)]
    Api { status: StatusCode, body: ErrorBody },
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("unexpected response: {0}")]
    Decode(String),
    #[error("event stream ended before the job finished")]
    StreamEnded,
}

impl ClientError {
    /// Machine-readable error code from the service, if any.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.error),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base: impl Into<String>) -> Result<Self, ClientError> {
        let base: String = base.into();
        let trimmed = base.trim_end_matches('/').to_string();
        if !(trimmed.starts_with("http://") || trimmed.starts_with("https://")) {
            return Err(ClientError::BadUrl(base));
        }
        Ok(Self {
            base: trimmed,
            http: reqwest::Client::new(),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn check(resp: Response) -> Result<Response, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await?;
        let body = serde_json::from_str(&text).unwrap_or(ErrorBody {
            error: "http_error".into(),
            detail: text,
            fields: Vec::new(),
        });
        Err(ClientError::Api { status, body })
    }

    pub async fn health(&self) -> Result<serde_json::Value, ClientError> {
        let resp = Self::check(self.http.get(self.url("/healthz")).send().await?).await?;
        Ok(resp.json().await?)
    }

    pub async fn submit(&self, job: &SubmitJob) -> Result<String, ClientError> {
        let resp = self.http.post(self.url("/api/jobs")).json(job).send().await?;
        let resp = Self::check(resp).await?;
        Ok(resp.json::<SubmitResponse>().await?.job_id)
    }

    pub async fn job(&self, id: &str) -> Result<JobSnapshot, ClientError> {
        let resp = Self::check(self.http.get(self.url(&format!("/api/jobs/{id}"))).send().await?).await?;
        Ok(resp.json().await?)
    }

    /// Resolved requirements document, or the raw one with `raw`.
    pub async fn prd(&self, id: &str, raw: bool) -> Result<String, ClientError> {
        let mut req = self.http.get(self.url(&format!("/api/jobs/{id}/prd")));
        if raw {
            req = req.query(&[("variant", "raw")]);
        }
        Ok(Self::check(req.send().await?).await?.text().await?)
    }

    /// Exact bytes of version `k`.
    pub async fn version(&self, id: &str, k: u32) -> Result<Vec<u8>, ClientError> {
        let resp = self.http.get(self.url(&format!("/api/jobs/{id}/versions/{k}"))).send().await?;
        Ok(Self::check(resp).await?.bytes().await?.to_vec())
    }

    /// Event stream of a job: past events first, then live ones. Ends after
    /// the terminal event.
    pub async fn events(&self, id: &str) -> Result<BoxStream<'static, Result<JobEvent, ClientError>>, ClientError> {
        self.events_after(id, 0).await
    }

    /// Like [`Client::events`], skipping events with `seq <= after`.
    pub async fn events_after(
        &self,
        id: &str,
        after: u64,
    ) -> Result<BoxStream<'static, Result<JobEvent, ClientError>>, ClientError> {
        let mut req = self
            .http
            .get(self.url(&format!("/api/jobs/{id}/events")))
            .header("accept", "text/event-stream");
        if after > 0 {
            req = req.header("last-event-id", after.to_string());
        }
        let resp = Self::check(req.send().await?).await?;
        let stream = resp.bytes_stream().eventsource().map(|item| match item {
            Ok(ev) => serde_json::from_str::<JobEvent>(&ev.data)
                .map_err(|e| ClientError::Decode(format!("event {:?}: {e}", ev.event))),
            Err(e) => Err(ClientError::Decode(e.to_string())),
        });
        Ok(stream.boxed())
    }

    /// Follows the event stream until the job ends, reconnecting from the
    /// last seen event if the connection drops, then returns the final
    /// snapshot.
    pub async fn wait(&self, id: &str, mut on_event: impl FnMut(&JobEvent)) -> Result<JobSnapshot, ClientError> {
        let mut last_seq = 0;
        let mut reconnects = 0;
        loop {
            let mut stream = self.events_after(id, last_seq).await?;
            while let Some(item) = stream.next().await {
                match item {
                    Ok(event) => {
                        last_seq = event.seq();
                        on_event(&event);
                        if event.is_terminal() {
                            return self.job(id).await;
                        }
                    }
                    Err(ClientError::Decode(_)) if reconnects < 3 => break,
                    Err(e) => return Err(e),
                }
            }
            let snapshot = self.job(id).await?;
            if snapshot.state.is_terminal() {
                return Ok(snapshot);
            }
            reconnects += 1;
            if reconnects > 3 {
                return Err(ClientError::StreamEnded);
            }
        }
    }
}
