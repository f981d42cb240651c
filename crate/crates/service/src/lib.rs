//! Job service for the sketch-to-website pipeline.
//!
//! Accepted jobs are persisted under the data directory and drained by a
//! fixed pool of workers. Progress is exposed over an HTTP/JSON API with a
//! server-sent event stream per job (see [`api`]).

pub mod api;
mod jobs;
pub mod manifest;
mod pipeline;
pub mod store;

use std::collections::HashMap;
use std::io;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::Utc;
use fd_core::codegen::{MergeMode, DEFAULT_ITERATIONS, MAX_ITERATIONS};
use fd_core::gateway::CompletionProvider;
use fd_core::images::ImageSearch;
use fd_core::job::{FieldError, JobEvent, JobSnapshot, JobState, SubmitJob, INTERRUPTED};
use fd_core::prd::ThemePrompt;
use fd_core::sketch::{check_svg, validate_sketch, DEFAULT_JPEG_QUALITY};
use tokio::sync::{mpsc, RwLock};

pub use jobs::{replay, version_path, JobHandle};
use jobs::{blocking, initial_snapshot};
use store::{JobDir, EVENTS_FILE, INPUT_FILE, JOB_FILE};

pub const DEFAULT_WORKERS: usize = 2;
pub const DEFAULT_QUEUE_CAPACITY: usize = 64;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub workers: usize,
    /// Jobs accepted but not yet picked up by a worker.
    pub queue_capacity: usize,
    pub jpeg_quality: u8,
    pub merge_mode: MergeMode,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            workers: DEFAULT_WORKERS,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            jpeg_quality: DEFAULT_JPEG_QUALITY,
            merge_mode: MergeMode::default(),
        }
    }
}

#[derive(Clone)]
pub struct Providers {
    pub llm: Arc<dyn CompletionProvider>,
    pub images: Arc<dyn ImageSearch>,
}

#[derive(Debug, thiserror::Error)]
pub enum SubmitError {
    #[error("invalid job request")]
    Invalid(Vec<FieldError>),
    #[error("job queue is full ({0} pending)")]
    CapacityExceeded(usize),
    #[error("cannot persist job: {0}")]
    Io(#[from] io::Error),
}

pub(crate) struct Shared {
    config: ServiceConfig,
    providers: Providers,
    jobs: RwLock<HashMap<String, Arc<JobHandle>>>,
    queue: mpsc::Sender<Arc<JobHandle>>,
}

/// Handle to a running service. Cheap to clone.
#[derive(Clone)]
pub struct Service {
    shared: Arc<Shared>,
}

/// 128 random bits, hex-encoded.
pub fn new_job_id() -> String {
    hex::encode(rand::random::<[u8; 16]>())
}

pub fn is_job_id(s: &str) -> bool {
    s.len() == 32 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Checks a submission, returning it with defaults filled in.
pub fn validate_submission(mut req: SubmitJob) -> Result<SubmitJob, Vec<FieldError>> {
    let mut fields = Vec::new();
    let mut push = |field: &str, message: String| {
        fields.push(FieldError {
            field: field.to_string(),
            message,
        })
    };
    if let Err(e) = ThemePrompt::new(req.theme.clone()) {
        push("theme", e.to_string());
    }
    let iterations = req.iterations.unwrap_or(DEFAULT_ITERATIONS);
    if iterations > MAX_ITERATIONS {
        push("iterations", format!("must be between 0 and {MAX_ITERATIONS}, got {iterations}"));
    }
    req.iterations = Some(iterations);
    match (&req.sketch, &req.svg) {
        (Some(doc), None) => {
            for v in validate_sketch(doc, req.allow_empty_sketch).violations {
                push(&format!("sketch.{}", v.field), v.message);
            }
        }
        (None, Some(text)) => {
            if let Err(e) = check_svg(text) {
                push("svg", e.to_string());
            }
        }
        _ => push("sketch", "provide exactly one of sketch and svg".into()),
    }
    if fields.is_empty() {
        Ok(req)
    } else {
        Err(fields)
    }
}

impl Service {
    /// Opens the data directory, recovers existing jobs, and starts workers.
    ///
    /// Jobs found in `Received` are queued again. Jobs caught mid-pipeline are
    /// marked `Failed(interrupted)` with their artifacts kept.
    pub async fn start(config: ServiceConfig, providers: Providers) -> io::Result<Service> {
        std::fs::create_dir_all(&config.data_dir)?;
        let (tx, rx) = mpsc::channel(config.queue_capacity.max(1));
        let workers = config.workers.max(1);
        let shared = Arc::new(Shared {
            config,
            providers,
            jobs: RwLock::new(HashMap::new()),
            queue: tx,
        });

        let rx = Arc::new(tokio::sync::Mutex::new(rx));
        for _ in 0..workers {
            let rx = rx.clone();
            let shared = shared.clone();
            tokio::spawn(async move {
                loop {
                    let next = rx.lock().await.recv().await;
                    match next {
                        Some(job) => pipeline::run_job(shared.clone(), job).await,
                        None => break,
                    }
                }
            });
        }

        let service = Service { shared };
        service.recover().await?;
        Ok(service)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.shared.config
    }

    pub async fn job(&self, id: &str) -> Option<Arc<JobHandle>> {
        self.shared.jobs.read().await.get(id).cloned()
    }

    pub async fn job_count(&self) -> usize {
        self.shared.jobs.read().await.len()
    }

    /// Validates, persists in `Received`, and enqueues. Returns the job id.
    pub async fn submit(&self, req: SubmitJob) -> Result<String, SubmitError> {
        let req = validate_submission(req).map_err(SubmitError::Invalid)?;
        let permit = self
            .shared
            .queue
            .try_reserve()
            .map_err(|_| SubmitError::CapacityExceeded(self.shared.config.queue_capacity))?;

        let id = new_job_id();
        let dir = JobDir::new(self.shared.config.data_dir.join(&id));
        let now = Utc::now();
        let snapshot = initial_snapshot(&id, req.iterations.unwrap_or(DEFAULT_ITERATIONS), now);
        let first = JobEvent::State {
            seq: 1,
            state: JobState::Received,
            detail: None,
            at: now,
        };
        let (d, s, e) = (dir.clone(), snapshot.clone(), first.clone());
        blocking(move || {
            std::fs::create_dir_all(d.root())?;
            d.write_json(INPUT_FILE, &req)?;
            d.append_events(std::slice::from_ref(&e))?;
            d.write_json(JOB_FILE, &s)
        })
        .await?;

        let handle = JobHandle::new(dir, snapshot, vec![first]);
        self.shared.jobs.write().await.insert(id.clone(), handle.clone());
        permit.send(handle);
        tracing::info!(job = %id, "job accepted");
        Ok(id)
    }

    async fn recover(&self) -> io::Result<()> {
        let root = self.shared.config.data_dir.clone();
        let found = blocking(move || load_jobs(&root)).await?;
        let mut resumed = Vec::new();
        for (dir, snapshot, events) in found {
            let state = snapshot.state.clone();
            let handle = JobHandle::new(dir, snapshot, events);
            self.shared.jobs.write().await.insert(handle.id.clone(), handle.clone());
            if state == JobState::Received {
                resumed.push(handle);
            } else if !state.is_terminal() {
                tracing::warn!(job = %handle.id, %state, "job interrupted by restart");
                let detail = format!("service restarted while the job was in {state}");
                pipeline::finish(&self.shared, &handle, JobState::Failed(INTERRUPTED.into()), Some(detail)).await?;
            }
        }
        resumed.sort_by_key(|h| h.id.clone());
        if !resumed.is_empty() {
            tracing::info!(count = resumed.len(), "re-queueing received jobs");
            let queue = self.shared.queue.clone();
            tokio::spawn(async move {
                for job in resumed {
                    if queue.send(job).await.is_err() {
                        break;
                    }
                }
            });
        }
        Ok(())
    }
}

type Loaded = (JobDir, JobSnapshot, Vec<JobEvent>);

fn load_jobs(root: &std::path::Path) -> io::Result<Vec<Loaded>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !entry.file_type()?.is_dir() || !is_job_id(&name) {
            continue;
        }
        let dir = JobDir::new(entry.path());
        match load_job(&dir, &name) {
            Ok(loaded) => out.push(loaded),
            Err(e) => tracing::error!(job = %name, error = %e, "skipping unreadable job directory"),
        }
    }
    Ok(out)
}

fn load_job(dir: &JobDir, id: &str) -> io::Result<Loaded> {
    let input: SubmitJob = dir.read_json(INPUT_FILE)?;
    dir.remove_temporaries()?;
    let events = dir.read_events()?;
    // Normalize the log in case a torn final line was dropped.
    dir.rewrite_events(&events)?;
    let snapshot = replay(id, input.iterations.unwrap_or(DEFAULT_ITERATIONS), &events)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{EVENTS_FILE}: {e}")))?;
    dir.write_json(JOB_FILE, &snapshot)?;
    Ok((dir.clone(), snapshot, events))
}
