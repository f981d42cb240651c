//! In-memory job handles backed by their directories.
//!
//! The event log is the durable record: every mutation goes through
//! [`JobHandle::commit`], which appends events, rewrites `job.json` as a
//! convenience copy, and only then publishes the new snapshot and wakes
//! subscribers. Readers never observe a state whose files are not on disk,
//! and recovery rebuilds snapshots with [`replay`].

use std::io;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use fd_core::codegen::suggestion_ref;
use fd_core::job::{JobEvent, JobSnapshot, JobState, StageEntry, VersionInfo};
use tokio::sync::{watch, Mutex, RwLock};

use crate::store::{JobDir, JOB_FILE};

pub fn version_path(index: u32) -> String {
    format!("versions/v{index}.html")
}

/// Change to record in one commit.
#[derive(Debug, Clone)]
pub enum Change {
    State(JobState),
    /// Terminal transition carrying the reason it ended early.
    End(JobState, Option<String>),
    Version { index: u32, content_hash: String },
    Warning(String),
}

fn apply(snapshot: &mut JobSnapshot, event: &JobEvent) -> Result<(), String> {
    match event {
        JobEvent::State { state, detail, at, .. } => {
            if !snapshot.state.can_transition_to(state, snapshot.iterations) {
                return Err(format!("illegal transition {} -> {state}", snapshot.state));
            }
            snapshot.state = state.clone();
            snapshot.stage_log.push(StageEntry {
                state: state.clone(),
                at: *at,
            });
            if detail.is_some() {
                snapshot.failure = detail.clone();
            }
        }
        JobEvent::VersionReady {
            index, content_hash, at, ..
        } => {
            let expected = snapshot.versions.len() as u32;
            if *index != expected {
                return Err(format!("version {index} announced, expected {expected}"));
            }
            snapshot.versions.push(VersionInfo {
                index: *index,
                parent_index: index.checked_sub(1),
                suggestion_ref: (*index > 0).then(|| suggestion_ref(*index)),
                content_hash: content_hash.clone(),
                created_at: *at,
                path: version_path(*index),
            });
        }
        JobEvent::Warning { message, .. } => snapshot.warnings.push(message.clone()),
    }
    Ok(())
}

/// Snapshot implied by an event log. The log must start with `Received`.
pub fn replay(job_id: &str, iterations: u32, events: &[JobEvent]) -> Result<JobSnapshot, String> {
    let (first_at, rest) = match events.split_first() {
        Some((JobEvent::State { state: JobState::Received, at, .. }, rest)) => (*at, rest),
        _ => return Err("event log does not start with Received".into()),
    };
    let mut snapshot = initial_snapshot(job_id, iterations, first_at);
    for e in rest {
        apply(&mut snapshot, e)?;
    }
    Ok(snapshot)
}

pub fn initial_snapshot(job_id: &str, iterations: u32, at: DateTime<Utc>) -> JobSnapshot {
    JobSnapshot {
        job_id: job_id.to_string(),
        state: JobState::Received,
        iterations,
        stage_log: vec![StageEntry {
            state: JobState::Received,
            at,
        }],
        versions: Vec::new(),
        warnings: Vec::new(),
        failure: None,
        created_at: at,
    }
}

#[derive(Debug)]
struct Published {
    snapshot: JobSnapshot,
    events: Vec<JobEvent>,
}

#[derive(Debug)]
pub struct JobHandle {
    pub id: String,
    dir: JobDir,
    writer: Mutex<()>,
    published: RwLock<Published>,
    notify: watch::Sender<usize>,
}

pub(crate) async fn blocking<T: Send + 'static>(f: impl FnOnce() -> io::Result<T> + Send + 'static) -> io::Result<T> {
    tokio::task::spawn_blocking(f).await.map_err(io::Error::other)?
}

impl JobHandle {
    pub fn new(dir: JobDir, snapshot: JobSnapshot, events: Vec<JobEvent>) -> Arc<Self> {
        let (notify, _) = watch::channel(events.len());
        Arc::new(Self {
            id: snapshot.job_id.clone(),
            dir,
            writer: Mutex::new(()),
            published: RwLock::new(Published { snapshot, events }),
            notify,
        })
    }

    pub fn dir(&self) -> &JobDir {
        &self.dir
    }

    pub async fn snapshot(&self) -> JobSnapshot {
        self.published.read().await.snapshot.clone()
    }

    pub async fn state(&self) -> JobState {
        self.published.read().await.snapshot.state.clone()
    }

    /// Events from position `from` on, plus whether the job is terminal.
    pub async fn events_from(&self, from: usize) -> (Vec<JobEvent>, bool) {
        let p = self.published.read().await;
        let slice = p.events.get(from..).unwrap_or_default().to_vec();
        (slice, p.snapshot.state.is_terminal())
    }

    pub fn subscribe(&self) -> watch::Receiver<usize> {
        self.notify.subscribe()
    }

    /// Applies `changes` in order, persists, then publishes. An illegal
    /// transition rejects the whole commit.
    pub async fn commit(&self, changes: Vec<Change>) -> io::Result<()> {
        let _guard = self.writer.lock().await;
        let (mut snapshot, next_seq) = {
            let p = self.published.read().await;
            (p.snapshot.clone(), p.events.last().map_or(1, |e| e.seq() + 1))
        };

        let mut events = Vec::with_capacity(changes.len());
        for (i, change) in changes.into_iter().enumerate() {
            let seq = next_seq + i as u64;
            let at = Utc::now();
            let event = match change {
                Change::State(state) => JobEvent::State {
                    seq,
                    state,
                    detail: None,
                    at,
                },
                Change::End(state, detail) => JobEvent::State { seq, state, detail, at },
                Change::Version { index, content_hash } => JobEvent::VersionReady {
                    seq,
                    index,
                    content_hash,
                    at,
                },
                Change::Warning(message) => JobEvent::Warning { seq, message, at },
            };
            apply(&mut snapshot, &event).map_err(|e| io::Error::other(format!("job {}: {e}", self.id)))?;
            events.push(event);
        }

        let dir = self.dir.clone();
        let persisted = snapshot.clone();
        let appended = events.clone();
        blocking(move || {
            dir.append_events(&appended)?;
            dir.write_json(JOB_FILE, &persisted)
        })
        .await?;

        let count = {
            let mut p = self.published.write().await;
            p.snapshot = snapshot;
            p.events.extend(events);
            p.events.len()
        };
        self.notify.send_replace(count);
        Ok(())
    }

    pub async fn transition(&self, state: JobState) -> io::Result<()> {
        self.commit(vec![Change::State(state)]).await
    }
}
