//! Job lifecycle types shared by the service and its clients: the stage state
//! machine, the event stream vocabulary, and the JSON wire shapes.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::sketch::SketchDocument;

pub const INTERRUPTED: &str = "interrupted";

/// Stage a job is in. Serialized as its display form, e.g. `Refining(2)` or
/// `Failed(WritingPrd)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum JobState {
    Received,
    Rasterizing,
    WritingPrd,
    ResolvingImages,
    GeneratingInitial,
    Refining(u32),
    Completed,
    Partial,
    Failed(String),
}

impl JobState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobState::Completed | JobState::Partial | JobState::Failed(_))
    }

    /// Name used in `Failed(..)` for a failure during this state.
    pub fn stage_name(&self) -> String {
        match self {
            JobState::Refining(_) => "Refining".to_string(),
            other => other.to_string(),
        }
    }

    /// Whether `self -> next` is a legal edge for a job with `iterations`
    /// refinement passes.
    pub fn can_transition_to(&self, next: &JobState, iterations: u32) -> bool {
        use JobState::*;
        if self.is_terminal() {
            return false;
        }
        match (self, next) {
            (_, Failed(_)) => true,
            (Received, Rasterizing)
            | (Rasterizing, WritingPrd)
            | (WritingPrd, ResolvingImages)
            | (ResolvingImages, GeneratingInitial) => true,
            (GeneratingInitial, Refining(1)) => iterations >= 1,
            (GeneratingInitial, Completed) => iterations == 0,
            (Refining(i), Refining(j)) => *j == i + 1 && *j <= iterations,
            (Refining(i), Completed) => *i == iterations,
            (Refining(_), Partial) => true,
            _ => false,
        }
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JobState::Received => f.write_str("Received"),
            JobState::Rasterizing => f.write_str("Rasterizing"),
            JobState::WritingPrd => f.write_str("WritingPrd"),
            JobState::ResolvingImages => f.write_str("ResolvingImages"),
            JobState::GeneratingInitial => f.write_str("GeneratingInitial"),
            JobState::Refining(i) => write!(f, "Refining({i})"),
            JobState::Completed => f.write_str("Completed"),
            JobState::Partial => f.write_str("Partial"),
            JobState::Failed(stage) => write!(f, "Failed({stage})"),
        }
    }
}

impl FromStr for JobState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = |prefix: &str| s.strip_prefix(prefix).and_then(|r| r.strip_suffix(')'));
        Ok(match s {
            "Received" => JobState::Received,
            "Rasterizing" => JobState::Rasterizing,
            "WritingPrd" => JobState::WritingPrd,
            "ResolvingImages" => JobState::ResolvingImages,
            "GeneratingInitial" => JobState::GeneratingInitial,
            "Completed" => JobState::Completed,
            "Partial" => JobState::Partial,
            _ => {
                if let Some(i) = inner("Refining(") {
                    let i: u32 = i.parse().map_err(|_| format!("bad refining index in {s:?}"))?;
                    if i == 0 {
                        return Err("refining index starts at 1".into());
                    }
                    JobState::Refining(i)
                } else if let Some(stage) = inner("Failed(") {
                    JobState::Failed(stage.to_string())
                } else {
                    return Err(format!("unknown job state {s:?}"));
                }
            }
        })
    }
}

impl TryFrom<String> for JobState {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<JobState> for String {
    fn from(state: JobState) -> Self {
        state.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub state: JobState,
    pub at: DateTime<Utc>,
}

/// Checks a stage log against the state machine: starts at `Received`, every
/// adjacent pair is a legal edge, and nothing follows a terminal state.
pub fn validate_stage_log(log: &[JobState], iterations: u32) -> Result<(), String> {
    match log.first() {
        None => return Err("stage log is empty".into()),
        Some(JobState::Received) => {}
        Some(other) => return Err(format!("stage log starts at {other}, expected Received")),
    }
    for (i, pair) in log.windows(2).enumerate() {
        if !pair[0].can_transition_to(&pair[1], iterations) {
            return Err(format!(
                "illegal transition {} -> {} at position {}",
                pair[0],
                pair[1],
                i + 1
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JobEvent {
    State {
        seq: u64,
        state: JobState,
        /// Why the job ended, on `Failed` and `Partial` transitions.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
        at: DateTime<Utc>,
    },
    VersionReady {
        seq: u64,
        index: u32,
        content_hash: String,
        at: DateTime<Utc>,
    },
    Warning {
        seq: u64,
        message: String,
        at: DateTime<Utc>,
    },
}

impl JobEvent {
    pub fn seq(&self) -> u64 {
        match self {
            JobEvent::State { seq, .. }
            | JobEvent::VersionReady { seq, .. }
            | JobEvent::Warning { seq, .. } => *seq,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            JobEvent::State { .. } => "state",
            JobEvent::VersionReady { .. } => "version_ready",
            JobEvent::Warning { .. } => "warning",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, JobEvent::State { state, .. } if state.is_terminal())
    }
}

/// Body of `POST /api/jobs`. Exactly one of `sketch` and `svg` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitJob {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch: Option<SketchDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<String>,
    pub theme: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u32>,
    #[serde(default)]
    pub allow_empty_sketch: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub job_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// Uniform error body of the HTTP API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionInfo {
    pub index: u32,
    pub parent_index: Option<u32>,
    pub suggestion_ref: Option<String>,
    pub content_hash: String,
    pub created_at: DateTime<Utc>,
    /// Path relative to the job directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSnapshot {
    pub job_id: String,
    pub state: JobState,
    pub iterations: u32,
    pub stage_log: Vec<StageEntry>,
    pub versions: Vec<VersionInfo>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub created_at: DateTime<Utc>,
}
