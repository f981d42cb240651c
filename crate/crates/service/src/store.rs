//! On-disk layout of one job:
//!
//! ```text
//! <data-dir>/<job_id>/
//!   job.json          snapshot, rewritten on every change
//!   events.jsonl      append-only event log
//!   input.json        the submitted request
//!   sketch.svg sketch.jpg prd.md prd.resolved.md resolutions.json
//!   versions/v0.html ...  suggestions/s1.md ...
//!   manifest.json     written before the terminal transition
//! ```
//!
//! Files other than the event log are replaced atomically (write to a
//! temporary sibling, then rename), so a crash never leaves a torn artifact.

use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use fd_core::job::JobEvent;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const JOB_FILE: &str = "job.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const INPUT_FILE: &str = "input.json";
pub const MANIFEST_FILE: &str = "manifest.json";
const TMP_SUFFIX: &str = ".tmp";

/// Files that describe the job rather than being pipeline output.
pub fn is_bookkeeping(rel: &str) -> bool {
    matches!(rel, JOB_FILE | EVENTS_FILE | MANIFEST_FILE) || rel.ends_with(TMP_SUFFIX)
}

#[derive(Debug, Clone)]
pub struct JobDir {
    root: PathBuf,
}

impl JobDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write_atomic(&self, rel: &str, bytes: &[u8]) -> io::Result<()> {
        let dest = self.path(rel);
        if let Some(parent) = dest.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut tmp = dest.clone().into_os_string();
        tmp.push(TMP_SUFFIX);
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, &dest)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
        bytes.push(b'\n');
        self.write_atomic(rel, &bytes)
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &str) -> io::Result<T> {
        let bytes = std::fs::read(self.path(rel))?;
        serde_json::from_slice(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    pub fn append_events(&self, events: &[JobEvent]) -> io::Result<()> {
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e).map_err(io::Error::other)?;
            buf.push(b'\n');
        }
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.path(EVENTS_FILE))?;
        file.write_all(&buf)
    }

    /// Reads the event log. A torn final line (from a crash mid-append) is
    /// dropped; corruption anywhere else is an error.
    pub fn read_events(&self) -> io::Result<Vec<JobEvent>> {
        let text = match std::fs::read_to_string(self.path(EVENTS_FILE)) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let mut events = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            match serde_json::from_str(line) {
                Ok(e) => events.push(e),
                Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => break,
                Err(e) => return Err(io::Error::new(io::ErrorKind::InvalidData, e)),
            }
        }
        Ok(events)
    }

    /// Rewrites the event log from `events`; used after dropping a torn line.
    pub fn rewrite_events(&self, events: &[JobEvent]) -> io::Result<()> {
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e).map_err(io::Error::other)?;
            buf.push(b'\n');
        }
        self.write_atomic(EVENTS_FILE, &buf)
    }

    /// All files below the job directory as sorted `/`-separated relative paths.
    pub fn list_files(&self) -> io::Result<Vec<String>> {
        let mut out = Vec::new();
        let mut stack = vec![self.root.clone()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir)? {
                let entry = entry?;
                let path = entry.path();
                if entry.file_type()?.is_dir() {
                    stack.push(path);
                } else if let Ok(rel) = path.strip_prefix(&self.root) {
                    let rel: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
                    out.push(rel.join("/"));
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Deletes leftovers of interrupted atomic writes.
    pub fn remove_temporaries(&self) -> io::Result<usize> {
        let mut removed = 0;
        for rel in self.list_files()? {
            if rel.ends_with(TMP_SUFFIX) {
                std::fs::remove_file(self.path(&rel))?;
                removed += 1;
            }
        }
        Ok(removed)
    }
}
