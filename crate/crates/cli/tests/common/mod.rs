#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::time::Duration;

use fd_client::Client;
use fd_core::job::{JobEvent, JobState, SubmitJob, INTERRUPTED};
use fd_core::sketch::SketchDocument;
use fd_service::manifest::verify_manifest;
use fd_service::replay;
use fd_service::store::JobDir;
use futures::StreamExt;
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::process::{Child, Command};

pub const THEME: &str = "Personal portfolio for a wildlife photographer";

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn sketch(name: &str) -> SketchDocument {
    let text = std::fs::read_to_string(fixtures().join("sketches").join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn request(iterations: u32) -> SubmitJob {
    SubmitJob {
        sketch: Some(sketch("landing.json")),
        svg: None,
        theme: THEME.into(),
        iterations: Some(iterations),
        allow_empty_sketch: false,
    }
}

pub fn fd() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fd"));
    cmd.env("FD_MOCK_CORPUS", fixtures().join("corpus"))
        .env("FD_MOCK_CATALOG", fixtures().join("catalog.json"))
        .env_remove("RUST_LOG")
        .kill_on_drop(true);
    cmd
}

/// Starts `fd serve` on a free port and returns it with a client.
pub async fn spawn_server(data: &Path, extra: &[&str]) -> (Child, Client) {
    let mut child = fd()
        .args(["serve", "--port", "0", "--data-dir"])
        .arg(data)
        .args(extra)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .expect("spawn fd serve");
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let line = tokio::time::timeout(Duration::from_secs(20), lines.next_line())
        .await
        .expect("server did not report its address")
        .unwrap()
        .expect("server exited before listening");
    let url = line.strip_prefix("listening on ").expect("unexpected first line").to_string();
    (child, Client::new(url).unwrap())
}

/// Files digest of the pipeline artifacts of a finished, uninterrupted job.
pub fn golden_digest(job_dir: &Path) -> Result<String, String> {
    Ok(verify_manifest(&JobDir::new(job_dir))?.files_digest())
}

/// Checks everything recovery promises about one job directory.
pub fn check_job(dir: &Path, id: &str) -> Result<JobState, String> {
    let job_dir = JobDir::new(dir.join(id));
    let events = job_dir.read_events().map_err(|e| format!("{id}: {e}"))?;
    for (i, e) in events.iter().enumerate() {
        if e.seq() != i as u64 + 1 {
            return Err(format!("{id}: event {i} has seq {}", e.seq()));
        }
    }
    let input: SubmitJob = job_dir.read_json("input.json").map_err(|e| e.to_string())?;
    let snap = replay(id, input.iterations.unwrap_or(4), &events).map_err(|e| format!("{id}: {e}"))?;
    if !snap.state.is_terminal() {
        return Err(format!("{id}: log ends in {}", snap.state));
    }
    let stored: fd_core::job::JobSnapshot = job_dir.read_json("job.json").map_err(|e| e.to_string())?;
    if stored != snap {
        return Err(format!("{id}: job.json disagrees with the event log"));
    }
    let manifest = verify_manifest(&job_dir).map_err(|e| format!("{id}: {e}"))?;
    if manifest.outcome != snap.state {
        return Err(format!("{id}: manifest says {}, log says {}", manifest.outcome, snap.state));
    }
    for v in &snap.versions {
        let bytes = std::fs::read(job_dir.path(&v.path)).map_err(|e| format!("{id}: {e}"))?;
        if fd_core::hash::sha256_hex(&bytes) != v.content_hash {
            return Err(format!("{id}: {} does not match its announced hash", v.path));
        }
    }
    if snap.state == JobState::Failed(INTERRUPTED.into())
        && !snap.failure.as_deref().unwrap_or("").contains("restarted")
    {
        return Err(format!("{id}: interrupted without a reason"));
    }
    Ok(snap.state)
}

/// One kill-and-restart trial: three jobs on one worker, SIGKILL once the
/// first reaches `Refining(k)`, restart, let everything settle.
///
/// The first job must come back `Failed(interrupted)`, the queued ones must
/// complete with the reference digest, and every log must replay cleanly.
pub async fn kill_trial(data: &Path, trial: u32, reference: &str) -> Result<String, String> {
    let latency = (15 + trial % 3 * 5).to_string();
    let flags = ["--workers", "1", "--mock-latency-ms", latency.as_str()];
    let (mut child, client) = spawn_server(data, &flags).await;

    let mut ids = Vec::new();
    for _ in 0..3 {
        ids.push(client.submit(&request(4)).await.map_err(|e| e.to_string())?);
    }
    let target = trial % 4 + 1;
    let mut events = client.events(&ids[0]).await.map_err(|e| e.to_string())?;
    loop {
        match events.next().await {
            Some(Ok(JobEvent::State { state: JobState::Refining(k), .. })) if k == target => break,
            Some(Ok(e)) if e.is_terminal() => return Err(format!("job ended before Refining({target})")),
            Some(Ok(_)) => {}
            Some(Err(e)) => return Err(e.to_string()),
            None => return Err("event stream ended early".into()),
        }
    }
    child.start_kill().map_err(|e| e.to_string())?;
    child.wait().await.map_err(|e| e.to_string())?;
    drop(events);

    let (_child, client) = spawn_server(data, &flags).await;
    let mut states = Vec::new();
    for id in &ids {
        let snap = tokio::time::timeout(Duration::from_secs(30), client.wait(id, |_| {}))
            .await
            .map_err(|_| format!("{id} did not finish after restart"))?
            .map_err(|e| e.to_string())?;
        states.push(snap.state);
    }
    for id in &ids {
        check_job(data, id)?;
    }
    if states[0] != JobState::Failed(INTERRUPTED.into()) {
        return Err(format!("killed job ended {}", states[0]));
    }
    for (id, state) in ids.iter().zip(&states).skip(1) {
        if *state != JobState::Completed {
            return Err(format!("queued job {id} ended {state}"));
        }
        let digest = golden_digest(&data.join(id))?;
        if digest != reference {
            return Err(format!("queued job {id} digest {digest} differs from reference"));
        }
    }
    Ok(format!("killed at Refining({target}), {} {} {}", states[0], states[1], states[2]))
}

/// Output of one `fd run` invocation.
pub struct RunOutput {
    pub code: i32,
    pub version_paths: Vec<PathBuf>,
    pub elapsed: Duration,
}

pub async fn fd_run(out: &Path, extra: &[&str]) -> RunOutput {
    let started = std::time::Instant::now();
    let output = fd()
        .arg("run")
        .arg("--sketch")
        .arg(fixtures().join("sketches/landing.json"))
        .args(["--theme", THEME, "--quiet", "--out"])
        .arg(out)
        .args(extra)
        .output()
        .await
        .expect("run fd");
    RunOutput {
        code: output.status.code().unwrap_or(-1),
        version_paths: String::from_utf8_lossy(&output.stdout).lines().map(PathBuf::from).collect(),
        elapsed: started.elapsed(),
    }
}
