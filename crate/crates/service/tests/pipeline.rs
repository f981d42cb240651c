mod common;

use std::sync::Arc;

use common::*;
use fd_core::gateway::RequestTag;
use fd_core::hash::sha256_hex;
use fd_core::images::SearchError;
use fd_core::job::{validate_stage_log, JobEvent, JobSnapshot, JobState};
use fd_core::prd::parse_image_descriptors;
use fd_core::testkit::{BrokenImageSearch, Fault, FaultInjector, FaultPlan};
use fd_service::manifest::verify_manifest;
use fd_service::JobHandle;

fn states(s: &JobSnapshot) -> Vec<JobState> {
    s.stage_log.iter().map(|e| e.state.clone()).collect()
}

fn assert_legal(s: &JobSnapshot) {
    validate_stage_log(&states(s), s.iterations).unwrap_or_else(|e| panic!("{e}: {:?}", states(s)));
}

fn read(job: &JobHandle, rel: &str) -> String {
    std::fs::read_to_string(job.dir().path(rel)).unwrap()
}

#[tokio::test]
async fn golden_run_completes_with_five_versions() {
    let tmp = tempfile::tempdir().unwrap();
    let svc = start(tmp.path(), mock_llm(), catalog()).await;
    let (job, snap) = run(&svc, request(4)).await;
    assert_eq!(snap.state, JobState::Completed, "{:?}", snap.failure);
    assert_legal(&snap);
    assert_eq!(snap.versions.len(), 5);
    for (k, v) in snap.versions.iter().enumerate() {
        assert_eq!(v.index, k as u32);
        assert_eq!(v.parent_index, (k as u32).checked_sub(1));
        assert_eq!(sha256_hex(read(&job, &v.path).as_bytes()), v.content_hash);
    }
    assert!(parse_image_descriptors(&read(&job, "prd.resolved.md")).is_empty());
    assert!(!parse_image_descriptors(&read(&job, "prd.md")).is_empty());
    for k in 1..=4 {
        assert!(job.dir().path(&format!("suggestions/s{k}.md")).exists());
    }
    let manifest = verify_manifest(job.dir()).unwrap();
    assert_eq!(manifest.outcome, JobState::Completed);
    assert_eq!(manifest.lineage.len(), 5);
    // The owl is not in the catalog and falls back; the repeated fox is cached.
    let resolutions = read(&job, "resolutions.json");
    assert!(resolutions.contains("\"fallback\""));
    assert!(resolutions.contains("\"cache\""));
}

#[tokio::test]
async fn zero_iterations_completes_after_initial() {
    let tmp = tempfile::tempdir().unwrap();
    let svc = start(tmp.path(), mock_llm(), catalog()).await;
    let (_, snap) = run(&svc, request(0)).await;
    assert_eq!(snap.state, JobState::Completed);
    assert_eq!(snap.versions.len(), 1);
    assert_eq!(states(&snap).last(), Some(&JobState::Completed));
    assert_legal(&snap);
}

async fn run_with_plan(plan: FaultPlan, iterations: u32) -> (Arc<JobHandle>, JobSnapshot, tempfile::TempDir) {
    let tmp = tempfile::tempdir().unwrap();
    let llm = Arc::new(FaultInjector::new(mock_llm(), plan));
    let svc = start(tmp.path(), llm, catalog()).await;
    let (job, snap) = run(&svc, request(iterations)).await;
    assert_legal(&snap);
    (job, snap, tmp)
}

#[tokio::test]
async fn prd_failure_fails_writing_stage() {
    let (job, snap, _tmp) = run_with_plan(FaultPlan::new().on_all(RequestTag::Prd, Fault::Rejected), 4).await;
    assert_eq!(snap.state, JobState::Failed("WritingPrd".into()));
    assert!(snap.failure.is_some());
    assert!(job.dir().path("sketch.jpg").exists());
    assert!(!job.dir().path("prd.md").exists());
}

#[tokio::test]
async fn missing_corpus_entry_fails_writing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tempfile::tempdir().unwrap();
    let llm = Arc::new(fd_core::gateway::MockProvider::new(fd_core::gateway::MockConfig {
        seed_corpus: empty.path().to_path_buf(),
        latency_ms: 0,
    }));
    let svc = start(tmp.path(), llm, catalog()).await;
    let (_, snap) = run(&svc, request(4)).await;
    assert_eq!(snap.state, JobState::Failed("WritingPrd".into()));
    assert!(snap.failure.unwrap().contains("prd-"));
}

#[tokio::test]
async fn image_rejection_fails_resolving_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let broken = Arc::new(BrokenImageSearch(SearchError::Rejected {
        status: 401,
        detail: "invalid key".into(),
    }));
    let svc = start(tmp.path(), mock_llm(), broken).await;
    let (_, snap) = run(&svc, request(4)).await;
    assert_eq!(snap.state, JobState::Failed("ResolvingImages".into()));
    assert_legal(&snap);
}

#[tokio::test]
async fn image_outage_degrades_to_placeholders() {
    let tmp = tempfile::tempdir().unwrap();
    let down = Arc::new(BrokenImageSearch(SearchError::Unreachable("timeout".into())));
    let llm = Arc::new(FaultInjector::new(mock_llm(), FaultPlan::new()));
    let svc = start(tmp.path(), llm, down).await;
    let (job, snap) = run(&svc, request(0)).await;
    // The corpus was recorded with catalog URLs, so the initial_code request
    // differs and misses; what matters is the resolving stage passed.
    assert!(states(&snap).contains(&JobState::GeneratingInitial));
    assert!(!snap.warnings.is_empty());
    let resolved = read(&job, "prd.resolved.md");
    assert!(parse_image_descriptors(&resolved).is_empty());
    assert!(resolved.contains("data:image/svg+xml;base64,"));
}

#[tokio::test]
async fn refusal_fails_initial_generation() {
    let refusal = Fault::Respond("Sorry, I can't help with that.".into());
    let (_, snap, _tmp) = run_with_plan(FaultPlan::new().on_all(RequestTag::InitialCode, refusal), 4).await;
    assert_eq!(snap.state, JobState::Failed("GeneratingInitial".into()));
    assert!(snap.versions.is_empty());
}

#[tokio::test]
async fn refine_failure_at_step_three_is_partial() {
    let (job, snap, _tmp) = run_with_plan(FaultPlan::new().on_nth(RequestTag::RefineCode, 3, Fault::Unreachable), 4).await;
    assert_eq!(snap.state, JobState::Partial);
    let indices: Vec<u32> = snap.versions.iter().map(|v| v.index).collect();
    assert_eq!(indices, [0, 1, 2]);
    assert_eq!(states(&snap)[states(&snap).len() - 2], JobState::Refining(3));
    let manifest = verify_manifest(job.dir()).unwrap();
    assert_eq!(manifest.outcome, JobState::Partial);
    assert!(!job.dir().path("versions/v3.html").exists());
}

#[tokio::test]
async fn suggestion_failure_in_first_iteration_keeps_initial() {
    let (_, snap, _tmp) = run_with_plan(FaultPlan::new().on_nth(RequestTag::Suggestions, 1, Fault::Rejected), 2).await;
    assert_eq!(snap.state, JobState::Partial);
    assert_eq!(snap.versions.len(), 1);
}

#[tokio::test]
async fn oversized_svg_fails_rasterizing() {
    let tmp = tempfile::tempdir().unwrap();
    let svc = start(tmp.path(), mock_llm(), catalog()).await;
    let mut req = request(0);
    req.sketch = None;
    req.svg = Some(r#"<svg xmlns="http://www.w3.org/2000/svg" width="5000" height="5000"><rect width="10" height="10"/></svg>"#.into());
    let (_, snap) = run(&svc, req).await;
    assert_eq!(snap.state, JobState::Failed("Rasterizing".into()));
    assert_legal(&snap);
}

/// Every event is checked the moment it is published: the artifacts it
/// announces must already be readable.
#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn artifacts_exist_before_announcement() {
    let tmp = tempfile::tempdir().unwrap();
    let svc = start(tmp.path(), mock_llm(), catalog()).await;
    for _ in 0..3 {
        let id = svc.submit(request(4)).await.unwrap();
        let job = svc.job(&id).await.unwrap();
        let mut rx = job.subscribe();
        let mut seen = 0;
        loop {
            let (batch, _) = job.events_from(seen).await;
            seen += batch.len();
            for e in &batch {
                match e {
                    JobEvent::State { state, .. } => {
                        let needed: &[&str] = match state {
                            JobState::WritingPrd => &["sketch.svg", "sketch.jpg"],
                            JobState::ResolvingImages => &["prd.md"],
                            JobState::GeneratingInitial => &["prd.resolved.md", "resolutions.json"],
                            JobState::Refining(_) => &["versions/v0.html"],
                            s if s.is_terminal() => &["manifest.json"],
                            _ => &[],
                        };
                        for rel in needed {
                            assert!(job.dir().path(rel).exists(), "{rel} missing at {state}");
                        }
                    }
                    JobEvent::VersionReady { index, content_hash, .. } => {
                        let html = read(&job, &format!("versions/v{index}.html"));
                        assert_eq!(&sha256_hex(html.as_bytes()), content_hash);
                    }
                    JobEvent::Warning { .. } => {}
                }
            }
            if batch.last().is_some_and(|e| e.is_terminal()) {
                break;
            }
            rx.changed().await.unwrap();
        }
        assert_eq!(job.state().await, JobState::Completed);
    }
}

#[tokio::test]
async fn jobs_run_concurrently_and_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let svc = start(tmp.path(), mock_llm(), catalog()).await;
    let mut ids = Vec::new();
    for _ in 0..4 {
        ids.push(svc.submit(request(4)).await.unwrap());
    }
    let mut digests = Vec::new();
    for id in ids {
        let job = svc.job(&id).await.unwrap();
        let snap = wait_terminal(&job).await;
        assert_eq!(snap.state, JobState::Completed);
        digests.push(verify_manifest(job.dir()).unwrap().files_digest());
    }
    digests.dedup();
    assert_eq!(digests.len(), 1);
}
