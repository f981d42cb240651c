#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use fd_core::gateway::{CompletionProvider, MockConfig, MockProvider};
use fd_core::images::{ImageSearch, MockCatalog};
use fd_core::job::{JobSnapshot, SubmitJob};
use fd_core::sketch::SketchDocument;
use fd_service::{JobHandle, Providers, Service, ServiceConfig};

pub const THEME: &str = "Personal portfolio for a wildlife photographer";

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn landing() -> SketchDocument {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join("sketches/landing.json")).unwrap()).unwrap()
}

pub fn mock_llm() -> Arc<MockProvider> {
    Arc::new(MockProvider::new(MockConfig {
        seed_corpus: fixtures().join("corpus"),
        latency_ms: 0,
    }))
}

pub fn catalog() -> Arc<MockCatalog> {
    Arc::new(MockCatalog::load(&fixtures().join("catalog.json")).unwrap())
}

pub fn request(iterations: u32) -> SubmitJob {
    SubmitJob {
        sketch: Some(landing()),
        svg: None,
        theme: THEME.into(),
        iterations: Some(iterations),
        allow_empty_sketch: false,
    }
}

pub async fn start(
    data: &std::path::Path,
    llm: Arc<dyn CompletionProvider>,
    images: Arc<dyn ImageSearch>,
) -> Service {
    Service::start(ServiceConfig::new(data), Providers { llm, images }).await.unwrap()
}

pub async fn wait_terminal(job: &JobHandle) -> JobSnapshot {
    let mut rx = job.subscribe();
    loop {
        let snap = job.snapshot().await;
        if snap.state.is_terminal() {
            return snap;
        }
        tokio::time::timeout(std::time::Duration::from_secs(30), rx.changed())
            .await
            .expect("job made no progress for 30s")
            .unwrap();
    }
}

pub async fn run(service: &Service, req: SubmitJob) -> (Arc<JobHandle>, JobSnapshot) {
    let id = service.submit(req).await.unwrap();
    let job = service.job(&id).await.unwrap();
    let snap = wait_terminal(&job).await;
    (job, snap)
}
