use std::sync::Arc;

use fd_core::codegen::{
    run_refinement_loop, CodegenError, LoopObserver, LoopOptions, MergeMode, NoopObserver,
    RefinementSuggestions, WebsiteVersion,
};
use fd_core::gateway::{CompletionProvider, MockCorpus, MockProvider, MockConfig, RequestTag, UserPart};
use fd_core::images::ResolvedPrd;
use fd_core::prd::ThemePrompt;
use fd_core::testkit::{CorpusRecorder, Fault, FaultInjector, FaultPlan, ScriptedProvider};

fn prd() -> ResolvedPrd {
    ResolvedPrd {
        text: "## Overview\nA page.\n\n![owl](https://img.test/owl.jpg)\n".into(),
        resolutions: Vec::new(),
    }
}

fn theme() -> ThemePrompt {
    ThemePrompt::new("Bakery in a small coastal town").unwrap()
}

fn injector(plan: FaultPlan) -> FaultInjector {
    FaultInjector::new(Arc::new(ScriptedProvider::default()), plan)
}

#[tokio::test]
async fn four_iterations_yield_five_linked_versions() {
    let p = injector(FaultPlan::new());
    let out = run_refinement_loop(&p, &prd(), &theme(), 4, LoopOptions::default(), &mut NoopObserver)
        .await
        .unwrap();
    assert!(!out.is_partial());
    assert_eq!(out.versions.len(), 5);
    assert_eq!(out.suggestions.len(), 4);
    for (k, v) in out.versions.iter().enumerate() {
        assert_eq!(v.index, k as u32);
        if k == 0 {
            assert_eq!(v.parent_index, None);
            assert_eq!(v.suggestion_ref, None);
        } else {
            assert_eq!(v.parent_index, Some(k as u32 - 1));
            assert_eq!(v.suggestion_ref.as_deref(), Some(format!("suggestions/s{k}.md").as_str()));
            assert_eq!(out.suggestions[k - 1].derived_from_index, k as u32 - 1);
        }
    }
    assert_eq!(p.count(RequestTag::InitialCode), 1);
    assert_eq!(p.count(RequestTag::Suggestions), 4);
    assert_eq!(p.count(RequestTag::RefineCode), 4);
}

#[tokio::test]
async fn zero_iterations_never_analyze() {
    let p = injector(FaultPlan::new());
    let out = run_refinement_loop(&p, &prd(), &theme(), 0, LoopOptions::default(), &mut NoopObserver)
        .await
        .unwrap();
    assert_eq!(out.versions.len(), 1);
    assert_eq!(p.count(RequestTag::Suggestions), 0);
    assert_eq!(p.count(RequestTag::RefineCode), 0);
}

#[tokio::test]
async fn too_many_iterations_rejected_before_any_call() {
    let p = injector(FaultPlan::new());
    let err = run_refinement_loop(&p, &prd(), &theme(), 17, LoopOptions::default(), &mut NoopObserver)
        .await
        .unwrap_err();
    assert!(matches!(err, CodegenError::TooManyIterations(17)));
    assert!(p.requests().is_empty());
}

#[tokio::test]
async fn failure_at_third_refinement_keeps_earlier_versions() {
    let p = injector(FaultPlan::new().on_nth(RequestTag::RefineCode, 3, Fault::Unreachable));
    let out = run_refinement_loop(&p, &prd(), &theme(), 4, LoopOptions::default(), &mut NoopObserver)
        .await
        .unwrap();
    assert!(out.is_partial());
    let indices: Vec<u32> = out.versions.iter().map(|v| v.index).collect();
    assert_eq!(indices, vec![0, 1, 2]);
    assert_eq!(out.failure.as_ref().unwrap().iteration, 3);
}

#[tokio::test]
async fn every_refine_request_carries_theme_and_fixed_prd() {
    let p = injector(FaultPlan::new());
    run_refinement_loop(&p, &prd(), &theme(), 3, LoopOptions::default(), &mut NoopObserver)
        .await
        .unwrap();
    let refines: Vec<_> = p
        .requests()
        .into_iter()
        .filter(|r| r.request_tag == RequestTag::RefineCode)
        .collect();
    assert_eq!(refines.len(), 3);
    for r in &refines {
        let UserPart::Text(prd_part) = &r.user_parts[0] else { panic!() };
        let UserPart::Text(theme_part) = &r.user_parts[1] else { panic!() };
        assert!(prd_part.ends_with(&prd().text));
        assert!(theme_part.starts_with(&format!("Website theme:\n{}\n\nApply these improvements:\n", theme().as_str())));
        // From-original merging: exactly one suggestion block per request.
        assert_eq!(theme_part.matches("Apply these improvements:").count(), 1);
    }
}

#[tokio::test]
async fn cumulative_merge_accumulates() {
    let p = injector(FaultPlan::new());
    let opts = LoopOptions {
        merge_mode: MergeMode::Cumulative,
    };
    run_refinement_loop(&p, &prd(), &theme(), 3, opts, &mut NoopObserver).await.unwrap();
    let counts: Vec<usize> = p
        .requests()
        .iter()
        .filter(|r| r.request_tag == RequestTag::RefineCode)
        .map(|r| r.user_text().matches("Apply these improvements:").count())
        .collect();
    assert_eq!(counts, vec![1, 2, 3]);
}

#[tokio::test]
async fn refusal_retried_once_then_no_code() {
    let refusal = Fault::Respond("I can't help with building that website.".into());
    let p = injector(FaultPlan::new().on_all(RequestTag::InitialCode, refusal.clone()));
    let err = run_refinement_loop(&p, &prd(), &theme(), 2, LoopOptions::default(), &mut NoopObserver)
        .await
        .unwrap_err();
    assert!(matches!(err, CodegenError::NoCodeFound { tag: RequestTag::InitialCode }));
    let reqs = p.requests();
    assert_eq!(reqs.len(), 2);
    assert_eq!(reqs[1].user_parts.len(), reqs[0].user_parts.len() + 1);

    // One refusal followed by a good answer recovers.
    let p = injector(FaultPlan::new().on_nth(RequestTag::InitialCode, 1, refusal));
    let out = run_refinement_loop(&p, &prd(), &theme(), 1, LoopOptions::default(), &mut NoopObserver)
        .await
        .unwrap();
    assert_eq!(out.versions.len(), 2);
    assert_eq!(p.count(RequestTag::InitialCode), 2);
}

#[tokio::test]
async fn fragment_answers_count_as_no_code() {
    let fragment = Fault::Respond("```html\n<div>only a fragment</div>\n```".into());
    let p = injector(FaultPlan::new().on_all(RequestTag::InitialCode, fragment));
    let err = run_refinement_loop(&p, &prd(), &theme(), 0, LoopOptions::default(), &mut NoopObserver)
        .await
        .unwrap_err();
    assert!(matches!(err, CodegenError::NoCodeFound { .. }));
}

#[derive(Default)]
struct Recorder {
    events: Vec<String>,
    fail_on_version: Option<u32>,
}

#[async_trait::async_trait]
impl LoopObserver for Recorder {
    async fn iteration_started(&mut self, i: u32) -> Result<(), String> {
        self.events.push(format!("start {i}"));
        Ok(())
    }

    async fn suggestions_ready(&mut self, i: u32, _s: &RefinementSuggestions) -> Result<(), String> {
        self.events.push(format!("suggestions {i}"));
        Ok(())
    }

    async fn version_ready(&mut self, v: &WebsiteVersion) -> Result<(), String> {
        if self.fail_on_version == Some(v.index) {
            return Err("disk full".into());
        }
        self.events.push(format!("version {}", v.index));
        Ok(())
    }
}

#[tokio::test]
async fn observer_sees_ordered_progress() {
    let p = injector(FaultPlan::new());
    let mut obs = Recorder::default();
    run_refinement_loop(&p, &prd(), &theme(), 2, LoopOptions::default(), &mut obs).await.unwrap();
    assert_eq!(
        obs.events,
        ["version 0", "start 1", "suggestions 1", "version 1", "start 2", "suggestions 2", "version 2"]
    );

    let mut obs = Recorder {
        fail_on_version: Some(2),
        ..Default::default()
    };
    let out = run_refinement_loop(&p, &prd(), &theme(), 3, LoopOptions::default(), &mut obs).await.unwrap();
    assert_eq!(out.versions.len(), 2);
    assert!(matches!(out.failure.unwrap().error, CodegenError::Observer(_)));
}

#[tokio::test]
async fn recorded_corpus_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let recorder = CorpusRecorder::new(Arc::new(ScriptedProvider::default()), MockCorpus::new(dir.path()));
    let recorded = run_refinement_loop(&recorder, &prd(), &theme(), 3, LoopOptions::default(), &mut NoopObserver)
        .await
        .unwrap();

    let mock = MockProvider::new(MockConfig {
        seed_corpus: dir.path().to_path_buf(),
        latency_ms: 0,
    });
    assert_eq!(mock.provider_id(), "mock");
    let hashes = |vs: &[WebsiteVersion]| vs.iter().map(|v| v.content_hash.clone()).collect::<Vec<_>>();
    for _ in 0..3 {
        let replay = run_refinement_loop(&mock, &prd(), &theme(), 3, LoopOptions::default(), &mut NoopObserver)
            .await
            .unwrap();
        assert_eq!(hashes(&replay.versions), hashes(&recorded.versions));
    }
    // Versions differ from one another: the loop actually changes the site.
    let unique: std::collections::HashSet<_> = hashes(&recorded.versions).into_iter().collect();
    assert_eq!(unique.len(), 4);
}

#[tokio::test]
async fn corpus_miss_names_the_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let mock = MockProvider::new(MockConfig {
        seed_corpus: dir.path().to_path_buf(),
        latency_ms: 0,
    });
    let err = run_refinement_loop(&mock, &prd(), &theme(), 0, LoopOptions::default(), &mut NoopObserver)
        .await
        .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("initial_code"), "{msg}");
    assert!(msg.contains(&dir.path().display().to_string()), "{msg}");
}
