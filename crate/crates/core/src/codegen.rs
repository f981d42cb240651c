//! Coding stage: initial website generation and the refinement loop.
//!
//! Each iteration analyzes the latest version, merges the resulting
//! suggestions with the theme, and regenerates the whole document from the
//! fixed resolved requirements document.

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::gateway::{
    extract_html_document, CompletionProvider, GatewayError, ModelRequest, RequestTag, UserPart,
};
use crate::hash::sha256_hex;
use crate::images::ResolvedPrd;
use crate::prd::ThemePrompt;
use crate::prompts;

pub const DEFAULT_ITERATIONS: u32 = 4;
pub const MAX_ITERATIONS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebsiteVersion {
    pub index: u32,
    pub html: String,
    pub parent_index: Option<u32>,
    pub suggestion_ref: Option<String>,
    pub created_at: DateTime<Utc>,
    pub content_hash: String,
}

impl WebsiteVersion {
    fn new(index: u32, html: String, suggestion_ref: Option<String>) -> Self {
        let content_hash = sha256_hex(html.as_bytes());
        Self {
            index,
            parent_index: index.checked_sub(1),
            suggestion_ref,
            created_at: Utc::now(),
            content_hash,
            html,
        }
    }
}

/// Artifact id of the suggestions that produced version `index`.
pub fn suggestion_ref(index: u32) -> String {
    format!("suggestions/s{index}.md")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementSuggestions {
    pub text: String,
    pub derived_from_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnhancedTheme {
    pub text: String,
}

/// How suggestions are merged into the theme across iterations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    /// Each iteration starts from the original theme.
    #[default]
    FromOriginal,
    /// Each iteration appends to the previous enhanced theme. Experimental.
    Cumulative,
}

pub fn merge_theme(theme: &ThemePrompt, s: &RefinementSuggestions) -> EnhancedTheme {
    merge_onto(theme.as_str(), s)
}

fn merge_onto(base: &str, s: &RefinementSuggestions) -> EnhancedTheme {
    EnhancedTheme {
        text: format!("{base}\n\n{}\n{}", prompts::MERGE_HEADING, s.text),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CodegenError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("no HTML document in the {tag} response after a stricter retry")]
    NoCodeFound { tag: RequestTag },
    #[error("iterations must be at most {MAX_ITERATIONS}, got {0}")]
    TooManyIterations(u32),
    #[error("persisting pipeline output failed: {0}")]
    Observer(String),
}

pub fn initial_code_request(prd: &ResolvedPrd, theme: &ThemePrompt) -> ModelRequest {
    code_request(RequestTag::InitialCode, prd, theme.as_str())
}

pub fn refine_code_request(prd: &ResolvedPrd, enhanced: &EnhancedTheme) -> ModelRequest {
    code_request(RequestTag::RefineCode, prd, &enhanced.text)
}

fn code_request(tag: RequestTag, prd: &ResolvedPrd, theme_text: &str) -> ModelRequest {
    ModelRequest::new(
        tag,
        prompts::code_system(),
        vec![
            UserPart::Text(prompts::code_prd_part(&prd.text)),
            UserPart::Text(prompts::code_theme_part(theme_text)),
        ],
    )
}

pub fn suggestions_request(version: &WebsiteVersion, theme: &ThemePrompt) -> ModelRequest {
    ModelRequest::new(
        RequestTag::Suggestions,
        prompts::suggestions_system(),
        vec![
            UserPart::Text(prompts::code_theme_part(theme.as_str())),
            UserPart::Text(prompts::suggestions_code_part(&version.html)),
        ],
    )
}

/// Extraction that only accepts complete documents: the result must be a
/// fixed point of [`extract_html_document`].
fn extract_document(text: &str) -> Option<String> {
    let html = extract_html_document(text).ok()?;
    (extract_html_document(&html).ok()? == html).then_some(html)
}

/// Completes `req` and extracts its document, retrying once with the strict
/// single-document instruction when the first answer holds no code.
pub async fn complete_html(provider: &dyn CompletionProvider, req: &ModelRequest) -> Result<String, CodegenError> {
    let first = provider.complete(req).await?;
    if let Some(html) = extract_document(&first.text) {
        return Ok(html);
    }
    tracing::warn!(tag = %req.request_tag, "no code in response, retrying with strict instruction");
    let retry = provider.complete(&req.with_strict_html_instruction()).await?;
    extract_document(&retry.text).ok_or(CodegenError::NoCodeFound { tag: req.request_tag })
}

pub async fn generate_initial(
    provider: &dyn CompletionProvider,
    prd: &ResolvedPrd,
    theme: &ThemePrompt,
) -> Result<WebsiteVersion, CodegenError> {
    let html = complete_html(provider, &initial_code_request(prd, theme)).await?;
    Ok(WebsiteVersion::new(0, html, None))
}

pub async fn analyze(
    provider: &dyn CompletionProvider,
    version: &WebsiteVersion,
    theme: &ThemePrompt,
) -> Result<RefinementSuggestions, CodegenError> {
    let resp = provider.complete(&suggestions_request(version, theme)).await?;
    Ok(RefinementSuggestions {
        text: resp.text,
        derived_from_index: version.index,
    })
}

pub async fn refine_once(
    provider: &dyn CompletionProvider,
    prd: &ResolvedPrd,
    enhanced: &EnhancedTheme,
    parent: &WebsiteVersion,
) -> Result<WebsiteVersion, CodegenError> {
    let html = complete_html(provider, &refine_code_request(prd, enhanced)).await?;
    let index = parent.index + 1;
    Ok(WebsiteVersion::new(index, html, Some(suggestion_ref(index))))
}

/// Receives loop progress. The loop waits for each callback, so an observer
/// that persists artifacts guarantees they exist before the next step.
#[async_trait]
pub trait LoopObserver: Send {
    async fn iteration_started(&mut self, _iteration: u32) -> Result<(), String> {
        Ok(())
    }

    async fn suggestions_ready(&mut self, _iteration: u32, _s: &RefinementSuggestions) -> Result<(), String> {
        Ok(())
    }

    async fn version_ready(&mut self, _version: &WebsiteVersion) -> Result<(), String> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct NoopObserver;

impl LoopObserver for NoopObserver {}

#[derive(Debug)]
pub struct LoopFailure {
    /// Refinement iteration (1-based) that failed.
    pub iteration: u32,
    pub error: CodegenError,
}

#[derive(Debug)]
pub struct LoopOutcome {
    pub versions: Vec<WebsiteVersion>,
    pub suggestions: Vec<RefinementSuggestions>,
    /// Set when the loop stopped early; `versions` holds what completed.
    pub failure: Option<LoopFailure>,
}

impl LoopOutcome {
    pub fn is_partial(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoopOptions {
    pub merge_mode: MergeMode,
}

/// Generates version 0, then runs `n` analyze -> merge -> regenerate passes.
///
/// Failure of the initial generation is an error. A failure inside the loop
/// ends it early and is reported in [`LoopOutcome::failure`] with all earlier
/// versions kept.
pub async fn run_refinement_loop(
    provider: &dyn CompletionProvider,
    prd: &ResolvedPrd,
    theme: &ThemePrompt,
    n: u32,
    options: LoopOptions,
    observer: &mut dyn LoopObserver,
) -> Result<LoopOutcome, CodegenError> {
    if n > MAX_ITERATIONS {
        return Err(CodegenError::TooManyIterations(n));
    }

    let initial = generate_initial(provider, prd, theme).await?;
    observer.version_ready(&initial).await.map_err(CodegenError::Observer)?;

    let mut outcome = LoopOutcome {
        versions: vec![initial],
        suggestions: Vec::new(),
        failure: None,
    };
    let mut previous_theme: Option<EnhancedTheme> = None;

    for iteration in 1..=n {
        let step = async {
            observer.iteration_started(iteration).await.map_err(CodegenError::Observer)?;
            let parent = outcome.versions.last().expect("version 0 exists");
            let suggestions = analyze(provider, parent, theme).await?;
            observer
                .suggestions_ready(iteration, &suggestions)
                .await
                .map_err(CodegenError::Observer)?;
            let enhanced = match (options.merge_mode, &previous_theme) {
                (MergeMode::Cumulative, Some(prev)) => merge_onto(&prev.text, &suggestions),
                _ => merge_theme(theme, &suggestions),
            };
            let version = refine_once(provider, prd, &enhanced, parent).await?;
            observer.version_ready(&version).await.map_err(CodegenError::Observer)?;
            Ok::<_, CodegenError>((suggestions, enhanced, version))
        };
        match step.await {
            Ok((suggestions, enhanced, version)) => {
                outcome.suggestions.push(suggestions);
                outcome.versions.push(version);
                previous_theme = Some(enhanced);
            }
            Err(error) => {
                tracing::warn!(iteration, %error, "refinement stopped early");
                outcome.failure = Some(LoopFailure { iteration, error });
                break;
            }
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_format() {
        let theme = ThemePrompt::new("T").unwrap();
        let s = RefinementSuggestions {
            text: "S".into(),
            derived_from_index: 0,
        };
        let merged = merge_theme(&theme, &s);
        assert_eq!(merged.text, "T\n\nApply these improvements:\nS");
        assert_eq!(merged, merge_theme(&theme, &s));
        assert!(merged.text.starts_with(theme.as_str()));
    }

    #[test]
    fn version_lineage_fields() {
        let v0 = WebsiteVersion::new(0, "<html></html>".into(), None);
        assert_eq!(v0.parent_index, None);
        let v3 = WebsiteVersion::new(3, "<html></html>".into(), Some(suggestion_ref(3)));
        assert_eq!(v3.parent_index, Some(2));
        assert_eq!(v3.suggestion_ref.as_deref(), Some("suggestions/s3.md"));
        assert_eq!(v0.content_hash, v3.content_hash);
    }

    #[test]
    fn fragments_are_not_documents() {
        assert_eq!(extract_document("```html\n<div>x</div>\n```"), None);
        assert_eq!(
            extract_document("```html\n<!DOCTYPE html><html></html>\n```").as_deref(),
            Some("<!DOCTYPE html><html></html>")
        );
    }
}
