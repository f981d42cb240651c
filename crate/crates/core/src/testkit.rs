//! Test support: an independent descriptor oracle, document generators,
//! a scripted model provider, and fault injectors. Enabled by the `testkit`
//! feature; nothing in the pipeline depends on it.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::gateway::{
    CompletionProvider, GatewayError, MockCorpus, ModelRequest, ModelResponse, RequestTag,
};
use crate::images::{ImageCandidate, ImageQuery, ImageSearch, SearchError};
use crate::prd::ImageSize;

/// A descriptor as the oracle reports it: (term, size, start, end).
pub type OracleHit = (String, ImageSize, usize, usize);

/// Brute-force descriptor finder. Tries every substring that starts with `[`
/// and ends with `)]` and checks it against the grammar directly. Shares no
/// code with the production scanner.
pub fn oracle_parse(text: &str) -> Vec<OracleHit> {
    // Longest possible token: "[" + 64 chars of up to 4 bytes + "(medium)]".
    const MAX_TOKEN_BYTES: usize = 1 + 64 * 4 + 9;
    let mut hits = Vec::new();
    let boundaries: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    for (a, &start) in boundaries.iter().enumerate() {
        if !text[start..].starts_with('[') {
            continue;
        }
        for &end in &boundaries[a + 1..] {
            if end - start > MAX_TOKEN_BYTES {
                break;
            }
            if let Some((term, size)) = oracle_token(&text[start..end]) {
                hits.push((term, size, start, end));
            }
        }
    }
    // A token cannot contain a second '[', so no two hits overlap; drop any
    // hit nested inside an earlier one anyway, to mirror a left-to-right reading.
    let mut out: Vec<OracleHit> = Vec::new();
    for hit in hits {
        if out.last().is_none_or(|last| hit.2 >= last.3) {
            out.push(hit);
        }
    }
    out
}

fn oracle_token(s: &str) -> Option<(String, ImageSize)> {
    let inner = s.strip_prefix('[')?.strip_suffix(")]")?;
    let open = inner.rfind('(')?;
    let (term, size) = (&inner[..open], &inner[open + 1..]);
    let term_len = term.chars().count();
    if term_len == 0 || term_len > 64 {
        return None;
    }
    let allowed = |c: char| c.is_alphanumeric() || c == ' ' || c == '-';
    if !term.chars().all(allowed) {
        return None;
    }
    let size = match size.to_lowercase().as_str() {
        "small" => ImageSize::Small,
        "medium" => ImageSize::Medium,
        "large" => ImageSize::Large,
        _ => return None,
    };
    // Lowercasing can change length for some scripts; require exact ASCII match.
    if !size_ascii_matches(&inner.as_bytes()[open + 1..], size) {
        return None;
    }
    Some((term.to_string(), size))
}

fn size_ascii_matches(raw: &[u8], size: ImageSize) -> bool {
    let word: &[u8] = match size {
        ImageSize::Small => b"small",
        ImageSize::Medium => b"medium",
        ImageSize::Large => b"large",
    };
    raw.len() == word.len() && raw.iter().zip(word).all(|(a, b)| a.to_ascii_lowercase() == *b)
}

const TERM_WORDS: &[&str] = &[
    "school", "cafe", "beach scene", "red fox", "snow-leopard", "city skyline", "owl", "forest trail",
    "team photo", "product shot 2", "Zürich", "café", "mountain lake", "office", "A1",
];

const NOISE: &[&str] = &[
    "# Overview\n",
    "## Layout\n",
    "A hero banner with a call to action. ",
    "see [docs](http://example.com/docs) ",
    "[link text](https://x.test/a(b)) ",
    "- bullet item\n",
    "[not a descriptor] ",
    "[school(huge)] ",
    "[(large)] ",
    "[ok(small) ] ",
    "(medium)] ",
    "[[",
    "]]",
    "[",
    "(",
    ")]",
    "`code [x(y)]` ",
    "emoji 🦊 and ünïcödé ",
    "![alt](http://img.test/a.jpg) ",
    "[under_score(small)] ",
    "\n\n",
    "[tab\tterm(large)] ",
];

/// Random case for a size word, e.g. `lArGe`.
fn random_case(rng: &mut StdRng, word: &str) -> String {
    word.chars()
        .map(|c| if rng.gen_bool(0.3) { c.to_ascii_uppercase() } else { c })
        .collect()
}

pub fn random_term(rng: &mut StdRng) -> String {
    if rng.gen_bool(0.8) {
        TERM_WORDS.choose(rng).unwrap().to_string()
    } else {
        let len = rng.gen_range(1..=70);
        let charset: Vec<char> = "abcXYZ09 -é".chars().collect();
        (0..len).map(|_| *charset.choose(rng).unwrap()).collect()
    }
}

pub fn random_descriptor_token(rng: &mut StdRng) -> String {
    let size = ImageSize::ALL.choose(rng).unwrap();
    format!("[{}({})]", random_term(rng), random_case(rng, size.as_str()))
}

/// Markdown-ish document interleaving descriptor tokens with noise,
/// including near-miss tokens and markdown links.
pub fn random_document(rng: &mut StdRng) -> String {
    let pieces = rng.gen_range(0..40);
    let mut doc = String::new();
    for _ in 0..pieces {
        if rng.gen_bool(0.35) {
            doc.push_str(&random_descriptor_token(rng));
        } else {
            doc.push_str(NOISE.choose(rng).unwrap());
        }
    }
    doc
}

/// Failure to inject on a given call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    /// Respond with this text instead of calling the inner provider.
    Respond(String),
    /// Fail as if the provider were unreachable.
    Unreachable,
    /// Fail with a 4xx-style rejection.
    Rejected,
}

/// Injects faults by (tag, 1-based occurrence of that tag).
#[derive(Debug, Clone, Default)]
pub struct FaultPlan {
    nth: HashMap<(RequestTag, u32), Fault>,
    all: HashMap<RequestTag, Fault>,
}

impl FaultPlan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_nth(mut self, tag: RequestTag, occurrence: u32, fault: Fault) -> Self {
        self.nth.insert((tag, occurrence), fault);
        self
    }

    pub fn on_all(mut self, tag: RequestTag, fault: Fault) -> Self {
        self.all.insert(tag, fault);
        self
    }

    fn lookup(&self, tag: RequestTag, occurrence: u32) -> Option<&Fault> {
        self.nth.get(&(tag, occurrence)).or_else(|| self.all.get(&tag))
    }
}

/// Wraps a provider, records every request, and applies a [`FaultPlan`].
pub struct FaultInjector {
    inner: Arc<dyn CompletionProvider>,
    plan: FaultPlan,
    seen: Mutex<Vec<ModelRequest>>,
}

impl FaultInjector {
    pub fn new(inner: Arc<dyn CompletionProvider>, plan: FaultPlan) -> Self {
        Self {
            inner,
            plan,
            seen: Mutex::new(Vec::new()),
        }
    }

    /// Requests received so far, in order.
    pub fn requests(&self) -> Vec<ModelRequest> {
        self.seen.lock().unwrap().clone()
    }

    pub fn count(&self, tag: RequestTag) -> usize {
        self.seen.lock().unwrap().iter().filter(|r| r.request_tag == tag).count()
    }
}

#[async_trait]
impl CompletionProvider for FaultInjector {
    fn provider_id(&self) -> String {
        self.inner.provider_id()
    }

    async fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let occurrence = {
            let mut seen = self.seen.lock().unwrap();
            seen.push(req.clone());
            seen.iter().filter(|r| r.request_tag == req.request_tag).count() as u32
        };
        match self.plan.lookup(req.request_tag, occurrence) {
            Some(Fault::Respond(text)) => Ok(ModelResponse {
                text: text.clone(),
                provider_id: self.inner.provider_id(),
                latency_ms: 0,
                truncated: false,
            }),
            Some(Fault::Unreachable) => Err(GatewayError::Unreachable("injected fault".into())),
            Some(Fault::Rejected) => Err(GatewayError::Rejected {
                status: 400,
                detail: "injected fault".into(),
            }),
            None => self.inner.complete(req).await,
        }
    }
}

/// Synthesizes plausible responses for every request tag. Each response is a
/// pure function of the request, so recording it yields a valid corpus.
#[derive(Debug, Clone)]
pub struct ScriptedProvider {
    prd_text: String,
}

pub const DEFAULT_SCRIPTED_PRD: &str = "\
## Overview
A single-page site for the theme described by the user.

## Layout
Top navigation bar, full-width hero, three-column feature grid, contact footer.

## Sections
- Hero with headline and call to action over [city skyline(large)]
- Feature cards, each with an image: [team photo(medium)], [office(medium)], [cafe(small)]
- Testimonial strip

## Visual Style
Deep navy and warm sand, generous whitespace, rounded cards.

## Imagery
Photography over illustration. Repeat the team image in the footer: [team photo(medium)].

## Functionality
Sticky navigation, smooth scrolling, a validated contact form.
";

impl Default for ScriptedProvider {
    fn default() -> Self {
        Self::new(DEFAULT_SCRIPTED_PRD)
    }
}

impl ScriptedProvider {
    pub fn new(prd_text: impl Into<String>) -> Self {
        Self {
            prd_text: prd_text.into(),
        }
    }

    fn respond(&self, req: &ModelRequest) -> String {
        let body = req.user_text();
        match req.request_tag {
            RequestTag::Prd => self.prd_text.clone(),
            RequestTag::InitialCode => fenced(&render_site(&body, 0, &[])),
            RequestTag::RefineCode => {
                let items = suggestion_items(&body);
                let version = reviewed_version(&body).map_or(1, |v| v + 1);
                fenced(&render_site(&body, version, &items))
            }
            RequestTag::Suggestions => {
                let version = html_version(&body).unwrap_or(0);
                let pool = [
                    "Add alt text to every image and a skip-to-content link",
                    "Make the navigation collapse into a menu button under 640px",
                    "Give the call-to-action button a hover and focus state",
                    "Validate the contact form inline and show a success message",
                    "Add a lightbox to the gallery images",
                    "Tighten the hero headline and add a supporting subtitle",
                    "Add a footer with social links and copyright",
                    "Use a consistent 8px spacing scale across sections",
                ];
                let start = version as usize % pool.len();
                let mut out = format!("Review of version {version}:\n");
                for i in 0..3 {
                    out.push_str(&format!("{}. {}\n", i + 1, pool[(start + i) % pool.len()]));
                }
                out
            }
        }
    }
}

fn fenced(html: &str) -> String {
    format!("Here is the complete website.\n\n```html\n{html}\n```\n")
}

fn html_version(text: &str) -> Option<u32> {
    let i = text.find("data-version=\"")? + "data-version=\"".len();
    text[i..].split('"').next()?.parse().ok()
}

fn reviewed_version(text: &str) -> Option<u32> {
    let i = text.find("Review of version ")? + "Review of version ".len();
    text[i..].split(':').next()?.parse().ok()
}

fn suggestion_items(text: &str) -> Vec<String> {
    let Some(i) = text.find(crate::prompts::MERGE_HEADING) else {
        return Vec::new();
    };
    text[i..]
        .lines()
        .skip(1)
        .filter_map(|l| l.split_once(". ").map(|(_, rest)| rest.trim().to_string()))
        .filter(|s| !s.is_empty())
        .collect()
}

/// `![term](url)` references in order.
fn image_refs(text: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(i) = rest.find("![") {
        rest = &rest[i + 2..];
        let Some(close) = rest.find("](") else { break };
        let alt = rest[..close].to_string();
        let after = &rest[close + 2..];
        let Some(end) = after.find(')') else { break };
        out.push((alt, after[..end].to_string()));
        rest = &after[end..];
    }
    out
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn render_site(body: &str, version: u32, improvements: &[String]) -> String {
    let theme = body
        .split("Website theme:\n")
        .nth(1)
        .and_then(|t| t.lines().next())
        .unwrap_or("Website");
    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    html.push_str("<meta name=\"viewport\" content=\"width=device-width, initial-scale=1\">\n");
    html.push_str(&format!("<title>{}</title>\n", html_escape(theme)));
    html.push_str("<style>\nbody{margin:0;font-family:system-ui,sans-serif;color:#1d2433}\n");
    html.push_str("header{position:sticky;top:0;background:#0f1e3c;color:#f3e9d2;padding:1rem 2rem}\n");
    html.push_str(".grid{display:grid;grid-template-columns:repeat(auto-fit,minmax(220px,1fr));gap:1.5rem;padding:2rem}\n");
    html.push_str("img{max-width:100%;border-radius:12px}\n</style>\n</head>\n");
    html.push_str(&format!("<body data-version=\"{version}\">\n"));
    html.push_str(&format!("<header><h1>{}</h1></header>\n<main>\n<section class=\"grid\">\n", html_escape(theme)));
    for (alt, url) in image_refs(body) {
        html.push_str(&format!(
            "<figure><img src=\"{}\" alt=\"{}\"><figcaption>{}</figcaption></figure>\n",
            html_escape(&url),
            html_escape(&alt),
            html_escape(&alt)
        ));
    }
    html.push_str("</section>\n");
    if !improvements.is_empty() {
        html.push_str("<section class=\"changes\"><h2>What's new</h2><ul>\n");
        for item in improvements {
            html.push_str(&format!("<li>{}</li>\n", html_escape(item)));
        }
        html.push_str("</ul></section>\n");
    }
    html.push_str("</main>\n<footer><p>&copy; 2024</p></footer>\n</body>\n</html>");
    html
}

#[async_trait]
impl CompletionProvider for ScriptedProvider {
    fn provider_id(&self) -> String {
        "scripted".to_string()
    }

    async fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        req.validate()?;
        Ok(ModelResponse {
            text: self.respond(req),
            provider_id: self.provider_id(),
            latency_ms: 0,
            truncated: false,
        })
    }
}

/// Forwards to `inner` and writes every successful response into a corpus,
/// turning a scripted run into mock fixtures.
pub struct CorpusRecorder {
    inner: Arc<dyn CompletionProvider>,
    corpus: MockCorpus,
}

impl CorpusRecorder {
    pub fn new(inner: Arc<dyn CompletionProvider>, corpus: MockCorpus) -> Self {
        Self { inner, corpus }
    }
}

#[async_trait]
impl CompletionProvider for CorpusRecorder {
    fn provider_id(&self) -> String {
        "mock".to_string()
    }

    async fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let resp = self.inner.complete(req).await?;
        self.corpus.record(req, &resp.text)?;
        Ok(resp)
    }
}

/// Image search that always fails the same way.
pub struct BrokenImageSearch(pub SearchError);

#[async_trait]
impl ImageSearch for BrokenImageSearch {
    fn provider_id(&self) -> String {
        "broken".to_string()
    }

    async fn search(&self, _query: &ImageQuery) -> Result<Vec<ImageCandidate>, SearchError> {
        Err(self.0.clone())
    }
}
