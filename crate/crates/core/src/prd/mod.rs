//! Writing stage: sketch raster + theme in, requirements document out.

mod descriptors;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gateway::{CompletionProvider, GatewayError, ModelRequest, RequestTag, UserPart};
use crate::prompts;
use crate::sketch::RasterImage;

pub use descriptors::{
    is_term_char, parse_image_descriptors, ImageDescriptor, ImageSize, Span, MAX_TERM_CHARS,
};

pub const MAX_THEME_CHARS: usize = 2000;

/// The user's description of the website, kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ThemePrompt(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ThemeError {
    #[error("theme must not be empty")]
    Empty,
    #[error("theme must be at most {MAX_THEME_CHARS} characters, got {0}")]
    TooLong(usize),
}

impl ThemePrompt {
    pub fn new(text: impl Into<String>) -> Result<Self, ThemeError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ThemeError::Empty);
        }
        let chars = text.chars().count();
        if chars > MAX_THEME_CHARS {
            return Err(ThemeError::TooLong(chars));
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ThemePrompt {
    type Error = ThemeError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<ThemePrompt> for String {
    fn from(theme: ThemePrompt) -> Self {
        theme.0
    }
}

impl fmt::Display for ThemePrompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductRequirementsDocument {
    pub text: String,
    /// Always equal to `parse_image_descriptors(&text)`.
    pub descriptors: Vec<ImageDescriptor>,
    /// Content key of the request that produced the text.
    pub source_request_hash: String,
}

impl ProductRequirementsDocument {
    pub fn new(text: impl Into<String>, source_request_hash: impl Into<String>) -> Self {
        let text = text.into();
        let descriptors = parse_image_descriptors(&text);
        Self {
            text,
            descriptors,
            source_request_hash: source_request_hash.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrdOutcome {
    pub prd: ProductRequirementsDocument,
    pub warnings: Vec<String>,
}

pub fn build_prd_request(sketch: &RasterImage, theme: &ThemePrompt) -> ModelRequest {
    ModelRequest::new(
        RequestTag::Prd,
        prompts::prd_system(),
        vec![
            UserPart::Image(sketch.clone()),
            UserPart::Text(prompts::prd_user_text(theme.as_str())),
        ],
    )
}

/// Asks the model for a requirements document and parses its descriptors.
/// A document without descriptors is accepted with a warning.
pub async fn generate_prd(
    provider: &dyn CompletionProvider,
    sketch: &RasterImage,
    theme: &ThemePrompt,
) -> Result<PrdOutcome, GatewayError> {
    let req = build_prd_request(sketch, theme);
    let resp = provider.complete(&req).await?;
    let prd = ProductRequirementsDocument::new(resp.text, req.content_key());
    let mut warnings = Vec::new();
    if prd.descriptors.is_empty() {
        warnings.push("requirements document contains no image descriptors".to_string());
    }
    if resp.truncated {
        warnings.push("requirements document was truncated by the provider".to_string());
    }
    Ok(PrdOutcome { prd, warnings })
}
