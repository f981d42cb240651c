use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const MAX_TERM_CHARS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageSize {
    Small,
    Medium,
    Large,
}

impl ImageSize {
    pub const ALL: [ImageSize; 3] = [ImageSize::Small, ImageSize::Medium, ImageSize::Large];

    pub fn as_str(self) -> &'static str {
        match self {
            ImageSize::Small => "small",
            ImageSize::Medium => "medium",
            ImageSize::Large => "large",
        }
    }
}

impl fmt::Display for ImageSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImageSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ImageSize::ALL
            .into_iter()
            .find(|size| size.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown image size {s:?}"))
    }
}

/// Half-open byte range into the document text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn range(self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

/// A `[term(size)]` placeholder found in a requirements document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageDescriptor {
    pub term: String,
    pub size: ImageSize,
    pub span: Span,
}

impl ImageDescriptor {
    /// Canonical token text. Equals the source slice except for the case of
    /// the size word.
    pub fn token(&self) -> String {
        format!("[{}({})]", self.term, self.size)
    }
}

/// Characters allowed in a descriptor term: letters, digits, space, hyphen.
pub fn is_term_char(c: char) -> bool {
    c.is_alphanumeric() || c == ' ' || c == '-'
}

/// Finds every `[term(size)]` token in one left-to-right pass.
///
/// Terms are 1 to 64 characters from [`is_term_char`]; the size matches
/// small, medium or large case-insensitively. Other bracketed text, markdown
/// links included, is skipped. Since neither part may contain `[`, tokens can
/// never overlap and the first match at each `[` is the only one.
pub fn parse_image_descriptors(text: &str) -> Vec<ImageDescriptor> {
    let bytes = text.as_bytes();
    let mut found = Vec::new();
    let mut pos = 0;
    while let Some(offset) = bytes[pos..].iter().position(|&b| b == b'[') {
        let start = pos + offset;
        match match_at(text, start) {
            Some(descriptor) => {
                pos = descriptor.span.end;
                found.push(descriptor);
            }
            None => pos = start + 1,
        }
    }
    found
}

fn match_at(text: &str, start: usize) -> Option<ImageDescriptor> {
    let rest = &text[start + 1..];
    let mut paren = None;
    for (term_chars, (i, c)) in rest.char_indices().enumerate() {
        if c == '(' {
            paren = Some(i);
            break;
        }
        if !is_term_char(c) || term_chars == MAX_TERM_CHARS {
            return None;
        }
    }
    let paren = paren.filter(|&i| i > 0)?;
    let after = &rest.as_bytes()[paren + 1..];

    ImageSize::ALL.into_iter().find_map(|size| {
        let word = size.as_str().as_bytes();
        let matched = after.len() >= word.len() + 2
            && after[..word.len()].eq_ignore_ascii_case(word)
            && &after[word.len()..word.len() + 2] == b")]";
        matched.then(|| ImageDescriptor {
            term: rest[..paren].to_string(),
            size,
            span: Span {
                start,
                end: start + 1 + paren + 1 + word.len() + 2,
            },
        })
    })
}
