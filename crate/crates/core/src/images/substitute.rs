use serde::{Deserialize, Serialize};

use super::{ImageError, ResolvedImage};
use crate::prd::{ImageDescriptor, ProductRequirementsDocument};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub descriptor: ImageDescriptor,
    pub image: ResolvedImage,
}

/// Requirements document with every descriptor replaced by an image reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedPrd {
    pub text: String,
    pub resolutions: Vec<Resolution>,
}

/// Markdown image reference that replaces a descriptor token.
pub fn image_reference(term: &str, url: &str) -> String {
    format!("![{term}]({url})")
}

/// Replaces each descriptor token with `![term](url)`, right to left so the
/// recorded spans stay valid. Bytes outside the tokens are untouched.
pub fn substitute(
    prd: &ProductRequirementsDocument,
    resolutions: Vec<Resolution>,
) -> Result<ResolvedPrd, ImageError> {
    if resolutions.len() != prd.descriptors.len() {
        return Err(ImageError::ResolutionMismatch(format!(
            "{} descriptors but {} resolutions",
            prd.descriptors.len(),
            resolutions.len()
        )));
    }
    for (i, (expected, got)) in prd.descriptors.iter().zip(&resolutions).enumerate() {
        if expected != &got.descriptor {
            return Err(ImageError::ResolutionMismatch(format!(
                "resolution {i} is for {:?} at {:?}, expected {:?} at {:?}",
                got.descriptor.term, got.descriptor.span, expected.term, expected.span
            )));
        }
        if prd.text.get(expected.span.range()).is_none() {
            return Err(ImageError::ResolutionMismatch(format!(
                "span {:?} is outside the document",
                expected.span
            )));
        }
    }

    let mut text = prd.text.clone();
    for r in resolutions.iter().rev() {
        let reference = image_reference(&r.descriptor.term, &r.image.url);
        text.replace_range(r.descriptor.span.range(), &reference);
    }
    Ok(ResolvedPrd { text, resolutions })
}
