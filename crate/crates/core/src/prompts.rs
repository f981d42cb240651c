//! Prompt templates for every model call the pipeline makes.
//!
//! System texts are fixed per request tag; user parts carry the variable
//! inputs. The mock corpus keys on user parts only, so editing a system text
//! does not invalidate fixtures, while editing a user-part template does.

/// Section headings the requirements document must use, in order.
pub const PRD_SECTIONS: [&str; 6] = [
    "Overview",
    "Layout",
    "Sections",
    "Visual Style",
    "Imagery",
    "Functionality",
];

pub const MERGE_HEADING: &str = "Apply these improvements:";

pub fn prd_system() -> String {
    let headings = PRD_SECTIONS
        .iter()
        .map(|s| format!("## {s}"))
        .collect::<Vec<_>>()
        .join("\n");
    format!(
        "You are a senior product designer. You receive a rough hand-drawn layout sketch of a \
website and a short description of its theme. Write a product requirements document in \
markdown that a frontend engineer can implement without seeing the sketch.\n\n\
Use exactly these section headings, in this order:\n{headings}\n\n\
Describe the page top to bottom following the boxes, lines and labels in the sketch. \
Name concrete copy, colors and interactions.\n\n\
Mark every place that needs a photograph with an image descriptor of the form \
[term(size)], where term is one to four plain words (letters, digits, spaces or hyphens) \
describing the photo and size is small, medium or large. Example: [school(large)]. \
Do not use square brackets or parentheses for anything else inside a descriptor."
    )
}

pub fn prd_user_text(theme: &str) -> String {
    format!("Website theme:\n{theme}")
}

pub fn code_system() -> String {
    "You are an expert frontend engineer. Build the website described by the product \
requirements document and the theme. Produce one complete, self-contained HTML document: \
inline all CSS and JavaScript, use the image URLs given in the document as-is, and make the \
page responsive. Return the document in a single fenced code block labeled html."
        .to_string()
}

pub fn code_prd_part(resolved_prd: &str) -> String {
    format!("Product requirements document:\n\n{resolved_prd}")
}

pub fn code_theme_part(theme: &str) -> String {
    format!("Website theme:\n{theme}")
}

pub fn suggestions_system() -> String {
    "You are a meticulous frontend reviewer. Read the website code and its theme, then list \
concrete improvements: missing functionality, broken or placeholder interactions, layout and \
accessibility flaws, and visual polish. Write a numbered list of at most ten items. Do not \
write code."
        .to_string()
}

pub fn suggestions_code_part(html: &str) -> String {
    format!("Current website code:\n```html\n{html}\n```")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prd_system_lists_sections_in_order() {
        let text = prd_system();
        let positions: Vec<usize> = PRD_SECTIONS
            .iter()
            .map(|s| text.find(&format!("## {s}\n")).or_else(|| text.find(&format!("## {s}"))).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(text.contains("[school(large)]"));
    }
}
