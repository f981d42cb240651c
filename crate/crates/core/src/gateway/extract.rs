//! Pulls a single HTML document out of free-form model output.

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no code found in model output")]
pub struct NoCodeFound;

struct Fence<'a> {
    label: &'a str,
    interior: String,
}

/// Applies, in order:
/// 1. the longest fenced block labeled `html`;
/// 2. otherwise the longest fenced block of any label;
/// 3. otherwise everything from the first `<!DOCTYPE` or `<html` marker;
/// 4. otherwise [`NoCodeFound`].
///
/// Block interiors and the marker substring are trimmed of surrounding
/// whitespace. Blank blocks do not count, so a successful result is never
/// empty, and a result that is a complete HTML document is a fixed point.
pub fn extract_html_document(text: &str) -> Result<String, NoCodeFound> {
    let fences: Vec<_> = fenced_blocks(text)
        .into_iter()
        .filter(|f| !f.interior.trim().is_empty())
        .collect();

    let longest = |html_only: bool| {
        fences
            .iter()
            .filter(|f| !html_only || f.label.eq_ignore_ascii_case("html"))
            // max_by_key keeps the last maximum; reverse so ties go to the first block.
            .rev()
            .max_by_key(|f| f.interior.len())
            .map(|f| f.interior.trim().to_string())
    };

    if let Some(block) = longest(true).or_else(|| longest(false)) {
        return Ok(block);
    }
    find_marker(text)
        .map(|start| text[start..].trim_end().to_string())
        .ok_or(NoCodeFound)
}

fn find_marker(text: &str) -> Option<usize> {
    let lower = text.to_ascii_lowercase();
    [lower.find("<!doctype"), lower.find("<html")].into_iter().flatten().min()
}

/// Opening fence: up to three spaces, then three or more backticks and an
/// optional info string. Closing fence: at least as many backticks and
/// nothing else. Unclosed fences are not blocks.
fn fenced_blocks(text: &str) -> Vec<Fence<'_>> {
    let mut blocks = Vec::new();
    let mut open: Option<(usize, &str, Vec<&str>)> = None;

    for line in text.split('\n') {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let indent = line.len() - line.trim_start_matches(' ').len();
        let body = &line[indent..];
        let ticks = body.len() - body.trim_start_matches('`').len();
        let is_fence = indent <= 3 && ticks >= 3;

        match open.as_mut() {
            None if is_fence => {
                let info = body[ticks..].trim();
                if info.contains('`') {
                    continue;
                }
                let label = info.split_whitespace().next().unwrap_or("");
                open = Some((ticks, label, Vec::new()));
            }
            None => {}
            Some((width, _, _)) if is_fence && ticks >= *width && body[ticks..].trim().is_empty() => {
                let (_, label, lines) = open.take().expect("open fence");
                blocks.push(Fence {
                    label,
                    interior: lines.join("\n"),
                });
            }
            Some((_, _, lines)) => lines.push(line),
        }
    }
    blocks
}
