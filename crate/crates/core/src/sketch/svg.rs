use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::{validate_sketch, ElementKind, Point, SketchDocument, SketchElement, SketchError};

pub const LABEL_FONT_FAMILY: &str = "DejaVu Sans";
pub const LABEL_FONT_SIZE: f64 = 16.0;

/// A standalone SVG document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SvgText(String);

impl SvgText {
    /// Wraps text without checking it; use [`super::check_svg`] for untrusted input.
    pub fn new_unchecked(text: impl Into<String>) -> Self {
        Self(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for SvgText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Serializes the sketch to SVG. Byte-deterministic; every emitted coordinate
/// is clamped into `[0,width]x[0,height]`.
///
/// Emptiness is a submission policy, so an empty document serializes to the
/// background rect alone.
pub fn serialize_svg(doc: &SketchDocument) -> Result<SvgText, SketchError> {
    let report = validate_sketch(doc, true);
    if !report.is_ok() {
        return Err(SketchError::Invalid(report));
    }

    let (w, h) = (doc.width, doc.height);
    let mut out = String::with_capacity(256 + doc.elements.len() * 96);
    // Writing into a String cannot fail.
    let _ = write_document(&mut out, doc, w, h);
    Ok(SvgText(out))
}

fn write_document(out: &mut String, doc: &SketchDocument, w: u32, h: u32) -> fmt::Result {
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )?;
    writeln!(out, r##"<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>"##)?;
    if !doc.elements.is_empty() {
        writeln!(out, r##"<g fill="none" stroke="#000000" stroke-linejoin="round">"##)?;
        let canvas = Canvas { w: w as f64, h: h as f64 };
        for el in &doc.elements {
            write_element(out, el, canvas)?;
        }
        writeln!(out, "</g>")?;
    }
    writeln!(out, "</svg>")
}

#[derive(Clone, Copy)]
struct Canvas {
    w: f64,
    h: f64,
}

impl Canvas {
    fn clamp(self, p: Point) -> (f64, f64) {
        (p.0.clamp(0.0, self.w), p.1.clamp(0.0, self.h))
    }
}

fn write_element(out: &mut String, el: &SketchElement, canvas: Canvas) -> fmt::Result {
    let sw = num(el.stroke_width);
    match el.kind {
        ElementKind::Rectangle => {
            let (x0, y0) = canvas.clamp(el.points[0]);
            let (x1, y1) = canvas.clamp(el.points[1]);
            writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{}" height="{}" stroke-width="{sw}"/>"#,
                num(x0.min(x1)),
                num(y0.min(y1)),
                num((x1 - x0).abs()),
                num((y1 - y0).abs()),
            )
        }
        ElementKind::Ellipse => {
            let (x0, y0) = canvas.clamp(el.points[0]);
            let (x1, y1) = canvas.clamp(el.points[1]);
            writeln!(
                out,
                r#"<ellipse cx="{}" cy="{}" rx="{}" ry="{}" stroke-width="{sw}"/>"#,
                num((x0 + x1) / 2.0),
                num((y0 + y1) / 2.0),
                num((x1 - x0).abs() / 2.0),
                num((y1 - y0).abs() / 2.0),
            )
        }
        ElementKind::Line => {
            let (x0, y0) = canvas.clamp(el.points[0]);
            let (x1, y1) = canvas.clamp(el.points[1]);
            writeln!(
                out,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke-width="{sw}"/>"#,
                num(x0),
                num(y0),
                num(x1),
                num(y1),
            )
        }
        ElementKind::FreehandStroke => {
            out.push_str(r#"<polyline points=""#);
            for (i, p) in el.points.iter().enumerate() {
                let (x, y) = canvas.clamp(*p);
                if i > 0 {
                    out.push(' ');
                }
                write!(out, "{},{}", num(x), num(y))?;
            }
            writeln!(out, r#"" stroke-width="{sw}"/>"#)
        }
        ElementKind::TextLabel => {
            // The anchor is the baseline start. Keep at least one glyph box on
            // the canvas so a label near the right or top edge still shows.
            let (x, y) = canvas.clamp(el.points[0]);
            let x = x.min((canvas.w - LABEL_FONT_SIZE).max(0.0));
            let y = y.max(LABEL_FONT_SIZE.min(canvas.h));
            writeln!(
                out,
                r##"<text x="{}" y="{}" font-family="{LABEL_FONT_FAMILY}" font-size="{}" fill="#000000" stroke="none">{}</text>"##,
                num(x),
                num(y),
                num(LABEL_FONT_SIZE),
                escape_xml(el.label_text.as_deref().unwrap_or_default()),
            )
        }
    }
}

/// Formats a coordinate with at most two decimals and no trailing zeros.
fn num(v: f64) -> String {
    let rounded = (v * 100.0).round() / 100.0;
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    let s = format!("{rounded:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape_xml(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}
