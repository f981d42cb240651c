//! Sketch ingest: validation, SVG serialization and JPG rasterization.
//!
//! Coordinates use a top-left origin with y growing downwards, the same
//! convention as SVG and the browser canvas.

mod raster;
mod svg;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use raster::{
    check_svg, rasterize, rasterizer_config, RasterFormat, RasterImage, RasterizerConfig,
    DEFAULT_JPEG_QUALITY, MAX_RASTER_AREA,
};
pub use svg::{serialize_svg, SvgText, LABEL_FONT_FAMILY, LABEL_FONT_SIZE};

pub const MIN_DIMENSION: u32 = 64;
pub const MAX_DIMENSION: u32 = 4096;
pub const MIN_STROKE_WIDTH: f64 = 1.0;
pub const MAX_STROKE_WIDTH: f64 = 64.0;
pub const MAX_ELEMENTS: usize = 10_000;
pub const MAX_POINTS_PER_ELEMENT: usize = 10_000;
pub const MAX_LABEL_CHARS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementKind {
    FreehandStroke,
    Rectangle,
    Ellipse,
    Line,
    TextLabel,
}

impl ElementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::FreehandStroke => "freehand-stroke",
            ElementKind::Rectangle => "rectangle",
            ElementKind::Ellipse => "ellipse",
            ElementKind::Line => "line",
            ElementKind::TextLabel => "text-label",
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A canvas coordinate, serialized as a two-element JSON array `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point(pub f64, pub f64);

impl Point {
    pub fn x(self) -> f64 {
        self.0
    }

    pub fn y(self) -> f64 {
        self.1
    }
}

fn default_stroke_width() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchElement {
    pub kind: ElementKind,
    pub points: Vec<Point>,
    #[serde(default = "default_stroke_width")]
    pub stroke_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_text: Option<String>,
}

impl SketchElement {
    pub fn new(kind: ElementKind, points: Vec<Point>) -> Self {
        Self {
            kind,
            points,
            stroke_width: default_stroke_width(),
            label_text: None,
        }
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(ElementKind::Rectangle, vec![Point(x0, y0), Point(x1, y1)])
    }

    pub fn ellipse(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(ElementKind::Ellipse, vec![Point(x0, y0), Point(x1, y1)])
    }

    pub fn line(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(ElementKind::Line, vec![Point(x0, y0), Point(x1, y1)])
    }

    pub fn freehand(points: Vec<Point>) -> Self {
        Self::new(ElementKind::FreehandStroke, points)
    }

    pub fn text_label(x: f64, y: f64, text: impl Into<String>) -> Self {
        Self {
            label_text: Some(text.into()),
            ..Self::new(ElementKind::TextLabel, vec![Point(x, y)])
        }
    }

    pub fn with_stroke_width(mut self, width: f64) -> Self {
        self.stroke_width = width;
        self
    }
}

/// The user's layout sketch as drawn on the canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchDocument {
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub elements: Vec<SketchElement>,
}

impl SketchDocument {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            elements: Vec::new(),
        }
    }

    pub fn with_element(mut self, element: SketchElement) -> Self {
        self.elements.push(element);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Location of the problem, e.g. `width` or `elements[3]`.
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.message.clone()).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SketchError {
    #[error("invalid sketch: {0}")]
    Invalid(ValidationReport),
    #[error("rasterization failed: {0}")]
    Rasterization(String),
    #[error("raster of {width}x{height} exceeds the {max} pixel limit")]
    DimensionOverflow { width: u32, height: u32, max: u64 },
    #[error("jpeg quality must be in 1..=100, got {0}")]
    InvalidQuality(u8),
    #[error("jpeg encoding failed: {0}")]
    Encoding(String),
}

/// Checks `doc` against the sketch invariants. Never fails; problems come back
/// as data in the report.
pub fn validate_sketch(doc: &SketchDocument, allow_empty_sketch: bool) -> ValidationReport {
    let mut report = ValidationReport::default();

    for (field, value) in [("width", doc.width), ("height", doc.height)] {
        if !(MIN_DIMENSION..=MAX_DIMENSION).contains(&value) {
            report.push(
                field,
                format!("{field} must be in [{MIN_DIMENSION}, {MAX_DIMENSION}], got {value}"),
            );
        }
    }

    if doc.elements.is_empty() && !allow_empty_sketch {
        report.push("elements", "empty sketch");
    }
    if doc.elements.len() > MAX_ELEMENTS {
        report.push(
            "elements",
            format!("at most {MAX_ELEMENTS} elements are allowed, got {}", doc.elements.len()),
        );
    }

    for (i, el) in doc.elements.iter().enumerate() {
        validate_element(el, &format!("elements[{i}]"), &mut report);
    }

    report
}

fn validate_element(el: &SketchElement, field: &str, report: &mut ValidationReport) {
    let n = el.points.len();
    match el.kind {
        ElementKind::FreehandStroke if n < 2 => {
            report.push(field, "freehand-stroke requires at least 2 points")
        }
        ElementKind::Rectangle | ElementKind::Ellipse | ElementKind::Line if n != 2 => {
            report.push(field, format!("{} requires exactly 2 points", el.kind))
        }
        ElementKind::TextLabel if n != 1 => {
            report.push(field, "text-label requires exactly 1 anchor point")
        }
        _ => {}
    }
    if n > MAX_POINTS_PER_ELEMENT {
        report.push(
            field,
            format!("at most {MAX_POINTS_PER_ELEMENT} points per element are allowed"),
        );
    }
    if el.points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        report.push(field, "coordinates must be finite numbers");
    }
    if !(el.stroke_width.is_finite()
        && (MIN_STROKE_WIDTH..=MAX_STROKE_WIDTH).contains(&el.stroke_width))
    {
        report.push(
            field,
            format!("stroke_width must be in [{MIN_STROKE_WIDTH}, {MAX_STROKE_WIDTH}]"),
        );
    }

    match (el.kind, el.label_text.as_deref()) {
        (ElementKind::TextLabel, None) => {
            report.push(field, "text-label requires nonempty label_text")
        }
        (ElementKind::TextLabel, Some(text)) => {
            if text.trim().is_empty() {
                report.push(field, "text-label requires nonempty label_text");
            } else if text.chars().any(char::is_control) {
                report.push(field, "label_text must not contain control characters");
            } else if text.chars().count() > MAX_LABEL_CHARS {
                report.push(
                    field,
                    format!("label_text must be at most {MAX_LABEL_CHARS} characters"),
                );
            }
        }
        (_, Some(_)) => report.push(field, "label_text is only allowed on text-label"),
        (_, None) => {}
    }
}
