use std::sync::{Arc, OnceLock};

use image::codecs::jpeg::JpegEncoder;
use image::ExtendedColorType;
use resvg::tiny_skia::{Color, Pixmap, Transform};
use resvg::usvg::{self, fontdb};
use serde::{Deserialize, Serialize};

use super::svg::{SvgText, LABEL_FONT_FAMILY};
use super::SketchError;
use crate::hash::sha256_hex;

/// Below this, JPEG ringing around black strokes darkens pixels more than
/// 2px away from the stroke past the ink threshold.
pub const DEFAULT_JPEG_QUALITY: u8 = 97;

/// Largest raster area accepted, 16 megapixels (4096 x 4096).
pub const MAX_RASTER_AREA: u64 = 4096 * 4096;

const FONT_BYTES: &[u8] = include_bytes!("../../assets/DejaVuSans.ttf");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterFormat {
    Jpg,
}

impl RasterFormat {
    pub fn media_type(self) -> &'static str {
        match self {
            RasterFormat::Jpg => "image/jpeg",
        }
    }
}

/// An encoded raster. The payload is skipped by serde; persist `bytes` directly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    pub format: RasterFormat,
    #[serde(skip)]
    pub bytes: Vec<u8>,
    pub content_hash: String,
}

impl RasterImage {
    pub fn from_jpeg_bytes(width: u32, height: u32, bytes: Vec<u8>) -> Self {
        let content_hash = sha256_hex(&bytes);
        Self {
            width,
            height,
            format: RasterFormat::Jpg,
            bytes,
            content_hash,
        }
    }
}

/// Identifies everything that influences raster bytes. Recorded in job
/// manifests so determinism claims can be checked against it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterizerConfig {
    pub engine: String,
    pub encoder: String,
    pub font_family: String,
    pub font_sha256: String,
    pub background: String,
    pub jpeg_quality: u8,
}

pub fn rasterizer_config(jpeg_quality: u8) -> RasterizerConfig {
    RasterizerConfig {
        engine: "resvg 0.48".into(),
        encoder: "image 0.25 jpeg".into(),
        font_family: LABEL_FONT_FAMILY.into(),
        font_sha256: sha256_hex(FONT_BYTES),
        background: "#ffffff".into(),
        jpeg_quality,
    }
}

fn font_database() -> Arc<fontdb::Database> {
    static DB: OnceLock<Arc<fontdb::Database>> = OnceLock::new();
    DB.get_or_init(|| {
        let mut db = fontdb::Database::new();
        db.load_font_data(FONT_BYTES.to_vec());
        db.set_sans_serif_family(LABEL_FONT_FAMILY);
        db.set_serif_family(LABEL_FONT_FAMILY);
        db.set_monospace_family(LABEL_FONT_FAMILY);
        Arc::new(db)
    })
    .clone()
}

fn parse_tree(text: &str) -> Result<usvg::Tree, SketchError> {
    let options = usvg::Options {
        font_family: LABEL_FONT_FAMILY.to_string(),
        fontdb: font_database(),
        ..usvg::Options::default()
    };
    usvg::Tree::from_str(text, &options).map_err(|e| SketchError::Rasterization(e.to_string()))
}

fn pixel_size(tree: &usvg::Tree) -> Result<(u32, u32), SketchError> {
    let size = tree.size();
    let (w, h) = (size.width().ceil(), size.height().ceil());
    if !(w >= 1.0 && h >= 1.0) {
        return Err(SketchError::Rasterization("svg has an empty canvas".into()));
    }
    if w > u32::MAX as f32 || h > u32::MAX as f32 {
        return Err(SketchError::DimensionOverflow {
            width: u32::MAX,
            height: u32::MAX,
            max: MAX_RASTER_AREA,
        });
    }
    Ok((w as u32, h as u32))
}

/// Well-formedness check for user-supplied SVG that bypasses serialization.
/// Returns the text wrapped as [`SvgText`] with its native pixel size.
pub fn check_svg(text: &str) -> Result<(SvgText, u32, u32), SketchError> {
    let tree = parse_tree(text)?;
    let (w, h) = pixel_size(&tree)?;
    Ok((SvgText::new_unchecked(text), w, h))
}

/// Renders `svg` over a white background at its native size and encodes it
/// as JPG. Pure function of the input and the pinned configuration.
pub fn rasterize(svg: &SvgText, quality: u8) -> Result<RasterImage, SketchError> {
    if !(1..=100).contains(&quality) {
        return Err(SketchError::InvalidQuality(quality));
    }
    let tree = parse_tree(svg.as_str())?;
    let (width, height) = pixel_size(&tree)?;
    if u64::from(width) * u64::from(height) > MAX_RASTER_AREA {
        return Err(SketchError::DimensionOverflow {
            width,
            height,
            max: MAX_RASTER_AREA,
        });
    }

    let mut pixmap = Pixmap::new(width, height)
        .ok_or_else(|| SketchError::Rasterization("cannot allocate pixmap".into()))?;
    pixmap.fill(Color::WHITE);
    resvg::render(&tree, Transform::default(), &mut pixmap.as_mut());

    // Opaque background, so premultiplied RGBA is plain RGBA here.
    let rgb: Vec<u8> = pixmap
        .data()
        .chunks_exact(4)
        .flat_map(|px| [px[0], px[1], px[2]])
        .collect();

    let mut bytes = Vec::new();
    JpegEncoder::new_with_quality(&mut bytes, quality)
        .encode(&rgb, width, height, ExtendedColorType::Rgb8)
        .map_err(|e| SketchError::Encoding(e.to_string()))?;

    Ok(RasterImage::from_jpeg_bytes(width, height, bytes))
}
