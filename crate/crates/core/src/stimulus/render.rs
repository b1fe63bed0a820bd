//! Rasterizes a label onto a blank canvas with exact placement semantics.
//!
//! Placement is computed from the ink bounding box of the rasterized text,
//! not from font metrics, so the emitted image satisfies the placement rule
//! by construction: `center` puts the ink box center on the canvas center,
//! `top_center`/`bottom_center` put the box's top/bottom edge at 10%/90% of
//! canvas height, horizontally centered.

use std::collections::BTreeMap;
use std::fs;

use ab_glyph::{point, Font, FontVec, Glyph, GlyphId, PxScale, ScaleFont};
use serde::{Deserialize, Serialize};

use super::{FontSpec, Placement, Rgb, StimulusRecord};
use crate::error::{Error, Result};

/// Canvas dimensions. The background is always white 8-bit RGB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanvasSpec {
    pub width: u32,
    pub height: u32,
}

impl Default for CanvasSpec {
    fn default() -> Self {
        CanvasSpec {
            width: 512,
            height: 512,
        }
    }
}

impl CanvasSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation(format!(
                "canvas must be non-empty, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Loaded TrueType faces keyed by configured font name.
pub struct FontStore {
    fonts: BTreeMap<String, FontVec>,
}

impl FontStore {
    pub fn load<'a>(specs: impl IntoIterator<Item = &'a FontSpec>) -> Result<FontStore> {
        let mut fonts = BTreeMap::new();
        for spec in specs {
            fonts.insert(spec.name.clone(), Self::load_one(spec)?);
        }
        Ok(FontStore { fonts })
    }

    pub fn load_one(spec: &FontSpec) -> Result<FontVec> {
        let bytes = fs::read(&spec.file).map_err(|e| Error::Font {
            name: spec.name.clone(),
            path: spec.file.clone(),
            reason: e.to_string(),
        })?;
        FontVec::try_from_vec(bytes).map_err(|e| Error::Font {
            name: spec.name.clone(),
            path: spec.file.clone(),
            reason: e.to_string(),
        })
    }

    pub fn get(&self, name: &str) -> Result<&FontVec> {
        self.fonts
            .get(name)
            .ok_or_else(|| Error::Config(format!("font '{name}' is not loaded")))
    }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InkBox {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

impl InkBox {
    pub fn width(&self) -> u32 {
        self.max_x - self.min_x + 1
    }

    pub fn height(&self) -> u32 {
        self.max_y - self.min_y + 1
    }
}

/// Scans 8-bit RGB pixel data for the bounding box of non-white pixels.
pub fn ink_bounding_box(pixels: &[u8], width: u32, height: u32) -> Option<InkBox> {
    assert_eq!(pixels.len(), (width as usize) * (height as usize) * 3);
    let mut bbox: Option<InkBox> = None;
    for y in 0..height {
        for x in 0..width {
            let i = ((y * width + x) * 3) as usize;
            if pixels[i] != 255 || pixels[i + 1] != 255 || pixels[i + 2] != 255 {
                bbox = Some(match bbox {
                    None => InkBox {
                        min_x: x,
                        min_y: y,
                        max_x: x,
                        max_y: y,
                    },
                    Some(b) => InkBox {
                        min_x: b.min_x.min(x),
                        min_y: b.min_y.min(y),
                        max_x: b.max_x.max(x),
                        max_y: b.max_y.max(y),
                    },
                });
            }
        }
    }
    bbox
}

struct CoverageMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

fn rasterize(label: &str, font: &FontVec, size: u32) -> Result<CoverageMap> {
    let scale = PxScale::from(size as f32);
    let scaled = font.as_scaled(scale);

    let mut glyphs: Vec<Glyph> = Vec::new();
    let mut caret = 0.0f32;
    let mut prev: Option<GlyphId> = None;
    for ch in label.chars() {
        if ch.is_control() {
            continue;
        }
        let id = scaled.glyph_id(ch);
        if let Some(p) = prev {
            caret += scaled.kern(p, id);
        }
        glyphs.push(id.with_scale_and_position(scale, point(caret, 0.0)));
        caret += scaled.h_advance(id);
        prev = Some(id);
    }

    let outlined: Vec<_> = glyphs
        .into_iter()
        .filter_map(|g| font.outline_glyph(g))
        .collect();
    if outlined.is_empty() {
        return Err(Error::Render {
            label: label.to_string(),
            reason: "label produced no ink".into(),
        });
    }

    let mut gx0 = i64::MAX;
    let mut gy0 = i64::MAX;
    let mut gx1 = i64::MIN;
    let mut gy1 = i64::MIN;
    for og in &outlined {
        let b = og.px_bounds();
        gx0 = gx0.min(b.min.x.floor() as i64);
        gy0 = gy0.min(b.min.y.floor() as i64);
        gx1 = gx1.max(b.max.x.ceil() as i64);
        gy1 = gy1.max(b.max.y.ceil() as i64);
    }
    let width = (gx1 - gx0) as usize;
    let height = (gy1 - gy0) as usize;
    let mut values = vec![0.0f32; width * height];
    for og in &outlined {
        let b = og.px_bounds();
        let ox = b.min.x.floor() as i64 - gx0;
        let oy = b.min.y.floor() as i64 - gy0;
        og.draw(|x, y, c| {
            let px = (ox + x as i64) as usize;
            let py = (oy + y as i64) as usize;
            if px < width && py < height {
                let cell = &mut values[py * width + px];
                *cell = cell.max(c.clamp(0.0, 1.0));
            }
        });
    }
    Ok(CoverageMap {
        width,
        height,
        values,
    })
}

/// Coverage above this level survives rounding against a white background
/// for the given ink color, i.e. produces a pixel a pixel-scan sees as ink.
fn ink_threshold(color: Rgb) -> f32 {
    let min_channel = color.0.min(color.1).min(color.2) as f32;
    0.5 / (255.0 - min_channel)
}

/// Renders one stimulus to PNG bytes (8-bit RGB, white background).
pub fn render_stimulus(
    record: &StimulusRecord,
    store: &FontStore,
    canvas: CanvasSpec,
) -> Result<Vec<u8>> {
    canvas.validate()?;
    if record.label.trim().is_empty() {
        return Err(Error::Validation(format!(
            "stimulus '{}' has an empty label",
            record.stimulus_id
        )));
    }

    let font = store.get(&record.font)?;
    let cov = rasterize(&record.label, font, record.size)?;

    // Ink bounding box of the coverage map, in coverage coordinates.
    let threshold = ink_threshold(record.color);
    let mut ix0 = usize::MAX;
    let mut iy0 = usize::MAX;
    let mut ix1 = 0usize;
    let mut iy1 = 0usize;
    for y in 0..cov.height {
        for x in 0..cov.width {
            if cov.values[y * cov.width + x] > threshold {
                ix0 = ix0.min(x);
                iy0 = iy0.min(y);
                ix1 = ix1.max(x);
                iy1 = iy1.max(y);
            }
        }
    }
    if ix0 == usize::MAX {
        return Err(Error::Render {
            label: record.label.clone(),
            reason: "rasterized coverage is entirely below the visibility threshold".into(),
        });
    }
    let ink_w = (ix1 - ix0 + 1) as i64;
    let ink_h = (iy1 - iy0 + 1) as i64;

    let w = canvas.width as i64;
    let h = canvas.height as i64;
    let target_min_x = ((w - ink_w) as f64 / 2.0).round() as i64;
    let target_min_y = match record.placement {
        Placement::Center => ((h - ink_h) as f64 / 2.0).round() as i64,
        Placement::TopCenter => (0.10 * h as f64).round() as i64,
        Placement::BottomCenter => (0.90 * h as f64).round() as i64 - (ink_h - 1),
    };
    if target_min_x < 0 || target_min_y < 0 || target_min_x + ink_w > w || target_min_y + ink_h > h
    {
        return Err(Error::Render {
            label: record.label.clone(),
            reason: format!(
                "text extents {ink_w}x{ink_h} do not fit a {}x{} canvas at placement {}",
                canvas.width, canvas.height, record.placement
            ),
        });
    }

    let mut pixels = vec![255u8; (canvas.width * canvas.height * 3) as usize];
    let fg = [
        record.color.0 as f32,
        record.color.1 as f32,
        record.color.2 as f32,
    ];
    for y in iy0..=iy1 {
        for x in ix0..=ix1 {
            let c = cov.values[y * cov.width + x];
            if c <= 0.0 {
                continue;
            }
            let cx = target_min_x + (x - ix0) as i64;
            let cy = target_min_y + (y - iy0) as i64;
            let base = ((cy * w + cx) * 3) as usize;
            for ch in 0..3 {
                pixels[base + ch] = (255.0 - (255.0 - fg[ch]) * c).round() as u8;
            }
        }
    }

    encode_png(&pixels, canvas.width, canvas.height)
}

fn encode_png(pixels: &[u8], width: u32, height: u32) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width, height);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(|e| Error::Render {
            label: String::new(),
            reason: e.to_string(),
        })?;
        writer.write_image_data(pixels).map_err(|e| Error::Render {
            label: String::new(),
            reason: e.to_string(),
        })?;
    }
    Ok(out)
}

/// Decodes a PNG produced by this module back into 8-bit RGB pixel data.
pub fn decode_png_rgb(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>)> {
    let decoder = png::Decoder::new(bytes);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Validation(format!("failed to decode PNG: {e}")))?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Validation(format!("failed to decode PNG frame: {e}")))?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Validation("expected 8-bit RGB PNG".into()));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width, info.height, buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::{Category, StyleFamily};
    use crate::testkit;

    fn record(label: &str, placement: Placement, size: u32, color: Rgb) -> StimulusRecord {
        let styles = testkit::style_map();
        StimulusRecord {
            stimulus_id: "t".into(),
            concept_id: "bengal".into(),
            label: label.into(),
            category: Category::Cat,
            style: StyleFamily::Functional,
            font: styles.functional.fonts[0].name.clone(),
            size,
            placement,
            color,
            seed: 0,
            image_path: String::new(),
            sha256: String::new(),
        }
    }

    fn store() -> FontStore {
        FontStore::load(testkit::style_map().all_fonts()).unwrap()
    }

    #[test]
    fn centered_label_is_centered_within_2px() {
        let png = render_stimulus(
            &record("Bengal", Placement::Center, 35, Rgb::BLACK),
            &store(),
            CanvasSpec::default(),
        )
        .unwrap();
        let (w, h, pixels) = decode_png_rgb(&png).unwrap();
        let ink = ink_bounding_box(&pixels, w, h).unwrap();
        let cx = (ink.min_x + ink.max_x) as f64 / 2.0;
        let cy = (ink.min_y + ink.max_y) as f64 / 2.0;
        assert!((cx - (w as f64 - 1.0) / 2.0).abs() <= 2.0, "cx={cx}");
        assert!((cy - (h as f64 - 1.0) / 2.0).abs() <= 2.0, "cy={cy}");
    }

    #[test]
    fn top_and_bottom_edges_land_on_margins() {
        let canvas = CanvasSpec::default();
        let png = render_stimulus(
            &record("Bengal", Placement::TopCenter, 35, Rgb::BLACK),
            &store(),
            canvas,
        )
        .unwrap();
        let (w, h, pixels) = decode_png_rgb(&png).unwrap();
        let ink = ink_bounding_box(&pixels, w, h).unwrap();
        assert!((ink.min_y as f64 - 0.10 * h as f64).abs() <= 2.0);

        let png = render_stimulus(
            &record("Bengal", Placement::BottomCenter, 35, Rgb::BLACK),
            &store(),
            canvas,
        )
        .unwrap();
        let (w, h, pixels) = decode_png_rgb(&png).unwrap();
        let ink = ink_bounding_box(&pixels, w, h).unwrap();
        assert!((ink.max_y as f64 - 0.90 * h as f64).abs() <= 2.0);
        let _ = w;
    }

    #[test]
    fn red_ink_has_red_dominant_channel() {
        let png = render_stimulus(
            &record("Bengal", Placement::Center, 35, Rgb(255, 0, 0)),
            &store(),
            CanvasSpec::default(),
        )
        .unwrap();
        let (w, h, pixels) = decode_png_rgb(&png).unwrap();
        let mut saw_ink = false;
        for i in (0..pixels.len()).step_by(3) {
            let (r, g, b) = (pixels[i], pixels[i + 1], pixels[i + 2]);
            if (r, g, b) != (255, 255, 255) {
                saw_ink = true;
                assert!(r >= g && r >= b, "pixel ({r},{g},{b}) not red-dominant");
            }
        }
        assert!(saw_ink);
        let _ = (w, h);
    }

    #[test]
    fn empty_label_is_a_validation_error() {
        let err = render_stimulus(
            &record("   ", Placement::Center, 35, Rgb::BLACK),
            &store(),
            CanvasSpec::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn zero_canvas_is_a_validation_error() {
        let err = render_stimulus(
            &record("Bengal", Placement::Center, 35, Rgb::BLACK),
            &store(),
            CanvasSpec {
                width: 0,
                height: 512,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn overflowing_text_reports_measured_extents() {
        let err = render_stimulus(
            &record(
                "Staffordshire Bull Terrier",
                Placement::Center,
                40,
                Rgb::BLACK,
            ),
            &store(),
            CanvasSpec {
                width: 64,
                height: 64,
            },
        )
        .unwrap_err();
        match err {
            Error::Render { reason, .. } => assert!(reason.contains("do not fit")),
            other => panic!("expected render error, got {other}"),
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let rec = record("Bengal", Placement::Center, 35, Rgb(0, 0, 255));
        let store = store();
        let a = render_stimulus(&rec, &store, CanvasSpec::default()).unwrap();
        let b = render_stimulus(&rec, &store, CanvasSpec::default()).unwrap();
        assert_eq!(a, b);
    }
}
