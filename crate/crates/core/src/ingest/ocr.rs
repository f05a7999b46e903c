//! Text extraction behind a one-method trait, with a built-in template
//! matcher as the default binding.
//!
//! The template engine segments the binarized page into glyph-sized
//! components, groups them into lines, merges vertically split glyphs
//! (dots of i/j, colons), and classifies each against the crate's pixel
//! font by normalized Hamming similarity. It reads text rendered by
//! [`crate::synth::render_text`] essentially perfectly and degrades to
//! emitting nothing for shapes it cannot match, which is the safe
//! behaviour for a fail-open gate.

use crate::extract;
use crate::font::{self, Glyph};
use crate::types::{BinaryImage, PageImage, PageRef};
use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("ocr engine failure: {0}")]
    Failed(String),
}

/// One-method text extraction interface so deployments can inject their
/// own engine and tests can stub it.
pub trait OcrEngine: Send + Sync {
    fn extract_text(&self, page: &PageImage) -> Result<String, OcrError>;
}

/// Template-matching engine over the built-in font.
#[derive(Debug, Clone)]
pub struct TemplateOcr {
    /// Minimum normalized similarity for a glyph match.
    pub min_similarity: f64,
}

impl Default for TemplateOcr {
    fn default() -> Self {
        Self {
            min_similarity: 0.8,
        }
    }
}

struct GlyphBox {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
    pixels: Vec<(u32, u32)>,
}

impl GlyphBox {
    fn width(&self) -> u32 {
        self.x1 - self.x0 + 1
    }

    fn height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }

    fn merge(&mut self, other: GlyphBox) {
        self.x0 = self.x0.min(other.x0);
        self.y0 = self.y0.min(other.y0);
        self.x1 = self.x1.max(other.x1);
        self.y1 = self.y1.max(other.y1);
        self.pixels.extend(other.pixels);
    }

    /// Ink-coverage bitmap of the tight box resampled onto a `gh x gw`
    /// grid; a cell is on when at least 40% of its pre-image is ink.
    fn rasterize(&self, gh: usize, gw: usize) -> Vec<bool> {
        let (h, w) = (self.height() as usize, self.width() as usize);
        let mut counts = vec![0u32; gh * gw];
        let mut totals = vec![0u32; gh * gw];
        let mut mask = Array2::<bool>::from_elem((h, w), false);
        for &(x, y) in &self.pixels {
            mask[((y - self.y0) as usize, (x - self.x0) as usize)] = true;
        }
        for iy in 0..h {
            let gy = (iy * gh) / h;
            for ix in 0..w {
                let gx = (ix * gw) / w;
                totals[gy * gw + gx] += 1;
                if mask[(iy, ix)] {
                    counts[gy * gw + gx] += 1;
                }
            }
        }
        counts
            .iter()
            .zip(totals.iter())
            .map(|(c, t)| *t > 0 && f64::from(*c) >= 0.4 * f64::from(*t))
            .collect()
    }
}

struct Template {
    ch: char,
    w: usize,
    h: usize,
    cells: Vec<bool>,
}

fn templates() -> Vec<Template> {
    font::GLYPHS
        .iter()
        .filter_map(|g: &Glyph| {
            let (x0, y0, x1, y1) = g.tight_bbox()?;
            let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
            let mut cells = Vec::with_capacity(w * h);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    cells.push(g.rows[y][x]);
                }
            }
            Some(Template {
                ch: g.ch,
                w,
                h,
                cells,
            })
        })
        .collect()
}

impl TemplateOcr {
    fn classify(&self, comp: &GlyphBox, templates: &[Template]) -> Option<char> {
        let aspect = f64::from(comp.width()) / f64::from(comp.height());
        let mut best: Option<(f64, char)> = None;
        for t in templates {
            let t_aspect = t.w as f64 / t.h as f64;
            let ratio = aspect / t_aspect;
            if !(0.6..=1.6).contains(&ratio) {
                continue;
            }
            let cells = comp.rasterize(t.h, t.w);
            let matching = cells
                .iter()
                .zip(t.cells.iter())
                .filter(|(a, b)| a == b)
                .count();
            let similarity = matching as f64 / t.cells.len() as f64;
            if similarity >= self.min_similarity
                && best.map(|(s, _)| similarity > s).unwrap_or(true)
            {
                best = Some((similarity, t.ch));
            }
        }
        best.map(|(_, ch)| ch)
    }
}

impl OcrEngine for TemplateOcr {
    fn extract_text(&self, page: &PageImage) -> Result<String, OcrError> {
        let (page_h, page_w) = page.pixels().dim();
        let mask = match extract::otsu_threshold_bin(page.pixels()) {
            Some(t) => page
                .pixels()
                .mapv(|v| (f64::from(v.clamp(0.0, 1.0)) * 255.0).round() as usize <= t),
            None => return Ok(String::new()),
        };
        let binary = BinaryImage::from_raw(mask, PageRef {
            doc_id: page.doc_id().to_string(),
            page_index: page.page_index(),
        });
        let comps: Vec<GlyphBox> = extract::connected_components(&binary)
            .into_iter()
            .map(|r| {
                let b = r.bbox();
                GlyphBox {
                    x0: b.x_min,
                    y0: b.y_min,
                    x1: b.x_max,
                    y1: b.y_max,
                    pixels: r.pixels().to_vec(),
                }
            })
            // glyph-sized things only: drop rules, scrawls, big graphics
            .filter(|g| {
                (g.height() as usize) <= page_h / 4 && (g.width() as usize) <= page_w / 6
            })
            .collect();
        if comps.is_empty() {
            return Ok(String::new());
        }

        let lines = group_into_lines(comps);
        let templates = templates();
        let mut out_lines: Vec<String> = Vec::new();
        for line in lines {
            let glyphs = merge_vertical_parts(line);
            let max_h = glyphs.iter().map(GlyphBox::height).max().unwrap_or(1);
            // the tallest glyphs (digits, ascenders) span the full 7-cell
            // height, which calibrates the rendering scale for this line
            let est_scale = (f64::from(max_h) / 7.0).max(1.0);
            let space_gap = 5.8 * est_scale;
            let mut text = String::new();
            let mut prev_end: Option<u32> = None;
            for g in &glyphs {
                if let Some(end) = prev_end {
                    let gap = f64::from(g.x0.saturating_sub(end + 1));
                    if gap > space_gap {
                        text.push(' ');
                    }
                }
                if let Some(ch) = self.classify(g, &templates) {
                    text.push(ch);
                }
                prev_end = Some(g.x1);
            }
            let trimmed = text.trim().to_string();
            if !trimmed.is_empty() {
                out_lines.push(trimmed);
            }
        }
        Ok(out_lines.join("\n"))
    }
}

/// Group glyph boxes into text lines by vertical-interval overlap.
fn group_into_lines(mut comps: Vec<GlyphBox>) -> Vec<Vec<GlyphBox>> {
    comps.sort_by_key(|g| (g.y0, g.x0));
    let mut lines: Vec<(u32, u32, Vec<GlyphBox>)> = Vec::new();
    for comp in comps {
        let mut target: Option<usize> = None;
        for (i, (ly0, ly1, _)) in lines.iter().enumerate() {
            let overlap = comp.y1.min(*ly1).saturating_sub(comp.y0.max(*ly0)) + 1;
            let min_h = comp.height().min(ly1 - ly0 + 1);
            if comp.y0.max(*ly0) <= comp.y1.min(*ly1) && 2 * overlap >= min_h {
                target = Some(i);
                break;
            }
        }
        match target {
            Some(i) => {
                lines[i].0 = lines[i].0.min(comp.y0);
                lines[i].1 = lines[i].1.max(comp.y1);
                lines[i].2.push(comp);
            }
            None => lines.push((comp.y0, comp.y1, vec![comp])),
        }
    }
    lines.sort_by_key(|(y0, _, _)| *y0);
    lines.into_iter().map(|(_, _, g)| g).collect()
}

/// Merge components whose x-intervals overlap (dots over stems, colon
/// halves) so multi-part glyphs classify as one shape.
fn merge_vertical_parts(mut glyphs: Vec<GlyphBox>) -> Vec<GlyphBox> {
    glyphs.sort_by_key(|g| g.x0);
    let mut merged: Vec<GlyphBox> = Vec::new();
    for g in glyphs {
        match merged.last_mut() {
            Some(last) if g.x0 <= last.x1 => last.merge(g),
            _ => merged.push(g),
        }
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::render_text;
    use ndarray::Array2;

    fn page_with(text: &str, scale: usize) -> PageImage {
        let (tw, th) = crate::synth::text_extent(text, scale);
        let mut px = Array2::from_elem((th + 160, tw + 120), 1.0f32);
        render_text(&mut px, 50, 80, text, scale, 0.15);
        PageImage::new("t", 0, px, 150).unwrap()
    }

    #[test]
    fn round_trips_supported_text() {
        let engine = TemplateOcr::default();
        for scale in [2usize, 3, 5] {
            let text = "the quick brown fox jumps over the lazy dog 0123456789";
            let got = engine.extract_text(&page_with(text, scale)).unwrap();
            assert_eq!(got, text, "scale {scale}");
        }
    }

    #[test]
    fn round_trips_multiline_and_punctuation() {
        let engine = TemplateOcr::default();
        let text = "annual return: 2015\nfiled 12/03/2015, form 363a";
        let got = engine.extract_text(&page_with(text, 3)).unwrap();
        assert_eq!(got, text);
    }

    #[test]
    fn blank_page_yields_empty_text() {
        let engine = TemplateOcr::default();
        let px = Array2::from_elem((64, 64), 1.0f32);
        let page = PageImage::new("t", 0, px, 100).unwrap();
        assert_eq!(engine.extract_text(&page).unwrap(), "");
    }

    #[test]
    fn scrawls_produce_little_or_no_text() {
        let engine = TemplateOcr::default();
        let strokes = crate::synth::signature_strokes(99, 0, 500, 160);
        let mut px = Array2::from_elem((600, 800), 1.0f32);
        for ((y, x), v) in strokes.indexed_iter() {
            px[(y + 100, x + 100)] = *v;
        }
        let page = PageImage::new("t", 0, px, 100).unwrap();
        let text = engine.extract_text(&page).unwrap();
        assert!(text.len() < 6, "unexpected text from scrawl: {text:?}");
    }
}
