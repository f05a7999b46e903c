//! Synthetic corpus generation: signature scrawls with stable per-author
//! shapes, stamp overlays, printed text and whole document pages.
//!
//! Everything is seeded and deterministic. The generator exists so the
//! learned stages can be trained and verified at desk scale without any
//! external dataset: per-author stroke parameters are fixed by the author
//! seed while each instance adds small jitter, mimicking natural signature
//! variation.

use crate::font::{self, ADVANCE, GLYPH_H, GLYPH_W, LINE_ADVANCE};
use crate::raster::{normalize_to_canvas, Pixels, CANVAS_SIZE};
use crate::types::BBox;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ink intensity used for printed text on synthetic pages.
pub const TEXT_INK: f32 = 0.15;
/// Ink intensity for stamps (lighter than pen ink).
pub const STAMP_INK: f32 = 0.55;

/// Pixel extent of a rendered text block (single or multi line).
pub fn text_extent(text: &str, scale: usize) -> (usize, usize) {
    let lines: Vec<&str> = text.split('\n').collect();
    let mut w = 0usize;
    for line in &lines {
        let chars = line.chars().count();
        if chars > 0 {
            w = w.max((chars - 1) * ADVANCE * scale + GLYPH_W * scale);
        }
    }
    let h = if lines.is_empty() {
        0
    } else {
        (lines.len() - 1) * LINE_ADVANCE * scale + GLYPH_H * scale
    };
    (w, h)
}

/// Render text onto a canvas at integer scale. Unsupported characters leave
/// a blank cell. Darkens pixels (keeps the darker of ink and existing).
pub fn render_text(canvas: &mut Pixels, x0: usize, y0: usize, text: &str, scale: usize, ink: f32) {
    let (h, w) = canvas.dim();
    let mut pen_y = y0;
    for line in text.split('\n') {
        let mut pen_x = x0;
        for ch in line.chars() {
            if let Some(glyph) = font::lookup(ch) {
                for (gy, row) in glyph.rows.iter().enumerate() {
                    for (gx, on) in row.iter().enumerate() {
                        if !*on {
                            continue;
                        }
                        for sy in 0..scale {
                            for sx in 0..scale {
                                let y = pen_y + gy * scale + sy;
                                let x = pen_x + gx * scale + sx;
                                if y < h && x < w {
                                    canvas[(y, x)] = canvas[(y, x)].min(ink);
                                }
                            }
                        }
                    }
                }
            }
            pen_x += ADVANCE * scale;
        }
        pen_y += LINE_ADVANCE * scale;
    }
}

/// Per-author stroke parameters, fixed by the author seed.
#[derive(Debug, Clone)]
struct AuthorStyle {
    f_main: f64,
    f_detail: f64,
    phase_main: f64,
    phase_detail: f64,
    amp_main: f64,
    amp_detail: f64,
    slant: f64,
    loops: f64,
}

impl AuthorStyle {
    fn from_seed(author_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(author_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        Self {
            f_main: rng.gen_range(2.0..5.0),
            f_detail: rng.gen_range(6.0..11.0),
            phase_main: rng.gen_range(0.0..std::f64::consts::TAU),
            phase_detail: rng.gen_range(0.0..std::f64::consts::TAU),
            amp_main: rng.gen_range(0.28..0.42),
            amp_detail: rng.gen_range(0.08..0.16),
            slant: rng.gen_range(-0.08..0.12),
            loops: rng.gen_range(0.5..2.0),
        }
    }
}

/// Draw one signature instance of the given author onto a white `h x w`
/// crop. The same `(author_seed, instance)` pair always produces the same
/// strokes; different instances of one author share the stroke shape with
/// small phase/amplitude jitter.
pub fn signature_strokes(author_seed: u64, instance: u64, w: usize, h: usize) -> Pixels {
    let style = AuthorStyle::from_seed(author_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(author_seed ^ instance.wrapping_mul(0xc2b2_ae35));
    let jitter_phase: f64 = rng.gen_range(-0.18..0.18);
    let jitter_amp: f64 = rng.gen_range(0.92..1.08);
    let jitter_slant: f64 = rng.gen_range(-0.02..0.02);
    let ink_base: f32 = rng.gen_range(0.06..0.16);

    let mut crop = Array2::from_elem((h, w), 1.0f32);
    let pad_x = w as f64 * 0.06;
    let cy = h as f64 * 0.5;
    let n = (w * 4).max(256);
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=n {
        let u = i as f64 / n as f64;
        let x = pad_x + u * (w as f64 - 2.0 * pad_x);
        let wave = style.amp_main
            * jitter_amp
            * (std::f64::consts::TAU * style.f_main * u + style.phase_main + jitter_phase).sin()
            + style.amp_detail
                * (std::f64::consts::TAU * style.f_detail * u + style.phase_detail).sin()
            + 0.08 * (std::f64::consts::TAU * style.loops * u).cos();
        let y = cy + wave * h as f64 + (style.slant + jitter_slant) * (x - w as f64 * 0.5);
        if let Some((px, py)) = prev {
            draw_segment(&mut crop, px, py, x, y, 1.1, ink_base);
        }
        prev = Some((x, y));
    }
    crop
}

fn draw_segment(canvas: &mut Pixels, x0: f64, y0: f64, x1: f64, y1: f64, radius: f64, ink: f32) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        draw_disc(
            canvas,
            x0 + t * (x1 - x0),
            y0 + t * (y1 - y0),
            radius,
            ink,
        );
    }
}

fn draw_disc(canvas: &mut Pixels, cx: f64, cy: f64, radius: f64, ink: f32) {
    let (h, w) = canvas.dim();
    let r = radius.ceil() as i64;
    for dy in -r..=r {
        for dx in -r..=r {
            let y = cy.round() as i64 + dy;
            let x = cx.round() as i64 + dx;
            if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
                continue;
            }
            let dist2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
            if dist2 <= radius * radius {
                canvas[(y as usize, x as usize)] = canvas[(y as usize, x as usize)].min(ink);
            }
        }
    }
}

/// A signature instance normalized onto the canonical 256x256 canvas.
pub fn signature_canvas(author_seed: u64, instance: u64) -> Pixels {
    let crop = signature_strokes(author_seed, instance, 320, 96);
    normalize_to_canvas(&crop).expect("non-empty crop")
}

/// Overlay a stamp (rectangle or ellipse outline with embedded text) on a
/// canvas at a random position and opacity.
pub fn stamp_overlay(canvas: &mut Pixels, rng: &mut ChaCha8Rng) {
    let (h, w) = canvas.dim();
    let sw = rng.gen_range(w / 3..w * 2 / 3);
    let sh = rng.gen_range(h / 4..h / 2);
    let x0 = rng.gen_range(0..w - sw);
    let y0 = rng.gen_range(0..h - sh);
    let ink = STAMP_INK + rng.gen_range(-0.12..0.12);
    let thickness = rng.gen_range(2..4usize);
    if rng.gen_bool(0.5) {
        // rectangle outline
        for t in 0..thickness {
            for x in x0..x0 + sw {
                darken(canvas, y0 + t, x, ink);
                darken(canvas, y0 + sh - 1 - t, x, ink);
            }
            for y in y0..y0 + sh {
                darken(canvas, y, x0 + t, ink);
                darken(canvas, y, x0 + sw - 1 - t, ink);
            }
        }
    } else {
        // ellipse outline
        let (cy, cx) = (y0 as f64 + sh as f64 / 2.0, x0 as f64 + sw as f64 / 2.0);
        let (ry, rx) = (sh as f64 / 2.0, sw as f64 / 2.0);
        for y in y0..y0 + sh {
            for x in x0..x0 + sw {
                let d = ((y as f64 - cy) / ry).powi(2) + ((x as f64 - cx) / rx).powi(2);
                let band = thickness as f64 / ry.min(rx);
                if (d - 1.0).abs() < band {
                    darken(canvas, y, x, ink);
                }
            }
        }
    }
    let words = ["approved", "certified copy", "received", "registrar 42"];
    let text = words[rng.gen_range(0..words.len())];
    let scale = (sh / 24).clamp(1, 3);
    let (tw, th) = text_extent(text, scale);
    if tw + 8 < sw && th + 8 < sh {
        render_text(
            canvas,
            x0 + (sw - tw) / 2,
            y0 + (sh - th) / 2,
            text,
            scale,
            ink,
        );
    }
}

fn darken(canvas: &mut Pixels, y: usize, x: usize, ink: f32) {
    let (h, w) = canvas.dim();
    if y < h && x < w {
        canvas[(y, x)] = canvas[(y, x)].min(ink);
    }
}

/// A 256x256 crop of printed text (a non-signature negative example).
pub fn text_block(rng: &mut ChaCha8Rng) -> Pixels {
    let mut canvas = Array2::from_elem((CANVAS_SIZE, CANVAS_SIZE), 1.0f32);
    let samples = [
        "annual return",
        "registered office",
        "company number 0921",
        "date: 12/03/2015",
        "for and on behalf",
        "secretary",
        "director",
        "12 example street",
        "london ec1a 4xx",
    ];
    let lines = rng.gen_range(1..5usize);
    let scale = rng.gen_range(2..5usize);
    let mut y = rng.gen_range(8..64usize);
    for _ in 0..lines {
        let text = samples[rng.gen_range(0..samples.len())];
        let (tw, _) = text_extent(text, scale);
        let x = if tw + 8 < CANVAS_SIZE {
            rng.gen_range(4..CANVAS_SIZE - tw - 4)
        } else {
            4
        };
        render_text(&mut canvas, x, y, text, scale, TEXT_INK);
        y += LINE_ADVANCE * scale + rng.gen_range(0..10);
        if y + GLYPH_H * scale >= CANVAS_SIZE {
            break;
        }
    }
    canvas
}

/// Labelled 256x256 training images for the candidate filter:
/// `(pixels, is_signature)`. Positives mix plain and stamped signatures;
/// negatives mix text blocks and stamps alone.
pub fn filter_training_set(seed: u64, n_pos: usize, n_neg: usize) -> Vec<(Pixels, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_pos + n_neg);
    for i in 0..n_pos {
        let author = rng.gen_range(0..1_000_000u64);
        let mut img = signature_canvas(author, i as u64);
        if i % 3 == 1 {
            stamp_overlay(&mut img, &mut rng);
        }
        out.push((img, true));
    }
    for i in 0..n_neg {
        let img = if i % 3 == 2 {
            let mut canvas = Array2::from_elem((CANVAS_SIZE, CANVAS_SIZE), 1.0f32);
            stamp_overlay(&mut canvas, &mut rng);
            canvas
        } else {
            text_block(&mut rng)
        };
        out.push((img, false));
    }
    out
}

/// Unpaired and paired training images for the cleaner. Returns
/// `(raw_x, clean_y, paired)` where `paired` holds `(raw, target)` tuples.
#[allow(clippy::type_complexity)]
pub fn cleaner_training_set(
    seed: u64,
    n_each: usize,
    n_paired: usize,
) -> (Vec<Pixels>, Vec<Pixels>, Vec<(Pixels, Pixels)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Vec::new();
    let mut clean = Vec::new();
    for i in 0..n_each {
        let author = rng.gen_range(0..1_000_000u64);
        let base = signature_canvas(author, i as u64);
        let mut stamped = base.clone();
        stamp_overlay(&mut stamped, &mut rng);
        raw.push(stamped);
        let other = signature_canvas(rng.gen_range(0..1_000_000u64), (i + 7) as u64);
        clean.push(other);
    }
    let mut paired = Vec::new();
    for i in 0..n_paired {
        let author = rng.gen_range(0..1_000_000u64);
        let target = signature_canvas(author, (100 + i) as u64);
        let mut stamped = target.clone();
        // include a few identity pairs so already-clean inputs are preserved
        if i % 4 != 3 {
            stamp_overlay(&mut stamped, &mut rng);
        }
        paired.push((stamped, target));
    }
    (raw, clean, paired)
}

/// Author-labelled signature canvases for similarity training:
/// `(pixels, author_id)` for `n_authors` x `per_author` instances.
pub fn siamese_training_set(
    seed: u64,
    n_authors: usize,
    per_author: usize,
) -> Vec<(Pixels, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let author_seeds: Vec<u64> = (0..n_authors).map(|_| rng.gen()).collect();
    let mut out = Vec::new();
    for (a, &author_seed) in author_seeds.iter().enumerate() {
        for i in 0..per_author {
            out.push((
                signature_canvas(author_seed, i as u64),
                format!("author-{a}"),
            ));
        }
    }
    out
}

/// The author seeds backing [`siamese_training_set`], for fixtures that
/// must reuse the same signers (e.g. the end-to-end corpus).
pub fn siamese_author_seeds(seed: u64, n_authors: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_authors).map(|_| rng.gen()).collect()
}

/// A generated document page plus ground truth: which page regions carry a
/// signature and by which author seed.
#[derive(Debug, Clone)]
pub struct SynthDocument {
    pub page: Pixels,
    pub truth: Vec<(BBox, u64)>,
}

/// Generate an A4 page at `dpi` with printed form text, a rule line, and
/// one signature per listed author seed. `extra_text` lines, when given,
/// are appended to the header (e.g. a gating phrase).
pub fn synth_document(
    doc_seed: u64,
    author_seeds: &[u64],
    dpi: u32,
    extra_text: Option<&str>,
) -> SynthDocument {
    let w = (8.27 * f64::from(dpi)).round() as usize;
    let h = (11.69 * f64::from(dpi)).round() as usize;
    let mut page = Array2::from_elem((h, w), 1.0f32);
    let mut rng = ChaCha8Rng::seed_from_u64(doc_seed);
    let scale = (dpi as usize / 50).max(2);

    let mut y = h / 18;
    let header = [
        "companies house filing",
        "annual return for the year 2015",
        "company number 08214976",
        "registered office: 12 example street, london",
    ];
    for line in header {
        render_text(&mut page, w / 12, y, line, scale, TEXT_INK);
        y += LINE_ADVANCE * scale + h / 60;
    }
    if let Some(extra) = extra_text {
        render_text(&mut page, w / 12, y, extra, scale, TEXT_INK);
        y += LINE_ADVANCE * scale + h / 60;
    }

    // horizontal rule below the header
    let rule_y = y + h / 40;
    for x in w / 10..(w * 9) / 10 {
        for t in 0..2 {
            page[(rule_y + t, x)] = TEXT_INK;
        }
    }

    // signature blocks
    let mut truth = Vec::new();
    let mut block_y = rule_y + h / 14;
    for (i, &author) in author_seeds.iter().enumerate() {
        let label = if i % 2 == 0 { "signed:" } else { "director:" };
        render_text(&mut page, w / 12, block_y, label, scale, TEXT_INK);
        let sig_w = (w as f64 * 0.30) as usize;
        let sig_h = (h as f64 * 0.055) as usize;
        let sig_x = w / 3 + rng.gen_range(0..w / 14);
        let sig_y = block_y.saturating_sub(sig_h / 3);
        let strokes = signature_strokes(author, doc_seed.wrapping_add(i as u64 * 31), sig_w, sig_h);
        // blit and record the tight ink bbox
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for ((sy, sx), v) in strokes.indexed_iter() {
            if *v < 0.9 {
                let (py, px) = (sig_y + sy, sig_x + sx);
                if py < h && px < w {
                    page[(py, px)] = page[(py, px)].min(*v);
                    bbox = Some(match bbox {
                        None => (px, py, px, py),
                        Some((x0, y0, x1, y1)) => {
                            (x0.min(px), y0.min(py), x1.max(px), y1.max(py))
                        }
                    });
                }
            }
        }
        if let Some((x0, y0, x1, y1)) = bbox {
            truth.push((
                BBox::new(x0 as u32, y0 as u32, x1 as u32, y1 as u32).unwrap(),
                author,
            ));
        }
        block_y += h / 7;
    }

    // footer
    render_text(
        &mut page,
        w / 12,
        h - h / 12,
        "form 363a continuation",
        scale,
        TEXT_INK,
    );

    SynthDocument { page, truth }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signature_is_deterministic_per_author_and_instance() {
        let a = signature_strokes(42, 0, 200, 60);
        let b = signature_strokes(42, 0, 200, 60);
        assert_eq!(a, b);
        let c = signature_strokes(42, 1, 200, 60);
        assert_ne!(a, c);
        let d = signature_strokes(43, 0, 200, 60);
        assert_ne!(a, d);
    }

    #[test]
    fn signature_density_fits_heuristic_band() {
        for author in [1u64, 2, 3, 4, 5] {
            let crop = signature_strokes(author, 0, 320, 96);
            let ink = crop.iter().filter(|v| **v < 0.5).count();
            let density = ink as f64 / (320.0 * 96.0);
            assert!(
                (0.02..=0.4).contains(&density),
                "author {author} density {density}"
            );
        }
    }

    #[test]
    fn document_carries_truth_boxes() {
        let doc = synth_document(7, &[11, 22], 100, None);
        assert_eq!(doc.truth.len(), 2);
        let (h, w) = doc.page.dim();
        assert_eq!(w, 827);
        assert_eq!(h, 1169);
        for (bbox, _) in &doc.truth {
            assert!(bbox.x_max < w as u32 && bbox.y_max < h as u32);
            assert!(bbox.area() > 100);
        }
    }

    #[test]
    fn render_text_marks_expected_extent() {
        let mut canvas = Array2::from_elem((64, 256), 1.0f32);
        render_text(&mut canvas, 4, 4, "abc", 2, 0.2);
        let (tw, th) = text_extent("abc", 2);
        assert_eq!(tw, 2 * 6 * 2 + 5 * 2);
        assert_eq!(th, 14);
        let ink = canvas.iter().filter(|v| **v < 0.9).count();
        assert!(ink > 30);
    }
}

/// Deterministic rectangular stamp: outline plus embedded text at the
/// given ink level, for behavioural fixtures.
pub fn rect_stamp(canvas: &mut Pixels, x0: usize, y0: usize, w: usize, h: usize, ink: f32) {
    for t in 0..3 {
        for x in x0..x0 + w {
            darken(canvas, y0 + t, x, ink);
            darken(canvas, y0 + h - 1 - t, x, ink);
        }
        for y in y0..y0 + h {
            darken(canvas, y, x0 + t, ink);
            darken(canvas, y, x0 + w - 1 - t, ink);
        }
    }
    let text = "certified copy";
    let scale = 2;
    let (tw, th) = text_extent(text, scale);
    if tw + 8 < w && th + 8 < h {
        render_text(canvas, x0 + (w - tw) / 2, y0 + (h - th) / 2, text, scale, ink);
    }
}
