//! Page rendering for the supported source formats.
//!
//! Raster formats (PNG/JPEG/TIFF) pass through at their stored resolution
//! with the requested dpi recorded as nominal. PDF pages are rendered by
//! extracting the page's dominant image XObject — the layout used by
//! scanned documents — and scaling it to the page's physical size at the
//! requested dpi. Vector-only PDF pages render blank (and are logged),
//! which the downstream gate and extractor treat as empty pages rather
//! than failures.

use super::{DocumentFormat, DocumentRef, IngestError};
use crate::raster::{resample_area, Pixels};
use crate::types::PageImage;
use ndarray::Array2;

pub(super) fn render(doc: &DocumentRef, dpi: u32) -> Result<Vec<PageImage>, IngestError> {
    let pages = match doc.format {
        DocumentFormat::Png | DocumentFormat::Jpeg => render_single_raster(doc)?,
        DocumentFormat::Tiff => render_tiff(doc)?,
        DocumentFormat::Pdf => render_pdf(doc, dpi)?,
    };
    pages
        .into_iter()
        .enumerate()
        .map(|(i, px)| {
            PageImage::new(doc.doc_id.clone(), i as u32, px, dpi)
                .map_err(|e| decode_err(doc, e.to_string()))
        })
        .collect()
}

fn decode_err(doc: &DocumentRef, detail: impl Into<String>) -> IngestError {
    IngestError::Decode {
        doc_id: doc.doc_id.clone(),
        detail: detail.into(),
    }
}

fn render_single_raster(doc: &DocumentRef) -> Result<Vec<Pixels>, IngestError> {
    let img = image::open(&doc.uri).map_err(|e| decode_err(doc, e.to_string()))?;
    Ok(vec![dynamic_to_gray(&img)])
}

fn dynamic_to_gray(img: &image::DynamicImage) -> Pixels {
    let gray = img.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    Array2::from_shape_fn((h, w), |(y, x)| {
        f32::from(gray.get_pixel(x as u32, y as u32).0[0]) / 255.0
    })
}

fn render_tiff(doc: &DocumentRef) -> Result<Vec<Pixels>, IngestError> {
    let file = std::fs::File::open(&doc.uri).map_err(|e| decode_err(doc, e.to_string()))?;
    let mut decoder = tiff::decoder::Decoder::new(std::io::BufReader::new(file))
        .map_err(|e| decode_err(doc, e.to_string()))?;
    let mut pages = Vec::new();
    loop {
        let (w, h) = decoder.dimensions().map_err(|e| decode_err(doc, e.to_string()))?;
        let img = decoder
            .read_image()
            .map_err(|e| decode_err(doc, e.to_string()))?;
        let px = tiff_result_to_gray(img, w as usize, h as usize)
            .ok_or_else(|| decode_err(doc, "unsupported TIFF sample format"))?;
        pages.push(px);
        if !decoder.more_images() {
            break;
        }
        decoder
            .next_image()
            .map_err(|e| decode_err(doc, e.to_string()))?;
    }
    Ok(pages)
}

fn tiff_result_to_gray(
    img: tiff::decoder::DecodingResult,
    w: usize,
    h: usize,
) -> Option<Pixels> {
    use tiff::decoder::DecodingResult as D;
    let luma_u8 = |data: &[u8], channels: usize| -> Option<Pixels> {
        if data.len() < w * h * channels {
            return None;
        }
        Some(Array2::from_shape_fn((h, w), |(y, x)| {
            let base = (y * w + x) * channels;
            let v = if channels >= 3 {
                0.299 * f32::from(data[base])
                    + 0.587 * f32::from(data[base + 1])
                    + 0.114 * f32::from(data[base + 2])
            } else {
                f32::from(data[base])
            };
            v / 255.0
        }))
    };
    match img {
        D::U8(data) => {
            let channels = data.len() / (w * h);
            luma_u8(&data, channels.max(1))
        }
        D::U16(data) => {
            let channels = (data.len() / (w * h)).max(1);
            Some(Array2::from_shape_fn((h, w), |(y, x)| {
                f32::from(data[(y * w + x) * channels]) / 65535.0
            }))
        }
        _ => None,
    }
}

fn render_pdf(doc: &DocumentRef, dpi: u32) -> Result<Vec<Pixels>, IngestError> {
    let pdf = lopdf::Document::load(&doc.uri).map_err(|e| decode_err(doc, e.to_string()))?;
    let page_ids = pdf.get_pages();
    if page_ids.is_empty() {
        return Err(decode_err(doc, "document has no pages"));
    }
    let mut pages = Vec::new();
    for (_, page_id) in page_ids {
        let (pt_w, pt_h) = page_media_box(&pdf, page_id).unwrap_or((595.0, 842.0));
        let out_w = ((pt_w / 72.0) * f64::from(dpi)).round().max(1.0) as usize;
        let out_h = ((pt_h / 72.0) * f64::from(dpi)).round().max(1.0) as usize;
        match largest_page_image(&pdf, page_id) {
            Ok(Some(img)) => pages.push(resample_area(&img, out_h, out_w)),
            Ok(None) => {
                log::warn!(
                    "{}: page has no raster content, rendering blank",
                    doc.doc_id
                );
                pages.push(Array2::from_elem((out_h, out_w), 1.0f32));
            }
            Err(detail) => return Err(decode_err(doc, detail)),
        }
    }
    Ok(pages)
}

fn page_media_box(pdf: &lopdf::Document, page_id: lopdf::ObjectId) -> Option<(f64, f64)> {
    let page = pdf.get_dictionary(page_id).ok()?;
    let media = match page.get(b"MediaBox") {
        Ok(obj) => obj,
        Err(_) => return None,
    };
    let arr = resolve_array(pdf, media)?;
    if arr.len() != 4 {
        return None;
    }
    let nums: Vec<f64> = arr.iter().filter_map(object_to_f64).collect();
    if nums.len() != 4 {
        return None;
    }
    Some(((nums[2] - nums[0]).abs(), (nums[3] - nums[1]).abs()))
}

fn resolve_array<'a>(pdf: &'a lopdf::Document, obj: &'a lopdf::Object) -> Option<&'a Vec<lopdf::Object>> {
    match obj {
        lopdf::Object::Array(a) => Some(a),
        lopdf::Object::Reference(id) => match pdf.get_object(*id).ok()? {
            lopdf::Object::Array(a) => Some(a),
            _ => None,
        },
        _ => None,
    }
}

fn object_to_f64(obj: &lopdf::Object) -> Option<f64> {
    match obj {
        lopdf::Object::Integer(i) => Some(*i as f64),
        lopdf::Object::Real(r) => Some(f64::from(*r)),
        _ => None,
    }
}

/// Find the largest image XObject on a page and decode it to grayscale.
fn largest_page_image(
    pdf: &lopdf::Document,
    page_id: lopdf::ObjectId,
) -> Result<Option<Pixels>, String> {
    let (resources, resource_ids) = pdf
        .get_page_resources(page_id)
        .map_err(|e| format!("page resources: {e}"))?;
    let mut dicts: Vec<&lopdf::Dictionary> = Vec::new();
    if let Some(r) = resources {
        dicts.push(r);
    }
    for rid in resource_ids {
        if let Ok(r) = pdf.get_dictionary(rid) {
            dicts.push(r);
        }
    }
    let mut best: Option<(u64, Pixels)> = None;
    for res in dicts {
        let Ok(xobjects) = res.get(b"XObject") else {
            continue;
        };
        let Some(xobjects) = resolve_dict(pdf, xobjects) else {
            continue;
        };
        for (_, value) in xobjects.iter() {
            let stream = match value {
                lopdf::Object::Reference(id) => match pdf.get_object(*id) {
                    Ok(lopdf::Object::Stream(s)) => s,
                    _ => continue,
                },
                lopdf::Object::Stream(s) => s,
                _ => continue,
            };
            let is_image = stream
                .dict
                .get(b"Subtype")
                .ok()
                .and_then(|o| o.as_name().ok())
                .map(|n| n == b"Image")
                .unwrap_or(false);
            if !is_image {
                continue;
            }
            match decode_image_stream(pdf, stream) {
                Ok(px) => {
                    let area = (px.nrows() * px.ncols()) as u64;
                    if best.as_ref().map(|(a, _)| area > *a).unwrap_or(true) {
                        best = Some((area, px));
                    }
                }
                Err(detail) => return Err(detail),
            }
        }
    }
    Ok(best.map(|(_, px)| px))
}

fn resolve_dict<'a>(
    pdf: &'a lopdf::Document,
    obj: &'a lopdf::Object,
) -> Option<&'a lopdf::Dictionary> {
    match obj {
        lopdf::Object::Dictionary(d) => Some(d),
        lopdf::Object::Reference(id) => match pdf.get_object(*id).ok()? {
            lopdf::Object::Dictionary(d) => Some(d),
            _ => None,
        },
        _ => None,
    }
}

fn decode_image_stream(pdf: &lopdf::Document, stream: &lopdf::Stream) -> Result<Pixels, String> {
    let dict = &stream.dict;
    let width = dict_i64(pdf, dict, b"Width").ok_or("image missing Width")? as usize;
    let height = dict_i64(pdf, dict, b"Height").ok_or("image missing Height")? as usize;
    if width == 0 || height == 0 {
        return Err("degenerate image dimensions".into());
    }
    let filters = stream.filters().unwrap_or_default();
    if filters.iter().any(|f| f == b"DCTDecode") {
        let img = image::load_from_memory_with_format(&stream.content, image::ImageFormat::Jpeg)
            .map_err(|e| format!("embedded JPEG: {e}"))?;
        return Ok(dynamic_to_gray(&img));
    }
    let data = stream
        .decompressed_content()
        .map_err(|e| format!("stream decode: {e}"))?;
    let bpc = dict_i64(pdf, dict, b"BitsPerComponent").unwrap_or(8);
    if bpc != 8 {
        return Err(format!("unsupported BitsPerComponent {bpc}"));
    }
    let colorspace = dict
        .get(b"ColorSpace")
        .ok()
        .and_then(|o| o.as_name().ok().map(|n| n.to_vec()));
    let channels = match colorspace.as_deref() {
        Some(b"DeviceRGB") => 3,
        Some(b"DeviceGray") | None => 1,
        Some(other) => {
            return Err(format!(
                "unsupported ColorSpace {}",
                String::from_utf8_lossy(other)
            ))
        }
    };
    if data.len() < width * height * channels {
        return Err("image data shorter than declared dimensions".into());
    }
    Ok(Array2::from_shape_fn((height, width), |(y, x)| {
        let base = (y * width + x) * channels;
        let v = if channels == 3 {
            0.299 * f32::from(data[base])
                + 0.587 * f32::from(data[base + 1])
                + 0.114 * f32::from(data[base + 2])
        } else {
            f32::from(data[base])
        };
        v / 255.0
    }))
}

fn dict_i64(pdf: &lopdf::Document, dict: &lopdf::Dictionary, key: &[u8]) -> Option<i64> {
    match dict.get(key).ok()? {
        lopdf::Object::Integer(i) => Some(*i),
        lopdf::Object::Reference(id) => match pdf.get_object(*id).ok()? {
            lopdf::Object::Integer(i) => Some(*i),
            _ => None,
        },
        _ => None,
    }
}

/// Write a grayscale page as an 8-bit PNG (used by stage outputs and the
/// synthetic corpus writer).
pub fn save_png(path: &std::path::Path, px: &Pixels) -> std::io::Result<()> {
    let (h, w) = px.dim();
    let mut img = image::GrayImage::new(w as u32, h as u32);
    for ((y, x), v) in px.indexed_iter() {
        img.put_pixel(
            x as u32,
            y as u32,
            image::Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8]),
        );
    }
    img.save(path)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))
}

/// Build a minimal scanned-style PDF: one embedded grayscale image per
/// page. Used by the synthetic corpus writer and tests.
pub fn write_scanned_pdf(path: &std::path::Path, pages: &[Pixels]) -> std::io::Result<()> {
    use lopdf::{dictionary, Object, Stream};
    let mut doc = lopdf::Document::with_version("1.5");
    let pages_id = doc.new_object_id();
    let mut kids: Vec<Object> = Vec::new();
    for px in pages {
        let (h, w) = px.dim();
        let data: Vec<u8> = px
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let image_dict = dictionary! {
            "Type" => "XObject",
            "Subtype" => "Image",
            "Width" => w as i64,
            "Height" => h as i64,
            "ColorSpace" => "DeviceGray",
            "BitsPerComponent" => 8,
        };
        let mut image_stream = Stream::new(image_dict, data);
        image_stream.compress().ok();
        let image_id = doc.add_object(Object::Stream(image_stream));
        // 72 pt/inch; place the image across the whole media box
        let pt_w = w as f64 * 72.0 / 200.0;
        let pt_h = h as f64 * 72.0 / 200.0;
        let content = format!("q {pt_w:.2} 0 0 {pt_h:.2} 0 0 cm /Im0 Do Q");
        let content_id = doc.add_object(Object::Stream(Stream::new(
            dictionary! {},
            content.into_bytes(),
        )));
        let resources = dictionary! {
            "XObject" => dictionary! { "Im0" => image_id },
        };
        let page_id = doc.add_object(dictionary! {
            "Type" => "Page",
            "Parent" => pages_id,
            "MediaBox" => vec![0.into(), 0.into(), pt_w.into(), pt_h.into()],
            "Resources" => resources,
            "Contents" => content_id,
        });
        kids.push(Object::Reference(page_id));
    }
    let count = kids.len() as i64;
    doc.objects.insert(
        pages_id,
        Object::Dictionary(dictionary! {
            "Type" => "Pages",
            "Kids" => kids,
            "Count" => count,
        }),
    );
    let catalog_id = doc.add_object(dictionary! {
        "Type" => "Catalog",
        "Pages" => pages_id,
    });
    doc.trailer.set("Root", catalog_id);
    doc.save(path)?;
    Ok(())
}
