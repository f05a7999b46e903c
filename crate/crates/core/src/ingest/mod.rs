//! Document ingestion: enumerate a document source, render pages to
//! grayscale, and reject pages that provably contain no handwritten
//! signature via OCR keyword scanning.
//!
//! The document source is a plain directory tree; each file is one document
//! and its id is the path relative to the root. The OCR engine sits behind
//! the one-method [`OcrEngine`] trait so deployments can bind a different
//! engine; the built-in default is a template matcher over the crate's own
//! pixel font, which reads everything the synthetic generator prints.

mod decode;
mod ocr;

pub use decode::{save_png, write_scanned_pdf};
pub use ocr::{OcrEngine, OcrError, TemplateOcr};

use crate::types::PageImage;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("document source error: {0}")]
    Source(String),
    #[error("failed to decode document {doc_id}: {detail}")]
    Decode { doc_id: String, detail: String },
}

/// Supported source file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocumentFormat {
    Pdf,
    Tiff,
    Png,
    Jpeg,
}

impl DocumentFormat {
    fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "pdf" => Some(Self::Pdf),
            "tif" | "tiff" => Some(Self::Tiff),
            "png" => Some(Self::Png),
            "jpg" | "jpeg" => Some(Self::Jpeg),
            _ => None,
        }
    }
}

/// A document within a source, addressed by id and locator.
#[derive(Debug, Clone)]
pub struct DocumentRef {
    pub doc_id: String,
    pub uri: PathBuf,
    pub format: DocumentFormat,
}

/// Enumerate every supported document under `source_root`, ordered
/// lexicographically by doc id. Unsupported files are skipped with a log
/// line; an unreadable root is an error.
pub fn list_documents(source_root: &Path) -> Result<Vec<DocumentRef>, IngestError> {
    if !source_root.is_dir() {
        return Err(IngestError::Source(format!(
            "source root {} is not a readable directory",
            source_root.display()
        )));
    }
    let mut docs = Vec::new();
    for entry in walkdir::WalkDir::new(source_root).sort_by_file_name() {
        let entry = entry.map_err(|e| IngestError::Source(e.to_string()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let format = path
            .extension()
            .and_then(|e| e.to_str())
            .and_then(DocumentFormat::from_extension);
        let Some(format) = format else {
            log::info!("skipping unsupported file {}", path.display());
            continue;
        };
        let rel = path
            .strip_prefix(source_root)
            .expect("walidir yields paths under the root");
        let doc_id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        docs.push(DocumentRef {
            doc_id,
            uri: path.to_path_buf(),
            format,
        });
    }
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok(docs)
}

/// Render every page of a document to grayscale at the requested dpi.
/// Page indices are consecutive from 0.
pub fn render_pages(doc: &DocumentRef, dpi: u32) -> Result<Vec<PageImage>, IngestError> {
    decode::render(doc, dpi)
}

/// Outcome of the OCR keyword gate for one page.
#[derive(Debug, Clone)]
pub struct GateDecision {
    pub accepted: bool,
    /// The keyword that rejected the page; present iff `accepted` is false.
    pub matched_keyword: Option<String>,
    pub ocr_text: String,
}

/// Reject a page iff any keyword occurs (case-insensitively, with
/// whitespace runs collapsed) in its OCR-extracted text.
///
/// The gate never drops pages on engine failure: an OCR error is logged and
/// the page is accepted, since the gate exists only to cut false positives.
pub fn ocr_gate(page: &PageImage, keywords: &[String], engine: &dyn OcrEngine) -> GateDecision {
    debug_assert!(!keywords.is_empty(), "keyword list must be non-empty");
    debug_assert!(
        keywords.iter().all(|k| !k.chars().any(|c| c.is_uppercase())),
        "keywords must be lowercase"
    );
    let text = match engine.extract_text(page) {
        Ok(text) => text,
        Err(e) => {
            log::warn!(
                "OCR failure on {}#p{}: {e}; accepting page",
                page.doc_id(),
                page.page_index()
            );
            return GateDecision {
                accepted: true,
                matched_keyword: None,
                ocr_text: String::new(),
            };
        }
    };
    let decision = gate_text(&text, keywords);
    GateDecision {
        accepted: decision.is_none(),
        matched_keyword: decision,
        ocr_text: text,
    }
}

/// Pure keyword check over extracted text; returns the first matching
/// keyword in list order.
pub fn gate_text(text: &str, keywords: &[String]) -> Option<String> {
    let normalized = normalize_ws(&text.to_lowercase());
    keywords
        .iter()
        .find(|k| normalized.contains(normalize_ws(k).as_str()))
        .cloned()
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use ndarray::Array2;
    use proptest::prelude::*;
    use std::fs;

    struct FixedText(&'static str);

    impl OcrEngine for FixedText {
        fn extract_text(&self, _page: &PageImage) -> Result<String, OcrError> {
            Ok(self.0.to_string())
        }
    }

    struct FailingEngine;

    impl OcrEngine for FailingEngine {
        fn extract_text(&self, _page: &PageImage) -> Result<String, OcrError> {
            Err(OcrError::Failed("engine exploded".into()))
        }
    }

    fn blank_page() -> PageImage {
        PageImage::new("d", 0, Array2::from_elem((64, 64), 1.0f32), 100).unwrap()
    }

    fn default_keywords() -> Vec<String> {
        crate::config::IngestConfig::default().keywords
    }

    #[test]
    fn list_documents_orders_and_filters() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.pdf"), b"x").unwrap();
        fs::write(dir.path().join("a.pdf"), b"x").unwrap();
        fs::write(dir.path().join("notes.txt"), b"x").unwrap();
        let docs = list_documents(dir.path()).unwrap();
        let ids: Vec<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["a.pdf", "b.pdf"]);
    }

    #[test]
    fn list_documents_empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        assert!(list_documents(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn list_documents_unreadable_root() {
        let err = list_documents(Path::new("/nonexistent/nowhere")).unwrap_err();
        assert!(matches!(err, IngestError::Source(_)));
    }

    #[test]
    fn gate_rejects_on_keyword() {
        let page = blank_page();
        let engine = FixedText("This document was Electronically Filed on 2015-03-12");
        let d = ocr_gate(&page, &default_keywords(), &engine);
        assert!(!d.accepted);
        assert_eq!(d.matched_keyword.as_deref(), Some("electronically filed"));
    }

    #[test]
    fn gate_accepts_blank_page() {
        let page = blank_page();
        let d = ocr_gate(&page, &default_keywords(), &TemplateOcr::default());
        assert!(d.accepted);
        assert!(d.matched_keyword.is_none());
        assert!(d.ocr_text.trim().is_empty());
    }

    #[test]
    fn gate_fails_open_on_engine_error() {
        let page = blank_page();
        let d = ocr_gate(&page, &default_keywords(), &FailingEngine);
        assert!(d.accepted);
        assert!(d.matched_keyword.is_none());
    }

    #[test]
    fn gate_reads_rendered_page_without_keywords() {
        // real engine end to end: a page reading "annual return 2015" gets
        // through the default keyword list
        let mut px = Array2::from_elem((400, 900), 1.0f32);
        synth::render_text(&mut px, 40, 60, "annual return 2015", 4, 0.15);
        let page = PageImage::new("d", 0, px, 150).unwrap();
        let d = ocr_gate(&page, &default_keywords(), &TemplateOcr::default());
        assert!(d.accepted, "ocr text was {:?}", d.ocr_text);
        assert!(d.ocr_text.contains("annual return 2015"), "{:?}", d.ocr_text);
    }

    #[test]
    fn gate_rejects_rendered_gating_phrase() {
        let mut px = Array2::from_elem((400, 1200), 1.0f32);
        synth::render_text(&mut px, 40, 60, "electronically filed", 4, 0.15);
        let page = PageImage::new("d", 0, px, 150).unwrap();
        let d = ocr_gate(&page, &default_keywords(), &TemplateOcr::default());
        assert!(!d.accepted, "ocr text was {:?}", d.ocr_text);
        assert_eq!(d.matched_keyword.as_deref(), Some("electronically filed"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Adding a keyword can only reject more pages, never fewer.
        #[test]
        fn gate_is_monotone_in_keywords(
            text in "[a-z ]{0,40}",
            base in proptest::collection::vec("[a-z]{1,8}", 1..4),
            extra in "[a-z]{1,8}",
        ) {
            let base: Vec<String> = base;
            let mut extended = base.clone();
            extended.push(extra);
            let before = gate_text(&text, &base);
            let after = gate_text(&text, &extended);
            if before.is_some() {
                prop_assert!(after.is_some());
            }
        }
    }
}
