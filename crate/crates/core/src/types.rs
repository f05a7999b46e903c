//! Shared domain types crossing stage boundaries.
//!
//! Every type here is an immutable value after construction and safe to
//! share across concurrent stage workers. Constructors validate the
//! documented invariants and refuse malformed values.

use crate::raster::{in_unit_range, Pixels, CANVAS_SIZE};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of components in a signature embedding.
pub const EMBEDDING_DIM: usize = 4096;

#[derive(Debug, Error)]
pub enum TypeError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("embedding is degenerate (all-zero or non-finite)")]
    DegenerateEmbedding,
}

/// Identifies a rendered page of a source document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PageRef {
    pub doc_id: String,
    pub page_index: u32,
}

/// One rendered grayscale page of a source document.
#[derive(Debug, Clone)]
pub struct PageImage {
    doc_id: String,
    page_index: u32,
    pixels: Pixels,
    dpi: u32,
}

impl PageImage {
    pub fn new(
        doc_id: impl Into<String>,
        page_index: u32,
        pixels: Pixels,
        dpi: u32,
    ) -> Result<Self, TypeError> {
        let (h, w) = pixels.dim();
        if h == 0 || w == 0 {
            return Err(TypeError::InvalidInput("page has no pixels".into()));
        }
        if dpi == 0 {
            return Err(TypeError::InvalidInput("dpi must be positive".into()));
        }
        if !in_unit_range(&pixels) {
            return Err(TypeError::InvalidInput(
                "page intensities must lie in [0,1]".into(),
            ));
        }
        Ok(Self {
            doc_id: doc_id.into(),
            page_index,
            pixels,
            dpi,
        })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn page_index(&self) -> u32 {
        self.page_index
    }

    pub fn pixels(&self) -> &Pixels {
        &self.pixels
    }

    pub fn dpi(&self) -> u32 {
        self.dpi
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn page_ref(&self) -> PageRef {
        PageRef {
            doc_id: self.doc_id.clone(),
            page_index: self.page_index,
        }
    }
}

/// Binarized page mask. `true` means ink/foreground, which inverts the
/// grayscale reading (ink is *dark*, i.e. intensity near 0).
#[derive(Debug, Clone)]
pub struct BinaryImage {
    pixels: Array2<bool>,
    origin: PageRef,
}

impl BinaryImage {
    /// Build from a mask that must match its origin page dimensions.
    pub fn new(pixels: Array2<bool>, origin: &PageImage) -> Self {
        assert_eq!(
            pixels.dim(),
            origin.pixels().dim(),
            "mask must match page dimensions"
        );
        Self {
            pixels,
            origin: origin.page_ref(),
        }
    }

    /// Build from a raw mask with an explicit origin reference (tests,
    /// synthetic fixtures).
    pub fn from_raw(pixels: Array2<bool>, origin: PageRef) -> Self {
        Self { pixels, origin }
    }

    pub fn pixels(&self) -> &Array2<bool> {
        &self.pixels
    }

    pub fn origin(&self) -> &PageRef {
        &self.origin
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|p| **p).count()
    }
}

/// Inclusive pixel bounding box in page coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self, TypeError> {
        if x_min > x_max || y_min > y_max {
            return Err(TypeError::InvalidInput(format!(
                "degenerate bbox ({x_min},{y_min},{x_max},{y_max})"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min + 1
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    /// Width over height.
    pub fn aspect(&self) -> f64 {
        f64::from(self.width()) / f64::from(self.height())
    }

    /// Smallest box containing both.
    pub fn envelope(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    /// Chebyshev gap between boxes: the larger of the horizontal and
    /// vertical pixel gaps, zero when they touch or overlap.
    pub fn gap_chebyshev(&self, other: &BBox) -> u32 {
        self.gap_axis(self.x_min, self.x_max, other.x_min, other.x_max)
            .max(self.gap_axis(self.y_min, self.y_max, other.y_min, other.y_max))
    }

    fn gap_axis(&self, a0: u32, a1: u32, b0: u32, b1: u32) -> u32 {
        if b0 > a1 {
            b0 - a1 - 1
        } else if a0 > b1 {
            a0 - b1 - 1
        } else {
            0
        }
    }

    /// Intersection-over-union of the two boxes (inclusive pixel areas).
    pub fn iou(&self, other: &BBox) -> f64 {
        let ix0 = self.x_min.max(other.x_min);
        let iy0 = self.y_min.max(other.y_min);
        let ix1 = self.x_max.min(other.x_max);
        let iy1 = self.y_max.min(other.y_max);
        if ix0 > ix1 || iy0 > iy1 {
            return 0.0;
        }
        let inter = u64::from(ix1 - ix0 + 1) * u64::from(iy1 - iy0 + 1);
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }
}

impl std::fmt::Display for BBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            self.x_min, self.y_min, self.x_max, self.y_max
        )
    }
}

/// Whether a signature image has been through the GAN cleaner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignatureState {
    Raw,
    Cleaned,
}

/// Where a signature image came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub doc_id: String,
    pub page_index: u32,
    pub bbox: BBox,
}

impl Provenance {
    /// Canonical signature identifier used in manifests, the embedding
    /// index and cluster output.
    pub fn signature_id(&self) -> String {
        format!(
            "{}#p{}#{}",
            self.doc_id, self.page_index, self.bbox
        )
    }
}

/// A 256x256 grayscale signature bitmap, raw or cleaned.
#[derive(Debug, Clone)]
pub struct SignatureImage {
    pixels: Pixels,
    state: SignatureState,
    provenance: Provenance,
}

impl SignatureImage {
    pub fn new(
        pixels: Pixels,
        state: SignatureState,
        provenance: Provenance,
    ) -> Result<Self, TypeError> {
        if pixels.dim() != (CANVAS_SIZE, CANVAS_SIZE) {
            return Err(TypeError::InvalidInput(format!(
                "signature image must be {CANVAS_SIZE}x{CANVAS_SIZE}, got {}x{}",
                pixels.nrows(),
                pixels.ncols()
            )));
        }
        if !in_unit_range(&pixels) {
            return Err(TypeError::InvalidInput(
                "signature intensities must lie in [0,1]".into(),
            ));
        }
        Ok(Self {
            pixels,
            state,
            provenance,
        })
    }

    /// Normalize an arbitrary-size grayscale crop onto the canonical canvas.
    pub fn from_crop(crop: &Pixels, provenance: Provenance) -> Result<Self, TypeError> {
        let canvas = crate::raster::normalize_to_canvas(crop)
            .map_err(|e| TypeError::InvalidInput(e.to_string()))?;
        Self::new(canvas, SignatureState::Raw, provenance)
    }

    pub fn pixels(&self) -> &Pixels {
        &self.pixels
    }

    pub fn state(&self) -> SignatureState {
        self.state
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn signature_id(&self) -> String {
        self.provenance.signature_id()
    }

    /// Same provenance, new pixel content, marked cleaned.
    pub fn cleaned_from(&self, pixels: Pixels) -> Result<Self, TypeError> {
        Self::new(pixels, SignatureState::Cleaned, self.provenance.clone())
    }
}

/// A candidate region proposed by connected-component analysis.
#[derive(Debug, Clone)]
pub struct CandidateRegion {
    pub bbox: BBox,
    pub crop: SignatureImage,
    pub density: f64,
    pub source: PageRef,
}

impl CandidateRegion {
    pub fn validate(&self, page_w: u32, page_h: u32) -> Result<(), TypeError> {
        if self.bbox.x_max >= page_w || self.bbox.y_max >= page_h {
            return Err(TypeError::InvalidInput("bbox outside page bounds".into()));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(TypeError::InvalidInput("density outside [0,1]".into()));
        }
        Ok(())
    }
}

/// A 4096-dimensional feature vector for one signature image.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    vector: Vec<f32>,
    signature_id: String,
}

impl Embedding {
    pub fn new(vector: Vec<f32>, signature_id: impl Into<String>) -> Result<Self, TypeError> {
        if vector.len() != EMBEDDING_DIM {
            return Err(TypeError::InvalidInput(format!(
                "embedding must have {EMBEDDING_DIM} components, got {}",
                vector.len()
            )));
        }
        if !vector.iter().all(|v| v.is_finite()) {
            return Err(TypeError::DegenerateEmbedding);
        }
        if vector.iter().all(|v| *v == 0.0) {
            return Err(TypeError::DegenerateEmbedding);
        }
        Ok(Self {
            vector,
            signature_id: signature_id.into(),
        })
    }

    pub fn vector(&self) -> &[f32] {
        &self.vector
    }

    pub fn signature_id(&self) -> &str {
        &self.signature_id
    }
}

/// A labelled pair of signature images for similarity training.
#[derive(Debug, Clone)]
pub struct PairExample {
    pub first: SignatureImage,
    pub second: SignatureImage,
    /// 1 = same author.
    pub same_author: bool,
}

/// Mapping from signature identifiers to cluster labels under threshold t.
///
/// Cluster ids form a contiguous range starting at 0, assigned by order of
/// first member appearance in the input.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    ids: Vec<String>,
    labels: Vec<u32>,
    threshold_t: f64,
}

impl ClusterAssignment {
    /// Build from parallel id/label vectors; labels are canonicalized so the
    /// first id gets cluster 0, the next unseen cluster gets 1, and so on.
    pub fn new(ids: Vec<String>, labels: Vec<u32>, threshold_t: f64) -> Result<Self, TypeError> {
        if ids.len() != labels.len() {
            return Err(TypeError::InvalidInput(
                "ids and labels must have equal length".into(),
            ));
        }
        if !(0.0..=2.0).contains(&threshold_t) {
            return Err(TypeError::InvalidInput("threshold t must lie in [0,2]".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &ids {
            if !seen.insert(id) {
                return Err(TypeError::InvalidInput(format!(
                    "signature id appears more than once: {id}"
                )));
            }
        }
        let mut remap = std::collections::HashMap::new();
        let mut canonical = Vec::with_capacity(labels.len());
        for &raw in &labels {
            let next = remap.len() as u32;
            let c = *remap.entry(raw).or_insert(next);
            canonical.push(c);
        }
        Ok(Self {
            ids,
            labels: canonical,
            threshold_t,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn threshold_t(&self) -> f64 {
        self.threshold_t
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn n_clusters(&self) -> usize {
        self.labels.iter().map(|l| *l as usize + 1).max().unwrap_or(0)
    }

    pub fn label_of(&self, id: &str) -> Option<u32> {
        self.ids
            .iter()
            .position(|i| i == id)
            .map(|idx| self.labels[idx])
    }

    /// Pairs of `(signature_id, cluster_id)` in input order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, u32)> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.labels.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn prov() -> Provenance {
        Provenance {
            doc_id: "d".into(),
            page_index: 0,
            bbox: BBox::new(0, 0, 9, 9).unwrap(),
        }
    }

    #[test]
    fn page_image_rejects_out_of_range() {
        let px = Array2::from_elem((4, 4), 1.5f32);
        assert!(PageImage::new("d", 0, px, 200).is_err());
    }

    #[test]
    fn signature_image_enforces_canvas_shape() {
        let px = Array2::from_elem((128, 128), 0.5f32);
        assert!(SignatureImage::new(px, SignatureState::Raw, prov()).is_err());
        let px = Array2::from_elem((256, 256), 0.5f32);
        assert!(SignatureImage::new(px, SignatureState::Raw, prov()).is_ok());
    }

    #[test]
    fn embedding_rejects_zero_and_wrong_length() {
        assert!(matches!(
            Embedding::new(vec![0.0; EMBEDDING_DIM], "s"),
            Err(TypeError::DegenerateEmbedding)
        ));
        assert!(Embedding::new(vec![1.0; 16], "s").is_err());
        let mut v = vec![0.0; EMBEDDING_DIM];
        v[7] = 0.25;
        assert!(Embedding::new(v, "s").is_ok());
    }

    #[test]
    fn cluster_assignment_canonicalizes_labels() {
        let a = ClusterAssignment::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![7, 3, 7],
            0.5,
        )
        .unwrap();
        assert_eq!(a.labels(), &[0, 1, 0]);
        assert_eq!(a.n_clusters(), 2);
    }

    #[test]
    fn cluster_assignment_rejects_duplicates() {
        assert!(ClusterAssignment::new(vec!["a".into(), "a".into()], vec![0, 1], 0.5).is_err());
    }

    #[test]
    fn bbox_gap_semantics() {
        let a = BBox::new(0, 0, 5, 5).unwrap();
        let adjacent = BBox::new(6, 0, 8, 5).unwrap();
        assert_eq!(a.gap_chebyshev(&adjacent), 0);
        let apart = BBox::new(9, 0, 12, 5).unwrap();
        assert_eq!(a.gap_chebyshev(&apart), 3);
        let overlapping = BBox::new(3, 3, 9, 9).unwrap();
        assert_eq!(a.gap_chebyshev(&overlapping), 0);
    }

    #[test]
    fn bbox_iou_of_identical_is_one() {
        let a = BBox::new(2, 3, 10, 12).unwrap();
        assert!((a.iou(&a) - 1.0).abs() < 1e-12);
        let b = BBox::new(100, 100, 110, 110).unwrap();
        assert_eq!(a.iou(&b), 0.0);
    }
}
