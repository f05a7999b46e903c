//! Pipeline configuration: a TOML document with one table per stage.
//!
//! Every field has a default, so an empty document is a valid config.
//! [`validate_config`] parses, applies defaults and range-checks every
//! tunable, naming the offending field in the error.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

/// Current config schema version. Files carrying a different version are
/// rejected rather than silently reinterpreted.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config field {field} out of range: {detail}")]
    OutOfRange { field: String, detail: String },
    #[error("unsupported config schema_version {0} (expected {SCHEMA_VERSION})")]
    SchemaVersion(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub ingest: IngestConfig,
    pub extract: ExtractConfig,
    pub filter: FilterConfig,
    pub clean: CleanConfig,
    pub embed: EmbedConfig,
    pub cluster: ClusterConfig,
    pub run: RunConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            ingest: IngestConfig::default(),
            extract: ExtractConfig::default(),
            filter: FilterConfig::default(),
            clean: CleanConfig::default(),
            embed: EmbedConfig::default(),
            cluster: ClusterConfig::default(),
            run: RunConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Render resolution for paged formats.
    pub dpi: u32,
    /// Lowercase phrases whose presence in page text rejects the page.
    pub keywords: Vec<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            dpi: 200,
            keywords: vec![
                "electronically filed".into(),
                "this document was delivered electronically".into(),
            ],
        }
    }
}

/// Binarization method for page masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Binarization {
    /// Global Otsu threshold on the intensity histogram.
    OtsuGlobal,
    /// Local mean threshold with an offset (for uneven illumination).
    AdaptiveMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub binarization: Binarization,
    /// Window side for adaptive binarization, as a fraction of the page's
    /// shorter side.
    pub adaptive_window_frac: f64,
    /// Subtracted from the local mean before comparing in adaptive mode.
    pub adaptive_offset: f64,
    /// Regions whose bbox gap is at most this fraction of page width merge.
    pub merge_dist_frac: f64,
    pub density_min: f64,
    pub density_max: f64,
    /// Bounding-box aspect ratio (width over height) bounds.
    pub aspect_min: f64,
    pub aspect_max: f64,
    /// Bounding-box area bounds as fractions of page area.
    pub area_min_frac: f64,
    pub area_max_frac: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            binarization: Binarization::OtsuGlobal,
            adaptive_window_frac: 0.05,
            adaptive_offset: 0.1,
            merge_dist_frac: 0.015,
            density_min: 0.02,
            density_max: 0.4,
            aspect_min: 0.5,
            aspect_max: 12.0,
            area_min_frac: 0.001,
            area_max_frac: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Candidates scoring above this are retained.
    pub threshold: f64,
    pub checkpoint: Option<PathBuf>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanConfig {
    pub checkpoint: Option<PathBuf>,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self { checkpoint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub checkpoint: Option<PathBuf>,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self { checkpoint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Hard intra-cluster cosine-distance threshold.
    pub t: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { t: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker pool size for per-page stages; 0 means one per CPU.
    pub workers: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            workers: 0,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Range-check every tunable.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion(self.schema_version));
        }
        if self.ingest.dpi == 0 || self.ingest.dpi > 1200 {
            return Err(out_of_range("ingest.dpi", "must be in 1..=1200"));
        }
        if self.ingest.keywords.iter().any(|k| k.is_empty()) {
            return Err(out_of_range("ingest.keywords", "keywords must be non-empty"));
        }
        if self
            .ingest
            .keywords
            .iter()
            .any(|k| k.chars().any(|c| c.is_uppercase()))
        {
            return Err(out_of_range("ingest.keywords", "keywords must be lowercase"));
        }
        check_unit("extract.adaptive_window_frac", self.extract.adaptive_window_frac)?;
        check_unit("extract.adaptive_offset", self.extract.adaptive_offset)?;
        if self.extract.merge_dist_frac <= 0.0 || self.extract.merge_dist_frac > 0.5 {
            return Err(out_of_range(
                "extract.merge_dist_frac",
                "must be in (0, 0.5]",
            ));
        }
        check_bounds(
            "extract.density_min",
            "extract.density_max",
            self.extract.density_min,
            self.extract.density_max,
            0.0,
            1.0,
        )?;
        check_bounds(
            "extract.aspect_min",
            "extract.aspect_max",
            self.extract.aspect_min,
            self.extract.aspect_max,
            0.0,
            f64::INFINITY,
        )?;
        check_bounds(
            "extract.area_min_frac",
            "extract.area_max_frac",
            self.extract.area_min_frac,
            self.extract.area_max_frac,
            0.0,
            1.0,
        )?;
        if !(0.0..=1.0).contains(&self.filter.threshold) {
            return Err(out_of_range("filter.threshold", "must lie in [0,1]"));
        }
        if !(0.0..=2.0).contains(&self.cluster.t) {
            return Err(out_of_range("cluster.t", "must lie in [0,2]"));
        }
        Ok(())
    }

    /// Serialize back to the TOML schema accepted by [`validate_config`].
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn out_of_range(field: &str, detail: &str) -> ConfigError {
    ConfigError::OutOfRange {
        field: field.into(),
        detail: detail.into(),
    }
}

fn check_unit(field: &str, v: f64) -> Result<(), ConfigError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(out_of_range(field, "must lie in [0,1]"));
    }
    Ok(())
}

fn check_bounds(
    lo_field: &str,
    hi_field: &str,
    lo: f64,
    hi: f64,
    min: f64,
    max: f64,
) -> Result<(), ConfigError> {
    if !lo.is_finite() || lo < min || lo > max {
        return Err(out_of_range(lo_field, "outside documented range"));
    }
    if hi < min || (hi > max && max.is_finite()) || hi.is_nan() {
        return Err(out_of_range(hi_field, "outside documented range"));
    }
    if lo > hi {
        return Err(ConfigError::OutOfRange {
            field: format!("{lo_field}/{hi_field}"),
            detail: "lower bound exceeds upper bound".into(),
        });
    }
    Ok(())
}

/// Parse and validate a TOML config document, applying defaults for every
/// missing field. An empty document yields the full default config.
pub fn validate_config(raw: &str) -> Result<PipelineConfig, ConfigError> {
    let cfg: PipelineConfig =
        toml::from_str(raw).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}
