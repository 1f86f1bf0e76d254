//! All tunables in one TOML-backed structure. Unknown keys are rejected;
//! missing keys take defaults; a dump-then-load round trip reproduces the
//! effective settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adaptation::AdaptationConfig;
use crate::error::{Error, Result};
use crate::optimizer::{AnnealSchedule, RedetectParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Master seed; mandatory for tracking (via file or --seed).
    pub seed: Option<u64>,
    pub segmenter: SegmenterConfig,
    pub optimizer: OptimizerConfig,
    pub tracker: TrackerConfig,
    pub adaptation: AdaptationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmenterConfig {
    /// Neighbor count for classification.
    pub k: usize,
    /// Embedding grid stride in pixels.
    pub stride: usize,
    /// Initialization subsampling cap per label.
    pub init_cap_per_label: usize,
    /// Embedding backend: "reference" or "oracle".
    pub backend: String,
    /// Reference backend: include normalized cell coordinates.
    pub include_xy: bool,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            k: 5,
            stride: 4,
            init_cap_per_label: 20_000,
            backend: "reference".into(),
            include_xy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub t0: f64,
    pub t_decay: f64,
    /// Initial control-point sigma in canonical pixels; when absent it is
    /// derived as `sigma0_frac * max(template bbox side)`.
    pub sigma0: Option<f64>,
    pub sigma0_frac: f64,
    pub sigma_decay: f64,
    pub init_candidates: usize,
    pub redetect_iterations: usize,
    pub redetect_samples: usize,
    pub redetect_scale_min: f64,
    pub redetect_scale_max: f64,
    pub redetect_jitter_frac: f64,
    pub redetect_sigma_scale: f64,
    pub redetect_anneal_starts: usize,
    /// Flow source: "none", "translational" or "files".
    pub flow: String,
    pub flow_window: i32,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            iterations: 350,
            t0: 0.05,
            t_decay: 0.985,
            sigma0: None,
            sigma0_frac: 0.03,
            sigma_decay: 0.99,
            init_candidates: 50,
            redetect_iterations: 400,
            redetect_samples: 400,
            redetect_scale_min: 0.5,
            redetect_scale_max: 2.0,
            redetect_jitter_frac: 0.25,
            redetect_sigma_scale: 2.0,
            redetect_anneal_starts: 4,
            flow: "translational".into(),
            flow_window: 32,
        }
    }
}

impl OptimizerConfig {
    /// Schedule for normal tracking, with sigma resolved against the
    /// template bounding box.
    pub fn schedule(&self, template_max_side: f64) -> AnnealSchedule {
        AnnealSchedule {
            iterations: self.iterations,
            t0: self.t0,
            t_decay: self.t_decay,
            sigma0: self.sigma0.unwrap_or(self.sigma0_frac * template_max_side),
            sigma_decay: self.sigma_decay,
        }
    }

    pub fn redetect_params(&self) -> RedetectParams {
        RedetectParams {
            init_samples: self.redetect_samples,
            scale_min: self.redetect_scale_min,
            scale_max: self.redetect_scale_max,
            jitter_frac: self.redetect_jitter_frac,
            anneal_sigma_scale: self.redetect_sigma_scale,
            anneal_starts: self.redetect_anneal_starts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Below this total score the tracker turns lost.
    pub lost_threshold: f64,
    /// A re-detection must reach this total score to re-enter tracking.
    pub redetect_threshold: f64,
    /// Defer reverse-side initialization examples until its frame is
    /// reached.
    pub strict_causal: bool,
    /// Appearance overlap below this many pixels is degenerate-neutral.
    pub min_appearance_px: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            lost_threshold: 0.30,
            redetect_threshold: 0.65,
            strict_causal: false,
            min_appearance_px: 16,
        }
    }
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Config> {
        let cfg: Config =
            toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segmenter.k == 0 {
            return Err(Error::InvalidConfig("segmenter.k must be at least 1".into()));
        }
        if self.segmenter.stride == 0 {
            return Err(Error::InvalidConfig("segmenter.stride must be at least 1".into()));
        }
        if !matches!(self.segmenter.backend.as_str(), "reference" | "oracle") {
            return Err(Error::InvalidConfig(format!(
                "unknown backend {:?}",
                self.segmenter.backend
            )));
        }
        if !matches!(self.optimizer.flow.as_str(), "none" | "translational" | "files") {
            return Err(Error::InvalidConfig(format!(
                "unknown flow source {:?}",
                self.optimizer.flow
            )));
        }
        self.optimizer.schedule(100.0).validate()?;
        let t = &self.tracker;
        if !(0.0..=1.0).contains(&t.lost_threshold)
            || !(0.0..=1.0).contains(&t.redetect_threshold)
        {
            return Err(Error::InvalidConfig("thresholds must lie in [0, 1]".into()));
        }
        if self.adaptation.min_boundary_distance < 0.0 {
            return Err(Error::InvalidConfig("adaptation distance must be non-negative".into()));
        }
        Ok(())
    }
}
