use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vocot_core::filters::FilterConfig;
use vocot_core::synthesis::{DEFAULT_BOX_TOLERANCE, DEFAULT_ERROR_PATTERNS, DEFAULT_EXEMPLAR_IMAGE};
use vocot_core::{PatchGrid, Precision};

pub const DEFAULT_SEED: u64 = 17;

/// Full run configuration. Every key is optional in the TOML file; missing
/// keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub grid: PatchGrid,
    pub precision: Precision,
    /// Lines handed to the worker pool at a time.
    pub chunk_size: usize,
    /// Image reference for GQA records; `{image_id}` is substituted.
    pub image_template: String,
    pub filters: FilterConfig,
    pub eval: EvalConfig,
    pub synthesis: SynthesisConfig,
    pub verbalizer: VerbalizerConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            grid: PatchGrid::default(),
            precision: Precision::default(),
            chunk_size: 4096,
            image_template: "{image_id}.jpg".into(),
            filters: FilterConfig::default(),
            eval: EvalConfig::default(),
            synthesis: SynthesisConfig::default(),
            verbalizer: VerbalizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Count IoU equal to the threshold as correct.
    pub iou_inclusive: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5, iou_inclusive: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TypeMix {
    pub gqa: usize,
    pub vqa_based: usize,
    pub image_only: usize,
}

impl Default for TypeMix {
    fn default() -> Self {
        Self { gqa: 72_000, vqa_based: 6_000, image_only: 2_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub precision: Precision,
    pub box_tolerance: f64,
    pub error_patterns: Vec<String>,
    /// Per-category cap for balanced image sampling; unset disables sampling.
    pub per_category_cap: Option<usize>,
    pub exemplar_image: String,
    /// Target corpus composition, reported in manifests only.
    pub type_mix: TypeMix,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            precision: Precision::TWO,
            box_tolerance: DEFAULT_BOX_TOLERANCE,
            error_patterns: DEFAULT_ERROR_PATTERNS.iter().map(|p| p.to_string()).collect(),
            per_category_cap: None,
            exemplar_image: DEFAULT_EXEMPLAR_IMAGE.into(),
            type_mix: TypeMix::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerbalizerConfig {
    /// Skip steps without a rule instead of dropping the question.
    pub skip_unknown_ops: bool,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid: Option<PatchGrid>,
    pub precision: Option<Precision>,
    pub threshold: Option<f64>,
}

impl Config {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Config::default(),
        };
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(grid) = overrides.grid {
            cfg.grid = grid;
        }
        if let Some(p) = overrides.precision {
            cfg.precision = p;
        }
        if let Some(t) = overrides.threshold {
            cfg.eval.iou_threshold = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 {
            bail!("chunk_size must be at least 1");
        }
        let t = self.eval.iou_threshold;
        if !(t > 0.0 && t <= 1.0) {
            bail!("eval.iou_threshold must lie in (0, 1], got {t}");
        }
        let f = &self.filters;
        for (name, v) in [("filters.min_similarity", f.min_similarity), ("filters.min_clip_score", f.min_clip_score)] {
            if !(0.0..=1.0).contains(&v) {
                bail!("{name} must lie in [0, 1], got {v}");
            }
        }
        if !(f.min_region_side.is_finite() && f.min_region_side >= 0.0) {
            bail!("filters.min_region_side must be a non-negative number");
        }
        let tol = self.synthesis.box_tolerance;
        if !(tol.is_finite() && tol >= 0.0) {
            bail!("synthesis.box_tolerance must be a non-negative number");
        }
        if self.synthesis.per_category_cap == Some(0) {
            bail!("synthesis.per_category_cap must be at least 1");
        }
        if !self.image_template.contains("{image_id}") {
            bail!("image_template must contain {{image_id}}");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = Config::default();
        assert_eq!(cfg.seed, 17);
        assert_eq!((cfg.grid.rows(), cfg.grid.cols()), (24, 24));
        assert_eq!(cfg.precision.places(), 3);
        assert_eq!(cfg.eval.iou_threshold, 0.5);
        assert_eq!((cfg.filters.min_similarity, cfg.filters.min_clip_score, cfg.filters.min_region_side), (0.3, 0.35, 50.0));
        assert_eq!(cfg.synthesis.type_mix, TypeMix { gqa: 72_000, vqa_based: 6_000, image_only: 2_000 });
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let text = toml::to_string(&Config::default()).unwrap();
        assert_eq!(toml::from_str::<Config>(&text).unwrap(), Config::default());
        let partial: Config = toml::from_str("grid = [16, 32]\n[filters]\nmax_images = 4\n").unwrap();
        assert_eq!((partial.grid.rows(), partial.grid.cols(), partial.filters.max_images), (16, 32, 4));
        assert!(toml::from_str::<Config>("precision = 5").is_err());
        assert!(toml::from_str::<Config>("unknown = 1").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = Config::default();
        cfg.eval.iou_threshold = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = Config { chunk_size: 0, ..Config::default() };
        assert!(cfg.validate().is_err());
    }
}
