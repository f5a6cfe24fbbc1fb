//! Pre-training corpus filters: interleaved documents (MMC4-style image-text
//! similarity and image count), grounded captions (CLIP score) and region
//! crops (minimum side length).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::PixelBox;

// Scores are compared with this slack so a mean that is mathematically equal
// to a threshold is not kept through float rounding.
const SCORE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    Malformed,
    LowSimilarity,
    TooManyImages,
    LowClipScore,
    SmallRegion,
}

impl DropReason {
    pub fn code(&self) -> &'static str {
        match self {
            DropReason::Malformed => "malformed",
            DropReason::LowSimilarity => "low-sim",
            DropReason::TooManyImages => "too-many-images",
            DropReason::LowClipScore => "low-clip-score",
            DropReason::SmallRegion => "small-region",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Drop(DropReason),
}

impl Verdict {
    pub fn is_keep(&self) -> bool {
        matches!(self, Verdict::Keep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityMode {
    /// Mean over all images of the document.
    #[default]
    DocMean,
    /// Every image must clear the threshold on its own.
    PerImageMin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_similarity: f64,
    pub max_images: usize,
    pub similarity_mode: SimilarityMode,
    pub min_clip_score: f64,
    pub min_region_side: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_similarity: 0.3,
            max_images: 6,
            similarity_mode: SimilarityMode::DocMean,
            min_clip_score: 0.35,
            min_region_side: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterleavedDocMeta {
    pub id: String,
    pub image_count: usize,
    /// Similarity of each image with the sentence before it.
    pub similarities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedCaptionMeta {
    pub id: String,
    pub clip_score: f64,
    #[serde(default)]
    pub regions: Vec<PixelBox>,
}

pub fn filter_interleaved(doc: &InterleavedDocMeta, cfg: &FilterConfig) -> Verdict {
    let sims = &doc.similarities;
    if sims.is_empty() || sims.len() != doc.image_count || sims.iter().any(|s| !s.is_finite()) {
        return Verdict::Drop(DropReason::Malformed);
    }
    if doc.image_count > cfg.max_images {
        return Verdict::Drop(DropReason::TooManyImages);
    }
    let score = match cfg.similarity_mode {
        SimilarityMode::DocMean => sims.iter().sum::<f64>() / sims.len() as f64,
        SimilarityMode::PerImageMin => sims.iter().copied().fold(f64::INFINITY, f64::min),
    };
    if score > cfg.min_similarity + SCORE_SLACK {
        Verdict::Keep
    } else {
        Verdict::Drop(DropReason::LowSimilarity)
    }
}

pub fn filter_grounded_caption(meta: &GroundedCaptionMeta, cfg: &FilterConfig) -> Verdict {
    if !(0.0..=1.0).contains(&meta.clip_score) {
        return Verdict::Drop(DropReason::Malformed);
    }
    if meta.clip_score > cfg.min_clip_score + SCORE_SLACK {
        Verdict::Keep
    } else {
        Verdict::Drop(DropReason::LowClipScore)
    }
}

/// Drops crops whose shorter side is under the minimum.
pub fn filter_small_region(region: &PixelBox, cfg: &FilterConfig) -> Verdict {
    if region.validate().is_err() {
        return Verdict::Drop(DropReason::Malformed);
    }
    if region.w.min(region.h) < cfg.min_region_side {
        Verdict::Drop(DropReason::SmallRegion)
    } else {
        Verdict::Keep
    }
}

/// Kept count plus a drop-reason histogram. Merging is associative and
/// commutative, so per-chunk tallies can be combined in any order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterTally {
    pub kept: usize,
    pub dropped: BTreeMap<DropReason, usize>,
}

impl FilterTally {
    pub fn record(&mut self, v: Verdict) {
        match v {
            Verdict::Keep => self.kept += 1,
            Verdict::Drop(r) => *self.dropped.entry(r).or_default() += 1,
        }
    }

    pub fn merge(&mut self, other: &FilterTally) {
        self.kept += other.kept;
        for (r, n) in &other.dropped {
            *self.dropped.entry(*r).or_default() += n;
        }
    }

    pub fn total(&self) -> usize {
        self.kept + self.dropped.values().sum::<usize>()
    }

    /// Histogram keyed by reason code.
    pub fn histogram(&self) -> BTreeMap<String, usize> {
        self.dropped.iter().map(|(r, n)| (r.code().to_string(), *n)).collect()
    }
}

impl FromIterator<Verdict> for FilterTally {
    fn from_iter<I: IntoIterator<Item = Verdict>>(iter: I) -> Self {
        let mut t = FilterTally::default();
        for v in iter {
            t.record(v);
        }
        t
    }
}
