//! Scoring for grounded outputs: referring-expression accuracy, likelihood
//! multiple choice, yes/no exact match, CHAIR-style hallucination rates and
//! accuracy grouped by reasoning steps.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, parse_coords, scan_bracketed_boxes, BoundingBox};
use crate::sequence::{COORD_CLOSE, COORD_OPEN, GROUNDING_TOKEN};
use crate::text::{normalize_whitespace, PhraseMatcher};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("IoU threshold {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error("need at least two options, got {0}")]
    TooFewOptions(usize),
    #[error("option {0} has a non-finite score")]
    NonFiniteScore(usize),
    #[error("step count must be at least 1")]
    ZeroSteps,
    #[error("{0} is empty")]
    Empty(&'static str),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExtractedBoxes {
    pub boxes: Vec<BoundingBox>,
    pub malformed: usize,
}

/// Finds boxes written either as `[x1, y1, x2, y2]` or as `[c] x1, y1, x2, y2 [/c]`,
/// in text order. Candidates that fail to parse are counted, not returned.
pub fn extract_boxes(text: &str) -> ExtractedBoxes {
    let mut found: Vec<(usize, Option<BoundingBox>)> = Vec::new();
    for cand in scan_bracketed_boxes(text) {
        found.push((cand.start, cand.parsed.ok()));
    }
    let mut from = 0;
    while let Some(rel) = text[from..].find(COORD_OPEN) {
        let start = from + rel;
        let body_start = start + COORD_OPEN.len();
        match text[body_start..].find(COORD_CLOSE) {
            Some(len) => {
                let body = &text[body_start..body_start + len];
                // A bracketed box inside the span was already seen by the scan.
                if !found.iter().any(|(at, _)| (body_start..body_start + len).contains(at)) {
                    found.push((start, parse_coords(body).ok()));
                }
                from = body_start + len + COORD_CLOSE.len();
            }
            None => {
                found.push((start, None));
                break;
            }
        }
    }
    found.sort_by_key(|(at, _)| *at);
    let malformed = found.iter().filter(|(_, b)| b.is_none()).count();
    ExtractedBoxes { boxes: found.into_iter().filter_map(|(_, b)| b).collect(), malformed }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecReport {
    pub correct: usize,
    pub total: usize,
    pub no_box: usize,
    pub malformed: usize,
    pub accuracy: f64,
}

/// Referring-expression accuracy: the first extracted box must beat the IoU
/// threshold (strictly, unless `inclusive`).
pub fn rec_accuracy<'a>(
    records: impl IntoIterator<Item = (&'a str, &'a BoundingBox)>,
    threshold: f64,
    inclusive: bool,
) -> Result<RecReport, EvalError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(EvalError::BadThreshold(threshold));
    }
    let mut r = RecReport::default();
    for (pred, gold) in records {
        r.total += 1;
        let ex = extract_boxes(pred);
        r.malformed += ex.malformed;
        let Some(first) = ex.boxes.first() else {
            r.no_box += 1;
            continue;
        };
        let v = iou(first, gold);
        if v > threshold || (inclusive && v == threshold) {
            r.correct += 1;
        }
    }
    r.accuracy = ratio(r.correct, r.total);
    Ok(r)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Index of the highest-likelihood option; ties go to the lowest index.
pub fn mc_select(scores: &[f64]) -> Result<usize, EvalError> {
    if scores.len() < 2 {
        return Err(EvalError::TooFewOptions(scores.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
}

/// First word, casefolded and stripped of punctuation. Anything but "yes"
/// counts as "no".
pub fn normalize_yesno(pred: &str) -> YesNo {
    let first = pred
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .find(|w| !w.is_empty());
    match first.as_deref() {
        Some("yes") => YesNo::Yes,
        _ => YesNo::No,
    }
}

pub fn exact_match_yesno(pred: &str, gold: YesNo) -> bool {
    normalize_yesno(pred) == gold
}

/// Canonical object names and their synonyms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lexicon(BTreeMap<String, BTreeSet<String>>);

impl Lexicon {
    /// Every canonical name also matches itself.
    pub fn new(entries: impl IntoIterator<Item = (String, BTreeSet<String>)>) -> Self {
        let mut map = BTreeMap::new();
        for (name, mut syns) in entries {
            let name = name.trim().to_lowercase();
            syns = syns.into_iter().map(|s| s.trim().to_lowercase()).filter(|s| !s.is_empty()).collect();
            syns.insert(name.clone());
            map.entry(name).or_insert_with(BTreeSet::new).extend(syns);
        }
        Self(map)
    }

    pub fn get(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.0.get(name)
    }

    fn matcher(&self, extra: &BTreeSet<String>) -> PhraseMatcher<String> {
        let mut phrases: Vec<(String, String)> =
            self.0.iter().flat_map(|(name, syns)| syns.iter().map(move |s| (s.clone(), name.clone()))).collect();
        phrases.extend(extra.iter().filter(|g| !self.0.contains_key(*g)).map(|g| (g.clone(), g.clone())));
        PhraseMatcher::new(phrases)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChairReport {
    pub chair: f64,
    pub coverage: f64,
    pub mentioned: BTreeSet<String>,
    pub hallucinated: usize,
    pub grounded: usize,
}

/// Sentence-level CHAIR: hallucinated mentions over all mentions, plus the
/// share of gold objects the caption covers. Gold names missing from the
/// lexicon are matched literally.
pub fn chair_metrics(caption: &str, gold: &BTreeSet<String>, lexicon: &Lexicon) -> ChairReport {
    let gold: BTreeSet<String> = gold.iter().map(|g| g.trim().to_lowercase()).collect();
    let matcher = lexicon.matcher(&gold);
    let mentioned: BTreeSet<String> = matcher.find_all(caption).into_iter().map(|m| m.value.clone()).collect();
    let grounded = mentioned.intersection(&gold).count();
    let hallucinated = mentioned.len() - grounded;
    ChairReport {
        chair: hallucinated as f64 / mentioned.len().max(1) as f64,
        coverage: grounded as f64 / gold.len().max(1) as f64,
        mentioned,
        hallucinated,
        grounded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepBin {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Accuracy per number of reasoning steps. Only non-empty bins appear.
pub fn accuracy_by_steps(records: impl IntoIterator<Item = (usize, bool)>) -> Result<BTreeMap<usize, StepBin>, EvalError> {
    let mut bins: BTreeMap<usize, StepBin> = BTreeMap::new();
    for (steps, ok) in records {
        if steps == 0 {
            return Err(EvalError::ZeroSteps);
        }
        let b = bins.entry(steps).or_insert(StepBin { n: 0, correct: 0, accuracy: 0.0 });
        b.n += 1;
        b.correct += usize::from(ok);
    }
    for b in bins.values_mut() {
        b.accuracy = ratio(b.correct, b.n);
    }
    Ok(bins)
}

/// Drops coordinates, `[c] ... [/c]` spans and visual markers from a
/// reasoning path.
pub fn strip_grounding(text: &str) -> String {
    let mut cuts: Vec<(usize, usize)> =
        scan_bracketed_boxes(text).into_iter().filter(|c| c.parsed.is_ok()).map(|c| (c.start, c.end)).collect();
    let mut from = 0;
    while let Some(rel) = text[from..].find(COORD_OPEN) {
        let start = from + rel;
        let end = text[start..].find(COORD_CLOSE).map_or(text.len(), |e| start + e + COORD_CLOSE.len());
        cuts.push((start, end));
        from = end;
    }
    for token in [GROUNDING_TOKEN, "<obj_", "<image:"] {
        let mut from = 0;
        while let Some(rel) = text[from..].find(token) {
            let start = from + rel;
            let end = text[start..].find('>').map_or(text.len(), |e| start + e + 1);
            cuts.push((start, end));
            from = end;
        }
    }
    cuts.sort_unstable();
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for (s, e) in cuts {
        if s >= at {
            out.push_str(&text[at..s]);
            out.push(' ');
        }
        at = at.max(e);
    }
    out.push_str(&text[at..]);
    normalize_whitespace(&out)
}

/// Prompt for a text-only judge that reads the reasoning path instead of
/// the image.
pub fn judger_prompt(reasoning_path: &str, description: &str) -> Result<String, EvalError> {
    let path = strip_grounding(reasoning_path);
    if path.is_empty() {
        return Err(EvalError::Empty("reasoning path"));
    }
    let description = description.trim();
    if description.is_empty() {
        return Err(EvalError::Empty("description"));
    }
    Ok(format!("There is a image, {path}, please determine whether {description}, please answer yes or no."))
}
