//! GPT-4V payloads for VQA-based (type 2) and image-only (type 3) data,
//! response parsing, box validation, error-pattern filtering and
//! category-balanced image sampling.
//!
//! Nothing here talks to a network. Payloads are plain data that a transport
//! adapter sends; responses come back as raw text.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geometry::{format_bracketed, scan_bracketed_boxes, BoundingBox, Precision};
use crate::thought::GroundedThought;

pub const TYPE2_SYSTEM: &str = include_str!("prompts/type2_system.txt");
pub const TYPE3_SYSTEM: &str = include_str!("prompts/type3_system.txt");
const TYPE2_EXEMPLAR_ASSISTANT: &str = include_str!("prompts/type2_exemplar_assistant.txt");
const TYPE3_EXEMPLAR_ASSISTANT: &str = include_str!("prompts/type3_exemplar_assistant.txt");

// The in-context image's object list, verbatim (its boxes are not valid
// corner boxes, so it is kept as text rather than as an ObjectInfo).
const EXEMPLAR_OBJECTS: &str = "Coffee1: [0.04, 0.25, 0.20, 0.28], Bean: [0.22 , 0.12 , 0.29 , 0.32 ], Vegetable: [0.52, 0.11, 0.29, 0.31 ], Coffee2: [0.76, 0.25, 0.21, 0.27 ], Yam: [0.69, 0.48, 0.27, 0.34 ], Burrito: [0.34, 0.40, 0.35, 0.44 ], Orange: [0.05, 0.50, 0.27, 0.34 ], Chopsticks: [0.61, 0.69, 0.22, 0.31]";
const EXEMPLAR_QUESTION: &str = "What is the food with the most Vitamin C in this image?";
const EXEMPLAR_ANSWER: &str = "Orange.";
pub const DEFAULT_EXEMPLAR_IMAGE: &str = "fruit.jpg";

/// Phrases GPT-4V uses when it complains about the object list.
pub const DEFAULT_ERROR_PATTERNS: [&str; 3] =
    ["From the object information provided", "provided object information", "From the bounding boxes provided"];

/// Default per-coordinate slack when matching response boxes to inputs.
pub const DEFAULT_BOX_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SourceType {
    /// Rule-verbalized GQA programs.
    Gqa = 1,
    /// Existing VQA pairs augmented with a generated thought.
    VqaBased = 2,
    /// Question, answer and thought all generated from an annotated image.
    ImageOnly = 3,
}

impl TryFrom<u8> for SourceType {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(SourceType::Gqa),
            2 => Ok(SourceType::VqaBased),
            3 => Ok(SourceType::ImageOnly),
            other => Err(format!("source type must be 1, 2 or 3, got {other}")),
        }
    }
}

impl From<SourceType> for u8 {
    fn from(s: SourceType) -> Self {
        s as u8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthesisError {
    #[error("object list is empty")]
    NoObjects,
    #[error("object {0} has an empty label")]
    EmptyLabel(usize),
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error("per-category cap must be at least 1")]
    ZeroCap,
    #[error("unparseable object info near byte {0}")]
    ObjectInfoSyntax(usize),
}

/// Ordered object labels with boxes, rendered `Label: [x1, y1, x2, y2], ...`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectInfo(Vec<ObjectEntry>);

impl ObjectInfo {
    pub fn new(entries: Vec<ObjectEntry>) -> Result<Self, SynthesisError> {
        if let Some(i) = entries.iter().position(|e| e.label.trim().is_empty()) {
            return Err(SynthesisError::EmptyLabel(i));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[ObjectEntry] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn render(&self, precision: Precision) -> String {
        self.0
            .iter()
            .map(|e| format!("{}: {}", e.label, format_bracketed(&e.bbox, precision)))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Inverse of [`ObjectInfo::render`].
    pub fn parse(text: &str) -> Result<Self, SynthesisError> {
        let mut entries = Vec::new();
        let mut cursor = 0;
        for cand in scan_bracketed_boxes(text) {
            let bbox = cand.parsed.map_err(|_| SynthesisError::ObjectInfoSyntax(cand.start))?;
            let head = text[cursor..cand.start].trim();
            let head = head.strip_prefix(',').unwrap_or(head).trim_start();
            let label = head.strip_suffix(':').ok_or(SynthesisError::ObjectInfoSyntax(cand.start))?;
            entries.push(ObjectEntry { label: label.trim().to_string(), bbox });
            cursor = cand.end;
        }
        if !text[cursor..].trim().is_empty() {
            return Err(SynthesisError::ObjectInfoSyntax(cursor));
        }
        ObjectInfo::new(entries)
    }
}

/// Keys the model is asked to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSchema {
    ThoughtOnly,
    QuestionAnswerThought,
}

impl ResponseSchema {
    pub fn keys(&self) -> &'static [&'static str] {
        match self {
            ResponseSchema::ThoughtOnly => &["Thought"],
            ResponseSchema::QuestionAnswerThought => &["question", "answer", "Thought"],
        }
    }

    pub fn for_source(source: SourceType) -> Option<Self> {
        match source {
            SourceType::VqaBased => Some(ResponseSchema::ThoughtOnly),
            SourceType::ImageOnly => Some(ResponseSchema::QuestionAnswerThought),
            SourceType::Gqa => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exchange {
    pub user_text: String,
    pub image_ref: String,
    pub assistant_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisPayload {
    pub source_type: SourceType,
    pub system_text: &'static str,
    pub in_context: Exchange,
    pub user_text: String,
    pub image_ref: String,
    pub schema: ResponseSchema,
}

fn user_message(text: &str, image_ref: &str) -> Value {
    json!({
        "role": "user",
        "content": [
            {"type": "text", "text": text},
            {"type": "image_url", "image_url": {"url": image_ref}},
        ],
    })
}

impl SynthesisPayload {
    /// Chat-completion message list: system, in-context user/assistant pair,
    /// then the actual request.
    pub fn messages(&self) -> Value {
        json!([
            {"role": "system", "content": self.system_text},
            user_message(&self.in_context.user_text, &self.in_context.image_ref),
            {"role": "assistant", "content": self.in_context.assistant_text},
            user_message(&self.user_text, &self.image_ref),
        ])
    }
}

fn object_line(objects: &ObjectInfo, precision: Precision) -> String {
    format!("[IMAGE1]:[Object Info]: {}", objects.render(precision))
}

pub fn build_type2_payload(
    objects: &ObjectInfo,
    question: &str,
    answer: &str,
    image_ref: &str,
    precision: Precision,
) -> Result<SynthesisPayload, SynthesisError> {
    if objects.is_empty() {
        return Err(SynthesisError::NoObjects);
    }
    if question.trim().is_empty() {
        return Err(SynthesisError::EmptyField("question"));
    }
    if answer.trim().is_empty() {
        return Err(SynthesisError::EmptyField("answer"));
    }
    Ok(SynthesisPayload {
        source_type: SourceType::VqaBased,
        system_text: TYPE2_SYSTEM,
        in_context: Exchange {
            user_text: format!(
                "[IMAGE1]:[Object Info]: {EXEMPLAR_OBJECTS} [question]: {EXEMPLAR_QUESTION} [answer]: {EXEMPLAR_ANSWER}"
            ),
            image_ref: DEFAULT_EXEMPLAR_IMAGE.to_string(),
            assistant_text: TYPE2_EXEMPLAR_ASSISTANT.to_string(),
        },
        user_text: format!("{} [question]: {} [answer]: {}", object_line(objects, precision), question.trim(), answer.trim()),
        image_ref: image_ref.to_string(),
        schema: ResponseSchema::ThoughtOnly,
    })
}

pub fn build_type3_payload(
    objects: &ObjectInfo,
    image_ref: &str,
    precision: Precision,
) -> Result<SynthesisPayload, SynthesisError> {
    if objects.is_empty() {
        return Err(SynthesisError::NoObjects);
    }
    Ok(SynthesisPayload {
        source_type: SourceType::ImageOnly,
        system_text: TYPE3_SYSTEM,
        in_context: Exchange {
            user_text: format!("[IMAGE1]:[Object Info]: {EXEMPLAR_OBJECTS}"),
            image_ref: DEFAULT_EXEMPLAR_IMAGE.to_string(),
            assistant_text: TYPE3_EXEMPLAR_ASSISTANT.to_string(),
        },
        user_text: object_line(objects, precision),
        image_ref: image_ref.to_string(),
        schema: ResponseSchema::QuestionAnswerThought,
    })
}

/// Why a generated response was discarded.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RejectReason {
    #[error("no JSON object in response")]
    NoJson,
    #[error("response object is not valid JSON: {0}")]
    BadJson(String),
    #[error("missing keys: {0:?}")]
    MissingKeys(Vec<String>),
    #[error("empty value for {0}")]
    EmptyField(String),
    #[error("malformed box at byte {0} of the thought")]
    MalformedBox(usize),
    #[error("{} box(es) not taken from the object information", .0.len())]
    UnmatchedBoxes(Vec<BoundingBox>),
    #[error("response contains error pattern {0:?}")]
    ErrorPattern(String),
}

impl RejectReason {
    /// Stable histogram key.
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::NoJson => "no-json",
            RejectReason::BadJson(_) => "bad-json",
            RejectReason::MissingKeys(_) => "missing-keys",
            RejectReason::EmptyField(_) => "empty-field",
            RejectReason::MalformedBox(_) => "malformed-box",
            RejectReason::UnmatchedBoxes(_) => "unmatched-box",
            RejectReason::ErrorPattern(_) => "error-pattern",
        }
    }
}

/// First `{ ... }` span with balanced braces, skipping braces inside JSON
/// strings.
pub fn first_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Fields pulled out of a model response.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub question: Option<String>,
    pub answer: Option<String>,
    pub thought: GroundedThought,
}

pub fn parse_synthesis_response(
    text: &str,
    schema: ResponseSchema,
    precision: Precision,
) -> Result<ParsedResponse, RejectReason> {
    let object = first_json_object(text).ok_or(RejectReason::NoJson)?;
    let map: serde_json::Map<String, Value> =
        serde_json::from_str(object).map_err(|e| RejectReason::BadJson(e.to_string()))?;
    let lookup = |key: &str| {
        map.iter().find(|(k, _)| k.trim().eq_ignore_ascii_case(key)).and_then(|(_, v)| v.as_str())
    };
    let missing: Vec<String> =
        schema.keys().iter().filter(|k| lookup(k).is_none()).map(|k| k.to_string()).collect();
    if !missing.is_empty() {
        return Err(RejectReason::MissingKeys(missing));
    }
    let mut fields = BTreeMap::new();
    for key in schema.keys() {
        let value = lookup(key).unwrap_or_default().trim();
        if value.is_empty() {
            return Err(RejectReason::EmptyField(key.to_string()));
        }
        fields.insert(key.to_ascii_lowercase(), value.to_string());
    }
    let thought = GroundedThought::parse(&fields["thought"], precision)
        .map_err(|e| RejectReason::MalformedBox(e.offset))?;
    Ok(ParsedResponse { question: fields.remove("question"), answer: fields.remove("answer"), thought })
}

/// Boxes in `thought` with no object box within `tol` on every coordinate.
/// An empty result means the thought passes.
pub fn validate_boxes(thought: &GroundedThought, objects: &ObjectInfo, tol: f64) -> Vec<BoundingBox> {
    thought
        .boxes()
        .filter(|b| !objects.entries().iter().any(|e| e.bbox.max_deviation(b) <= tol))
        .copied()
        .collect()
}

/// Case-insensitive substring filter over the whole response.
#[derive(Debug, Clone)]
pub struct ErrorPatternFilter {
    patterns: Vec<(String, String)>,
}

impl Default for ErrorPatternFilter {
    fn default() -> Self {
        Self::new(DEFAULT_ERROR_PATTERNS)
    }
}

impl ErrorPatternFilter {
    pub fn new<S: AsRef<str>>(patterns: impl IntoIterator<Item = S>) -> Self {
        let patterns = patterns
            .into_iter()
            .map(|p| p.as_ref().to_string())
            .filter(|p| !p.trim().is_empty())
            .map(|p| (p.to_lowercase(), p))
            .collect();
        Self { patterns }
    }

    /// The first configured pattern found in `text`, if any.
    pub fn matched(&self, text: &str) -> Option<&str> {
        let folded = text.to_lowercase();
        self.patterns.iter().find(|(lower, _)| folded.contains(lower.as_str())).map(|(_, p)| p.as_str())
    }
}

pub fn filter_error_patterns(text: &str, filter: &ErrorPatternFilter) -> Result<(), RejectReason> {
    match filter.matched(text) {
        Some(p) => Err(RejectReason::ErrorPattern(p.to_string())),
        None => Ok(()),
    }
}

/// What was sent for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRequest {
    pub id: String,
    pub image: String,
    pub objects: ObjectInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub categories: BTreeSet<String>,
}

impl SynthesisRequest {
    pub fn payload(&self, source: SourceType, precision: Precision) -> Result<SynthesisPayload, SynthesisError> {
        match source {
            SourceType::VqaBased => build_type2_payload(
                &self.objects,
                self.question.as_deref().unwrap_or_default(),
                self.answer.as_deref().unwrap_or_default(),
                &self.image,
                precision,
            ),
            _ => build_type3_payload(&self.objects, &self.image, precision),
        }
    }
}

/// An accepted generated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisRecord {
    pub id: String,
    pub image: String,
    pub question: Option<String>,
    pub answer: String,
    pub thought: GroundedThought,
    pub source_type: SourceType,
    pub objects: ObjectInfo,
}

/// Settings for [`screen_response`].
#[derive(Debug, Clone)]
pub struct ScreenConfig {
    pub tolerance: f64,
    pub precision: Precision,
    pub patterns: ErrorPatternFilter,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        Self { tolerance: DEFAULT_BOX_TOLERANCE, precision: Precision::TWO, patterns: ErrorPatternFilter::default() }
    }
}

/// Error-pattern filter, parse, then box validation. The first failing check
/// decides the reject reason.
pub fn screen_response(
    raw: &str,
    request: &SynthesisRequest,
    source: SourceType,
    config: &ScreenConfig,
) -> Result<SynthesisRecord, RejectReason> {
    filter_error_patterns(raw, &config.patterns)?;
    let schema = ResponseSchema::for_source(source).unwrap_or(ResponseSchema::QuestionAnswerThought);
    let parsed = parse_synthesis_response(raw, schema, config.precision)?;
    let unmatched = validate_boxes(&parsed.thought, &request.objects, config.tolerance);
    if !unmatched.is_empty() {
        return Err(RejectReason::UnmatchedBoxes(unmatched));
    }
    let (question, answer) = match schema {
        ResponseSchema::ThoughtOnly => (request.question.clone(), request.answer.clone().unwrap_or_default()),
        ResponseSchema::QuestionAnswerThought => (parsed.question, parsed.answer.unwrap_or_default()),
    };
    Ok(SynthesisRecord {
        id: request.id.clone(),
        image: request.image.clone(),
        question,
        answer,
        thought: parsed.thought,
        source_type: source,
        objects: request.objects.clone(),
    })
}

/// Greedy category-balanced selection. Records are visited in a seeded
/// shuffle; one is taken when every one of its categories is still below
/// `cap`, and then all of its categories count it. Records without
/// categories are never taken. Returns selected indices in ascending order.
pub fn balanced_sample(
    categories: &[BTreeSet<String>],
    cap: usize,
    seed: u64,
) -> Result<Vec<usize>, SynthesisError> {
    if cap == 0 {
        return Err(SynthesisError::ZeroCap);
    }
    let mut order: Vec<usize> = (0..categories.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut taken = Vec::new();
    for i in order {
        let cats = &categories[i];
        if cats.is_empty() || cats.iter().any(|c| counts.get(c.as_str()).copied().unwrap_or(0) >= cap) {
            continue;
        }
        for c in cats {
            *counts.entry(c.as_str()).or_default() += 1;
        }
        taken.push(i);
    }
    taken.sort_unstable();
    Ok(taken)
}
