//! On-disk record shapes.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use serde::{Deserialize, Deserializer, Serialize};
use vocot_core::synthesis::SourceType;
use vocot_core::{GroundedThought, Precision};

/// Ids arrive as strings in GQA but as numbers in many derived files.
fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        N(serde_json::Number),
    }
    Ok(match Id::deserialize(d)? {
        Id::S(s) => s,
        Id::N(n) => n.to_string(),
    })
}

/// One grounded chain-of-thought training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoCoTInstructRecord {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    pub image: String,
    pub question: String,
    pub thought: String,
    pub answer: String,
    pub source_type: SourceType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program_steps: Option<usize>,
}

impl VoCoTInstructRecord {
    /// Parses the thought and checks the fields every source type must carry.
    pub fn grounded_thought(&self, precision: Precision) -> Result<GroundedThought> {
        if self.question.trim().is_empty() {
            bail!("record {} has no question", self.id);
        }
        if self.answer.trim().is_empty() {
            bail!("record {} has no answer", self.id);
        }
        if self.source_type == SourceType::Gqa && self.program_steps.is_none_or(|s| s == 0) {
            bail!("GQA record {} has no program step count", self.id);
        }
        Ok(GroundedThought::parse(&self.thought, precision)?)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct GqaQuestion {
    #[serde(alias = "questionId", deserialize_with = "string_or_number")]
    pub question_id: String,
    #[serde(rename = "imageId", alias = "image_id", deserialize_with = "string_or_number")]
    pub image_id: String,
    pub question: String,
    pub answer: String,
    #[serde(rename = "fullAnswer", alias = "full_answer")]
    pub full_answer: String,
    #[serde(rename = "semanticStr", alias = "semantic_str")]
    pub semantic_str: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GqaObject {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GqaScene {
    #[serde(rename = "imageId", alias = "image_id", deserialize_with = "string_or_number")]
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    pub objects: BTreeMap<String, GqaObject>,
}

/// Raw model output for one synthesis request.
#[derive(Debug, Clone, Deserialize)]
pub struct ResponseLine {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    #[serde(default)]
    pub image: Option<String>,
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualRefOut {
    pub pos: usize,
    pub indices: Vec<usize>,
}

/// Assembled training sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub id: String,
    pub image: String,
    pub sequence_text: String,
    pub visual_refs: Vec<VisualRefOut>,
    pub grid: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_text: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_validation() {
        let mut r = VoCoTInstructRecord {
            id: "1".into(),
            image: "1.jpg".into(),
            question: "q".into(),
            thought: "The cat [0.1, 0.1, 0.2, 0.2] sits.".into(),
            answer: "a".into(),
            source_type: SourceType::ImageOnly,
            program_steps: None,
        };
        assert_eq!(r.grounded_thought(Precision::TWO).unwrap().mention_count(), 1);
        r.source_type = SourceType::Gqa;
        assert!(r.grounded_thought(Precision::TWO).is_err());
        r.program_steps = Some(2);
        r.thought = "bad [0.5, 0.5, 0.1, 0.1]".into();
        assert!(r.grounded_thought(Precision::TWO).is_err());
    }

    #[test]
    fn numeric_ids() {
        let q: GqaQuestion = serde_json::from_str(
            r#"{"question_id": 201, "imageId": "n1", "question": "q", "answer": "a", "fullAnswer": "f", "semanticStr": "select: x"}"#,
        )
        .unwrap();
        assert_eq!(q.question_id, "201");
        let r: VoCoTInstructRecord = serde_json::from_str(
            r#"{"id": 7, "image": "i", "question": "q", "thought": "t", "answer": "a", "source_type": 2}"#,
        )
        .unwrap();
        assert_eq!(r.id, "7");
        assert!(serde_json::from_str::<VoCoTInstructRecord>(
            r#"{"id": 7, "image": "i", "question": "q", "thought": "t", "answer": "a", "source_type": 4}"#
        )
        .is_err());
    }
}
