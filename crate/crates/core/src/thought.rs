//! Reasoning text whose object mentions carry inline boxes, e.g.
//! `Find the shelf [0.224, 0.219, 0.386, 0.592].`

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{format_bracketed, scan_bracketed_boxes, BoundingBox, CoordParseError, Precision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThoughtSegment {
    Text { text: String },
    Mention { name: String, bbox: BoundingBox },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("malformed box in thought at byte {offset}: {source}")]
pub struct ThoughtParseError {
    pub offset: usize,
    pub source: CoordParseError,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundedThought {
    segments: Vec<ThoughtSegment>,
    precision: Precision,
}

impl GroundedThought {
    pub fn new(precision: Precision) -> Self {
        Self { segments: Vec::new(), precision }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn segments(&self) -> &[ThoughtSegment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Appends text, merging with a preceding text segment.
    pub fn push_text(&mut self, text: &str) {
        if text.is_empty() {
            return;
        }
        if let Some(ThoughtSegment::Text { text: last }) = self.segments.last_mut() {
            last.push_str(text);
        } else {
            self.segments.push(ThoughtSegment::Text { text: text.to_string() });
        }
    }

    pub fn push_mention(&mut self, name: &str, bbox: BoundingBox) {
        self.segments.push(ThoughtSegment::Mention { name: name.to_string(), bbox });
    }

    pub fn append(&mut self, other: GroundedThought) {
        for seg in other.segments {
            match seg {
                ThoughtSegment::Text { text } => self.push_text(&text),
                m => self.segments.push(m),
            }
        }
    }

    /// Appends `other` after a single separating space.
    pub fn append_sentence(&mut self, other: GroundedThought) {
        if other.is_empty() {
            return;
        }
        if !self.is_empty() {
            self.push_text(" ");
        }
        self.append(other);
    }

    pub fn boxes(&self) -> impl Iterator<Item = &BoundingBox> {
        self.segments.iter().filter_map(|s| match s {
            ThoughtSegment::Mention { bbox, .. } => Some(bbox),
            ThoughtSegment::Text { .. } => None,
        })
    }

    pub fn mention_count(&self) -> usize {
        self.boxes().count()
    }

    /// Canonical text: each mention becomes `name [x1, y1, x2, y2]`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                ThoughtSegment::Text { text } => out.push_str(text),
                ThoughtSegment::Mention { name, bbox } => {
                    if !name.is_empty() {
                        out.push_str(name);
                        out.push(' ');
                    }
                    out.push_str(&format_bracketed(bbox, self.precision));
                }
            }
        }
        out
    }

    /// Recovers mentions from rendered text. The mention name is the word
    /// directly before each box; whitespace between the two is dropped.
    pub fn parse(text: &str, precision: Precision) -> Result<Self, ThoughtParseError> {
        let mut thought = GroundedThought::new(precision);
        let mut cursor = 0;
        for cand in scan_bracketed_boxes(text) {
            let bbox = cand.parsed.map_err(|source| ThoughtParseError { offset: cand.start, source })?;
            let before = text[cursor..cand.start].trim_end();
            let name_start = before
                .char_indices()
                .rev()
                .take_while(|(_, c)| c.is_alphanumeric() || matches!(c, '-' | '_' | '\''))
                .last()
                .map_or(before.len(), |(i, _)| i);
            thought.push_text(&before[..name_start]);
            thought.push_mention(&before[name_start..], bbox);
            cursor = cand.end;
        }
        thought.push_text(&text[cursor..]);
        Ok(thought)
    }
}

impl fmt::Display for GroundedThought {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
