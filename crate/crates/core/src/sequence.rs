//! Interleaved VoCoT segment streams: text, `[c] ... [/c]` coordinate spans
//! and the visual references RefBind attaches to them.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{format_coords, parse_coords, refbind_indices, CoordParseError, PatchGrid, PatchSpan, Precision};
use crate::thought::{GroundedThought, ThoughtSegment};

pub const COORD_OPEN: &str = "[c]";
pub const COORD_CLOSE: &str = "[/c]";
pub const GROUNDING_TOKEN: &str = "<grounding>";
const OBJ_PREFIX: &str = "<obj_";
const IMAGE_PREFIX: &str = "<image:";
const COT_TRIGGER: &str =
    "Answer the question and include the reasoning proess. Locate key objects and provide bounding boxes in your thoughts.";

/// Instruction appended to a question to request grounded reasoning.
pub fn cot_trigger_text() -> &'static str {
    COT_TRIGGER
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenSegment {
    Text(String),
    ImageSlot(usize),
    CoordOpen,
    CoordText(String),
    CoordClose,
    VisualRef(PatchSpan),
    GroundingTrigger,
    CoTTrigger,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SequenceError {
    #[error("segment {0}: grounding trigger is only allowed first")]
    MisplacedGrounding(usize),
    #[error("segment {0}: coordinate span opened inside another span")]
    NestedOpen(usize),
    #[error("segment {0}: coordinate close without open")]
    CloseWithoutOpen(usize),
    #[error("segment {0}: coordinate text outside a span")]
    StrayCoordText(usize),
    #[error("segment {0}: coordinate span needs exactly one coordinate text")]
    CoordTextCount(usize),
    #[error("segment {0}: visual reference must directly follow a coordinate close")]
    StrayVisualRef(usize),
    #[error("segment {0}: visual reference does not fit the grid")]
    VisualRefOffGrid(usize),
    #[error("segment {0}: {1} not allowed inside a coordinate span")]
    InsideSpan(usize, &'static str),
    #[error("segment {0}: text segments must be non-empty and not adjacent")]
    NonCanonicalText(usize),
    #[error("segment {0}: image slot needs at least one patch")]
    EmptyImageSlot(usize),
    #[error("coordinate span left open")]
    Unterminated,
}

/// Ordered segment list on a patch grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoCoTSequence {
    segments: Vec<TokenSegment>,
    grid: PatchGrid,
}

/// Checks segment ordering: one coordinate text per span, visual references
/// only right after a close, grounding only first, no empty or adjacent text.
pub fn check_well_formed(segments: &[TokenSegment], grid: PatchGrid) -> Result<(), SequenceError> {
    // None outside a span; Some(n) inside with n coordinate texts seen.
    let mut open: Option<usize> = None;
    let mut prev: Option<&TokenSegment> = None;
    for (i, seg) in segments.iter().enumerate() {
        match seg {
            TokenSegment::CoordOpen if open.is_some() => return Err(SequenceError::NestedOpen(i)),
            TokenSegment::CoordOpen => open = Some(0),
            TokenSegment::CoordText(_) => match open {
                None => return Err(SequenceError::StrayCoordText(i)),
                Some(n) => open = Some(n + 1),
            },
            TokenSegment::CoordClose => match open.take() {
                None => return Err(SequenceError::CloseWithoutOpen(i)),
                Some(1) => {}
                Some(_) => return Err(SequenceError::CoordTextCount(i)),
            },
            _ if open.is_some() => {
                let what = match seg {
                    TokenSegment::Text(_) => "text",
                    TokenSegment::ImageSlot(_) => "image slot",
                    TokenSegment::VisualRef(_) => "visual reference",
                    TokenSegment::GroundingTrigger => "grounding trigger",
                    _ => "CoT trigger",
                };
                return Err(SequenceError::InsideSpan(i, what));
            }
            TokenSegment::VisualRef(span) => {
                if !matches!(prev, Some(TokenSegment::CoordClose)) {
                    return Err(SequenceError::StrayVisualRef(i));
                }
                if PatchSpan::from_indices(span.indices(), grid).as_ref() != Ok(span) {
                    return Err(SequenceError::VisualRefOffGrid(i));
                }
            }
            TokenSegment::GroundingTrigger if i != 0 => return Err(SequenceError::MisplacedGrounding(i)),
            TokenSegment::Text(t) => {
                if t.is_empty() || matches!(prev, Some(TokenSegment::Text(_))) {
                    return Err(SequenceError::NonCanonicalText(i));
                }
            }
            TokenSegment::ImageSlot(0) => return Err(SequenceError::EmptyImageSlot(i)),
            _ => {}
        }
        prev = Some(seg);
    }
    if open.is_some() {
        return Err(SequenceError::Unterminated);
    }
    Ok(())
}

impl VoCoTSequence {
    pub fn new(segments: Vec<TokenSegment>, grid: PatchGrid) -> Result<Self, SequenceError> {
        check_well_formed(&segments, grid)?;
        Ok(Self { segments, grid })
    }

    pub fn empty(grid: PatchGrid) -> Self {
        Self { segments: Vec::new(), grid }
    }

    pub fn segments(&self) -> &[TokenSegment] {
        &self.segments
    }

    pub fn grid(&self) -> PatchGrid {
        self.grid
    }

    pub fn into_segments(self) -> Vec<TokenSegment> {
        self.segments
    }

    pub fn visual_refs(&self) -> impl Iterator<Item = &PatchSpan> {
        self.segments.iter().filter_map(|s| match s {
            TokenSegment::VisualRef(span) => Some(span),
            _ => None,
        })
    }

    /// Patch tokens from image slots plus every visual reference.
    pub fn visual_token_count(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                TokenSegment::VisualRef(span) => span.len(),
                TokenSegment::ImageSlot(n) => *n,
                _ => 0,
            })
            .sum()
    }

    fn push_text(&mut self, text: &str) {
        if text.is_empty() {
            return;
        }
        if let Some(TokenSegment::Text(last)) = self.segments.last_mut() {
            last.push_str(text);
        } else {
            self.segments.push(TokenSegment::Text(text.to_string()));
        }
    }

    fn push_mention(&mut self, name: &str, coords: String) {
        if !name.is_empty() {
            self.push_text(name);
            self.push_text(" ");
        }
        // Bind on what the model will actually see: the formatted numbers.
        let span = parse_coords(&coords).map(|b| refbind_indices(&b, self.grid));
        self.segments.push(TokenSegment::CoordOpen);
        self.segments.push(TokenSegment::CoordText(coords));
        self.segments.push(TokenSegment::CoordClose);
        if let Ok(span) = span {
            self.segments.push(TokenSegment::VisualRef(span));
        }
    }

    /// Appends `other`, merging a text boundary.
    pub fn extend(&mut self, other: VoCoTSequence) -> Result<(), SequenceError> {
        if other.grid != self.grid {
            return Err(SequenceError::VisualRefOffGrid(self.segments.len()));
        }
        for seg in other.segments {
            match seg {
                TokenSegment::Text(t) => self.push_text(&t),
                TokenSegment::GroundingTrigger if !self.segments.is_empty() => {
                    return Err(SequenceError::MisplacedGrounding(self.segments.len()))
                }
                s => self.segments.push(s),
            }
        }
        Ok(())
    }
}

/// Converts a grounded thought into segments. Each mention becomes its name,
/// a coordinate span, and the RefBind patches of the formatted box.
pub fn assemble(thought: &GroundedThought, grid: PatchGrid, precision: Precision) -> VoCoTSequence {
    let mut seq = VoCoTSequence::empty(grid);
    for seg in thought.segments() {
        match seg {
            ThoughtSegment::Text { text } => seq.push_text(text),
            ThoughtSegment::Mention { name, bbox } => seq.push_mention(name, format_coords(bbox, precision)),
        }
    }
    seq
}

/// Optional image slot, the question, and optionally the CoT trigger after
/// it, separated by a space.
pub fn assemble_instruction(image_patches: Option<usize>, question: &str, with_cot: bool, grid: PatchGrid) -> VoCoTSequence {
    let mut seq = VoCoTSequence::empty(grid);
    if let Some(n) = image_patches.filter(|&n| n > 0) {
        seq.segments.push(TokenSegment::ImageSlot(n));
    }
    seq.push_text(question);
    if with_cot {
        if !question.is_empty() {
            seq.push_text(" ");
        }
        seq.segments.push(TokenSegment::CoTTrigger);
    }
    seq
}

/// Output of the incremental activator.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationEvent {
    VisualRef(PatchSpan),
    /// Coordinate text that failed to parse; no patches are attached.
    Malformed { text: String, error: CoordParseError },
}

/// Mirrors inference-time RefBind: watches a segment stream and, at every
/// coordinate close, binds the preceding coordinate text to patches.
#[derive(Debug, Clone)]
pub struct RefBindActivator {
    grid: PatchGrid,
    open: Option<Option<String>>,
    position: usize,
}

impl RefBindActivator {
    pub fn new(grid: PatchGrid) -> Self {
        Self { grid, open: None, position: 0 }
    }

    pub fn feed(&mut self, seg: &TokenSegment) -> Result<Option<ActivationEvent>, SequenceError> {
        let at = self.position;
        self.position += 1;
        match (seg, &mut self.open) {
            (TokenSegment::CoordOpen, Some(_)) => Err(SequenceError::NestedOpen(at)),
            (TokenSegment::CoordOpen, None) => {
                self.open = Some(None);
                Ok(None)
            }
            (TokenSegment::CoordText(_), None) => Err(SequenceError::StrayCoordText(at)),
            (TokenSegment::CoordText(t), Some(buf)) => {
                buf.get_or_insert_with(String::new).push_str(t);
                Ok(None)
            }
            (TokenSegment::CoordClose, None) => Err(SequenceError::CloseWithoutOpen(at)),
            (TokenSegment::CoordClose, Some(buf)) => {
                let text = buf.take().unwrap_or_default();
                self.open = None;
                Ok(Some(match parse_coords(&text) {
                    Ok(b) => ActivationEvent::VisualRef(refbind_indices(&b, self.grid)),
                    Err(error) => ActivationEvent::Malformed { text, error },
                }))
            }
            _ => Ok(None),
        }
    }

    /// Errors if a span is still open.
    pub fn finish(self) -> Result<(), SequenceError> {
        match self.open {
            Some(_) => Err(SequenceError::Unterminated),
            None => Ok(()),
        }
    }
}

/// Runs an activator over a whole stream.
pub fn activate_refbind<'a>(
    stream: impl IntoIterator<Item = &'a TokenSegment>,
    grid: PatchGrid,
) -> Result<Vec<ActivationEvent>, SequenceError> {
    let mut act = RefBindActivator::new(grid);
    let mut events = Vec::new();
    for seg in stream {
        events.extend(act.feed(seg)?);
    }
    act.finish()?;
    Ok(events)
}

/// Side-band record of one `<obj_i:count>` marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualRefEntry {
    /// Byte offset of the marker in the rendered text.
    pub pos: usize,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedSequence {
    pub text: String,
    pub visual_refs: Vec<VisualRefEntry>,
}

// Text that could be mistaken for markup gets a backslash in front.
const RESERVED: [&str; 7] = ["\\", COORD_OPEN, COORD_CLOSE, OBJ_PREFIX, GROUNDING_TOKEN, IMAGE_PREFIX, COT_TRIGGER];

fn escape_into(out: &mut String, text: &str) {
    let mut i = 0;
    while let Some(c) = text[i..].chars().next() {
        if RESERVED.iter().any(|r| text[i..].starts_with(r)) {
            out.push('\\');
        }
        out.push(c);
        i += c.len_utf8();
    }
}

/// Canonical training text. Coordinate spans render as `[c] text [/c]`, a
/// visual reference as ` <obj_i:count>` with its indices in the side band.
pub fn render_training_text(seq: &VoCoTSequence) -> RenderedSequence {
    let mut text = String::new();
    let mut visual_refs = Vec::new();
    for seg in &seq.segments {
        match seg {
            TokenSegment::Text(t) => escape_into(&mut text, t),
            TokenSegment::ImageSlot(n) => text.push_str(&format!("{IMAGE_PREFIX}{n}>")),
            TokenSegment::CoordOpen => text.push_str("[c] "),
            TokenSegment::CoordText(t) => escape_into(&mut text, t),
            TokenSegment::CoordClose => text.push_str(" [/c]"),
            TokenSegment::VisualRef(span) => {
                text.push(' ');
                let pos = text.len();
                text.push_str(&format!("{OBJ_PREFIX}{}:{}>", visual_refs.len(), span.len()));
                visual_refs.push(VisualRefEntry { pos, indices: span.indices().to_vec() });
            }
            TokenSegment::GroundingTrigger => text.push_str(GROUNDING_TOKEN),
            TokenSegment::CoTTrigger => text.push_str(COT_TRIGGER),
        }
    }
    RenderedSequence { text, visual_refs }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrainingTextError {
    #[error("byte {0}: backslash not followed by a reserved token")]
    BadEscape(usize),
    #[error("byte {0}: malformed marker")]
    BadMarker(usize),
    #[error("byte {0}: coordinate span must be written as \"[c] text [/c]\"")]
    BadSpan(usize),
    #[error("byte {offset}: marker refers to side-band entry {index}, which is missing or inconsistent")]
    SideBand { offset: usize, index: usize },
    #[error("{0} side-band entries were never referenced")]
    UnusedSideBand(usize),
    #[error(transparent)]
    Structure(#[from] SequenceError),
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
}

impl Lexer<'_> {
    fn rest(&self) -> &str {
        &self.text[self.pos..]
    }

    fn at_markup(&self) -> bool {
        RESERVED[1..].iter().any(|r| self.rest().starts_with(r))
    }

    /// Unescaped literal up to the next markup token or end of input.
    fn literal(&mut self) -> Result<String, TrainingTextError> {
        let mut out = String::new();
        while let Some(c) = self.rest().chars().next() {
            if c == '\\' {
                // Only the renderer's escapes are accepted, so text has one spelling.
                let start = self.pos;
                self.pos += 1;
                let reserved = RESERVED.iter().find(|r| self.rest().starts_with(*r)).ok_or(TrainingTextError::BadEscape(start))?;
                let next = reserved.chars().next().unwrap();
                out.push(next);
                self.pos += next.len_utf8();
            } else if self.at_markup() {
                break;
            } else {
                out.push(c);
                self.pos += c.len_utf8();
            }
        }
        Ok(out)
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    /// Digits terminated by `end`.
    fn number_until(&mut self, end: char) -> Option<usize> {
        let digits = self.rest().find(|c: char| !c.is_ascii_digit())?;
        if digits == 0 || !self.rest()[digits..].starts_with(end) {
            return None;
        }
        let n = self.rest()[..digits].parse().ok()?;
        self.pos += digits + end.len_utf8();
        Some(n)
    }
}

/// Inverse of [`render_training_text`].
pub fn parse_training_text(
    text: &str,
    visual_refs: &[VisualRefEntry],
    grid: PatchGrid,
) -> Result<VoCoTSequence, TrainingTextError> {
    let mut lx = Lexer { text, pos: 0 };
    let mut segments = Vec::new();
    let mut used = 0;
    while lx.pos < text.len() {
        let start = lx.pos;
        if lx.eat(COORD_OPEN) {
            let body = lx.literal()?;
            let inner = body.strip_prefix(' ').and_then(|b| b.strip_suffix(' '));
            let inner = match inner {
                Some(inner) if lx.eat(COORD_CLOSE) => inner,
                _ => return Err(TrainingTextError::BadSpan(start)),
            };
            segments.extend([TokenSegment::CoordOpen, TokenSegment::CoordText(inner.to_string()), TokenSegment::CoordClose]);
            if lx.rest().starts_with(" <obj_") {
                lx.pos += 1;
                let marker = lx.pos;
                lx.pos += OBJ_PREFIX.len();
                let index = lx.number_until(':').ok_or(TrainingTextError::BadMarker(marker))?;
                let count = lx.number_until('>').ok_or(TrainingTextError::BadMarker(marker))?;
                let bad = TrainingTextError::SideBand { offset: marker, index };
                let entry = visual_refs.get(index).filter(|e| index == used && e.pos == marker && e.indices.len() == count);
                let entry = entry.ok_or(bad.clone())?;
                let span = PatchSpan::from_indices(&entry.indices, grid).map_err(|_| bad)?;
                segments.push(TokenSegment::VisualRef(span));
                used += 1;
            }
        } else if lx.eat(GROUNDING_TOKEN) {
            segments.push(TokenSegment::GroundingTrigger);
        } else if lx.eat(COT_TRIGGER) {
            segments.push(TokenSegment::CoTTrigger);
        } else if lx.eat(IMAGE_PREFIX) {
            let n = lx.number_until('>').ok_or(TrainingTextError::BadMarker(start))?;
            segments.push(TokenSegment::ImageSlot(n));
        } else if lx.rest().starts_with(COORD_CLOSE) {
            return Err(SequenceError::CloseWithoutOpen(segments.len()).into());
        } else if lx.rest().starts_with(OBJ_PREFIX) {
            return Err(SequenceError::StrayVisualRef(segments.len()).into());
        } else {
            segments.push(TokenSegment::Text(lx.literal()?));
        }
    }
    if used != visual_refs.len() {
        return Err(TrainingTextError::UnusedSideBand(visual_refs.len() - used));
    }
    Ok(VoCoTSequence::new(segments, grid)?)
}

impl fmt::Display for VoCoTSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_training_text(self).text)
    }
}
