//! Building blocks for visually grounded, object-centric chain-of-thought
//! data: normalized boxes and RefBind patch indexing, GQA program
//! verbalization, GPT-4V synthesis payloads and response hygiene,
//! interleaved `[c] ... [/c]` sequences, pre-training corpus filters and
//! grounded-output metrics.

pub mod eval;
pub mod filters;
pub mod geometry;
pub mod program;
pub mod sequence;
pub mod synthesis;
pub mod text;
pub mod thought;
pub mod verbalizer;

pub use geometry::{BoundingBox, PatchGrid, PatchSpan, PixelBox, Precision};
pub use program::{parse_program, SemanticProgram, SemanticStep};
pub use thought::{GroundedThought, ThoughtSegment};
