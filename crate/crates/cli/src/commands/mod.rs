pub mod assemble;
pub mod eval;
pub mod filter;
pub mod stats;
pub mod synthesize;
pub mod verbalize;

/// Per-line result: a value to emit or the reason it was dropped.
pub(crate) type Outcome<T> = Result<T, &'static str>;
