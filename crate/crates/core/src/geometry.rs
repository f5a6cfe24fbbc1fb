//! Normalized boxes, coordinate text, IoU and RefBind patch indexing.
//!
//! Every grounding coordinate in the toolkit is a [`BoundingBox`] with
//! corners expressed as fractions of the image width and height. Pixel
//! annotations enter through [`PixelBox`] and [`normalize_box`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Products `coord * cells` closer than this to an integer are treated as
/// landing exactly on a cell edge.
const EDGE_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid box [{0}, {1}, {2}, {3}]: corners must satisfy 0 <= min <= max <= 1")]
    InvalidBox(f64, f64, f64, f64),
    #[error("invalid pixel box: {0}")]
    InvalidPixelBox(String),
    #[error("invalid patch grid {rows}x{cols}: both sides must be >= 1")]
    InvalidGrid { rows: usize, cols: usize },
    #[error("invalid grid specification {0:?}, expected ROWSxCOLS")]
    GridSyntax(String),
    #[error("unsupported coordinate precision {0}, expected 2 or 3")]
    InvalidPrecision(u8),
    #[error("patch indices do not form a rectangle on the grid")]
    NotRectangular,
}

/// Axis-aligned box normalized to `[0, 1]` in both directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let ok = |lo: f64, hi: f64| (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi;
        if ok(x_min, x_max) && ok(y_min, y_max) {
            Ok(Self { x_min, y_min, x_max, y_max })
        } else {
            Err(GeometryError::InvalidBox(x_min, y_min, x_max, y_max))
        }
    }

    /// The whole image.
    pub const FULL: BoundingBox = BoundingBox { x_min: 0.0, y_min: 0.0, x_max: 1.0, y_max: 1.0 };

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_degenerate(&self) -> bool {
        self.x_min == self.x_max || self.y_min == self.y_max
    }

    /// True when `other` lies entirely inside `self` (edges may touch).
    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && other.x_max <= self.x_max
            && other.y_max <= self.y_max
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Largest per-coordinate absolute difference.
    pub fn max_deviation(&self, other: &BoundingBox) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = GeometryError;

    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

/// Pixel-space box in the GQA scene-graph convention (top-left corner plus
/// width and height) together with the size of its image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub image_width: f64,
    pub image_height: f64,
}

impl PixelBox {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let all = [self.x, self.y, self.w, self.h, self.image_width, self.image_height];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidPixelBox("non-finite value".into()));
        }
        if self.image_width <= 0.0 || self.image_height <= 0.0 {
            return Err(GeometryError::InvalidPixelBox(format!(
                "image dimensions {}x{} must be positive",
                self.image_width, self.image_height
            )));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(GeometryError::InvalidPixelBox(format!(
                "box size {}x{} must be positive",
                self.w, self.h
            )));
        }
        Ok(())
    }

    /// Whether any edge falls outside the image and will be clamped by
    /// [`normalize_box`].
    pub fn overflows(&self) -> bool {
        self.x < 0.0
            || self.y < 0.0
            || self.x + self.w > self.image_width
            || self.y + self.h > self.image_height
    }
}

pub fn normalize_box(p: &PixelBox) -> Result<BoundingBox, GeometryError> {
    p.validate()?;
    let clamp = |v: f64| v.clamp(0.0, 1.0);
    let x_min = clamp(p.x / p.image_width);
    let y_min = clamp(p.y / p.image_height);
    let x_max = clamp((p.x + p.w) / p.image_width);
    let y_max = clamp((p.y + p.h) / p.image_height);
    BoundingBox::new(x_min, y_min, x_max, y_max)
}

/// Inverse of [`normalize_box`] for boxes that were not clamped.
pub fn denormalize_box(b: &BoundingBox, image_width: f64, image_height: f64) -> PixelBox {
    PixelBox {
        x: b.x_min * image_width,
        y: b.y_min * image_height,
        w: b.width() * image_width,
        h: b.height() * image_height,
        image_width,
        image_height,
    }
}

/// Intersection over union. Two zero-area boxes have IoU 0.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Patch grid of the image encoder's feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 2]", into = "[usize; 2]")]
pub struct PatchGrid {
    rows: usize,
    cols: usize,
}

impl PatchGrid {
    pub fn new(rows: usize, cols: usize) -> Result<Self, GeometryError> {
        if rows == 0 || cols == 0 {
            return Err(GeometryError::InvalidGrid { rows, cols });
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// 336x336 input with 14-pixel patches.
impl Default for PatchGrid {
    fn default() -> Self {
        Self { rows: 24, cols: 24 }
    }
}

impl TryFrom<[usize; 2]> for PatchGrid {
    type Error = GeometryError;

    fn try_from(v: [usize; 2]) -> Result<Self, Self::Error> {
        PatchGrid::new(v[0], v[1])
    }
}

impl From<PatchGrid> for [usize; 2] {
    fn from(g: PatchGrid) -> Self {
        [g.rows, g.cols]
    }
}

impl FromStr for PatchGrid {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeometryError::GridSyntax(s.to_string());
        let (r, c) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let rows = r.trim().parse().map_err(|_| bad())?;
        let cols = c.trim().parse().map_err(|_| bad())?;
        PatchGrid::new(rows, cols)
    }
}

impl fmt::Display for PatchGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Rectangle of patches selected by RefBind, with its flattened row-major
/// indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatchSpan {
    row_lo: usize,
    row_hi: usize,
    col_lo: usize,
    col_hi: usize,
    indices: Vec<usize>,
}

impl PatchSpan {
    fn from_ranges(row_lo: usize, row_hi: usize, col_lo: usize, col_hi: usize, grid: PatchGrid) -> Self {
        let indices = (row_lo..=row_hi)
            .flat_map(|r| (col_lo..=col_hi).map(move |c| r * grid.cols + c))
            .collect();
        Self { row_lo, row_hi, col_lo, col_hi, indices }
    }

    /// Rebuilds a span from stored indices, checking that they are exactly a
    /// row-major rectangle on `grid`.
    pub fn from_indices(indices: &[usize], grid: PatchGrid) -> Result<Self, GeometryError> {
        let (&first, &last) = match (indices.first(), indices.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(GeometryError::NotRectangular),
        };
        if last >= grid.len() {
            return Err(GeometryError::NotRectangular);
        }
        let (row_lo, row_hi) = (first / grid.cols, last / grid.cols);
        let (col_lo, col_hi) = (first % grid.cols, last % grid.cols);
        if col_lo > col_hi {
            return Err(GeometryError::NotRectangular);
        }
        let span = Self::from_ranges(row_lo, row_hi, col_lo, col_hi, grid);
        if span.indices != indices {
            return Err(GeometryError::NotRectangular);
        }
        Ok(span)
    }

    pub fn rows(&self) -> (usize, usize) {
        (self.row_lo, self.row_hi)
    }

    pub fn cols(&self) -> (usize, usize) {
        (self.col_lo, self.col_hi)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn snapped(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < EDGE_SNAP {
        r
    } else {
        v
    }
}

/// Inclusive cover of `[lo, hi]` on `n` equal cells; degenerate intervals
/// collapse to the containing cell.
fn cover(lo: f64, hi: f64, n: usize) -> (usize, usize) {
    let scale = n as f64;
    let first = (snapped(lo * scale).floor() as usize).min(n - 1);
    let end = snapped(hi * scale).ceil() as usize;
    let last = end.saturating_sub(1).min(n - 1);
    if last < first {
        (first, first)
    } else {
        (first, last)
    }
}

/// Selects every patch whose cell interior the box touches. An edge that
/// lands exactly on a cell boundary does not pull in the neighbouring cell.
pub fn refbind_indices(b: &BoundingBox, grid: PatchGrid) -> PatchSpan {
    let (col_lo, col_hi) = cover(b.x_min, b.x_max, grid.cols);
    let (row_lo, row_hi) = cover(b.y_min, b.y_max, grid.rows);
    PatchSpan::from_ranges(row_lo, row_hi, col_lo, col_hi, grid)
}

/// Number of decimal places used when rendering coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Precision(u8);

impl Precision {
    pub const TWO: Precision = Precision(2);
    pub const THREE: Precision = Precision(3);

    pub fn new(places: u8) -> Result<Self, GeometryError> {
        match places {
            2 | 3 => Ok(Precision(places)),
            other => Err(GeometryError::InvalidPrecision(other)),
        }
    }

    pub fn places(&self) -> u8 {
        self.0
    }

    /// Largest rounding error a formatted coordinate can carry.
    pub fn half_ulp(&self) -> f64 {
        0.5 * 10f64.powi(-(self.0 as i32))
    }
}

impl Default for Precision {
    fn default() -> Self {
        Precision::THREE
    }
}

impl TryFrom<u8> for Precision {
    type Error = GeometryError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Precision::new(v)
    }
}

impl From<Precision> for u8 {
    fn from(p: Precision) -> Self {
        p.0
    }
}

/// Round-half-up on the shortest decimal representation of `v`.
fn fixed_half_up(v: f64, places: u8) -> String {
    let repr = format!("{v}");
    let (int_part, frac_part) = repr.split_once('.').unwrap_or((&repr, ""));
    let places = places as usize;
    let scale = 10u64.pow(places as u32);
    let mut scaled: u64 = int_part.parse::<u64>().unwrap_or(0) * scale;
    let kept: String = frac_part.chars().chain(std::iter::repeat('0')).take(places).collect();
    scaled += kept.parse::<u64>().unwrap_or(0);
    if frac_part.as_bytes().get(places).is_some_and(|d| *d >= b'5') {
        scaled += 1;
    }
    format!("{}.{:0width$}", scaled / scale, scaled % scale, width = places)
}

/// Renders `x_min, y_min, x_max, y_max` with fixed decimals.
pub fn format_coords(b: &BoundingBox, precision: Precision) -> String {
    b.to_array()
        .iter()
        .map(|&v| fixed_half_up(v, precision.0))
        .collect::<Vec<_>>()
        .join(", ")
}

/// `[x_min, y_min, x_max, y_max]`, the inline form used in grounded thoughts.
pub fn format_bracketed(b: &BoundingBox, precision: Precision) -> String {
    format!("[{}]", format_coords(b, precision))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoordErrorKind {
    ExpectedNumber,
    TooManyFractionDigits,
    ExpectedComma,
    UnbalancedBracket,
    TrailingInput,
    OutOfRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed coordinates at byte {offset}: {kind:?}")]
pub struct CoordParseError {
    pub offset: usize,
    pub kind: CoordErrorKind,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.bytes.get(self.pos) == Some(&b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err(&self, kind: CoordErrorKind) -> CoordParseError {
        CoordParseError { offset: self.pos, kind }
    }

    fn number(&mut self) -> Result<f64, CoordParseError> {
        let start = self.pos;
        let digits = |c: &mut Self| {
            let s = c.pos;
            while c.bytes.get(c.pos).is_some_and(u8::is_ascii_digit) {
                c.pos += 1;
            }
            c.pos - s
        };
        if digits(self) == 0 {
            return Err(CoordParseError { offset: start, kind: CoordErrorKind::ExpectedNumber });
        }
        if self.eat(b'.') {
            let frac_start = self.pos;
            match digits(self) {
                0 => return Err(self.err(CoordErrorKind::ExpectedNumber)),
                1..=3 => {}
                _ => {
                    return Err(CoordParseError {
                        offset: frac_start + 3,
                        kind: CoordErrorKind::TooManyFractionDigits,
                    })
                }
            }
        }
        // The slice holds only ASCII digits and at most one dot.
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii");
        text.parse().map_err(|_| CoordParseError { offset: start, kind: CoordErrorKind::ExpectedNumber })
    }
}

/// Parses four comma-separated decimals, optionally wrapped in brackets.
pub fn parse_coords(text: &str) -> Result<BoundingBox, CoordParseError> {
    let mut cur = Cursor { bytes: text.as_bytes(), pos: 0 };
    cur.skip_ws();
    let bracketed = cur.eat(b'[');
    let mut values = [0.0; 4];
    for (i, slot) in values.iter_mut().enumerate() {
        cur.skip_ws();
        if i > 0 {
            if !cur.eat(b',') {
                return Err(cur.err(CoordErrorKind::ExpectedComma));
            }
            cur.skip_ws();
        }
        *slot = cur.number()?;
    }
    cur.skip_ws();
    if bracketed && !cur.eat(b']') {
        return Err(cur.err(CoordErrorKind::UnbalancedBracket));
    }
    cur.skip_ws();
    if cur.pos != text.len() {
        let kind = if cur.bytes[cur.pos] == b',' {
            CoordErrorKind::TrailingInput
        } else if cur.bytes[cur.pos] == b']' {
            CoordErrorKind::UnbalancedBracket
        } else {
            CoordErrorKind::TrailingInput
        };
        return Err(cur.err(kind));
    }
    BoundingBox::try_from(values).map_err(|_| CoordParseError { offset: 0, kind: CoordErrorKind::OutOfRange })
}

/// A bracketed span in free text that looks like a coordinate tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxCandidate {
    /// Byte offset of the opening `[`.
    pub start: usize,
    /// Byte offset one past the closing `]`.
    pub end: usize,
    pub parsed: Result<BoundingBox, CoordParseError>,
}

fn looks_numeric(inner: &str) -> bool {
    inner.bytes().any(|b| b.is_ascii_digit())
        && inner
            .bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b',' | b'-' | b'+') || b.is_ascii_whitespace())
}

/// Finds every `[ ... ]` span whose contents consist of numbers, commas and
/// whitespace. Other bracketed text (`[c]`, `[IMAGE1]`) is ignored.
pub fn scan_bracketed_boxes(text: &str) -> Vec<BoxCandidate> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(rel) = text[from..].find('[') {
        let start = from + rel;
        let Some(close_rel) = text[start + 1..].find([']', '[']) else {
            break;
        };
        let close = start + 1 + close_rel;
        if text.as_bytes()[close] == b'[' {
            from = close;
            continue;
        }
        let inner = &text[start + 1..close];
        if looks_numeric(inner) {
            let parsed = parse_coords(&text[start..=close]);
            out.push(BoxCandidate { start, end: close + 1, parsed });
        }
        from = close + 1;
    }
    out
}
