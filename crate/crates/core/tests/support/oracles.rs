//! Reference implementations used to cross-check the library. They favour
//! exactness and obviousness over speed.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

/// Lattice step for generated boxes: coordinates are integer thousandths.
pub const LATTICE: i64 = 1000;

pub fn thousandths(k: i64) -> BigRational {
    BigRational::new(BigInt::from(k), BigInt::from(LATTICE))
}

pub fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite")
}

/// Cells of `n` equal parts touched by the closed interval `[lo, hi]`: a cell
/// counts when the interval overlaps its interior. A zero-width interval
/// takes the single cell containing it (the last cell for the right edge).
pub fn covered_cells(lo: &BigRational, hi: &BigRational, n: usize) -> Vec<usize> {
    let n_big = BigRational::from_integer(BigInt::from(n));
    if lo == hi {
        let cell = (lo * &n_big).floor().to_integer().to_usize().unwrap().min(n - 1);
        return vec![cell];
    }
    (0..n)
        .filter(|&c| {
            let left = BigRational::new(BigInt::from(c), BigInt::from(n));
            let right = BigRational::new(BigInt::from(c + 1), BigInt::from(n));
            lo < &right && hi > &left
        })
        .collect()
}

/// Brute-force RefBind: every (row, col) cell checked independently, flattened
/// row-major.
pub fn refbind_oracle(b: [&BigRational; 4], rows: usize, cols: usize) -> Vec<usize> {
    let xs = covered_cells(b[0], b[2], cols);
    let ys = covered_cells(b[1], b[3], rows);
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if ys.contains(&r) && xs.contains(&c) {
                out.push(r * cols + c);
            }
        }
    }
    out
}

/// Pixel columns of a 1000-pixel axis whose centres lie in `[lo, hi]`
/// (bounds in thousandths).
fn axis_pixels(lo: i64, hi: i64) -> Vec<bool> {
    (0..LATTICE).map(|i| {
        // Centre of pixel i is (2i + 1) / 2000.
        let centre2 = 2 * i + 1;
        2 * lo <= centre2 && centre2 <= 2 * hi
    }).collect()
}

/// IoU on a 1000x1000 raster of pixel centres. A pixel is inside a box iff
/// its row and its column are, so the pixel counts factor per axis; this is
/// the same count as visiting all 10^6 pixels.
pub fn raster_iou(a: [i64; 4], b: [i64; 4]) -> f64 {
    let (ax, ay) = (axis_pixels(a[0], a[2]), axis_pixels(a[1], a[3]));
    let (bx, by) = (axis_pixels(b[0], b[2]), axis_pixels(b[1], b[3]));
    let count = |v: &[bool]| v.iter().filter(|&&p| p).count() as u64;
    let both = |u: &[bool], v: &[bool]| u.iter().zip(v).filter(|(p, q)| **p && **q).count() as u64;
    let inter = both(&ax, &bx) * both(&ay, &by);
    let union = count(&ax) * count(&ay) + count(&bx) * count(&by) - inter;
    if union == 0 { 0.0 } else { inter as f64 / union as f64 }
}

/// Pixel-by-pixel version of [`raster_iou`], for spot checks.
pub fn raster_iou_full(a: [i64; 4], b: [i64; 4]) -> f64 {
    let inside = |bx: [i64; 4], i: i64, j: i64| {
        let (cx, cy) = (2 * i + 1, 2 * j + 1);
        2 * bx[0] <= cx && cx <= 2 * bx[2] && 2 * bx[1] <= cy && cy <= 2 * bx[3]
    };
    let (mut inter, mut union) = (0u64, 0u64);
    for j in 0..LATTICE {
        for i in 0..LATTICE {
            let (p, q) = (inside(a, i, j), inside(b, i, j));
            inter += u64::from(p && q);
            union += u64::from(p || q);
        }
    }
    if union.is_zero() { 0.0 } else { inter as f64 / union as f64 }
}

pub fn lattice_f64(b: [i64; 4]) -> [f64; 4] {
    b.map(|k| k as f64 / LATTICE as f64)
}
