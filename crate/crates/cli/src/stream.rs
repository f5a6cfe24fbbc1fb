//! Chunked JSON Lines processing: a chunk of lines is mapped in parallel,
//! then handed to a sequential sink in input order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::with_capacity(1 << 16, f))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::with_capacity(1 << 16, f))
}

/// Maps every non-blank line of `path` through `map` (1-based line numbers)
/// and feeds results to `sink` in file order. Returns the number of lines
/// processed.
pub fn for_each_line<T, M, S>(path: &Path, chunk_size: usize, map: M, mut sink: S) -> Result<usize>
where
    T: Send,
    M: Fn(usize, &str) -> T + Sync,
    S: FnMut(T) -> Result<()>,
{
    let mut reader = open(path)?;
    let mut chunk: Vec<(usize, String)> = Vec::with_capacity(chunk_size);
    let mut line_no = 0;
    let mut seen = 0;
    loop {
        let mut line = String::new();
        let n = reader.read_line(&mut line).with_context(|| format!("reading {} line {}", path.display(), line_no + 1))?;
        if n > 0 {
            line_no += 1;
            if !line.trim().is_empty() {
                chunk.push((line_no, line));
            }
        }
        if chunk.len() >= chunk_size || (n == 0 && !chunk.is_empty()) {
            seen += chunk.len();
            let out: Vec<T> = chunk.par_iter().map(|(no, l)| map(*no, l.trim_end_matches(['\n', '\r']))).collect();
            chunk.clear();
            for item in out {
                sink(item)?;
            }
        }
        if n == 0 {
            return Ok(seen);
        }
    }
}

/// Writes one JSON value per line.
pub fn write_json_line<W: Write, T: serde::Serialize>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Reads a whole JSON Lines file into memory. For side tables (scene
/// graphs, gold labels, synthesis requests) that must be joined by key.
pub fn read_all<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = open(path)?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.with_context(|| format!("reading {} line {}", path.display(), i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(out)
}
