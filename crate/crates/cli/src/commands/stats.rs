use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::Result;
use serde::Serialize;

use super::Outcome;
use crate::config::{Config, TypeMix};
use crate::manifest::{ManifestBuilder, RunManifest};
use crate::records::VoCoTInstructRecord;
use crate::stream;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CorpusStats {
    pub records: usize,
    pub by_source_type: BTreeMap<u8, usize>,
    /// Program step counts; records without one are not binned.
    pub steps: BTreeMap<usize, usize>,
    /// Grounded mentions per thought.
    pub boxes: BTreeMap<usize, usize>,
    pub reference_mix: TypeMix,
}

pub fn run(cfg: &Config, records: &Path, out: Option<&Path>) -> Result<RunManifest> {
    let mut m = ManifestBuilder::new("stats", cfg);
    m.input("records", records);
    if let Some(o) = out {
        m.output("stats", o);
    }
    let mut stats = CorpusStats { reference_mix: cfg.synthesis.type_mix, ..Default::default() };
    let map = |_: usize, line: &str| -> Outcome<(u8, Option<usize>, usize)> {
        let rec: VoCoTInstructRecord = serde_json::from_str(line).map_err(|_| "bad-json")?;
        let thought = rec.grounded_thought(cfg.precision).map_err(|_| "invalid-record")?;
        Ok((rec.source_type.into(), rec.program_steps, thought.mention_count()))
    };
    stream::for_each_line(records, cfg.chunk_size, map, |outcome| {
        match outcome {
            Ok((source, steps, boxes)) => {
                stats.records += 1;
                *stats.by_source_type.entry(source).or_default() += 1;
                if let Some(s) = steps {
                    *stats.steps.entry(s).or_default() += 1;
                }
                *stats.boxes.entry(boxes).or_default() += 1;
                m.kept();
            }
            Err(reason) => m.dropped(reason),
        }
        Ok(())
    })?;
    let json = serde_json::to_string_pretty(&stats)?;
    match out {
        Some(path) => {
            let mut w = stream::create(path)?;
            writeln!(w, "{json}")?;
            w.flush()?;
        }
        None => println!("{json}"),
    }
    m.finish()
}
