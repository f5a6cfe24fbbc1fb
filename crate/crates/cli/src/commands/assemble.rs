use std::io::Write;
use std::path::Path;

use anyhow::Result;
use vocot_core::sequence::{assemble, assemble_instruction, render_training_text};

use super::Outcome;
use crate::config::Config;
use crate::manifest::{ManifestBuilder, RunManifest};
use crate::records::{TrainingRecord, VisualRefOut, VoCoTInstructRecord};
use crate::stream;

pub fn run(cfg: &Config, records: &Path, out: &Path, with_prompt: bool) -> Result<RunManifest> {
    let mut m = ManifestBuilder::new("assemble", cfg);
    m.input("records", records).output("sequences", out);
    let grid = cfg.grid;

    let mut writer = stream::create(out)?;
    let mut visual_tokens: usize = 0;
    let map = |_: usize, line: &str| -> Outcome<(TrainingRecord, usize)> {
        let rec: VoCoTInstructRecord = serde_json::from_str(line).map_err(|_| "bad-json")?;
        let thought = rec.grounded_thought(cfg.precision).map_err(|_| "invalid-record")?;
        let seq = assemble(&thought, grid, cfg.precision);
        let rendered = render_training_text(&seq);
        let prompt_text = with_prompt.then(|| {
            render_training_text(&assemble_instruction(Some(grid.len()), &rec.question, true, grid)).text
        });
        let out = TrainingRecord {
            id: rec.id,
            image: rec.image,
            sequence_text: rendered.text,
            visual_refs: rendered.visual_refs.into_iter().map(|v| VisualRefOut { pos: v.pos, indices: v.indices }).collect(),
            grid: grid.into(),
            prompt_text,
        };
        Ok((out, seq.visual_token_count()))
    };
    stream::for_each_line(records, cfg.chunk_size, map, |outcome| {
        match outcome {
            Ok((rec, tokens)) => {
                stream::write_json_line(&mut writer, &rec)?;
                visual_tokens += tokens;
                m.kept();
            }
            Err(reason) => m.dropped(reason),
        }
        Ok(())
    })?;
    writer.flush()?;
    m.note("visual_ref_tokens", visual_tokens);
    m.finish()
}
