use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::ValueEnum;
use serde::Deserialize;
use serde_json::json;
use vocot_core::filters::{
    filter_grounded_caption, filter_interleaved, filter_small_region, DropReason, FilterTally, GroundedCaptionMeta,
    InterleavedDocMeta, Verdict,
};
use vocot_core::PixelBox;

use crate::config::Config;
use crate::manifest::{ManifestBuilder, RunManifest};
use crate::stream;
use crate::FilterKind;

#[derive(Deserialize)]
struct RegionMeta {
    id: String,
    #[serde(flatten)]
    region: PixelBox,
}

fn judge(cfg: &Config, kind: FilterKind, line: &str) -> (Option<String>, Verdict) {
    let f = &cfg.filters;
    let malformed = (None, Verdict::Drop(DropReason::Malformed));
    match kind {
        FilterKind::Mmc4 => match serde_json::from_str::<InterleavedDocMeta>(line) {
            Ok(d) => {
                let v = filter_interleaved(&d, f);
                (Some(d.id), v)
            }
            Err(_) => malformed,
        },
        FilterKind::Grit => match serde_json::from_str::<GroundedCaptionMeta>(line) {
            Ok(c) => {
                let v = filter_grounded_caption(&c, f);
                (Some(c.id), v)
            }
            Err(_) => malformed,
        },
        FilterKind::VgRegion => match serde_json::from_str::<RegionMeta>(line) {
            Ok(r) => (Some(r.id), filter_small_region(&r.region, f)),
            Err(_) => malformed,
        },
    }
}

pub fn run(cfg: &Config, kind: FilterKind, input: &Path, out: &Path, histogram: Option<&Path>) -> Result<RunManifest> {
    let hist_path = histogram.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".hist.json");
        PathBuf::from(p)
    });
    let mut m = ManifestBuilder::new("filter", cfg);
    m.input("metadata", input).output("kept_ids", out).output("histogram", &hist_path);

    let mut writer = stream::create(out)?;
    let mut tally = FilterTally::default();
    stream::for_each_line(input, cfg.chunk_size, |_, line| judge(cfg, kind, line), |(id, verdict)| {
        tally.record(verdict);
        match (verdict, id) {
            (Verdict::Keep, Some(id)) => {
                writeln!(writer, "{id}")?;
                m.kept();
            }
            (Verdict::Drop(r), _) => m.dropped(r.code()),
            (Verdict::Keep, None) => m.dropped(DropReason::Malformed.code()),
        }
        Ok(())
    })?;
    writer.flush()?;

    let mut hw = stream::create(&hist_path)?;
    serde_json::to_writer_pretty(&mut hw, &json!({ "kept": tally.kept, "dropped": tally.histogram() }))?;
    hw.write_all(b"\n")?;
    hw.flush()?;
    m.note("kind", kind.to_possible_value().map(|v| v.get_name().to_string()));
    m.finish()
}
