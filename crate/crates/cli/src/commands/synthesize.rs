use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use vocot_core::synthesis::{
    balanced_sample, screen_response, ErrorPatternFilter, ScreenConfig, SourceType, SynthesisError, SynthesisRequest,
};

use super::Outcome;
use crate::config::Config;
use crate::manifest::{ManifestBuilder, RunManifest};
use crate::records::{ResponseLine, VoCoTInstructRecord};
use crate::stream;

fn source_for(mode: u8) -> Result<SourceType> {
    match mode {
        2 => Ok(SourceType::VqaBased),
        3 => Ok(SourceType::ImageOnly),
        other => bail!("synthesis mode must be 2 or 3, got {other}"),
    }
}

fn target_count(cfg: &Config, source: SourceType) -> usize {
    match source {
        SourceType::Gqa => cfg.synthesis.type_mix.gqa,
        SourceType::VqaBased => cfg.synthesis.type_mix.vqa_based,
        SourceType::ImageOnly => cfg.synthesis.type_mix.image_only,
    }
}

#[derive(Serialize)]
struct PayloadLine {
    id: String,
    image: String,
    source_type: SourceType,
    messages: Value,
}

#[derive(Deserialize)]
struct CategoriesOnly {
    #[serde(default)]
    categories: BTreeSet<String>,
}

/// Line numbers chosen by balanced sampling, or `None` when sampling is off.
fn sampled_lines(cfg: &Config, requests: &Path) -> Result<Option<HashSet<usize>>> {
    let Some(cap) = cfg.synthesis.per_category_cap else {
        return Ok(None);
    };
    let mut lines = Vec::new();
    let mut cats = Vec::new();
    stream::for_each_line(
        requests,
        cfg.chunk_size,
        |no, l| serde_json::from_str::<CategoriesOnly>(l).ok().map(|c| (no, c.categories)),
        |item| {
            if let Some((no, c)) = item {
                lines.push(no);
                cats.push(c);
            }
            Ok(())
        },
    )?;
    let picked = balanced_sample(&cats, cap, cfg.seed)?;
    Ok(Some(picked.into_iter().map(|i| lines[i]).collect()))
}

fn payload_drop(e: &SynthesisError) -> &'static str {
    match e {
        SynthesisError::NoObjects => "no-objects",
        SynthesisError::EmptyField(_) => "missing-qa",
        _ => "bad-request",
    }
}

pub fn payloads(cfg: &Config, requests: &Path, mode: u8, out: &Path) -> Result<RunManifest> {
    let source = source_for(mode)?;
    let mut m = ManifestBuilder::new("synthesize payloads", cfg);
    m.input("requests", requests).output("payloads", out);
    let selected = sampled_lines(cfg, requests)?;
    let precision = cfg.synthesis.precision;
    let exemplar = &cfg.synthesis.exemplar_image;

    let mut writer = stream::create(out)?;
    let map = |no: usize, line: &str| -> Outcome<PayloadLine> {
        let req: SynthesisRequest = serde_json::from_str(line).map_err(|_| "bad-json")?;
        if selected.as_ref().is_some_and(|s| !s.contains(&no)) {
            return Err("not-sampled");
        }
        let mut payload = req.payload(source, precision).map_err(|e| payload_drop(&e))?;
        payload.in_context.image_ref = exemplar.clone();
        Ok(PayloadLine { id: req.id, image: req.image, source_type: source, messages: payload.messages() })
    };
    stream::for_each_line(requests, cfg.chunk_size, map, |outcome| {
        match outcome {
            Ok(p) => {
                stream::write_json_line(&mut writer, &p)?;
                m.kept();
            }
            Err(reason) => m.dropped(reason),
        }
        Ok(())
    })?;
    writer.flush()?;
    m.note("source_type", source);
    m.note("balanced_sampling_cap", cfg.synthesis.per_category_cap);
    m.note("target_count", target_count(cfg, source));
    m.finish()
}

pub fn ingest(cfg: &Config, requests: &Path, responses: &Path, mode: u8, out: &Path) -> Result<RunManifest> {
    let source = source_for(mode)?;
    let mut m = ManifestBuilder::new("synthesize ingest", cfg);
    m.input("requests", requests).input("responses", responses).output("records", out);

    let mut by_id: HashMap<String, SynthesisRequest> = HashMap::new();
    for req in stream::read_all::<SynthesisRequest>(requests)? {
        by_id.entry(req.id.clone()).or_insert(req);
    }
    let screen = ScreenConfig {
        tolerance: cfg.synthesis.box_tolerance,
        precision: cfg.synthesis.precision,
        patterns: ErrorPatternFilter::new(&cfg.synthesis.error_patterns),
    };

    let mut writer = stream::create(out)?;
    let map = |_: usize, line: &str| -> Outcome<VoCoTInstructRecord> {
        let resp: ResponseLine = serde_json::from_str(line).map_err(|_| "bad-json")?;
        let req = by_id.get(&resp.id).ok_or("unknown-request")?;
        let rec = screen_response(&resp.raw_response, req, source, &screen).map_err(|r| r.code())?;
        let question = rec.question.filter(|q| !q.trim().is_empty()).ok_or("missing-qa")?;
        if rec.answer.trim().is_empty() {
            return Err("missing-qa");
        }
        Ok(VoCoTInstructRecord {
            id: rec.id,
            image: rec.image,
            question,
            thought: rec.thought.render(),
            answer: rec.answer,
            source_type: source,
            program_steps: None,
        })
    };
    let mut seen: HashSet<String> = HashSet::new();
    stream::for_each_line(responses, cfg.chunk_size, map, |outcome| {
        match outcome {
            Ok(rec) if !seen.insert(rec.id.clone()) => m.dropped("duplicate-response"),
            Ok(rec) => {
                stream::write_json_line(&mut writer, &rec)?;
                m.kept();
            }
            Err(reason) => m.dropped(reason),
        }
        Ok(())
    })?;
    writer.flush()?;
    let kept = m.counts().output;
    m.note("source_type", source);
    m.note("kept_after_filtering", kept);
    m.note("target_count", target_count(cfg, source));
    m.finish()
}
