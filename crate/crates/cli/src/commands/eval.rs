use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use vocot_core::eval::{
    accuracy_by_steps, chair_metrics, exact_match_yesno, mc_select, rec_accuracy, ChairReport, Lexicon, StepBin, YesNo,
};
use vocot_core::BoundingBox;

use crate::config::Config;
use crate::manifest::{ManifestBuilder, RunManifest};
use crate::stream;

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum GoldPayload {
    Rec {
        #[serde(rename = "box")]
        bbox: BoundingBox,
    },
    Mc {
        option: usize,
    },
    Yesno {
        answer: YesNo,
    },
    Chair {
        objects: BTreeSet<String>,
    },
}

impl GoldPayload {
    fn task(&self) -> &'static str {
        match self {
            GoldPayload::Rec { .. } => "rec",
            GoldPayload::Mc { .. } => "mc",
            GoldPayload::Yesno { .. } => "yesno",
            GoldPayload::Chair { .. } => "chair",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct GoldLine {
    pub id: String,
    #[serde(flatten)]
    pub payload: GoldPayload,
    #[serde(default)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PredictionLine {
    pub id: String,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub option_scores: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TaskReport {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Gold items without a usable prediction; scored as wrong.
    pub missing: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub no_box: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ChairSummary {
    pub metric: &'static str,
    pub captions: usize,
    pub mentions: usize,
    pub hallucinated: usize,
    pub grounded: usize,
    pub gold_objects: usize,
    /// Hallucinated mentions over all mentions, pooled over captions.
    pub chair: f64,
    /// Covered gold objects over all gold objects, pooled over captions.
    pub coverage: f64,
    pub mean_caption_chair: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub iou_threshold: f64,
    pub iou_inclusive: bool,
    pub tasks: BTreeMap<String, TaskReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chair: Option<ChairSummary>,
    pub steps: BTreeMap<usize, StepBin>,
    pub malformed_boxes: usize,
}

/// Result of scoring one prediction against its gold line.
#[derive(Debug, Clone)]
enum Scored {
    Correct(bool, Option<bool>, usize),
    Chair(Box<ChairReport>),
}

fn score(cfg: &Config, gold: &GoldPayload, pred: &PredictionLine, lexicon: &Lexicon) -> Result<Scored, &'static str> {
    let text = || pred.text.as_deref().ok_or("missing-text");
    Ok(match gold {
        GoldPayload::Rec { bbox } => {
            let r = rec_accuracy([(text()?, bbox)], cfg.eval.iou_threshold, cfg.eval.iou_inclusive)
                .map_err(|_| "bad-threshold")?;
            Scored::Correct(r.correct == 1, Some(r.no_box == 1), r.malformed)
        }
        GoldPayload::Mc { option } => {
            let scores = pred.option_scores.as_deref().ok_or("missing-scores")?;
            let pick = mc_select(scores).map_err(|_| "invalid-scores")?;
            Scored::Correct(pick == *option, None, 0)
        }
        GoldPayload::Yesno { answer } => Scored::Correct(exact_match_yesno(text()?, *answer), None, 0),
        GoldPayload::Chair { objects } => Scored::Chair(Box::new(chair_metrics(text()?, objects, lexicon))),
    })
}

fn read_lexicon(path: Option<&Path>) -> Result<Lexicon> {
    let Some(path) = path else {
        return Ok(Lexicon::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let raw: BTreeMap<String, BTreeSet<String>> =
        serde_json::from_str(&text).with_context(|| format!("parsing lexicon {}", path.display()))?;
    Ok(Lexicon::new(raw))
}

pub fn run(
    cfg: &Config,
    predictions: &Path,
    gold_path: &Path,
    out: &Path,
    csv: Option<&Path>,
    lexicon_path: Option<&Path>,
) -> Result<RunManifest> {
    let mut m = ManifestBuilder::new("eval", cfg);
    m.input("predictions", predictions).input("gold", gold_path).output("report", out);
    if let Some(c) = csv {
        m.output("step_csv", c);
    }
    let lexicon = read_lexicon(lexicon_path)?;
    let mut gold: BTreeMap<String, GoldLine> = BTreeMap::new();
    for g in stream::read_all::<GoldLine>(gold_path)? {
        gold.entry(g.id.clone()).or_insert(g);
    }

    let mut scored: BTreeMap<String, Scored> = BTreeMap::new();
    stream::for_each_line(
        predictions,
        cfg.chunk_size,
        |_, line| -> Result<(String, Scored), &'static str> {
            let p: PredictionLine = serde_json::from_str(line).map_err(|_| "bad-json")?;
            let g = gold.get(&p.id).ok_or("no-gold")?;
            Ok((p.id.clone(), score(cfg, &g.payload, &p, &lexicon)?))
        },
        |outcome| {
            match outcome {
                Ok((id, _)) if scored.contains_key(&id) => m.dropped("duplicate-prediction"),
                Ok((id, s)) => {
                    scored.insert(id, s);
                    m.kept();
                }
                Err(reason) => m.dropped(reason),
            }
            Ok(())
        },
    )?;

    let mut report = MetricReport {
        iou_threshold: cfg.eval.iou_threshold,
        iou_inclusive: cfg.eval.iou_inclusive,
        ..Default::default()
    };
    let mut step_records = Vec::new();
    let mut chair = ChairSummary { metric: "CHAIR-style", ..Default::default() };
    let mut caption_chair_sum = 0.0;
    for (id, g) in &gold {
        let task = report.tasks.entry(g.payload.task().to_string()).or_default();
        task.n += 1;
        match scored.get(id) {
            Some(Scored::Correct(ok, no_box, malformed)) => {
                task.correct += usize::from(*ok);
                if let Some(nb) = no_box {
                    *task.no_box.get_or_insert(0) += usize::from(*nb);
                }
                report.malformed_boxes += malformed;
                if let Some(s) = g.steps {
                    step_records.push((s, *ok));
                }
            }
            Some(Scored::Chair(c)) => {
                chair.captions += 1;
                chair.mentions += c.mentioned.len();
                chair.hallucinated += c.hallucinated;
                chair.grounded += c.grounded;
                caption_chair_sum += c.chair;
            }
            None => {
                task.missing += 1;
                if matches!(g.payload, GoldPayload::Rec { .. }) {
                    task.no_box.get_or_insert(0);
                }
                if let Some(s) = g.steps {
                    if !matches!(g.payload, GoldPayload::Chair { .. }) {
                        step_records.push((s, false));
                    }
                }
            }
        }
        if let GoldPayload::Chair { objects } = &g.payload {
            if scored.contains_key(id) {
                chair.gold_objects += objects.len();
            }
        }
    }
    for (name, t) in report.tasks.iter_mut() {
        if name == "chair" {
            t.correct = 0;
        }
        t.accuracy = if t.n == 0 { 0.0 } else { t.correct as f64 / t.n as f64 };
    }
    if chair.captions > 0 || report.tasks.contains_key("chair") {
        chair.chair = chair.hallucinated as f64 / chair.mentions.max(1) as f64;
        chair.coverage = chair.grounded as f64 / chair.gold_objects.max(1) as f64;
        chair.mean_caption_chair = caption_chair_sum / chair.captions.max(1) as f64;
        report.chair = Some(chair);
    }
    report.steps = accuracy_by_steps(step_records).map_err(|_| anyhow::anyhow!("gold step counts must be at least 1"))?;

    let mut w = stream::create(out)?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    w.write_all(b"\n")?;
    w.flush()?;
    if let Some(csv_path) = csv {
        let mut w = stream::create(csv_path)?;
        writeln!(w, "steps,n,correct,accuracy")?;
        for (s, b) in &report.steps {
            writeln!(w, "{s},{},{},{}", b.n, b.correct, b.accuracy)?;
        }
        w.flush()?;
    }
    print!("{}", summary_table(&report));
    m.note("gold_items", gold.len());
    m.finish()
}

/// Plain-text summary printed after a run.
pub fn summary_table(r: &MetricReport) -> String {
    let mut s = String::from("task      n  correct  accuracy  missing\n");
    for (name, t) in &r.tasks {
        if name == "chair" {
            continue;
        }
        s.push_str(&format!("{name:<6} {:>4} {:>8} {:>9.4} {:>8}\n", t.n, t.correct, t.accuracy, t.missing));
    }
    if let Some(c) = &r.chair {
        s.push_str(&format!(
            "{}: chair {:.4}, coverage {:.4} over {} captions\n",
            c.metric, c.chair, c.coverage, c.captions
        ));
    }
    for (steps, b) in &r.steps {
        s.push_str(&format!("steps {steps:>2}: {:.4} (n={})\n", b.accuracy, b.n));
    }
    s
}
