use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use anyhow::Result;
use vocot_core::geometry::normalize_box;
use vocot_core::program::{count_steps, tally_unknown_ops};
use vocot_core::synthesis::SourceType;
use vocot_core::verbalizer::{build_thought, SceneGraph, SceneObject, UnknownOpPolicy, VerbalizeError};
use vocot_core::{parse_program, PixelBox};

use super::Outcome;
use crate::config::Config;
use crate::manifest::{ManifestBuilder, RunManifest};
use crate::records::{GqaQuestion, GqaScene, VoCoTInstructRecord};
use crate::stream;

#[derive(Debug, Default)]
struct SceneTally {
    clamped: usize,
    invalid: usize,
    duplicates: usize,
}

fn scene_graph(scene: &GqaScene, tally: &mut SceneTally) -> SceneGraph {
    let mut objects = Vec::with_capacity(scene.objects.len());
    for (id, o) in &scene.objects {
        let px = PixelBox { x: o.x, y: o.y, w: o.w, h: o.h, image_width: scene.width, image_height: scene.height };
        match normalize_box(&px) {
            Ok(bbox) if !o.name.trim().is_empty() => {
                if px.overflows() {
                    tally.clamped += 1;
                }
                objects.push(SceneObject { object_id: id.clone(), name: o.name.clone(), bbox });
            }
            _ => tally.invalid += 1,
        }
    }
    // Ids are map keys and names were checked, so construction cannot fail.
    SceneGraph::new(scene.image_id.clone(), objects).expect("unique ids and non-empty names")
}

fn drop_code(e: &VerbalizeError) -> &'static str {
    match e {
        VerbalizeError::GroundingMiss { .. } => "grounding-miss",
        VerbalizeError::UnknownOp { .. } => "unknown-op",
        VerbalizeError::MissingArgument { .. } => "missing-argument",
    }
}

struct Line {
    record: Outcome<VoCoTInstructRecord>,
    unknown_ops: BTreeMap<String, usize>,
}

pub fn run(cfg: &Config, questions: &Path, scenes: &Path, out: &Path) -> Result<RunManifest> {
    let mut m = ManifestBuilder::new("verbalize-gqa", cfg);
    m.input("questions", questions).input("scenes", scenes).output("records", out);

    let mut tally = SceneTally::default();
    let mut graphs: HashMap<String, SceneGraph> = HashMap::new();
    for scene in stream::read_all::<GqaScene>(scenes)? {
        if graphs.contains_key(&scene.image_id) {
            tally.duplicates += 1;
            continue;
        }
        let g = scene_graph(&scene, &mut tally);
        graphs.insert(scene.image_id, g);
    }

    let policy = if cfg.verbalizer.skip_unknown_ops { UnknownOpPolicy::Skip } else { UnknownOpPolicy::Reject };
    let mut writer = stream::create(out)?;
    let mut unknown_ops: BTreeMap<String, usize> = BTreeMap::new();
    let map = |_: usize, line: &str| -> Line {
        let mut unknown = BTreeMap::new();
        let record = (|| {
            let q: GqaQuestion = serde_json::from_str(line).map_err(|_| "bad-json")?;
            let scene = graphs.get(&q.image_id).ok_or("missing-scene")?;
            let program = parse_program(&q.semantic_str).map_err(|_| "bad-program")?;
            tally_unknown_ops(&program, &mut unknown);
            let built = build_thought(&program, scene, &q.full_answer, &q.answer, cfg.precision, policy)
                .map_err(|e| drop_code(&e))?;
            Ok(VoCoTInstructRecord {
                id: q.question_id,
                image: cfg.image_template.replace("{image_id}", &q.image_id),
                question: q.question,
                thought: built.thought.render(),
                answer: q.answer,
                source_type: SourceType::Gqa,
                program_steps: Some(count_steps(&program)),
            })
        })();
        Line { record, unknown_ops: unknown }
    };
    stream::for_each_line(questions, cfg.chunk_size, map, |line| {
        for (op, n) in line.unknown_ops {
            *unknown_ops.entry(op).or_default() += n;
        }
        match line.record {
            Ok(rec) => {
                stream::write_json_line(&mut writer, &rec)?;
                m.kept();
            }
            Err(reason) => m.dropped(reason),
        }
        Ok(())
    })?;
    writer.flush()?;

    m.note("scenes", graphs.len());
    m.note("clamped_objects", tally.clamped);
    m.note("invalid_objects", tally.invalid);
    m.note("duplicate_scenes", tally.duplicates);
    m.note("unknown_ops", unknown_ops);
    m.finish()
}
