//! Rule-based conversion of a semantic program plus scene graph into a
//! grounded reasoning thought.
//!
//! Each known operation has one fixed sentence template. Object slots are
//! filled with the scene object's name followed by its box. The template
//! wording (including "It exist" and "The question ask") is kept exactly as
//! the rule table writes it.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::geometry::{BoundingBox, Precision};
use crate::program::{Operation, SemanticProgram, SemanticStep};
use crate::text::PhraseMatcher;
use crate::thought::GroundedThought;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub object_id: String,
    pub name: String,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SceneError {
    #[error("duplicate object id {0:?}")]
    DuplicateId(String),
    #[error("object {0:?} has an empty name")]
    EmptyName(String),
}

#[derive(Debug, Clone)]
pub struct SceneGraph {
    image_id: String,
    objects: Vec<SceneObject>,
    by_name: HashMap<String, Vec<usize>>,
    by_id: HashMap<String, usize>,
}

impl SceneGraph {
    /// Object names are lowercased and trimmed.
    pub fn new(image_id: impl Into<String>, objects: Vec<SceneObject>) -> Result<Self, SceneError> {
        let mut by_name: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_id = HashMap::new();
        let mut objects = objects;
        for (i, obj) in objects.iter_mut().enumerate() {
            obj.name = obj.name.trim().to_lowercase();
            if obj.name.is_empty() {
                return Err(SceneError::EmptyName(obj.object_id.clone()));
            }
            if by_id.insert(obj.object_id.clone(), i).is_some() {
                return Err(SceneError::DuplicateId(obj.object_id.clone()));
            }
            by_name.entry(obj.name.clone()).or_default().push(i);
        }
        Ok(Self { image_id: image_id.into(), objects, by_name, by_id })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn get(&self, index: usize) -> &SceneObject {
        &self.objects[index]
    }

    pub fn index_of_id(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// All objects with this name, in scene order.
    pub fn indices_named(&self, name: &str) -> &[usize] {
        self.by_name.get(&name.trim().to_lowercase()).map_or(&[], Vec::as_slice)
    }

    /// Largest-area object with this name; ties go to the earliest.
    pub fn largest_named(&self, name: &str) -> Option<usize> {
        self.indices_named(name).iter().copied().fold(None, |best, i| match best {
            Some(b) if self.objects[b].bbox.area() >= self.objects[i].bbox.area() => Some(b),
            _ => Some(i),
        })
    }

    fn names(&self) -> impl Iterator<Item = &String> {
        self.by_name.keys()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerbalizeError {
    #[error("step {step}: no scene object for {name:?}")]
    GroundingMiss { step: usize, name: String },
    #[error("step {step}: operation {op:?} has no verbalization rule")]
    UnknownOp { step: usize, op: String },
    #[error("step {step}: missing argument {what}")]
    MissingArgument { step: usize, what: &'static str },
}

/// Per-step object bindings: the scene object each earlier step resolved to.
pub type Bindings = [Option<usize>];

/// Where a step sits in its program.
#[derive(Debug, Clone, Copy)]
pub struct StepPosition {
    pub index: usize,
    pub terminal: bool,
}

fn is_placeholder(name: &str) -> bool {
    matches!(name.trim(), "" | "_" | "?")
}

/// Resolves an object slot: parenthesized object id, then the named object
/// (preferring the one bound by the referenced step), then whatever the
/// referenced step bound.
fn resolve(
    scene: &SceneGraph,
    step: &SemanticStep,
    pos: StepPosition,
    name: Option<&str>,
    id_slot: Option<usize>,
    ref_slot: Option<usize>,
    bindings: &Bindings,
) -> Result<usize, VerbalizeError> {
    if let Some(i) = id_slot.and_then(|k| step.object_ids.get(k)).and_then(|id| scene.index_of_id(id)) {
        return Ok(i);
    }
    let bound = ref_slot
        .and_then(|k| step.refs.get(k))
        .and_then(|&r| bindings.get(r).copied().flatten());
    if let Some(n) = name.filter(|n| !is_placeholder(n)) {
        let wanted = n.trim().to_lowercase();
        let named = bound.filter(|&i| scene.get(i).name == wanted).or_else(|| scene.largest_named(n));
        if let Some(i) = named {
            return Ok(i);
        }
    }
    bound.ok_or_else(|| VerbalizeError::GroundingMiss { step: pos.index, name: name.unwrap_or("_").to_string() })
}

fn required<'a>(step: &'a SemanticStep, i: usize, pos: StepPosition, what: &'static str) -> Result<&'a str, VerbalizeError> {
    step.arg(i).ok_or(VerbalizeError::MissingArgument { step: pos.index, what })
}

/// Result of verbalizing one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub thought: GroundedThought,
    /// Scene object this step selects, for later steps to reference.
    pub binding: Option<usize>,
}

pub fn verbalize_step(
    step: &SemanticStep,
    pos: StepPosition,
    scene: &SceneGraph,
    bindings: &Bindings,
    precision: Precision,
) -> Result<Clause, VerbalizeError> {
    let mut t = GroundedThought::new(precision);
    let mention = |t: &mut GroundedThought, idx: usize| {
        let obj = scene.get(idx);
        t.push_mention(&obj.name, obj.bbox);
    };
    let fixed = |text: &str| {
        let mut t = GroundedThought::new(precision);
        t.push_text(text);
        Clause { thought: t, binding: None }
    };

    match &step.op {
        Operation::Select => {
            let obj = resolve(scene, step, pos, step.arg(0), Some(0), None, bindings)?;
            t.push_text("Find the ");
            mention(&mut t, obj);
            t.push_text(".");
            Ok(Clause { thought: t, binding: Some(obj) })
        }
        Operation::Relate => {
            let subject = resolve(scene, step, pos, step.arg(0), Some(0), None, bindings)?;
            let relation = required(step, 1, pos, "relation")?;
            let object = resolve(scene, step, pos, step.arg(2), None, Some(0), bindings)?;
            t.push_text("Check the ");
            mention(&mut t, subject);
            t.push_text(&format!(" that is {relation} the "));
            mention(&mut t, object);
            t.push_text(".");
            Ok(Clause { thought: t, binding: Some(subject) })
        }
        Operation::Verify => {
            let attribute = required(step, 0, pos, "attribute")?;
            let value = required(step, 1, pos, "value")?;
            let obj = resolve(scene, step, pos, step.arg(2), Some(0), Some(0), bindings)?;
            t.push_text(&format!("Verify if the {attribute} of the "));
            mention(&mut t, obj);
            t.push_text(&format!(" is {value}."));
            Ok(Clause { thought: t, binding: Some(obj) })
        }
        Operation::Exist => {
            let found = resolve(scene, step, pos, step.arg(0), Some(0), Some(0), bindings).ok();
            t.push_text(if found.is_some() { "It exist." } else { "It doesn't exist." });
            Ok(Clause { thought: t, binding: found })
        }
        Operation::Choose => {
            let obj1 = resolve(scene, step, pos, step.arg(0), Some(0), Some(0), bindings)?;
            let attribute = required(step, 1, pos, "attribute")?;
            let v1 = required(step, 2, pos, "first value")?;
            let v2 = required(step, 3, pos, "second value")?;
            t.push_text("Think the ");
            mention(&mut t, obj1);
            t.push_text(&format!("'s {attribute} is {v1} or {v2}"));
            let has_second = step.arg(4).is_some() || step.refs.len() > 1 || step.object_ids.len() > 1;
            if has_second {
                let obj2 = resolve(scene, step, pos, step.arg(4), Some(1), Some(1), bindings)?;
                t.push_text(" of the ");
                mention(&mut t, obj2);
            }
            t.push_text(".");
            Ok(Clause { thought: t, binding: Some(obj1) })
        }
        Operation::Common => Ok(fixed("The question ask the common attribute of the two objects.")),
        Operation::Same => {
            let attribute = required(step, 0, pos, "attribute")?;
            Ok(fixed(&if pos.terminal {
                format!("The question ask if the two objects has same {attribute}.")
            } else {
                format!("Check if they have same {attribute}.")
            }))
        }
        Operation::Different => {
            let attribute = required(step, 0, pos, "attribute")?;
            Ok(fixed(&format!("The question ask if the two objects has different {attribute}.")))
        }
        Operation::And => Ok(fixed("The question ask about 'and' relation.")),
        Operation::Or => Ok(fixed("The question ask about 'or' relation.")),
        Operation::Unknown(name) => Err(VerbalizeError::UnknownOp { step: pos.index, op: name.clone() }),
    }
}

/// Annotates every scene-object name in `full_answer` with its box. A
/// lowercase `the ` right before a name is dropped. For names with several
/// instances the first program-bound one wins, else the largest.
pub fn ground_answer(
    full_answer: &str,
    scene: &SceneGraph,
    bindings: &Bindings,
    precision: Precision,
) -> GroundedThought {
    let mut chosen: HashMap<&str, usize> = HashMap::new();
    for &i in bindings.iter().flatten() {
        chosen.entry(scene.get(i).name.as_str()).or_insert(i);
    }
    let mut names: Vec<&String> = scene.names().collect();
    names.sort();
    let matcher = PhraseMatcher::new(names.into_iter().map(|n| {
        let idx = chosen.get(n.as_str()).copied().or_else(|| scene.largest_named(n));
        (n.clone(), idx)
    }));

    let mut t = GroundedThought::new(precision);
    let mut cursor = 0;
    for m in matcher.find_all(full_answer) {
        let Some(idx) = *m.value else { continue };
        let mut text_end = m.start;
        if full_answer[cursor..m.start].ends_with("the ") {
            let before = &full_answer[..m.start - 4];
            if before.chars().next_back().is_none_or(|c| !c.is_alphanumeric()) {
                text_end = m.start - 4;
            }
        }
        t.push_text(&full_answer[cursor..text_end]);
        t.push_mention(&full_answer[m.start..m.end], scene.get(idx).bbox);
        cursor = m.end;
    }
    t.push_text(&full_answer[cursor..]);
    t
}

/// Outcome of verbalizing a whole program.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltThought {
    pub thought: GroundedThought,
    pub bindings: Vec<Option<usize>>,
    /// Steps skipped because their operation has no rule.
    pub skipped_unknown: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownOpPolicy {
    /// Fail with [`VerbalizeError::UnknownOp`] so the sample is dropped.
    #[default]
    Reject,
    /// Emit no clause for the step and carry on.
    Skip,
}

/// Step clauses in order, then the grounded full answer, then
/// `So answer is {answer}.`, separated by single spaces.
pub fn build_thought(
    program: &SemanticProgram,
    scene: &SceneGraph,
    full_answer: &str,
    answer: &str,
    precision: Precision,
    policy: UnknownOpPolicy,
) -> Result<BuiltThought, VerbalizeError> {
    let steps = program.steps();
    let mut bindings: Vec<Option<usize>> = Vec::with_capacity(steps.len());
    let mut thought = GroundedThought::new(precision);
    let mut skipped_unknown = 0;
    for (i, step) in steps.iter().enumerate() {
        let pos = StepPosition { index: i, terminal: i + 1 == steps.len() };
        match verbalize_step(step, pos, scene, &bindings, precision) {
            Ok(clause) => {
                thought.append_sentence(clause.thought);
                bindings.push(clause.binding);
            }
            Err(VerbalizeError::UnknownOp { .. }) if policy == UnknownOpPolicy::Skip => {
                skipped_unknown += 1;
                bindings.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let full_answer = full_answer.trim();
    if !full_answer.is_empty() {
        thought.append_sentence(ground_answer(full_answer, scene, &bindings, precision));
    }
    let answer = answer.trim().trim_end_matches('.').trim_end();
    let mut closing = GroundedThought::new(precision);
    closing.push_text(&format!("So answer is {answer}."));
    thought.append_sentence(closing);
    Ok(BuiltThought { thought, bindings, skipped_unknown })
}

/// Boxes in `thought` that are not exactly some scene object's box.
pub fn foreign_boxes(thought: &GroundedThought, scene: &SceneGraph) -> Vec<BoundingBox> {
    let known: HashSet<[u64; 4]> = scene.objects().iter().map(|o| o.bbox.to_array().map(f64::to_bits)).collect();
    thought.boxes().filter(|b| !known.contains(&b.to_array().map(f64::to_bits))).copied().collect()
}
