//! Input generators shared by the property suites and the acceptance run.

#![allow(dead_code)]

use proptest::prelude::*;
use vocot_core::program::{Operation, SemanticStep};
use vocot_core::{BoundingBox, GroundedThought, PatchGrid, Precision, SemanticProgram};

pub fn precision() -> impl Strategy<Value = Precision> {
    prop_oneof![Just(Precision::TWO), Just(Precision::THREE)]
}

pub fn any_box() -> impl Strategy<Value = BoundingBox> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, b, c, d)| {
        BoundingBox::new(a.min(c), b.min(d), a.max(c), b.max(d)).unwrap()
    })
}

/// Box whose coordinates are exactly representable at `p` decimals.
pub fn box_at(p: Precision) -> impl Strategy<Value = BoundingBox> {
    let scale = 10i64.pow(p.places() as u32);
    (0..=scale, 0..=scale, 0..=scale, 0..=scale).prop_map(move |(a, b, c, d)| {
        let f = |k: i64| k as f64 / scale as f64;
        BoundingBox::new(f(a.min(c)), f(b.min(d)), f(a.max(c)), f(b.max(d))).unwrap()
    })
}

pub fn filler() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "Find the ", " and the ", ". Then check the ", ", so the ", " next to a ", " is left of the ", "! Is the ",
        " (see) ", "; ", " [c] marker-like [/c] text with the ", " <obj_9:9> \\ <grounding> <image:3> then the ",
    ])
    .prop_map(str::to_string)
}

pub fn name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_'-]{0,8}"
}

pub fn thought(p: Precision) -> impl Strategy<Value = GroundedThought> {
    (filler(), prop::collection::vec((name(), box_at(p), filler()), 0..6)).prop_map(move |(lead, parts)| {
        let mut t = GroundedThought::new(p);
        t.push_text(&lead);
        for (n, b, tail) in parts {
            t.push_mention(&n, b);
            t.push_text(&tail);
        }
        t
    })
}

pub fn precision_and_thought() -> impl Strategy<Value = GroundedThought> {
    precision().prop_flat_map(thought)
}

pub fn step(index: usize) -> impl Strategy<Value = SemanticStep> {
    let op = prop_oneof![
        prop::sample::select(vec![
            Operation::Select, Operation::Relate, Operation::Verify, Operation::Exist, Operation::Choose,
            Operation::Common, Operation::Same, Operation::Different, Operation::And, Operation::Or,
        ]),
        prop::sample::select(vec!["query", "filter", "verify_rel", "choose_attr"]).prop_map(|n| Operation::Unknown(n.into())),
    ];
    let arg = "[a-z_][a-z_ ]{0,10}[a-z_]|[a-z]";
    let refs = if index == 0 {
        Just(Vec::new()).boxed()
    } else {
        prop::collection::vec(0..index, 0..3).boxed()
    };
    (op, prop::collection::vec(arg, 0..5), refs, prop::collection::vec("[0-9]{1,7}", 0..3), any::<bool>()).prop_map(
        |(op, args, refs, object_ids, query_marker)| SemanticStep { op, args, refs, object_ids, query_marker },
    )
}

pub fn program() -> impl Strategy<Value = SemanticProgram> {
    (1..8usize).prop_flat_map(|n| {
        (0..n).map(step).collect::<Vec<_>>().prop_map(|steps| SemanticProgram::from_steps(steps).unwrap())
    })
}

pub fn sorted_pair<T: PartialOrd + Copy>(a: T, b: T) -> (T, T) {
    if a <= b { (a, b) } else { (b, a) }
}

pub fn lattice_box() -> impl Strategy<Value = [i64; 4]> {
    (0..=1000i64, 0..=1000i64, 0..=1000i64, 0..=1000i64).prop_map(|(a, b, c, d)| {
        let (x0, x1) = sorted_pair(a, c);
        let (y0, y1) = sorted_pair(b, d);
        [x0, y0, x1, y1]
    })
}

pub fn float_box() -> impl Strategy<Value = [f64; 4]> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, b, c, d)| {
        let (x0, x1) = sorted_pair(a, c);
        let (y0, y1) = sorted_pair(b, d);
        [x0, y0, x1, y1]
    })
}

pub fn grid() -> impl Strategy<Value = PatchGrid> {
    (1..=32usize, 1..=32usize).prop_map(|(r, c)| PatchGrid::new(r, c).unwrap())
}

pub fn to_box(v: [f64; 4]) -> BoundingBox {
    BoundingBox::try_from(v).unwrap()
}
