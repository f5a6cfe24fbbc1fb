use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use sha2::{Digest, Sha256};
use vocot_core::synthesis::{
    balanced_sample, build_type2_payload, build_type3_payload, screen_response, validate_boxes, ErrorPatternFilter,
    ObjectEntry, ObjectInfo, RejectReason, ScreenConfig, SourceType, SynthesisRequest, DEFAULT_ERROR_PATTERNS,
    TYPE2_SYSTEM, TYPE3_SYSTEM,
};
use vocot_core::{BoundingBox, GroundedThought, Precision};

fn sha256(s: &str) -> String {
    Sha256::digest(s.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn system_prompts_are_byte_stable() {
    assert_eq!(sha256(TYPE2_SYSTEM), "3d25768b8b32468c0ec671bfcd10a847571d5a23502354e527791dc08bb28e58");
    assert_eq!(sha256(TYPE3_SYSTEM), "4c93f663318ce8c3bb03784212f147a5579d7700e2e48fc6431ae541b449d6a5");
    assert!(TYPE2_SYSTEM.ends_with(r#"Your response should follow the following format: {"Thought":""}"#));
    assert!(TYPE3_SYSTEM.starts_with("You are an excellent image describer and question-answer generator"));
}

#[test]
fn exemplar_exchanges_are_verbatim() {
    let objects = ObjectInfo::new(vec![ObjectEntry { label: "Cat".into(), bbox: BoundingBox::FULL }]).unwrap();
    let p2 = build_type2_payload(&objects, "q", "a", "cat.jpg", Precision::TWO).unwrap();
    let p3 = build_type3_payload(&objects, "cat.jpg", Precision::TWO).unwrap();
    assert_eq!(sha256(&p2.in_context.assistant_text), "271ba6d26e4b8fd833095b0b51f820ca77862c4165e14a97bd1fe5281a46ec6e");
    assert_eq!(sha256(&p3.in_context.assistant_text), "c79abcc586781633ea7d8950e7eefc1abcb53581b40c9aeae8daf27f1ae42776");
    assert!(p2.in_context.assistant_text.starts_with(r#"{"thought": "From the picture, you can see two cups of coffee"#));
    assert!(p3.in_context.user_text.starts_with("[IMAGE1]:[Object Info]: Coffee1: [0.04, 0.25, 0.20, 0.28], Bean:"));
    let messages = p3.messages();
    assert_eq!(messages[0]["role"], "system");
    assert_eq!(messages[2]["role"], "assistant");
    assert_eq!(messages[3]["content"][0]["text"], "[IMAGE1]:[Object Info]: Cat: [0.00, 0.00, 1.00, 1.00]");
}

fn category_sets() -> impl Strategy<Value = Vec<BTreeSet<String>>> {
    let cat = prop::sample::select(vec!["a", "b", "c", "d", "e"]).prop_map(str::to_string);
    prop::collection::vec(prop::collection::btree_set(cat, 0..4), 0..40)
}

proptest! {
    #[test]
    fn balanced_sample_respects_cap(records in category_sets(), cap in 1..5usize, seed in any::<u64>()) {
        let picked = balanced_sample(&records, cap, seed).unwrap();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for &i in &picked {
            for c in &records[i] {
                *counts.entry(c.as_str()).or_default() += 1;
            }
        }
        prop_assert!(counts.values().all(|&n| n <= cap));
        prop_assert!(picked.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(picked, balanced_sample(&records, cap, seed).unwrap());
    }

    #[test]
    fn zero_tolerance_accepts_only_exact_copies(
        boxes in prop::collection::vec((0..=100i64, 0..=100i64, 0..=100i64, 0..=100i64), 1..6),
        nudge in prop::option::of((0..4usize, 1..=3i64)),
    ) {
        let to_box = |(a, b, c, d): (i64, i64, i64, i64)| {
            let f = |k: i64| k as f64 / 100.0;
            BoundingBox::new(f(a.min(c)), f(b.min(d)), f(a.max(c)), f(b.max(d))).unwrap()
        };
        let objects = ObjectInfo::new(
            boxes.iter().enumerate().map(|(i, b)| ObjectEntry { label: format!("o{i}"), bbox: to_box(*b) }).collect(),
        ).unwrap();
        let mut target = objects.entries()[0].bbox.to_array();
        if let Some((coord, steps)) = nudge {
            let moved = target[coord] + steps as f64 / 1000.0;
            target[coord] = if moved <= 1.0 { moved } else { target[coord] - steps as f64 / 1000.0 };
        }
        let Ok(target) = BoundingBox::try_from(target) else { return Ok(()) };
        let mut thought = GroundedThought::new(Precision::THREE);
        thought.push_mention("o0", target);
        let exact = objects.entries().iter().any(|e| e.bbox == target);
        prop_assert_eq!(validate_boxes(&thought, &objects, 0.0).is_empty(), exact);
    }
}

#[test]
fn survivors_are_clean() {
    let request = SynthesisRequest {
        id: "x".into(),
        image: "x.jpg".into(),
        objects: ObjectInfo::parse("Dog: [0.10, 0.20, 0.50, 0.60], Ball: [0.60, 0.60, 0.70, 0.70]").unwrap(),
        question: None,
        answer: None,
        categories: BTreeSet::new(),
    };
    let responses = [
        r#"{"question": "q?", "answer": "a.", "Thought": "The dog [0.10, 0.20, 0.50, 0.60] chases the ball [0.60, 0.60, 0.70, 0.70]."}"#,
        r#"{"question": "q?", "answer": "a.", "Thought": "From the object information provided, the dog [0.10, 0.20, 0.50, 0.60] runs."}"#,
        r#"{"question": "q?", "answer": "a.", "Thought": "The cat [0.11, 0.11, 0.2, 0.2] hides."}"#,
        r#"{"question": "q?", "answer": "a.", "Thought": "The dog [0.104, 0.20, 0.50, 0.60] sits."}"#,
    ];
    let cfg = ScreenConfig { precision: Precision::THREE, ..Default::default() };
    let outcomes: Vec<_> = responses.iter().map(|r| screen_response(r, &request, SourceType::ImageOnly, &cfg)).collect();
    assert!(outcomes[0].is_ok() && outcomes[3].is_ok());
    assert!(matches!(outcomes[1], Err(RejectReason::ErrorPattern(_))));
    assert!(matches!(outcomes[2], Err(RejectReason::UnmatchedBoxes(_))));
    let filter = ErrorPatternFilter::default();
    for rec in outcomes.iter().flatten() {
        let text = rec.thought.render();
        assert!(filter.matched(&text).is_none());
        assert!(DEFAULT_ERROR_PATTERNS.iter().all(|p| !text.to_lowercase().contains(&p.to_lowercase())));
        assert!(validate_boxes(&rec.thought, &request.objects, 0.005).is_empty());
    }
}
