//! Properties checked on arbitrary input by the fuzz targets. Also replayed
//! over the checked-in seed corpus by the workspace tests.

use vocot_core::eval::{extract_boxes, normalize_yesno, strip_grounding};
use vocot_core::geometry::{format_coords, parse_coords};
use vocot_core::sequence::{parse_training_text, render_training_text, RefBindActivator, TokenSegment, VisualRefEntry};
use vocot_core::synthesis::{first_json_object, parse_synthesis_response, ObjectInfo, ResponseSchema};
use vocot_core::{parse_program, GroundedThought, PatchGrid, Precision};

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

pub fn coords(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(b) = parse_coords(s) {
        for p in [Precision::TWO, Precision::THREE] {
            let back = parse_coords(&format_coords(&b, p)).expect("formatted coordinates parse");
            assert!(b.max_deviation(&back) <= p.half_ulp() + 1e-12);
        }
    }
}

pub fn program(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(p) = parse_program(s) {
        let rendered = p.render();
        let back = parse_program(&rendered).expect("rendered program parses");
        assert_eq!(back, p);
        assert_eq!(back.render(), rendered);
    }
}

pub fn thought(data: &[u8]) {
    let Some(s) = text(data) else { return };
    for p in [Precision::TWO, Precision::THREE] {
        if let Ok(t) = GroundedThought::parse(s, p) {
            let rendered = t.render();
            let back = GroundedThought::parse(&rendered, p).expect("rendered thought parses");
            assert_eq!(back.render(), rendered);
        }
    }
}

pub fn synthesis_response(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Some(obj) = first_json_object(s) {
        assert!(s.contains(obj));
    }
    for schema in [ResponseSchema::ThoughtOnly, ResponseSchema::QuestionAnswerThought] {
        let _ = parse_synthesis_response(s, schema, Precision::TWO);
    }
    if let Ok(info) = ObjectInfo::parse(s) {
        let back = ObjectInfo::parse(&info.render(Precision::THREE)).expect("rendered object info parses");
        assert_eq!(back.len(), info.len());
    }
}

/// First line: JSON side-band of visual references. Rest: sequence text.
pub fn training_text(data: &[u8]) {
    let Some(s) = text(data) else { return };
    let (refs, body) = s.split_once('\n').unwrap_or(("[]", s));
    let Ok(refs) = serde_json::from_str::<Vec<VisualRefEntry>>(refs) else { return };
    for grid in [PatchGrid::default(), PatchGrid::new(3, 5).unwrap()] {
        if let Ok(seq) = parse_training_text(body, &refs, grid) {
            let rendered = render_training_text(&seq);
            assert_eq!(rendered.text, body);
            assert_eq!(rendered.visual_refs, refs);
        }
    }
}

pub fn eval_text(data: &[u8]) {
    let Some(s) = text(data) else { return };
    let found = extract_boxes(s);
    assert!(found.boxes.len() + found.malformed <= s.matches('[').count());
    let stripped = strip_grounding(s);
    assert!(stripped.len() <= s.len());
    let _ = normalize_yesno(s);
}

/// Each byte picks the next segment fed to the activator.
pub fn activator(data: &[u8]) {
    let mut act = RefBindActivator::new(PatchGrid::new(4, 6).unwrap());
    for (i, &b) in data.iter().enumerate() {
        let seg = match b % 8 {
            0 => TokenSegment::CoordOpen,
            1 => TokenSegment::CoordClose,
            2 => TokenSegment::CoordText(format!("0.{}, 0.1, 0.9, 0.{}", b / 8, (b / 3) % 10)),
            3 => TokenSegment::CoordText(String::from_utf8_lossy(&data[i..(i + 6).min(data.len())]).into_owned()),
            4 => TokenSegment::Text("the cup ".into()),
            5 => TokenSegment::ImageSlot(24),
            6 => TokenSegment::GroundingTrigger,
            _ => TokenSegment::CoTTrigger,
        };
        if act.feed(&seg).is_err() {
            return;
        }
    }
    let _ = act.finish();
}

pub fn records(data: &[u8]) {
    let Some(s) = text(data) else { return };
    for line in s.lines() {
        if let Ok(rec) = serde_json::from_str::<vocot_cli::records::VoCoTInstructRecord>(line) {
            let _ = rec.grounded_thought(Precision::THREE);
        }
        let _ = serde_json::from_str::<vocot_cli::records::GqaQuestion>(line);
        let _ = serde_json::from_str::<vocot_cli::records::GqaScene>(line);
        let _ = serde_json::from_str::<vocot_cli::records::ResponseLine>(line);
        let _ = serde_json::from_str::<vocot_core::synthesis::SynthesisRequest>(line);
        let _ = serde_json::from_str::<vocot_core::filters::InterleavedDocMeta>(line);
        let _ = serde_json::from_str::<vocot_core::filters::GroundedCaptionMeta>(line);
    }
}

pub fn config(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(cfg) = toml::from_str::<vocot_cli::config::Config>(s) {
        let _ = cfg.validate();
    }
}

pub type Check = fn(&[u8]);

/// Every target, by name, for seed replay.
pub const TARGETS: &[(&str, Check)] = &[
    ("coords", coords),
    ("program", program),
    ("thought", thought),
    ("synthesis_response", synthesis_response),
    ("training_text", training_text),
    ("eval_text", eval_text),
    ("activator", activator),
    ("records", records),
    ("config", config),
];
