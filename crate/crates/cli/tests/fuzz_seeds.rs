//! Replays the fuzz seed corpus, and every prefix of each seed, through the
//! fuzz target checks.

#[path = "../../../fuzz/src/checks.rs"]
mod checks;

use std::fs;
use std::path::Path;

#[test]
fn seed_corpus_passes_every_check() {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    for (name, check) in checks::TARGETS {
        let dir = corpus.join(name);
        let mut seeds: Vec<_> = fs::read_dir(&dir)
            .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
            .map(|e| e.unwrap().path())
            .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("seed-"))
            .collect();
        seeds.sort();
        assert!(!seeds.is_empty(), "no seeds for {name}");
        for seed in seeds {
            let data = fs::read(&seed).unwrap();
            for end in 0..=data.len() {
                check(&data[..end]);
            }
        }
    }
}

mod random {
    use proptest::prelude::*;

    fn fragment() -> impl Strategy<Value = String> {
        prop_oneof![
            Just("[c] ".to_string()), Just(" [/c]".to_string()), Just("<obj_0:4>".to_string()),
            Just("<grounding>".to_string()), Just("<image:3>".to_string()), Just("\\".to_string()),
            Just("{\"thought\": \"".to_string()), Just("\"}".to_string()), Just("select: ".to_string()),
            Just(" -> ".to_string()), Just(" [0, 1]".to_string()), Just("[".to_string()), Just("]".to_string()),
            Just(", ".to_string()), Just("\n".to_string()), Just("é".to_string()),
            "0\\.[0-9]{1,4}", "[a-z :]{0,6}",
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(3000))]

        #[test]
        fn checks_hold_on_token_soup(parts in prop::collection::vec(fragment(), 0..24)) {
            let data = parts.concat();
            for (_, check) in super::checks::TARGETS {
                check(data.as_bytes());
            }
        }
    }
}
