use proptest::prelude::*;
use vocot_core::eval::{mc_select, rec_accuracy};
use vocot_core::filters::{filter_interleaved, FilterConfig, FilterTally, InterleavedDocMeta};
use vocot_core::geometry::format_bracketed;
use vocot_core::{BoundingBox, Precision};

fn any_box() -> impl Strategy<Value = BoundingBox> {
    (0..=100i64, 0..=100i64, 0..=100i64, 0..=100i64).prop_map(|(a, b, c, d)| {
        let f = |k: i64| k as f64 / 100.0;
        BoundingBox::new(f(a.min(c)), f(b.min(d)), f(a.max(c)), f(b.max(d))).unwrap()
    })
}

fn rec_records() -> impl Strategy<Value = Vec<(String, BoundingBox)>> {
    prop::collection::vec(
        (prop::option::of(any_box()), any_box())
            .prop_map(|(pred, gold)| (pred.map_or("no box".into(), |b| format!("it is {}", format_bracketed(&b, Precision::TWO))), gold)),
        1..30,
    )
}

proptest! {
    #[test]
    fn rec_accuracy_is_monotone_in_threshold(records in rec_records(), t1 in 0.01..=1.0f64, t2 in 0.01..=1.0f64) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let at = |t: f64| rec_accuracy(records.iter().map(|(p, g)| (p.as_str(), g)), t, false).unwrap().accuracy;
        prop_assert!(at(hi) <= at(lo));
    }

    #[test]
    fn rec_accuracy_is_permutation_invariant(records in rec_records(), seed in any::<u64>()) {
        let mut shuffled = records.clone();
        let n = shuffled.len();
        for i in 0..n {
            shuffled.swap(i, (seed as usize).wrapping_add(i * 7919) % n);
        }
        let acc = |rs: &[(String, BoundingBox)]| rec_accuracy(rs.iter().map(|(p, g)| (p.as_str(), g)), 0.5, false).unwrap();
        prop_assert_eq!(acc(&records), acc(&shuffled));
    }

    #[test]
    fn mc_select_ignores_monotone_transforms(scores in prop::collection::vec(-50.0..0.0f64, 2..8), shift in -100.0..100.0f64, scale in 0.1..10.0f64) {
        let base = mc_select(&scores).unwrap();
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let exp: Vec<f64> = scores.iter().map(|s| (s * scale).exp()).collect();
        let max = scores.iter().copied().fold(f64::MIN, f64::max);
        // Exact ties can only be broken consistently if the transform keeps them.
        prop_assume!(scores.iter().filter(|&&s| s == max).count() == 1);
        prop_assert_eq!(mc_select(&shifted).unwrap(), base);
        prop_assert_eq!(mc_select(&exp).unwrap(), base);
    }

    #[test]
    fn filter_tally_is_order_independent(sims in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 0..9), 0..40)) {
        let cfg = FilterConfig::default();
        let docs: Vec<InterleavedDocMeta> = sims
            .into_iter()
            .enumerate()
            .map(|(i, s)| InterleavedDocMeta { id: i.to_string(), image_count: s.len(), similarities: s })
            .collect();
        let forward: FilterTally = docs.iter().map(|d| filter_interleaved(d, &cfg)).collect();
        let backward: FilterTally = docs.iter().rev().map(|d| filter_interleaved(d, &cfg)).collect();
        let kept_fwd: Vec<_> = docs.iter().filter(|d| filter_interleaved(d, &cfg).is_keep()).map(|d| &d.id).collect();
        prop_assert_eq!(&forward, &backward);
        prop_assert_eq!(forward.total(), docs.len());
        prop_assert_eq!(forward.kept, kept_fwd.len());
    }
}
