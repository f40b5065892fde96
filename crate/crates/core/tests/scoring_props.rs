use proptest::prelude::*;

use mrs_core::scoring::{sigmoid, FeatureExtractor, LogisticModel, FEATURE_DIM};
use mrs_core::{CandidateId, ContextItem, LogisticScorer, Scorer, SentenceId};

fn model() -> impl Strategy<Value = LogisticModel> {
    (prop::collection::vec(-50.0f64..50.0, FEATURE_DIM), -50.0f64..50.0).prop_map(|(weights, bias)| LogisticModel {
        weights,
        bias,
        ..LogisticModel::default()
    })
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-d]{1,3}", 0..12).prop_map(|w| w.join(" "))
}

fn items(texts: Vec<(String, Option<String>)>, offset: usize) -> Vec<ContextItem> {
    texts
        .into_iter()
        .enumerate()
        .map(|(i, (text, title))| ContextItem {
            id: CandidateId::Sentence(SentenceId::new("T", (i + offset) as i64).unwrap()),
            title,
            text,
        })
        .collect()
}

fn contexts() -> impl Strategy<Value = Vec<(String, Option<String>)>> {
    prop::collection::vec((text(), prop::option::of("[a-d]{1,3}")), 0..10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sigmoid_stays_in_unit_interval(z in prop::num::f64::NORMAL | prop::num::f64::ZERO) {
        let s = sigmoid(z);
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn built_in_scores_are_strictly_inside(m in model(), q in text(), c in contexts()) {
        let scorer = LogisticScorer::new(m, FeatureExtractor::default());
        for s in scorer.score_batch(&q, &items(c, 0)).unwrap() {
            prop_assert!(s > 0.0 && s < 1.0, "{s}");
        }
    }

    #[test]
    fn batch_invariance(m in model(), q in text(), a in contexts(), b in contexts()) {
        let scorer = LogisticScorer::new(m, FeatureExtractor::default());
        let na = a.len();
        let a = items(a, 0);
        let b = items(b, na);
        let joined: Vec<ContextItem> = a.iter().chain(&b).cloned().collect();
        let mut split = scorer.score_batch(&q, &a).unwrap();
        split.extend(scorer.score_batch(&q, &b).unwrap());
        prop_assert_eq!(scorer.score_batch(&q, &joined).unwrap(), split);
    }

    #[test]
    fn features_are_finite(q in text(), c in text(), t in prop::option::of(text())) {
        let x = FeatureExtractor::default().extract(&q, &c, t.as_deref());
        prop_assert!(x.iter().all(|v| v.is_finite()));
    }
}
