use std::sync::{Arc, LazyLock};

use proptest::prelude::*;

use mrs_core::downstream::{BaselineReader, BaselineVerifier};
use mrs_core::eval::{evaluate_runs, EvalOptions};
use mrs_core::experiment::{run_ablation, run_sweep, train_stage_scorers, SweepParam, SweepSpec};
use mrs_core::retrieval::{Granularity, TermIndex, TermRetriever};
use mrs_core::scoring::{FeatureExtractor, IdfTable, TrainConfig};
use mrs_core::synthetic::{wiki_fixture, Fixture};
use mrs_core::{run_batch, Ablation, LogisticScorer, Modules, PipelineConfig, Query, Task};

struct World {
    fx: Fixture,
    index: TermIndex,
    test: Vec<Query>,
    paragraph: LogisticScorer,
    sentence: LogisticScorer,
    reader: BaselineReader,
    verifier: BaselineVerifier,
}

static WORLD: LazyLock<World> = LazyLock::new(|| {
    let fx = wiki_fixture(80, 50, Task::Hotpot, 77);
    let (train, test) = fx.split(30);
    let index = TermIndex::build(&fx.corpus, Granularity::Paragraph).unwrap();
    let idf = Arc::new(IdfTable::from_index(&index));
    let ex = FeatureExtractor::new(Some(idf.clone()));
    let cfg = PipelineConfig::new(Task::Hotpot);
    let t = train_stage_scorers(
        Ablation::Full,
        &cfg,
        &train,
        &TermRetriever::new(&fx.corpus, &index),
        &ex,
        &TrainConfig::default(),
    )
    .unwrap();
    World {
        paragraph: LogisticScorer::new(t.paragraph, ex.clone()),
        sentence: LogisticScorer::new(t.sentence, ex),
        reader: BaselineReader::new(Some(idf)),
        verifier: BaselineVerifier::default(),
        fx,
        index,
        test,
    }
});

fn modules(w: &World) -> Modules<'_> {
    Modules {
        retriever: TermRetriever::new(&w.fx.corpus, &w.index),
        paragraph_scorer: &w.paragraph,
        sentence_scorer: &w.sentence,
        reader: &w.reader,
        verifier: &w.verifier,
    }
}

fn param_and_values() -> impl Strategy<Value = (SweepParam, Vec<f64>)> {
    prop_oneof![
        (Just(SweepParam::KP), prop::collection::vec((1u32..8).prop_map(f64::from), 1..4)),
        (Just(SweepParam::KS), prop::collection::vec((1u32..10).prop_map(f64::from), 1..4)),
        (Just(SweepParam::HP), prop::collection::vec((0u32..10).prop_map(|v| f64::from(v) / 10.0), 1..4)),
        (Just(SweepParam::HS), prop::collection::vec((0u32..10).prop_map(|v| f64::from(v) / 10.0), 1..4)),
    ]
}

fn direct(w: &World, param: SweepParam, v: f64) -> mrs_core::MetricsReport {
    let mut cfg = PipelineConfig::new(Task::Hotpot);
    param.apply(&mut cfg, v).unwrap();
    let runs: Vec<_> = run_batch(&w.test, &cfg, &modules(w)).into_iter().map(Result::unwrap).collect();
    evaluate_runs(&runs, &w.fx.corpus, &EvalOptions::default()).unwrap().1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cached_sweep_matches_independent_runs((param, values) in param_and_values()) {
        let w = &*WORLD;
        let spec = SweepSpec { parameter: param, values: values.clone(), base: PipelineConfig::new(Task::Hotpot), retrain_downstream: false };
        let rows = run_sweep(&spec, &w.test, &modules(w), &EvalOptions::default()).unwrap();
        for row in &rows {
            prop_assert!(row.failures.is_empty());
            prop_assert_eq!(row.report.as_ref().unwrap(), &direct(w, param, row.value));
        }

        let mut permuted = values;
        permuted.reverse();
        let n = permuted.len();
        permuted.rotate_left(1 % n);
        let spec2 = SweepSpec { values: permuted, ..spec };
        prop_assert_eq!(run_sweep(&spec2, &w.test, &modules(w), &EvalOptions::default()).unwrap(), rows);
    }
}

#[test]
fn paragraph_set_grows_with_k_p() {
    let w = &*WORLD;
    let spec = SweepSpec {
        parameter: SweepParam::KP,
        values: (1..=12).map(f64::from).collect(),
        base: PipelineConfig::new(Task::Hotpot),
        retrain_downstream: false,
    };
    let rows = run_sweep(&spec, &w.test, &modules(w), &EvalOptions::default()).unwrap();
    let sizes: Vec<f64> = rows.iter().map(|r| r.report.as_ref().unwrap().mean_paragraphs.unwrap()).collect();
    assert!(sizes.windows(2).all(|p| p[0] <= p[1]), "{sizes:?}");
}

#[test]
fn ablation_is_deterministic() {
    let w = &*WORLD;
    let cfg = PipelineConfig::new(Task::Hotpot);
    for mode in [Ablation::Full, Ablation::NoParagraph, Ablation::NoSentence] {
        let (a, runs_a) = run_ablation(mode, &cfg, &w.test, &modules(w), &EvalOptions::default()).unwrap();
        let (b, runs_b) = run_ablation(mode, &cfg, &w.test, &modules(w), &EvalOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&runs_a).unwrap(), serde_json::to_string(&runs_b).unwrap());
    }
}
