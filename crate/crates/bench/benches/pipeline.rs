use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mrs_core::downstream::{BaselineReader, BaselineVerifier};
use mrs_core::eval::{evaluate_runs, EvalOptions};
use mrs_core::retrieval::{Granularity, TermIndex, TermRetriever};
use mrs_core::scoring::{FeatureExtractor, IdfTable, TrainConfig};
use mrs_core::synthetic::wiki_fixture;
use mrs_core::{
    filter_by_score, run_batch, Ablation, CandidateId, LogisticScorer, Modules, PipelineConfig, ScoredCandidate,
    SentenceId, Task,
};

fn tfidf(c: &mut Criterion) {
    let fx = wiki_fixture(2000, 50, Task::Hotpot, 1);
    let index = TermIndex::build(&fx.corpus, Granularity::Paragraph).unwrap();
    let mut g = c.benchmark_group("tfidf_rank");
    for top_n in [5, 50] {
        g.bench_with_input(BenchmarkId::from_parameter(top_n), &top_n, |b, &n| {
            b.iter(|| {
                for q in &fx.queries {
                    black_box(index.tfidf_rank(&q.text, n).unwrap());
                }
            })
        });
    }
    g.finish();
}

fn filter(c: &mut Criterion) {
    let mut g = c.benchmark_group("filter_by_score");
    for n in [100usize, 10_000] {
        let cands: Vec<ScoredCandidate> = (0..n)
            .map(|i| ScoredCandidate {
                id: CandidateId::Sentence(SentenceId::new(&format!("T{}", i % 97), i as i64).unwrap()),
                score: ((i * 7919) % 1000) as f64 / 1000.0,
            })
            .collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &cands, |b, c| {
            b.iter(|| black_box(filter_by_score(c, 5, 0.5)))
        });
    }
    g.finish();
}

fn end_to_end(c: &mut Criterion) {
    let fx = wiki_fixture(300, 140, Task::Hotpot, 3);
    let (train, test) = fx.split(40);
    let index = TermIndex::build(&fx.corpus, Granularity::Paragraph).unwrap();
    let idf = Arc::new(IdfTable::from_index(&index));
    let ex = FeatureExtractor::new(Some(idf.clone()));
    let cfg = PipelineConfig::new(Task::Hotpot);
    let retriever = TermRetriever::new(&fx.corpus, &index);
    let t = mrs_core::experiment::train_stage_scorers(Ablation::Full, &cfg, &train, &retriever, &ex, &TrainConfig::default())
        .unwrap();
    let (ps, ss) = (LogisticScorer::new(t.paragraph, ex.clone()), LogisticScorer::new(t.sentence, ex));
    let reader = BaselineReader::new(Some(idf));
    let verifier = BaselineVerifier::default();
    let modules = Modules {
        retriever,
        paragraph_scorer: &ps,
        sentence_scorer: &ss,
        reader: &reader,
        verifier: &verifier,
    };
    c.bench_function("run_batch_100", |b| b.iter(|| black_box(run_batch(&test, &cfg, &modules))));
    let runs: Vec<_> = run_batch(&test, &cfg, &modules).into_iter().map(Result::unwrap).collect();
    c.bench_function("evaluate_runs_100", |b| {
        b.iter(|| black_box(evaluate_runs(&runs, &fx.corpus, &EvalOptions::default()).unwrap()))
    });
}

criterion_group!(benches, tfidf, filter, end_to_end);
criterion_main!(benches);
