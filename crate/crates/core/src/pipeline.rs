//! Term retrieval → paragraph filter → sentence filter → reader/verifier.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, StageSection};
use crate::corpus::{Corpus, ParagraphId, SentenceId};
use crate::downstream::{DownstreamPrediction, PredictionKind, QaReader, ReaderContext, Verifier, FEVER_EVIDENCE_CAP};
use crate::query::{Query, Task};
use crate::retrieval::{InitialCandidateSet, RetrievalError, TermRetriever};
use crate::scoring::{score_candidates, CandidateId, ContextItem, ScoreError, ScoredCandidate, Scorer};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("query {query_id}: retrieval failed: {source}")]
    Retrieval {
        query_id: String,
        #[source]
        source: RetrievalError,
    },
    #[error("query {query_id}: {stage} scoring failed: {source}")]
    Scoring {
        query_id: String,
        stage: Stage,
        #[source]
        source: ScoreError,
    },
}

impl PipelineError {
    pub fn query_id(&self) -> &str {
        match self {
            PipelineError::Retrieval { query_id, .. } | PipelineError::Scoring { query_id, .. } => query_id,
        }
    }

    pub fn is_remote(&self) -> bool {
        matches!(self, PipelineError::Scoring { source, .. } if source.is_remote())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Paragraph,
    Sentence,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Paragraph => "paragraph",
            Stage::Sentence => "sentence",
        })
    }
}

/// Which neural stages run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoParagraph,
    NoSentence,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::Full, Ablation::NoParagraph, Ablation::NoSentence];

    pub fn apply(self, config: &mut PipelineConfig) {
        config.paragraph_level.enabled = self != Ablation::NoParagraph;
        config.sentence_level.enabled = self != Ablation::NoSentence;
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoParagraph => "no_paragraph",
            Ablation::NoSentence => "no_sentence",
        }
    }
}

impl FromStr for Ablation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown ablation mode {s:?}"))
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Keeps candidates scoring strictly above `h`, best first (ties by id
/// ascending), at most `k` of them.
pub fn filter_by_score(candidates: &[ScoredCandidate], k: usize, h: f64) -> Vec<ScoredCandidate> {
    let mut kept: Vec<ScoredCandidate> = candidates.iter().filter(|c| c.score > h).cloned().collect();
    kept.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    kept.truncate(k);
    kept
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub retrieval: Duration,
    pub paragraph: Duration,
    pub sentence: Duration,
    pub downstream: Duration,
}

/// Full trace of one query. `p_neural` / `s_selected` are `None` when the
/// stage is disabled; `prediction` is `None` when the downstream adapter
/// failed, with the reason in `downstream_error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub query_id: String,
    pub query: Query,
    pub p_initial: InitialCandidateSet,
    pub p_neural: Option<Vec<ScoredCandidate>>,
    pub s_selected: Option<Vec<ScoredCandidate>>,
    pub prediction: Option<DownstreamPrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downstream_error: Option<String>,
    #[serde(skip)]
    pub timings: StageTimings,
}

impl PipelineRun {
    pub fn paragraph_ids(&self) -> Vec<ParagraphId> {
        match &self.p_neural {
            Some(p) => p.iter().filter_map(|c| as_paragraph(&c.id).cloned()).collect(),
            None => self.p_initial.ids().cloned().collect(),
        }
    }

    pub fn sentence_ids(&self) -> Option<Vec<SentenceId>> {
        self.s_selected
            .as_ref()
            .map(|s| s.iter().filter_map(|c| as_sentence(&c.id).cloned()).collect())
    }
}

pub fn as_paragraph(id: &CandidateId) -> Option<&ParagraphId> {
    match id {
        CandidateId::Paragraph(p) => Some(p),
        CandidateId::Sentence(_) => None,
    }
}

pub fn as_sentence(id: &CandidateId) -> Option<&SentenceId> {
    match id {
        CandidateId::Sentence(s) => Some(s),
        CandidateId::Paragraph(_) => None,
    }
}

/// Read-only components shared by every query of a batch.
pub struct Modules<'a> {
    pub retriever: TermRetriever<'a>,
    pub paragraph_scorer: &'a dyn Scorer,
    pub sentence_scorer: &'a dyn Scorer,
    pub reader: &'a dyn QaReader,
    pub verifier: &'a dyn Verifier,
}

impl Modules<'_> {
    pub fn corpus(&self) -> &Corpus {
        self.retriever.corpus
    }

    pub fn initial_candidates(&self, query: &Query) -> Result<InitialCandidateSet, PipelineError> {
        self.retriever
            .initial_candidates(&query.id, &query.text, query.task)
            .map_err(|source| PipelineError::Retrieval {
                query_id: query.id.clone(),
                source,
            })
    }
}

/// Paragraph contexts for the scorer; unresolvable ids are skipped.
pub fn paragraph_contexts(corpus: &Corpus, ids: &[ParagraphId], stage: &StageSection) -> Vec<ContextItem> {
    ids.iter()
        .filter_map(|id| corpus.paragraph(id).ok())
        .map(|p| ContextItem {
            id: CandidateId::Paragraph(p.id()),
            title: stage.include_title.then(|| p.title.as_str().to_string()),
            text: p.text(),
        })
        .collect()
}

/// Every non-blank sentence of the given paragraphs.
pub fn sentence_contexts(corpus: &Corpus, ids: &[ParagraphId], stage: &StageSection) -> Vec<ContextItem> {
    ids.iter()
        .filter_map(|id| corpus.paragraph(id).ok())
        .flat_map(|p| {
            p.sentence_ids()
                .filter(|(_, t)| !t.is_empty())
                .map(|(id, t)| ContextItem {
                    id: CandidateId::Sentence(id),
                    title: stage.include_title.then(|| p.title.as_str().to_string()),
                    text: t.to_string(),
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn run_pipeline(query: &Query, config: &PipelineConfig, modules: &Modules<'_>) -> Result<PipelineRun, PipelineError> {
    let t0 = Instant::now();
    let p_initial = modules.initial_candidates(query)?;
    let mut run = run_from_initial(query, p_initial, config, modules)?;
    run.timings.retrieval = t0.elapsed().saturating_sub(
        run.timings.paragraph + run.timings.sentence + run.timings.downstream,
    );
    Ok(run)
}

/// Runs everything after term retrieval on a precomputed P_I.
pub fn run_from_initial(
    query: &Query,
    p_initial: InitialCandidateSet,
    config: &PipelineConfig,
    modules: &Modules<'_>,
) -> Result<PipelineRun, PipelineError> {
    let corpus = modules.corpus();
    let mut timings = StageTimings::default();
    let scoring_err = |stage, source| PipelineError::Scoring {
        query_id: query.id.clone(),
        stage,
        source,
    };

    let initial_ids: Vec<ParagraphId> = p_initial.ids().cloned().collect();
    let t = Instant::now();
    let p_neural = if config.paragraph_level.enabled {
        let ctx = paragraph_contexts(corpus, &initial_ids, &config.paragraph_level);
        let scored = score_candidates(modules.paragraph_scorer, &query.text, &ctx)
            .map_err(|e| scoring_err(Stage::Paragraph, e))?;
        Some(filter_by_score(&scored, config.paragraph_level.k, config.paragraph_level.h))
    } else {
        None
    };
    timings.paragraph = t.elapsed();

    let upstream: Vec<ParagraphId> = match &p_neural {
        Some(p) => p.iter().filter_map(|c| as_paragraph(&c.id).cloned()).collect(),
        None => initial_ids,
    };

    let t = Instant::now();
    let s_selected = if config.sentence_level.enabled {
        let ctx = sentence_contexts(corpus, &upstream, &config.sentence_level);
        let scored = score_candidates(modules.sentence_scorer, &query.text, &ctx)
            .map_err(|e| scoring_err(Stage::Sentence, e))?;
        Some(filter_by_score(&scored, config.sentence_level.k, config.sentence_level.h))
    } else {
        None
    };
    timings.sentence = t.elapsed();

    // score-ordered evidence, then the document-ordered reader context
    let evidence: Vec<SentenceId> = match &s_selected {
        Some(s) => s.iter().filter_map(|c| as_sentence(&c.id).cloned()).collect(),
        None => sentence_contexts(corpus, &upstream, &config.sentence_level)
            .into_iter()
            .filter_map(|c| as_sentence(&c.id).cloned())
            .collect(),
    };
    let context = ReaderContext::from_ids(corpus, &evidence);

    let t = Instant::now();
    let kind = PredictionKind::from(query.task);
    let predicted_evidence: Vec<SentenceId> = match (query.task, &s_selected) {
        (Task::Fever, Some(_)) => evidence.iter().take(FEVER_EVIDENCE_CAP).cloned().collect(),
        (Task::Fever, None) => context.ids().take(FEVER_EVIDENCE_CAP).cloned().collect(),
        (Task::Hotpot, _) => context.ids().cloned().collect(),
    };
    let outcome = match query.task {
        Task::Hotpot => modules.reader.answer(query, &context).map(|a| (Some(a), None)),
        Task::Fever => modules.verifier.verify(query, &context).map(|l| (None, Some(l))),
    };
    timings.downstream = t.elapsed();
    let (prediction, downstream_error) = match outcome {
        Ok((answer, label)) => (
            Some(DownstreamPrediction {
                query_id: query.id.clone(),
                kind,
                answer,
                label,
                predicted_evidence,
            }),
            None,
        ),
        Err(e) => {
            log::warn!("query {}: downstream failed: {e}", query.id);
            (None, Some(e.to_string()))
        }
    };

    Ok(PipelineRun {
        query_id: query.id.clone(),
        query: query.clone(),
        p_initial,
        p_neural,
        s_selected,
        prediction,
        downstream_error,
        timings,
    })
}

/// Runs queries concurrently; output order matches input order and one
/// failure does not affect the others.
pub fn run_batch(
    queries: &[Query],
    config: &PipelineConfig,
    modules: &Modules<'_>,
) -> Vec<Result<PipelineRun, PipelineError>> {
    queries.par_iter().map(|q| run_pipeline(q, config, modules)).collect()
}

/// Splits batch results into successful runs and `(query_id, reason)` pairs.
pub fn partition_results(results: Vec<Result<PipelineRun, PipelineError>>) -> (Vec<PipelineRun>, Vec<(String, String)>) {
    let mut runs = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => failed.push((e.query_id().to_string(), e.to_string())),
        }
    }
    (runs, failed)
}

/// Sentences of a paragraph set, for containment checks.
pub fn sentences_of(corpus: &Corpus, ids: &[ParagraphId]) -> BTreeSet<SentenceId> {
    ids.iter()
        .filter_map(|id| corpus.paragraph(id).ok())
        .flat_map(|p| p.sentence_ids().map(|(s, _)| s).collect::<Vec<_>>())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocumentTitle;
    use crate::downstream::{BaselineReader, BaselineVerifier, OracleReader};
    use crate::retrieval::{Granularity, TermIndex};
    use crate::scoring::LogisticScorer;
    use crate::synthetic;

    fn sc(title: &str, i: i64, score: f64) -> ScoredCandidate {
        ScoredCandidate {
            id: CandidateId::Sentence(SentenceId::new(title, i).unwrap()),
            score,
        }
    }

    #[test]
    fn filter_applies_threshold_then_cap() {
        let c = vec![sc("A", 0, 0.9), sc("A", 1, 0.7), sc("A", 2, 0.4)];
        assert_eq!(filter_by_score(&c, 5, 0.5), c[..2].to_vec());
        let d = vec![sc("A", 0, 0.7), sc("A", 1, 0.9), sc("A", 2, 0.8)];
        let top = filter_by_score(&d, 2, 0.0);
        assert_eq!(top, vec![d[1].clone(), d[2].clone()]);
        assert!(filter_by_score(&c, 3, 0.9).is_empty());
    }

    #[test]
    fn ties_break_by_id() {
        let c = vec![sc("B", 0, 0.5), sc("A", 3, 0.5), sc("A", 1, 0.5)];
        let got: Vec<String> = filter_by_score(&c, 3, 0.0).iter().map(|x| x.id.to_string()).collect();
        assert_eq!(got, vec!["s:A#1", "s:A#3", "s:B#0"]);
    }

    #[test]
    fn ablation_parses_and_masks() {
        let mut cfg = PipelineConfig::new(Task::Hotpot);
        "no_paragraph".parse::<Ablation>().unwrap().apply(&mut cfg);
        assert!(!cfg.paragraph_level.enabled && cfg.sentence_level.enabled);
        assert!("none".parse::<Ablation>().is_err());
    }

    struct Failing;
    impl Scorer for Failing {
        fn score_batch(&self, query: &str, contexts: &[ContextItem]) -> Result<Vec<f64>, ScoreError> {
            if query.contains("fail") {
                Err(ScoreError::Protocol("boom".into()))
            } else {
                Ok(vec![0.9; contexts.len()])
            }
        }
        fn describe(&self) -> String {
            "failing".into()
        }
    }

    #[test]
    fn batch_isolates_failures_and_preserves_order() {
        let corpus = synthetic::fig2_corpus();
        let index = TermIndex::build(&corpus, Granularity::Document).unwrap();
        let modules = Modules {
            retriever: TermRetriever::new(&corpus, &index),
            paragraph_scorer: &Failing,
            sentence_scorer: &Failing,
            reader: &BaselineReader::default(),
            verifier: &BaselineVerifier::default(),
        };
        let mk = |id: &str, text: &str| Query {
            id: id.into(),
            task: Task::Hotpot,
            text: text.into(),
            answer: None,
            label: None,
            evidence: vec![],
        };
        let qs = vec![mk("a", "Miami team"), mk("b", "fail Miami"), mk("c", "Wojtek Wolski")];
        let out = run_batch(&qs, &PipelineConfig::new(Task::Hotpot), &modules);
        assert!(out[0].is_ok() && out[2].is_ok());
        assert_eq!(out[1].as_ref().unwrap_err().query_id(), "b");
        let (runs, failed) = partition_results(out);
        assert_eq!(runs.iter().map(|r| r.query_id.as_str()).collect::<Vec<_>>(), ["a", "c"]);
        assert_eq!(failed.len(), 1);
    }

    #[test]
    fn disabled_sentence_stage_passes_all_paragraph_sentences() {
        let corpus = synthetic::fig2_corpus();
        let index = TermIndex::build(&corpus, Granularity::Document).unwrap();
        let table = synthetic::fig2_scores();
        let modules = Modules {
            retriever: TermRetriever::new(&corpus, &index),
            paragraph_scorer: &table,
            sentence_scorer: &table,
            reader: &OracleReader,
            verifier: &BaselineVerifier::default(),
        };
        let q = synthetic::fig2_query();
        let mut cfg = synthetic::fig2_config();
        Ablation::NoSentence.apply(&mut cfg);
        let run = run_pipeline(&q, &cfg, &modules).unwrap();
        assert!(run.s_selected.is_none());
        let pn = run.paragraph_ids();
        let expected = sentences_of(&corpus, &pn);
        let got: BTreeSet<SentenceId> = run.prediction.unwrap().predicted_evidence.into_iter().collect();
        assert_eq!(got, expected);
        assert!(pn.iter().all(|p| p.title != DocumentTitle::new("History of the Miami Dolphins").unwrap()));
    }

    #[test]
    fn built_in_batch_is_deterministic() {
        let corpus = synthetic::fig2_corpus();
        let index = TermIndex::build(&corpus, Granularity::Document).unwrap();
        let s = LogisticScorer::default();
        let modules = Modules {
            retriever: TermRetriever::new(&corpus, &index),
            paragraph_scorer: &s,
            sentence_scorer: &s,
            reader: &BaselineReader::default(),
            verifier: &BaselineVerifier::default(),
        };
        let qs = vec![synthetic::fig2_query(); 3];
        let cfg = PipelineConfig::new(Task::Hotpot);
        let ser = |r: Vec<Result<PipelineRun, PipelineError>>| {
            r.into_iter()
                .map(|x| serde_json::to_string(&x.unwrap()).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(ser(run_batch(&qs, &cfg, &modules)), ser(run_batch(&qs, &cfg, &modules)));
    }
}
