//! Training data drawn from gold annotations plus the output of the stage
//! directly upstream: scorer pairs per retrieval level, and reader/verifier
//! contexts. Every draw uses a per-query generator seeded with
//! `seed ^ fnv1a64(query_id)`, so emission is reproducible and independent of
//! batch order.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ParagraphId, SentenceId};
use crate::downstream::FEVER_EVIDENCE_CAP;
use crate::pipeline::{as_sentence, PipelineRun};
use crate::query::{Label, Query, Task};
use crate::scoring::{CandidateId, LabeledPair, PairLabel, Provenance};

#[derive(Debug, thiserror::Error)]
pub enum SampleError {
    #[error("query {0}: upstream candidate set is empty")]
    EmptyUpstream(String),
    #[error("query {query_id}: answer {answer:?} not found in the assembled context")]
    AnswerNotFound { query_id: String, answer: String },
    #[error("query {0}: NOT ENOUGH INFO claim carries gold evidence")]
    NeiWithGold(String),
    #[error("query {0}: verifiable claim has no gold evidence")]
    VerifiableWithoutGold(String),
    #[error("query {0}: missing gold {1}")]
    MissingGold(String, &'static str),
    #[error("neg_per_pos must be >= 1")]
    ZeroRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Paragraph,
    Sentence,
}

impl FromStr for Level {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paragraph" => Ok(Level::Paragraph),
            "sentence" => Ok(Level::Sentence),
            other => Err(format!("unknown level {other:?}")),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Paragraph => "paragraph",
            Level::Sentence => "sentence",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub level: Level,
    pub neg_per_pos: usize,
    pub seed: u64,
    /// Only the first `max_neg_pool` upstream candidates (in upstream order)
    /// are eligible as negatives.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_neg_pool: Option<usize>,
}

impl SamplingSpec {
    /// 2 negatives per positive for paragraphs, 4 for sentences.
    pub fn new(level: Level, seed: u64) -> Self {
        Self {
            level,
            neg_per_pos: match level {
                Level::Paragraph => 2,
                Level::Sentence => 4,
            },
            seed,
            max_neg_pool: None,
        }
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn query_rng(seed: u64, query_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(query_id.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleWarning {
    /// No gold items; only negatives were drawn.
    EmptyGold,
    /// The pool held fewer negatives than requested.
    ExhaustedPool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdSample<T> {
    pub positives: Vec<T>,
    pub negatives: Vec<T>,
    pub warnings: Vec<SampleWarning>,
}

/// Positives are all of `gold`; negatives are drawn uniformly without
/// replacement from `upstream ∖ gold`, `min(neg_per_pos · max(|gold|, 1),
/// available)` of them, in upstream order.
pub fn sample_ids<T: Ord + Clone>(
    gold: &BTreeSet<T>,
    upstream: &[T],
    neg_per_pos: usize,
    max_pool: Option<usize>,
    rng: &mut impl Rng,
) -> IdSample<T> {
    let mut seen = BTreeSet::new();
    let pool: Vec<&T> = upstream
        .iter()
        .take(max_pool.unwrap_or(usize::MAX))
        .filter(|x| !gold.contains(*x) && seen.insert(*x))
        .collect();
    let mut warnings = Vec::new();
    if gold.is_empty() {
        warnings.push(SampleWarning::EmptyGold);
    }
    let wanted = neg_per_pos * gold.len().max(1);
    if pool.len() < wanted {
        warnings.push(SampleWarning::ExhaustedPool);
    }
    let amount = wanted.min(pool.len());
    let mut picked = index::sample(rng, pool.len(), amount).into_vec();
    picked.sort_unstable();
    IdSample {
        positives: gold.iter().cloned().collect(),
        negatives: picked.into_iter().map(|i| pool[i].clone()).collect(),
        warnings,
    }
}

/// Labelled scorer pairs for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub pairs: Vec<LabeledPair>,
    pub warnings: Vec<SampleWarning>,
}

/// Pairs for one query at `spec.level`. `upstream` holds the candidates
/// produced by the preceding stage: P_I for paragraphs, the sentences of P_N
/// for sentences. `include_title` mirrors the scorer's inference contexts.
pub fn sample_retrieval_pairs(
    query: &Query,
    upstream: &[CandidateId],
    corpus: &Corpus,
    spec: &SamplingSpec,
    include_title: bool,
) -> Result<PairSample, SampleError> {
    if spec.neg_per_pos == 0 {
        return Err(SampleError::ZeroRatio);
    }
    if upstream.is_empty() {
        return Err(SampleError::EmptyUpstream(query.id.clone()));
    }
    let gold: BTreeSet<CandidateId> = match spec.level {
        Level::Paragraph => query
            .gold_paragraphs(corpus)
            .into_iter()
            .map(CandidateId::Paragraph)
            .collect(),
        Level::Sentence => query.gold_sentences().into_iter().map(CandidateId::Sentence).collect(),
    };
    let mut rng = query_rng(spec.seed, &query.id);
    let s = sample_ids(&gold, upstream, spec.neg_per_pos, spec.max_neg_pool, &mut rng);
    if s.warnings.contains(&SampleWarning::EmptyGold) {
        log::warn!("query {}: no gold {} items, negatives only", query.id, spec.level);
    }
    let mut pairs = Vec::with_capacity(s.positives.len() + s.negatives.len());
    for (ids, label, provenance) in [
        (&s.positives, PairLabel::Positive, Provenance::GroundTruth),
        (&s.negatives, PairLabel::Negative, Provenance::UpstreamSampled),
    ] {
        for id in ids {
            let Some((title, text)) = candidate_text(corpus, id) else {
                log::warn!("query {}: cannot resolve {id}, skipped", query.id);
                continue;
            };
            pairs.push(LabeledPair {
                query_id: query.id.clone(),
                query: query.text.clone(),
                context_id: id.clone(),
                title: include_title.then_some(title),
                context: text,
                label,
                provenance,
            });
        }
    }
    Ok(PairSample {
        pairs,
        warnings: s.warnings,
    })
}

fn candidate_text(corpus: &Corpus, id: &CandidateId) -> Option<(String, String)> {
    match id {
        CandidateId::Paragraph(p) => corpus.paragraph(p).ok().map(|r| (p.title.to_string(), r.text())),
        CandidateId::Sentence(s) => corpus
            .resolve_sentence(s)
            .ok()
            .filter(|t| !t.is_empty())
            .map(|t| (s.title.to_string(), t.to_string())),
    }
}

/// Upstream candidates of a traced run for training `level`: P_I for the
/// paragraph scorer; sentences of P_N (or of P_I when the paragraph stage
/// was off) for the sentence scorer.
pub fn run_upstream(run: &PipelineRun, corpus: &Corpus, level: Level) -> Vec<CandidateId> {
    match level {
        Level::Paragraph => run.p_initial.ids().cloned().map(CandidateId::Paragraph).collect(),
        Level::Sentence => paragraph_sentences(corpus, &run.paragraph_ids())
            .into_iter()
            .map(CandidateId::Sentence)
            .collect(),
    }
}

fn paragraph_sentences(corpus: &Corpus, ids: &[ParagraphId]) -> Vec<SentenceId> {
    ids.iter()
        .filter_map(|p| corpus.paragraph(p).ok())
        .flat_map(|p| {
            p.sentence_ids()
                .filter(|(_, t)| !t.is_empty())
                .map(|(s, _)| s)
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Pairs for every traced run, in run order. Runs whose upstream is empty
/// are skipped with a warning.
pub fn pairs_from_runs(
    runs: &[PipelineRun],
    corpus: &Corpus,
    spec: &SamplingSpec,
    include_title: bool,
) -> Result<Vec<LabeledPair>, SampleError> {
    let mut out = Vec::new();
    for run in runs {
        let upstream = run_upstream(run, corpus, spec.level);
        match sample_retrieval_pairs(&run.query, &upstream, corpus, spec, include_title) {
            Ok(s) => out.extend(s.pairs),
            Err(SampleError::EmptyUpstream(id)) => log::warn!("query {id}: empty upstream, skipped"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSentence {
    pub id: SentenceId,
    pub text: String,
    pub is_gold: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Answer(String),
    Label(Label),
}

/// A reader or verifier training example; sentences in `(title,
/// sent_index)` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownstreamContext {
    pub query_id: String,
    pub query: String,
    pub sentences: Vec<ContextSentence>,
    pub target: Target,
}

impl DownstreamContext {
    pub fn text(&self) -> String {
        let parts: Vec<&str> = self.sentences.iter().map(|s| s.text.as_str()).collect();
        parts.join(" ")
    }
}

fn assemble(corpus: &Corpus, gold: &BTreeSet<SentenceId>, extra: &[SentenceId]) -> Vec<ContextSentence> {
    let all: BTreeSet<&SentenceId> = gold.iter().chain(extra).collect();
    all.into_iter()
        .filter_map(|id| {
            let text = corpus.resolve_sentence(id).ok()?;
            Some(ContextSentence {
                id: id.clone(),
                text: text.to_string(),
                is_gold: gold.contains(id),
            })
        })
        .collect()
}

/// Gold sentences plus `neg_per_pos · |gold|` distractors sampled from
/// `upstream ∖ gold`. The answer must be "yes", "no", or occur in the
/// assembled text (case-insensitively).
pub fn build_qa_context(
    query: &Query,
    upstream: &[SentenceId],
    corpus: &Corpus,
    spec: &SamplingSpec,
) -> Result<DownstreamContext, SampleError> {
    let answer = query.answer.clone().ok_or(SampleError::MissingGold(query.id.clone(), "answer"))?;
    let gold = query.gold_sentences();
    let mut rng = query_rng(spec.seed, &query.id);
    let s = sample_ids(&gold, upstream, spec.neg_per_pos, spec.max_neg_pool, &mut rng);
    let ctx = DownstreamContext {
        query_id: query.id.clone(),
        query: query.text.clone(),
        sentences: assemble(corpus, &gold, &s.negatives),
        target: Target::Answer(answer.clone()),
    };
    let lower = answer.to_lowercase();
    if lower != "yes" && lower != "no" && !ctx.text().to_lowercase().contains(&lower) {
        return Err(SampleError::AnswerNotFound {
            query_id: query.id.clone(),
            answer,
        });
    }
    Ok(ctx)
}

/// Verifiable claims: gold plus `neg_per_pos · |gold|` sampled sentences.
/// NEI claims: exactly `nei_size` sampled sentences (fewer if the pool is
/// smaller) and no gold.
pub fn build_nli_context(
    query: &Query,
    upstream: &[SentenceId],
    nei_size: usize,
    corpus: &Corpus,
    spec: &SamplingSpec,
) -> Result<DownstreamContext, SampleError> {
    let label = query.label.ok_or(SampleError::MissingGold(query.id.clone(), "label"))?;
    let gold = query.gold_sentences();
    match (label, gold.is_empty()) {
        (Label::NotEnoughInfo, false) => return Err(SampleError::NeiWithGold(query.id.clone())),
        (Label::Supports | Label::Refutes, true) => return Err(SampleError::VerifiableWithoutGold(query.id.clone())),
        _ => {}
    }
    let mut rng = query_rng(spec.seed, &query.id);
    let negatives = if label == Label::NotEnoughInfo {
        let pool: Vec<&SentenceId> = {
            let mut seen = BTreeSet::new();
            upstream
                .iter()
                .take(spec.max_neg_pool.unwrap_or(usize::MAX))
                .filter(|x| seen.insert(*x))
                .collect()
        };
        let mut picked = index::sample(&mut rng, pool.len(), nei_size.min(pool.len())).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| pool[i].clone()).collect()
    } else {
        sample_ids(&gold, upstream, spec.neg_per_pos, spec.max_neg_pool, &mut rng).negatives
    };
    Ok(DownstreamContext {
        query_id: query.id.clone(),
        query: query.text.clone(),
        sentences: assemble(corpus, &gold, &negatives),
        target: Target::Label(label),
    })
}

/// Downstream training contexts for traced runs. The upstream pool is the
/// run's S, or the sentences of its paragraph set when the sentence stage
/// was off. NEI context sizes are drawn from the sizes of the verifiable
/// contexts built in the same call (falling back to 5 when there are none).
pub fn contexts_from_runs(
    runs: &[PipelineRun],
    corpus: &Corpus,
    spec: &SamplingSpec,
) -> Result<Vec<DownstreamContext>, SampleError> {
    let upstream = |run: &PipelineRun| -> Vec<SentenceId> {
        match &run.s_selected {
            Some(s) => s.iter().filter_map(|c| as_sentence(&c.id).cloned()).collect(),
            None => paragraph_sentences(corpus, &run.paragraph_ids()),
        }
    };
    let mut out: Vec<Option<DownstreamContext>> = vec![None; runs.len()];
    let mut sizes = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let q = &run.query;
        let ctx = match q.task {
            Task::Hotpot => Some(build_qa_context(q, &upstream(run), corpus, spec)?),
            Task::Fever if !q.is_nei() => Some(build_nli_context(q, &upstream(run), 0, corpus, spec)?),
            Task::Fever => None,
        };
        if let Some(c) = &ctx {
            sizes.push(c.sentences.len());
        }
        out[i] = ctx;
    }
    for (i, run) in runs.iter().enumerate() {
        if out[i].is_none() {
            let mut rng = query_rng(spec.seed ^ 0x4e45_49, &run.query.id);
            let size = if sizes.is_empty() {
                FEVER_EVIDENCE_CAP
            } else {
                sizes[rng.random_range(0..sizes.len())]
            };
            out[i] = Some(build_nli_context(&run.query, &upstream(run), size, corpus, spec)?);
        }
    }
    Ok(out.into_iter().flatten().collect())
}

/// One JSON object per line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).expect("serializable"));
        s.push('\n');
    }
    s
}
