//! Relevance scorers shared by the paragraph and sentence stages.
//!
//! A [`Scorer`] maps `(query, contexts)` to one probability per context, in
//! order. The built-in [`LogisticScorer`] is logistic regression over six
//! lexical features, trained by mini-batch gradient descent on the binary
//! cross-entropy `−Σ_pos ln p − Σ_neg ln(1 − p)`. [`RemoteScorer`] speaks the
//! JSON-over-HTTP protocol of an external neural scorer:
//!
//! ```text
//! POST /score   {"query": str, "contexts": [{"id": str, "text": str}]}
//!            →  {"scores": [float]}          // one per context, in [0, 1]
//! GET  /health  →  {"status": "ok", "model": str}
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ParagraphId, SentenceId};
use crate::retrieval::TermIndex;
use crate::text::tokenize;

pub const FEATURE_SPEC_VERSION: &str = "lexical-v1";
pub const FEATURE_DIM: usize = 6;
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "unigram_overlap",
    "bigram_overlap",
    "idf_overlap",
    "log_context_length",
    "title_match",
    "tfidf_cosine",
];

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("cannot connect to scorer at {endpoint}: {reason}")]
    Connect { endpoint: String, reason: String },
    #[error("scorer at {endpoint} timed out")]
    Timeout { endpoint: String },
    #[error("scorer at {endpoint} returned HTTP {status}")]
    Status { endpoint: String, status: u16 },
    #[error("scorer protocol violation: {0}")]
    Protocol(String),
    #[error("scorer model error: {0}")]
    Model(String),
    #[error("training needs both positive and negative pairs")]
    OneClass,
    #[error("loss became non-finite at epoch {epoch}: {loss}")]
    NonFinite { epoch: usize, loss: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ScoreError {
    /// Transport and protocol failures of a remote component.
    pub fn is_remote(&self) -> bool {
        matches!(
            self,
            ScoreError::Connect { .. } | ScoreError::Timeout { .. } | ScoreError::Status { .. } | ScoreError::Protocol(_)
        )
    }
}

/// What a score is attached to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateId {
    Paragraph(ParagraphId),
    Sentence(SentenceId),
}

impl CandidateId {
    /// Identifier sent over the wire: `p:<title>#<para>` or `s:<title>#<sent>`.
    pub fn wire_id(&self) -> String {
        match self {
            CandidateId::Paragraph(p) => format!("p:{}#{}", p.title, p.para_index),
            CandidateId::Sentence(s) => format!("s:{}#{}", s.title, s.sent_index),
        }
    }
}

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.wire_id())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub id: CandidateId,
    pub score: f64,
}

/// One context handed to a scorer. `title` feeds the title-match feature of
/// the built-in scorer and is not sent to remote scorers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextItem {
    pub id: CandidateId,
    pub title: Option<String>,
    pub text: String,
}

pub trait Scorer: Send + Sync {
    /// One score in `[0, 1]` per context, in input order.
    fn score_batch(&self, query: &str, contexts: &[ContextItem]) -> Result<Vec<f64>, ScoreError>;

    fn describe(&self) -> String;
}

/// Scores `contexts` and checks count and range before attaching ids.
pub fn score_candidates(scorer: &dyn Scorer, query: &str, contexts: &[ContextItem]) -> Result<Vec<ScoredCandidate>, ScoreError> {
    if contexts.is_empty() {
        return Ok(Vec::new());
    }
    let scores = scorer.score_batch(query, contexts)?;
    validate_scores(&scores, contexts.len())?;
    Ok(contexts
        .iter()
        .zip(scores)
        .map(|(c, score)| ScoredCandidate { id: c.id.clone(), score })
        .collect())
}

fn validate_scores(scores: &[f64], expected: usize) -> Result<(), ScoreError> {
    if scores.len() != expected {
        return Err(ScoreError::Protocol(format!("expected {expected} scores, got {}", scores.len())));
    }
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(ScoreError::Protocol(format!("score {bad} outside [0, 1]")));
    }
    Ok(())
}

/// Document frequencies used to weight terms in the lexical features.
#[derive(Debug, Clone, Default)]
pub struct IdfTable {
    doc_count: usize,
    df: HashMap<String, u32>,
}

impl IdfTable {
    pub fn from_index(index: &TermIndex) -> Self {
        let df = index
            .vocabulary_terms()
            .map(|t| (t.to_string(), index.document_frequency(t) as u32))
            .collect();
        Self {
            doc_count: index.doc_count(),
            df,
        }
    }

    pub fn from_counts(doc_count: usize, df: HashMap<String, u32>) -> Self {
        Self { doc_count, df }
    }

    /// `ln((N + 1) / (df + 1)) + 1`, always positive; unseen terms use df 0.
    pub fn weight(&self, term: &str) -> f64 {
        let df = self.df.get(term).copied().unwrap_or(0);
        ((self.doc_count as f64 + 1.0) / (f64::from(df) + 1.0)).ln() + 1.0
    }
}

/// Computes the six lexical features of a `(query, context)` pair.
#[derive(Debug, Clone, Default)]
pub struct FeatureExtractor {
    idf: Option<Arc<IdfTable>>,
}

impl FeatureExtractor {
    /// Without an idf table every term weighs 1.
    pub fn new(idf: Option<Arc<IdfTable>>) -> Self {
        Self { idf }
    }

    fn weight(&self, term: &str) -> f64 {
        self.idf.as_ref().map_or(1.0, |t| t.weight(term))
    }

    /// `[unigram overlap, bigram overlap, idf-weighted overlap,
    /// ln(1 + context length), title match, tf-idf cosine]`.
    ///
    /// Overlaps are fractions of the query's distinct unigrams / bigrams found
    /// in the context. Title match is 1 when the title's tokens occur
    /// contiguously in the query. A given title is prepended to the context
    /// for every other feature.
    pub fn extract(&self, query: &str, context: &str, title: Option<&str>) -> [f64; FEATURE_DIM] {
        let q = tokenize(query);
        let mut c = title.map(tokenize).unwrap_or_default();
        c.extend(tokenize(context));
        let qset: BTreeSet<&str> = q.iter().map(String::as_str).collect();
        let cset: BTreeSet<&str> = c.iter().map(String::as_str).collect();
        let common: Vec<&str> = qset.intersection(&cset).copied().collect();

        let unigram = ratio(common.len(), qset.len());
        let qb: BTreeSet<(&str, &str)> = q.windows(2).map(|w| (w[0].as_str(), w[1].as_str())).collect();
        let cb: BTreeSet<(&str, &str)> = c.windows(2).map(|w| (w[0].as_str(), w[1].as_str())).collect();
        let bigram = ratio(qb.intersection(&cb).count(), qb.len());

        let total: f64 = qset.iter().map(|t| self.weight(t)).sum();
        let hit: f64 = common.iter().map(|t| self.weight(t)).sum();
        let idf_overlap = if total > 0.0 { hit / total } else { 0.0 };

        let log_len = (1.0 + c.len() as f64).ln();

        let title_match = title
            .map(tokenize)
            .filter(|t| !t.is_empty() && t.len() <= q.len())
            .map_or(0.0, |t| if q.windows(t.len()).any(|w| w == t.as_slice()) { 1.0 } else { 0.0 });

        let cosine = self.cosine(&q, &c);
        [unigram, bigram, idf_overlap, log_len, title_match, cosine]
    }

    fn tf_vector<'t>(&self, toks: &'t [String]) -> BTreeMap<&'t str, f64> {
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for t in toks {
            *tf.entry(t.as_str()).or_default() += 1;
        }
        tf.into_iter()
            .map(|(t, n)| (t, (1.0 + f64::from(n).ln()) * self.weight(t)))
            .collect()
    }

    fn cosine(&self, q: &[String], c: &[String]) -> f64 {
        let (qv, cv) = (self.tf_vector(q), self.tf_vector(c));
        let norm = |v: &BTreeMap<&str, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
        let (nq, nc) = (norm(&qv), norm(&cv));
        if nq == 0.0 || nc == 0.0 {
            return 0.0;
        }
        let mut keys: Vec<&&str> = qv.keys().collect();
        keys.sort();
        let dot: f64 = keys.into_iter().filter_map(|k| cv.get(*k).map(|x| x * qv[*k])).sum();
        dot / (nq * nc)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Persisted as `{"feature_spec_version", "weights", "bias"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub feature_spec_version: String,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Default for LogisticModel {
    /// All-zero parameters: every score is 0.5.
    fn default() -> Self {
        Self {
            feature_spec_version: FEATURE_SPEC_VERSION.into(),
            weights: vec![0.0; FEATURE_DIM],
            bias: 0.0,
        }
    }
}

impl LogisticModel {
    pub fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// Sigmoid of the logit, kept strictly inside (0, 1).
    pub fn predict(&self, x: &[f64]) -> f64 {
        const EPS: f64 = 1e-15;
        sigmoid(self.logit(x)).clamp(EPS, 1.0 - EPS)
    }

    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        let m: Self = serde_json::from_slice(&std::fs::read(path)?).map_err(|e| ScoreError::Model(e.to_string()))?;
        m.check()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScoreError> {
        let bytes = serde_json::to_vec_pretty(self).map_err(|e| ScoreError::Model(e.to_string()))?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    fn check(&self) -> Result<(), ScoreError> {
        if self.feature_spec_version != FEATURE_SPEC_VERSION {
            return Err(ScoreError::Model(format!(
                "feature spec {:?} does not match {FEATURE_SPEC_VERSION:?}",
                self.feature_spec_version
            )));
        }
        if self.weights.len() != FEATURE_DIM {
            return Err(ScoreError::Model(format!("expected {FEATURE_DIM} weights, got {}", self.weights.len())));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Binary cross-entropy summed over the examples: `−Σ y ln p + (1−y) ln(1−p)`.
pub fn objective(model: &LogisticModel, xs: &[[f64; FEATURE_DIM]], ys: &[bool]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, &y)| {
            let z = model.logit(x);
            if y {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum()
}

/// Analytic gradient of [`objective`]: `Σ (σ(z) − y) x` and `Σ (σ(z) − y)`.
pub fn gradient(model: &LogisticModel, xs: &[[f64; FEATURE_DIM]], ys: &[bool]) -> (Vec<f64>, f64) {
    let mut gw = vec![0.0; FEATURE_DIM];
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let r = sigmoid(model.logit(x)) - if y { 1.0 } else { 0.0 };
        for (g, v) in gw.iter_mut().zip(x) {
            *g += r * v;
        }
        gb += r;
    }
    (gw, gb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    GroundTruth,
    UpstreamSampled,
}

/// A `(query, context)` training pair. Positives always come from ground
/// truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub query_id: String,
    pub query: String,
    pub context_id: CandidateId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub context: String,
    pub label: PairLabel,
    pub provenance: Provenance,
}

impl LabeledPair {
    pub fn positive(&self) -> bool {
        self.label == PairLabel::Positive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    /// Full-data objective after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Fits a [`LogisticModel`] from zero initialization. Each epoch visits the
/// data in a seeded shuffle; each step moves against the batch-mean gradient.
pub fn train_logistic(
    pairs: &[LabeledPair],
    extractor: &FeatureExtractor,
    config: &TrainConfig,
) -> Result<(LogisticModel, TrainReport), ScoreError> {
    let xs: Vec<[f64; FEATURE_DIM]> = pairs
        .iter()
        .map(|p| extractor.extract(&p.query, &p.context, p.title.as_deref()))
        .collect();
    let ys: Vec<bool> = pairs.iter().map(LabeledPair::positive).collect();
    train_on_features(&xs, &ys, config)
}

pub fn train_on_features(
    xs: &[[f64; FEATURE_DIM]],
    ys: &[bool],
    config: &TrainConfig,
) -> Result<(LogisticModel, TrainReport), ScoreError> {
    if !ys.iter().any(|&y| y) || ys.iter().all(|&y| y) {
        return Err(ScoreError::OneClass);
    }
    let mut model = LogisticModel::default();
    let initial_loss = objective(&model, xs, ys);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let batch = config.batch_size.max(1);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let bx: Vec<[f64; FEATURE_DIM]> = chunk.iter().map(|&i| xs[i]).collect();
            let by: Vec<bool> = chunk.iter().map(|&i| ys[i]).collect();
            let (gw, gb) = gradient(&model, &bx, &by);
            let step = config.learning_rate / chunk.len() as f64;
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= step * g;
            }
            model.bias -= step * gb;
        }
        let loss = objective(&model, xs, ys);
        if !loss.is_finite() {
            return Err(ScoreError::NonFinite { epoch, loss });
        }
        log::debug!("epoch {epoch}: loss {loss:.6}");
        epoch_losses.push(loss);
    }
    Ok((
        model,
        TrainReport {
            initial_loss,
            epoch_losses,
        },
    ))
}

/// The built-in lexical scorer.
#[derive(Debug, Clone, Default)]
pub struct LogisticScorer {
    pub model: LogisticModel,
    pub extractor: FeatureExtractor,
}

impl LogisticScorer {
    pub fn new(model: LogisticModel, extractor: FeatureExtractor) -> Self {
        Self { model, extractor }
    }

    pub fn score_one(&self, query: &str, context: &str, title: Option<&str>) -> f64 {
        self.model.predict(&self.extractor.extract(query, context, title))
    }
}

impl Scorer for LogisticScorer {
    fn score_batch(&self, query: &str, contexts: &[ContextItem]) -> Result<Vec<f64>, ScoreError> {
        Ok(contexts
            .iter()
            .map(|c| self.score_one(query, &c.text, c.title.as_deref()))
            .collect())
    }

    fn describe(&self) -> String {
        format!("builtin:{}", self.model.feature_spec_version)
    }
}

/// Fixed scores by candidate id; anything absent gets `default`.
#[derive(Debug, Clone, Default)]
pub struct TableScorer {
    pub scores: HashMap<CandidateId, f64>,
    pub default: f64,
}

impl TableScorer {
    pub fn new(default: f64) -> Self {
        Self {
            scores: HashMap::new(),
            default,
        }
    }

    pub fn with(mut self, id: CandidateId, score: f64) -> Self {
        self.scores.insert(id, score);
        self
    }
}

impl Scorer for TableScorer {
    fn score_batch(&self, _query: &str, contexts: &[ContextItem]) -> Result<Vec<f64>, ScoreError> {
        Ok(contexts
            .iter()
            .map(|c| self.scores.get(&c.id).copied().unwrap_or(self.default))
            .collect())
    }

    fn describe(&self) -> String {
        "table".into()
    }
}

/// Memoizes scores per `(query, candidate)`. Scores do not depend on any
/// threshold or cap, so one cache serves a whole sweep.
pub struct CachingScorer<'a> {
    inner: &'a dyn Scorer,
    cache: Mutex<HashMap<(String, CandidateId), f64>>,
}

impl<'a> CachingScorer<'a> {
    pub fn new(inner: &'a dyn Scorer) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

impl Scorer for CachingScorer<'_> {
    fn score_batch(&self, query: &str, contexts: &[ContextItem]) -> Result<Vec<f64>, ScoreError> {
        let mut out = vec![f64::NAN; contexts.len()];
        let mut missing = Vec::new();
        {
            let cache = self.cache.lock().expect("cache lock");
            for (i, c) in contexts.iter().enumerate() {
                match cache.get(&(query.to_string(), c.id.clone())) {
                    Some(&s) => out[i] = s,
                    None => missing.push(i),
                }
            }
        }
        if !missing.is_empty() {
            let todo: Vec<ContextItem> = missing.iter().map(|&i| contexts[i].clone()).collect();
            let fresh = self.inner.score_batch(query, &todo)?;
            validate_scores(&fresh, todo.len())?;
            let mut cache = self.cache.lock().expect("cache lock");
            for (&i, s) in missing.iter().zip(fresh) {
                out[i] = s;
                cache.insert((query.to_string(), contexts[i].id.clone()), s);
            }
        }
        Ok(out)
    }

    fn describe(&self) -> String {
        format!("cached({})", self.inner.describe())
    }
}

#[derive(Serialize)]
struct WireContext<'a> {
    id: String,
    text: &'a str,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    query: &'a str,
    contexts: Vec<WireContext<'a>>,
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct Health {
    pub status: String,
    #[serde(default)]
    pub model: String,
}

/// Minimal JSON-over-HTTP client shared by remote scorers and adapters.
#[derive(Clone)]
pub(crate) struct HttpJson {
    pub(crate) base: String,
    agent: ureq::Agent,
}

impl HttpJson {
    pub(crate) fn new(endpoint: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base: endpoint.trim_end_matches('/').to_string(),
            agent,
        }
    }

    fn map_err(&self, e: ureq::Error) -> ScoreError {
        let endpoint = self.base.clone();
        match e {
            ureq::Error::Timeout(_) => ScoreError::Timeout { endpoint },
            ureq::Error::Io(io) if matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) => {
                ScoreError::Timeout { endpoint }
            }
            ureq::Error::StatusCode(status) => ScoreError::Status { endpoint, status },
            ureq::Error::Json(j) => ScoreError::Protocol(j.to_string()),
            other => ScoreError::Connect {
                endpoint,
                reason: other.to_string(),
            },
        }
    }

    fn check_status(&self, status: u16) -> Result<(), ScoreError> {
        if (200..300).contains(&status) {
            Ok(())
        } else {
            Err(ScoreError::Status {
                endpoint: self.base.clone(),
                status,
            })
        }
    }

    pub(crate) fn get<T: for<'de> Deserialize<'de>>(&self, path: &str) -> Result<T, ScoreError> {
        let mut resp = self.agent.get(&format!("{}{path}", self.base)).call().map_err(|e| self.map_err(e))?;
        self.check_status(resp.status().as_u16())?;
        resp.body_mut().read_json().map_err(|e| match self.map_err(e) {
            ScoreError::Connect { reason, .. } => ScoreError::Protocol(reason),
            other => other,
        })
    }

    pub(crate) fn post<B: Serialize, T: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Result<T, ScoreError> {
        let mut resp = self
            .agent
            .post(&format!("{}{path}", self.base))
            .send_json(body)
            .map_err(|e| self.map_err(e))?;
        self.check_status(resp.status().as_u16())?;
        resp.body_mut().read_json().map_err(|e| match self.map_err(e) {
            ScoreError::Connect { reason, .. } => ScoreError::Protocol(reason),
            other => other,
        })
    }

    /// GET /health; any failure is reported as a connection error.
    pub(crate) fn health(&self) -> Result<Health, ScoreError> {
        let h: Health = self.get("/health").map_err(|e| match e {
            ScoreError::Connect { .. } | ScoreError::Timeout { .. } => e,
            other => ScoreError::Connect {
                endpoint: self.base.clone(),
                reason: other.to_string(),
            },
        })?;
        if h.status != "ok" {
            return Err(ScoreError::Connect {
                endpoint: self.base.clone(),
                reason: format!("health status {:?}", h.status),
            });
        }
        Ok(h)
    }
}

/// Client for an external scorer. Inputs are split into batches of at most
/// `batch_size`, up to `max_in_flight` of which are outstanding at once;
/// results are reassembled in input order and any failure fails the call.
pub struct RemoteScorer {
    http: HttpJson,
    batch_size: usize,
    max_in_flight: usize,
    healthy: Mutex<Option<Health>>,
}

impl RemoteScorer {
    /// Does not touch the network; health is checked on first use.
    pub fn connect(endpoint: &str, timeout: Duration, batch_size: usize) -> Self {
        Self {
            http: HttpJson::new(endpoint, timeout),
            batch_size: batch_size.max(1),
            max_in_flight: 4,
            healthy: Mutex::new(None),
        }
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn health(&self) -> Result<Health, ScoreError> {
        let mut h = self.healthy.lock().expect("health lock");
        if let Some(ok) = h.as_ref() {
            return Ok(ok.clone());
        }
        let fresh = self.http.health()?;
        *h = Some(fresh.clone());
        Ok(fresh)
    }

    fn score_chunk(&self, query: &str, chunk: &[ContextItem]) -> Result<Vec<f64>, ScoreError> {
        let req = ScoreRequest {
            query,
            contexts: chunk
                .iter()
                .map(|c| WireContext {
                    id: c.id.wire_id(),
                    text: &c.text,
                })
                .collect(),
        };
        let resp: ScoreResponse = self.http.post("/score", &req)?;
        validate_scores(&resp.scores, chunk.len())?;
        Ok(resp.scores)
    }
}

impl Scorer for RemoteScorer {
    fn score_batch(&self, query: &str, contexts: &[ContextItem]) -> Result<Vec<f64>, ScoreError> {
        if contexts.is_empty() {
            return Ok(Vec::new());
        }
        self.health()?;
        let chunks: Vec<&[ContextItem]> = contexts.chunks(self.batch_size).collect();
        let mut out = Vec::with_capacity(contexts.len());
        for wave in chunks.chunks(self.max_in_flight) {
            let results: Vec<Result<Vec<f64>, ScoreError>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave.iter().map(|c| s.spawn(move || self.score_chunk(query, c))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(ScoreError::Protocol("scorer worker panicked".into()))))
                    .collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }

    fn describe(&self) -> String {
        format!("remote:{}", self.http.base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sid(t: &str, i: i64) -> CandidateId {
        CandidateId::Sentence(SentenceId::new(t, i).unwrap())
    }

    fn ctx(id: CandidateId, text: &str) -> ContextItem {
        ContextItem { id, title: None, text: text.into() }
    }

    #[test]
    fn identical_query_and_context_has_full_overlap() {
        let f = FeatureExtractor::default();
        let x = f.extract("the cat sat", "the cat sat", None);
        assert_eq!(x[0], 1.0);
        assert_eq!(x[1], 1.0);
        assert_eq!(x[2], 1.0);
        assert!((x[5] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_pair_has_zero_overlap_features() {
        let f = FeatureExtractor::default();
        let x = f.extract("alpha beta", "gamma delta epsilon", None);
        assert_eq!([x[0], x[1], x[2], x[5]], [0.0; 4]);
        assert!((x[3] - 4f64.ln()).abs() < 1e-12);
        let e = f.extract("", "", None);
        assert!(e.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn hand_computed_features_on_fixed_pair() {
        // query  (5 tokens): who founded the florida panthers
        // context with title (12 tokens):
        //   florida panthers | the florida panthers were founded in 1993 by the owner
        // distinct query terms {who, founded, the, florida, panthers}; common = 4 of 5
        // query bigrams: (who founded)(founded the)(the florida)(florida panthers) → 2 of 4 in context
        let mut df = HashMap::new();
        df.insert("who".to_string(), 9u32);
        df.insert("founded".to_string(), 4);
        df.insert("the".to_string(), 9);
        df.insert("florida".to_string(), 1);
        df.insert("panthers".to_string(), 0);
        let table = IdfTable::from_counts(9, df);
        let w = |df: f64| (10.0 / (df + 1.0)).ln() + 1.0;
        let f = FeatureExtractor::new(Some(Arc::new(table)));
        let x = f.extract(
            "Who founded the Florida Panthers?",
            "The Florida Panthers were founded in 1993 by the owner.",
            Some("Florida Panthers"),
        );
        assert!((x[0] - 0.8).abs() < 1e-12);
        assert!((x[1] - 0.5).abs() < 1e-12);
        let total = w(9.0) + w(4.0) + w(9.0) + w(1.0) + w(0.0);
        let hit = w(4.0) + w(9.0) + w(1.0) + w(0.0);
        assert!((x[2] - hit / total).abs() < 1e-12);
        assert!((x[3] - 13f64.ln()).abs() < 1e-12);
        assert_eq!(x[4], 1.0);
        // cosine: the, florida, panthers each occur twice → weight (1 + ln 2) w
        let l2 = 1.0 + 2f64.ln();
        let qv = [w(9.0), w(4.0), w(9.0), w(1.0), w(0.0)];
        let c_twice = [l2 * w(9.0), l2 * w(1.0), l2 * w(0.0)];
        // founded once; were, in, 1993, by, owner have df 0
        let c_once = w(4.0) * w(4.0) + 5.0 * w(0.0) * w(0.0);
        let dot = w(9.0) * c_twice[0] + w(1.0) * c_twice[1] + w(0.0) * c_twice[2] + w(4.0) * w(4.0);
        let nq = qv.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nc = (c_twice.iter().map(|v| v * v).sum::<f64>() + c_once).sqrt();
        assert!((x[5] - dot / (nq * nc)).abs() < 1e-12);

        let bare = f.extract("Who founded the Florida Panthers?", "The Florida Panthers were founded in 1993 by the owner.", None);
        assert!((bare[3] - 11f64.ln()).abs() < 1e-12);
        assert_eq!(bare[4], 0.0);
    }

    #[test]
    fn zero_model_scores_one_half() {
        let s = LogisticScorer::default();
        let got = s.score_batch("q", &[ctx(sid("A", 0), "anything"), ctx(sid("B", 1), "")]).unwrap();
        assert_eq!(got, vec![0.5, 0.5]);
        assert!(score_candidates(&s, "q", &[]).unwrap().is_empty());
    }

    #[test]
    fn predictions_stay_strictly_inside_unit_interval() {
        let m = LogisticModel {
            weights: vec![1e6; FEATURE_DIM],
            ..Default::default()
        };
        let p = m.predict(&[1.0; FEATURE_DIM]);
        assert!(p < 1.0 && p > 0.0);
        let q = m.predict(&[-1.0; FEATURE_DIM]);
        assert!(q > 0.0 && q < 1.0);
    }

    fn pair(q: &str, c: &str, pos: bool) -> LabeledPair {
        LabeledPair {
            query_id: "q".into(),
            query: q.into(),
            context_id: sid("A", 0),
            title: None,
            context: c.into(),
            label: if pos { PairLabel::Positive } else { PairLabel::Negative },
            provenance: if pos { Provenance::GroundTruth } else { Provenance::UpstreamSampled },
        }
    }

    #[test]
    fn one_class_data_is_rejected() {
        let f = FeatureExtractor::default();
        let data = vec![pair("a", "a", true)];
        assert!(matches!(train_logistic(&data, &f, &TrainConfig::default()), Err(ScoreError::OneClass)));
    }

    #[test]
    fn overfits_a_single_positive() {
        let f = FeatureExtractor::default();
        let data = vec![pair("red apple", "red apple pie", true), pair("red apple", "blue sky", false)];
        let cfg = TrainConfig {
            epochs: 2000,
            learning_rate: 0.5,
            ..Default::default()
        };
        let (m, report) = train_logistic(&data, &f, &cfg).unwrap();
        let s = LogisticScorer::new(m, f);
        assert!(s.score_one("red apple", "red apple pie", None) > 0.9);
        assert!(report.epoch_losses.last().unwrap() <= &report.initial_loss);
    }

    #[test]
    fn model_json_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = LogisticModel {
            weights: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            bias: -1.0,
            ..Default::default()
        };
        m.save(&p).unwrap();
        assert_eq!(LogisticModel::load(&p).unwrap(), m);
        std::fs::write(&p, r#"{"feature_spec_version":"lexical-v1","weights":[1.0],"bias":0}"#).unwrap();
        assert!(matches!(LogisticModel::load(&p), Err(ScoreError::Model(_))));
    }

    #[test]
    fn caching_scorer_returns_inner_scores() {
        let inner = TableScorer::new(0.1).with(sid("A", 0), 0.9);
        let c = CachingScorer::new(&inner);
        let items = [ctx(sid("A", 0), ""), ctx(sid("B", 0), "")];
        assert_eq!(c.score_batch("q", &items).unwrap(), vec![0.9, 0.1]);
        assert_eq!(c.cached(), 2);
        assert_eq!(c.score_batch("q", &items[..1]).unwrap(), vec![0.9]);
    }
}
