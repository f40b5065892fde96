//! Readers and verifiers that consume the selected sentences.
//!
//! Each adapter sees the query and a [`ReaderContext`]: sentences sorted by
//! `(title, sent_index)` and joined by single spaces. Baselines are lexical
//! and deterministic; oracle adapters consult the query's gold annotations.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SentenceId};
use crate::query::{Label, Query, Task};
use crate::scoring::{HttpJson, IdfTable, ScoreError};
use crate::text::{negation_count, spans, tokenize};

/// At most this many predicted evidence sentences count for FEVER.
pub const FEVER_EVIDENCE_CAP: usize = 5;
/// Longest answer window the baseline reader considers, in tokens.
pub const MAX_ANSWER_TOKENS: usize = 8;

const WH_WORDS: &[&str] = &["what", "which", "who", "whom", "whose", "when", "where", "why", "how"];
const AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "do", "does", "did", "can", "could", "will", "would", "has", "have", "had", "should",
];
const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "of", "in", "on", "at", "to", "for", "by", "with", "from", "is", "are", "was",
    "were", "be", "been", "as", "that", "this", "it", "he", "she", "they", "his", "her", "their", "its", "s",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReaderContext {
    pub sentences: Vec<(SentenceId, String)>,
}

impl ReaderContext {
    /// Resolves `ids` against the corpus in `(title, sent_index)` order.
    /// Unresolvable ids and blank sentinels are dropped.
    pub fn from_ids<'a>(corpus: &Corpus, ids: impl IntoIterator<Item = &'a SentenceId>) -> Self {
        let ordered: BTreeSet<&SentenceId> = ids.into_iter().collect();
        let sentences = ordered
            .into_iter()
            .filter_map(|id| match corpus.resolve_sentence(id) {
                Ok(t) if !t.is_empty() => Some((id.clone(), t.to_string())),
                _ => None,
            })
            .collect();
        Self { sentences }
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &SentenceId> {
        self.sentences.iter().map(|(id, _)| id)
    }

    pub fn text(&self) -> String {
        let parts: Vec<&str> = self.sentences.iter().map(|(_, t)| t.as_str()).collect();
        parts.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionKind {
    Qa,
    Verification,
}

impl From<Task> for PredictionKind {
    fn from(t: Task) -> Self {
        match t {
            Task::Hotpot => PredictionKind::Qa,
            Task::Fever => PredictionKind::Verification,
        }
    }
}

/// The ŷ half of a run's output; `predicted_evidence` is the S half as
/// submitted to the evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamPrediction {
    pub query_id: String,
    pub kind: PredictionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    pub predicted_evidence: Vec<SentenceId>,
}

/// `"yes"`, `"no"`, the empty answer, or a substring of `context`.
pub fn is_valid_answer(answer: &str, context: &str) -> bool {
    answer.is_empty() || answer == "yes" || answer == "no" || context.contains(answer)
}

pub trait QaReader: Send + Sync {
    fn answer(&self, query: &Query, context: &ReaderContext) -> Result<String, ScoreError>;
    fn describe(&self) -> String;
}

pub trait Verifier: Send + Sync {
    fn verify(&self, query: &Query, context: &ReaderContext) -> Result<Label, ScoreError>;
    fn describe(&self) -> String;
}

/// Lexical span picker.
///
/// Candidates are token windows of up to [`MAX_ANSWER_TOKENS`] that share no
/// token with the question and neither start nor end with a stopword. A
/// window scores the summed idf-weighted overlap between the question (wh
/// words removed) and every sentence containing it. Ties prefer more
/// capitalized or numeric tokens, then the earlier occurrence, then the
/// shorter window.
#[derive(Debug, Clone, Default)]
pub struct BaselineReader {
    idf: Option<Arc<IdfTable>>,
}

impl BaselineReader {
    pub fn new(idf: Option<Arc<IdfTable>>) -> Self {
        Self { idf }
    }

    fn weight(&self, t: &str) -> f64 {
        self.idf.as_ref().map_or(1.0, |i| i.weight(t))
    }

    pub fn read(&self, question: &str, context: &ReaderContext) -> String {
        if context.is_empty() {
            return String::new();
        }
        let q = tokenize(question);
        if q.first().is_some_and(|t| AUXILIARIES.contains(&t.as_str())) {
            return yes_no(&q, context);
        }
        let q_all: BTreeSet<&str> = q.iter().map(String::as_str).collect();
        let q_content: BTreeSet<&str> = q_all.iter().copied().filter(|t| !WH_WORDS.contains(t)).collect();

        let full = context.text();
        // window tokens -> (score, tie-break key, byte range in `full`)
        let mut best: HashMap<Vec<String>, (f64, usize, (usize, usize))> = HashMap::new();
        let mut offset = 0;
        for (_, sentence) in &context.sentences {
            let sp: Vec<(usize, usize)> = spans(sentence).collect();
            let toks: Vec<String> = sp.iter().map(|&(a, b)| sentence[a..b].to_lowercase()).collect();
            let sset: BTreeSet<&str> = toks.iter().map(String::as_str).collect();
            let overlap: f64 = q_content.intersection(&sset).map(|t| self.weight(t)).sum();
            let mut seen_here: BTreeSet<Vec<String>> = BTreeSet::new();
            for i in 0..toks.len() {
                for j in i..(i + MAX_ANSWER_TOKENS).min(toks.len()) {
                    if q_all.contains(toks[j].as_str()) {
                        break;
                    }
                    if STOPWORDS.contains(&toks[i].as_str()) || STOPWORDS.contains(&toks[j].as_str()) {
                        continue;
                    }
                    let key = toks[i..=j].to_vec();
                    let range = (offset + sp[i].0, offset + sp[j].1);
                    let first_time = seen_here.insert(key.clone());
                    let entry = best.entry(key).or_insert((0.0, salience(&full[range.0..range.1]), range));
                    if first_time {
                        entry.0 += overlap;
                    }
                }
            }
            offset += sentence.len() + 1;
        }
        best.into_iter()
            .max_by(|a, b| {
                let (sa, ka, ra) = a.1;
                let (sb, kb, rb) = b.1;
                sa.total_cmp(&sb)
                    .then(ka.cmp(&kb))
                    .then(rb.0.cmp(&ra.0))
                    .then((rb.1 - rb.0).cmp(&(ra.1 - ra.0)))
            })
            .map(|(_, (_, _, r))| full[r.0..r.1].to_string())
            .unwrap_or_default()
    }
}

/// Count of tokens that start uppercase or are numeric.
fn salience(span: &str) -> usize {
    spans(span)
        .filter(|&(a, b)| {
            let c = span[a..b].chars().next().unwrap_or(' ');
            c.is_uppercase() || c.is_numeric()
        })
        .count()
}

/// "yes" when question and context agree in negation parity, else "no".
fn yes_no(q: &[String], context: &ReaderContext) -> String {
    let ctx = tokenize(&context.text());
    if (negation_count(q) + negation_count(&ctx)) % 2 == 0 {
        "yes".into()
    } else {
        "no".into()
    }
}

impl QaReader for BaselineReader {
    fn answer(&self, query: &Query, context: &ReaderContext) -> Result<String, ScoreError> {
        Ok(self.read(&query.text, context))
    }

    fn describe(&self) -> String {
        "baseline".into()
    }
}

/// Label from the best-overlapping sentence: overlap is the fraction of the
/// claim's distinct tokens present in the sentence. At or above
/// `min_overlap`, SUPPORTS when claim and sentence negation counts have even
/// total parity and REFUTES when odd; below it, or with no context, NEI.
#[derive(Debug, Clone)]
pub struct BaselineVerifier {
    pub min_overlap: f64,
}

impl Default for BaselineVerifier {
    fn default() -> Self {
        Self { min_overlap: 0.5 }
    }
}

impl BaselineVerifier {
    pub fn judge(&self, claim: &str, context: &ReaderContext) -> Label {
        let c = tokenize(claim);
        let cset: BTreeSet<&str> = c.iter().map(String::as_str).collect();
        if cset.is_empty() {
            return Label::NotEnoughInfo;
        }
        let mut best: Option<(f64, Vec<String>)> = None;
        for (_, s) in &context.sentences {
            let toks = tokenize(s);
            let hit = toks.iter().map(String::as_str).collect::<BTreeSet<_>>().intersection(&cset).count();
            let ov = hit as f64 / cset.len() as f64;
            if best.as_ref().is_none_or(|(b, _)| ov > *b) {
                best = Some((ov, toks));
            }
        }
        match best {
            Some((ov, toks)) if ov >= self.min_overlap => {
                if (negation_count(&c) + negation_count(&toks)) % 2 == 0 {
                    Label::Supports
                } else {
                    Label::Refutes
                }
            }
            _ => Label::NotEnoughInfo,
        }
    }
}

impl Verifier for BaselineVerifier {
    fn verify(&self, query: &Query, context: &ReaderContext) -> Result<Label, ScoreError> {
        Ok(self.judge(&query.text, context))
    }

    fn describe(&self) -> String {
        "baseline".into()
    }
}

/// A perfect reader: returns the gold answer whenever it is recoverable from
/// the context (present as a substring, or a yes/no answer), else "".
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleReader;

impl QaReader for OracleReader {
    fn answer(&self, query: &Query, context: &ReaderContext) -> Result<String, ScoreError> {
        let Some(gold) = query.answer.as_deref() else {
            return Ok(String::new());
        };
        if context.is_empty() {
            return Ok(String::new());
        }
        let lower = gold.to_lowercase();
        if lower == "yes" || lower == "no" {
            return Ok(lower);
        }
        let text = context.text();
        if text.contains(gold) {
            return Ok(gold.to_string());
        }
        // case-insensitive fallback keeps the answer a verbatim substring
        let tl = text.to_lowercase();
        if tl.len() == text.len() {
            if let Some(at) = tl.find(&lower) {
                return Ok(text[at..at + lower.len()].to_string());
            }
        }
        Ok(String::new())
    }

    fn describe(&self) -> String {
        "oracle".into()
    }
}

/// A perfect verifier: the gold label when the gold is NEI or some evidence
/// group is fully present in the context, else NEI.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleVerifier;

impl Verifier for OracleVerifier {
    fn verify(&self, query: &Query, context: &ReaderContext) -> Result<Label, ScoreError> {
        let Some(gold) = query.label else {
            return Ok(Label::NotEnoughInfo);
        };
        if gold == Label::NotEnoughInfo {
            return Ok(gold);
        }
        let have: BTreeSet<&SentenceId> = context.ids().collect();
        if query.evidence.iter().any(|g| g.iter().all(|s| have.contains(s))) {
            Ok(gold)
        } else {
            Ok(Label::NotEnoughInfo)
        }
    }

    fn describe(&self) -> String {
        "oracle".into()
    }
}

#[derive(Serialize)]
struct QaRequest<'a> {
    query: &'a str,
    context: String,
}

#[derive(Deserialize)]
struct QaResponse {
    answer: String,
}

#[derive(Serialize)]
struct VerifyRequest<'a> {
    claim: &'a str,
    context: String,
}

#[derive(Deserialize)]
struct VerifyResponse {
    label: String,
}

/// `POST /qa {"query", "context"} → {"answer"}`.
pub struct RemoteReader {
    http: HttpJson,
}

impl RemoteReader {
    pub fn connect(endpoint: &str, timeout: Duration) -> Self {
        Self {
            http: HttpJson::new(endpoint, timeout),
        }
    }
}

impl QaReader for RemoteReader {
    fn answer(&self, query: &Query, context: &ReaderContext) -> Result<String, ScoreError> {
        let resp: QaResponse = self.http.post(
            "/qa",
            &QaRequest {
                query: &query.text,
                context: context.text(),
            },
        )?;
        Ok(resp.answer)
    }

    fn describe(&self) -> String {
        format!("remote:{}", self.http.base)
    }
}

/// `POST /verify {"claim", "context"} → {"label"}`.
pub struct RemoteVerifier {
    http: HttpJson,
}

impl RemoteVerifier {
    pub fn connect(endpoint: &str, timeout: Duration) -> Self {
        Self {
            http: HttpJson::new(endpoint, timeout),
        }
    }
}

impl Verifier for RemoteVerifier {
    fn verify(&self, query: &Query, context: &ReaderContext) -> Result<Label, ScoreError> {
        let resp: VerifyResponse = self.http.post(
            "/verify",
            &VerifyRequest {
                claim: &query.text,
                context: context.text(),
            },
        )?;
        resp.label
            .parse()
            .map_err(|_| ScoreError::Protocol(format!("unknown label {:?}", resp.label)))
    }

    fn describe(&self) -> String {
        format!("remote:{}", self.http.base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(items: &[(&str, u32, &str)]) -> ReaderContext {
        ReaderContext {
            sentences: items
                .iter()
                .map(|(t, i, s)| (SentenceId::new(t, i64::from(*i)).unwrap(), s.to_string()))
                .collect(),
        }
    }

    fn query(task: Task, text: &str) -> Query {
        Query {
            id: "q".into(),
            task,
            text: text.into(),
            answer: None,
            label: None,
            evidence: vec![],
        }
    }

    #[test]
    fn baseline_reader_picks_the_shared_entity() {
        let c = ctx(&[
            (
                "Florida Panthers",
                0,
                "The Florida Panthers are a professional ice hockey team based in the Miami metropolitan area.",
            ),
            (
                "Wojtek Wolski",
                1,
                "In the NHL, he has played for the Colorado Avalanche, Phoenix Coyotes, New York Rangers, Florida Panthers, and the Washington Capitals.",
            ),
        ]);
        let a = BaselineReader::default().read("Wojtek Wolski played for what team based in the Miami metropolitan area?", &c);
        assert_eq!(a, "Florida Panthers");
        assert!(is_valid_answer(&a, &c.text()));
    }

    #[test]
    fn baseline_reader_on_empty_context_is_empty() {
        assert_eq!(BaselineReader::default().read("Who?", &ReaderContext::default()), "");
    }

    #[test]
    fn yes_no_follows_negation_parity() {
        let r = BaselineReader::default();
        let c = ctx(&[("A", 0, "Both bands are from Oxford.")]);
        assert_eq!(r.read("Are both bands from Oxford?", &c), "yes");
        let n = ctx(&[("A", 0, "The band is not from Oxford.")]);
        assert_eq!(r.read("Is the band from Oxford?", &n), "no");
    }

    #[test]
    fn baseline_verifier_rule_table() {
        let v = BaselineVerifier::default();
        // claim tokens {paris, is, the, capital, of, france}: all 6 in the sentence
        let c = ctx(&[("Paris", 0, "Paris is the capital of France.")]);
        assert_eq!(v.judge("Paris is the capital of France.", &c), Label::Supports);
        // 6 of 6 claim tokens present, one negation in the sentence
        let n = ctx(&[("Paris", 0, "Paris is not the capital of France.")]);
        assert_eq!(v.judge("Paris is the capital of France.", &n), Label::Refutes);
        // 1 of 6 shared: below 0.5
        let low = ctx(&[("Oslo", 0, "Oslo is cold.")]);
        assert_eq!(v.judge("Paris was the capital of France.", &low), Label::NotEnoughInfo);
        assert_eq!(v.judge("anything", &ReaderContext::default()), Label::NotEnoughInfo);
    }

    #[test]
    fn oracle_adapters_echo_gold_when_covered() {
        let c = ctx(&[("A", 0, "The answer is Florida Panthers.")]);
        let mut q = query(Task::Hotpot, "q");
        q.answer = Some("Florida Panthers".into());
        assert_eq!(OracleReader.answer(&q, &c).unwrap(), "Florida Panthers");
        assert_eq!(OracleReader.answer(&q, &ReaderContext::default()).unwrap(), "");

        let mut f = query(Task::Fever, "claim");
        f.label = Some(Label::Refutes);
        f.evidence = vec![vec![SentenceId::new("B", 0).unwrap()], vec![SentenceId::new("A", 0).unwrap()]];
        assert_eq!(OracleVerifier.verify(&f, &c).unwrap(), Label::Refutes);
        f.evidence = vec![vec![SentenceId::new("B", 0).unwrap()]];
        assert_eq!(OracleVerifier.verify(&f, &c).unwrap(), Label::NotEnoughInfo);
    }

    #[test]
    fn context_orders_by_title_then_index_and_joins_with_spaces() {
        let corpus = crate::synthetic::fig2_corpus();
        let ids = [
            SentenceId::new("Wojtek Wolski", 1).unwrap(),
            SentenceId::new("Florida Panthers", 0).unwrap(),
        ];
        let c = ReaderContext::from_ids(&corpus, &ids);
        assert_eq!(c.sentences[0].0.title.as_str(), "Florida Panthers");
        assert_eq!(c.text(), format!("{} {}", c.sentences[0].1, c.sentences[1].1));
    }
}
