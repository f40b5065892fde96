//! Metrics with the semantics of the official HotpotQA and FEVER evaluators,
//! plus per-stage retrieval and oracle scores computed from pipeline traces.
//!
//! All aggregates are arithmetic means over the gold examples. Joint scores
//! are products taken per example before averaging.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Corpus, ParagraphId, SentenceId};
use crate::downstream::FEVER_EVIDENCE_CAP;
use crate::pipeline::PipelineRun;
use crate::query::{Label, Query, Task};
use crate::text::canonical_title;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("runs mix tasks {0} and {1}")]
    MixedTasks(Task, Task),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const PUNCTUATION: &str = r##"!"#$%&'()*+,-./:;<=>?@[\]^_`{|}~"##;
static ARTICLES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").expect("valid regex"));

/// Lowercase, strip ASCII punctuation, drop the articles a/an/the, collapse
/// whitespace. Punctuation goes before articles so that "the," loses its
/// article.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let no_punc: String = lower.chars().filter(|c| !PUNCTUATION.contains(*c)).collect();
    let no_art = ARTICLES.replace_all(&no_punc, " ");
    no_art.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AnswerScores {
    pub em: f64,
    pub f1: f64,
    pub p: f64,
    pub r: f64,
}

/// Token-bag F1 over normalized answers. A yes/no/noanswer answer on either
/// side scores zero unless both sides normalize identically.
pub fn answer_em_f1(pred: &str, gold: &str) -> AnswerScores {
    let np = normalize_answer(pred);
    let ng = normalize_answer(gold);
    let em = if np == ng { 1.0 } else { 0.0 };
    let special = ["yes", "no", "noanswer"];
    if (special.contains(&np.as_str()) || special.contains(&ng.as_str())) && np != ng {
        return AnswerScores { em, ..Default::default() };
    }
    let pt: Vec<&str> = np.split_whitespace().collect();
    let gt: Vec<&str> = ng.split_whitespace().collect();
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for t in &pt {
        counts.entry(t).or_default().0 += 1;
    }
    for t in &gt {
        counts.entry(t).or_default().1 += 1;
    }
    let same: usize = counts.values().map(|(a, b)| a.min(b)).sum::<usize>();
    if same == 0 {
        return AnswerScores { em, ..Default::default() };
    }
    let p = same as f64 / pt.len() as f64;
    let r = same as f64 / gt.len() as f64;
    AnswerScores {
        em,
        f1: 2.0 * p * r / (p + r),
        p,
        r,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SetScores {
    pub em: f64,
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

/// Precision is 1 when both sets are empty and 0 when only the prediction
/// is; recall is 1 when both are empty and 0 when only the gold is.
pub fn set_retrieval_metrics<T: Ord>(pred: &BTreeSet<T>, gold: &BTreeSet<T>) -> SetScores {
    let tp = pred.intersection(gold).count() as f64;
    let both_empty = pred.is_empty() && gold.is_empty();
    let p = if pred.is_empty() {
        if both_empty { 1.0 } else { 0.0 }
    } else {
        tp / pred.len() as f64
    };
    let r = if gold.is_empty() {
        if both_empty { 1.0 } else { 0.0 }
    } else {
        tp / gold.len() as f64
    };
    SetScores {
        em: if pred == gold { 1.0 } else { 0.0 },
        p,
        r,
        f1: harmonic(p, r),
    }
}

/// Supporting-fact scores as the official evaluator computes them: an empty
/// prediction has precision 0 and an empty gold has recall 0, even when
/// both are empty.
pub fn supporting_fact_metrics<T: Ord>(pred: &BTreeSet<T>, gold: &BTreeSet<T>) -> SetScores {
    let tp = pred.intersection(gold).count() as f64;
    let p = if pred.is_empty() { 0.0 } else { tp / pred.len() as f64 };
    let r = if gold.is_empty() { 0.0 } else { tp / gold.len() as f64 };
    SetScores {
        em: if pred == gold { 1.0 } else { 0.0 },
        p,
        r,
        f1: harmonic(p, r),
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

pub type JointScores = SetScores;

/// `p_j = p_a·p_s`, `r_j = r_a·r_s`, `em_j = em_a·em_s`, `f1_j` harmonic.
pub fn joint_metrics(a: &AnswerScores, s: &SetScores) -> JointScores {
    let p = a.p * s.p;
    let r = a.r * s.r;
    SetScores {
        em: a.em * s.em,
        p,
        r,
        f1: harmonic(p, r),
    }
}

/// Per-example scores; groups that do not apply to the task are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerExampleScores {
    pub query_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<AnswerScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<SetScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_correct: Option<bool>,
    /// Gold is NEI or the chosen evidence rule holds on the capped evidence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_complete: Option<bool>,
    /// Official macro evidence precision / recall contributions; `None` for
    /// NEI gold, which the official scorer leaves out of both averages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paragraph: Option<SetScores>,
}

impl PerExampleScores {
    /// Answer EM for QA, label correctness for verification.
    pub fn is_correct(&self) -> bool {
        match (self.answer, self.label_correct) {
            (Some(a), _) => a.em == 1.0,
            (None, Some(l)) => l,
            _ => false,
        }
    }

    pub fn fever_point(&self) -> bool {
        self.label_correct == Some(true) && self.evidence_complete == Some(true)
    }
}

/// Aggregates in `[0, 1]`; `None` marks a metric that does not apply to the
/// configuration (rendered as "-").
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub count: usize,
    pub paragraph_em: Option<f64>,
    pub paragraph_precision: Option<f64>,
    pub paragraph_recall: Option<f64>,
    pub paragraph_f1: Option<f64>,
    pub mean_paragraphs: Option<f64>,
    pub sentence_em: Option<f64>,
    pub sentence_precision: Option<f64>,
    pub sentence_recall: Option<f64>,
    pub sentence_f1: Option<f64>,
    pub mean_sentences: Option<f64>,
    pub answer_em: Option<f64>,
    pub answer_f1: Option<f64>,
    pub answer_precision: Option<f64>,
    pub answer_recall: Option<f64>,
    pub joint_em: Option<f64>,
    pub joint_f1: Option<f64>,
    pub joint_precision: Option<f64>,
    pub joint_recall: Option<f64>,
    pub label_accuracy: Option<f64>,
    pub fever_score: Option<f64>,
    pub oracle_initial: Option<f64>,
    pub oracle_paragraph: Option<f64>,
    pub oracle_sentence: Option<f64>,
    pub label_f1_supports: Option<f64>,
    pub label_f1_refutes: Option<f64>,
    pub label_f1_nei: Option<f64>,
}

fn mean_by(xs: &[PerExampleScores], n: usize, f: impl Fn(&PerExampleScores) -> Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = xs.iter().filter_map(f).collect();
    if vals.is_empty() {
        return None;
    }
    Some(vals.iter().sum::<f64>() / n.max(1) as f64)
}

/// FEVER evidence rule for the score and for oracles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceSemantics {
    /// Any one complete annotated group suffices (official scorer).
    #[default]
    AnyGroup,
    /// The union of all annotated groups must be present.
    AllFacts,
}

impl std::str::FromStr for EvidenceSemantics {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "any_group" | "official" => Ok(Self::AnyGroup),
            "all_facts" => Ok(Self::AllFacts),
            other => Err(format!("unknown evidence semantics {other:?}")),
        }
    }
}

/// Gold NEI, or the evidence rule holds against `have`.
pub fn evidence_covered<T: Ord>(
    gold_label: Label,
    groups: &[Vec<T>],
    have: &BTreeSet<&T>,
    semantics: EvidenceSemantics,
) -> bool {
    if gold_label == Label::NotEnoughInfo {
        return true;
    }
    match semantics {
        EvidenceSemantics::AnyGroup => groups.iter().any(|g| g.iter().all(|x| have.contains(x))),
        EvidenceSemantics::AllFacts => !groups.is_empty() && groups.iter().flatten().all(|x| have.contains(x)),
    }
}

type Fact = (String, i64);

fn fact(id: &SentenceId) -> Fact {
    (id.title.as_str().to_string(), i64::from(id.sent_index))
}

fn parse_fact(v: &Value) -> Option<Fact> {
    let a = v.as_array()?;
    Some((canonical_title(a.first()?.as_str()?), a.get(1)?.as_i64()?))
}

/// Official HotpotQA prediction file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HotpotPredictions {
    pub answer: BTreeMap<String, String>,
    pub sp: BTreeMap<String, Vec<(String, i64)>>,
}

impl HotpotPredictions {
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let v: Value = serde_json::from_slice(&std::fs::read(path)?).map_err(|e| EvalError::Malformed {
            path: path.display().to_string(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        let mut out = Self::default();
        if let Some(a) = v.get("answer").and_then(Value::as_object) {
            for (k, x) in a {
                out.answer.insert(k.clone(), x.as_str().unwrap_or_default().to_string());
            }
        }
        if let Some(sp) = v.get("sp").and_then(Value::as_object) {
            for (k, xs) in sp {
                let facts = xs.as_array().map(|a| a.iter().filter_map(parse_fact).collect()).unwrap_or_default();
                out.sp.insert(k.clone(), facts);
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, serde_json::to_vec(self).expect("serializable"))?;
        Ok(())
    }
}

/// Per-example and aggregate answer / supporting-fact / joint scores.
/// A missing answer or sp entry scores zero and zeroes the joint scores.
pub fn evaluate_hotpot(preds: &HotpotPredictions, gold: &[Query]) -> (Vec<PerExampleScores>, MetricsReport) {
    let per: Vec<PerExampleScores> = gold
        .iter()
        .map(|q| {
            let answer = preds
                .answer
                .get(&q.id)
                .map(|a| answer_em_f1(a, q.answer.as_deref().unwrap_or_default()));
            let support = preds.sp.get(&q.id).map(|sp| {
                let pred: BTreeSet<Fact> = sp.iter().map(|(t, i)| (canonical_title(t), *i)).collect();
                let g: BTreeSet<Fact> = q.gold_sentences().iter().map(fact).collect();
                supporting_fact_metrics(&pred, &g)
            });
            let joint = match (&answer, &support) {
                (Some(a), Some(s)) => joint_metrics(a, s),
                _ => SetScores::default(),
            };
            PerExampleScores {
                query_id: q.id.clone(),
                answer: Some(answer.unwrap_or_default()),
                support: Some(support.unwrap_or_default()),
                joint: Some(joint),
                ..Default::default()
            }
        })
        .collect();
    let n = per.len();
    let report = MetricsReport {
        count: n,
        answer_em: mean_by(&per, n, |x| x.answer.map(|a| a.em)),
        answer_f1: mean_by(&per, n, |x| x.answer.map(|a| a.f1)),
        answer_precision: mean_by(&per, n, |x| x.answer.map(|a| a.p)),
        answer_recall: mean_by(&per, n, |x| x.answer.map(|a| a.r)),
        sentence_em: mean_by(&per, n, |x| x.support.map(|s| s.em)),
        sentence_precision: mean_by(&per, n, |x| x.support.map(|s| s.p)),
        sentence_recall: mean_by(&per, n, |x| x.support.map(|s| s.r)),
        sentence_f1: mean_by(&per, n, |x| x.support.map(|s| s.f1)),
        joint_em: mean_by(&per, n, |x| x.joint.map(|s| s.em)),
        joint_f1: mean_by(&per, n, |x| x.joint.map(|s| s.f1)),
        joint_precision: mean_by(&per, n, |x| x.joint.map(|s| s.p)),
        joint_recall: mean_by(&per, n, |x| x.joint.map(|s| s.r)),
        ..Default::default()
    };
    (per, report)
}

/// One line of the official FEVER prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeverPrediction {
    pub id: Value,
    pub predicted_label: String,
    pub predicted_evidence: Vec<(String, i64)>,
}

impl FeverPrediction {
    pub fn id_string(&self) -> String {
        match &self.id {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
}

pub fn load_fever_predictions(path: &Path) -> Result<Vec<FeverPrediction>, EvalError> {
    let raw = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| EvalError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            reason,
        };
        let v: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let id = v.get("id").cloned().ok_or_else(|| malformed("missing \"id\"".into()))?;
        let predicted_label = v
            .get("predicted_label")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed("missing \"predicted_label\"".into()))?
            .to_string();
        let predicted_evidence = v
            .get("predicted_evidence")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(parse_fact).collect())
            .unwrap_or_default();
        out.push(FeverPrediction {
            id,
            predicted_label,
            predicted_evidence,
        });
    }
    Ok(out)
}

pub fn save_fever_predictions(path: &Path, preds: &[FeverPrediction]) -> Result<(), EvalError> {
    let mut s = String::new();
    for p in preds {
        s.push_str(&serde_json::to_string(p).expect("serializable"));
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Label accuracy, FEVER score, label-wise F1 and the official macro
/// evidence precision / recall / F1 (reported in the sentence columns).
/// Evidence beyond the first five entries is ignored with a warning; a
/// claim without a prediction counts as wrong.
pub fn evaluate_fever(
    preds: &[FeverPrediction],
    gold: &[Query],
    semantics: EvidenceSemantics,
) -> Result<(Vec<PerExampleScores>, MetricsReport), EvalError> {
    let by_id: HashMap<String, &FeverPrediction> = preds.iter().map(|p| (p.id_string(), p)).collect();
    let mut per = Vec::with_capacity(gold.len());
    let mut confusion: Vec<(Label, Option<Label>)> = Vec::with_capacity(gold.len());
    for q in gold {
        let gold_label = q.label.ok_or_else(|| EvalError::UnknownLabel(format!("<missing for {}>", q.id)))?;
        let (pred_label, evidence): (Option<Label>, &[(String, i64)]) = match by_id.get(&q.id) {
            Some(p) => {
                let l: Label = p
                    .predicted_label
                    .parse()
                    .map_err(|_| EvalError::UnknownLabel(p.predicted_label.clone()))?;
                if p.predicted_evidence.len() > FEVER_EVIDENCE_CAP {
                    log::warn!("query {}: {} evidence entries, using the first 5", q.id, p.predicted_evidence.len());
                }
                let cap = p.predicted_evidence.len().min(FEVER_EVIDENCE_CAP);
                (Some(l), &p.predicted_evidence[..cap])
            }
            None => (None, &[]),
        };
        let groups: Vec<Vec<Fact>> = q.evidence.iter().map(|g| g.iter().map(fact).collect()).collect();
        let have: BTreeSet<&Fact> = evidence.iter().collect();
        let label_correct = pred_label == Some(gold_label);
        let complete = evidence_covered(gold_label, &groups, &have, semantics);
        let (ep, er) = if gold_label == Label::NotEnoughInfo {
            (None, None)
        } else {
            let all: BTreeSet<&Fact> = groups.iter().flatten().collect();
            let p = if evidence.is_empty() {
                1.0
            } else {
                evidence.iter().filter(|e| all.contains(e)).count() as f64 / evidence.len() as f64
            };
            let r = if groups.is_empty() || evidence_covered(gold_label, &groups, &have, EvidenceSemantics::AnyGroup) {
                1.0
            } else {
                0.0
            };
            (Some(p), Some(r))
        };
        confusion.push((gold_label, pred_label));
        per.push(PerExampleScores {
            query_id: q.id.clone(),
            label_correct: Some(label_correct),
            evidence_complete: Some(complete),
            evidence_precision: ep,
            evidence_recall: er,
            ..Default::default()
        });
    }
    let n = per.len();
    let scored: Vec<&PerExampleScores> = per.iter().filter(|x| x.evidence_precision.is_some()).collect();
    let ev_p = if scored.is_empty() {
        1.0
    } else {
        scored.iter().filter_map(|x| x.evidence_precision).sum::<f64>() / scored.len() as f64
    };
    let ev_r = if scored.is_empty() {
        0.0
    } else {
        scored.iter().filter_map(|x| x.evidence_recall).sum::<f64>() / scored.len() as f64
    };
    let f1s = label_f1(&confusion);
    let report = MetricsReport {
        count: n,
        label_accuracy: Some(ratio(per.iter().filter(|x| x.label_correct == Some(true)).count(), n)),
        fever_score: Some(ratio(per.iter().filter(|x| x.fever_point()).count(), n)),
        sentence_precision: Some(ev_p),
        sentence_recall: Some(ev_r),
        sentence_f1: Some(harmonic(ev_p, ev_r)),
        label_f1_supports: Some(f1s[0]),
        label_f1_refutes: Some(f1s[1]),
        label_f1_nei: Some(f1s[2]),
        ..Default::default()
    };
    Ok((per, report))
}

fn ratio(a: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        a as f64 / n as f64
    }
}

/// F1 of each class in [`Label::ALL`] order; a class never predicted or
/// never gold contributes precision or recall 0.
pub fn label_f1(pairs: &[(Label, Option<Label>)]) -> [f64; 3] {
    Label::ALL.map(|c| {
        let tp = pairs.iter().filter(|(g, p)| *g == c && *p == Some(c)).count();
        let pred = pairs.iter().filter(|(_, p)| *p == Some(c)).count();
        let gold = pairs.iter().filter(|(g, _)| *g == c).count();
        harmonic(ratio(tp, pred), ratio(tp, gold))
    })
}

/// Fraction of queries whose gold is NEI or whose evidence is covered by the
/// stage's retrieved sentences.
pub fn oracle_score(queries: &[&Query], stage_sets: &[BTreeSet<SentenceId>], semantics: EvidenceSemantics) -> f64 {
    let hits = queries
        .iter()
        .zip(stage_sets)
        .filter(|(q, set)| {
            let have: BTreeSet<&SentenceId> = set.iter().collect();
            evidence_covered(q.label.unwrap_or(Label::NotEnoughInfo), &q.evidence, &have, semantics)
        })
        .count();
    ratio(hits, queries.len())
}

/// Oracle at paragraph granularity: each gold group is mapped to the
/// paragraphs holding its sentences.
pub fn paragraph_oracle_score(
    queries: &[&Query],
    stage_sets: &[BTreeSet<ParagraphId>],
    corpus: &Corpus,
    semantics: EvidenceSemantics,
) -> f64 {
    let hits = queries
        .iter()
        .zip(stage_sets)
        .filter(|(q, set)| {
            let groups: Vec<Vec<ParagraphId>> = q
                .evidence
                .iter()
                .map(|g| g.iter().map(|s| corpus.paragraph_of(s).map(|p| p.id())).collect::<Option<Vec<_>>>())
                .map(|g| g.unwrap_or_else(|| vec![unreachable_paragraph()]))
                .collect();
            let have: BTreeSet<&ParagraphId> = set.iter().collect();
            evidence_covered(q.label.unwrap_or(Label::NotEnoughInfo), &groups, &have, semantics)
        })
        .count();
    ratio(hits, queries.len())
}

/// Stands in for a gold sentence missing from the corpus; never retrieved.
fn unreachable_paragraph() -> ParagraphId {
    ParagraphId {
        title: crate::corpus::DocumentTitle::new("\u{0}unresolvable").expect("non-empty"),
        para_index: u32::MAX,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub semantics: EvidenceSemantics,
}

/// Prediction file contents derived from traced runs.
pub fn hotpot_predictions(runs: &[PipelineRun]) -> HotpotPredictions {
    let mut p = HotpotPredictions::default();
    for r in runs {
        if let Some(pred) = &r.prediction {
            if let Some(a) = &pred.answer {
                p.answer.insert(r.query_id.clone(), a.clone());
            }
            p.sp.insert(r.query_id.clone(), pred.predicted_evidence.iter().map(fact).collect());
        }
    }
    p
}

pub fn fever_predictions(runs: &[PipelineRun]) -> Vec<FeverPrediction> {
    runs.iter()
        .filter_map(|r| {
            let pred = r.prediction.as_ref()?;
            Some(FeverPrediction {
                id: Value::String(r.query_id.clone()),
                predicted_label: pred.label?.as_str().to_string(),
                predicted_evidence: pred.predicted_evidence.iter().map(fact).collect(),
            })
        })
        .collect()
}

/// Evaluates traced runs: downstream metrics through the official path,
/// plus paragraph-level retrieval, set sizes and (FEVER) oracle scores.
/// Sentence-level and joint metrics are `None` when the sentence stage did
/// not run.
pub fn evaluate_runs(
    runs: &[PipelineRun],
    corpus: &Corpus,
    opts: &EvalOptions,
) -> Result<(Vec<PerExampleScores>, MetricsReport), EvalError> {
    let Some(first) = runs.first() else {
        return Ok((Vec::new(), MetricsReport::default()));
    };
    let task = first.query.task;
    if let Some(r) = runs.iter().find(|r| r.query.task != task) {
        return Err(EvalError::MixedTasks(task, r.query.task));
    }
    let gold: Vec<Query> = runs.iter().map(|r| r.query.clone()).collect();
    let (mut per, mut report) = match task {
        Task::Hotpot => evaluate_hotpot(&hotpot_predictions(runs), &gold),
        Task::Fever => evaluate_fever(&fever_predictions(runs), &gold, opts.semantics)?,
    };
    let n = runs.len();
    for (x, r) in per.iter_mut().zip(runs) {
        let pred: BTreeSet<ParagraphId> = r.paragraph_ids().into_iter().collect();
        x.paragraph = Some(set_retrieval_metrics(&pred, &r.query.gold_paragraphs(corpus)));
    }
    report.paragraph_em = mean_by(&per, n, |x| x.paragraph.map(|s| s.em));
    report.paragraph_precision = mean_by(&per, n, |x| x.paragraph.map(|s| s.p));
    report.paragraph_recall = mean_by(&per, n, |x| x.paragraph.map(|s| s.r));
    report.paragraph_f1 = mean_by(&per, n, |x| x.paragraph.map(|s| s.f1));
    report.mean_paragraphs = Some(runs.iter().map(|r| r.paragraph_ids().len()).sum::<usize>() as f64 / n as f64);

    let sentence_stage = runs.iter().all(|r| r.s_selected.is_some());
    if sentence_stage {
        report.mean_sentences = Some(
            runs.iter().map(|r| r.s_selected.as_ref().map_or(0, Vec::len)).sum::<usize>() as f64 / n as f64,
        );
    } else {
        report.sentence_em = None;
        report.sentence_precision = None;
        report.sentence_recall = None;
        report.sentence_f1 = None;
        report.joint_em = None;
        report.joint_f1 = None;
        report.joint_precision = None;
        report.joint_recall = None;
        for x in &mut per {
            x.support = None;
            x.joint = None;
        }
    }

    if task == Task::Fever {
        let qs: Vec<&Query> = runs.iter().map(|r| &r.query).collect();
        let initial: Vec<BTreeSet<ParagraphId>> = runs.iter().map(|r| r.p_initial.ids().cloned().collect()).collect();
        report.oracle_initial = Some(paragraph_oracle_score(&qs, &initial, corpus, opts.semantics));
        if runs.iter().all(|r| r.p_neural.is_some()) {
            let pn: Vec<BTreeSet<ParagraphId>> = runs.iter().map(|r| r.paragraph_ids().into_iter().collect()).collect();
            report.oracle_paragraph = Some(paragraph_oracle_score(&qs, &pn, corpus, opts.semantics));
        }
        if sentence_stage {
            let s: Vec<BTreeSet<SentenceId>> = runs
                .iter()
                .map(|r| r.sentence_ids().unwrap_or_default().into_iter().collect())
                .collect();
            report.oracle_sentence = Some(oracle_score(&qs, &s, opts.semantics));
        }
    }
    Ok((per, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub tag: String,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Tags from a JSON object `{query_id: tag}` or a two-column TSV.
pub fn load_tags(path: &Path) -> Result<HashMap<String, String>, EvalError> {
    let raw = std::fs::read_to_string(path)?;
    if raw.trim().is_empty() {
        return Ok(HashMap::new());
    }
    if raw.trim_start().starts_with('{') {
        let v: HashMap<String, String> = serde_json::from_str(&raw).map_err(|e| EvalError::Malformed {
            path: path.display().to_string(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        return Ok(v);
    }
    let mut out = HashMap::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, tag) = line.split_once('\t').ok_or_else(|| EvalError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            reason: "expected <query_id>\\t<tag>".into(),
        })?;
        out.insert(id.trim().to_string(), tag.trim().to_string());
    }
    Ok(out)
}

/// Per-tag totals and accuracy, tags in ascending order, examples without a
/// tag under "untagged", and a final "Total" row. Tags naming unknown
/// queries are skipped with a warning.
pub fn breakdown_report(per: &[PerExampleScores], tags: &HashMap<String, String>) -> Vec<BreakdownRow> {
    let known: BTreeSet<&str> = per.iter().map(|x| x.query_id.as_str()).collect();
    let mut unknown: Vec<&String> = tags.keys().filter(|k| !known.contains(k.as_str())).collect();
    unknown.sort();
    for k in unknown {
        log::warn!("tag for unknown query {k} skipped");
    }
    let mut rows: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for x in per {
        let tag = tags.get(&x.query_id).map_or("untagged", String::as_str);
        let e = rows.entry(tag).or_default();
        e.0 += 1;
        e.1 += usize::from(x.is_correct());
    }
    let mut out: Vec<BreakdownRow> = rows
        .into_iter()
        .map(|(tag, (total, correct))| BreakdownRow {
            tag: tag.to_string(),
            total,
            correct,
            accuracy: ratio(correct, total),
        })
        .collect();
    let total = per.len();
    let correct = per.iter().filter(|x| x.is_correct()).count();
    out.push(BreakdownRow {
        tag: "Total".into(),
        total,
        correct,
        accuracy: ratio(correct, total),
    });
    out
}
