//! Sweeps, ablations, built-in scorer training and report emission.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::{AdapterKind, ConfigError, PipelineConfig, ScorerKind, ScorerSpec};
use crate::corpus::{Corpus, CorpusError, ParagraphId};
use crate::downstream::{
    BaselineReader, BaselineVerifier, OracleReader, OracleVerifier, QaReader, RemoteReader, RemoteVerifier, Verifier,
};
use crate::eval::{evaluate_runs, EvalError, EvalOptions, MetricsReport};
use crate::pipeline::{
    as_paragraph, filter_by_score, paragraph_contexts, partition_results, run_from_initial, sentence_contexts, Ablation,
    Modules, PipelineRun,
};
use crate::query::{Query, Task};
use crate::retrieval::{Granularity, InitialCandidateSet, RetrievalError, TermIndex, TermRetriever};
use crate::sampler::{contexts_from_runs, sample_retrieval_pairs, Level, SampleError, SamplingSpec};
use crate::scoring::{
    score_candidates, train_logistic, CachingScorer, CandidateId, FeatureExtractor, IdfTable, LabeledPair,
    LogisticModel, LogisticScorer, RemoteScorer, ScoreError, Scorer, TrainConfig, TrainReport,
};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    pub fn is_remote(&self) -> bool {
        matches!(self, Self::Score(e) if e.is_remote())
    }
}

/// Everything a pipeline run needs, owned.
pub struct Components {
    pub corpus: Corpus,
    pub index: TermIndex,
    pub idf: Arc<IdfTable>,
    pub paragraph_scorer: Box<dyn Scorer>,
    pub sentence_scorer: Box<dyn Scorer>,
    pub reader: Box<dyn QaReader>,
    pub verifier: Box<dyn Verifier>,
}

impl Components {
    /// Opens the corpus named by the config; loads the index when its path
    /// exists and builds a paragraph index in memory otherwise.
    pub fn from_config(config: &PipelineConfig) -> Result<Self, ExperimentError> {
        let corpus_path = config
            .task
            .corpus
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid("task.corpus is required".into()))?;
        let corpus = Corpus::open(corpus_path)?;
        let index = match config.task.index.as_deref() {
            Some(p) if p.exists() => TermIndex::load(p)?,
            _ => TermIndex::build(&corpus, Granularity::Paragraph)?,
        };
        Self::with_parts(corpus, index, config)
    }

    pub fn with_parts(corpus: Corpus, index: TermIndex, config: &PipelineConfig) -> Result<Self, ExperimentError> {
        let idf = Arc::new(IdfTable::from_index(&index));
        let paragraph_scorer = build_scorer(&config.scorers.paragraph, config, &idf)?;
        let sentence_scorer = build_scorer(&config.scorers.sentence, config, &idf)?;
        let ds = &config.downstream;
        let timeout = Duration::from_secs_f64(ds.timeout_secs);
        let endpoint = || {
            ds.endpoint
                .clone()
                .ok_or_else(|| ConfigError::Invalid("downstream.endpoint is required for remote adapters".into()))
        };
        let reader: Box<dyn QaReader> = match ds.qa {
            AdapterKind::Baseline => Box::new(BaselineReader::new(Some(idf.clone()))),
            AdapterKind::Oracle => Box::new(OracleReader),
            AdapterKind::Remote => Box::new(RemoteReader::connect(&endpoint()?, timeout)),
        };
        let verifier: Box<dyn Verifier> = match ds.verifier {
            AdapterKind::Baseline => Box::new(BaselineVerifier::default()),
            AdapterKind::Oracle => Box::new(OracleVerifier),
            AdapterKind::Remote => Box::new(RemoteVerifier::connect(&endpoint()?, timeout)),
        };
        Ok(Self {
            corpus,
            index,
            idf,
            paragraph_scorer,
            sentence_scorer,
            reader,
            verifier,
        })
    }

    pub fn retriever(&self, config: &PipelineConfig) -> TermRetriever<'_> {
        let mut r = TermRetriever::new(&self.corpus, &self.index);
        r.tfidf_top_n = config.retrieval.tfidf_top_n;
        r.hyperlink_top_n = config.retrieval.hyperlink_top_n;
        r
    }

    pub fn modules(&self, config: &PipelineConfig) -> Modules<'_> {
        Modules {
            retriever: self.retriever(config),
            paragraph_scorer: self.paragraph_scorer.as_ref(),
            sentence_scorer: self.sentence_scorer.as_ref(),
            reader: self.reader.as_ref(),
            verifier: self.verifier.as_ref(),
        }
    }

    pub fn extractor(&self) -> FeatureExtractor {
        FeatureExtractor::new(Some(self.idf.clone()))
    }
}

/// A built-in scorer without a model file has all-zero weights.
pub fn build_scorer(spec: &ScorerSpec, config: &PipelineConfig, idf: &Arc<IdfTable>) -> Result<Box<dyn Scorer>, ExperimentError> {
    match spec.kind {
        ScorerKind::Builtin => {
            let model = match &spec.model {
                Some(p) => LogisticModel::load(p)?,
                None => {
                    log::warn!("built-in scorer has no model file; all scores are 0.5");
                    LogisticModel::default()
                }
            };
            Ok(Box::new(LogisticScorer::new(model, FeatureExtractor::new(Some(idf.clone())))))
        }
        ScorerKind::Remote => {
            let endpoint = spec
                .endpoint
                .as_deref()
                .ok_or_else(|| ConfigError::Invalid("remote scorer needs an endpoint".into()))?;
            let s = RemoteScorer::connect(
                endpoint,
                Duration::from_secs_f64(config.scorers.timeout_secs),
                config.scorers.batch_size,
            )
            .with_max_in_flight(config.scorers.max_in_flight);
            Ok(Box::new(s))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "k_p")]
    KP,
    #[serde(rename = "h_p")]
    HP,
    #[serde(rename = "k_s")]
    KS,
    #[serde(rename = "h_s")]
    HS,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::KP => "k_p",
            Self::HP => "h_p",
            Self::KS => "k_s",
            Self::HS => "h_s",
        }
    }

    fn is_cap(self) -> bool {
        matches!(self, Self::KP | Self::KS)
    }

    /// Caps must be positive integers; thresholds must lie in `[0, 1]`.
    pub fn check(self, v: f64) -> Result<(), ExperimentError> {
        let ok = if self.is_cap() {
            v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64
        } else {
            (0.0..=1.0).contains(&v)
        };
        if ok {
            Ok(())
        } else {
            Err(ExperimentError::InvalidSweep(format!("{v} is outside the domain of {}", self.as_str())))
        }
    }

    pub fn apply(self, config: &mut PipelineConfig, v: f64) -> Result<(), ExperimentError> {
        self.check(v)?;
        match self {
            Self::KP => config.paragraph_level.k = v as usize,
            Self::HP => config.paragraph_level.h = v,
            Self::KS => config.sentence_level.k = v as usize,
            Self::HS => config.sentence_level.h = v,
        }
        Ok(())
    }
}

impl FromStr for SweepParam {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "k_p" => Ok(Self::KP),
            "h_p" => Ok(Self::HP),
            "k_s" => Ok(Self::KS),
            "h_s" => Ok(Self::HS),
            other => Err(ExperimentError::InvalidSweep(format!("unknown parameter {other:?}"))),
        }
    }
}

/// A comma-separated list, or `start:stop:step` expanding to
/// `start + i·step` for every `i` whose value does not exceed `stop`.
/// Each value is rounded to 12 decimals so `0:0.9:0.1` yields `0.3`, not
/// `0.30000000000000004`.
pub fn parse_values(s: &str) -> Result<Vec<f64>, ExperimentError> {
    let bad = |m: &str| ExperimentError::InvalidSweep(format!("{s:?}: {m}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                return Err(bad("range needs step > 0 and stop >= start"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| round12(start + i as f64 * step)).collect()
        }
        [_] => s.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad("expected a list or start:stop:step")),
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad("no finite values"));
    }
    Ok(values)
}

fn round12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
    pub base: PipelineConfig,
    /// Regenerate downstream training contexts at every point.
    pub retrain_downstream: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.values.is_empty() {
            return Err(ExperimentError::InvalidSweep("no values".into()));
        }
        for &v in &self.values {
            self.parameter.check(v)?;
        }
        self.base.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<MetricsReport>,
    /// `(query_id, reason)` for queries whose run failed at this point.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Downstream training contexts regenerated at this point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downstream_contexts: Option<usize>,
}

/// One row per distinct value in ascending order. Term retrieval runs once
/// per query and relevance scores are cached across points.
pub fn run_sweep(
    spec: &SweepSpec,
    queries: &[Query],
    modules: &Modules<'_>,
    opts: &EvalOptions,
) -> Result<Vec<SweepRow>, ExperimentError> {
    spec.validate()?;
    let mut values = spec.values.clone();
    values.sort_by(f64::total_cmp);
    values.dedup();

    let initial: Vec<Result<InitialCandidateSet, String>> = queries
        .par_iter()
        .map(|q| modules.initial_candidates(q).map_err(|e| e.to_string()))
        .collect();
    let p_cache = CachingScorer::new(modules.paragraph_scorer);
    let s_cache = CachingScorer::new(modules.sentence_scorer);
    let cached = Modules {
        retriever: modules.retriever.clone(),
        paragraph_scorer: &p_cache,
        sentence_scorer: &s_cache,
        reader: modules.reader,
        verifier: modules.verifier,
    };

    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let mut config = spec.base.clone();
        spec.parameter.apply(&mut config, v)?;
        let results: Vec<_> = queries
            .par_iter()
            .zip(&initial)
            .map(|(q, p)| match p {
                Ok(p) => run_from_initial(q, p.clone(), &config, &cached).map_err(|e| (q.id.clone(), e.to_string())),
                Err(e) => Err((q.id.clone(), e.clone())),
            })
            .collect();
        let mut runs = Vec::new();
        let mut failures = Vec::new();
        for r in results {
            match r {
                Ok(run) => runs.push(run),
                Err(f) => failures.push(f),
            }
        }
        let mut row = SweepRow {
            value: v,
            report: None,
            failures,
            error: None,
            downstream_contexts: None,
        };
        match evaluate_runs(&runs, modules.corpus(), opts) {
            Ok((_, report)) => row.report = Some(report),
            Err(e) => row.error = Some(e.to_string()),
        }
        if spec.retrain_downstream {
            let sampling = SamplingSpec::new(Level::Sentence, config.task.seed);
            match contexts_from_runs(&runs, modules.corpus(), &sampling) {
                Ok(c) => row.downstream_contexts = Some(c.len()),
                Err(e) => row.error = Some(format!("downstream resampling: {e}")),
            }
        }
        log::info!("{} = {v}: {} runs, {} failed", spec.parameter.as_str(), runs.len(), row.failures.len());
        rows.push(row);
    }
    log::debug!("score cache: {} paragraph, {} sentence", p_cache.cached(), s_cache.cached());
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub mode: Ablation,
    pub report: MetricsReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<(String, String)>,
}

/// Runs `queries` with the stage mask of `mode` applied over `config`.
pub fn run_ablation(
    mode: Ablation,
    config: &PipelineConfig,
    queries: &[Query],
    modules: &Modules<'_>,
    opts: &EvalOptions,
) -> Result<(AblationReport, Vec<PipelineRun>), ExperimentError> {
    let mut config = config.clone();
    mode.apply(&mut config);
    let (runs, failures) = partition_results(crate::pipeline::run_batch(queries, &config, modules));
    let (_, report) = evaluate_runs(&runs, modules.corpus(), opts)?;
    Ok((AblationReport { mode, report, failures }, runs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedScorers {
    pub paragraph: LogisticModel,
    pub paragraph_report: Option<TrainReport>,
    pub sentence: LogisticModel,
    pub sentence_report: Option<TrainReport>,
}

/// Trains built-in scorers for the stages `mode` keeps. Paragraph pairs are
/// drawn from P_I. Sentence pairs are drawn from the sentences of P_N under
/// the freshly trained paragraph scorer, or from the sentences of P_I when
/// the paragraph stage is removed.
pub fn train_stage_scorers(
    mode: Ablation,
    config: &PipelineConfig,
    train: &[Query],
    retriever: &TermRetriever<'_>,
    extractor: &FeatureExtractor,
    train_config: &TrainConfig,
) -> Result<TrainedScorers, ExperimentError> {
    let mut config = config.clone();
    mode.apply(&mut config);
    let corpus = retriever.corpus;
    let seed = config.task.seed;
    let initial: Vec<InitialCandidateSet> = train
        .iter()
        .map(|q| retriever.initial_candidates(&q.id, &q.text, q.task))
        .collect::<Result<_, _>>()?;

    let (paragraph, paragraph_report) = if config.paragraph_level.enabled {
        let spec = SamplingSpec::new(Level::Paragraph, seed);
        let mut pairs: Vec<LabeledPair> = Vec::new();
        for (q, p) in train.iter().zip(&initial) {
            let upstream: Vec<CandidateId> = p.ids().cloned().map(CandidateId::Paragraph).collect();
            collect_pairs(&mut pairs, q, &upstream, corpus, &spec, config.paragraph_level.include_title)?;
        }
        let (m, r) = train_logistic(&pairs, extractor, train_config)?;
        (m, Some(r))
    } else {
        (LogisticModel::default(), None)
    };

    let (sentence, sentence_report) = if config.sentence_level.enabled {
        let p_scorer = LogisticScorer::new(paragraph.clone(), extractor.clone());
        let spec = SamplingSpec::new(Level::Sentence, seed);
        let mut pairs: Vec<LabeledPair> = Vec::new();
        for (q, p) in train.iter().zip(&initial) {
            let ids: Vec<ParagraphId> = p.ids().cloned().collect();
            let upstream_paragraphs: Vec<ParagraphId> = if config.paragraph_level.enabled {
                let ctx = paragraph_contexts(corpus, &ids, &config.paragraph_level);
                let scored = score_candidates(&p_scorer, &q.text, &ctx)?;
                filter_by_score(&scored, config.paragraph_level.k, config.paragraph_level.h)
                    .iter()
                    .filter_map(|c| as_paragraph(&c.id).cloned())
                    .collect()
            } else {
                ids
            };
            let upstream: Vec<CandidateId> = sentence_contexts(corpus, &upstream_paragraphs, &config.sentence_level)
                .into_iter()
                .map(|c| c.id)
                .collect();
            collect_pairs(&mut pairs, q, &upstream, corpus, &spec, config.sentence_level.include_title)?;
        }
        let (m, r) = train_logistic(&pairs, extractor, train_config)?;
        (m, Some(r))
    } else {
        (LogisticModel::default(), None)
    };
    Ok(TrainedScorers {
        paragraph,
        paragraph_report,
        sentence,
        sentence_report,
    })
}

fn collect_pairs(
    out: &mut Vec<LabeledPair>,
    query: &Query,
    upstream: &[CandidateId],
    corpus: &Corpus,
    spec: &SamplingSpec,
    include_title: bool,
) -> Result<(), ExperimentError> {
    match sample_retrieval_pairs(query, upstream, corpus, spec, include_title) {
        Ok(s) => out.extend(s.pairs),
        Err(SampleError::EmptyUpstream(id)) => log::warn!("query {id}: empty upstream, skipped"),
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Table,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "table" => Ok(Self::Table),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

/// A labelled report: a sweep value or an ablation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub key: Value,
    pub report: Option<MetricsReport>,
}

impl From<&SweepRow> for ReportRow {
    fn from(r: &SweepRow) -> Self {
        Self {
            key: serde_json::json!(r.value),
            report: r.report.clone(),
        }
    }
}

impl From<&AblationReport> for ReportRow {
    fn from(r: &AblationReport) -> Self {
        Self {
            key: Value::String(r.mode.as_str().into()),
            report: Some(r.report.clone()),
        }
    }
}

type Getter = fn(&MetricsReport) -> Option<f64>;

/// `(csv name, table header, getter, is a fraction)`.
type Column = (&'static str, &'static str, Getter, bool);

/// Column order for each task. The HotpotQA order starts with the sentence,
/// answer and joint groups; paragraph metrics and set sizes trail.
pub fn columns(task: Task) -> Vec<Column> {
    let mut cols: Vec<Column> = match task {
        Task::Hotpot => vec![
            ("sp_em", "S-EM", |r| r.sentence_em, true),
            ("sp_precision", "S-P", |r| r.sentence_precision, true),
            ("sp_recall", "S-R", |r| r.sentence_recall, true),
            ("sp_f1", "S-F1", |r| r.sentence_f1, true),
            ("answer_em", "Ans-EM", |r| r.answer_em, true),
            ("answer_f1", "Ans-F1", |r| r.answer_f1, true),
            ("joint_em", "Joint-EM", |r| r.joint_em, true),
            ("joint_f1", "Joint-F1", |r| r.joint_f1, true),
            ("joint_precision", "Joint-P", |r| r.joint_precision, true),
            ("joint_recall", "Joint-R", |r| r.joint_recall, true),
        ],
        Task::Fever => vec![
            ("sp_oracle", "S-Orcl", |r| r.oracle_sentence, true),
            ("sp_precision", "S-P", |r| r.sentence_precision, true),
            ("sp_recall", "S-R", |r| r.sentence_recall, true),
            ("sp_f1", "S-F1", |r| r.sentence_f1, true),
            ("label_accuracy", "LA", |r| r.label_accuracy, true),
            ("fever_score", "FS", |r| r.fever_score, true),
            ("label_f1_supports", "L-F1(S)", |r| r.label_f1_supports, true),
            ("label_f1_refutes", "L-F1(R)", |r| r.label_f1_refutes, true),
            ("label_f1_nei", "L-F1(N)", |r| r.label_f1_nei, true),
            ("initial_oracle", "I-Orcl", |r| r.oracle_initial, true),
            ("paragraph_oracle", "P-Orcl", |r| r.oracle_paragraph, true),
        ],
    };
    cols.extend::<[Column; 6]>([
        ("paragraph_em", "P-EM", |r| r.paragraph_em, true),
        ("paragraph_precision", "P-P", |r| r.paragraph_precision, true),
        ("paragraph_recall", "P-R", |r| r.paragraph_recall, true),
        ("paragraph_f1", "P-F1", |r| r.paragraph_f1, true),
        ("mean_paragraphs", "|P|", |r| r.mean_paragraphs, false),
        ("mean_sentences", "|S|", |r| r.mean_sentences, false),
    ]);
    cols
}

fn key_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Renders rows with a stable column order. CSV and JSON carry raw
/// fractions with an empty cell / `null` for absent metrics; the table
/// shows percentages to two decimals and `-` for absent metrics.
pub fn render_report(rows: &[ReportRow], key_name: &str, task: Task, format: ReportFormat) -> String {
    let cols = columns(task);
    match format {
        ReportFormat::Json => {
            let arr: Vec<Value> = rows
                .iter()
                .map(|row| {
                    let mut m = Map::new();
                    m.insert(key_name.into(), row.key.clone());
                    m.insert("count".into(), row.report.as_ref().map_or(Value::Null, |r| r.count.into()));
                    for (name, _, get, _) in &cols {
                        let v = row.report.as_ref().and_then(get);
                        m.insert((*name).into(), v.map_or(Value::Null, Value::from));
                    }
                    Value::Object(m)
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&arr).expect("serializable");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut s = String::new();
            let header: Vec<&str> = [key_name, "count"].into_iter().chain(cols.iter().map(|c| c.0)).collect();
            s.push_str(&header.join(","));
            s.push('\n');
            for row in rows {
                let mut cells = vec![
                    csv_cell(&key_text(&row.key)),
                    row.report.as_ref().map_or(String::new(), |r| r.count.to_string()),
                ];
                for (_, _, get, _) in &cols {
                    cells.push(row.report.as_ref().and_then(get).map_or(String::new(), |v| v.to_string()));
                }
                s.push_str(&cells.join(","));
                s.push('\n');
            }
            s
        }
        ReportFormat::Table => {
            let header: Vec<String> = [key_name.to_string(), "N".to_string()]
                .into_iter()
                .chain(cols.iter().map(|c| c.1.to_string()))
                .collect();
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|row| {
                    let mut cells = vec![
                        key_text(&row.key),
                        row.report.as_ref().map_or("-".into(), |r| r.count.to_string()),
                    ];
                    for (_, _, get, fraction) in &cols {
                        cells.push(match row.report.as_ref().and_then(get) {
                            Some(v) if *fraction => format!("{:.2}", v * 100.0),
                            Some(v) => format!("{v:.2}"),
                            None => "-".into(),
                        });
                    }
                    cells
                })
                .collect();
            align(&header, &body)
        }
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Left-aligned first column, right-aligned numbers.
pub fn align(header: &[String], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "  {c:>w$}");
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1)));
    out.push('\n');
    for row in body {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

/// Writes to `path`, or stdout when `path` is `None`.
pub fn emit_report(
    rows: &[ReportRow],
    key_name: &str,
    task: Task,
    format: ReportFormat,
    path: Option<&Path>,
) -> Result<(), ExperimentError> {
    let text = render_report(rows, key_name, task, format);
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
