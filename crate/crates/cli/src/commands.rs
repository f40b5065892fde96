use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde_json::json;

use mrs_core::corpus::{Corpus, SourceFormat};
use mrs_core::eval::{
    breakdown_report, evaluate_fever, evaluate_hotpot, evaluate_runs, fever_predictions, hotpot_predictions,
    load_fever_predictions, load_tags, save_fever_predictions, BreakdownRow, EvalOptions, HotpotPredictions,
    MetricsReport, PerExampleScores,
};
use mrs_core::experiment::{
    emit_report, parse_values, render_report, run_ablation, run_sweep, train_stage_scorers, Components,
    ReportFormat, ReportRow, SweepParam, SweepSpec,
};
use mrs_core::pipeline::{run_batch, Ablation, PipelineRun};
use mrs_core::query::{load_queries, Query, Task};
use mrs_core::retrieval::{Granularity, TermIndex};
use mrs_core::sampler::{contexts_from_runs, pairs_from_runs, to_jsonl, Level, SamplingSpec};
use mrs_core::scoring::{train_logistic, LabeledPair, LogisticScorer, TrainConfig};
use mrs_core::{EvidenceSemantics, PipelineConfig};

use crate::{Cli, Command, Global, RemoteError, UsageError};

pub fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::BuildCorpus(a) => build_corpus(a),
        Command::BuildIndex(a) => build_index(a),
        Command::Run(a) => run(g, a),
        Command::Sample(a) => sample(g, a),
        Command::Eval(a) => eval(g, a),
        Command::Sweep(a) => sweep(g, a),
        Command::Ablate(a) => ablate(g, a),
        Command::Train(a) => train(g, a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_arg<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T> {
    s.parse().map_err(usage)
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let path = g.config.as_deref().ok_or_else(|| usage("--config is required"))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = g.seed {
        cfg.task.seed = seed;
    }
    Ok(cfg)
}

fn queries(path: &Path) -> Result<Vec<Query>> {
    load_queries(path).with_context(|| format!("loading queries from {}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Debug, Args)]
pub struct BuildCorpusArgs {
    /// fever_wiki, hotpot_wiki or plain_jsonl.
    #[arg(long)]
    pub format: String,
    /// Binary corpus store to write.
    #[arg(long)]
    pub out: PathBuf,
    /// plain_jsonl copy; defaults to `<out>.plain.jsonl`.
    #[arg(long)]
    pub plain: Option<PathBuf>,
    #[arg(required = true)]
    pub sources: Vec<PathBuf>,
}

fn build_corpus(a: &BuildCorpusArgs) -> Result<()> {
    let format: SourceFormat = parse_arg(&a.format)?;
    for s in &a.sources {
        if !s.exists() {
            bail!(usage(format!("source {} does not exist", s.display())));
        }
    }
    let corpus = Corpus::ingest(&a.sources, format)?;
    corpus.save(&a.out)?;
    let plain = a.plain.clone().unwrap_or_else(|| with_suffix(&a.out, ".plain.jsonl"));
    corpus.write_plain_jsonl(&plain)?;
    let counts = corpus.counts();
    log::info!("corpus written to {} and {}", a.out.display(), plain.display());
    println!("{}", serde_json::to_string(&counts)?);
    Ok(())
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// document or paragraph.
    #[arg(long, default_value = "document")]
    pub granularity: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn build_index(a: &BuildIndexArgs) -> Result<()> {
    let granularity: Granularity = parse_arg(&a.granularity)?;
    let corpus = Corpus::open(&a.corpus)?;
    let index = TermIndex::build(&corpus, granularity)?;
    index.save(&a.out)?;
    println!("{}", serde_json::to_string(&index.manifest())?);
    Ok(())
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub queries: PathBuf,
    /// PipelineRun JSON lines.
    #[arg(long)]
    pub out: PathBuf,
    /// Official prediction file; defaults to `<out>.pred.json` (HotpotQA)
    /// or `<out>.pred.jsonl` (FEVER).
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Per-stage timings; defaults to `<out>.timings.jsonl`.
    #[arg(long)]
    pub timings: Option<PathBuf>,
    /// full, no_paragraph or no_sentence.
    #[arg(long, default_value = "full")]
    pub ablation: String,
}

fn run(g: &Global, a: &RunArgs) -> Result<()> {
    let mode: Ablation = parse_arg(&a.ablation)?;
    let mut cfg = load_config(g)?;
    mode.apply(&mut cfg);
    let qs = queries(&a.queries)?;
    let comps = Components::from_config(&cfg)?;
    let modules = comps.modules(&cfg);

    let mut runs = Vec::new();
    let mut remote = 0usize;
    let mut failed = 0usize;
    for r in run_batch(&qs, &cfg, &modules) {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => {
                log::error!("{e}");
                failed += 1;
                remote += usize::from(e.is_remote());
            }
        }
    }
    let downstream_failed = runs.iter().filter(|r| r.downstream_error.is_some()).count();
    for r in runs.iter().filter(|r| r.downstream_error.is_some()) {
        log::error!("query {}: {}", r.query_id, r.downstream_error.as_deref().unwrap_or_default());
    }

    write_file(&a.out, &to_jsonl(&runs))?;
    let timings = a.timings.clone().unwrap_or_else(|| with_suffix(&a.out, ".timings.jsonl"));
    write_file(&timings, &timings_jsonl(&runs))?;
    let pred = match (&a.pred, cfg.task.name) {
        (Some(p), _) => p.clone(),
        (None, Task::Hotpot) => with_suffix(&a.out, ".pred.json"),
        (None, Task::Fever) => with_suffix(&a.out, ".pred.jsonl"),
    };
    write_predictions(&pred, cfg.task.name, &runs)?;
    log::info!("{} runs written to {}", runs.len(), a.out.display());

    if remote > 0 || downstream_failed > 0 {
        return Err(RemoteError(format!(
            "{remote} queries failed in a remote scorer and {downstream_failed} in a downstream adapter"
        ))
        .into());
    }
    if failed > 0 {
        bail!("{failed} of {} queries failed", qs.len());
    }
    Ok(())
}

fn timings_jsonl(runs: &[PipelineRun]) -> String {
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    let mut s = String::new();
    for r in runs {
        let t = &r.timings;
        let line = json!({
            "query_id": r.query_id,
            "retrieval_ms": ms(t.retrieval),
            "paragraph_ms": ms(t.paragraph),
            "sentence_ms": ms(t.sentence),
            "downstream_ms": ms(t.downstream),
        });
        s.push_str(&line.to_string());
        s.push('\n');
    }
    s
}

fn write_predictions(path: &Path, task: Task, runs: &[PipelineRun]) -> Result<()> {
    match task {
        Task::Hotpot => hotpot_predictions(runs).save(path)?,
        Task::Fever => save_fever_predictions(path, &fever_predictions(runs))?,
    }
    Ok(())
}

fn load_runs(path: &Path) -> Result<Vec<PipelineRun>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let run: PipelineRun =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: malformed run", path.display(), i + 1))?;
        out.push(run);
    }
    Ok(out)
}

/// The corpus named by `--corpus`, or by the config when absent.
fn open_corpus(g: &Global, corpus: Option<&Path>) -> Result<Corpus> {
    let path = match corpus {
        Some(p) => p.to_path_buf(),
        None => load_config(g)?
            .task
            .corpus
            .ok_or_else(|| usage("a corpus is required: pass --corpus or set task.corpus"))?,
    };
    Ok(Corpus::open(&path)?)
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// paragraph or sentence.
    #[arg(long)]
    pub level: String,
    /// Traced runs from `run`.
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Emit downstream QA/NLI contexts instead of relevance pairs.
    #[arg(long)]
    pub downstream: bool,
    /// Negatives per positive; defaults to 2 (paragraph) or 4 (sentence).
    #[arg(long)]
    pub neg_per_pos: Option<usize>,
    #[arg(long)]
    pub include_title: bool,
}

fn sample(g: &Global, a: &SampleArgs) -> Result<()> {
    let level: Level = parse_arg(&a.level)?;
    let mut spec = SamplingSpec::new(level, g.seed.unwrap_or(0));
    if let Some(n) = a.neg_per_pos {
        spec.neg_per_pos = n;
    }
    let corpus = open_corpus(g, a.corpus.as_deref())?;
    let runs = load_runs(&a.runs)?;
    let (text, n) = if a.downstream {
        let c = contexts_from_runs(&runs, &corpus, &spec)?;
        (to_jsonl(&c), c.len())
    } else {
        let p = pairs_from_runs(&runs, &corpus, &spec, a.include_title)?;
        (to_jsonl(&p), p.len())
    };
    write_file(&a.out, &text)?;
    log::info!("{n} records written to {}", a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// hotpot or fever.
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Traced runs; adds paragraph-level metrics, set sizes and oracles.
    #[arg(long)]
    pub runs: Option<PathBuf>,
    /// Per-query tags (JSON object or `id<TAB>tag` lines) for a breakdown.
    #[arg(long)]
    pub tags: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// json, csv or table.
    #[arg(long, default_value = "table")]
    pub format: String,
    /// any_group or all_facts.
    #[arg(long, default_value = "any_group")]
    pub evidence: String,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn eval(g: &Global, a: &EvalArgs) -> Result<()> {
    let task: Task = parse_arg(&a.task)?;
    let format: ReportFormat = parse_arg(&a.format)?;
    let semantics: EvidenceSemantics = parse_arg(&a.evidence)?;
    let gold = queries(&a.gold)?;
    if let Some(q) = gold.iter().find(|q| q.task != task) {
        bail!(usage(format!("gold query {} is not a {task} query", q.id)));
    }
    let (per, mut report) = official_scores(task, &a.pred, &gold, semantics)?;
    if let Some(runs_path) = &a.runs {
        let corpus = open_corpus(g, a.corpus.as_deref())?;
        let runs = load_runs(runs_path)?;
        let (_, r) = evaluate_runs(&runs, &corpus, &EvalOptions { semantics })?;
        merge_retrieval(&mut report, &r);
    }
    let breakdown = match &a.tags {
        Some(p) => Some(breakdown_report(&per, &load_tags(p)?)),
        None => None,
    };
    let text = render_eval(task, &report, breakdown.as_deref(), format)?;
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn official_scores(
    task: Task,
    pred: &Path,
    gold: &[Query],
    semantics: EvidenceSemantics,
) -> Result<(Vec<PerExampleScores>, MetricsReport)> {
    Ok(match task {
        Task::Hotpot => evaluate_hotpot(&HotpotPredictions::load(pred)?, gold),
        Task::Fever => evaluate_fever(&load_fever_predictions(pred)?, gold, semantics)?,
    })
}

/// Takes the fields only traced runs can supply.
fn merge_retrieval(into: &mut MetricsReport, from: &MetricsReport) {
    into.paragraph_em = from.paragraph_em;
    into.paragraph_precision = from.paragraph_precision;
    into.paragraph_recall = from.paragraph_recall;
    into.paragraph_f1 = from.paragraph_f1;
    into.mean_paragraphs = from.mean_paragraphs;
    into.mean_sentences = from.mean_sentences;
    into.oracle_initial = from.oracle_initial;
    into.oracle_paragraph = from.oracle_paragraph;
    into.oracle_sentence = from.oracle_sentence;
}

fn render_eval(task: Task, report: &MetricsReport, breakdown: Option<&[BreakdownRow]>, format: ReportFormat) -> Result<String> {
    let rows = [ReportRow {
        key: json!("all"),
        report: Some(report.clone()),
    }];
    Ok(match format {
        ReportFormat::Json => {
            let mut v = json!({ "report": report });
            if let Some(b) = breakdown {
                v["breakdown"] = serde_json::to_value(b)?;
            }
            serde_json::to_string_pretty(&v)? + "\n"
        }
        ReportFormat::Csv => render_report(&rows, "split", task, format),
        ReportFormat::Table => {
            let mut s = render_report(&rows, "split", task, format);
            if let Some(b) = breakdown {
                let header: Vec<String> = ["tag", "total", "correct", "accuracy"].map(String::from).to_vec();
                let body: Vec<Vec<String>> = b
                    .iter()
                    .map(|r| {
                        vec![
                            r.tag.clone(),
                            r.total.to_string(),
                            r.correct.to_string(),
                            format!("{:.2}", r.accuracy * 100.0),
                        ]
                    })
                    .collect();
                s.push('\n');
                s.push_str(&mrs_core::experiment::align(&header, &body));
            }
            s
        }
    })
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub queries: PathBuf,
    /// k_p, h_p, k_s or h_s.
    #[arg(long)]
    pub param: String,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long)]
    pub values: String,
    /// Regenerate downstream training contexts at every point.
    #[arg(long)]
    pub retrain_downstream: bool,
    #[arg(long, default_value = "table")]
    pub format: String,
    #[arg(long, default_value = "any_group")]
    pub evidence: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn sweep(g: &Global, a: &SweepArgs) -> Result<()> {
    let parameter: SweepParam = a.param.parse()?;
    let format: ReportFormat = parse_arg(&a.format)?;
    let semantics: EvidenceSemantics = parse_arg(&a.evidence)?;
    let values = parse_values(&a.values)?;
    let base = load_config(g)?;
    let spec = SweepSpec {
        parameter,
        values,
        base,
        retrain_downstream: a.retrain_downstream,
    };
    spec.validate()?;
    let qs = queries(&a.queries)?;
    let comps = Components::from_config(&spec.base)?;
    let modules = comps.modules(&spec.base);
    let rows = run_sweep(&spec, &qs, &modules, &EvalOptions { semantics })?;
    for r in &rows {
        if let Some(e) = &r.error {
            log::error!("{} = {}: {e}", parameter.as_str(), r.value);
        }
        if !r.failures.is_empty() {
            log::warn!("{} = {}: {} queries failed", parameter.as_str(), r.value, r.failures.len());
        }
    }
    let report_rows: Vec<ReportRow> = rows.iter().map(ReportRow::from).collect();
    emit_report(&report_rows, parameter.as_str(), spec.base.task.name, format, a.out.as_deref())?;
    if rows.iter().all(|r| r.report.is_none()) {
        bail!("every sweep point failed");
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub queries: PathBuf,
    /// Comma-separated modes.
    #[arg(long, default_value = "full,no_paragraph,no_sentence")]
    pub modes: String,
    /// Training queries; when given, built-in scorers are retrained per mode.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Directory receiving `<mode>.runs.jsonl` traces.
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
    #[arg(long, default_value = "table")]
    pub format: String,
    #[arg(long, default_value = "any_group")]
    pub evidence: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn ablate(g: &Global, a: &AblateArgs) -> Result<()> {
    let modes: Vec<Ablation> = a.modes.split(',').map(|m| parse_arg(m.trim())).collect::<Result<_>>()?;
    let format: ReportFormat = parse_arg(&a.format)?;
    let semantics: EvidenceSemantics = parse_arg(&a.evidence)?;
    let cfg = load_config(g)?;
    let qs = queries(&a.queries)?;
    let train_qs = a.train.as_deref().map(queries).transpose()?;
    let mut comps = Components::from_config(&cfg)?;
    if let Some(dir) = &a.runs_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut reports = Vec::new();
    for mode in modes {
        if let Some(train) = &train_qs {
            let extractor = comps.extractor();
            let trained = train_stage_scorers(
                mode,
                &cfg,
                train,
                &comps.retriever(&cfg),
                &extractor,
                &train_config(cfg.task.seed),
            )?;
            comps.paragraph_scorer = Box::new(LogisticScorer::new(trained.paragraph, extractor.clone()));
            comps.sentence_scorer = Box::new(LogisticScorer::new(trained.sentence, extractor));
        }
        let (report, runs) = run_ablation(mode, &cfg, &qs, &comps.modules(&cfg), &EvalOptions { semantics })?;
        for (id, reason) in &report.failures {
            log::warn!("{mode}: query {id} failed: {reason}");
        }
        if let Some(dir) = &a.runs_dir {
            write_file(&dir.join(format!("{mode}.runs.jsonl")), &to_jsonl(&runs))?;
        }
        reports.push(report);
    }
    let rows: Vec<ReportRow> = reports.iter().map(ReportRow::from).collect();
    emit_report(&rows, "mode", cfg.task.name, format, a.out.as_deref())?;
    Ok(())
}

fn train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training queries; trains both stages through the pipeline.
    #[arg(long, conflicts_with = "pairs", required_unless_present = "pairs")]
    pub queries: Option<PathBuf>,
    /// Pairs from `sample`; trains a single model.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "full")]
    pub mode: String,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

fn train(g: &Global, a: &TrainArgs) -> Result<()> {
    let mode: Ablation = parse_arg(&a.mode)?;
    let cfg = load_config(g)?;
    let mut tc = train_config(cfg.task.seed);
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    if let Some(b) = a.batch_size {
        if b == 0 {
            bail!(usage("--batch-size must be at least 1"));
        }
        tc.batch_size = b;
    }
    let comps = Components::from_config(&cfg)?;
    std::fs::create_dir_all(&a.out)?;
    let extractor = comps.extractor();

    if let Some(pairs_path) = &a.pairs {
        let pairs = load_pairs(pairs_path)?;
        let (model, report) = train_logistic(&pairs, &extractor, &tc)?;
        model.save(&a.out.join("model.json"))?;
        write_file(&a.out.join("train_report.json"), &serde_json::to_string_pretty(&report)?)?;
        log::info!("trained on {} pairs, final loss {:?}", pairs.len(), report.epoch_losses.last());
        return Ok(());
    }
    let qs = queries(a.queries.as_deref().expect("clap enforces --queries"))?;
    let trained = train_stage_scorers(mode, &cfg, &qs, &comps.retriever(&cfg), &extractor, &tc)?;
    trained.paragraph.save(&a.out.join("paragraph.json"))?;
    trained.sentence.save(&a.out.join("sentence.json"))?;
    let reports: HashMap<&str, _> = [
        ("paragraph", &trained.paragraph_report),
        ("sentence", &trained.sentence_report),
    ]
    .into_iter()
    .collect();
    write_file(&a.out.join("train_report.json"), &serde_json::to_string_pretty(&reports)?)?;
    Ok(())
}

fn load_pairs(path: &Path) -> Result<Vec<LabeledPair>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}: malformed pair", path.display(), i + 1))?);
    }
    Ok(out)
}
