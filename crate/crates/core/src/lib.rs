//! Multi-level retrieval for multi-hop QA and fact verification: term-based
//! candidate retrieval, paragraph and sentence relevance scoring with
//! threshold-and-cap filtering, downstream adapters and official metrics.

pub mod config;
pub mod corpus;
pub mod downstream;
pub mod eval;
pub mod experiment;
pub mod pipeline;
pub mod query;
pub mod retrieval;
pub mod sampler;
pub mod scoring;
pub mod synthetic;
pub mod text;

pub use config::PipelineConfig;
pub use corpus::{Corpus, CorpusError, Document, DocumentTitle, ParagraphId, ParagraphRecord, SentenceId, SourceFormat};
pub use pipeline::{filter_by_score, run_batch, run_pipeline, Ablation, Modules, PipelineRun};
pub use query::{Label, Query, Task};
pub use retrieval::{Granularity, InitialCandidateSet, TermIndex, TermRetriever};
pub use scoring::{CandidateId, ContextItem, LogisticScorer, ScoreError, ScoredCandidate, Scorer};
pub use eval::{EvidenceSemantics, MetricsReport, PerExampleScores};
pub use experiment::{Components, ReportFormat, SweepParam, SweepRow, SweepSpec};
