//! Pipeline configuration: a TOML document with sections `[task]`,
//! `[retrieval]`, `[paragraph_level]`, `[sentence_level]`, `[downstream]` and
//! `[scorers]`. Any key can be overridden from the environment with
//! `MRS__<SECTION>__<KEY>=<value>`, e.g. `MRS__SENTENCE_LEVEL__H=0.3`; values
//! are parsed as TOML scalars and fall back to strings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::query::Task;
use crate::retrieval::DEFAULT_TOP_N;

pub const ENV_PREFIX: &str = "MRS__";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub name: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalSection {
    pub tfidf_top_n: usize,
    pub hyperlink_top_n: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            tfidf_top_n: DEFAULT_TOP_N,
            hyperlink_top_n: DEFAULT_TOP_N,
        }
    }
}

/// Filter parameters of one neural stage. Kept items have score `> h`; at
/// most `k` survive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub enabled: bool,
    pub k: usize,
    pub h: f64,
    /// Pass the document title to the scorer alongside the text.
    pub include_title: bool,
}

impl StageSection {
    pub fn paragraph_default() -> Self {
        Self {
            enabled: true,
            k: 2,
            h: 0.005,
            include_title: true,
        }
    }

    pub fn sentence_default() -> Self {
        Self {
            enabled: true,
            k: 5,
            h: 0.5,
            include_title: false,
        }
    }
}

fn paragraph_default() -> StageSection {
    StageSection::paragraph_default()
}

fn sentence_default() -> StageSection {
    StageSection::sentence_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    Baseline,
    Oracle,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DownstreamSection {
    pub qa: AdapterKind,
    pub verifier: AdapterKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub timeout_secs: f64,
}

impl Default for DownstreamSection {
    fn default() -> Self {
        Self {
            qa: AdapterKind::Baseline,
            verifier: AdapterKind::Baseline,
            endpoint: None,
            timeout_secs: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Builtin,
    Remote,
}

/// A built-in model (zero weights when `model` is absent) or a remote
/// endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerSpec {
    pub kind: ScorerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

impl Default for ScorerSpec {
    fn default() -> Self {
        Self {
            kind: ScorerKind::Builtin,
            model: None,
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorersSection {
    pub paragraph: ScorerSpec,
    pub sentence: ScorerSpec,
    pub timeout_secs: f64,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for ScorersSection {
    fn default() -> Self {
        Self {
            paragraph: ScorerSpec::default(),
            sentence: ScorerSpec::default(),
            timeout_secs: 30.0,
            batch_size: 128,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub task: TaskSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default = "paragraph_default")]
    pub paragraph_level: StageSection,
    #[serde(default = "sentence_default")]
    pub sentence_level: StageSection,
    #[serde(default)]
    pub downstream: DownstreamSection,
    #[serde(default)]
    pub scorers: ScorersSection,
}

impl PipelineConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task: TaskSection {
                name: task,
                seed: 0,
                corpus: None,
                index: None,
            },
            retrieval: RetrievalSection::default(),
            paragraph_level: StageSection::paragraph_default(),
            sentence_level: StageSection::sentence_default(),
            downstream: DownstreamSection::default(),
            scorers: ScorersSection::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with_env(s, std::iter::empty())
    }

    /// Parses `s`, applies `MRS__` overrides from `env`, then validates.
    pub fn from_toml_with_env(s: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut over: toml::Table = s.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        apply_env(&mut over, env)?;
        let task: Task = over
            .get("task")
            .and_then(|t| t.get("name"))
            .and_then(toml::Value::as_str)
            .ok_or_else(|| ConfigError::Parse("missing task.name".into()))?
            .parse()
            .map_err(ConfigError::Parse)?;
        let mut table = toml::Table::try_from(Self::new(task)).map_err(|e| ConfigError::Parse(e.to_string()))?;
        merge(&mut table, over);
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a file and applies the process environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let s = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_with_env(&s, std::env::vars())?;
        cfg.resolve_relative(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Paths in the file are relative to the file's directory.
    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut self.task.corpus);
        fix(&mut self.task.index);
        fix(&mut self.scorers.paragraph.model);
        fix(&mut self.scorers.sentence.model);
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, s) in [("paragraph_level", &self.paragraph_level), ("sentence_level", &self.sentence_level)] {
            if s.k < 1 {
                return Err(ConfigError::Invalid(format!("{name}.k must be >= 1")));
            }
            if !(0.0..=1.0).contains(&s.h) {
                return Err(ConfigError::Invalid(format!("{name}.h must lie in [0, 1], got {}", s.h)));
            }
        }
        if self.retrieval.tfidf_top_n == 0 || self.retrieval.hyperlink_top_n == 0 {
            return Err(ConfigError::Invalid("retrieval top_n values must be >= 1".into()));
        }
        if self.scorers.batch_size == 0 || self.scorers.max_in_flight == 0 {
            return Err(ConfigError::Invalid("scorers.batch_size and max_in_flight must be >= 1".into()));
        }
        for (name, s) in [("paragraph", &self.scorers.paragraph), ("sentence", &self.scorers.sentence)] {
            if s.kind == ScorerKind::Remote && s.endpoint.is_none() {
                return Err(ConfigError::Invalid(format!("scorers.{name} is remote but has no endpoint")));
            }
        }
        let remote = self.downstream.qa == AdapterKind::Remote || self.downstream.verifier == AdapterKind::Remote;
        if remote && self.downstream.endpoint.is_none() {
            return Err(ConfigError::Invalid("remote downstream adapter needs downstream.endpoint".into()));
        }
        Ok(())
    }
}

fn apply_env(table: &mut toml::Table, env: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
    let mut vars: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(str::to_lowercase).collect();
        if path.iter().any(String::is_empty) {
            return Err(ConfigError::Parse(format!("malformed override {key}")));
        }
        let value = parse_scalar(&raw);
        let (last, parents) = path.split_last().expect("non-empty path");
        let mut cur = &mut *table;
        for p in parents {
            let entry = cur
                .entry(p.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = entry
                .as_table_mut()
                .ok_or_else(|| ConfigError::Parse(format!("{key}: {p} is not a section")))?;
        }
        cur.insert(last.clone(), value);
    }
    Ok(())
}

/// Recursive overlay of `over` onto `base`; tables merge, scalars replace.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[task]\nname = \"hotpot\"\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let c = PipelineConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.paragraph_level, StageSection::paragraph_default());
        assert_eq!(c.sentence_level.k, 5);
        assert_eq!(c.downstream.qa, AdapterKind::Baseline);
        assert_eq!(PipelineConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn env_overrides_numbers_bools_and_strings() {
        let env = vec![
            ("MRS__PARAGRAPH_LEVEL__K".to_string(), "3".to_string()),
            ("MRS__SENTENCE_LEVEL__ENABLED".to_string(), "false".to_string()),
            ("MRS__SCORERS__PARAGRAPH__MODEL".to_string(), "/tmp/p.json".to_string()),
            ("OTHER".to_string(), "x".to_string()),
        ];
        let toml = format!("{MINIMAL}[paragraph_level]\nh = 0.1\n");
        let c = PipelineConfig::from_toml_with_env(&toml, env).unwrap();
        assert_eq!(c.paragraph_level.k, 3);
        assert_eq!(c.paragraph_level.h, 0.1);
        assert!(c.paragraph_level.include_title);
        assert!(!c.sentence_level.enabled);
        assert_eq!(c.scorers.paragraph.model.as_deref(), Some(Path::new("/tmp/p.json")));
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let bad_h = format!("{MINIMAL}[sentence_level]\nh = 1.5\n");
        assert!(matches!(PipelineConfig::from_toml_str(&bad_h), Err(ConfigError::Invalid(_))));
        let env = vec![("MRS__PARAGRAPH_LEVEL__K".to_string(), "0".to_string())];
        assert!(PipelineConfig::from_toml_with_env(MINIMAL, env).is_err());
        assert!(matches!(
            PipelineConfig::from_toml_str("[task]\nname = \"hotpot\"\nbogus = 1\n"),
            Err(ConfigError::Parse(_))
        ));
    }
}
