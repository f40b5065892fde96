//! Task-tagged queries with optional gold annotations, and loaders for the
//! native JSONL layout plus the official HotpotQA and FEVER data files.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Corpus, ParagraphId, SentenceId};

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Fever,
    Hotpot,
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fever" => Ok(Self::Fever),
            "hotpot" => Ok(Self::Hotpot),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Fever => "fever",
            Task::Hotpot => "hotpot",
        })
    }
}

/// The three verification classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Label {
    Supports,
    Refutes,
    NotEnoughInfo,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Supports, Label::Refutes, Label::NotEnoughInfo];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Supports => "SUPPORTS",
            Label::Refutes => "REFUTES",
            Label::NotEnoughInfo => "NOT ENOUGH INFO",
        }
    }
}

impl FromStr for Label {
    type Err = QueryError;
    /// Case-insensitive, as the official scorer upper-cases both sides.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_uppercase().as_str() {
            "SUPPORTS" => Ok(Label::Supports),
            "REFUTES" => Ok(Label::Refutes),
            "NOT ENOUGH INFO" | "NEI" => Ok(Label::NotEnoughInfo),
            _ => Err(QueryError::UnknownLabel(s.to_string())),
        }
    }
}

impl TryFrom<String> for Label {
    type Error = QueryError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Label> for String {
    fn from(l: Label) -> String {
        l.as_str().to_string()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A question (hotpot) or claim (fever). Gold evidence is a list of groups,
/// each sufficient on its own; HotpotQA supporting facts form one group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub task: Task,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default)]
    pub evidence: Vec<Vec<SentenceId>>,
}

impl Query {
    /// Union of all gold evidence groups.
    pub fn gold_sentences(&self) -> BTreeSet<SentenceId> {
        self.evidence.iter().flatten().cloned().collect()
    }

    /// Paragraphs containing any gold sentence. Unresolvable sentences are
    /// skipped.
    pub fn gold_paragraphs(&self, corpus: &Corpus) -> BTreeSet<ParagraphId> {
        self.gold_sentences()
            .iter()
            .filter_map(|s| corpus.paragraph_of(s).map(|p| p.id()))
            .collect()
    }

    pub fn is_nei(&self) -> bool {
        self.label == Some(Label::NotEnoughInfo)
    }
}

/// Loads queries from a native JSONL file, an official HotpotQA JSON array,
/// or an official FEVER JSONL file; the layout is detected per file (array
/// vs. lines) and per line (`claim` → FEVER, `question` → HotpotQA).
pub fn load_queries(path: &Path) -> Result<Vec<Query>, QueryError> {
    let raw = std::fs::read_to_string(path)?;
    let malformed = |line: usize, reason: String| QueryError::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    };
    if raw.trim_start().starts_with('[') {
        let items: Vec<Value> = serde_json::from_str(&raw).map_err(|e| malformed(e.line(), e.to_string()))?;
        return items
            .iter()
            .enumerate()
            .map(|(i, v)| parse_any(v).map_err(|r| malformed(i + 1, r)))
            .collect();
    }
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| malformed(i + 1, e.to_string()))?;
        out.push(parse_any(&v).map_err(|r| malformed(i + 1, r))?);
    }
    Ok(out)
}

pub fn write_queries(path: &Path, queries: &[Query]) -> Result<(), QueryError> {
    let mut s = String::new();
    for q in queries {
        s.push_str(&serde_json::to_string(q).expect("queries serialize"));
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn parse_any(v: &Value) -> Result<Query, String> {
    if v.get("claim").is_some() {
        parse_fever(v)
    } else if v.get("question").is_some() {
        parse_hotpot(v)
    } else {
        serde_json::from_value(v.clone()).map_err(|e| e.to_string())
    }
}

fn id_string(v: &Value) -> Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err("id must be a string or number".into()),
    }
}

/// Official FEVER record: evidence entries are
/// `[annotation_id, evidence_id, title, line]`, with nulls for NEI.
fn parse_fever(v: &Value) -> Result<Query, String> {
    let id = id_string(v.get("id").ok_or("missing \"id\"")?)?;
    let text = v["claim"].as_str().ok_or("\"claim\" must be a string")?.to_string();
    let label = match v.get("label").and_then(Value::as_str) {
        Some(l) => Some(l.parse::<Label>().map_err(|e| e.to_string())?),
        None => None,
    };
    let mut evidence = Vec::new();
    if let Some(groups) = v.get("evidence").and_then(Value::as_array) {
        for g in groups {
            let mut group = Vec::new();
            for e in g.as_array().ok_or("evidence group must be a list")? {
                let (Some(title), Some(line)) = (e.get(2).and_then(Value::as_str), e.get(3).and_then(Value::as_i64)) else {
                    continue;
                };
                group.push(SentenceId::new(title, line).map_err(|e| e.to_string())?);
            }
            if !group.is_empty() {
                evidence.push(group);
            }
        }
    }
    Ok(Query {
        id,
        task: Task::Fever,
        text,
        answer: None,
        label,
        evidence,
    })
}

/// Official HotpotQA record (`_id`, `question`, `answer`, `supporting_facts`).
fn parse_hotpot(v: &Value) -> Result<Query, String> {
    let id = id_string(v.get("_id").or_else(|| v.get("id")).ok_or("missing \"_id\"")?)?;
    let text = v["question"].as_str().ok_or("\"question\" must be a string")?.to_string();
    let answer = v.get("answer").and_then(Value::as_str).map(str::to_string);
    let mut group = Vec::new();
    if let Some(sp) = v.get("supporting_facts").and_then(Value::as_array) {
        for f in sp {
            let id: SentenceId = serde_json::from_value(f.clone()).map_err(|e| e.to_string())?;
            group.push(id);
        }
    }
    Ok(Query {
        id,
        task: Task::Hotpot,
        text,
        answer,
        label: None,
        evidence: if group.is_empty() { Vec::new() } else { vec![group] },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_parse_case_insensitively() {
        assert_eq!("supports".parse::<Label>().unwrap(), Label::Supports);
        assert_eq!("NOT ENOUGH INFO".parse::<Label>().unwrap(), Label::NotEnoughInfo);
        assert!("MAYBE".parse::<Label>().is_err());
    }

    #[test]
    fn official_fever_line_with_nei_nulls() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fever.jsonl");
        std::fs::write(
            &p,
            concat!(
                r#"{"id": 75397, "verifiable": "VERIFIABLE", "label": "SUPPORTS", "claim": "Nikolaj Coster-Waldau worked with the Fox Broadcasting Company.", "evidence": [[[92206, 104971, "Nikolaj_Coster-Waldau", 7], [92206, 104971, "Fox_Broadcasting_Company", 0]], [[92207, 104972, "Nikolaj_Coster-Waldau", 7]]]}"#,
                "\n",
                r#"{"id": 1, "label": "NOT ENOUGH INFO", "claim": "x", "evidence": [[[1, null, null, null]]]}"#,
                "\n"
            ),
        )
        .unwrap();
        let qs = load_queries(&p).unwrap();
        assert_eq!(qs[0].id, "75397");
        assert_eq!(qs[0].evidence.len(), 2);
        assert_eq!(qs[0].evidence[0][1].title.as_str(), "Fox Broadcasting Company");
        assert!(qs[1].is_nei());
        assert!(qs[1].evidence.is_empty());
    }

    #[test]
    fn official_hotpot_array_and_native_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hotpot.json");
        std::fs::write(
            &p,
            r#"[{"_id": "5a8b", "question": "Q?", "answer": "yes", "supporting_facts": [["A", 0], ["B", 2]], "type": "comparison"}]"#,
        )
        .unwrap();
        let qs = load_queries(&p).unwrap();
        assert_eq!(qs[0].task, Task::Hotpot);
        assert_eq!(qs[0].evidence[0].len(), 2);
        let native = dir.path().join("q.jsonl");
        write_queries(&native, &qs).unwrap();
        assert_eq!(load_queries(&native).unwrap(), qs);
    }
}
