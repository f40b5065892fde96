//! Term-based candidate generation: TF-IDF ranking over an inverted index,
//! title keyword matching, and one hop of hyperlink expansion.
//!
//! Weighting is `ltn`: a unit's weight for term `t` is
//! `(1 + ln tf) * ln(N / df)` and a query scores a unit by summing that weight
//! over the query's distinct terms. There is no length normalization.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DocumentTitle, ParagraphId};
use crate::query::Task;
use crate::text::tokenize;

/// Titles kept per query by the keyword matcher.
pub const KEYWORD_CAP: usize = 10;
/// Documents taken from TF-IDF ranking and from hyperlink expansion.
pub const DEFAULT_TOP_N: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error("top_n must be at least 1")]
    ZeroTopN,
    #[error("index {path}: {reason}")]
    BadIndex { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Document,
    Paragraph,
}

impl FromStr for Granularity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "document" => Ok(Self::Document),
            "paragraph" => Ok(Self::Paragraph),
            other => Err(format!("unknown granularity {other:?}")),
        }
    }
}

/// An indexed unit: a whole document, or one paragraph of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexUnit {
    pub title: DocumentTitle,
    pub para_index: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub unit: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexManifest {
    pub granularity: Granularity,
    pub doc_count: usize,
    pub vocab_size: usize,
    pub weighting: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermIndex {
    granularity: Granularity,
    units: Vec<IndexUnit>,
    vocabulary: HashMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    doc_lengths: Vec<u32>,
    idf: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedUnit {
    pub unit: u32,
    pub score: f64,
}

impl TermIndex {
    pub fn build(corpus: &Corpus, granularity: Granularity) -> Result<Self, RetrievalError> {
        if corpus.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut units = Vec::new();
        let mut texts = Vec::new();
        for doc in corpus.documents() {
            match granularity {
                Granularity::Document => {
                    units.push(IndexUnit {
                        title: doc.title.clone(),
                        para_index: None,
                    });
                    let t: Vec<String> = doc.paragraphs.iter().map(|p| p.text()).collect();
                    texts.push(t.join(" "));
                }
                Granularity::Paragraph => {
                    for p in &doc.paragraphs {
                        units.push(IndexUnit {
                            title: doc.title.clone(),
                            para_index: Some(p.para_index),
                        });
                        texts.push(p.text());
                    }
                }
            }
        }

        let mut vocabulary: HashMap<String, u32> = HashMap::new();
        let mut postings: Vec<Vec<Posting>> = Vec::new();
        let mut doc_lengths = Vec::with_capacity(units.len());
        for (unit, text) in texts.iter().enumerate() {
            let tokens = tokenize(text);
            doc_lengths.push(tokens.len() as u32);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for tok in tokens {
                *tf.entry(tok).or_default() += 1;
            }
            for (term, count) in tf {
                let next = vocabulary.len() as u32;
                let id = *vocabulary.entry(term).or_insert(next);
                if id as usize == postings.len() {
                    postings.push(Vec::new());
                }
                // units are visited in increasing order, so each list stays sorted
                postings[id as usize].push(Posting {
                    unit: unit as u32,
                    tf: count,
                });
            }
        }
        let n = units.len() as f64;
        let idf = postings.iter().map(|p| (n / p.len() as f64).ln()).collect();
        Ok(Self {
            granularity,
            units,
            vocabulary,
            postings,
            doc_lengths,
            idf,
        })
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn doc_count(&self) -> usize {
        self.units.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn unit(&self, id: u32) -> &IndexUnit {
        &self.units[id as usize]
    }

    pub fn units(&self) -> &[IndexUnit] {
        &self.units
    }

    pub fn vocabulary_terms(&self) -> impl Iterator<Item = &str> {
        self.vocabulary.keys().map(String::as_str)
    }

    pub fn doc_length(&self, id: u32) -> u32 {
        self.doc_lengths[id as usize]
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.vocabulary
            .get(term)
            .map(|&id| self.postings[id as usize].as_slice())
            .unwrap_or(&[])
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    /// `ln(N / df)`, or `None` for out-of-vocabulary terms.
    pub fn idf(&self, term: &str) -> Option<f64> {
        self.vocabulary.get(term).map(|&id| self.idf[id as usize])
    }

    pub fn term_frequency(&self, term: &str, unit: u32) -> u32 {
        let p = self.postings(term);
        p.binary_search_by_key(&unit, |x| x.unit).map(|i| p[i].tf).unwrap_or(0)
    }

    pub fn manifest(&self) -> IndexManifest {
        IndexManifest {
            granularity: self.granularity,
            doc_count: self.doc_count(),
            vocab_size: self.vocab_size(),
            weighting: "ltn".into(),
        }
    }

    /// Scores of every unit sharing at least one query term.
    pub fn score_all(&self, query: &str) -> HashMap<u32, f64> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let Some(&id) = self.vocabulary.get(term) else {
                continue;
            };
            let idf = self.idf[id as usize];
            for p in &self.postings[id as usize] {
                *acc.entry(p.unit).or_default() += (1.0 + f64::from(p.tf).ln()) * idf;
            }
        }
        acc
    }

    /// Top `top_n` units with positive score, best first. Equal scores are
    /// ordered by title, then paragraph index.
    pub fn tfidf_rank(&self, query: &str, top_n: usize) -> Result<Vec<RankedUnit>, RetrievalError> {
        if top_n == 0 {
            return Err(RetrievalError::ZeroTopN);
        }
        let mut ranked: Vec<RankedUnit> = self
            .score_all(query)
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(unit, score)| RankedUnit { unit, score })
            .collect();
        self.sort_ranked(&mut ranked);
        ranked.truncate(top_n);
        Ok(ranked)
    }

    fn sort_ranked(&self, ranked: &mut [RankedUnit]) {
        ranked.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| self.unit(a.unit).title.cmp(&self.unit(b.unit).title))
                .then_with(|| self.unit(a.unit).para_index.cmp(&self.unit(b.unit).para_index))
        });
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let bad = |reason: String| RetrievalError::BadIndex {
            path: path.to_path_buf(),
            reason,
        };
        let w = BufWriter::new(File::create(path)?);
        bincode::serialize_into(w, self).map_err(|e| bad(e.to_string()))?;
        let manifest = serde_json::to_vec_pretty(&self.manifest()).map_err(|e| bad(e.to_string()))?;
        std::fs::write(manifest_path(path), manifest)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let bad = |reason: String| RetrievalError::BadIndex {
            path: path.to_path_buf(),
            reason,
        };
        let r = BufReader::new(File::open(path)?);
        let index: Self = bincode::deserialize_from(r).map_err(|e| bad(e.to_string()))?;
        if let Ok(bytes) = std::fs::read(manifest_path(path)) {
            let m: IndexManifest = serde_json::from_slice(&bytes).map_err(|e| bad(e.to_string()))?;
            if m.doc_count != index.doc_count() || m.vocab_size != index.vocab_size() || m.granularity != index.granularity {
                return Err(bad("manifest does not match index contents".into()));
            }
        }
        Ok(index)
    }
}

/// Sidecar manifest location: `<index>.manifest.json`.
pub fn manifest_path(index: &Path) -> PathBuf {
    let mut s = index.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Exact title-in-query matcher over canonical title token sequences.
#[derive(Debug, Clone, Default)]
pub struct KeywordMatcher {
    by_tokens: HashMap<Vec<String>, Vec<DocumentTitle>>,
    max_len: usize,
}

impl KeywordMatcher {
    pub fn new(corpus: &Corpus) -> Self {
        let mut by_tokens: HashMap<Vec<String>, Vec<DocumentTitle>> = HashMap::new();
        let mut max_len = 0;
        for doc in corpus.documents() {
            let toks = tokenize(doc.title.as_str());
            if toks.is_empty() {
                continue;
            }
            max_len = max_len.max(toks.len());
            by_tokens.entry(toks).or_default().push(doc.title.clone());
        }
        for v in by_tokens.values_mut() {
            v.sort();
        }
        Self { by_tokens, max_len }
    }

    /// Titles occurring at token boundaries in `query`, after dropping titles
    /// whose every occurrence sits strictly inside a longer matched title.
    /// Ranked by title token length descending then title, capped at
    /// [`KEYWORD_CAP`].
    pub fn matches(&self, query: &str) -> Vec<DocumentTitle> {
        let q = tokenize(query);
        // (start, end) spans per token sequence
        let mut spans: Vec<(usize, usize, &Vec<String>)> = Vec::new();
        for start in 0..q.len() {
            for len in 1..=self.max_len.min(q.len() - start) {
                if let Some((key, _)) = self.by_tokens.get_key_value(&q[start..start + len]) {
                    spans.push((start, start + len, key));
                }
            }
        }
        let covered = |s: usize, e: usize| {
            spans
                .iter()
                .any(|&(s2, e2, _)| s2 <= s && e <= e2 && (e2 - s2) > (e - s))
        };
        let mut kept: BTreeSet<&Vec<String>> = BTreeSet::new();
        for &(s, e, key) in &spans {
            if !covered(s, e) {
                kept.insert(key);
            }
        }
        let mut out: Vec<(usize, DocumentTitle)> = kept
            .into_iter()
            .flat_map(|k| self.by_tokens[k].iter().map(move |t| (k.len(), t.clone())))
            .collect();
        out.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        out.truncate(KEYWORD_CAP);
        out.into_iter().map(|(_, t)| t).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    Keyword,
    Tfidf,
    Hyperlink,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateParagraph {
    pub id: ParagraphId,
    pub source: CandidateSource,
}

/// P_I: duplicate-free on paragraph id, in insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialCandidateSet {
    pub query_id: String,
    pub paragraphs: Vec<CandidateParagraph>,
}

impl InitialCandidateSet {
    pub fn new(query_id: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            paragraphs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ParagraphId> {
        self.paragraphs.iter().map(|p| &p.id)
    }

    pub fn titles(&self) -> BTreeSet<DocumentTitle> {
        self.ids().map(|p| p.title.clone()).collect()
    }

    fn push(&mut self, seen: &mut HashSet<ParagraphId>, id: ParagraphId, source: CandidateSource) {
        if seen.insert(id.clone()) {
            self.paragraphs.push(CandidateParagraph { id, source });
        }
    }
}

/// Corpus, index, and keyword matcher bundled for candidate generation.
#[derive(Clone)]
pub struct TermRetriever<'a> {
    pub corpus: &'a Corpus,
    pub index: &'a TermIndex,
    pub matcher: KeywordMatcher,
    pub tfidf_top_n: usize,
    pub hyperlink_top_n: usize,
}

impl<'a> TermRetriever<'a> {
    pub fn new(corpus: &'a Corpus, index: &'a TermIndex) -> Self {
        Self {
            corpus,
            index,
            matcher: KeywordMatcher::new(corpus),
            tfidf_top_n: DEFAULT_TOP_N,
            hyperlink_top_n: DEFAULT_TOP_N,
        }
    }

    pub fn keyword_match(&self, query: &str) -> Vec<DocumentTitle> {
        self.matcher.matches(query)
    }

    fn unit_paragraphs(&self, unit: &IndexUnit) -> Vec<ParagraphId> {
        match unit.para_index {
            Some(p) => vec![ParagraphId {
                title: unit.title.clone(),
                para_index: p,
            }],
            None => self.doc_paragraphs(&unit.title),
        }
    }

    fn doc_paragraphs(&self, title: &DocumentTitle) -> Vec<ParagraphId> {
        self.corpus
            .document(title)
            .map(|d| d.paragraphs.iter().map(|p| p.id()).collect())
            .unwrap_or_default()
    }

    /// Ranks the documents hyperlinked from `seed` (minus the documents
    /// already in `seed`) by TF-IDF against `query` and returns the
    /// paragraphs of the best `top_n` units. Linked documents with zero score
    /// are still eligible, after every positive-score one.
    pub fn hyperlink_expand(
        &self,
        seed: &InitialCandidateSet,
        query: &str,
        top_n: usize,
    ) -> Result<Vec<ParagraphId>, RetrievalError> {
        if top_n == 0 {
            return Err(RetrievalError::ZeroTopN);
        }
        let seed_docs = seed.titles();
        let mut targets: BTreeSet<&DocumentTitle> = BTreeSet::new();
        for id in seed.ids() {
            if let Ok(p) = self.corpus.paragraph(id) {
                targets.extend(p.hyperlinks.iter().filter(|t| !seed_docs.contains(*t)));
            }
        }
        if targets.is_empty() {
            return Ok(Vec::new());
        }
        let scores = self.index.score_all(query);
        let mut ranked: Vec<RankedUnit> = self
            .index
            .units()
            .iter()
            .enumerate()
            .filter(|(_, u)| targets.contains(&u.title))
            .map(|(i, _)| RankedUnit {
                unit: i as u32,
                score: scores.get(&(i as u32)).copied().unwrap_or(0.0),
            })
            .collect();
        self.index.sort_ranked(&mut ranked);
        ranked.truncate(top_n);
        Ok(ranked
            .iter()
            .flat_map(|r| self.unit_paragraphs(self.index.unit(r.unit)))
            .collect())
    }

    /// Keyword matches ∪ TF-IDF top-n, expanded to paragraphs; for multi-hop
    /// tasks one hyperlink hop is merged in afterwards.
    pub fn initial_candidates(
        &self,
        query_id: &str,
        query: &str,
        task: Task,
    ) -> Result<InitialCandidateSet, RetrievalError> {
        let mut set = InitialCandidateSet::new(query_id);
        let mut seen = HashSet::new();
        for title in self.keyword_match(query) {
            for id in self.doc_paragraphs(&title) {
                set.push(&mut seen, id, CandidateSource::Keyword);
            }
        }
        for r in self.index.tfidf_rank(query, self.tfidf_top_n)? {
            for id in self.unit_paragraphs(self.index.unit(r.unit)) {
                set.push(&mut seen, id, CandidateSource::Tfidf);
            }
        }
        if task == Task::Hotpot {
            for id in self.hyperlink_expand(&set, query, self.hyperlink_top_n)? {
                set.push(&mut seen, id, CandidateSource::Hyperlink);
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, ParagraphRecord};

    fn doc(title: &str, paras: &[&[&str]], links: &[&str]) -> Document {
        let title = DocumentTitle::new(title).unwrap();
        let mut first = 0;
        let paragraphs = paras
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let p = ParagraphRecord {
                    title: title.clone(),
                    para_index: i as u32,
                    first_sent_index: first,
                    sentences: s.iter().map(|x| x.to_string()).collect(),
                    hyperlinks: links.iter().map(|l| DocumentTitle::new(l).unwrap()).collect(),
                };
                first += s.len() as u32;
                p
            })
            .collect();
        Document { title, paragraphs }
    }

    fn three_docs() -> Corpus {
        Corpus::from_documents(vec![
            doc("A", &[&["apple banana apple."]], &["B", "C"]),
            doc("B", &[&["banana cherry zebra."]], &[]),
            doc("C", &[&["apple cherry."]], &[]),
        ])
        .unwrap()
    }

    #[test]
    fn postings_contain_exactly_the_holding_units() {
        let c = three_docs();
        let idx = TermIndex::build(&c, Granularity::Document).unwrap();
        assert_eq!(idx.doc_count(), 3);
        let z = idx.postings("zebra");
        assert_eq!(z.len(), 1);
        assert_eq!(idx.unit(z[0].unit).title.as_str(), "B");
        assert_eq!(idx.term_frequency("apple", 0), 2);
        for p in idx.postings.iter() {
            assert!(p.windows(2).all(|w| w[0].unit < w[1].unit));
        }
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let c = Corpus::from_documents(vec![]).unwrap();
        assert!(matches!(TermIndex::build(&c, Granularity::Document), Err(RetrievalError::EmptyCorpus)));
    }

    #[test]
    fn hand_computed_ltn_scores_on_three_docs() {
        // N = 3. zebra: df 1 → idf ln 3; cherry: df 2 → idf ln 1.5.
        // query "zebra cherry": B = ln3 + ln1.5, C = ln1.5, A = 0 (not returned).
        let c = three_docs();
        let idx = TermIndex::build(&c, Granularity::Document).unwrap();
        let r = idx.tfidf_rank("Zebra? cherry", 5).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(idx.unit(r[0].unit).title.as_str(), "B");
        assert!((r[0].score - (3f64.ln() + 1.5f64.ln())).abs() < 1e-12);
        assert!((r[1].score - 1.5f64.ln()).abs() < 1e-12);
        // apple tf 2 in A: (1 + ln 2) * ln 1.5
        let r = idx.tfidf_rank("apple", 5).unwrap();
        assert_eq!(idx.unit(r[0].unit).title.as_str(), "A");
        assert!((r[0].score - (1.0 + 2f64.ln()) * 1.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn no_overlap_and_zero_top_n() {
        let c = three_docs();
        let idx = TermIndex::build(&c, Granularity::Document).unwrap();
        assert!(idx.tfidf_rank("quantum", 5).unwrap().is_empty());
        assert!(idx.tfidf_rank("", 5).unwrap().is_empty());
        assert!(matches!(idx.tfidf_rank("apple", 0), Err(RetrievalError::ZeroTopN)));
    }

    #[test]
    fn keyword_longest_match_drops_contained_titles() {
        let c = Corpus::from_documents(vec![
            doc("Miami", &[&["x"]], &[]),
            doc("Miami metropolitan area", &[&["x"]], &[]),
            doc("Wojtek Wolski", &[&["x"]], &[]),
            doc("Area", &[&["x"]], &[]),
        ])
        .unwrap();
        let m = KeywordMatcher::new(&c);
        let got: Vec<String> = m
            .matches("Wojtek Wolski played for what team based in the Miami metropolitan area?")
            .into_iter()
            .map(String::from)
            .collect();
        assert_eq!(got, vec!["Miami metropolitan area", "Wojtek Wolski"]);
        // "Miami" survives when it also occurs on its own
        let got = m.matches("Miami is in the Miami metropolitan area");
        assert!(got.iter().any(|t| t.as_str() == "Miami"));
        assert!(m.matches("nothing relevant").is_empty());
    }

    #[test]
    fn keyword_cap_is_ten() {
        let names: Vec<String> = (0..15).map(|i| format!("w{i}")).collect();
        let docs = names.iter().map(|n| doc(n, &[&["x"]], &[])).collect();
        let c = Corpus::from_documents(docs).unwrap();
        let q = names.join(" ");
        assert_eq!(KeywordMatcher::new(&c).matches(&q).len(), KEYWORD_CAP);
    }

    #[test]
    fn hyperlink_expansion_ranks_linked_docs() {
        let c = three_docs();
        let idx = TermIndex::build(&c, Granularity::Document).unwrap();
        let r = TermRetriever::new(&c, &idx);
        let mut seed = InitialCandidateSet::new("q");
        seed.paragraphs.push(CandidateParagraph {
            id: ParagraphId::new("A", 0).unwrap(),
            source: CandidateSource::Keyword,
        });
        let got = r.hyperlink_expand(&seed, "zebra", 5).unwrap();
        assert_eq!(got[0].title.as_str(), "B");
        assert_eq!(got.len(), 2);
        assert_eq!(r.hyperlink_expand(&seed, "zebra", 1).unwrap().len(), 1);

        let mut no_links = InitialCandidateSet::new("q");
        no_links.paragraphs.push(CandidateParagraph {
            id: ParagraphId::new("B", 0).unwrap(),
            source: CandidateSource::Tfidf,
        });
        assert!(r.hyperlink_expand(&no_links, "zebra", 5).unwrap().is_empty());
    }

    #[test]
    fn index_save_load_round_trip() {
        let c = three_docs();
        let idx = TermIndex::build(&c, Granularity::Paragraph).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("idx.bin");
        idx.save(&p).unwrap();
        let m: IndexManifest = serde_json::from_slice(&std::fs::read(manifest_path(&p)).unwrap()).unwrap();
        assert_eq!(m.weighting, "ltn");
        assert_eq!(m.doc_count, 3);
        let back = TermIndex::load(&p).unwrap();
        assert_eq!(back.tfidf_rank("cherry", 5).unwrap(), idx.tfidf_rank("cherry", 5).unwrap());
    }
}
