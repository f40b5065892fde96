//! Deterministic corpora and queries for tests, benchmarks and demos.
//!
//! * [`fig2_corpus`]: three documents around one bridge question where a
//!   high-scoring distracting sentence sits in a low-scoring paragraph.
//! * [`wiki_fixture`]: `n` linked documents with bridge questions or claims.
//! * [`distractor_fixture`]: every gold paragraph has look-alike paragraphs
//!   whose key sentence is lexically identical but whose title is not in the
//!   query.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::corpus::{Corpus, Document, DocumentTitle, ParagraphId, ParagraphRecord, SentenceId};
use crate::query::{Label, Query, Task};
use crate::scoring::{CandidateId, TableScorer};

pub const FIG2_QUESTION: &str = "Wojtek Wolski played for what team based in the Miami metropolitan area?";
pub const FIG2_DISTRACTOR: (&str, u32) = ("History of the Miami Dolphins", 0);

fn title(s: &str) -> DocumentTitle {
    DocumentTitle::new(s).expect("non-empty title")
}

/// Builds a document from paragraphs of sentences; every paragraph links to
/// `links`.
pub fn make_document(t: &str, paragraphs: &[Vec<String>], links: &[&str]) -> Document {
    let tt = title(t);
    let links: BTreeSet<DocumentTitle> = links.iter().map(|l| title(l)).collect();
    let mut first = 0u32;
    let paragraphs = paragraphs
        .iter()
        .enumerate()
        .map(|(i, sents)| {
            let p = ParagraphRecord {
                title: tt.clone(),
                para_index: i as u32,
                first_sent_index: first,
                sentences: sents.clone(),
                hyperlinks: links.clone(),
            };
            first += sents.len() as u32;
            p
        })
        .collect();
    Document { title: tt, paragraphs }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub fn fig2_corpus() -> Corpus {
    Corpus::from_documents(vec![
        make_document(
            "Florida Panthers",
            &[strings(&[
                "The Florida Panthers are a professional ice hockey team based in the Miami metropolitan area.",
                "They compete in the National Hockey League as a member of the Atlantic Division.",
            ])],
            &[],
        ),
        make_document(
            "Wojtek Wolski",
            &[strings(&[
                "Wojciech Wolski (born February 24, 1986) is a Polish-Canadian professional ice hockey forward.",
                "In the NHL, he has played for the Colorado Avalanche, Phoenix Coyotes, New York Rangers, Florida Panthers, and the Washington Capitals.",
            ])],
            &["Florida Panthers"],
        ),
        make_document(
            "History of the Miami Dolphins",
            &[strings(&[
                "The Miami Dolphins are a professional American football franchise based in the Miami metropolitan area.",
                "The team was founded in 1966 by attorney-politician Joe Robbie and actor-comedian Danny Thomas.",
            ])],
            &[],
        ),
    ])
    .expect("fixture titles are unique")
}

pub fn fig2_query() -> Query {
    Query {
        id: "fig2".into(),
        task: Task::Hotpot,
        text: FIG2_QUESTION.into(),
        answer: Some("Florida Panthers".into()),
        label: None,
        evidence: vec![vec![
            SentenceId::new("Florida Panthers", 0).expect("valid"),
            SentenceId::new("Wojtek Wolski", 1).expect("valid"),
        ]],
    }
}

/// Paragraph scores 0.99 / 0.98 / 0.56 and sentence scores 0.98 / 0.95 /
/// 0.97 for the three highlighted items; everything else scores 0.01.
pub fn fig2_scores() -> TableScorer {
    let p = |t: &str, s| (CandidateId::Paragraph(ParagraphId::new(t, 0).expect("valid")), s);
    let s = |t: &str, i, sc| (CandidateId::Sentence(SentenceId::new(t, i).expect("valid")), sc);
    [
        p("Florida Panthers", 0.99),
        p("Wojtek Wolski", 0.98),
        p("History of the Miami Dolphins", 0.56),
        s("Florida Panthers", 0, 0.98),
        s("Wojtek Wolski", 1, 0.95),
        s("History of the Miami Dolphins", 0, 0.97),
    ]
    .into_iter()
    .fold(TableScorer::new(0.01), |t, (id, sc)| t.with(id, sc))
}

/// `k_p = 2, h_p = 0`; `k_s = 5, h_s = 0.5`.
pub fn fig2_config() -> PipelineConfig {
    let mut c = PipelineConfig::new(Task::Hotpot);
    c.paragraph_level.k = 2;
    c.paragraph_level.h = 0.0;
    c.sentence_level.k = 5;
    c.sentence_level.h = 0.5;
    c
}

/// Pronounceable pseudo-words, unique within one generator.
pub struct WordGen {
    rng: ChaCha8Rng,
    used: BTreeSet<String>,
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "p", "r", "s", "v", "z", "br", "kr", "st", "tr"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "", "n", "r", "l", "x"];

impl WordGen {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            used: BTreeSet::new(),
        }
    }

    pub fn word(&mut self) -> String {
        loop {
            let syllables = self.rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS.choose(&mut self.rng).expect("non-empty"));
                w.push_str(VOWELS.choose(&mut self.rng).expect("non-empty"));
            }
            w.push_str(CODAS.choose(&mut self.rng).expect("non-empty"));
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    pub fn capitalized(&mut self) -> String {
        capitalize(&self.word())
    }

    pub fn words(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word()).collect()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn sentence(words: &[String]) -> String {
    let mut s = words.join(" ");
    if let Some(f) = s.get(0..1) {
        let up = f.to_uppercase();
        s.replace_range(0..1, &up);
    }
    s.push('.');
    s
}

/// Corpus plus queries with gold annotations.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub corpus: Corpus,
    pub queries: Vec<Query>,
}

impl Fixture {
    /// Directed hyperlink edges `(from, to)`, sorted.
    pub fn links(&self) -> Vec<(DocumentTitle, DocumentTitle)> {
        let mut out: BTreeSet<(DocumentTitle, DocumentTitle)> = BTreeSet::new();
        for d in self.corpus.documents() {
            for p in &d.paragraphs {
                for l in &p.hyperlinks {
                    out.insert((d.title.clone(), l.clone()));
                }
            }
        }
        out.into_iter().collect()
    }

    /// Splits queries into the first `n` and the rest.
    pub fn split(&self, n: usize) -> (Vec<Query>, Vec<Query>) {
        let n = n.min(self.queries.len());
        (self.queries[..n].to_vec(), self.queries[n..].to_vec())
    }
}

struct WikiDoc {
    title: String,
    topic: Vec<String>,
    entities: Vec<String>,
    paragraphs: Vec<Vec<String>>,
    link: usize,
}

/// `n_docs` documents of two three-sentence paragraphs. Each document's
/// second paragraph opens with a sentence naming one linked document.
/// Hotpot queries are bridge questions over a document and its link; fever
/// queries are claims about one sentence, a third of them NEI.
pub fn wiki_fixture(n_docs: usize, n_queries: usize, task: Task, seed: u64) -> Fixture {
    assert!(n_docs >= 2, "need at least two documents");
    let mut g = WordGen::new(seed);
    let filler = g.words(30);
    let mut docs: Vec<WikiDoc> = (0..n_docs)
        .map(|_| WikiDoc {
            title: format!("{} {}", g.capitalized(), g.capitalized()),
            topic: g.words(12),
            entities: (0..6).map(|_| g.capitalized()).collect(),
            paragraphs: Vec::new(),
            link: 0,
        })
        .collect();
    for i in 0..n_docs {
        let mut j = g.rng().random_range(0..n_docs - 1);
        if j >= i {
            j += 1;
        }
        docs[i].link = j;
    }
    for i in 0..n_docs {
        let link_title = docs[docs[i].link].title.clone();
        let d = &docs[i];
        let mut paras = vec![Vec::new(), Vec::new()];
        for s in 0..6 {
            let mut w: Vec<String> = (0..4).map(|k| d.topic[(s * 2 + k) % 12].clone()).collect();
            for _ in 0..3 {
                w.push(filler.choose(g.rng()).expect("filler").clone());
            }
            w.shuffle(g.rng());
            w.insert(3, d.entities[s].clone());
            if s == 0 {
                w.insert(0, d.title.clone());
            }
            if s == 3 {
                w.insert(1, link_title.clone());
            }
            paras[s / 3].push(sentence(&w));
        }
        docs[i].paragraphs = paras;
    }
    let corpus = Corpus::from_documents(
        docs.iter()
            .map(|d| {
                let link = docs[d.link].title.as_str();
                make_document(&d.title, &d.paragraphs, &[link])
            })
            .collect(),
    )
    .expect("unique titles");

    let mut queries = Vec::with_capacity(n_queries);
    for qi in 0..n_queries {
        let a = g.rng().random_range(0..n_docs);
        let id = format!("{task}-{qi:04}");
        let q = match task {
            Task::Hotpot => {
                let b = docs[a].link;
                let (da, db) = (&docs[a], &docs[b]);
                // A's sentence 3 names B; B's sentence 0 holds the answer
                let text = format!(
                    "Which {} {} {} {} thing of {} is {} {}?",
                    db.topic[0], db.topic[1], db.topic[2], db.topic[3], da.title, da.topic[7], da.topic[8]
                );
                Query {
                    id,
                    task,
                    text,
                    answer: Some(db.entities[0].clone()),
                    label: None,
                    evidence: vec![vec![sid(&da.title, 3), sid(&db.title, 0)]],
                }
            }
            Task::Fever => {
                let d = &docs[a];
                let s = g.rng().random_range(0..6);
                let facts: Vec<&str> = (0..3).map(|k| d.topic[(s * 2 + k) % 12].as_str()).collect();
                match qi % 3 {
                    0 => Query {
                        id,
                        task,
                        text: format!("{} {} {} {}.", d.title, facts[0], facts[1], facts[2]),
                        answer: None,
                        label: Some(Label::Supports),
                        evidence: vec![vec![sid(&d.title, s as u32)]],
                    },
                    1 => Query {
                        id,
                        task,
                        text: format!("{} not {} {} {}.", d.title, facts[0], facts[1], facts[2]),
                        answer: None,
                        label: Some(Label::Refutes),
                        evidence: vec![
                            vec![sid(&d.title, s as u32)],
                            vec![sid(&d.title, ((s + 1) % 6) as u32), sid(&d.title, ((s + 2) % 6) as u32)],
                        ],
                    },
                    _ => Query {
                        id,
                        task,
                        text: format!("{} {} {}.", d.title, g.word(), g.word()),
                        answer: None,
                        label: Some(Label::NotEnoughInfo),
                        evidence: vec![],
                    },
                }
            }
        };
        queries.push(q);
    }
    Fixture { corpus, queries }
}

fn sid(t: &str, i: u32) -> SentenceId {
    SentenceId::new(t, i64::from(i)).expect("valid")
}

/// For each query: one gold document whose title appears in the question
/// and `look_alikes` documents whose first sentence carries the same words
/// as the gold sentence (title words included) under an unrelated title.
/// Every paragraph has two further unrelated sentences.
pub fn distractor_fixture(n_queries: usize, look_alikes: usize, seed: u64) -> Fixture {
    let mut g = WordGen::new(seed ^ 0xd157);
    let filler = g.words(20);
    let mut docs = Vec::new();
    let mut queries = Vec::new();
    for qi in 0..n_queries {
        let gold_title = format!("{} {}", g.capitalized(), g.capitalized());
        let content = g.words(4);
        let answer = g.capitalized();
        let mut key = vec![gold_title.clone()];
        key.extend(content.iter().cloned());
        let noise = |g: &mut WordGen| -> Vec<String> {
            (0..2)
                .map(|_| {
                    let mut w = g.words(4);
                    w.push(filler.choose(g.rng()).expect("filler").clone());
                    sentence(&w)
                })
                .collect()
        };
        let mut gold_sents = vec![sentence(&[key.clone(), vec![answer.clone()]].concat())];
        gold_sents.extend(noise(&mut g));
        docs.push(make_document(&gold_title, &[gold_sents], &[]));
        for _ in 0..look_alikes {
            let t = format!("{} {}", g.capitalized(), g.capitalized());
            let mut s = vec![sentence(&[key.clone(), vec![g.capitalized()]].concat())];
            s.extend(noise(&mut g));
            docs.push(make_document(&t, &[s], &[]));
        }
        queries.push(Query {
            id: format!("distractor-{qi:04}"),
            task: Task::Hotpot,
            text: format!(
                "Which {} {} {} {} belongs to {}?",
                content[0], content[1], content[2], content[3], gold_title
            ),
            answer: Some(answer),
            label: None,
            evidence: vec![vec![sid(&gold_title, 0)]],
        });
    }
    Fixture {
        corpus: Corpus::from_documents(docs).expect("unique titles"),
        queries,
    }
}
