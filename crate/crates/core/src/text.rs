//! Tokenization and title canonicalization shared by every stage.

use unicode_normalization::UnicodeNormalization;

/// Lowercased maximal runs of alphanumeric characters.
///
/// Word boundaries follow `char::is_alphanumeric`, so punctuation and
/// whitespace both separate tokens and never appear inside one.
pub fn tokenize(text: &str) -> Vec<String> {
    spans(text).map(|(s, e)| text[s..e].to_lowercase()).collect()
}

/// Byte ranges of the tokens produced by [`tokenize`], in order.
pub fn spans(text: &str) -> impl Iterator<Item = (usize, usize)> + '_ {
    let mut chars = text.char_indices().peekable();
    std::iter::from_fn(move || {
        while let Some(&(_, c)) = chars.peek() {
            if c.is_alphanumeric() {
                break;
            }
            chars.next();
        }
        let (start, _) = *chars.peek()?;
        let mut end = start;
        while let Some(&(i, c)) = chars.peek() {
            if !c.is_alphanumeric() {
                break;
            }
            end = i + c.len_utf8();
            chars.next();
        }
        Some((start, end))
    })
}

/// Canonical form of a document title: NFC, underscores folded to spaces,
/// surrounding whitespace trimmed. Parenthetical disambiguators are kept.
pub fn canonical_title(raw: &str) -> String {
    let folded: String = raw.nfc().map(|c| if c == '_' { ' ' } else { c }).collect();
    folded.trim().to_string()
}

pub(crate) const NEGATION_WORDS: &[&str] = &[
    "not", "no", "never", "none", "nobody", "nothing", "neither", "nor", "nowhere", "cannot", "t",
    "without",
];

/// Number of negation tokens. Contractions such as "isn't" tokenize to
/// `isn` + `t`, so the trailing `t` counts as a negation.
pub fn negation_count(tokens: &[String]) -> usize {
    tokens
        .iter()
        .filter(|t| NEGATION_WORDS.contains(&t.as_str()))
        .count()
}
