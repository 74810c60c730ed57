//! Text cleaning shared by preprocessing and the runtime pipeline.
//!
//! Two cleaning levels exist. [`clean_light`] is applied to every attribute
//! that is scored: it lowercases, turns punctuation into spaces and keeps
//! the text in decomposed Unicode form so that diacritics survive as
//! combining marks. [`clean_blocking`] goes further and is only ever used
//! to derive blocking keys: marks and legal entity types are dropped and
//! acronyms and numbers are merged.

use std::collections::{BTreeSet, HashSet};
use std::ops::Range;
use std::path::Path;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

const BUNDLED_LEXICON: &str = include_str!("../../../data/legal_entities.txt");

/// Light-cleaned text in decomposed normal form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct CleanText {
    text: String,
    combining_marks: Vec<usize>,
}

impl CleanText {
    fn from_clean(text: String) -> Self {
        let combining_marks = text
            .chars()
            .enumerate()
            .filter(|(_, c)| is_combining_mark(*c))
            .map(|(i, _)| i)
            .collect();
        Self {
            text,
            combining_marks,
        }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn into_string(self) -> String {
        self.text
    }

    /// Char positions of combining marks.
    pub fn combining_marks(&self) -> &[usize] {
        &self.combining_marks
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    pub fn tokens(&self) -> Vec<&str> {
        self.text.split(' ').filter(|t| !t.is_empty()).collect()
    }

    /// Base characters grouped with their trailing combining marks.
    pub fn graphemes(&self) -> Vec<&str> {
        graphemes(&self.text)
    }
}

impl std::fmt::Display for CleanText {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.text)
    }
}

/// Splits `s` into units of one base character followed by any combining marks.
pub fn graphemes(s: &str) -> Vec<&str> {
    let mut out = Vec::with_capacity(s.len());
    let mut start = None;
    for (i, c) in s.char_indices() {
        if is_combining_mark(c) && start.is_some() {
            continue;
        }
        if let Some(st) = start {
            out.push(&s[st..i]);
        }
        start = Some(i);
    }
    if let Some(st) = start {
        out.push(&s[st..]);
    }
    out
}

/// Decompose (compatibility form), lowercase, map punctuation to spaces, collapse and trim whitespace.
pub fn clean_light(raw: &str) -> CleanText {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.nfkd().flat_map(char::to_lowercase).nfd() {
        if (c.is_alphanumeric() && !c.is_uppercase()) || is_combining_mark(c) {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    CleanText::from_clean(out)
}

/// Removes every combining mark.
pub fn strip_marks(s: &str) -> String {
    s.chars().filter(|c| !is_combining_mark(*c)).collect()
}

/// Lowercase legal-entity-type lexicon with longest-match lookup.
#[derive(Debug, Clone, Default)]
pub struct LegalEntityLexicon {
    entries: HashSet<String>,
    max_tokens: usize,
}

impl LegalEntityLexicon {
    /// Lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// One entry per line; `#` starts a comment. Entries are cleaned on load.
    pub fn parse(text: &str) -> Self {
        let mut lex = Self::default();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("");
            lex.insert(line);
        }
        lex
    }

    pub fn insert(&mut self, entry: &str) {
        let cleaned = strip_marks(clean_light(entry).as_str());
        if cleaned.is_empty() {
            return;
        }
        self.max_tokens = self.max_tokens.max(cleaned.split(' ').count());
        self.entries.insert(cleaned);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.entries.contains(phrase)
    }

    /// Non-overlapping spans of lexicon matches, leftmost first, longest match wins.
    pub fn detect_spans<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Range<usize>> {
        let stripped: Vec<String> = tokens.iter().map(|t| strip_marks(t.as_ref())).collect();
        let mut spans = Vec::new();
        let mut i = 0;
        while i < stripped.len() {
            let longest = (1..=self.max_tokens.min(stripped.len() - i))
                .rev()
                .find(|&len| self.entries.contains(&stripped[i..i + len].join(" ")));
            match longest {
                Some(len) => {
                    spans.push(i..i + len);
                    i += len;
                }
                None => i += 1,
            }
        }
        spans
    }

    /// True when `token` lies inside some detected span of `tokens`.
    pub fn token_mask<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<bool> {
        let mut mask = vec![false; tokens.len()];
        for span in self.detect_spans(tokens) {
            mask[span].iter_mut().for_each(|m| *m = true);
        }
        mask
    }
}

/// See [`LegalEntityLexicon::detect_spans`].
pub fn detect_legal_entity_spans<S: AsRef<str>>(
    tokens: &[S],
    lex: &LegalEntityLexicon,
) -> Vec<Range<usize>> {
    lex.detect_spans(tokens)
}

/// Cleaning used only for blocking keys.
pub fn clean_blocking(raw: &str, lex: &LegalEntityLexicon) -> CleanText {
    let light = clean_light(raw);
    let stripped = strip_marks(light.as_str());
    let tokens: Vec<&str> = stripped.split(' ').filter(|t| !t.is_empty()).collect();
    let legal = lex.token_mask(&tokens);

    let mut merged: Vec<String> = Vec::with_capacity(tokens.len());
    // whether the last merged token is a run of single characters
    let mut single_run = false;
    for (tok, is_legal) in tokens.iter().zip(legal) {
        if is_legal {
            continue;
        }
        let single = tok.chars().count() == 1;
        let digits = is_digits(tok);
        let joins = match merged.last() {
            Some(last) => (single_run && single) || (digits && is_digits(last)),
            None => false,
        };
        if joins {
            merged.last_mut().expect("last token").push_str(tok);
            single_run = single_run && single;
        } else {
            merged.push((*tok).to_string());
            single_run = single;
        }
    }
    // merging can produce a lexicon entry ("s a" -> "sa")
    merged.retain(|t| !lex.contains(t));
    CleanText::from_clean(merged.join(" "))
}

fn is_digits(tok: &str) -> bool {
    !tok.is_empty() && tok.chars().all(|c| c.is_ascii_digit())
}

/// Set of grapheme bigrams over the space-stripped text.
pub fn shingle_bigrams(ct: &CleanText) -> BTreeSet<String> {
    shingles_of(ct.as_str())
}

pub fn shingles_of(text: &str) -> BTreeSet<String> {
    let units: Vec<&str> = graphemes(text).into_iter().filter(|g| *g != " ").collect();
    match units.len() {
        0 => BTreeSet::new(),
        1 => std::iter::once(units[0].to_string()).collect(),
        _ => units.windows(2).map(|w| format!("{}{}", w[0], w[1])).collect(),
    }
}
