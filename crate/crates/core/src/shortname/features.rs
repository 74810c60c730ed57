use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::textnorm::clean_light;

/// Highest log10 bucket; counts of 10^6 and above share it.
const MAX_BUCKET: u8 = 6;

/// A word of a company name in light-cleaned form plus its surface form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub clean: String,
    pub raw: String,
}

impl Token {
    pub fn capitalized(&self) -> bool {
        self.raw.chars().next().is_some_and(char::is_uppercase)
    }

    pub fn all_caps(&self) -> bool {
        let letters: Vec<char> = self.raw.chars().filter(|c| c.is_alphabetic()).collect();
        letters.len() > 1 && letters.iter().all(|c| c.is_uppercase())
    }
}

/// Splits a raw name into tokens aligned with [`clean_light`], keeping the
/// original capitalization alongside.
pub fn tokenize(raw: &str) -> Vec<Token> {
    let clean = clean_light(raw);
    let clean_tokens = clean.tokens();
    let mut raws: Vec<String> = Vec::new();
    let mut current = String::new();
    for c in raw.nfkd() {
        let lower: String = c.to_lowercase().collect::<String>().nfd().collect();
        let keep = lower
            .chars()
            .any(|l| (l.is_alphanumeric() && !l.is_uppercase()) || is_combining_mark(l));
        if keep {
            current.push(c);
        } else if !current.is_empty() {
            raws.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        raws.push(current);
    }
    if raws.len() != clean_tokens.len() {
        // rare canonical-ordering differences: fall back to the clean form
        raws = clean_tokens.iter().map(|t| t.to_string()).collect();
    }
    clean_tokens
        .iter()
        .zip(raws)
        .map(|(c, r)| Token {
            clean: c.to_string(),
            raw: r.nfc().collect(),
        })
        .collect()
}

/// Absolute word counts pooled over every available text field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts<'a, I: IntoIterator<Item = (&'a str, u64)>>(counts: I) -> Self {
        let mut t = Self::new();
        for (w, c) in counts {
            t.add_count(w, c);
        }
        t
    }

    pub fn add_count(&mut self, word: &str, count: u64) {
        if count == 0 {
            return;
        }
        *self.counts.entry(word.to_string()).or_default() += count;
        self.total += count;
    }

    /// Counts every light-cleaned token of `text`.
    pub fn add_text(&mut self, text: &str) {
        for t in clean_light(text).tokens() {
            self.add_count(t, 1);
        }
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Reads `word<TAB>count` lines.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut t = Self::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<frequency table>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::MalformedRow {
                row: n as u64 + 1,
                reason: "expected word<TAB>count".into(),
            };
            let (w, c) = line.rsplit_once('\t').ok_or_else(bad)?;
            let c: u64 = c.trim().parse().map_err(|_| bad())?;
            t.add_count(w, c);
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(std::io::BufReader::new(f))
    }

    /// Writes entries sorted by word, so equal tables give equal files.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut entries: Vec<(&String, &u64)> = self.counts.iter().collect();
        entries.sort();
        for (word, count) in entries {
            writeln!(w, "{word}\t{count}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordFeatures {
    pub word: String,
    pub capitalized: bool,
    pub all_caps: bool,
    pub suffix2: String,
    pub suffix3: String,
    /// 1 = rarest word of the name; ties go to the earlier position.
    pub rank: usize,
    /// Count over the largest count within the name.
    pub norm_freq: f64,
    /// `floor(log10(count))`, capped.
    pub freq_bucket: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenFeatures {
    pub own: WordFeatures,
    pub left: Option<WordFeatures>,
    pub right: Option<WordFeatures>,
    pub len: usize,
}

impl TokenFeatures {
    pub fn is_first(&self) -> bool {
        self.left.is_none()
    }

    pub fn is_last(&self) -> bool {
        self.right.is_none()
    }

    /// Sparse feature vector as `(name, value)` pairs.
    pub fn feature_strings(&self) -> Vec<(String, f64)> {
        let mut out = vec![("bias".to_string(), 1.0)];
        push_word(&mut out, "", &self.own, self.len);
        match &self.left {
            Some(l) => push_word(&mut out, "l:", l, self.len),
            None => out.push(("BOS".into(), 1.0)),
        }
        match &self.right {
            Some(r) => push_word(&mut out, "r:", r, self.len),
            None => out.push(("EOS".into(), 1.0)),
        }
        if let (Some(l), Some(r)) = (&self.left, &self.right) {
            out.push((format!("rank_lr={}|{}", l.rank.min(4), r.rank.min(4)), 1.0));
        }
        out
    }
}

fn push_word(out: &mut Vec<(String, f64)>, p: &str, f: &WordFeatures, len: usize) {
    let rank = f.rank.min(4);
    out.push((format!("{p}w={}", f.word), 1.0));
    out.push((format!("{p}s2={}", f.suffix2), 1.0));
    out.push((format!("{p}s3={}", f.suffix3), 1.0));
    out.push((format!("{p}rank={rank}"), 1.0));
    out.push((format!("{p}rank={rank}|len={}", len.min(5)), 1.0));
    out.push((format!("{p}last_rank={}", f.rank == len), 1.0));
    out.push((format!("{p}bucket={}", f.freq_bucket), 1.0));
    out.push((format!("{p}nf={}", (f.norm_freq * 10.0).floor() as u32), 1.0));
    out.push((format!("{p}nf"), f.norm_freq));
    if f.capitalized {
        out.push((format!("{p}cap"), 1.0));
    }
    if f.all_caps {
        out.push((format!("{p}allcaps"), 1.0));
    }
    if f.word.chars().all(|c| c.is_ascii_digit()) {
        out.push((format!("{p}digits"), 1.0));
    }
}

fn suffix(word: &str, n: usize) -> String {
    let chars: Vec<char> = word.chars().collect();
    chars[chars.len().saturating_sub(n)..].iter().collect()
}

/// Per-token features. Unknown words are smoothed to a count of one.
pub fn extract_features(tokens: &[Token], freq: &FrequencyTable) -> Vec<TokenFeatures> {
    let counts: Vec<u64> = tokens.iter().map(|t| freq.count(&t.clean).max(1)).collect();
    let max = counts.iter().copied().max().unwrap_or(1) as f64;
    let mut order: Vec<usize> = (0..tokens.len()).collect();
    order.sort_by_key(|&i| (counts[i], i));
    let mut rank = vec![0; tokens.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    let words: Vec<WordFeatures> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| WordFeatures {
            word: t.clean.clone(),
            capitalized: t.capitalized(),
            all_caps: t.all_caps(),
            suffix2: suffix(&t.clean, 2),
            suffix3: suffix(&t.clean, 3),
            rank: rank[i],
            norm_freq: counts[i] as f64 / max,
            freq_bucket: ((counts[i] as f64).log10().floor() as u8).min(MAX_BUCKET),
        })
        .collect();
    (0..words.len())
        .map(|i| TokenFeatures {
            own: words[i].clone(),
            left: i.checked_sub(1).map(|j| words[j].clone()),
            right: words.get(i + 1).cloned(),
            len: words.len(),
        })
        .collect()
}
