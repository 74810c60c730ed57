//! Character-level similarity: indel-based Levenshtein score, bigram
//! Jaccard score and their weighted variants over [`WeightedString`].

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::murmur3::hash64;
use crate::textnorm::{graphemes, shingles_of, CleanText};

/// One comparable unit: a grapheme, a bare combining mark or a pseudo-token.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub key: u64,
    pub weight: f64,
    pub space: bool,
}

impl Unit {
    pub fn text(text: &str, weight: f64) -> Self {
        Self {
            key: hash64(text.as_bytes(), 0),
            weight,
            space: text == " ",
        }
    }

    /// Stands in for a whole phrase (e.g. a legal entity type).
    pub fn pseudo(tag: &str, weight: f64) -> Self {
        let mut bytes = vec![0u8];
        bytes.extend_from_slice(tag.as_bytes());
        Self {
            key: hash64(&bytes, 0),
            weight,
            space: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedString {
    units: Vec<Unit>,
    total_weight: f64,
}

impl WeightedString {
    pub fn new(units: Vec<Unit>) -> Self {
        let total_weight = units.iter().map(|u| u.weight).sum();
        Self {
            units,
            total_weight,
        }
    }

    /// Every grapheme of `text` at weight 1.
    pub fn uniform(text: &CleanText) -> Self {
        Self::new(
            graphemes(text.as_str())
                .into_iter()
                .map(|g| Unit::text(g, 1.0))
                .collect(),
        )
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Indel edit distance (insert/delete 1, substitution 2) over units.
pub fn indel_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return a.len() + b.len();
    }
    // LCS by rolling rows
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    a.len() + b.len() - 2 * prev[b.len()]
}

/// `1 - l(s1, s2) / (|s1| + |s2|)` with `l` the indel distance over graphemes.
pub fn lev_score(s1: &CleanText, s2: &CleanText) -> Result<f64> {
    lev_score_str(s1.as_str(), s2.as_str())
}

pub fn lev_score_str(s1: &str, s2: &str) -> Result<f64> {
    let a = graphemes(s1);
    let b = graphemes(s2);
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyString);
    }
    let d = indel_distance(&a, &b);
    Ok(1.0 - d as f64 / (a.len() + b.len()) as f64)
}

/// Weighted indel distance: deleting or inserting a unit costs its weight,
/// keeping two equal units costs the difference of their weights.
pub fn weighted_indel_cost(w1: &WeightedString, w2: &WeightedString) -> f64 {
    let (a, b) = (&w1.units, &w2.units);
    let mut prev: Vec<f64> = std::iter::once(0.0)
        .chain(b.iter().scan(0.0, |acc, u| {
            *acc += u.weight;
            Some(*acc)
        }))
        .collect();
    let mut cur = vec![0.0; b.len() + 1];
    for x in a {
        cur[0] = prev[0] + x.weight;
        for (j, y) in b.iter().enumerate() {
            let mut best = (prev[j + 1] + x.weight).min(cur[j] + y.weight);
            if x.key == y.key {
                best = best.min(prev[j] + (x.weight - y.weight).abs());
            }
            cur[j + 1] = best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn weighted_lev_score(w1: &WeightedString, w2: &WeightedString) -> Result<f64> {
    let total = w1.total_weight + w2.total_weight;
    if w1.is_empty() || w2.is_empty() || total <= 0.0 {
        return Err(Error::EmptyString);
    }
    let cost = weighted_indel_cost(w1, w2);
    Ok((1.0 - cost / total).clamp(0.0, 1.0))
}

/// Bigram Jaccard similarity over space-stripped graphemes.
pub fn jaccard_score(s1: &CleanText, s2: &CleanText) -> Result<f64> {
    jaccard_score_str(s1.as_str(), s2.as_str())
}

pub fn jaccard_score_str(s1: &str, s2: &str) -> Result<f64> {
    let a = shingles_of(s1);
    let b = shingles_of(s2);
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyString);
    }
    let inter = a.intersection(&b).count();
    let union = a.len() + b.len() - inter;
    Ok(inter as f64 / union as f64)
}

/// Weighted bigram set: each bigram weighs the mean of its two units;
/// repeated bigrams keep their largest weight.
fn weighted_bigrams(w: &WeightedString) -> HashMap<u64, f64> {
    let units: Vec<&Unit> = w.units.iter().filter(|u| !u.space).collect();
    let mut out = HashMap::with_capacity(units.len());
    let mut put = |key: u64, weight: f64| {
        let e = out.entry(key).or_insert(weight);
        if weight > *e {
            *e = weight;
        }
    };
    match units.len() {
        0 => {}
        1 => put(units[0].key, units[0].weight),
        _ => {
            for pair in units.windows(2) {
                let key = pair[0].key.rotate_left(17) ^ pair[1].key.wrapping_mul(0x9e37_79b9_7f4a_7c15);
                put(key, (pair[0].weight + pair[1].weight) / 2.0);
            }
        }
    }
    out
}

/// Σ weight(A ∩ B) / Σ weight(A ∪ B); shared bigrams count with the larger weight.
pub fn weighted_jaccard_score(w1: &WeightedString, w2: &WeightedString) -> Result<f64> {
    let a = weighted_bigrams(w1);
    let b = weighted_bigrams(w2);
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyString);
    }
    let mut inter = 0.0;
    let mut union = 0.0;
    for (k, wa) in &a {
        match b.get(k) {
            Some(wb) => {
                let w = wa.max(*wb);
                inter += w;
                union += w;
            }
            None => union += wa,
        }
    }
    union += b
        .iter()
        .filter(|(k, _)| !a.contains_key(k))
        .map(|(_, w)| w)
        .sum::<f64>();
    if union <= 0.0 {
        return Ok(0.0);
    }
    Ok((inter / union).clamp(0.0, 1.0))
}
