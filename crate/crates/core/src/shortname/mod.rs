//! Short-name extraction: training corpora, features, a two-label
//! linear-chain CRF and token-level evaluation.

mod corpus;
mod crf;
mod features;

pub use corpus::{
    corpus_from_family, corpus_from_label_homepage, read_corpus, registrable_domain_word,
    split_corpus, write_corpus, LabeledName,
};
pub use crf::{ShortNameModel, TrainParams};
pub use features::{extract_features, tokenize, FrequencyTable, Token, TokenFeatures, WordFeatures};

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Label {
    #[serde(rename = "OUT")]
    Out = 0,
    #[serde(rename = "IN")]
    In = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Label::Out
        } else {
            Label::In
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Out => "OUT",
            Label::In => "IN",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "IN" => Ok(Label::In),
            "OUT" => Ok(Label::Out),
            other => Err(Error::Corrupt {
                what: "short-name corpus",
                reason: format!("unknown label {other:?}"),
            }),
        }
    }
}

/// Predicted short name of a raw company name: the IN tokens in order, or
/// the rarest token when the decoder keeps nothing.
pub fn predict(name: &str, model: &ShortNameModel, freq: &FrequencyTable) -> String {
    let tokens = tokenize(name);
    if tokens.is_empty() {
        return String::new();
    }
    let feats = extract_features(&tokens, freq);
    let labels = model.decode(&feats);
    let kept: Vec<&str> = tokens
        .iter()
        .zip(&labels)
        .filter(|(_, l)| **l == Label::In)
        .map(|(t, _)| t.clean.as_str())
        .collect();
    if !kept.is_empty() {
        return kept.join(" ");
    }
    let rarest = feats
        .iter()
        .position(|f| f.own.rank == 1)
        .unwrap_or(0);
    tokens[rarest].clean.clone()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TaggingMetrics {
    #[serde(rename = "IN")]
    pub inside: ClassMetrics,
    #[serde(rename = "OUT")]
    pub outside: ClassMetrics,
    pub micro: Averages,
    pub macro_avg: Averages,
    /// `confusion[gold][predicted]`, indexed by [`Label::index`].
    pub confusion: [[u64; 2]; 2],
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl TaggingMetrics {
    pub fn from_confusion(confusion: [[u64; 2]; 2]) -> Self {
        let class = |l: usize| {
            let tp = confusion[l][l];
            let predicted = confusion[0][l] + confusion[1][l];
            let gold = confusion[l][0] + confusion[l][1];
            let (p, r) = (ratio(tp, predicted), ratio(tp, gold));
            ClassMetrics {
                precision: p,
                recall: r,
                f1: f1(p, r),
                support: gold,
            }
        };
        let (inside, outside) = (class(1), class(0));
        let tp = confusion[0][0] + confusion[1][1];
        let total: u64 = confusion.iter().flatten().sum();
        // every token gets exactly one prediction, so pooled P and R coincide
        let micro_p = ratio(tp, total);
        let micro = Averages {
            precision: micro_p,
            recall: micro_p,
            f1: f1(micro_p, micro_p),
        };
        let macro_avg = Averages {
            precision: (inside.precision + outside.precision) / 2.0,
            recall: (inside.recall + outside.recall) / 2.0,
            f1: (inside.f1 + outside.f1) / 2.0,
        };
        Self {
            inside,
            outside,
            micro,
            macro_avg,
            confusion,
        }
    }

    /// Token-level tally of gold against predicted label sequences.
    pub fn tally<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [Label], &'a [Label])>,
    {
        let mut confusion = [[0u64; 2]; 2];
        let mut any = false;
        for (gold, pred) in pairs {
            if gold.len() != pred.len() {
                return Err(Error::InvalidRecord(format!(
                    "label sequences differ in length ({} vs {})",
                    gold.len(),
                    pred.len()
                )));
            }
            for (g, p) in gold.iter().zip(pred) {
                confusion[g.index()][p.index()] += 1;
                any = true;
            }
        }
        if !any {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self::from_confusion(confusion))
    }
}

/// Evaluates the model's decoded labels against the corpus labels.
pub fn evaluate(
    model: &ShortNameModel,
    corpus: &[LabeledName],
    freq: &FrequencyTable,
) -> Result<TaggingMetrics> {
    let predicted: Vec<Vec<Label>> = corpus
        .iter()
        .map(|ex| model.decode(&extract_features(&ex.token_list(), freq)))
        .collect();
    TaggingMetrics::tally(
        corpus
            .iter()
            .zip(&predicted)
            .map(|(ex, p)| (ex.labels.as_slice(), p.as_slice())),
    )
}

/// Fraction of names whose rarest token is labeled IN.
pub fn min_freq_statistic(corpus: &[LabeledName], freq: &FrequencyTable) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let hits = corpus
        .iter()
        .filter(|ex| {
            let feats = extract_features(&ex.token_list(), freq);
            feats
                .iter()
                .zip(&ex.labels)
                .any(|(f, l)| f.own.rank == 1 && *l == Label::In)
        })
        .count();
    Ok(hits as f64 / corpus.len() as f64)
}
