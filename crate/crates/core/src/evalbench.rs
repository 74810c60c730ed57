//! Ground-truth evaluation, the trivial baseline, blocking tradeoff tables
//! and the Monte Carlo S-curve check.
//!
//! Decision rule: an entry's answer is the rank-1 result whose score is at
//! least the threshold, or nothing.
//!
//! | category  | answer in own ids | other answer | no answer |
//! |-----------|-------------------|--------------|-----------|
//! | MATCHED   | TP                | FP and miss  | miss (FN) |
//! | UNMATCHED | -                 | FP           | TN        |
//! | UNDECIDED | ignored           | FP           | ignored   |
//!
//! Recall is TP over MATCHED entries; precision is TP over TP + FP.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocking::{band_keys, minhash_signature, BandConfig, HashFamily, RecordId};
use crate::config::LinkerConfig;
use crate::error::{Error, Result};
use crate::pipeline::{build_index, LinkOptions, Linker, Resources};
use crate::scoring::Strategy;
use crate::store::{Address, EntityStore, QueryRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "category", content = "ids", rename_all = "UPPERCASE")]
pub enum Category {
    Matched(Vec<RecordId>),
    Unmatched,
    /// Ids of the entry's own record(s), possibly empty.
    Undecided(Vec<RecordId>),
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Matched(_) => "MATCHED",
            Category::Unmatched => "UNMATCHED",
            Category::Undecided(_) => "UNDECIDED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthEntry {
    pub query: QueryRecord,
    pub category: Category,
    /// Free-form provenance of a generated entry, e.g. the perturbation.
    pub note: String,
}

/// One row of the ground-truth file (tab-separated, header required).
/// Repeated values are separated by `|`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct TruthRow {
    name: String,
    names_alt: String,
    street: String,
    city: String,
    postal: String,
    country: String,
    sic: String,
    category: String,
    ids: String,
    note: String,
}

fn split_multi(s: &str) -> Vec<String> {
    s.split('|')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn opt(s: &str) -> Option<String> {
    Some(s.trim()).filter(|s| !s.is_empty()).map(str::to_string)
}

impl GroundTruthEntry {
    fn from_row(row: TruthRow, line: u64) -> Result<Self> {
        let bad = |reason: String| Error::InvalidGroundTruth(format!("row {line}: {reason}"));
        let ids = split_multi(&row.ids)
            .iter()
            .map(|s| s.parse::<RecordId>().map_err(|_| bad(format!("bad id {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let category = match row.category.trim() {
            "MATCHED" if ids.is_empty() => return Err(bad("MATCHED without ids".into())),
            "MATCHED" => Category::Matched(ids),
            "UNMATCHED" => Category::Unmatched,
            "UNDECIDED" => Category::Undecided(ids),
            other => return Err(bad(format!("unknown category {other:?}"))),
        };
        if row.name.trim().is_empty() {
            return Err(bad("empty name".into()));
        }
        let address = Address {
            street: opt(&row.street),
            city: opt(&row.city),
            postal: opt(&row.postal),
            country: opt(&row.country),
        };
        let query = QueryRecord {
            name: row.name,
            names_alt: split_multi(&row.names_alt),
            addresses: if address.is_empty() { Vec::new() } else { vec![address] },
            sics: split_multi(&row.sic),
        };
        Ok(Self {
            query,
            category,
            note: row.note,
        })
    }

    fn to_row(&self) -> TruthRow {
        let a = self.query.addresses.first().cloned().unwrap_or_default();
        let ids = match &self.category {
            Category::Matched(ids) | Category::Undecided(ids) => ids,
            Category::Unmatched => &Vec::new(),
        };
        TruthRow {
            name: self.query.name.clone(),
            names_alt: self.query.names_alt.join("|"),
            street: a.street.unwrap_or_default(),
            city: a.city.unwrap_or_default(),
            postal: a.postal.unwrap_or_default(),
            country: a.country.unwrap_or_default(),
            sic: self.query.sics.join("|"),
            category: self.category.as_str().to_string(),
            ids: ids.iter().map(u32::to_string).collect::<Vec<_>>().join("|"),
            note: self.note.clone(),
        }
    }
}

pub fn read_truth<R: Read>(reader: R) -> Result<Vec<GroundTruthEntry>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<TruthRow>().enumerate() {
        let row = row.map_err(|e| Error::InvalidGroundTruth(e.to_string()))?;
        out.push(GroundTruthEntry::from_row(row, i as u64 + 2)?);
    }
    Ok(out)
}

pub fn write_truth<W: Write>(entries: &[GroundTruthEntry], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(writer);
    for e in entries {
        w.serialize(e.to_row())?;
    }
    w.flush().map_err(|e| Error::io("<truth>", e))?;
    Ok(())
}

/// Checks that every referenced id exists in a store of `count` records.
pub fn validate_truth(entries: &[GroundTruthEntry], count: usize) -> Result<()> {
    for (i, e) in entries.iter().enumerate() {
        if let Category::Matched(ids) | Category::Undecided(ids) = &e.category {
            if let Some(bad) = ids.iter().find(|id| **id as usize >= count) {
                return Err(Error::InvalidGroundTruth(format!(
                    "entry {i}: id {bad} not in the reference store ({count} records)"
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub label: String,
    pub entries: u64,
    pub matched: u64,
    pub unmatched: u64,
    pub undecided: u64,
    pub true_positives: u64,
    /// All false positives, including the undecided ones.
    pub false_positives: u64,
    /// MATCHED entries whose record was not returned at rank 1.
    pub false_negatives: u64,
    pub true_negatives: u64,
    pub undecided_false_positives: u64,
    pub recall: f64,
    pub precision: f64,
    pub mean_comparisons: f64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "label,entries,matched,unmatched,undecided,tp,fp,fn,tn,undecided_fp,recall,precision,mean_comparisons";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:.4},{:.4},{:.2}",
            self.label,
            self.entries,
            self.matched,
            self.unmatched,
            self.undecided,
            self.true_positives,
            self.false_positives,
            self.false_negatives,
            self.true_negatives,
            self.undecided_false_positives,
            self.recall,
            self.precision,
            self.mean_comparisons
        )
    }
}

/// Tallies rank-1 answers (one per entry) into a report.
pub fn tally(label: &str, entries: &[GroundTruthEntry], answers: &[Option<RecordId>], comparisons: &[usize]) -> EvalReport {
    let mut r = EvalReport {
        label: label.to_string(),
        entries: entries.len() as u64,
        ..EvalReport::default()
    };
    for (e, answer) in entries.iter().zip(answers) {
        match (&e.category, answer) {
            (Category::Matched(ids), Some(id)) => {
                r.matched += 1;
                if ids.contains(id) {
                    r.true_positives += 1;
                } else {
                    r.false_positives += 1;
                    r.false_negatives += 1;
                }
            }
            (Category::Matched(_), None) => {
                r.matched += 1;
                r.false_negatives += 1;
            }
            (Category::Unmatched, a) => {
                r.unmatched += 1;
                if a.is_some() {
                    r.false_positives += 1;
                } else {
                    r.true_negatives += 1;
                }
            }
            (Category::Undecided(ids), a) => {
                r.undecided += 1;
                if a.is_some_and(|id| !ids.contains(&id)) {
                    r.false_positives += 1;
                    r.undecided_false_positives += 1;
                }
            }
        }
    }
    let ratio = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    r.recall = ratio(r.true_positives, r.matched);
    r.precision = ratio(r.true_positives, r.true_positives + r.false_positives);
    r.mean_comparisons = if comparisons.is_empty() {
        0.0
    } else {
        comparisons.iter().sum::<usize>() as f64 / comparisons.len() as f64
    };
    r
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvalOptions {
    pub strategy: Option<Strategy>,
    pub threshold: Option<f64>,
    /// Drop addresses and industry codes from the queries.
    pub name_only: bool,
}

/// Runs every entry through the linker and tallies rank-1 answers.
pub fn evaluate(entries: &[GroundTruthEntry], linker: &Linker, options: EvalOptions) -> Result<EvalReport> {
    validate_truth(entries, linker.store().len())?;
    let queries: Vec<QueryRecord> = entries
        .iter()
        .map(|e| {
            let mut q = e.query.clone();
            if options.name_only {
                q.addresses.clear();
                q.sics.clear();
            }
            q
        })
        .collect();
    let link_options = LinkOptions {
        top_n: Some(1),
        threshold: options.threshold,
        strategy: options.strategy,
    };
    let outcomes = linker.link_batch(&queries, &link_options);
    let mut answers = Vec::with_capacity(entries.len());
    let mut comparisons = Vec::with_capacity(entries.len());
    for o in outcomes {
        // a query that cannot be linked (e.g. empty name) has no answer
        let o = o.unwrap_or_default();
        answers.push(o.results.first().map(|m| m.record_id));
        comparisons.push(o.comparisons);
    }
    let strategy = options.strategy.unwrap_or(linker.config().scoring.strategy);
    Ok(tally(strategy.as_str(), entries, &answers, &comparisons))
}

/// Case-insensitive exact name lookup; the lowest id wins among duplicates.
pub fn trivial_baseline(entries: &[GroundTruthEntry], store: &EntityStore) -> EvalReport {
    let mut by_name: HashMap<String, RecordId> = HashMap::new();
    for r in store.iter() {
        by_name.entry(r.name.trim().to_lowercase()).or_insert(r.id);
    }
    let answers: Vec<Option<RecordId>> = entries
        .iter()
        .map(|e| by_name.get(&e.query.name.trim().to_lowercase()).copied())
        .collect();
    tally("trivial", entries, &answers, &[])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub config: String,
    pub total_hashes: usize,
    pub recall: f64,
    pub index_bytes: u64,
    pub blocking_keys: u64,
    pub mean_comparisons: f64,
}

/// One row per band configuration: name-only recall, serialized index
/// size and mean candidate-set size.
pub fn blocking_tradeoff(
    store: Arc<EntityStore>,
    configs: &[BandConfig],
    truth: &[GroundTruthEntry],
    base: &LinkerConfig,
    resources: Arc<Resources>,
) -> Result<Vec<TradeoffRow>> {
    configs
        .iter()
        .map(|&cfg| {
            let index = build_index(store.records(), cfg, base.seed, &resources.lexicon)?;
            let index_bytes = index.to_bytes().len() as u64;
            let blocking_keys = index.key_count() as u64;
            let mut config = base.clone();
            config.blocking = cfg;
            let linker = Linker::from_parts(config, store.clone(), Arc::new(index), resources.clone())?;
            let report = evaluate(
                truth,
                &linker,
                EvalOptions {
                    name_only: true,
                    ..EvalOptions::default()
                },
            )?;
            Ok(TradeoffRow {
                config: cfg.to_string(),
                total_hashes: cfg.total_hashes(),
                recall: report.recall,
                index_bytes,
                blocking_keys,
                mean_comparisons: report.mean_comparisons,
            })
        })
        .collect()
}

/// Smallest union size in `[100, 10_000]` at which `s` is an exact ratio.
fn union_size_for(s: f64) -> Option<(usize, usize)> {
    (100..=10_000).find_map(|u| {
        let k = (s * u as f64).round();
        ((k / u as f64 - s).abs() < 1e-12).then_some((k as usize, u))
    })
}

/// Fraction of `trials` random set pairs with Jaccard exactly `s` that
/// share at least one band key.
pub fn montecarlo_scurve(cfg: BandConfig, s: f64, trials: usize, seed: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::SimilarityOutOfRange(s));
    }
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let (shared, union) = union_size_for(s).ok_or(Error::InfeasibleSimilarity(s))?;
    let family = HashFamily::for_config(seed, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5c0e);
    let only_a = (union - shared) / 2;
    let mut hits = 0usize;
    for _ in 0..trials {
        // fresh random elements; collisions among 64-bit values are negligible
        let elems: Vec<[u8; 8]> = (0..union).map(|_| rng.gen::<u64>().to_le_bytes()).collect();
        let a = elems[..shared + only_a].iter();
        let b = elems[..shared].iter().chain(&elems[shared + only_a..]);
        let ka = band_keys(&minhash_signature(a, &family)?, cfg)?;
        let kb = band_keys(&minhash_signature(b, &family)?, cfg)?;
        if ka.iter().zip(&kb).any(|(x, y)| x == y) {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocking::scurve_probability;

    fn entry(cat: Category) -> GroundTruthEntry {
        GroundTruthEntry {
            query: QueryRecord::named("x"),
            category: cat,
            note: String::new(),
        }
    }

    #[test]
    fn all_matched_correct() {
        let e: Vec<_> = (0..4).map(|i| entry(Category::Matched(vec![i]))).collect();
        let r = tally("t", &e, &[Some(0), Some(1), Some(2), Some(3)], &[1, 1, 1, 1]);
        assert_eq!((r.recall, r.precision), (1.0, 1.0));
    }

    #[test]
    fn unmatched_with_answer_costs_precision_only() {
        let mut e: Vec<_> = (0..2).map(|i| entry(Category::Matched(vec![i]))).collect();
        let base = tally("t", &e, &[Some(0), None], &[]);
        e.push(entry(Category::Unmatched));
        let with = tally("t", &e, &[Some(0), None, Some(7)], &[]);
        assert_eq!(with.recall, base.recall);
        assert_eq!(with.false_positives, base.false_positives + 1);
        assert!(with.precision < base.precision);
    }

    #[test]
    fn undecided_semantics() {
        let e = vec![
            entry(Category::Undecided(vec![3])),
            entry(Category::Undecided(vec![3])),
            entry(Category::Undecided(vec![])),
        ];
        let r = tally("t", &e, &[Some(3), Some(4), None], &[]);
        assert_eq!(r.undecided_false_positives, 1);
        assert_eq!(r.false_positives, 1);
        assert_eq!(r.undecided, 3);
    }

    #[test]
    fn wrong_match_is_fp_and_miss() {
        let e = vec![entry(Category::Matched(vec![1]))];
        let r = tally("t", &e, &[Some(2)], &[]);
        assert_eq!((r.true_positives, r.false_positives, r.false_negatives), (0, 1, 1));
    }

    #[test]
    fn truth_file_round_trip() {
        let mut q = QueryRecord::named("Müller Bau").with_sic("1521");
        q.names_alt = vec!["Mueller Bau".into()];
        q.addresses.push(Address {
            city: Some("Thun".into()),
            country: Some("CH".into()),
            ..Address::default()
        });
        let entries = vec![
            GroundTruthEntry {
                query: q,
                category: Category::Matched(vec![4, 9]),
                note: "diacritic".into(),
            },
            GroundTruthEntry {
                query: QueryRecord::named("Nobody AG"),
                category: Category::Unmatched,
                note: String::new(),
            },
            GroundTruthEntry {
                query: QueryRecord::named("Maybe"),
                category: Category::Undecided(vec![]),
                note: String::new(),
            },
        ];
        let mut buf = Vec::new();
        write_truth(&entries, &mut buf).unwrap();
        assert_eq!(read_truth(buf.as_slice()).unwrap(), entries);
        assert!(validate_truth(&entries, 10).is_ok());
        assert!(matches!(validate_truth(&entries, 5), Err(Error::InvalidGroundTruth(_))));
    }

    #[test]
    fn bad_truth_rows() {
        let header = "name\tnames_alt\tstreet\tcity\tpostal\tcountry\tsic\tcategory\tids\tnote\n";
        for row in ["Acme\t\t\t\t\t\t\tMATCHED\t\t\n", "Acme\t\t\t\t\t\t\tMAYBE\t\t\n", "Acme\t\t\t\t\t\t\tMATCHED\tx\t\n"] {
            let text = format!("{header}{row}");
            assert!(matches!(read_truth(text.as_bytes()), Err(Error::InvalidGroundTruth(_))), "{row}");
        }
    }

    #[test]
    fn montecarlo_edges() {
        let cfg = BandConfig::new(4, 10).unwrap();
        assert_eq!(montecarlo_scurve(cfg, 1.0, 200, 1).unwrap(), 1.0);
        assert_eq!(montecarlo_scurve(cfg, 0.0, 200, 1).unwrap(), 0.0);
        assert!(matches!(montecarlo_scurve(cfg, std::f64::consts::FRAC_1_SQRT_2, 10, 1), Err(Error::InfeasibleSimilarity(_))));
        assert!(montecarlo_scurve(cfg, 1.5, 10, 1).is_err());
        assert_eq!(montecarlo_scurve(cfg, 0.5, 300, 9).unwrap(), montecarlo_scurve(cfg, 0.5, 300, 9).unwrap());
        let p = montecarlo_scurve(cfg, 0.5, 2000, 3).unwrap();
        assert!((p - scurve_probability(0.5, cfg).unwrap()).abs() <= 0.03, "{p}");
    }
}
