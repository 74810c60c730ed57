//! Offline preprocessing (source → entity DB + blocking DB) and the runtime
//! linker (query → candidates → scoring tree → ranked matches).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::blocking::{BandConfig, BlockingIndex, KeyMaker, RecordId};
use crate::config::LinkerConfig;
use crate::error::{Error, Result};
use crate::murmur3::hash64;
use crate::scoring::{build_scoring_tree, CityTrie, ScoringContext, Strategy};
use crate::shortname::{predict, FrequencyTable, ShortNameModel};
use crate::store::{ingest, Attribute, EntityStore, IngestStats, QueryRecord, Record};
use crate::textnorm::{clean_blocking, LegalEntityLexicon};

/// Read-only side data shared by preprocessing and linking.
#[derive(Debug, Clone)]
pub struct Resources {
    pub lexicon: LegalEntityLexicon,
    pub trie: Option<CityTrie>,
    pub shortname: Option<(ShortNameModel, FrequencyTable)>,
}

impl Default for Resources {
    fn default() -> Self {
        Self {
            lexicon: LegalEntityLexicon::bundled(),
            trie: None,
            shortname: None,
        }
    }
}

impl Resources {
    pub fn load(config: &LinkerConfig) -> Result<Self> {
        let paths = &config.paths;
        let lexicon = match &paths.lexicon {
            Some(p) => LegalEntityLexicon::from_file(p)?,
            None => LegalEntityLexicon::bundled(),
        };
        let trie = match &paths.gazetteer {
            Some(p) => {
                let (trie, stats) = CityTrie::from_file(p)?;
                log::info!("gazetteer: {} cities ({} malformed rows)", stats.inserted, stats.malformed);
                Some(trie)
            }
            None => None,
        };
        let shortname = match (&paths.shortname_model, &paths.frequency_table) {
            (Some(m), Some(f)) => Some((ShortNameModel::load(m)?, FrequencyTable::load(f)?)),
            (Some(_), None) => {
                return Err(Error::Config(
                    "a short-name model needs paths.frequency_table".into(),
                ))
            }
            (None, _) => None,
        };
        Ok(Self {
            lexicon,
            trie,
            shortname,
        })
    }

    pub fn short_name(&self, name: &str) -> Option<String> {
        let (model, freq) = self.shortname.as_ref()?;
        Some(predict(name, model, freq)).filter(|s| !s.is_empty())
    }
}

/// Word counts pooled uniformly over names, streets, cities and countries.
pub fn frequency_table_from_records(records: &[Record]) -> FrequencyTable {
    let mut freq = FrequencyTable::new();
    for r in records {
        freq.add_text(&r.name);
        for f in [&r.street, &r.city, &r.country].into_iter().flatten() {
            freq.add_text(f);
        }
    }
    freq
}

/// Band keys of a name. Names that clean to nothing all share one reserved
/// key so equal (empty) blocking names still meet.
pub fn blocking_keys(keys: &KeyMaker, name: &str, lex: &LegalEntityLexicon) -> Vec<u64> {
    keys.keys_for_name(name, lex).unwrap_or_else(|| {
        let sentinel = hash64(b"\0empty-blocking-name", keys.seed());
        vec![sentinel; keys.config().bands as usize]
    })
}

pub fn build_index(
    records: &[Record],
    config: BandConfig,
    seed: u64,
    lex: &LegalEntityLexicon,
) -> Result<BlockingIndex> {
    let keys = KeyMaker::new(seed, config);
    let mut index = BlockingIndex::new(config, seed);
    for r in records {
        index.insert(r.id, &blocking_keys(&keys, &r.name, lex))?;
    }
    Ok(index)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PreprocessOptions {
    pub skip_short_names: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub ingest_ms: f64,
    pub short_names_ms: f64,
    pub entity_db_ms: f64,
    pub blocking_db_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PreprocessStats {
    pub ingest: IngestStats,
    pub records: u64,
    pub short_names: u64,
    pub empty_blocking_names: u64,
    pub blocking_keys: u64,
    pub band_config: String,
    pub entity_db_bytes: u64,
    pub blocking_db_bytes: u64,
    pub timings: StageTimings,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn temp_beside(path: &Path) -> Result<tempfile::NamedTempFile> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))
}

fn write_temp(path: &Path, bytes: &[u8]) -> Result<tempfile::NamedTempFile> {
    let mut tmp = temp_beside(path)?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| Error::io(tmp.path(), e))?;
    Ok(tmp)
}

/// Ingests `source` and writes both databases named in the config. Outputs
/// are staged in temporary files and only renamed into place once both
/// are complete.
pub fn preprocess(
    source: &Path,
    config: &LinkerConfig,
    options: PreprocessOptions,
) -> Result<PreprocessStats> {
    config.validate()?;
    let resources = Resources::load(config)?;
    let file = std::fs::File::open(source).map_err(|e| Error::io(source, e))?;
    preprocess_reader(std::io::BufReader::new(file), config, &resources, options)
}

pub fn preprocess_reader<R: std::io::Read>(
    source: R,
    config: &LinkerConfig,
    resources: &Resources,
    options: PreprocessOptions,
) -> Result<PreprocessStats> {
    let mut stats = PreprocessStats {
        band_config: config.blocking.to_string(),
        ..PreprocessStats::default()
    };

    let t = Instant::now();
    let (mut records, ingest_stats) = ingest(
        source,
        config.ingest.schema.as_ref(),
        config.ingest.delimiter_byte()?,
    )?;
    stats.ingest = ingest_stats;
    stats.records = records.len() as u64;
    stats.timings.ingest_ms = ms_since(t);

    let t = Instant::now();
    if !options.skip_short_names && resources.shortname.is_some() {
        for r in &mut records {
            if let Some(short) = resources.short_name(&r.name) {
                *r = r.clone().with_short_name(Some(&short));
                stats.short_names += 1;
            }
        }
    }
    stats.timings.short_names_ms = ms_since(t);

    let t = Instant::now();
    let store = EntityStore::new(records)?;
    let entity_bytes = store.to_bytes();
    let entity_tmp = write_temp(&config.paths.entity_db, &entity_bytes)?;
    stats.entity_db_bytes = entity_bytes.len() as u64;
    stats.timings.entity_db_ms = ms_since(t);

    let t = Instant::now();
    let lex = &resources.lexicon;
    stats.empty_blocking_names = store
        .iter()
        .filter(|r| clean_blocking(&r.name, lex).is_empty())
        .count() as u64;
    let index = build_index(store.records(), config.blocking, config.seed, lex)?;
    stats.blocking_keys = index.key_count() as u64;
    let index_bytes = index.to_bytes();
    let index_tmp = write_temp(&config.paths.blocking_db, &index_bytes)?;
    stats.blocking_db_bytes = index_bytes.len() as u64;
    stats.timings.blocking_db_ms = ms_since(t);

    entity_tmp
        .persist(&config.paths.entity_db)
        .map_err(|e| Error::io(&config.paths.entity_db, e.error))?;
    if let Err(e) = index_tmp.persist(&config.paths.blocking_db) {
        let _ = std::fs::remove_file(&config.paths.entity_db);
        return Err(Error::io(&config.paths.blocking_db, e.error));
    }
    log::info!(
        "preprocessed {} records into {} blocking keys ({})",
        stats.records,
        stats.blocking_keys,
        stats.band_config
    );
    Ok(stats)
}

/// Per-request overrides of the configured defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Deserialize, Serialize)]
#[serde(default, rename_all = "camelCase")]
pub struct LinkOptions {
    pub top_n: Option<usize>,
    pub threshold: Option<f64>,
    pub strategy: Option<Strategy>,
}

/// Stored fields of a matched record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RecordView {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub short_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub street: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub postal: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sic: Option<String>,
}

impl From<&Record> for RecordView {
    fn from(r: &Record) -> Self {
        Self {
            name: r.name.clone(),
            short_name: r.short_name.clone(),
            street: r.street.clone(),
            city: r.city.clone(),
            postal: r.postal.clone(),
            country: r.country.clone(),
            sic: r.sic.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MatchResult {
    pub record_id: RecordId,
    pub score: f64,
    pub sub_scores: BTreeMap<Attribute, f64>,
    pub record: RecordView,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LinkOutcome {
    pub results: Vec<MatchResult>,
    /// Candidates scored for this query.
    pub comparisons: usize,
}

/// A loaded dataset ready to answer queries. Immutable and cheap to clone.
#[derive(Clone)]
pub struct Linker {
    config: Arc<LinkerConfig>,
    store: Arc<EntityStore>,
    index: Arc<BlockingIndex>,
    resources: Arc<Resources>,
    keys: KeyMaker,
    pool: Arc<rayon::ThreadPool>,
}

impl std::fmt::Debug for Linker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Linker")
            .field("records", &self.store.len())
            .field("band_config", &self.index.config())
            .field("workers", &self.config.workers)
            .finish()
    }
}

fn build_pool(threads: usize) -> Result<Arc<rayon::ThreadPool>> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .thread_name(|i| format!("rlink-worker-{i}"))
        .build()
        .map(Arc::new)
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

impl Linker {
    /// Loads the databases and side data named in the config.
    pub fn load(config: LinkerConfig) -> Result<Self> {
        config.validate()?;
        let store = EntityStore::load(&config.paths.entity_db)?;
        let bytes = std::fs::read(&config.paths.blocking_db)
            .map_err(|e| Error::io(&config.paths.blocking_db, e))?;
        let index = BlockingIndex::from_bytes(&bytes)?;
        let resources = Resources::load(&config)?;
        Self::from_parts(config, Arc::new(store), Arc::new(index), Arc::new(resources))
    }

    pub fn from_parts(
        config: LinkerConfig,
        store: Arc<EntityStore>,
        index: Arc<BlockingIndex>,
        resources: Arc<Resources>,
    ) -> Result<Self> {
        config.validate()?;
        if index.config() != config.blocking || index.seed() != config.seed {
            return Err(Error::Config(format!(
                "blocking database was built with {} seed {}, config says {} seed {}",
                index.config(),
                index.seed(),
                config.blocking,
                config.seed
            )));
        }
        let keys = KeyMaker::new(config.seed, config.blocking);
        let pool = build_pool(config.workers)?;
        Ok(Self {
            config: Arc::new(config),
            store,
            index,
            resources,
            keys,
            pool,
        })
    }

    /// Same dataset with a different batch fan-out and pool size.
    pub fn with_workers(&self, workers: usize, pool_threads: usize) -> Result<Self> {
        let mut config = (*self.config).clone();
        config.workers = workers;
        config.validate()?;
        Ok(Self {
            config: Arc::new(config),
            pool: build_pool(pool_threads)?,
            ..self.clone()
        })
    }

    pub fn config(&self) -> &LinkerConfig {
        &self.config
    }

    pub fn store(&self) -> &EntityStore {
        &self.store
    }

    pub fn index(&self) -> &BlockingIndex {
        &self.index
    }

    pub fn resources(&self) -> &Resources {
        &self.resources
    }

    /// Candidate ids for a query: union over the primary and alternate names.
    pub fn candidates(&self, q: &QueryRecord) -> Vec<RecordId> {
        let lex = &self.resources.lexicon;
        let mut keys = blocking_keys(&self.keys, &q.name, lex);
        for alt in q.names_alt.iter().filter(|a| !a.trim().is_empty()) {
            keys.extend(blocking_keys(&self.keys, alt, lex));
        }
        self.index.candidates(&keys)
    }

    pub fn link_one(&self, q: &QueryRecord, options: &LinkOptions) -> Result<LinkOutcome> {
        let cfg = &self.config;
        let ctx = ScoringContext {
            config: &cfg.scoring,
            lexicon: &self.resources.lexicon,
            trie: self.resources.trie.as_ref(),
        };
        let strategy = options.strategy.unwrap_or(cfg.scoring.strategy);
        let threshold = options.threshold.unwrap_or(cfg.threshold);
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!("threshold {threshold} outside [0, 1]")));
        }
        let top_n = options.top_n.unwrap_or(cfg.top_n).max(1);
        let short = self.resources.short_name(&q.name);
        let tree = build_scoring_tree(q, &cfg.scoring.weights, strategy, short.as_deref(), &ctx)?;

        let candidates = self.candidates(q);
        let mut results: Vec<MatchResult> = candidates
            .iter()
            .filter_map(|&id| {
                let record = self.store.get(id).ok()?;
                let eval = tree.evaluate(record, &ctx);
                (eval.score >= threshold).then(|| MatchResult {
                    record_id: id,
                    score: eval.score,
                    sub_scores: eval.sub_scores,
                    record: RecordView::from(record),
                })
            })
            .collect();
        results.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.record_id.cmp(&b.record_id)));
        results.truncate(top_n);
        Ok(LinkOutcome {
            results,
            comparisons: candidates.len(),
        })
    }

    /// Links every query; results stay aligned with the input. The batch
    /// is split into at most `workers` contiguous chunks.
    pub fn link_batch(&self, queries: &[QueryRecord], options: &LinkOptions) -> Vec<Result<LinkOutcome>> {
        self.link_batch_timed(queries, options).into_iter().map(|(r, _)| r).collect()
    }

    /// [`Linker::link_batch`] plus the wall time spent on each query.
    pub fn link_batch_timed(
        &self,
        queries: &[QueryRecord],
        options: &LinkOptions,
    ) -> Vec<(Result<LinkOutcome>, Duration)> {
        let timed = |q: &QueryRecord| {
            let t = Instant::now();
            let r = self.link_one(q, options);
            (r, t.elapsed())
        };
        let workers = self.config.workers.max(1);
        if workers == 1 || queries.len() <= 1 {
            return queries.iter().map(timed).collect();
        }
        let chunk = queries.len().div_ceil(workers);
        self.pool.install(|| {
            queries
                .par_chunks(chunk)
                .map(|part| part.iter().map(timed).collect::<Vec<_>>())
                .collect::<Vec<_>>()
                .into_iter()
                .flatten()
                .collect()
        })
    }
}
