//! Run configuration, read from a TOML file.
//!
//! ```toml
//! seed = 42
//! threshold = 0.7
//! top_n = 10
//! workers = 4
//! max_concurrent_requests = 8
//!
//! [paths]
//! entity_db = "out/entities.db"
//! blocking_db = "out/blocking.db"
//! gazetteer = "data/gazetteer.tsv"
//! # lexicon, shortname_model, frequency_table are optional
//!
//! [blocking]
//! rows = 6
//! bands = 30
//!
//! [ingest]
//! delimiter = ","
//! # schema = { company = "name", town = "city" }
//!
//! [scoring]
//! strategy = "rls"
//! [scoring.weights]
//! name = 0.6
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blocking::BandConfig;
use crate::error::{Error, Result};
use crate::murmur3::hex128;
use crate::scoring::ScoringConfig;
use crate::store::DatasetSchema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub entity_db: PathBuf,
    pub blocking_db: PathBuf,
    pub gazetteer: Option<PathBuf>,
    /// Replaces the bundled legal entity lexicon.
    pub lexicon: Option<PathBuf>,
    pub shortname_model: Option<PathBuf>,
    pub frequency_table: Option<PathBuf>,
}

impl Default for DataPaths {
    fn default() -> Self {
        Self {
            entity_db: PathBuf::from("entities.db"),
            blocking_db: PathBuf::from("blocking.db"),
            gazetteer: None,
            lexicon: None,
            shortname_model: None,
            frequency_table: None,
        }
    }
}

impl DataPaths {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.entity_db);
        fix(&mut self.blocking_db);
        for p in [
            &mut self.gazetteer,
            &mut self.lexicon,
            &mut self.shortname_model,
            &mut self.frequency_table,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub delimiter: char,
    /// Column name → attribute; inferred from the header when absent.
    pub schema: Option<DatasetSchema>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            delimiter: ',',
            schema: None,
        }
    }
}

impl IngestConfig {
    pub fn delimiter_byte(&self) -> Result<u8> {
        u8::try_from(self.delimiter)
            .ok()
            .filter(u8::is_ascii)
            .ok_or_else(|| Error::Config(format!("delimiter {:?} is not ASCII", self.delimiter)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkerConfig {
    pub paths: DataPaths,
    pub blocking: BandConfig,
    pub seed: u64,
    pub scoring: ScoringConfig,
    /// Minimum score for a result to be returned.
    pub threshold: f64,
    pub top_n: usize,
    /// Threads a single batch is spread over.
    pub workers: usize,
    /// Requests the service executes at once; further requests queue.
    pub max_concurrent_requests: usize,
    pub ingest: IngestConfig,
}

impl Default for LinkerConfig {
    fn default() -> Self {
        Self {
            paths: DataPaths::default(),
            blocking: BandConfig::default(),
            seed: 42,
            scoring: ScoringConfig::default(),
            threshold: 0.7,
            top_n: 10,
            workers: 4,
            max_concurrent_requests: 8,
            ingest: IngestConfig::default(),
        }
    }
}

impl LinkerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.top_n == 0 || self.workers == 0 || self.max_concurrent_requests == 0 {
            return Err(Error::Config(
                "top_n, workers and max_concurrent_requests must be at least 1".into(),
            ));
        }
        BandConfig::new(self.blocking.rows, self.blocking.bands)?;
        self.ingest.delimiter_byte()?;
        if let Some(schema) = &self.ingest.schema {
            schema.validate()?;
        }
        self.scoring.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.paths.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Short fingerprint of every setting that affects results.
    pub fn digest(&self) -> String {
        let mut relevant = self.clone();
        relevant.paths = DataPaths::default();
        relevant.workers = 1;
        relevant.max_concurrent_requests = 1;
        hex128(relevant.to_toml().as_bytes(), 0)[..16].to_string()
    }
}
