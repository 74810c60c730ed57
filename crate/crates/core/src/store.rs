//! Reference records, ingestion from delimited text and the binary entity
//! database.
//!
//! Database layout (all integers little-endian):
//!
//! ```text
//! magic "RLENTYDB" | version u32 | count u64 | checksum u64 | body_len u64
//! body: offsets[(count + 1) x u64] | arena
//! ```
//!
//! `checksum` is MurmurHash3-64 over the body. Each record in the arena is
//! a fixed sequence of length-prefixed UTF-8 fields (`u32::MAX` = absent).

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blocking::RecordId;
use crate::error::{Error, Result};
use crate::murmur3::hash64;
use crate::textnorm::{clean_light, CleanText};

/// A reference company record with cached cleaned scoring attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub id: RecordId,
    pub name: String,
    pub short_name: Option<String>,
    pub street: Option<String>,
    pub city: Option<String>,
    pub postal: Option<String>,
    pub country: Option<String>,
    pub sic: Option<String>,
    pub clean_name: CleanText,
    pub clean_street: Option<CleanText>,
    pub clean_city: Option<CleanText>,
}

impl Record {
    /// Builds a record and fills the clean caches. Fails on an empty name.
    pub fn new(id: RecordId, name: &str) -> Result<Self> {
        let clean_name = clean_light(name);
        if clean_name.is_empty() {
            return Err(Error::InvalidRecord("empty name".into()));
        }
        Ok(Self {
            id,
            name: name.trim().to_string(),
            short_name: None,
            street: None,
            city: None,
            postal: None,
            country: None,
            sic: None,
            clean_name,
            clean_street: None,
            clean_city: None,
        })
    }

    pub fn with_street(mut self, street: Option<&str>) -> Self {
        self.street = non_empty(street);
        self.clean_street = self.street.as_deref().map(clean_light).filter(|c| !c.is_empty());
        self
    }

    pub fn with_city(mut self, city: Option<&str>) -> Self {
        self.city = non_empty(city);
        self.clean_city = self.city.as_deref().map(clean_light).filter(|c| !c.is_empty());
        self
    }

    pub fn with_postal(mut self, postal: Option<&str>) -> Self {
        self.postal = non_empty(postal);
        self
    }

    /// Keeps two-letter alphabetic codes only, uppercased.
    pub fn with_country(mut self, country: Option<&str>) -> Self {
        self.country = non_empty(country)
            .filter(|c| c.len() == 2 && c.chars().all(|ch| ch.is_ascii_alphabetic()))
            .map(|c| c.to_ascii_uppercase());
        self
    }

    /// Keeps 1–4 digit codes only.
    pub fn with_sic(mut self, sic: Option<&str>) -> Self {
        self.sic = non_empty(sic).filter(|s| valid_sic(s));
        self
    }

    pub fn with_short_name(mut self, short: Option<&str>) -> Self {
        self.short_name = non_empty(short);
        self
    }
}

pub fn valid_sic(s: &str) -> bool {
    (1..=4).contains(&s.len()) && s.bytes().all(|b| b.is_ascii_digit())
}

fn non_empty(s: Option<&str>) -> Option<String> {
    s.map(str::trim).filter(|s| !s.is_empty()).map(str::to_string)
}

/// One address mention in a query; every part is optional.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Address {
    pub street: Option<String>,
    pub city: Option<String>,
    pub postal: Option<String>,
    pub country: Option<String>,
}

impl Address {
    pub fn is_empty(&self) -> bool {
        [&self.street, &self.city, &self.postal, &self.country]
            .iter()
            .all(|f| f.as_deref().is_none_or(|s| s.trim().is_empty()))
    }
}

/// An incoming query: a required name, everything else optional and repeatable.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct QueryRecord {
    pub name: String,
    pub names_alt: Vec<String>,
    pub addresses: Vec<Address>,
    pub sics: Vec<String>,
}

impl QueryRecord {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn with_address(mut self, address: Address) -> Self {
        self.addresses.push(address);
        self
    }

    pub fn with_sic(mut self, sic: impl Into<String>) -> Self {
        self.sics.push(sic.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Name,
    Street,
    City,
    Postal,
    Country,
    Sic,
}

impl Attribute {
    pub const ALL: [Attribute; 6] = [
        Attribute::Name,
        Attribute::Street,
        Attribute::City,
        Attribute::Postal,
        Attribute::Country,
        Attribute::Sic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Name => "name",
            Attribute::Street => "street",
            Attribute::City => "city",
            Attribute::Postal => "postal",
            Attribute::Country => "country",
            Attribute::Sic => "sic",
        }
    }
}

/// Column name → canonical attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetSchema {
    pub columns: BTreeMap<String, Attribute>,
}

impl DatasetSchema {
    pub fn new(columns: BTreeMap<String, Attribute>) -> Result<Self> {
        let schema = Self { columns };
        schema.validate()?;
        Ok(schema)
    }

    /// Maps every header column whose name is a canonical attribute name.
    pub fn from_header(header: &[&str]) -> Result<Self> {
        let columns = header
            .iter()
            .filter_map(|h| {
                let key = h.trim().to_ascii_lowercase();
                Attribute::ALL
                    .iter()
                    .find(|a| a.as_str() == key)
                    .map(|a| (h.to_string(), *a))
            })
            .collect();
        Self::new(columns)
    }

    pub fn validate(&self) -> Result<()> {
        let names = self
            .columns
            .values()
            .filter(|a| **a == Attribute::Name)
            .count();
        if names != 1 {
            return Err(Error::SchemaMismatch(format!(
                "exactly one column must map to name, found {names}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub rows: u64,
    pub records: u64,
    pub dropped_empty_name: u64,
    pub malformed_rows: u64,
}

/// Ingests delimited text with a header row. `schema = None` infers the
/// mapping from the header.
pub fn ingest<R: Read>(
    source: R,
    schema: Option<&DatasetSchema>,
    delimiter: u8,
) -> Result<(Vec<Record>, IngestStats)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let inferred;
    let schema = match schema {
        Some(s) => {
            s.validate()?;
            s
        }
        None => {
            inferred = DatasetSchema::from_header(&header_refs)?;
            &inferred
        }
    };

    let mut positions: Vec<(usize, Attribute)> = Vec::new();
    for (column, attr) in &schema.columns {
        let pos = header
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| Error::SchemaMismatch(format!("column {column:?} not in header")))?;
        positions.push((pos, *attr));
    }

    let mut stats = IngestStats::default();
    let mut records = Vec::new();
    for row in reader.records() {
        stats.rows += 1;
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                log::warn!("skipping malformed row {}: {e}", stats.rows);
                stats.malformed_rows += 1;
                continue;
            }
        };
        let field = |attr: Attribute| {
            positions
                .iter()
                .find(|(_, a)| *a == attr)
                .and_then(|(p, _)| row.get(*p))
        };
        let id = records.len() as RecordId;
        let record = match Record::new(id, field(Attribute::Name).unwrap_or("")) {
            Ok(r) => r,
            Err(_) => {
                stats.dropped_empty_name += 1;
                continue;
            }
        };
        records.push(
            record
                .with_street(field(Attribute::Street))
                .with_city(field(Attribute::City))
                .with_postal(field(Attribute::Postal))
                .with_country(field(Attribute::Country))
                .with_sic(field(Attribute::Sic)),
        );
    }
    stats.records = records.len() as u64;
    Ok((records, stats))
}

/// Loaded, immutable record collection with O(1) access by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityStore {
    records: Vec<Record>,
}

impl EntityStore {
    /// Ids must be dense and in order.
    pub fn new(records: Vec<Record>) -> Result<Self> {
        if let Some((i, r)) = records
            .iter()
            .enumerate()
            .find(|(i, r)| r.id as usize != *i)
        {
            return Err(Error::InvalidRecord(format!(
                "record at position {i} has id {}",
                r.id
            )));
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: RecordId) -> Result<&Record> {
        self.records.get(id as usize).ok_or(Error::IdOutOfRange {
            id: id as u64,
            count: self.records.len() as u64,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &Record> {
        self.records.iter()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_db(&self.records)
    }

    /// Content fingerprint of the serialized store (16 hex chars).
    pub fn dataset_id(&self) -> String {
        format!("{:016x}", hash64(&self.to_bytes(), 0))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::new(decode_db(bytes)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_db(&self.records, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_db(path)
    }
}

const DB_MAGIC: &[u8; 8] = b"RLENTYDB";
const DB_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 8 + 8;
const ABSENT: u32 = u32::MAX;
const WHAT: &str = "entity database";

pub fn write_db(records: &[Record], path: &Path) -> Result<()> {
    fs::write(path, encode_db(records)).map_err(|e| Error::io(path, e))
}

pub fn load_db(path: &Path) -> Result<EntityStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EntityStore::from_bytes(&bytes)
}

fn encode_db(records: &[Record]) -> Vec<u8> {
    let mut arena = Vec::new();
    let mut offsets = Vec::with_capacity(records.len() + 1);
    for r in records {
        offsets.push(arena.len() as u64);
        let fields: [Option<&str>; 10] = [
            Some(&r.name),
            r.short_name.as_deref(),
            r.street.as_deref(),
            r.city.as_deref(),
            r.postal.as_deref(),
            r.country.as_deref(),
            r.sic.as_deref(),
            Some(r.clean_name.as_str()),
            r.clean_street.as_ref().map(CleanText::as_str),
            r.clean_city.as_ref().map(CleanText::as_str),
        ];
        for f in fields {
            match f {
                Some(s) => {
                    arena.extend_from_slice(&(s.len() as u32).to_le_bytes());
                    arena.extend_from_slice(s.as_bytes());
                }
                None => arena.extend_from_slice(&ABSENT.to_le_bytes()),
            }
        }
    }
    offsets.push(arena.len() as u64);

    let mut body = Vec::with_capacity(offsets.len() * 8 + arena.len());
    offsets
        .iter()
        .for_each(|o| body.extend_from_slice(&o.to_le_bytes()));
    body.extend_from_slice(&arena);

    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(DB_MAGIC);
    out.extend_from_slice(&DB_VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    out.extend_from_slice(&hash64(&body, 0).to_le_bytes());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

fn decode_db(bytes: &[u8]) -> Result<Vec<Record>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::ChecksumMismatch { what: WHAT });
    }
    if &bytes[..8] != DB_MAGIC {
        return Err(Error::BadMagic { what: WHAT });
    }
    let u64_at = |p: usize| u64::from_le_bytes(bytes[p..p + 8].try_into().expect("8 bytes"));
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != DB_VERSION {
        return Err(Error::VersionMismatch {
            what: WHAT,
            found: version,
            expected: DB_VERSION,
        });
    }
    let count = u64_at(12) as usize;
    let checksum = u64_at(20);
    let body_len = u64_at(28) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != body_len || hash64(body, 0) != checksum {
        return Err(Error::ChecksumMismatch { what: WHAT });
    }

    let corrupt = |reason: &str| Error::Corrupt {
        what: WHAT,
        reason: reason.to_string(),
    };
    let table_len = count
        .checked_add(1)
        .and_then(|n| n.checked_mul(8))
        .filter(|&n| n <= body.len())
        .ok_or_else(|| corrupt("offset table exceeds body"))?;
    let arena = &body[table_len..];
    let offset = |i: usize| u64::from_le_bytes(body[i * 8..i * 8 + 8].try_into().expect("8")) as usize;

    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let (start, end) = (offset(i), offset(i + 1));
        if start > end || end > arena.len() {
            return Err(corrupt("bad record offsets"));
        }
        let mut slice = &arena[start..end];
        let mut fields: Vec<Option<String>> = Vec::with_capacity(10);
        for _ in 0..10 {
            if slice.len() < 4 {
                return Err(corrupt("record shorter than its fields"));
            }
            let len = u32::from_le_bytes(slice[..4].try_into().expect("4"));
            slice = &slice[4..];
            if len == ABSENT {
                fields.push(None);
                continue;
            }
            let len = len as usize;
            if slice.len() < len {
                return Err(corrupt("field exceeds record"));
            }
            let s = std::str::from_utf8(&slice[..len]).map_err(|_| corrupt("invalid UTF-8"))?;
            fields.push(Some(s.to_string()));
            slice = &slice[len..];
        }
        let mut it = fields.into_iter();
        let mut next = || it.next().flatten();
        let name = next().ok_or_else(|| corrupt("missing name"))?;
        let record = Record {
            id: i as RecordId,
            name,
            short_name: next(),
            street: next(),
            city: next(),
            postal: next(),
            country: next(),
            sic: next(),
            clean_name: clean_from_cache(next().unwrap_or_default()),
            clean_street: next().map(clean_from_cache),
            clean_city: next().map(clean_from_cache),
        };
        records.push(record);
    }
    Ok(records)
}

// Cached clean strings are already light-cleaned; re-cleaning is a no-op
// and rebuilds the mark index.
fn clean_from_cache(s: String) -> CleanText {
    clean_light(&s)
}
