//! MinHash blocking: signatures, band keys, the key → record-id index and
//! the S-curve analytics used to choose the row/band layout.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::murmur3::{fmix64, hash128, hash64};
use crate::textnorm::{clean_blocking, shingle_bigrams, LegalEntityLexicon};

pub type RecordId = u32;

/// Signature layout: `rows` MinHashes per band, `bands` bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BandConfig {
    pub rows: u32,
    pub bands: u32,
}

impl BandConfig {
    pub const PRESETS: [BandConfig; 3] = [
        BandConfig::new_unchecked(4, 10),
        BandConfig::new_unchecked(5, 18),
        BandConfig::new_unchecked(6, 30),
    ];

    const fn new_unchecked(rows: u32, bands: u32) -> Self {
        Self { rows, bands }
    }

    pub fn new(rows: u32, bands: u32) -> Result<Self> {
        if rows == 0 || bands == 0 {
            return Err(Error::InvalidBandConfig(format!("{rows}/{bands}")));
        }
        Ok(Self { rows, bands })
    }

    /// Number of hash functions, rows × bands.
    pub fn total_hashes(&self) -> usize {
        self.rows as usize * self.bands as usize
    }
}

impl Default for BandConfig {
    fn default() -> Self {
        Self::new_unchecked(6, 30)
    }
}

impl fmt::Display for BandConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.rows, self.bands)
    }
}

impl FromStr for BandConfig {
    type Err = Error;

    /// Parses `rows/bands`, e.g. `6/30`.
    fn from_str(s: &str) -> Result<Self> {
        let (r, b) = s
            .trim()
            .split_once('/')
            .ok_or_else(|| Error::InvalidBandConfig(s.to_string()))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| Error::InvalidBandConfig(s.to_string()))
        };
        Self::new(parse(r)?, parse(b)?)
    }
}

/// Probability that two sets with Jaccard similarity `s` share at least one
/// band: `1 - (1 - s^r)^b`.
pub fn scurve_probability(s: f64, cfg: BandConfig) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::SimilarityOutOfRange(s));
    }
    let band_match = s.powi(cfg.rows as i32);
    Ok(1.0 - (1.0 - band_match).powi(cfg.bands as i32))
}

/// Probability as a percentage truncated to one decimal, the convention
/// of the usual S-curve tables (0.47554 -> 47.5).
pub fn percent_one_decimal(p: f64) -> f64 {
    // nudge so exact tenths survive the float round trip
    ((p * 1000.0) + 1e-9).floor() / 10.0
}

/// Cheapest candidate (fewest total hashes) reaching `min_probability` at
/// `min_similarity`. Ties keep the earlier candidate.
pub fn choose_band_config(
    min_similarity: f64,
    min_probability: f64,
    candidates: &[BandConfig],
) -> Result<BandConfig> {
    let mut best: Option<BandConfig> = None;
    for &cfg in candidates {
        if scurve_probability(min_similarity, cfg)? + 1e-12 < min_probability {
            continue;
        }
        if best.is_none_or(|b| cfg.total_hashes() < b.total_hashes()) {
            best = Some(cfg);
        }
    }
    best.ok_or(Error::NoFeasibleConfig {
        min_similarity,
        min_probability,
    })
}

/// Seeded family of 64-bit hash functions used for MinHashing.
///
/// Function `i` first hashes the shingle bytes with MurmurHash3 under the
/// family seed, then applies an affine map with per-function constants
/// (derived from `(seed, i)` through the same primitive) and a final
/// avalanche, giving an independent-looking permutation of `u64` per index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    seed: u64,
    params: Vec<(u64, u64)>,
}

impl HashFamily {
    pub fn new(seed: u64, count: usize) -> Self {
        let params = (0..count as u64)
            .map(|i| {
                let mut buf = [0u8; 16];
                buf[..8].copy_from_slice(&seed.to_le_bytes());
                buf[8..].copy_from_slice(&i.to_le_bytes());
                let (a, b) = hash128(&buf, seed);
                (a | 1, b)
            })
            .collect();
        Self { seed, params }
    }

    pub fn for_config(seed: u64, cfg: BandConfig) -> Self {
        Self::new(seed, cfg.total_hashes())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    #[inline]
    pub fn base_hash(&self, item: &[u8]) -> u64 {
        hash64(item, self.seed)
    }

    #[inline]
    pub fn hash_i(&self, i: usize, base: u64) -> u64 {
        let (a, b) = self.params[i];
        fmix64(base.wrapping_mul(a).wrapping_add(b))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSignature(pub Vec<u64>);

impl MinHashSignature {
    pub fn values(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Fraction of positions where both signatures agree.
    pub fn agreement(&self, other: &MinHashSignature) -> f64 {
        let n = self.0.len().min(other.0.len());
        if n == 0 {
            return 0.0;
        }
        let same = self.0.iter().zip(&other.0).filter(|(a, b)| a == b).count();
        same as f64 / n as f64
    }
}

pub fn minhash_signature<I, T>(shingles: I, family: &HashFamily) -> Result<MinHashSignature>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    let mut mins = vec![u64::MAX; family.len()];
    let mut seen = false;
    for sh in shingles {
        seen = true;
        let base = family.base_hash(sh.as_ref());
        for (i, m) in mins.iter_mut().enumerate() {
            let h = family.hash_i(i, base);
            if h < *m {
                *m = h;
            }
        }
    }
    if !seen {
        return Err(Error::EmptyShingleSet);
    }
    Ok(MinHashSignature(mins))
}

/// One 64-bit key per band: MurmurHash3 over the little-endian bytes of the
/// band's rows, seeded with the band index.
pub fn band_keys(sig: &MinHashSignature, cfg: BandConfig) -> Result<Vec<u64>> {
    if sig.len() != cfg.total_hashes() {
        return Err(Error::SignatureLengthMismatch {
            expected: cfg.total_hashes(),
            got: sig.len(),
        });
    }
    let rows = cfg.rows as usize;
    let mut buf = Vec::with_capacity(rows * 8);
    Ok(sig
        .0
        .chunks_exact(rows)
        .enumerate()
        .map(|(j, band)| {
            buf.clear();
            band.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
            hash64(&buf, j as u64)
        })
        .collect())
}

/// Everything needed to turn a raw name into band keys.
#[derive(Debug, Clone)]
pub struct KeyMaker {
    cfg: BandConfig,
    family: HashFamily,
}

impl KeyMaker {
    pub fn new(seed: u64, cfg: BandConfig) -> Self {
        Self {
            cfg,
            family: HashFamily::for_config(seed, cfg),
        }
    }

    pub fn config(&self) -> BandConfig {
        self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.family.seed()
    }

    pub fn family(&self) -> &HashFamily {
        &self.family
    }

    /// `None` when blocking cleaning leaves nothing to shingle.
    pub fn keys_for_name(&self, raw: &str, lex: &LegalEntityLexicon) -> Option<Vec<u64>> {
        let cleaned = clean_blocking(raw, lex);
        self.keys_for_shingles(&shingle_bigrams(&cleaned))
    }

    pub fn keys_for_shingles(&self, shingles: &BTreeSet<String>) -> Option<Vec<u64>> {
        let sig = minhash_signature(shingles.iter().map(|s| s.as_bytes()), &self.family).ok()?;
        Some(band_keys(&sig, self.cfg).expect("signature built for this config"))
    }
}

const INDEX_MAGIC: &[u8; 8] = b"RLBLKIDX";
const INDEX_VERSION: u32 = 1;

/// Blocking key → ascending, duplicate-free record ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockingIndex {
    config: BandConfig,
    seed: u64,
    postings: HashMap<u64, Vec<RecordId>>,
    inserted: BTreeSet<RecordId>,
}

impl BlockingIndex {
    pub fn new(config: BandConfig, seed: u64) -> Self {
        Self {
            config,
            seed,
            postings: HashMap::new(),
            inserted: BTreeSet::new(),
        }
    }

    pub fn config(&self) -> BandConfig {
        self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn key_count(&self) -> usize {
        self.postings.len()
    }

    pub fn record_count(&self) -> usize {
        self.inserted.len()
    }

    pub fn postings(&self, key: u64) -> &[RecordId] {
        self.postings.get(&key).map_or(&[], Vec::as_slice)
    }

    pub fn insert(&mut self, record_id: RecordId, keys: &[u64]) -> Result<()> {
        if keys.len() != self.config.bands as usize {
            return Err(Error::SignatureLengthMismatch {
                expected: self.config.bands as usize,
                got: keys.len(),
            });
        }
        if !self.inserted.insert(record_id) {
            return Err(Error::DuplicateRecordId(record_id));
        }
        for &key in keys {
            let list = self.postings.entry(key).or_default();
            match list.last() {
                Some(&last) if last == record_id => {}
                Some(&last) if last < record_id => list.push(record_id),
                None => list.push(record_id),
                _ => {
                    if let Err(pos) = list.binary_search(&record_id) {
                        list.insert(pos, record_id);
                    }
                }
            }
        }
        Ok(())
    }

    /// Union of the posting lists of `keys`, ascending.
    pub fn candidates(&self, keys: &[u64]) -> Vec<RecordId> {
        let mut out: Vec<RecordId> = keys
            .iter()
            .flat_map(|k| self.postings(*k).iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&INDEX_VERSION.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.config.rows.to_le_bytes())?;
        w.write_all(&self.config.bands.to_le_bytes())?;
        w.write_all(&(self.postings.len() as u64).to_le_bytes())?;
        let mut keys: Vec<u64> = self.postings.keys().copied().collect();
        keys.sort_unstable();
        let mut buf = Vec::new();
        for key in keys {
            let ids = &self.postings[&key];
            buf.clear();
            buf.extend_from_slice(&key.to_le_bytes());
            write_varint(&mut buf, ids.len() as u64);
            let mut prev = 0u32;
            for (i, &id) in ids.iter().enumerate() {
                let delta = if i == 0 { id } else { id - prev };
                write_varint(&mut buf, delta as u64);
                prev = id;
            }
            w.write_all(&buf)?;
        }
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("write to Vec");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::io("<blocking index>", e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "blocking index";
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(8)?;
        if magic != INDEX_MAGIC {
            return Err(Error::BadMagic { what: WHAT });
        }
        let version = cur.u32()?;
        if version != INDEX_VERSION {
            return Err(Error::VersionMismatch {
                what: WHAT,
                found: version,
                expected: INDEX_VERSION,
            });
        }
        let seed = cur.u64()?;
        let config = BandConfig::new(cur.u32()?, cur.u32()?)?;
        let key_count = cur.u64()?;
        let mut index = Self::new(config, seed);
        index.postings.reserve(key_count as usize);
        for _ in 0..key_count {
            let key = cur.u64()?;
            let len = cur.varint()? as usize;
            let mut ids = Vec::with_capacity(len);
            let mut prev = 0u64;
            for i in 0..len {
                let delta = cur.varint()?;
                let id = if i == 0 { delta } else { prev + delta };
                if id > RecordId::MAX as u64 || (i > 0 && delta == 0) {
                    return Err(Error::Corrupt {
                        what: WHAT,
                        reason: "posting list not strictly ascending".into(),
                    });
                }
                ids.push(id as RecordId);
                prev = id;
            }
            index.inserted.extend(ids.iter().copied());
            if index.postings.insert(key, ids).is_some() {
                return Err(Error::Corrupt {
                    what: WHAT,
                    reason: format!("duplicate key {key:#x}"),
                });
            }
        }
        if cur.pos != bytes.len() {
            return Err(Error::Corrupt {
                what: WHAT,
                reason: "trailing bytes".into(),
            });
        }
        Ok(index)
    }
}

fn write_varint(buf: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        buf.push((v as u8) | 0x80);
        v >>= 7;
    }
    buf.push(v as u8);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(Error::Corrupt {
            what: "blocking index",
            reason: "unexpected end of file".into(),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn varint(&mut self) -> Result<u64> {
        let mut out = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.take(1)?[0];
            out |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(out);
            }
        }
        Err(Error::Corrupt {
            what: "blocking index",
            reason: "varint overflow".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(r: u32, b: u32) -> BandConfig {
        BandConfig::new(r, b).unwrap()
    }

    /// The published percentages are the closed form truncated to one decimal.
    #[test]
    fn scurve_matches_published_table() {
        let table = [
            (0.5, [47.5, 43.5, 37.6]),
            (0.6, [75.0, 76.7, 76.1]),
            (0.7, [93.5, 96.3, 97.6]),
            (0.8, [99.4, 99.9, 99.9]),
        ];
        for (s, row) in table {
            for (c, want) in BandConfig::PRESETS.iter().zip(row) {
                let got = scurve_probability(s, *c).unwrap() * 100.0;
                let shown = percent_one_decimal(got / 100.0);
                assert!((shown - want).abs() <= 0.05, "{c} at {s}: {got} vs {want}");
                assert!(got >= want && got - want < 0.1);
            }
        }
        assert_eq!(scurve_probability(1.0, cfg(6, 30)).unwrap(), 1.0);
        assert_eq!(scurve_probability(0.0, cfg(6, 30)).unwrap(), 0.0);
        assert!(matches!(
            scurve_probability(1.2, cfg(4, 10)),
            Err(Error::SimilarityOutOfRange(_))
        ));
    }

    #[test]
    fn choose_config() {
        let all = BandConfig::PRESETS;
        assert_eq!(choose_band_config(0.8, 0.99, &all).unwrap(), cfg(4, 10));
        assert_eq!(choose_band_config(0.8, 0.999, &all).unwrap(), cfg(5, 18));
        assert!(matches!(
            choose_band_config(0.9, 1.0, &[cfg(4, 10)]),
            Err(Error::NoFeasibleConfig { .. })
        ));
    }

    #[test]
    fn parse_band_config() {
        assert_eq!("5/18".parse::<BandConfig>().unwrap(), cfg(5, 18));
        assert!("0/18".parse::<BandConfig>().is_err());
        assert!("518".parse::<BandConfig>().is_err());
        assert_eq!(BandConfig::default().to_string(), "6/30");
    }

    #[test]
    fn hash_family_is_reproducible_and_distinct() {
        let a = HashFamily::new(42, 1 << 16);
        assert_eq!(a, HashFamily::new(42, 1 << 16));
        assert_ne!(a, HashFamily::new(43, 1 << 16));
        let distinct: std::collections::HashSet<_> = a.params.iter().collect();
        assert_eq!(distinct.len(), 1 << 16);
    }

    #[test]
    fn signature_basics() {
        let fam = HashFamily::new(7, 180);
        let a = minhash_signature(["ab", "bc"], &fam).unwrap();
        assert_eq!(a, minhash_signature(["bc", "ab"], &fam).unwrap());
        assert_eq!(a.len(), 180);
        let x = minhash_signature(["ab"], &fam).unwrap();
        let y = minhash_signature(["cd"], &fam).unwrap();
        assert_eq!(x.agreement(&y), 0.0);
        let empty: [&str; 0] = [];
        assert!(matches!(
            minhash_signature(empty, &fam),
            Err(Error::EmptyShingleSet)
        ));
    }

    #[test]
    fn band_keys_follow_bands() {
        let c = cfg(2, 3);
        let s1 = MinHashSignature(vec![1, 2, 3, 4, 5, 6]);
        let s2 = MinHashSignature(vec![1, 2, 9, 9, 9, 9]);
        let k1 = band_keys(&s1, c).unwrap();
        let k2 = band_keys(&s2, c).unwrap();
        assert_eq!(k1, band_keys(&s1, c).unwrap());
        assert_eq!(k1[0], k2[0]);
        assert_ne!(k1[1], k2[1]);
        assert_ne!(k1[2], k2[2]);
        // same row content in different bands gives different keys
        let same = band_keys(&MinHashSignature(vec![5, 5, 5, 5, 5, 5]), c).unwrap();
        assert_ne!(same[0], same[1]);
        // key 0 is the Murmur hash of the row bytes seeded with band 0
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        assert_eq!(k1[0], hash64(&bytes, 0));
        assert!(matches!(
            band_keys(&s1, cfg(4, 10)),
            Err(Error::SignatureLengthMismatch { .. })
        ));
    }

    #[test]
    fn index_insert_and_candidates() {
        let c = cfg(2, 3);
        let mut idx = BlockingIndex::new(c, 1);
        idx.insert(0, &[10, 11, 12]).unwrap();
        assert_eq!(idx.key_count(), 3);
        assert!([10, 11, 12].iter().all(|k| idx.postings(*k) == [0]));
        idx.insert(5, &[10, 20, 21]).unwrap();
        idx.insert(2, &[10, 20, 22]).unwrap();
        assert_eq!(idx.postings(10), &[0, 2, 5]);
        assert_eq!(idx.candidates(&[10, 20]), vec![0, 2, 5]);
        assert_eq!(idx.candidates(&[99]), Vec::<RecordId>::new());
        assert!(matches!(
            idx.insert(2, &[1, 2, 3]),
            Err(Error::DuplicateRecordId(2))
        ));
    }

    #[test]
    fn identical_names_share_all_keys() {
        let maker = KeyMaker::new(42, cfg(6, 30));
        let lex = LegalEntityLexicon::bundled();
        let a = maker.keys_for_name("Müller und Berger AG", &lex).unwrap();
        let b = maker.keys_for_name("MULLER UND BERGER", &lex).unwrap();
        assert_eq!(a, b);
        assert!(maker.keys_for_name("AG", &lex).is_none());
    }

    #[test]
    fn serialization_round_trip() {
        let maker = KeyMaker::new(9, cfg(4, 10));
        let lex = LegalEntityLexicon::bundled();
        let names = ["alpha beta", "alpha betta", "gamma", "delta epsilon", "alpha beta"];
        let build = || {
            let mut idx = BlockingIndex::new(maker.config(), maker.seed());
            for (i, n) in names.iter().enumerate() {
                idx.insert(i as u32, &maker.keys_for_name(n, &lex).unwrap()).unwrap();
            }
            idx
        };
        let a = build();
        let bytes = a.to_bytes();
        assert_eq!(bytes, build().to_bytes());
        let back = BlockingIndex::from_bytes(&bytes).unwrap();
        assert_eq!(back, a);
        assert!(BlockingIndex::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(
            BlockingIndex::from_bytes(&bad),
            Err(Error::VersionMismatch { .. })
        ));
    }

    /// Exact Jaccard by set arithmetic versus signature agreement.
    #[test]
    fn signature_agreement_estimates_jaccard() {
        let fam = HashFamily::new(42, 180);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut total_err = 0.0;
        let pairs = 200;
        for _ in 0..pairs {
            let universe: Vec<u32> = (0..rng.gen_range(10..60)).map(|_| rng.gen()).collect();
            let a: BTreeSet<u32> = universe.iter().filter(|_| rng.gen_bool(0.7)).copied().collect();
            let b: BTreeSet<u32> = universe.iter().filter(|_| rng.gen_bool(0.7)).copied().collect();
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let exact = a.intersection(&b).count() as f64 / a.union(&b).count() as f64;
            let sa = minhash_signature(a.iter().map(|v| v.to_le_bytes()), &fam).unwrap();
            let sb = minhash_signature(b.iter().map(|v| v.to_le_bytes()), &fam).unwrap();
            total_err += (sa.agreement(&sb) - exact).abs();
        }
        assert!(total_err / pairs as f64 <= 0.05);
    }

    proptest! {
        #[test]
        fn scurve_is_monotone(s1 in 0.0f64..=1.0, s2 in 0.0f64..=1.0, r in 1u32..8, b in 1u32..40) {
            let c = cfg(r, b);
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            let plo = scurve_probability(lo, c).unwrap();
            let phi = scurve_probability(hi, c).unwrap();
            prop_assert!(plo <= phi + 1e-15);
            prop_assert!((0.0..=1.0).contains(&plo));
        }

        #[test]
        fn index_lists_stay_sorted(ids in proptest::collection::btree_set(0u32..500, 1..60), seed in any::<u64>()) {
            let c = cfg(1, 3);
            let mut idx = BlockingIndex::new(c, seed);
            let mut shuffled: Vec<u32> = ids.iter().copied().collect();
            shuffled.reverse();
            for id in &shuffled {
                idx.insert(*id, &[(*id % 3) as u64, 100 + (*id % 5) as u64, 200]).unwrap();
            }
            let all = idx.postings(200);
            prop_assert_eq!(all, &ids.iter().copied().collect::<Vec<_>>()[..]);
            let back = BlockingIndex::from_bytes(&idx.to_bytes()).unwrap();
            prop_assert_eq!(back, idx);
        }
    }
}
