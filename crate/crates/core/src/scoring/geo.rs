//! City gazetteer trie, Haversine distance and the city scorer.

use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scoring::strings::lev_score_str;
use crate::textnorm::{clean_light, strip_marks};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coord {
    pub lat: f64,
    pub lon: f64,
}

impl Coord {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::CoordinateOutOfRange { lat, lon });
        }
        Ok(Self { lat, lon })
    }
}

pub fn haversine_km(a: Coord, b: Coord) -> Result<f64> {
    Coord::new(a.lat, a.lon)?;
    Coord::new(b.lat, b.lon)?;
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin())
}

/// Normalized lookup key for a city name: light-cleaned, marks removed.
pub fn city_key(name: &str) -> String {
    strip_marks(clean_light(name).as_str())
}

#[derive(Debug, Clone, Default)]
struct Node {
    children: Vec<(char, u32)>,
    value: Option<Coord>,
}

/// Character trie over normalized city names.
#[derive(Debug, Clone)]
pub struct CityTrie {
    nodes: Vec<Node>,
    len: usize,
}

impl Default for CityTrie {
    fn default() -> Self {
        Self {
            nodes: vec![Node::default()],
            len: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GazetteerStats {
    pub rows: u64,
    pub inserted: u64,
    pub duplicates: u64,
    pub malformed: u64,
}

impl CityTrie {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Inserts under the normalized key; returns false (and keeps the first
    /// coordinates) when the name is already present.
    pub fn insert(&mut self, name: &str, coord: Coord) -> bool {
        let key = city_key(name);
        if key.is_empty() {
            return false;
        }
        let mut node = 0usize;
        for c in key.chars() {
            node = match self.nodes[node].children.binary_search_by_key(&c, |(ch, _)| *ch) {
                Ok(pos) => self.nodes[node].children[pos].1 as usize,
                Err(pos) => {
                    let id = self.nodes.len() as u32;
                    self.nodes.push(Node::default());
                    self.nodes[node].children.insert(pos, (c, id));
                    id as usize
                }
            };
        }
        if self.nodes[node].value.is_some() {
            return false;
        }
        self.nodes[node].value = Some(coord);
        self.len += 1;
        true
    }

    /// Exact lookup of an already normalized key.
    pub fn get_key(&self, key: &str) -> Option<Coord> {
        let mut node = 0usize;
        for c in key.chars() {
            let children = &self.nodes[node].children;
            let pos = children.binary_search_by_key(&c, |(ch, _)| *ch).ok()?;
            node = children[pos].1 as usize;
        }
        self.nodes[node].value
    }

    pub fn lookup(&self, name: &str) -> Option<Coord> {
        let key = city_key(name);
        if key.is_empty() {
            return None;
        }
        self.get_key(&key)
    }

    /// Reads `name<TAB>lat<TAB>lon` rows; `#` lines and blank lines are ignored.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<(Self, GazetteerStats)> {
        let mut trie = Self::new();
        let mut stats = GazetteerStats::default();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<gazetteer>", e))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            stats.rows += 1;
            match parse_row(&line, n as u64 + 1) {
                Ok((name, coord)) => {
                    if trie.insert(name, coord) {
                        stats.inserted += 1;
                    } else {
                        stats.duplicates += 1;
                    }
                }
                Err(e) => {
                    log::debug!("{e}");
                    stats.malformed += 1;
                }
            }
        }
        if stats.duplicates > 0 {
            log::info!("gazetteer: {} duplicate names kept first entry", stats.duplicates);
        }
        Ok((trie, stats))
    }

    pub fn from_file(path: &Path) -> Result<(Self, GazetteerStats)> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(std::io::BufReader::new(file))
    }
}

fn parse_row(line: &str, row: u64) -> Result<(&str, Coord)> {
    let bad = |reason: &str| Error::MalformedGazetteerRow {
        row,
        reason: reason.to_string(),
    };
    let mut parts = line.split('\t');
    let name = parts.next().map(str::trim).filter(|s| !s.is_empty());
    let name = name.ok_or_else(|| bad("missing name"))?;
    let mut num = || -> Result<f64> {
        parts
            .next()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| bad("bad coordinate"))
    };
    let (lat, lon) = (num()?, num()?);
    let coord = Coord::new(lat, lon).map_err(|_| bad("coordinate out of range"))?;
    Ok((name, coord))
}

/// `build_city_trie` over a gazetteer file.
pub fn build_city_trie(path: &Path) -> Result<(CityTrie, GazetteerStats)> {
    CityTrie::from_file(path)
}

/// `exp(-d / tau)` when both cities resolve, otherwise the Levenshtein
/// score of the names. `None` when either side is empty.
pub fn city_score(q_city: &str, r_city: &str, trie: Option<&CityTrie>, tau_km: f64) -> Option<f64> {
    let (qk, rk) = (city_key(q_city), city_key(r_city));
    if qk.is_empty() || rk.is_empty() {
        return None;
    }
    if let Some(trie) = trie {
        if let (Some(a), Some(b)) = (trie.get_key(&qk), trie.get_key(&rk)) {
            let d = haversine_km(a, b).unwrap_or(f64::INFINITY);
            return Some((-d / tau_km).exp());
        }
    }
    lev_score_str(clean_light(q_city).as_str(), clean_light(r_city).as_str()).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ZURICH: Coord = Coord { lat: 47.3769, lon: 8.5417 };
    const BERN: Coord = Coord { lat: 46.9480, lon: 7.4474 };

    /// Spherical law of cosines, an independent great-circle formula.
    fn cosine_law_km(a: Coord, b: Coord) -> f64 {
        let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
        let dl = (b.lon - a.lon).to_radians();
        let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
        EARTH_RADIUS_KM * c.clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn haversine_examples() {
        assert_eq!(haversine_km(ZURICH, ZURICH).unwrap(), 0.0);
        let anti = haversine_km(Coord::new(0.0, 0.0).unwrap(), Coord::new(0.0, 180.0).unwrap());
        assert!((anti.unwrap() - std::f64::consts::PI * EARTH_RADIUS_KM).abs() < 1e-6);
        let zb = haversine_km(ZURICH, BERN).unwrap();
        assert!((zb - cosine_law_km(ZURICH, BERN)).abs() < 1e-6);
        assert!((zb - 95.0).abs() <= 1.0, "{zb}");
        assert!(matches!(
            haversine_km(Coord { lat: 91.0, lon: 0.0 }, ZURICH),
            Err(Error::CoordinateOutOfRange { .. })
        ));
    }

    #[test]
    fn trie_lookup_and_duplicates() {
        let (trie, stats) = CityTrie::from_reader(
            "# name lat lon\nZürich\t47.3769\t8.5417\nBern\t46.9480\t7.4474\nzurich\t0\t0\nbroken\tx\t1\nfar\t95\t0\n"
                .as_bytes(),
        )
        .unwrap();
        assert_eq!(stats, GazetteerStats { rows: 5, inserted: 2, duplicates: 1, malformed: 2 });
        assert_eq!(trie.len(), 2);
        assert_eq!(trie.lookup("ZURICH"), Some(ZURICH));
        assert_eq!(trie.lookup("Zürich"), Some(ZURICH));
        assert_eq!(trie.lookup("Zur"), None);
        assert_eq!(trie.lookup("Genève"), None);
    }

    #[test]
    fn city_scores() {
        let mut trie = CityTrie::new();
        trie.insert("Zürich", ZURICH);
        trie.insert("Bern", BERN);
        trie.insert("Tau Town", Coord::new(47.3769 + 30.0 / 111.194_926_644_558_7, 8.5417).unwrap());
        assert_eq!(city_score("Zurich", "zürich", Some(&trie), 30.0), Some(1.0));
        let tau = city_score("Zurich", "Tau Town", Some(&trie), 30.0).unwrap();
        assert!((tau - (-1.0f64).exp()).abs() < 1e-6, "{tau}");
        assert_eq!(city_score("Atlantis", "atlantis", Some(&trie), 30.0), Some(1.0));
        assert_eq!(city_score("Atlantis", "atlantis", None, 30.0), Some(1.0));
        assert_eq!(city_score("", "atlantis", None, 30.0), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn trie_round_trip(names in proptest::collection::vec("[a-zé]{1,8}( [a-z]{1,6})?", 1..30)) {
            let mut trie = CityTrie::new();
            let mut first = std::collections::HashMap::new();
            for (i, n) in names.iter().enumerate() {
                let c = Coord::new((i as f64) % 90.0, (i as f64) % 180.0).unwrap();
                trie.insert(n, c);
                first.entry(city_key(n)).or_insert(c);
            }
            prop_assert_eq!(trie.len(), first.len());
            for (k, c) in &first {
                prop_assert_eq!(trie.get_key(k), Some(*c));
            }
        }

        #[test]
        fn city_decay_strictly_decreases(d1 in 0.0f64..500.0, d2 in 0.0f64..500.0) {
            prop_assume!((d1 - d2).abs() > 1e-3);
            let origin = Coord::new(0.0, 0.0).unwrap();
            let deg = |d: f64| d / (EARTH_RADIUS_KM * std::f64::consts::PI / 180.0);
            let mut trie = CityTrie::new();
            trie.insert("origin", origin);
            trie.insert("aaa", Coord::new(deg(d1), 0.0).unwrap());
            trie.insert("bbb", Coord::new(deg(d2), 0.0).unwrap());
            let s1 = city_score("origin", "aaa", Some(&trie), 30.0).unwrap();
            let s2 = city_score("origin", "bbb", Some(&trie), 30.0).unwrap();
            prop_assert!(s1 > 0.0 && s2 > 0.0 && s1 <= 1.0);
            prop_assert_eq!(d1 < d2, s1 > s2);
        }
    }
}
