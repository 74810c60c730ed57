//! Deterministic synthetic benchmark data: a company register, a city
//! gazetteer, a perturbed ground-truth set, a short-name training corpus
//! and a word-frequency table.
//!
//! Everything is drawn from one seeded ChaCha stream, so a given
//! [`SynthConfig`] always produces byte-identical files.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocking::RecordId;
use crate::error::{Error, Result};
use crate::evalbench::{write_truth, Category, GroundTruthEntry};
use crate::pipeline::frequency_table_from_records;
use crate::shortname::{corpus_from_family, corpus_from_label_homepage, write_corpus, FrequencyTable, LabeledName};
use crate::store::{Address, QueryRecord, Record};
use crate::textnorm::{clean_light, strip_marks, LegalEntityLexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub seed: u64,
    pub companies: usize,
    pub synthetic_cities: usize,
    pub matched: usize,
    pub unmatched: usize,
    pub undecided: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_611,
            companies: 10_000,
            synthetic_cities: 1_000,
            matched: 360,
            unmatched: 60,
            undecided: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct City {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub country: &'static str,
    pub postal_base: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Company {
    pub name: String,
    /// Name without the legal entity type.
    pub core: String,
    pub legal: Option<String>,
    pub street: String,
    pub city: String,
    pub postal: String,
    pub country: String,
    pub sic: String,
    pub family: Option<u32>,
    pub homepage: Option<String>,
    pub label: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub cities: Vec<City>,
    pub companies: Vec<Company>,
    pub truth: Vec<GroundTruthEntry>,
    pub shortname_corpus: Vec<LabeledName>,
    pub frequencies: FrequencyTable,
}

pub const COMPANIES_FILE: &str = "companies.csv";
pub const GAZETTEER_FILE: &str = "gazetteer.tsv";
pub const TRUTH_FILE: &str = "truth.tsv";
pub const SHORTNAME_CORPUS_FILE: &str = "shortname_corpus.txt";
pub const FREQUENCIES_FILE: &str = "frequencies.tsv";

/// Real places with approximate coordinates and a postal code base.
const REAL_CITIES: &[(&str, f64, f64, &str, u32)] = &[
    ("Zürich", 47.3769, 8.5417, "CH", 8000),
    ("Bern", 46.9480, 7.4474, "CH", 3000),
    ("Basel", 47.5596, 7.5886, "CH", 4000),
    ("Genève", 46.2044, 6.1432, "CH", 1200),
    ("Lausanne", 46.5197, 6.6323, "CH", 1000),
    ("Luzern", 47.0502, 8.3093, "CH", 6000),
    ("St. Gallen", 47.4245, 9.3767, "CH", 9000),
    ("Winterthur", 47.4988, 8.7237, "CH", 8400),
    ("Lugano", 46.0037, 8.9511, "CH", 6900),
    ("Biel", 47.1368, 7.2468, "CH", 2500),
    ("Thun", 46.7580, 7.6280, "CH", 3600),
    ("Fribourg", 46.8065, 7.1620, "CH", 1700),
    ("Chur", 46.8508, 9.5320, "CH", 7000),
    ("Neuchâtel", 46.9900, 6.9293, "CH", 2000),
    ("Schaffhausen", 47.6973, 8.6349, "CH", 8200),
    ("Zug", 47.1662, 8.5155, "CH", 6300),
    ("Aarau", 47.3925, 8.0442, "CH", 5000),
    ("Sion", 46.2331, 7.3606, "CH", 1950),
    ("Baden", 47.4733, 8.3059, "CH", 5400),
    ("Olten", 47.3500, 7.9077, "CH", 4600),
    ("Solothurn", 47.2088, 7.5323, "CH", 4500),
    ("Wil", 47.4615, 9.0455, "CH", 9500),
    ("Uster", 47.3471, 8.7209, "CH", 8610),
    ("Emmen", 47.0782, 8.2731, "CH", 6020),
    ("Kriens", 47.0355, 8.2777, "CH", 6010),
    ("Yverdon", 46.7785, 6.6411, "CH", 1400),
    ("Montreux", 46.4312, 6.9107, "CH", 1820),
    ("Davos", 46.8027, 9.8360, "CH", 7270),
    ("Bellinzona", 46.1946, 9.0244, "CH", 6500),
    ("Locarno", 46.1670, 8.7943, "CH", 6600),
    ("Köniz", 46.9243, 7.4146, "CH", 3098),
    ("Frauenfeld", 47.5536, 8.8987, "CH", 8500),
    ("Kreuzlingen", 47.6458, 9.1750, "CH", 8280),
    ("Rapperswil", 47.2267, 8.8184, "CH", 8640),
    ("Wädenswil", 47.2303, 8.6717, "CH", 8820),
    ("Dübendorf", 47.3972, 8.6186, "CH", 8600),
    ("München", 48.1351, 11.5820, "DE", 80331),
    ("Berlin", 52.5200, 13.4050, "DE", 10115),
    ("Hamburg", 53.5511, 9.9937, "DE", 20095),
    ("Köln", 50.9375, 6.9603, "DE", 50667),
    ("Frankfurt", 50.1109, 8.6821, "DE", 60311),
    ("Stuttgart", 48.7758, 9.1829, "DE", 70173),
    ("Düsseldorf", 51.2277, 6.7735, "DE", 40213),
    ("Freiburg", 47.9990, 7.8421, "DE", 79098),
    ("Konstanz", 47.6603, 9.1758, "DE", 78462),
    ("Nürnberg", 49.4521, 11.0767, "DE", 90402),
    ("Leipzig", 51.3397, 12.3731, "DE", 4109),
    ("Wien", 48.2082, 16.3738, "AT", 1010),
    ("Graz", 47.0707, 15.4395, "AT", 8010),
    ("Linz", 48.3069, 14.2858, "AT", 4020),
    ("Salzburg", 47.8095, 13.0550, "AT", 5020),
    ("Innsbruck", 47.2692, 11.4041, "AT", 6020),
    ("Bregenz", 47.5031, 9.7471, "AT", 6900),
    ("Paris", 48.8566, 2.3522, "FR", 75001),
    ("Lyon", 45.7640, 4.8357, "FR", 69001),
    ("Strasbourg", 48.5734, 7.7521, "FR", 67000),
    ("Mulhouse", 47.7508, 7.3359, "FR", 68100),
    ("Annecy", 45.8992, 6.1294, "FR", 74000),
    ("Milano", 45.4642, 9.1900, "IT", 20121),
    ("Torino", 45.0703, 7.6869, "IT", 10121),
    ("Como", 45.8081, 9.0852, "IT", 22100),
    ("London", 51.5074, -0.1278, "GB", 0),
    ("Manchester", 53.4808, -2.2426, "GB", 0),
    ("Vaduz", 47.1410, 9.5209, "LI", 9490),
];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ra", "ten", "vor", "sel", "ex", "zu", "mu", "an", "ber", "dor", "fi", "gal", "hel",
    "in", "jo", "kul", "lin", "mar", "nor", "ost", "pra", "quin", "ros", "sun", "tar", "ul", "ven", "wal",
    "xa", "yo", "zen", "bri", "cor", "del", "fen", "gri", "hor", "ik", "lum", "nex", "ori", "pol", "sto",
    "tri", "vex", "kra", "mel",
];

const PLACE_SUFFIXES: &[&str] = &["dorf", "ingen", "bach", "wil", "berg", "hausen", "au", "feld", "stetten", "ikon"];

const SURNAMES: &[&str] = &[
    "Müller", "Meier", "Schmid", "Keller", "Weber", "Huber", "Schneider", "Meyer", "Steiner", "Fischer",
    "Gerber", "Brunner", "Baumann", "Frei", "Zimmermann", "Moser", "Widmer", "Wyss", "Graf", "Roth",
    "Bühler", "Känzig", "Zürcher", "Lüthi", "Schär", "Gächter", "Böhlen", "Dürr", "Jäggi", "Rüegg",
    "Hübscher", "Wälti", "Blättler", "Krähenbühl", "Näf", "Lötscher", "Märki", "Stöckli", "Fäh", "Kälin",
];

/// Business words, most common first; drawn Zipf-like.
const DESCRIPTORS: &[&str] = &[
    "Bau", "Immobilien", "Consulting", "Services", "Technik", "Holding", "Transport", "Solutions",
    "Systems", "Handel", "Management", "Partner", "Logistik", "Treuhand", "Garage", "Software",
    "Engineering", "Design", "Invest", "Media", "Elektro", "Sanitär", "Gastro", "Finanz", "Energie",
    "Medical", "Pharma", "Textil", "Verwaltungs", "International", "Group", "Trading", "Capital",
    "Ventures", "Architektur", "Informatik", "Marketing", "Druck", "Reisen", "Beratung", "Sport",
    "Optik", "Café", "Bäckerei", "Metzgerei", "Schreinerei", "Malerei", "Gartenbau", "Reinigung",
    "Security", "Automation", "Robotics", "Biotech", "Dental", "Fitness", "Mode", "Schmuck", "Velo",
    "Umzüge", "Fenster", "Küchen", "Heizung", "Dach", "Holzbau", "Metallbau", "Kunststoff", "Verlag",
    "Studio", "Labor", "Recycling", "Solar", "Wasser", "Agrar", "Weine", "Blumen",
];

const STREETS: &[&str] = &[
    "Bahnhofstrasse", "Hauptstrasse", "Seestrasse", "Dorfstrasse", "Industriestrasse", "Kirchweg",
    "Schulstrasse", "Rue du Lac", "Rue de la Gare", "Via Roma", "High Street", "Marktgasse",
    "Poststrasse", "Gewerbestrasse", "Rosenweg", "Lindenstrasse", "Birkenweg", "Alte Landstrasse",
    "Rue du Marché", "Zürcherstrasse", "Bernstrasse", "Grabenstrasse",
];

const SICS: &[&str] = &[
    "1521", "1522", "1731", "2834", "2836", "3576", "3661", "4212", "4213", "4731", "5045", "5065",
    "5411", "5812", "5813", "5912", "6022", "6211", "6282", "6512", "6531", "7011", "7371", "7372",
    "7373", "7379", "7389", "7538", "7991", "8011", "8021", "8062", "8111", "8711", "8712", "8721",
    "8741", "8742",
];

fn legal_types(country: &str) -> &'static [(&'static str, u32)] {
    match country {
        "CH" => &[("AG", 40), ("GmbH", 35), ("SA", 10), ("Sàrl", 8), ("Sagl", 3), ("Genossenschaft", 2)],
        "DE" => &[("GmbH", 50), ("AG", 15), ("KG", 10), ("GmbH & Co. KG", 15), ("e.V.", 3), ("UG", 7)],
        "AT" => &[("GmbH", 60), ("AG", 20), ("KG", 10), ("OG", 0), ("Ges.m.b.H.", 10)],
        "FR" => &[("SA", 30), ("SARL", 40), ("SAS", 30)],
        "IT" => &[("S.r.l.", 60), ("S.p.A.", 40)],
        "GB" => &[("Ltd", 55), ("Limited", 20), ("plc", 10), ("LLP", 10), ("Ltd.", 5)],
        _ => &[("AG", 60), ("GmbH", 40)],
    }
}

fn tld(country: &str) -> &'static str {
    match country {
        "CH" => "ch",
        "DE" => "de",
        "AT" => "at",
        "FR" => "fr",
        "IT" => "it",
        "GB" => "co.uk",
        "LI" => "li",
        _ => "com",
    }
}

struct Gen {
    rng: ChaCha8Rng,
    descriptor_dist: WeightedIndex<f64>,
    used: HashSet<String>,
}

impl Gen {
    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        items.choose(&mut self.rng).expect("non-empty")
    }

    fn pseudo_word(&mut self, min_syl: usize, max_syl: usize) -> String {
        let n = self.rng.gen_range(min_syl..=max_syl);
        let mut w: String = (0..n).map(|_| *self.pick(SYLLABLES)).collect();
        if self.chance(0.15) {
            let vowels: Vec<usize> = w
                .char_indices()
                .filter(|(_, c)| matches!(c, 'a' | 'o' | 'u' | 'e'))
                .map(|(i, _)| i)
                .collect();
            if let Some(&i) = vowels.choose(&mut self.rng) {
                let repl = match &w[i..i + 1] {
                    "a" => "ä",
                    "o" => "ö",
                    "u" => "ü",
                    _ => "é",
                };
                w.replace_range(i..i + 1, repl);
            }
        }
        title(&w)
    }

    fn descriptor(&mut self) -> &'static str {
        DESCRIPTORS[self.descriptor_dist.sample(&mut self.rng)]
    }

    fn descriptors(&mut self, n: usize) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        while out.len() < n {
            let d = self.descriptor();
            if !out.contains(&d) {
                out.push(d);
            }
        }
        out
    }

    fn legal(&mut self, country: &str) -> Option<String> {
        if self.chance(0.1) {
            return None;
        }
        let types = legal_types(country);
        let dist = WeightedIndex::new(types.iter().map(|(_, w)| *w)).expect("positive weights");
        Some(types[dist.sample(&mut self.rng)].0.to_string())
    }

    fn other_legal(&mut self, country: &str, current: Option<&str>) -> String {
        let types: Vec<&str> = legal_types(country)
            .iter()
            .filter(|(t, w)| *w > 0 && Some(*t) != current)
            .map(|(t, _)| *t)
            .collect();
        self.pick(&types).to_string()
    }

    /// Registers a name unless its cleaned form is already taken.
    fn claim(&mut self, name: &str) -> bool {
        self.used.insert(clean_light(name).into_string())
    }
}

fn title(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn join_name(core: &str, legal: Option<&str>) -> String {
    match legal {
        Some(l) => format!("{core} {l}"),
        None => core.to_string(),
    }
}

fn make_cities(g: &mut Gen, n_synthetic: usize) -> Vec<City> {
    let mut cities: Vec<City> = REAL_CITIES
        .iter()
        .map(|&(name, lat, lon, country, postal_base)| City {
            name: name.to_string(),
            lat,
            lon,
            country,
            postal_base,
        })
        .collect();
    let mut keys: HashSet<String> = cities.iter().map(|c| strip_marks(clean_light(&c.name).as_str())).collect();
    while cities.len() < REAL_CITIES.len() + n_synthetic {
        let stem = g.pseudo_word(1, 2);
        let name = format!("{stem}{}", g.pick(PLACE_SUFFIXES));
        if !keys.insert(strip_marks(clean_light(&name).as_str())) {
            continue;
        }
        let lat = (g.rng.gen_range(45.9..47.75f64) * 1e4).round() / 1e4;
        let lon = (g.rng.gen_range(6.0..10.4f64) * 1e4).round() / 1e4;
        let postal_base = g.rng.gen_range(10..99) * 100;
        cities.push(City {
            name,
            lat,
            lon,
            country: "CH",
            postal_base,
        });
    }
    cities
}

#[derive(Clone, Copy)]
enum Template {
    Brand,
    Person,
    BrandCity,
    Acronym,
}

fn make_companies(g: &mut Gen, cities: &[City], n: usize) -> Vec<Company> {
    // larger real cities host more companies
    let city_weights: Vec<f64> = cities
        .iter()
        .enumerate()
        .map(|(i, _)| if i < REAL_CITIES.len() { 30.0 / (1.0 + i as f64).sqrt() } else { 1.0 })
        .collect();
    let city_dist = WeightedIndex::new(&city_weights).expect("positive weights");
    let mut out: Vec<Company> = Vec::with_capacity(n);
    let mut family_id = 0u32;

    let place = |g: &mut Gen| -> (String, String, String, String) {
        let c = &cities[city_dist.sample(&mut g.rng)];
        let street = format!("{} {}", g.pick(STREETS), g.rng.gen_range(1..200));
        let postal = if c.postal_base == 0 {
            format!("EC{}A {}AB", g.rng.gen_range(1..5), g.rng.gen_range(1..9))
        } else {
            (c.postal_base + g.rng.gen_range(0..40)).to_string()
        };
        (street, c.name.clone(), postal, c.country.to_string())
    };

    while out.len() < n {
        if g.chance(0.25) {
            // a family of companies sharing a brand
            let brand_tokens = if g.chance(0.2) { 2 } else { 1 };
            let brand: Vec<String> = (0..brand_tokens).map(|_| g.pseudo_word(2, 3)).collect();
            let brand = brand.join(" ");
            let members = g.rng.gen_range(2..=4).min(n - out.len()).max(1);
            let shared = g.chance(0.2).then(|| g.descriptor());
            let mut made = 0;
            let mut attempts = 0;
            while made < members && attempts < 20 {
                attempts += 1;
                let (street, city, postal, country) = place(g);
                let mut words = vec![brand.clone()];
                words.extend(shared.map(str::to_string));
                let extra = g.rng.gen_range(1..=2);
                words.extend(g.descriptors(extra).into_iter().filter(|d| Some(*d) != shared).map(str::to_string));
                let core = words.join(" ");
                let legal = g.legal(&country);
                let name = join_name(&core, legal.as_deref());
                if !g.claim(&name) {
                    continue;
                }
                out.push(Company {
                    name,
                    core,
                    legal,
                    street,
                    city,
                    postal,
                    country,
                    sic: g.pick(SICS).to_string(),
                    family: Some(family_id),
                    homepage: None,
                    label: None,
                });
                made += 1;
            }
            family_id += 1;
            continue;
        }

        let template = match g.rng.gen_range(0..100) {
            0..=54 => Template::Brand,
            55..=79 => Template::Person,
            80..=89 => Template::BrandCity,
            _ => Template::Acronym,
        };
        let (street, city, postal, country) = place(g);
        let mut brand = None;
        let core = match template {
            Template::Brand => {
                let b = g.pseudo_word(2, 3);
                brand = Some(b.clone());
                let n = g.rng.gen_range(0..=2);
                std::iter::once(b).chain(g.descriptors(n).into_iter().map(str::to_string)).collect::<Vec<_>>().join(" ")
            }
            Template::Person => {
                let a = g.pick(SURNAMES).to_string();
                let mut parts = vec![a];
                if g.chance(0.3) {
                    parts.push(if g.chance(0.5) { "&".into() } else { "und".into() });
                    parts.push(g.pick(SURNAMES).to_string());
                }
                let n = g.rng.gen_range(1..=2);
                parts.extend(g.descriptors(n).into_iter().map(str::to_string));
                parts.join(" ")
            }
            Template::BrandCity => {
                let b = g.pseudo_word(2, 3);
                brand = Some(b.clone());
                format!("{b} {} {city}", g.descriptor())
            }
            Template::Acronym => {
                let len = g.rng.gen_range(2..=4);
                let acr: String = (0..len).map(|_| (b'A' + g.rng.gen_range(0..26u8)) as char).collect();
                let n = g.rng.gen_range(1..=2);
                std::iter::once(acr).chain(g.descriptors(n).into_iter().map(str::to_string)).collect::<Vec<_>>().join(" ")
            }
        };
        let core = if g.chance(0.06) { core.to_uppercase() } else { core };
        let legal = g.legal(&country);
        let name = join_name(&core, legal.as_deref());
        if !g.claim(&name) {
            continue;
        }
        let (homepage, label) = match &brand {
            Some(b) if g.chance(0.3) => {
                let word = strip_marks(&clean_light(b).into_string()).replace(' ', "");
                (Some(format!("http://www.{word}.{}/", tld(&country))), None)
            }
            Some(b) if g.chance(0.1) => (None, Some(b.clone())),
            _ => (None, None),
        };
        out.push(Company {
            name,
            core,
            legal,
            street,
            city,
            postal,
            country,
            sic: g.pick(SICS).to_string(),
            family: None,
            homepage,
            label,
        });
    }
    out.truncate(n);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Perturbation {
    Exact,
    Case,
    Diacritic,
    LegalRemove,
    LegalSwap,
    Permutation,
    CitySuffix,
    Typo,
    Combo,
}

impl Perturbation {
    const WEIGHTED: [(Perturbation, u32); 9] = [
        (Perturbation::Exact, 8),
        (Perturbation::Case, 12),
        (Perturbation::Diacritic, 14),
        (Perturbation::LegalRemove, 10),
        (Perturbation::LegalSwap, 10),
        (Perturbation::Permutation, 8),
        (Perturbation::CitySuffix, 10),
        (Perturbation::Typo, 14),
        (Perturbation::Combo, 14),
    ];

    fn as_str(self) -> &'static str {
        match self {
            Perturbation::Exact => "exact",
            Perturbation::Case => "case",
            Perturbation::Diacritic => "diacritic",
            Perturbation::LegalRemove => "legal-remove",
            Perturbation::LegalSwap => "legal-swap",
            Perturbation::Permutation => "permutation",
            Perturbation::CitySuffix => "city-suffix",
            Perturbation::Typo => "typo",
            Perturbation::Combo => "combo",
        }
    }
}

fn has_marks(s: &str) -> bool {
    !s.is_ascii()
}

/// Removes diacritics, sometimes with German transliteration (ü → ue).
fn drop_diacritics(g: &mut Gen, s: &str) -> String {
    if g.chance(0.3) {
        s.replace('ü', "ue").replace('ö', "oe").replace('ä', "ae").replace('Ü', "Ue").replace('Ö', "Oe").replace('Ä', "Ae")
    } else {
        use unicode_normalization::UnicodeNormalization;
        s.nfd().filter(|c| c.is_ascii()).collect()
    }
}

/// One edit inside a random word of four or more letters.
fn typo(g: &mut Gen, core: &str) -> String {
    let mut words: Vec<Vec<char>> = core.split(' ').map(|w| w.chars().collect()).collect();
    let eligible: Vec<usize> = (0..words.len()).filter(|&i| words[i].len() >= 4).collect();
    let Some(&wi) = eligible.choose(&mut g.rng) else {
        return format!("{core}x");
    };
    let w = &mut words[wi];
    let pos = g.rng.gen_range(1..w.len() - 1);
    let letter = (b'a' + g.rng.gen_range(0..26u8)) as char;
    match g.rng.gen_range(0..4) {
        0 => w[pos] = if w[pos] == letter { 'x' } else { letter },
        1 => {
            w.remove(pos);
        }
        2 => w.insert(pos, letter),
        _ => w.swap(pos, pos + 1),
    }
    words.iter().map(|w| w.iter().collect::<String>()).collect::<Vec<_>>().join(" ")
}

fn permute(g: &mut Gen, core: &str) -> Option<String> {
    let mut words: Vec<&str> = core.split(' ').filter(|w| *w != "&" && *w != "und").collect();
    if words.len() < 2 {
        return None;
    }
    let i = g.rng.gen_range(0..words.len() - 1);
    words.swap(i, i + 1);
    Some(words.join(" "))
}

fn change_legal(g: &mut Gen, c: &Company, remove: bool) -> String {
    if remove && c.legal.is_some() {
        c.core.clone()
    } else {
        let l = g.other_legal(&c.country, c.legal.as_deref());
        format!("{} {l}", c.core)
    }
}

fn query_for(g: &mut Gen, c: &Company, name: String, need_city: bool) -> QueryRecord {
    let mut q = QueryRecord::named(name);
    let mut a = Address::default();
    if need_city || g.chance(0.5) {
        a.city = Some(c.city.clone());
    }
    if g.chance(0.3) {
        a.country = Some(c.country.clone());
    }
    if g.chance(0.1) {
        a.street = Some(c.street.clone());
        a.postal = Some(c.postal.clone());
    }
    if !a.is_empty() {
        q.addresses.push(a);
    }
    if g.chance(0.15) {
        q.sics.push(c.sic.clone());
    }
    q
}

fn perturb(g: &mut Gen, c: &Company, kind: Perturbation) -> (String, Perturbation) {
    let name = match kind {
        Perturbation::Exact => c.name.clone(),
        Perturbation::Case => {
            if g.chance(0.5) {
                c.name.to_uppercase()
            } else {
                c.name.to_lowercase()
            }
        }
        Perturbation::Diacritic if has_marks(&c.name) => drop_diacritics(g, &c.name),
        Perturbation::Diacritic => return perturb(g, c, Perturbation::Typo),
        Perturbation::LegalRemove => change_legal(g, c, true),
        Perturbation::LegalSwap => change_legal(g, c, false),
        Perturbation::Permutation => match permute(g, &c.core) {
            Some(core) => join_name(&core, c.legal.as_deref()),
            None => return perturb(g, c, Perturbation::LegalSwap),
        },
        Perturbation::CitySuffix => {
            let core = format!("{} {}", c.core, c.city);
            if g.chance(0.5) {
                core
            } else {
                join_name(&core, c.legal.as_deref())
            }
        }
        Perturbation::Typo => join_name(&typo(g, &c.core), c.legal.as_deref()),
        Perturbation::Combo => {
            let core = if has_marks(&c.core) && g.chance(0.6) {
                drop_diacritics(g, &c.core)
            } else {
                typo(g, &c.core)
            };
            let remove = g.chance(0.5) && c.legal.is_some();
            if remove {
                core
            } else {
                format!("{core} {}", g.other_legal(&c.country, c.legal.as_deref()))
            }
        }
    };
    (name, kind)
}

fn make_truth(g: &mut Gen, companies: &[Company], cfg: &SynthConfig) -> Vec<GroundTruthEntry> {
    let mut ids: Vec<usize> = (0..companies.len()).collect();
    ids.shuffle(&mut g.rng);
    let mut ids = ids.into_iter();
    let dist = WeightedIndex::new(Perturbation::WEIGHTED.iter().map(|(_, w)| *w)).expect("weights");
    let with_marks: Vec<usize> = (0..companies.len()).filter(|&i| has_marks(&companies[i].name)).collect();
    let mut taken: HashSet<usize> = HashSet::new();
    let mut entries = Vec::new();

    while entries.len() < cfg.matched {
        let kind = Perturbation::WEIGHTED[dist.sample(&mut g.rng)].0;
        let id = if matches!(kind, Perturbation::Diacritic) {
            *with_marks.choose(&mut g.rng).expect("corpus has diacritics")
        } else {
            ids.next().expect("enough companies")
        };
        if !taken.insert(id) {
            continue;
        }
        let c = &companies[id];
        let (name, kind) = perturb(g, c, kind);
        let q = query_for(g, c, name, kind == Perturbation::CitySuffix);
        entries.push(GroundTruthEntry {
            query: q,
            category: Category::Matched(vec![id as RecordId]),
            note: kind.as_str().to_string(),
        });
    }

    let mut unmatched = 0;
    while unmatched < cfg.unmatched {
        let brand = g.pseudo_word(2, 3);
        let n = g.rng.gen_range(1..=2);
        let core = std::iter::once(brand).chain(g.descriptors(n).into_iter().map(str::to_string)).collect::<Vec<_>>().join(" ");
        let country = "CH";
        let legal = g.legal(country);
        let name = join_name(&core, legal.as_deref());
        if !g.claim(&name) {
            continue;
        }
        let mut q = QueryRecord::named(name);
        if g.chance(0.5) {
            let city = companies[g.rng.gen_range(0..companies.len())].city.clone();
            q.addresses.push(Address {
                city: Some(city),
                ..Address::default()
            });
        }
        entries.push(GroundTruthEntry {
            query: q,
            category: Category::Unmatched,
            note: "distractor".into(),
        });
        unmatched += 1;
    }

    let mut undecided = 0;
    while undecided < cfg.undecided {
        let id = ids.next().expect("enough companies");
        if !taken.insert(id) {
            continue;
        }
        let c = &companies[id];
        // heavy rewrite: a typo plus a dropped or swapped word and a new legal type
        let mut core = typo(g, &c.core);
        let words: Vec<&str> = core.split(' ').collect();
        if words.len() > 2 {
            core = words[..words.len() - 1].join(" ");
        } else {
            core = format!("{core} {}", g.descriptor());
        }
        let name = format!("{core} {}", g.other_legal(&c.country, c.legal.as_deref()));
        let q = query_for(g, c, name, false);
        entries.push(GroundTruthEntry {
            query: q,
            category: Category::Undecided(vec![id as RecordId]),
            note: "rewrite".into(),
        });
        undecided += 1;
    }
    entries
}

fn make_shortname_corpus(companies: &[Company], lex: &LegalEntityLexicon) -> Vec<LabeledName> {
    let mut families: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
    let mut corpus = Vec::new();
    for c in companies {
        if let Some(f) = c.family {
            families.entry(f).or_default().push(&c.name);
        } else if c.homepage.is_some() || c.label.is_some() {
            corpus.extend(corpus_from_label_homepage(&c.name, c.label.as_deref(), c.homepage.as_deref(), lex));
        }
    }
    for names in families.values() {
        corpus.extend(corpus_from_family(names, lex));
    }
    corpus
}

pub fn to_records(companies: &[Company]) -> Result<Vec<Record>> {
    companies
        .iter()
        .enumerate()
        .map(|(i, c)| {
            Ok(Record::new(i as RecordId, &c.name)?
                .with_street(Some(&c.street))
                .with_city(Some(&c.city))
                .with_postal(Some(&c.postal))
                .with_country(Some(&c.country))
                .with_sic(Some(&c.sic)))
        })
        .collect()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    if cfg.companies < cfg.matched + cfg.undecided {
        return Err(Error::Config("need more companies than truth entries".into()));
    }
    let weights: Vec<f64> = (0..DESCRIPTORS.len()).map(|k| 1.0 / (k as f64 + 1.0).powf(1.1)).collect();
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        descriptor_dist: WeightedIndex::new(weights).expect("weights"),
        used: HashSet::new(),
    };
    let cities = make_cities(&mut g, cfg.synthetic_cities);
    let companies = make_companies(&mut g, &cities, cfg.companies);
    let truth = make_truth(&mut g, &companies, cfg);
    let lex = LegalEntityLexicon::bundled();
    let shortname_corpus = make_shortname_corpus(&companies, &lex);
    let frequencies = frequency_table_from_records(&to_records(&companies)?);
    Ok(SynthData {
        cities,
        companies,
        truth,
        shortname_corpus,
        frequencies,
    })
}

impl SynthData {
    pub fn companies_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["name", "street", "city", "postal", "country", "sic"])?;
        for c in &self.companies {
            w.write_record([&c.name, &c.street, &c.city, &c.postal, &c.country, &c.sic])?;
        }
        w.into_inner().map_err(|e| Error::io("<companies>", e.into_error()))
    }

    pub fn gazetteer_tsv(&self) -> Vec<u8> {
        let mut s = String::from("# name\tlat\tlon\n");
        for c in &self.cities {
            let _ = writeln!(s, "{}\t{:.4}\t{:.4}", c.name, c.lat, c.lon);
        }
        s.into_bytes()
    }

    pub fn truth_tsv(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_truth(&self.truth, &mut buf)?;
        Ok(buf)
    }

    pub fn shortname_corpus_txt(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_corpus(&self.shortname_corpus, &mut buf).expect("in-memory write");
        buf
    }

    pub fn frequencies_tsv(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.frequencies.write_to(&mut buf).expect("in-memory write");
        buf
    }

    /// File name → contents for every generated file.
    pub fn files(&self) -> Result<Vec<(&'static str, Vec<u8>)>> {
        Ok(vec![
            (COMPANIES_FILE, self.companies_csv()?),
            (GAZETTEER_FILE, self.gazetteer_tsv()),
            (TRUTH_FILE, self.truth_tsv()?),
            (SHORTNAME_CORPUS_FILE, self.shortname_corpus_txt()),
            (FREQUENCIES_FILE, self.frequencies_tsv()),
        ])
    }

    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, bytes) in self.files()? {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            companies: 600,
            synthetic_cities: 50,
            matched: 40,
            unmatched: 10,
            undecided: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap().files().unwrap();
        let b = generate(&small()).unwrap().files().unwrap();
        assert_eq!(a, b);
        let other = generate(&SynthConfig { seed: 1, ..small() }).unwrap().files().unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn shapes() {
        let d = generate(&small()).unwrap();
        assert_eq!(d.companies.len(), 600);
        assert_eq!(d.cities.len(), REAL_CITIES.len() + 50);
        assert_eq!(d.truth.len(), 55);
        let names: HashSet<String> = d.companies.iter().map(|c| c.name.to_lowercase()).collect();
        assert_eq!(names.len(), 600, "names must be unique case-insensitively");
        assert!(!d.shortname_corpus.is_empty());
        for e in &d.truth {
            if let Category::Matched(ids) = &e.category {
                assert!(ids.iter().all(|&i| (i as usize) < d.companies.len()));
            }
        }
    }

    #[test]
    fn typo_changes_one_word() {
        let mut g = Gen {
            rng: ChaCha8Rng::seed_from_u64(3),
            descriptor_dist: WeightedIndex::new([1.0]).unwrap(),
            used: HashSet::new(),
        };
        for _ in 0..50 {
            let t = typo(&mut g, "Kalora Immobilien");
            let changed = t.split(' ').zip("Kalora Immobilien".split(' ')).filter(|(a, b)| a != b).count();
            assert!(changed <= 1, "{t}");
        }
    }
}
