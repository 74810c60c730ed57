use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::shortname::features::{tokenize, Token};
use crate::shortname::Label;
use crate::textnorm::{clean_light, strip_marks, LegalEntityLexicon};

/// A tokenized company name with one label per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledName {
    /// Light-cleaned tokens.
    pub tokens: Vec<String>,
    /// Surface forms, same length as `tokens`.
    pub raw: Vec<String>,
    pub labels: Vec<Label>,
}

impl LabeledName {
    pub fn new(tokens: Vec<Token>, labels: Vec<Label>) -> Result<Self> {
        if tokens.is_empty() || tokens.len() != labels.len() {
            return Err(Error::InvalidRecord(format!(
                "{} tokens with {} labels",
                tokens.len(),
                labels.len()
            )));
        }
        let (tokens, raw) = tokens.into_iter().map(|t| (t.clean, t.raw)).unzip();
        Ok(Self { tokens, raw, labels })
    }

    /// Builds from surface tokens; each must clean to exactly one token.
    pub fn from_pairs(pairs: &[(&str, Label)]) -> Result<Self> {
        let mut tokens = Vec::with_capacity(pairs.len());
        for (raw, _) in pairs {
            let clean = clean_light(raw);
            match clean.tokens().as_slice() {
                [one] => tokens.push(Token {
                    clean: one.to_string(),
                    raw: raw.to_string(),
                }),
                _ => {
                    return Err(Error::InvalidRecord(format!(
                        "{raw:?} is not a single token"
                    )))
                }
            }
        }
        Self::new(tokens, pairs.iter().map(|(_, l)| *l).collect())
    }

    pub fn token_list(&self) -> Vec<Token> {
        self.tokens
            .iter()
            .zip(&self.raw)
            .map(|(c, r)| Token {
                clean: c.clone(),
                raw: r.clone(),
            })
            .collect()
    }

    /// IN tokens joined by spaces.
    pub fn short_name(&self) -> String {
        self.tokens
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == Label::In)
            .map(|(t, _)| t.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn has_in(&self) -> bool {
        self.labels.contains(&Label::In)
    }

    /// `token/LABEL` pairs separated by spaces.
    pub fn to_line(&self) -> String {
        self.raw
            .iter()
            .zip(&self.labels)
            .map(|(t, l)| format!("{t}/{l}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for item in line.split_whitespace() {
            let (tok, label) = item.rsplit_once('/').ok_or_else(|| Error::Corrupt {
                what: "short-name corpus",
                reason: format!("missing label in {item:?}"),
            })?;
            pairs.push((tok, label.parse::<Label>()?));
        }
        Self::from_pairs(&pairs)
    }
}

pub fn write_corpus<W: Write>(corpus: &[LabeledName], mut w: W) -> std::io::Result<()> {
    for ex in corpus {
        writeln!(w, "{}", ex.to_line())?;
    }
    Ok(())
}

/// Reads one example per non-blank line.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<LabeledName>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<short-name corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(LabeledName::parse_line(&line).map_err(|e| Error::MalformedRow {
            row: n as u64 + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Shuffles with `seed` and splits into (train, test), the first part
/// holding `train_fraction` of the examples rounded down.
pub fn split_corpus(corpus: &[LabeledName], train_fraction: f64, seed: u64) -> Result<(Vec<LabeledName>, Vec<LabeledName>)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Config(format!("train fraction {train_fraction} outside [0, 1]")));
    }
    let mut shuffled = corpus.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = shuffled.split_off((corpus.len() as f64 * train_fraction) as usize);
    Ok((shuffled, test))
}

/// Two-level public suffixes under country domains, e.g. `co.uk`.
const SECOND_LEVEL: &[&str] = &["co", "com", "org", "net", "ac", "gov", "ltd", "plc", "or", "ne"];

/// The distinctive label of a homepage host: `http://www.cessna.com/` gives
/// `cessna`, `shop.example.co.uk` gives `example`.
pub fn registrable_domain_word(url: &str) -> Option<String> {
    let rest = url.trim();
    let rest = rest.split_once("://").map_or(rest, |(_, r)| r);
    let host = rest.split(['/', '?', '#']).next()?;
    let host = host.rsplit_once('@').map_or(host, |(_, h)| h);
    let host = host.split(':').next()?.trim_end_matches('.').to_lowercase();
    let mut labels: Vec<&str> = host.split('.').filter(|l| !l.is_empty()).collect();
    if labels.len() < 2 {
        return None;
    }
    labels.pop();
    if labels.len() >= 2
        && host.rsplit('.').next().is_some_and(|tld| tld.len() == 2)
        && SECOND_LEVEL.contains(labels.last()?)
    {
        labels.pop();
    }
    let word = labels.pop()?;
    (word != "www").then(|| word.to_string())
}

/// Leftmost in-order match of `needle` inside `hay`.
fn subsequence_positions(hay: &[&str], needle: &[&str]) -> Option<Vec<usize>> {
    let mut positions = Vec::with_capacity(needle.len());
    let mut from = 0;
    for n in needle {
        let pos = (from..hay.len()).find(|&i| hay[i] == *n)?;
        positions.push(pos);
        from = pos + 1;
    }
    Some(positions)
}

fn labeled(tokens: Vec<Token>, inside: &[bool], lex: &LegalEntityLexicon) -> Option<LabeledName> {
    let legal = lex.token_mask(&tokens.iter().map(|t| t.clean.as_str()).collect::<Vec<_>>());
    let labels: Vec<Label> = inside
        .iter()
        .zip(&legal)
        .map(|(i, l)| if *i && !*l { Label::In } else { Label::Out })
        .collect();
    LabeledName::new(tokens, labels).ok().filter(LabeledName::has_in)
}

/// Training pairs from a company's label or homepage.
///
/// A label whose tokens appear in order inside the name marks those tokens;
/// otherwise a run of name tokens that spells the homepage's domain word is
/// marked. Legal entity tokens are always OUT. With a label, a second pair
/// maps the label onto itself.
pub fn corpus_from_label_homepage(
    name: &str,
    label: Option<&str>,
    homepage: Option<&str>,
    lex: &LegalEntityLexicon,
) -> Vec<LabeledName> {
    let tokens = tokenize(name);
    if tokens.is_empty() {
        return Vec::new();
    }
    let clean: Vec<&str> = tokens.iter().map(|t| t.clean.as_str()).collect();
    let mut out = Vec::new();

    if let Some(label) = label {
        let label_tokens = tokenize(label);
        let needle: Vec<&str> = label_tokens.iter().map(|t| t.clean.as_str()).collect();
        if !needle.is_empty() {
            if let Some(pos) = subsequence_positions(&clean, &needle) {
                let mut inside = vec![false; tokens.len()];
                pos.into_iter().for_each(|p| inside[p] = true);
                if let Some(ex) = labeled(tokens.clone(), &inside, lex) {
                    out.push(ex);
                    let all = vec![true; label_tokens.len()];
                    out.extend(labeled(label_tokens, &all, lex));
                    return out;
                }
            }
        }
    }

    if let Some(word) = homepage.and_then(registrable_domain_word) {
        let word = strip_marks(&word).replace('-', "");
        let bare: Vec<String> = clean.iter().map(|t| strip_marks(t)).collect();
        for start in 0..bare.len() {
            let mut joined = String::new();
            for end in start..bare.len() {
                joined.push_str(&bare[end]);
                if joined.len() > word.len() {
                    break;
                }
                if joined == word {
                    let inside: Vec<bool> = (0..tokens.len()).map(|i| (start..=end).contains(&i)).collect();
                    out.extend(labeled(tokens, &inside, lex));
                    return out;
                }
            }
        }
    }
    out
}

/// Marks the tokens shared by every member of a company family.
pub fn corpus_from_family<S: AsRef<str>>(names: &[S], lex: &LegalEntityLexicon) -> Vec<LabeledName> {
    if names.len() < 2 {
        return Vec::new();
    }
    let members: Vec<Vec<Token>> = names.iter().map(|n| tokenize(n.as_ref())).collect();
    let non_legal = |tokens: &[Token]| -> BTreeSet<String> {
        let clean: Vec<&str> = tokens.iter().map(|t| t.clean.as_str()).collect();
        let legal = lex.token_mask(&clean);
        clean
            .iter()
            .zip(legal)
            .filter(|(_, l)| !l)
            .map(|(t, _)| t.to_string())
            .collect()
    };
    let mut common = non_legal(&members[0]);
    for m in &members[1..] {
        let other = non_legal(m);
        common.retain(|t| other.contains(t));
    }
    if common.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(members.len());
    for tokens in members {
        let inside: Vec<bool> = tokens.iter().map(|t| common.contains(&t.clean)).collect();
        match labeled(tokens, &inside, lex) {
            Some(ex) => out.push(ex),
            None => return Vec::new(),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex() -> LegalEntityLexicon {
        LegalEntityLexicon::bundled()
    }

    fn tagged(ex: &LabeledName) -> Vec<(String, Label)> {
        ex.tokens.iter().cloned().zip(ex.labels.iter().copied()).collect()
    }

    #[test]
    fn label_heuristic() {
        let out = corpus_from_label_homepage("Aston Martin Lagonda Limited", Some("Aston Martin"), None, &lex());
        assert_eq!(out.len(), 2);
        assert_eq!(
            tagged(&out[0]),
            [
                ("aston".into(), Label::In),
                ("martin".into(), Label::In),
                ("lagonda".into(), Label::Out),
                ("limited".into(), Label::Out)
            ]
        );
        assert_eq!(out[1].short_name(), "aston martin");
        assert!(out[1].labels.iter().all(|l| *l == Label::In));
    }

    #[test]
    fn homepage_heuristic() {
        let out = corpus_from_label_homepage("Cessna Aircraft Company", None, Some("http://www.cessna.com/"), &lex());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].labels, [Label::In, Label::Out, Label::Out]);
        let out = corpus_from_label_homepage("Aston Martin Lagonda", None, Some("https://astonmartin.co.uk/x"), &lex());
        assert_eq!(out[0].short_name(), "aston martin");
    }

    #[test]
    fn no_evidence() {
        assert!(corpus_from_label_homepage("Acme", None, None, &lex()).is_empty());
        assert!(corpus_from_label_homepage("Acme", Some("Other"), Some("http://nothing.org"), &lex()).is_empty());
    }

    #[test]
    fn domain_words() {
        assert_eq!(registrable_domain_word("http://www.cessna.com/").as_deref(), Some("cessna"));
        assert_eq!(registrable_domain_word("shop.example.co.uk").as_deref(), Some("example"));
        assert_eq!(registrable_domain_word("https://user@ibm.com:443/a?b").as_deref(), Some("ibm"));
        assert_eq!(registrable_domain_word("localhost"), None);
    }

    #[test]
    fn family_examples() {
        let out = corpus_from_family(&["ZUMU HOLDINGS PTY LTD", "ZUMU FOODS PTY LTD"], &lex());
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|ex| ex.short_name() == "zumu"));

        let out = corpus_from_family(
            &[
                "SUNSELEX Verwaltungs GmbH",
                "SUNSELEX GmbH solar resources",
                "SUNSELEX GmbH solar general constructor",
            ],
            &lex(),
        );
        assert!(out.iter().all(|ex| ex.short_name() == "sunselex"), "{out:?}");

        let out = corpus_from_family(
            &[
                "Yunhe County Jincheng Arts & Crafts Gifts Factory",
                "Yunhe County Jincheng Wood Industry Co., Ltd.",
            ],
            &lex(),
        );
        assert!(out.iter().all(|ex| ex.short_name() == "yunhe county jincheng"));
        assert!(corpus_from_family(&["Alpha GmbH", "Beta GmbH"], &lex()).is_empty());
        assert!(corpus_from_family(&["Alpha GmbH"], &lex()).is_empty());
    }

    #[test]
    fn corpus_file_round_trip() {
        let corpus = corpus_from_family(&["Müller Bau AG", "Müller Holz AG"], &lex());
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().next(), Some("Müller/IN Bau/OUT AG/OUT"));
        assert_eq!(read_corpus(buf.as_slice()).unwrap(), corpus);
        assert!(read_corpus("acme/MAYBE\n".as_bytes()).is_err());
        assert!(read_corpus("acme\n".as_bytes()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn legal_tokens_never_in(
            core in "[a-z]{3,8}",
            tails in proptest::collection::vec(prop_oneof![Just("ag"), Just("gmbh"), Just("ltd"), Just("bau"), Just("inc"), Just("co")], 1..4),
            tails2 in proptest::collection::vec(prop_oneof![Just("sa"), Just("llc"), Just("foods"), Just("ag")], 1..3),
        ) {
            let a = format!("{core} {}", tails.join(" "));
            let b = format!("{core} {}", tails2.join(" "));
            let l = lex();
            for ex in corpus_from_family(&[a.as_str(), b.as_str()], &l)
                .into_iter()
                .chain(corpus_from_label_homepage(&a, Some(&b), None, &l))
            {
                let mask = l.token_mask(&ex.tokens);
                for (m, lab) in mask.iter().zip(&ex.labels) {
                    prop_assert!(!(*m && *lab == Label::In));
                }
            }
        }
    }

    #[test]
    fn split_is_a_seeded_partition() {
        let corpus: Vec<LabeledName> = (0..10)
            .map(|i| LabeledName::from_pairs(&[(format!("w{i}").as_str(), Label::In)]).unwrap())
            .collect();
        let (train, test) = split_corpus(&corpus, 0.8, 7).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let mut all: Vec<String> = train.iter().chain(&test).map(LabeledName::to_line).collect();
        all.sort();
        let mut expect: Vec<String> = corpus.iter().map(LabeledName::to_line).collect();
        expect.sort();
        assert_eq!(all, expect);
        assert_eq!(split_corpus(&corpus, 0.8, 7).unwrap(), (train, test));
        assert!(split_corpus(&corpus, 1.5, 7).is_err());
    }
}
