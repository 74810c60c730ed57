//! Company-name scoring.
//!
//! Under [`Strategy::Rls`] both names are turned into [`WeightedString`]s:
//!
//! * a combining mark is its own unit at `combining_weight`, so a missing
//!   umlaut costs a fraction of a character;
//! * a legal entity type (plus the space separating it from the name)
//!   collapses into one pseudo-unit of weight `1 − ε`;
//! * short-name tokens weigh `short_name_factor` per character;
//! * a city mentioned in the name that lies within `vicinity_km` of the
//!   company weighs `city_weight` per character.
//!
//! The weighted Jaccard and Levenshtein scores are then combined max–min.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::scoring::geo::{haversine_km, Coord};
use crate::scoring::strings::{
    jaccard_score, lev_score, weighted_jaccard_score, weighted_lev_score, Unit, WeightedString,
};
use crate::scoring::{combine_maxmin, combine_mean, ScoringContext, Strategy, LEGAL_ENTITY_EPSILON};
use crate::store::Record;
use crate::textnorm::{clean_light, graphemes, strip_marks, CleanText};
use unicode_normalization::char::is_combining_mark;

const MAX_CITY_TOKENS: usize = 3;

/// Query-side name, prepared once per query.
#[derive(Debug, Clone, PartialEq)]
pub struct NameQuery {
    pub clean: CleanText,
    /// Light-cleaned short-name tokens predicted for the query, if any.
    pub short_tokens: Vec<String>,
    /// Resolved coordinates of the cities in the query's addresses.
    pub locations: Vec<Coord>,
}

impl NameQuery {
    pub fn new(name: &str) -> Result<Self> {
        let clean = clean_light(name);
        if clean.is_empty() {
            return Err(Error::EmptyString);
        }
        Ok(Self {
            clean,
            short_tokens: Vec::new(),
            locations: Vec::new(),
        })
    }

    pub fn with_short_name(mut self, short: Option<&str>) -> Self {
        self.short_tokens = short_tokens(short);
        self
    }

    pub fn with_locations(mut self, locations: Vec<Coord>) -> Self {
        self.locations = locations;
        self
    }
}

fn short_tokens(short: Option<&str>) -> Vec<String> {
    short
        .map(|s| clean_light(s).tokens().into_iter().map(str::to_string).collect())
        .unwrap_or_default()
}

pub fn company_name_score(
    query: &NameQuery,
    record: &Record,
    strategy: Strategy,
    ctx: &ScoringContext<'_>,
) -> Result<f64> {
    let (q, r) = (&query.clean, &record.clean_name);
    if q.is_empty() || r.is_empty() {
        return Err(Error::EmptyString);
    }
    let alpha = ctx.config.maxmin_alpha;
    Ok(match strategy {
        Strategy::Jaccard => jaccard_score(q, r)?,
        Strategy::Levenshtein => lev_score(q, r)?,
        Strategy::Weighted => combine_mean(jaccard_score(q, r)?, lev_score(q, r)?),
        Strategy::Maxmin => combine_maxmin(jaccard_score(q, r)?, lev_score(q, r)?, alpha),
        Strategy::Rls => {
            let mut short: HashSet<&str> = query.short_tokens.iter().map(String::as_str).collect();
            let record_short = short_tokens(record.short_name.as_deref());
            short.extend(record_short.iter().map(String::as_str));

            let mut refs = query.locations.clone();
            if let (Some(trie), Some(city)) = (ctx.trie, record.city.as_deref()) {
                refs.extend(trie.lookup(city));
            }
            let wq = weighted_name(q, &short, &refs, ctx);
            let wr = weighted_name(r, &short, &refs, ctx);
            combine_maxmin(weighted_jaccard_score(&wq, &wr)?, weighted_lev_score(&wq, &wr)?, alpha)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TokenRole {
    Plain,
    Legal,
    Short,
    City,
}

/// Builds the weighted representation of a light-cleaned name.
pub fn weighted_name(
    name: &CleanText,
    short: &HashSet<&str>,
    refs: &[Coord],
    ctx: &ScoringContext<'_>,
) -> WeightedString {
    let cfg = ctx.config;
    let tokens = name.tokens();
    let mut roles = vec![TokenRole::Plain; tokens.len()];
    let legal = ctx.lexicon.detect_spans(&tokens);
    for span in &legal {
        roles[span.clone()].iter_mut().for_each(|r| *r = TokenRole::Legal);
    }
    for (i, t) in tokens.iter().enumerate() {
        if roles[i] == TokenRole::Plain && short.contains(t) {
            roles[i] = TokenRole::Short;
        }
    }
    if let Some(trie) = ctx.trie.filter(|_| !refs.is_empty()) {
        let mut i = 0;
        while i < tokens.len() {
            let hit = (1..=MAX_CITY_TOKENS.min(tokens.len() - i)).rev().find(|&n| {
                roles[i..i + n].iter().all(|r| *r == TokenRole::Plain)
                    && trie
                        .get_key(&strip_marks(&tokens[i..i + n].join(" ")))
                        .is_some_and(|c| near_any(c, refs, cfg.vicinity_km))
            });
            match hit {
                Some(n) => {
                    roles[i..i + n].iter_mut().for_each(|r| *r = TokenRole::City);
                    i += n;
                }
                None => i += 1,
            }
        }
    }

    let legal_weight = 1.0 - LEGAL_ENTITY_EPSILON;
    let mut units = Vec::with_capacity(name.as_str().len());
    let mut i = 0;
    while i < tokens.len() {
        if let Some(span) = legal.iter().find(|s| s.start == i) {
            // the pseudo-unit swallows the separating space
            let tag = strip_marks(&tokens[span.clone()].join(" "));
            units.push(Unit::pseudo(&tag, legal_weight));
            i = span.end;
            continue;
        }
        let factor = match roles[i] {
            TokenRole::Short => cfg.short_name_factor,
            TokenRole::City => cfg.city_weight,
            _ => 1.0,
        };
        let after_leading_legal = i > 0 && legal.first().is_some_and(|s| s.start == 0 && s.end == i);
        if i > 0 && !after_leading_legal {
            units.push(Unit::text(" ", factor.min(1.0)));
        }
        for g in graphemes(tokens[i]) {
            let mut chars = g.char_indices();
            let (_, base) = chars.next().expect("non-empty grapheme");
            let base_len = base.len_utf8();
            if is_combining_mark(base) {
                units.push(Unit::text(g, cfg.combining_weight * factor));
                continue;
            }
            units.push(Unit::text(&g[..base_len], factor));
            for (pos, c) in chars {
                units.push(Unit::text(&g[pos..pos + c.len_utf8()], cfg.combining_weight * factor));
            }
        }
        i += 1;
    }
    WeightedString::new(units)
}

fn near_any(c: Coord, refs: &[Coord], radius_km: f64) -> bool {
    refs.iter()
        .any(|r| haversine_km(c, *r).is_ok_and(|d| d <= radius_km))
}
