//! Similarity scoring for company records.

pub mod attrs;
pub mod geo;
pub mod name;
pub mod strings;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textnorm::LegalEntityLexicon;

pub use attrs::{country_score, industry_score, postal_score, street_score};
pub use geo::{build_city_trie, city_score, haversine_km, CityTrie, Coord};
pub use name::{company_name_score, NameQuery};
pub use strings::{
    jaccard_score, lev_score, weighted_jaccard_score, weighted_lev_score, Unit, WeightedString,
};
pub use tree::{build_scoring_tree, Evaluation, Leaf, Node, ScoringTree, TreeWeights};

/// Weight removed from a legal entity pseudo-unit relative to one character.
pub const LEGAL_ENTITY_EPSILON: f64 = 1.0 / 256.0;

/// Company-name scoring strategy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Jaccard,
    Levenshtein,
    /// Arithmetic mean of the plain Jaccard and Levenshtein scores.
    Weighted,
    /// 0.9 max + 0.1 min of the plain scores.
    Maxmin,
    /// Max–min over the weighted strings (marks, legal types, short names, cities).
    #[default]
    Rls,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Jaccard,
        Strategy::Levenshtein,
        Strategy::Weighted,
        Strategy::Maxmin,
        Strategy::Rls,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Jaccard => "jaccard",
            Strategy::Levenshtein => "levenshtein",
            Strategy::Weighted => "weighted",
            Strategy::Maxmin => "maxmin",
            Strategy::Rls => "rls",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

/// Scoring tunables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub strategy: Strategy,
    /// Weight of a combining mark relative to a base character.
    pub combining_weight: f64,
    /// Per-character weight of a city mention near the company.
    pub city_weight: f64,
    /// Per-character multiplier for short-name tokens.
    pub short_name_factor: f64,
    /// Weight of the larger score in the max–min combination.
    pub maxmin_alpha: f64,
    /// Decay constant of the city score, km.
    pub city_decay_km: f64,
    /// Radius within which a city mention counts as the company's vicinity, km.
    pub vicinity_km: f64,
    pub weights: TreeWeights,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Rls,
            combining_weight: 0.25,
            city_weight: 0.25,
            short_name_factor: 3.0,
            maxmin_alpha: 0.9,
            city_decay_km: 30.0,
            vicinity_km: 50.0,
            weights: TreeWeights::default(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.combining_weight) || !unit(self.city_weight) || !unit(self.maxmin_alpha) {
            return Err(Error::Config(
                "combining_weight, city_weight and maxmin_alpha must lie in [0, 1]".into(),
            ));
        }
        if self.short_name_factor < 0.0 || self.city_decay_km <= 0.0 || self.vicinity_km < 0.0 {
            return Err(Error::Config("scoring distances and factors must be positive".into()));
        }
        self.weights.validate()
    }
}

/// Read-only inputs shared by every scorer.
#[derive(Debug, Clone, Copy)]
pub struct ScoringContext<'a> {
    pub config: &'a ScoringConfig,
    pub lexicon: &'a LegalEntityLexicon,
    pub trie: Option<&'a CityTrie>,
}

/// `alpha · max + (1 − alpha) · min`.
pub fn combine_maxmin(jaccard: f64, levenshtein: f64, alpha: f64) -> f64 {
    alpha * jaccard.max(levenshtein) + (1.0 - alpha) * jaccard.min(levenshtein)
}

pub fn combine_mean(jaccard: f64, levenshtein: f64) -> f64 {
    0.5 * (jaccard + levenshtein)
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::Strategy;
    use proptest::prelude::*;

    #[test]
    fn maxmin_versus_mean() {
        assert!((combine_maxmin(1.0, 0.4, 0.9) - 0.94).abs() < 1e-12);
        assert!((combine_mean(1.0, 0.4) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn strategy_parse() {
        assert_eq!("RLS".parse::<Strategy>().unwrap(), Strategy::Rls);
        assert_eq!(Strategy::default(), Strategy::Rls);
        assert!("solr".parse::<Strategy>().is_err());
        assert!(ScoringConfig::default().validate().is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn maxmin_dominates_mean(j in 0.0f64..=1.0, l in 0.0f64..=1.0) {
            let mm = combine_maxmin(j, l, 0.9);
            let mean = combine_mean(j, l);
            prop_assert!(mm + 1e-15 >= mean);
            prop_assert!(mean + 1e-15 >= j.min(l));
            if j == 1.0 && l < 1.0 {
                prop_assert!(mm < 1.0);
            }
        }
    }
}
