//! Scoring trees: weighted sums and maxima over attribute scorers.
//!
//! A tree is built once per query. Leaves whose attribute is missing on
//! the record side are skipped and the weights of their `Sum` siblings are
//! renormalized over what remains.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::attrs::{country_score, industry_score, postal_score, street_score};
use crate::scoring::geo::city_score;
use crate::scoring::name::{company_name_score, NameQuery};
use crate::scoring::{ScoringContext, Strategy};
use crate::store::{valid_sic, Address, Attribute, QueryRecord, Record};

/// Group and sub-attribute weights; each level is renormalized over the
/// parts present in the query (and, at evaluation, in the record).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeWeights {
    pub name: f64,
    pub address: f64,
    pub industry: f64,
    pub street: f64,
    pub postal: f64,
    pub city: f64,
    pub country: f64,
}

impl Default for TreeWeights {
    fn default() -> Self {
        Self {
            name: 0.6,
            address: 0.3,
            industry: 0.1,
            street: 0.3,
            postal: 0.2,
            city: 0.3,
            country: 0.2,
        }
    }
}

impl TreeWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.name,
            self.address,
            self.industry,
            self.street,
            self.postal,
            self.city,
            self.country,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) || self.name <= 0.0 {
            return Err(Error::Config(
                "tree weights must be non-negative and the name weight positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Leaf {
    Name(NameQuery),
    Street(String),
    Postal(String),
    City(String),
    Country(String),
    Sic(String),
}

impl Leaf {
    pub fn attribute(&self) -> Attribute {
        match self {
            Leaf::Name(_) => Attribute::Name,
            Leaf::Street(_) => Attribute::Street,
            Leaf::Postal(_) => Attribute::Postal,
            Leaf::City(_) => Attribute::City,
            Leaf::Country(_) => Attribute::Country,
            Leaf::Sic(_) => Attribute::Sic,
        }
    }

    /// `None` when the record lacks the attribute.
    pub fn score(&self, record: &Record, strategy: Strategy, ctx: &ScoringContext<'_>) -> Option<f64> {
        match self {
            Leaf::Name(q) => company_name_score(q, record, strategy, ctx).ok(),
            Leaf::Street(s) => street_score(s, record.street.as_deref()?).ok(),
            Leaf::Postal(p) => postal_score(p, record.postal.as_deref()?).ok(),
            Leaf::City(c) => city_score(c, record.city.as_deref()?, ctx.trie, ctx.config.city_decay_km),
            Leaf::Country(c) => Some(country_score(c, record.country.as_deref()?)),
            Leaf::Sic(s) => industry_score(s, record.sic.as_deref()?).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(Leaf),
    /// Children with non-negative weights summing to 1.
    Sum(Vec<(f64, Node)>),
    Max(Vec<Node>),
}

impl Node {
    /// Bottom-up combination with caller-supplied leaf scores.
    pub fn combine<F>(&self, leaf_score: &mut F) -> Option<f64>
    where
        F: FnMut(&Leaf) -> Option<f64>,
    {
        match self {
            Node::Leaf(leaf) => leaf_score(leaf).map(|s| s.clamp(0.0, 1.0)),
            Node::Sum(children) => {
                let mut acc = 0.0;
                let mut weight = 0.0;
                for (w, child) in children {
                    if let Some(s) = child.combine(leaf_score) {
                        acc += w * s;
                        weight += w;
                    }
                }
                (weight > 0.0).then(|| (acc / weight).clamp(0.0, 1.0))
            }
            Node::Max(children) => children
                .iter()
                .filter_map(|c| c.combine(leaf_score))
                .reduce(f64::max),
        }
    }

    fn sum(children: Vec<(f64, Node)>) -> Option<Node> {
        let children: Vec<(f64, Node)> = children.into_iter().filter(|(w, _)| *w > 0.0).collect();
        let total: f64 = children.iter().map(|(w, _)| w).sum();
        match children.len() {
            0 => None,
            1 => children.into_iter().next().map(|(_, n)| n),
            _ => Some(Node::Sum(
                children.into_iter().map(|(w, n)| (w / total, n)).collect(),
            )),
        }
    }

    fn max(mut children: Vec<Node>) -> Option<Node> {
        match children.len() {
            0 => None,
            1 => children.pop(),
            _ => Some(Node::Max(children)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringTree {
    pub root: Node,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub score: f64,
    /// Best leaf score per attribute that could be evaluated.
    pub sub_scores: BTreeMap<Attribute, f64>,
}

impl ScoringTree {
    pub fn evaluate(&self, record: &Record, ctx: &ScoringContext<'_>) -> Evaluation {
        let mut sub_scores = BTreeMap::new();
        let score = self
            .root
            .combine(&mut |leaf: &Leaf| {
                let s = leaf.score(record, self.strategy, ctx)?;
                let e = sub_scores.entry(leaf.attribute()).or_insert(s);
                *e = e.max(s);
                Some(s)
            })
            .unwrap_or(0.0);
        Evaluation { score, sub_scores }
    }

    pub fn score(&self, record: &Record, ctx: &ScoringContext<'_>) -> f64 {
        self.root
            .combine(&mut |leaf: &Leaf| leaf.score(record, self.strategy, ctx))
            .unwrap_or(0.0)
    }
}

fn present(s: &Option<String>) -> Option<&str> {
    s.as_deref().map(str::trim).filter(|s| !s.is_empty())
}

fn address_node(a: &Address, w: &TreeWeights) -> Option<Node> {
    let mut parts = Vec::new();
    if let Some(s) = present(&a.street) {
        parts.push((w.street, Node::Leaf(Leaf::Street(s.to_string()))));
    }
    if let Some(p) = present(&a.postal) {
        parts.push((w.postal, Node::Leaf(Leaf::Postal(p.to_string()))));
    }
    if let Some(c) = present(&a.city) {
        parts.push((w.city, Node::Leaf(Leaf::City(c.to_string()))));
    }
    if let Some(c) = present(&a.country) {
        parts.push((w.country, Node::Leaf(Leaf::Country(c.to_string()))));
    }
    Node::sum(parts)
}

/// Builds the per-query tree. `short_name` is the query's predicted short
/// name, if a model is available.
pub fn build_scoring_tree(
    q: &QueryRecord,
    weights: &TreeWeights,
    strategy: Strategy,
    short_name: Option<&str>,
    ctx: &ScoringContext<'_>,
) -> Result<ScoringTree> {
    let locations = ctx.trie.map_or_else(Vec::new, |trie| {
        q.addresses
            .iter()
            .filter_map(|a| present(&a.city))
            .filter_map(|c| trie.lookup(c))
            .collect()
    });
    let name = NameQuery::new(&q.name)
        .map_err(|_| Error::EmptyQueryName)?
        .with_short_name(short_name)
        .with_locations(locations);

    let mut groups = vec![(weights.name, Node::Leaf(Leaf::Name(name)))];
    let addresses: Vec<Node> = q
        .addresses
        .iter()
        .filter_map(|a| address_node(a, weights))
        .collect();
    if let Some(node) = Node::max(addresses) {
        groups.push((weights.address, node));
    }
    let sics: Vec<Node> = q
        .sics
        .iter()
        .map(|s| s.trim())
        .filter(|s| valid_sic(s))
        .map(|s| Node::Leaf(Leaf::Sic(s.to_string())))
        .collect();
    if let Some(node) = Node::max(sics) {
        groups.push((weights.industry, node));
    }
    let root = Node::sum(groups).expect("name group always present");
    Ok(ScoringTree { root, strategy })
}
