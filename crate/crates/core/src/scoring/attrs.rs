//! Postal code, country, industry and street scorers.

use crate::error::{Error, Result};
use crate::scoring::strings::lev_score_str;
use crate::textnorm::clean_light;

fn common_prefix_ratio(a: &[char], b: &[char]) -> f64 {
    let lcp = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    lcp as f64 / a.len().max(b.len()) as f64
}

fn compact(s: &str) -> Vec<char> {
    s.chars()
        .filter(|c| !c.is_whitespace() && *c != '-')
        .flat_map(char::to_lowercase)
        .collect()
}

/// Common prefix length over the longer code.
pub fn postal_score(p1: &str, p2: &str) -> Result<f64> {
    let (a, b) = (compact(p1), compact(p2));
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyString);
    }
    Ok(common_prefix_ratio(&a, &b))
}

pub fn country_score(c1: &str, c2: &str) -> f64 {
    if c1.trim().eq_ignore_ascii_case(c2.trim()) {
        1.0
    } else {
        0.0
    }
}

/// SIC codes are hierarchical left to right, so they compare like postal codes.
pub fn industry_score(s1: &str, s2: &str) -> Result<f64> {
    for s in [s1, s2] {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::NonDigitInput(s.to_string()));
        }
    }
    let (a, b): (Vec<char>, Vec<char>) = (s1.chars().collect(), s2.chars().collect());
    Ok(common_prefix_ratio(&a, &b))
}

/// Token-level street similarity.
///
/// Tokens are paired one-to-one to maximize `Σ lev(i, j) · (|i| + |j|)`; the
/// score divides that by the total length of all tokens on both sides, so
/// unpaired tokens count as 0. Exact for up to [`EXACT_ASSIGNMENT_LIMIT`]
/// tokens on the shorter side, greedy (best pair first) beyond.
pub fn street_score(s1: &str, s2: &str) -> Result<f64> {
    let (c1, c2) = (clean_light(s1), clean_light(s2));
    let (t1, t2) = (c1.tokens(), c2.tokens());
    if t1.is_empty() || t2.is_empty() {
        return Err(Error::EmptyString);
    }
    let len = |t: &str| t.chars().count() as f64;
    let total: f64 = t1.iter().chain(&t2).map(|t| len(t)).sum();
    // gain[i][j]: contribution of pairing t1[i] with t2[j]
    let gain: Vec<Vec<f64>> = t1
        .iter()
        .map(|a| {
            t2.iter()
                .map(|b| lev_score_str(a, b).unwrap_or(0.0) * (len(a) + len(b)))
                .collect()
        })
        .collect();
    let best = if t1.len().min(t2.len()) <= EXACT_ASSIGNMENT_LIMIT {
        exact_assignment(&gain)
    } else {
        greedy_assignment(&gain)
    };
    Ok((best / total).clamp(0.0, 1.0))
}

pub const EXACT_ASSIGNMENT_LIMIT: usize = 10;

/// Max-gain partial matching by DP over subsets of the shorter side.
fn exact_assignment(gain: &[Vec<f64>]) -> f64 {
    let (n, m) = (gain.len(), gain[0].len());
    let g: Vec<Vec<f64>> = if m <= n {
        gain.to_vec()
    } else {
        (0..m).map(|j| (0..n).map(|i| gain[i][j]).collect()).collect()
    };
    let (rows, cols) = (g.len(), g[0].len());
    let mut dp = vec![f64::NEG_INFINITY; 1 << cols];
    dp[0] = 0.0;
    for i in 0..rows {
        let mut next = dp.clone();
        for mask in 0..(1usize << cols) {
            if dp[mask] == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..cols {
                if mask & (1 << j) == 0 {
                    let v = dp[mask] + g[i][j];
                    let slot = &mut next[mask | (1 << j)];
                    if v > *slot {
                        *slot = v;
                    }
                }
            }
        }
        dp = next;
    }
    dp.into_iter().fold(0.0, f64::max)
}

fn greedy_assignment(gain: &[Vec<f64>]) -> f64 {
    let mut pairs: Vec<(f64, usize, usize)> = gain
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, g)| (*g, i, j)))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_i = vec![false; gain.len()];
    let mut used_j = vec![false; gain[0].len()];
    let mut sum = 0.0;
    for (g, i, j) in pairs {
        if !used_i[i] && !used_j[j] {
            used_i[i] = true;
            used_j[j] = true;
            sum += g;
        }
    }
    sum
}
