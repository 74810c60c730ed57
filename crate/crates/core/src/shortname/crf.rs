//! Two-label linear-chain CRF with hashed features, trained by SGD on the
//! L2-regularized conditional log-likelihood.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::murmur3::hash64;
use crate::shortname::features::{extract_features, FrequencyTable, TokenFeatures};

/// Sparse per-token feature columns and gold labels for one sentence.
type Encoded = (Vec<Vec<(usize, f64)>>, Vec<usize>);
use crate::shortname::{LabeledName, Label};

const MODEL_MAGIC: &[u8; 8] = b"RLSNMODL";
const MODEL_VERSION: u32 = 1;
const WHAT: &str = "short-name model";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub epochs: u32,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.1,
            l2: 1.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShortNameModel {
    /// Emission weights `[OUT, IN]` keyed by feature hash, sorted by hash.
    weights: Vec<(u64, [f64; 2])>,
    /// `transitions[prev][next]`.
    transitions: [[f64; 2]; 2],
    pub params: TrainParams,
    /// Regularized objective after each epoch.
    pub epoch_losses: Vec<f64>,
}

fn feature_hash(name: &str) -> u64 {
    hash64(name.as_bytes(), 0)
}

fn hashed(feats: &TokenFeatures) -> Vec<(u64, f64)> {
    feats
        .feature_strings()
        .into_iter()
        .map(|(n, v)| (feature_hash(&n), v))
        .collect()
}

fn logsumexp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Viterbi over per-position emission scores.
fn viterbi(emissions: &[[f64; 2]], trans: &[[f64; 2]; 2]) -> Vec<Label> {
    let n = emissions.len();
    if n == 0 {
        return Vec::new();
    }
    let mut score = emissions[0];
    let mut back = vec![[0usize; 2]; n];
    for t in 1..n {
        let mut next = [0.0; 2];
        for y in 0..2 {
            let (a, b) = (score[0] + trans[0][y], score[1] + trans[1][y]);
            // ties prefer OUT
            let (best, arg) = if b > a { (b, 1) } else { (a, 0) };
            next[y] = best + emissions[t][y];
            back[t][y] = arg;
        }
        score = next;
    }
    let mut y = usize::from(score[1] > score[0]);
    let mut labels = vec![Label::Out; n];
    for t in (0..n).rev() {
        labels[t] = Label::from_index(y);
        y = back[t][y];
    }
    labels
}

struct Marginals {
    log_z: f64,
    unary: Vec<[f64; 2]>,
    pairwise: [[f64; 2]; 2],
}

fn forward_backward(em: &[[f64; 2]], trans: &[[f64; 2]; 2]) -> Marginals {
    let n = em.len();
    let mut alpha = vec![[0.0; 2]; n];
    let mut beta = vec![[0.0; 2]; n];
    alpha[0] = em[0];
    for t in 1..n {
        for y in 0..2 {
            alpha[t][y] = logsumexp2(alpha[t - 1][0] + trans[0][y], alpha[t - 1][1] + trans[1][y]) + em[t][y];
        }
    }
    for t in (0..n - 1).rev() {
        for y in 0..2 {
            beta[t][y] = logsumexp2(
                trans[y][0] + em[t + 1][0] + beta[t + 1][0],
                trans[y][1] + em[t + 1][1] + beta[t + 1][1],
            );
        }
    }
    let log_z = logsumexp2(alpha[n - 1][0], alpha[n - 1][1]);
    let unary = (0..n)
        .map(|t| [0, 1].map(|y| (alpha[t][y] + beta[t][y] - log_z).exp()))
        .collect();
    let mut pairwise = [[0.0; 2]; 2];
    for t in 1..n {
        for (a, row) in pairwise.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                *cell += (alpha[t - 1][a] + trans[a][b] + em[t][b] + beta[t][b] - log_z).exp();
            }
        }
    }
    Marginals { log_z, unary, pairwise }
}

/// Training-time weights: dense vector over observed features, stored as
/// `scale · v` so L2 decay is O(1) per step.
struct Trainer {
    v: Vec<[f64; 2]>,
    scale: f64,
    trans: [[f64; 2]; 2],
}

impl Trainer {
    fn emissions(&self, x: &[Vec<(usize, f64)>]) -> Vec<[f64; 2]> {
        x.iter()
            .map(|feats| {
                let mut e = [0.0; 2];
                for &(f, val) in feats {
                    e[0] += self.v[f][0] * val;
                    e[1] += self.v[f][1] * val;
                }
                [e[0] * self.scale, e[1] * self.scale]
            })
            .collect()
    }

    fn nll(&self, x: &[Vec<(usize, f64)>], y: &[usize]) -> f64 {
        let em = self.emissions(x);
        let m = forward_backward(&em, &self.trans);
        m.log_z - gold_score(&em, &self.trans, y)
    }

    fn squared_norm(&self) -> f64 {
        let w: f64 = self.v.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() * self.scale * self.scale;
        w + self.trans.iter().flatten().map(|t| t * t).sum::<f64>()
    }
}

fn gold_score(em: &[[f64; 2]], trans: &[[f64; 2]; 2], y: &[usize]) -> f64 {
    let mut s = em[0][y[0]];
    for t in 1..y.len() {
        s += trans[y[t - 1]][y[t]] + em[t][y[t]];
    }
    s
}

impl ShortNameModel {
    pub fn train(corpus: &[LabeledName], freq: &FrequencyTable, params: TrainParams) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if params.epochs == 0 || params.learning_rate.is_nan() || params.learning_rate <= 0.0 || params.l2.is_nan() || params.l2 < 0.0 {
            return Err(Error::Config("epochs and learning rate must be positive, l2 non-negative".into()));
        }
        let mut index: HashMap<u64, usize> = HashMap::new();
        let mut hashes: Vec<u64> = Vec::new();
        let data: Vec<Encoded> = corpus
            .iter()
            .map(|ex| {
                let x = extract_features(&ex.token_list(), freq)
                    .iter()
                    .map(|f| {
                        hashed(f)
                            .into_iter()
                            .map(|(h, v)| {
                                let id = *index.entry(h).or_insert_with(|| {
                                    hashes.push(h);
                                    hashes.len() - 1
                                });
                                (id, v)
                            })
                            .collect()
                    })
                    .collect();
                (x, ex.labels.iter().map(|l| l.index()).collect())
            })
            .collect();

        let n = data.len() as f64;
        let mut tr = Trainer {
            v: vec![[0.0; 2]; hashes.len()],
            scale: 1.0,
            trans: [[0.0; 2]; 2],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut epoch_losses = Vec::with_capacity(params.epochs as usize);
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            let eta = params.learning_rate / (1.0 + epoch as f64 / 2.0);
            let decay = 1.0 - eta * params.l2 / n;
            for &i in &order {
                let (x, y) = &data[i];
                tr.scale *= decay;
                for row in tr.trans.iter_mut() {
                    row.iter_mut().for_each(|t| *t *= decay);
                }
                if tr.scale < 1e-9 {
                    tr.v.iter_mut().flatten().for_each(|w| *w *= tr.scale);
                    tr.scale = 1.0;
                }
                let em = tr.emissions(x);
                let m = forward_backward(&em, &tr.trans);
                let step = eta / tr.scale;
                for (t, feats) in x.iter().enumerate() {
                    for lab in 0..2 {
                        let g = m.unary[t][lab] - f64::from(u8::from(y[t] == lab));
                        if g != 0.0 {
                            for &(f, val) in feats {
                                tr.v[f][lab] -= step * g * val;
                            }
                        }
                    }
                }
                let mut observed = [[0.0; 2]; 2];
                for t in 1..y.len() {
                    observed[y[t - 1]][y[t]] += 1.0;
                }
                for a in 0..2 {
                    for b in 0..2 {
                        tr.trans[a][b] -= eta * (m.pairwise[a][b] - observed[a][b]);
                    }
                }
            }
            let loss: f64 = data.iter().map(|(x, y)| tr.nll(x, y)).sum::<f64>() + 0.5 * params.l2 * tr.squared_norm();
            log::debug!("short-name epoch {}: loss {loss:.4}", epoch + 1);
            epoch_losses.push(loss);
        }

        let mut weights: Vec<(u64, [f64; 2])> = hashes
            .iter()
            .zip(&tr.v)
            .map(|(h, w)| (*h, [w[0] * tr.scale, w[1] * tr.scale]))
            .filter(|(_, w)| w[0] != 0.0 || w[1] != 0.0)
            .collect();
        weights.sort_unstable_by_key(|(h, _)| *h);
        Ok(Self {
            weights,
            transitions: tr.trans,
            params,
            epoch_losses,
        })
    }

    fn weight(&self, h: u64) -> [f64; 2] {
        self.weights
            .binary_search_by_key(&h, |(k, _)| *k)
            .map_or([0.0; 2], |i| self.weights[i].1)
    }

    pub fn feature_count(&self) -> usize {
        self.weights.len()
    }

    pub fn transitions(&self) -> [[f64; 2]; 2] {
        self.transitions
    }

    /// Most likely label sequence.
    pub fn decode(&self, feats: &[TokenFeatures]) -> Vec<Label> {
        let em: Vec<[f64; 2]> = feats
            .iter()
            .map(|f| {
                hashed(f).into_iter().fold([0.0; 2], |mut e, (h, v)| {
                    let w = self.weight(h);
                    e[0] += w[0] * v;
                    e[1] += w[1] * v;
                    e
                })
            })
            .collect();
        viterbi(&em, &self.transitions)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.weights.len() * 24);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&self.params.epochs.to_le_bytes());
        out.extend_from_slice(&self.params.seed.to_le_bytes());
        out.extend_from_slice(&self.params.learning_rate.to_le_bytes());
        out.extend_from_slice(&self.params.l2.to_le_bytes());
        out.extend_from_slice(&(self.epoch_losses.len() as u32).to_le_bytes());
        for l in &self.epoch_losses {
            out.extend_from_slice(&l.to_le_bytes());
        }
        for t in self.transitions.iter().flatten() {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out.extend_from_slice(&(self.weights.len() as u64).to_le_bytes());
        for (h, w) in &self.weights {
            out.extend_from_slice(&h.to_le_bytes());
            out.extend_from_slice(&w[0].to_le_bytes());
            out.extend_from_slice(&w[1].to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(8)? != MODEL_MAGIC {
            return Err(Error::BadMagic { what: WHAT });
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::VersionMismatch {
                what: WHAT,
                found: version,
                expected: MODEL_VERSION,
            });
        }
        let params = TrainParams {
            epochs: r.u32()?,
            seed: r.u64()?,
            learning_rate: r.f64()?,
            l2: r.f64()?,
        };
        let n_losses = r.u32()? as usize;
        let epoch_losses = (0..n_losses).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let mut transitions = [[0.0; 2]; 2];
        for t in transitions.iter_mut().flatten() {
            *t = r.f64()?;
        }
        let count = r.u64()? as usize;
        if count.checked_mul(24) != Some(bytes.len() - r.pos) {
            return Err(Error::Corrupt {
                what: WHAT,
                reason: "weight table length mismatch".into(),
            });
        }
        let mut weights = Vec::with_capacity(count);
        for _ in 0..count {
            weights.push((r.u64()?, [r.f64()?, r.f64()?]));
        }
        let sorted = weights.windows(2).all(|w| w[0].0 < w[1].0);
        let finite = weights.iter().flat_map(|(_, w)| w).chain(transitions.iter().flatten()).all(|v| v.is_finite());
        if !sorted || !finite {
            return Err(Error::Corrupt {
                what: WHAT,
                reason: "unsorted or non-finite weights".into(),
            });
        }
        Ok(Self {
            weights,
            transitions,
            params,
            epoch_losses,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Corrupt {
            what: WHAT,
            reason: "truncated".into(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
}
