//! The distractor policy: an MLP from `image ⊕ question` to a distribution
//! over the candidate pool, plus sampling, the semantic-equivalence filter and
//! top-k extraction.

use std::collections::BTreeMap;
use std::path::Path;

use crate::dataset::{CandidatePool, Dataset};
use crate::error::{Error, Result};
use crate::kernel::{load_checkpoint, save_checkpoint, softmax, CheckpointMeta, DenseParams, Mode, ModelKind};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct PolicyAgent {
    pub params: DenseParams,
    pub dropout_p: f64,
    pool_fingerprint: String,
}

impl PolicyAgent {
    /// Glorot-initialized policy bound to the dataset's pool.
    pub fn new(ds: &Dataset, hidden: usize, dropout_p: f64, rng: &mut Rng) -> Self {
        let params = DenseParams::xavier(ds.d_img() + ds.d_txt(), hidden, ds.pool().len(), rng);
        Self::from_params(params, dropout_p, ds.pool())
    }

    pub fn zeros(ds: &Dataset, hidden: usize, dropout_p: f64) -> Self {
        let params = DenseParams::zeros(ds.d_img() + ds.d_txt(), hidden, ds.pool().len());
        Self::from_params(params, dropout_p, ds.pool())
    }

    pub fn from_params(params: DenseParams, dropout_p: f64, pool: &CandidatePool) -> Self {
        Self {
            params,
            dropout_p,
            pool_fingerprint: pool.fingerprint().to_string(),
        }
    }

    pub fn pool_fingerprint(&self) -> &str {
        &self.pool_fingerprint
    }

    pub fn check_pool(&self, pool: &CandidatePool) -> Result<()> {
        if pool.fingerprint() != self.pool_fingerprint || pool.len() != self.params.out_dim() {
            return Err(Error::PoolMismatch {
                expected: self.pool_fingerprint.clone(),
                got: pool.fingerprint().to_string(),
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, seed: u64, epoch: usize) -> Result<()> {
        let mut extra = BTreeMap::new();
        extra.insert("pool".into(), self.pool_fingerprint.clone());
        save_checkpoint(
            path,
            &self.params,
            &CheckpointMeta {
                kind: ModelKind::Policy,
                dropout_p: self.dropout_p,
                seed,
                epoch,
                extra,
            },
        )
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let (params, meta) = load_checkpoint(path)?;
        if meta.kind != ModelKind::Policy {
            return Err(Error::format(path, "not a policy checkpoint"));
        }
        let pool_fingerprint = meta
            .extra
            .get("pool")
            .cloned()
            .ok_or_else(|| Error::format(path, "missing pool fingerprint"))?;
        Ok((
            Self {
                params,
                dropout_p: meta.dropout_p,
                pool_fingerprint,
            },
            meta,
        ))
    }

    /// Eval-mode logits for item `i`.
    pub fn logits(&self, ds: &Dataset, i: usize) -> Result<Vec<f64>> {
        self.params.infer(&ds.policy_input(i))
    }
}

/// `softmax(mlp(img ⊕ q_emb))` over the pool.
pub fn policy_forward(
    agent: &PolicyAgent,
    pool: &CandidatePool,
    img: &[f64],
    q_emb: &[f64],
    mode: Mode,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    agent.check_pool(pool)?;
    let mut c = Vec::with_capacity(img.len() + q_emb.len());
    c.extend_from_slice(img);
    c.extend_from_slice(q_emb);
    let fwd = agent.params.forward(&c, agent.dropout_p, mode, rng)?;
    Ok(softmax(&fwd.logits))
}

/// `n` i.i.d. categorical draws from `dist`.
pub fn sample_actions(dist: &[f64], n: usize, rng: &mut Rng) -> Vec<usize> {
    (0..n).map(|_| rng.categorical(dist)).collect()
}

/// Cosine-threshold equivalence over pool embeddings.
#[derive(Debug, Clone)]
pub struct SemEquivModel {
    pub tau: f64,
    unit: Vec<Vec<f64>>,
}

pub const DEFAULT_TAU: f64 = 0.95;

impl SemEquivModel {
    pub fn new(pool: &CandidatePool, tau: f64) -> Self {
        let unit = pool
            .entries()
            .iter()
            .map(|e| {
                let norm = e.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    e.embedding.iter().map(|x| x / norm).collect()
                } else {
                    vec![0.0; e.embedding.len()]
                }
            })
            .collect();
        Self { tau, unit }
    }

    /// Cosine similarity of two pool entries; 0 if either embedding is zero.
    pub fn cosine(&self, a: usize, b: usize) -> f64 {
        self.unit[a].iter().zip(&self.unit[b]).map(|(x, y)| x * y).sum()
    }

    /// Every pool index equivalent to `a`, including `a`.
    pub fn equivalents(&self, a: usize) -> Vec<usize> {
        (0..self.unit.len()).filter(|&b| is_sem_equiv(self, a, b)).collect()
    }

    pub fn len(&self) -> usize {
        self.unit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unit.is_empty()
    }
}

/// Pool texts are unique after normalization, so identical text means `a == b`.
pub fn is_sem_equiv(model: &SemEquivModel, a: usize, b: usize) -> bool {
    a == b || model.cosine(a, b) >= model.tau
}

/// Top-k choice with its policy probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TopK {
    pub ids: Vec<usize>,
    pub probs: Vec<f64>,
}

/// Ranks `scores` descending (ties to lower index) over indices that pass
/// `keep`, and returns the first `k`.
pub(crate) fn rank_top_k(scores: &[f64], k: usize, keep: impl Fn(usize) -> bool) -> Result<Vec<usize>> {
    let mut cands: Vec<usize> = (0..scores.len()).filter(|&j| keep(j)).collect();
    if cands.len() < k {
        return Err(Error::InsufficientCandidates {
            found: cands.len(),
            needed: k,
        });
    }
    cands.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    cands.truncate(k);
    Ok(cands)
}

/// The `k` most likely pool entries for item `i` under the eval-mode policy,
/// leaving out the correct answer and anything equivalent to it.
pub fn top_k_distractors(agent: &PolicyAgent, ds: &Dataset, i: usize, sem: &SemEquivModel, k: usize) -> Result<TopK> {
    agent.check_pool(ds.pool())?;
    let correct = ds.item(i).correct_id;
    let logits = agent.logits(ds, i)?;
    let ids = rank_top_k(&logits, k, |j| !is_sem_equiv(sem, j, correct))?;
    let probs = softmax(&logits);
    Ok(TopK {
        probs: ids.iter().map(|&j| probs[j]).collect(),
        ids,
    })
}
