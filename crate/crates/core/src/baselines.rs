//! Comparison distractor generators: the per-question-type answer prior,
//! adversarial matching, and a classifier trained on a discriminator's
//! mistakes.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use log::warn;

use crate::agent::{is_sem_equiv, rank_top_k, PolicyAgent, SemEquivModel};
use crate::dataset::{Dataset, Split};
use crate::environment::{pick_answer, Environment};
use crate::error::{Error, Result};
use crate::reinforce::{train_classifier, TrainConfig};
use crate::rng::Rng;

/// Correct-answer frequency rankings over the train split, per question type
/// and overall.
#[derive(Debug)]
pub struct QTypePriorTable {
    per_qtype: BTreeMap<String, Vec<(usize, u64)>>,
    global: Vec<(usize, u64)>,
    fallbacks: AtomicUsize,
}

fn ranking(counts: &BTreeMap<usize, u64>) -> Vec<(usize, u64)> {
    let mut r: Vec<(usize, u64)> = counts.iter().map(|(&a, &c)| (a, c)).collect();
    r.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    r
}

pub fn build_qtype_prior(ds: &Dataset) -> Result<QTypePriorTable> {
    let train = ds.indices(Split::Train);
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let mut per: BTreeMap<String, BTreeMap<usize, u64>> = BTreeMap::new();
    let mut global: BTreeMap<usize, u64> = BTreeMap::new();
    for i in train {
        let it = ds.item(i);
        *per.entry(it.qtype.clone())
            .or_default()
            .entry(it.correct_id)
            .or_default() += 1;
        *global.entry(it.correct_id).or_default() += 1;
    }
    Ok(QTypePriorTable {
        per_qtype: per.iter().map(|(q, c)| (q.clone(), ranking(c))).collect(),
        global: ranking(&global),
        fallbacks: AtomicUsize::new(0),
    })
}

impl QTypePriorTable {
    /// `(pool index, count)` by descending count, then index.
    pub fn ranking(&self, qtype: &str) -> Option<&[(usize, u64)]> {
        self.per_qtype.get(qtype).map(Vec::as_slice)
    }

    pub fn global(&self) -> &[(usize, u64)] {
        &self.global
    }

    pub fn qtypes(&self) -> impl Iterator<Item = &str> {
        self.per_qtype.keys().map(String::as_str)
    }

    /// Queries that fell back to the global ranking for an unseen question type.
    pub fn fallback_count(&self) -> usize {
        self.fallbacks.load(Ordering::Relaxed)
    }

    /// The three most frequent answers for the item's question type that are
    /// not equivalent to its correct answer. Gaps are filled from the global
    /// ranking, then from pool order.
    pub fn query(&self, ds: &Dataset, item: usize, sem: &SemEquivModel) -> Result<[usize; 3]> {
        let it = ds.item(item);
        let own = match self.per_qtype.get(&it.qtype) {
            Some(r) => r.as_slice(),
            None => {
                self.fallbacks.fetch_add(1, Ordering::Relaxed);
                warn!("question type {:?} unseen in training; using global ranking", it.qtype);
                &[]
            }
        };
        let candidates = own
            .iter()
            .chain(&self.global)
            .map(|&(a, _)| a)
            .chain(0..ds.pool().len());
        let mut out = Vec::with_capacity(3);
        for a in candidates {
            if out.len() == 3 {
                break;
            }
            if !out.contains(&a) && !is_sem_equiv(sem, a, it.correct_id) {
                out.push(a);
            }
        }
        if out.len() < 3 {
            return Err(Error::InsufficientCandidates {
                found: out.len(),
                needed: 3,
            });
        }
        Ok([out[0], out[1], out[2]])
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Relevance to the question minus `lambda` times similarity to the answer,
/// both as embedding cosines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchingScorer {
    pub lambda: f64,
}

impl Default for MatchingScorer {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

impl MatchingScorer {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Invalid(format!("lambda must be finite and ≥ 0, got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn relevance(&self, q_emb: &[f64], cand: &[f64]) -> f64 {
        cosine(q_emb, cand)
    }

    pub fn similarity(&self, cand: &[f64], answer: &[f64]) -> f64 {
        cosine(cand, answer)
    }

    pub fn score(&self, q_emb: &[f64], cand: &[f64], answer: &[f64]) -> f64 {
        self.relevance(q_emb, cand) - self.lambda * self.similarity(cand, answer)
    }
}

/// Top-3 pool entries by matching score, excluding the correct answer and
/// its equivalents; ties go to the lower index.
pub fn adversarial_matching(
    ds: &Dataset,
    item: usize,
    scorer: &MatchingScorer,
    sem: &SemEquivModel,
) -> Result<[usize; 3]> {
    let correct = ds.item(item).correct_id;
    let q = ds.question_embedding(item);
    let pool = ds.pool();
    let ans = pool.embedding(correct);
    let scores: Vec<f64> = (0..pool.len())
        .map(|c| scorer.score(q, pool.embedding(c), ans))
        .collect();
    let top = rank_top_k(&scores, 3, |c| !is_sem_equiv(sem, c, correct))?;
    Ok([top[0], top[1], top[2]])
}

/// Trains an agent-shaped classifier to predict the wrong answer `env` picks
/// on train items it gets wrong. Uses `cfg.pretrain_epochs` supervised
/// epochs. Returns the model and the number of failures it was trained on.
pub fn train_failure_baseline(
    ds: &Dataset,
    env: &dyn Environment,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<(PolicyAgent, usize)> {
    let checksum = env.checksum();
    let mut examples = Vec::new();
    for i in ds.indices(Split::Train) {
        let it = ds.item(i);
        let picked = pick_answer(env, ds, i, &it.original_choices())?;
        if picked != it.correct_id {
            examples.push((i, picked));
        }
    }
    if examples.is_empty() {
        return Err(Error::NoFailures);
    }
    let mut agent = PolicyAgent::new(ds, cfg.hidden, cfg.dropout_p, &mut rng.child(1));
    let mut opt = if cfg.adam {
        crate::kernel::OptimState::adam(cfg.lr)
    } else {
        crate::kernel::OptimState::sgd(cfg.lr)
    };
    train_classifier(
        &mut agent.params,
        agent.dropout_p,
        ds,
        &examples,
        cfg.pretrain_epochs,
        cfg.batch,
        &mut opt,
        &mut rng.child(2),
    )?;
    if env.checksum() != checksum {
        return Err(Error::EnvironmentMutated(env.name().to_string()));
    }
    Ok((agent, examples.len()))
}
