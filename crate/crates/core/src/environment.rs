//! The frozen triplet scorer that plays the role of the environment, and
//! multiple-choice accuracy evaluation.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::kernel::{
    load_checkpoint, save_checkpoint, sigmoid, sigmoid_bce, Algorithm, CheckpointMeta, DenseParams, Mode, ModelKind,
    OptimState,
};
use crate::rng::Rng;

/// Anything that scores how likely an (image, question, answer) triplet is correct.
///
/// Implementations must be pure: equal inputs give equal scores, and
/// [`Environment::checksum`] changes whenever the scoring function could.
pub trait Environment: Sync {
    fn name(&self) -> &str;

    /// Score in `[0, 1]`.
    fn score(&self, img: &[f64], q_emb: &[f64], a_emb: &[f64]) -> Result<f64>;

    fn checksum(&self) -> String;
}

/// Training provenance of a discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorMeta {
    pub seed: u64,
    pub epochs: usize,
    pub dataset_fingerprint: String,
}

/// MLP over `image ⊕ question ⊕ answer` with a single logit.
#[derive(Debug, Clone)]
pub struct Discriminator {
    name: String,
    params: DenseParams,
    dropout_p: f64,
    pub meta: DiscriminatorMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscTrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Original distractors used as negatives per item, at most 3.
    pub neg_per_pos: usize,
    pub hidden: usize,
    pub dropout_p: f64,
    pub adam: bool,
}

impl Default for DiscTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch: 64,
            lr: 0.01,
            neg_per_pos: 3,
            hidden: 4096,
            dropout_p: 0.5,
            adam: false,
        }
    }
}

impl Discriminator {
    pub fn new(name: impl Into<String>, params: DenseParams, dropout_p: f64, meta: DiscriminatorMeta) -> Self {
        Self {
            name: name.into(),
            params,
            dropout_p,
            meta,
        }
    }

    /// All-zero parameters; scores every triplet 0.5.
    pub fn zeros(ds: &Dataset, hidden: usize) -> Self {
        Self::new(
            "zero",
            DenseParams::zeros(ds.d_img() + 2 * ds.d_txt(), hidden, 1),
            0.0,
            DiscriminatorMeta {
                seed: 0,
                epochs: 0,
                dataset_fingerprint: ds.fingerprint(),
            },
        )
    }

    pub fn params(&self) -> &DenseParams {
        &self.params
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut extra = BTreeMap::new();
        extra.insert("name".into(), self.name.clone());
        extra.insert("dataset".into(), self.meta.dataset_fingerprint.clone());
        save_checkpoint(
            path,
            &self.params,
            &CheckpointMeta {
                kind: ModelKind::Discriminator,
                dropout_p: self.dropout_p,
                seed: self.meta.seed,
                epoch: self.meta.epochs,
                extra,
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, meta) = load_checkpoint(path)?;
        if meta.kind != ModelKind::Discriminator || params.out_dim() != 1 {
            return Err(Error::format(path, "not a discriminator checkpoint"));
        }
        let name = meta.extra.get("name").cloned().unwrap_or_else(|| "env".into());
        Ok(Self {
            name,
            params,
            dropout_p: meta.dropout_p,
            meta: DiscriminatorMeta {
                seed: meta.seed,
                epochs: meta.epoch,
                dataset_fingerprint: meta.extra.get("dataset").cloned().unwrap_or_default(),
            },
        })
    }

    fn input(&self, img: &[f64], q_emb: &[f64], a_emb: &[f64]) -> Result<Vec<f64>> {
        let n = img.len() + q_emb.len() + a_emb.len();
        if n != self.params.in_dim() || q_emb.len() != a_emb.len() {
            return Err(Error::dim("triplet", self.params.in_dim(), n));
        }
        let mut c = Vec::with_capacity(n);
        c.extend_from_slice(img);
        c.extend_from_slice(q_emb);
        c.extend_from_slice(a_emb);
        Ok(c)
    }
}

impl Environment for Discriminator {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, img: &[f64], q_emb: &[f64], a_emb: &[f64]) -> Result<f64> {
        score_triplet(self, img, q_emb, a_emb)
    }

    fn checksum(&self) -> String {
        self.params.checksum()
    }
}

/// Sigmoid of the discriminator logit on `img ⊕ q_emb ⊕ a_emb`.
pub fn score_triplet(disc: &Discriminator, img: &[f64], q_emb: &[f64], a_emb: &[f64]) -> Result<f64> {
    let c = disc.input(img, q_emb, a_emb)?;
    Ok(sigmoid(disc.params.infer(&c)?[0]))
}

/// Binary cross-entropy training: the correct answer is the positive, the
/// item's original distractors are negatives.
pub fn train_discriminator(ds: &Dataset, cfg: &DiscTrainConfig, rng: &mut Rng) -> Result<Discriminator> {
    let train = ds.indices(Split::Train);
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if cfg.neg_per_pos > 3 || cfg.batch == 0 {
        return Err(Error::Invalid("need 0 < batch and neg_per_pos ≤ 3".into()));
    }
    let seed = rng.seed();
    let in_dim = ds.d_img() + 2 * ds.d_txt();
    let mut params = DenseParams::xavier(in_dim, cfg.hidden, 1, rng);
    let mut opt = if cfg.adam {
        OptimState::new(Algorithm::adam(), cfg.lr)
    } else {
        OptimState::sgd(cfg.lr)
    };
    let mut order = train;
    let mut grads = params.zeros_like();
    let mut input = vec![0.0; in_dim];
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch) {
            grads.fill(0.0);
            let mut n = 0usize;
            for &i in batch {
                let item = ds.item(i);
                let mut negs = item.original_distractor_ids;
                rng.shuffle(&mut negs);
                let answers =
                    std::iter::once((item.correct_id, true)).chain(negs[..cfg.neg_per_pos].iter().map(|&d| (d, false)));
                for (a, label) in answers {
                    input.clear();
                    input.extend_from_slice(&item.image_feature);
                    input.extend_from_slice(ds.question_embedding(i));
                    input.extend_from_slice(ds.pool().embedding(a));
                    let fwd = params.forward(&input, cfg.dropout_p, Mode::Train, rng)?;
                    let (_, dz) = sigmoid_bce(fwd.logits[0], label);
                    params.backward(&fwd.cache, &[dz], &mut grads);
                    n += 1;
                }
            }
            grads.scale(1.0 / n as f64);
            opt.step(&mut params, &grads)?;
        }
    }
    Ok(Discriminator::new(
        format!("disc-{seed}"),
        params,
        cfg.dropout_p,
        DiscriminatorMeta {
            seed,
            epochs: cfg.epochs,
            dataset_fingerprint: ds.fingerprint(),
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QtypeAccuracy {
    pub correct: usize,
    pub n: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub correct: usize,
    pub n: usize,
    pub per_qtype: BTreeMap<String, QtypeAccuracy>,
    pub choice_source: String,
}

impl AccuracyReport {
    /// Human-readable report, one line per question type after the total.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "source={} accuracy={:.4} correct={} n={}\n",
            self.choice_source, self.accuracy, self.correct, self.n
        );
        for (q, a) in &self.per_qtype {
            out.push_str(&format!(
                "  qtype={q} accuracy={:.4} correct={} n={}\n",
                a.accuracy, a.correct, a.n
            ));
        }
        out
    }

    /// `{accuracy, n, per_qtype}` summary object.
    pub fn summary_json(&self) -> String {
        let per: BTreeMap<&str, f64> = self.per_qtype.iter().map(|(k, v)| (k.as_str(), v.accuracy)).collect();
        serde_json::json!({
            "accuracy": self.accuracy,
            "n": self.n,
            "per_qtype": per,
            "choice_source": self.choice_source,
        })
        .to_string()
    }
}

/// Index among `choices` the environment scores highest; ties go to the
/// lowest pool index.
pub fn pick_answer(env: &dyn Environment, ds: &Dataset, item: usize, choices: &[usize; 4]) -> Result<usize> {
    let mut sorted = *choices;
    sorted.sort_unstable();
    let img = &ds.item(item).image_feature;
    let q = ds.question_embedding(item);
    let mut best = (sorted[0], f64::NEG_INFINITY);
    for &a in &sorted {
        let s = env.score(img, q, ds.pool().embedding(a))?;
        if s > best.1 {
            best = (a, s);
        }
    }
    Ok(best.0)
}

/// Multiple-choice accuracy of `env` over `split`, with the four choices of
/// each item supplied by `choices_for(item_index)`.
pub fn evaluate_mcq<F>(
    env: &dyn Environment,
    ds: &Dataset,
    split: Split,
    choice_source: &str,
    choices_for: F,
) -> Result<AccuracyReport>
where
    F: FnMut(usize) -> Result<[usize; 4]>,
{
    evaluate_mcq_on(env, ds, &ds.indices(split), choice_source, choices_for)
}

/// [`evaluate_mcq`] over an explicit list of item indices.
pub fn evaluate_mcq_on<F>(
    env: &dyn Environment,
    ds: &Dataset,
    indices: &[usize],
    choice_source: &str,
    mut choices_for: F,
) -> Result<AccuracyReport>
where
    F: FnMut(usize) -> Result<[usize; 4]>,
{
    let mut correct = 0usize;
    let mut n = 0usize;
    let mut per: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for &i in indices {
        let item = ds.item(i);
        let choices = choices_for(i)?;
        if !choices.contains(&item.correct_id) {
            return Err(Error::InvalidItem {
                item: item.id.clone(),
                msg: "choice set omits the correct answer".into(),
            });
        }
        if choices.iter().collect::<HashSet<_>>().len() != 4 {
            return Err(Error::InvalidItem {
                item: item.id.clone(),
                msg: "choice set has duplicates".into(),
            });
        }
        let hit = pick_answer(env, ds, i, &choices)? == item.correct_id;
        let entry = per.entry(item.qtype.clone()).or_default();
        entry.1 += 1;
        n += 1;
        if hit {
            correct += 1;
            entry.0 += 1;
        }
    }
    let frac = |c: usize, n: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    Ok(AccuracyReport {
        accuracy: frac(correct, n),
        correct,
        n,
        per_qtype: per
            .into_iter()
            .map(|(q, (c, n))| {
                (
                    q,
                    QtypeAccuracy {
                        correct: c,
                        n,
                        accuracy: frac(c, n),
                    },
                )
            })
            .collect(),
        choice_source: choice_source.to_string(),
    })
}

/// Accuracy with each item's original distractors.
pub fn evaluate_original(env: &dyn Environment, ds: &Dataset, split: Split) -> Result<AccuracyReport> {
    evaluate_mcq(env, ds, split, "original", |i| Ok(ds.item(i).original_choices()))
}
