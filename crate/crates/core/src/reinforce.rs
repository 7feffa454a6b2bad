//! Policy-gradient training of the distractor agent: the penalized reward,
//! the REINFORCE estimator, supervised pre-training and the full loop.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::agent::{is_sem_equiv, top_k_distractors, PolicyAgent, SemEquivModel};
use crate::dataset::{Dataset, Split};
use crate::environment::{evaluate_mcq, Environment};
use crate::error::{Error, Result};
use crate::kernel::{cross_entropy_loss, softmax, Algorithm, DenseParams, Mode, OptimState};
use crate::rng::Rng;

/// Reward for choosing pool entry `action` as a distractor for item `item`.
pub trait Reward {
    fn reward(&self, ds: &Dataset, item: usize, action: usize) -> Result<f64>;
}

/// Environments to fool, the penalty for picking the answer (or an
/// equivalent of it), and the equivalence model.
pub struct RewardSpec<'a> {
    pub environments: Vec<&'a dyn Environment>,
    pub penalty: f64,
    pub sem: SemEquivModel,
}

impl<'a> RewardSpec<'a> {
    pub fn new(environments: Vec<&'a dyn Environment>, sem: SemEquivModel) -> Result<Self> {
        if environments.is_empty() {
            return Err(Error::Invalid("reward needs at least one environment".into()));
        }
        Ok(Self {
            environments,
            penalty: -1.0,
            sem,
        })
    }

    pub fn with_penalty(mut self, penalty: f64) -> Result<Self> {
        if penalty.is_nan() || penalty >= 0.0 {
            return Err(Error::Invalid(format!("penalty must be negative, got {penalty}")));
        }
        self.penalty = penalty;
        Ok(self)
    }

    /// `(name, checksum)` of every environment.
    pub fn checksums(&self) -> Vec<(String, String)> {
        self.environments
            .iter()
            .map(|e| (e.name().to_string(), e.checksum()))
            .collect()
    }
}

/// `penalty` if `d` is the correct answer or equivalent to it, otherwise the
/// mean environment score of the triplet.
pub fn compute_reward(spec: &RewardSpec<'_>, ds: &Dataset, item: usize, d: usize) -> Result<f64> {
    let it = ds.item(item);
    if d >= ds.pool().len() {
        return Err(Error::Invalid(format!(
            "action {d} outside pool of {}",
            ds.pool().len()
        )));
    }
    if is_sem_equiv(&spec.sem, d, it.correct_id) {
        return Ok(spec.penalty);
    }
    let q = ds.question_embedding(item);
    let a = ds.pool().embedding(d);
    let mut total = 0.0;
    for env in &spec.environments {
        total += env.score(&it.image_feature, q, a)?;
    }
    Ok(total / spec.environments.len() as f64)
}

impl Reward for RewardSpec<'_> {
    fn reward(&self, ds: &Dataset, item: usize, action: usize) -> Result<f64> {
        compute_reward(self, ds, item, action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Mlpr,
    MlprPretrain,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Mlpr => "mlpr",
            Variant::MlprPretrain => "mlpr_pretrain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mlpr" => Some(Variant::Mlpr),
            "mlpr_pretrain" | "mlpr-pretrain" => Some(Variant::MlprPretrain),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub pretrain_epochs: usize,
    pub rl_epochs: usize,
    pub samples_per_item: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub hidden: usize,
    pub dropout_p: f64,
    pub adam: bool,
    /// Subtract a moving average of the batch reward.
    pub baseline: bool,
    pub baseline_decay: f64,
    /// Log environment accuracy on top-3 distractors (val split) every N epochs; 0 disables.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pretrain_epochs: 80,
            rl_epochs: 200,
            samples_per_item: 4,
            batch: 64,
            lr: 0.01,
            seed: 0,
            hidden: 4096,
            dropout_p: 0.5,
            adam: false,
            baseline: false,
            baseline_decay: 0.9,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    fn optimizer(&self, lr: f64) -> OptimState {
        if self.adam {
            OptimState::new(Algorithm::adam(), lr)
        } else {
            OptimState::sgd(lr)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Rl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    /// 1-based within the phase.
    pub epoch: usize,
    pub mean_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub env_accuracy_on_topk: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    /// Items left out of supervised training because their target is not in the pool.
    pub skipped_items: usize,
}

impl TrainLog {
    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter(move |r| r.phase == phase)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            records.push(serde_json::from_str(line).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: n + 1,
                msg: e.to_string(),
            })?);
        }
        Ok(Self {
            records,
            skipped_items: 0,
        })
    }
}

/// Output of one estimator evaluation.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Estimate of ∇(−E[R]), averaged over inputs × samples.
    pub grad: DenseParams,
    pub mean_reward: f64,
    /// Mean of −(R − b)·log π(a), whose gradient is `grad`.
    pub surrogate_loss: f64,
}

/// Score-function gradient for a softmax MLP policy.
///
/// For each input, one train-mode forward pass is made and `n_s` actions are
/// drawn from it; `reward(input_pos, action)` scores each. Accumulation is in
/// input order, then sample order.
pub fn policy_gradient<F>(
    params: &DenseParams,
    dropout_p: f64,
    inputs: &[Vec<f64>],
    n_s: usize,
    baseline: f64,
    rng: &mut Rng,
    mut reward: F,
) -> Result<StepOutcome>
where
    F: FnMut(usize, usize) -> Result<f64>,
{
    if n_s == 0 || inputs.is_empty() {
        return Err(Error::Invalid("need at least one input and one sample".into()));
    }
    let mut grad = params.zeros_like();
    let mut d_logits = vec![0.0; params.out_dim()];
    let mut total_reward = 0.0;
    let mut total_loss = 0.0;
    for (pos, c) in inputs.iter().enumerate() {
        let fwd = params.forward(c, dropout_p, Mode::Train, rng)?;
        let probs = softmax(&fwd.logits);
        d_logits.fill(0.0);
        for _ in 0..n_s {
            let a = rng.categorical(&probs);
            let r = reward(pos, a)?;
            let adv = r - baseline;
            total_reward += r;
            total_loss -= adv * probs[a].max(crate::kernel::LOG_CLAMP).ln();
            // ∂(−adv·log π_a)/∂z = −adv·(onehot_a − π)
            for (j, (g, p)) in d_logits.iter_mut().zip(&probs).enumerate() {
                let onehot = if j == a { 1.0 } else { 0.0 };
                *g -= adv * (onehot - p);
            }
        }
        params.backward(&fwd.cache, &d_logits, &mut grad);
    }
    let n = (inputs.len() * n_s) as f64;
    grad.scale(1.0 / n);
    if let Some(name) = grad.first_non_finite() {
        return Err(Error::NonFinite(format!("policy gradient {name}")));
    }
    Ok(StepOutcome {
        grad,
        mean_reward: total_reward / n,
        surrogate_loss: total_loss / n,
    })
}

/// REINFORCE estimate for a batch of items, without a baseline.
pub fn reinforce_step<R: Reward + ?Sized>(
    agent: &PolicyAgent,
    reward: &R,
    ds: &Dataset,
    batch: &[usize],
    n_s: usize,
    rng: &mut Rng,
) -> Result<StepOutcome> {
    reinforce_step_with_baseline(agent, reward, ds, batch, n_s, 0.0, rng)
}

pub fn reinforce_step_with_baseline<R: Reward + ?Sized>(
    agent: &PolicyAgent,
    reward: &R,
    ds: &Dataset,
    batch: &[usize],
    n_s: usize,
    baseline: f64,
    rng: &mut Rng,
) -> Result<StepOutcome> {
    agent.check_pool(ds.pool())?;
    let inputs: Vec<Vec<f64>> = batch.iter().map(|&i| ds.policy_input(i)).collect();
    policy_gradient(&agent.params, agent.dropout_p, &inputs, n_s, baseline, rng, |pos, a| {
        reward.reward(ds, batch[pos], a)
    })
}

/// Softmax cross-entropy training on `(item, target)` pairs. Returns the mean
/// loss of each epoch.
#[allow(clippy::too_many_arguments)]
pub(crate) fn train_classifier(
    params: &mut DenseParams,
    dropout_p: f64,
    ds: &Dataset,
    examples: &[(usize, usize)],
    epochs: usize,
    batch: usize,
    opt: &mut OptimState,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if batch == 0 {
        return Err(Error::Invalid("batch must be positive".into()));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grads = params.zeros_like();
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            grads.fill(0.0);
            for &e in chunk {
                let (i, target) = examples[e];
                let fwd = params.forward(&ds.policy_input(i), dropout_p, Mode::Train, rng)?;
                let (loss, d) = cross_entropy_loss(&softmax(&fwd.logits), target);
                epoch_loss += loss;
                params.backward(&fwd.cache, &d, &mut grads);
            }
            grads.scale(1.0 / chunk.len() as f64);
            opt.step(params, &grads)?;
        }
        losses.push(if examples.is_empty() {
            0.0
        } else {
            epoch_loss / examples.len() as f64
        });
    }
    Ok(losses)
}

/// Cross-entropy training toward each train item's correct answer.
pub fn pretrain_agent(agent: &mut PolicyAgent, ds: &Dataset, cfg: &TrainConfig, rng: &mut Rng) -> Result<TrainLog> {
    agent.check_pool(ds.pool())?;
    let mut log = TrainLog::default();
    let k = agent.params.out_dim();
    let mut examples = Vec::new();
    for i in ds.indices(Split::Train) {
        let c = ds.item(i).correct_id;
        if c < k {
            examples.push((i, c));
        } else {
            log.skipped_items += 1;
        }
    }
    if log.skipped_items > 0 {
        warn!(
            "pre-training skipped {} items whose answer is outside the pool",
            log.skipped_items
        );
    }
    if cfg.pretrain_epochs == 0 {
        return Ok(log);
    }
    if examples.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let mut opt = cfg.optimizer(cfg.lr);
    let losses = train_classifier(
        &mut agent.params,
        agent.dropout_p,
        ds,
        &examples,
        cfg.pretrain_epochs,
        cfg.batch,
        &mut opt,
        rng,
    )?;
    log.records = losses
        .into_iter()
        .enumerate()
        .map(|(e, l)| EpochRecord {
            phase: Phase::Pretrain,
            epoch: e + 1,
            mean_loss: l,
            mean_reward: None,
            env_accuracy_on_topk: None,
        })
        .collect();
    Ok(log)
}

/// Mean probability the eval-mode policy puts on each item's correct answer.
pub fn mean_correct_probability(agent: &PolicyAgent, ds: &Dataset, indices: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for &i in indices {
        total += softmax(&agent.logits(ds, i)?)[ds.item(i).correct_id];
    }
    Ok(total / indices.len().max(1) as f64)
}

/// Accuracy of `env` on `split` when each item's distractors are the agent's top 3.
pub fn topk_accuracy(
    env: &dyn Environment,
    agent: &PolicyAgent,
    ds: &Dataset,
    sem: &SemEquivModel,
    split: Split,
) -> Result<f64> {
    let report = evaluate_mcq(env, ds, split, "agent", |i| {
        let top = top_k_distractors(agent, ds, i, sem, 3)?;
        Ok([ds.item(i).correct_id, top.ids[0], top.ids[1], top.ids[2]])
    })?;
    Ok(report.accuracy)
}

/// Trains a fresh agent against frozen environments. Pre-training (for
/// [`Variant::MlprPretrain`]) runs first and its epochs are additional to
/// `rl_epochs`.
pub fn train_mlpr(
    ds: &Dataset,
    spec: &RewardSpec<'_>,
    cfg: &TrainConfig,
    variant: Variant,
) -> Result<(PolicyAgent, TrainLog)> {
    if cfg.samples_per_item == 0 || cfg.batch == 0 {
        return Err(Error::Invalid("samples_per_item and batch must be positive".into()));
    }
    let before = spec.checksums();
    let root = Rng::new(cfg.seed);
    let mut agent = PolicyAgent::new(ds, cfg.hidden, cfg.dropout_p, &mut root.child(1));
    let mut log = match variant {
        Variant::Mlpr => TrainLog::default(),
        Variant::MlprPretrain => pretrain_agent(&mut agent, ds, cfg, &mut root.child(2))?,
    };

    let mut rng = root.child(3);
    let mut order = ds.indices(Split::Train);
    if order.is_empty() && cfg.rl_epochs > 0 {
        return Err(Error::EmptySplit("train"));
    }
    let mut opt = cfg.optimizer(cfg.lr);
    let mut baseline = 0.0;
    for epoch in 1..=cfg.rl_epochs {
        rng.shuffle(&mut order);
        let (mut reward_sum, mut loss_sum, mut n) = (0.0, 0.0, 0usize);
        for batch in order.chunks(cfg.batch) {
            let b = if cfg.baseline { baseline } else { 0.0 };
            let out = reinforce_step_with_baseline(&agent, spec, ds, batch, cfg.samples_per_item, b, &mut rng)?;
            opt.step(&mut agent.params, &out.grad)?;
            if cfg.baseline {
                baseline = cfg.baseline_decay * baseline + (1.0 - cfg.baseline_decay) * out.mean_reward;
            }
            reward_sum += out.mean_reward * batch.len() as f64;
            loss_sum += out.surrogate_loss * batch.len() as f64;
            n += batch.len();
        }
        let env_accuracy_on_topk = if cfg.eval_every > 0 && epoch % cfg.eval_every == 0 {
            Some(topk_accuracy(spec.environments[0], &agent, ds, &spec.sem, Split::Val)?)
        } else {
            None
        };
        log.records.push(EpochRecord {
            phase: Phase::Rl,
            epoch,
            mean_loss: loss_sum / n as f64,
            mean_reward: Some(reward_sum / n as f64),
            env_accuracy_on_topk,
        });
    }

    for ((name, was), env) in before.iter().zip(&spec.environments) {
        if env.checksum() != *was {
            return Err(Error::EnvironmentMutated(name.clone()));
        }
    }
    Ok((agent, log))
}
