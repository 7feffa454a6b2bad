//! Browser bindings for a small interactive version of the pipeline:
//! generate a synthetic benchmark, train the scoring model, train an
//! attacker and inspect individual questions.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use distractor_core::agent::{top_k_distractors, PolicyAgent, SemEquivModel};
use distractor_core::baselines::{adversarial_matching, build_qtype_prior, MatchingScorer};
use distractor_core::dataset::{generate_synthetic, Dataset, Split, SyntheticSpec};
use distractor_core::environment::{
    evaluate_original, train_discriminator, DiscTrainConfig, Discriminator, Environment,
};
use distractor_core::reinforce::{topk_accuracy, train_mlpr, Phase, RewardSpec, TrainConfig, Variant};
use distractor_core::Rng;

fn js_err(e: distractor_core::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

#[wasm_bindgen]
pub struct Demo {
    ds: Dataset,
    seed: u64,
    env: Option<Discriminator>,
    agent: Option<PolicyAgent>,
}

#[derive(Serialize)]
struct DatasetSummary {
    items: usize,
    pool: usize,
    train: usize,
    test: usize,
}

#[derive(Serialize)]
struct AttackSummary {
    variant: &'static str,
    reward_curve: Vec<f64>,
    pretrain_loss: Vec<f64>,
    acc_original: f64,
    acc_attacked: f64,
    delta_acc: f64,
}

#[derive(Serialize)]
struct Choice {
    text: String,
    score: Option<f64>,
    prob: Option<f64>,
}

#[derive(Serialize)]
struct ItemView {
    id: String,
    qtype: String,
    question: String,
    correct: Choice,
    original: Vec<Choice>,
    agent: Vec<Choice>,
    matching: Vec<String>,
    prior: Vec<String>,
    excluded: Vec<String>,
}

#[wasm_bindgen]
impl Demo {
    /// Builds a synthetic dataset; 16-dim images and 12-dim text keep it fast.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, separability: f64, n_items: usize, k: usize) -> Result<Demo, JsValue> {
        let spec = SyntheticSpec {
            n_items,
            k,
            d_img: 16,
            d_txt: 12,
            separability,
            ..SyntheticSpec::default()
        };
        let ds = generate_synthetic(&spec, seed as u64).map_err(js_err)?;
        Ok(Demo {
            ds,
            seed: seed as u64,
            env: None,
            agent: None,
        })
    }

    pub fn summary(&self) -> String {
        to_json(&DatasetSummary {
            items: self.ds.len(),
            pool: self.ds.pool().len(),
            train: self.ds.indices(Split::Train).len(),
            test: self.ds.indices(Split::Test).len(),
        })
    }

    /// Trains the scoring model with Adam and returns its test accuracy on
    /// the original choices.
    pub fn train_environment(&mut self, epochs: usize, hidden: usize, lr: f64) -> Result<f64, JsValue> {
        let cfg = DiscTrainConfig {
            epochs,
            hidden,
            lr,
            adam: true,
            ..DiscTrainConfig::default()
        };
        let env = train_discriminator(&self.ds, &cfg, &mut Rng::new(self.seed)).map_err(js_err)?;
        let acc = evaluate_original(&env, &self.ds, Split::Test).map_err(js_err)?.accuracy;
        self.env = Some(env);
        self.agent = None;
        Ok(acc)
    }

    /// Trains an attacker against the current environment. Returns JSON with
    /// the per-epoch mean reward and the accuracy drop on the test split.
    pub fn train_attacker(
        &mut self,
        pretrain: bool,
        rl_epochs: usize,
        hidden: usize,
        lr: f64,
        tau: f64,
    ) -> Result<String, JsValue> {
        let env = self
            .env
            .as_ref()
            .ok_or_else(|| JsValue::from_str("train the environment first"))?;
        let sem = SemEquivModel::new(self.ds.pool(), tau);
        let spec = RewardSpec::new(vec![env as &dyn Environment], sem.clone()).map_err(js_err)?;
        let variant = if pretrain { Variant::MlprPretrain } else { Variant::Mlpr };
        let cfg = TrainConfig {
            rl_epochs,
            pretrain_epochs: 40,
            hidden,
            lr,
            seed: self.seed,
            ..TrainConfig::default()
        };
        let (agent, log) = train_mlpr(&self.ds, &spec, &cfg, variant).map_err(js_err)?;
        let acc_original = evaluate_original(env, &self.ds, Split::Test).map_err(js_err)?.accuracy;
        let acc_attacked = topk_accuracy(env, &agent, &self.ds, &sem, Split::Test).map_err(js_err)?;
        self.agent = Some(agent);
        Ok(to_json(&AttackSummary {
            variant: variant.as_str(),
            reward_curve: log.phase(Phase::Rl).filter_map(|r| r.mean_reward).collect(),
            pretrain_loss: log.phase(Phase::Pretrain).map(|r| r.mean_loss).collect(),
            acc_original,
            acc_attacked,
            delta_acc: acc_original - acc_attacked,
        }))
    }

    /// One test question with its original choices and every generator's
    /// picks under equivalence threshold `tau`.
    pub fn inspect_item(&self, nth_test: usize, tau: f64, lambda: f64) -> Result<String, JsValue> {
        let test = self.ds.indices(Split::Test);
        let i = *test
            .get(nth_test % test.len().max(1))
            .ok_or_else(|| JsValue::from_str("empty test split"))?;
        let item = self.ds.item(i);
        let pool = self.ds.pool();
        let sem = SemEquivModel::new(pool, tau);
        let score = |a: usize| {
            self.env.as_ref().and_then(|e| {
                e.score(&item.image_feature, self.ds.question_embedding(i), pool.embedding(a))
                    .ok()
            })
        };
        let agent = match &self.agent {
            Some(a) => {
                let top = top_k_distractors(a, &self.ds, i, &sem, 3).map_err(js_err)?;
                top.ids
                    .iter()
                    .zip(&top.probs)
                    .map(|(&d, &p)| Choice {
                        text: pool.text(d).to_string(),
                        score: score(d),
                        prob: Some(p),
                    })
                    .collect()
            }
            None => Vec::new(),
        };
        let scorer = MatchingScorer::new(lambda).map_err(js_err)?;
        let matching = adversarial_matching(&self.ds, i, &scorer, &sem).map_err(js_err)?;
        let prior = build_qtype_prior(&self.ds)
            .and_then(|t| t.query(&self.ds, i, &sem))
            .map_err(js_err)?;
        let excluded = sem
            .equivalents(item.correct_id)
            .into_iter()
            .filter(|&j| j != item.correct_id)
            .map(|j| pool.text(j).to_string())
            .collect();
        Ok(to_json(&ItemView {
            id: item.id.clone(),
            qtype: item.qtype.clone(),
            question: item.question_tokens.join(" "),
            correct: Choice {
                text: pool.text(item.correct_id).to_string(),
                score: score(item.correct_id),
                prob: None,
            },
            original: item
                .original_distractor_ids
                .iter()
                .map(|&d| Choice {
                    text: pool.text(d).to_string(),
                    score: score(d),
                    prob: None,
                })
                .collect(),
            agent,
            matching: matching.iter().map(|&d| pool.text(d).to_string()).collect(),
            prior: prior.iter().map(|&d| pool.text(d).to_string()).collect(),
            excluded,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn end_to_end_small() {
        let mut demo = Demo::new(3, 0.9, 300, 40).unwrap();
        let s: serde_json::Value = serde_json::from_str(&demo.summary()).unwrap();
        assert_eq!(s["items"], 300);
        let acc = demo.train_environment(10, 16, 0.005).unwrap();
        assert!((0.0..=1.0).contains(&acc));
        let out: serde_json::Value =
            serde_json::from_str(&demo.train_attacker(false, 5, 16, 0.1, 0.95).unwrap()).unwrap();
        assert_eq!(out["reward_curve"].as_array().unwrap().len(), 5);
        let view: serde_json::Value = serde_json::from_str(&demo.inspect_item(0, 0.95, 1.0).unwrap()).unwrap();
        assert_eq!(view["agent"].as_array().unwrap().len(), 3);
        assert_eq!(view["original"].as_array().unwrap().len(), 3);
    }
}
