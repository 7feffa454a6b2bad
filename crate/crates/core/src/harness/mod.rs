//! Experiment orchestration: the attack grid, dataset augmentation, the
//! augmentation study, report files and run manifests.

mod config;
mod generators;
mod manifest;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{RunConfig, CONFIG_ENV};
pub use generators::{
    generate_all, read_distractor_file, write_distractor_file, AgentGenerator, DistractorGenerator, DistractorRecord,
    FileGenerator, Generated, MatchingGenerator, OriginalDistractors, PriorGenerator,
};
pub use manifest::{sha256_file, Manifest};

use crate::dataset::{Dataset, Split};
use crate::environment::{evaluate_mcq, evaluate_original, train_discriminator, DiscTrainConfig, Environment};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Accuracy drop caused by swapping in generated distractors.
pub fn delta_acc(acc_original: f64, acc_attacked: f64) -> f64 {
    acc_original - acc_attacked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackCell {
    pub environment: String,
    pub generator: String,
    pub acc_original: f64,
    pub acc_attacked: f64,
    pub delta_acc: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttackReport {
    /// Sorted by environment, then generator.
    pub cells: Vec<AttackCell>,
    pub metadata: BTreeMap<String, String>,
}

impl AttackReport {
    pub fn cell(&self, environment: &str, generator: &str) -> Option<&AttackCell> {
        self.cells
            .iter()
            .find(|c| c.environment == environment && c.generator == generator)
    }

    pub fn to_text(&self) -> String {
        let header = [
            "environment",
            "generator",
            "acc_original",
            "acc_attacked",
            "delta_acc",
            "n",
        ];
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.environment.clone(),
                    c.generator.clone(),
                    pct(c.acc_original),
                    pct(c.acc_attacked),
                    pct(c.delta_acc),
                    c.n.to_string(),
                ]
            })
            .collect();
        let mut out = table(&header, &rows);
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        out
    }

    /// One `cell` object per line, then one `metadata` object.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for c in &self.cells {
            let mut v = serde_json::to_value(c).expect("cell serializes");
            v["kind"] = "cell".into();
            let _ = writeln!(out, "{v}");
        }
        let _ = writeln!(
            out,
            "{}",
            serde_json::json!({"kind": "metadata", "metadata": self.metadata})
        );
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut report = AttackReport::default();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |msg: String| Error::Invalid(format!("attack report line {}: {msg}", n + 1));
            let v: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            match v["kind"].as_str() {
                Some("cell") => report
                    .cells
                    .push(serde_json::from_value(v).map_err(|e| bad(e.to_string()))?),
                Some("metadata") => {
                    report.metadata = serde_json::from_value(v["metadata"].clone()).map_err(|e| bad(e.to_string()))?
                }
                _ => return Err(bad("not an attack report record".into())),
            }
        }
        Ok(report)
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Left-aligned first column, right-aligned numbers.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (j, c) in cells.enumerate() {
            if j > 0 {
                s.push_str("  ");
            }
            if j < 2 {
                let _ = write!(s, "{c:<w$}", w = widths[j]);
            } else {
                let _ = write!(s, "{c:>w$}", w = widths[j]);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(&mut header.iter().copied());
    for r in rows {
        out.push_str(&line(&mut r.iter().map(String::as_str)));
    }
    out
}

/// Accuracy of every environment on the test split with original and with
/// generated distractors.
pub fn run_attack(
    ds: &Dataset,
    environments: &[&dyn Environment],
    generators: &[&dyn DistractorGenerator],
    seed: u64,
) -> Result<AttackReport> {
    let test = ds.indices(Split::Test);
    let mut choices: Vec<(String, BTreeMap<usize, [usize; 4]>)> = Vec::new();
    for g in generators {
        let mut m = BTreeMap::new();
        for &i in &test {
            let [a, b, c] = g.generate(ds, i)?.ids;
            m.insert(i, [ds.item(i).correct_id, a, b, c]);
        }
        choices.push((g.name().to_string(), m));
    }
    let mut cells = Vec::new();
    let mut checksums = BTreeMap::new();
    for env in environments {
        let before = env.checksum();
        let acc_original = evaluate_original(*env, ds, Split::Test)?.accuracy;
        for (name, m) in &choices {
            let r = evaluate_mcq(*env, ds, Split::Test, name, |i| Ok(m[&i]))?;
            cells.push(AttackCell {
                environment: env.name().to_string(),
                generator: name.clone(),
                acc_original,
                acc_attacked: r.accuracy,
                delta_acc: delta_acc(acc_original, r.accuracy),
                n: r.n,
            });
        }
        if env.checksum() != before {
            return Err(Error::EnvironmentMutated(env.name().to_string()));
        }
        checksums.insert(format!("env.{}.checksum", env.name()), before);
    }
    cells.sort_by(|a, b| (&a.environment, &a.generator).cmp(&(&b.environment, &b.generator)));
    let mut metadata = checksums;
    metadata.insert("dataset".into(), ds.fingerprint());
    metadata.insert("seed".into(), seed.to_string());
    metadata.insert("split".into(), "test".into());
    Ok(AttackReport { cells, metadata })
}

/// Replaces the distractors of exactly `⌊ratio·n⌋` seeded-random items with
/// the generator's. Returns the new dataset and the swapped item indices in
/// ascending order.
pub fn augment_dataset(
    ds: &Dataset,
    generator: &dyn DistractorGenerator,
    ratio: f64,
    rng: &mut Rng,
) -> Result<(Dataset, Vec<usize>)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Invalid(format!("ratio must be in [0, 1], got {ratio}")));
    }
    let count = (ratio * ds.len() as f64).floor() as usize;
    let mut chosen = rng.choose_distinct(ds.len(), count);
    chosen.sort_unstable();
    let replacements = chosen
        .iter()
        .map(|&i| Ok((i, generator.generate(ds, i)?.ids)))
        .collect::<Result<Vec<_>>>()?;
    Ok((ds.with_distractors(&replacements)?, chosen))
}

pub const MIXES: [&str; 3] = ["[O]", "[A]", "0.5[O]+0.5[A]"];
pub const EVAL_SETS: [&str; 2] = ["[O]", "[A]"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationCell {
    pub train_mix: String,
    pub eval_set: String,
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AugmentationReport {
    /// Row-major over [`MIXES`] × [`EVAL_SETS`].
    pub cells: Vec<AugmentationCell>,
    pub metadata: BTreeMap<String, String>,
}

impl AugmentationReport {
    pub fn accuracy(&self, train_mix: &str, eval_set: &str) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.train_mix == train_mix && c.eval_set == eval_set)
            .map(|c| c.accuracy)
    }

    pub fn to_text(&self) -> String {
        let header = ["trained on", "", "acc@[O]", "acc@[A]"];
        let rows: Vec<Vec<String>> = MIXES
            .iter()
            .map(|m| {
                let mut r = vec![m.to_string(), String::new()];
                r.extend(
                    EVAL_SETS
                        .iter()
                        .map(|e| self.accuracy(m, e).map(pct).unwrap_or_default()),
                );
                r
            })
            .collect();
        let mut out = table(&header, &rows);
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for c in &self.cells {
            let mut v = serde_json::to_value(c).expect("cell serializes");
            v["kind"] = "augmentation".into();
            let _ = writeln!(out, "{v}");
        }
        let _ = writeln!(
            out,
            "{}",
            serde_json::json!({"kind": "metadata", "metadata": self.metadata})
        );
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut report = AugmentationReport::default();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |msg: String| Error::Invalid(format!("augmentation report line {}: {msg}", n + 1));
            let v: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            match v["kind"].as_str() {
                Some("augmentation") => report
                    .cells
                    .push(serde_json::from_value(v).map_err(|e| bad(e.to_string()))?),
                Some("metadata") => {
                    report.metadata = serde_json::from_value(v["metadata"].clone()).map_err(|e| bad(e.to_string()))?
                }
                _ => return Err(bad("not an augmentation report record".into())),
            }
        }
        Ok(report)
    }
}

/// Trains a discriminator on each of the original, fully generated and
/// half-swapped datasets and evaluates each on the original and the fully
/// generated test split.
///
/// Every discriminator is trained with `Rng::new(seed)`, so when `seed` is the
/// seed of the attacked environment the `[O]` model reproduces it exactly.
pub fn run_augmentation_experiment(
    ds: &Dataset,
    generator: &dyn DistractorGenerator,
    env_config: &DiscTrainConfig,
    seed: u64,
) -> Result<AugmentationReport> {
    let root = Rng::new(seed);
    let (all_a, _) = augment_dataset(ds, generator, 1.0, &mut root.child(101))?;
    let (mix, _) = augment_dataset(ds, generator, 0.5, &mut root.child(102))?;
    let eval_sets = [ds, &all_a];
    let mut cells = Vec::new();
    for (name, train_on) in MIXES.iter().zip([ds, &all_a, &mix]) {
        let disc = train_discriminator(train_on, env_config, &mut Rng::new(seed))?;
        for (eval_name, eval_ds) in EVAL_SETS.iter().zip(eval_sets) {
            let r = evaluate_original(&disc, eval_ds, Split::Test)?;
            cells.push(AugmentationCell {
                train_mix: name.to_string(),
                eval_set: eval_name.to_string(),
                accuracy: r.accuracy,
                n: r.n,
            });
        }
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("dataset".into(), ds.fingerprint());
    metadata.insert("generator".into(), generator.name().to_string());
    metadata.insert("seed".into(), seed.to_string());
    metadata.insert("split".into(), "test".into());
    metadata.insert(
        "env_config".into(),
        serde_json::to_string(env_config).expect("config serializes"),
    );
    Ok(AugmentationReport { cells, metadata })
}

/// Writes `<stem>.txt` and `<stem>.jsonl` into `dir`.
pub fn write_report_pair(dir: &Path, stem: &str, text: &str, jsonl: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (ext, body) in [("txt", text), ("jsonl", jsonl)] {
        let p = dir.join(format!("{stem}.{ext}"));
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
