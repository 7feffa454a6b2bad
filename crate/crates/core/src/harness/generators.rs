//! Sources of three distractors per item, and the generated-distractor file.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{top_k_distractors, PolicyAgent, SemEquivModel};
use crate::baselines::{adversarial_matching, MatchingScorer, QTypePriorTable};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Three distractors for one item.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub ids: [usize; 3],
    /// Policy probabilities of the three picks, for policy-based generators.
    pub probs: Option<[f64; 3]>,
}

pub trait DistractorGenerator {
    /// Label written to reports and distractor files.
    fn name(&self) -> &str;

    fn generate(&self, ds: &Dataset, item: usize) -> Result<Generated>;
}

/// The item's own distractors.
pub struct OriginalDistractors;

impl DistractorGenerator for OriginalDistractors {
    fn name(&self) -> &str {
        "original"
    }

    fn generate(&self, ds: &Dataset, item: usize) -> Result<Generated> {
        Ok(Generated {
            ids: ds.item(item).original_distractor_ids,
            probs: None,
        })
    }
}

/// Top-3 of a policy-shaped model (the trained agent or the failure baseline).
pub struct AgentGenerator<'a> {
    pub name: String,
    pub agent: &'a PolicyAgent,
    pub sem: &'a SemEquivModel,
}

impl DistractorGenerator for AgentGenerator<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, ds: &Dataset, item: usize) -> Result<Generated> {
        let top = top_k_distractors(self.agent, ds, item, self.sem, 3)?;
        Ok(Generated {
            ids: [top.ids[0], top.ids[1], top.ids[2]],
            probs: Some([top.probs[0], top.probs[1], top.probs[2]]),
        })
    }
}

pub struct PriorGenerator<'a> {
    pub table: &'a QTypePriorTable,
    pub sem: &'a SemEquivModel,
}

impl DistractorGenerator for PriorGenerator<'_> {
    fn name(&self) -> &str {
        "prior"
    }

    fn generate(&self, ds: &Dataset, item: usize) -> Result<Generated> {
        Ok(Generated {
            ids: self.table.query(ds, item, self.sem)?,
            probs: None,
        })
    }
}

pub struct MatchingGenerator<'a> {
    pub scorer: MatchingScorer,
    pub sem: &'a SemEquivModel,
}

impl DistractorGenerator for MatchingGenerator<'_> {
    fn name(&self) -> &str {
        "matching"
    }

    fn generate(&self, ds: &Dataset, item: usize) -> Result<Generated> {
        Ok(Generated {
            ids: adversarial_matching(ds, item, &self.scorer, self.sem)?,
            probs: None,
        })
    }
}

/// One line of a generated-distractor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistractorRecord {
    pub item_id: String,
    pub distractor_texts: [String; 3],
    pub distractor_ids: [usize; 3],
    pub policy_probs: Option<[f64; 3]>,
    pub choice_source: String,
}

/// Runs `generator` over every item of `ds`, in dataset order.
pub fn generate_all(generator: &dyn DistractorGenerator, ds: &Dataset) -> Result<Vec<DistractorRecord>> {
    (0..ds.len())
        .map(|i| {
            let g = generator.generate(ds, i)?;
            Ok(DistractorRecord {
                item_id: ds.item(i).id.clone(),
                distractor_texts: g.ids.map(|d| ds.pool().text(d).to_string()),
                distractor_ids: g.ids,
                policy_probs: g.probs,
                choice_source: generator.name().to_string(),
            })
        })
        .collect()
}

pub fn write_distractor_file(path: &Path, records: &[DistractorRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_distractor_file(path: &Path) -> Result<Vec<DistractorRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: n + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Replays distractors read from a file, keyed by item id.
pub struct FileGenerator {
    name: String,
    by_item: HashMap<String, DistractorRecord>,
}

impl FileGenerator {
    /// Checks every record's ids against `ds`'s pool texts.
    pub fn new(records: Vec<DistractorRecord>, ds: &Dataset) -> Result<Self> {
        let name = records
            .first()
            .map(|r| r.choice_source.clone())
            .ok_or_else(|| Error::Invalid("distractor file is empty".into()))?;
        let pool = ds.pool();
        let mut by_item = HashMap::with_capacity(records.len());
        for r in records {
            for (&id, text) in r.distractor_ids.iter().zip(&r.distractor_texts) {
                if id >= pool.len() || pool.text(id) != text {
                    return Err(Error::PoolMismatch {
                        expected: format!("{text:?} at index {id}"),
                        got: if id < pool.len() {
                            format!("{:?}", pool.text(id))
                        } else {
                            "out of range".into()
                        },
                    });
                }
            }
            by_item.insert(r.item_id.clone(), r);
        }
        Ok(Self { name, by_item })
    }

    pub fn load(path: &Path, ds: &Dataset) -> Result<Self> {
        Self::new(read_distractor_file(path)?, ds)
    }
}

impl DistractorGenerator for FileGenerator {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, ds: &Dataset, item: usize) -> Result<Generated> {
        let id = &ds.item(item).id;
        let r = self.by_item.get(id).ok_or_else(|| Error::InvalidItem {
            item: id.clone(),
            msg: format!("no distractors from {:?}", self.name),
        })?;
        Ok(Generated {
            ids: r.distractor_ids,
            probs: r.policy_probs,
        })
    }
}
