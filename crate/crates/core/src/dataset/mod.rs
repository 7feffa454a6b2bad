//! Multiple-choice items, the candidate answer pool, text embeddings and
//! dataset files.

mod embedding;
mod io;
mod pool;
mod synthetic;
mod text;

use std::collections::HashSet;

use sha2::{Digest, Sha256};

pub use embedding::{embed_question, EmbeddingTable, OovPolicy};
pub use io::{load_dataset, read_features, save_dataset, write_features, DatasetHeader, DATASET_FILE, FEATURES_FILE};
pub use pool::{build_candidate_pool, pool_coverage, CandidatePool, Coverage, PoolEntry};
pub use synthetic::{generate_synthetic, generate_synthetic_with_world, SyntheticSpec};
pub use text::{normalize_text, tokenize};

use crate::error::{Error, Result};

/// One multiple-choice question: an image, a question, the correct answer
/// and three original wrong answers, all answers as pool indices.
#[derive(Debug, Clone, PartialEq)]
pub struct McqItem {
    pub id: String,
    pub qtype: String,
    pub question_tokens: Vec<String>,
    pub image_feature: Vec<f64>,
    pub correct_id: usize,
    pub original_distractor_ids: [usize; 3],
}

impl McqItem {
    /// Correct answer plus original distractors.
    pub fn original_choices(&self) -> [usize; 4] {
        let [a, b, c] = self.original_distractor_ids;
        [self.correct_id, a, b, c]
    }

    fn validate(&self, k: usize, d_img: usize) -> Result<()> {
        let bad = |msg: String| Error::InvalidItem {
            item: self.id.clone(),
            msg,
        };
        if self.correct_id >= k {
            return Err(bad(format!("correct id {} outside pool of {k}", self.correct_id)));
        }
        let d = self.original_distractor_ids;
        if let Some(x) = d.iter().find(|&&x| x >= k) {
            return Err(bad(format!("distractor id {x} outside pool of {k}")));
        }
        if d.contains(&self.correct_id) {
            return Err(bad("correct answer is also a distractor".into()));
        }
        if d[0] == d[1] || d[0] == d[2] || d[1] == d[2] {
            return Err(bad("distractors are not distinct".into()));
        }
        if self.image_feature.len() != d_img {
            return Err(Error::dim(
                format!("image feature of item {}", self.id),
                d_img,
                self.image_feature.len(),
            ));
        }
        if self.image_feature.iter().any(|x| !x.is_finite()) {
            return Err(bad("image feature has non-finite values".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    /// Deterministic 80/10/10 assignment from an item id.
    pub fn from_id(id: &str) -> Split {
        let h = Sha256::digest(id.as_bytes());
        match h[0] % 10 {
            0..=7 => Split::Train,
            8 => Split::Val,
            _ => Split::Test,
        }
    }
}

/// A validated set of items over a shared pool and embedding table.
///
/// Question embeddings are computed once at construction.
#[derive(Debug, Clone)]
pub struct Dataset {
    items: Vec<McqItem>,
    splits: Vec<Split>,
    pool: CandidatePool,
    embeddings: EmbeddingTable,
    question_embeddings: Vec<Vec<f64>>,
    d_img: usize,
}

impl Dataset {
    pub fn new(
        items: Vec<McqItem>,
        splits: Vec<Split>,
        pool: CandidatePool,
        embeddings: EmbeddingTable,
        d_img: usize,
    ) -> Result<Self> {
        if splits.len() != items.len() {
            return Err(Error::dim("split assignments", items.len(), splits.len()));
        }
        if pool.d_txt() != embeddings.dim() {
            return Err(Error::dim("pool embeddings", embeddings.dim(), pool.d_txt()));
        }
        let mut ids = HashSet::new();
        for item in &items {
            item.validate(pool.len(), d_img)?;
            if !ids.insert(item.id.as_str()) {
                return Err(Error::InvalidItem {
                    item: item.id.clone(),
                    msg: "duplicate id".into(),
                });
            }
        }
        let question_embeddings = items
            .iter()
            .map(|it| embeddings.embed_tokens(&it.question_tokens))
            .collect();
        Ok(Self {
            items,
            splits,
            pool,
            embeddings,
            question_embeddings,
            d_img,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[McqItem] {
        &self.items
    }

    pub fn item(&self, i: usize) -> &McqItem {
        &self.items[i]
    }

    pub fn split_of(&self, i: usize) -> Split {
        self.splits[i]
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Item positions in `split`, ascending.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.items.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn pool(&self) -> &CandidatePool {
        &self.pool
    }

    pub fn embeddings(&self) -> &EmbeddingTable {
        &self.embeddings
    }

    pub fn question_embedding(&self, i: usize) -> &[f64] {
        &self.question_embeddings[i]
    }

    pub fn d_img(&self) -> usize {
        self.d_img
    }

    pub fn d_txt(&self) -> usize {
        self.embeddings.dim()
    }

    /// `image ⊕ question` input for the policy network.
    pub fn policy_input(&self, i: usize) -> Vec<f64> {
        let mut c = self.items[i].image_feature.clone();
        c.extend_from_slice(&self.question_embeddings[i]);
        c
    }

    /// Copy with new distractors for some items. Everything else is shared.
    pub fn with_distractors(&self, replacements: &[(usize, [usize; 3])]) -> Result<Dataset> {
        let mut out = self.clone();
        for &(i, ids) in replacements {
            let item = &mut out.items[i];
            item.original_distractor_ids = ids;
            item.validate(self.pool.len(), self.d_img)?;
        }
        Ok(out)
    }

    /// SHA-256 over items, splits and the pool fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.pool.fingerprint().as_bytes());
        for (item, split) in self.items.iter().zip(&self.splits) {
            h.update(item.id.as_bytes());
            h.update([0]);
            h.update(item.qtype.as_bytes());
            h.update([0]);
            for t in &item.question_tokens {
                h.update(t.as_bytes());
                h.update([1]);
            }
            for x in &item.image_feature {
                h.update(x.to_le_bytes());
            }
            for id in item.original_choices() {
                h.update((id as u64).to_le_bytes());
            }
            h.update(split.as_str().as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_pool() -> (CandidatePool, EmbeddingTable) {
        let mut table = EmbeddingTable::new(2, OovPolicy::SkipToken);
        for (i, t) in ["a", "b", "c", "d", "e"].iter().enumerate() {
            table.insert(*t, vec![i as f64, 1.0]).unwrap();
        }
        let raw: Vec<(&str, u64)> = vec![("a", 5), ("b", 4), ("c", 3), ("d", 2), ("e", 1)];
        (build_candidate_pool(&raw, 1).unwrap().embed(&table), table)
    }

    fn item(id: &str, correct: usize, d: [usize; 3]) -> McqItem {
        McqItem {
            id: id.into(),
            qtype: "what".into(),
            question_tokens: vec!["a".into()],
            image_feature: vec![0.0; 3],
            correct_id: correct,
            original_distractor_ids: d,
        }
    }

    #[test]
    fn rejects_correct_among_distractors() {
        let (pool, table) = tiny_pool();
        let err = Dataset::new(vec![item("q7", 1, [1, 2, 3])], vec![Split::Train], pool, table, 3).unwrap_err();
        assert!(err.to_string().contains("q7"), "{err}");
    }

    #[test]
    fn rejects_wrong_feature_length() {
        let (pool, table) = tiny_pool();
        let mut it = item("q1", 0, [1, 2, 3]);
        it.image_feature.push(1.0);
        let err = Dataset::new(vec![it], vec![Split::Train], pool, table, 3).unwrap_err();
        assert!(matches!(
            err,
            Error::Dimension {
                expected: 3,
                got: 4,
                ..
            }
        ));
    }

    #[test]
    fn rejects_out_of_pool_index() {
        let (pool, table) = tiny_pool();
        let err = Dataset::new(vec![item("q1", 0, [1, 2, 9])], vec![Split::Train], pool, table, 3).unwrap_err();
        assert!(matches!(err, Error::InvalidItem { .. }));
    }

    #[test]
    fn splits_partition_items() {
        let (pool, table) = tiny_pool();
        let items: Vec<_> = (0..5).map(|i| item(&format!("q{i}"), 0, [1, 2, 3])).collect();
        let splits = vec![Split::Train, Split::Test, Split::Val, Split::Train, Split::Test];
        let ds = Dataset::new(items, splits, pool, table, 3).unwrap();
        let mut all: Vec<usize> = [Split::Train, Split::Val, Split::Test]
            .iter()
            .flat_map(|&s| ds.indices(s))
            .collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        assert_eq!(ds.question_embedding(0), &[0.0, 1.0]);
    }
}
