use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use super::text::{normalize_text, tokenize};
use super::EmbeddingTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub text: String,
    pub frequency: u64,
    pub embedding: Vec<f64>,
}

/// The closed answer vocabulary the agent chooses from.
///
/// Entries are ordered by descending frequency, then text. Embeddings are
/// empty until [`CandidatePool::embed`] is called.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    entries: Vec<PoolEntry>,
    index: HashMap<String, usize>,
    min_freq: u64,
    d_txt: usize,
    fingerprint: OnceLock<String>,
}

/// Share of the raw answers covered by a pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    /// Fraction of distinct normalized answer strings kept.
    pub unique: f64,
    /// Fraction of answer occurrences kept.
    pub occurrences: f64,
}

fn merge_counts<S: AsRef<str>>(raw: &[(S, u64)]) -> BTreeMap<String, u64> {
    let mut merged = BTreeMap::new();
    for (text, count) in raw {
        let norm = normalize_text(text.as_ref());
        if norm.is_empty() {
            continue;
        }
        *merged.entry(norm).or_insert(0) += count;
    }
    merged
}

/// Normalizes and merges answer counts, keeps those with count ≥ `min_freq`,
/// and orders them by (descending count, text).
pub fn build_candidate_pool<S: AsRef<str>>(raw: &[(S, u64)], min_freq: u64) -> Result<CandidatePool> {
    let mut kept: Vec<(String, u64)> = merge_counts(raw).into_iter().filter(|&(_, c)| c >= min_freq).collect();
    if kept.is_empty() {
        return Err(Error::EmptyPool { min_freq });
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let entries = kept
        .into_iter()
        .map(|(text, frequency)| PoolEntry {
            text,
            frequency,
            embedding: Vec::new(),
        })
        .collect();
    Ok(CandidatePool::from_entries(entries, min_freq))
}

/// Coverage of `pool` over the raw answer list.
pub fn pool_coverage<S: AsRef<str>>(raw: &[(S, u64)], pool: &CandidatePool) -> Coverage {
    let merged = merge_counts(raw);
    let total_unique = merged.len().max(1) as f64;
    let total_occ = merged.values().sum::<u64>().max(1) as f64;
    let (mut u, mut o) = (0usize, 0u64);
    for (text, count) in &merged {
        if pool.lookup(text).is_some() {
            u += 1;
            o += count;
        }
    }
    Coverage {
        unique: u as f64 / total_unique,
        occurrences: o as f64 / total_occ,
    }
}

impl CandidatePool {
    fn from_entries(entries: Vec<PoolEntry>, min_freq: u64) -> Self {
        let index = entries.iter().enumerate().map(|(i, e)| (e.text.clone(), i)).collect();
        let d_txt = entries.first().map_or(0, |e| e.embedding.len());
        Self {
            entries,
            index,
            min_freq,
            d_txt,
            fingerprint: OnceLock::new(),
        }
    }

    /// Pool from already-ordered entries (e.g. a pool file). Texts must be
    /// unique after normalization.
    pub fn from_ordered(entries: Vec<PoolEntry>, min_freq: u64) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            let norm = normalize_text(&e.text);
            if norm != e.text {
                return Err(Error::Invalid(format!("pool entry {i} {:?} is not normalized", e.text)));
            }
            if let Some(j) = seen.insert(norm, i) {
                return Err(Error::Invalid(format!(
                    "pool entries {j} and {i} share text {:?}",
                    e.text
                )));
            }
            if e.frequency < min_freq {
                return Err(Error::Invalid(format!(
                    "pool entry {:?} has frequency {} below min_freq {min_freq}",
                    e.text, e.frequency
                )));
            }
        }
        if entries.is_empty() {
            return Err(Error::EmptyPool { min_freq });
        }
        let pool = Self::from_entries(entries, min_freq);
        if pool.entries.iter().any(|e| e.embedding.len() != pool.d_txt) {
            return Err(Error::Invalid("pool embeddings have mixed dimensions".into()));
        }
        Ok(pool)
    }

    /// Fills each entry's embedding with the mean token vector of its text.
    pub fn embed(mut self, table: &EmbeddingTable) -> Self {
        for e in &mut self.entries {
            e.embedding = table.embed_tokens(&tokenize(&e.text));
        }
        self.d_txt = table.dim();
        self.fingerprint = OnceLock::new();
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn min_freq(&self) -> u64 {
        self.min_freq
    }

    pub fn d_txt(&self) -> usize {
        self.d_txt
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn entry(&self, idx: usize) -> &PoolEntry {
        &self.entries[idx]
    }

    pub fn text(&self, idx: usize) -> &str {
        &self.entries[idx].text
    }

    pub fn embedding(&self, idx: usize) -> &[f64] {
        &self.entries[idx].embedding
    }

    /// Index of an answer string, normalizing it first.
    pub fn lookup(&self, text: &str) -> Option<usize> {
        self.index.get(&normalize_text(text)).copied()
    }

    /// SHA-256 over texts, frequencies and embedding bits.
    pub fn fingerprint(&self) -> &str {
        self.fingerprint.get_or_init(|| self.compute_fingerprint())
    }

    fn compute_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(e.text.as_bytes());
            h.update([0]);
            h.update(e.frequency.to_le_bytes());
            for x in &e.embedding {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Writes `text<TAB>frequency` lines.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\n", e.text, e.frequency));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads a pool file; entries keep file order and get no embeddings.
    pub fn load(path: &Path, min_freq: u64) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |msg: &str| Error::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                msg: msg.to_string(),
            };
            let (t, f) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected text<TAB>frequency"))?;
            let frequency = f.trim().parse().map_err(|_| malformed("bad frequency"))?;
            entries.push(PoolEntry {
                text: t.to_string(),
                frequency,
                embedding: Vec::new(),
            });
        }
        Self::from_ordered(entries, min_freq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(p: &CandidatePool) -> Vec<(&str, u64)> {
        p.entries().iter().map(|e| (e.text.as_str(), e.frequency)).collect()
    }

    #[test]
    fn no_filtering_at_min_freq_one() {
        let p = build_candidate_pool(&[("a", 3), ("b", 1)], 1).unwrap();
        assert_eq!(texts(&p), vec![("a", 3), ("b", 1)]);
    }

    #[test]
    fn case_folding_merges_before_filtering() {
        // Oracle: brute-force merge of the toy list.
        let raw = [("a", 3u64), ("b", 1), ("A", 1)];
        let mut oracle: Vec<(String, u64)> = Vec::new();
        for (t, c) in raw {
            let t = t.to_lowercase();
            match oracle.iter_mut().find(|(x, _)| *x == t) {
                Some((_, n)) => *n += c,
                None => oracle.push((t, c)),
            }
        }
        oracle.retain(|(_, c)| *c >= 2);
        assert_eq!(oracle, vec![("a".to_string(), 4)]);

        let p = build_candidate_pool(&raw, 2).unwrap();
        assert_eq!(texts(&p), vec![("a", 4)]);
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn empty_after_filter_is_error() {
        assert!(matches!(
            build_candidate_pool(&[("a", 1)], 5),
            Err(Error::EmptyPool { min_freq: 5 })
        ));
    }

    #[test]
    fn ordering_ties_by_text() {
        let p = build_candidate_pool(&[("dog", 2), ("cat", 2), ("emu", 9)], 1).unwrap();
        assert_eq!(texts(&p), vec![("emu", 9), ("cat", 2), ("dog", 2)]);
        assert_eq!(p.lookup("Cat!"), Some(1));
    }

    #[test]
    fn coverage_counts_both_ways() {
        let raw = [("a", 8u64), ("b", 1), ("c", 1)];
        let p = build_candidate_pool(&raw, 2).unwrap();
        let c = pool_coverage(&raw, &p);
        assert!((c.unique - 1.0 / 3.0).abs() < 1e-12);
        assert!((c.occurrences - 0.8).abs() < 1e-12);
    }

    #[test]
    fn pool_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.tsv");
        let p = build_candidate_pool(&[("red car", 4), ("blue", 7)], 1).unwrap();
        p.save(&path).unwrap();
        let back = CandidatePool::load(&path, 1).unwrap();
        assert_eq!(texts(&back), texts(&p));
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "blue\t7\nred car\t4\n");
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            raw in prop::collection::vec(("[a-dA-D]{1,2}", 1u64..20), 1..30),
            seed in any::<u64>(),
            min_freq in 1u64..10,
        ) {
            let mut shuffled = raw.clone();
            crate::rng::Rng::new(seed).shuffle(&mut shuffled);
            let a = build_candidate_pool(&raw, min_freq);
            let b = build_candidate_pool(&shuffled, min_freq);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a.entries(), b.entries());
                    prop_assert!(a.entries().iter().all(|e| e.frequency >= min_freq));
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "one ordering failed"),
            }
        }
    }
}
