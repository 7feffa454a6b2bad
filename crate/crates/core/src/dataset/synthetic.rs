//! Seeded synthetic multiple-choice data.
//!
//! Answers belong to latent concepts. An answer's text is a concept word plus
//! a unique made-up word, so its embedding leans toward the concept. A small
//! share of answers are reorderings of another answer's words: different text,
//! identical embedding. Image features are a fixed random projection of the
//! correct answer's concept vector plus `detail` times its unique-word vector,
//! mixed with noise. Questions mention the correct answer's concept word with
//! probability `separability`.
//!
//! The four choices of an item are drawn as a set from the same
//! question-type-conditional answer distribution and the correct one is picked
//! uniformly from the set, so at `separability = 0` nothing distinguishes it.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{build_candidate_pool, CandidatePool, Dataset, EmbeddingTable, McqItem, OovPolicy, Split};
use crate::error::{Error, Result};
use crate::rng::Rng;

const CONCEPT_WORDS: &[&str] = &[
    "animal",
    "color",
    "food",
    "vehicle",
    "sport",
    "place",
    "tool",
    "weather",
    "person",
    "plant",
    "clothing",
    "furniture",
];
const QTYPE_WORDS: &[&str] = &["what", "where", "who", "how", "why", "when", "which"];
const FILLER_WORDS: &[&str] = &[
    "is", "the", "in", "of", "this", "picture", "on", "a", "there", "can", "you", "see", "are", "near", "that", "does",
    "it", "do", "with", "at", "by", "from", "image", "shown",
];
const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ru", "ze", "po", "ta", "ni", "ve", "su", "do", "gri", "bel", "fa", "xo", "qui", "ro", "la",
    "me", "tu",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_items: usize,
    /// Pool size.
    pub k: usize,
    pub d_img: usize,
    pub d_txt: usize,
    pub n_qtypes: usize,
    /// How strongly image and question reveal the correct answer, in `[0, 1]`.
    pub separability: f64,
    pub n_concepts: usize,
    /// Weight of the answer-specific word relative to the concept word in
    /// the image signal. Below 1, answers of one concept are hard to tell apart.
    pub detail: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_items: 2000,
            k: 200,
            d_img: 32,
            d_txt: 16,
            n_qtypes: 4,
            separability: 0.9,
            n_concepts: 8,
            detail: 0.2,
        }
    }
}

struct World {
    pool: CandidatePool,
    table: EmbeddingTable,
    /// Concept of each pool entry.
    concept: Vec<usize>,
    /// Entries sharing a group have identical embeddings.
    group: Vec<usize>,
    /// What the image of an item with this correct answer encodes.
    signal: Vec<Vec<f64>>,
    projection: Vec<f64>,
    qtype_pref: Vec<Vec<f64>>,
}

fn word_for(list: &[&str], i: usize, prefix: &str) -> String {
    list.get(i).map_or_else(|| format!("{prefix}{i}"), |w| w.to_string())
}

fn random_vec(rng: &mut Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.normal()).collect()
}

fn build_world(spec: &SyntheticSpec, rng: &mut Rng) -> Result<World> {
    let d = spec.d_txt;
    let mut table = EmbeddingTable::new(d, OovPolicy::SkipToken);
    let concepts: Vec<String> = (0..spec.n_concepts)
        .map(|g| word_for(CONCEPT_WORDS, g, "concept"))
        .collect();
    for c in &concepts {
        table.insert(c.clone(), random_vec(rng, d))?;
    }
    for t in 0..spec.n_qtypes {
        table.insert(word_for(QTYPE_WORDS, t, "qtype"), random_vec(rng, d))?;
    }
    for f in FILLER_WORDS {
        table.insert(*f, random_vec(rng, d))?;
    }

    // Unique made-up words, one per base answer.
    let n_para = spec.k / 20;
    let n_base = spec.k - n_para;
    let mut seen: HashSet<String> = table.tokens().map(|(t, _)| t.to_string()).collect();
    let mut uniques = Vec::with_capacity(n_base);
    while uniques.len() < n_base {
        let n_syl = 2 + rng.below(2);
        let w: String = (0..n_syl).map(|_| SYLLABLES[rng.below(SYLLABLES.len())]).collect();
        if seen.insert(w.clone()) {
            table.insert(w.clone(), random_vec(rng, d))?;
            uniques.push(w);
        }
    }

    // (text, frequency, concept, group)
    let mut answers: Vec<(String, u64, usize, usize)> = Vec::with_capacity(spec.k);
    let max_freq = 400f64;
    let draw_freq = |rng: &mut Rng| 1 + (rng.uniform() * max_freq.ln()).exp().floor() as u64;
    for (i, u) in uniques.iter().enumerate() {
        let g = i % spec.n_concepts;
        answers.push((format!("{} {u}", concepts[g]), draw_freq(rng), g, i));
    }
    for _ in 0..n_para {
        let j = rng.below(n_base);
        let g = answers[j].2;
        answers.push((format!("{} {}", uniques[j], concepts[g]), draw_freq(rng), g, j));
    }

    let raw: Vec<(&str, u64)> = answers.iter().map(|(t, f, _, _)| (t.as_str(), *f)).collect();
    let pool = build_candidate_pool(&raw, 1)?.embed(&table);
    let by_text: HashMap<&str, (usize, usize)> = answers.iter().map(|(t, _, c, g)| (t.as_str(), (*c, *g))).collect();
    let (concept, group): (Vec<usize>, Vec<usize>) = pool.entries().iter().map(|e| by_text[e.text.as_str()]).unzip();
    let signal = group
        .iter()
        .zip(&concept)
        .map(|(&g, &c)| {
            let cv = table.get(&concepts[c]).expect("concept word embedded");
            let uv = table.get(&uniques[g]).expect("answer word embedded");
            cv.iter().zip(uv).map(|(a, b)| a + spec.detail * b).collect()
        })
        .collect();

    let projection = random_vec(rng, spec.d_img * d);
    let qtype_pref = (0..spec.n_qtypes)
        .map(|_| {
            let mut w = vec![1.0; spec.n_concepts];
            for g in rng.choose_distinct(spec.n_concepts, 2.min(spec.n_concepts)) {
                w[g] = 4.0;
            }
            w
        })
        .collect();
    Ok(World {
        pool,
        table,
        concept,
        group,
        signal,
        projection,
        qtype_pref,
    })
}

fn image_feature(spec: &SyntheticSpec, world: &World, correct: usize, rng: &mut Rng) -> Vec<f64> {
    let e = &world.signal[correct];
    let mut s: Vec<f64> = (0..spec.d_img)
        .map(|r| {
            let row = &world.projection[r * spec.d_txt..(r + 1) * spec.d_txt];
            row.iter().zip(e).map(|(a, b)| a * b).sum()
        })
        .collect();
    let rms = (s.iter().map(|x| x * x).sum::<f64>() / s.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        for x in &mut s {
            *x /= rms;
        }
    }
    let sep = spec.separability;
    let noise_w = (1.0 - sep * sep).sqrt();
    s.iter()
        .map(|&x| (sep * x + noise_w * rng.normal()) as f32 as f64)
        .collect()
}

/// [`generate_synthetic_with_world`] with one seed for both the world and the items.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    generate_synthetic_with_world(spec, seed, seed)
}

/// Builds a dataset whose vocabulary, pool and projection come from
/// `world_seed` and whose items come from `item_seed`. Two datasets with the
/// same world seed share a pool, so models transfer between them.
pub fn generate_synthetic_with_world(spec: &SyntheticSpec, world_seed: u64, item_seed: u64) -> Result<Dataset> {
    if spec.k < 4 {
        return Err(Error::Invalid(format!(
            "pool size {} cannot form a 4-choice question",
            spec.k
        )));
    }
    if !(spec.detail >= 0.0 && spec.detail.is_finite()) {
        return Err(Error::Invalid(format!("detail {} must be finite and ≥ 0", spec.detail)));
    }
    if !(0.0..=1.0).contains(&spec.separability) {
        return Err(Error::Invalid(format!(
            "separability {} not in [0, 1]",
            spec.separability
        )));
    }
    if spec.n_qtypes == 0 || spec.n_concepts == 0 || spec.d_txt == 0 {
        return Err(Error::Invalid("n_qtypes, n_concepts and d_txt must be positive".into()));
    }
    let world = build_world(spec, &mut Rng::new(world_seed).child(1))?;
    let mut rng = Rng::new(item_seed).child(2);
    let k = world.pool.len();
    let n_groups = world.group.iter().copied().collect::<HashSet<_>>().len();
    if n_groups < 4 {
        return Err(Error::Invalid("pool has fewer than 4 distinct answers".into()));
    }

    let weights: Vec<Vec<f64>> = world
        .qtype_pref
        .iter()
        .map(|pref| {
            (0..k)
                .map(|a| world.pool.entry(a).frequency as f64 * pref[world.concept[a]])
                .collect()
        })
        .collect();

    let mut items = Vec::with_capacity(spec.n_items);
    let mut splits = Vec::with_capacity(spec.n_items);
    for i in 0..spec.n_items {
        let t = rng.below(spec.n_qtypes);
        let mut choices: Vec<usize> = Vec::with_capacity(4);
        while choices.len() < 4 {
            let a = rng.categorical(&weights[t]);
            if choices.iter().all(|&b| world.group[b] != world.group[a]) {
                choices.push(a);
            }
        }
        let correct = choices.remove(rng.below(4));
        let image = image_feature(spec, &world, correct, &mut rng);

        let mut tokens = vec![word_for(QTYPE_WORDS, t, "qtype")];
        for _ in 0..2 + rng.below(3) {
            tokens.push(FILLER_WORDS[rng.below(FILLER_WORDS.len())].to_string());
        }
        if rng.uniform() < spec.separability {
            let at = 1 + rng.below(tokens.len());
            tokens.insert(at, word_for(CONCEPT_WORDS, world.concept[correct], "concept"));
        }

        items.push(McqItem {
            id: format!("s{i:05}"),
            qtype: word_for(QTYPE_WORDS, t, "qtype"),
            question_tokens: tokens,
            image_feature: image,
            correct_id: correct,
            original_distractor_ids: [choices[0], choices[1], choices[2]],
        });
        splits.push(match i % 10 {
            0..=7 => Split::Train,
            8 => Split::Val,
            _ => Split::Test,
        });
    }
    Dataset::new(items, splits, world.pool, world.table, spec.d_img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            n_items: 100,
            k: 40,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_synthetic(&small(), 7).unwrap();
        let b = generate_synthetic(&small(), 7).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = generate_synthetic(&small(), 8).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn shared_world_shares_pool() {
        let a = generate_synthetic_with_world(&small(), 7, 7).unwrap();
        let b = generate_synthetic_with_world(&small(), 7, 9).unwrap();
        assert_eq!(a.pool().fingerprint(), b.pool().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn pool_too_small() {
        let spec = SyntheticSpec { k: 3, ..small() };
        assert!(generate_synthetic(&spec, 1).is_err());
    }

    #[test]
    fn shape_and_pool() {
        let ds = generate_synthetic(&small(), 3).unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!(ds.pool().len(), 40);
        assert_eq!(ds.d_img(), 32);
        assert_eq!(ds.d_txt(), 16);
        assert!(ds.pool().entries().iter().all(|e| e.frequency >= 1));
        assert!(ds.pool().entries().windows(2).all(|w| w[0].frequency >= w[1].frequency));
        assert_eq!(ds.indices(Split::Test).len(), 10);
    }

    #[test]
    fn paraphrases_share_embeddings() {
        let ds = generate_synthetic(
            &SyntheticSpec {
                k: 200,
                n_items: 10,
                ..small()
            },
            5,
        )
        .unwrap();
        let pool = ds.pool();
        let mut same = 0;
        for a in 0..pool.len() {
            for b in a + 1..pool.len() {
                if pool.embedding(a) == pool.embedding(b) {
                    same += 1;
                }
            }
        }
        assert!(same >= 1, "expected some paraphrase pairs");
    }
}
