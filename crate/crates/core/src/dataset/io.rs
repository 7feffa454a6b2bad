//! Dataset files.
//!
//! * dataset file: JSON lines. The first line is a [`DatasetHeader`]; each
//!   following line is one item `{id, qtype, question, correct, distractors, split?}`.
//! * feature file: `DFV1`, `u32` count, `u32` dim, then `count × dim`
//!   little-endian `f32`, rows in dataset line order.
//! * embedding table and pool file paths come from the header, relative to
//!   the dataset file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{build_candidate_pool, tokenize, CandidatePool, Dataset, EmbeddingTable, McqItem, OovPolicy, Split};
use crate::error::{Error, Result};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const FEATURES_FILE: &str = "features.dfv";
const EMBEDDINGS_FILE: &str = "embeddings.txt";
const POOL_FILE: &str = "pool.tsv";
const FEATURE_MAGIC: &[u8; 4] = b"DFV1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub d_img: usize,
    pub d_txt: usize,
    pub embeddings: String,
    /// Pool file; when absent the pool is built from answer counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<String>,
    #[serde(default = "one")]
    pub min_freq: u64,
    #[serde(default)]
    pub oov: OovName,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovName {
    #[default]
    Skip,
    Zero,
}

impl From<OovName> for OovPolicy {
    fn from(n: OovName) -> Self {
        match n {
            OovName::Skip => OovPolicy::SkipToken,
            OovName::Zero => OovPolicy::ZeroVector,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    qtype: String,
    question: String,
    correct: String,
    distractors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<String>,
}

pub fn write_features(path: &Path, rows: &[&[f64]], dim: usize) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + 4 * rows.len() * dim);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for row in rows {
        if row.len() != dim {
            return Err(Error::dim("feature row", dim, row.len()));
        }
        for &x in *row {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Returns `(dim, rows)`.
pub fn read_features(path: &Path) -> Result<(usize, Vec<Vec<f64>>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::format(path, "missing DFV1 header"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + 4 * count * dim;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("{count}×{dim} floats need {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let floats: Vec<f64> = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let rows = if dim == 0 {
        vec![Vec::new(); count]
    } else {
        floats.chunks_exact(dim).map(<[f64]>::to_vec).collect()
    };
    Ok((dim, rows))
}

fn sibling(base: &Path, rel: &str) -> PathBuf {
    base.parent().unwrap_or(Path::new(".")).join(rel)
}

/// Reads and validates a dataset and its feature file.
pub fn load_dataset(dataset_path: &Path, features_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(dataset_path).map_err(|e| Error::io(dataset_path, e))?;
    let malformed = |line: usize, msg: String| Error::Malformed {
        path: dataset_path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or_else(|| malformed(1, "missing header line".into()))?;
    let header: DatasetHeader = serde_json::from_str(head).map_err(|e| malformed(1, format!("bad header: {e}")))?;

    let mut records = Vec::new();
    for (i, line) in lines {
        let rec: Record = serde_json::from_str(line).map_err(|e| malformed(i + 1, e.to_string()))?;
        if rec.distractors.len() != 3 {
            return Err(malformed(
                i + 1,
                format!(
                    "item {}: expected 3 distractors, found {}",
                    rec.id,
                    rec.distractors.len()
                ),
            ));
        }
        if let Some(s) = &rec.split {
            if Split::parse(s).is_none() {
                return Err(malformed(i + 1, format!("unknown split {s:?}")));
            }
        }
        records.push(rec);
    }

    let table = EmbeddingTable::load(
        &sibling(dataset_path, &header.embeddings),
        header.d_txt,
        header.oov.into(),
    )?;
    let pool = match &header.pool {
        Some(p) => CandidatePool::load(&sibling(dataset_path, p), header.min_freq)?,
        None => {
            let mut raw: Vec<(&str, u64)> = Vec::new();
            for r in &records {
                raw.push((&r.correct, 1));
                raw.extend(r.distractors.iter().map(|d| (d.as_str(), 1)));
            }
            build_candidate_pool(&raw, header.min_freq)?
        }
    }
    .embed(&table);

    let (dim, features) = read_features(features_path)?;
    if dim != header.d_img {
        return Err(Error::dim("feature file", header.d_img, dim));
    }
    if features.len() != records.len() {
        return Err(Error::format(
            features_path,
            format!("{} feature rows for {} records", features.len(), records.len()),
        ));
    }

    let lookup = |item: &str, answer: &str| {
        pool.lookup(answer).ok_or_else(|| Error::DanglingIndex {
            item: item.to_string(),
            answer: answer.to_string(),
        })
    };
    let mut items = Vec::with_capacity(records.len());
    let mut splits = Vec::with_capacity(records.len());
    for (rec, image_feature) in records.into_iter().zip(features) {
        let correct_id = lookup(&rec.id, &rec.correct)?;
        let d: Vec<usize> = rec
            .distractors
            .iter()
            .map(|t| lookup(&rec.id, t))
            .collect::<Result<_>>()?;
        splits.push(
            rec.split
                .as_deref()
                .and_then(Split::parse)
                .unwrap_or_else(|| Split::from_id(&rec.id)),
        );
        items.push(McqItem {
            question_tokens: tokenize(&rec.question),
            qtype: rec.qtype,
            id: rec.id,
            image_feature,
            correct_id,
            original_distractor_ids: [d[0], d[1], d[2]],
        });
    }
    Dataset::new(items, splits, pool, table, header.d_img)
}

/// Writes `dataset.jsonl`, `features.dfv`, `embeddings.txt` and `pool.tsv`
/// into `dir`. Image features are stored as `f32`.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = DatasetHeader {
        d_img: ds.d_img(),
        d_txt: ds.d_txt(),
        embeddings: EMBEDDINGS_FILE.into(),
        pool: Some(POOL_FILE.into()),
        min_freq: ds.pool().min_freq(),
        oov: match ds.embeddings().oov_policy {
            OovPolicy::SkipToken => OovName::Skip,
            OovPolicy::ZeroVector => OovName::Zero,
        },
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    let pool = ds.pool();
    for (i, item) in ds.items().iter().enumerate() {
        let rec = Record {
            id: item.id.clone(),
            qtype: item.qtype.clone(),
            question: item.question_tokens.join(" "),
            correct: pool.text(item.correct_id).to_string(),
            distractors: item
                .original_distractor_ids
                .iter()
                .map(|&d| pool.text(d).to_string())
                .collect(),
            split: Some(ds.split_of(i).as_str().to_string()),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    let path = dir.join(DATASET_FILE);
    fs::write(&path, out).map_err(|e| Error::io(path, e))?;
    let rows: Vec<&[f64]> = ds.items().iter().map(|it| it.image_feature.as_slice()).collect();
    write_features(&dir.join(FEATURES_FILE), &rows, ds.d_img())?;
    ds.embeddings().save(&dir.join(EMBEDDINGS_FILE))?;
    pool.save(&dir.join(POOL_FILE))
}
