use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    /// Out-of-vocabulary tokens are left out of the mean.
    #[default]
    SkipToken,
    /// Out-of-vocabulary tokens count as zero vectors.
    ZeroVector,
}

/// Token → vector lookup used for question and answer text.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    /// Insertion order, so the table serializes deterministically.
    order: Vec<String>,
    pub oov_policy: OovPolicy,
}

impl EmbeddingTable {
    pub fn new(dim: usize, oov_policy: OovPolicy) -> Self {
        Self {
            dim,
            oov_policy,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Adds or replaces a token vector.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let token = token.into();
        if vector.len() != self.dim {
            return Err(Error::dim(format!("embedding for {token:?}"), self.dim, vector.len()));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("embedding for {token:?}")));
        }
        if self.vectors.insert(token.clone(), vector).is_none() {
            self.order.push(token);
        }
        Ok(())
    }

    /// Mean of the token vectors under the table's OOV policy. If nothing
    /// contributes, the zero vector.
    pub fn embed_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut sum = vec![0.0; self.dim];
        let mut n = 0usize;
        for t in tokens {
            match self.vectors.get(t.as_ref()) {
                Some(v) => {
                    for (s, x) in sum.iter_mut().zip(v) {
                        *s += x;
                    }
                    n += 1;
                }
                None if self.oov_policy == OovPolicy::ZeroVector => n += 1,
                None => {}
            }
        }
        if n > 0 {
            for s in &mut sum {
                *s /= n as f64;
            }
        }
        sum
    }

    /// Reads `token v1 v2 ... vD` lines.
    pub fn load(path: &Path, dim: usize, oov_policy: OovPolicy) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table = Self::new(dim, oov_policy);
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let vector: std::result::Result<Vec<f64>, _> = parts.map(str::parse).collect();
            let vector = vector.map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("bad float: {e}"),
            })?;
            if vector.len() != dim {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected {dim} values, found {}", vector.len()),
                });
            }
            table.insert(token, vector)?;
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for token in &self.order {
            out.push_str(token);
            for x in &self.vectors[token] {
                out.push(' ');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub(crate) fn tokens(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.order.iter().map(|t| (t.as_str(), self.vectors[t].as_slice()))
    }
}

/// Question embedding: mean of in-vocabulary token vectors.
pub fn embed_question<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Vec<f64> {
    table.embed_tokens(tokens)
}
