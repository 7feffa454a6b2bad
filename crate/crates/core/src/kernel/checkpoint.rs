//! Binary checkpoint: `DFM1`, three little-endian `u32` (in, hidden, out),
//! then `w1, b1, w2, b2` as little-endian `f64`. A sidecar `<path>.meta` holds
//! one `key=value` line.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::DenseParams;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DFM1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Discriminator,
    Policy,
}

impl ModelKind {
    fn as_str(self) -> &'static str {
        match self {
            ModelKind::Discriminator => "discriminator",
            ModelKind::Policy => "policy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub dropout_p: f64,
    pub seed: u64,
    pub epoch: usize,
    /// Additional keys, e.g. pool or dataset fingerprints.
    pub extra: BTreeMap<String, String>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn save_checkpoint(path: &Path, params: &DenseParams, meta: &CheckpointMeta) -> Result<()> {
    let (i, h, o) = params.shape();
    let mut buf = Vec::with_capacity(16 + 8 * params.num_params());
    buf.extend_from_slice(MAGIC);
    for d in [i, h, o] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for (_, t) in params.tensors() {
        for x in t {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))?;

    let mut line = format!(
        "kind={} in={i} hidden={h} out={o} dropout_p={} seed={} epoch={}",
        meta.kind.as_str(),
        meta.dropout_p,
        meta.seed,
        meta.epoch
    );
    for (k, v) in &meta.extra {
        line.push_str(&format!(" {k}={v}"));
    }
    line.push('\n');
    let mp = meta_path(path);
    fs::write(&mp, line).map_err(|e| Error::io(mp, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(DenseParams, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "missing DFM1 header"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    let (i, h, o) = (u32_at(4), u32_at(8), u32_at(12));
    let n = h * i + h + o * h + o;
    if bytes.len() != 16 + 8 * n {
        return Err(Error::format(
            path,
            format!("expected {} parameter bytes, found {}", 8 * n, bytes.len() - 16),
        ));
    }
    let mut floats = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |k: usize| floats.by_ref().take(k).collect::<Vec<_>>();
    let (w1, b1, w2, b2) = (take(h * i), take(h), take(o * h), take(o));
    let params = DenseParams::from_parts(i, h, o, w1, b1, w2, b2)?;

    let mp = meta_path(path);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let mut fields: BTreeMap<String, String> = text
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let mut take_field = |k: &str| {
        fields
            .remove(k)
            .ok_or_else(|| Error::format(&mp, format!("missing key {k}")))
    };
    let kind = match take_field("kind")?.as_str() {
        "discriminator" => ModelKind::Discriminator,
        "policy" => ModelKind::Policy,
        other => return Err(Error::format(&mp, format!("unknown kind {other}"))),
    };
    let parse_err = |k: &str| Error::format(&mp, format!("bad value for {k}"));
    let dropout_p = take_field("dropout_p")?.parse().map_err(|_| parse_err("dropout_p"))?;
    let seed = take_field("seed")?.parse().map_err(|_| parse_err("seed"))?;
    let epoch = take_field("epoch")?.parse().map_err(|_| parse_err("epoch"))?;
    for k in ["in", "hidden", "out"] {
        fields.remove(k);
    }
    Ok((
        params,
        CheckpointMeta {
            kind,
            dropout_p,
            seed,
            epoch,
            extra: fields,
        },
    ))
}
