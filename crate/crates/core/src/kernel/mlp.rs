use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Parameters of `z = w2 · relu(w1 · c + b1) + b2`.
///
/// Weights are row-major: `w1` is `hidden × in_dim`, `w2` is `out_dim × hidden`.
/// The same shape doubles as a gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    in_dim: usize,
    hidden: usize,
    out_dim: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
    /// Per-unit inverted-dropout multiplier (0 or 1/(1-p)); empty when no dropout applied.
    mask: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Vec<f64>,
    pub cache: ForwardCache,
}

impl DenseParams {
    pub fn zeros(in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            hidden,
            out_dim,
            w1: vec![0.0; hidden * in_dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; out_dim * hidden],
            b2: vec![0.0; out_dim],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn xavier(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(in_dim, hidden, out_dim);
        let a1 = (6.0 / (in_dim + hidden) as f64).sqrt();
        for w in &mut p.w1 {
            *w = rng.uniform_range(-a1, a1);
        }
        let a2 = (6.0 / (hidden + out_dim) as f64).sqrt();
        for w in &mut p.w2 {
            *w = rng.uniform_range(-a2, a2);
        }
        p
    }

    pub fn from_parts(
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self> {
        let check = |name: &str, v: &[f64], n: usize| {
            if v.len() != n {
                return Err(Error::dim(name, n, v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(name.to_string()));
            }
            Ok(())
        };
        check("w1", &w1, hidden * in_dim)?;
        check("b1", &b1, hidden)?;
        check("w2", &w2, out_dim * hidden)?;
        check("b2", &b2, out_dim)?;
        Ok(Self {
            in_dim,
            hidden,
            out_dim,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.in_dim, self.hidden, self.out_dim)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim, self.hidden, self.out_dim)
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 4] {
        [("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 4] {
        [
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
        ]
    }

    /// All parameters in `w1, b1, w2, b2` order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, t) in self.tensors() {
            out.extend_from_slice(t);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let mut off = 0;
        for (_, t) in self.tensors_mut() {
            t.copy_from_slice(&flat[off..off + t.len()]);
            off += t.len();
        }
    }

    pub fn fill(&mut self, value: f64) {
        for (_, t) in self.tensors_mut() {
            t.fill(value);
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &DenseParams, scale: f64) {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in add_scaled");
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            for x in t.iter_mut() {
                *x *= s;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// First tensor holding a NaN or infinity, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|x| !x.is_finite()))
            .map(|(name, _)| name)
    }

    /// SHA-256 over the shape header and little-endian parameter bytes.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for d in [self.in_dim, self.hidden, self.out_dim] {
            h.update((d as u64).to_le_bytes());
        }
        for (_, t) in self.tensors() {
            for x in t {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn check_input(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.in_dim {
            return Err(Error::dim("network input", self.in_dim, c.len()));
        }
        Ok(())
    }

    fn hidden_pre(&self, c: &[f64]) -> Vec<f64> {
        let mut pre = self.b1.clone();
        for (j, p) in pre.iter_mut().enumerate() {
            let row = &self.w1[j * self.in_dim..(j + 1) * self.in_dim];
            *p += dot(row, c);
        }
        pre
    }

    fn output(&self, h: &[f64]) -> Vec<f64> {
        let mut z = self.b2.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
            *zo += dot(row, h);
        }
        z
    }

    /// Eval-mode logits without keeping a cache.
    pub fn infer(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check_input(c)?;
        let mut h = self.hidden_pre(c);
        for x in &mut h {
            *x = x.max(0.0);
        }
        Ok(self.output(&h))
    }

    /// Forward pass with inverted dropout on the hidden layer in train mode.
    ///
    /// `rng` is only consumed in train mode with `dropout_p > 0`.
    pub fn forward(&self, c: &[f64], dropout_p: f64, mode: Mode, rng: &mut Rng) -> Result<Forward> {
        self.check_input(c)?;
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::Invalid(format!("dropout_p {dropout_p} not in [0, 1)")));
        }
        let pre = self.hidden_pre(c);
        let mut hidden: Vec<f64> = pre.iter().map(|x| x.max(0.0)).collect();
        let mut mask = Vec::new();
        if mode == Mode::Train && dropout_p > 0.0 {
            let keep = 1.0 / (1.0 - dropout_p);
            mask = (0..self.hidden)
                .map(|_| if rng.uniform() < dropout_p { 0.0 } else { keep })
                .collect();
            for (h, m) in hidden.iter_mut().zip(&mask) {
                *h *= m;
            }
        }
        let logits = self.output(&hidden);
        Ok(Forward {
            logits,
            cache: ForwardCache {
                input: c.to_vec(),
                pre,
                hidden,
                mask,
            },
        })
    }

    /// Accumulates `∂L/∂params` into `grads` given `∂L/∂logits`.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &[f64], grads: &mut DenseParams) {
        assert_eq!(d_logits.len(), self.out_dim, "logit gradient length");
        assert_eq!(grads.shape(), self.shape(), "gradient shape");
        let mut d_hidden = vec![0.0; self.hidden];
        for (o, &dz) in d_logits.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            grads.b2[o] += dz;
            let row = o * self.hidden..(o + 1) * self.hidden;
            for ((g, &h), (&w, dh)) in grads.w2[row.clone()]
                .iter_mut()
                .zip(&cache.hidden)
                .zip(self.w2[row].iter().zip(d_hidden.iter_mut()))
            {
                *g += dz * h;
                *dh += dz * w;
            }
        }
        for (j, &dh) in d_hidden.iter().enumerate() {
            let mut d = dh;
            if !cache.mask.is_empty() {
                d *= cache.mask[j];
            }
            if cache.pre[j] <= 0.0 || d == 0.0 {
                continue;
            }
            grads.b1[j] += d;
            let row = &mut grads.w1[j * self.in_dim..(j + 1) * self.in_dim];
            for (g, &x) in row.iter_mut().zip(&cache.input) {
                *g += d * x;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent partial sums keep the loop vectorizable without
    // changing results across runs.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * i + k] * b[4 * i + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}
