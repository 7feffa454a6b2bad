use super::DenseParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Algorithm {
    pub fn adam() -> Self {
        Algorithm::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimState {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    m: Option<DenseParams>,
    v: Option<DenseParams>,
    step: u64,
}

impl OptimState {
    pub fn new(algorithm: Algorithm, learning_rate: f64) -> Self {
        Self {
            algorithm,
            learning_rate,
            m: None,
            v: None,
            step: 0,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(Algorithm::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(Algorithm::adam(), learning_rate)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameters are untouched if any gradient is non-finite.
    pub fn step(&mut self, params: &mut DenseParams, grads: &DenseParams) -> Result<()> {
        if params.shape() != grads.shape() {
            return Err(Error::Invalid(format!(
                "gradient shape {:?} does not match parameters {:?}",
                grads.shape(),
                params.shape()
            )));
        }
        if let Some(name) = grads.first_non_finite() {
            return Err(Error::NonFinite(format!("gradient {name}")));
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.algorithm {
            Algorithm::Sgd => params.add_scaled(grads, -lr),
            Algorithm::Adam { beta1, beta2, eps } => {
                let m = self.m.get_or_insert_with(|| grads.zeros_like());
                let v = self.v.get_or_insert_with(|| grads.zeros_like());
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let tensors = params
                    .tensors_mut()
                    .into_iter()
                    .zip(grads.tensors())
                    .zip(m.tensors_mut().into_iter().zip(v.tensors_mut()));
                for (((_, p), (_, g)), ((_, m), (_, v))) in tensors {
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DenseParams {
        let mut p = DenseParams::zeros(1, 1, 1);
        p.w1[0] = v;
        p
    }

    #[test]
    fn sgd_step() {
        let mut p = scalar(1.0);
        let g = scalar(2.0);
        OptimState::sgd(0.1).step(&mut p, &g).unwrap();
        assert!((p.w1[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut rng = crate::rng::Rng::new(1);
        let p0 = DenseParams::xavier(3, 4, 2, &mut rng);
        for mut opt in [OptimState::sgd(0.5), OptimState::adam(0.5)] {
            let mut p = p0.clone();
            opt.step(&mut p, &p0.zeros_like()).unwrap();
            assert_eq!(p, p0);
        }
    }

    #[test]
    fn adam_first_step() {
        // m1 = 0.1, v1 = 0.001; bias-corrected both are 1, so the step is
        // lr * 1 / (1 + eps).
        let mut p = scalar(0.0);
        let g = scalar(1.0);
        OptimState::adam(0.001).step(&mut p, &g).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p.w1[0] - expected).abs() < 1e-15, "{}", p.w1[0]);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut p = scalar(1.0);
        let mut g = scalar(0.0);
        g.b2[0] = f64::NAN;
        let err = OptimState::sgd(0.1).step(&mut p, &g).unwrap_err();
        assert!(err.to_string().contains("b2"), "{err}");
        assert_eq!(p, scalar(1.0));
    }
}
