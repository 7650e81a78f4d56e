use super::{ParamStore, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam with one moment pair per stored parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    /// Rebuilds optimizer state from saved parts (used by checkpoint loading).
    pub fn from_parts(
        config: AdamConfig,
        step_count: u64,
        first_moment: Vec<Tensor>,
        second_moment: Vec<Tensor>,
    ) -> Result<Self> {
        if first_moment.len() != second_moment.len()
            || first_moment
                .iter()
                .zip(&second_moment)
                .any(|(m, v)| m.shape() != v.shape())
        {
            return Err(TensorError::Contract("adam moments are not shape-aligned".into()));
        }
        Ok(Self {
            config,
            step_count,
            first_moment,
            second_moment,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Tensor] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Tensor] {
        &self.second_moment
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != store.len() || self.first_moment.len() != store.len() {
            return Err(TensorError::Contract(format!(
                "adam: {} params, {} grads, {} moment slots",
                store.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for (id, g) in store.ids().zip(grads) {
            let p = store.get(id);
            if p.shape() != g.shape() || self.first_moment[id.0].shape() != p.shape() {
                return Err(TensorError::Shape {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }
        self.step_count += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (id, g) in store.ids().zip(grads) {
            let m = self.first_moment[id.0].data_mut();
            let v = self.second_moment[id.0].data_mut();
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::scalar(x));
        s
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut store = scalar_store(0.25);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        for _ in 0..5 {
            adam.step(&mut store, &[Tensor::scalar(0.0)]).unwrap();
        }
        assert_eq!(store.tensors()[0].item(), 0.25);
        assert_eq!(adam.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1 => delta = lr / (1 + eps)
        let mut store = scalar_store(0.0);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        adam.step(&mut store, &[Tensor::scalar(1.0)]).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((store.tensors()[0].item() - expected).abs() < 1e-9);
    }

    #[test]
    fn steps_descend_a_quadratic() {
        // loss = (x - 3)^2, grad = 2 (x - 3)
        let mut store = scalar_store(0.0);
        let mut adam = Adam::new(
            AdamConfig {
                lr: 0.1,
                ..AdamConfig::default()
            },
            &store,
        );
        let loss = |x: f64| (x - 3.0).powi(2);
        let mut prev = loss(0.0);
        for _ in 0..2 {
            let x = store.tensors()[0].item();
            adam.step(&mut store, &[Tensor::scalar(2.0 * (x - 3.0))]).unwrap();
            let now = loss(store.tensors()[0].item());
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut store = scalar_store(0.0);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        assert!(adam.step(&mut store, &[Tensor::zeros(&[2])]).is_err());
        assert!(adam.step(&mut store, &[]).is_err());
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = vec![Tensor::vector(vec![3.0, 4.0]), Tensor::scalar(12.0)];
        let before = clip_global_norm(&mut g, 5.0);
        assert!((before - 13.0).abs() < 1e-12);
        assert!((global_norm(&g) - 5.0).abs() < 1e-12);
        let mut small = vec![Tensor::scalar(1.0)];
        clip_global_norm(&mut small, 5.0);
        assert_eq!(small[0].item(), 1.0);
    }
}
