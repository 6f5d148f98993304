//! Adam optimizer with decoupled-from-nothing weight decay: the decay term
//! is added to the gradient before the moment updates, the classical L2
//! formulation. Moment buffers are keyed by visitation order, so a model's
//! parameter visitation must stay stable across steps (it is fixed at
//! construction).

use ndarray::ArrayD;

use super::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamConfig {
            learning_rate,
            weight_decay,
            ..AdamConfig::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update over every parameter the model visits. Gradients are
    /// consumed as-is and must be zeroed by the caller between steps.
    pub fn step(&mut self, mut visit: impl FnMut(&mut dyn FnMut(&mut Tensor))) {
        self.t += 1;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(self.t as i32);
        let bias2 = 1.0 - c.beta2.powi(self.t as i32);
        let mut index = 0usize;
        let m = &mut self.m;
        let v = &mut self.v;
        visit(&mut |tensor: &mut Tensor| {
            if index == m.len() {
                m.push(ArrayD::zeros(tensor.value.raw_dim()));
                v.push(ArrayD::zeros(tensor.value.raw_dim()));
            }
            let grad = tensor.grad_mut().clone();
            let m_slot = &mut m[index];
            let v_slot = &mut v[index];
            ndarray::Zip::from(&mut tensor.value)
                .and(m_slot)
                .and(v_slot)
                .and(&grad)
                .for_each(|w, m_i, v_i, &g| {
                    let g = g + c.weight_decay * *w;
                    *m_i = c.beta1 * *m_i + (1.0 - c.beta1) * g;
                    *v_i = c.beta2 * *v_i + (1.0 - c.beta2) * g * g;
                    let m_hat = *m_i / bias1;
                    let v_hat = *v_i / bias2;
                    *w -= c.learning_rate * m_hat / (v_hat.sqrt() + c.eps);
                });
            index += 1;
        });
    }
}
