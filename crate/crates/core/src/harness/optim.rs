//! Adam with bias correction.

use crate::tensor::{Parameter, Tensor};

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update using each parameter's accumulated `grad`.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Parameter>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (i, p) in params.into_iter().enumerate() {
            if i == self.m.len() {
                self.m.push(Tensor::zeros(p.value.shape()));
                self.v.push(Tensor::zeros(p.value.shape()));
            }
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            let g = p.grad.data();
            for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
