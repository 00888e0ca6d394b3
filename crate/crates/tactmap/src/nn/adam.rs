//! Adam with bias correction.

use ndarray::ArrayD;

use super::{Param, Real};

#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<ArrayD<F>>,
    v: Vec<ArrayD<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update over the parameter list. The list must keep the same order
    /// and shapes across calls.
    pub fn step(&mut self, params: &mut [&mut Param<F>]) {
        if self.m.is_empty() {
            self.m = params
                .iter()
                .map(|p| ArrayD::zeros(p.value.raw_dim()))
                .collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed shape");
        self.step += 1;
        let b1 = F::of(self.beta1);
        let b2 = F::of(self.beta2);
        let lr = F::of(self.learning_rate);
        let eps = F::of(self.eps);
        let corr1 = F::of(1.0 - self.beta1.powi(self.step as i32));
        let corr2 = F::of(1.0 - self.beta2.powi(self.step as i32));
        for (i, param) in params.iter_mut().enumerate() {
            ndarray::Zip::from(&mut self.m[i])
                .and(&param.grad)
                .for_each(|m, &g| *m = b1 * *m + (F::one() - b1) * g);
            ndarray::Zip::from(&mut self.v[i])
                .and(&param.grad)
                .for_each(|v, &g| *v = b2 * *v + (F::one() - b2) * g * g);
            ndarray::Zip::from(&mut param.value)
                .and(&self.m[i])
                .and(&self.v[i])
                .for_each(|x, &m, &v| {
                    let m_hat = m / corr1;
                    let v_hat = v / corr2;
                    *x = *x - lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}
