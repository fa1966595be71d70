use serde::{Deserialize, Serialize};

use super::tensor::{Gradient, Param};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Sparse gradients update only the rows they
/// name (moments of untouched rows are left as they are), which keeps client
/// steps proportional to the batch rather than the catalogue.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Param]) -> Self {
        Self {
            config,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. `grads[k]` corresponds to `params[k]`; `None` skips
    /// the tensor.
    pub fn step(&mut self, params: &mut [Param], grads: &[Option<Gradient>]) {
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        for (k, grad) in grads.iter().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            match grad {
                None => {}
                Some(Gradient::Dense(g)) => update(&mut params[k].data, m, v, g),
                Some(Gradient::Rows { cols, rows, values }) => {
                    for (j, &r) in rows.iter().enumerate() {
                        let span = r * cols..(r + 1) * cols;
                        update(
                            &mut params[k].data[span.clone()],
                            &mut m[span.clone()],
                            &mut v[span],
                            &values[j * cols..(j + 1) * cols],
                        );
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = 1, v̂ = 1 after bias correction, so Δ = lr / (1 + eps).
        let mut params = vec![Param {
            rows: 1,
            cols: 1,
            data: vec![0.5],
        }];
        let mut adam = Adam::new(AdamConfig::default(), &params);
        adam.step(&mut params, &[Some(Gradient::Dense(vec![1.0]))]);
        let expected = 0.5 - 0.001 / (1.0 + 1e-8);
        assert!((params[0].data[0] - expected).abs() < 1e-15);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn sparse_rows_leave_others_untouched() {
        let mut params = vec![Param::zeros(3, 2)];
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let g = Gradient::Rows {
            cols: 2,
            rows: vec![1],
            values: vec![1.0, -1.0],
        };
        adam.step(&mut params, &[Some(g)]);
        assert_eq!(params[0].row(0), &[0.0, 0.0]);
        assert_eq!(params[0].row(2), &[0.0, 0.0]);
        assert!(params[0].row(1)[0] < 0.0 && params[0].row(1)[1] > 0.0);
    }
}
