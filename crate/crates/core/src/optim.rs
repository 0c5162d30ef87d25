//! Adam with bias correction over parameter groups. Each group keeps its own
//! step count, so a group that sat out earlier steps starts with a fresh
//! bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    groups: Vec<Moments>,
}

impl Adam {
    /// One moment buffer per group, sized by `group_sizes`.
    pub fn new(group_sizes: &[usize]) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            groups: group_sizes
                .iter()
                .map(|&n| Moments {
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                    t: 0,
                })
                .collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Each entry is `(group, params, grads)`; groups
    /// not listed keep their parameters and moments.
    pub fn step(&mut self, lr: f64, updates: &mut [(usize, &mut [f64], &[f64])]) -> Result<()> {
        for (g, params, grads) in updates.iter() {
            let size = self
                .groups
                .get(*g)
                .ok_or_else(|| Error::invalid(format!("unknown parameter group {g}")))?
                .m
                .len();
            if params.len() != size || grads.len() != size {
                return Err(Error::DimensionMismatch {
                    expected: size,
                    actual: if params.len() != size {
                        params.len()
                    } else {
                        grads.len()
                    },
                });
            }
        }
        self.step += 1;
        for (g, params, grads) in updates.iter_mut() {
            let Moments { m, v, t } = &mut self.groups[*g];
            *t += 1;
            let c1 = 1.0 - self.beta1.powi(*t as i32);
            let c2 = 1.0 - self.beta2.powi(*t as i32);
            for i in 0..params.len() {
                let gi = grads[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
