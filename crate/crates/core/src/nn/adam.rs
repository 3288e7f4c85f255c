use serde::{Deserialize, Serialize};

use super::param::{Param, Real};
use crate::error::{Error, Result};

/// Adam with bias correction. Hysteretic per-sample learning rates are folded
/// into the accumulated gradients before [`Adam::step`] is called.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    /// Applies one update to every parameter and zeroes the gradients.
    /// All gradients are validated before any value changes.
    pub fn step<T: Real>(&self, params: &mut [&mut Param<T>]) -> Result<()> {
        for (i, p) in params.iter().enumerate() {
            if !p.grad.iter().all(|g| g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of parameter {i}")));
            }
        }
        let b1 = T::lit(self.beta1);
        let b2 = T::lit(self.beta2);
        let one = T::one();
        let eps = T::lit(self.epsilon);
        for p in params.iter_mut() {
            p.step_count += 1;
            let t = p.step_count as i32;
            let c1 = one - b1.powi(t);
            let c2 = one - b2.powi(t);
            let lr = T::lit(self.lr);
            let Param {
                value,
                grad,
                adam_m,
                adam_v,
                ..
            } = &mut **p;
            ndarray::Zip::from(value)
                .and(&mut *grad)
                .and(adam_m)
                .and(adam_v)
                .for_each(|w, g, m, v| {
                    *m = b1 * *m + (one - b1) * *g;
                    *v = b2 * *v + (one - b2) * *g * *g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
                    *g = T::zero();
                });
        }
        Ok(())
    }
}
