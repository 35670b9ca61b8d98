//! Optimizers and the exponential moving average of weights.

use crate::learners::OptimizerKind;

pub(crate) enum Optim {
    Sgd { momentum: f64, velocity: Vec<Vec<f64>> },
    Adam { beta1: f64, beta2: f64, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, t: u64 },
}

impl Optim {
    pub fn new(kind: OptimizerKind, shapes: &[usize]) -> Self {
        let zeros = |shapes: &[usize]| -> Vec<Vec<f64>> {
            shapes.iter().map(|&n| vec![0.0; n]).collect()
        };
        match kind {
            OptimizerKind::SgdMomentum { momentum } => {
                Optim::Sgd { momentum, velocity: zeros(shapes) }
            }
            OptimizerKind::Adam { beta1, beta2 } => {
                Optim::Adam { beta1, beta2, m: zeros(shapes), v: zeros(shapes), t: 0 }
            }
        }
    }

    pub fn step(&mut self, params: &mut [Vec<f64>], grads: &[Vec<f64>], lr: f64) {
        match self {
            Optim::Sgd { momentum, velocity } => {
                for ((p, g), vel) in params.iter_mut().zip(grads).zip(velocity) {
                    for i in 0..p.len() {
                        vel[i] = *momentum * vel[i] + g[i];
                        p[i] -= lr * vel[i];
                    }
                }
            }
            Optim::Adam { beta1, beta2, m, v, t } => {
                *t += 1;
                let b1 = *beta1;
                let b2 = *beta2;
                let c1 = 1.0 - b1.powi(*t as i32);
                let c2 = 1.0 - b2.powi(*t as i32);
                const EPS: f64 = 1e-8;
                for ((p, g), (mi, vi)) in params.iter_mut().zip(grads).zip(m.iter_mut().zip(v)) {
                    for i in 0..p.len() {
                        mi[i] = b1 * mi[i] + (1.0 - b1) * g[i];
                        vi[i] = b2 * vi[i] + (1.0 - b2) * g[i] * g[i];
                        let mhat = mi[i] / c1;
                        let vhat = vi[i] / c2;
                        p[i] -= lr * mhat / (vhat.sqrt() + EPS);
                    }
                }
            }
        }
    }
}

/// Exponential moving average of weight tensors.
///
/// After each optimizer step, `shadow <- decay * shadow + (1 - decay) * w`.
/// The shadow starts at the initial weights; prediction reads the shadow
/// instead of the final weights.
#[derive(Debug, Clone)]
pub struct Ema {
    decay: f64,
    shadow: Vec<Vec<f64>>,
}

impl Ema {
    pub fn new(initial: Vec<Vec<f64>>, decay: f64) -> Self {
        Self { decay, shadow: initial }
    }

    pub fn update(&mut self, weights: &[Vec<f64>]) {
        for (s, w) in self.shadow.iter_mut().zip(weights) {
            for (si, wi) in s.iter_mut().zip(w) {
                *si = self.decay * *si + (1.0 - self.decay) * *wi;
            }
        }
    }

    pub fn shadow(&self) -> &[Vec<f64>] {
        &self.shadow
    }

    pub fn into_shadow(self) -> Vec<Vec<f64>> {
        self.shadow
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }
}
