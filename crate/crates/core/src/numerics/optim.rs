use crate::error::{Error, Result};

use super::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }
}

/// SGD or bias-corrected Adam over a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<Tensor2>,
    second: Vec<Tensor2>,
    step: u64,
}

impl OptimizerState {
    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::Adam, lr)
    }

    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. Moments are allocated lazily on the first
    /// call and must keep the same shapes afterwards.
    pub fn apply(&mut self, params: &mut [Tensor2], grads: &[Tensor2]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::param(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::shape("optimizer_step", p.shape(), g.shape()));
            }
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= self.lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.first.is_empty() {
                    self.first = params
                        .iter()
                        .map(|p| Tensor2::zeros(p.rows(), p.cols()))
                        .collect();
                    self.second = self.first.clone();
                } else if self.first.len() != params.len()
                    || self
                        .first
                        .iter()
                        .zip(params.iter())
                        .any(|(m, p)| m.shape() != p.shape())
                {
                    return Err(Error::State(
                        "optimizer moments do not match parameter shapes".into(),
                    ));
                }
                let t = (self.step + 1) as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.first.iter_mut().zip(self.second.iter_mut()))
                {
                    for (((w, &d), mi), vi) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        *mi = self.beta1 * *mi + (1.0 - self.beta1) * d;
                        *vi = self.beta2 * *vi + (1.0 - self.beta2) * d * d;
                        let m_hat = *mi / bc1;
                        let v_hat = *vi / bc2;
                        *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}
