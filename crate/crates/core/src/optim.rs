//! Parameter update rules.

use crate::params::{Gradients, ParamStore};
use crate::tensor::Matrix;

/// Plain SGD; `decay_epoch` applies `lr <- lr * (1 - decay)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub decay: f64,
    pub clip: Option<f64>,
}

impl Sgd {
    pub fn new(lr: f64, decay: f64) -> Self {
        Sgd { lr, decay, clip: None }
    }

    pub fn with_clip(mut self, max_norm: f64) -> Self {
        self.clip = Some(max_norm);
        self
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &mut Gradients) {
        if let Some(c) = self.clip {
            grads.clip_norm(c);
        }
        for (id, g) in grads.iter() {
            if store.get(id).trainable {
                store.values_mut(id).add_scaled(g, -self.lr);
            }
        }
    }

    pub fn decay_epoch(&mut self) {
        self.lr *= 1.0 - self.decay;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay: f64,
    pub clip: Option<f64>,
    t: u64,
    m: Vec<Option<Matrix>>,
    v: Vec<Option<Matrix>>,
}

impl Adam {
    pub fn new(lr: f64, decay: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay,
            clip: None,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn with_clip(mut self, max_norm: f64) -> Self {
        self.clip = Some(max_norm);
        self
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &mut Gradients) {
        if let Some(c) = self.clip {
            grads.clip_norm(c);
        }
        self.t += 1;
        if self.m.len() < store.len() {
            self.m.resize(store.len(), None);
            self.v.resize(store.len(), None);
        }
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (id, g) in grads.iter() {
            if !store.get(id).trainable {
                continue;
            }
            let i = id.index();
            let (rows, cols) = g.shape();
            let m = self.m[i].get_or_insert_with(|| Matrix::zeros(rows, cols));
            let v = self.v[i].get_or_insert_with(|| Matrix::zeros(rows, cols));
            let p = store.values_mut(id);
            for (((pj, mj), vj), gj) in p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *mj = self.beta1 * *mj + (1.0 - self.beta1) * gj;
                *vj = self.beta2 * *vj + (1.0 - self.beta2) * gj * gj;
                let mh = *mj / bc1;
                let vh = *vj / bc2;
                *pj -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }

    pub fn decay_epoch(&mut self) {
        self.lr *= 1.0 - self.decay;
    }
}
