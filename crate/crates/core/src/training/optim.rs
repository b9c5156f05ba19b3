use serde::{Deserialize, Serialize};

use crate::nn::{Gradients, ParamStore, Tensor};
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Per-run optimizer state.
#[derive(Debug, Clone)]
pub enum Optimizer<T> {
    Sgd,
    Adam {
        m: ParamStore<T>,
        v: ParamStore<T>,
        step: i32,
    },
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, params: &ParamStore<T>) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => {
                let zeros: ParamStore<T> = params
                    .iter()
                    .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                    .collect();
                Optimizer::Adam {
                    m: zeros.clone(),
                    v: zeros,
                    step: 0,
                }
            }
        }
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>, lr: T) {
        match self {
            Optimizer::Sgd => {
                for (name, p) in params.iter_mut() {
                    let g = &grads.params[name];
                    for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w = *w - lr * d;
                    }
                }
            }
            Optimizer::Adam { m, v, step } => {
                *step += 1;
                let (b1, b2) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2));
                let c1 = T::one() - b1.powi(*step);
                let c2 = T::one() - b2.powi(*step);
                let eps = T::of(ADAM_EPS);
                for (name, p) in params.iter_mut() {
                    let g = &grads.params[name];
                    let mt = m.get_mut(name).expect("moment exists");
                    let vt = v.get_mut(name).expect("moment exists");
                    for (((w, &d), mi), vi) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(mt.data_mut())
                        .zip(vt.data_mut())
                    {
                        *mi = b1 * *mi + (T::one() - b1) * d;
                        *vi = b2 * *vi + (T::one() - b2) * d * d;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *w = *w - lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
    }
}
