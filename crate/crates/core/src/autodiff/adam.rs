use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam with bias correction. Moments are created lazily per parameter name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState<S> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub first_moment: BTreeMap<String, Tensor<S>>,
    pub second_moment: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: BTreeMap::new(),
            second_moment: BTreeMap::new(),
        }
    }

    /// One update over every parameter named in `grads`. Parameters without
    /// a gradient entry are left alone.
    pub fn step(&mut self, params: &mut ParamStore<S>, grads: &BTreeMap<String, Tensor<S>>) -> Result<()> {
        for (name, g) in grads {
            let p = params
                .get(name)
                .ok_or_else(|| Error::Lookup(format!("no parameter named {name}")))?;
            if p.shape() != g.shape() {
                return Err(Error::Dimension(format!(
                    "adam: parameter {name} has shape {:?}, gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            for moments in [&self.first_moment, &self.second_moment] {
                if let Some(m) = moments.get(name) {
                    if m.shape() != p.shape() {
                        return Err(Error::Dimension(format!(
                            "adam: accumulator for {name} has shape {:?}, parameter {:?}",
                            m.shape(),
                            p.shape()
                        )));
                    }
                }
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (S::lit(self.beta1), S::lit(self.beta2));
        let bc1 = S::one() - b1.powi(t);
        let bc2 = S::one() - b2.powi(t);
        let lr = S::lit(self.learning_rate);
        let eps = S::lit(self.epsilon);

        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let m = self
                .first_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self
                .second_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for (i, &gi) in g.data().iter().enumerate() {
                md[i] = b1 * md[i] + (S::one() - b1) * gi;
                vd[i] = b2 * vd[i] + (S::one() - b2) * gi * gi;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] = pd[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
