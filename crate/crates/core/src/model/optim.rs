use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::params::ParamStore;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moments, one state slot per parameter path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub steps: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, steps: 0, first: BTreeMap::new(), second: BTreeMap::new() }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Vec<f64>>, lr: f64) -> Result<()> {
        self.steps += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.steps as i32;
        let c1 = 1.0 - libm::pow(beta1, f64::from(t));
        let c2 = 1.0 - libm::pow(beta2, f64::from(t));
        for (path, g) in grads {
            let p = params.get_mut(path)?;
            if p.len() != g.len() {
                return Err(Error::shape("adam", format!("{path}: {} gradients for {} entries", g.len(), p.len())));
            }
            let m = self.first.entry(path.clone()).or_insert_with(|| alloc::vec![0.0; g.len()]);
            let v = self.second.entry(path.clone()).or_insert_with(|| alloc::vec![0.0; g.len()]);
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (libm::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}

/// Learning rate multiplied by `factor` every `every` epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub base: f64,
    pub factor: f64,
    pub every: usize,
}

impl StepSchedule {
    /// Divides by `(1/factor)^k` rather than multiplying by `factor^k`: for a
    /// factor of 0.1 the divisor is an exact power of ten, so the decayed
    /// rates are the nearest doubles to their decimal values.
    pub fn lr(&self, epoch: usize) -> f64 {
        let k = (epoch / self.every.max(1)) as i32;
        self.base / libm::pow(1.0 / self.factor, f64::from(k))
    }
}
