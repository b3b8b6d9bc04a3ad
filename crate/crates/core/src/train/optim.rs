use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::tensor::ParamStore;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected Adam with one moment pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.ids().map(|id| vec![0.0; store.get(id).len()]).collect();
        Adam {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            first: zeros.clone(),
            second: zeros,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update with learning rate `lr`; `grads` is aligned with
    /// the store's parameter order.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<f64>], lr: f64) {
        assert_eq!(grads.len(), self.first.len(), "one gradient per parameter");
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((value, g), m), v) in store
            .values_mut()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for (((x, &gi), mi), vi) in value.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

fn default_initial_lr() -> f64 {
    1e-3
}
fn default_decay() -> f64 {
    0.5
}
fn default_patience() -> usize {
    5
}
fn default_min_lr() -> f64 {
    1e-6
}
fn default_max_epochs() -> usize {
    300
}

/// Reduce-on-plateau learning-rate schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_initial_lr")]
    pub initial_lr: f64,
    #[serde(default = "default_decay")]
    pub decay_factor: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_min_lr")]
    pub min_lr: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            initial_lr: default_initial_lr(),
            decay_factor: default_decay(),
            patience: default_patience(),
            min_lr: default_min_lr(),
            max_epochs: default_max_epochs(),
        }
    }
}

impl ScheduleConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.initial_lr > 0.0) {
            out.push(format!("initial_lr must be positive, got {}", self.initial_lr));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            out.push(format!("decay_factor must lie in (0, 1), got {}", self.decay_factor));
        }
        if self.patience == 0 {
            out.push("patience must be at least 1".to_string());
        }
        if !(self.min_lr < self.initial_lr) {
            out.push(format!("min_lr {} must be below initial_lr {}", self.min_lr, self.initial_lr));
        }
        if self.max_epochs == 0 {
            out.push("max_epochs must be at least 1".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(TrainError::Schedule(p.join("; ")))
        }
    }
}

/// Outcome of feeding one epoch's monitored loss to the schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleStep {
    /// Learning rate for the next epoch.
    pub lr: f64,
    pub decayed: bool,
    pub stop: bool,
}

/// Running state of the reduce-on-plateau rule.
///
/// An epoch counts as an improvement only when its loss beats the best so far
/// by more than `1e-6`. After `patience` consecutive non-improving epochs the
/// rate is multiplied by `decay_factor` and the count restarts. Training stops
/// once the rate has fallen to `min_lr` or below, or after `max_epochs` epochs.
#[derive(Clone, Debug)]
pub struct PlateauSchedule {
    config: ScheduleConfig,
    lr: f64,
    best: f64,
    bad_epochs: usize,
    epochs: usize,
    decays: usize,
}

const IMPROVEMENT_THRESHOLD: f64 = 1e-6;

impl PlateauSchedule {
    pub fn new(config: ScheduleConfig) -> Self {
        PlateauSchedule {
            lr: config.initial_lr,
            config,
            best: f64::INFINITY,
            bad_epochs: 0,
            epochs: 0,
            decays: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn decays(&self) -> usize {
        self.decays
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn step(&mut self, loss: f64) -> ScheduleStep {
        self.epochs += 1;
        let mut decayed = false;
        if loss < self.best - IMPROVEMENT_THRESHOLD {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.config.patience {
                self.lr *= self.config.decay_factor;
                self.bad_epochs = 0;
                self.decays += 1;
                decayed = true;
            }
        }
        let stop = self.lr <= self.config.min_lr || self.epochs >= self.config.max_epochs;
        ScheduleStep {
            lr: self.lr,
            decayed,
            stop,
        }
    }
}

/// Feeds `losses` (one per epoch) through a fresh schedule until it stops.
/// Returns the per-epoch steps actually taken.
pub fn replay_schedule(config: &ScheduleConfig, losses: &[f64]) -> Vec<ScheduleStep> {
    let mut s = PlateauSchedule::new(config.clone());
    let mut out = Vec::new();
    for &l in losses {
        let step = s.step(l);
        out.push(step);
        if step.stop {
            break;
        }
    }
    out
}
