//! Adam with step-decay learning rates and the full-batch training loop.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::losses::{risk_and_gradient, Objective, ParamGradient};
use crate::network::TwoLayerNet;
use crate::rng;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    /// Multiplier applied every `decay_every` steps.
    pub decay_factor: f64,
    pub decay_every: usize,
    pub beta: f64,
    /// Seed for parameter initialization (and minibatch shuffling).
    pub seed: u64,
    pub width: usize,
    pub truncate: bool,
    /// `None` means full-batch steps.
    pub batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::function_approx()
    }
}

impl TrainConfig {
    /// 0.01 with 20% decay every 500 steps, desk-scale width and epochs.
    pub fn function_approx() -> Self {
        Self {
            epochs: 2000,
            lr0: 0.01,
            decay_factor: 0.8,
            decay_every: 500,
            beta: 10.0,
            seed: 0,
            width: 256,
            truncate: false,
            batch_size: None,
        }
    }

    /// 0.001 halved every 1000 steps, desk-scale width.
    pub fn uq() -> Self {
        Self {
            epochs: 8000,
            lr0: 0.001,
            decay_factor: 0.5,
            decay_every: 1000,
            ..Self::function_approx()
        }
    }

    /// Width 1000 and the longer epoch budgets.
    pub fn paper_scale(mut self) -> Self {
        self.width = 1000;
        self.epochs = self.epochs.max(5000);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay_factor must lie in (0, 1]");
        }
        if self.decay_every == 0 {
            return bad("decay_every must be at least 1");
        }
        if self.width == 0 {
            return bad("width must be at least 1");
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be at least 1");
        }
        Objective::new(self.beta).map(|_| ())
    }

    pub fn objective(&self) -> Result<Objective> {
        Ok(Objective::new(self.beta)?.with_truncation(self.truncate))
    }
}

/// `lr0 · decay_factor^⌊step / decay_every⌋`.
pub fn lr_at(config: &TrainConfig, step: usize) -> f64 {
    let decays = (step / config.decay_every) as i32;
    config.lr0 * config.decay_factor.powi(decays)
}

/// Moment estimates for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: ParamGradient,
    second: ParamGradient,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(net: &TwoLayerNet) -> Self {
        Self {
            first: ParamGradient::zeros_like(net),
            second: ParamGradient::zeros_like(net),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn first_moment(&self) -> &ParamGradient {
        &self.first
    }

    pub fn second_moment(&self) -> &ParamGradient {
        &self.second
    }
}

/// One bias-corrected Adam update of `net` in place.
pub fn adam_step(net: &mut TwoLayerNet, state: &mut AdamState, grad: &ParamGradient, lr: f64) -> Result<()> {
    check_dim(net.width(), grad.grad_a.len())?;
    check_dim(net.inner_weights().len(), grad.grad_w.len())?;
    check_dim(net.width(), state.first.grad_a.len())?;
    if !grad.is_finite() {
        return Err(Error::NonFinite(format!("gradient at step {}", state.step_count + 1)));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);

    let (a, w) = net.params_mut();
    let groups = [
        (a, &grad.grad_a, &mut state.first.grad_a, &mut state.second.grad_a),
        (w, &grad.grad_w, &mut state.first.grad_w, &mut state.second.grad_w),
    ];
    for (params, g, m, v) in groups {
        for i in 0..params.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Risk terms recorded before each epoch's update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    /// `J`.
    pub combined: f64,
    /// `L_n`.
    pub value: f64,
    /// `L'_n`, absent for value-only data.
    pub gradient: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: TwoLayerNet,
    pub history: Vec<LossRecord>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<f64> {
        self.history.last().map(|r| r.combined)
    }
}

/// Runs `config.epochs` epochs of Adam on `J`.
///
/// Each epoch is one full-batch step unless `batch_size` is set, in which
/// case the data is reshuffled each epoch and split into minibatches.
pub fn train(net0: &TwoLayerNet, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    check_dim(net0.input_dim(), data.dim())?;
    let objective = config.objective()?;
    let mut net = net0.clone();
    let mut state = AdamState::new(&net);
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0;

    let batch = config.batch_size.filter(|&b| b < data.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = rng::stream(config.seed, 0x5eed);

    for epoch in 0..config.epochs {
        let lr = lr_at(config, step);
        match batch {
            None => {
                let (risk, grad) = risk_and_gradient(&net, data, objective)?;
                check_finite(risk.combined, epoch)?;
                history.push(LossRecord {
                    epoch,
                    combined: risk.combined,
                    value: risk.value,
                    gradient: risk.gradient,
                    lr,
                });
                adam_step(&mut net, &mut state, &grad, lr)?;
                step += 1;
            }
            Some(b) => {
                let risk = crate::losses::risks(&net, data, objective)?;
                check_finite(risk.combined, epoch)?;
                history.push(LossRecord {
                    epoch,
                    combined: risk.combined,
                    value: risk.value,
                    gradient: risk.gradient,
                    lr,
                });
                order.shuffle(&mut shuffle_rng);
                for chunk in order.chunks(b) {
                    let mini = Dataset::new(chunk.iter().map(|&i| data.samples()[i].clone()).collect())?;
                    let (_, grad) = risk_and_gradient(&net, &mini, objective)?;
                    adam_step(&mut net, &mut state, &grad, lr_at(config, step))?;
                    step += 1;
                }
            }
        }
        if !net.is_finite() {
            return Err(Error::NonFinite(format!("network parameters after epoch {epoch}")));
        }
    }
    Ok(TrainOutcome { net, history })
}

fn check_finite(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("loss {loss} at epoch {epoch}")))
    }
}

/// Writes `epoch,J,L_n,L'_n,lr` rows; `L'_n` is empty for value-only data.
pub fn write_history_csv<W: Write>(history: &[LossRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "J", "L_n", "L'_n", "lr"])?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.combined.to_string(),
            r.value.to_string(),
            r.gradient.map(|g| g.to_string()).unwrap_or_default(),
            r.lr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
