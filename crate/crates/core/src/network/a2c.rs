//! Synchronous advantage actor-critic: returns, loss gradients, clipping,
//! learning-rate schedule and optimizer.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::model::{softmax, AgentModel};
use crate::error::{check_dim, Error, Result};
use crate::mstpn::{backward_through_time, forward_sequence, StpnState};

/// Discounted returns `R_t = r_t + γ R_{t+1}` with `R_T = bootstrap`, and
/// advantages `R_t - v_t`.
pub fn compute_returns(rewards: &[f64], values: &[f64], discount: f64, bootstrap: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim("values vs rewards", rewards.len(), values.len())?;
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + discount * acc;
        returns[t] = acc;
    }
    let adv = returns.iter().zip(values).map(|(r, v)| r - v).collect();
    Ok((returns, adv))
}

/// Experience from one worker. Steps after a `done` start from a fresh core
/// state.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub start: StpnState,
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Critic estimate for the observation following the last step; unused
    /// when the last step ends an episode.
    pub bootstrap_value: f64,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.actions.len();
        check_dim("rollout observations", n, self.observations.len())?;
        check_dim("rollout rewards", n, self.rewards.len())?;
        check_dim("rollout dones", n, self.dones.len())
    }

    /// `[start, end)` index ranges between episode boundaries.
    fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for (t, &done) in self.dones.iter().enumerate() {
            if done {
                out.push((start, t + 1));
                start = t + 1;
            }
        }
        if start < self.dones.len() {
            out.push((start, self.dones.len()));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub discount: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            discount: 0.99,
            entropy_coef: 0.01,
            value_coef: 0.5,
        }
    }
}

/// Loss terms summed over steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossSums {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub steps: usize,
}

impl LossSums {
    pub fn add(&mut self, o: &LossSums) {
        self.policy += o.policy;
        self.value += o.value;
        self.entropy += o.entropy;
        self.steps += o.steps;
    }
}

/// Unnormalized gradient of the summed loss
/// `Σ_t [-log π(a_t) A_t + c_v ½(v_t - R_t)² - c_e H(π_t)]` over `rollout`.
pub fn rollout_gradients(model: &AgentModel, rollout: &Rollout, loss: &LossConfig) -> Result<(AgentModel, LossSums)> {
    rollout.check()?;
    let cfg = &model.config;
    let mut grads = model.zeros_like();
    let mut sums = LossSums::default();
    for (k, (a, b)) in rollout.segments().into_iter().enumerate() {
        let start = if k == 0 { rollout.start.clone() } else { model.initial_state() };
        let mut features = Vec::with_capacity(b - a);
        let mut caches = Vec::with_capacity(b - a);
        for obs in &rollout.observations[a..b] {
            model.check_observation(obs)?;
            let (f, c) = model.encoder.forward(obs)?;
            features.push(Array1::from(f));
            caches.push(c);
        }
        let seq = forward_sequence(&model.core, &cfg.core, &start, &features)?;
        let mut logits = Vec::with_capacity(b - a);
        let mut values = Vec::with_capacity(b - a);
        for h in &seq.outputs {
            let h = h.as_slice().expect("contiguous");
            logits.push(model.actor.forward(h)?);
            values.push(model.critic.forward(h)?[0]);
        }
        let bootstrap = if rollout.dones[b - 1] { 0.0 } else { rollout.bootstrap_value };
        let (returns, adv) = compute_returns(&rollout.rewards[a..b], &values, loss.discount, bootstrap)?;

        let mut g_h = Vec::with_capacity(b - a);
        for t in 0..b - a {
            let action = rollout.actions[a + t];
            if action >= cfg.n_actions {
                return Err(Error::IllegalAction {
                    action,
                    n_actions: cfg.n_actions,
                });
            }
            let p = softmax(&logits[t]);
            let logp: Vec<f64> = p.iter().map(|&v| v.max(f64::MIN_POSITIVE).ln()).collect();
            let entropy: f64 = -p.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
            let err = values[t] - returns[t];
            sums.policy -= logp[action] * adv[t];
            sums.value += 0.5 * err * err;
            sums.entropy += entropy;
            sums.steps += 1;

            let g_logits: Vec<f64> = (0..p.len())
                .map(|i| {
                    let onehot = if i == action { 1.0 } else { 0.0 };
                    (p[i] - onehot) * adv[t] + loss.entropy_coef * p[i] * (logp[i] + entropy)
                })
                .collect();
            let g_v = loss.value_coef * err;
            let h = seq.outputs[t].as_slice().expect("contiguous");
            let mut gh = model.actor.backward(h, &g_logits, &mut grads.actor);
            let gh_c = model.critic.backward(h, &[g_v], &mut grads.critic);
            gh.iter_mut().zip(gh_c).for_each(|(x, y)| *x += y);
            g_h.push(Array1::from(gh));
        }

        let core = backward_through_time(&model.core, &cfg.core, &seq.trace, &g_h, None)?;
        grads.core.w += &core.w;
        grads.core.gamma += &core.gamma;
        grads.core.lambda_raw += &core.lambda_raw;
        for (cache, g) in caches.iter().zip(&core.inputs) {
            model.encoder.backward(cache, g.as_slice().expect("contiguous"), &mut grads.encoder);
        }
    }
    Ok((grads, sums))
}

pub fn global_norm(grads: &AgentModel) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` to norm `max_norm` when it is larger. Returns the norm
/// before clipping.
pub fn clip_global_norm(grads: &mut AgentModel, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl LinearSchedule {
    pub fn at(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        (self.start + (self.end - self.start) * frac).max(self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd,
    RmsProp { decay: f64, eps: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Sgd
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    square_avg: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, model: &AgentModel) -> Self {
        let square_avg = match config {
            OptimizerConfig::Sgd => Vec::new(),
            OptimizerConfig::RmsProp { .. } => model.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        };
        Optimizer { config, square_avg }
    }

    pub fn step(&mut self, model: &mut AgentModel, grads: &AgentModel, lr: f64) {
        let gs = grads.tensors();
        match self.config {
            OptimizerConfig::Sgd => {
                for (p, g) in model.tensors_mut().into_iter().zip(gs) {
                    p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
                }
            }
            OptimizerConfig::RmsProp { decay, eps } => {
                for ((p, g), sq) in model.tensors_mut().into_iter().zip(gs).zip(&mut self.square_avg) {
                    for ((p, g), s) in p.iter_mut().zip(g).zip(sq.iter_mut()) {
                        *s = decay * *s + (1.0 - decay) * g * g;
                        *p -= lr * g / (s.sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub steps: usize,
}

/// Averages summed gradients over their steps, clips, and applies one
/// optimizer step. `W` is then clamped to the core's `w_range` if set; `Λ`
/// stays inside `lambda_range` through its projection.
pub fn apply_gradients(
    model: &mut AgentModel,
    optimizer: &mut Optimizer,
    mut grads: AgentModel,
    sums: LossSums,
    lr: f64,
    grad_clip: f64,
) -> Result<UpdateMetrics> {
    let n = sums.steps.max(1) as f64;
    for t in grads.tensors_mut() {
        t.iter_mut().for_each(|g| *g /= n);
    }
    let metrics = UpdateMetrics {
        policy_loss: sums.policy / n,
        value_loss: sums.value / n,
        entropy: sums.entropy / n,
        grad_norm: clip_global_norm(&mut grads, grad_clip),
        lr,
        steps: sums.steps,
    };
    let loss = metrics.policy_loss + metrics.value_loss - metrics.entropy;
    if !loss.is_finite() || !metrics.grad_norm.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss (policy {}, value {}, entropy {}, gradient norm {})",
            metrics.policy_loss, metrics.value_loss, metrics.entropy, metrics.grad_norm
        )));
    }
    optimizer.step(model, &grads, lr);
    if let Some((lo, hi)) = model.config.core.w_range {
        model.core.w.mapv_inplace(|w| w.clamp(lo, hi));
    }
    Ok(metrics)
}

/// Gradient step from a batch of worker rollouts, summed in order.
pub fn a2c_update(
    model: &mut AgentModel,
    optimizer: &mut Optimizer,
    rollouts: &[Rollout],
    loss: &LossConfig,
    lr: f64,
    grad_clip: f64,
) -> Result<UpdateMetrics> {
    let mut total = model.zeros_like();
    let mut sums = LossSums::default();
    for r in rollouts {
        let (g, s) = rollout_gradients(model, r, loss)?;
        accumulate(&mut total, &g);
        sums.add(&s);
    }
    apply_gradients(model, optimizer, total, sums, lr, grad_clip)
}

pub(crate) fn accumulate(total: &mut AgentModel, g: &AgentModel) {
    for (t, g) in total.tensors_mut().into_iter().zip(g.tensors()) {
        t.iter_mut().zip(g).for_each(|(t, g)| *t += g);
    }
}
