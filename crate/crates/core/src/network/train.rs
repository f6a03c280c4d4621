use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::a2c::{
    accumulate, apply_gradients, rollout_gradients, LinearSchedule, LossConfig, LossSums, Optimizer, OptimizerConfig,
    Rollout, UpdateMetrics,
};
use super::model::{agent_forward, greedy_action, sample_action, AgentConfig, AgentModel, AgentStep};
use crate::envs::Environment;
use crate::error::{check_dim, Error, Result};
use crate::mstpn::StpnState;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub rollout_len: usize,
    pub grad_clip: f64,
    pub discount: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub lr_decay_steps: u64,
    pub n_workers: usize,
    pub total_steps: u64,
    /// Replaces the core's decay range before training starts.
    pub lambda_range: (f64, f64),
    pub seed: u64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rollout_len: 50,
            grad_clip: 40.0,
            discount: 0.99,
            lr_start: 1e-4,
            lr_end: 1e-11,
            lr_decay_steps: 1_000_000,
            n_workers: 4,
            total_steps: 1_000_000,
            lambda_range: (0.08, 0.92),
            seed: 0,
            entropy_coef: 0.01,
            value_coef: 0.5,
            optimizer: OptimizerConfig::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidData(m.to_string()));
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad("discount must lie strictly between 0 and 1");
        }
        if !(self.lr_end <= self.lr_start) || self.lr_end < 0.0 {
            return bad("learning rate must satisfy 0 <= lr_end <= lr_start");
        }
        if self.rollout_len == 0 {
            return bad("rollout_len must be at least 1");
        }
        if self.n_workers == 0 {
            return bad("n_workers must be at least 1");
        }
        if !(self.grad_clip > 0.0) {
            return bad("grad_clip must be positive");
        }
        let (lo, hi) = self.lambda_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad("lambda_range must lie inside [0, 1]");
        }
        Ok(())
    }

    pub fn schedule(&self) -> LinearSchedule {
        LinearSchedule {
            start: self.lr_start,
            end: self.lr_end,
            decay_steps: self.lr_decay_steps,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            discount: self.discount,
            entropy_coef: self.entropy_coef,
            value_coef: self.value_coef,
        }
    }
}

/// One finished training episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardPoint {
    /// Environment steps taken across all workers when the episode ended.
    pub step: u64,
    pub seed: u64,
    pub reward: f64,
}

pub fn write_reward_curve<W: Write>(out: W, curve: &[RewardPoint]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["step", "seed", "reward"])?;
    for p in curve {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io("reward curve", e))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AgentModel,
    pub reward_curve: Vec<RewardPoint>,
    pub env_steps: u64,
    pub updates: Vec<UpdateMetrics>,
}

/// Progress report handed to the observer after each update.
#[derive(Debug, Clone, Copy)]
pub struct Progress<'a> {
    pub env_steps: u64,
    pub update: usize,
    pub metrics: &'a UpdateMetrics,
    pub episodes: usize,
}

pub type EnvFactory<'a> = dyn Fn(usize) -> Result<Box<dyn Environment>> + Sync + 'a;

struct Worker {
    id: usize,
    env: Box<dyn Environment>,
    obs: Vec<f64>,
    state: StpnState,
    actions: ChaCha8Rng,
    episodes: ChaCha8Rng,
    episode_reward: f64,
}

struct WorkerBatch {
    grads: AgentModel,
    sums: LossSums,
    finished: Vec<(usize, f64)>,
}

impl Worker {
    fn new(id: usize, mut env: Box<dyn Environment>, model: &AgentModel, seed: u64) -> Result<Self> {
        let cfg = &model.config;
        check_dim("environment observation width", cfg.obs_dim, env.observation_dim())
            .and_then(|_| check_dim("environment action count", cfg.n_actions, env.n_actions()))
            .map_err(|e| Error::Worker {
                worker: id,
                source: Box::new(e),
            })?;
        let mut episodes = ChaCha8Rng::seed_from_u64(derive_seed(seed, "episodes", id as u64));
        let obs = env.reset(episodes.gen());
        Ok(Worker {
            id,
            env,
            obs,
            state: model.initial_state(),
            actions: ChaCha8Rng::seed_from_u64(derive_seed(seed, "actions", id as u64)),
            episodes,
            episode_reward: 0.0,
        })
    }

    fn collect(&mut self, model: &AgentModel, len: usize) -> Result<(Rollout, Vec<(usize, f64)>)> {
        let mut rollout = Rollout {
            start: self.state.clone(),
            observations: Vec::with_capacity(len),
            actions: Vec::with_capacity(len),
            rewards: Vec::with_capacity(len),
            dones: Vec::with_capacity(len),
            bootstrap_value: 0.0,
        };
        let mut finished = Vec::new();
        for t in 0..len {
            let out = agent_forward(model, &self.obs, &self.state)?;
            let action = sample_action(&out.logits, &mut self.actions);
            let step = self.env.step(action)?;
            if !step.reward.is_finite() {
                return Err(Error::NonFinite(format!("reward from environment: {}", step.reward)));
            }
            self.episode_reward += step.reward;
            let obs = if step.done {
                finished.push((t, self.episode_reward));
                self.episode_reward = 0.0;
                self.state = model.initial_state();
                self.env.reset(self.episodes.gen())
            } else {
                self.state = out.state;
                step.observation
            };
            rollout.observations.push(std::mem::replace(&mut self.obs, obs));
            rollout.actions.push(action);
            rollout.rewards.push(step.reward);
            rollout.dones.push(step.done);
        }
        if rollout.dones.last() == Some(&false) {
            rollout.bootstrap_value = agent_forward(model, &self.obs, &self.state)?.value;
        }
        Ok((rollout, finished))
    }

    fn run(&mut self, model: &AgentModel, len: usize, loss: &LossConfig) -> Result<WorkerBatch> {
        let id = self.id;
        let wrap = |e| Error::Worker {
            worker: id,
            source: Box::new(e),
        };
        let (rollout, finished) = self.collect(model, len).map_err(wrap)?;
        let (grads, sums) = rollout_gradients(model, &rollout, loss).map_err(wrap)?;
        Ok(WorkerBatch { grads, sums, finished })
    }
}

/// Trains a freshly initialized agent.
pub fn train(env_factory: &EnvFactory, agent: &AgentConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let model = init_model(agent, cfg)?;
    train_model(env_factory, model, cfg, &mut |_| {})
}

/// Fresh parameters for `agent`, seeded from `cfg.seed`, with the decay
/// range of `cfg`.
pub fn init_model(agent: &AgentConfig, cfg: &TrainConfig) -> Result<AgentModel> {
    let mut agent = agent.clone();
    agent.core.lambda_range = cfg.lambda_range;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "init", 0));
    AgentModel::init(&agent, &mut rng)
}

/// Trains `model` in place of a fresh one, reporting each update to `observer`.
///
/// Workers collect `rollout_len` steps each from the same parameters; their
/// gradients are summed in worker order and applied once, so results do not
/// depend on thread scheduling.
pub fn train_model(
    env_factory: &EnvFactory,
    mut model: AgentModel,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&Progress),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.config.core.lambda_range = cfg.lambda_range;
    model.config.validate()?;
    let mut outcome = TrainOutcome {
        model: model.clone(),
        reward_curve: Vec::new(),
        env_steps: 0,
        updates: Vec::new(),
    };
    if cfg.total_steps == 0 {
        return Ok(outcome);
    }

    let mut workers = (0..cfg.n_workers)
        .map(|id| {
            let env = env_factory(id).map_err(|e| Error::Worker {
                worker: id,
                source: Box::new(e),
            })?;
            Worker::new(id, env, &model, cfg.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut optimizer = Optimizer::new(cfg.optimizer, &model);
    let schedule = cfg.schedule();
    let loss = cfg.loss();
    let n_workers = cfg.n_workers as u64;
    let mut steps = 0u64;

    while steps < cfg.total_steps {
        let remaining = cfg.total_steps - steps;
        let len = (cfg.rollout_len as u64).min(remaining.div_ceil(n_workers)) as usize;
        let snapshot = &model;
        let batches: Vec<Result<WorkerBatch>> = if workers.len() == 1 {
            vec![workers[0].run(snapshot, len, &loss)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = workers
                    .iter_mut()
                    .map(|w| s.spawn(|| w.run(snapshot, len, &loss)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker thread panicked"))
                    .collect()
            })
        };

        let mut grads = model.zeros_like();
        let mut sums = LossSums::default();
        let mut finished = Vec::new();
        for (id, batch) in batches.into_iter().enumerate() {
            let batch = batch?;
            accumulate(&mut grads, &batch.grads);
            sums.add(&batch.sums);
            finished.extend(batch.finished.into_iter().map(|(t, r)| (t, id, r)));
        }
        finished.sort_by_key(|&(t, id, _)| (t, id));
        for (t, _, reward) in finished {
            outcome.reward_curve.push(RewardPoint {
                step: steps + (t as u64 + 1) * n_workers,
                seed: cfg.seed,
                reward,
            });
        }

        let lr = schedule.at(steps);
        let metrics = apply_gradients(&mut model, &mut optimizer, grads, sums, lr, cfg.grad_clip)?;
        steps += len as u64 * n_workers;
        outcome.updates.push(metrics);
        observer(&Progress {
            env_steps: steps,
            update: outcome.updates.len(),
            metrics: &metrics,
            episodes: outcome.reward_curve.len(),
        });
    }
    outcome.model = model;
    outcome.env_steps = steps;
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    Greedy,
    /// Sample from the actor's softmax.
    Sample { seed: u64 },
    /// Ignore the actor and pick uniformly.
    Uniform { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub reward: f64,
    pub steps: usize,
}

/// What [`run_episode`] reports for each step.
pub struct StepRecord<'a> {
    pub t: usize,
    pub step: &'a AgentStep,
    pub action: usize,
    pub reward: f64,
    pub state_description: String,
}

/// Plays one episode from `env.reset(seed)`, stopping early after
/// `max_steps` if given.
pub fn run_episode(
    model: &AgentModel,
    env: &mut dyn Environment,
    seed: u64,
    policy: Policy,
    max_steps: Option<usize>,
    on_step: &mut dyn FnMut(&StepRecord),
) -> Result<EpisodeSummary> {
    let mut obs = env.reset(seed);
    let mut state = model.initial_state();
    let mut rng = match policy {
        Policy::Sample { seed } | Policy::Uniform { seed } => ChaCha8Rng::seed_from_u64(seed),
        Policy::Greedy => ChaCha8Rng::seed_from_u64(0),
    };
    let n_actions = model.config.n_actions;
    let mut summary = EpisodeSummary { reward: 0.0, steps: 0 };
    loop {
        if max_steps.is_some_and(|m| summary.steps >= m) {
            break;
        }
        let out = agent_forward(model, &obs, &state)?;
        let action = match policy {
            Policy::Greedy => greedy_action(&out.logits),
            Policy::Sample { .. } => sample_action(&out.logits, &mut rng),
            Policy::Uniform { .. } => rng.gen_range(0..n_actions),
        };
        let description = env.describe();
        let step = env.step(action)?;
        on_step(&StepRecord {
            t: summary.steps,
            step: &out,
            action,
            reward: step.reward,
            state_description: description,
        });
        summary.reward += step.reward;
        summary.steps += 1;
        if step.done {
            break;
        }
        obs = step.observation;
        state = out.state;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{SequenceRecall, SequenceRecallConfig};
    use crate::network::EncoderConfig;

    fn recall_factory(_: usize) -> Result<Box<dyn Environment>> {
        Ok(Box::new(SequenceRecall::new(SequenceRecallConfig { n_classes: 2, delay: 2 })))
    }

    fn agent() -> AgentConfig {
        AgentConfig::new(3, 2, EncoderConfig::Dense { width: 4 }, 4).unwrap()
    }

    #[test]
    fn zero_budget_returns_initial_model() {
        let cfg = TrainConfig {
            total_steps: 0,
            n_workers: 1,
            ..TrainConfig::default()
        };
        let out = train(&recall_factory, &agent(), &cfg).unwrap();
        assert!(out.reward_curve.is_empty());
        assert_eq!(out.env_steps, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0, "init", 0));
        assert_eq!(out.model, AgentModel::init(&agent(), &mut rng).unwrap());
    }

    #[test]
    fn single_worker_is_reproducible() {
        let cfg = TrainConfig {
            total_steps: 600,
            n_workers: 1,
            rollout_len: 20,
            lr_start: 1e-2,
            ..TrainConfig::default()
        };
        let a = train(&recall_factory, &agent(), &cfg).unwrap();
        let b = train(&recall_factory, &agent(), &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.reward_curve, b.reward_curve);
        assert_eq!(a.env_steps, 600);
        assert_eq!(a.reward_curve.len(), 200);
    }

    #[test]
    fn threaded_workers_are_reproducible() {
        let cfg = TrainConfig {
            total_steps: 400,
            n_workers: 3,
            rollout_len: 10,
            ..TrainConfig::default()
        };
        let a = train(&recall_factory, &agent(), &cfg).unwrap();
        let b = train(&recall_factory, &agent(), &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.reward_curve, b.reward_curve);
        assert!(a.env_steps >= 400);
        assert!(a.reward_curve.windows(2).all(|w| w[0].step <= w[1].step));
    }

    #[test]
    fn lambda_stays_in_range_during_training() {
        let cfg = TrainConfig {
            total_steps: 500,
            n_workers: 1,
            rollout_len: 5,
            lr_start: 5.0,
            lr_end: 5.0,
            lambda_range: (0.2, 0.3),
            ..TrainConfig::default()
        };
        let out = train(&recall_factory, &agent(), &cfg).unwrap();
        assert!(out.model.lambda().iter().all(|&l| (0.2..=0.3).contains(&l)));
    }

    #[test]
    fn environment_failure_names_worker() {
        let factory = |id: usize| -> Result<Box<dyn Environment>> {
            if id == 1 {
                Err(Error::Unsupported("broken environment".into()))
            } else {
                recall_factory(id)
            }
        };
        let cfg = TrainConfig {
            total_steps: 10,
            n_workers: 2,
            ..TrainConfig::default()
        };
        match train(&factory, &agent(), &cfg) {
            Err(Error::Worker { worker, .. }) => assert_eq!(worker, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        for cfg in [
            TrainConfig { discount: 1.0, ..TrainConfig::default() },
            TrainConfig { lr_end: 1.0, ..TrainConfig::default() },
            TrainConfig { rollout_len: 0, ..TrainConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn reward_curve_csv() {
        let mut buf = Vec::new();
        let curve = [RewardPoint { step: 10, seed: 3, reward: -1.5 }];
        write_reward_curve(&mut buf, &curve).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,seed,reward\n10,3,-1.5\n");
    }

    #[test]
    fn episode_runner_reports_steps() {
        let cfg = agent();
        let model = AgentModel::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut env = recall_factory(0).unwrap();
        let mut seen = 0;
        let s = run_episode(&model, env.as_mut(), 5, Policy::Greedy, None, &mut |r| {
            assert_eq!(r.t, seen);
            seen += 1;
        })
        .unwrap();
        assert_eq!(s.steps, 3);
        assert_eq!(seen, 3);
    }
}
