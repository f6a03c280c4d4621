//! Cue-delay-query memory probe.
//!
//! Step 0 shows a one-hot cue, the next `delay - 1` steps show nothing, and
//! step `delay` raises the query flag. The action taken on the query step is
//! scored: reward 1 when it names the cue, else 0. With `delay = 0` the cue
//! and query arrive together.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvStep, Environment};
use crate::error::{Error, Result};

pub const MAX_DELAY: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceRecallConfig {
    pub n_classes: usize,
    pub delay: usize,
}

impl Default for SequenceRecallConfig {
    fn default() -> Self {
        SequenceRecallConfig {
            n_classes: 3,
            delay: 10,
        }
    }
}

pub struct SequenceRecall {
    cfg: SequenceRecallConfig,
    cue: usize,
    t: usize,
    rng: ChaCha8Rng,
}

impl SequenceRecall {
    pub fn new(cfg: SequenceRecallConfig) -> Self {
        assert!(cfg.n_classes >= 2, "recall needs at least two classes");
        assert!(cfg.delay <= MAX_DELAY, "delay above {MAX_DELAY}");
        SequenceRecall {
            cfg,
            cue: 0,
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn cue(&self) -> usize {
        self.cue
    }

    fn observe(&self) -> Vec<f64> {
        let n = self.cfg.n_classes;
        let mut obs = vec![0.0; n + 1];
        if self.t == 0 {
            obs[self.cue] = 1.0;
        }
        if self.t == self.cfg.delay {
            obs[n] = 1.0;
        }
        obs
    }
}

impl Environment for SequenceRecall {
    fn observation_dim(&self) -> usize {
        self.cfg.n_classes + 1
    }

    fn n_actions(&self) -> usize {
        self.cfg.n_classes
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.cue = self.rng.gen_range(0..self.cfg.n_classes);
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        if action >= self.cfg.n_classes {
            return Err(Error::IllegalAction {
                action,
                n_actions: self.cfg.n_classes,
            });
        }
        let mut info = BTreeMap::new();
        if self.t >= self.cfg.delay {
            let correct = action == self.cue;
            info.insert("correct", if correct { 1.0 } else { 0.0 });
            return Ok(EnvStep {
                observation: vec![0.0; self.cfg.n_classes + 1],
                reward: if correct { 1.0 } else { 0.0 },
                done: true,
                info,
            });
        }
        self.t += 1;
        Ok(EnvStep {
            observation: self.observe(),
            reward: 0.0,
            done: false,
            info,
        })
    }

    fn describe(&self) -> String {
        format!("cue={} t={} delay={}", self.cue, self.t, self.cfg.delay)
    }
}
