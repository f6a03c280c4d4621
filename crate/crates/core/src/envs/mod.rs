//! Desk-scale environments behind a common contract.

mod pong;
mod recall;

pub use pong::{MiniPong, MiniPongConfig, PongObservation, PongState};
pub use recall::{SequenceRecall, SequenceRecallConfig};

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: BTreeMap<&'static str, f64>,
}

pub trait Environment: Send {
    fn observation_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Deterministic initial observation for `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<EnvStep>;
    /// One-line state description for replay dumps.
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    MiniPong(MiniPongConfig),
    SequenceRecall(SequenceRecallConfig),
}

impl EnvConfig {
    pub fn build(&self) -> Box<dyn Environment> {
        match self {
            EnvConfig::MiniPong(c) => Box::new(MiniPong::new(c.clone())),
            EnvConfig::SequenceRecall(c) => Box::new(SequenceRecall::new(c.clone())),
        }
    }
}

/// Line-oriented episode dump: `step<TAB>state<TAB>action<TAB>reward`.
pub struct ReplayWriter<W: Write> {
    out: W,
}

impl<W: Write> ReplayWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "# step\tstate\taction\treward")?;
        Ok(ReplayWriter { out })
    }

    pub fn record(&mut self, step: usize, state: &str, action: usize, reward: f64) -> std::io::Result<()> {
        writeln!(self.out, "{step}\t{state}\t{action}\t{reward}")
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_lines() {
        let mut env = MiniPong::new(MiniPongConfig::default());
        env.reset(3);
        let mut w = ReplayWriter::new(Vec::new()).unwrap();
        for t in 0..3 {
            let s = env.describe();
            let step = env.step(0).unwrap();
            w.record(t, &s, 0, step.reward).unwrap();
        }
        let text = String::from_utf8(w.into_inner()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].split('\t').count(), 4);
    }

    #[test]
    fn config_builds_environment() {
        let cfg = EnvConfig::SequenceRecall(SequenceRecallConfig::default());
        let env = cfg.build();
        assert_eq!(env.observation_dim(), 4);
        assert_eq!(env.n_actions(), 3);
    }
}
