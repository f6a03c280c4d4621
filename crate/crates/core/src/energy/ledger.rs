use serde::{Deserialize, Serialize};

use crate::device::DeviceCharacterization;
use crate::error::{check_dim, Error, Result};

/// Length of one Pong game, s.
pub const GAME_DURATION_S: f64 = 50.0;
/// Agent steps in one Pong game.
pub const GAME_STEPS: u64 = 6826;
/// Maximum decay-control bias, applied to every synapse in the worst case.
pub const WORST_CASE_VBIAS: f64 = 0.6;

pub fn default_step_duration() -> f64 {
    GAME_DURATION_S / GAME_STEPS as f64
}

/// Per-synapse memristor energy, J.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub step_duration_s: f64,
    v_bias: Vec<f64>,
    pulse_j: Vec<f64>,
    bias_j: Vec<f64>,
    events: Vec<u64>,
    steps: u64,
    // Running totals, in accrual order.
    pulse_acc: f64,
    bias_acc: f64,
    /// Short-term state carried between replays of consecutive trace pieces.
    pub(crate) f_state: Vec<f64>,
}

impl EnergyLedger {
    /// `n` synapses, all biased at `v_bias`.
    pub fn new(n: usize, step_duration_s: f64, v_bias: f64) -> Result<Self> {
        Self::with_v_bias(vec![v_bias; n], step_duration_s)
    }

    /// Worst-case scenario: 0.6 V on every synapse, 50/6826 s per step.
    pub fn worst_case(n: usize) -> Self {
        Self::new(n, default_step_duration(), WORST_CASE_VBIAS).expect("valid defaults")
    }

    pub fn with_v_bias(v_bias: Vec<f64>, step_duration_s: f64) -> Result<Self> {
        if !(step_duration_s >= 0.0 && step_duration_s.is_finite()) {
            return Err(Error::Range {
                what: "step duration",
                value: step_duration_s,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        if let Some(&v) = v_bias.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("bias voltage {v}")));
        }
        let n = v_bias.len();
        Ok(EnergyLedger {
            step_duration_s,
            v_bias,
            pulse_j: vec![0.0; n],
            bias_j: vec![0.0; n],
            events: vec![0; n],
            steps: 0,
            pulse_acc: 0.0,
            bias_acc: 0.0,
            f_state: vec![0.0; n],
        })
    }

    /// Bias chosen per synapse so that the device decay matches `lambda`.
    pub fn from_lambda(dc: &DeviceCharacterization, lambda: &[f64], step_duration_s: f64) -> Result<Self> {
        let v = lambda.iter().map(|&l| dc.vbias_of_lambda(l)).collect::<Result<Vec<_>>>()?;
        Self::with_v_bias(v, step_duration_s)
    }

    pub fn len(&self) -> usize {
        self.v_bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_bias.is_empty()
    }

    fn check_id(&self, id: usize) -> Result<()> {
        if id < self.len() {
            Ok(())
        } else {
            Err(Error::UnknownSynapse { id, len: self.len() })
        }
    }

    /// Charges one programming pulse realizing `delta_f_sim`.
    pub fn record_pulse(&mut self, dc: &DeviceCharacterization, id: usize, delta_f_sim: f64) -> Result<()> {
        self.check_id(id)?;
        if !delta_f_sim.is_finite() {
            return Err(Error::NonFinite(format!("short-term update {delta_f_sim} at synapse {id}")));
        }
        if delta_f_sim == 0.0 {
            return Ok(());
        }
        let e = dc.pulse_energy(delta_f_sim);
        self.pulse_j[id] += e;
        self.pulse_acc += e;
        self.events[id] += 1;
        Ok(())
    }

    /// Bias energy for `steps` steps at conductance `g_sim[s]` per synapse.
    pub fn accrue_bias(&mut self, dc: &DeviceCharacterization, g_sim: &[f64], steps: u64) -> Result<()> {
        check_dim("conductances vs ledger", self.len(), g_sim.len())?;
        let t = self.step_duration_s * steps as f64;
        for ((b, &g), &v) in self.bias_j.iter_mut().zip(g_sim).zip(&self.v_bias) {
            let e = dc.bias_power(g, v) * t;
            *b += e;
            self.bias_acc += e;
        }
        self.steps += steps;
        Ok(())
    }

    /// Adds another ledger over the same synapses.
    pub fn merge(&mut self, other: &EnergyLedger) -> Result<()> {
        check_dim("merged ledger size", self.len(), other.len())?;
        for k in 0..self.len() {
            self.pulse_j[k] += other.pulse_j[k];
            self.bias_j[k] += other.bias_j[k];
            self.events[k] += other.events[k];
        }
        self.pulse_acc += other.pulse_acc;
        self.bias_acc += other.bias_acc;
        self.steps += other.steps;
        Ok(())
    }

    pub fn v_bias(&self) -> &[f64] {
        &self.v_bias
    }

    pub fn pulse_energy(&self) -> &[f64] {
        &self.pulse_j
    }

    pub fn bias_energy(&self) -> &[f64] {
        &self.bias_j
    }

    pub fn event_counts(&self) -> &[u64] {
        &self.events
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn pulse_total(&self) -> f64 {
        self.pulse_j.iter().sum()
    }

    pub fn bias_total(&self) -> f64 {
        self.bias_j.iter().sum()
    }

    /// Pulse plus bias energy over all synapses.
    pub fn total(&self) -> f64 {
        self.pulse_total() + self.bias_total()
    }

    pub(crate) fn running_totals(&self) -> (f64, f64) {
        (self.pulse_acc, self.bias_acc)
    }
}

/// Closed-form full-game ledger for the worst case: every synapse at `G = 0`
/// under 0.6 V.
pub fn worst_case_ledger(dc: &DeviceCharacterization, n_synapses: usize, n_steps: u64) -> EnergyLedger {
    let mut ledger = EnergyLedger::worst_case(n_synapses);
    ledger
        .accrue_bias(dc, &vec![0.0; n_synapses], n_steps)
        .expect("sizes match");
    ledger
}
