use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mstpn::{LayerConfig, LayerTrace, StpnParams};

/// Sparse record of the short-term updates applied to a synapse array.
///
/// Synapse `i · n_in + j` is row `i`, column `j` of the layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynapseTrace {
    /// Long-term conductance per synapse, simulation units.
    pub w: Vec<f64>,
    /// Decay per step per synapse.
    pub lambda: Vec<f64>,
    /// Nonzero `(synapse, ΔF)` events of each step.
    pub steps: Vec<Vec<(usize, f64)>>,
}

impl SynapseTrace {
    pub fn new(w: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        check_dim("trace lambda vs w", w.len(), lambda.len())?;
        Ok(SynapseTrace {
            w,
            lambda,
            steps: Vec::new(),
        })
    }

    pub fn for_layer(params: &StpnParams, cfg: &LayerConfig) -> Self {
        SynapseTrace {
            w: params.w.iter().copied().collect(),
            lambda: params.lambda(cfg).iter().copied().collect(),
            steps: Vec::new(),
        }
    }

    /// Trace of a recorded `forward_sequence` run.
    pub fn from_layer_trace(params: &StpnParams, cfg: &LayerConfig, trace: &LayerTrace) -> Self {
        let mut out = SynapseTrace::for_layer(params, cfg);
        for step in &trace.steps {
            out.push_dense(&step.delta_f);
        }
        out
    }

    pub fn n_synapses(&self) -> usize {
        self.w.len()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push_step(&mut self, events: Vec<(usize, f64)>) {
        self.steps.push(events);
    }

    /// Appends one step from a dense update matrix, keeping nonzero entries.
    pub fn push_dense(&mut self, delta_f: &Array2<f64>) {
        let events = delta_f
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(k, &v)| (k, v))
            .collect();
        self.steps.push(events);
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_synapses();
        if self.lambda.len() != n {
            return Err(Error::MalformedTrace(format!(
                "{} decay entries for {} synapses",
                self.lambda.len(),
                n
            )));
        }
        if let Some(v) = self.w.iter().chain(&self.lambda).find(|v| !v.is_finite()) {
            return Err(Error::MalformedTrace(format!("non-finite synapse parameter {v}")));
        }
        for (t, events) in self.steps.iter().enumerate() {
            for &(id, df) in events {
                if id >= n {
                    return Err(Error::MalformedTrace(format!("step {t}: synapse {id} out of {n}")));
                }
                if !df.is_finite() {
                    return Err(Error::MalformedTrace(format!("step {t}: non-finite update at synapse {id}")));
                }
            }
        }
        Ok(())
    }

    /// First `t` steps and the rest.
    pub fn split_at(&self, t: usize) -> (SynapseTrace, SynapseTrace) {
        let t = t.min(self.steps.len());
        let head = SynapseTrace {
            w: self.w.clone(),
            lambda: self.lambda.clone(),
            steps: self.steps[..t].to_vec(),
        };
        let tail = SynapseTrace {
            steps: self.steps[t..].to_vec(),
            ..head.clone()
        };
        (head, tail)
    }

    /// Synapse with the largest summed `|ΔF|`, if any update happened.
    pub fn most_active_synapse(&self) -> Option<usize> {
        let mut total = vec![0.0; self.n_synapses()];
        for &(id, df) in self.steps.iter().flatten() {
            if id < total.len() {
                total[id] += df.abs();
            }
        }
        let (best, &v) = total
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))?;
        (v > 0.0).then_some(best)
    }

    pub fn total_events(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }
}
