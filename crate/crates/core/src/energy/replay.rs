use serde::{Deserialize, Serialize};

use super::gpu::{GpuCostModel, GpuMode, Precision};
use super::ledger::EnergyLedger;
use super::trace::SynapseTrace;
use crate::device::DeviceCharacterization;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    /// Read current from the long-term conductance `W` only.
    #[default]
    LongTerm,
    /// Read current from `W + F(t)`, with `F` reconstructed from the trace.
    Instantaneous,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "id")]
pub enum SeriesScope {
    #[default]
    All,
    Synapse(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayOptions {
    pub bias_mode: BiasMode,
    pub precision: Precision,
    pub gpu_mode: GpuMode,
    pub scope: SeriesScope,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions {
            bias_mode: BiasMode::LongTerm,
            precision: Precision::Fp32,
            gpu_mode: GpuMode::Standard,
            scope: SeriesScope::All,
        }
    }
}

/// Cumulative energies after a step, J.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub step: u64,
    pub pulse_j: f64,
    pub bias_j: f64,
    pub memristor_j: f64,
    pub gpu_j: f64,
}

/// Replays `trace` into `ledger` one step at a time: pulse energy for every
/// update, then one step of bias at the conductance read during that step.
///
/// Replaying consecutive pieces of a trace into the same ledger performs the
/// same floating-point operations as replaying it whole.
pub fn replay_trace(
    trace: &SynapseTrace,
    ledger: &mut EnergyLedger,
    dc: &DeviceCharacterization,
    gpu: &GpuCostModel,
    opts: &ReplayOptions,
) -> Result<Vec<SeriesPoint>> {
    trace.validate()?;
    check_dim("trace vs ledger synapses", ledger.len(), trace.n_synapses())?;
    if let SeriesScope::Synapse(id) = opts.scope {
        if id >= ledger.len() {
            return Err(Error::UnknownSynapse { id, len: ledger.len() });
        }
    }
    let gpu_step = gpu.synapse_step_energy(opts.precision, opts.gpu_mode)?;
    let gpu_synapses = match opts.scope {
        SeriesScope::All => trace.n_synapses() as f64,
        SeriesScope::Synapse(_) => 1.0,
    };
    let mut g = trace.w.clone();
    let mut series = Vec::with_capacity(trace.len());
    for events in &trace.steps {
        for &(id, df) in events {
            ledger.record_pulse(dc, id, df)?;
        }
        if opts.bias_mode == BiasMode::Instantaneous {
            for (k, gk) in g.iter_mut().enumerate() {
                *gk = trace.w[k] + ledger.f_state[k];
            }
        }
        ledger.accrue_bias(dc, &g, 1)?;
        if opts.bias_mode == BiasMode::Instantaneous {
            for (f, &l) in ledger.f_state.iter_mut().zip(&trace.lambda) {
                *f *= l;
            }
            for &(id, df) in events {
                ledger.f_state[id] += df;
            }
        }
        let (pulse_j, bias_j) = match opts.scope {
            SeriesScope::All => ledger.running_totals(),
            SeriesScope::Synapse(id) => (ledger.pulse_energy()[id], ledger.bias_energy()[id]),
        };
        series.push(SeriesPoint {
            step: ledger.steps(),
            pulse_j,
            bias_j,
            memristor_j: pulse_j + bias_j,
            gpu_j: ledger.steps() as f64 * gpu_synapses * gpu_step,
        });
    }
    Ok(series)
}

pub fn write_series_csv<W: std::io::Write>(out: W, series: &[SeriesPoint]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["step", "pulse_j", "bias_j", "memristor_j", "gpu_j"])?;
    for p in series {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io("energy series", e))?;
    Ok(())
}
