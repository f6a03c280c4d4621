//! Time-domain replay of a pulse/bias protocol on a single device.

use serde::{Deserialize, Serialize};

use super::{DeviceCharacterization, SynapseState, F_MEAS_LIMIT_NS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolPulse {
    pub t_s: f64,
    pub voltage: f64,
    pub width_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub pulses: Vec<ProtocolPulse>,
    /// Constant decay-control bias applied between pulses.
    pub v_bias: f64,
    pub duration_s: f64,
    pub dt_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConductanceSample {
    pub t_s: f64,
    pub g_ns: f64,
    pub f_ns: f64,
}

/// Samples G(t) = W + F(t) every `dt_s`. Between pulses F relaxes as
/// `Λ^(Δt / decay_step_s)` with Λ set by the bias; W drifts only when
/// `longterm_drift_tau_s` is set.
pub fn simulate_protocol(
    dc: &DeviceCharacterization,
    start: SynapseState,
    protocol: &Protocol,
) -> Result<Vec<ConductanceSample>> {
    if !(protocol.dt_s > 0.0) || !(protocol.duration_s >= 0.0) {
        return Err(Error::InvalidData("protocol needs dt_s > 0 and duration_s >= 0".into()));
    }
    let lambda = dc.lambda_of_vbias(protocol.v_bias)?;
    let per_dt = lambda.powf(protocol.dt_s / dc.decay_step_s);
    let drift = dc
        .longterm_drift_tau_s
        .map(|tau| (-protocol.dt_s / tau).exp())
        .unwrap_or(1.0);
    let mut jumps = Vec::with_capacity(protocol.pulses.len());
    for p in &protocol.pulses {
        jumps.push((p.t_s, dc.pulse_delta_f(p.voltage, p.width_us)?));
    }
    jumps.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n = (protocol.duration_s / protocol.dt_s).round() as usize;
    let mut out = Vec::with_capacity(n + 1);
    let (mut w, mut f) = (start.w_meas, start.f_meas);
    let mut next = 0;
    for i in 0..=n {
        let t = i as f64 * protocol.dt_s;
        while next < jumps.len() && jumps[next].0 <= t + 1e-12 {
            f = (f + jumps[next].1).clamp(-F_MEAS_LIMIT_NS, F_MEAS_LIMIT_NS);
            next += 1;
        }
        out.push(ConductanceSample {
            t_s: t,
            g_ns: w + f,
            f_ns: f,
        });
        f *= per_dt;
        w = dc.g_min_ns + (w - dc.g_min_ns) * drift;
    }
    Ok(out)
}
