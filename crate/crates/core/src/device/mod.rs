//! Phenomenological model of the Cr/Pt-SrTiO3-Ti memristive synapse.
//!
//! Conductances are in nS ("measured" units). The network works in
//! dimensionless simulation units related by `G = (G_meas - G_min) / m`.
//! The device keeps a long-term level W and a short-term offset F; a voltage
//! pulse raises F, a constant bias voltage sets the per-step retention Λ of F.

mod fit;
mod grid;
mod protocol;

pub use fit::{fit_power_law, fit_sigmoid, PowerLawFit, SigmoidFit};
pub use grid::{GridPoint, PulseGrid, CSV_HEADER, DEFAULT_GRID_CSV};
pub use protocol::{simulate_protocol, ConductanceSample, Protocol, ProtocolPulse};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NANO: f64 = 1e-9;
const PICO: f64 = 1e-12;

/// `Λ(V) = L / (1 + exp(-k (V - V0))) + Λ0`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidParams {
    pub l: f64,
    pub k: f64,
    pub v0: f64,
    pub lambda0: f64,
}

impl SigmoidParams {
    /// Solves for `L` and `Λ0` so that the curve passes through both endpoints
    /// of `lambda_range` at the endpoints of `v_range`.
    pub fn through_endpoints(k: f64, v0: f64, v_range: (f64, f64), lambda_range: (f64, f64)) -> Self {
        let s = |v: f64| 1.0 / (1.0 + (-k * (v - v0)).exp());
        let (s_lo, s_hi) = (s(v_range.0), s(v_range.1));
        let l = (lambda_range.1 - lambda_range.0) / (s_hi - s_lo);
        let lambda0 = lambda_range.0 - l * s_lo;
        SigmoidParams { l, k, v0, lambda0 }
    }

    pub fn eval(&self, v: f64) -> f64 {
        self.l / (1.0 + (-self.k * (v - self.v0)).exp()) + self.lambda0
    }

    /// Inverse of [`SigmoidParams::eval`]; NaN outside `(Λ0, Λ0 + L)`.
    pub fn inverse(&self, lambda: f64) -> f64 {
        self.v0 - (self.l / (lambda - self.lambda0) - 1.0).ln() / self.k
    }
}

/// `E_pulse(ΔF) = c |ΔF|^α`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLaw {
    pub c_pj: f64,
    pub alpha: f64,
    /// Unit of ΔF on the law's abscissa.
    #[serde(default)]
    pub unit: DeltaFUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaFUnit {
    #[default]
    Sim,
    Nanosiemens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceCharacterization {
    pub g_min_ns: f64,
    pub m_slope_ns: f64,
    pub w_max_ns: f64,
    pub pulse_grid: PulseGrid,
    pub sigmoid: SigmoidParams,
    pub energy_law: EnergyLaw,
    pub v_bias_range: (f64, f64),
    pub lambda_range: (f64, f64),
    pub v_read: f64,
    /// Long-term conductance gained per block of 100 SET pulses (nS).
    pub longterm_step_ns: f64,
    /// Physical time represented by one Λ retention step (s).
    pub decay_step_s: f64,
    /// Relaxation time of the long-term level toward `g_min`; `None` disables drift.
    pub longterm_drift_tau_s: Option<f64>,
}

impl Default for DeviceCharacterization {
    fn default() -> Self {
        let v_bias_range = (-0.6, 0.6);
        let lambda_range = (0.08, 0.92);
        DeviceCharacterization {
            g_min_ns: 12.0,
            m_slope_ns: 2.0,
            w_max_ns: 23.0,
            pulse_grid: PulseGrid::default(),
            sigmoid: SigmoidParams::through_endpoints(6.0, 0.0, v_bias_range, lambda_range),
            energy_law: EnergyLaw {
                c_pj: 30.0,
                alpha: 1.52,
                unit: DeltaFUnit::Sim,
            },
            v_bias_range,
            lambda_range,
            v_read: 0.6,
            longterm_step_ns: 2.2,
            decay_step_s: 0.5,
            longterm_drift_tau_s: None,
        }
    }
}

/// Long-term level and short-term offset of one device, both in nS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynapseState {
    pub w_meas: f64,
    pub f_meas: f64,
}

/// Largest short-term offset a device holds (nS): 20 simulation units.
pub const F_MEAS_LIMIT_NS: f64 = 40.0;

impl SynapseState {
    pub fn new(w_meas: f64, f_meas: f64, dc: &DeviceCharacterization) -> Result<Self> {
        check_range("w_meas", w_meas, dc.g_min_ns, dc.w_max_ns)?;
        check_range("f_meas", f_meas, -F_MEAS_LIMIT_NS, F_MEAS_LIMIT_NS)?;
        Ok(SynapseState { w_meas, f_meas })
    }

    pub fn total_ns(&self) -> f64 {
        self.w_meas + self.f_meas
    }
}

fn check_range(what: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(Error::Range { what, value, lo, hi })
    }
}

impl DeviceCharacterization {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidData(msg.to_string()));
        if !(self.g_min_ns < self.w_max_ns) {
            return bad("g_min must be below w_max");
        }
        if !(self.m_slope_ns > 0.0) {
            return bad("m_slope must be positive");
        }
        if !(self.energy_law.c_pj > 0.0 && self.energy_law.alpha > 0.0) {
            return bad("energy law constants must be positive");
        }
        let (lo, hi) = self.lambda_range;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return bad("lambda_range must lie inside [0, 1]");
        }
        if !(self.v_bias_range.0 < self.v_bias_range.1) {
            return bad("v_bias_range is empty");
        }
        let at_lo = self.sigmoid.eval(self.v_bias_range.0);
        let at_hi = self.sigmoid.eval(self.v_bias_range.1);
        if (at_lo - lo).abs() > 1e-6 || (at_hi - hi).abs() > 1e-6 {
            return bad("sigmoid does not reproduce lambda_range at the bias endpoints");
        }
        if !(self.longterm_step_ns > 0.0 && self.decay_step_s > 0.0) {
            return bad("longterm_step_ns and decay_step_s must be positive");
        }
        Ok(())
    }

    /// Measured conductance (nS) to simulation units.
    pub fn map_to_sim(&self, g_meas: f64) -> f64 {
        (g_meas - self.g_min_ns) / self.m_slope_ns
    }

    /// Simulation units to measured conductance (nS).
    pub fn map_to_meas(&self, g_sim: f64) -> f64 {
        g_sim * self.m_slope_ns + self.g_min_ns
    }

    /// Largest long-term weight in simulation units.
    pub fn w_max_sim(&self) -> f64 {
        self.map_to_sim(self.w_max_ns)
    }

    pub fn lambda_of_vbias(&self, v_bias: f64) -> Result<f64> {
        check_range("v_bias", v_bias, self.v_bias_range.0, self.v_bias_range.1)?;
        let (lo, hi) = self.lambda_range;
        Ok(self.sigmoid.eval(v_bias).clamp(lo, hi))
    }

    pub fn vbias_of_lambda(&self, lambda: f64) -> Result<f64> {
        let (lo, hi) = self.lambda_range;
        if !(lambda > lo && lambda < hi) {
            return Err(Error::UnreachableDecay { lambda, lo, hi });
        }
        let v = self.sigmoid.inverse(lambda);
        if !v.is_finite() {
            return Err(Error::UnreachableDecay { lambda, lo, hi });
        }
        Ok(v.clamp(self.v_bias_range.0, self.v_bias_range.1))
    }

    /// Short-term conductance jump (nS) caused by one pulse.
    pub fn pulse_delta_f(&self, voltage: f64, width_us: f64) -> Result<f64> {
        self.pulse_grid.delta_f_ns(voltage, width_us)
    }

    /// Pulse `(voltage, width_us)` realizing `|delta_f_target_ns|`.
    ///
    /// Candidates are the exact solutions along the grid lines. The cheapest one
    /// wins, ties going to the lower voltage and then the shorter pulse.
    pub fn select_pulse(&self, delta_f_target_ns: f64) -> Result<(f64, f64)> {
        let target = delta_f_target_ns.abs();
        let (lo_ns, hi_ns) = self.pulse_grid.achievable_range_ns();
        if !(lo_ns..=hi_ns).contains(&target) {
            return Err(Error::UnachievableUpdate {
                target_ns: delta_f_target_ns,
                lo_ns,
                hi_ns,
            });
        }
        let mut best: Option<(f64, f64, f64)> = None;
        for (v, w) in self.pulse_grid.exact_candidates(target) {
            let e = self.pulse_grid.energy_pj(v, w)?;
            let better = match best {
                None => true,
                Some((be, bv, bw)) => {
                    let tol = 1e-12 * be.abs().max(e.abs());
                    if (e - be).abs() > tol {
                        e < be
                    } else if v != bv {
                        v < bv
                    } else {
                        w < bw
                    }
                }
            };
            if better {
                best = Some((e, v, w));
            }
        }
        best.map(|(_, v, w)| (v, w)).ok_or(Error::UnachievableUpdate {
            target_ns: delta_f_target_ns,
            lo_ns,
            hi_ns,
        })
    }

    /// Pulse energy (J) for a short-term update of `delta_f_sim` simulation units.
    pub fn pulse_energy(&self, delta_f_sim: f64) -> f64 {
        let x = match self.energy_law.unit {
            DeltaFUnit::Sim => delta_f_sim.abs(),
            DeltaFUnit::Nanosiemens => delta_f_sim.abs() * self.m_slope_ns,
        };
        if x == 0.0 {
            return 0.0;
        }
        self.energy_law.c_pj * x.powf(self.energy_law.alpha) * PICO
    }

    /// Static power (W) drawn by the decay-control bias.
    pub fn bias_power(&self, g_sim: f64, v_bias: f64) -> f64 {
        self.map_to_meas(g_sim).abs() * NANO * v_bias * v_bias
    }

    /// Ohmic read current (A).
    pub fn read_current(&self, g_sim: f64, v_read: f64) -> f64 {
        self.map_to_meas(g_sim) * NANO * v_read
    }

    /// Potentiates the long-term level toward `w_target_ns` in blocks of 100 SET pulses.
    /// Returns the new state and the number of pulses issued.
    pub fn program_longterm(&self, w_target_ns: f64, state: SynapseState) -> Result<(SynapseState, u32)> {
        if w_target_ns < state.w_meas {
            return Err(Error::UnsupportedDepression {
                target_ns: w_target_ns,
                current_ns: state.w_meas,
            });
        }
        check_range("w_target", w_target_ns, self.g_min_ns, self.w_max_ns)?;
        let blocks = ((w_target_ns - state.w_meas) / self.longterm_step_ns).round();
        let w_meas = (state.w_meas + blocks * self.longterm_step_ns).min(self.w_max_ns);
        Ok((
            SynapseState {
                w_meas,
                f_meas: state.f_meas,
            },
            blocks as u32 * 100,
        ))
    }
}

/// One retention step of the short-term weight.
pub fn decay_step(f: f64, lambda: f64) -> Result<f64> {
    check_range("lambda", lambda, 0.0, 1.0)?;
    Ok(lambda * f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dc() -> DeviceCharacterization {
        DeviceCharacterization::default()
    }

    #[test]
    fn default_characterization_is_valid() {
        dc().validate().unwrap();
    }

    #[test]
    fn conductance_mapping() {
        let d = dc();
        assert_eq!(d.map_to_sim(12.0), 0.0);
        assert_eq!(d.map_to_sim(14.0), 1.0);
        assert_eq!(d.map_to_meas(d.map_to_sim(12.0)), 12.0);
        assert_eq!(d.map_to_meas(0.0), 12.0);
        assert_eq!(d.map_to_meas(5.5), 23.0);
        assert_eq!(d.map_to_meas(-2.0), 8.0);
        assert_eq!(d.w_max_sim(), 5.5);
    }

    #[test]
    fn sigmoid_endpoints_and_midpoint() {
        let d = dc();
        assert_relative_eq!(d.lambda_of_vbias(-0.6).unwrap(), 0.08, epsilon = 1e-12);
        assert_relative_eq!(d.lambda_of_vbias(0.6).unwrap(), 0.92, epsilon = 1e-12);
        // Symmetric sigmoid with V0 = 0: the midpoint is the mean of the endpoints.
        assert_relative_eq!(d.lambda_of_vbias(0.0).unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(d.sigmoid.l, 0.887_193, epsilon = 1e-6);
        assert_relative_eq!(d.sigmoid.lambda0, 0.056_403, epsilon = 1e-6);
        assert!(matches!(d.lambda_of_vbias(0.7), Err(Error::Range { .. })));
    }

    #[test]
    fn sigmoid_inverse() {
        let d = dc();
        let v = d.vbias_of_lambda(0.92 - 1e-6).unwrap();
        assert!((v - 0.6).abs() < 1e-3, "{v}");
        let lam = d.lambda_of_vbias(0.2).unwrap();
        assert_relative_eq!(d.vbias_of_lambda(lam).unwrap(), 0.2, epsilon = 1e-12);
        assert!(matches!(
            d.vbias_of_lambda(0.99),
            Err(Error::UnreachableDecay { .. })
        ));
        assert!(d.vbias_of_lambda(0.08).is_err());
    }

    #[test]
    fn pulse_anchors() {
        let d = dc();
        assert_eq!(d.pulse_delta_f(2.0, 100.0).unwrap(), 3.0);
        assert_eq!(d.pulse_delta_f(2.5, 100.0).unwrap(), 5.0);
        assert_eq!(d.pulse_delta_f(3.0, 100.0).unwrap(), 10.0);
    }

    #[test]
    fn pulse_planning() {
        let d = dc();
        assert_eq!(d.select_pulse(10.0).unwrap(), (3.0, 100.0));
        assert_eq!(d.select_pulse(-10.0).unwrap(), (3.0, 100.0));
        assert!(matches!(
            d.select_pulse(0.1),
            Err(Error::UnachievableUpdate { .. })
        ));
        assert!(d.select_pulse(50.0).is_err());
        // 20 sim units = 40 nS exceeds the characterized ceiling.
        assert!(d.select_pulse(d.m_slope_ns * 20.0).is_err());
    }

    #[test]
    fn planned_pulses_hit_their_target() {
        let d = dc();
        let mut target = 0.7;
        while target <= 38.6 {
            let (v, w) = d.select_pulse(target).unwrap();
            let got = d.pulse_delta_f(v, w).unwrap();
            assert!((got - target).abs() <= 0.05 * target, "{target}: {got}");
            target += 0.37;
        }
    }

    #[test]
    fn pulse_energy_law() {
        let d = dc();
        assert_relative_eq!(d.pulse_energy(1.0), 30e-12, max_relative = 1e-15);
        assert_eq!(d.pulse_energy(0.0), 0.0);
        // 30 * 4^1.52 = 30 * exp(1.52 ln 4)
        let expected = 30.0 * (1.52 * 4f64.ln()).exp() * 1e-12;
        assert_relative_eq!(d.pulse_energy(4.0), expected, max_relative = 1e-12);
        assert_relative_eq!(d.pulse_energy(4.0), 246.747_318e-12, max_relative = 1e-8);
        assert_eq!(d.pulse_energy(-3.0), d.pulse_energy(3.0));
    }

    #[test]
    fn pulse_energy_unit_switch() {
        let mut d = dc();
        d.energy_law.unit = DeltaFUnit::Nanosiemens;
        // 1 sim unit is 2 nS on the abscissa.
        assert_relative_eq!(d.pulse_energy(1.0), 30.0 * 2f64.powf(1.52) * 1e-12, max_relative = 1e-12);
    }

    #[test]
    fn bias_power_anchor() {
        let d = dc();
        assert_relative_eq!(d.bias_power(0.0, 0.6), 4.32e-9, max_relative = 1e-12);
        assert_eq!(d.bias_power(3.0, 0.0), 0.0);
        assert_relative_eq!(d.bias_power(5.5, 0.6), 8.28e-9, max_relative = 1e-12);
    }

    #[test]
    fn read_current_is_ohmic() {
        let d = dc();
        assert_relative_eq!(d.read_current(0.0, 0.6), 7.2e-9, max_relative = 1e-12);
        assert_eq!(d.read_current(2.0, 0.0), 0.0);
        assert_relative_eq!(d.read_current(1.0, 1.0), 14e-9, max_relative = 1e-12);
    }

    #[test]
    fn decay_steps() {
        assert_eq!(decay_step(10.0, 0.5).unwrap(), 5.0);
        assert_eq!(decay_step(3.0, 0.0).unwrap(), 0.0);
        assert!(decay_step(1.0, 1.1).is_err());
        let mut f = 1.0;
        for _ in 0..10 {
            f = decay_step(f, 0.92).unwrap();
        }
        assert_relative_eq!(f, 0.92f64.powi(10), max_relative = 1e-14);
        assert_relative_eq!(f, 0.434_388_454, max_relative = 1e-8);
    }

    #[test]
    fn longterm_programming() {
        let d = dc();
        let s = SynapseState::new(12.0, 0.0, &d).unwrap();
        assert_eq!(d.program_longterm(12.0, s).unwrap(), (s, 0));
        let (s2, pulses) = d.program_longterm(23.0, s).unwrap();
        assert_eq!(pulses, 500);
        assert_eq!(s2.w_meas, 23.0);
        assert!(matches!(
            d.program_longterm(10.0, s),
            Err(Error::UnsupportedDepression { .. })
        ));
        assert!(matches!(
            d.program_longterm(24.0, s),
            Err(Error::Range { .. })
        ));
        let mid = SynapseState::new(16.4, 0.0, &d).unwrap();
        assert!(matches!(
            d.program_longterm(14.0, mid),
            Err(Error::UnsupportedDepression { .. })
        ));
    }

    #[test]
    fn synapse_state_bounds() {
        let d = dc();
        assert!(SynapseState::new(11.0, 0.0, &d).is_err());
        assert!(SynapseState::new(12.0, 41.0, &d).is_err());
        assert!(SynapseState::new(23.0, -40.0, &d).is_ok());
    }
}
