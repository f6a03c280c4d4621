use std::io::Write;

use serde::{Deserialize, Serialize};

use super::gpu::{gpu_energy, GpuCostModel, GpuMode, GpuOp, NetworkScale, Precision};
use super::ledger::EnergyLedger;
use crate::error::{Error, Result};

/// Per-component energies, mJ. Operations a platform performs implicitly are
/// `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentTotals {
    pub delta_f_mj: f64,
    pub decay_mj: f64,
    pub w_plus_f_mj: Option<f64>,
    pub st_hebb_mj: f64,
    pub weight_mult_mj: Option<f64>,
    pub total_mj: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpuRow {
    pub precision: Precision,
    pub mode: GpuMode,
    pub totals: ComponentTotals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub scale: NetworkScale,
    pub step_duration_s: f64,
    pub pulse_events: u64,
    pub memristor: ComponentTotals,
    pub gpu: Vec<GpuRow>,
    /// GPU (optimal, fp16) total over the memristor total; absent when the
    /// memristor total is zero.
    pub ratio_optimal_fp16: Option<f64>,
}

impl EnergyReport {
    pub fn gpu_row(&self, precision: Precision, mode: GpuMode) -> Option<&GpuRow> {
        self.gpu.iter().find(|r| r.precision == precision && r.mode == mode)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

const MILLI: f64 = 1e3;

/// Memristor totals from `ledger`, GPU totals for every precision and mode at
/// `scale`.
pub fn report(ledger: &EnergyLedger, gpu: &GpuCostModel, scale: NetworkScale) -> Result<EnergyReport> {
    let pulse = ledger.pulse_total() * MILLI;
    let bias = ledger.bias_total() * MILLI;
    let memristor = ComponentTotals {
        delta_f_mj: pulse,
        decay_mj: bias,
        w_plus_f_mj: None,
        st_hebb_mj: pulse + bias,
        weight_mult_mj: None,
        total_mj: pulse + bias,
    };
    let mut rows = Vec::new();
    for mode in GpuMode::ALL {
        for precision in Precision::ALL {
            let e = |op| gpu_energy(gpu, op, precision, mode, scale).map(|j| j * MILLI);
            let (df, decay, wf, wm) = (e(GpuOp::DeltaF)?, e(GpuOp::Decay)?, e(GpuOp::WPlusF)?, e(GpuOp::WeightMult)?);
            let st = df + decay + wf;
            rows.push(GpuRow {
                precision,
                mode,
                totals: ComponentTotals {
                    delta_f_mj: df,
                    decay_mj: decay,
                    w_plus_f_mj: Some(wf),
                    st_hebb_mj: st,
                    weight_mult_mj: Some(wm),
                    total_mj: st + wm,
                },
            });
        }
    }
    let optimal = rows
        .iter()
        .find(|r| r.precision == Precision::Fp16 && r.mode == GpuMode::Optimal)
        .map(|r| r.totals.total_mj)
        .unwrap_or(0.0);
    let ratio = (memristor.total_mj > 0.0).then(|| optimal / memristor.total_mj);
    Ok(EnergyReport {
        scale,
        step_duration_s: ledger.step_duration_s,
        pulse_events: ledger.event_counts().iter().sum(),
        memristor,
        gpu: rows,
        ratio_optimal_fp16: ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub quantity: String,
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Equal-width histogram over the range of `values`.
pub fn histogram(quantity: &str, values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidData("histogram needs at least one bin".into()));
    }
    let mut out = Histogram {
        quantity: quantity.to_string(),
        edges: Vec::new(),
        counts: Vec::new(),
    };
    if values.is_empty() {
        return Ok(out);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFinite(format!("{quantity} histogram input")));
    }
    if lo == hi {
        out.edges = vec![lo, hi];
        out.counts = vec![values.len() as u64];
        return Ok(out);
    }
    let width = (hi - lo) / bins as f64;
    out.edges = (0..=bins).map(|k| lo + width * k as f64).collect();
    out.edges[bins] = hi;
    out.counts = vec![0; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        out.counts[k] += 1;
    }
    Ok(out)
}

/// Per-synapse histograms of pulse (ΔF) energy, bias (decay) energy and their
/// sum, J.
pub fn ledger_histograms(ledger: &EnergyLedger, bins: usize) -> Result<Vec<Histogram>> {
    let total: Vec<f64> = ledger
        .pulse_energy()
        .iter()
        .zip(ledger.bias_energy())
        .map(|(p, b)| p + b)
        .collect();
    Ok(vec![
        histogram("delta_f_j", ledger.pulse_energy(), bins)?,
        histogram("decay_j", ledger.bias_energy(), bins)?,
        histogram("total_j", &total, bins)?,
    ])
}

#[derive(Serialize)]
struct HistRow<'a> {
    quantity: &'a str,
    bin_lo: f64,
    bin_hi: f64,
    count: u64,
}

pub fn write_histograms_csv<W: Write>(out: W, hists: &[Histogram]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["quantity", "bin_lo", "bin_hi", "count"])?;
    for h in hists {
        for (k, &count) in h.counts.iter().enumerate() {
            w.serialize(HistRow {
                quantity: &h.quantity,
                bin_lo: h.edges[k],
                bin_hi: h.edges[k + 1],
                count,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io("histograms", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceCharacterization;
    use crate::energy::worst_case_ledger;

    #[test]
    fn empty_ledger_and_zero_scale_report_zeros() {
        let l = EnergyLedger::worst_case(0);
        let scale = NetworkScale {
            n_synapses: 0,
            n_steps: 0,
        };
        let r = report(&l, &GpuCostModel::default(), scale).unwrap();
        assert_eq!(r.memristor.total_mj, 0.0);
        assert!(r.gpu.iter().all(|row| row.totals.total_mj == 0.0));
        assert_eq!(r.ratio_optimal_fp16, None);
    }

    #[test]
    fn worst_case_full_game() {
        let dc = DeviceCharacterization::default();
        let scale = NetworkScale::default();
        let l = worst_case_ledger(&dc, scale.n_synapses as usize, scale.n_steps);
        let r = report(&l, &GpuCostModel::default(), scale).unwrap();
        assert!((36.0..37.5).contains(&r.memristor.total_mj), "{}", r.memristor.total_mj);
        assert_eq!(r.memristor.delta_f_mj, 0.0);
        let ratio = r.ratio_optimal_fp16.unwrap();
        assert!((90.0..=102.0).contains(&ratio), "{ratio}");
        let json = r.to_json().unwrap();
        assert!(json.contains("\"ratio_optimal_fp16\""));
    }

    #[test]
    fn histogram_counts_every_value() {
        let h = histogram("x", &[0.0, 0.1, 0.5, 1.0, 1.0], 4).unwrap();
        assert_eq!(h.edges.len(), 5);
        assert_eq!(h.counts.iter().sum::<u64>(), 5);
        assert_eq!(h.counts[3], 2);
        let flat = histogram("y", &[2.0; 3], 10).unwrap();
        assert_eq!(flat.counts, vec![3]);
        let mut buf = Vec::new();
        write_histograms_csv(&mut buf, &[h]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("quantity,bin_lo,bin_hi,count\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
