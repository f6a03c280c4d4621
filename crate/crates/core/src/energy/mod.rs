//! Energy accounting for memristive synapses against a per-flop GPU model.
//!
//! The memristor pays for each programming pulse and for the read current
//! drawn by the decay-control bias. Addition of `W` and `F` happens inside the
//! device, and the input-weight product is the read current itself, so
//! neither appears as a separate memristor cost.

mod gpu;
mod ledger;
mod replay;
mod report;
mod trace;

pub use gpu::{gpu_energy, GpuCostModel, GpuMode, GpuOp, NetworkScale, Precision, DEFAULT_GPU_TABLE_CSV};
pub use ledger::{default_step_duration, worst_case_ledger, EnergyLedger, GAME_DURATION_S, GAME_STEPS, WORST_CASE_VBIAS};
pub use replay::{replay_trace, write_series_csv, BiasMode, ReplayOptions, SeriesPoint, SeriesScope};
pub use report::{histogram, ledger_histograms, report, write_histograms_csv, ComponentTotals, EnergyReport, GpuRow, Histogram};
pub use trace::SynapseTrace;
