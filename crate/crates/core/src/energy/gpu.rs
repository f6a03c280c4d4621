//! Per-flop GPU cost model.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GPU_TABLE_CSV: &str = include_str!("../../data/gpu_cost_table.csv");

const PICO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpuOp {
    DeltaF,
    Decay,
    WPlusF,
    WeightMult,
}

impl GpuOp {
    pub const ALL: [GpuOp; 4] = [GpuOp::DeltaF, GpuOp::Decay, GpuOp::WPlusF, GpuOp::WeightMult];

    /// Flops per synapse and step; the weight multiplication is one FMA.
    pub fn flops(self) -> f64 {
        match self {
            GpuOp::WeightMult => 2.0,
            _ => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GpuOp::DeltaF => "delta_f",
            GpuOp::Decay => "decay",
            GpuOp::WPlusF => "w_plus_f",
            GpuOp::WeightMult => "weight_mult",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Fp16,
    Fp32,
}

impl Precision {
    pub const ALL: [Precision; 2] = [Precision::Fp16, Precision::Fp32];

    pub fn name(self) -> &'static str {
        match self {
            Precision::Fp16 => "fp16",
            Precision::Fp32 => "fp32",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpuMode {
    /// Measured on the network's own synapse count.
    Standard,
    /// Scaled from the GPU's most efficient problem size.
    Optimal,
    /// Register-only kernels, no memory traffic.
    Compute,
}

impl GpuMode {
    pub const ALL: [GpuMode; 3] = [GpuMode::Standard, GpuMode::Optimal, GpuMode::Compute];

    pub fn name(self) -> &'static str {
        match self {
            GpuMode::Standard => "standard",
            GpuMode::Optimal => "optimal",
            GpuMode::Compute => "compute",
        }
    }
}

macro_rules! from_str_by_name {
    ($t:ty) => {
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                <$t>::ALL
                    .into_iter()
                    .find(|v| v.name() == s)
                    .ok_or_else(|| Error::UnknownKey(s.to_string()))
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

from_str_by_name!(GpuOp);
from_str_by_name!(Precision);
from_str_by_name!(GpuMode);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkScale {
    pub n_synapses: u64,
    pub n_steps: u64,
}

impl Default for NetworkScale {
    /// `(2592 + 64) · 64` synapses over one 6826-step game.
    fn default() -> Self {
        NetworkScale {
            n_synapses: 169_984,
            n_steps: 6826,
        }
    }
}

impl NetworkScale {
    pub fn synapse_steps(&self) -> f64 {
        self.n_synapses as f64 * self.n_steps as f64
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    op: String,
    precision: String,
    mode: String,
    pj_per_flop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpuCostModel {
    entries: BTreeMap<(GpuOp, Precision, GpuMode), f64>,
}

impl Default for GpuCostModel {
    fn default() -> Self {
        Self::from_csv_reader(DEFAULT_GPU_TABLE_CSV.as_bytes()).expect("bundled GPU table parses")
    }
}

impl GpuCostModel {
    /// Reads `op,precision,mode,pj_per_flop` rows; `#` starts a comment line.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let mut entries = BTreeMap::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            let key = (row.op.parse()?, row.precision.parse()?, row.mode.parse()?);
            if !(row.pj_per_flop > 0.0 && row.pj_per_flop.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "{}/{}/{}: energy per flop must be positive, got {}",
                    row.op, row.precision, row.mode, row.pj_per_flop
                )));
            }
            if entries.insert(key, row.pj_per_flop).is_some() {
                return Err(Error::InvalidData(format!(
                    "duplicate entry {}/{}/{}",
                    row.op, row.precision, row.mode
                )));
            }
        }
        Ok(GpuCostModel { entries })
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(f)
    }

    pub fn pj_per_flop(&self, op: GpuOp, precision: Precision, mode: GpuMode) -> Result<f64> {
        self.entries
            .get(&(op, precision, mode))
            .copied()
            .ok_or_else(|| Error::UnknownKey(format!("{op}/{precision}/{mode}")))
    }

    /// Energy of one synapse for one step across all four operations, J.
    pub fn synapse_step_energy(&self, precision: Precision, mode: GpuMode) -> Result<f64> {
        let mut pj = 0.0;
        for op in GpuOp::ALL {
            pj += self.pj_per_flop(op, precision, mode)? * op.flops();
        }
        Ok(pj * PICO)
    }
}

/// Energy of `op` over the whole network and game, J.
pub fn gpu_energy(model: &GpuCostModel, op: GpuOp, precision: Precision, mode: GpuMode, scale: NetworkScale) -> Result<f64> {
    Ok(model.pj_per_flop(op, precision, mode)? * op.flops() * scale.synapse_steps() * PICO)
}
