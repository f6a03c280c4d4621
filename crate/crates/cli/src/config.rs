//! Experiment configuration, one TOML file per run.

use std::path::{Path, PathBuf};

use memstpn::device::{DeviceCharacterization, PulseGrid};
use memstpn::energy::{default_step_duration, BiasMode, GpuCostModel, GpuMode, Precision};
use memstpn::envs::EnvConfig;
use memstpn::mstpn::{DecayRequant, LayerConfig, NormKind, Normalization};
use memstpn::network::{AgentConfig, EncoderConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Root seed; every random stream of the run derives from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub device: DeviceSection,
    pub env: EnvConfig,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub energy: EnergySection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    /// Pulse-grid CSV; the bundled characterization is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub characterization: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub encoder: EncoderConfig,
    pub n_out: usize,
    pub recurrent: bool,
    pub gamma_init: f64,
    pub device_mode: bool,
    pub normalization: Normalization,
    pub norm_kind: NormKind,
    pub delta_f_clip: f64,
    pub delta_f_step: f64,
    pub decay_requant: DecayRequant,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_range: Option<(f64, f64)>,
}

impl Default for AgentSection {
    fn default() -> Self {
        let layer = LayerConfig::new(1, 1);
        AgentSection {
            encoder: EncoderConfig::Dense { width: 16 },
            n_out: 16,
            recurrent: true,
            gamma_init: 0.001,
            device_mode: layer.device_mode,
            normalization: layer.normalization,
            norm_kind: layer.norm_kind,
            delta_f_clip: layer.delta_f_clip,
            delta_f_step: layer.delta_f_step,
            decay_requant: layer.decay_requant,
            w_range: layer.w_range,
        }
    }
}

impl AgentSection {
    pub fn agent_config(&self, obs_dim: usize, n_actions: usize, lambda_range: (f64, f64)) -> memstpn::Result<AgentConfig> {
        let features = self.encoder.output_width(obs_dim)?;
        let n_in = if self.recurrent { features + self.n_out } else { features };
        let core = LayerConfig {
            recurrent: self.recurrent,
            device_mode: self.device_mode,
            normalization: self.normalization,
            norm_kind: self.norm_kind,
            lambda_range,
            delta_f_clip: self.delta_f_clip,
            delta_f_step: self.delta_f_step,
            decay_requant: self.decay_requant,
            w_range: self.w_range,
            ..LayerConfig::new(n_in, self.n_out)
        };
        let cfg = AgentConfig {
            obs_dim,
            n_actions,
            encoder: self.encoder.clone(),
            core,
            gamma_init: self.gamma_init,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Maximum bias on every synapse.
    #[default]
    WorstCase,
    /// Per-synapse bias that realizes the trace's decay values.
    FromLambda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySection {
    pub scenario: Scenario,
    pub bias_mode: BiasMode,
    pub precision: Precision,
    pub gpu_mode: GpuMode,
    pub step_duration_s: f64,
    pub histogram_bins: usize,
    /// Per-flop GPU cost CSV; the bundled table is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gpu_table: Option<PathBuf>,
}

impl Default for EnergySection {
    fn default() -> Self {
        EnergySection {
            scenario: Scenario::WorstCase,
            bias_mode: BiasMode::LongTerm,
            precision: Precision::Fp32,
            gpu_mode: GpuMode::Standard,
            step_duration_s: default_step_duration(),
            histogram_bins: 50,
            gpu_table: None,
        }
    }
}

impl ExperimentConfig {
    /// Reads, resolves relative paths against the file's directory and
    /// validates.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(path, format!("cannot read config: {e}")))?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate(path)?;
        Ok(cfg)
    }

    /// Parses without touching the filesystem; `origin` labels diagnostics.
    pub fn parse(text: &str, origin: &Path) -> CliResult<Self> {
        let header: toml::Table =
            toml::from_str(text).map_err(|e| CliError::config(origin, e.to_string()))?;
        match header.get("schema_version").and_then(toml::Value::as_integer) {
            Some(v) if v == SCHEMA_VERSION as i64 => {}
            Some(v) => {
                return Err(CliError::config(
                    origin,
                    format!("schema_version {v} is not supported (expected {SCHEMA_VERSION})"),
                ))
            }
            None => return Err(CliError::config(origin, "missing integer field `schema_version`")),
        }
        toml::from_str(text).map_err(|e| CliError::config(origin, e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.device.characterization.as_mut() {
            fix(p);
        }
        if let Some(p) = self.energy.gpu_table.as_mut() {
            fix(p);
        }
        if let Some(p) = self.out.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self, origin: &Path) -> CliResult<()> {
        let bad = |field: &str, e: memstpn::Error| CliError::config(origin, format!("{field}: {e}"));
        for (field, file) in [
            ("device.characterization", &self.device.characterization),
            ("energy.gpu_table", &self.energy.gpu_table),
        ] {
            if let Some(p) = file {
                if !p.is_file() {
                    return Err(CliError::config(origin, format!("{field}: file not found: {}", p.display())));
                }
            }
        }
        let train = self.train_config();
        train.validate().map_err(|e| bad("train", e))?;
        let env = self.env.build();
        self.agent
            .agent_config(env.observation_dim(), env.n_actions(), train.lambda_range)
            .map_err(|e| bad("agent", e))?;
        if self.energy.histogram_bins == 0 {
            return Err(CliError::config(origin, "energy.histogram_bins: must be positive"));
        }
        if !(self.energy.step_duration_s > 0.0 && self.energy.step_duration_s.is_finite()) {
            return Err(CliError::config(origin, "energy.step_duration_s: must be positive"));
        }
        Ok(())
    }

    /// Training settings with the root seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn agent_config(&self) -> memstpn::Result<AgentConfig> {
        let env = self.env.build();
        self.agent
            .agent_config(env.observation_dim(), env.n_actions(), self.train.lambda_range)
    }

    pub fn characterization(&self) -> CliResult<DeviceCharacterization> {
        load_characterization(self.device.characterization.as_deref())
    }

    pub fn gpu_model(&self) -> CliResult<GpuCostModel> {
        match &self.energy.gpu_table {
            Some(p) => Ok(GpuCostModel::from_csv_path(p)?),
            None => Ok(GpuCostModel::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved configuration text.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }
}

pub fn load_characterization(grid: Option<&Path>) -> CliResult<DeviceCharacterization> {
    let mut dc = DeviceCharacterization::default();
    if let Some(p) = grid {
        if !p.is_file() {
            return Err(CliError::config(p, "device characterization file not found"));
        }
        dc.pulse_grid = PulseGrid::from_csv_path(p)?;
        dc.validate()?;
    }
    Ok(dc)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
