use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{relu, relu_backward, Conv2d, ConvSpec, Linear};
use crate::error::{check_dim, Error, Result};
use crate::mstpn::{self, LayerConfig, StpnParams, StpnState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderConfig {
    /// One affine map followed by ReLU.
    Dense { width: usize },
    /// Stack of valid convolutions, each followed by ReLU, over a
    /// `channels × height × width` observation.
    Conv {
        input: (usize, usize, usize),
        layers: Vec<ConvSpec>,
    },
    /// Observation fed to the core unchanged.
    Identity,
}

impl EncoderConfig {
    /// 84×84 grayscale frames through 16@8×8/4 and 32@4×4/2, 2592 features.
    pub fn atari() -> Self {
        EncoderConfig::Conv {
            input: (1, 84, 84),
            layers: vec![
                ConvSpec { filters: 16, kernel: 8, stride: 4 },
                ConvSpec { filters: 32, kernel: 4, stride: 2 },
            ],
        }
    }

    pub fn output_width(&self, obs_dim: usize) -> Result<usize> {
        match self {
            EncoderConfig::Dense { width } => Ok(*width),
            EncoderConfig::Identity => Ok(obs_dim),
            EncoderConfig::Conv { input, layers } => {
                check_dim("conv encoder input", input.0 * input.1 * input.2, obs_dim)?;
                let mut shape = *input;
                for spec in layers {
                    shape = Conv2d::out_shape(shape, *spec);
                }
                Ok(shape.0 * shape.1 * shape.2)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub encoder: EncoderConfig,
    pub core: LayerConfig,
    /// Scale of the uniform Γ initialization.
    pub gamma_init: f64,
}

impl AgentConfig {
    /// Recurrent core of width `n_out` behind `encoder`.
    pub fn new(obs_dim: usize, n_actions: usize, encoder: EncoderConfig, n_out: usize) -> Result<Self> {
        let features = encoder.output_width(obs_dim)?;
        let core = LayerConfig {
            recurrent: true,
            ..LayerConfig::new(features + n_out, n_out)
        };
        let cfg = AgentConfig {
            obs_dim,
            n_actions,
            encoder,
            core,
            gamma_init: 0.001,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.core.validate()?;
        check_dim(
            "encoder width vs core external input",
            self.core.n_external(),
            self.encoder.output_width(self.obs_dim)?,
        )?;
        if self.n_actions == 0 {
            return Err(Error::InvalidData("agent needs at least one action".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "layers", rename_all = "snake_case")]
pub enum Encoder {
    Dense(Linear),
    Conv(Vec<Conv2d>),
    Identity,
}

/// Per-layer inputs and pre-activations of one encoder pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Encoder {
    pub fn init<R: Rng>(cfg: &EncoderConfig, obs_dim: usize, rng: &mut R) -> Self {
        match cfg {
            EncoderConfig::Dense { width } => Encoder::Dense(Linear::init(*width, obs_dim, 1.0, rng)),
            EncoderConfig::Identity => Encoder::Identity,
            EncoderConfig::Conv { input, layers } => {
                let mut shape = *input;
                let mut out = Vec::with_capacity(layers.len());
                for spec in layers {
                    out.push(Conv2d::init(shape, *spec, rng));
                    shape = Conv2d::out_shape(shape, *spec);
                }
                Encoder::Conv(out)
            }
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            Encoder::Dense(l) => Encoder::Dense(Linear::zeros(l.n_out(), l.n_in())),
            Encoder::Conv(layers) => Encoder::Conv(layers.iter().map(Conv2d::zeros_like).collect()),
            Encoder::Identity => Encoder::Identity,
        }
    }

    pub fn forward(&self, obs: &[f64]) -> Result<(Vec<f64>, EncoderCache)> {
        let mut cache = EncoderCache {
            inputs: Vec::new(),
            pre: Vec::new(),
        };
        let out = match self {
            Encoder::Identity => obs.to_vec(),
            Encoder::Dense(l) => {
                let pre = l.forward(obs)?;
                cache.inputs.push(obs.to_vec());
                cache.pre.push(pre.clone());
                relu(pre)
            }
            Encoder::Conv(layers) => {
                let mut x = obs.to_vec();
                for layer in layers {
                    let pre = layer.forward(&x)?;
                    cache.inputs.push(x);
                    cache.pre.push(pre.clone());
                    x = relu(pre);
                }
                x
            }
        };
        Ok((out, cache))
    }

    /// Accumulates parameter gradients for `∂L/∂features = g`.
    pub fn backward(&self, cache: &EncoderCache, g: &[f64], grad: &mut Encoder) {
        match (self, grad) {
            (Encoder::Identity, _) => {}
            (Encoder::Dense(l), Encoder::Dense(gl)) => {
                let g_pre = relu_backward(&cache.pre[0], g);
                l.backward(&cache.inputs[0], &g_pre, gl);
            }
            (Encoder::Conv(layers), Encoder::Conv(glayers)) => {
                let mut g = g.to_vec();
                for (k, (layer, gl)) in layers.iter().zip(glayers.iter_mut()).enumerate().rev() {
                    let g_pre = relu_backward(&cache.pre[k], &g);
                    g = layer.backward(&cache.inputs[k], &g_pre, gl);
                }
            }
            _ => unreachable!("gradient buffer shaped like the encoder"),
        }
    }

    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Encoder::Identity => Vec::new(),
            Encoder::Dense(l) => l.tensors().to_vec(),
            Encoder::Conv(layers) => layers.iter().flat_map(|c| [c.w.as_slice(), c.b.as_slice()]).collect(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Encoder::Identity => Vec::new(),
            Encoder::Dense(l) => l.tensors_mut().into_iter().collect(),
            Encoder::Conv(layers) => layers
                .iter_mut()
                .flat_map(|c| [c.w.as_mut_slice(), c.b.as_mut_slice()])
                .collect(),
        }
    }
}

/// Encoder → recurrent m-STPN core → actor and critic heads.
///
/// Gradient buffers share this type: [`AgentModel::zeros_like`] gives a model
/// of the same shape whose tensors hold accumulated gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentModel {
    pub config: AgentConfig,
    pub encoder: Encoder,
    pub core: StpnParams,
    pub actor: Linear,
    pub critic: Linear,
}

impl AgentModel {
    pub fn init<R: Rng>(config: &AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let n_out = config.core.n_out;
        let encoder = Encoder::init(&config.encoder, config.obs_dim, rng);
        let core = StpnParams::init(&config.core, config.gamma_init, rng);
        let actor = Linear::init(config.n_actions, n_out, 0.1, rng);
        let critic = Linear::init(1, n_out, 1.0, rng);
        Ok(AgentModel {
            config: config.clone(),
            encoder,
            core,
            actor,
            critic,
        })
    }

    pub fn zeros_like(&self) -> Self {
        AgentModel {
            config: self.config.clone(),
            encoder: self.encoder.zeros_like(),
            core: StpnParams::zeros(&self.config.core),
            actor: Linear::zeros(self.actor.n_out(), self.actor.n_in()),
            critic: Linear::zeros(1, self.critic.n_in()),
        }
    }

    pub fn initial_state(&self) -> StpnState {
        StpnState::zeros(&self.config.core)
    }

    /// Flat views of every trainable tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.tensors();
        for m in [&self.core.w, &self.core.gamma, &self.core.lambda_raw] {
            out.push(m.as_slice().expect("standard layout"));
        }
        out.extend(self.actor.tensors());
        out.extend(self.critic.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.tensors_mut();
        for m in [&mut self.core.w, &mut self.core.gamma, &mut self.core.lambda_raw] {
            out.push(m.as_slice_mut().expect("standard layout"));
        }
        out.extend(self.actor.tensors_mut());
        out.extend(self.critic.tensors_mut());
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Projected decay constants of the core.
    pub fn lambda(&self) -> Array2<f64> {
        self.core.lambda(&self.config.core)
    }

    pub(crate) fn check_observation(&self, obs: &[f64]) -> Result<()> {
        check_dim("observation", self.config.obs_dim, obs.len())
    }
}

/// Single-step result of [`agent_forward`].
#[derive(Debug, Clone)]
pub struct AgentStep {
    pub logits: Vec<f64>,
    pub value: f64,
    pub state: StpnState,
    /// Realized short-term updates of the core this step.
    pub delta_f: Array2<f64>,
    /// Total core weight `W + F` read during this step.
    pub g: Array2<f64>,
}

pub fn agent_forward(model: &AgentModel, observation: &[f64], core_state: &StpnState) -> Result<AgentStep> {
    model.check_observation(observation)?;
    let (features, _) = model.encoder.forward(observation)?;
    let g = &model.core.w + &core_state.f;
    let out = mstpn::forward_step(&model.core, &model.config.core, core_state, &features)?;
    let h = out.h.as_slice().expect("contiguous");
    let logits = model.actor.forward(h)?;
    let value = model.critic.forward(h)?[0];
    Ok(AgentStep {
        logits,
        value,
        state: out.state,
        delta_f: out.delta_f,
        g,
    })
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn sample_action<R: Rng>(logits: &[f64], rng: &mut R) -> usize {
    let p = softmax(logits);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (a, pa) in p.iter().enumerate() {
        acc += pa;
        if u < acc {
            return a;
        }
    }
    p.len() - 1
}

pub fn greedy_action(logits: &[f64]) -> usize {
    let mut best = 0;
    for (a, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = a;
        }
    }
    best
}
