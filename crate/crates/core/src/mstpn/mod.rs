//! Short-term plasticity neuron layer with memristor-compatible plastic weights.
//!
//! Each synapse carries a long-term weight `W`, a short-term weight `F`, a
//! Hebbian association strength `Γ` and a retention factor `Λ`:
//!
//! ```text
//! G   = W + F
//! h   = tanh(G x_eff)
//! F'  = Γ ⊙ (x_eff ⊗ h) + Λ ⊙ F
//! ```
//!
//! Only the input is normalized (`x_eff = x / ‖W + F‖`). The original scheme,
//! which also normalizes `F` and so rescales the decay every step, is kept as
//! [`Normalization::Legacy`] for ablations.

mod backward;

pub use backward::{backward_through_time, LayerGrads};

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub const NORM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Scale the input by the inverse weight norm; `F` is stored unscaled.
    InputOnly,
    /// Scale both the input and `F`; the effective decay becomes `Λ / ‖W + F‖`.
    Legacy,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// L2 norm of each output neuron's incoming weights.
    Row,
    /// One Frobenius norm for the whole matrix.
    Frobenius,
}

/// Re-quantization of `F` after the decay step (device mode only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayRequant {
    Off,
    /// Nearest grid value, ties toward zero so decay never grows `|F|`.
    TowardZero,
    /// Nearest grid value, ties away from zero.
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    /// Total input width, including the recurrent part when `recurrent`.
    pub n_in: usize,
    pub n_out: usize,
    pub recurrent: bool,
    pub device_mode: bool,
    pub normalization: Normalization,
    pub norm_kind: NormKind,
    pub lambda_range: (f64, f64),
    pub delta_f_clip: f64,
    pub delta_f_step: f64,
    pub decay_requant: DecayRequant,
    /// Optional box constraint on `W`, applied after each optimizer step.
    pub w_range: Option<(f64, f64)>,
}

impl LayerConfig {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        LayerConfig {
            n_in,
            n_out,
            recurrent: false,
            device_mode: false,
            normalization: Normalization::InputOnly,
            norm_kind: NormKind::Row,
            lambda_range: (0.08, 0.92),
            delta_f_clip: 20.0,
            delta_f_step: 0.5,
            decay_requant: DecayRequant::Off,
            w_range: None,
        }
    }

    /// Width of the external (non-recurrent) part of the input.
    pub fn n_external(&self) -> usize {
        if self.recurrent {
            self.n_in - self.n_out
        } else {
            self.n_in
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidData(m));
        if self.n_out == 0 || self.n_in == 0 {
            return bad("layer dimensions must be positive".into());
        }
        if self.recurrent && self.n_in <= self.n_out {
            return bad(format!(
                "recurrent layer needs n_in > n_out (got {} <= {})",
                self.n_in, self.n_out
            ));
        }
        if !(self.delta_f_step > 0.0) {
            return bad("delta_f_step must be positive".into());
        }
        let ratio = self.delta_f_clip / self.delta_f_step;
        if !(self.delta_f_clip >= 0.0) || (ratio - ratio.round()).abs() > 1e-9 {
            return bad("delta_f_clip must be a non-negative multiple of delta_f_step".into());
        }
        let (lo, hi) = self.lambda_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad(format!("lambda_range ({lo}, {hi}) must lie inside [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StpnParams {
    pub w: Array2<f64>,
    pub gamma: Array2<f64>,
    /// Unconstrained parameter behind Λ, see [`project_lambda`].
    pub lambda_raw: Array2<f64>,
}

impl StpnParams {
    pub fn zeros(cfg: &LayerConfig) -> Self {
        let shape = (cfg.n_out, cfg.n_in);
        StpnParams {
            w: Array2::zeros(shape),
            gamma: Array2::zeros(shape),
            lambda_raw: Array2::zeros(shape),
        }
    }

    /// `W ~ U(±1/√n_in)`, `Γ = gamma_scale · U(±1)`, `Λ_raw = 0` (mid-range).
    pub fn init<R: Rng>(cfg: &LayerConfig, gamma_scale: f64, rng: &mut R) -> Self {
        let shape = (cfg.n_out, cfg.n_in);
        let bound = 1.0 / (cfg.n_in as f64).sqrt();
        StpnParams {
            w: Array2::from_shape_simple_fn(shape, || rng.gen_range(-bound..=bound)),
            gamma: Array2::from_shape_simple_fn(shape, || gamma_scale * rng.gen_range(-1.0..=1.0)),
            lambda_raw: Array2::zeros(shape),
        }
    }

    pub fn lambda(&self, cfg: &LayerConfig) -> Array2<f64> {
        project_lambda(&self.lambda_raw, cfg.lambda_range)
    }

    pub fn check(&self, cfg: &LayerConfig) -> Result<()> {
        for m in [&self.w, &self.gamma, &self.lambda_raw] {
            check_dim("parameter rows", cfg.n_out, m.nrows())?;
            check_dim("parameter cols", cfg.n_in, m.ncols())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StpnState {
    pub f: Array2<f64>,
    /// Previous output, fed back when the layer is recurrent.
    pub h: Array1<f64>,
}

impl StpnState {
    pub fn zeros(cfg: &LayerConfig) -> Self {
        StpnState {
            f: Array2::zeros((cfg.n_out, cfg.n_in)),
            h: Array1::zeros(cfg.n_out),
        }
    }
}

/// Output of one layer step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub h: Array1<f64>,
    pub state: StpnState,
    /// Realized (post-quantization) short-term update.
    pub delta_f: Array2<f64>,
}

/// Per-step values retained for the backward pass and the energy replay.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub f_prev: Array2<f64>,
    /// Input scale per output row (`1/(‖·‖+ε)`, or 1 when bypassed).
    pub scale: Vec<f64>,
    pub norm: Vec<f64>,
    /// Whether the scale depends on the weights (false when bypassed).
    pub scale_active: Vec<bool>,
    pub h: Vec<f64>,
    pub delta_raw: Array2<f64>,
    pub delta_f: Array2<f64>,
    pub f_next: Array2<f64>,
}

impl StepCache {
    /// Total synaptic weight `W + F` seen during this step.
    pub fn total_weight(&self, params: &StpnParams) -> Array2<f64> {
        &params.w + &self.f_prev
    }
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub lambda: Array2<f64>,
    pub f0: Array2<f64>,
    pub h0: Array1<f64>,
    pub steps: Vec<StepCache>,
}

impl LayerTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `Λ = lo + (hi - lo) · σ(raw)`: smooth, strictly increasing, inside the range.
pub fn project_lambda(raw: &Array2<f64>, range: (f64, f64)) -> Array2<f64> {
    let (lo, hi) = range;
    raw.mapv(|r| lo + (hi - lo) * logistic(r))
}

/// Derivative of [`project_lambda`] with respect to the raw parameter.
pub(crate) fn project_lambda_grad(raw: f64, range: (f64, f64)) -> f64 {
    let s = logistic(raw);
    (range.1 - range.0) * s * (1.0 - s)
}

fn quantize_value(x: f64, step: f64, clip: f64) -> f64 {
    let q = (x / step).round() * step;
    q.clamp(-clip, clip)
}

/// Rounds each entry to the nearest multiple of `delta_f_step` (ties away from
/// zero) and clips to `±delta_f_clip`.
pub fn quantize_delta_f(raw: &Array2<f64>, cfg: &LayerConfig) -> Array2<f64> {
    raw.mapv(|x| quantize_value(x, cfg.delta_f_step, cfg.delta_f_clip))
}

fn requantize(x: f64, step: f64, mode: DecayRequant) -> f64 {
    let q = x / step;
    let r = match mode {
        DecayRequant::Off => return x,
        DecayRequant::Nearest => q.round(),
        DecayRequant::TowardZero => {
            if (q.abs().fract() - 0.5).abs() == 0.0 {
                q.trunc()
            } else {
                q.round()
            }
        }
    };
    r * step
}

/// Input scale per output row. The second vector holds the norms, the third
/// whether each scale is live (norm above ε).
fn input_scales(w: &Array2<f64>, f: &Array2<f64>, cfg: &LayerConfig) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let n_out = cfg.n_out;
    if cfg.normalization == Normalization::None {
        return (vec![1.0; n_out], vec![0.0; n_out], vec![false; n_out]);
    }
    let ws = w.as_slice().expect("standard layout");
    let fs = f.as_slice().expect("standard layout");
    let n_in = cfg.n_in;
    let row_sq: Vec<f64> = (0..n_out)
        .map(|i| {
            (0..n_in)
                .map(|j| {
                    let r = ws[i * n_in + j] + fs[i * n_in + j];
                    r * r
                })
                .sum()
        })
        .collect();
    let norms: Vec<f64> = match cfg.norm_kind {
        NormKind::Row => row_sq.iter().map(|s| s.sqrt()).collect(),
        NormKind::Frobenius => vec![row_sq.iter().sum::<f64>().sqrt(); n_out],
    };
    let active: Vec<bool> = norms.iter().map(|&n| n >= NORM_EPS).collect();
    let scales = norms
        .iter()
        .zip(&active)
        .map(|(&n, &a)| if a { 1.0 / (n + NORM_EPS) } else { 1.0 })
        .collect();
    (scales, norms, active)
}

/// `x_eff` for every output row, as an `[n_out × n_in]` matrix.
pub fn normalize_input(x: &[f64], w: &Array2<f64>, f: &Array2<f64>, cfg: &LayerConfig) -> Result<Array2<f64>> {
    check_dim("normalize_input", cfg.n_in, x.len())?;
    let (scales, _, _) = input_scales(w, f, cfg);
    Ok(Array2::from_shape_fn((cfg.n_out, cfg.n_in), |(i, j)| x[j] * scales[i]))
}

/// Effective per-step decay `Λ / ‖W + F‖` of the legacy scheme.
pub fn legacy_effective_decay(params: &StpnParams, state: &StpnState, cfg: &LayerConfig) -> Array2<f64> {
    let (scales, _, _) = input_scales(&params.w, &state.f, cfg);
    let lambda = params.lambda(cfg);
    Array2::from_shape_fn(lambda.raw_dim(), |(i, j)| lambda[(i, j)] * scales[i])
}

fn full_input(cfg: &LayerConfig, state: &StpnState, x_ext: &[f64]) -> Result<Vec<f64>> {
    check_dim("layer input", cfg.n_external(), x_ext.len())?;
    let mut x = Vec::with_capacity(cfg.n_in);
    x.extend_from_slice(x_ext);
    if cfg.recurrent {
        check_dim("recurrent state", cfg.n_out, state.h.len())?;
        x.extend(state.h.iter());
    }
    Ok(x)
}

pub(crate) fn step_cached(
    params: &StpnParams,
    lambda: &Array2<f64>,
    cfg: &LayerConfig,
    state: &StpnState,
    x_ext: &[f64],
) -> Result<StepCache> {
    check_dim("state rows", cfg.n_out, state.f.nrows())?;
    check_dim("state cols", cfg.n_in, state.f.ncols())?;
    let x = full_input(cfg, state, x_ext)?;
    let (n_out, n_in) = (cfg.n_out, cfg.n_in);
    let legacy = cfg.normalization == Normalization::Legacy;
    let (scale, norm, scale_active) = input_scales(&params.w, &state.f, cfg);

    let ws = params.w.as_slice().expect("standard layout");
    let gs = params.gamma.as_slice().expect("standard layout");
    let ls = lambda.as_slice().expect("standard layout");
    let fs = state.f.as_slice().expect("standard layout");

    let mut h = vec![0.0; n_out];
    for i in 0..n_out {
        let row = i * n_in;
        let f_mult = if legacy { scale[i] } else { 1.0 };
        let z: f64 = (0..n_in)
            .map(|j| (ws[row + j] + f_mult * fs[row + j]) * x[j])
            .sum();
        h[i] = (scale[i] * z).tanh();
    }

    let mut delta_raw = Array2::zeros((n_out, n_in));
    let mut delta_f = Array2::zeros((n_out, n_in));
    let mut f_next = Array2::zeros((n_out, n_in));
    {
        let dr = delta_raw.as_slice_mut().unwrap();
        let dq = delta_f.as_slice_mut().unwrap();
        let fnx = f_next.as_slice_mut().unwrap();
        for i in 0..n_out {
            let row = i * n_in;
            let f_mult = if legacy { scale[i] } else { 1.0 };
            for j in 0..n_in {
                let k = row + j;
                let d = gs[k] * scale[i] * x[j] * h[i];
                dr[k] = d;
                let q = if cfg.device_mode {
                    quantize_value(d, cfg.delta_f_step, cfg.delta_f_clip)
                } else {
                    d
                };
                dq[k] = q;
                let mut fv = q + ls[k] * f_mult * fs[k];
                if cfg.device_mode {
                    fv = requantize(fv, cfg.delta_f_step, cfg.decay_requant);
                }
                fnx[k] = fv;
            }
        }
    }
    Ok(StepCache {
        x,
        f_prev: state.f.clone(),
        scale,
        norm,
        scale_active,
        h,
        delta_raw,
        delta_f,
        f_next,
    })
}

fn output_of(cache: StepCache) -> StepOutput {
    let h = Array1::from(cache.h);
    StepOutput {
        state: StpnState {
            f: cache.f_next,
            h: h.clone(),
        },
        h,
        delta_f: cache.delta_f,
    }
}

/// One step of the configured layer.
pub fn forward_step(params: &StpnParams, cfg: &LayerConfig, state: &StpnState, x_ext: &[f64]) -> Result<StepOutput> {
    params.check(cfg)?;
    let lambda = params.lambda(cfg);
    Ok(output_of(step_cached(params, &lambda, cfg, state, x_ext)?))
}

/// One step of the original scheme (input and `F` both normalized), regardless
/// of `cfg.normalization`.
pub fn legacy_forward_step(
    params: &StpnParams,
    cfg: &LayerConfig,
    state: &StpnState,
    x_ext: &[f64],
) -> Result<StepOutput> {
    let legacy_cfg = LayerConfig {
        normalization: Normalization::Legacy,
        ..cfg.clone()
    };
    forward_step(params, &legacy_cfg, state, x_ext)
}

#[derive(Debug, Clone)]
pub struct SequenceOutput {
    pub outputs: Vec<Array1<f64>>,
    /// `F` after each step.
    pub states: Vec<Array2<f64>>,
    pub trace: LayerTrace,
}

impl SequenceOutput {
    pub fn final_state(&self) -> StpnState {
        match self.trace.steps.last() {
            Some(last) => StpnState {
                f: last.f_next.clone(),
                h: Array1::from(last.h.clone()),
            },
            None => StpnState {
                f: self.trace.f0.clone(),
                h: self.trace.h0.clone(),
            },
        }
    }
}

/// Folds [`forward_step`] over `inputs`, recording a trace.
pub fn forward_sequence(
    params: &StpnParams,
    cfg: &LayerConfig,
    start: &StpnState,
    inputs: &[Array1<f64>],
) -> Result<SequenceOutput> {
    params.check(cfg)?;
    let lambda = params.lambda(cfg);
    let mut state = start.clone();
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut states = Vec::with_capacity(inputs.len());
    let mut steps = Vec::with_capacity(inputs.len());
    for x in inputs {
        let x = x.as_slice().expect("contiguous input");
        let cache = step_cached(params, &lambda, cfg, &state, x)?;
        state = StpnState {
            f: cache.f_next.clone(),
            h: Array1::from(cache.h.clone()),
        };
        outputs.push(state.h.clone());
        states.push(state.f.clone());
        steps.push(cache);
    }
    Ok(SequenceOutput {
        outputs,
        states,
        trace: LayerTrace {
            lambda,
            f0: start.f.clone(),
            h0: start.h.clone(),
            steps,
        },
    })
}
