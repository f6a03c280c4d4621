//! Reverse-mode gradients through an unrolled [`LayerTrace`].
//!
//! Quantization uses a straight-through estimator: the rounded update passes
//! gradients unchanged while the raw update is inside `±delta_f_clip` and
//! blocks them outside. Decay re-quantization is treated as the identity.

use ndarray::{Array1, Array2};

use super::{project_lambda_grad, LayerConfig, LayerTrace, NormKind, Normalization, StpnParams};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub w: Array2<f64>,
    pub gamma: Array2<f64>,
    pub lambda_raw: Array2<f64>,
    /// Gradient with respect to each external input.
    pub inputs: Vec<Array1<f64>>,
    pub f0: Array2<f64>,
    /// Gradient with respect to the initial recurrent output.
    pub h0: Array1<f64>,
}

/// Backpropagates `grad_outputs[t] = ∂L/∂h_t` (and optionally `∂L/∂F_T`)
/// through the recorded steps.
pub fn backward_through_time(
    params: &StpnParams,
    cfg: &LayerConfig,
    trace: &LayerTrace,
    grad_outputs: &[Array1<f64>],
    grad_final_f: Option<&Array2<f64>>,
) -> Result<LayerGrads> {
    params.check(cfg)?;
    check_dim("output gradients", trace.steps.len(), grad_outputs.len())?;
    check_dim("trace lambda rows", cfg.n_out, trace.lambda.nrows())?;
    check_dim("trace lambda cols", cfg.n_in, trace.lambda.ncols())?;
    for (step, g) in trace.steps.iter().zip(grad_outputs) {
        check_dim("trace input", cfg.n_in, step.x.len())?;
        check_dim("output gradient", cfg.n_out, g.len())?;
    }

    let (n_out, n_in) = (cfg.n_out, cfg.n_in);
    let n_ext = cfg.n_external();
    let legacy = cfg.normalization == Normalization::Legacy;
    let frobenius = cfg.norm_kind == NormKind::Frobenius;

    let ws = params.w.as_slice().expect("standard layout");
    let gs = params.gamma.as_slice().expect("standard layout");
    let ls = trace.lambda.as_slice().expect("standard layout");

    let mut gw = vec![0.0; n_out * n_in];
    let mut ggamma = vec![0.0; n_out * n_in];
    let mut glambda = vec![0.0; n_out * n_in];
    let mut g_inputs = vec![Array1::zeros(n_ext); trace.steps.len()];

    // Gradient flowing into F_{t+1} and into h_t from the following step.
    let mut g_f_next = match grad_final_f {
        Some(g) => {
            check_dim("final F gradient rows", n_out, g.nrows())?;
            check_dim("final F gradient cols", n_in, g.ncols())?;
            g.as_slice().expect("standard layout").to_vec()
        }
        None => vec![0.0; n_out * n_in],
    };
    let mut g_h_carry = vec![0.0; n_out];

    let mut g_c = vec![0.0; n_out * n_in];
    let mut g_f_prev = vec![0.0; n_out * n_in];
    let mut g_s = vec![0.0; n_out];
    let mut g_x = vec![0.0; n_in];
    let mut g_h = vec![0.0; n_out];

    for (t, step) in trace.steps.iter().enumerate().rev() {
        let x = &step.x;
        let h = &step.h;
        let s = &step.scale;
        let fs = step.f_prev.as_slice().expect("standard layout");
        let dr = step.delta_raw.as_slice().expect("standard layout");

        g_s.iter_mut().for_each(|v| *v = 0.0);
        g_x.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n_out {
            g_h[i] = grad_outputs[t][i] + g_h_carry[i];
        }

        // F' = Q(D) + Λ ⊙ C,  D = Γ s x h
        for i in 0..n_out {
            let row = i * n_in;
            let f_mult = if legacy { s[i] } else { 1.0 };
            let mut gh_i = 0.0;
            let mut gs_i = 0.0;
            for j in 0..n_in {
                let k = row + j;
                let gfn = g_f_next[k];
                let c = f_mult * fs[k];
                glambda[k] += gfn * c;
                g_c[k] = gfn * ls[k];
                let pass = !cfg.device_mode || dr[k].abs() <= cfg.delta_f_clip;
                if pass && gfn != 0.0 {
                    ggamma[k] += gfn * s[i] * x[j] * h[i];
                    let u = gfn * gs[k];
                    gh_i += u * s[i] * x[j];
                    g_x[j] += u * s[i] * h[i];
                    gs_i += u * x[j] * h[i];
                }
            }
            g_h[i] += gh_i;
            g_s[i] += gs_i;
        }

        // h = tanh(s · (W + C) x)
        for i in 0..n_out {
            let row = i * n_in;
            let f_mult = if legacy { s[i] } else { 1.0 };
            let ga = g_h[i] * (1.0 - h[i] * h[i]);
            let mut z = 0.0;
            for j in 0..n_in {
                let k = row + j;
                let g = ws[k] + f_mult * fs[k];
                z += g * x[j];
                let gg = ga * s[i] * x[j];
                gw[k] += gg;
                g_c[k] += gg;
                g_x[j] += ga * s[i] * g;
            }
            g_s[i] += ga * z;
        }

        // C = F (input-only) or s F (legacy)
        for i in 0..n_out {
            let row = i * n_in;
            for j in 0..n_in {
                let k = row + j;
                if legacy {
                    g_f_prev[k] = g_c[k] * s[i];
                    g_s[i] += g_c[k] * fs[k];
                } else {
                    g_f_prev[k] = g_c[k];
                }
            }
        }

        // s = 1 / (‖W + F‖ + ε)
        if cfg.normalization != Normalization::None {
            if frobenius {
                if step.scale_active[0] {
                    let total: f64 = g_s.iter().sum();
                    let g_n = -total * s[0] * s[0];
                    for k in 0..n_out * n_in {
                        let r = ws[k] + fs[k];
                        let g = g_n * r / step.norm[0];
                        gw[k] += g;
                        g_f_prev[k] += g;
                    }
                }
            } else {
                for i in 0..n_out {
                    if !step.scale_active[i] {
                        continue;
                    }
                    let g_n = -g_s[i] * s[i] * s[i];
                    let row = i * n_in;
                    for j in 0..n_in {
                        let k = row + j;
                        let g = g_n * (ws[k] + fs[k]) / step.norm[i];
                        gw[k] += g;
                        g_f_prev[k] += g;
                    }
                }
            }
        }

        let gi = g_inputs[t].as_slice_mut().unwrap();
        gi.copy_from_slice(&g_x[..n_ext]);
        if cfg.recurrent {
            g_h_carry.copy_from_slice(&g_x[n_ext..]);
        } else {
            g_h_carry.iter_mut().for_each(|v| *v = 0.0);
        }
        std::mem::swap(&mut g_f_next, &mut g_f_prev);
    }

    let raw = params.lambda_raw.as_slice().expect("standard layout");
    for k in 0..n_out * n_in {
        glambda[k] *= project_lambda_grad(raw[k], cfg.lambda_range);
    }

    let to_matrix = |v: Vec<f64>| {
        Array2::from_shape_vec((n_out, n_in), v).map_err(|e| Error::InvalidData(e.to_string()))
    };
    let h0 = if cfg.recurrent {
        Array1::from(g_h_carry)
    } else {
        Array1::zeros(n_out)
    };
    Ok(LayerGrads {
        w: to_matrix(gw)?,
        gamma: to_matrix(ggamma)?,
        lambda_raw: to_matrix(glambda)?,
        inputs: g_inputs,
        f0: to_matrix(g_f_next)?,
        h0,
    })
}
