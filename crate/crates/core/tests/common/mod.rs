#![allow(dead_code)]

use memstpn::mstpn::{
    backward_through_time, forward_sequence, LayerConfig, NormKind, Normalization, StpnParams,
    StpnState,
};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central difference of `f` along every coordinate of `point`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, point: &[f64], step: f64) -> Vec<f64> {
    let mut p = point.to_vec();
    (0..point.len())
        .map(|i| {
            p[i] = point[i] + step;
            let up = f(&p);
            p[i] = point[i] - step;
            let down = f(&p);
            p[i] = point[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// A random layer problem with a linear read-out loss.
pub struct Problem {
    pub cfg: LayerConfig,
    pub params: StpnParams,
    pub start: StpnState,
    pub inputs: Vec<Array1<f64>>,
    /// Loss = Σ_t c_t · h_t + Σ c_F ⊙ F_T
    pub out_weights: Vec<Array1<f64>>,
    pub final_f_weights: Array2<f64>,
}

pub fn random_problem(seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_out = rng.gen_range(1..=8);
    let recurrent = rng.gen_bool(0.5) && n_out < 8;
    let n_ext = rng.gen_range(1..=(8 - if recurrent { n_out } else { 0 }).max(1));
    let n_in = n_ext + if recurrent { n_out } else { 0 };
    let normalization = match rng.gen_range(0..4) {
        0 => Normalization::None,
        1 => Normalization::Legacy,
        _ => Normalization::InputOnly,
    };
    let norm_kind = if rng.gen_bool(0.3) {
        NormKind::Frobenius
    } else {
        NormKind::Row
    };
    let lambda_range = match rng.gen_range(0..3) {
        0 => (0.0, 1.0),
        1 => (0.0, 0.0),
        _ => (0.08, 0.92),
    };
    let cfg = LayerConfig {
        recurrent,
        normalization,
        norm_kind,
        lambda_range,
        ..LayerConfig::new(n_in, n_out)
    };
    let mut u =
        |s: f64| Array2::from_shape_simple_fn((n_out, n_in), || s * rng.gen_range(-1.0..1.0));
    let params = StpnParams {
        w: u(1.0),
        gamma: u(0.8),
        lambda_raw: u(2.0),
    };
    let f0 = u(0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let start = StpnState {
        f: f0,
        h: Array1::from_shape_simple_fn(n_out, || {
            if recurrent {
                rng.gen_range(-0.5..0.5)
            } else {
                0.0
            }
        }),
    };
    let len = rng.gen_range(1..=5);
    let inputs = (0..len)
        .map(|_| Array1::from_shape_simple_fn(n_ext, || rng.gen_range(-1.5..1.5)))
        .collect();
    let out_weights = (0..len)
        .map(|_| Array1::from_shape_simple_fn(n_out, || rng.gen_range(-1.0..1.0)))
        .collect();
    let final_f_weights = Array2::from_shape_simple_fn((n_out, n_in), || rng.gen_range(-1.0..1.0));
    Problem {
        cfg,
        params,
        start,
        inputs,
        out_weights,
        final_f_weights,
    }
}

impl Problem {
    pub fn loss(&self, params: &StpnParams, start: &StpnState, inputs: &[Array1<f64>]) -> f64 {
        let out = forward_sequence(params, &self.cfg, start, inputs).unwrap();
        let mut l = 0.0;
        for (h, c) in out.outputs.iter().zip(&self.out_weights) {
            l += h.dot(c);
        }
        l + (&out.final_state().f * &self.final_f_weights).sum()
    }
}

const STEP: f64 = 1e-5;

fn matrix_error(analytic: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64, at: &Array2<f64>) -> f64 {
    let shape = at.raw_dim();
    let numeric = central_difference(
        |v| f(&Array2::from_shape_vec(shape, v.to_vec()).unwrap()),
        at.as_slice().unwrap(),
        STEP,
    );
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| rel_error(*a, *n))
        .fold(0.0, f64::max)
}

/// Largest relative error between BPTT and central differences over every
/// parameter, the initial state and the inputs, with the name of the worst
/// quantity.
pub fn gradient_error(p: &Problem) -> (f64, String) {
    let seq = forward_sequence(&p.params, &p.cfg, &p.start, &p.inputs).unwrap();
    let grads = backward_through_time(
        &p.params,
        &p.cfg,
        &seq.trace,
        &p.out_weights,
        Some(&p.final_f_weights),
    )
    .unwrap();
    let mut worst = (0.0, String::new());
    let mut note = |name: &str, e: f64| {
        if e > worst.0 {
            worst = (e, name.to_string());
        }
    };
    let with = |edit: &dyn Fn(&mut StpnParams, &Array2<f64>), m: &Array2<f64>| {
        let mut q = p.params.clone();
        edit(&mut q, m);
        p.loss(&q, &p.start, &p.inputs)
    };
    note(
        "W",
        matrix_error(&grads.w, |m| with(&|q, m| q.w = m.clone(), m), &p.params.w),
    );
    note(
        "Gamma",
        matrix_error(
            &grads.gamma,
            |m| with(&|q, m| q.gamma = m.clone(), m),
            &p.params.gamma,
        ),
    );
    note(
        "Lambda_raw",
        matrix_error(
            &grads.lambda_raw,
            |m| with(&|q, m| q.lambda_raw = m.clone(), m),
            &p.params.lambda_raw,
        ),
    );
    note(
        "F0",
        matrix_error(
            &grads.f0,
            |m| {
                let mut s = p.start.clone();
                s.f = m.clone();
                p.loss(&p.params, &s, &p.inputs)
            },
            &p.start.f,
        ),
    );
    for t in 0..p.inputs.len() {
        let numeric = central_difference(
            |v| {
                let mut xs = p.inputs.clone();
                xs[t] = Array1::from(v.to_vec());
                p.loss(&p.params, &p.start, &xs)
            },
            p.inputs[t].as_slice().unwrap(),
            STEP,
        );
        for (a, n) in grads.inputs[t].iter().zip(&numeric) {
            note(&format!("input {t}"), rel_error(*a, *n));
        }
    }
    if p.cfg.recurrent {
        let numeric = central_difference(
            |v| {
                let mut s = p.start.clone();
                s.h = Array1::from(v.to_vec());
                p.loss(&p.params, &s, &p.inputs)
            },
            p.start.h.as_slice().unwrap(),
            STEP,
        );
        for (a, n) in grads.h0.iter().zip(&numeric) {
            note("h0", rel_error(*a, *n));
        }
    }
    worst
}
