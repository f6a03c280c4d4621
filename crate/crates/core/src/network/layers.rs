//! Dense and convolutional feature layers with hand-written backward passes.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn zeros(n_out: usize, n_in: usize) -> Self {
        Linear {
            w: Array2::zeros((n_out, n_in)),
            b: Array1::zeros(n_out),
        }
    }

    /// Uniform in `±scale/√n_in`, zero bias.
    pub fn init<R: Rng>(n_out: usize, n_in: usize, scale: f64, rng: &mut R) -> Self {
        let bound = scale / (n_in as f64).sqrt();
        Linear {
            w: Array2::from_shape_simple_fn((n_out, n_in), || rng.gen_range(-bound..=bound)),
            b: Array1::zeros(n_out),
        }
    }

    pub fn n_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("linear input", self.n_in(), x.len())?;
        let ws = self.w.as_slice().expect("standard layout");
        let n_in = self.n_in();
        Ok((0..self.n_out())
            .map(|i| {
                let row = &ws[i * n_in..(i + 1) * n_in];
                self.b[i] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect())
    }

    /// Accumulates parameter gradients into `grad` and returns `∂L/∂x`.
    pub fn backward(&self, x: &[f64], g_out: &[f64], grad: &mut Linear) -> Vec<f64> {
        let n_in = self.n_in();
        let ws = self.w.as_slice().expect("standard layout");
        let gw = grad.w.as_slice_mut().expect("standard layout");
        let mut g_x = vec![0.0; n_in];
        for (i, &g) in g_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b[i] += g;
            let row = i * n_in;
            for j in 0..n_in {
                gw[row + j] += g * x[j];
                g_x[j] += g * ws[row + j];
            }
        }
        g_x
    }

    pub(crate) fn tensors(&self) -> [&[f64]; 2] {
        [self.w.as_slice().unwrap(), self.b.as_slice().unwrap()]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [self.w.as_slice_mut().unwrap(), self.b.as_slice_mut().unwrap()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Valid (unpadded) 2-D convolution over a `channels × height × width` input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_shape: (usize, usize, usize),
    pub spec: ConvSpec,
    /// `[filters][channels][kernel][kernel]`, flattened.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Conv2d {
    pub fn out_shape(in_shape: (usize, usize, usize), spec: ConvSpec) -> (usize, usize, usize) {
        let (_, h, w) = in_shape;
        let out = |n: usize| if n < spec.kernel { 0 } else { (n - spec.kernel) / spec.stride + 1 };
        (spec.filters, out(h), out(w))
    }

    pub fn init<R: Rng>(in_shape: (usize, usize, usize), spec: ConvSpec, rng: &mut R) -> Self {
        let fan_in = in_shape.0 * spec.kernel * spec.kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = spec.filters * fan_in;
        Conv2d {
            in_shape,
            spec,
            w: (0..n).map(|_| rng.gen_range(-bound..=bound)).collect(),
            b: vec![0.0; spec.filters],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Conv2d {
            in_shape: self.in_shape,
            spec: self.spec,
            w: vec![0.0; self.w.len()],
            b: vec![0.0; self.b.len()],
        }
    }

    pub fn output_len(&self) -> usize {
        let (c, h, w) = Self::out_shape(self.in_shape, self.spec);
        c * h * w
    }

    /// Pre-activation output, `[filters][out_h][out_w]` flattened.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (c_in, h_in, w_in) = self.in_shape;
        check_dim("conv input", c_in * h_in * w_in, x.len())?;
        let ConvSpec { filters, kernel: k, stride } = self.spec;
        let (_, h_out, w_out) = Self::out_shape(self.in_shape, self.spec);
        let mut out = vec![0.0; filters * h_out * w_out];
        for o in 0..filters {
            for y in 0..h_out {
                for xo in 0..w_out {
                    let mut acc = self.b[o];
                    for c in 0..c_in {
                        for ky in 0..k {
                            let in_row = (c * h_in + y * stride + ky) * w_in + xo * stride;
                            let w_row = ((o * c_in + c) * k + ky) * k;
                            for kx in 0..k {
                                acc += self.w[w_row + kx] * x[in_row + kx];
                            }
                        }
                    }
                    out[(o * h_out + y) * w_out + xo] = acc;
                }
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients and returns `∂L/∂x`.
    pub fn backward(&self, x: &[f64], g_out: &[f64], grad: &mut Conv2d) -> Vec<f64> {
        let (c_in, h_in, w_in) = self.in_shape;
        let ConvSpec { filters, kernel: k, stride } = self.spec;
        let (_, h_out, w_out) = Self::out_shape(self.in_shape, self.spec);
        let mut g_x = vec![0.0; x.len()];
        for o in 0..filters {
            for y in 0..h_out {
                for xo in 0..w_out {
                    let g = g_out[(o * h_out + y) * w_out + xo];
                    if g == 0.0 {
                        continue;
                    }
                    grad.b[o] += g;
                    for c in 0..c_in {
                        for ky in 0..k {
                            let in_row = (c * h_in + y * stride + ky) * w_in + xo * stride;
                            let w_row = ((o * c_in + c) * k + ky) * k;
                            for kx in 0..k {
                                grad.w[w_row + kx] += g * x[in_row + kx];
                                g_x[in_row + kx] += g * self.w[w_row + kx];
                            }
                        }
                    }
                }
            }
        }
        g_x
    }
}

pub(crate) fn relu(mut v: Vec<f64>) -> Vec<f64> {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    v
}

pub(crate) fn relu_backward(pre: &[f64], g: &[f64]) -> Vec<f64> {
    pre.iter().zip(g).map(|(&p, &g)| if p > 0.0 { g } else { 0.0 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn atari_conv_stack_yields_2592_features() {
        let s1 = Conv2d::out_shape((1, 84, 84), ConvSpec { filters: 16, kernel: 8, stride: 4 });
        assert_eq!(s1, (16, 20, 20));
        let s2 = Conv2d::out_shape(s1, ConvSpec { filters: 32, kernel: 4, stride: 2 });
        assert_eq!(s2, (32, 9, 9));
        assert_eq!(s2.0 * s2.1 * s2.2, 2592);
    }

    fn numeric_grad(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        let mut p = x.to_vec();
        (0..x.len())
            .map(|i| {
                let h = 1e-6;
                p[i] = x[i] + h;
                let a = f(&p);
                p[i] = x[i] - h;
                let b = f(&p);
                p[i] = x[i];
                (a - b) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn conv_backward_matches_numeric() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let conv = Conv2d::init((2, 7, 6), ConvSpec { filters: 3, kernel: 3, stride: 2 }, &mut rng);
        let x: Vec<f64> = (0..84).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..conv.output_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss_x = |x: &[f64]| conv.forward(x).unwrap().iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
        let mut grad = conv.zeros_like();
        let gx = conv.backward(&x, &c, &mut grad);
        for (a, n) in gx.iter().zip(numeric_grad(loss_x, &x)) {
            assert!((a - n).abs() < 1e-8);
        }
        let loss_w = |w: &[f64]| {
            let mut k = conv.clone();
            k.w = w.to_vec();
            k.forward(&x).unwrap().iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
        };
        for (a, n) in grad.w.iter().zip(numeric_grad(loss_w, &conv.w)) {
            assert!((a - n).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_backward_matches_numeric() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let lin = Linear::init(3, 4, 1.0, &mut rng);
        let x = [0.5, -1.0, 2.0, 0.1];
        let c = [1.0, -2.0, 0.5];
        let mut grad = Linear::zeros(3, 4);
        let gx = lin.backward(&x, &c, &mut grad);
        let loss = |x: &[f64]| lin.forward(x).unwrap().iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
        for (a, n) in gx.iter().zip(numeric_grad(loss, &x)) {
            assert!((a - n).abs() < 1e-8);
        }
        for i in 0..3 {
            for j in 0..4 {
                assert!((grad.w[(i, j)] - c[i] * x[j]).abs() < 1e-15);
            }
        }
    }
}
