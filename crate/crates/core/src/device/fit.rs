//! Least-squares refits of the decay-control sigmoid and the pulse-energy power law.

use nalgebra::{Matrix4, Vector4};
use serde::Serialize;

use super::SigmoidParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct SigmoidFit {
    pub params: SigmoidParams,
    pub residuals: Vec<f64>,
    pub rmse: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerLawFit {
    pub c_pj: f64,
    pub alpha: f64,
    /// Residuals in pJ.
    pub residuals: Vec<f64>,
    pub rmse: f64,
}

fn distinct_count(xs: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = xs.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn sum_sq(points: &[(f64, f64)], p: &SigmoidParams) -> f64 {
    points.iter().map(|&(x, y)| (p.eval(x) - y).powi(2)).sum()
}

/// Levenberg-Marquardt fit of `(v_bias, Λ)` samples.
///
/// `init` seeds the iteration; pass `None` for a data-driven starting point.
pub fn fit_sigmoid(points: &[(f64, f64)], init: Option<SigmoidParams>) -> Result<SigmoidFit> {
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Fit("non-finite sample".into()));
    }
    if distinct_count(points.iter().map(|p| p.0)) < 4 {
        return Err(Error::Fit(
            "rank-deficient: a 4-parameter sigmoid needs at least 4 distinct bias voltages".into(),
        ));
    }
    let mut p = init.unwrap_or_else(|| initial_guess(points));
    let mut mu = 1e-3;
    let mut cost = sum_sq(points, &p);
    let mut iterations = 0;
    for it in 0..500 {
        iterations = it + 1;
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for &(x, y) in points {
            let e = (-p.k * (x - p.v0)).exp();
            let s = 1.0 / (1.0 + e);
            let ds = s * (1.0 - s);
            // d/dL, d/dk, d/dV0, d/dΛ0
            let j = Vector4::new(s, p.l * ds * (x - p.v0), -p.l * ds * p.k, 1.0);
            let r = p.eval(x) - y;
            jtj += j * j.transpose();
            jtr += j * r;
        }
        if jtj.determinant().abs() < 1e-300 {
            return Err(Error::Fit("rank-deficient Jacobian".into()));
        }
        let mut improved = false;
        for _ in 0..50 {
            let mut damped = jtj;
            for i in 0..4 {
                damped[(i, i)] += mu * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                mu *= 10.0;
                continue;
            };
            let cand = SigmoidParams {
                l: p.l + step[0],
                k: p.k + step[1],
                v0: p.v0 + step[2],
                lambda0: p.lambda0 + step[3],
            };
            let c = sum_sq(points, &cand);
            if c.is_finite() && c <= cost {
                let rel = (cost - c) / cost.max(1e-300);
                p = cand;
                cost = c;
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-15 || step.norm() < 1e-14 {
                    return Ok(finish_sigmoid(points, p, iterations));
                }
                break;
            }
            mu *= 10.0;
        }
        if !improved || cost < 1e-28 {
            break;
        }
    }
    Ok(finish_sigmoid(points, p, iterations))
}

fn finish_sigmoid(points: &[(f64, f64)], params: SigmoidParams, iterations: usize) -> SigmoidFit {
    let residuals: Vec<f64> = points.iter().map(|&(x, y)| params.eval(x) - y).collect();
    let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    SigmoidFit {
        params,
        residuals,
        rmse,
        iterations,
    }
}

fn initial_guess(points: &[(f64, f64)]) -> SigmoidParams {
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    let span = (ymax - ymin).max(1e-6);
    SigmoidParams {
        l: span * 1.1,
        k: 8.0 / (xmax - xmin),
        v0: 0.5 * (xmin + xmax),
        lambda0: ymin - 0.05 * span,
    }
}

/// Fits `E = c ΔF^α` by linear regression in log-log space. Zero or negative
/// samples are rejected.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::Fit("power law needs positive ΔF and energy".into()));
    }
    if distinct_count(points.iter().map(|p| p.0)) < 2 {
        return Err(Error::Fit(
            "rank-deficient: need at least 2 distinct ΔF values".into(),
        ));
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let denom = n * sxx - sx * sx;
    let alpha = (n * sxy - sx * sy) / denom;
    let c_pj = ((sy - alpha * sx) / n).exp();
    let residuals: Vec<f64> = points
        .iter()
        .map(|&(x, y)| c_pj * x.powf(alpha) - y)
        .collect();
    let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    Ok(PowerLawFit {
        c_pj,
        alpha,
        residuals,
        rmse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceCharacterization;

    #[test]
    fn recovers_default_sigmoid() {
        let truth = DeviceCharacterization::default().sigmoid;
        let points: Vec<(f64, f64)> = (0..13)
            .map(|i| {
                let v = -0.6 + 0.1 * i as f64;
                (v, truth.eval(v))
            })
            .collect();
        let fit = fit_sigmoid(&points, None).unwrap();
        let p = fit.params;
        for (got, want) in [
            (p.l, truth.l),
            (p.k, truth.k),
            (p.lambda0, truth.lambda0),
        ] {
            assert!(((got - want) / want).abs() < 1e-3, "{got} vs {want}");
        }
        assert!(p.v0.abs() < 1e-6);
        assert!(fit.rmse < 1e-9);
    }

    #[test]
    fn sigmoid_rank_deficient() {
        let pts = [(0.1, 0.5), (0.1, 0.5), (0.2, 0.6), (0.3, 0.7)];
        assert!(matches!(fit_sigmoid(&pts, None), Err(Error::Fit(_))));
    }

    #[test]
    fn recovers_power_law() {
        let pts: Vec<(f64, f64)> = [0.5, 1.0, 2.0, 5.0, 19.0]
            .iter()
            .map(|&x| (x, 30.0 * f64::powf(x, 1.52)))
            .collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.c_pj - 30.0).abs() < 1e-9);
        assert!((fit.alpha - 1.52).abs() < 1e-12);
    }

    #[test]
    fn power_law_rank_deficient() {
        assert!(fit_power_law(&[(2.0, 1.0), (2.0, 3.0)]).is_err());
        assert!(fit_power_law(&[(0.0, 1.0), (2.0, 3.0)]).is_err());
    }
}
