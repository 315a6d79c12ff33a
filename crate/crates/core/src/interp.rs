//! Interpolation on uniform time meshes and least-squares fits.

use crate::error::{LabError, Result};

/// Four-point Lagrange stencil around `t` on the mesh `t_k = k h`,
/// `k = 0..len`. Near the ends the stencil is shifted inwards; meshes with
/// fewer than four points fall back to the highest available order.
pub fn lagrange_stencil(len: usize, h: f64, t: f64) -> (usize, Vec<f64>) {
    let width = len.min(4);
    if width <= 1 {
        return (0, vec![1.0; width]);
    }
    let s = t / h;
    let left = (s.floor() as i64 - (width as i64 / 2 - 1)).clamp(0, (len - width) as i64) as usize;
    let nodes: Vec<f64> = (0..width).map(|i| (left + i) as f64).collect();
    let weights = (0..width)
        .map(|i| {
            (0..width)
                .filter(|&m| m != i)
                .map(|m| (s - nodes[m]) / (nodes[i] - nodes[m]))
                .product()
        })
        .collect();
    (left, weights)
}

/// Interpolates sampled vectors `series[k]` at time `t`.
pub fn interpolate_vec(series: &[Vec<f64>], h: f64, t: f64) -> Vec<f64> {
    let (left, w) = lagrange_stencil(series.len(), h, t);
    let mut out = vec![0.0; series[left].len()];
    for (i, wi) in w.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(&series[left + i]) {
            *o += wi * v;
        }
    }
    out
}

pub fn interpolate_scalar(series: &[f64], h: f64, t: f64) -> f64 {
    let (left, w) = lagrange_stencil(series.len(), h, t);
    w.iter().enumerate().map(|(i, wi)| wi * series[left + i]).sum()
}

/// Straight-line least-squares fit `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len().min(y.len());
    if n < 2 {
        return Err(LabError::InsufficientSamples {
            needed: 2,
            available: n,
        });
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let sxx: f64 = x[..n].iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x[..n].iter().zip(&y[..n]).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y[..n].iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(LabError::InvalidParameter {
            name: "x",
            reason: "abscissae are all equal".into(),
        });
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// Fits `y = c x^p` by least squares in log-log coordinates.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(LabError::InvalidParameter {
            name: "series",
            reason: "power-law fits need positive data".into(),
        });
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

/// Second-order derivative of uniformly sampled vectors: centred inside,
/// one-sided three-point at the ends.
pub fn time_derivative(series: &[Vec<f64>], h: f64) -> Result<Vec<Vec<f64>>> {
    let len = series.len();
    if len < 3 {
        return Err(LabError::InsufficientSamples {
            needed: 3,
            available: len,
        });
    }
    Ok((0..len)
        .map(|k| {
            let (a, b, c, wa, wb, wc) = if k == 0 {
                (0, 1, 2, -3.0, 4.0, -1.0)
            } else if k == len - 1 {
                (k, k - 1, k - 2, 3.0, -4.0, 1.0)
            } else {
                (k + 1, k - 1, k, 1.0, -1.0, 0.0)
            };
            series[a]
                .iter()
                .zip(&series[b])
                .zip(&series[c])
                .map(|((x, y), z)| (wa * x + wb * y + wc * z) / (2.0 * h))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_is_reproduced() {
        let h = 0.1;
        let f = |t: f64| 1.0 - 2.0 * t + 0.5 * t * t - 3.0 * t * t * t;
        let samples: Vec<f64> = (0..20).map(|k| f(k as f64 * h)).collect();
        for t in [0.0, 0.03, 0.77, 1.5, 1.9] {
            assert!((interpolate_scalar(&samples, h, t) - f(t)).abs() < 1e-12, "{t}");
        }
    }

    #[test]
    fn power_law_oracle() {
        let x: Vec<f64> = (1..20).map(|k| k as f64 * 0.05).collect();
        let y: Vec<f64> = x.iter().map(|t| 3.0 * t.powf(-1.5)).collect();
        let fit = fit_power_law(&x, &y).unwrap();
        assert!((fit.slope + 1.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn derivative_of_quadratic_is_exact() {
        let h = 0.2;
        let series: Vec<Vec<f64>> = (0..6).map(|k| vec![(k as f64 * h).powi(2)]).collect();
        let d = time_derivative(&series, h).unwrap();
        for (k, v) in d.iter().enumerate() {
            assert!((v[0] - 2.0 * k as f64 * h).abs() < 1e-12);
        }
    }
}
