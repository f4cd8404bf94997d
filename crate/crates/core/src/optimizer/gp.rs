//! Gaussian-process regression with a squared-exponential ARD kernel.

use crate::error::{Error, Result};

pub const NOISE_FLOOR: f64 = 1e-4;

const LENGTH_GRID: [f64; 10] = [0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.5, 5.0];
const NOISE_GRID: [f64; 6] = [NOISE_FLOOR, 1e-3, 1e-2, 0.05, 0.1, 0.3];
const FIT_SWEEPS: usize = 2;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Solves `L x = b` for lower-triangular `L`.
fn forward(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; b.len()];
    for i in 0..b.len() {
        let s: f64 = (0..i).map(|k| l[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / l[i][i];
    }
    x
}

/// Solves `L^T x = b` for lower-triangular `L`.
fn backward(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (b[i] - s) / l[i][i];
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    pub length_scales: Vec<f64>,
    /// Noise variance relative to the standardized signal variance.
    pub noise: f64,
}

fn kernel(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(ls)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    (-0.5 * r2).exp()
}

/// Fitted posterior.
#[derive(Debug, Clone)]
pub struct Gp {
    x: Vec<Vec<f64>>,
    hyper: Hyper,
    chol: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    y_mean: f64,
    y_std: f64,
}

struct Factor {
    chol: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    log_ml: f64,
}

fn factor(x: &[Vec<f64>], z: &[f64], hyper: &Hyper) -> Option<Factor> {
    let n = x.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel(&x[i], &x[j], &hyper.length_scales);
            k[i][j] = v;
            k[j][i] = v;
        }
        k[i][i] += hyper.noise;
    }
    let chol = cholesky(&k)?;
    let alpha = backward(&chol, &forward(&chol, z));
    let fit: f64 = z.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let log_det: f64 = (0..n).map(|i| chol[i][i].ln()).sum::<f64>() * 2.0;
    let log_ml = -0.5 * fit - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    Some(Factor {
        chol,
        alpha,
        log_ml,
    })
}

impl Gp {
    /// Fits with fixed hyperparameters.
    pub fn with_hyper(x: Vec<Vec<f64>>, y: &[f64], hyper: Hyper) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::param("surrogate needs matching, non-empty inputs"));
        }
        let n = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
        let y_std = if var > 1e-24 { var.sqrt() } else { 1.0 };
        let z: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_std).collect();
        let f = factor(&x, &z, &hyper)
            .ok_or_else(|| Error::Degenerate("kernel matrix not positive definite".into()))?;
        Ok(Gp {
            x,
            hyper,
            chol: f.chol,
            alpha: f.alpha,
            y_mean,
            y_std,
        })
    }

    /// Fits length scales and noise by coordinate-wise grid search on the
    /// log marginal likelihood.
    pub fn fit(x: Vec<Vec<f64>>, y: &[f64]) -> Result<Self> {
        let d = x.first().map_or(0, |r| r.len());
        let n = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / n.max(1.0);
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n.max(1.0);
        let y_std = if var > 1e-24 { var.sqrt() } else { 1.0 };
        let z: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_std).collect();
        let score = |h: &Hyper| factor(&x, &z, h).map_or(f64::NEG_INFINITY, |f| f.log_ml);

        let mut best = Hyper {
            length_scales: vec![0.5; d],
            noise: 1e-2,
        };
        let mut best_score = score(&best);
        for _ in 0..FIT_SWEEPS {
            for dim in 0..d {
                for &l in &LENGTH_GRID {
                    let mut h = best.clone();
                    h.length_scales[dim] = l;
                    let s = score(&h);
                    if s > best_score {
                        best = h;
                        best_score = s;
                    }
                }
            }
            for &noise in &NOISE_GRID {
                let h = Hyper {
                    noise,
                    ..best.clone()
                };
                let s = score(&h);
                if s > best_score {
                    best = h;
                    best_score = s;
                }
            }
        }
        Gp::with_hyper(x, y, best)
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    /// Posterior mean and variance of the latent function at `p`, in the
    /// units of the observations.
    pub fn predict(&self, p: &[f64]) -> (f64, f64) {
        let ks: Vec<f64> = self
            .x
            .iter()
            .map(|xi| kernel(xi, p, &self.hyper.length_scales))
            .collect();
        let mean: f64 = ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = forward(&self.chol, &ks);
        let var = (1.0 - v.iter().map(|x| x * x).sum::<f64>()).max(0.0);
        (
            self.y_mean + self.y_std * mean,
            var * self.y_std * self.y_std,
        )
    }

    /// Observation noise variance in the units of the observations.
    pub fn noise_variance(&self) -> f64 {
        self.hyper.noise * self.y_std * self.y_std
    }
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement below `best` for a minimization problem.
pub fn expected_improvement(mean: f64, var: f64, best: f64) -> f64 {
    let sd = var.max(0.0).sqrt();
    let gain = best - mean;
    if sd < 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / sd;
    (gain * norm_cdf(z) + sd * norm_pdf(z)).max(0.0)
}
