//! Gaussian-process surrogate (Matérn 5/2, ARD) and expected improvement.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::TunerError;
use crate::rng::Stream;

pub const NOISE_FLOOR: f64 = 1e-6;
pub const RESTARTS: usize = 8;
pub const EVALS_PER_RESTART: usize = 60;

const LENGTH_BOUNDS: (f64, f64) = (0.01, 10.0);
const SIGNAL_BOUNDS: (f64, f64) = (0.05, 20.0);
const NOISE_BOUNDS: (f64, f64) = (NOISE_FLOOR, 1.0);
const RESTART_TAG: u64 = 0x6A55;

/// Kernel hyperparameters in natural units. Signal and noise variances
/// apply to the standardized scores.
#[derive(Debug, Clone, PartialEq)]
pub struct GpHyper {
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl GpHyper {
    fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_var.ln());
        v.push(self.noise_var.ln());
        v
    }

    fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        GpHyper {
            lengthscales: theta[..d].iter().map(|t| t.exp()).collect(),
            signal_var: theta[d].exp(),
            noise_var: theta[d + 1].exp().max(NOISE_FLOOR),
        }
    }
}

fn log_bounds(d: usize) -> Vec<(f64, f64)> {
    let mut b = vec![(LENGTH_BOUNDS.0.ln(), LENGTH_BOUNDS.1.ln()); d];
    b.push((SIGNAL_BOUNDS.0.ln(), SIGNAL_BOUNDS.1.ln()));
    b.push((NOISE_BOUNDS.0.ln(), NOISE_BOUNDS.1.ln()));
    b
}

/// Matérn 5/2 with per-dimension lengthscales.
pub fn matern52(a: &[f64], b: &[f64], h: &GpHyper) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(&h.lengthscales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    let s5r = (5.0 * r2).sqrt();
    h.signal_var * (1.0 + s5r + 5.0 / 3.0 * r2) * (-s5r).exp()
}

/// Lower-triangular Cholesky factor (row-major), or `None` if `a` is not
/// numerically positive definite.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn solve_lower(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

fn solve_upper_t(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

#[derive(Debug, Clone)]
pub struct GpSurrogate {
    pub hyper: GpHyper,
    points: Vec<Vec<f64>>,
    scores: Vec<f64>,
    y_mean: f64,
    y_std: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
}

struct Prepared {
    chol: Vec<f64>,
    alpha: Vec<f64>,
    lml: f64,
}

fn prepare(points: &[Vec<f64>], ys: &[f64], h: &GpHyper) -> Option<Prepared> {
    let n = points.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = matern52(&points[i], &points[j], h);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] += h.noise_var;
    }
    let chol = cholesky(&k, n)?;
    let alpha = solve_upper_t(&chol, n, &solve_lower(&chol, n, ys));
    let fit: f64 = ys.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let log_det: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum();
    let lml = -0.5 * fit - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    Some(Prepared { chol, alpha, lml })
}

impl GpSurrogate {
    /// Conditions on `points` with the given hyperparameters.
    pub fn with_hyper(points: &[Vec<f64>], scores: &[f64], hyper: GpHyper) -> Result<Self, TunerError> {
        if points.is_empty() || points.len() != scores.len() {
            return Err(TunerError::TooFewTrials(points.len()));
        }
        let hyper = GpHyper {
            noise_var: hyper.noise_var.max(NOISE_FLOOR),
            ..hyper
        };
        let (y_mean, y_std) = standardize_params(scores);
        let ys: Vec<f64> = scores.iter().map(|s| (s - y_mean) / y_std).collect();
        let p = prepare(points, &ys, &hyper).ok_or(TunerError::SingularKernel)?;
        Ok(Self {
            hyper,
            points: points.to_vec(),
            scores: scores.to_vec(),
            y_mean,
            y_std,
            chol: p.chol,
            alpha: p.alpha,
        })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Posterior mean and standard deviation of the latent function at `x`,
    /// in score units.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let n = self.points.len();
        let kx: Vec<f64> = self.points.iter().map(|p| matern52(p, x, &self.hyper)).collect();
        let mean: f64 = kx.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = solve_lower(&self.chol, n, &kx);
        let var = (self.hyper.signal_var - v.iter().map(|t| t * t).sum::<f64>()).max(0.0);
        (self.y_mean + self.y_std * mean, self.y_std * var.sqrt())
    }

    /// Lowest observed score and its point (earliest on ties).
    pub fn best_observed(&self) -> (f64, &[f64]) {
        let mut best = 0;
        for i in 1..self.scores.len() {
            if self.scores[i] < self.scores[best] {
                best = i;
            }
        }
        (self.scores[best], &self.points[best])
    }
}

fn standardize_params(scores: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 0.0 && sd.is_finite() { sd } else { 1.0 })
}

/// Fits hyperparameters by maximizing the log marginal likelihood with a
/// multi-start coordinate search in log space, then conditions on the data.
///
/// Restart 0 starts from lengthscales 0.5, signal variance 1 and noise
/// 1e-4; restarts 1..8 start from points drawn uniformly in the log bounds
/// via `Stream(seed, [RESTART_TAG, r])`. Each restart spends 60 likelihood
/// evaluations: every coordinate is tried at `+step` then `-step`, moves
/// are kept when they improve, and the step (initially a quarter of the
/// coordinate's range) halves after a sweep without improvement.
pub fn fit_gp(points: &[Vec<f64>], scores: &[f64], seed: u64) -> Result<GpSurrogate, TunerError> {
    if points.len() < 2 || points.len() != scores.len() {
        return Err(TunerError::TooFewTrials(points.len()));
    }
    let d = points[0].len();
    let (y_mean, y_std) = standardize_params(scores);
    let ys: Vec<f64> = scores.iter().map(|s| (s - y_mean) / y_std).collect();
    let bounds = log_bounds(d);
    let lml = |theta: &[f64]| {
        prepare(points, &ys, &GpHyper::from_log(theta))
            .map(|p| p.lml)
            .filter(|v| v.is_finite())
            .unwrap_or(f64::NEG_INFINITY)
    };

    let mut best_theta = Vec::new();
    let mut best_lml = f64::NEG_INFINITY;
    for r in 0..RESTARTS {
        let mut theta: Vec<f64> = if r == 0 {
            GpHyper {
                lengthscales: vec![0.5; d],
                signal_var: 1.0,
                noise_var: 1e-4,
            }
            .to_log()
        } else {
            let mut s = Stream::new(seed, &[RESTART_TAG, r as u64]);
            bounds.iter().map(|(lo, hi)| lo + s.next_f64() * (hi - lo)).collect()
        };
        let mut current = lml(&theta);
        let mut evals = 1;
        let mut steps: Vec<f64> = bounds.iter().map(|(lo, hi)| (hi - lo) / 4.0).collect();
        'search: while evals < EVALS_PER_RESTART {
            let mut improved = false;
            for c in 0..theta.len() {
                for dir in [1.0, -1.0] {
                    if evals >= EVALS_PER_RESTART {
                        break 'search;
                    }
                    let mut trial = theta.clone();
                    trial[c] = (trial[c] + dir * steps[c]).clamp(bounds[c].0, bounds[c].1);
                    if trial[c] == theta[c] {
                        continue;
                    }
                    let v = lml(&trial);
                    evals += 1;
                    if v > current {
                        theta = trial;
                        current = v;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                for s in &mut steps {
                    *s /= 2.0;
                }
            }
        }
        if current > best_lml || best_theta.is_empty() {
            best_lml = current;
            best_theta = theta;
        }
    }
    if best_lml == f64::NEG_INFINITY {
        return Err(TunerError::SingularKernel);
    }
    GpSurrogate::with_hyper(points, scores, GpHyper::from_log(&best_theta))
}

/// Expected improvement below `best` for a Gaussian with the given moments.
/// With no uncertainty it is the certain improvement `max(best - mean, 0)`.
pub fn ei_from_moments(mean: f64, sd: f64, best: f64) -> f64 {
    let gap = best - mean;
    if !(sd > 0.0) {
        return gap.max(0.0);
    }
    let z = gap / sd;
    let n = Normal::standard();
    (gap * n.cdf(z) + sd * n.pdf(z)).max(0.0)
}

pub fn expected_improvement(gp: &GpSurrogate, x: &[f64], best: f64) -> f64 {
    let (mean, sd) = gp.posterior(x);
    ei_from_moments(mean, sd, best)
}
