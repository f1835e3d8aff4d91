//! Adaptive random-walk Metropolis on an unconstrained target.
//!
//! During warm-up the proposal is `x + s · L · z` where the global scale `s`
//! follows a Robbins-Monro recursion towards the target acceptance rate and
//! `L L' = Σ` is re-estimated from the draws of successive doubling windows
//! (full covariance, or its diagonal only when `dense` is off).
//! Adaptation stops at the end of warm-up, so retained draws come from a fixed
//! Metropolis kernel.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// An unnormalised log density on `R^dim`. `-inf` marks zero density.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone)]
pub struct AdaptiveMetropolis {
    /// Warm-up iterations.
    pub warmup: usize,
    /// Retained draws.
    pub draws: usize,
    /// Iterations per retained draw after warm-up.
    pub thin: usize,
    pub target_accept: f64,
    /// Per-coordinate proposal s.d. before any variance estimate exists.
    pub initial_scale: f64,
    /// Adapt a full covariance rather than per-coordinate variances.
    pub dense: bool,
}

impl Default for AdaptiveMetropolis {
    fn default() -> Self {
        Self { warmup: 1000, draws: 1000, thin: 1, target_accept: 0.234, initial_scale: 0.1, dense: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    /// `draws x dim`, post warm-up only.
    pub draws: Vec<Vec<f64>>,
    pub accept_rate: f64,
    /// Final per-coordinate proposal s.d. (global scale folded in).
    pub proposal_sd: Vec<f64>,
}

/// Warm-up layout: `(start, end)` of each variance-estimation window.
fn adaptation_windows(warmup: usize) -> Vec<(usize, usize)> {
    let init = (warmup as f64 * 0.15).round() as usize;
    let term = (warmup as f64 * 0.10).round() as usize;
    let slow_end = warmup.saturating_sub(term);
    let mut windows = Vec::new();
    if slow_end <= init + 20 {
        return windows;
    }
    let mut start = init;
    let mut len = 25;
    while start < slow_end {
        let mut end = (start + len).min(slow_end);
        // fold a short tail into the last window
        if slow_end - end < 2 * len {
            end = slow_end;
        }
        windows.push((start, end));
        start = end;
        len *= 2;
    }
    windows
}

fn sanitize(lp: f64) -> f64 {
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}

impl AdaptiveMetropolis {
    /// Runs one chain from `x0`, which must have finite log density.
    pub fn run<T: LogDensity + ?Sized>(&self, target: &T, x0: &[f64], rng: &mut ChaCha8Rng) -> ChainOutput {
        let d = target.dim();
        assert_eq!(x0.len(), d, "initial point has wrong dimension");
        let mut x = x0.to_vec();
        let mut lp = sanitize(target.log_density(&x));
        let mut chol = DMatrix::<f64>::identity(d, d) * self.initial_scale;
        let base_log_scale = (2.38 / (d as f64).sqrt()).ln();
        // start the global scale at 1 so the initial per-coordinate sd is initial_scale
        let mut log_scale: f64 = 0.0;
        let mut rm_iter = 0usize;

        let windows = adaptation_windows(self.warmup);
        let mut window_idx = 0;
        let mut window_draws: Vec<Vec<f64>> = Vec::new();

        let mut proposal = vec![0.0; d];
        let mut step = |x: &mut Vec<f64>, lp: &mut f64, scale: f64, chol: &DMatrix<f64>, rng: &mut ChaCha8Rng| {
            let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let dz = chol * z;
            for j in 0..d {
                proposal[j] = x[j] + scale * dz[j];
            }
            let lp_new = sanitize(target.log_density(&proposal));
            let log_ratio = lp_new - *lp;
            let accept_prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
            let u: f64 = rng.random();
            let accepted = lp_new > f64::NEG_INFINITY && u < accept_prob;
            if accepted {
                x.copy_from_slice(&proposal);
                *lp = lp_new;
            }
            (accepted, if lp_new.is_finite() { accept_prob } else { 0.0 })
        };

        for i in 0..self.warmup {
            let (_, accept_prob) = step(&mut x, &mut lp, log_scale.exp(), &chol, rng);
            rm_iter += 1;
            let gain = (rm_iter as f64).powf(-0.6);
            log_scale += gain * (accept_prob - self.target_accept);
            log_scale = log_scale.clamp(-15.0, 8.0);

            if let Some(&(start, end)) = windows.get(window_idx) {
                if i >= start && i < end {
                    window_draws.push(x.clone());
                }
                if i + 1 == end {
                    if let Some(l) = self.window_factor(&window_draws) {
                        chol = l;
                    }
                    window_draws.clear();
                    window_idx += 1;
                    log_scale = base_log_scale;
                    rm_iter = 0;
                }
            }
        }

        let scale = log_scale.exp();
        let mut draws = Vec::with_capacity(self.draws);
        let mut accepted = 0usize;
        let thin = self.thin.max(1);
        for _ in 0..self.draws {
            for _ in 0..thin {
                let (acc, _) = step(&mut x, &mut lp, scale, &chol, rng);
                accepted += acc as usize;
            }
            draws.push(x.clone());
        }
        ChainOutput {
            draws,
            accept_rate: accepted as f64 / (self.draws * thin).max(1) as f64,
            proposal_sd: (0..d).map(|j| scale * chol.row(j).norm()).collect(),
        }
    }

    /// Cholesky factor of the regularised window covariance, shrunk towards a
    /// small multiple of the identity as in Stan's windowed adaptation.
    fn window_factor(&self, draws: &[Vec<f64>]) -> Option<DMatrix<f64>> {
        let n = draws.len();
        if n < 3 {
            return None;
        }
        let d = draws[0].len();
        let nf = n as f64;
        let m = DVector::from_fn(d, |j, _| draws.iter().map(|w| w[j]).sum::<f64>() / nf);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for w in draws {
            let c = DVector::from_fn(d, |j, _| w[j] - m[j]);
            cov += &c * c.transpose();
        }
        cov /= nf - 1.0;
        if !self.dense {
            cov = DMatrix::from_diagonal(&cov.diagonal());
        }
        let shrunk = cov * (nf / (nf + 5.0)) + DMatrix::identity(d, d) * (1e-3 * 5.0 / (nf + 5.0));
        shrunk.cholesky().map(|c| c.l())
    }
}
