//! Maximum-likelihood fitting with multi-start simplex search, a BFGS polish
//! and finite-difference standard errors.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::intensity::{FitStatistics, HawkesModel};
use crate::optim::{Bfgs, NelderMead};
use crate::params::{ModelParams, N_PARAMS};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    /// Explicit starting points as `[mu, alpha, beta, sigma]`; when empty the
    /// default five-point design is used.
    pub starts: Vec<[f64; N_PARAMS]>,
    pub max_iter: usize,
    /// Gradient-norm tolerance in unconstrained space for `converged`.
    pub grad_tol: f64,
    pub polish: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { starts: Vec::new(), max_iter: 4000, grad_tol: 1e-5, polish: true }
    }
}

/// Maximum-likelihood point estimate and its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    pub params: ModelParams,
    #[serde(flatten)]
    pub stats: FitStatistics,
    pub std_errors: Option<[f64; N_PARAMS]>,
    pub hessian_ok: bool,
    pub iterations: usize,
    pub converged: bool,
}

impl MleFit {
    pub fn loglik(&self) -> f64 {
        self.stats.loglik
    }
}

/// Default start design: a half fraction of the `{0.1, 0.5} x {0.3, 0.7} x
/// {0.5, 2}` cube for `(alpha, beta, sigma)` plus a central point, all at the
/// moment-matched `mu`.
pub fn default_starts(model: &HawkesModel) -> Vec<[f64; N_PARAMS]> {
    let mu = model.grid().likelihood_mean().max(1e-3);
    vec![
        [mu, 0.1, 0.3, 0.5],
        [mu, 0.1, 0.7, 2.0],
        [mu, 0.5, 0.3, 2.0],
        [mu, 0.5, 0.7, 0.5],
        [mu, 0.3, 0.5, 1.0],
    ]
}

struct StartResult {
    u: Vec<f64>,
    neg_ll: f64,
    start_neg_ll: f64,
    iterations: usize,
}

fn neg_loglik(model: &HawkesModel, u: &[f64]) -> f64 {
    let p = ModelParams::from_unconstrained(u, model.t_max());
    let ll = model.log_likelihood(&p);
    if ll.is_nan() {
        f64::INFINITY
    } else {
        -ll
    }
}

/// Negative log-likelihood and its gradient in unconstrained coordinates.
fn neg_loglik_grad(model: &HawkesModel, u: &[f64]) -> (f64, Vec<f64>) {
    let p = ModelParams::from_unconstrained(u, model.t_max());
    let f = neg_loglik(model, u);
    if !f.is_finite() || p.beta >= 1.0 || p.beta <= 0.0 {
        return (f64::INFINITY, vec![f64::NAN; N_PARAMS]);
    }
    match model.gradient(&p) {
        Ok(g) => {
            let scale = p.unconstrained_scale();
            (f, g.iter().zip(scale).map(|(gi, si)| -gi * si).collect())
        }
        Err(_) => (f64::INFINITY, vec![f64::NAN; N_PARAMS]),
    }
}

fn gradient_norm(model: &HawkesModel, u: &[f64]) -> f64 {
    let (_, g) = neg_loglik_grad(model, u);
    g.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn run_start(model: &HawkesModel, start: &[f64; N_PARAMS], config: &OptimConfig) -> StartResult {
    let p0 = model.params(*start);
    let u0 = p0.to_unconstrained();
    let start_neg_ll = neg_loglik(model, &u0);
    let nm = NelderMead { max_iter: config.max_iter, ..Default::default() };
    let first = nm.minimize(|u| neg_loglik(model, u), &u0);
    // a restart guards against a prematurely collapsed simplex
    let second = NelderMead { initial_step: 0.1, ..nm }.minimize(|u| neg_loglik(model, u), &first.x);
    let mut iterations = first.iterations + second.iterations;
    let (mut u, mut f) = if second.f <= first.f { (second.x, second.f) } else { (first.x, first.f) };
    if config.polish && f.is_finite() {
        let polished = Bfgs { max_iter: 500, grad_tol: config.grad_tol * 1e-2 }
            .minimize(|x| neg_loglik_grad(model, x), &u);
        iterations += polished.iterations;
        if polished.f <= f {
            u = polished.x;
            f = polished.f;
        }
    }
    StartResult { u, neg_ll: f, start_neg_ll, iterations }
}

/// Maximises the log-likelihood over `(ln mu, ln alpha, logit beta, ln sigma)`.
/// Starts run in parallel; the best final value wins, ties going to the
/// earlier start.
pub fn fit_mle(model: &HawkesModel, config: &OptimConfig) -> MleFit {
    let starts = if config.starts.is_empty() { default_starts(model) } else { config.starts.clone() };
    let results: Vec<StartResult> = starts.par_iter().map(|s| run_start(model, s, config)).collect();

    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.neg_ll < results[best].neg_ll {
            best = i;
        }
    }
    let chosen = &results[best];
    let best_start = results.iter().map(|r| r.start_neg_ll).fold(f64::INFINITY, f64::min);
    let improved = chosen.neg_ll.is_finite() && chosen.neg_ll <= best_start;
    let converged = improved && gradient_norm(model, &chosen.u) < config.grad_tol;

    let params = ModelParams::from_unconstrained(&chosen.u, model.t_max());
    let stats = FitStatistics::new(-chosen.neg_ll, model.grid().n_obs(), N_PARAMS);
    let (std_errors, hessian_ok) = hessian_std_errors(&params, model);
    MleFit {
        params,
        stats,
        std_errors,
        hessian_ok,
        iterations: results.iter().map(|r| r.iterations).sum(),
        converged,
    }
}

/// Closed-form fit of the excitation-free model (`alpha = 0`, one parameter).
pub fn fit_poisson_baseline(model: &HawkesModel) -> (f64, FitStatistics) {
    let grid = model.grid();
    let mu = grid.likelihood_mean();
    let p = ModelParams { mu, alpha: 0.0, beta: 0.5, sigma: 1.0, t_max: model.t_max() };
    let ll = if mu > 0.0 { model.log_likelihood(&p) } else { 0.0 };
    (mu, FitStatistics::new(ll, grid.n_obs(), 1))
}

/// Central-difference Hessian with per-coordinate step
/// `max(1e-4 |x_i|, 1e-6)`. Returns `None` if any probe leaves the domain or
/// evaluates to a non-finite value.
pub fn finite_difference_hessian<F, D>(f: F, x: &[f64], in_domain: D) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> f64,
    D: Fn(&[f64]) -> bool,
{
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| (1e-4 * v.abs()).max(1e-6)).collect();
    let eval = |dx: &[(usize, f64)]| -> Option<f64> {
        let mut p = x.to_vec();
        for &(i, s) in dx {
            p[i] += s;
        }
        if !in_domain(&p) {
            return None;
        }
        let v = f(&p);
        v.is_finite().then_some(v)
    };
    let f0 = eval(&[])?;
    let mut hess = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let fp = eval(&[(i, h[i])])?;
        let fm = eval(&[(i, -h[i])])?;
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in (i + 1)..n {
            let fpp = eval(&[(i, h[i]), (j, h[j])])?;
            let fpm = eval(&[(i, h[i]), (j, -h[j])])?;
            let fmp = eval(&[(i, -h[i]), (j, h[j])])?;
            let fmm = eval(&[(i, -h[i]), (j, -h[j])])?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Some(hess)
}

/// Standard errors from the Hessian of a log-likelihood: square roots of the
/// diagonal of `(-H)^-1`, provided `-H` is positive definite (smallest
/// eigenvalue above `1e-10` times the largest).
pub fn std_errors_from_hessian(hess: &DMatrix<f64>) -> Option<Vec<f64>> {
    let neg = -hess;
    let eig = SymmetricEigen::new(neg.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0 && min > 1e-10 * max) {
        return None;
    }
    let inv = neg.try_inverse()?;
    let se: Vec<f64> = (0..inv.nrows()).map(|i| inv[(i, i)].sqrt()).collect();
    se.iter().all(|s| s.is_finite() && *s > 0.0).then_some(se)
}

fn interior(v: &[f64]) -> bool {
    v[0] > 0.0 && v[1] > 0.0 && v[2] > 0.0 && v[2] < 1.0 && v[3] > 0.0
}

/// Asymptotic standard errors in natural parameter space. A singular or
/// indefinite Hessian, or a point on the boundary, is reported with
/// `hessian_ok = false`.
pub fn hessian_std_errors(point: &ModelParams, model: &HawkesModel) -> (Option<[f64; N_PARAMS]>, bool) {
    let x = point.as_array();
    if !interior(&x) {
        return (None, false);
    }
    let t_max = point.t_max;
    let hess = finite_difference_hessian(
        |v| model.log_likelihood(&ModelParams::from_array([v[0], v[1], v[2], v[3]], t_max)),
        &x,
        interior,
    );
    match hess.as_ref().and_then(std_errors_from_hessian) {
        Some(se) => (Some([se[0], se[1], se[2], se[3]]), true),
        None => (None, false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{Region, RegionSet};
    use crate::grid::{EventGrid, YearMonth};
    use crate::intensity::ModelSpec;
    use ndarray::Array2;

    #[test]
    fn quadratic_seam_standard_error() {
        let hess = finite_difference_hessian(|x| -(x[0] - 1.0).powi(2), &[1.0], |_| true).unwrap();
        assert!((hess[(0, 0)] + 2.0).abs() < 1e-6);
        let se = std_errors_from_hessian(&hess).unwrap();
        assert!((se[0] - 1.0 / 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn singular_hessian_reported() {
        // flat direction in x[1]
        let hess = finite_difference_hessian(|x| -(x[0] - 1.0).powi(2), &[1.0, 3.0], |_| true).unwrap();
        assert!(std_errors_from_hessian(&hess).is_none());
    }

    #[test]
    fn boundary_point_not_ok() {
        let regions = RegionSet::new(vec![Region { region_id: "a".into(), cx: 0.0, cy: 0.0 }]).unwrap();
        let mut counts = Array2::<u32>::zeros((10, 1));
        counts[[5, 0]] = 2;
        let grid = EventGrid::new(counts, YearMonth::new(2010, 1).unwrap(), 3, regions).unwrap();
        let model = HawkesModel::new(grid, ModelSpec::default()).unwrap();
        let p = ModelParams { mu: 0.3, alpha: 0.0, beta: 0.5, sigma: 1.0, t_max: 3 };
        assert_eq!(hessian_std_errors(&p, &model), (None, false));
    }

    #[test]
    fn all_zero_grid_drives_mu_to_zero() {
        let regions = RegionSet::new(
            (0..3).map(|i| Region { region_id: format!("r{i}"), cx: i as f64, cy: 0.0 }).collect(),
        )
        .unwrap();
        let grid = EventGrid::new(Array2::zeros((20, 3)), YearMonth::new(2010, 1).unwrap(), 3, regions).unwrap();
        let model = HawkesModel::new(grid, ModelSpec::default()).unwrap();
        let fit = fit_mle(&model, &OptimConfig::default());
        assert!(fit.params.mu <= 1e-6, "mu = {}", fit.params.mu);
        assert!(fit.converged);
    }
}
