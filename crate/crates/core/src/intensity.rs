//! Conditional intensity, Poisson log-likelihood, priors and BIC.
//!
//! ```text
//! λ[t][r] = μ + α Σ_{s=1..min(t, t_max)} g(s) Σ_{r'} y[t-s][r'] w[r'][r]
//! ```
//!
//! Rows before `warmup` feed the history sums but add no observation terms.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::EventGrid;
use crate::kernel::{temporal_pmf, temporal_pmf_dbeta, DistanceMatrix, Metric, SpatialWeightMatrix};
use crate::params::{ModelParams, N_PARAMS};

/// Expected events per (month, region).
#[derive(Debug, Clone, PartialEq)]
pub struct IntensitySurface {
    pub lambda: Array2<f64>,
}

impl IntensitySurface {
    pub fn month_totals(&self) -> Vec<f64> {
        self.lambda.rows().into_iter().map(|r| r.sum()).collect()
    }
}

/// Lag-weighted history `H[t][r] = Σ_s weights[s-1] · y[t-s][r]`.
fn lagged_history(counts: ArrayView2<'_, u32>, weights: &[f64]) -> Array2<f64> {
    let (t_len, r_len) = counts.dim();
    let mut h = Array2::<f64>::zeros((t_len, r_len));
    for t in 1..t_len {
        for (lag0, &g) in weights.iter().enumerate().take(t) {
            let src = counts.row(t - lag0 - 1);
            Zip::from(h.row_mut(t)).and(&src).for_each(|hv, &y| *hv += g * y as f64);
        }
    }
    h
}

fn check_dims(grid: &EventGrid, w_dim: usize) -> Result<()> {
    if grid.n_regions() != w_dim {
        return Err(Error::Dimension(format!(
            "grid has {} regions but the weight matrix is {}x{}",
            grid.n_regions(),
            w_dim,
            w_dim
        )));
    }
    Ok(())
}

fn surface_from_counts(
    params: &ModelParams,
    counts: ArrayView2<'_, u32>,
    w: &SpatialWeightMatrix,
) -> Result<Array2<f64>> {
    let g = temporal_pmf(params.beta, params.t_max)?;
    let h = lagged_history(counts, &g);
    let mut lambda = h.dot(w.as_array());
    lambda.mapv_inplace(|e| params.mu + params.alpha * e);
    Ok(lambda)
}

/// Intensity for every row of `grid`, warm-up rows included.
pub fn intensity_surface(
    params: &ModelParams,
    grid: &EventGrid,
    w: &SpatialWeightMatrix,
) -> Result<IntensitySurface> {
    check_dims(grid, w.dim())?;
    Ok(IntensitySurface { lambda: surface_from_counts(params, grid.counts(), w)? })
}

/// Intensity for an arbitrary count matrix (no warm-up semantics).
pub fn intensity_from_counts(
    params: &ModelParams,
    counts: ArrayView2<'_, u32>,
    w: &SpatialWeightMatrix,
) -> Result<Array2<f64>> {
    if counts.ncols() != w.dim() {
        return Err(Error::Dimension(format!(
            "{} count columns for a {}-region weight matrix",
            counts.ncols(),
            w.dim()
        )));
    }
    surface_from_counts(params, counts, w)
}

#[inline]
fn cell_term(y: u32, lambda: f64) -> f64 {
    if y == 0 {
        -lambda
    } else if lambda <= 0.0 {
        f64::NEG_INFINITY
    } else {
        y as f64 * lambda.ln() - lambda
    }
}

fn ln_factorial_sum(grid: &EventGrid) -> f64 {
    grid.counts()
        .rows()
        .into_iter()
        .skip(grid.warmup())
        .flat_map(|r| r.into_iter().copied().collect::<Vec<_>>())
        .filter(|&y| y > 1)
        .map(|y| ln_factorial(y as u64))
        .sum()
}

fn loglik_from_surface(grid: &EventGrid, lambda: &Array2<f64>, lnfact: f64) -> f64 {
    let counts = grid.counts();
    let mut total = 0.0;
    for t in grid.warmup()..grid.months() {
        let mut row = 0.0;
        for (&y, &l) in counts.row(t).iter().zip(lambda.row(t).iter()) {
            row += cell_term(y, l);
        }
        total += row;
    }
    total - lnfact
}

/// `Σ_{t ≥ warmup} Σ_r [y ln λ − λ − ln y!]`.
pub fn log_likelihood(params: &ModelParams, grid: &EventGrid, w: &SpatialWeightMatrix) -> Result<f64> {
    let surface = intensity_surface(params, grid, w)?;
    Ok(loglik_from_surface(grid, &surface.lambda, ln_factorial_sum(grid)))
}

/// Analytic gradient `(∂/∂μ, ∂/∂α, ∂/∂β, ∂/∂σ)` of the log-likelihood.
pub fn log_likelihood_gradient(
    params: &ModelParams,
    grid: &EventGrid,
    dist: &DistanceMatrix,
) -> Result<[f64; N_PARAMS]> {
    check_dims(grid, dist.dim())?;
    let g = temporal_pmf(params.beta, params.t_max)?;
    let dg = temporal_pmf_dbeta(params.beta, params.t_max)?;
    let w = dist.weights(params.sigma);
    let dw = dist.weights_dsigma(params.sigma);
    let counts = grid.counts();

    let h = lagged_history(counts, &g);
    let h_beta = lagged_history(counts, &dg);
    // excitation sum and its partials, alpha factored out
    let excite = h.dot(w.as_array());
    let excite_beta = h_beta.dot(w.as_array());
    let excite_sigma = h.dot(&dw);

    let mut grad = [0.0; N_PARAMS];
    for t in grid.warmup()..grid.months() {
        for r in 0..grid.n_regions() {
            let y = counts[[t, r]] as f64;
            let e = excite[[t, r]];
            let lambda = params.mu + params.alpha * e;
            let score = if y == 0.0 { -1.0 } else { y / lambda - 1.0 };
            grad[0] += score;
            grad[1] += score * e;
            grad[2] += score * params.alpha * excite_beta[[t, r]];
            grad[3] += score * params.alpha * excite_sigma[[t, r]];
        }
    }
    Ok(grad)
}

/// Per-parameter prior choice. Gamma is shape-rate, inverse-gamma shape-scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Prior {
    Gamma { shape: f64, rate: f64 },
    InverseGamma { shape: f64, scale: f64 },
    Uniform { low: f64, high: f64 },
}

impl Prior {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Prior::Gamma { shape, rate } => {
                if x <= 0.0 || !x.is_finite() {
                    return f64::NEG_INFINITY;
                }
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
            }
            Prior::InverseGamma { shape, scale } => {
                if x <= 0.0 || !x.is_finite() {
                    return f64::NEG_INFINITY;
                }
                shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
            }
            Prior::Uniform { low, high } => {
                if x > low && x < high {
                    -(high - low).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// Priors on `(mu, alpha, beta, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub mu: Prior,
    pub alpha: Prior,
    pub beta: Prior,
    pub sigma: Prior,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            mu: Prior::Gamma { shape: 2.0, rate: 2.0 },
            alpha: Prior::Gamma { shape: 2.0, rate: 2.0 },
            beta: Prior::Uniform { low: 0.0, high: 1.0 },
            sigma: Prior::InverseGamma { shape: 5.0, scale: 5.0 },
        }
    }
}

impl Priors {
    pub fn log_density(&self, p: &ModelParams) -> f64 {
        self.mu.ln_pdf(p.mu) + self.alpha.ln_pdf(p.alpha) + self.beta.ln_pdf(p.beta) + self.sigma.ln_pdf(p.sigma)
    }
}

/// Log prior under the default priors; `-inf` outside the support.
pub fn log_prior(params: &ModelParams) -> f64 {
    Priors::default().log_density(params)
}

pub fn log_posterior(params: &ModelParams, grid: &EventGrid, w: &SpatialWeightMatrix) -> Result<f64> {
    let lp = log_prior(params);
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    Ok(log_likelihood(params, grid, w)? + lp)
}

/// `k ln(n_obs) − 2 loglik`.
pub fn bic(loglik: f64, n_obs: usize, k: usize) -> f64 {
    k as f64 * (n_obs as f64).ln() - 2.0 * loglik
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStatistics {
    pub loglik: f64,
    pub n_obs: usize,
    pub k: usize,
    pub bic: f64,
}

impl FitStatistics {
    pub fn new(loglik: f64, n_obs: usize, k: usize) -> Self {
        Self { loglik, n_obs, k, bic: bic(loglik, n_obs, k) }
    }
}

/// Fixed structural choices of a model: lag truncation and distance metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub t_max: usize,
    pub metric: Metric,
    #[serde(default)]
    pub squared_distance: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { t_max: 3, metric: Metric::Euclidean, squared_distance: false }
    }
}

/// A grid bound to its distance matrix and lag truncation. Caches the pieces
/// of the likelihood that do not depend on the parameters.
#[derive(Debug, Clone)]
pub struct HawkesModel {
    grid: EventGrid,
    dist: DistanceMatrix,
    spec: ModelSpec,
    lnfact: f64,
    priors: Priors,
}

impl HawkesModel {
    pub fn new(grid: EventGrid, spec: ModelSpec) -> Result<Self> {
        if spec.t_max < 1 {
            return Err(Error::Domain("t_max must be at least 1".into()));
        }
        let dist = DistanceMatrix::new(grid.regions(), spec.metric, spec.squared_distance);
        let lnfact = ln_factorial_sum(&grid);
        Ok(Self { grid, dist, spec, lnfact, priors: Priors::default() })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn t_max(&self) -> usize {
        self.spec.t_max
    }

    /// Parameters with this model's `t_max` attached.
    pub fn params(&self, v: [f64; N_PARAMS]) -> ModelParams {
        ModelParams::from_array(v, self.spec.t_max)
    }

    pub fn with_priors(mut self, priors: Priors) -> Self {
        self.priors = priors;
        self
    }

    pub fn grid(&self) -> &EventGrid {
        &self.grid
    }

    pub fn distances(&self) -> &DistanceMatrix {
        &self.dist
    }

    pub fn priors(&self) -> &Priors {
        &self.priors
    }

    pub fn weights(&self, sigma: f64) -> SpatialWeightMatrix {
        self.dist.weights(sigma)
    }

    pub fn intensity(&self, p: &ModelParams) -> Result<IntensitySurface> {
        intensity_surface(p, &self.grid, &self.weights(p.sigma))
    }

    /// Log-likelihood; `-inf` for parameters outside the model domain.
    pub fn log_likelihood(&self, p: &ModelParams) -> f64 {
        if p.validate().is_err() {
            return f64::NEG_INFINITY;
        }
        match surface_from_counts(p, self.grid.counts(), &self.weights(p.sigma)) {
            Ok(lambda) => loglik_from_surface(&self.grid, &lambda, self.lnfact),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    pub fn gradient(&self, p: &ModelParams) -> Result<[f64; N_PARAMS]> {
        log_likelihood_gradient(p, &self.grid, &self.dist)
    }

    pub fn log_prior(&self, p: &ModelParams) -> f64 {
        self.priors.log_density(p)
    }

    pub fn log_posterior(&self, p: &ModelParams) -> f64 {
        let lp = self.log_prior(p);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + self.log_likelihood(p)
    }

    pub fn fit_statistics(&self, p: &ModelParams) -> FitStatistics {
        FitStatistics::new(self.log_likelihood(p), self.grid.n_obs(), N_PARAMS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{Region, RegionSet};
    use crate::grid::YearMonth;
    use crate::kernel::{build_weight_matrix, SpatialKernel};
    use approx::assert_relative_eq;
    use ndarray::array;

    fn regions(points: &[(f64, f64)]) -> RegionSet {
        RegionSet::new(
            points
                .iter()
                .enumerate()
                .map(|(i, &(cx, cy))| Region { region_id: format!("r{i}"), cx, cy })
                .collect(),
        )
        .unwrap()
    }

    fn grid(counts: Array2<u32>, warmup: usize, points: &[(f64, f64)]) -> EventGrid {
        EventGrid::new(counts, YearMonth::new(2010, 1).unwrap(), warmup, regions(points)).unwrap()
    }

    fn weights(g: &EventGrid, sigma: f64) -> SpatialWeightMatrix {
        build_weight_matrix(&SpatialKernel::new(sigma, Metric::Euclidean).unwrap(), g.regions())
    }

    #[test]
    fn zero_history_is_baseline() {
        let g = grid(Array2::zeros((5, 3)), 0, &[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let p = ModelParams::new(0.7, 2.0, 0.3, 1.0, 3).unwrap();
        let s = intensity_surface(&p, &g, &weights(&g, 1.0)).unwrap();
        assert!(s.lambda.iter().all(|&l| l == 0.7));
    }

    #[test]
    fn single_region_hand_value() {
        let g = grid(array![[0], [0], [2], [0]], 0, &[(0.0, 0.0)]);
        let p = ModelParams::new(1.0, 0.5, 0.5, 1.0, 3).unwrap();
        let s = intensity_surface(&p, &g, &weights(&g, 1.0)).unwrap();
        assert_relative_eq!(s.lambda[[3, 0]], 11.0 / 7.0, epsilon = 1e-14);
        assert_eq!(s.lambda[[2, 0]], 1.0);
    }

    #[test]
    fn two_region_spatial_decay() {
        let g = grid(array![[1, 0], [0, 0]], 0, &[(0.0, 0.0), (2.0, 0.0)]);
        let p = ModelParams::new(0.0, 1.0, 1.0, 1.0, 3).unwrap();
        let s = intensity_surface(&p, &g, &weights(&g, 1.0)).unwrap();
        assert_relative_eq!(s.lambda[[1, 0]], 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.lambda[[1, 1]], (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let g = grid(Array2::zeros((3, 2)), 0, &[(0.0, 0.0), (1.0, 0.0)]);
        let w = SpatialWeightMatrix::from_array(Array2::ones((3, 3))).unwrap();
        let p = ModelParams::new(1.0, 0.5, 0.5, 1.0, 3).unwrap();
        assert!(matches!(intensity_surface(&p, &g, &w), Err(Error::Dimension(_))));
    }

    #[test]
    fn loglik_single_empty_cell() {
        let g = grid(Array2::zeros((4, 1)), 3, &[(0.0, 0.0)]);
        let p = ModelParams::new(1.0, 3.3, 0.5, 1.0, 3).unwrap();
        assert_relative_eq!(log_likelihood(&p, &g, &weights(&g, 1.0)).unwrap(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn loglik_single_cell_hand_value() {
        let g = grid(array![[0], [0], [2], [2]], 3, &[(0.0, 0.0)]);
        let p = ModelParams::new(1.0, 0.5, 0.5, 1.0, 3).unwrap();
        let ll = log_likelihood(&p, &g, &weights(&g, 1.0)).unwrap();
        let lam: f64 = 11.0 / 7.0;
        assert_relative_eq!(ll, 2.0 * lam.ln() - lam - 2f64.ln(), epsilon = 1e-13);
        assert!((ll - -1.36061).abs() < 1e-5);

        let dist = DistanceMatrix::new(g.regions(), Metric::Euclidean, false);
        let grad = log_likelihood_gradient(&p, &g, &dist).unwrap();
        assert_relative_eq!(grad[0], 3.0 / 11.0, epsilon = 1e-13);
    }

    #[test]
    fn zero_rate_with_events_is_neg_inf() {
        let g = grid(array![[0], [3]], 0, &[(0.0, 0.0)]);
        let p = ModelParams { mu: 0.0, alpha: 1.0, beta: 0.5, sigma: 1.0, t_max: 3 };
        assert_eq!(log_likelihood(&p, &g, &weights(&g, 1.0)).unwrap(), f64::NEG_INFINITY);
        let g0 = grid(array![[0], [0]], 0, &[(0.0, 0.0)]);
        assert_eq!(log_likelihood(&p, &g0, &weights(&g0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn zero_grid_gradient() {
        let g = grid(Array2::zeros((6, 2)), 2, &[(0.0, 0.0), (1.0, 1.0)]);
        let dist = DistanceMatrix::new(g.regions(), Metric::Euclidean, false);
        let p = ModelParams::new(0.4, 0.6, 0.3, 0.8, 3).unwrap();
        let grad = log_likelihood_gradient(&p, &g, &dist).unwrap();
        assert_eq!(grad, [-(g.n_obs() as f64), 0.0, 0.0, 0.0]);
    }

    #[test]
    fn prior_hand_values() {
        let pri = Priors::default();
        assert_relative_eq!(pri.mu.ln_pdf(1.0), 2.0 * 2f64.ln() - 2.0, epsilon = 1e-14);
        assert_relative_eq!(pri.sigma.ln_pdf(1.0), (3125.0f64 / 24.0).ln() - 5.0, epsilon = 1e-13);
        assert!((pri.sigma.ln_pdf(1.0) - -0.13086).abs() < 1e-5);
        assert_eq!(pri.beta.ln_pdf(0.3), 0.0);
        let p = ModelParams { mu: 1.0, alpha: 1.0, beta: 1.5, sigma: 1.0, t_max: 3 };
        assert_eq!(log_prior(&p), f64::NEG_INFINITY);
    }

    #[test]
    fn posterior_hand_value() {
        let g = grid(Array2::zeros((4, 1)), 3, &[(0.0, 0.0)]);
        let p = ModelParams::new(1.0, 1.0, 0.5, 1.0, 3).unwrap();
        let lp = log_posterior(&p, &g, &weights(&g, 1.0)).unwrap();
        let expected = -1.0 + 2.0 * (2.0 * 2f64.ln() - 2.0) + (3125.0f64 / 24.0).ln() - 5.0;
        assert_relative_eq!(lp, expected, epsilon = 1e-13);
        assert!((lp - -2.35828).abs() < 1e-5);
        let outside = ModelParams { beta: 1.5, ..p };
        assert_eq!(log_posterior(&outside, &g, &weights(&g, 1.0)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn bic_values() {
        assert_eq!(bic(0.0, 1, 4), 0.0);
        assert_relative_eq!(bic(-100.0, 1000, 4), 4.0 * 1000f64.ln() + 200.0, epsilon = 1e-12);
        assert_relative_eq!(bic(-7.0, 50, 8) - bic(-7.0, 50, 4), 4.0 * 50f64.ln(), epsilon = 1e-12);
        let st = FitStatistics::new(-12.5, 30, 4);
        assert!((st.bic - (4.0 * 30f64.ln() + 25.0)).abs() < 1e-9);
    }
}
