//! Temporal and spatial triggering kernels.
//!
//! The temporal kernel is a geometric pmf truncated to lags `1..=t_max` and
//! re-normalised:
//!
//! ```text
//! g(s) = β(1-β)^(s-1) / Σ_{j=1..t_max} β(1-β)^(j-1)
//! ```
//!
//! The spatial kernel is `h(z, z') = exp(-d(z, z') / (2σ²))` with `d` the plain
//! (unsquared) distance. Setting `squared_distance` swaps `d` for `d²`, which
//! gives the textbook Gaussian RBF.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::RegionSet;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Truncated, re-normalised geometric lag distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalKernel {
    beta: f64,
    pmf: Vec<f64>,
}

impl TemporalKernel {
    pub fn new(beta: f64, t_max: usize) -> Result<Self> {
        Ok(Self { beta, pmf: temporal_pmf(beta, t_max)? })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn t_max(&self) -> usize {
        self.pmf.len()
    }

    /// `pmf()[s - 1]` is the mass at lag `s`.
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }
}

fn check_temporal(beta: f64, t_max: usize) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!("beta = {beta} outside (0, 1]")));
    }
    if t_max < 1 {
        return Err(Error::Domain("t_max must be at least 1".into()));
    }
    Ok(())
}

/// Lag pmf `g(1..=t_max)`. At `beta = 1` all mass sits on lag 1.
pub fn temporal_pmf(beta: f64, t_max: usize) -> Result<Vec<f64>> {
    check_temporal(beta, t_max)?;
    let q = 1.0 - beta;
    let raw: Vec<f64> = (0..t_max).map(|j| beta * q.powi(j as i32)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Derivative of [`temporal_pmf`] with respect to `beta`. Requires `beta < 1`.
pub fn temporal_pmf_dbeta(beta: f64, t_max: usize) -> Result<Vec<f64>> {
    check_temporal(beta, t_max)?;
    if beta >= 1.0 {
        return Err(Error::Domain("pmf derivative is undefined at beta = 1".into()));
    }
    // g(s) = q^(s-1) / S(q) with S(q) = Σ_{j<t_max} q^j; differentiate in q.
    let q = 1.0 - beta;
    let s_q: f64 = (0..t_max).map(|j| q.powi(j as i32)).sum();
    let ds_q: f64 = (1..t_max).map(|j| j as f64 * q.powi(j as i32 - 1)).sum();
    Ok((0..t_max)
        .map(|j| {
            let g = q.powi(j as i32) / s_q;
            let d_num = if j == 0 { 0.0 } else { j as f64 * q.powi(j as i32 - 1) };
            let dg_dq = (d_num - g * ds_q) / s_q;
            -dg_dq
        })
        .collect())
}

/// Distance function between centroids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Straight-line distance in degree space.
    #[default]
    Euclidean,
    /// Great-circle distance in kilometres.
    Haversine,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Metric::Euclidean),
            "haversine" => Ok(Metric::Haversine),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Distance between `(x, y) = (lon, lat)` points under `metric`.
pub fn spatial_distance(z: (f64, f64), zi: (f64, f64), metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => ((z.0 - zi.0).powi(2) + (z.1 - zi.1).powi(2)).sqrt(),
        Metric::Haversine => {
            let (lon1, lat1) = (z.0.to_radians(), z.1.to_radians());
            let (lon2, lat2) = (zi.0.to_radians(), zi.1.to_radians());
            let a = ((lat2 - lat1) / 2.0).sin().powi(2)
                + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
            2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
        }
    }
}

/// Radial spatial kernel. `sigma` is in the units of `metric`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialKernel {
    pub sigma: f64,
    pub metric: Metric,
    #[serde(default)]
    pub squared_distance: bool,
}

impl SpatialKernel {
    pub fn new(sigma: f64, metric: Metric) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma = {sigma} must be positive")));
        }
        Ok(Self { sigma, metric, squared_distance: false })
    }

    pub fn with_squared_distance(mut self, squared: bool) -> Self {
        self.squared_distance = squared;
        self
    }

    /// Weight for a raw distance `d`.
    pub fn weight_at(&self, d: f64) -> f64 {
        let d = if self.squared_distance { d * d } else { d };
        (-d / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// `exp(-d / (2σ²))` between two points.
pub fn spatial_weight(kernel: &SpatialKernel, z: (f64, f64), zi: (f64, f64)) -> f64 {
    kernel.weight_at(spatial_distance(z, zi, kernel.metric))
}

/// Pairwise spatial weights `w[i][j] = h(z_i, z_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeightMatrix {
    w: Array2<f64>,
}

impl SpatialWeightMatrix {
    pub fn from_array(w: Array2<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::Dimension(format!("weight matrix is {}x{}", w.nrows(), w.ncols())));
        }
        Ok(Self { w })
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.w
    }
}

pub fn build_weight_matrix(kernel: &SpatialKernel, regions: &RegionSet) -> SpatialWeightMatrix {
    DistanceMatrix::new(regions, kernel.metric, kernel.squared_distance).weights(kernel.sigma)
}

/// Pairwise centroid distances (already squared when requested), kept so that
/// weight matrices for many `sigma` values can be built cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    d: Array2<f64>,
    metric: Metric,
    squared_distance: bool,
}

impl DistanceMatrix {
    pub fn new(regions: &RegionSet, metric: Metric, squared_distance: bool) -> Self {
        let c = regions.centroids();
        let n = c.len();
        let mut d = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let mut v = spatial_distance(c[i], c[j], metric);
                if squared_distance {
                    v *= v;
                }
                d[[i, j]] = v;
                d[[j, i]] = v;
            }
        }
        Self { d, metric, squared_distance }
    }

    pub fn dim(&self) -> usize {
        self.d.nrows()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn squared_distance(&self) -> bool {
        self.squared_distance
    }

    pub fn kernel(&self, sigma: f64) -> SpatialKernel {
        SpatialKernel { sigma, metric: self.metric, squared_distance: self.squared_distance }
    }

    pub fn weights(&self, sigma: f64) -> SpatialWeightMatrix {
        let scale = 1.0 / (2.0 * sigma * sigma);
        SpatialWeightMatrix { w: self.d.mapv(|d| (-d * scale).exp()) }
    }

    /// `∂w/∂σ = w · d / σ³`.
    pub fn weights_dsigma(&self, sigma: f64) -> Array2<f64> {
        let scale = 1.0 / (2.0 * sigma * sigma);
        let s3 = sigma.powi(3);
        self.d.mapv(|d| (-d * scale).exp() * d / s3)
    }
}
