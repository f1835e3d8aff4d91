//! Forward simulation, posterior-predictive ensembles and percentile summaries
//! of simulated counts and fitted intensities.

use std::io::Write;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::RegionSet;
use crate::grid::{EventGrid, YearMonth};
use crate::intensity::HawkesModel;
use crate::kernel::{temporal_pmf, DistanceMatrix, SpatialWeightMatrix};
use crate::mcmc::PosteriorChains;
use crate::params::ModelParams;
use crate::stats::quantiles;

/// Intensities above this are treated as a runaway (supercritical) process.
const MAX_INTENSITY: f64 = 1e8;

pub const DEFAULT_LEVELS: [f64; 3] = [0.025, 0.5, 0.975];

/// `horizon x R` simulated counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedGrid {
    pub counts: Array2<u32>,
    pub seed: u64,
}

fn poisson_draw(lambda: f64, rng: &mut ChaCha8Rng) -> Result<u32> {
    if lambda <= 0.0 {
        return Ok(0);
    }
    if lambda.is_nan() || lambda > MAX_INTENSITY {
        return Err(Error::Domain(format!("simulated intensity {lambda} diverged")));
    }
    let dist = Poisson::new(lambda).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(rng.sample(dist) as u32)
}

fn simulate_with_rng(
    params: &ModelParams,
    history: ArrayView2<'_, u32>,
    w: &SpatialWeightMatrix,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<u32>> {
    let r_len = w.dim();
    if history.ncols() != r_len {
        return Err(Error::Dimension(format!(
            "history has {} regions, weight matrix {}",
            history.ncols(),
            r_len
        )));
    }
    let g = temporal_pmf(params.beta, params.t_max)?;
    let t0 = history.nrows();
    let mut all = concatenate(Axis(0), &[history, Array2::<u32>::zeros((horizon, r_len)).view()])
        .expect("same column count");
    let w = w.as_array();
    let mut lagged = vec![0.0; r_len];
    for t in t0..t0 + horizon {
        lagged.iter_mut().for_each(|v| *v = 0.0);
        for (lag0, &gs) in g.iter().enumerate().take(t) {
            for (r, v) in lagged.iter_mut().enumerate() {
                *v += gs * all[[t - lag0 - 1, r]] as f64;
            }
        }
        for r in 0..r_len {
            let excite: f64 = (0..r_len).map(|src| lagged[src] * w[[src, r]]).sum();
            let lambda = params.mu + params.alpha * excite;
            all[[t, r]] = poisson_draw(lambda, rng)?;
        }
    }
    Ok(all.slice(ndarray::s![t0.., ..]).to_owned())
}

/// Simulates `horizon` months after `history`, each cell drawn from
/// `Poisson(λ)` with simulated months feeding later intensities.
pub fn simulate_forward(
    params: &ModelParams,
    history: ArrayView2<'_, u32>,
    w: &SpatialWeightMatrix,
    horizon: usize,
    seed: u64,
) -> Result<SimulatedGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = simulate_with_rng(params, history, w, horizon, &mut rng)?;
    Ok(SimulatedGrid { counts, seed })
}

/// Simulates a fresh grid from an empty history, discarding `burn_in` months.
pub fn simulate_grid(
    params: &ModelParams,
    w: &SpatialWeightMatrix,
    months: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Array2<u32>> {
    let empty = Array2::<u32>::zeros((0, w.dim()));
    let sim = simulate_forward(params, empty.view(), w, burn_in + months, seed)?;
    Ok(sim.counts.slice(ndarray::s![burn_in.., ..]).to_owned())
}

/// Simulated [`EventGrid`] over `regions`, kernel weights from `dist`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_event_grid(
    params: &ModelParams,
    dist: &DistanceMatrix,
    regions: RegionSet,
    months: usize,
    warmup: usize,
    burn_in: usize,
    start: YearMonth,
    seed: u64,
) -> Result<EventGrid> {
    let counts = simulate_grid(params, &dist.weights(params.sigma), months, burn_in, seed)?;
    EventGrid::new(counts, start, warmup, regions)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveEnsemble {
    pub draws: Vec<SimulatedGrid>,
    pub horizon: usize,
    pub n_samples: usize,
    /// Parameters used for each member, same order as `draws`.
    pub params: Vec<ModelParams>,
    /// Row index of the first simulated month relative to the history grid.
    pub first_month_index: usize,
}

impl PredictiveEnsemble {
    /// Long CSV `member,month_index,region_id,count`.
    pub fn write_csv<W: Write>(&self, writer: W, regions: &RegionSet) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["member", "month_index", "region_id", "count"])?;
        for (m, sim) in self.draws.iter().enumerate() {
            for ((h, r), c) in sim.counts.indexed_iter() {
                w.write_record([
                    m.to_string(),
                    (self.first_month_index + h).to_string(),
                    regions.get(r).region_id.clone(),
                    c.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// One simulation per parameter vector; member `i` uses RNG stream `i + 1`
/// of `seed`, so the result does not depend on thread scheduling.
pub fn ensemble_from_params(
    params: &[ModelParams],
    history: &EventGrid,
    dist: &DistanceMatrix,
    horizon: usize,
    seed: u64,
) -> Result<PredictiveEnsemble> {
    let draws = params
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let w = dist.weights(p.sigma);
            let counts = simulate_with_rng(p, history.counts(), &w, horizon, &mut rng)?;
            Ok(SimulatedGrid { counts, seed })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictiveEnsemble {
        n_samples: draws.len(),
        draws,
        horizon,
        params: params.to_vec(),
        first_month_index: history.months(),
    })
}

/// Posterior-predictive ensemble from `n_samples` strided posterior draws.
pub fn posterior_predictive(
    chains: &PosteriorChains,
    history: &EventGrid,
    dist: &DistanceMatrix,
    horizon: usize,
    n_samples: usize,
    seed: u64,
) -> Result<PredictiveEnsemble> {
    let params = chains.select_draws(n_samples, seed)?;
    ensemble_from_params(&params, history, dist, horizon, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryAxis {
    /// Per-region totals over the horizon.
    Space,
    /// Per-month totals over regions.
    Time,
    /// Per (month, region).
    Cell,
}

impl SummaryAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SummaryAxis::Space => "space",
            SummaryAxis::Time => "time",
            SummaryAxis::Cell => "cell",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileRow {
    pub month_index: Option<usize>,
    pub region: Option<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileSummary {
    pub axis: SummaryAxis,
    pub levels: Vec<f64>,
    pub rows: Vec<PercentileRow>,
}

/// Formats a probability level as a percentile label, e.g. 0.025 -> "q2.5".
pub fn level_label(level: f64) -> String {
    let pct = (level * 1000.0).round() / 10.0;
    format!("q{pct}")
}

impl PercentileSummary {
    /// CSV `axis,key,q2.5,q50,q97.5` (one column per level).
    pub fn write_csv<W: Write>(&self, writer: W, regions: &RegionSet, header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        if header {
            let mut head = vec!["axis".to_string(), "key".to_string()];
            head.extend(self.levels.iter().map(|&l| level_label(l)));
            w.write_record(&head)?;
        }
        for row in &self.rows {
            let key = match (row.month_index, row.region) {
                (Some(t), None) => t.to_string(),
                (None, Some(r)) => regions.get(r).region_id.clone(),
                (Some(t), Some(r)) => format!("{t}:{}", regions.get(r).region_id),
                (None, None) => String::new(),
            };
            let mut rec = vec![self.axis.as_str().to_string(), key];
            rec.extend(row.values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Percentiles across ensemble members of the per-axis aggregates.
pub fn aggregate_percentiles(
    ensemble: &PredictiveEnsemble,
    axis: SummaryAxis,
    levels: &[f64],
) -> Result<PercentileSummary> {
    let first = ensemble.draws.first().ok_or_else(|| Error::Domain("empty ensemble".into()))?;
    let (h_len, r_len) = first.counts.dim();
    if ensemble.draws.iter().any(|d| d.counts.dim() != (h_len, r_len)) {
        return Err(Error::Dimension("ensemble members differ in shape".into()));
    }
    let t0 = ensemble.first_month_index;
    let collect = |f: &dyn Fn(&Array2<u32>) -> f64| -> Vec<f64> {
        let v: Vec<f64> = ensemble.draws.iter().map(|d| f(&d.counts)).collect();
        quantiles(&v, levels)
    };
    let rows = match axis {
        SummaryAxis::Space => (0..r_len)
            .map(|r| PercentileRow {
                month_index: None,
                region: Some(r),
                values: collect(&|c| c.column(r).iter().map(|&x| x as f64).sum()),
            })
            .collect(),
        SummaryAxis::Time => (0..h_len)
            .map(|h| PercentileRow {
                month_index: Some(t0 + h),
                region: None,
                values: collect(&|c| c.row(h).iter().map(|&x| x as f64).sum()),
            })
            .collect(),
        SummaryAxis::Cell => (0..h_len)
            .flat_map(|h| (0..r_len).map(move |r| (h, r)))
            .map(|(h, r)| PercentileRow {
                month_index: Some(t0 + h),
                region: Some(r),
                values: collect(&|c| c[[h, r]] as f64),
            })
            .collect(),
    };
    Ok(PercentileSummary { axis, levels: levels.to_vec(), rows })
}

/// Per-month percentiles across draws of `Σ_r λ[t][r]`, for the likelihood
/// months of the observed grid.
pub fn fitted_intensity_intervals(
    draws: &[ModelParams],
    model: &HawkesModel,
    levels: &[f64],
) -> Result<PercentileSummary> {
    if draws.is_empty() {
        return Err(Error::Domain("no posterior draws".into()));
    }
    let grid = model.grid();
    let totals: Vec<Vec<f64>> = draws
        .par_iter()
        .map(|p| model.intensity(p).map(|s| s.month_totals()))
        .collect::<Result<Vec<_>>>()?;
    let rows = (grid.warmup()..grid.months())
        .map(|t| {
            let v: Vec<f64> = totals.iter().map(|m| m[t]).collect();
            PercentileRow { month_index: Some(t), region: None, values: quantiles(&v, levels) }
        })
        .collect();
    Ok(PercentileSummary { axis: SummaryAxis::Time, levels: levels.to_vec(), rows })
}

/// Which month(s) a risk map describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapSelection {
    Month(usize),
    /// Median monthly intensity over the likelihood months.
    WindowMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskRow {
    pub region_id: String,
    pub cx: f64,
    pub cy: f64,
    pub values: Vec<f64>,
    pub no_data: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskMap {
    pub levels: Vec<f64>,
    pub rows: Vec<RiskRow>,
}

impl RiskMap {
    /// CSV `region_id,cx,cy,q2.5,q50,q97.5,no_data`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut head = vec!["region_id".to_string(), "cx".into(), "cy".into()];
        head.extend(self.levels.iter().map(|&l| level_label(l)));
        head.push("no_data".into());
        w.write_record(&head)?;
        for row in &self.rows {
            let mut rec = vec![row.region_id.clone(), row.cx.to_string(), row.cy.to_string()];
            rec.extend(row.values.iter().map(|v| v.to_string()));
            rec.push(row.no_data.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-region percentiles across draws of the expected event count.
pub fn spatial_risk_map(
    draws: &[ModelParams],
    model: &HawkesModel,
    selection: MapSelection,
    levels: &[f64],
) -> Result<RiskMap> {
    if draws.is_empty() {
        return Err(Error::Domain("no posterior draws".into()));
    }
    let grid = model.grid();
    if let MapSelection::Month(t) = selection {
        if t >= grid.months() {
            return Err(Error::Domain(format!(
                "month index {t} outside the {}-month grid",
                grid.months()
            )));
        }
    }
    let per_draw: Vec<Vec<f64>> = draws
        .par_iter()
        .map(|p| {
            let lambda = model.intensity(p)?.lambda;
            Ok(match selection {
                MapSelection::Month(t) => lambda.row(t).to_vec(),
                MapSelection::WindowMedian => (0..grid.n_regions())
                    .map(|r| {
                        let col: Vec<f64> = (grid.warmup()..grid.months()).map(|t| lambda[[t, r]]).collect();
                        quantiles(&col, &[0.5])[0]
                    })
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let region_totals = grid.region_totals();
    let rows = grid
        .regions()
        .regions()
        .iter()
        .enumerate()
        .map(|(r, reg)| {
            let v: Vec<f64> = per_draw.iter().map(|d| d[r]).collect();
            RiskRow {
                region_id: reg.region_id.clone(),
                cx: reg.cx,
                cy: reg.cy,
                values: quantiles(&v, levels),
                no_data: region_totals[r] == 0,
            }
        })
        .collect();
    Ok(RiskMap { levels: levels.to_vec(), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    /// Lag in months for the temporal kernel, distance for the spatial one.
    pub x: f64,
    pub values: Vec<f64>,
}

/// Percentile bands of the temporal and spatial triggering kernels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCurves {
    pub levels: Vec<f64>,
    pub temporal: Vec<CurvePoint>,
    pub spatial: Vec<CurvePoint>,
}

impl KernelCurves {
    /// CSV `kernel,x,q2.5,q50,q97.5`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut head = vec!["kernel".to_string(), "x".into()];
        head.extend(self.levels.iter().map(|&l| level_label(l)));
        w.write_record(&head)?;
        for (name, pts) in [("temporal", &self.temporal), ("spatial", &self.spatial)] {
            for pt in pts {
                let mut rec = vec![name.to_string(), pt.x.to_string()];
                rec.extend(pt.values.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Kernel curves across draws: `g(s)` for `s = 1..=t_max` and `w(d)` at each
/// of `distances`.
pub fn posterior_kernel_curves(
    draws: &[ModelParams],
    distances: &[f64],
    squared_distance: bool,
    levels: &[f64],
) -> Result<KernelCurves> {
    let first = draws.first().ok_or_else(|| Error::Domain("no posterior draws".into()))?;
    let pmfs = draws.iter().map(|p| temporal_pmf(p.beta, p.t_max)).collect::<Result<Vec<_>>>()?;
    let temporal = (0..first.t_max)
        .map(|s| CurvePoint {
            x: (s + 1) as f64,
            values: quantiles(&pmfs.iter().map(|g| g[s]).collect::<Vec<_>>(), levels),
        })
        .collect();
    let spatial = distances
        .iter()
        .map(|&d| {
            let dd = if squared_distance { d * d } else { d };
            let ws: Vec<f64> = draws.iter().map(|p| (-dd / (2.0 * p.sigma * p.sigma)).exp()).collect();
            CurvePoint { x: d, values: quantiles(&ws, levels) }
        })
        .collect();
    Ok(KernelCurves { levels: levels.to_vec(), temporal, spatial })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Region;
    use crate::intensity::{intensity_from_counts, ModelSpec};
    use crate::kernel::Metric;
    use ndarray::array;

    fn regions(n: usize) -> RegionSet {
        RegionSet::new((0..n).map(|i| Region { region_id: format!("r{i}"), cx: 3.0 * i as f64, cy: 0.0 }).collect())
            .unwrap()
    }

    fn dist(n: usize) -> DistanceMatrix {
        DistanceMatrix::new(&regions(n), Metric::Euclidean, false)
    }

    fn ensemble_of(members: Vec<Array2<u32>>) -> PredictiveEnsemble {
        let n = members.len();
        PredictiveEnsemble {
            draws: members.into_iter().map(|counts| SimulatedGrid { counts, seed: 0 }).collect(),
            horizon: 1,
            n_samples: n,
            params: vec![],
            first_month_index: 10,
        }
    }

    #[test]
    fn kernel_curves_single_draw() {
        let p = ModelParams::new(0.5, 0.5, 0.5, 1.0, 3).unwrap();
        let c = posterior_kernel_curves(&[p], &[0.0, 2.0], false, &DEFAULT_LEVELS).unwrap();
        assert_eq!(c.temporal.len(), 3);
        assert!((c.temporal[0].values[1] - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(c.spatial[0].values, vec![1.0; 3]);
        assert!((c.spatial[1].values[1] - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_empty_history_is_silent() {
        let p = ModelParams { mu: 0.0, alpha: 0.8, beta: 0.5, sigma: 1.0, t_max: 3 };
        let empty = Array2::<u32>::zeros((0, 3));
        let sim = simulate_forward(&p, empty.view(), &dist(3).weights(1.0), 6, 1).unwrap();
        assert_eq!(sim.counts.dim(), (6, 3));
        assert!(sim.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn simulation_reproducible() {
        let p = ModelParams::new(0.5, 0.5, 0.4, 1.0, 3).unwrap();
        let w = dist(4).weights(1.0);
        let hist = Array2::<u32>::ones((5, 4));
        let a = simulate_forward(&p, hist.view(), &w, 12, 77).unwrap();
        let b = simulate_forward(&p, hist.view(), &w, 12, 77).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.counts, simulate_forward(&p, hist.view(), &w, 12, 78).unwrap().counts);
    }

    #[test]
    fn first_month_mean_matches_exact_intensity() {
        let p = ModelParams::new(0.5, 0.8, 0.5, 1.0, 3).unwrap();
        let w = dist(1).weights(1.0);
        let hist = array![[3u32], [0], [2]];
        let mut with_next = Array2::<u32>::zeros((4, 1));
        with_next.slice_mut(ndarray::s![..3, ..]).assign(&hist);
        let exact = intensity_from_counts(&p, with_next.view(), &w).unwrap()[[3, 0]];
        let n = 10000;
        let sims: Vec<f64> = (0..n)
            .map(|s| simulate_forward(&p, hist.view(), &w, 1, s).unwrap().counts[[0, 0]] as f64)
            .collect();
        let m = crate::stats::mean(&sims);
        let se = (exact / n as f64).sqrt();
        assert!((m - exact).abs() < 3.0 * se, "mean {m} vs {exact}");
    }

    #[test]
    fn single_member_percentiles_collapse() {
        let e = ensemble_of(vec![array![[1u32, 4], [2, 0]]]);
        let s = aggregate_percentiles(&e, SummaryAxis::Space, &DEFAULT_LEVELS).unwrap();
        assert_eq!(s.rows[0].values, vec![3.0, 3.0, 3.0]);
        assert_eq!(s.rows[1].values, vec![4.0, 4.0, 4.0]);
        let t = aggregate_percentiles(&e, SummaryAxis::Time, &DEFAULT_LEVELS).unwrap();
        assert_eq!(t.rows[1].month_index, Some(11));
        assert_eq!(t.rows[1].values, vec![2.0, 2.0, 2.0]);
        let c = aggregate_percentiles(&e, SummaryAxis::Cell, &DEFAULT_LEVELS).unwrap();
        assert_eq!(c.rows.len(), 4);
    }

    #[test]
    fn two_member_median() {
        let e = ensemble_of(vec![array![[0u32]], array![[10u32]]]);
        let s = aggregate_percentiles(&e, SummaryAxis::Space, &DEFAULT_LEVELS).unwrap();
        assert_eq!(s.rows[0].values[1], 5.0);
    }

    #[test]
    fn percentile_csv_layout() {
        let e = ensemble_of(vec![array![[0u32, 1]], array![[10u32, 1]]]);
        let s = aggregate_percentiles(&e, SummaryAxis::Cell, &DEFAULT_LEVELS).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &regions(2), true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "axis,key,q2.5,q50,q97.5");
        assert_eq!(text.lines().nth(1).unwrap(), "cell,10:r0,0.25,5,9.75");
    }

    fn model_of(counts: Array2<u32>, warmup: usize) -> HawkesModel {
        let n = counts.ncols();
        let g = EventGrid::new(counts, YearMonth::new(2010, 1).unwrap(), warmup, regions(n)).unwrap();
        HawkesModel::new(g, ModelSpec::default()).unwrap()
    }

    #[test]
    fn intensity_band_degenerate_cases() {
        let model = model_of(array![[1u32, 0], [0, 2], [3, 1], [0, 0]], 1);
        let p = ModelParams::new(0.4, 0.6, 0.5, 1.0, 3).unwrap();
        let band = fitted_intensity_intervals(&[p], &model, &DEFAULT_LEVELS).unwrap();
        assert_eq!(band.rows.len(), 3);
        for row in &band.rows {
            assert_eq!(row.values[0], row.values[2]);
        }
        let flat: Vec<ModelParams> = (1..5).map(|i| ModelParams { alpha: 0.0, beta: 0.1 * i as f64, ..p }).collect();
        let band = fitted_intensity_intervals(&flat, &model, &DEFAULT_LEVELS).unwrap();
        for row in &band.rows {
            assert!(row.values.iter().all(|v| (v - 0.8).abs() < 1e-12));
        }
    }

    #[test]
    fn risk_map_shapes_and_flags() {
        let model = model_of(Array2::zeros((6, 3)), 3);
        let draws: Vec<ModelParams> =
            [0.2, 0.4, 0.6].iter().map(|&mu| ModelParams::new(mu, 0.5, 0.5, 1.0, 3).unwrap()).collect();
        let map = spatial_risk_map(&draws, &model, MapSelection::Month(5), &DEFAULT_LEVELS).unwrap();
        assert_eq!(map.rows.len(), 3);
        for row in &map.rows {
            assert!(row.no_data);
            assert!((row.values[1] - 0.4).abs() < 1e-12);
        }
        assert!(spatial_risk_map(&draws, &model, MapSelection::Month(6), &DEFAULT_LEVELS).is_err());

        let single = model_of(array![[2u32], [0], [1]], 0);
        let p = ModelParams::new(0.3, 0.5, 0.5, 1.0, 3).unwrap();
        let m = spatial_risk_map(&[p], &single, MapSelection::Month(2), &DEFAULT_LEVELS).unwrap();
        let lam = single.intensity(&p).unwrap().lambda[[2, 0]];
        assert_eq!(m.rows[0].values, vec![lam; 3]);
        assert!(!m.rows[0].no_data);
        let med = spatial_risk_map(&[p], &single, MapSelection::WindowMedian, &DEFAULT_LEVELS).unwrap();
        assert_eq!(med.rows.len(), 1);
    }
}
