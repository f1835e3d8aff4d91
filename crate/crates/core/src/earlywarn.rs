//! Early-warning flags: Hawkes posterior quantile thresholds and the
//! rolling-average baseline.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::grid::EventGrid;
use crate::intensity::HawkesModel;
use crate::params::ModelParams;
use crate::stats::{mean, quantile, std_dev};

/// Past this mean the direct pmf recurrence risks underflow of `exp(-λ)`.
const RECURRENCE_LIMIT: f64 = 700.0;

/// Smallest `k` with `P(X ≤ k) ≥ q` for `X ~ Poisson(lambda)`.
pub fn poisson_quantile(lambda: f64, q: f64) -> u64 {
    assert!(lambda >= 0.0 && lambda.is_finite(), "lambda must be finite and non-negative");
    assert!(q > 0.0 && q < 1.0, "q must lie in (0, 1)");
    if lambda == 0.0 {
        return 0;
    }
    if lambda <= RECURRENCE_LIMIT {
        let mut pmf = (-lambda).exp();
        let mut cdf = pmf;
        let mut k = 0u64;
        while cdf < q {
            k += 1;
            pmf *= lambda / k as f64;
            cdf += pmf;
            if pmf == 0.0 && k as f64 > lambda {
                break;
            }
        }
        return k;
    }
    // P(X ≤ k) equals the regularised upper incomplete gamma Q(k + 1, λ)
    let cdf = |k: u64| gamma_ur(k as f64 + 1.0, lambda);
    let z = Normal::standard().inverse_cdf(q);
    let mut k = (lambda + z * lambda.sqrt()).floor().max(0.0) as u64;
    while cdf(k) < q {
        k += 1;
    }
    while k > 0 && cdf(k - 1) >= q {
        k -= 1;
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlagMethod {
    Hawkes,
    Naive,
}

impl FlagMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            FlagMethod::Hawkes => "hawkes",
            FlagMethod::Naive => "naive",
        }
    }
}

/// Which months feed the rolling statistic at month `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowAlignment {
    /// `t - window + 1 ..= t`
    Trailing,
    /// `t - window ..= t - 1`
    Historical,
}

/// Order of the draw median and the rolling mean for Hawkes thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RollOrder {
    MedianThenRoll,
    RollThenMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagRow {
    pub month_index: usize,
    pub observed: u64,
    pub center: Option<f64>,
    pub threshold: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagSeries {
    pub method: FlagMethod,
    pub rows: Vec<FlagRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl FlagSeries {
    fn from_parts(method: FlagMethod, observed: &[u64], center: Vec<Option<f64>>, threshold: Vec<Option<f64>>) -> Self {
        let rows = observed
            .iter()
            .enumerate()
            .map(|(t, &obs)| FlagRow {
                month_index: t,
                observed: obs,
                center: center[t],
                threshold: threshold[t],
                flagged: threshold[t].is_some_and(|th| obs as f64 > th),
            })
            .collect();
        FlagSeries { method, rows }
    }

    pub fn flagged_months(&self) -> Vec<usize> {
        self.rows.iter().filter(|r| r.flagged).map(|r| r.month_index).collect()
    }

    /// CSV `month_index,observed,center,threshold,flagged,method`; undefined
    /// values are left empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["month_index", "observed", "center", "threshold", "flagged", "method"])?;
        for r in &self.rows {
            w.write_record([
                r.month_index.to_string(),
                r.observed.to_string(),
                fmt_opt(r.center),
                fmt_opt(r.threshold),
                r.flagged.to_string(),
                self.method.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean of `series` over the window ending at `t`; `None` when no month of
/// the window is at or after `first`.
fn rolling_mean(series: &[f64], t: usize, first: usize, window: usize, align: WindowAlignment) -> Option<f64> {
    let end = match align {
        WindowAlignment::Trailing => t + 1,
        WindowAlignment::Historical => t,
    };
    let start = end.saturating_sub(window).max(first);
    (start < end).then(|| mean(&series[start..end]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HawkesFlagConfig {
    /// Posterior draws used for the quantile thresholds.
    pub n_draws: usize,
    pub window: usize,
    pub q: f64,
    pub alignment: WindowAlignment,
    pub order: RollOrder,
}

impl Default for HawkesFlagConfig {
    fn default() -> Self {
        Self {
            n_draws: 100,
            window: 12,
            q: 0.975,
            alignment: WindowAlignment::Trailing,
            order: RollOrder::MedianThenRoll,
        }
    }
}

/// Hawkes flags from per-draw monthly intensity totals (`draws x months`).
/// Months before `first` have no threshold and are never flagged.
pub fn hawkes_flags_from_totals(
    lambda_totals: &[Vec<f64>],
    observed: &[u64],
    first: usize,
    config: &HawkesFlagConfig,
) -> Result<FlagSeries> {
    if lambda_totals.is_empty() {
        return Err(Error::Domain("no posterior draws for hawkes flags".into()));
    }
    if config.window == 0 || !(config.q > 0.0 && config.q < 1.0) {
        return Err(Error::Config("window must be positive and q in (0, 1)".into()));
    }
    let months = observed.len();
    if lambda_totals.iter().any(|d| d.len() != months) {
        return Err(Error::Dimension("intensity totals and observed months differ".into()));
    }
    // per draw: (median, q) quantile series
    let levels: Vec<(Vec<f64>, Vec<f64>)> = lambda_totals
        .par_iter()
        .map(|d| {
            let mid = d.iter().map(|&l| poisson_quantile(l.max(0.0), 0.5) as f64).collect();
            let hi = d.iter().map(|&l| poisson_quantile(l.max(0.0), config.q) as f64).collect();
            (mid, hi)
        })
        .collect();
    let median_over_draws = |pick: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> f64| -> f64 {
        let v: Vec<f64> = levels.iter().map(pick).collect();
        quantile(&v, 0.5)
    };
    let roll = |s: &[f64], t: usize| rolling_mean(s, t, first, config.window, config.alignment);

    let (center, threshold): (Vec<Option<f64>>, Vec<Option<f64>>) = match config.order {
        RollOrder::MedianThenRoll => {
            let mid: Vec<f64> = (0..months).map(|t| median_over_draws(&|l| l.0[t])).collect();
            let hi: Vec<f64> = (0..months).map(|t| median_over_draws(&|l| l.1[t])).collect();
            (0..months).map(|t| (roll(&mid, t), roll(&hi, t))).unzip()
        }
        RollOrder::RollThenMedian => (0..months)
            .map(|t| {
                let per_draw = |pick: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| -> Option<f64> {
                    let v: Option<Vec<f64>> = levels.iter().map(|l| roll(pick(l), t)).collect();
                    v.map(|v| quantile(&v, 0.5))
                };
                (per_draw(|l| &l.0), per_draw(|l| &l.1))
            })
            .unzip(),
    };
    Ok(FlagSeries::from_parts(FlagMethod::Hawkes, observed, center, threshold))
}

/// Hawkes flags for the grid's monthly totals using the given posterior draws.
pub fn hawkes_flags(draws: &[ModelParams], model: &HawkesModel, config: &HawkesFlagConfig) -> Result<FlagSeries> {
    let totals = draws
        .par_iter()
        .map(|p| model.intensity(p).map(|s| s.month_totals()))
        .collect::<Result<Vec<_>>>()?;
    let grid = model.grid();
    hawkes_flags_from_totals(&totals, &grid.month_totals(), grid.warmup(), config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NaiveFlagConfig {
    pub window: usize,
    pub k_sd: f64,
    pub alignment: WindowAlignment,
}

impl Default for NaiveFlagConfig {
    fn default() -> Self {
        Self { window: 12, k_sd: 2.0, alignment: WindowAlignment::Historical }
    }
}

/// Rolling mean plus `k_sd` sample standard deviations. Only months with a
/// full window get a threshold.
pub fn naive_flags_from_totals(observed: &[u64], config: &NaiveFlagConfig) -> Result<FlagSeries> {
    if observed.len() < 2 {
        return Err(Error::Domain("naive flags need at least two months".into()));
    }
    if config.window < 2 {
        return Err(Error::Config("naive window must cover at least two months".into()));
    }
    let obs: Vec<f64> = observed.iter().map(|&c| c as f64).collect();
    let (center, threshold) = (0..obs.len())
        .map(|t| {
            let range = match config.alignment {
                WindowAlignment::Historical if t >= config.window => Some(t - config.window..t),
                WindowAlignment::Trailing if t + 1 >= config.window => Some(t + 1 - config.window..t + 1),
                _ => None,
            };
            match range {
                Some(r) => {
                    let c = mean(&obs[r.clone()]);
                    (Some(c), Some(c + config.k_sd * std_dev(&obs[r])))
                }
                None => (None, None),
            }
        })
        .unzip();
    Ok(FlagSeries::from_parts(FlagMethod::Naive, observed, center, threshold))
}

pub fn naive_flags(grid: &EventGrid, config: &NaiveFlagConfig) -> Result<FlagSeries> {
    naive_flags_from_totals(&grid.month_totals(), config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub month_index: usize,
    pub observed: u64,
    pub hawkes_threshold: Option<f64>,
    pub naive_threshold: Option<f64>,
    pub hawkes_flagged: bool,
    pub naive_flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonTotals {
    pub months: usize,
    pub hawkes: usize,
    pub naive: usize,
    pub both: usize,
    pub hawkes_only: usize,
    pub naive_only: usize,
    pub neither: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodComparison {
    pub rows: Vec<ComparisonRow>,
    pub totals: ComparisonTotals,
}

impl MethodComparison {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "month_index",
            "observed",
            "hawkes_threshold",
            "naive_threshold",
            "hawkes_flagged",
            "naive_flagged",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.month_index.to_string(),
                r.observed.to_string(),
                fmt_opt(r.hawkes_threshold),
                fmt_opt(r.naive_threshold),
                r.hawkes_flagged.to_string(),
                r.naive_flagged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn compare_methods(hawkes: &FlagSeries, naive: &FlagSeries) -> Result<MethodComparison> {
    let same_months = hawkes.rows.len() == naive.rows.len()
        && hawkes.rows.iter().zip(&naive.rows).all(|(a, b)| a.month_index == b.month_index);
    if !same_months {
        return Err(Error::Dimension("flag series cover different months".into()));
    }
    let rows: Vec<ComparisonRow> = hawkes
        .rows
        .iter()
        .zip(&naive.rows)
        .map(|(h, n)| ComparisonRow {
            month_index: h.month_index,
            observed: h.observed,
            hawkes_threshold: h.threshold,
            naive_threshold: n.threshold,
            hawkes_flagged: h.flagged,
            naive_flagged: n.flagged,
        })
        .collect();
    let count = |f: &dyn Fn(&ComparisonRow) -> bool| rows.iter().filter(|r| f(r)).count();
    let totals = ComparisonTotals {
        months: rows.len(),
        hawkes: count(&|r| r.hawkes_flagged),
        naive: count(&|r| r.naive_flagged),
        both: count(&|r| r.hawkes_flagged && r.naive_flagged),
        hawkes_only: count(&|r| r.hawkes_flagged && !r.naive_flagged),
        naive_only: count(&|r| !r.hawkes_flagged && r.naive_flagged),
        neither: count(&|r| !r.hawkes_flagged && !r.naive_flagged),
    };
    Ok(MethodComparison { rows, totals })
}
