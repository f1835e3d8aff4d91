use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sthawkes::earlywarn::{compare_methods, hawkes_flags, naive_flags};
use sthawkes::forecast::{
    aggregate_percentiles, ensemble_from_params, fitted_intensity_intervals, posterior_kernel_curves,
    posterior_predictive, simulate_event_grid, simulate_forward, spatial_risk_map, MapSelection, SummaryAxis,
    DEFAULT_LEVELS,
};
use sthawkes::mcmc::{summarize, DEFAULT_LEVELS as SUMMARY_LEVELS};
use sthawkes::mle::fit_poisson_baseline;
use sthawkes::{
    aggregate_counts, assign_regions, fit_mle, parse_events, sample_posterior, set_warmup, EventFilter, EventGrid,
    HawkesModel, ModelParams, RegionSet, YearMonth,
};

use crate::config::{Mode, RunConfig};
use crate::error::{CliError, Stage};
use crate::io::{self, FitKind};

/// Warnings to print on success.
pub type Outcome = Result<Vec<String>, CliError>;

fn required<'a>(path: &'a Option<PathBuf>, what: &str, flag: &str) -> Result<&'a Path, CliError> {
    let p = path.as_deref().ok_or_else(|| CliError::input(format!("no {what} given (use {flag})")))?;
    if !p.exists() {
        return Err(CliError::input(format!("{what} `{}` does not exist", p.display())));
    }
    Ok(p)
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' }).collect()
}

fn load_model(cfg: &RunConfig, spec: sthawkes::ModelSpec) -> Result<HawkesModel, CliError> {
    let grid = io::read_grid(required(&cfg.data.grid, "grid file", "--grid")?)?;
    HawkesModel::new(grid, spec).input()
}

pub fn ingest(cfg: &RunConfig) -> Outcome {
    let events_path = required(&cfg.data.events, "events file", "--events")?;
    let centroids_path = required(&cfg.data.centroids, "centroid file", "--centroids")?;
    let regions = RegionSet::read_csv(io::open(centroids_path)?)
        .map_err(|e| CliError::input(format!("`{}`: {e}", centroids_path.display())))?;
    let parsed = parse_events(io::open(events_path)?, &cfg.data.columns, cfg.data.row_policy)
        .map_err(|e| CliError::input(format!("`{}`: {e}", events_path.display())))?;
    let records = assign_regions(parsed.records, &regions).input()?;

    let months: Vec<YearMonth> = records.iter().map(|r| YearMonth::from_date(r.date)).collect();
    let start = cfg.window.start.or_else(|| months.iter().min().copied());
    let end = cfg.window.end.or_else(|| months.iter().max().copied());
    let (Some(start), Some(end)) = (start, end) else {
        return Err(CliError::input("no events and no --start/--end window"));
    };

    let opt_list = |v: &[String]| -> Vec<Option<String>> {
        if v.is_empty() {
            vec![None]
        } else {
            v.iter().cloned().map(Some).collect()
        }
    };
    let mut grids = Vec::new();
    for country in opt_list(&cfg.filters.countries) {
        for event_type in opt_list(&cfg.filters.event_types) {
            let filter = EventFilter { country: country.clone(), event_type: event_type.clone() };
            let grid = aggregate_counts(&records, &regions, start, end, &filter).input()?;
            let grid = set_warmup(grid, cfg.model.t_max).input()?;
            let mut name = String::from("grid");
            for part in [&country, &event_type].into_iter().flatten() {
                name.push_str("__");
                name.push_str(&slug(part));
            }
            let path = io::write_grid(&cfg.out, &name, &grid)?;
            grids.push(json!({
                "file": path.file_name().map(|f| f.to_string_lossy().into_owned()),
                "country": country,
                "event_type": event_type,
                "months": grid.months(),
                "total": grid.total(),
            }));
        }
    }
    let skipped: Vec<_> = parsed.skipped.iter().map(|s| json!({"line": s.line, "reason": s.reason})).collect();
    let body = json!({ "grids": grids, "events": records.len(), "skipped_rows": skipped });
    io::write_echoed_json(&cfg.out.join("ingest.json"), &body, cfg)?;
    Ok(if skipped.is_empty() { vec![] } else { vec![format!("skipped {} malformed rows", skipped.len())] })
}

fn write_intensity_band(path: &Path, model: &HawkesModel, draws: &[ModelParams]) -> Result<(), CliError> {
    let band = fitted_intensity_intervals(draws, model, &DEFAULT_LEVELS).model()?;
    let grid = model.grid();
    let observed = grid.month_totals();
    io::write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["month_index", "month", "observed", "q2.5", "q50", "q97.5"])?;
        for row in &band.rows {
            let t = row.month_index.expect("time axis");
            let mut rec = vec![t.to_string(), grid.month_of(t).to_string(), observed[t].to_string()];
            rec.extend(row.values.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    })
}

fn write_kernel_curves(path: &Path, model: &HawkesModel, draws: &[ModelParams]) -> Result<(), CliError> {
    let max_d = distance_span(model);
    let distances: Vec<f64> = (0..=50).map(|i| max_d * i as f64 / 50.0).collect();
    let curves =
        posterior_kernel_curves(draws, &distances, model.spec().squared_distance, &DEFAULT_LEVELS).model()?;
    io::write_atomic(path, |w| curves.write_csv(w))
}

/// Largest centroid separation, or 1 for a single region.
fn distance_span(model: &HawkesModel) -> f64 {
    let regions = model.grid().regions();
    let metric = model.spec().metric;
    let c = regions.centroids();
    let mut max_d: f64 = 0.0;
    for a in &c {
        for b in &c {
            max_d = max_d.max(sthawkes::kernel::spatial_distance(*a, *b, metric));
        }
    }
    if max_d > 0.0 {
        max_d
    } else {
        1.0
    }
}

pub fn fit(cfg: &RunConfig) -> Outcome {
    let model = load_model(cfg, cfg.model)?;
    let inf = &cfg.inference;
    let mut warnings = Vec::new();
    match inf.mode {
        Mode::Mle => {
            let fit = fit_mle(&model, &inf.optim);
            let (baseline_mu, baseline) = fit_poisson_baseline(&model);
            if !fit.hessian_ok {
                warnings.push("Hessian is not positive definite at the optimum; standard errors unavailable".into());
            }
            let failed = !fit.converged;
            if failed {
                warnings.push("optimizer did not converge".into());
            }
            let body = json!({
                "fit": fit,
                "baseline": { "mu": baseline_mu, "loglik": baseline.loglik, "k": baseline.k, "bic": baseline.bic },
                "delta_bic": fit.stats.bic - baseline.bic,
                "warning": (!warnings.is_empty()).then(|| warnings.join("; ")),
            });
            io::write_echoed_json(&cfg.out.join(io::MLE_FILE), &body, cfg)?;
            write_intensity_band(&cfg.out.join("intensity_band.csv"), &model, &[fit.params])?;
            write_kernel_curves(&cfg.out.join("kernel_curves.csv"), &model, &[fit.params])?;
            if failed && !inf.allow_nonconverged {
                return Err(CliError::model("maximum-likelihood fit did not converge (see mle_fit.json)"));
            }
        }
        Mode::Bayes => {
            inf.mcmc.validate(inf.allow_nonconverged).input()?;
            let chains = sample_posterior(&model, &inf.mcmc).model()?;
            let max_rhat = chains.max_rhat();
            let limit = inf.rhat_limit();
            let failed = max_rhat.is_nan() || max_rhat > limit;
            if failed {
                warnings.push(format!("max R-hat {max_rhat:.4} exceeds {limit}"));
            }
            if inf.mcmc.draws < 100 || inf.mcmc.chains < 2 {
                warnings.push("run is below the 100-draw / 2-chain minimum".into());
            }
            io::write_atomic(&cfg.out.join(io::CHAINS_FILE), |w| chains.write_csv(w))?;
            #[derive(Serialize)]
            struct Diagnostics {
                #[serde(flatten)]
                diagnostics: sthawkes::mcmc::McmcDiagnostics,
                max_rhat: f64,
                converged: bool,
                warning: Option<String>,
            }
            let diag = Diagnostics {
                diagnostics: chains.diagnostics(),
                max_rhat,
                converged: !failed,
                warning: (!warnings.is_empty()).then(|| warnings.join("; ")),
            };
            io::write_echoed_json(&cfg.out.join(io::DIAGNOSTICS_FILE), &diag, cfg)?;
            let summary = summarize(&chains, &SUMMARY_LEVELS);
            io::write_echoed_json(&cfg.out.join(io::SUMMARY_FILE), &summary, cfg)?;
            let pooled = chains.pooled();
            write_intensity_band(&cfg.out.join("intensity_band.csv"), &model, &pooled)?;
            write_kernel_curves(&cfg.out.join("kernel_curves.csv"), &model, &pooled)?;
            if failed && !inf.allow_nonconverged {
                return Err(CliError::model(format!(
                    "chains did not converge: max R-hat {max_rhat:.4} > {limit} (rerun with more draws or --allow-nonconverged)"
                )));
            }
        }
    }
    Ok(warnings)
}

pub fn predict(cfg: &RunConfig) -> Outcome {
    let artifact = io::load_fit(&cfg.fit_dir())?;
    let model = load_model(cfg, artifact.spec)?;
    let horizon = cfg.tasks.horizon;
    if horizon == 0 {
        return Err(CliError::input("horizon must be at least 1"));
    }
    let mut warnings = Vec::new();
    let ensemble = match &artifact.kind {
        FitKind::Bayes(chains) => {
            posterior_predictive(chains, model.grid(), model.distances(), horizon, cfg.tasks.samples, cfg.seed).input()?
        }
        FitKind::Mle(fit) => {
            warnings.push("MLE fit: single-member point prediction; predictive intervals need --mode bayes".into());
            ensemble_from_params(&[fit.params], model.grid(), model.distances(), horizon, cfg.seed).model()?
        }
    };
    let regions = model.grid().regions();
    io::write_atomic(&cfg.out.join("ensemble.csv"), |w| ensemble.write_csv(w, regions))?;
    let mut files = vec!["ensemble.csv".to_string()];
    for axis in [SummaryAxis::Space, SummaryAxis::Time, SummaryAxis::Cell] {
        let summary = aggregate_percentiles(&ensemble, axis, &DEFAULT_LEVELS).model()?;
        let name = format!("predict_{}.csv", axis.as_str());
        io::write_atomic(&cfg.out.join(&name), |w| summary.write_csv(w, regions, true))?;
        files.push(name);
    }
    let grid = model.grid();
    let body = json!({
        "files": files,
        "members": ensemble.n_samples,
        "horizon": horizon,
        "first_month_index": ensemble.first_month_index,
        "first_month": grid.month_of(grid.months() - 1).offset(1).to_string(),
        "warning": (!warnings.is_empty()).then(|| warnings.join("; ")),
    });
    io::write_echoed_json(&cfg.out.join("predict.json"), &body, cfg)?;
    Ok(warnings)
}

pub fn flags(cfg: &RunConfig) -> Outcome {
    let artifact = io::load_fit(&cfg.fit_dir())?;
    let model = load_model(cfg, artifact.spec)?;
    let hcfg = &cfg.tasks.hawkes_flags;
    let draws = artifact.draws(hcfg.n_draws, cfg.seed)?;
    let hawkes = hawkes_flags(&draws, &model, hcfg).input()?;
    let naive = naive_flags(model.grid(), &cfg.tasks.naive_flags).input()?;
    let comparison = compare_methods(&hawkes, &naive).model()?;
    io::write_atomic(&cfg.out.join("flags_hawkes.csv"), |w| hawkes.write_csv(w))?;
    io::write_atomic(&cfg.out.join("flags_naive.csv"), |w| naive.write_csv(w))?;
    io::write_atomic(&cfg.out.join("flags_comparison.csv"), |w| comparison.write_csv(w))?;
    let mut warnings = Vec::new();
    if !artifact.is_bayes() {
        warnings.push("MLE fit: Hawkes thresholds use the point estimate only".into());
    }
    let body = json!({
        "totals": comparison.totals,
        "hawkes_flagged_months": hawkes.flagged_months(),
        "naive_flagged_months": naive.flagged_months(),
        "draws_used": draws.len(),
        "warning": (!warnings.is_empty()).then(|| warnings.join("; ")),
    });
    io::write_echoed_json(&cfg.out.join("flags_comparison.json"), &body, cfg)?;
    Ok(warnings)
}

pub fn map(cfg: &RunConfig) -> Outcome {
    let artifact = io::load_fit(&cfg.fit_dir())?;
    let model = load_model(cfg, artifact.spec)?;
    let grid = model.grid();
    let selection = match (cfg.tasks.map.month, cfg.tasks.map.month_index) {
        (Some(m), _) => MapSelection::Month(grid.row_of(m).ok_or_else(|| {
            CliError::input(format!("month {m} is outside the grid window {}..{}", grid.start_month(), grid.end_month()))
        })?),
        (None, Some(i)) => {
            if i >= grid.months() {
                return Err(CliError::input(format!("month index {i} is outside the {}-month grid", grid.months())));
            }
            MapSelection::Month(i)
        }
        (None, None) => MapSelection::WindowMedian,
    };
    let draws = artifact.all_draws();
    let risk = spatial_risk_map(&draws, &model, selection, &DEFAULT_LEVELS).input()?;
    io::write_atomic(&cfg.out.join("risk_map.csv"), |w| risk.write_csv(w))?;
    let selected = match selection {
        MapSelection::Month(t) => json!({ "month_index": t, "month": grid.month_of(t).to_string() }),
        MapSelection::WindowMedian => json!("window-median"),
    };
    let body = json!({
        "selection": selected,
        "regions": risk.rows.len(),
        "no_data_regions": risk.rows.iter().filter(|r| r.no_data).count(),
    });
    io::write_echoed_json(&cfg.out.join("map.json"), &body, cfg)?;
    Ok(vec![])
}

pub fn simulate(cfg: &RunConfig) -> Outcome {
    let s = &cfg.simulate;
    let params = ModelParams::new(s.mu, s.alpha, s.beta, s.sigma, cfg.model.t_max).input()?;
    let history: Option<EventGrid> = match &cfg.data.grid {
        Some(p) => Some(io::read_grid(p)?),
        None => None,
    };
    let regions = match (&history, &cfg.data.centroids) {
        (Some(h), _) => h.regions().clone(),
        (None, Some(path)) => {
            RegionSet::read_csv(io::open(path)?).map_err(|e| CliError::input(format!("`{}`: {e}", path.display())))?
        }
        (None, None) => RegionSet::lattice(s.lattice[0], s.lattice[1], s.spacing),
    };
    let dist = sthawkes::DistanceMatrix::new(&regions, cfg.model.metric, cfg.model.squared_distance);
    let grid = match history {
        Some(h) => {
            let sim = simulate_forward(&params, h.counts(), &dist.weights(params.sigma), s.months, cfg.seed).model()?;
            let start = h.end_month().offset(1);
            EventGrid::new(sim.counts, start, s.warmup.unwrap_or(0), regions).input()?
        }
        None => {
            let warmup = s.warmup.unwrap_or(cfg.model.t_max);
            if warmup >= s.months {
                return Err(CliError::input(format!("warm-up {warmup} must be below the {} simulated months", s.months)));
            }
            simulate_event_grid(&params, &dist, regions.clone(), s.months, warmup, s.burn_in, s.start, cfg.seed)
                .model()?
        }
    };
    let path = io::write_grid(&cfg.out, &s.name, &grid)?;
    if cfg.data.centroids.is_none() {
        io::write_atomic(&cfg.out.join(format!("{}_centroids.csv", s.name)), |w| write_centroids(w, grid.regions()))?;
    }
    let body = json!({
        "grid": path.file_name().map(|f| f.to_string_lossy().into_owned()),
        "params": params,
        "months": grid.months(),
        "total": grid.total(),
    });
    io::write_echoed_json(&cfg.out.join(format!("{}_simulate.json", s.name)), &body, cfg)?;
    Ok(vec![])
}

fn write_centroids(w: &mut dyn Write, regions: &RegionSet) -> sthawkes::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["region_id", "cx", "cy"])?;
    for r in regions.regions() {
        out.write_record([r.region_id.clone(), r.cx.to_string(), r.cy.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
