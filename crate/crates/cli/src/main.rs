//! `sthawkes`: ingest event data, fit spatiotemporal Hawkes models, forecast
//! and flag unusual activity.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sthawkes::earlywarn::RollOrder;
use sthawkes::mcmc::Init;
use sthawkes::{Metric, YearMonth};

use crate::config::{Mode, RunConfig};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "sthawkes", version, about = "Discrete-time spatiotemporal Hawkes modelling of event counts")]
struct Cli {
    /// JSON run configuration; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (does not change results).
    #[arg(long, global = true, env = "STHAWKES_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Aggregate an event CSV into monthly region grids.
    Ingest(IngestArgs),
    /// Fit by maximum likelihood or MCMC.
    Fit(FitArgs),
    /// Posterior-predictive simulation past the end of the grid.
    Predict(PredictArgs),
    /// Hawkes-quantile and rolling-average early-warning flags.
    Flags(FlagsArgs),
    /// Per-region expected counts for one month or the window median.
    Map(MapArgs),
    /// Simulate a grid from given parameters.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long, value_parser = parse_metric)]
    metric: Option<Metric>,
    /// Use d² rather than d in the spatial kernel exponent.
    #[arg(long)]
    squared_distance: bool,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    centroids: Option<PathBuf>,
    /// Repeat for several countries; one grid per country and event type.
    #[arg(long = "country")]
    countries: Vec<String>,
    #[arg(long = "event-type")]
    event_types: Vec<String>,
    #[arg(long, value_parser = parse_month)]
    start: Option<YearMonth>,
    #[arg(long, value_parser = parse_month)]
    end: Option<YearMonth>,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    skip_bad_rows: bool,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug)]
struct GridArg {
    /// Grid CSV (its `.json` sidecar must sit alongside).
    #[arg(long)]
    grid: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    grid: GridArg,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// `mle` or `prior-draw`.
    #[arg(long, value_parser = parse_init)]
    init: Option<Init>,
    /// Keep exit status 0 when convergence checks fail, recording a warning.
    #[arg(long)]
    allow_nonconverged: bool,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug)]
struct FitDirArg {
    /// Directory with fit artifacts (defaults to the output directory).
    #[arg(long)]
    fit: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    grid: GridArg,
    #[command(flatten)]
    fit: FitDirArg,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug)]
struct FlagsArgs {
    #[command(flatten)]
    grid: GridArg,
    #[command(flatten)]
    fit: FitDirArg,
    /// Hawkes threshold quantile.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    naive_window: Option<usize>,
    #[arg(long)]
    k_sd: Option<f64>,
    /// Take rolling means per draw before the median across draws.
    #[arg(long)]
    roll_then_median: bool,
    /// Posterior draws used for thresholds.
    #[arg(long)]
    flag_draws: Option<usize>,
}

#[derive(Args, Debug)]
struct MapArgs {
    #[command(flatten)]
    grid: GridArg,
    #[command(flatten)]
    fit: FitDirArg,
    #[arg(long, value_parser = parse_month, conflicts_with = "month_index")]
    month: Option<YearMonth>,
    #[arg(long)]
    month_index: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    centroids: Option<PathBuf>,
    /// Continue from this grid instead of simulating from an empty history.
    #[command(flatten)]
    grid: GridArg,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    months: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long, value_parser = parse_month)]
    start: Option<YearMonth>,
    /// Centroid lattice `NXxNY` when no centroid file is given.
    #[arg(long, value_parser = parse_lattice)]
    lattice: Option<[usize; 2]>,
    #[arg(long)]
    spacing: Option<f64>,
    /// Output file stem.
    #[arg(long)]
    name: Option<String>,
    #[command(flatten)]
    model: ModelArgs,
}

fn parse_month(s: &str) -> Result<YearMonth, String> {
    s.parse().map_err(|e: sthawkes::Error| e.to_string())
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: sthawkes::Error| e.to_string())
}

fn parse_init(s: &str) -> Result<Init, String> {
    match s {
        "mle" => Ok(Init::Mle),
        "prior-draw" => Ok(Init::PriorDraw),
        other => Err(format!("unknown init `{other}` (expected mle or prior-draw)")),
    }
}

fn parse_lattice(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s.split_once('x').ok_or("expected NXxNY, e.g. 5x4")?;
    let nx = a.parse::<usize>().map_err(|e| e.to_string())?;
    let ny = b.parse::<usize>().map_err(|e| e.to_string())?;
    if nx == 0 || ny == 0 {
        return Err("lattice dimensions must be positive".into());
    }
    Ok([nx, ny])
}

fn apply_model(cfg: &mut RunConfig, m: &ModelArgs) {
    if let Some(t) = m.t_max {
        cfg.model.t_max = t;
    }
    if let Some(metric) = m.metric {
        cfg.model.metric = metric;
    }
    if m.squared_distance {
        cfg.model.squared_distance = true;
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.out, cli.out.clone());
    let grid_of = |g: &GridArg, cfg: &mut RunConfig| {
        if g.grid.is_some() {
            cfg.data.grid = g.grid.clone();
        }
    };
    match &cli.command {
        Command::Ingest(a) => {
            if a.events.is_some() {
                cfg.data.events = a.events.clone();
            }
            if a.centroids.is_some() {
                cfg.data.centroids = a.centroids.clone();
            }
            if !a.countries.is_empty() {
                cfg.filters.countries = a.countries.clone();
            }
            if !a.event_types.is_empty() {
                cfg.filters.event_types = a.event_types.clone();
            }
            if a.start.is_some() {
                cfg.window.start = a.start;
            }
            if a.end.is_some() {
                cfg.window.end = a.end;
            }
            if a.skip_bad_rows {
                cfg.data.row_policy = sthawkes::RowPolicy::Skip;
            }
            apply_model(&mut cfg, &a.model);
        }
        Command::Fit(a) => {
            grid_of(&a.grid, &mut cfg);
            set(&mut cfg.inference.mode, a.mode);
            let m = &mut cfg.inference.mcmc;
            set(&mut m.chains, a.chains);
            set(&mut m.draws, a.draws);
            set(&mut m.warmup_draws, a.warmup);
            set(&mut m.thin, a.thin);
            set(&mut m.init, a.init);
            if a.allow_nonconverged {
                cfg.inference.allow_nonconverged = true;
            }
            apply_model(&mut cfg, &a.model);
        }
        Command::Predict(a) => {
            grid_of(&a.grid, &mut cfg);
            if a.fit.fit.is_some() {
                cfg.data.fit = a.fit.fit.clone();
            }
            set(&mut cfg.tasks.horizon, a.horizon);
            set(&mut cfg.tasks.samples, a.samples);
        }
        Command::Flags(a) => {
            grid_of(&a.grid, &mut cfg);
            if a.fit.fit.is_some() {
                cfg.data.fit = a.fit.fit.clone();
            }
            let h = &mut cfg.tasks.hawkes_flags;
            set(&mut h.q, a.q);
            set(&mut h.window, a.window);
            set(&mut h.n_draws, a.flag_draws);
            if a.roll_then_median {
                h.order = RollOrder::RollThenMedian;
            }
            set(&mut cfg.tasks.naive_flags.window, a.naive_window);
            set(&mut cfg.tasks.naive_flags.k_sd, a.k_sd);
        }
        Command::Map(a) => {
            grid_of(&a.grid, &mut cfg);
            if a.fit.fit.is_some() {
                cfg.data.fit = a.fit.fit.clone();
            }
            if a.month.is_some() || a.month_index.is_some() {
                cfg.tasks.map.month = a.month;
                cfg.tasks.map.month_index = a.month_index;
            }
        }
        Command::Simulate(a) => {
            grid_of(&a.grid, &mut cfg);
            if a.centroids.is_some() {
                cfg.data.centroids = a.centroids.clone();
            }
            let s = &mut cfg.simulate;
            set(&mut s.mu, a.mu);
            set(&mut s.alpha, a.alpha);
            set(&mut s.beta, a.beta);
            set(&mut s.sigma, a.sigma);
            set(&mut s.months, a.months);
            set(&mut s.burn_in, a.burn_in);
            if a.warmup.is_some() {
                s.warmup = a.warmup;
            }
            set(&mut s.start, a.start);
            set(&mut s.lattice, a.lattice);
            set(&mut s.spacing, a.spacing);
            set(&mut s.name, a.name.clone());
            apply_model(&mut cfg, &a.model);
        }
    }
    cfg.inference.mcmc.seed = cfg.seed;
    if cfg.model.t_max == 0 {
        return Err(CliError::input("t_max must be at least 1"));
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::input(format!("cannot start {n} threads: {e}")))?;
    }
    let cfg = resolve(&cli)?;
    io::ensure_dir(&cfg.out)?;
    match cli.command {
        Command::Ingest(_) => commands::ingest(&cfg),
        Command::Fit(_) => commands::fit(&cfg),
        Command::Predict(_) => commands::predict(&cfg),
        Command::Flags(_) => commands::flags(&cfg),
        Command::Map(_) => commands::map(&cfg),
        Command::Simulate(_) => commands::simulate(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
