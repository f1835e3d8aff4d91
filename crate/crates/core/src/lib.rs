//! Discrete-time spatiotemporal Hawkes processes on monthly region-aggregated
//! event-count grids: ingestion, likelihood, maximum-likelihood and MCMC
//! inference, forward simulation and early-warning flags.

pub mod earlywarn;
pub mod error;
pub mod forecast;
pub mod geo;
pub mod grid;
pub mod intensity;
pub mod kernel;
pub mod mcmc;
pub mod mle;
pub mod optim;
pub mod params;
pub mod stats;

pub use error::{Error, Result};
pub use geo::{assign_regions, parse_events, ColumnMap, EventRecord, Region, RegionSet, RowPolicy};
pub use grid::{aggregate_counts, set_warmup, EventFilter, EventGrid, GridSidecar, YearMonth};
pub use intensity::{FitStatistics, HawkesModel, IntensitySurface, ModelSpec, Priors};
pub use kernel::{DistanceMatrix, Metric, SpatialKernel, SpatialWeightMatrix};
pub use mcmc::{sample_posterior, McmcConfig, PosteriorChains};
pub use mle::{fit_mle, MleFit, OptimConfig};
pub use params::ModelParams;
