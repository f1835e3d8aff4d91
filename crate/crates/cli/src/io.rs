//! Atomic output files, grid files and fit artifacts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sthawkes::{EventGrid, GridSidecar, MleFit, ModelParams, ModelSpec, PosteriorChains};

use crate::config::RunConfig;
use crate::error::{CliError, Stage};

pub const MLE_FILE: &str = "mle_fit.json";
pub const CHAINS_FILE: &str = "chains.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create `{}`: {e}", dir.display())))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> sthawkes::Result<()>,
{
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let fail = |e: &dyn std::fmt::Display| CliError::input(format!("cannot write `{}`: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w).map_err(|e| fail(&e))?;
        w.flush().map_err(|e| fail(&e))?;
    }
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

/// JSON output with the resolved config and seed appended for provenance.
pub fn write_echoed_json<T: Serialize>(path: &Path, body: &T, config: &RunConfig) -> Result<(), CliError> {
    let mut value = serde_json::to_value(body).model()?;
    if let Value::Object(map) = &mut value {
        map.insert("config".into(), serde_json::to_value(config).model()?);
        map.insert("seed".into(), Value::from(config.seed));
    }
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, &value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(format!("cannot open `{}`: {e}", path.display())))
}

pub fn sidecar_path(grid_csv: &Path) -> PathBuf {
    grid_csv.with_extension("json")
}

/// Writes `<dir>/<name>.csv` and its JSON sidecar; returns the CSV path.
pub fn write_grid(dir: &Path, name: &str, grid: &EventGrid) -> Result<PathBuf, CliError> {
    let csv_path = dir.join(format!("{name}.csv"));
    write_atomic(&csv_path, |w| grid.write_csv(w))?;
    let sidecar = grid.sidecar();
    write_atomic(&sidecar_path(&csv_path), |w| {
        serde_json::to_writer_pretty(&mut *w, &sidecar)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    Ok(csv_path)
}

pub fn read_grid(path: &Path) -> Result<EventGrid, CliError> {
    let side = sidecar_path(path);
    let sidecar: GridSidecar = serde_json::from_reader(open(&side)?)
        .map_err(|e| CliError::input(format!("invalid grid sidecar `{}`: {e}", side.display())))?;
    EventGrid::read_csv(open(path)?, &sidecar).map_err(|e| CliError::input(format!("`{}`: {e}", path.display())))
}

pub enum FitKind {
    Mle(Box<MleFit>),
    Bayes(PosteriorChains),
}

pub struct FitArtifact {
    pub spec: ModelSpec,
    pub kind: FitKind,
}

impl FitArtifact {
    /// Up to `n` parameter vectors: strided posterior draws, or the MLE point.
    pub fn draws(&self, n: usize, seed: u64) -> Result<Vec<ModelParams>, CliError> {
        match &self.kind {
            FitKind::Mle(fit) => Ok(vec![fit.params]),
            FitKind::Bayes(chains) => chains.select_draws(n.min(chains.n_chains() * chains.n_draws()), seed).input(),
        }
    }

    pub fn all_draws(&self) -> Vec<ModelParams> {
        match &self.kind {
            FitKind::Mle(fit) => vec![fit.params],
            FitKind::Bayes(chains) => chains.pooled(),
        }
    }

    pub fn is_bayes(&self) -> bool {
        matches!(self.kind, FitKind::Bayes(_))
    }
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::input(format!("invalid JSON `{}`: {e}", path.display())))
}

fn echoed_spec(doc: &Value, path: &Path) -> Result<(ModelSpec, u64), CliError> {
    let bad = || CliError::input(format!("`{}` lacks the config echo", path.display()));
    let spec = serde_json::from_value(doc.pointer("/config/model").cloned().ok_or_else(bad)?).map_err(|_| bad())?;
    let seed = doc.get("seed").and_then(Value::as_u64).ok_or_else(bad)?;
    Ok((spec, seed))
}

/// Loads the chains (preferred) or the MLE fit found in `dir`.
pub fn load_fit(dir: &Path) -> Result<FitArtifact, CliError> {
    let chains_path = dir.join(CHAINS_FILE);
    if chains_path.exists() {
        let diag_path = dir.join(DIAGNOSTICS_FILE);
        let (spec, seed) = echoed_spec(&read_json(&diag_path)?, &diag_path)?;
        let chains = PosteriorChains::read_csv(open(&chains_path)?, spec.t_max, seed)
            .map_err(|e| CliError::input(format!("`{}`: {e}", chains_path.display())))?;
        return Ok(FitArtifact { spec, kind: FitKind::Bayes(chains) });
    }
    let mle_path = dir.join(MLE_FILE);
    if mle_path.exists() {
        let doc = read_json(&mle_path)?;
        let (spec, _) = echoed_spec(&doc, &mle_path)?;
        let fit: MleFit = serde_json::from_value(doc.get("fit").cloned().unwrap_or(Value::Null))
            .map_err(|e| CliError::input(format!("invalid fit in `{}`: {e}", mle_path.display())))?;
        return Ok(FitArtifact { spec, kind: FitKind::Mle(Box::new(fit)) });
    }
    Err(CliError::input(format!(
        "no fit artifact (`{CHAINS_FILE}` or `{MLE_FILE}`) in `{}`; run `fit` first",
        dir.display()
    )))
}
