//! Run-directory artifacts: CSV series, metadata and plot-ready extracts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{bail, Context, Result};
use deeptv::optimize::HistoryEntry;
use serde::Serialize;

use crate::config::RunConfig;

/// Writes a CSV with the given header; numbers are formatted with `{}`, which
/// round-trips and is stable across runs.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_history(path: &Path, history: &[HistoryEntry]) -> Result<()> {
    write_csv(
        path,
        &["iteration", "loss", "best_loss"],
        history.iter().map(|h| vec![h.iteration.to_string(), h.loss.to_string(), h.best_loss.to_string()]),
    )
}

/// Two-column `metric,value` table.
pub fn write_metrics(path: &Path, metrics: &[(&str, f64)]) -> Result<()> {
    write_csv(path, &["metric", "value"], metrics.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]))
}

/// Wall-clock samples of one training run: `(iteration, elapsed ms)`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timing {
    pub label: String,
    pub samples: Vec<(usize, f64)>,
}

#[derive(Serialize)]
struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    bias_correction: bool,
    projection: &'static str,
}

#[derive(Serialize)]
struct Metadata<'a> {
    task: &'static str,
    seed: u64,
    version: &'static str,
    git_revision: String,
    wall_time_s: f64,
    adam: Adam,
    config: &'a RunConfig,
    timing: &'a [Timing],
}

/// Writes `config.json` (loadable with `--config`) and `metadata.json`.
/// Wall-clock data lives only here so that every CSV is reproducible.
pub fn write_metadata(dir: &Path, cfg: &RunConfig, wall_time_s: f64, timing: &[Timing]) -> Result<()> {
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)? + "\n")?;
    let meta = Metadata {
        task: cfg.task.name(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION"),
        git_revision: git_revision(),
        wall_time_s,
        adam: Adam {
            beta1: cfg.train.beta1,
            beta2: cfg.train.beta2,
            eps: cfg.train.eps,
            bias_correction: true,
            projection: "clamp theta to [-c, c] after each step",
        },
        config: cfg,
        timing,
    };
    fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

fn git_revision() -> String {
    Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Table> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let header = r.headers()?.iter().map(String::from).collect();
        let rows = r.records().map(|rec| Ok(rec?.iter().map(String::from).collect())).collect::<Result<_>>()?;
        Ok(Table { header, rows })
    }

    fn select(&self, path: &Path, columns: &[&str]) -> Result<Vec<Vec<String>>> {
        let idx = columns
            .iter()
            .map(|c| {
                self.header.iter().position(|h| h == c).with_context(|| format!("{} has no column {c}", path.display()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.rows.iter().map(|row| idx.iter().map(|&i| row[i].clone()).collect()).collect())
    }
}

/// Extracts plot series from a finished run into `dir/plots`:
/// `energy_vs_c.csv` and `distance_vs_c.csv` from a sweep,
/// `rho_vs_updates.csv` and `true_error_vs_updates.csv` from an error track.
/// Fails without writing anything when the run has neither.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut series: Vec<(&str, Vec<&str>, Vec<Vec<String>>)> = Vec::new();
    let sweep = dir.join("sweep.csv");
    if sweep.is_file() {
        let t = Table::read(&sweep)?;
        series.push(("energy_vs_c.csv", vec!["c", "energy"], t.select(&sweep, &["c", "energy"])?));
        series.push(("distance_vs_c.csv", vec!["c", "distance"], t.select(&sweep, &["c", "distance"])?));
    }
    let track = dir.join("error_track.csv");
    if track.is_file() {
        let t = Table::read(&track)?;
        let rho = ["update", "rho1", "rho2", "rho"];
        series.push(("rho_vs_updates.csv", rho.to_vec(), t.select(&track, &rho)?));
        let err = ["update", "true_error"];
        series.push(("true_error_vs_updates.csv", err.to_vec(), t.select(&track, &err)?));
    }
    if series.is_empty() {
        bail!("{} contains no sweep.csv or error_track.csv", dir.display());
    }
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut written = Vec::new();
    for (name, header, rows) in series {
        let path = plots.join(name);
        write_csv(&path, &header, rows)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_directory_is_an_error_and_stays_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plots(dir.path()).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn missing_column_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        write_csv(&dir.path().join("sweep.csv"), &["c", "energy"], [vec!["0".into(), "1.75".into()]]).unwrap();
        assert!(emit_plots(dir.path()).is_err());
        assert!(!dir.path().join("plots").exists());
    }

    #[test]
    fn track_series_have_the_expected_schema() {
        let dir = tempfile::tempdir().unwrap();
        let rows = (0..3).map(|i| vec![i.to_string(), "0.1".into(), "0.5".into(), "0.6".into(), "0.05".into()]);
        write_csv(&dir.path().join("error_track.csv"), &["update", "rho1", "rho2", "rho", "true_error"], rows).unwrap();
        let files = emit_plots(dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let text = fs::read_to_string(&files[0]).unwrap();
        assert_eq!(text.lines().next().unwrap(), "update,rho1,rho2,rho");
        assert_eq!(text.lines().count(), 4);
    }
}
