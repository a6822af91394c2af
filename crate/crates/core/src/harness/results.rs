//! Result tables and their CSV/JSON files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ExperimentConfig;
use crate::channel::Regime;
use crate::protocol::RisMode;

/// One (cell, trial, pilot budget) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub regime: Regime,
    pub mode: RisMode,
    pub model: Regime,
    pub trial: usize,
    pub seed: u64,
    pub pilots: usize,
    pub nmse: f64,
    pub rate_bps_hz: f64,
    pub capacity_bps_hz: f64,
}

/// Mean and standard error over the trials of one (regime, mode, model, pilots) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub regime: Regime,
    pub mode: RisMode,
    pub model: Regime,
    pub pilots: usize,
    pub trials: usize,
    pub mean_nmse: f64,
    pub se_nmse: f64,
    pub mean_rate_bps_hz: f64,
    pub se_rate_bps_hz: f64,
    pub mean_capacity_bps_hz: f64,
}

/// Rate gap between the exact near-field model and the far-field approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchRow {
    pub regime: Regime,
    pub mode: RisMode,
    pub pilots: usize,
    pub rate_near_model_bps_hz: f64,
    pub rate_far_model_bps_hz: f64,
    pub gap_bps_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub trials: Vec<TrialRow>,
    pub aggregate: Vec<AggregateRow>,
    /// Estimation passes that failed and re-used the previous pilot.
    pub estimation_failures: usize,
    pub interrupted: bool,
}

impl ResultTable {
    /// Sorts rows into canonical order and derives the aggregates.
    pub fn new(mut trials: Vec<TrialRow>, estimation_failures: usize, interrupted: bool) -> Self {
        trials.sort_by(|a, b| {
            (a.regime, a.mode, a.model, a.trial, a.pilots).cmp(&(b.regime, b.mode, b.model, b.trial, b.pilots))
        });
        let aggregate = aggregate(&trials);
        Self { trials, aggregate, estimation_failures, interrupted }
    }

    pub fn cell(&self, regime: Regime, mode: RisMode, model: Regime) -> Vec<&AggregateRow> {
        self.aggregate.iter().filter(|a| a.regime == regime && a.mode == mode && a.model == model).collect()
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Arithmetic means per (regime, mode, model, pilots), in key order.
pub fn aggregate(trials: &[TrialRow]) -> Vec<AggregateRow> {
    type Key = (Regime, RisMode, Regime, usize);
    let mut cells: BTreeMap<Key, (Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for t in trials {
        let c = cells.entry((t.regime, t.mode, t.model, t.pilots)).or_default();
        c.0.push(t.nmse);
        c.1.push(t.rate_bps_hz);
        c.2.push(t.capacity_bps_hz);
    }
    cells
        .into_iter()
        .map(|((regime, mode, model, pilots), (n, r, c))| {
            let (mean_nmse, se_nmse) = mean_se(&n);
            let (mean_rate_bps_hz, se_rate_bps_hz) = mean_se(&r);
            AggregateRow {
                regime,
                mode,
                model,
                pilots,
                trials: n.len(),
                mean_nmse,
                se_nmse,
                mean_rate_bps_hz,
                se_rate_bps_hz,
                mean_capacity_bps_hz: mean_se(&c).0,
            }
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum ResultError {
    #[error("result table is empty")]
    Empty,
    #[error("cell {regime}/{mode} with {pilots} pilots lacks the {missing}-field model")]
    MissingModel { regime: Regime, mode: RisMode, pilots: usize, missing: Regime },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// `rate(near-field model) − rate(far-field model)` per (regime, mode, pilots).
pub fn model_mismatch_report(table: &ResultTable) -> Result<Vec<MismatchRow>, ResultError> {
    let mut by_key: BTreeMap<(Regime, RisMode, usize), [Option<f64>; 2]> = BTreeMap::new();
    for a in &table.aggregate {
        let slot = by_key.entry((a.regime, a.mode, a.pilots)).or_default();
        slot[usize::from(a.model == Regime::Far)] = Some(a.mean_rate_bps_hz);
    }
    by_key
        .into_iter()
        .map(|((regime, mode, pilots), [near, far])| {
            let missing = |m| ResultError::MissingModel { regime, mode, pilots, missing: m };
            let near = near.ok_or_else(|| missing(Regime::Near))?;
            let far = far.ok_or_else(|| missing(Regime::Far))?;
            Ok(MismatchRow {
                regime,
                mode,
                pilots,
                rate_near_model_bps_hz: near,
                rate_far_model_bps_hz: far,
                gap_bps_hz: near - far,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Json,
}

impl FromStr for EmitFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(EmitFormat::Csv),
            "json" => Ok(EmitFormat::Json),
            _ => Err(format!("unknown format {s:?} (expected csv or json)")),
        }
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ResultError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| ResultError::Io { path: path.display().to_string(), source })?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct JsonDocument {
    config: ExperimentConfig,
    estimation_failures: usize,
    interrupted: bool,
    trials: Vec<TrialRow>,
    aggregate: Vec<AggregateRow>,
    mismatch: Vec<MismatchRow>,
}

/// Writes per-trial, aggregate and (when both models ran) mismatch tables
/// into `dir`. Returns the files written.
pub fn emit_results(
    table: &ResultTable,
    config: &ExperimentConfig,
    dir: &Path,
    format: EmitFormat,
) -> Result<Vec<PathBuf>, ResultError> {
    if table.trials.is_empty() || table.aggregate.is_empty() {
        return Err(ResultError::Empty);
    }
    let io_err = |p: &Path| {
        let path = p.display().to_string();
        move |source| ResultError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mismatch = model_mismatch_report(table).unwrap_or_default();
    let mut written = Vec::new();
    match format {
        EmitFormat::Csv => {
            let trials = dir.join("trials.csv");
            write_csv(&trials, &table.trials)?;
            written.push(trials);
            let agg = dir.join("aggregate.csv");
            write_csv(&agg, &table.aggregate)?;
            written.push(agg);
            if !mismatch.is_empty() {
                let mm = dir.join("mismatch.csv");
                write_csv(&mm, &mismatch)?;
                written.push(mm);
            }
        }
        EmitFormat::Json => {
            let doc = JsonDocument {
                config: config.clone(),
                estimation_failures: table.estimation_failures,
                interrupted: table.interrupted,
                trials: table.trials.clone(),
                aggregate: table.aggregate.clone(),
                mismatch,
            };
            let path = dir.join("results.json");
            let text = serde_json::to_string_pretty(&doc)?;
            fs::write(&path, text + "\n").map_err(io_err(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Reads a `trials.csv` back.
pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialRow>, ResultError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().collect::<Result<Vec<TrialRow>, _>>().map_err(Into::into)
}

/// Reads a `results.json` back into its config and table.
pub fn read_results_json(path: &Path) -> Result<(ExperimentConfig, ResultTable), ResultError> {
    let text = fs::read_to_string(path).map_err(|source| ResultError::Io { path: path.display().to_string(), source })?;
    let doc: JsonDocument = serde_json::from_str(&text)?;
    Ok((
        doc.config,
        ResultTable {
            trials: doc.trials,
            aggregate: doc.aggregate,
            estimation_failures: doc.estimation_failures,
            interrupted: doc.interrupted,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mode: RisMode, model: Regime, trial: usize, pilots: usize, rate: f64) -> TrialRow {
        TrialRow {
            regime: Regime::Near,
            mode,
            model,
            trial,
            seed: 0xDEAD_BEEF_0000_0000 + trial as u64,
            pilots,
            nmse: 0.1 / (trial + 1) as f64,
            rate_bps_hz: rate,
            capacity_bps_hz: 12.345678901234567,
        }
    }

    fn table() -> ResultTable {
        let mut rows = Vec::new();
        for t in 0..3 {
            for model in [Regime::Far, Regime::Near] {
                for l in [2, 3] {
                    rows.push(row(RisMode::Active, model, t, l, 1.0 / 3.0 + t as f64 + l as f64));
                }
            }
        }
        ResultTable::new(rows, 0, false)
    }

    #[test]
    fn aggregate_is_the_trial_mean() {
        let t = table();
        assert_eq!(t.aggregate.len(), 4);
        for a in &t.aggregate {
            let xs: Vec<f64> = t
                .trials
                .iter()
                .filter(|r| r.model == a.model && r.pilots == a.pilots)
                .map(|r| r.rate_bps_hz)
                .collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            assert!((a.mean_rate_bps_hz - mean).abs() < 1e-12);
            assert_eq!(a.trials, 3);
            assert!((a.se_rate_bps_hz - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = table();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_results(&t, &ExperimentConfig::default(), dir.path(), EmitFormat::Csv).unwrap();
        assert_eq!(files.len(), 3);
        let back = read_trials_csv(&dir.path().join("trials.csv")).unwrap();
        assert_eq!(back, t.trials);
        let header = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
        assert_eq!(
            header.lines().next().unwrap(),
            "regime,mode,model,trial,seed,pilots,nmse,rate_bps_hz,capacity_bps_hz"
        );
    }

    #[test]
    fn json_round_trip_is_exact() {
        let t = table();
        let mut cfg = ExperimentConfig::default();
        cfg.trials = 3;
        let dir = tempfile::tempdir().unwrap();
        emit_results(&t, &cfg, dir.path(), EmitFormat::Json).unwrap();
        let (c, back) = read_results_json(&dir.path().join("results.json")).unwrap();
        assert_eq!(c, cfg);
        assert_eq!(back, t);
    }

    #[test]
    fn empty_table_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let empty = ResultTable::new(Vec::new(), 0, false);
        assert!(matches!(emit_results(&empty, &ExperimentConfig::default(), &out, EmitFormat::Csv), Err(ResultError::Empty)));
        assert!(!out.exists());
    }

    #[test]
    fn mismatch_gap() {
        let t = table();
        let mm = model_mismatch_report(&t).unwrap();
        assert_eq!(mm.len(), 2);
        assert!(mm.iter().all(|m| m.gap_bps_hz == 0.0));

        let mut rows = t.trials.clone();
        rows.retain(|r| r.model == Regime::Near);
        let only_near = ResultTable::new(rows, 0, false);
        assert!(matches!(model_mismatch_report(&only_near), Err(ResultError::MissingModel { .. })));
    }
}
