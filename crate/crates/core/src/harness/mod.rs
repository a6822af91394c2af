//! Monte Carlo driver: runs every (regime, mode, model, trial) cell and
//! collects per-pilot-budget metrics.

mod config;
mod results;

pub use config::{
    ArrayConfig, CodebookConfig, ConfigError, ExperimentConfig, FieldError, GridConfig, MetricsConfig, NmseTarget,
    NoiseConfig, PowerConfig,
};
pub use results::{
    aggregate, emit_results, model_mismatch_report, read_results_json, read_trials_csv, AggregateRow, EmitFormat, MismatchRow,
    ResultError, ResultTable, TrialRow,
};

use std::sync::atomic::{AtomicBool, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::beamcontrol::{build_codebook, BeamError, Codebook};
use crate::channel::{make_bs_ris_channel, make_channel, sample_user, Regime};
use crate::estimator::{EstimatorError, SearchGrid};
use crate::exec::Execution;
use crate::geometry::Direction;
use crate::metrics::{cascaded_nmse, overhead_factor};
use crate::protocol::{run_protocol, ProtocolError, ProtocolRun, RisMode, Scenario};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("trial {trial} ({regime}/{mode}/{model}): {source}")]
    Trial { trial: usize, regime: Regime, mode: RisMode, model: Regime, source: ProtocolError },
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `base` with a fixed, platform-independent mixer.
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(base), |acc, p| splitmix64(acc ^ splitmix64(*p)))
}

fn regime_tag(r: Regime) -> u64 {
    match r {
        Regime::Near => 1,
        Regime::Far => 2,
    }
}

fn mode_tag(m: RisMode) -> u64 {
    match m {
        RisMode::Active => 1,
        RisMode::Passive => 2,
    }
}

/// Seed of the user draw. It omits mode and model so every branch of a trial
/// sees the same user.
pub fn user_seed(base: u64, trial: usize, regime: Regime) -> u64 {
    mix_seed(base, &[trial as u64, regime_tag(regime)])
}

/// Seed of the observation-noise stream of one cell.
pub fn trial_seed(base: u64, trial: usize, regime: Regime, mode: RisMode, model: Regime) -> u64 {
    mix_seed(base, &[trial as u64, regime_tag(regime), mode_tag(mode), 16 + regime_tag(model)])
}

/// Codebook and search grid for one estimator model.
#[derive(Debug, Clone)]
pub struct ModelAssets {
    pub codebook: Codebook,
    pub grid: SearchGrid,
}

impl ModelAssets {
    pub fn build(config: &ExperimentConfig, model: Regime) -> Result<Self, HarnessError> {
        let codebook = build_codebook(&config.geometry(), model, config.codebook.near_rings)?;
        let grid = SearchGrid::from_codebook(&codebook, config.refinement())?;
        Ok(Self { codebook, grid })
    }
}

/// The scenario for one cell, built from the trial's shared user draw.
pub fn build_scenario(config: &ExperimentConfig, regime: Regime, mode: RisMode, trial: usize) -> Result<Scenario, ProtocolError> {
    let geometry = config.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(user_seed(config.seed, trial, regime));
    let user = sample_user(&geometry, regime, &mut rng);
    let g = make_channel(&geometry, &user)?.g;
    let h = make_bs_ris_channel(&geometry, config.bs_distance_m, Direction::far(0.0, 0.0))?.h;
    Ok(Scenario::new(mode, h, g, config.noise_model(), config.power_budget(mode))?.with_gain_control(config.power.gain_control))
}

/// Runs one cell with the largest pilot budget; returns the protocol trace.
pub fn run_cell(
    config: &ExperimentConfig,
    assets: &ModelAssets,
    regime: Regime,
    mode: RisMode,
    model: Regime,
    trial: usize,
    exec: Execution,
) -> Result<(Scenario, ProtocolRun), ProtocolError> {
    let scenario = build_scenario(config, regime, mode, trial)?;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(config.seed, trial, regime, mode, model));
    let run = run_protocol(&scenario, &assets.grid, &assets.codebook, config.max_budget(), exec, &mut rng)?;
    Ok((scenario, run))
}

fn rows_for_cell(
    config: &ExperimentConfig,
    regime: Regime,
    mode: RisMode,
    model: Regime,
    trial: usize,
    scenario: &Scenario,
    run: &ProtocolRun,
) -> Result<Vec<TrialRow>, ProtocolError> {
    let seed = trial_seed(config.seed, trial, regime, mode, model);
    let mut rows = Vec::with_capacity(config.pilot_budgets.len());
    for &l in &config.pilot_budgets {
        // a budget beyond an exhausted codebook reuses the last round
        let round = run.rounds.iter().rev().find(|r| r.pilots <= l).unwrap_or(&run.rounds[0]);
        let nmse = match config.metrics.nmse {
            NmseTarget::Channel => round.nmse,
            NmseTarget::Cascaded => {
                let g_hat = round.estimate.as_ref().map(|e| e.g_hat.clone()).unwrap_or_else(|| scenario.g.map(|_| num_complex::Complex64::new(0.0, 0.0)));
                cascaded_nmse(&g_hat, &scenario.g, &scenario.h)?
            }
        };
        rows.push(TrialRow {
            regime,
            mode,
            model,
            trial,
            seed,
            pilots: l,
            nmse,
            rate_bps_hz: round.rate * overhead_factor(l, config.metrics.coherence_symbols),
            capacity_bps_hz: run.capacity,
        });
    }
    Ok(rows)
}

/// Options that affect how, but never what, is computed.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a> {
    pub exec: Execution,
    /// Overrides `config.workers` when set.
    pub workers: Option<usize>,
    /// Checked before each cell; when set, remaining cells are skipped.
    pub interrupt: Option<&'a AtomicBool>,
}

/// Runs the full experiment. Output is independent of worker count; an
/// interrupted run returns the completed cells with `interrupted` set.
pub fn run_experiment(config: &ExperimentConfig, opts: RunOptions<'_>) -> Result<ResultTable, HarnessError> {
    config.validate()?;
    let mut assets = Vec::new();
    for &model in &config.models {
        assets.push((model, ModelAssets::build(config, model)?));
    }
    let mut jobs = Vec::new();
    for &regime in &config.regimes {
        for &mode in &config.modes {
            for (mi, &model) in config.models.iter().enumerate() {
                for trial in 0..config.trials {
                    jobs.push((regime, mode, model, mi, trial));
                }
            }
        }
    }
    let workers = opts.workers.unwrap_or(config.workers);
    let outcomes = opts.exec.install(workers, || {
        opts.exec.map(&jobs, |&(regime, mode, model, mi, trial)| {
            if opts.interrupt.is_some_and(|f| f.load(Ordering::Relaxed)) {
                return None;
            }
            let result = run_cell(config, &assets[mi].1, regime, mode, model, trial, Execution::Sequential)
                .and_then(|(sc, run)| {
                    let rows = rows_for_cell(config, regime, mode, model, trial, &sc, &run)?;
                    Ok((rows, run.failures))
                })
                .map_err(|source| HarnessError::Trial { trial, regime, mode, model, source });
            Some(result)
        })
    });
    let mut trials = Vec::with_capacity(jobs.len() * config.pilot_budgets.len());
    let mut failures = 0;
    let mut interrupted = false;
    for outcome in outcomes {
        match outcome {
            None => interrupted = true,
            Some(r) => {
                let (rows, f) = r?;
                trials.extend(rows);
                failures += f;
            }
        }
    }
    Ok(ResultTable::new(trials, failures, interrupted))
}
