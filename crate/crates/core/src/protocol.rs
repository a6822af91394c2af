//! The adaptive pilot loop (active RIS) and its passive baseline.
//!
//! Both modes share one loop: probe with the two wide beams, then repeatedly
//! estimate, steer toward the estimate, pick the closest unused codeword and
//! observe one more pilot through it, until the pilot budget is spent.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beamcontrol::{
    amplification_profile, closest_beam, compose_config, initial_configs, phase_align, uniform_profile,
    wide_beams, AmplificationProfile, BeamError, Codebook, CodebookUsage,
};
use crate::channel::{observe_pilot, ChannelError, NoiseModel};
use crate::estimator::{estimate_channel, noise_covariance, EstimateResult, EstimatorError, SearchGrid};
use crate::exec::Execution;
use crate::metrics::{nmse, spectral_efficiency, MetricError};
use crate::{CMatrix, CVector};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("pilot budget must be at least 2, got {0}")]
    Budget(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RisMode {
    Active,
    Passive,
}

impl RisMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RisMode::Active => "active",
            RisMode::Passive => "passive",
        }
    }
}

impl fmt::Display for RisMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RisMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "active" => Ok(RisMode::Active),
            "passive" => Ok(RisMode::Passive),
            _ => Err(format!("unknown mode {s:?} (expected active or passive)")),
        }
    }
}

/// How the amplifier output-power budget is applied to active configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainControl {
    /// Gains exactly as designed: probing beams at `√(P_RIS/N)` per element,
    /// shaped pilots from the estimate; data configurations are only scaled
    /// down if they would exceed the budget.
    Literal,
    /// The amplifiers run at their budget for the incident signal: every
    /// configuration keeps its designed shape and is rescaled to meet it.
    #[default]
    Budget,
}

impl FromStr for GainControl {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(GainControl::Literal),
            "budget" => Ok(GainControl::Budget),
            _ => Err(format!("unknown gain control {s:?} (expected literal or budget)")),
        }
    }
}

/// Transmit powers in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    /// RIS amplifier budget (0 for a passive surface).
    pub p_ris: f64,
    /// Per-symbol pilot power.
    pub p_p: f64,
    /// Per-symbol data power.
    pub p_d: f64,
}

impl PowerBudget {
    /// Splits `total` between RIS and BS. The BS share caps the pilot symbol
    /// power; data symbols sit `pilot_offset_db` below it.
    pub fn for_mode(mode: RisMode, total: f64, ris_fraction: f64, pilot_offset_db: f64) -> Self {
        let (p_ris, p_p) = match mode {
            RisMode::Active => (ris_fraction * total, (1.0 - ris_fraction) * total),
            RisMode::Passive => (0.0, total),
        };
        Self { p_ris, p_p, p_d: p_p / 10f64.powf(pilot_offset_db / 10.0) }
    }
}

/// Everything one trial needs: true channels, noise and powers.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub mode: RisMode,
    pub h: CVector,
    pub g: CVector,
    noise: NoiseModel,
    pub power: PowerBudget,
    pub gain_control: GainControl,
}

impl Scenario {
    /// A passive surface injects no amplification noise, so `σ_v²` is dropped.
    pub fn new(mode: RisMode, h: CVector, g: CVector, noise: NoiseModel, power: PowerBudget) -> Result<Self, ProtocolError> {
        if h.len() != g.len() || h.is_empty() {
            return Err(ProtocolError::Dimension(format!("h {} vs g {}", h.len(), g.len())));
        }
        let noise = match mode {
            RisMode::Active => noise,
            RisMode::Passive => noise.passive(),
        };
        Ok(Self { mode, h, g, noise, power, gain_control: GainControl::default() })
    }

    pub fn with_gain_control(mut self, gain_control: GainControl) -> Self {
        self.gain_control = gain_control;
        self
    }

    /// Noise actually in effect for this mode.
    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }
}

/// RIS configuration used for data transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub phi: CVector,
    /// Set when the estimate was unusable and the boresight fallback was used.
    pub fallback: bool,
}

/// Data-phase configuration derived from a channel estimate.
///
/// Active: shaped gains times conjugate phases; passive: conjugate phases at
/// unit magnitude. A zero estimate falls back to boresight.
pub fn configure_for_data(g_hat: &CVector, scenario: &Scenario) -> DataConfig {
    let h = &scenario.h;
    let n = h.len();
    let degenerate = g_hat.iter().all(|z| z.norm() == 0.0) || g_hat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite());
    let (phases, fallback) = if degenerate {
        (CVector::from_element(n, Complex64::new(1.0, 0.0)), true)
    } else {
        (phase_align(h, g_hat).0, false)
    };
    let phi = match scenario.mode {
        RisMode::Passive => phases,
        RisMode::Active => {
            let profile = if fallback {
                uniform_profile(n, scenario.power.p_ris)
            } else {
                active_profile(g_hat, scenario)
            };
            compose_config(&profile, &phases).expect("profile and phases share length")
        }
    };
    DataConfig { phi, fallback }
}

fn active_profile(g_hat: &CVector, scenario: &Scenario) -> AmplificationProfile {
    amplification_profile(g_hat, &scenario.h, scenario.power.p_d, scenario.power.p_ris, &scenario.noise)
        .unwrap_or_else(|_| uniform_profile(g_hat.len(), scenario.power.p_ris))
}

/// Amplifier budget `P_RIS σ_v²/σ²`, or `None` where it does not bind
/// (passive surface, or a noiseless link where the ratio is undefined).
fn amplifier_cap(scenario: &Scenario) -> Option<f64> {
    let noise = &scenario.noise;
    if scenario.mode == RisMode::Passive || noise.sigma2 == 0.0 || noise.sigma_v2 == 0.0 {
        return None;
    }
    Some(scenario.power.p_ris * noise.sigma_v2 / noise.sigma2)
}

/// Output power `Σ|φ_n|²(P|g_n|² + σ_v²)` drawn by the true incident signal.
fn amplifier_load(phi: &CVector, scenario: &Scenario, input_power: f64) -> f64 {
    let sv = scenario.noise.sigma_v2;
    phi.iter().zip(scenario.g.iter()).map(|(p, g)| p.norm_sqr() * (input_power * g.norm_sqr() + sv)).sum()
}

/// Rescales `phi` against the budget for an incident signal of `input_power`:
/// to equality when `fill`, otherwise only downward.
fn apply_budget(phi: &CVector, scenario: &Scenario, input_power: f64, fill: bool) -> CVector {
    let Some(cap) = amplifier_cap(scenario) else {
        return phi.clone();
    };
    let drawn = amplifier_load(phi, scenario, input_power);
    if drawn > cap || (fill && drawn > 0.0) {
        phi * Complex64::new((cap / drawn).sqrt(), 0.0)
    } else {
        phi.clone()
    }
}

/// Data configuration as radiated: under [`GainControl::Budget`] the
/// amplifiers meet `Σ|φ_n|²(P_d|g_n|² + σ_v²) = P_RIS σ_v²/σ²` for the true
/// incident signal; under [`GainControl::Literal`] they are only held below it.
///
/// The shaped profile built from the true channel meets the budget with
/// equality, so both rules leave the capacity configuration unchanged.
pub fn enforce_amplifier_budget(phi: &CVector, scenario: &Scenario) -> CVector {
    apply_budget(phi, scenario, scenario.power.p_d, scenario.gain_control == GainControl::Budget)
}

/// Initial probing configurations for the scenario's mode and gain control.
pub fn probing_configs(w1: &CVector, w2: &CVector, scenario: &Scenario) -> (CVector, CVector) {
    match (scenario.mode, scenario.gain_control, amplifier_cap(scenario)) {
        (RisMode::Passive, _, _) => (w1.clone(), w2.clone()),
        (RisMode::Active, GainControl::Budget, Some(_)) => {
            let fill = |w: &CVector| apply_budget(w, scenario, scenario.power.p_p, true);
            (fill(w1), fill(w2))
        }
        (RisMode::Active, _, _) => initial_configs(w1, w2, scenario.power.p_ris),
    }
}

/// A shaped pilot as radiated under the scenario's gain control.
pub fn shaped_pilot(phi: &CVector, scenario: &Scenario) -> CVector {
    match scenario.gain_control {
        GainControl::Budget => apply_budget(phi, scenario, scenario.power.p_p, true),
        GainControl::Literal => phi.clone(),
    }
}

/// Achieved data rate (bps/Hz) when configuring from `g_hat`.
pub fn achieved_rate(g_hat: &CVector, scenario: &Scenario) -> Result<(f64, bool), ProtocolError> {
    let cfg = configure_for_data(g_hat, scenario);
    let phi = enforce_amplifier_budget(&cfg.phi, scenario);
    let r = spectral_efficiency(&phi, &scenario.h, &scenario.g, scenario.power.p_d, &scenario.noise)?;
    Ok((r, cfg.fallback))
}

/// Rate with the same configuration rule applied to the true channel.
pub fn capacity_bound(scenario: &Scenario) -> Result<f64, ProtocolError> {
    Ok(achieved_rate(&scenario.g, scenario)?.0)
}

/// One estimation pass of the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// Pilots observed before this estimate.
    pub pilots: usize,
    /// Estimate in force after this round (the previous one if estimation failed).
    pub estimate: Option<EstimateResult>,
    pub nmse: f64,
    pub rate: f64,
    /// Estimation failed this round.
    pub failed: bool,
    /// Data configuration fell back to boresight.
    pub fallback: bool,
    /// Codeword chosen for the next pilot, if any.
    pub codeword: Option<usize>,
    /// Gains applied to that next pilot (active mode).
    pub profile: Option<AmplificationProfile>,
}

#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub rounds: Vec<RoundRecord>,
    /// Configurations used, one row per observed pilot.
    pub b_matrix: CMatrix,
    pub y: CVector,
    pub capacity: f64,
    pub failures: usize,
    /// The codebook ran out before the pilot budget.
    pub exhausted: bool,
}

impl ProtocolRun {
    pub fn final_estimate(&self) -> Option<&EstimateResult> {
        self.rounds.last().and_then(|r| r.estimate.as_ref())
    }
}

fn push_row(b: &mut Vec<CVector>, y: &mut Vec<Complex64>, phi: CVector, scenario: &Scenario, rng: &mut impl Rng) -> Result<(), ProtocolError> {
    let obs = observe_pilot(&phi, &scenario.h, &scenario.g, scenario.power.p_p, &scenario.noise, rng)?;
    b.push(phi);
    y.push(obs);
    Ok(())
}

fn stack(rows: &[CVector]) -> CMatrix {
    let n = rows[0].len();
    CMatrix::from_fn(rows.len(), n, |i, j| rows[i][j])
}

/// Runs the adaptive pilot loop with `budget` pilots: `budget` observations,
/// `budget − 1` estimates and up to `budget − 2` codeword selections.
pub fn run_protocol<R: Rng>(
    scenario: &Scenario,
    grid: &SearchGrid,
    codebook: &Codebook,
    budget: usize,
    exec: Execution,
    rng: &mut R,
) -> Result<ProtocolRun, ProtocolError> {
    if budget < 2 {
        return Err(ProtocolError::Budget(budget));
    }
    let geometry = codebook.geometry();
    if geometry.len() != scenario.h.len() || grid.geometry().len() != scenario.h.len() {
        return Err(ProtocolError::Dimension("geometry does not match channel length".into()));
    }
    let n = scenario.h.len();
    let (w1, w2) = wide_beams(geometry);
    let (phi1, phi2) = probing_configs(&w1, &w2, scenario);
    let mut rows = Vec::with_capacity(budget);
    let mut y = Vec::with_capacity(budget);
    push_row(&mut rows, &mut y, phi1, scenario, rng)?;
    push_row(&mut rows, &mut y, phi2.clone(), scenario, rng)?;

    let capacity = capacity_bound(scenario)?;
    let mut usage = CodebookUsage::new(codebook);
    let mut rounds: Vec<RoundRecord> = Vec::with_capacity(budget - 1);
    let mut current: Option<EstimateResult> = None;
    let mut last_phi = phi2;
    let mut failures = 0;
    let mut exhausted = false;

    loop {
        let pilots = rows.len();
        let b = stack(&rows);
        let yv = CVector::from_vec(y.clone());
        let attempt = noise_covariance(&b, &scenario.h, &scenario.noise)
            .and_then(|cov| estimate_channel(&yv, &cov, &b, &scenario.h, grid, scenario.power.p_p, exec));
        let failed = match attempt {
            Ok(est) => {
                current = Some(est);
                false
            }
            Err(EstimatorError::Dimension(msg)) => return Err(ProtocolError::Dimension(msg)),
            Err(_) => {
                failures += 1;
                true
            }
        };
        let g_hat = current.as_ref().map_or_else(|| CVector::zeros(n), |e| e.g_hat.clone());
        let (rate, fallback) = achieved_rate(&g_hat, scenario)?;
        let mut record = RoundRecord {
            pilots,
            estimate: current.clone(),
            nmse: nmse(&g_hat, &scenario.g)?,
            rate,
            failed,
            fallback,
            codeword: None,
            profile: None,
        };

        if pilots >= budget {
            rounds.push(record);
            break;
        }
        let next = if failed {
            last_phi.clone()
        } else {
            let est = current.as_ref().expect("set on success");
            let (phases, _) = phase_align(&scenario.h, &est.g_hat);
            let profile = match scenario.mode {
                RisMode::Active => Some(active_profile(&est.g_hat, scenario)),
                RisMode::Passive => None,
            };
            let phi_star = match &profile {
                Some(p) => compose_config(p, &phases)?,
                None => phases,
            };
            match closest_beam(&phi_star, codebook, &mut usage) {
                Ok((k, entry)) => {
                    record.codeword = Some(k);
                    let phi = match &profile {
                        Some(p) => shaped_pilot(&compose_config(p, &entry.beam)?, scenario),
                        None => entry.beam.clone(),
                    };
                    record.profile = profile;
                    phi
                }
                Err(BeamError::Exhausted) => {
                    exhausted = true;
                    rounds.push(record);
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        };
        rounds.push(record);
        push_row(&mut rows, &mut y, next.clone(), scenario, rng)?;
        last_phi = next;
    }

    Ok(ProtocolRun { rounds, b_matrix: stack(&rows), y: CVector::from_vec(y), capacity, failures, exhausted })
}

/// Algorithm-1 loop for an active surface.
pub fn run_adaptive_estimation<R: Rng>(
    scenario: &Scenario,
    grid: &SearchGrid,
    codebook: &Codebook,
    budget: usize,
    exec: Execution,
    rng: &mut R,
) -> Result<ProtocolRun, ProtocolError> {
    if scenario.mode != RisMode::Active {
        return Err(ProtocolError::Dimension("active loop needs an active scenario".into()));
    }
    run_protocol(scenario, grid, codebook, budget, exec, rng)
}

/// Same loop for a passive surface: unit-magnitude configurations, no
/// amplification noise, whole budget at the BS.
pub fn run_passive_baseline<R: Rng>(
    scenario: &Scenario,
    grid: &SearchGrid,
    codebook: &Codebook,
    budget: usize,
    exec: Execution,
    rng: &mut R,
) -> Result<ProtocolRun, ProtocolError> {
    if scenario.mode != RisMode::Passive {
        return Err(ProtocolError::Dimension("passive baseline needs a passive scenario".into()));
    }
    run_protocol(scenario, grid, codebook, budget, exec, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamcontrol::build_codebook;
    use crate::channel::{make_bs_ris_channel, make_channel, sample_user, LosChannelParams, Regime};
    use crate::estimator::{noise_covariance, Refinement};
    use crate::geometry::{ArrayGeometry, Direction};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, model: Regime) -> (ArrayGeometry, Codebook, SearchGrid, CVector) {
        let geometry = ArrayGeometry::half_wavelength(n, n, 28e9).unwrap();
        let cb = build_codebook(&geometry, model, 3).unwrap();
        let grid = SearchGrid::from_codebook(&cb, Refinement::default()).unwrap();
        let h = make_bs_ris_channel(&geometry, 15.0, Direction::far(0.0, 0.0)).unwrap().h;
        (geometry, cb, grid, h)
    }

    fn default_noise() -> NoiseModel {
        let s = NoiseModel::thermal(1e6, 10.0);
        NoiseModel::new(s, s).unwrap()
    }

    fn scenario(mode: RisMode, h: &CVector, g: CVector, noise: NoiseModel) -> Scenario {
        Scenario::new(mode, h.clone(), g, noise, PowerBudget::for_mode(mode, 0.2, 0.25, 10.0)).unwrap()
    }

    #[test]
    fn power_budget_split() {
        let a = PowerBudget::for_mode(RisMode::Active, 0.2, 0.25, 10.0);
        assert_abs_diff_eq!(a.p_ris, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(a.p_p, 0.15, epsilon = 1e-15);
        assert_abs_diff_eq!(a.p_d, 0.015, epsilon = 1e-15);
        let p = PowerBudget::for_mode(RisMode::Passive, 0.2, 0.25, 10.0);
        assert_eq!(p.p_ris, 0.0);
        assert_abs_diff_eq!(p.p_p, 0.2, epsilon = 1e-15);
        assert_eq!("passive".parse::<RisMode>().unwrap(), RisMode::Passive);
        assert!("both".parse::<RisMode>().is_err());
    }

    #[test]
    fn budget_of_two_runs_one_estimate_and_no_selection() {
        let (g, cb, grid, h) = setup(8, Regime::Far);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let user = sample_user(&g, Regime::Far, &mut rng);
        let ch = make_channel(&g, &user).unwrap().g;
        let run = run_protocol(&scenario(RisMode::Active, &h, ch, default_noise()), &grid, &cb, 2, Execution::Sequential, &mut rng).unwrap();
        assert_eq!(run.rounds.len(), 1);
        assert_eq!(run.b_matrix.nrows(), 2);
        assert!(run.rounds[0].codeword.is_none());
        assert!(run_protocol(&scenario(RisMode::Active, &h, CVector::zeros(64), default_noise()), &grid, &cb, 1, Execution::Sequential, &mut rng).is_err());
    }

    #[test]
    fn noiseless_on_grid_user_is_recovered_with_three_pilots() {
        for model in [Regime::Far, Regime::Near] {
            let (geometry, cb, grid, h) = setup(8, model);
            let noiseless = NoiseModel::new(0.0, 0.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            for k in (0..cb.len()).step_by(7) {
                let params = LosChannelParams::new(1e-6, rng.random_range(0.0..6.0), cb.entries()[k].direction).unwrap();
                let g = make_channel(&geometry, &params).unwrap().g;
                for mode in [RisMode::Active, RisMode::Passive] {
                    let sc = scenario(mode, &h, g.clone(), noiseless);
                    let run = run_protocol(&sc, &grid, &cb, 3, Execution::Sequential, &mut rng).unwrap();
                    let last = run.rounds.last().unwrap();
                    assert!(last.nmse < 1e-8, "{model} {mode} entry {k}: nmse {}", last.nmse);
                }
            }
        }
    }

    #[test]
    fn passive_rows_are_unit_modulus_and_f_is_white() {
        let (g, cb, grid, h) = setup(8, Regime::Far);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let user = sample_user(&g, Regime::Far, &mut rng);
        let ch = make_channel(&g, &user).unwrap().g;
        let sc = scenario(RisMode::Passive, &h, ch, default_noise());
        let run = run_passive_baseline(&sc, &grid, &cb, 6, Execution::Sequential, &mut rng).unwrap();
        assert!(run.b_matrix.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        assert_eq!(sc.noise().sigma_v2, 0.0);
        for l in 2..=run.b_matrix.nrows() {
            let b = run.b_matrix.rows(0, l).into_owned();
            let f = noise_covariance(&b, &h, sc.noise()).unwrap();
            let want = CMatrix::identity(l, l) * Complex64::new(sc.noise().sigma2, 0.0);
            assert!((f.matrix() - want).norm() < 1e-30);
        }
        assert!(run_adaptive_estimation(&sc, &grid, &cb, 3, Execution::Sequential, &mut rng).is_err());
    }

    #[test]
    fn codewords_are_unique_and_rows_match_budget() {
        let (g, cb, grid, h) = setup(4, Regime::Far);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let user = sample_user(&g, Regime::Far, &mut rng);
        let ch = make_channel(&g, &user).unwrap().g;
        let sc = scenario(RisMode::Active, &h, ch, default_noise());
        let big = cb.len() + 10;
        let run = run_protocol(&sc, &grid, &cb, big, Execution::Sequential, &mut rng).unwrap();
        assert!(run.exhausted);
        assert_eq!(run.b_matrix.nrows(), (2 + cb.len()).min(big));
        let mut picked: Vec<usize> = run.rounds.iter().filter_map(|r| r.codeword).collect();
        let total = picked.len();
        picked.sort();
        picked.dedup();
        assert_eq!(picked.len(), total);
        assert_eq!(total, cb.len());
    }

    #[test]
    fn stored_profiles_satisfy_normalization() {
        let (g, cb, grid, h) = setup(8, Regime::Far);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let user = sample_user(&g, Regime::Far, &mut rng);
        let ch = make_channel(&g, &user).unwrap().g;
        let sc = scenario(RisMode::Active, &h, ch, default_noise());
        let run = run_protocol(&sc, &grid, &cb, 6, Execution::Sequential, &mut rng).unwrap();
        let noise = sc.noise();
        for r in &run.rounds {
            let (Some(p), Some(est)) = (&r.profile, &r.estimate) else { continue };
            // p_n (β_n + γ_n) / α_n = C for every element
            for (i, pn) in p.p.iter().enumerate() {
                let alpha = est.g_hat[i].norm() * h[i].norm();
                let gamma = (est.g_hat[i].norm_sqr() * sc.power.p_d / noise.sigma_v2 + 1.0) * noise.sigma2 / sc.power.p_ris;
                assert_abs_diff_eq!(pn * (h[i].norm_sqr() + gamma) / alpha / p.c, 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn replay_is_bit_identical_and_execution_independent() {
        let (g, cb, grid, h) = setup(8, Regime::Near);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let user = sample_user(&g, Regime::Near, &mut rng);
        let ch = make_channel(&g, &user).unwrap().g;
        let sc = scenario(RisMode::Active, &h, ch, default_noise());
        let a = run_protocol(&sc, &grid, &cb, 5, Execution::Sequential, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = run_protocol(&sc, &grid, &cb, 5, Execution::Parallel, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.rounds, b.rounds);
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn perfect_estimate_reaches_capacity_and_passive_is_unit_magnitude() {
        let (g, _, _, h) = setup(8, Regime::Far);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let user = sample_user(&g, Regime::Near, &mut rng);
        let ch = make_channel(&g, &user).unwrap().g;
        for mode in [RisMode::Active, RisMode::Passive] {
            let sc = scenario(mode, &h, ch.clone(), default_noise());
            let cap = capacity_bound(&sc).unwrap();
            let (r, fb) = achieved_rate(&ch, &sc).unwrap();
            assert!(!fb);
            assert_eq!(r, cap);
            let rotated = &ch * Complex64::from_polar(1.0, 1.3);
            assert_abs_diff_eq!(achieved_rate(&rotated, &sc).unwrap().0, cap, epsilon = 1e-9 * cap);
            let sc_rot = scenario(mode, &h, rotated, default_noise());
            assert_abs_diff_eq!(capacity_bound(&sc_rot).unwrap(), cap, epsilon = 1e-9 * cap);
        }
        let sc = scenario(RisMode::Passive, &h, ch.clone(), default_noise());
        let cfg = configure_for_data(&(&ch * Complex64::new(0.3, 0.2)), &sc);
        assert!(cfg.phi.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        let fb = configure_for_data(&CVector::zeros(ch.len()), &sc);
        assert!(fb.fallback);
    }

    #[test]
    fn mismatched_estimates_never_beat_capacity() {
        let (g, _, _, h) = setup(8, Regime::Far);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let user = sample_user(&g, Regime::Near, &mut rng);
            let ch = make_channel(&g, &user).unwrap().g;
            let guess = LosChannelParams::new(user.beta * rng.random_range(1e-4..1e2), rng.random_range(0.0..6.0), Direction::far(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).unwrap();
            let g_hat = make_channel(&g, &guess).unwrap().g;
            for mode in [RisMode::Active, RisMode::Passive] {
                let sc = scenario(mode, &h, ch.clone(), default_noise());
                let cap = capacity_bound(&sc).unwrap();
                assert!(achieved_rate(&g_hat, &sc).unwrap().0 <= cap + 1e-9);
            }
        }
    }
    #[test]
    fn gain_control_probing_and_pilot_scaling() {
        let (geometry, _, _, h) = setup(8, Regime::Far);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let user = sample_user(&geometry, Regime::Far, &mut rng);
        let g = make_channel(&geometry, &user).unwrap().g;
        let n = geometry.len();
        let w1 = CVector::from_fn(n, |i, _| Complex64::from_polar(1.0, 0.1 * i as f64));
        let w2 = CVector::from_fn(n, |i, _| Complex64::from_polar(1.0, -0.2 * i as f64));
        let budget = scenario(RisMode::Active, &h, g.clone(), default_noise());
        let cap = budget.power.p_ris * budget.noise.sigma_v2 / budget.noise.sigma2;
        let (p1, p2) = probing_configs(&w1, &w2, &budget);
        for p in [&p1, &p2] {
            assert_abs_diff_eq!(amplifier_load(p, &budget, budget.power.p_p) / cap, 1.0, epsilon = 1e-12);
        }
        let shaped = shaped_pilot(&(&w1 * Complex64::new(3.0, 0.0)), &budget);
        assert_abs_diff_eq!(amplifier_load(&shaped, &budget, budget.power.p_p) / cap, 1.0, epsilon = 1e-12);

        let literal = budget.clone().with_gain_control(GainControl::Literal);
        let (l1, _) = probing_configs(&w1, &w2, &literal);
        let amp = (literal.power.p_ris / n as f64).sqrt();
        assert!(l1.iter().all(|z| (z.norm() - amp).abs() < 1e-12));
        assert_eq!(shaped_pilot(&w1, &literal), w1);

        let passive = scenario(RisMode::Passive, &h, g, default_noise());
        assert_eq!(probing_configs(&w1, &w2, &passive), (w1.clone(), w2.clone()));
        assert_eq!(enforce_amplifier_budget(&w1, &passive), w1);
    }

    #[test]
    fn rate_stays_below_capacity_under_both_gain_rules() {
        let (geometry, cb, grid, h) = setup(8, Regime::Near);
        for gc in [GainControl::Budget, GainControl::Literal] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..4 {
                let user = sample_user(&geometry, Regime::Near, &mut rng);
                let g = make_channel(&geometry, &user).unwrap().g;
                let sc = scenario(RisMode::Active, &h, g, default_noise()).with_gain_control(gc);
                let run = run_protocol(&sc, &grid, &cb, 6, Execution::Sequential, &mut rng).unwrap();
                for r in &run.rounds {
                    assert!(r.rate <= run.capacity * (1.0 + 1e-9), "{gc:?}: {} > {}", r.rate, run.capacity);
                }
            }
        }
        assert_eq!("budget".parse::<GainControl>().unwrap(), GainControl::Budget);
        assert_eq!("literal".parse::<GainControl>().unwrap(), GainControl::Literal);
        assert!("auto".parse::<GainControl>().is_err());
    }

}
