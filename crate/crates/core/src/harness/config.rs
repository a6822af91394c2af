//! Experiment configuration: TOML document, every field defaulted, unknown
//! keys rejected.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{NoiseModel, Regime};
use crate::estimator::Refinement;
use crate::geometry::{ArrayGeometry, SPEED_OF_LIGHT};
use crate::protocol::{GainControl, PowerBudget, RisMode};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<FieldError>),
}

impl ConfigError {
    /// Machine-readable form for the CLI's stderr.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            ConfigError::Io { path, source } => serde_json::json!({
                "error": "io", "path": path, "message": source.to_string(),
            }),
            ConfigError::Parse(msg) => serde_json::json!({ "error": "parse", "message": msg }),
            ConfigError::Invalid(errs) => serde_json::json!({ "error": "invalid", "fields": errs }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayConfig {
    pub n_h: usize,
    pub n_v: usize,
    /// Element spacing in wavelengths.
    pub spacing_h_wavelengths: f64,
    pub spacing_v_wavelengths: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self { n_h: 32, n_v: 32, spacing_h_wavelengths: 0.5, spacing_v_wavelengths: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerConfig {
    pub total_w: f64,
    /// Share of the total budget given to the RIS amplifiers in active mode.
    pub ris_fraction: f64,
    /// Pilot symbols are this many dB above data symbols.
    pub pilot_offset_db: f64,
    /// `budget`: amplifiers run at their output-power budget for the incident
    /// signal; `literal`: gains exactly as designed (probing at `√(P_RIS/N)`).
    pub gain_control: GainControl,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self { total_w: 0.2, ris_fraction: 0.25, pilot_offset_db: 10.0, gain_control: GainControl::Budget }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    /// Overrides the thermal receiver noise power (W).
    pub sigma2_w: Option<f64>,
    /// Overrides the amplification noise power (W); defaults to the receiver value.
    pub sigma_v2_w: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { bandwidth_hz: 1e6, noise_figure_db: 10.0, sigma2_w: None, sigma_v2_w: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookConfig {
    pub near_rings: usize,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self { near_rings: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub refinement_depth: usize,
    pub shrink: f64,
    pub points_per_axis: usize,
    /// Coarse candidates refined independently.
    pub starts: usize,
    /// Coarse grid points per codebook step along each angle axis.
    pub oversample: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        let r = Refinement::default();
        Self { refinement_depth: r.depth, shrink: r.shrink, points_per_axis: r.points_per_axis, starts: r.starts, oversample: r.oversample }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NmseTarget {
    /// Error on the UE–RIS channel `g`.
    #[default]
    Channel,
    /// Error on the cascaded channel `D_h g`.
    Cascaded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub nmse: NmseTarget,
    /// Coherence block length in symbols; when set, rates carry a `(1 − L/T)` factor.
    pub coherence_symbols: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub carrier_hz: f64,
    pub bs_distance_m: f64,
    pub array: ArrayConfig,
    pub power: PowerConfig,
    pub noise: NoiseConfig,
    /// User placement regimes.
    pub regimes: Vec<Regime>,
    pub modes: Vec<RisMode>,
    /// Channel model assumed by the estimator: exact near field or the
    /// far-field approximation.
    pub models: Vec<Regime>,
    pub pilot_budgets: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads for trials (0 = all cores).
    pub workers: usize,
    pub codebook: CodebookConfig,
    pub grid: GridConfig,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 28e9,
            bs_distance_m: 15.0,
            array: ArrayConfig::default(),
            power: PowerConfig::default(),
            noise: NoiseConfig::default(),
            regimes: vec![Regime::Near, Regime::Far],
            modes: vec![RisMode::Active, RisMode::Passive],
            models: vec![Regime::Near, Regime::Far],
            pilot_budgets: (2..=10).collect(),
            trials: 1000,
            seed: 1,
            workers: 0,
            codebook: CodebookConfig::default(),
            grid: GridConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field and reports all problems with their paths.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, path: &str, message: String| {
            if !ok {
                errs.push(FieldError { path: path.into(), message });
            }
        };
        let positive = |x: f64| x.is_finite() && x > 0.0;
        check(positive(self.carrier_hz), "carrier_hz", format!("must be > 0, got {}", self.carrier_hz));
        check(positive(self.bs_distance_m), "bs_distance_m", format!("must be > 0, got {}", self.bs_distance_m));
        check(self.array.n_h >= 1, "array.n_h", "must be >= 1".into());
        check(self.array.n_v >= 1, "array.n_v", "must be >= 1".into());
        check(positive(self.array.spacing_h_wavelengths), "array.spacing_h_wavelengths", "must be > 0".into());
        check(positive(self.array.spacing_v_wavelengths), "array.spacing_v_wavelengths", "must be > 0".into());
        check(positive(self.power.total_w), "power.total_w", format!("must be > 0, got {}", self.power.total_w));
        check(
            self.power.ris_fraction > 0.0 && self.power.ris_fraction < 1.0,
            "power.ris_fraction",
            format!("must lie in (0, 1), got {}", self.power.ris_fraction),
        );
        check(self.power.pilot_offset_db.is_finite(), "power.pilot_offset_db", "must be finite".into());
        check(positive(self.noise.bandwidth_hz), "noise.bandwidth_hz", "must be > 0".into());
        check(self.noise.noise_figure_db.is_finite(), "noise.noise_figure_db", "must be finite".into());
        if let Some(s) = self.noise.sigma2_w {
            check(s.is_finite() && s >= 0.0, "noise.sigma2_w", format!("must be >= 0, got {s}"));
        }
        if let Some(s) = self.noise.sigma_v2_w {
            check(s.is_finite() && s >= 0.0, "noise.sigma_v2_w", format!("must be >= 0, got {s}"));
        }
        check(!self.regimes.is_empty(), "regimes", "must not be empty".into());
        check(!self.modes.is_empty(), "modes", "must not be empty".into());
        check(!self.models.is_empty(), "models", "must not be empty".into());
        check(!self.pilot_budgets.is_empty(), "pilot_budgets", "must not be empty".into());
        for (i, l) in self.pilot_budgets.iter().enumerate() {
            check(*l >= 2, &format!("pilot_budgets[{i}]"), format!("must be >= 2, got {l}"));
        }
        check(self.trials >= 1, "trials", "must be >= 1".into());
        check(self.codebook.near_rings >= 1, "codebook.near_rings", "must be >= 1".into());
        check(
            self.grid.refinement_depth == 0 || self.grid.points_per_axis >= 2,
            "grid.points_per_axis",
            "must be >= 2 when refining".into(),
        );
        check(self.grid.starts >= 1, "grid.starts", "must be >= 1".into());
        check(self.grid.oversample >= 1, "grid.oversample", "must be >= 1".into());
        check(
            self.grid.shrink > 0.0 && self.grid.shrink < 1.0,
            "grid.shrink",
            format!("must lie in (0, 1), got {}", self.grid.shrink),
        );
        if let Some(t) = self.metrics.coherence_symbols {
            check(t >= 1, "metrics.coherence_symbols", "must be >= 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn geometry(&self) -> ArrayGeometry {
        let lambda = self.wavelength();
        ArrayGeometry::new(
            self.array.n_h,
            self.array.n_v,
            self.array.spacing_h_wavelengths * lambda,
            self.array.spacing_v_wavelengths * lambda,
            lambda,
        )
        .expect("validated geometry")
    }

    pub fn noise_model(&self) -> NoiseModel {
        let thermal = NoiseModel::thermal(self.noise.bandwidth_hz, self.noise.noise_figure_db);
        let sigma2 = self.noise.sigma2_w.unwrap_or(thermal);
        let sigma_v2 = self.noise.sigma_v2_w.unwrap_or(sigma2);
        NoiseModel::new(sigma2, sigma_v2).expect("validated noise")
    }

    pub fn power_budget(&self, mode: RisMode) -> PowerBudget {
        PowerBudget::for_mode(mode, self.power.total_w, self.power.ris_fraction, self.power.pilot_offset_db)
    }

    pub fn refinement(&self) -> Refinement {
        Refinement {
            depth: self.grid.refinement_depth,
            shrink: self.grid.shrink,
            points_per_axis: self.grid.points_per_axis,
            starts: self.grid.starts,
            oversample: self.grid.oversample,
        }
    }

    pub fn max_budget(&self) -> usize {
        self.pilot_budgets.iter().copied().max().unwrap_or(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.trials, 1000);
        assert_eq!(cfg.array.n_h, 32);
        assert_eq!(cfg.pilot_budgets, (2..=10).collect::<Vec<_>>());
        let p = cfg.power_budget(RisMode::Active);
        assert!((p.p_ris - 0.05).abs() < 1e-15 && (p.p_p - 0.15).abs() < 1e-15);
        let n = cfg.noise_model();
        assert!((10.0 * (n.sigma2 / 1e-3).log10() + 104.0).abs() < 0.01);
        assert_eq!(n.sigma2, n.sigma_v2);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.trials = 7;
        cfg.regimes = vec![Regime::Far];
        cfg.noise.sigma2_w = Some(1e-12);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml_str("trails = 5").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(ref m) if m.contains("trails")), "{err}");
        let err = ExperimentConfig::from_toml_str("[array]\nnh = 4").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
    }

    #[test]
    fn invalid_fields_are_reported_with_paths() {
        let err = ExperimentConfig::from_toml_str(
            "trials = 0\npilot_budgets = [2, 1]\n[power]\nris_fraction = 1.5\n",
        )
        .unwrap_err();
        let ConfigError::Invalid(errs) = &err else { panic!("{err}") };
        let paths: Vec<&str> = errs.iter().map(|e| e.path.as_str()).collect();
        assert!(paths.contains(&"trials"));
        assert!(paths.contains(&"pilot_budgets[1]"));
        assert!(paths.contains(&"power.ris_fraction"));
        let json = err.to_json();
        assert_eq!(json["error"], "invalid");
        assert_eq!(json["fields"].as_array().unwrap().len(), errs.len());
    }
}
