//! Line-of-sight channel synthesis and noisy pilot observations.

use std::f64::consts::{FRAC_PI_3, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{steering, ArrayGeometry, Direction, GeometryError};
use crate::{CMatrix, CVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{name} must be positive and finite (got {value})")]
    InvalidValue { name: &'static str, value: f64 },
}

/// Propagation regime of a user (or steering model of an estimator).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Near,
    Far,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Near => "near",
            Regime::Far => "far",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "near" => Ok(Regime::Near),
            "far" => Ok(Regime::Far),
            other => Err(format!("unknown regime `{other}`")),
        }
    }
}

/// Free-space power gain `(λ / 4πd)²`.
pub fn friis_gain(wavelength: f64, distance: f64) -> f64 {
    (wavelength / (4.0 * PI * distance)).powi(2)
}

/// Wraps an angle to `[0, 2π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// Parameters of the UE–RIS line-of-sight channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosChannelParams {
    /// Power gain.
    pub beta: f64,
    /// Phase at the reference element, in `[0, 2π)`.
    pub omega: f64,
    pub dir: Direction,
}

impl LosChannelParams {
    pub fn new(beta: f64, omega: f64, dir: Direction) -> Result<Self, ChannelError> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(ChannelError::InvalidValue { name: "beta", value: beta });
        }
        Ok(Self { beta, omega: wrap_phase(omega), dir })
    }
}

/// Realized UE–RIS channel vector `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct LosChannel {
    pub g: CVector,
}

/// `g = √β e^{jω} a(ψ)`, near-field steering when the direction has a distance.
pub fn make_channel(
    geometry: &ArrayGeometry,
    params: &LosChannelParams,
) -> Result<LosChannel, ChannelError> {
    let a = steering(geometry, &params.dir)?;
    let scale = Complex64::from_polar(params.beta.sqrt(), params.omega);
    Ok(LosChannel { g: a * scale })
}

/// Deterministic BS–RIS channel `h`; its diagonal matrix form is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct BsRisChannel {
    pub h: CVector,
}

impl BsRisChannel {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

pub fn make_bs_ris_channel(
    geometry: &ArrayGeometry,
    bs_distance: f64,
    bs_dir: Direction,
) -> Result<BsRisChannel, ChannelError> {
    if !(bs_distance.is_finite() && bs_distance > 0.0) {
        return Err(ChannelError::InvalidValue { name: "bs_distance", value: bs_distance });
    }
    let dir = if bs_distance < geometry.field_boundaries().fraunhofer {
        Direction::near(bs_dir.azimuth, bs_dir.elevation, bs_distance)
    } else {
        bs_dir.without_distance()
    };
    let a = steering(geometry, &dir)?;
    let amp = friis_gain(geometry.wavelength(), bs_distance).sqrt();
    Ok(BsRisChannel { h: a * Complex64::new(amp, 0.0) })
}

/// Receiver and amplification noise powers (watts).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma2: f64,
    pub sigma_v2: f64,
}

impl NoiseModel {
    pub fn new(sigma2: f64, sigma_v2: f64) -> Result<Self, ChannelError> {
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(ChannelError::InvalidValue { name: "sigma2", value: sigma2 });
        }
        if !(sigma_v2.is_finite() && sigma_v2 >= 0.0) {
            return Err(ChannelError::InvalidValue { name: "sigma_v2", value: sigma_v2 });
        }
        Ok(Self { sigma2, sigma_v2 })
    }

    /// Thermal noise `k T B · NF` at 290 K.
    pub fn thermal(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
        let dbm = -174.0 + 10.0 * bandwidth_hz.log10() + noise_figure_db;
        1e-3 * 10f64.powf(dbm / 10.0)
    }

    /// Same receiver noise, no amplification noise.
    pub fn passive(&self) -> Self {
        Self { sigma_v2: 0.0, ..*self }
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma2 == 0.0 && self.sigma_v2 == 0.0
    }
}

/// Circularly-symmetric complex Gaussian sample with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    if var == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let n = Normal::new(0.0, (var / 2.0).sqrt()).expect("finite variance");
    Complex64::new(n.sample(rng), n.sample(rng))
}

/// Draws a user position and the resulting LoS parameters.
///
/// Angles are uniform on `[-π/3, π/3]`; distance is uniform on
/// `[d_B, d_f/10]` (near) or `[d_f, 5 d_f]` (far); `β` follows Friis.
pub fn sample_user<R: Rng + ?Sized>(
    geometry: &ArrayGeometry,
    regime: Regime,
    rng: &mut R,
) -> LosChannelParams {
    let bounds = geometry.field_boundaries();
    let angle = Uniform::new_inclusive(-FRAC_PI_3, FRAC_PI_3).expect("valid range");
    let azimuth = angle.sample(rng);
    let elevation = angle.sample(rng);
    let (lo, hi) = match regime {
        Regime::Near => (bounds.bjornson, bounds.fraunhofer / 10.0),
        Regime::Far => (bounds.fraunhofer, 5.0 * bounds.fraunhofer),
    };
    let distance = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let omega = rng.random_range(0.0..2.0 * PI);
    LosChannelParams {
        beta: friis_gain(geometry.wavelength(), distance),
        omega,
        dir: Direction::near(azimuth, elevation, distance),
    }
}

/// One pilot slot: `√P_p φᵀ D_h g + φᵀ D_h v + w`, fresh `v` and `w`.
pub fn observe_pilot<R: Rng + ?Sized>(
    config: &CVector,
    h: &CVector,
    g: &CVector,
    p_p: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Complex64, ChannelError> {
    if config.len() != h.len() || g.len() != h.len() {
        return Err(ChannelError::Dimension(format!(
            "configuration {} / h {} / g {}",
            config.len(),
            h.len(),
            g.len()
        )));
    }
    let sqrt_pp = p_p.sqrt();
    let mut y = Complex64::new(0.0, 0.0);
    for ((phi, hn), gn) in config.iter().zip(h.iter()).zip(g.iter()) {
        let ph = phi * hn;
        y += ph * gn * sqrt_pp;
        if noise.sigma_v2 > 0.0 {
            y += ph * complex_gaussian(rng, noise.sigma_v2);
        }
    }
    Ok(y + complex_gaussian(rng, noise.sigma2))
}

/// Observations for every row of `b_matrix`, in order.
pub fn observe_pilots<R: Rng + ?Sized>(
    b_matrix: &CMatrix,
    h: &CVector,
    g: &CVector,
    p_p: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<CVector, ChannelError> {
    if !(p_p.is_finite() && p_p > 0.0) {
        return Err(ChannelError::InvalidValue { name: "pilot power", value: p_p });
    }
    if b_matrix.ncols() != h.len() {
        return Err(ChannelError::Dimension(format!(
            "B has {} columns but h has {} entries",
            b_matrix.ncols(),
            h.len()
        )));
    }
    let mut y = CVector::zeros(b_matrix.nrows());
    for (l, row) in b_matrix.row_iter().enumerate() {
        let config = row.transpose();
        y[l] = observe_pilot(&config, h, g, p_p, noise, rng)?;
    }
    Ok(y)
}
