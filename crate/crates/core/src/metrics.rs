//! NMSE and spectral-efficiency figures of merit.

use num_complex::Complex64;
use thiserror::Error;

use crate::channel::NoiseModel;
use crate::CVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("true channel is zero")]
    ZeroChannel,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

fn same_len(a: &CVector, b: &CVector) -> Result<(), MetricError> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(MetricError::Dimension(format!("{} vs {}", a.len(), b.len())))
    }
}

/// `‖ĝ − g‖² / ‖g‖²`.
pub fn nmse(g_hat: &CVector, g: &CVector) -> Result<f64, MetricError> {
    same_len(g_hat, g)?;
    let den = g.norm_squared();
    if den == 0.0 {
        return Err(MetricError::ZeroChannel);
    }
    Ok((g_hat - g).norm_squared() / den)
}

/// `‖D_h(ĝ − g)‖² / ‖D_h g‖²`.
pub fn cascaded_nmse(g_hat: &CVector, g: &CVector, h: &CVector) -> Result<f64, MetricError> {
    same_len(g_hat, g)?;
    same_len(h, g)?;
    nmse(&g_hat.component_mul(h), &g.component_mul(h))
}

/// `log₂(1 + P_d |φᵀ D_h g|² / (σ² + ‖φᵀ D_h‖² σ_v²))`.
///
/// A zero numerator gives 0 even with a zero denominator.
pub fn spectral_efficiency(
    phi: &CVector,
    h: &CVector,
    g: &CVector,
    p_d: f64,
    noise: &NoiseModel,
) -> Result<f64, MetricError> {
    same_len(phi, h)?;
    same_len(g, h)?;
    let mut signal = Complex64::new(0.0, 0.0);
    let mut leak = 0.0;
    for ((p, hn), gn) in phi.iter().zip(h.iter()).zip(g.iter()) {
        let ph = p * hn;
        signal += ph * gn;
        leak += ph.norm_sqr();
    }
    let num = p_d * signal.norm_sqr();
    if num == 0.0 {
        return Ok(0.0);
    }
    let den = noise.sigma2 + leak * noise.sigma_v2;
    if den == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((num / den).ln_1p() / std::f64::consts::LN_2)
}

/// Optional pilot-overhead penalty `(1 − L/T)`, clamped at 0.
pub fn overhead_factor(pilots: usize, coherence_symbols: Option<usize>) -> f64 {
    match coherence_symbols {
        Some(t) if t > 0 => (1.0 - pilots as f64 / t as f64).max(0.0),
        _ => 1.0,
    }
}
