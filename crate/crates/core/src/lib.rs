//! Parametric maximum-likelihood channel estimation for uplinks assisted by an
//! active reconfigurable intelligent surface (RIS).
//!
//! The crate covers the whole simulation chain:
//!
//! - [`geometry`]: planar array layout and near/far-field steering vectors
//! - [`channel`]: line-of-sight channel synthesis and noisy pilot observations
//! - [`estimator`]: noise covariance, closed-form gain/phase estimates and the
//!   direction search
//! - [`beamcontrol`]: orthogonal codebook, wide beams, amplification profile and
//!   closest-beam pilot selection
//! - [`protocol`]: the adaptive pilot loop for active and passive surfaces
//! - [`metrics`]: NMSE, spectral efficiency and perfect-CSI capacity
//! - [`harness`]: Monte Carlo experiment driver and result files
//!
//! Batch work (trials, grid candidates) runs on rayon when the `parallel`
//! feature is enabled; see [`exec::Execution`].

pub mod beamcontrol;
pub mod channel;
pub mod estimator;
pub mod exec;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod protocol;

/// Complex column vector.
pub type CVector = nalgebra::DVector<num_complex::Complex64>;
/// Complex dense matrix.
pub type CMatrix = nalgebra::DMatrix<num_complex::Complex64>;

pub use num_complex::Complex64;
