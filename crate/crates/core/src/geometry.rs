//! Uniform planar array layout and steering vectors.
//!
//! The array lies in the x–z plane with boresight along +y. Element `n`
//! (1-based, row-major with `n_h` elements per row) sits at `(i(n), 0, k(n))`
//! and element 1 is the phase reference at the origin.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::CVector;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("array must have at least one element per row and column (got {n_h}x{n_v})")]
    EmptyArray { n_h: usize, n_v: usize },
    #[error("{name} must be positive and finite (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("element index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("near-field distance must be positive (got {0})")]
    InvalidDistance(f64),
}

/// Uniform planar array: `n_h` elements per row, `n_v` per column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    n_h: usize,
    n_v: usize,
    delta_h: f64,
    delta_v: f64,
    wavelength: f64,
}

/// Near-field and far-field boundary distances of an aperture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldBoundaries {
    /// Fraunhofer distance `2 D² / λ`.
    pub fraunhofer: f64,
    /// Björnson distance `2 D`.
    pub bjornson: f64,
}

fn check_positive(name: &'static str, value: f64) -> Result<f64, GeometryError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(GeometryError::NonPositive { name, value })
    }
}

impl ArrayGeometry {
    pub fn new(
        n_h: usize,
        n_v: usize,
        delta_h: f64,
        delta_v: f64,
        wavelength: f64,
    ) -> Result<Self, GeometryError> {
        if n_h == 0 || n_v == 0 {
            return Err(GeometryError::EmptyArray { n_h, n_v });
        }
        Ok(Self {
            n_h,
            n_v,
            delta_h: check_positive("delta_h", delta_h)?,
            delta_v: check_positive("delta_v", delta_v)?,
            wavelength: check_positive("wavelength", wavelength)?,
        })
    }

    /// Half-wavelength spaced array for a carrier frequency in Hz.
    pub fn half_wavelength(n_h: usize, n_v: usize, carrier_hz: f64) -> Result<Self, GeometryError> {
        let wavelength = SPEED_OF_LIGHT / check_positive("carrier frequency", carrier_hz)?;
        Self::new(n_h, n_v, wavelength / 2.0, wavelength / 2.0, wavelength)
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn delta_h(&self) -> f64 {
        self.delta_h
    }

    pub fn delta_v(&self) -> f64 {
        self.delta_v
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Total element count `N = n_h · n_v`.
    pub fn len(&self) -> usize {
        self.n_h * self.n_v
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// In-plane coordinates `(i, k)` of the 1-based element `n`.
    pub fn element_position(&self, n: usize) -> Result<(f64, f64), GeometryError> {
        if n == 0 || n > self.len() {
            return Err(GeometryError::IndexOutOfRange { index: n, len: self.len() });
        }
        let col = (n - 1) % self.n_h; // n_H - 1
        let row = (n - 1) / self.n_h; // ceil(n / N_H) - 1
        Ok((col as f64 * self.delta_h, row as f64 * self.delta_v))
    }

    /// Coordinates of every element in index order (0-based iteration).
    pub fn positions(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.len()).map(move |idx| {
            let col = idx % self.n_h;
            let row = idx / self.n_h;
            (col as f64 * self.delta_h, row as f64 * self.delta_v)
        })
    }

    /// Diagonal of the physical aperture.
    pub fn aperture_diagonal(&self) -> f64 {
        let width = (self.n_h - 1) as f64 * self.delta_h;
        let height = (self.n_v - 1) as f64 * self.delta_v;
        width.hypot(height)
    }

    pub fn field_boundaries(&self) -> FieldBoundaries {
        let d = self.aperture_diagonal();
        FieldBoundaries {
            fraunhofer: 2.0 * d * d / self.wavelength,
            bjornson: 2.0 * d,
        }
    }
}

/// Direction of arrival, optionally with range for near-field users.
///
/// Angles are in radians; `distance` is measured to the reference element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: Option<f64>,
}

impl Direction {
    pub fn far(azimuth: f64, elevation: f64) -> Self {
        Self { azimuth, elevation, distance: None }
    }

    pub fn near(azimuth: f64, elevation: f64, distance: f64) -> Self {
        Self { azimuth, elevation, distance: Some(distance) }
    }

    /// Spatial frequencies `(sin az · cos el, sin el)`.
    pub fn spatial_frequency(&self) -> (f64, f64) {
        (
            self.azimuth.sin() * self.elevation.cos(),
            self.elevation.sin(),
        )
    }

    /// Inverse of [`Direction::spatial_frequency`]; `None` outside the visible disk.
    pub fn from_spatial_frequency(u: f64, v: f64, distance: Option<f64>) -> Option<Self> {
        if !(u.is_finite() && v.is_finite()) || u * u + v * v > 1.0 + 1e-12 {
            return None;
        }
        let elevation = v.clamp(-1.0, 1.0).asin();
        let cos_el = elevation.cos();
        let azimuth = if cos_el > 0.0 { (u / cos_el).clamp(-1.0, 1.0).asin() } else { 0.0 };
        Some(Self { azimuth, elevation, distance })
    }

    /// Same angles, range dropped.
    pub fn without_distance(&self) -> Self {
        Self { distance: None, ..*self }
    }

    /// Cartesian point at `distance` along this direction.
    pub fn point(&self, distance: f64) -> [f64; 3] {
        let (sa, ca) = self.azimuth.sin_cos();
        let (se, ce) = self.elevation.sin_cos();
        [distance * sa * ce, distance * ca * ce, distance * se]
    }
}

/// Planar-wavefront array response for spatial frequencies `(u, v)`.
pub fn steering_far_uv(geometry: &ArrayGeometry, u: f64, v: f64) -> CVector {
    // separable: one phasor per column times one per row
    let k = geometry.wavenumber();
    let cols: Vec<Complex64> = (0..geometry.n_h)
        .map(|c| Complex64::from_polar(1.0, -k * c as f64 * geometry.delta_h * u))
        .collect();
    let rows: Vec<Complex64> = (0..geometry.n_v)
        .map(|r| Complex64::from_polar(1.0, -k * r as f64 * geometry.delta_v * v))
        .collect();
    CVector::from_fn(geometry.len(), |idx, _| cols[idx % geometry.n_h] * rows[idx / geometry.n_h])
}

/// Planar-wavefront array response; entry 1 is exactly `1 + 0j`.
pub fn steering_far(geometry: &ArrayGeometry, azimuth: f64, elevation: f64) -> CVector {
    let dir = Direction::far(azimuth, elevation);
    let (u, v) = dir.spatial_frequency();
    steering_far_uv(geometry, u, v)
}

/// Spherical-wavefront array response for a user at `distance` from element 1.
pub fn steering_near(
    geometry: &ArrayGeometry,
    azimuth: f64,
    elevation: f64,
    distance: f64,
) -> Result<CVector, GeometryError> {
    if !(distance.is_finite() && distance > 0.0) {
        return Err(GeometryError::InvalidDistance(distance));
    }
    let k = geometry.wavenumber();
    let p = Direction::far(azimuth, elevation).point(distance);
    Ok(CVector::from_iterator(
        geometry.len(),
        geometry.positions().map(|(i, kk)| {
            // r_n - r_1 = (|e|^2 - 2 p.e) / (r_n + r_1), stable at long range
            let num = i * i + kk * kk - 2.0 * (p[0] * i + p[2] * kk);
            let r_n = ((p[0] - i).powi(2) + p[1].powi(2) + (p[2] - kk).powi(2)).sqrt();
            let s = num / (r_n + distance);
            Complex64::from_polar(1.0, k * s)
        }),
    ))
}

/// Dispatches on whether the direction carries a distance.
pub fn steering(geometry: &ArrayGeometry, dir: &Direction) -> Result<CVector, GeometryError> {
    match dir.distance {
        Some(r) => steering_near(geometry, dir.azimuth, dir.elevation, r),
        None => Ok(steering_far(geometry, dir.azimuth, dir.elevation)),
    }
}
