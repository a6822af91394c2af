//! Maximum-likelihood estimation of the parametric UE–RIS channel.
//!
//! For a fixed direction `ψ`, the gain and phase have closed forms; the
//! direction itself maximizes
//!
//! ```text
//!   |yᴴ F⁻¹ B D_h a(ψ)|² / (a(ψ)ᴴ D_hᴴ Bᴴ F⁻¹ B D_h a(ψ))
//! ```
//!
//! over a search grid. `F` is never inverted: it is Cholesky-factored once per
//! observation set, and the grid search works on whitened quantities
//! `L⁻¹ y` and `L⁻¹ B D_h`, which turns every candidate into one
//! matrix–vector product.

use nalgebra::Cholesky;
use num_complex::Complex64;
use thiserror::Error;

use crate::beamcontrol::Codebook;
use crate::channel::{wrap_phase, NoiseModel, Regime};
use crate::exec::{argmax_first, Execution};
use crate::geometry::{steering, ArrayGeometry, Direction, GeometryError};
use crate::{CMatrix, CVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("no observations (L = 0)")]
    NoObservations,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("noise covariance has non-finite entries")]
    NonFinite,
    #[error("noise covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("direction is unobservable under the current pilot matrix")]
    Unobservable,
    #[error("every grid candidate is unobservable")]
    AllUnobservable,
    #[error("invalid search grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Pilot noise covariance together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct NoiseCovariance {
    f: CMatrix,
    chol: Cholesky<Complex64, nalgebra::Dyn>,
    identity_fallback: bool,
}

/// `B D_h`: scales column `n` of `B` by `h_n`.
pub fn effective_design(b_matrix: &CMatrix, h: &CVector) -> Result<CMatrix, EstimatorError> {
    if b_matrix.ncols() != h.len() {
        return Err(EstimatorError::Dimension(format!(
            "B has {} columns but h has {} entries",
            b_matrix.ncols(),
            h.len()
        )));
    }
    let mut m = b_matrix.clone();
    for (mut col, hn) in m.column_iter_mut().zip(h.iter()) {
        col *= *hn;
    }
    Ok(m)
}

/// Covariance of the stacked pilot noise.
///
/// The amplification noise is drawn afresh in every pilot slot, so slots are
/// uncorrelated and only the diagonal of `σ_v² B D_h D_hᴴ Bᴴ` survives:
/// `F = σ² I + σ_v² diag(‖(B D_h)_ℓ‖²)`.
pub fn noise_covariance(
    b_matrix: &CMatrix,
    h: &CVector,
    noise: &NoiseModel,
) -> Result<NoiseCovariance, EstimatorError> {
    let l = b_matrix.nrows();
    if l == 0 {
        return Err(EstimatorError::NoObservations);
    }
    let design = effective_design(b_matrix, h)?;
    let mut f = CMatrix::zeros(l, l);
    for i in 0..l {
        let row = design.row(i).norm_squared();
        f[(i, i)] = Complex64::new(noise.sigma2 + noise.sigma_v2 * row, 0.0);
    }
    NoiseCovariance::from_matrix(f)
}

impl NoiseCovariance {
    /// Wraps a Hermitian matrix. An all-zero matrix (noiseless model) is
    /// replaced by the identity: every estimate is invariant to `F → cF`, so
    /// the identity is the `c → 0` limit.
    pub fn from_matrix(f: CMatrix) -> Result<Self, EstimatorError> {
        if f.nrows() == 0 || f.nrows() != f.ncols() {
            return Err(EstimatorError::Dimension(format!("F is {}x{}", f.nrows(), f.ncols())));
        }
        if f.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(EstimatorError::NonFinite);
        }
        let identity_fallback = f.iter().all(|z| *z == Complex64::new(0.0, 0.0));
        let f = if identity_fallback {
            CMatrix::identity(f.nrows(), f.ncols())
        } else {
            (&f + f.adjoint()) * Complex64::new(0.5, 0.0)
        };
        let chol = Cholesky::new(f.clone()).ok_or(EstimatorError::NotPositiveDefinite)?;
        Ok(Self { f, chol, identity_fallback })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.f
    }

    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    /// True when the model was noiseless and `F` was replaced by the identity.
    pub fn is_identity_fallback(&self) -> bool {
        self.identity_fallback
    }

    /// `L⁻¹ v` where `F = L Lᴴ`.
    pub fn whiten(&self, v: &CVector) -> CVector {
        let mut out = v.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    pub fn whiten_matrix(&self, m: &CMatrix) -> CMatrix {
        let mut out = m.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    /// `F⁻¹ v`.
    pub fn solve(&self, v: &CVector) -> CVector {
        self.chol.solve(v)
    }

    /// Same covariance scaled by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self, EstimatorError> {
        Self::from_matrix(&self.f * Complex64::new(c, 0.0))
    }
}

fn check_dims(
    y: &CVector,
    cov: &NoiseCovariance,
    b_matrix: &CMatrix,
) -> Result<(), EstimatorError> {
    if y.len() != b_matrix.nrows() || cov.dim() != y.len() {
        return Err(EstimatorError::Dimension(format!(
            "y has {} entries, B has {} rows, F is {}x{}",
            y.len(),
            b_matrix.nrows(),
            cov.dim(),
            cov.dim()
        )));
    }
    Ok(())
}

/// `(yᴴ F⁻¹ u, uᴴ F⁻¹ u)` with `u = B D_h a`, via solves against `F`.
fn inner_products(
    y: &CVector,
    cov: &NoiseCovariance,
    b_matrix: &CMatrix,
    h: &CVector,
    a_psi: &CVector,
) -> Result<(Complex64, f64), EstimatorError> {
    check_dims(y, cov, b_matrix)?;
    if a_psi.len() != h.len() {
        return Err(EstimatorError::Dimension(format!(
            "a(psi) has {} entries, h has {}",
            a_psi.len(),
            h.len()
        )));
    }
    let u = effective_design(b_matrix, h)? * a_psi;
    let f_inv_u = cov.solve(&u);
    let cross = y.dotc(&f_inv_u);
    let quad = u.dotc(&f_inv_u).re;
    if !(quad > 0.0 && quad.is_finite()) {
        return Err(EstimatorError::Unobservable);
    }
    Ok((cross, quad))
}

/// Concentrated likelihood of a direction (larger is better).
pub fn objective(
    y: &CVector,
    cov: &NoiseCovariance,
    b_matrix: &CMatrix,
    h: &CVector,
    a_psi: &CVector,
) -> Result<f64, EstimatorError> {
    let (cross, quad) = inner_products(y, cov, b_matrix, h, a_psi)?;
    Ok(cross.norm_sqr() / quad)
}

/// Phase estimate and whether it was degenerate (zero inner product).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEstimate {
    pub omega: f64,
    pub degenerate: bool,
}

fn phase_from_cross(cross: Complex64) -> PhaseEstimate {
    if cross == Complex64::new(0.0, 0.0) {
        PhaseEstimate { omega: 0.0, degenerate: true }
    } else {
        PhaseEstimate { omega: wrap_phase(-cross.arg()), degenerate: false }
    }
}

fn gain_from_inner(cross: Complex64, quad: f64, p_p: f64) -> f64 {
    cross.norm_sqr() / (p_p * quad * quad)
}

/// `ω̂ = −arg(yᴴ F⁻¹ B D_h a)`, wrapped to `[0, 2π)`.
pub fn estimate_omega(
    y: &CVector,
    cov: &NoiseCovariance,
    b_matrix: &CMatrix,
    h: &CVector,
    a_psi: &CVector,
) -> Result<PhaseEstimate, EstimatorError> {
    let (cross, _) = inner_products(y, cov, b_matrix, h, a_psi)?;
    Ok(phase_from_cross(cross))
}

/// `β̂ = |yᴴ F⁻¹ B D_h a|² / (P_p (aᴴ D_hᴴ Bᴴ F⁻¹ B D_h a)²)`.
pub fn estimate_beta(
    y: &CVector,
    cov: &NoiseCovariance,
    b_matrix: &CMatrix,
    h: &CVector,
    a_psi: &CVector,
    p_p: f64,
) -> Result<f64, EstimatorError> {
    let (cross, quad) = inner_products(y, cov, b_matrix, h, a_psi)?;
    Ok(gain_from_inner(cross, quad, p_p))
}

/// Whitened observation and design, shared by every grid candidate.
#[derive(Debug, Clone)]
pub struct WhitenedProblem {
    design: CMatrix,
    obs: CVector,
}

impl WhitenedProblem {
    pub fn new(
        y: &CVector,
        cov: &NoiseCovariance,
        b_matrix: &CMatrix,
        h: &CVector,
    ) -> Result<Self, EstimatorError> {
        check_dims(y, cov, b_matrix)?;
        let design = cov.whiten_matrix(&effective_design(b_matrix, h)?);
        Ok(Self { design, obs: cov.whiten(y) })
    }

    /// `(yᴴ F⁻¹ u, uᴴ F⁻¹ u)`; `None` when the direction is unobservable.
    pub fn inner(&self, a_psi: &CVector) -> Option<(Complex64, f64)> {
        let t = &self.design * a_psi;
        let quad = t.norm_squared();
        if quad > 0.0 && quad.is_finite() {
            Some((self.obs.dotc(&t), quad))
        } else {
            None
        }
    }

    pub fn score(&self, a_psi: &CVector) -> Option<f64> {
        self.inner(a_psi).map(|(c, q)| c.norm_sqr() / q)
    }
}

/// Local refinement schedule around the coarse incumbent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub depth: usize,
    pub shrink: f64,
    pub points_per_axis: usize,
    /// Best coarse candidates refined independently; the best result wins.
    pub starts: usize,
    /// Coarse grid points per codebook step along each angle axis.
    pub oversample: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Self { depth: 8, shrink: 0.5, points_per_axis: 5, starts: 3, oversample: 2 }
    }
}

/// Coarse-grid spacing used as the first refinement half-width.
///
/// Angles are refined in spatial-frequency coordinates
/// `(sin az · cos el, sin el)` and range in inverse distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSteps {
    pub u: f64,
    pub v: f64,
    pub inv_distance: f64,
}

/// Candidate directions for the coarse search plus refinement settings.
#[derive(Debug, Clone)]
pub struct SearchGrid {
    geometry: ArrayGeometry,
    model: Regime,
    candidates: Vec<Direction>,
    steering: Vec<CVector>,
    steps: GridSteps,
    min_distance: f64,
    /// Bound on `|u|` and `|v|` during refinement, if any.
    uv_limit: Option<f64>,
    refinement: Refinement,
}

impl SearchGrid {
    pub fn new(
        geometry: ArrayGeometry,
        model: Regime,
        candidates: Vec<Direction>,
        steps: GridSteps,
        min_distance: f64,
        refinement: Refinement,
    ) -> Result<Self, EstimatorError> {
        let invalid = |msg: String| Err(EstimatorError::InvalidGrid(msg));
        if candidates.is_empty() {
            return invalid("no candidates".into());
        }
        if refinement.depth > 0 && (refinement.points_per_axis < 2 || !(refinement.shrink > 0.0)) {
            return invalid("refinement needs >= 2 points per axis and a positive shrink".into());
        }
        let half_pi = std::f64::consts::FRAC_PI_2 + 1e-12;
        for c in &candidates {
            if c.azimuth.abs() > half_pi || c.elevation.abs() > half_pi {
                return invalid(format!("angle out of range: {c:?}"));
            }
            match (model, c.distance) {
                (Regime::Far, Some(_)) => return invalid("far-field grid with a distance".into()),
                (Regime::Near, None) => return invalid("near-field grid without a distance".into()),
                (Regime::Near, Some(r)) if !(r >= min_distance && r > 0.0) => {
                    return invalid(format!("distance {r} below {min_distance}"))
                }
                _ => {}
            }
        }
        let steering = candidates
            .iter()
            .map(|c| steering(&geometry, c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { geometry, model, candidates, steering, steps, min_distance, uv_limit: None, refinement })
    }

    /// Tensor grid over spatial frequencies (and distances for near field).
    pub fn uv_tensor(
        geometry: ArrayGeometry,
        model: Regime,
        us: &[f64],
        vs: &[f64],
        distances: &[f64],
        refinement: Refinement,
    ) -> Result<Self, EstimatorError> {
        let max_gap = |xs: &[f64]| {
            let mut s = xs.to_vec();
            s.sort_by(f64::total_cmp);
            s.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
        };
        let inv: Vec<f64> = distances.iter().map(|r| 1.0 / r).collect();
        let steps = GridSteps { u: max_gap(us), v: max_gap(vs), inv_distance: max_gap(&inv) };
        let ranges: Vec<Option<f64>> = match model {
            Regime::Far => vec![None],
            Regime::Near => distances.iter().copied().map(Some).collect(),
        };
        let mut candidates = Vec::new();
        for r in &ranges {
            for &v in vs {
                for &u in us {
                    if let Some(d) = Direction::from_spatial_frequency(u, v, *r) {
                        candidates.push(d);
                    }
                }
            }
        }
        let min_distance = distances.iter().copied().fold(f64::INFINITY, f64::min);
        let min_distance = if min_distance.is_finite() { min_distance } else { 0.0 };
        Self::new(geometry, model, candidates, steps, min_distance, refinement)
    }

    /// Coarse grid taken from the codebook's generating directions, followed
    /// (when `refinement.oversample > 1`) by the in-between spatial frequencies
    /// (and, for near-field codebooks, in-between ranges in `1/r`) inside the
    /// codebook's support. Refinement stays inside that support.
    pub fn from_codebook(codebook: &Codebook, refinement: Refinement) -> Result<Self, EstimatorError> {
        let geometry = *codebook.geometry();
        if codebook.entries().is_empty() {
            return Err(EstimatorError::InvalidGrid("empty codebook".into()));
        }
        let steps = GridSteps {
            u: geometry.wavelength() / (geometry.n_h() as f64 * geometry.delta_h()),
            v: geometry.wavelength() / (geometry.n_v() as f64 * geometry.delta_v()),
            inv_distance: codebook.ring_spacing_inverse(),
        };
        let min_distance = match codebook.model() {
            Regime::Near => geometry.field_boundaries().bjornson,
            Regime::Far => 0.0,
        };
        let mut candidates: Vec<Direction> = codebook.entries().iter().map(|e| e.direction).collect();
        let mut steering_vectors: Vec<CVector> = codebook.entries().iter().map(|e| e.beam.clone()).collect();
        let f = refinement.oversample.max(1);
        if f > 1 {
            let limit = std::f64::consts::FRAC_PI_3.sin() + 1e-9;
            let inside = |u: f64, v: f64| u.abs() <= limit && v.abs() <= limit && u * u + v * v <= 1.0;
            // ranges between rings, never closer than the nearest ring
            let max_inv = if min_distance > 0.0 { 1.0 / min_distance } else { f64::INFINITY };
            let range_steps = if codebook.model() == Regime::Near { f } else { 1 };
            for e in codebook.entries() {
                let (u0, v0) = e.direction.spatial_frequency();
                for c in 0..range_steps {
                    let distance = match e.direction.distance {
                        Some(r) if c > 0 => {
                            let inv = 1.0 / r + steps.inv_distance * c as f64 / f as f64;
                            if inv > max_inv * (1.0 + 1e-12) {
                                continue;
                            }
                            Some(1.0 / inv)
                        }
                        r => r,
                    };
                    for b in 0..f {
                        for a in 0..f {
                            if a == 0 && b == 0 && c == 0 {
                                continue;
                            }
                            let u = u0 + steps.u * a as f64 / f as f64;
                            let v = v0 + steps.v * b as f64 / f as f64;
                            if !inside(u, v) {
                                continue;
                            }
                            if let Some(d) = Direction::from_spatial_frequency(u, v, distance) {
                                steering_vectors.push(steering(&geometry, &d)?);
                                candidates.push(d);
                            }
                        }
                    }
                }
            }
        }
        Ok(Self {
            geometry,
            model: codebook.model(),
            candidates,
            steering: steering_vectors,
            steps,
            min_distance,
            uv_limit: Some(std::f64::consts::FRAC_PI_3.sin() + 1e-9),
            refinement,
        })
    }

    pub fn model(&self) -> Regime {
        self.model
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn candidates(&self) -> &[Direction] {
        &self.candidates
    }

    pub fn steps(&self) -> GridSteps {
        self.steps
    }

    pub fn refinement(&self) -> Refinement {
        self.refinement
    }

    pub fn with_refinement(mut self, refinement: Refinement) -> Self {
        self.refinement = refinement;
        self
    }

    /// Whether two candidates lie more than one coarse step apart on some axis.
    fn separated(&self, a: &Direction, b: &Direction) -> bool {
        let (ua, va) = a.spatial_frequency();
        let (ub, vb) = b.spatial_frequency();
        let range_apart = match (a.distance, b.distance) {
            (Some(ra), Some(rb)) => (1.0 / ra - 1.0 / rb).abs() > self.steps.inv_distance * (1.0 - 1e-9),
            _ => false,
        };
        (ua - ub).abs() > self.steps.u * (1.0 - 1e-9) || (va - vb).abs() > self.steps.v * (1.0 - 1e-9) || range_apart
    }

    /// Candidates around `center` for one refinement level; `center` first so
    /// that it wins ties.
    ///
    /// Near-field candidates are perturbed in coordinates seen from the array
    /// centre: referenced to the corner element, direction and range trade off
    /// along a ridge that an axis-aligned lattice cannot follow.
    fn neighborhood(&self, center: &Direction, level: usize) -> Vec<Direction> {
        let r = &self.refinement;
        let scale = r.shrink.powi(level as i32);
        let offsets: Vec<f64> = (0..r.points_per_axis)
            .map(|i| -1.0 + 2.0 * i as f64 / (r.points_per_axis - 1) as f64)
            .collect();
        let near = match center.distance {
            Some(r0) if self.model == Regime::Near => Some(r0),
            _ => None,
        };
        let (u0, v0, inv0) = match near {
            Some(r0) => centred_coordinates(&self.geometry, center, r0),
            None => {
                let (u, v) = center.spatial_frequency();
                (u, v, 0.0)
            }
        };
        let range_offsets: &[f64] = if near.is_some() { &offsets } else { &[0.0] };
        let mut out = Vec::with_capacity(1 + range_offsets.len() * offsets.len() * offsets.len());
        out.push(*center);
        for dr in range_offsets {
            for dv in &offsets {
                for du in &offsets {
                    let u = u0 + du * self.steps.u * scale;
                    let v = v0 + dv * self.steps.v * scale;
                    let candidate = match near {
                        Some(_) => {
                            let inv = inv0 + dr * self.steps.inv_distance * scale;
                            // too close: slide onto the boundary so users sitting on it stay reachable
                            from_centred(&self.geometry, u, v, inv).map(|d| match d.distance {
                                Some(r) if r < self.min_distance => Direction { distance: Some(self.min_distance), ..d },
                                _ => d,
                            })
                        }
                        None => Direction::from_spatial_frequency(u, v, None),
                    };
                    let Some(d) = candidate else { continue };
                    let (du1, dv1) = d.spatial_frequency();
                    if self.uv_limit.is_some_and(|m| du1.abs() > m || dv1.abs() > m) {
                        continue;
                    }
                    out.push(d);
                }
            }
        }
        out
    }
}

fn aperture_centre(geometry: &ArrayGeometry) -> (f64, f64) {
    (
        (geometry.n_h() - 1) as f64 * geometry.delta_h() / 2.0,
        (geometry.n_v() - 1) as f64 * geometry.delta_v() / 2.0,
    )
}

/// `(u, v, 1/r)` of a near-field point as seen from the aperture centre.
fn centred_coordinates(geometry: &ArrayGeometry, dir: &Direction, distance: f64) -> (f64, f64, f64) {
    let p = dir.point(distance);
    let (cx, cz) = aperture_centre(geometry);
    let q = [p[0] - cx, p[1], p[2] - cz];
    let rc = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
    (q[0] / rc, q[2] / rc, 1.0 / rc)
}

/// Inverse of [`centred_coordinates`]; the result is referenced to element 1.
fn from_centred(geometry: &ArrayGeometry, u: f64, v: f64, inv: f64) -> Option<Direction> {
    let w2 = 1.0 - u * u - v * v;
    if !(inv > 0.0 && w2 >= 0.0 && u.is_finite() && v.is_finite()) {
        return None;
    }
    let rc = 1.0 / inv;
    let (cx, cz) = aperture_centre(geometry);
    let p = [rc * u + cx, rc * w2.sqrt(), rc * v + cz];
    let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    Direction::from_spatial_frequency(p[0] / r, p[2] / r, Some(r))
}

/// Output of one estimation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub beta_hat: f64,
    pub omega_hat: f64,
    pub psi_hat: Direction,
    pub g_hat: CVector,
    pub objective_value: f64,
    /// Set when the matched inner product vanished (e.g. `y = 0`).
    pub degenerate: bool,
}

/// Coarse argmax over the grid followed by shrinking local refinement.
///
/// With `starts > 1` the best coarse candidates that are more than a grid
/// step apart (ties by index) are each refined and the best refined point is returned, earlier starts winning ties
/// (scores within a relative 1e-12 count as tied).
pub fn estimate_psi(
    problem: &WhitenedProblem,
    grid: &SearchGrid,
    exec: Execution,
) -> Result<(Direction, f64), EstimatorError> {
    let scores = exec.map(&grid.steering, |a| problem.score(a));
    let (first, _) = argmax_first(&scores).ok_or(EstimatorError::AllUnobservable)?;
    let starts = if grid.refinement.starts <= 1 {
        vec![first]
    } else {
        let mut ranked: Vec<(usize, f64)> = scores.iter().enumerate().filter_map(|(i, s)| s.map(|s| (i, s))).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        // one start per basin: skip candidates within a grid step of a chosen start
        let mut chosen: Vec<usize> = Vec::with_capacity(grid.refinement.starts);
        for (i, _) in ranked {
            if chosen.len() == grid.refinement.starts {
                break;
            }
            if chosen.iter().all(|&j| grid.separated(&grid.candidates[i], &grid.candidates[j])) {
                chosen.push(i);
            }
        }
        chosen
    };
    let mut best: Option<(Direction, f64)> = None;
    for idx in starts {
        let mut incumbent = grid.candidates[idx];
        let mut score = scores[idx].expect("ranked candidates are observable");
        for level in 0..grid.refinement.depth {
            let local = grid.neighborhood(&incumbent, level);
            let local_scores = exec.map(&local, |d| steering(&grid.geometry, d).ok().and_then(|a| problem.score(&a)));
            if let Some((i, s)) = argmax_first(&local_scores) {
                // index 0 is the incumbent, so it keeps ties
                incumbent = local[i];
                score = s;
            }
        }
        // later starts must win by more than rounding noise
        if best.is_none_or(|(_, b)| score > b + b.abs() * 1e-12) {
            best = Some((incumbent, score));
        }
    }
    Ok(best.expect("at least one start"))
}

/// Full estimate: direction search, then closed-form phase and gain.
pub fn estimate_channel(
    y: &CVector,
    cov: &NoiseCovariance,
    b_matrix: &CMatrix,
    h: &CVector,
    grid: &SearchGrid,
    p_p: f64,
    exec: Execution,
) -> Result<EstimateResult, EstimatorError> {
    let problem = WhitenedProblem::new(y, cov, b_matrix, h)?;
    let (psi_hat, objective_value) = estimate_psi(&problem, grid, exec)?;
    let a = steering(&grid.geometry, &psi_hat)?;
    let (cross, quad) = problem.inner(&a).ok_or(EstimatorError::Unobservable)?;
    let phase = phase_from_cross(cross);
    let beta_hat = gain_from_inner(cross, quad, p_p);
    let g_hat = &a * Complex64::from_polar(beta_hat.sqrt(), phase.omega);
    Ok(EstimateResult {
        beta_hat,
        omega_hat: phase.omega,
        psi_hat,
        g_hat,
        objective_value,
        degenerate: phase.degenerate,
    })
}
