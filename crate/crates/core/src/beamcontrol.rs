//! Pilot beam design: the orthogonal codebook, the two wide probing beams,
//! phase alignment, the amplification profile and closest-beam selection.

use std::f64::consts::{FRAC_PI_3, PI};
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::channel::{NoiseModel, Regime};
use crate::geometry::{steering, steering_far_uv, ArrayGeometry, Direction, GeometryError};
use crate::CVector;

#[derive(Debug, Error)]
pub enum BeamError {
    #[error("codebook would be empty for this geometry")]
    EmptyCodebook,
    #[error("codebook exhausted")]
    Exhausted,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("amplification profile undefined: {0}")]
    ProfileUndefined(&'static str),
    #[error("invalid value for {name}: {value}")]
    InvalidValue { name: &'static str, value: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("codebook file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookEntry {
    /// Direction (and range, for near-field entries) the beam points at.
    pub direction: Direction,
    /// Unit-modulus phase-only beam.
    pub beam: CVector,
}

/// Immutable set of phase-only pilot beams.
///
/// Selection state lives in [`CodebookUsage`] so one codebook can be shared
/// read-only across concurrent trials.
#[derive(Debug, Clone)]
pub struct Codebook {
    geometry: ArrayGeometry,
    model: Regime,
    entries: Vec<CodebookEntry>,
    ring_spacing_inverse: f64,
}

impl Codebook {
    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn model(&self) -> Regime {
        self.model
    }

    pub fn entries(&self) -> &[CodebookEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Spacing between adjacent range rings in `1/r` (0 for far field).
    pub fn ring_spacing_inverse(&self) -> f64 {
        self.ring_spacing_inverse
    }

    /// Writes one entry per line:
    /// `index azimuth elevation distance|- phase_1,phase_2,...` (radians).
    pub fn export<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "# model={} n_h={} n_v={} delta_h={:e} delta_v={:e} wavelength={:e} entries={}",
            self.model,
            self.geometry.n_h(),
            self.geometry.n_v(),
            self.geometry.delta_h(),
            self.geometry.delta_v(),
            self.geometry.wavelength(),
            self.entries.len()
        )?;
        let mut line = String::new();
        for (k, e) in self.entries.iter().enumerate() {
            line.clear();
            let d = &e.direction;
            let _ = write!(line, "{k} {:e} {:e} ", d.azimuth, d.elevation);
            match d.distance {
                Some(r) => {
                    let _ = write!(line, "{r:e} ");
                }
                None => line.push_str("- "),
            }
            for (i, z) in e.beam.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                let _ = write!(line, "{:e}", z.arg());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Parses the text produced by [`Codebook::export`] back into entries.
pub fn parse_codebook<R: BufRead>(input: R) -> Result<Vec<(usize, CodebookEntry)>, BeamError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| BeamError::Parse { line: i + 1, msg: msg.to_string() };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err("expected 5 whitespace-separated fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(&format!("bad number {s:?}")));
        let index = fields[0].parse::<usize>().map_err(|_| err("bad index"))?;
        let distance = if fields[3] == "-" { None } else { Some(num(fields[3])?) };
        let direction = Direction { azimuth: num(fields[1])?, elevation: num(fields[2])?, distance };
        let beam = fields[4]
            .split(',')
            .map(|p| num(p).map(|ph| Complex64::from_polar(1.0, ph)))
            .collect::<Result<Vec<_>, _>>()?;
        out.push((index, CodebookEntry { direction, beam: CVector::from_vec(beam) }));
    }
    Ok(out)
}

/// Spatial frequencies `(2m/M − 1)·λ/(2Δ)` inside the `[−sin π/3, sin π/3]` support.
fn frequency_axis(count: usize, spacing: f64, wavelength: f64) -> Vec<f64> {
    let limit = FRAC_PI_3.sin() + 1e-12;
    (0..count)
        .map(|m| (2.0 * m as f64 / count as f64 - 1.0) * wavelength / (2.0 * spacing))
        .filter(|x| x.abs() <= limit)
        .collect()
}

fn visible_pairs(geometry: &ArrayGeometry) -> Vec<(f64, f64)> {
    let us = frequency_axis(geometry.n_h(), geometry.delta_h(), geometry.wavelength());
    let vs = frequency_axis(geometry.n_v(), geometry.delta_v(), geometry.wavelength());
    let mut pairs = Vec::with_capacity(us.len() * vs.len());
    for &v in &vs {
        for &u in &us {
            if u * u + v * v <= 1.0 {
                pairs.push((u, v));
            }
        }
    }
    pairs
}

/// Range rings uniform in `1/r` over `[d_B, d_f]`, both ends included. A single
/// ring sits at the midpoint in `1/r`.
pub fn ring_distances(geometry: &ArrayGeometry, rings: usize) -> Vec<f64> {
    let b = geometry.field_boundaries();
    let (inv_lo, inv_hi) = (1.0 / b.fraunhofer, 1.0 / b.bjornson);
    match rings {
        0 => Vec::new(),
        1 => vec![2.0 / (inv_lo + inv_hi)],
        _ => (0..rings)
            .map(|i| 1.0 / (inv_hi - (inv_hi - inv_lo) * i as f64 / (rings - 1) as f64))
            .collect(),
    }
}

/// Far-field codebook (`rings` ignored) or the same angle pairs replicated on
/// `rings` range rings.
pub fn build_codebook(geometry: &ArrayGeometry, model: Regime, rings: usize) -> Result<Codebook, BeamError> {
    match model {
        Regime::Far => build_codebook_at(geometry, None),
        Regime::Near => {
            let distances = ring_distances(geometry, rings);
            let mut cb = build_codebook_at(geometry, Some(&distances))?;
            let b = geometry.field_boundaries();
            let span = 1.0 / b.bjornson - 1.0 / b.fraunhofer;
            cb.ring_spacing_inverse = if rings > 1 { span / (rings - 1) as f64 } else { span / 2.0 };
            Ok(cb)
        }
    }
}

/// Codebook over the visible angle pairs at explicit ranges (`None` = far field).
pub fn build_codebook_at(geometry: &ArrayGeometry, distances: Option<&[f64]>) -> Result<Codebook, BeamError> {
    let pairs = visible_pairs(geometry);
    let mut entries = Vec::new();
    match distances {
        None => {
            for &(u, v) in &pairs {
                let direction = Direction::from_spatial_frequency(u, v, None).ok_or(BeamError::EmptyCodebook)?;
                entries.push(CodebookEntry { direction, beam: steering_far_uv(geometry, u, v) });
            }
        }
        Some(ds) => {
            for &r in ds {
                for &(u, v) in &pairs {
                    let direction = Direction::from_spatial_frequency(u, v, Some(r)).ok_or(BeamError::EmptyCodebook)?;
                    entries.push(CodebookEntry { direction, beam: steering(geometry, &direction)? });
                }
            }
        }
    }
    if entries.is_empty() {
        return Err(BeamError::EmptyCodebook);
    }
    let model = if distances.is_some() { Regime::Near } else { Regime::Far };
    let ring_spacing_inverse = match distances {
        Some(ds) if ds.len() > 1 => {
            let mut inv: Vec<f64> = ds.iter().map(|r| 1.0 / r).collect();
            inv.sort_by(f64::total_cmp);
            inv.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
        }
        _ => 0.0,
    };
    Ok(Codebook { geometry: *geometry, model, entries, ring_spacing_inverse })
}

/// Which codewords a single protocol run has already spent.
#[derive(Debug, Clone)]
pub struct CodebookUsage {
    used: Vec<bool>,
    remaining: usize,
}

impl CodebookUsage {
    pub fn new(codebook: &Codebook) -> Self {
        Self { used: vec![false; codebook.len()], remaining: codebook.len() }
    }

    pub fn is_used(&self, index: usize) -> bool {
        self.used[index]
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }
}

/// Picks the unused codeword maximizing `|φ*ᴴ θ|` (lowest index on ties) and
/// marks it used.
pub fn closest_beam<'a>(
    phi_star: &CVector,
    codebook: &'a Codebook,
    usage: &mut CodebookUsage,
) -> Result<(usize, &'a CodebookEntry), BeamError> {
    if usage.used.len() != codebook.len() {
        return Err(BeamError::Dimension("usage flags do not match codebook".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for (k, e) in codebook.entries.iter().enumerate() {
        if usage.used[k] {
            continue;
        }
        if e.beam.len() != phi_star.len() {
            return Err(BeamError::Dimension(format!("phi* has {} entries, beam {}", phi_star.len(), e.beam.len())));
        }
        let score = phi_star.dotc(&e.beam).norm();
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((k, score));
        }
    }
    let (k, _) = best.ok_or(BeamError::Exhausted)?;
    usage.used[k] = true;
    usage.remaining -= 1;
    Ok((k, &codebook.entries[k]))
}

/// Phase profile of a chirp whose local spatial frequency sweeps
/// `sin(angle)` for `angle` uniform over `[lo, hi]`.
fn chirp_phases(count: usize, spacing: f64, wavenumber: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut acc = 0.0;
    for c in 0..count {
        out.push(acc);
        let angle = lo + (c as f64 + 0.5) * (hi - lo) / count as f64;
        acc -= wavenumber * spacing * angle.sin();
    }
    out
}

/// Two phase-only beams covering azimuth `[−π/3, 0]` and `[0, π/3]`.
///
/// Columns follow a phase-continuous chirp across the sector so the azimuth
/// response is flat. Rows carry a mild quadratic phase of opposite curvature
/// in the two beams, which keeps every elevation observable (a flat row phase
/// would null all nonzero codebook elevations). The ratio of the two
/// responses is the same at `+v` and `−v`, so the pair cannot tell mirrored
/// elevations apart; later pilots resolve the sign.
pub fn wide_beams(geometry: &ArrayGeometry) -> (CVector, CVector) {
    let k = geometry.wavenumber();
    let (n_h, n_v) = (geometry.n_h(), geometry.n_v());
    let row_phase = |sign: f64| -> Vec<f64> {
        let ctr = (n_v as f64 - 1.0) / 2.0;
        (0..n_v)
            .map(|r| {
                if n_v < 2 {
                    0.0
                } else {
                    let x = r as f64 - ctr;
                    sign * PI / (n_v as f64 * (n_v as f64 - 1.0)) * x * x
                }
            })
            .collect()
    };
    let build = |lo: f64, hi: f64, sign: f64| {
        let cols = chirp_phases(n_h, geometry.delta_h(), k, lo, hi);
        let rows = row_phase(sign);
        CVector::from_fn(n_h * n_v, |n, _| Complex64::from_polar(1.0, cols[n % n_h] + rows[n / n_h]))
    };
    (build(-FRAC_PI_3, 0.0, 1.0), build(0.0, FRAC_PI_3, -1.0))
}

/// `φ_i = √(P_RIS/N) θ_w,i`.
pub fn initial_configs(w1: &CVector, w2: &CVector, p_ris: f64) -> (CVector, CVector) {
    let scale = |w: &CVector| w * Complex64::new((p_ris / w.len() as f64).sqrt(), 0.0);
    (scale(w1), scale(w2))
}

/// `θ̄_n = exp(−j arg(h_n ĝ_n))`; entries with `h_n ĝ_n = 0` get phase 0.
/// Returns the phases and the number of such degenerate entries.
pub fn phase_align(h: &CVector, g_hat: &CVector) -> (CVector, usize) {
    let mut degenerate = 0;
    let phases = h.zip_map(g_hat, |hn, gn| {
        let z = hn * gn;
        if z.norm() == 0.0 || !z.re.is_finite() || !z.im.is_finite() {
            degenerate += 1;
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, -z.arg())
        }
    });
    (phases, degenerate)
}

/// Per-element amplitudes `p_n = C α_n / (β_n + γ_n)` and the normalizer `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplificationProfile {
    pub p: Vec<f64>,
    pub c: f64,
}

/// Gains that maximize received SNR under the amplifier budget, with
/// `α_n = |ĝ_n||h_n|`, `β_n = |h_n|²`, `γ_n = (|ĝ_n|² P_d/σ_v² + 1)/(P_RIS/σ²)`
/// and `C = (Σ α_n² γ_n / (β_n + γ_n)²)^(−1/2)`.
pub fn amplification_profile(
    g_hat: &CVector,
    h: &CVector,
    p_d: f64,
    p_ris: f64,
    noise: &NoiseModel,
) -> Result<AmplificationProfile, BeamError> {
    if g_hat.len() != h.len() {
        return Err(BeamError::Dimension(format!("g_hat {} vs h {}", g_hat.len(), h.len())));
    }
    if !(noise.sigma_v2 > 0.0) {
        return Err(BeamError::ProfileUndefined("zero amplification noise"));
    }
    if !(noise.sigma2 > 0.0) {
        return Err(BeamError::ProfileUndefined("zero receiver noise"));
    }
    if !(p_ris > 0.0 && p_ris.is_finite()) {
        return Err(BeamError::InvalidValue { name: "RIS power", value: p_ris });
    }
    let terms: Vec<(f64, f64, f64)> = g_hat
        .iter()
        .zip(h.iter())
        .map(|(g, h)| {
            let alpha = g.norm() * h.norm();
            let beta = h.norm_sqr();
            let gamma = (g.norm_sqr() * p_d / noise.sigma_v2 + 1.0) / (p_ris / noise.sigma2);
            (alpha, beta, gamma)
        })
        .collect();
    let sum: f64 = terms.iter().map(|(a, b, g)| a * a * g / ((b + g) * (b + g))).sum();
    if !(sum > 0.0 && sum.is_finite()) {
        return Err(BeamError::ProfileUndefined("estimated channel carries no energy"));
    }
    let c = sum.powf(-0.5);
    let p: Vec<f64> = terms.iter().map(|(a, b, g)| c * a / (b + g)).collect();
    if p.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(BeamError::ProfileUndefined("non-positive element gain"));
    }
    Ok(AmplificationProfile { p, c })
}

/// `φ = p ⊙ θ`.
pub fn compose_config(profile: &AmplificationProfile, phases: &CVector) -> Result<CVector, BeamError> {
    if profile.p.len() != phases.len() {
        return Err(BeamError::Dimension(format!("profile {} vs phases {}", profile.p.len(), phases.len())));
    }
    Ok(CVector::from_iterator(phases.len(), profile.p.iter().zip(phases.iter()).map(|(p, t)| t * *p)))
}

/// Uniform amplitudes `√(P_RIS/N)`, used when the shaped profile is undefined.
pub fn uniform_profile(n: usize, p_ris: f64) -> AmplificationProfile {
    let amp = (p_ris / n as f64).sqrt();
    AmplificationProfile { p: vec![amp; n], c: f64::NAN }
}
