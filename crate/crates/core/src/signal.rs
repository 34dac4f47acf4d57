//! Multiband wavenumber-domain signal model.
//!
//! A radar sweep sampled at wavenumbers `k1 + dk * l` observes a scene of
//! point scatterers as a sum of complex exponentials. Several radars cover
//! disjoint index intervals (subbands) of one common full-band grid; the
//! unoccupied intervals between them are the frequency gaps that fusion has
//! to impute.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Magnitude ranges below this are treated as constant during normalization.
pub const DEGENERATE_RANGE: f64 = 1e-12;

/// Which side of the Fourier pair a signal lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    /// Wavenumber domain (swept-frequency samples).
    K,
    /// Wavenumber spectral domain (range profile).
    R,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::K => f.write_str("k"),
            Domain::R => f.write_str("R"),
        }
    }
}

/// A contiguous run of occupied samples in full-band index space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subband {
    pub start: usize,
    pub len: usize,
}

impl Subband {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn contains(&self, index: usize) -> bool {
        index >= self.start && index < self.end()
    }
}

/// Subband layout on a common wavenumber grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultibandConfig {
    /// Start wavenumber of the full band (rad/m).
    pub k1: f64,
    /// Wavenumber step (rad/m).
    pub dk: f64,
    /// Full-band length.
    pub n_total: usize,
    pub subbands: Vec<Subband>,
}

impl MultibandConfig {
    pub fn new(k1: f64, dk: f64, n_total: usize, subbands: Vec<Subband>) -> Result<Self> {
        let cfg = Self {
            k1,
            dk,
            n_total,
            subbands,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Two subbands of `bandwidth_hz` each, starting at `f1_hz` and `f2_hz`.
    pub fn two_band(f1_hz: f64, f2_hz: f64, bandwidth_hz: f64, df_hz: f64) -> Result<Self> {
        Self::from_frequencies(df_hz, &[(f1_hz, bandwidth_hz), (f2_hz, bandwidth_hz)])
    }

    /// Build a layout from `(start_hz, bandwidth_hz)` pairs sampled every
    /// `df_hz`. Each subband holds `bandwidth / df` samples; all offsets must
    /// be integral multiples of `df_hz`.
    pub fn from_frequencies(df_hz: f64, bands: &[(f64, f64)]) -> Result<Self> {
        if !(df_hz > 0.0) {
            return Err(Error::Config(format!("frequency step must be positive, got {df_hz}")));
        }
        let first = bands
            .first()
            .ok_or_else(|| Error::Config("at least one subband is required".into()))?;
        let f_start = first.0;
        let mut subbands = Vec::with_capacity(bands.len());
        for &(start_hz, bw_hz) in bands {
            let start = integral_ratio(start_hz - f_start, df_hz, "subband offset")?;
            let len = integral_ratio(bw_hz, df_hz, "subband bandwidth")?;
            subbands.push(Subband { start, len });
        }
        let n_total = subbands.last().map(|b| b.end()).unwrap_or(0);
        let k1 = 2.0 * PI * f_start / SPEED_OF_LIGHT;
        let dk = 2.0 * PI * df_hz / SPEED_OF_LIGHT;
        Self::new(k1, dk, n_total, subbands)
    }

    /// 60 GHz and 77 GHz radars, 4 GHz each, 62.5 MHz steps: `Nk = 64`,
    /// gap offset 272, `N = 336`.
    pub fn canonical() -> Self {
        Self::two_band(60e9, 77e9, 4e9, 62.5e6).expect("canonical layout is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dk > 0.0) || !self.dk.is_finite() {
            return Err(Error::Config(format!("dk must be positive, got {}", self.dk)));
        }
        if !self.k1.is_finite() || self.k1 < 0.0 {
            return Err(Error::Config(format!("k1 must be non-negative, got {}", self.k1)));
        }
        let Some(first) = self.subbands.first() else {
            return Err(Error::Config("at least one subband is required".into()));
        };
        if first.start != 0 {
            return Err(Error::Config("first subband must start at index 0".into()));
        }
        let mut prev_end = 0;
        for (i, band) in self.subbands.iter().enumerate() {
            if band.len < 2 {
                return Err(Error::Config(format!("subband {i} has length {} < 2", band.len)));
            }
            if i > 0 && band.start <= prev_end {
                return Err(Error::Config(format!(
                    "subband {i} starts at {} which overlaps or touches the previous subband",
                    band.start
                )));
            }
            prev_end = band.end();
        }
        if prev_end != self.n_total {
            return Err(Error::Config(format!(
                "last subband ends at {} but the full band has {} samples",
                prev_end, self.n_total
            )));
        }
        Ok(())
    }

    /// Length of the first subband.
    pub fn nk(&self) -> usize {
        self.subbands[0].len
    }

    /// Start index of the second subband, if there is one.
    pub fn gap_offset(&self) -> Option<usize> {
        self.subbands.get(1).map(|b| b.start)
    }

    pub fn wavenumber(&self, index: usize) -> f64 {
        self.k1 + self.dk * index as f64
    }

    pub fn frequency_hz(&self, index: usize) -> f64 {
        self.wavenumber(index) * SPEED_OF_LIGHT / (2.0 * PI)
    }

    pub fn max_frequency_hz(&self) -> f64 {
        self.frequency_hz(self.n_total - 1)
    }

    /// Largest range that does not alias, `pi / dk`.
    pub fn unambiguous_range(&self) -> f64 {
        PI / self.dk
    }

    /// Range spacing of one orthonormal-FFT bin, `pi / (N dk) = c / (2 N df)`.
    pub fn range_bin(&self) -> f64 {
        PI / (self.n_total as f64 * self.dk)
    }

    pub fn is_occupied(&self, index: usize) -> bool {
        self.subbands.iter().any(|b| b.contains(index))
    }

    pub fn occupied_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_total];
        for band in &self.subbands {
            mask[band.start..band.end()].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    pub fn occupied_count(&self) -> usize {
        self.subbands.iter().map(|b| b.len).sum()
    }

    /// Gap intervals as `(start, end)` half-open index pairs.
    pub fn gaps(&self) -> Vec<(usize, usize)> {
        self.subbands
            .windows(2)
            .map(|w| (w[0].end(), w[1].start))
            .collect()
    }
}

fn integral_ratio(value: f64, step: f64, what: &str) -> Result<usize> {
    let ratio = value / step;
    let rounded = ratio.round();
    if rounded < 0.0 || (ratio - rounded).abs() > 1e-9 * rounded.abs().max(1.0) {
        return Err(Error::Config(format!(
            "{what} {value} is not an integral multiple of the step {step}"
        )));
    }
    Ok(rounded as usize)
}

/// One-dimensional point-scatterer scene.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub scatterers: Vec<Scatterer>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub alpha: Complex64,
    /// Range from the radar (m).
    pub range: f64,
}

impl Scene {
    pub fn new(scatterers: Vec<Scatterer>) -> Self {
        Self { scatterers }
    }

    pub fn single(alpha: Complex64, range: f64) -> Self {
        Self::new(vec![Scatterer { alpha, range }])
    }

    /// `n` scatterers with circular standard normal reflectivities and
    /// ranges uniform on `[0, 0.95 * pi / dk]`.
    pub fn random<R: Rng + ?Sized>(n: usize, cfg: &MultibandConfig, rng: &mut R) -> Self {
        let r_max = 0.95 * cfg.unambiguous_range();
        let scatterers = (0..n)
            .map(|_| Scatterer {
                alpha: complex_normal(rng, 1.0),
                range: rng.gen_range(0.0..r_max),
            })
            .collect();
        Self { scatterers }
    }

    pub fn len(&self) -> usize {
        self.scatterers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scatterers.is_empty()
    }
}

/// Circular complex Gaussian sample with total variance `variance`.
pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// A length-N complex vector tagged with its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    pub data: Vec<Complex64>,
    pub domain: Domain,
}

impl ComplexSignal {
    pub fn new(data: Vec<Complex64>, domain: Domain) -> Self {
        Self { data, domain }
    }

    pub fn zeros(len: usize, domain: Domain) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); len], domain)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn expect_domain(&self, expected: Domain) -> Result<()> {
        if self.domain == expected {
            Ok(())
        } else {
            Err(Error::WrongDomain {
                expected,
                got: self.domain,
            })
        }
    }

    fn expect_len(&self, n: usize) -> Result<()> {
        if self.len() == n {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "signal has {} samples, layout expects {n}",
                self.len()
            )))
        }
    }
}

fn check_scene(scene: &Scene, max_range: f64) -> Result<()> {
    if scene.is_empty() {
        return Err(Error::EmptyScene);
    }
    for (index, s) in scene.scatterers.iter().enumerate() {
        if !(s.range >= 0.0 && s.range < max_range) {
            return Err(Error::RangeOutOfBounds {
                index,
                range: s.range,
                max: max_range,
            });
        }
    }
    Ok(())
}

/// Accumulate `alpha * exp(-j 2 (k1 + dk l) r)` for `l = 0..out.len()`.
///
/// The per-sample phase step is applied by complex recurrence, re-anchored
/// every 64 samples from the closed form to bound rounding drift.
pub(crate) fn accumulate_exponential(out: &mut [Complex64], alpha: Complex64, k1: f64, dk: f64, r: f64) {
    const ANCHOR: usize = 64;
    let step = Complex64::from_polar(1.0, -2.0 * dk * r);
    for (block, chunk) in out.chunks_mut(ANCHOR).enumerate() {
        let l0 = (block * ANCHOR) as f64;
        let mut phasor = alpha * Complex64::from_polar(1.0, -2.0 * (k1 + dk * l0) * r);
        for z in chunk {
            *z += phasor;
            phasor *= step;
        }
    }
}

/// Ideal full-band k-domain response of `scene`.
pub fn synth_fullband(scene: &Scene, cfg: &MultibandConfig) -> Result<ComplexSignal> {
    check_scene(scene, cfg.unambiguous_range())?;
    let mut data = vec![Complex64::new(0.0, 0.0); cfg.n_total];
    for s in &scene.scatterers {
        accumulate_exponential(&mut data, s.alpha, cfg.k1, cfg.dk, s.range);
    }
    Ok(ComplexSignal::new(data, Domain::K))
}

/// Zero every sample that falls outside the subbands.
pub fn mask_gap(full: &ComplexSignal, cfg: &MultibandConfig) -> Result<ComplexSignal> {
    full.expect_domain(Domain::K)?;
    full.expect_len(cfg.n_total)?;
    let mask = cfg.occupied_mask();
    let data = full
        .data
        .iter()
        .zip(&mask)
        .map(|(&z, &m)| if m { z } else { Complex64::new(0.0, 0.0) })
        .collect();
    Ok(ComplexSignal::new(data, Domain::K))
}

/// Add circular white Gaussian noise to the occupied samples.
///
/// The noise variance is the mean occupied-sample power divided by the
/// linear SNR. `snr_db = +inf` returns the input unchanged.
pub fn add_noise(
    sig: &ComplexSignal,
    cfg: &MultibandConfig,
    snr_db: f64,
    seed: u64,
) -> Result<ComplexSignal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise_with_rng(sig, cfg, snr_db, &mut rng)
}

pub(crate) fn add_noise_with_rng<R: Rng + ?Sized>(
    sig: &ComplexSignal,
    cfg: &MultibandConfig,
    snr_db: f64,
    rng: &mut R,
) -> Result<ComplexSignal> {
    sig.expect_domain(Domain::K)?;
    sig.expect_len(cfg.n_total)?;
    if snr_db == f64::INFINITY {
        return Ok(sig.clone());
    }
    if snr_db.is_nan() {
        return Err(Error::Config("SNR must not be NaN".into()));
    }
    let occupied = cfg.occupied_count();
    let power: f64 = cfg
        .subbands
        .iter()
        .flat_map(|b| sig.data[b.start..b.end()].iter())
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        / occupied as f64;
    let variance = power / 10f64.powf(snr_db / 10.0);
    let mut out = sig.clone();
    for band in &cfg.subbands {
        for z in &mut out.data[band.start..band.end()] {
            *z += complex_normal(rng, variance);
        }
    }
    Ok(out)
}

/// Statistics of the magnitude min-max map applied to an R-domain signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mag_min: f64,
    pub mag_max: f64,
}

impl NormStats {
    pub fn from_magnitudes(data: &[Complex64]) -> Self {
        let (mag_min, mag_max) = data.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), z| {
            let m = z.norm();
            (lo.min(m), hi.max(m))
        });
        Self {
            mag_min: if mag_min.is_finite() { mag_min } else { 0.0 },
            mag_max,
        }
    }

    pub fn range(&self) -> f64 {
        self.mag_max - self.mag_min
    }

    /// All magnitudes were (numerically) equal, so the map is undefined.
    pub fn is_degenerate(&self) -> bool {
        self.range() < DEGENERATE_RANGE
    }

    /// Map magnitudes `m -> (m - min) / (max - min)`, keeping the phase.
    /// Magnitudes below `min` clamp to zero. A degenerate range maps
    /// everything to zero.
    pub fn apply_in_place(&self, data: &mut [Complex64]) {
        if self.is_degenerate() {
            data.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            return;
        }
        let inv_range = 1.0 / self.range();
        for z in data {
            let m = z.norm();
            if m > 0.0 {
                let scaled = ((m - self.mag_min) * inv_range).max(0.0);
                *z *= scaled / m;
            }
        }
    }

    /// Inverse magnitude map `m -> m (max - min) + min`; zero samples stay
    /// zero since their phase is undefined.
    pub fn invert_in_place(&self, data: &mut [Complex64]) {
        if self.is_degenerate() {
            return;
        }
        let range = self.range();
        for z in data {
            let m = z.norm();
            if m > 0.0 {
                *z *= (m * range + self.mag_min) / m;
            }
        }
    }
}

/// Magnitude min-max normalization of an R-domain signal.
pub fn normalize_rdomain(sig: &ComplexSignal) -> Result<(ComplexSignal, NormStats)> {
    sig.expect_domain(Domain::R)?;
    let stats = NormStats::from_magnitudes(&sig.data);
    let mut out = sig.clone();
    stats.apply_in_place(&mut out.data);
    Ok((out, stats))
}

/// Undo [`normalize_rdomain`] with the recorded statistics.
pub fn denormalize_rdomain(sig: &ComplexSignal, stats: &NormStats) -> Result<ComplexSignal> {
    sig.expect_domain(Domain::R)?;
    let mut out = sig.clone();
    stats.invert_in_place(&mut out.data);
    Ok(out)
}

/// Cached unitary DFT of one length.
///
/// The k-to-R direction uses the positive exponent `exp(+j 2 pi m l / N)`,
/// so that a scatterer whose phase advances as `exp(-j 2 k R)` lands on bin
/// `R / range_bin` rather than its mirror.
#[derive(Clone)]
pub struct OrthoFft {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl OrthoFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_inverse(n),
            inverse: planner.plan_fft_forward(n),
            scale: 1.0 / (n as f64).sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.forward.process(data);
        data.iter_mut().for_each(|z| *z *= self.scale);
    }

    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
        data.iter_mut().for_each(|z| *z *= self.scale);
    }

    /// k -> R.
    pub fn to_r(&self, sig: &ComplexSignal) -> Result<ComplexSignal> {
        sig.expect_domain(Domain::K)?;
        sig.expect_len(self.len())?;
        let mut data = sig.data.clone();
        self.forward_in_place(&mut data);
        Ok(ComplexSignal::new(data, Domain::R))
    }

    /// R -> k.
    pub fn to_k(&self, sig: &ComplexSignal) -> Result<ComplexSignal> {
        sig.expect_domain(Domain::R)?;
        sig.expect_len(self.len())?;
        let mut data = sig.data.clone();
        self.inverse_in_place(&mut data);
        Ok(ComplexSignal::new(data, Domain::K))
    }
}

impl fmt::Debug for OrthoFft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OrthoFft").field("len", &self.len()).finish()
    }
}

/// Unitary DFT, k-domain to R-domain.
pub fn fft_ortho(sig: &ComplexSignal) -> Result<ComplexSignal> {
    OrthoFft::new(sig.len()).to_r(sig)
}

/// Unitary inverse DFT, R-domain to k-domain.
pub fn ifft_ortho(sig: &ComplexSignal) -> Result<ComplexSignal> {
    OrthoFft::new(sig.len()).to_k(sig)
}
