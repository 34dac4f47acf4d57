use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::{
    accumulate_exponential, add_noise_with_rng, complex_normal, ComplexSignal, Domain, MultibandConfig,
    SPEED_OF_LIGHT,
};

/// Planar monostatic scan in the z = 0 plane, centred on the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ApertureConfig {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub cfg: MultibandConfig,
}

impl ApertureConfig {
    /// `n x n` elements at a quarter wavelength of the highest frequency.
    pub fn quarter_wave(n: usize, cfg: MultibandConfig) -> Self {
        let pitch = cfg_lambda_min(&cfg) / 4.0;
        Self {
            nx: n,
            ny: n,
            dx: pitch,
            dy: pitch,
            cfg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::Config("aperture needs at least one element per axis".into()));
        }
        if !(self.dx > 0.0 && self.dy > 0.0) {
            return Err(Error::Config("element spacing must be positive".into()));
        }
        if self.is_undersampled() {
            log::warn!(
                "aperture spacing {:.3e} x {:.3e} m exceeds lambda/4 = {:.3e} m; expect aliasing",
                self.dx,
                self.dy,
                self.lambda_min() / 4.0
            );
        }
        Ok(())
    }

    /// Wavelength at the highest in-band frequency.
    pub fn lambda_min(&self) -> f64 {
        cfg_lambda_min(&self.cfg)
    }

    pub fn is_undersampled(&self) -> bool {
        let limit = self.lambda_min() / 4.0 * (1.0 + 1e-12);
        self.dx > limit || self.dy > limit
    }

    pub fn element_count(&self) -> usize {
        self.nx * self.ny
    }

    /// x coordinate of column `ix`.
    pub fn x(&self, ix: usize) -> f64 {
        (ix as f64 - (self.nx as f64 - 1.0) / 2.0) * self.dx
    }

    pub fn y(&self, iy: usize) -> f64 {
        (iy as f64 - (self.ny as f64 - 1.0) / 2.0) * self.dy
    }
}

fn cfg_lambda_min(cfg: &MultibandConfig) -> f64 {
    SPEED_OF_LIGHT / cfg.max_frequency_hz()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScattererXYZ {
    pub alpha: Complex64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl ScattererXYZ {
    /// Distance to the aperture element at `(xa, ya, 0)`.
    pub fn range_from(&self, xa: f64, ya: f64) -> f64 {
        ((xa - self.x).powi(2) + (ya - self.y).powi(2) + self.z.powi(2)).sqrt()
    }
}

/// Point targets in front of the aperture.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneXYZ {
    pub scatterers: Vec<ScattererXYZ>,
}

impl SceneXYZ {
    pub fn new(scatterers: Vec<ScattererXYZ>) -> Self {
        Self { scatterers }
    }

    pub fn point(x: f64, y: f64, z: f64) -> Self {
        Self::new(vec![ScattererXYZ {
            alpha: Complex64::new(1.0, 0.0),
            x,
            y,
            z,
        }])
    }

    /// `n` targets with circular normal reflectivities, uniform in the box
    /// `[-half_xy, half_xy]^2 x [z_min, z_max]`.
    pub fn random<R: Rng + ?Sized>(n: usize, half_xy: f64, z_min: f64, z_max: f64, rng: &mut R) -> Self {
        let scatterers = (0..n)
            .map(|_| ScattererXYZ {
                alpha: complex_normal(rng, 1.0),
                x: rng.gen_range(-half_xy..=half_xy),
                y: rng.gen_range(-half_xy..=half_xy),
                z: rng.gen_range(z_min..z_max),
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

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyScene);
        }
        if let Some(i) = self.scatterers.iter().position(|s| !(s.z > 0.0)) {
            return Err(Error::Config(format!(
                "scatterer {i} must lie in front of the aperture (z > 0)"
            )));
        }
        Ok(())
    }
}

/// Which samples a simulated element records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Every full-band sample.
    FullBand,
    /// Subband samples only; gaps are zero.
    Multiband,
}

/// k-domain samples of every aperture element, element `(ix, iy)` at
/// `(iy * nx + ix) * n .. + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApertureData {
    pub nx: usize,
    pub ny: usize,
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl ApertureData {
    pub fn zeros(nx: usize, ny: usize, n: usize) -> Self {
        Self {
            nx,
            ny,
            n,
            data: vec![Complex64::new(0.0, 0.0); nx * ny * n],
        }
    }

    pub fn element(&self, ix: usize, iy: usize) -> &[Complex64] {
        let s = (iy * self.nx + ix) * self.n;
        &self.data[s..s + self.n]
    }

    pub fn element_mut(&mut self, ix: usize, iy: usize) -> &mut [Complex64] {
        let s = (iy * self.nx + ix) * self.n;
        &mut self.data[s..s + self.n]
    }

    /// Every element as a k-domain signal, row-major in `(iy, ix)`.
    pub fn signals(&self) -> Vec<ComplexSignal> {
        self.data
            .chunks_exact(self.n)
            .map(|c| ComplexSignal::new(c.to_vec(), Domain::K))
            .collect()
    }

    pub fn from_signals(nx: usize, ny: usize, signals: &[ComplexSignal]) -> Result<Self> {
        if signals.len() != nx * ny {
            return Err(Error::Shape(format!(
                "{} signals for a {nx} x {ny} aperture",
                signals.len()
            )));
        }
        let n = signals.first().map(|s| s.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(nx * ny * n);
        for s in signals {
            s.expect_domain(Domain::K)?;
            if s.len() != n {
                return Err(Error::Shape("aperture signals must share one length".into()));
            }
            data.extend_from_slice(&s.data);
        }
        Ok(Self { nx, ny, n, data })
    }

    /// Number of samples that carry data under `cfg`'s subband layout.
    pub fn occupied_sample_count(&self, cfg: &MultibandConfig) -> usize {
        self.nx * self.ny * cfg.occupied_count()
    }

    /// Copy with gap samples zeroed.
    pub fn masked(&self, cfg: &MultibandConfig) -> Self {
        let mask = cfg.occupied_mask();
        let mut out = self.clone();
        for chunk in out.data.chunks_exact_mut(self.n) {
            for (z, &m) in chunk.iter_mut().zip(&mask) {
                if !m {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
        }
        out
    }
}

/// Per-element response `sum_i alpha_i exp(-j 2 k R_i)` with the element
/// range from the scan geometry; optional noise on occupied samples, one
/// RNG stream per element.
pub fn simulate_aperture(
    scene: &SceneXYZ,
    ap: &ApertureConfig,
    snr_db: f64,
    seed: u64,
    mode: SampleMode,
) -> Result<ApertureData> {
    scene.validate()?;
    ap.validate()?;
    let n = ap.cfg.n_total;
    let mask = ap.cfg.occupied_mask();
    let mut out = ApertureData::zeros(ap.nx, ap.ny, n);
    out.data
        .par_chunks_mut(n)
        .enumerate()
        .try_for_each(|(e, samples)| -> Result<()> {
            let (ix, iy) = (e % ap.nx, e / ap.nx);
            let (xa, ya) = (ap.x(ix), ap.y(iy));
            for s in &scene.scatterers {
                accumulate_exponential(samples, s.alpha, ap.cfg.k1, ap.cfg.dk, s.range_from(xa, ya));
            }
            if mode == SampleMode::Multiband {
                for (z, &m) in samples.iter_mut().zip(&mask) {
                    if !m {
                        *z = Complex64::new(0.0, 0.0);
                    }
                }
            }
            if snr_db != f64::INFINITY {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(e as u64);
                let sig = ComplexSignal::new(samples.to_vec(), Domain::K);
                let noisy = match mode {
                    SampleMode::Multiband => add_noise_with_rng(&sig, &ap.cfg, snr_db, &mut rng)?,
                    SampleMode::FullBand => {
                        let full = MultibandConfig::new(ap.cfg.k1, ap.cfg.dk, n, vec![crate::signal::Subband {
                            start: 0,
                            len: n,
                        }])?;
                        add_noise_with_rng(&sig, &full, snr_db, &mut rng)?
                    }
                };
                samples.copy_from_slice(&noisy.data);
            }
            Ok(())
        })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_aperture(n: usize) -> ApertureConfig {
        ApertureConfig::quarter_wave(n, MultibandConfig::canonical())
    }

    #[test]
    fn boresight_and_offset_ranges() {
        let t = SceneXYZ::point(0.0, 0.0, 0.3).scatterers[0];
        assert_eq!(t.range_from(0.0, 0.0), 0.3);
        assert_eq!(t.range_from(0.01, 0.0), (0.0001f64 + 0.09).sqrt());
    }

    #[test]
    fn element_signal_matches_closed_form() {
        let mut ap = small_aperture(3);
        ap.nx = 3;
        let scene = SceneXYZ::point(0.002, -0.001, 0.3);
        let data = simulate_aperture(&scene, &ap, f64::INFINITY, 0, SampleMode::FullBand).unwrap();
        let r = scene.scatterers[0].range_from(ap.x(2), ap.y(0));
        for (l, z) in data.element(2, 0).iter().enumerate() {
            let expect = Complex64::from_polar(1.0, -2.0 * ap.cfg.wavenumber(l) * r);
            assert!((z - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn multiband_sample_count_and_gaps() {
        let ap = small_aperture(4);
        let scene = SceneXYZ::point(0.0, 0.0, 0.3);
        let data = simulate_aperture(&scene, &ap, 20.0, 1, SampleMode::Multiband).unwrap();
        let nonzero = data.data.iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, data.occupied_sample_count(&ap.cfg));
        assert_eq!(data.occupied_sample_count(&ap.cfg), 4 * 4 * 128);
        let again = simulate_aperture(&scene, &ap, 20.0, 1, SampleMode::Multiband).unwrap();
        assert_eq!(data, again);
    }

    #[test]
    fn quarter_wave_pitch() {
        let ap = small_aperture(32);
        assert!((ap.dx - SPEED_OF_LIGHT / ap.cfg.max_frequency_hz() / 4.0).abs() < 1e-15);
        assert!((ap.dx - 0.926e-3).abs() < 1e-6);
        assert!(!ap.is_undersampled());
        let coarse = ApertureConfig { dx: ap.dx * 2.0, ..ap };
        assert!(coarse.is_undersampled());
        assert!(coarse.validate().is_ok());
    }

    #[test]
    fn scene_validation() {
        assert!(matches!(SceneXYZ::default().validate(), Err(Error::EmptyScene)));
        assert!(SceneXYZ::point(0.0, 0.0, -0.1).validate().is_err());
    }
}
