//! Monostatic planar range migration.
//!
//! The aperture data are zero-padded to twice their extent, taken to the
//! spatial frequency domain per wavenumber, Stolt-resampled onto a uniform
//! `kz` grid with the dispersion `kz^2 = 4k^2 - kx^2 - ky^2`, and inverted
//! by a 3-D FFT. Before resampling, the spectrum is multiplied by
//! `exp(j kz z_ref)` so the phase ramp seen by the interpolator only
//! depends on the distance to `z_ref`; the matching `exp(-j kz z_ref)` is
//! applied on the uniform grid, which leaves the image unchanged in the
//! exact limit but keeps linear interpolation accurate near `z_ref`.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::aperture::{ApertureConfig, ApertureData};
use super::volume::{ComplexVolume, Grid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Linear,
    /// Catmull-Rom cubic.
    Cubic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmaOptions {
    pub interpolation: Interpolation,
    /// Reference depth for the phase pre-compensation, meters.
    pub z_ref: f64,
    /// Zero-padding factor of the `kz` spectrum (finer z sampling).
    pub z_upsample: usize,
    /// Keep only the `nx x ny` region under the aperture.
    pub crop: bool,
    /// Keep only voxels with z inside `[lo, hi]`.
    pub z_window: Option<(f64, f64)>,
}

impl Default for RmaOptions {
    fn default() -> Self {
        Self {
            interpolation: Interpolation::Linear,
            z_ref: 0.3,
            z_upsample: 1,
            crop: true,
            z_window: None,
        }
    }
}

struct Plans {
    x_fwd: Arc<dyn Fft<f64>>,
    y_fwd: Arc<dyn Fft<f64>>,
    x_inv: Arc<dyn Fft<f64>>,
    y_inv: Arc<dyn Fft<f64>>,
    z_inv: Arc<dyn Fft<f64>>,
}

/// Signed spatial frequency of FFT bin `p` for `len` samples at `pitch`.
fn spatial_frequency(p: usize, len: usize, pitch: f64) -> f64 {
    let s = if p < len.div_ceil(2) { p as f64 } else { p as f64 - len as f64 };
    2.0 * std::f64::consts::PI * s / (len as f64 * pitch)
}

/// 2-D FFT of a row-major `px x py` plane.
fn fft2(plane: &mut [Complex64], px: usize, py: usize, x: &dyn Fft<f64>, y: &dyn Fft<f64>) {
    for row in plane.chunks_exact_mut(px) {
        x.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); py];
    for ix in 0..px {
        for (iy, c) in col.iter_mut().enumerate() {
            *c = plane[iy * px + ix];
        }
        y.process(&mut col);
        for (iy, c) in col.iter().enumerate() {
            plane[iy * px + ix] = *c;
        }
    }
}

fn sample(column: &[Complex64], u: f64, interp: Interpolation) -> Complex64 {
    let n = column.len();
    let i = u.floor() as isize;
    let t = u - i as f64;
    let at = |j: isize| -> Complex64 {
        if j < 0 || j as usize >= n {
            Complex64::new(0.0, 0.0)
        } else {
            column[j as usize]
        }
    };
    match interp {
        Interpolation::Linear => at(i) * (1.0 - t) + at(i + 1) * t,
        Interpolation::Cubic => {
            let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
            let t2 = t * t;
            let t3 = t2 * t;
            (p1 * 2.0
                + (p2 - p0) * t
                + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2
                + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * t3)
                * 0.5
        }
    }
}

/// Complex reconstruction of full-band aperture data.
pub fn rma_reconstruct_complex(data: &ApertureData, ap: &ApertureConfig, opts: &RmaOptions) -> Result<ComplexVolume> {
    ap.validate()?;
    let n = ap.cfg.n_total;
    if data.nx != ap.nx || data.ny != ap.ny || data.n != n || data.data.len() != ap.nx * ap.ny * n {
        return Err(Error::Shape(format!(
            "aperture data {} x {} x {} does not match the {} x {} x {} configuration",
            data.nx, data.ny, data.n, ap.nx, ap.ny, n
        )));
    }
    if opts.z_upsample == 0 {
        return Err(Error::Config("z_upsample must be at least 1".into()));
    }
    let (px, py) = (2 * ap.nx, 2 * ap.ny);
    let nz = n * opts.z_upsample;
    let plane_len = px * py;
    let mut planner = FftPlanner::new();
    let plans = Plans {
        x_fwd: planner.plan_fft_forward(px),
        y_fwd: planner.plan_fft_forward(py),
        x_inv: planner.plan_fft_inverse(px),
        y_inv: planner.plan_fft_inverse(py),
        z_inv: planner.plan_fft_inverse(nz),
    };
    let kx: Vec<f64> = (0..px).map(|p| spatial_frequency(p, px, ap.dx)).collect();
    let ky: Vec<f64> = (0..py).map(|p| spatial_frequency(p, py, ap.dy)).collect();
    let (k1, dk, z_ref) = (ap.cfg.k1, ap.cfg.dk, opts.z_ref);

    // Spatial spectrum per wavenumber, with the reference phase applied.
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n * plane_len];
    spectrum.par_chunks_mut(plane_len).enumerate().for_each(|(l, plane)| {
        for iy in 0..ap.ny {
            for ix in 0..ap.nx {
                plane[iy * px + ix] = data.element(ix, iy)[l];
            }
        }
        fft2(plane, px, py, plans.x_fwd.as_ref(), plans.y_fwd.as_ref());
        let k2 = 4.0 * (k1 + dk * l as f64).powi(2);
        for (iy, &vy) in ky.iter().enumerate() {
            for (ix, &vx) in kx.iter().enumerate() {
                let radicand = k2 - vx * vx - vy * vy;
                let z = &mut plane[iy * px + ix];
                *z = if radicand < 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    *z * Complex64::from_polar(1.0, radicand.sqrt() * z_ref)
                };
            }
        }
    });

    // Stolt resampling and the inverse transform along z, per spatial bin.
    let columns: Vec<Vec<Complex64>> = (0..plane_len)
        .into_par_iter()
        .map(|s| {
            let (vx, vy) = (kx[s % px], ky[s / px]);
            let rho2 = vx * vx + vy * vy;
            let column: Vec<Complex64> = (0..n).map(|l| spectrum[l * plane_len + s]).collect();
            let mut out = vec![Complex64::new(0.0, 0.0); nz];
            for (m, o) in out.iter_mut().take(n).enumerate() {
                let kz = 2.0 * (k1 + dk * m as f64);
                let k = 0.5 * (kz * kz + rho2).sqrt();
                let u = (k - k1) / dk;
                if u < 0.0 || u > (n - 1) as f64 {
                    continue;
                }
                *o = sample(&column, u, opts.interpolation) * Complex64::from_polar(1.0, -kz * z_ref);
            }
            plans.z_inv.process(&mut out);
            out
        })
        .collect();
    drop(spectrum);

    let mut image = vec![Complex64::new(0.0, 0.0); nz * plane_len];
    image.par_chunks_mut(plane_len).enumerate().for_each(|(q, plane)| {
        for (s, c) in columns.iter().enumerate() {
            plane[s] = c[q];
        }
        fft2(plane, px, py, plans.x_inv.as_ref(), plans.y_inv.as_ref());
    });
    drop(columns);

    let scale = 1.0 / ((plane_len * nz) as f64).sqrt();
    let z_pitch = std::f64::consts::PI / (nz as f64 * dk);
    let (ox, oy) = (ap.x(0), ap.y(0));
    let (nx_out, ny_out) = if opts.crop { (ap.nx, ap.ny) } else { (px, py) };
    let (z_lo, z_hi) = match opts.z_window {
        Some((lo, hi)) => {
            if !(hi > lo) {
                return Err(Error::Config(format!("empty z window [{lo}, {hi}]")));
            }
            let lo = (lo / z_pitch).ceil().max(0.0) as usize;
            let hi = ((hi / z_pitch).floor() as usize).min(nz - 1);
            if lo > hi {
                return Err(Error::Config("z window contains no voxels".into()));
            }
            (lo, hi)
        }
        None => (0, nz - 1),
    };
    let nz_out = z_hi - z_lo + 1;
    let mut out = Vec::with_capacity(nx_out * ny_out * nz_out);
    for q in z_lo..=z_hi {
        let plane = &image[q * plane_len..(q + 1) * plane_len];
        for iy in 0..ny_out {
            out.extend(plane[iy * px..iy * px + nx_out].iter().map(|z| z * scale));
        }
    }
    Ok(ComplexVolume {
        grid: Grid {
            dims: [nx_out, ny_out, nz_out],
            origin: [ox as f32, oy as f32, (z_lo as f64 * z_pitch) as f32],
            pitch: [ap.dx as f32, ap.dy as f32, z_pitch as f32],
        },
        data: out,
    })
}

/// Magnitude reconstruction of full-band aperture data.
pub fn rma_reconstruct(data: &ApertureData, ap: &ApertureConfig, opts: &RmaOptions) -> Result<super::Volume> {
    Ok(rma_reconstruct_complex(data, ap, opts)?.magnitude())
}
