use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::{ComplexSignal, Domain, OrthoFft};

/// Magnitude of the unitary k-to-R transform.
pub fn range_profile(sig: &ComplexSignal) -> Result<Vec<f64>> {
    upsampled_range_profile(sig, 1)
}

/// Range profile on a grid `factor` times finer, by zero-padding the k
/// samples. Bin `q` sits at `q * range_bin / factor`.
pub fn upsampled_range_profile(sig: &ComplexSignal, factor: usize) -> Result<Vec<f64>> {
    sig.expect_domain(Domain::K)?;
    if factor == 0 {
        return Err(Error::Config("upsampling factor must be at least 1".into()));
    }
    let n = sig.len();
    let mut data = sig.data.clone();
    data.resize(n * factor, Complex64::new(0.0, 0.0));
    OrthoFft::new(n * factor).forward_in_place(&mut data);
    // Keep the native unitary scale: a unit scatterer peaks at sqrt(N).
    let s = (factor as f64).sqrt();
    Ok(data.iter().map(|z| z.norm() * s).collect())
}

/// Range, meters, of each profile bin.
pub fn range_axis(len: usize, range_bin: f64, factor: usize) -> Vec<f64> {
    (0..len).map(|q| q as f64 * range_bin / factor as f64).collect()
}

/// Interior strict local maxima (plateaus report their first sample).
pub fn local_maxima(p: &[f64]) -> Vec<usize> {
    (1..p.len().saturating_sub(1))
        .filter(|&i| p[i] > p[i - 1] && p[i] >= p[i + 1])
        .collect()
}

/// Local maxima within `db` of the global maximum.
pub fn dominant_peaks(p: &[f64], db: f64) -> Vec<usize> {
    let top = p.iter().copied().fold(0.0, f64::max);
    let floor = top * 10f64.powf(-db / 20.0);
    local_maxima(p).into_iter().filter(|&i| p[i] >= floor).collect()
}

/// Peak-to-sidelobe ratio in dB: the highest value near `targets` over the
/// highest local maximum farther than `exclusion` bins from every target.
/// Infinite when nothing qualifies as a sidelobe.
pub fn pslr_db(p: &[f64], targets: &[usize], exclusion: usize) -> f64 {
    let near = |i: usize| targets.iter().any(|&t| i.abs_diff(t) <= exclusion);
    let peak = (0..p.len()).filter(|&i| near(i)).map(|i| p[i]).fold(0.0, f64::max);
    let side = local_maxima(p)
        .into_iter()
        .filter(|&i| !near(i))
        .map(|i| p[i])
        .fold(0.0, f64::max);
    if side == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (peak / side).log10()
    }
}
