//! Classical fusion baselines: zero-fill (MFT) and matrix-pencil
//! extrapolation across the gap.
//!
//! The matrix-pencil variant here fits one all-pole model jointly to both
//! subbands: poles are estimated per subband, pooled, and the amplitudes are
//! refitted over every measured sample. Reports label it "MPA (joint)".

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::{ComplexSignal, Domain, MultibandConfig};

/// Pooled poles closer than this are treated as one.
pub const POLE_DEDUP_DISTANCE: f64 = 1e-4;
/// Poles with modulus outside this interval are discarded before the refit.
pub const POLE_MODULUS_RANGE: (f64, f64) = (0.5, 2.0);

/// Zero-fill fusion: the gap-masked signal itself. Its orthonormal FFT is
/// the MFT range profile.
pub fn mft_fuse(multiband: &ComplexSignal, cfg: &MultibandConfig) -> Result<ComplexSignal> {
    multiband.expect_domain(Domain::K)?;
    if multiband.len() != cfg.n_total {
        return Err(Error::Shape(format!(
            "signal has {} samples, layout expects {}",
            multiband.len(),
            cfg.n_total
        )));
    }
    Ok(multiband.clone())
}

/// Largest admissible model order for `nk` samples, `round(nk / 3)`.
pub fn order_cap(nk: usize) -> usize {
    (nk as f64 / 3.0).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PencilConfig {
    /// Pencil dimension `L` of the Hankel data matrix.
    pub pencil_param: usize,
    /// Cap on the selected model order.
    pub max_order: usize,
    /// Singular values below `threshold * sigma_max` are treated as noise.
    pub svd_rel_threshold: f64,
}

impl PencilConfig {
    /// `L = nk / 2`, order capped at `round(nk / 3)`, threshold `1e-3`.
    pub fn for_len(nk: usize) -> Self {
        Self {
            pencil_param: nk / 2,
            max_order: order_cap(nk).max(1),
            svd_rel_threshold: 1e-3,
        }
    }

    pub fn validate(&self, nk: usize) -> Result<()> {
        let cap = order_cap(nk);
        if self.pencil_param < cap || self.pencil_param > nk / 2 {
            return Err(Error::Config(format!(
                "pencil parameter {} outside [{cap}, {}] for {nk} samples",
                self.pencil_param,
                nk / 2
            )));
        }
        if self.max_order < 1 || self.max_order > cap {
            return Err(Error::Config(format!(
                "model order cap {} outside [1, {cap}] for {nk} samples",
                self.max_order
            )));
        }
        if !(self.svd_rel_threshold > 0.0 && self.svd_rel_threshold < 1.0) {
            return Err(Error::Config(format!(
                "singular value threshold {} must lie in (0, 1)",
                self.svd_rel_threshold
            )));
        }
        Ok(())
    }
}

/// Sum-of-exponentials model `x(l) = sum_i a_i z_i^(l - ref_index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleModel {
    pub poles: Vec<Complex64>,
    pub amps: Vec<Complex64>,
    pub ref_index: usize,
}

impl PoleModel {
    pub fn order(&self) -> usize {
        self.poles.len()
    }

    pub fn evaluate(&self, index: usize) -> Complex64 {
        let n = index as i64 - self.ref_index as i64;
        self.poles
            .iter()
            .zip(&self.amps)
            .map(|(z, a)| a * z.powi(n as i32))
            .sum()
    }
}

/// Matrix-pencil estimate of a sum of (possibly damped) exponentials.
pub fn mpa_estimate(samples: &[Complex64], pcfg: &PencilConfig) -> Result<PoleModel> {
    let nk = samples.len();
    if nk < 3 * pcfg.max_order {
        return Err(Error::Config(format!(
            "{nk} samples cannot support model order {}",
            pcfg.max_order
        )));
    }
    pcfg.validate(nk)?;
    let l = pcfg.pencil_param;
    let rows = nk - l;
    let hankel = DMatrix::from_fn(rows, l + 1, |i, j| samples[i + j]);
    // The SVD is taken of the (tall) adjoint: nalgebra 0.33 returns wrong
    // factors for wide complex matrices. Left vectors of X^H are the right
    // vectors of X.
    let svd = hankel.adjoint().svd(true, false);
    let u = svd
        .u
        .as_ref()
        .ok_or_else(|| Error::Pencil("SVD did not return singular vectors".into()))?;

    let mut order_idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    order_idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma_max = svd.singular_values[order_idx[0]];
    if !(sigma_max > 0.0) || !sigma_max.is_finite() {
        return Err(Error::Pencil(format!(
            "data matrix has rank 0 (largest singular value {sigma_max})"
        )));
    }
    let order = order_idx
        .iter()
        .take_while(|&&i| svd.singular_values[i] >= pcfg.svd_rel_threshold * sigma_max)
        .count()
        .clamp(1, pcfg.max_order);

    // Rows of V^H spanning the signal subspace; dropping the last / first
    // column gives the unshifted / shifted pencil.
    let vh = DMatrix::from_fn(order, l + 1, |r, c| u[(c, order_idx[r])].conj());
    let v1 = vh.columns(0, l).into_owned();
    let v2 = vh.columns(1, l).into_owned();
    let v1_pinv = v1
        .adjoint()
        .pseudo_inverse(1e-14)
        .map_err(|e| Error::Pencil(format!("pencil pseudo-inverse failed: {e}")))?
        .adjoint();
    let pencil = &v2 * v1_pinv;
    let poles: Vec<Complex64> = nalgebra::linalg::Schur::new(pencil)
        .eigenvalues()
        .ok_or_else(|| {
            Error::Pencil(format!(
                "eigenvalue extraction failed at order {order}; singular values {:?}",
                order_idx
                    .iter()
                    .take(order + 2)
                    .map(|&i| svd.singular_values[i])
                    .collect::<Vec<_>>()
            ))
        })?
        .iter()
        .copied()
        .collect();
    if poles.iter().any(|z| !z.is_finite()) {
        return Err(Error::Pencil(format!("non-finite poles {poles:?}")));
    }

    let indices: Vec<usize> = (0..nk).collect();
    let amps = fit_amplitudes(&poles, &indices, samples, 0)?;
    Ok(PoleModel {
        poles,
        amps,
        ref_index: 0,
    })
}

/// Least-squares amplitudes of `poles` at sample `indices` (relative to
/// `ref_index`). Columns are scaled to unit norm before the solve so damped
/// and growing poles are weighted evenly.
fn fit_amplitudes(
    poles: &[Complex64],
    indices: &[usize],
    values: &[Complex64],
    ref_index: usize,
) -> Result<Vec<Complex64>> {
    let m = indices.len();
    let p = poles.len();
    let mut a = DMatrix::from_fn(m, p, |r, c| {
        poles[c].powi((indices[r] as i64 - ref_index as i64) as i32)
    });
    let mut scales = vec![1.0; p];
    for (c, scale) in scales.iter_mut().enumerate() {
        let norm = a.column(c).norm();
        if norm > 0.0 && norm.is_finite() {
            *scale = norm;
            a.column_mut(c).unscale_mut(norm);
        }
    }
    let b = DMatrix::from_fn(m, 1, |r, _| values[r]);
    let solution = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Pencil(format!("amplitude least squares failed: {e}")))?;
    let amps: Vec<Complex64> = (0..p).map(|c| solution[(c, 0)] / scales[c]).collect();
    if amps.iter().any(|a| !a.is_finite()) {
        return Err(Error::Pencil("non-finite amplitudes".into()));
    }
    Ok(amps)
}

/// Pencil settings for one subband: `pcfg` when it is admissible for that
/// length, otherwise the defaults for the length.
fn pencil_for(pcfg: &PencilConfig, len: usize) -> PencilConfig {
    if pcfg.validate(len).is_ok() {
        *pcfg
    } else {
        PencilConfig {
            svd_rel_threshold: pcfg.svd_rel_threshold,
            ..PencilConfig::for_len(len)
        }
    }
}

/// Pool, filter and deduplicate poles from several per-subband models.
fn pool_poles<'a>(models: impl IntoIterator<Item = &'a PoleModel>) -> Vec<Complex64> {
    let (lo, hi) = POLE_MODULUS_RANGE;
    let mut pooled: Vec<Complex64> = Vec::new();
    for z in models.into_iter().flat_map(|m| m.poles.iter()) {
        let r = z.norm();
        if r < lo || r > hi {
            continue;
        }
        if pooled.iter().all(|q| (q - z).norm() >= POLE_DEDUP_DISTANCE) {
            pooled.push(*z);
        }
    }
    pooled
}

/// Fit a common pole model to both subbands and return the full-band model.
pub fn mpa_joint_model(
    multiband: &ComplexSignal,
    cfg: &MultibandConfig,
    pcfg: &PencilConfig,
) -> Result<PoleModel> {
    multiband.expect_domain(Domain::K)?;
    if cfg.subbands.len() != 2 {
        return Err(Error::Config(format!(
            "matrix-pencil fusion handles exactly two subbands, got {}; \
             fuse adjacent pairs one gap at a time",
            cfg.subbands.len()
        )));
    }
    if multiband.len() != cfg.n_total {
        return Err(Error::Shape(format!(
            "signal has {} samples, layout expects {}",
            multiband.len(),
            cfg.n_total
        )));
    }
    let models = cfg
        .subbands
        .iter()
        .map(|b| {
            let samples = &multiband.data[b.start..b.end()];
            mpa_estimate(samples, &pencil_for(pcfg, b.len))
        })
        .collect::<Result<Vec<_>>>()?;
    let poles = pool_poles(&models);
    if poles.is_empty() {
        return Err(Error::Pencil(
            "no admissible poles survived the modulus filter".into(),
        ));
    }
    let indices: Vec<usize> = cfg.subbands.iter().flat_map(|b| b.start..b.end()).collect();
    let values: Vec<Complex64> = indices.iter().map(|&l| multiband.data[l]).collect();
    let amps = fit_amplitudes(&poles, &indices, &values, 0)?;
    Ok(PoleModel {
        poles,
        amps,
        ref_index: 0,
    })
}

/// Matrix-pencil fusion: gap samples come from the joint pole model,
/// measured samples are kept as they are.
pub fn mpa_fuse(
    multiband: &ComplexSignal,
    cfg: &MultibandConfig,
    pcfg: &PencilConfig,
) -> Result<ComplexSignal> {
    let model = mpa_joint_model(multiband, cfg, pcfg)?;
    let mut out = multiband.clone();
    for (start, end) in cfg.gaps() {
        for l in start..end {
            out.data[l] = model.evaluate(l);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{mask_gap, synth_fullband, Scatterer, Scene};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn cap_for_canonical_subband() {
        assert_eq!(order_cap(64), 21);
        let p = PencilConfig::for_len(64);
        assert_eq!(p.pencil_param, 32);
        assert_eq!(p.max_order, 21);
        assert!(p.validate(64).is_ok());
        assert!(PencilConfig { pencil_param: 20, ..p }.validate(64).is_err());
        assert!(PencilConfig { max_order: 22, ..p }.validate(64).is_err());
    }

    #[test]
    fn single_exponential() {
        let samples: Vec<Complex64> = (0..64).map(|n| Complex64::from_polar(1.0, -0.3 * n as f64)).collect();
        let model = mpa_estimate(&samples, &PencilConfig::for_len(64)).unwrap();
        assert_eq!(model.order(), 1);
        assert!((model.poles[0] - Complex64::from_polar(1.0, -0.3)).norm() < 1e-9);
        assert!((model.amps[0] - c(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn three_undamped_poles() {
        let truth = [
            (Complex64::from_polar(1.0, 0.4), c(1.0, 0.5)),
            (Complex64::from_polar(1.0, -1.3), c(-0.4, 0.8)),
            (Complex64::from_polar(1.0, 2.2), c(0.3, -0.2)),
        ];
        let samples: Vec<Complex64> = (0..64)
            .map(|n| truth.iter().map(|(z, a)| a * z.powi(n)).sum())
            .collect();
        let model = mpa_estimate(&samples, &PencilConfig::for_len(64)).unwrap();
        assert_eq!(model.order(), 3);
        for (z, a) in &truth {
            let (i, dz) = model
                .poles
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - z).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            assert!(dz < 1e-6, "pole error {dz}");
            assert!((model.amps[i] - a).norm() < 1e-6);
        }
    }

    #[test]
    fn damped_pole_recovery() {
        let z = Complex64::from_polar(0.97, 0.8);
        let samples: Vec<Complex64> = (0..40).map(|n| c(2.0, -1.0) * z.powi(n)).collect();
        let model = mpa_estimate(&samples, &PencilConfig::for_len(40)).unwrap();
        assert_eq!(model.order(), 1);
        let err = (model.poles[0] - z).norm();
        assert!(err < 1e-9, "pole error {err:e}, {:?}", model.poles);
    }

    #[test]
    fn zero_input_is_rank_zero() {
        let samples = vec![c(0.0, 0.0); 64];
        assert!(matches!(
            mpa_estimate(&samples, &PencilConfig::for_len(64)),
            Err(Error::Pencil(_))
        ));
    }

    #[test]
    fn mft_is_identity() {
        let cfg = MultibandConfig::canonical();
        let full = synth_fullband(&Scene::single(c(1.0, 0.0), 0.3), &cfg).unwrap();
        let masked = mask_gap(&full, &cfg).unwrap();
        assert_eq!(mft_fuse(&masked, &cfg).unwrap(), masked);
    }

    #[test]
    fn mpa_fuse_noiseless_three_targets() {
        let cfg = MultibandConfig::canonical();
        let scene = Scene::new(vec![
            Scatterer { alpha: c(1.0, 0.2), range: 0.31 },
            Scatterer { alpha: c(-0.5, 0.7), range: 0.77 },
            Scatterer { alpha: c(0.3, -0.9), range: 1.52 },
        ]);
        let full = synth_fullband(&scene, &cfg).unwrap();
        let masked = mask_gap(&full, &cfg).unwrap();
        let fused = mpa_fuse(&masked, &cfg, &PencilConfig::for_len(64)).unwrap();
        let err: f64 = fused.data.iter().zip(&full.data).map(|(a, b)| (a - b).norm_sqr()).sum();
        let nrmse = (err / full.energy()).sqrt();
        assert!(nrmse < 1e-4, "nrmse {nrmse}");
        for b in &cfg.subbands {
            assert_eq!(&fused.data[b.start..b.end()], &masked.data[b.start..b.end()]);
        }
    }

    #[test]
    fn mpa_fuse_rejects_three_subbands() {
        let cfg = MultibandConfig::from_frequencies(1e9, &[(400e9, 8e9), (428e9, 10e9), (454e9, 6e9)]).unwrap();
        let sig = ComplexSignal::zeros(cfg.n_total, Domain::K);
        let err = mpa_fuse(&sig, &cfg, &PencilConfig::for_len(8)).unwrap_err();
        assert!(err.to_string().contains("one gap at a time"));
    }
}
