use rayon::prelude::*;

use super::prepare::{denormalize_output, normalize_input};
use crate::error::{Error, Result};
use crate::krnet::{ComplexTensor, KrNet};
use crate::signal::{ComplexSignal, Domain, MultibandConfig, OrthoFft};

/// Records per forward pass in [`infer_fuse_many`].
const INFER_CHUNK: usize = 16;

fn check_layout(net: &KrNet<f32>, cfg: &MultibandConfig, sig: &ComplexSignal) -> Result<()> {
    sig.expect_domain(Domain::K)?;
    if net.config().n_total != cfg.n_total || sig.len() != cfg.n_total {
        return Err(Error::Config(format!(
            "network length {}, layout length {} and signal length {} must agree",
            net.config().n_total,
            cfg.n_total,
            sig.len()
        )));
    }
    Ok(())
}

/// Full-band k-domain estimate from a gap-masked signal. With
/// `keep_measured` the subband samples of the input are spliced back in.
pub fn infer_fuse(
    net: &KrNet<f32>,
    multiband: &ComplexSignal,
    cfg: &MultibandConfig,
    keep_measured: bool,
) -> Result<ComplexSignal> {
    Ok(infer_fuse_many(net, std::slice::from_ref(multiband), cfg, keep_measured)?.remove(0))
}

/// [`infer_fuse`] over many signals, batched and run in parallel.
pub fn infer_fuse_many(
    net: &KrNet<f32>,
    signals: &[ComplexSignal],
    cfg: &MultibandConfig,
    keep_measured: bool,
) -> Result<Vec<ComplexSignal>> {
    for s in signals {
        check_layout(net, cfg, s)?;
    }
    let n = cfg.n_total;
    let mask = cfg.occupied_mask();
    let parts = signals
        .par_chunks(INFER_CHUNK)
        .map(|chunk| {
            let fft = OrthoFft::new(n);
            let mut stats = Vec::with_capacity(chunk.len());
            let mut inputs = Vec::with_capacity(chunk.len());
            for s in chunk {
                let (x, st) = normalize_input(s, &fft)?;
                inputs.push(x.data);
                stats.push(st);
            }
            let y = net.forward(&ComplexTensor::<f32>::from_signals(&inputs)?)?;
            chunk
                .iter()
                .enumerate()
                .map(|(b, s)| {
                    let pred = ComplexSignal::new(y.signal(0, b), Domain::K);
                    let mut out = denormalize_output(&pred, &stats[b], &fft)?;
                    if keep_measured {
                        for (l, z) in out.data.iter_mut().enumerate() {
                            if mask[l] {
                                *z = s.data[l];
                            }
                        }
                    }
                    if out.data.iter().any(|z| !z.is_finite()) {
                        return Err(Error::Numeric("network produced a non-finite sample".into()));
                    }
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krnet::NetworkConfig;
    use crate::signal::{add_noise, mask_gap, synth_fullband, Scene};
    use rand::SeedableRng;

    #[test]
    fn canonical_length_and_splice() {
        let cfg = MultibandConfig::canonical();
        let net = KrNet::<f32>::new(NetworkConfig::new(2, 1, 3, cfg.n_total), 0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let full = synth_fullband(&Scene::random(4, &cfg, &mut rng), &cfg).unwrap();
        let noisy = add_noise(&mask_gap(&full, &cfg).unwrap(), &cfg, 20.0, 2).unwrap();
        let fused = infer_fuse(&net, &noisy, &cfg, true).unwrap();
        assert_eq!(fused.len(), 336);
        assert_eq!(fused.domain, Domain::K);
        for l in (0..64).chain(272..336) {
            assert_eq!(fused.data[l], noisy.data[l]);
        }
        let raw = infer_fuse(&net, &noisy, &cfg, false).unwrap();
        assert!((0..64).any(|l| raw.data[l] != noisy.data[l]));
    }

    #[test]
    fn layout_mismatch() {
        let cfg = MultibandConfig::canonical();
        let net = KrNet::<f32>::new(NetworkConfig::tiny(), 0).unwrap();
        let sig = ComplexSignal::zeros(336, Domain::K);
        assert!(matches!(infer_fuse(&net, &sig, &cfg, true), Err(Error::Config(_))));
    }
}
