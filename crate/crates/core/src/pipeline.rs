//! Fusion of whole apertures: every element is fused independently before
//! range migration.

use rayon::prelude::*;

use crate::baseline::{mft_fuse, mpa_fuse, PencilConfig};
use crate::error::{Error, Result};
use crate::krnet::KrNet;
use crate::sar::ApertureData;
use crate::signal::MultibandConfig;
use crate::training::infer_fuse_many;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMethod {
    Mft,
    Mpa,
    KrNet,
}

impl FusionMethod {
    pub fn name(&self) -> &'static str {
        match self {
            FusionMethod::Mft => "mft",
            FusionMethod::Mpa => "mpa",
            FusionMethod::KrNet => "krnet",
        }
    }
}

impl std::fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mft" => Ok(FusionMethod::Mft),
            "mpa" => Ok(FusionMethod::Mpa),
            "krnet" => Ok(FusionMethod::KrNet),
            other => Err(Error::Config(format!("unknown fusion method `{other}` (mft|mpa|krnet)"))),
        }
    }
}

/// Full-band estimate of every element. `net` is required for
/// [`FusionMethod::KrNet`]; measured samples are kept in every method.
pub fn fuse_aperture(
    data: &ApertureData,
    cfg: &MultibandConfig,
    method: FusionMethod,
    net: Option<&KrNet<f32>>,
) -> Result<ApertureData> {
    let signals = data.masked(cfg).signals();
    let fused = match method {
        FusionMethod::Mft => signals.iter().map(|s| mft_fuse(s, cfg)).collect::<Result<Vec<_>>>()?,
        FusionMethod::Mpa => {
            let pcfg = PencilConfig::for_len(cfg.nk());
            signals
                .par_iter()
                .map(|s| mpa_fuse(s, cfg, &pcfg))
                .collect::<Result<Vec<_>>>()?
        }
        FusionMethod::KrNet => {
            let net = net.ok_or_else(|| Error::Config("krnet fusion needs a checkpoint".into()))?;
            infer_fuse_many(net, &signals, cfg, true)?
        }
    };
    ApertureData::from_signals(data.nx, data.ny, &fused)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krnet::NetworkConfig;
    use crate::sar::{simulate_aperture, ApertureConfig, SampleMode, SceneXYZ};

    #[test]
    fn methods_keep_measured_samples() {
        let cfg = MultibandConfig::canonical();
        let ap = ApertureConfig::quarter_wave(2, cfg.clone());
        let data = simulate_aperture(&SceneXYZ::point(0.0, 0.0, 0.3), &ap, f64::INFINITY, 0, SampleMode::Multiband)
            .unwrap();
        let net = KrNet::<f32>::new(NetworkConfig::new(2, 1, 3, 336), 0).unwrap();
        let mask = cfg.occupied_mask();
        for m in [FusionMethod::Mft, FusionMethod::Mpa, FusionMethod::KrNet] {
            let fused = fuse_aperture(&data, &cfg, m, Some(&net)).unwrap();
            for (chunk, orig) in fused.data.chunks(336).zip(data.data.chunks(336)) {
                for l in 0..336 {
                    if mask[l] {
                        assert_eq!(chunk[l], orig[l], "{m}");
                    }
                }
            }
        }
        let mft = fuse_aperture(&data, &cfg, FusionMethod::Mft, None).unwrap();
        assert_eq!(mft, data);
        assert!(fuse_aperture(&data, &cfg, FusionMethod::KrNet, None).is_err());
        assert_eq!("mpa".parse::<FusionMethod>().unwrap(), FusionMethod::Mpa);
    }
}
