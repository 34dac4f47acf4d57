//! Run configuration files.
//!
//! TOML with five optional tables, `[band]`, `[network]`, `[train]`,
//! `[imaging]` and `[paths]`. Unknown keys are rejected so that typos fail
//! loudly instead of silently falling back to defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::krnet::{NetworkConfig, Variant};
use crate::sar::{ApertureConfig, Interpolation, RmaOptions, ScattererXYZ, SceneXYZ};
use crate::signal::{Domain, MultibandConfig};
use crate::training::{DatasetSpec, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub band: BandSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub imaging: ImagingSection,
    #[serde(default)]
    pub paths: PathsSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubbandEntry {
    pub start_ghz: f64,
    pub bandwidth_ghz: f64,
}

/// Either `f1_ghz`/`f2_ghz`/`bandwidth_ghz` for two equal subbands or an
/// explicit `subbands` list.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSection {
    pub f1_ghz: Option<f64>,
    pub f2_ghz: Option<f64>,
    pub bandwidth_ghz: Option<f64>,
    pub subbands: Option<Vec<SubbandEntry>>,
    #[serde(default = "default_df_mhz")]
    pub df_mhz: f64,
}

fn default_df_mhz() -> f64 {
    62.5
}

impl Default for BandSection {
    fn default() -> Self {
        Self {
            f1_ghz: Some(60.0),
            f2_ghz: Some(77.0),
            bandwidth_ghz: Some(4.0),
            subbands: None,
            df_mhz: default_df_mhz(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    #[default]
    Small,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "small" => Ok(Profile::Small),
            other => Err(Error::Config(format!("unknown profile `{other}` (paper|small)"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default)]
    pub profile: Profile,
    pub feat: Option<usize>,
    pub blocks_per: Option<usize>,
    pub kernel: Option<usize>,
    /// `"kr"`, `"k"` or `"r"`.
    pub variant: Option<String>,
    /// Five entries of `"k"` / `"r"`.
    pub domain_sequence: Option<Vec<String>>,
    pub use_domain_transforms: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    pub batch: Option<usize>,
    pub epochs: Option<usize>,
    pub micro_batch: Option<usize>,
    pub clip_norm: Option<f64>,
    /// Shuffle and initialization seed.
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub val_samples: Option<usize>,
    pub data_seed: Option<u64>,
    pub nt_min: Option<usize>,
    pub nt_max: Option<usize>,
    pub snr_min_db: Option<f64>,
    pub snr_max_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImagingSection {
    pub nx: usize,
    pub ny: usize,
    /// Element pitch; a quarter of the shortest wavelength when absent.
    pub pitch_mm: Option<f64>,
    pub snr_db: Option<f64>,
    /// CSV with columns `re,im,x_m,y_m,z_m`.
    pub scene: Option<PathBuf>,
    pub z_ref_m: f64,
    pub z_upsample: usize,
    pub z_min_m: Option<f64>,
    pub z_max_m: Option<f64>,
    pub cubic: bool,
}

impl Default for ImagingSection {
    fn default() -> Self {
        Self {
            nx: 32,
            ny: 32,
            pitch_mm: None,
            snr_db: None,
            scene: None,
            z_ref_m: 0.3,
            z_upsample: 1,
            z_min_m: None,
            z_max_m: None,
            cubic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub out: PathBuf,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            dataset: None,
            checkpoint: None,
        }
    }
}

fn parse_domain(s: &str) -> Result<Domain> {
    match s {
        "k" | "K" => Ok(Domain::K),
        "r" | "R" => Ok(Domain::R),
        other => Err(Error::Config(format!("unknown domain `{other}` (k|r)"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Checks that every derived object can be built.
    pub fn validate(&self) -> Result<()> {
        let band = self.band_config()?;
        self.network_config(band.n_total)?.validate()?;
        self.train_config().validate()?;
        self.dataset_spec(&band).validate()?;
        self.aperture_config(&band)?;
        self.rma_options()?;
        Ok(())
    }

    pub fn band_config(&self) -> Result<MultibandConfig> {
        let b = &self.band;
        let df = b.df_mhz * 1e6;
        match (&b.subbands, b.f1_ghz, b.f2_ghz, b.bandwidth_ghz) {
            (Some(list), None, None, None) => {
                let bands: Vec<(f64, f64)> = list.iter().map(|s| (s.start_ghz * 1e9, s.bandwidth_ghz * 1e9)).collect();
                MultibandConfig::from_frequencies(df, &bands)
            }
            (None, Some(f1), Some(f2), Some(bw)) => MultibandConfig::two_band(f1 * 1e9, f2 * 1e9, bw * 1e9, df),
            _ => Err(Error::Config(
                "band needs either f1_ghz, f2_ghz and bandwidth_ghz, or a subbands list".into(),
            )),
        }
    }

    pub fn network_config(&self, n_total: usize) -> Result<NetworkConfig> {
        let n = &self.network;
        let mut cfg = match n.profile {
            Profile::Paper => NetworkConfig::paper(n_total),
            Profile::Small => NetworkConfig::small(n_total),
        };
        if let Some(v) = n.feat {
            cfg.feat = v;
        }
        if let Some(v) = n.blocks_per {
            cfg.blocks_per = v;
        }
        if let Some(v) = n.kernel {
            cfg.kernel = v;
        }
        if let Some(v) = &n.variant {
            cfg = cfg.with_variant(match v.as_str() {
                "kr" => Variant::Kr,
                "k" => Variant::K,
                "r" => Variant::R,
                other => return Err(Error::Config(format!("unknown variant `{other}` (kr|k|r)"))),
            });
        }
        if let Some(seq) = &n.domain_sequence {
            cfg.domain_sequence = seq.iter().map(|s| parse_domain(s)).collect::<Result<_>>()?;
        }
        if let Some(flag) = n.use_domain_transforms {
            cfg.use_domain_transforms = flag;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        let base = match self.network.profile {
            Profile::Paper => TrainConfig::paper(),
            Profile::Small => TrainConfig::small(),
        };
        TrainConfig {
            lr: t.lr.unwrap_or(base.lr),
            beta1: t.beta1.unwrap_or(base.beta1),
            beta2: t.beta2.unwrap_or(base.beta2),
            eps: t.eps.unwrap_or(base.eps),
            batch: t.batch.unwrap_or(base.batch),
            epochs: t.epochs.unwrap_or(base.epochs),
            seed: t.seed.unwrap_or(base.seed),
            clip_norm: t.clip_norm.or(base.clip_norm),
            micro_batch: t.micro_batch.unwrap_or(base.micro_batch),
        }
    }

    /// Training set; the validation set is `spec.validation(val_samples())`.
    pub fn dataset_spec(&self, band: &MultibandConfig) -> DatasetSpec {
        let t = &self.train;
        let count = t.samples.unwrap_or(match self.network.profile {
            Profile::Paper => 1 << 20,
            Profile::Small => 1 << 16,
        });
        let mut spec = DatasetSpec::new(band.clone(), count, t.data_seed.unwrap_or(0));
        if let Some(v) = t.nt_min {
            spec.nt_min = v;
        }
        if let Some(v) = t.nt_max {
            spec.nt_max = v;
        }
        if let Some(v) = t.snr_min_db {
            spec.snr_min_db = v;
        }
        if let Some(v) = t.snr_max_db {
            spec.snr_max_db = v;
        }
        spec
    }

    pub fn val_samples(&self) -> usize {
        self.train.val_samples.unwrap_or(2048)
    }

    pub fn aperture_config(&self, band: &MultibandConfig) -> Result<ApertureConfig> {
        let im = &self.imaging;
        let mut ap = ApertureConfig::quarter_wave(im.nx, band.clone());
        ap.ny = im.ny;
        if let Some(p) = im.pitch_mm {
            ap.dx = p * 1e-3;
            ap.dy = p * 1e-3;
        }
        ap.validate()?;
        Ok(ap)
    }

    pub fn rma_options(&self) -> Result<RmaOptions> {
        let im = &self.imaging;
        if im.z_upsample == 0 {
            return Err(Error::Config("z_upsample must be at least 1".into()));
        }
        let z_window = match (im.z_min_m, im.z_max_m) {
            (Some(lo), Some(hi)) if hi > lo => Some((lo, hi)),
            (None, None) => None,
            _ => return Err(Error::Config("z_min_m and z_max_m must be given together, min < max".into())),
        };
        Ok(RmaOptions {
            interpolation: if im.cubic { Interpolation::Cubic } else { Interpolation::Linear },
            z_ref: im.z_ref_m,
            z_upsample: im.z_upsample,
            crop: true,
            z_window,
        })
    }
}

/// Scene CSV: header `re,im,x_m,y_m,z_m`, one scatterer per line.
pub fn parse_scene_csv(text: &str) -> Result<SceneXYZ> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next().map(str::trim) {
        Some("re,im,x_m,y_m,z_m") => {}
        other => {
            return Err(Error::Config(format!(
                "scene header must be `re,im,x_m,y_m,z_m`, got {other:?}"
            )))
        }
    }
    let mut scatterers = Vec::new();
    for (i, line) in lines.enumerate() {
        let v: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("scene row {}: {e}", i + 1)))?;
        if v.len() != 5 {
            return Err(Error::Config(format!("scene row {} has {} fields, expected 5", i + 1, v.len())));
        }
        scatterers.push(ScattererXYZ {
            alpha: num_complex::Complex64::new(v[0], v[1]),
            x: v[2],
            y: v[3],
            z: v[4],
        });
    }
    let scene = SceneXYZ::new(scatterers);
    scene.validate()?;
    Ok(scene)
}

pub fn scene_csv(scene: &SceneXYZ) -> String {
    let mut s = String::from("re,im,x_m,y_m,z_m\n");
    for t in &scene.scatterers {
        s.push_str(&format!("{},{},{},{},{}\n", t.alpha.re, t.alpha.im, t.x, t.y, t.z));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_canonical_small() {
        let cfg = RunConfig::parse("").unwrap();
        let band = cfg.band_config().unwrap();
        assert_eq!(band, MultibandConfig::canonical());
        assert_eq!(cfg.network_config(336).unwrap(), NetworkConfig::small(336));
        assert_eq!(cfg.train_config(), TrainConfig::small());
        assert_eq!(cfg.dataset_spec(&band).count, 65536);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::parse("[band]\ndf_mhz = 62.5\nf1_gz = 60.0\n"), Err(Error::Config(_))));
        assert!(RunConfig::parse("[bogus]\n").is_err());
    }

    #[test]
    fn generalization_layouts() {
        let a = RunConfig::parse("[band]\ndf_mhz = 62.5\nf1_ghz = 30.0\nf2_ghz = 38.0\nbandwidth_ghz = 2.0\n").unwrap();
        let ba = a.band_config().unwrap();
        assert_eq!(ba.n_total, 160);
        assert_eq!(ba.subbands[1].start, 128);

        let b = RunConfig::parse(
            "[band]\ndf_mhz = 62.5\nsubbands = [{ start_ghz = 180.0, bandwidth_ghz = 6.0 }, { start_ghz = 210.0, bandwidth_ghz = 10.0 }]\n",
        )
        .unwrap();
        let bb = b.band_config().unwrap();
        assert_eq!(bb.n_total, 640);
        assert_eq!(bb.subbands[0].len, 96);

        let c = RunConfig::parse(
            "[band]\ndf_mhz = 62.5\nsubbands = [{ start_ghz = 400.0, bandwidth_ghz = 8.0 }, { start_ghz = 428.0, bandwidth_ghz = 10.0 }, { start_ghz = 454.0, bandwidth_ghz = 6.0 }]\n",
        )
        .unwrap();
        let bc = c.band_config().unwrap();
        assert_eq!(bc.subbands.len(), 3);
        assert_eq!(bc.n_total, 960);
    }

    #[test]
    fn non_integral_band_rejected() {
        let text = "[band]\ndf_mhz = 62.5\nf1_ghz = 60.0\nf2_ghz = 77.01\nbandwidth_ghz = 4.0\n";
        assert!(RunConfig::parse(text).is_err());
    }

    #[test]
    fn network_overrides() {
        let cfg = RunConfig::parse("[network]\nprofile = \"paper\"\nvariant = \"r\"\n").unwrap();
        let net = cfg.network_config(336).unwrap();
        assert_eq!(net.variant(), Some(Variant::R));
        assert_eq!(net.feat, 32);
        let bad = RunConfig::parse("[network]\ndomain_sequence = [\"k\", \"k\", \"k\", \"k\", \"k\"]\n");
        assert!(bad.is_err(), "first block must be R with transforms on");
    }

    #[test]
    fn scene_round_trip() {
        let scene = SceneXYZ::point(0.01, -0.02, 0.3);
        assert_eq!(parse_scene_csv(&scene_csv(&scene)).unwrap(), scene);
        assert!(parse_scene_csv("re,im,x_m,y_m,z_m\n1,0,0,0,-1\n").is_err());
        assert!(parse_scene_csv("a,b\n").is_err());
    }

    #[test]
    fn partial_tables_use_defaults() {
        let cfg = RunConfig::parse("[imaging]\nnx = 4\n[paths]\ncheckpoint = \"a.krn\"\n").unwrap();
        assert_eq!(cfg.imaging.ny, 32);
        assert_eq!(cfg.paths.out, PathBuf::from("out"));
        let b = RunConfig::parse("[band]\nf1_ghz = 60.0\nf2_ghz = 77.0\nbandwidth_ghz = 4.0\n").unwrap();
        assert_eq!(b.band_config().unwrap(), MultibandConfig::canonical());
    }
}
