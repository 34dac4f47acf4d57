//! Command implementations behind the `mbfuse` binary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use mbfusion::baseline::{mpa_fuse, PencilConfig};
use mbfusion::config::{parse_scene_csv, Profile, RunConfig};
use mbfusion::io::write_bytes_atomic;
use mbfusion::krnet::KrNet;
use mbfusion::metrics::{write_reports, MetricReport};
use mbfusion::pipeline::{fuse_aperture, FusionMethod};
use mbfusion::sar::{
    dominant_peaks, local_maxima, pslr_db, rma_reconstruct, simulate_aperture, upsampled_range_profile,
    write_csv_image, write_pgm, Capture, SampleMode, SceneXYZ, Volume,
};
use mbfusion::signal::{mask_gap, synth_fullband, ComplexSignal, MultibandConfig, Scatterer, Scene};
use mbfusion::training::{
    generate_record, infer_fuse, write_dataset, Checkpoint, Dataset, DatasetSpec, PreparedSet, Trainer,
};

#[derive(Debug, Parser)]
#[command(name = "mbfuse", version, about = "Multiband radar signal fusion and 3-D imaging")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Run configuration (TOML); defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Network and training profile.
    #[arg(long, global = true, value_parser = ["paper", "small"])]
    pub profile: Option<String>,
    /// Output directory (or file, for `fuse` and `evaluate`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write training and validation datasets, or aperture captures.
    Simulate {
        /// Simulate the imaging scene instead of a training dataset.
        #[arg(long)]
        capture: bool,
    },
    /// Train a network on a dataset.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Fuse every signal of a capture.
    Fuse {
        #[arg(long, value_parser = ["mft", "mpa", "krnet"])]
        method: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Range-migration volume of a full-band capture, with slice renders.
    Image {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Metric report of volumes against a reference volume.
    Evaluate {
        #[arg(long)]
        reference: PathBuf,
        volumes: Vec<PathBuf>,
    },
    /// Single-signal fusion demo and the two-scatterer resolution study.
    ResolveTest {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

/// Loaded configuration with command-line overrides applied.
pub fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(p) = &g.profile {
        cfg.network.profile = p.parse::<Profile>()?;
    }
    if let Some(s) = g.seed {
        cfg.train.seed = Some(s);
        cfg.train.data_seed = Some(s);
    }
    if let Some(o) = &g.out {
        cfg.paths.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Exit status for an error: 3 for numeric failures, 2 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.chain().find_map(|e| e.downcast_ref::<mbfusion::Error>()) {
        Some(e) if e.is_numeric() => 3,
        _ => 2,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    match &cli.command {
        Command::Simulate { capture: false } => cmd_simulate(&cfg),
        Command::Simulate { capture: true } => cmd_simulate_capture(&cfg),
        Command::Train { dataset, validation } => cmd_train(&cfg, dataset.as_deref(), validation.as_deref()),
        Command::Fuse {
            method,
            input,
            checkpoint,
        } => cmd_fuse(&cfg, method.parse()?, input, checkpoint.as_deref()),
        Command::Image { input } => cmd_image(&cfg, input),
        Command::Evaluate { reference, volumes } => cmd_evaluate(&cfg, volumes, reference),
        Command::ResolveTest { checkpoint } => cmd_resolve_test(&cfg, checkpoint.as_deref()),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.paths.out.as_path();
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn checkpoint_path<'a>(cfg: &'a RunConfig, flag: Option<&'a Path>) -> Option<&'a Path> {
    flag.or(cfg.paths.checkpoint.as_deref())
}

fn load_network(path: &Path, band: &MultibandConfig) -> Result<KrNet<f32>> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    if ck.config.n_total != band.n_total {
        bail!(mbfusion::Error::Config(format!(
            "checkpoint is for N = {}, configuration has N = {}",
            ck.config.n_total, band.n_total
        )));
    }
    Ok(ck.network()?)
}

/// `train.mbf` and `val.mbf` in the output directory.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let band = cfg.band_config()?;
    let spec = cfg.dataset_spec(&band);
    let dir = out_dir(cfg)?;
    let train = cfg.paths.dataset.clone().unwrap_or_else(|| dir.join("train.mbf"));
    write_dataset(&spec, &train)?;
    write_dataset(&spec.validation(cfg.val_samples()), &dir.join("val.mbf"))?;
    println!("wrote {} training and {} validation records to {}", spec.count, cfg.val_samples(), dir.display());
    Ok(())
}

fn imaging_scene(cfg: &RunConfig) -> Result<SceneXYZ> {
    match &cfg.imaging.scene {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(parse_scene_csv(&text)?)
        }
        None => Ok(SceneXYZ::point(0.0, 0.0, 0.3)),
    }
}

/// `capture_multiband.cap` and `capture_fullband.cap` of the imaging scene.
pub fn cmd_simulate_capture(cfg: &RunConfig) -> Result<()> {
    let band = cfg.band_config()?;
    let ap = cfg.aperture_config(&band)?;
    let scene = imaging_scene(cfg)?;
    let snr = cfg.imaging.snr_db.unwrap_or(f64::INFINITY);
    let seed = cfg.train.data_seed.unwrap_or(0);
    let dir = out_dir(cfg)?;
    for (mode, name) in [
        (SampleMode::Multiband, "capture_multiband.cap"),
        (SampleMode::FullBand, "capture_fullband.cap"),
    ] {
        let data = simulate_aperture(&scene, &ap, snr, seed, mode)?;
        Capture::new(ap.clone(), data)?.save(&dir.join(name))?;
    }
    println!("wrote {} x {} captures of {} scatterers to {}", ap.nx, ap.ny, scene.len(), dir.display());
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, dataset: Option<&Path>, validation: Option<&Path>) -> Result<()> {
    let band = cfg.band_config()?;
    let dir = out_dir(cfg)?.to_path_buf();
    let train_path = dataset
        .map(Path::to_path_buf)
        .or_else(|| cfg.paths.dataset.clone())
        .unwrap_or_else(|| dir.join("train.mbf"));
    let train = Dataset::load(&train_path).with_context(|| format!("loading {}", train_path.display()))?;
    train.check_layout(&band)?;
    let val = match validation {
        Some(p) => Dataset::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => {
            let p = dir.join("val.mbf");
            if p.exists() {
                Dataset::load(&p)?
            } else {
                mbfusion::training::generate_dataset(&cfg.dataset_spec(&band).validation(cfg.val_samples()))?
            }
        }
    };
    val.check_layout(&band)?;
    let tcfg = cfg.train_config();
    let net = KrNet::<f32>::new(cfg.network_config(band.n_total)?, tcfg.seed)?;
    let mut trainer = Trainer::new(net, tcfg)?;
    let report = trainer.fit(&PreparedSet::from_dataset(&train)?, &PreparedSet::from_dataset(&val)?, Some(&dir))?;
    write_bytes_atomic(&dir.join("loss.csv"), report.csv().as_bytes())?;
    println!(
        "initial validation loss {:.6}, best {:.6} (epoch {})",
        report.initial_val_loss, report.best.val_loss, report.best.epoch
    );
    Ok(())
}

pub fn cmd_fuse(cfg: &RunConfig, method: FusionMethod, input: &Path, checkpoint: Option<&Path>) -> Result<()> {
    let cap = Capture::load(input).with_context(|| format!("loading {}", input.display()))?;
    let band = &cap.aperture.cfg;
    let net = match method {
        FusionMethod::KrNet => {
            let p = checkpoint_path(cfg, checkpoint)
                .ok_or_else(|| mbfusion::Error::Config("krnet fusion needs --checkpoint".into()))?;
            Some(load_network(p, band)?)
        }
        _ => None,
    };
    let fused = fuse_aperture(&cap.data, band, method, net.as_ref())?;
    let out = if cfg.paths.out.extension().is_some() {
        cfg.paths.out.clone()
    } else {
        out_dir(cfg)?.join(format!("fused_{method}.cap"))
    };
    Capture::new(cap.aperture.clone(), fused)?.save(&out)?;
    println!("fused {} signals with {method} into {}", cap.data.nx * cap.data.ny, out.display());
    Ok(())
}

pub fn cmd_image(cfg: &RunConfig, input: &Path) -> Result<()> {
    let cap = Capture::load(input).with_context(|| format!("loading {}", input.display()))?;
    let vol = rma_reconstruct(&cap.data, &cap.aperture, &cfg.rma_options()?)?;
    let dir = out_dir(cfg)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("volume");
    vol.save(&dir.join(format!("{stem}.vol")))?;
    let [ix, iy, iz] = vol.argmax();
    let (w, h, xy) = vol.slice_xy(iz);
    write_pgm(&dir.join(format!("{stem}_xy.pgm")), w, h, &xy)?;
    write_csv_image(&dir.join(format!("{stem}_xy.csv")), w, &xy)?;
    let (w, h, xz) = vol.slice_xz(iy);
    write_pgm(&dir.join(format!("{stem}_xz.pgm")), w, h, &xz)?;
    write_csv_image(&dir.join(format!("{stem}_xz.csv")), w, &xz)?;
    let (w, h, mip) = vol.projection_xy();
    write_pgm(&dir.join(format!("{stem}_mip.pgm")), w, h, &mip)?;
    let p = vol.grid.position(ix, iy, iz);
    println!(
        "{:?} volume, peak at ({:.4}, {:.4}, {:.4}) m, written to {}",
        vol.dims(),
        p[0],
        p[1],
        p[2],
        dir.display()
    );
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig, volumes: &[PathBuf], reference: &Path) -> Result<()> {
    if volumes.is_empty() {
        bail!(mbfusion::Error::Config("evaluate needs at least one volume".into()));
    }
    let refv = Volume::load(reference).with_context(|| format!("loading {}", reference.display()))?;
    let scene = reference.file_stem().and_then(|s| s.to_str()).unwrap_or("scene");
    let seed = cfg.train.data_seed.unwrap_or(0);
    let mut reports = Vec::with_capacity(volumes.len());
    for p in volumes {
        let v = Volume::load(p).with_context(|| format!("loading {}", p.display()))?;
        let method = p.file_stem().and_then(|s| s.to_str()).unwrap_or("volume");
        reports.push(MetricReport::evaluate(method, scene, seed, &v, &refv)?);
    }
    let out = if cfg.paths.out.extension().is_some() {
        cfg.paths.out.clone()
    } else {
        out_dir(cfg)?.join("metrics.csv")
    };
    write_reports(&out, &reports)?;
    for r in &reports {
        println!("{}", r.csv_row());
    }
    Ok(())
}

fn profile_csv(axis_mm: &[f64], columns: &[(&str, Vec<f64>)]) -> String {
    let mut s = String::from("range_mm");
    for (name, _) in columns {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for (q, r) in axis_mm.iter().enumerate() {
        s.push_str(&format!("{r:.4}"));
        for (_, c) in columns {
            s.push_str(&format!(",{:.6}", c[q]));
        }
        s.push('\n');
    }
    s
}

/// Renders profiles as an 8-bit image, one row band per profile.
fn profiles_pgm(path: &Path, columns: &[(&str, Vec<f64>)]) -> Result<()> {
    let width = columns.first().map(|c| c.1.len()).unwrap_or(0);
    let rows = 16;
    let mut data = Vec::with_capacity(width * rows * columns.len());
    for (_, c) in columns {
        let m = c.iter().copied().fold(0.0, f64::max).max(1e-300);
        for _ in 0..rows {
            data.extend(c.iter().map(|v| (v / m) as f32));
        }
    }
    Ok(write_pgm(path, width, rows * columns.len(), &data)?)
}

const UPSAMPLE: usize = 8;

pub fn cmd_resolve_test(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let band = cfg.band_config()?;
    let dir = out_dir(cfg)?.to_path_buf();
    let net = match checkpoint_path(cfg, checkpoint) {
        Some(p) => Some(load_network(p, &band)?),
        None => None,
    };
    let bin = band.range_bin();
    let truth = [0.300, 0.3071];
    let scene = Scene::new(
        truth
            .iter()
            .map(|&range| Scatterer {
                alpha: Complex64::new(1.0, 0.0),
                range,
            })
            .collect(),
    );
    let full = synth_fullband(&scene, &band)?;
    let multiband = mask_gap(&full, &band)?;
    let mut first_only = multiband.clone();
    let first = band.subbands[0];
    for (l, z) in first_only.data.iter_mut().enumerate() {
        if !first.contains(l) {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    let mut signals: Vec<(&str, ComplexSignal)> = vec![
        ("fullband", full.clone()),
        ("subband1", first_only),
        ("mft", multiband.clone()),
        ("mpa", mpa_fuse(&multiband, &band, &PencilConfig::for_len(band.nk()))?),
    ];
    if let Some(net) = &net {
        signals.push(("krnet", infer_fuse(net, &multiband, &band, true)?));
    }
    let columns: Vec<(&str, Vec<f64>)> = signals
        .iter()
        .map(|(n, s)| Ok((*n, upsampled_range_profile(s, UPSAMPLE)?)))
        .collect::<Result<_>>()?;
    let len = columns[0].1.len();
    let axis: Vec<f64> = (0..len).map(|q| q as f64 * bin / UPSAMPLE as f64 * 1e3).collect();
    write_bytes_atomic(&dir.join("resolution_profiles.csv"), profile_csv(&axis, &columns).as_bytes())?;
    profiles_pgm(&dir.join("resolution_profiles.pgm"), &columns)?;

    let targets: Vec<usize> = truth.iter().map(|r| (r / bin * UPSAMPLE as f64).round() as usize).collect();
    let mut summary = String::from("signal,peaks_mm,dominant_peaks,pslr_db\n");
    for (name, p) in &columns {
        let near: Vec<f64> = local_maxima(p)
            .into_iter()
            .filter(|&i| targets.iter().any(|&t| i.abs_diff(t) <= UPSAMPLE))
            .map(|i| i as f64 * bin / UPSAMPLE as f64 * 1e3)
            .collect();
        let dominant = dominant_peaks(p, 6.0).len();
        let pslr = pslr_db(p, &targets, UPSAMPLE);
        let peaks: Vec<String> = near.iter().map(|v| format!("{v:.1}")).collect();
        let line = format!("{name},{},{dominant},{pslr:.2}", peaks.join(" "));
        println!("{line}");
        summary.push_str(&line);
        summary.push('\n');
    }
    write_bytes_atomic(&dir.join("resolution_summary.csv"), summary.as_bytes())?;

    // Single-signal demo on a random scene: k-domain magnitudes per method.
    let mut spec = DatasetSpec::new(band.clone(), 1, cfg.train.data_seed.unwrap_or(0));
    spec.nt_min = 8;
    spec.nt_max = 8;
    spec.snr_min_db = 30.0;
    spec.snr_max_db = 30.0;
    let record = generate_record(&spec, 0)?;
    let demo_full = record.label_signal();
    let demo_mb = record.input_signal();
    let mut demo: Vec<(&str, Vec<f64>)> = vec![
        ("fullband", demo_full.data.iter().map(|z| z.norm()).collect()),
        ("mft", demo_mb.data.iter().map(|z| z.norm()).collect()),
    ];
    let mpa = mpa_fuse(&demo_mb, &band, &PencilConfig::for_len(band.nk()))?;
    demo.push(("mpa", mpa.data.iter().map(|z| z.norm()).collect()));
    if let Some(net) = &net {
        let k = infer_fuse(net, &demo_mb, &band, true)?;
        demo.push(("krnet", k.data.iter().map(|z| z.norm()).collect()));
    }
    let idx: Vec<f64> = (0..band.n_total).map(|l| l as f64).collect();
    let csv = profile_csv(&idx, &demo).replacen("range_mm", "k_index", 1);
    write_bytes_atomic(&dir.join("fusion_demo.csv"), csv.as_bytes())?;
    Ok(())
}
