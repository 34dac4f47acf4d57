use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{
    expect_eof, expect_magic, open_reader, read_complex32, read_f32, read_u32, read_u64, write_atomic,
    write_complex32, write_magic,
};
use crate::signal::{
    add_noise_with_rng, mask_gap, synth_fullband, ComplexSignal, Domain, MultibandConfig, Scene, Subband,
};

const MAGIC: &[u8; 4] = b"MBF1";
const VERSION: u32 = 1;
const KIND: &str = "dataset";

/// Offset mixed into the seed of the validation stream.
const VALIDATION_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Recipe for a synthetic training set.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub count: usize,
    pub nt_min: usize,
    pub nt_max: usize,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub cfg: MultibandConfig,
    pub seed: u64,
}

impl DatasetSpec {
    /// 1 to 200 scatterers, SNR uniform on -10..30 dB.
    pub fn new(cfg: MultibandConfig, count: usize, seed: u64) -> Self {
        Self {
            count,
            nt_min: 1,
            nt_max: 200,
            snr_min_db: -10.0,
            snr_max_db: 30.0,
            cfg,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.nt_min < 1 || self.nt_max < self.nt_min {
            return Err(Error::Config(format!(
                "scatterer count range {}..={} is empty or starts below 1",
                self.nt_min, self.nt_max
            )));
        }
        if !(self.snr_min_db <= self.snr_max_db) {
            return Err(Error::Config(format!(
                "SNR range {}..{} dB is inverted",
                self.snr_min_db, self.snr_max_db
            )));
        }
        Ok(())
    }

    /// Held-out set of `count` records drawn from a seed disjoint from the
    /// training stream.
    pub fn validation(&self, count: usize) -> Self {
        Self {
            count,
            seed: self.seed.wrapping_add(VALIDATION_SEED_SALT).rotate_left(17),
            ..self.clone()
        }
    }
}

/// One (input, label) pair, stored at file precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub nt: u32,
    pub snr_db: f32,
    /// Noisy gap-masked k-domain signal.
    pub input: Vec<Complex32>,
    /// Clean full-band k-domain signal.
    pub label: Vec<Complex32>,
}

impl Record {
    pub fn input_signal(&self) -> ComplexSignal {
        to_signal(&self.input)
    }

    pub fn label_signal(&self) -> ComplexSignal {
        to_signal(&self.label)
    }
}

fn to_signal(v: &[Complex32]) -> ComplexSignal {
    ComplexSignal::new(
        v.iter().map(|z| Complex64::new(z.re as f64, z.im as f64)).collect(),
        Domain::K,
    )
}

fn to_f32(sig: &ComplexSignal) -> Vec<Complex32> {
    sig.data.iter().map(|z| Complex32::new(z.re as f32, z.im as f32)).collect()
}

/// Record `index` of `spec`; depends only on `(spec.seed, index)`.
pub fn generate_record(spec: &DatasetSpec, index: u64) -> Result<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let nt = rng.gen_range(spec.nt_min..=spec.nt_max);
    let scene = Scene::random(nt, &spec.cfg, &mut rng);
    let snr_db = if spec.snr_max_db > spec.snr_min_db {
        rng.gen_range(spec.snr_min_db..spec.snr_max_db)
    } else {
        spec.snr_min_db
    };
    let full = synth_fullband(&scene, &spec.cfg)?;
    let masked = mask_gap(&full, &spec.cfg)?;
    let noisy = add_noise_with_rng(&masked, &spec.cfg, snr_db, &mut rng)?;
    Ok(Record {
        nt: nt as u32,
        snr_db: snr_db as f32,
        input: to_f32(&noisy),
        label: to_f32(&full),
    })
}

/// Records with their subband layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_total: usize,
    pub subbands: Vec<Subband>,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Error unless `cfg` has the same length and subband layout.
    pub fn check_layout(&self, cfg: &MultibandConfig) -> Result<()> {
        if self.n_total != cfg.n_total || self.subbands != cfg.subbands {
            return Err(Error::Config(format!(
                "dataset layout (N={}, subbands {:?}) does not match config (N={}, subbands {:?})",
                self.n_total, self.subbands, cfg.n_total, cfg.subbands
            )));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_header(w, self.n_total, &self.subbands, self.records.len() as u64)?;
        for r in &self.records {
            write_record(w, r)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        expect_magic(r, MAGIC, KIND)?;
        let version = read_u32(r, KIND)?;
        if version != VERSION {
            return Err(Error::Format {
                kind: KIND,
                reason: format!("unsupported version {version}"),
            });
        }
        let n_total = read_u32(r, KIND)? as usize;
        let bands = read_u32(r, KIND)? as usize;
        let mut subbands = Vec::with_capacity(bands);
        for _ in 0..bands {
            let start = read_u32(r, KIND)? as usize;
            let len = read_u32(r, KIND)? as usize;
            subbands.push(Subband { start, len });
        }
        let count = read_u64(r, KIND)? as usize;
        let mut records = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            let nt = read_u32(r, KIND)?;
            let snr_db = read_f32(r, KIND)?;
            let input = read_complex32(r, n_total, KIND)?;
            let label = read_complex32(r, n_total, KIND)?;
            records.push(Record {
                nt,
                snr_db,
                input,
                label,
            });
        }
        expect_eof(r, KIND)?;
        Ok(Self {
            n_total,
            subbands,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| self.write_to(w))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut open_reader(path)?)
    }
}

fn write_header<W: Write>(w: &mut W, n_total: usize, subbands: &[Subband], count: u64) -> Result<()> {
    write_magic(w, MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(n_total as u32)?;
    w.write_u32::<LittleEndian>(subbands.len() as u32)?;
    for b in subbands {
        w.write_u32::<LittleEndian>(b.start as u32)?;
        w.write_u32::<LittleEndian>(b.len as u32)?;
    }
    w.write_u64::<LittleEndian>(count)?;
    Ok(())
}

fn write_record<W: Write>(w: &mut W, r: &Record) -> Result<()> {
    w.write_u32::<LittleEndian>(r.nt)?;
    w.write_f32::<LittleEndian>(r.snr_db)?;
    write_complex32(w, &r.input)?;
    write_complex32(w, &r.label)?;
    Ok(())
}

/// Generate all records in memory, in parallel.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let records = (0..spec.count as u64)
        .into_par_iter()
        .map(|i| generate_record(spec, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        n_total: spec.cfg.n_total,
        subbands: spec.cfg.subbands.clone(),
        records,
    })
}

/// Stream a generated dataset to `path` without holding it in memory.
/// Records are produced in parallel blocks and written in index order.
pub fn write_dataset(spec: &DatasetSpec, path: &Path) -> Result<()> {
    spec.validate()?;
    const BLOCK: u64 = 4096;
    write_atomic(path, |w| {
        write_header(w, spec.cfg.n_total, &spec.cfg.subbands, spec.count as u64)?;
        let mut start = 0u64;
        while start < spec.count as u64 {
            let end = (start + BLOCK).min(spec.count as u64);
            let block = (start..end)
                .into_par_iter()
                .map(|i| generate_record(spec, i))
                .collect::<Result<Vec<_>>>()?;
            for r in &block {
                write_record(w, r)?;
            }
            start = end;
        }
        Ok(())
    })
}
