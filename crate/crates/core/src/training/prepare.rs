//! Mapping between physical signals and the network's normalized space.
//!
//! The input is moved to the R domain and min-max normalized on its
//! magnitudes. The label goes through the same magnitude map (with the
//! input's statistics), so prediction and label share one scale, and the
//! prediction is mapped back with the inverse.

use num_complex::Complex64;
use rayon::prelude::*;

use super::dataset::{Dataset, Record};
use crate::error::{Error, Result};
use crate::krnet::ComplexTensor;
use crate::signal::{ComplexSignal, NormStats, OrthoFft};

/// Normalized R-domain network input for a k-domain multiband signal.
pub fn normalize_input(multiband: &ComplexSignal, fft: &OrthoFft) -> Result<(ComplexSignal, NormStats)> {
    let r = fft.to_r(multiband)?;
    crate::signal::normalize_rdomain(&r)
}

/// k-domain label on the scale of the input normalized with `stats`.
pub fn normalize_label(label: &ComplexSignal, stats: &NormStats, fft: &OrthoFft) -> Result<ComplexSignal> {
    let mut r = fft.to_r(label)?;
    stats.apply_in_place(&mut r.data);
    fft.to_k(&r)
}

/// Physical k-domain signal from a normalized k-domain prediction.
pub fn denormalize_output(pred: &ComplexSignal, stats: &NormStats, fft: &OrthoFft) -> Result<ComplexSignal> {
    let mut r = fft.to_r(pred)?;
    stats.invert_in_place(&mut r.data);
    fft.to_k(&r)
}

/// Dataset in normalized space, stored as flat `f32` planes.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    n: usize,
    x_re: Vec<f32>,
    x_im: Vec<f32>,
    y_re: Vec<f32>,
    y_im: Vec<f32>,
    stats: Vec<NormStats>,
}

impl PreparedSet {
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        Self::from_records(ds.n_total, &ds.records)
    }

    pub fn from_records(n: usize, records: &[Record]) -> Result<Self> {
        let prepared = records
            .par_chunks(256)
            .map(|chunk| {
                let fft = OrthoFft::new(n);
                chunk
                    .iter()
                    .map(|r| {
                        if r.input.len() != n || r.label.len() != n {
                            return Err(Error::Shape(format!("record length differs from N = {n}")));
                        }
                        let (x, stats) = normalize_input(&r.input_signal(), &fft)?;
                        let y = normalize_label(&r.label_signal(), &stats, &fft)?;
                        Ok((x, y, stats))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let count = records.len();
        let mut set = Self {
            n,
            x_re: Vec::with_capacity(count * n),
            x_im: Vec::with_capacity(count * n),
            y_re: Vec::with_capacity(count * n),
            y_im: Vec::with_capacity(count * n),
            stats: Vec::with_capacity(count),
        };
        for (x, y, stats) in prepared.into_iter().flatten() {
            push_planes(&x.data, &mut set.x_re, &mut set.x_im);
            push_planes(&y.data, &mut set.y_re, &mut set.y_im);
            set.stats.push(stats);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn n_total(&self) -> usize {
        self.n
    }

    pub fn stats(&self, i: usize) -> NormStats {
        self.stats[i]
    }

    /// Network inputs of the given records as one batch.
    pub fn inputs(&self, indices: &[usize]) -> ComplexTensor<f32> {
        gather(self.n, &self.x_re, &self.x_im, indices)
    }

    /// Normalized k-domain labels of the given records.
    pub fn labels(&self, indices: &[usize]) -> ComplexTensor<f32> {
        gather(self.n, &self.y_re, &self.y_im, indices)
    }

    /// Zero-fill prediction in normalized space: the normalized input taken
    /// back to the k domain.
    pub fn zero_fill(&self, i: usize, fft: &OrthoFft) -> Vec<Complex64> {
        let s = i * self.n;
        let mut data: Vec<Complex64> = (0..self.n)
            .map(|l| Complex64::new(self.x_re[s + l] as f64, self.x_im[s + l] as f64))
            .collect();
        fft.inverse_in_place(&mut data);
        data
    }

    pub fn label(&self, i: usize) -> Vec<Complex64> {
        let s = i * self.n;
        (0..self.n)
            .map(|l| Complex64::new(self.y_re[s + l] as f64, self.y_im[s + l] as f64))
            .collect()
    }

    /// Mean L1 loss of the zero-fill prediction.
    pub fn zero_fill_loss(&self) -> f64 {
        let total: f64 = (0..self.len())
            .into_par_iter()
            .map_init(
                || OrthoFft::new(self.n),
                |fft, i| {
                    let z = self.zero_fill(i, fft);
                    let y = self.label(i);
                    l1(&z, &y)
                },
            )
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        total / self.len().max(1) as f64
    }

    /// Records `indices` as a new set.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self {
            n: self.n,
            x_re: Vec::new(),
            x_im: Vec::new(),
            y_re: Vec::new(),
            y_im: Vec::new(),
            stats: Vec::new(),
        };
        for &i in indices {
            let r = i * self.n..(i + 1) * self.n;
            out.x_re.extend_from_slice(&self.x_re[r.clone()]);
            out.x_im.extend_from_slice(&self.x_im[r.clone()]);
            out.y_re.extend_from_slice(&self.y_re[r.clone()]);
            out.y_im.extend_from_slice(&self.y_im[r]);
            out.stats.push(self.stats[i]);
        }
        out
    }
}

fn l1(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.re - y.re).abs() + (x.im - y.im).abs()).sum()
}

fn push_planes(data: &[Complex64], re: &mut Vec<f32>, im: &mut Vec<f32>) {
    re.extend(data.iter().map(|z| z.re as f32));
    im.extend(data.iter().map(|z| z.im as f32));
}

fn gather(n: usize, re: &[f32], im: &[f32], indices: &[usize]) -> ComplexTensor<f32> {
    let mut gre = Vec::with_capacity(indices.len() * n);
    let mut gim = Vec::with_capacity(indices.len() * n);
    for &i in indices {
        gre.extend_from_slice(&re[i * n..(i + 1) * n]);
        gim.extend_from_slice(&im[i * n..(i + 1) * n]);
    }
    ComplexTensor::from_planes(1, indices.len(), n, &gre, &gim).expect("planes sized from indices")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synth_fullband, MultibandConfig, Scene};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn label_map_inverts() {
        let cfg = MultibandConfig::canonical();
        let fft = OrthoFft::new(cfg.n_total);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let full = synth_fullband(&Scene::random(5, &cfg, &mut rng), &cfg).unwrap();
        let masked = crate::signal::mask_gap(&full, &cfg).unwrap();
        let (_, stats) = normalize_input(&masked, &fft).unwrap();
        let y = normalize_label(&full, &stats, &fft).unwrap();
        let back = denormalize_output(&y, &stats, &fft).unwrap();
        // Bins whose magnitude fell below the input minimum are clamped, so
        // the round trip is only close, not exact, in general.
        let err: f64 = back.data.iter().zip(&full.data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        assert!(err.sqrt() / full.energy().sqrt() < 0.05);
    }

    #[test]
    fn zero_fill_baseline_is_input_in_k() {
        let spec = super::super::DatasetSpec::new(MultibandConfig::canonical(), 3, 5);
        let ds = super::super::generate_dataset(&spec).unwrap();
        let set = PreparedSet::from_dataset(&ds).unwrap();
        let fft = OrthoFft::new(336);
        let z = set.zero_fill(1, &fft);
        let (_, stats) = normalize_input(&ds.records[1].input_signal(), &fft).unwrap();
        let direct = normalize_label(&ds.records[1].input_signal(), &stats, &fft).unwrap();
        for (a, b) in z.iter().zip(&direct.data) {
            assert!((a - b).norm() < 1e-5);
        }
        assert!(set.zero_fill_loss() > 0.0);
        assert_eq!(set.inputs(&[0, 2]).shape(), (1, 2, 336));
    }
}
