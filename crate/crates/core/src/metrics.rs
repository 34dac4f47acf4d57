//! Image quality metrics on magnitude volumes.
//!
//! Every metric first scales each volume to a unit maximum, so `L = 1`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_bytes_atomic;
use crate::sar::Volume;

/// Reported PSNR for identical inputs.
pub const PSNR_CAP_DB: f64 = 300.0;

/// SSIM statistics over the whole volume or over cubic windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SsimMode {
    #[default]
    Global,
    /// Mean SSIM over non-overlapping `w^3` windows (edge windows clipped).
    Windowed(usize),
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("metric inputs of {} and {} values", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::Shape("metric inputs are empty".into()));
    }
    Ok(())
}

fn unit_max(v: &Volume) -> Vec<f64> {
    v.normalized().data.iter().map(|&a| a as f64).collect()
}

fn check_dims(x: &Volume, y: &Volume) -> Result<()> {
    if x.dims() != y.dims() {
        return Err(Error::Shape(format!("volumes {:?} and {:?}", x.dims(), y.dims())));
    }
    Ok(())
}

/// Single-window SSIM with dynamic range `l`.
pub fn ssim_values(x: &[f64], y: &[f64], l: f64) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
        cxy += (a - mx) * (b - my);
    }
    let (vx, vy, cxy) = (vx / n, vy / n, cxy / n);
    let c1 = (0.01 * l).powi(2);
    let c2 = (0.03 * l).powi(2);
    Ok(((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
}

/// PSNR in dB with peak `l`, capped at [`PSNR_CAP_DB`].
pub fn psnr_values(x: &[f64], reference: &[f64], l: f64) -> Result<f64> {
    check_pair(x, reference)?;
    let mse = x.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (l * l / mse).log10()).min(PSNR_CAP_DB))
}

/// RMSE over the RMS of the reference.
pub fn nrmse_values(x: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(x, reference)?;
    let n = x.len() as f64;
    let rms = (reference.iter().map(|b| b * b).sum::<f64>() / n).sqrt();
    if rms == 0.0 {
        return Err(Error::Numeric("NRMSE of an all-zero reference".into()));
    }
    let rmse = (x.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt();
    Ok(rmse / rms)
}

pub fn ssim(x: &Volume, y: &Volume) -> Result<f64> {
    ssim_with(x, y, SsimMode::Global)
}

pub fn ssim_with(x: &Volume, y: &Volume, mode: SsimMode) -> Result<f64> {
    check_dims(x, y)?;
    let (a, b) = (unit_max(x), unit_max(y));
    match mode {
        SsimMode::Global => ssim_values(&a, &b, 1.0),
        SsimMode::Windowed(w) => {
            if w == 0 {
                return Err(Error::Config("SSIM window must be at least 1".into()));
            }
            let [nx, ny, nz] = x.dims();
            let g = x.grid;
            let (mut total, mut count) = (0.0, 0usize);
            let (mut wa, mut wb) = (Vec::new(), Vec::new());
            for z0 in (0..nz).step_by(w) {
                for y0 in (0..ny).step_by(w) {
                    for x0 in (0..nx).step_by(w) {
                        wa.clear();
                        wb.clear();
                        for iz in z0..(z0 + w).min(nz) {
                            for iy in y0..(y0 + w).min(ny) {
                                for ix in x0..(x0 + w).min(nx) {
                                    let i = g.index(ix, iy, iz);
                                    wa.push(a[i]);
                                    wb.push(b[i]);
                                }
                            }
                        }
                        total += ssim_values(&wa, &wb, 1.0)?;
                        count += 1;
                    }
                }
            }
            Ok(total / count as f64)
        }
    }
}

pub fn psnr(x: &Volume, reference: &Volume) -> Result<f64> {
    check_dims(x, reference)?;
    psnr_values(&unit_max(x), &unit_max(reference), 1.0)
}

pub fn nrmse(x: &Volume, reference: &Volume) -> Result<f64> {
    check_dims(x, reference)?;
    nrmse_values(&unit_max(x), &unit_max(reference))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub method: String,
    pub scene: String,
    pub seed: u64,
    pub ssim: f64,
    pub psnr_db: f64,
    pub nrmse: f64,
}

impl MetricReport {
    pub fn evaluate(method: &str, scene: &str, seed: u64, x: &Volume, reference: &Volume) -> Result<Self> {
        Ok(Self {
            method: method.into(),
            scene: scene.into(),
            seed,
            ssim: ssim(x, reference)?,
            psnr_db: psnr(x, reference)?,
            nrmse: nrmse(x, reference)?,
        })
    }

    pub const CSV_HEADER: &'static str = "method,scene,seed,ssim,psnr_db,nrmse";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.4},{:.6}",
            self.method, self.scene, self.seed, self.ssim, self.psnr_db, self.nrmse
        )
    }
}

/// All reports as CSV, header first.
pub fn reports_csv(reports: &[MetricReport]) -> String {
    let mut s = String::new();
    writeln!(s, "{}", MetricReport::CSV_HEADER).unwrap();
    for r in reports {
        writeln!(s, "{}", r.csv_row()).unwrap();
    }
    s
}

pub fn write_reports(path: &Path, reports: &[MetricReport]) -> Result<()> {
    write_bytes_atomic(path, reports_csv(reports).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sar::Grid;
    use proptest::prelude::*;

    fn vol(data: Vec<f32>) -> Volume {
        let grid = Grid {
            dims: [data.len(), 1, 1],
            origin: [0.0; 3],
            pitch: [1.0; 3],
        };
        Volume::new(grid, data).unwrap()
    }

    #[test]
    fn identical_inputs() {
        let v = vol(vec![0.1, 0.7, 0.3, 1.0]);
        assert_eq!(ssim(&v, &v).unwrap(), 1.0);
        assert_eq!(psnr(&v, &v).unwrap(), PSNR_CAP_DB);
        assert_eq!(nrmse(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn nrmse_of_zero_prediction() {
        assert_eq!(nrmse_values(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert!(nrmse_values(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn psnr_closed_form() {
        // MSE = 0.01 with L = 1 -> 20 dB.
        let p = psnr_values(&[0.1, 1.1], &[0.0, 1.0], 1.0).unwrap();
        assert!((p - 20.0).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        assert!(ssim(&vol(vec![1.0]), &vol(vec![1.0, 0.0])).is_err());
    }

    #[test]
    fn windowed_matches_global_for_one_window() {
        let a = vol(vec![0.2, 1.0, 0.4]);
        let b = vol(vec![0.3, 1.0, 0.1]);
        let g = ssim(&a, &b).unwrap();
        assert!((ssim_with(&a, &b, SsimMode::Windowed(8)).unwrap() - g).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let v = vol(vec![1.0, 0.5]);
        let r = MetricReport::evaluate("mft", "s0", 3, &v, &v).unwrap();
        let csv = reports_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("method,scene,seed,ssim,psnr_db,nrmse"));
        assert!(lines.next().unwrap().starts_with("mft,s0,3,1.000000,300.0000,0.000000"));
    }

    proptest! {
        #[test]
        fn ssim_bounded_and_symmetric(
            a in proptest::collection::vec(0.0f64..1.0, 2..40),
            seed in 0u64..1000,
        ) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| (v * 7.0 + i as f64 + seed as f64) % 1.0).collect();
            let s1 = ssim_values(&a, &b, 1.0).unwrap();
            let s2 = ssim_values(&b, &a, 1.0).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&s1));
            prop_assert_eq!(ssim_values(&a, &a, 1.0).unwrap(), 1.0);
        }

        #[test]
        fn nrmse_scale_covariance(
            y in proptest::collection::vec(-5.0f64..5.0, 1..30),
            a in -3.0f64..3.0,
        ) {
            prop_assume!(y.iter().any(|v| v.abs() > 1e-3));
            let x: Vec<f64> = y.iter().map(|v| a * v).collect();
            let e = nrmse_values(&x, &y).unwrap();
            prop_assert!((e - (a - 1.0).abs()).abs() < 1e-9);
        }
    }
}
