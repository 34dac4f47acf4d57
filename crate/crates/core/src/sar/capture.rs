use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::{Complex32, Complex64};

use super::aperture::{ApertureConfig, ApertureData};
use crate::error::{Error, Result};
use crate::io::{
    expect_eof, expect_magic, open_reader, read_complex32, read_u32, truncated, write_atomic, write_complex32,
    write_magic,
};
use crate::signal::{MultibandConfig, Subband};

const MAGIC: &[u8; 4] = b"CAP1";
const KIND: &str = "capture";

/// Aperture samples together with the geometry and band they were taken
/// with. A single signal is a 1 x 1 capture.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub aperture: ApertureConfig,
    pub data: ApertureData,
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    r.read_f64::<LittleEndian>().map_err(|e| truncated(KIND, e))
}

impl Capture {
    pub fn new(aperture: ApertureConfig, data: ApertureData) -> Result<Self> {
        if data.nx != aperture.nx || data.ny != aperture.ny || data.n != aperture.cfg.n_total {
            return Err(Error::Shape(format!(
                "capture data {} x {} x {} does not match its aperture",
                data.nx, data.ny, data.n
            )));
        }
        Ok(Self { aperture, data })
    }

    /// Layout: magic, u32 nx, ny, N, f64 dx, dy, k1, dk, u32 subband
    /// count, per subband u32 start and length, then `nx ny N` complex
    /// samples (f32 re, f32 im) element by element, x fastest.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let ap = &self.aperture;
        write_magic(w, MAGIC)?;
        for v in [ap.nx, ap.ny, ap.cfg.n_total] {
            w.write_u32::<LittleEndian>(v as u32)?;
        }
        for v in [ap.dx, ap.dy, ap.cfg.k1, ap.cfg.dk] {
            w.write_f64::<LittleEndian>(v)?;
        }
        w.write_u32::<LittleEndian>(ap.cfg.subbands.len() as u32)?;
        for b in &ap.cfg.subbands {
            w.write_u32::<LittleEndian>(b.start as u32)?;
            w.write_u32::<LittleEndian>(b.len as u32)?;
        }
        let samples: Vec<Complex32> = self.data.data.iter().map(|z| Complex32::new(z.re as f32, z.im as f32)).collect();
        write_complex32(w, &samples)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        expect_magic(r, MAGIC, KIND)?;
        let nx = read_u32(r, KIND)? as usize;
        let ny = read_u32(r, KIND)? as usize;
        let n = read_u32(r, KIND)? as usize;
        let dx = read_f64(r)?;
        let dy = read_f64(r)?;
        let k1 = read_f64(r)?;
        let dk = read_f64(r)?;
        let count = read_u32(r, KIND)? as usize;
        if count > 4096 {
            return Err(format_err(format!("implausible subband count {count}")));
        }
        let mut subbands = Vec::with_capacity(count);
        for _ in 0..count {
            let start = read_u32(r, KIND)? as usize;
            let len = read_u32(r, KIND)? as usize;
            subbands.push(Subband { start, len });
        }
        let cfg = MultibandConfig::new(k1, dk, n, subbands).map_err(|e| format_err(e.to_string()))?;
        let total = nx
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(n))
            .filter(|&v| v <= 1 << 30)
            .ok_or_else(|| format_err(format!("implausible dimensions {nx} x {ny} x {n}")))?;
        let data: Vec<Complex64> = read_complex32(r, total, KIND)?
            .iter()
            .map(|z| Complex64::new(z.re as f64, z.im as f64))
            .collect();
        expect_eof(r, KIND)?;
        let aperture = ApertureConfig { nx, ny, dx, dy, cfg };
        Self::new(aperture, ApertureData { nx, ny, n, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| self.write_to(w))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut open_reader(path)?)
    }
}

fn format_err(reason: String) -> Error {
    Error::Format { kind: KIND, reason }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sar::{simulate_aperture, SampleMode, SceneXYZ};

    #[test]
    fn round_trip_at_f32_precision() {
        let ap = ApertureConfig::quarter_wave(3, MultibandConfig::canonical());
        let data = simulate_aperture(&SceneXYZ::point(0.0, 0.0, 0.3), &ap, 10.0, 4, SampleMode::Multiband).unwrap();
        let cap = Capture::new(ap, data).unwrap();
        let mut bytes = Vec::new();
        cap.write_to(&mut bytes).unwrap();
        let back = Capture::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.aperture, cap.aperture);
        for (a, b) in back.data.data.iter().zip(&cap.data.data) {
            assert!((a - b).norm() < 1e-6);
        }
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, bytes);
        assert!(Capture::read_from(&mut &bytes[..bytes.len() - 2]).is_err());
    }
}
