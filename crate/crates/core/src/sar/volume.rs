use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::{
    expect_eof, expect_magic, open_reader, read_f32, read_f32_vec, read_u32, write_atomic, write_f32_slice,
    write_magic,
};

const MAGIC: &[u8; 4] = b"VOL1";
const KIND: &str = "volume";

/// Regular grid geometry shared by real and complex volumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dims: [usize; 3],
    pub origin: [f32; 3],
    pub pitch: [f32; 3],
}

impl Grid {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat offset, x fastest.
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.dims[1] + iy) * self.dims[0] + ix
    }

    pub fn coords(&self, flat: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [flat % nx, (flat / nx) % ny, flat / (nx * ny)]
    }

    /// Metric position of a voxel centre.
    pub fn position(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        let i = [ix, iy, iz];
        std::array::from_fn(|a| self.origin[a] as f64 + i[a] as f64 * self.pitch[a] as f64)
    }

    /// Nearest voxel index along `axis` for coordinate `v`.
    pub fn nearest(&self, axis: usize, v: f64) -> isize {
        ((v - self.origin[axis] as f64) / self.pitch[axis] as f64).round() as isize
    }
}

/// Complex reconstruction before taking magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVolume {
    pub grid: Grid,
    pub data: Vec<Complex64>,
}

impl ComplexVolume {
    pub fn magnitude(&self) -> Volume {
        Volume {
            grid: self.grid,
            data: self.data.iter().map(|z| z.norm() as f32).collect(),
        }
    }
}

/// Reconstructed reflectivity magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub grid: Grid,
    pub data: Vec<f32>,
}

impl Volume {
    pub fn new(grid: Grid, data: Vec<f32>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} voxels for a {:?} grid",
                data.len(),
                grid.dims
            )));
        }
        if data.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Numeric("volume magnitudes must be finite and non-negative".into()));
        }
        Ok(Self { grid, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> f32 {
        self.data[self.grid.index(ix, iy, iz)]
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64).powi(2)).sum()
    }

    /// Voxel of the largest magnitude (first on ties).
    pub fn argmax(&self) -> [usize; 3] {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        self.grid.coords(best)
    }

    /// Copy scaled to a unit maximum; an all-zero volume stays zero.
    pub fn normalized(&self) -> Self {
        let m = self.max();
        let scale = if m > 0.0 { 1.0 / m } else { 0.0 };
        Self {
            grid: self.grid,
            data: self.data.iter().map(|v| v * scale).collect(),
        }
    }

    /// Magnitudes along z through column `(ix, iy)`.
    pub fn z_line(&self, ix: usize, iy: usize) -> Vec<f32> {
        (0..self.grid.dims[2]).map(|iz| self.get(ix, iy, iz)).collect()
    }

    /// Constant-z plane as `(width = nx, height = ny, row-major data)`.
    pub fn slice_xy(&self, iz: usize) -> (usize, usize, Vec<f32>) {
        let [nx, ny, _] = self.grid.dims;
        let s = self.grid.index(0, 0, iz);
        (nx, ny, self.data[s..s + nx * ny].to_vec())
    }

    /// Constant-y plane as `(width = nx, height = nz, row-major data)`.
    pub fn slice_xz(&self, iy: usize) -> (usize, usize, Vec<f32>) {
        let [nx, _, nz] = self.grid.dims;
        let mut out = Vec::with_capacity(nx * nz);
        for iz in 0..nz {
            let s = self.grid.index(0, iy, iz);
            out.extend_from_slice(&self.data[s..s + nx]);
        }
        (nx, nz, out)
    }

    /// Maximum-intensity projection along z.
    pub fn projection_xy(&self) -> (usize, usize, Vec<f32>) {
        let [nx, ny, nz] = self.grid.dims;
        let mut out = vec![0.0f32; nx * ny];
        for iz in 0..nz {
            let s = self.grid.index(0, 0, iz);
            for (o, &v) in out.iter_mut().zip(&self.data[s..s + nx * ny]) {
                *o = o.max(v);
            }
        }
        (nx, ny, out)
    }

    /// Layout: magic, u32 nx, ny, nz, f32 origin and pitch per axis
    /// (x origin, x pitch, y origin, ...), f32 magnitudes with x fastest.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_magic(w, MAGIC)?;
        for d in self.grid.dims {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for a in 0..3 {
            w.write_f32::<LittleEndian>(self.grid.origin[a])?;
            w.write_f32::<LittleEndian>(self.grid.pitch[a])?;
        }
        write_f32_slice(w, &self.data)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        expect_magic(r, MAGIC, KIND)?;
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = read_u32(r, KIND)? as usize;
        }
        let mut origin = [0f32; 3];
        let mut pitch = [0f32; 3];
        for a in 0..3 {
            origin[a] = read_f32(r, KIND)?;
            pitch[a] = read_f32(r, KIND)?;
        }
        let grid = Grid { dims, origin, pitch };
        if grid.len() > 1 << 30 {
            return Err(Error::Format {
                kind: KIND,
                reason: format!("implausible dimensions {dims:?}"),
            });
        }
        let data = read_f32_vec(r, grid.len(), KIND)?;
        expect_eof(r, KIND)?;
        Self::new(grid, data).map_err(|e| Error::Format {
            kind: KIND,
            reason: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| self.write_to(w))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut open_reader(path)?)
    }
}

/// 8-bit binary PGM of a row-major image, scaled so its maximum is 255.
pub fn write_pgm(path: &Path, width: usize, height: usize, data: &[f32]) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::Shape(format!("{} pixels for {width} x {height}", data.len())));
    }
    let m = data.iter().copied().fold(0.0f32, f32::max);
    let scale = if m > 0.0 { 255.0 / m } else { 0.0 };
    write_atomic(path, |w| {
        write!(w, "P5\n{width} {height}\n255\n")?;
        let bytes: Vec<u8> = data.iter().map(|v| (v * scale).round().clamp(0.0, 255.0) as u8).collect();
        w.write_all(&bytes)?;
        Ok(())
    })
}

/// Row-major image as comma-separated rows.
pub fn write_csv_image(path: &Path, width: usize, data: &[f32]) -> Result<()> {
    if width == 0 || data.len() % width != 0 {
        return Err(Error::Shape(format!("{} values do not tile rows of {width}", data.len())));
    }
    write_atomic(path, |w| {
        for row in data.chunks(width) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Volume {
        let grid = Grid {
            dims: [3, 2, 4],
            origin: [-1.0, -0.5, 0.0],
            pitch: [1.0, 1.0, 0.25],
        };
        let data = (0..24).map(|i| (i % 7) as f32).collect();
        Volume::new(grid, data).unwrap()
    }

    #[test]
    fn indexing_is_x_fastest() {
        let v = sample();
        assert_eq!(v.grid.index(1, 0, 0), 1);
        assert_eq!(v.grid.index(0, 1, 0), 3);
        assert_eq!(v.grid.index(0, 0, 1), 6);
        assert_eq!(v.grid.coords(17), [2, 1, 2]);
        assert_eq!(v.grid.position(2, 1, 2), [1.0, 0.5, 0.5]);
        assert_eq!(v.argmax(), v.grid.coords(6));
    }

    #[test]
    fn file_round_trip() {
        let v = sample();
        let mut bytes = Vec::new();
        v.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 4 + 12 + 24 + 24 * 4);
        assert_eq!(Volume::read_from(&mut bytes.as_slice()).unwrap(), v);
        assert!(Volume::read_from(&mut &bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn slices_and_normalization() {
        let v = sample();
        let (w, h, xz) = v.slice_xz(1);
        assert_eq!((w, h), (3, 4));
        assert_eq!(xz[3], v.get(0, 1, 1));
        assert_eq!(v.normalized().max(), 1.0);
        assert_eq!(v.z_line(2, 1).len(), 4);
    }

    #[test]
    fn pgm_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.pgm");
        write_pgm(&p, 2, 1, &[0.0, 2.0]).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..], b"P5\n2 1\n255\n\x00\xff");
    }

    #[test]
    fn rejects_negative() {
        let grid = Grid {
            dims: [1, 1, 1],
            origin: [0.0; 3],
            pitch: [1.0; 3],
        };
        assert!(Volume::new(grid, vec![-1.0]).is_err());
    }
}
