//! Little-endian binary helpers and atomic file output.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex32;

use crate::error::{Error, Result};

/// Write `path` through a sibling temporary file that is renamed into
/// place once `body` succeeds, so readers never see a partial file.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let tmp = temp_sibling(path);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        let file = w.into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        Ok(())
    })();
    match result {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// Atomic write of a whole byte string.
pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, |w| Ok(w.write_all(bytes)?))
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

pub fn open_reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub(crate) fn write_magic<W: Write>(w: &mut W, magic: &[u8; 4]) -> Result<()> {
    w.write_all(magic)?;
    Ok(())
}

pub(crate) fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 4], kind: &'static str) -> Result<()> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got).map_err(|e| truncated(kind, e))?;
    if &got != magic {
        return Err(Error::Format {
            kind,
            reason: format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&got),
                String::from_utf8_lossy(magic)
            ),
        });
    }
    Ok(())
}

/// Map an unexpected end of file to a format error.
pub(crate) fn truncated(kind: &'static str, e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format {
            kind,
            reason: "file is truncated".into(),
        }
    } else {
        Error::Io(e)
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R, kind: &'static str) -> Result<u32> {
    r.read_u32::<LittleEndian>().map_err(|e| truncated(kind, e))
}

pub(crate) fn read_u64<R: Read>(r: &mut R, kind: &'static str) -> Result<u64> {
    r.read_u64::<LittleEndian>().map_err(|e| truncated(kind, e))
}

pub(crate) fn read_f32<R: Read>(r: &mut R, kind: &'static str) -> Result<f32> {
    r.read_f32::<LittleEndian>().map_err(|e| truncated(kind, e))
}

pub(crate) fn read_u8<R: Read>(r: &mut R, kind: &'static str) -> Result<u8> {
    r.read_u8().map_err(|e| truncated(kind, e))
}

pub(crate) fn read_f32_vec<R: Read>(r: &mut R, len: usize, kind: &'static str) -> Result<Vec<f32>> {
    let mut out = vec![0f32; len];
    r.read_f32_into::<LittleEndian>(&mut out).map_err(|e| truncated(kind, e))?;
    Ok(out)
}

pub(crate) fn write_f32_slice<W: Write>(w: &mut W, values: &[f32]) -> Result<()> {
    for &v in values {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

/// Interleaved `re, im` pairs.
pub(crate) fn write_complex32<W: Write>(w: &mut W, values: &[Complex32]) -> Result<()> {
    for z in values {
        w.write_f32::<LittleEndian>(z.re)?;
        w.write_f32::<LittleEndian>(z.im)?;
    }
    Ok(())
}

pub(crate) fn read_complex32<R: Read>(r: &mut R, len: usize, kind: &'static str) -> Result<Vec<Complex32>> {
    let flat = read_f32_vec(r, 2 * len, kind)?;
    Ok(flat.chunks_exact(2).map(|p| Complex32::new(p[0], p[1])).collect())
}

/// Fail if anything follows the expected payload.
pub(crate) fn expect_eof<R: Read>(r: &mut R, kind: &'static str) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::Format {
            kind,
            reason: "trailing bytes after payload".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bin");
        write_bytes_atomic(&path, b"one").unwrap();
        write_bytes_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        let failed = write_atomic(&path, |_| Err(Error::Numeric("stop".into())));
        assert!(failed.is_err());
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn magic_and_truncation() {
        let mut bytes: &[u8] = b"ABCD\x01\x00";
        expect_magic(&mut bytes, b"ABCD", "test").unwrap();
        assert!(matches!(read_u32(&mut bytes, "test"), Err(Error::Format { .. })));
        let mut bad: &[u8] = b"XXXX";
        assert!(expect_magic(&mut bad, b"ABCD", "test").is_err());
    }
}
