use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FeatureLayout, FeatureMatrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const EPFM_MAGIC: &[u8; 4] = b"EPFM";
pub const EPFM_VERSION: u32 = 1;

/// Header `EPFM, version, layout tag, frames, dims` (little-endian u32)
/// followed by row-major little-endian f64 values.
pub fn write_epfm<T: Real, W: Write>(m: &FeatureMatrix<T>, mut w: W) -> Result<()> {
    let frames = u32::try_from(m.frames()).map_err(|_| Error::Format("too many frames".into()))?;
    let dims = u32::try_from(m.dims()).map_err(|_| Error::Format("too many dimensions".into()))?;
    w.write_all(EPFM_MAGIC)?;
    for v in [EPFM_VERSION, m.layout().tag(), frames, dims] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in m.values() {
        w.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated header".into()))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_epfm<T: Real, R: Read>(mut r: R) -> Result<FeatureMatrix<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("truncated header".into()))?;
    if &magic != EPFM_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected EPFM")));
    }
    let version = read_u32(&mut r)?;
    if version != EPFM_VERSION {
        return Err(Error::Format(format!("unsupported EPFM version {version}")));
    }
    let tag = read_u32(&mut r)?;
    let layout = FeatureLayout::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown layout tag {tag}")))?;
    let frames = read_u32(&mut r)? as usize;
    let dims = read_u32(&mut r)? as usize;
    let count = frames.checked_mul(dims).ok_or_else(|| Error::Format("size overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!("payload has {} bytes, expected {}", bytes.len(), count * 8)));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect();
    FeatureMatrix::new(layout, frames, dims, values)
}

pub fn write_epfm_file<T: Real>(m: &FeatureMatrix<T>, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_epfm(m, BufWriter::new(f))
}

pub fn read_epfm_file<T: Real>(path: &Path) -> Result<FeatureMatrix<T>> {
    let f = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_epfm(BufReader::new(f)).map_err(|e| match e {
        Error::Format(s) => Error::Format(format!("{}: {s}", path.display())),
        other => other,
    })
}

/// Debug mirror: header `d0,d1,...`, one row per frame.
pub fn write_matrix_csv<T: Real, W: Write>(m: &FeatureMatrix<T>, mut w: W) -> Result<()> {
    let header: Vec<String> = (0..m.dims()).map(|d| format!("d{d}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_f64_lossy().to_string()).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}
