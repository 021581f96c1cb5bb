//! `.scube` container: `"SCUB"`, version byte, `L`, `H`, `W` as little-endian
//! `u32`, then `L·H·W` little-endian `f32` in planar `[band][row][col]` order.

use std::fs;
use std::path::Path;

use super::cube::{default_wavelengths, SpectralCube};
use crate::error::{Error, Result};

pub const SCUBE_MAGIC: [u8; 4] = *b"SCUB";
pub const SCUBE_VERSION: u8 = 0x01;
const HEADER_LEN: usize = 17;

pub fn write_scube(cube: &SpectralCube) -> Vec<u8> {
    let (h, w, l) = (cube.height(), cube.width(), cube.bands());
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * h * w * l);
    out.extend_from_slice(&SCUBE_MAGIC);
    out.push(SCUBE_VERSION);
    for d in [l, h, w] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for band in 0..l {
        for y in 0..h {
            for x in 0..w {
                out.extend_from_slice(&cube.get(y, x, band).to_le_bytes());
            }
        }
    }
    out
}

/// Decode a `.scube` buffer. The format carries no wavelengths; when
/// `wavelengths_nm` is `None` the bands are spread evenly over 420–700 nm.
pub fn read_scube(bytes: &[u8], wavelengths_nm: Option<Vec<f64>>) -> Result<SpectralCube> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("four bytes");
    if magic != SCUBE_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes[4] != SCUBE_VERSION {
        return Err(Error::VersionMismatch(bytes[4]));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().expect("four bytes")) as usize;
    let (l, h, w) = (dim(0), dim(1), dim(2));
    if l == 0 || h == 0 || w == 0 {
        return Err(Error::InvalidHeader(format!("zero dimension in L={l} H={h} W={w}")));
    }
    let n = l
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::InvalidHeader("dimensions overflow".into()))?;
    let expected = HEADER_LEN + 4 * n;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let wl = match wavelengths_nm {
        Some(wl) if wl.len() != l => return Err(Error::BandMismatch(l, wl.len())),
        Some(wl) => wl,
        None => default_wavelengths(l),
    };
    let payload = &bytes[HEADER_LEN..expected];
    let mut values = vec![0f32; n];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let band = i / (h * w);
        let pix = i % (h * w);
        values[pix * l + band] = f32::from_le_bytes(chunk.try_into().expect("four bytes"));
    }
    SpectralCube::new(h, w, wl, values)
}

pub fn save_scube(cube: &SpectralCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_scube(cube)).map_err(|e| Error::io(path, e))
}

pub fn load_scube(path: impl AsRef<Path>) -> Result<SpectralCube> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_scube(&bytes, None)
}
