//! Binary frame records.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic "QPON" | version u16 | role u8 | frame_index u64 | kind u8 |
//! sample_rate_hz f64 | n_samples u64 | n x (x f64, p f64)
//! ```
//!
//! One frame per record; files may concatenate records.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{FrameError, FrameKind, QuadratureFrame, Role};

pub const MAGIC: [u8; 4] = *b"QPON";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 1 + 8 + 1 + 8 + 8;

pub fn write_frame<W: Write>(w: &mut W, frame: &QuadratureFrame) -> Result<(), FrameError> {
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&MAGIC);
    header[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    header[6] = frame.role.to_byte();
    header[7..15].copy_from_slice(&frame.frame_index.to_le_bytes());
    header[15] = frame.kind.to_byte();
    header[16..24].copy_from_slice(&frame.sample_rate_hz.to_le_bytes());
    header[24..32].copy_from_slice(&(frame.len() as u64).to_le_bytes());
    w.write_all(&header)?;

    let mut body = Vec::with_capacity(frame.len() * 16);
    for z in frame.samples() {
        body.extend_from_slice(&z.re.to_le_bytes());
        body.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&body)?;
    Ok(())
}

/// Reads one record. Returns `Ok(None)` at a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<QuadratureFrame>, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    // Distinguish clean EOF (zero bytes) from a torn header.
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(FrameError::Truncated),
            Ok(k) => got += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let magic: [u8; 4] = header[0..4].try_into().expect("slice of 4");
    if magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FORMAT_VERSION {
        return Err(FrameError::UnsupportedVersion(version));
    }
    let role = Role::from_byte(header[6])?;
    let frame_index = u64::from_le_bytes(header[7..15].try_into().expect("8 bytes"));
    let kind = FrameKind::from_byte(header[15])?;
    let sample_rate_hz = f64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
    let n = u64::from_le_bytes(header[24..32].try_into().expect("8 bytes")) as usize;

    let mut body = vec![0u8; n * 16];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })?;
    let samples = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..16].try_into().expect("8 bytes")),
            )
        })
        .collect();
    QuadratureFrame::new(role, frame_index, kind, sample_rate_hz, samples).map(Some)
}

pub fn write_frames(path: &Path, frames: &[QuadratureFrame]) -> Result<(), FrameError> {
    let mut w = BufWriter::new(File::create(path)?);
    for f in frames {
        write_frame(&mut w, f)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_frames(path: &Path) -> Result<Vec<QuadratureFrame>, FrameError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    while let Some(f) = read_frame(&mut r)? {
        out.push(f);
    }
    Ok(out)
}
