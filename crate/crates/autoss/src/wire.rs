//! Shared binary encoding helpers for the on-disk and on-wire formats.
//!
//! All multi-byte integers are big-endian. Strings are UTF-8 with a u32
//! byte-length prefix. Readers are allocation-safe: length prefixes are
//! honored only up to what the underlying reader actually yields, so a
//! corrupt length cannot trigger a huge up-front allocation.

use std::io::{self, Read, Write};

use thiserror::Error;

/// Low-level decode failure, tagged with what was being read.
#[derive(Debug, Error)]
pub enum WireError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("truncated input while reading {0}")]
    Truncated(&'static str),
    #[error("invalid utf-8 in {0}")]
    InvalidUtf8(&'static str),
}

pub(crate) fn write_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_be_bytes())
}

pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_be_bytes())
}

pub(crate) fn write_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_be_bytes())
}

pub(crate) fn write_string(w: &mut impl Write, s: &str) -> io::Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

/// Reads exactly `buf.len()` bytes, reporting a truncation (not a bare i/o
/// error) when the reader ends early.
pub(crate) fn read_exact(
    r: &mut impl Read,
    buf: &mut [u8],
    what: &'static str,
) -> Result<(), WireError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            WireError::Truncated(what)
        } else {
            WireError::Io(e)
        }
    })
}

pub(crate) fn read_u8(r: &mut impl Read, what: &'static str) -> Result<u8, WireError> {
    let mut buf = [0u8; 1];
    read_exact(r, &mut buf, what)?;
    Ok(buf[0])
}

pub(crate) fn read_u32(r: &mut impl Read, what: &'static str) -> Result<u32, WireError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_be_bytes(buf))
}

pub(crate) fn read_u64(r: &mut impl Read, what: &'static str) -> Result<u64, WireError> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, what)?;
    Ok(u64::from_be_bytes(buf))
}

pub(crate) fn read_f64(r: &mut impl Read, what: &'static str) -> Result<f64, WireError> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, what)?;
    Ok(f64::from_be_bytes(buf))
}

/// Reads a length-prefixed byte block without trusting the prefix for the
/// allocation size.
pub(crate) fn read_block(
    r: &mut impl Read,
    what: &'static str,
) -> Result<Vec<u8>, WireError> {
    let len = read_u32(r, what)? as u64;
    let mut buf = Vec::new();
    r.take(len).read_to_end(&mut buf)?;
    if buf.len() as u64 != len {
        return Err(WireError::Truncated(what));
    }
    Ok(buf)
}

pub(crate) fn read_string(r: &mut impl Read, what: &'static str) -> Result<String, WireError> {
    let bytes = read_block(r, what)?;
    String::from_utf8(bytes).map_err(|_| WireError::InvalidUtf8(what))
}

/// Returns true when the reader has no bytes left.
pub(crate) fn at_eof(r: &mut impl Read) -> Result<bool, WireError> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(true),
        Ok(_) => Ok(false),
        Err(e) => Err(WireError::Io(e)),
    }
}
