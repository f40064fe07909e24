//! `GMT1` binary tensor codec.
//!
//! Layout: magic `GMT1`, `u32` rank, `rank` x `u32` dims, then row-major little-endian
//! elements. Float tensors hold `f32`; masks hold one `u8` (0 or 1) per element. The
//! element type is implied by the reader.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GMT1";
const MAX_RANK: u32 = 8;

fn write_header<W: Write>(w: &mut W, shape: &[usize]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    Ok(())
}

pub fn encode_f32<W: Write>(w: &mut W, shape: &[usize], data: &[f32]) -> std::io::Result<()> {
    debug_assert_eq!(shape.iter().product::<usize>(), data.len());
    write_header(w, shape)?;
    let mut buf = Vec::with_capacity(data.len() * 4);
    for x in data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn encode_u8<W: Write>(w: &mut W, shape: &[usize], data: &[u8]) -> std::io::Result<()> {
    debug_assert_eq!(shape.iter().product::<usize>(), data.len());
    write_header(w, shape)?;
    w.write_all(data)
}

/// Why a tensor stream could not be decoded; paired with a path by the file readers.
#[derive(Debug)]
pub enum DecodeError {
    Io(std::io::Error),
    Malformed(String),
}

impl From<std::io::Error> for DecodeError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            DecodeError::Malformed("truncated tensor".into())
        } else {
            DecodeError::Io(e)
        }
    }
}

impl DecodeError {
    pub fn at(self, path: &Path) -> Error {
        match self {
            DecodeError::Io(e) => Error::io(path, e),
            DecodeError::Malformed(reason) => Error::format(path, reason),
        }
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, DecodeError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_header<R: Read>(r: &mut R) -> Result<Vec<usize>, DecodeError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DecodeError::Malformed(format!("bad magic {magic:?}")));
    }
    let rank = read_u32(r)?;
    if rank > MAX_RANK {
        return Err(DecodeError::Malformed(format!("rank {rank} exceeds {MAX_RANK}")));
    }
    let shape = (0..rank)
        .map(|_| read_u32(r).map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= 1 << 31)
        .ok_or_else(|| DecodeError::Malformed(format!("implausible shape {shape:?}")))?;
    Ok(shape)
}

pub fn decode_f32<R: Read>(r: &mut R) -> Result<ArrayD<f32>, DecodeError> {
    let shape = read_header(r)?;
    let n: usize = shape.iter().product();
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(ArrayD::from_shape_vec(IxDyn(&shape), data).expect("shape matches length"))
}

pub fn decode_u8<R: Read>(r: &mut R) -> Result<ArrayD<u8>, DecodeError> {
    let shape = read_header(r)?;
    let n: usize = shape.iter().product();
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    if let Some(bad) = buf.iter().find(|&&b| b > 1) {
        return Err(DecodeError::Malformed(format!("mask byte {bad} is not 0 or 1")));
    }
    Ok(ArrayD::from_shape_vec(IxDyn(&shape), buf).expect("shape matches length"))
}

fn expect_eof<R: Read>(r: &mut R) -> Result<(), DecodeError> {
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => Ok(()),
        _ => Err(DecodeError::Malformed("trailing bytes after tensor".into())),
    }
}

pub fn write_f32(path: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode_f32(&mut w, shape, data)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_u8(path: &Path, shape: &[usize], data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode_u8(&mut w, shape, data)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_f32(path: &Path) -> Result<ArrayD<f32>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let t = decode_f32(&mut r).map_err(|e| e.at(path))?;
    expect_eof(&mut r).map_err(|e| e.at(path))?;
    Ok(t)
}

pub fn read_u8(path: &Path) -> Result<ArrayD<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let t = decode_u8(&mut r).map_err(|e| e.at(path))?;
    expect_eof(&mut r).map_err(|e| e.at(path))?;
    Ok(t)
}
