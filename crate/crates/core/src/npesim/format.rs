//! Binary weight and feature files.
//!
//! Both kinds share a 16-byte header — four magic bytes, a little-endian
//! u32 version, and two little-endian u32 dimensions — followed by the
//! payload as little-endian 16-bit words, row-major.
//! Weight files ("TCDW") store inputs x outputs matrices; feature files
//! ("TCDF") store batches x length vectors.

use std::io::{Read, Write};

use crate::goldref::WeightMatrix;

use super::NpeError;

pub const WEIGHT_MAGIC: [u8; 4] = *b"TCDW";
pub const FEATURE_MAGIC: [u8; 4] = *b"TCDF";
pub const FORMAT_VERSION: u32 = 1;

fn write_header(
    w: &mut impl Write,
    magic: [u8; 4],
    dim0: u32,
    dim1: u32,
) -> Result<(), NpeError> {
    w.write_all(&magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&dim0.to_le_bytes())?;
    w.write_all(&dim1.to_le_bytes())?;
    Ok(())
}

fn read_header(r: &mut impl Read, magic: [u8; 4]) -> Result<(u32, u32), NpeError> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(|_| NpeError::Truncated)?;
    if header[0..4] != magic {
        return Err(NpeError::BadMagic { expected: magic });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(NpeError::BadVersion(version));
    }
    let dim0 = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let dim1 = u32::from_le_bytes(header[12..16].try_into().unwrap());
    Ok((dim0, dim1))
}

fn write_words(w: &mut impl Write, words: &[i16]) -> Result<(), NpeError> {
    let mut bytes = Vec::with_capacity(words.len() * 2);
    for &word in words {
        bytes.extend_from_slice(&(word as u16).to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

fn read_words(r: &mut impl Read, count: usize) -> Result<Vec<i16>, NpeError> {
    let mut bytes = vec![0u8; count * 2];
    r.read_exact(&mut bytes).map_err(|_| NpeError::Truncated)?;
    Ok(bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]) as i16)
        .collect())
}

pub fn write_weights(w: &mut impl Write, weights: &WeightMatrix) -> Result<(), NpeError> {
    write_header(w, WEIGHT_MAGIC, weights.inputs() as u32, weights.outputs() as u32)?;
    write_words(w, weights.rows())
}

pub fn read_weights(r: &mut impl Read) -> Result<WeightMatrix, NpeError> {
    let (inputs, outputs) = read_header(r, WEIGHT_MAGIC)?;
    let data = read_words(r, inputs as usize * outputs as usize)?;
    Ok(WeightMatrix::from_rows(inputs as usize, outputs as usize, data))
}

pub fn write_features(w: &mut impl Write, batches: &[Vec<i16>]) -> Result<(), NpeError> {
    let b = batches.len() as u32;
    let len = batches.first().map_or(0, |v| v.len()) as u32;
    write_header(w, FEATURE_MAGIC, b, len)?;
    for batch in batches {
        debug_assert_eq!(batch.len() as u32, len);
        write_words(w, batch)?;
    }
    Ok(())
}

pub fn read_features(r: &mut impl Read) -> Result<Vec<Vec<i16>>, NpeError> {
    let (b, len) = read_header(r, FEATURE_MAGIC)?;
    (0..b).map(|_| read_words(r, len as usize)).collect()
}
