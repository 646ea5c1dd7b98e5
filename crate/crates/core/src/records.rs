//! Binary feature records: 8-byte magic, `u32` little-endian length, then
//! that many little-endian `f64` values.

use std::io::{self, Read, Write};
use std::path::Path;

pub const IVA_MAGIC: &[u8; 8] = b"SENTIVA1";
pub const HOG_MAGIC: &[u8; 8] = b"SENTHOG1";
/// Pairwise-distance records of the vector-length ablation.
pub const DISTANCE_MAGIC: &[u8; 8] = b"SENTVLN1";

pub fn write_record<W: Write>(mut out: W, magic: &[u8; 8], values: &[f64]) -> io::Result<()> {
    let len = u32::try_from(values.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "record too long"))?;
    out.write_all(magic)?;
    out.write_all(&len.to_le_bytes())?;
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

pub fn read_record<R: Read>(mut input: R, magic: &[u8; 8]) -> io::Result<Vec<f64>> {
    let mut head = [0u8; 12];
    input.read_exact(&mut head)?;
    if &head[..8] != magic {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!(
                "bad record magic {:?}, expected {:?}",
                String::from_utf8_lossy(&head[..8]),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let len = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut body = vec![0u8; len * 8];
    input.read_exact(&mut body)?;
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn save_record(path: &Path, magic: &[u8; 8], values: &[f64]) -> io::Result<()> {
    let mut out = io::BufWriter::new(std::fs::File::create(path)?);
    write_record(&mut out, magic, values)?;
    out.flush()
}

pub fn load_record(path: &Path, magic: &[u8; 8]) -> io::Result<Vec<f64>> {
    read_record(io::BufReader::new(std::fs::File::open(path)?), magic)
}

/// One value per line, full round-trip precision.
pub fn write_csv<W: Write>(mut out: W, values: &[f64]) -> io::Result<()> {
    for v in values {
        writeln!(out, "{v:?}")?;
    }
    Ok(())
}
