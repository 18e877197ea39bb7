//! Tensor file I/O.
//!
//! Binary format: magic bytes `SFT1`, one dtype byte (1 = 32-bit
//! little-endian float), one rank byte, `rank` little-endian u32 dims, then
//! the row-major payload. Rank-2 maps are also accepted as CSV.

use crate::{Error, Result};
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"SFT1";
pub const DTYPE_F32: u8 = 1;

/// Row-major tensor of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if expect != data.len() {
            return Err(Error::BadTensor(format!(
                "dims {:?} imply {} elements, got {}",
                dims,
                expect,
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub fn write_sft(mut w: impl Write, t: &Tensor) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[DTYPE_F32, t.dims.len() as u8])?;
    for &d in &t.dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in &t.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_sft(mut r: impl Read) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadTensor("bad magic (expected SFT1)".into()));
    }
    let mut head = [0u8; 2];
    r.read_exact(&mut head)?;
    if head[0] != DTYPE_F32 {
        return Err(Error::BadTensor(format!("unsupported dtype {}", head[0])));
    }
    let rank = head[1] as usize;
    if rank == 0 || rank > 8 {
        return Err(Error::BadTensor(format!("unsupported rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        dims.push(u32::from_le_bytes(b) as usize);
    }
    let count: usize = dims.iter().product();
    let mut payload = vec![0u8; count * 4];
    r.read_exact(&mut payload)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::BadTensor("trailing bytes after payload".into()));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(dims, data)
}

pub fn read_sft_file(path: impl AsRef<std::path::Path>) -> Result<Tensor> {
    read_sft(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_sft_file(path: impl AsRef<std::path::Path>, t: &Tensor) -> Result<()> {
    write_sft(std::io::BufWriter::new(std::fs::File::create(path)?), t)
}

/// Parse a rank-2 tensor from comma-separated rows.
pub fn read_csv_map(text: &str) -> Result<Tensor> {
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f32>, _> =
            line.split(',').map(|t| t.trim().parse::<f32>()).collect();
        let row = row.map_err(|e| Error::BadTensor(format!("csv line {}: {}", lineno + 1, e)))?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::BadTensor(format!(
                    "csv line {}: {} columns, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::BadTensor("empty csv map".into()));
    }
    let h = rows.len();
    let w = rows[0].len();
    Tensor::new(vec![h, w], rows.into_iter().flatten().collect())
}
