//! Flat binary storage for parameter vectors.
//!
//! Layout, all integers `u64` and all floats `f64`, little-endian:
//!
//! ```text
//! b"SADJPRM1" | d | m | k | widths[0..k] | θ[0..m]
//! ```
//!
//! `k = 0` for fields that are not networks.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SADJPRM1";

#[derive(Debug, Clone, PartialEq)]
pub struct ParamFile {
    pub state_dim: usize,
    pub widths: Vec<usize>,
    pub params: Vec<f64>,
}

impl ParamFile {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.state_dim, self.params.len(), self.widths.len()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for &v in &self.widths {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for &p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let state_dim = read_u64(&mut r)?;
        let m = read_u64(&mut r)?;
        let k = read_u64(&mut r)?;
        if k > 1 << 20 || m > 1 << 32 {
            return Err(Error::Format("implausible header".into()));
        }
        let widths = (0..k).map(|_| read_u64(&mut r)).collect::<Result<Vec<_>>>()?;
        let mut params = Vec::with_capacity(m);
        let mut buf = [0u8; 8];
        for _ in 0..m {
            read_exact(&mut r, &mut buf)?;
            params.push(f64::from_le_bytes(buf));
        }
        if r.read(&mut buf)? != 0 {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(ParamFile { state_dim, widths, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated file".into()),
        _ => Error::Io(e),
    })
}

fn read_u64(r: &mut impl Read) -> Result<usize> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    usize::try_from(u64::from_le_bytes(buf)).map_err(|_| Error::Format("integer overflow".into()))
}
