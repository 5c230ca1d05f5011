//! `windows.bin`: versioned binary container for a [`WindowedDataset`].
//!
//! All integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "DRULWIN\0"
//! version    u32
//! timesteps  u32
//! features   u32      (F)
//! horizon    u32
//! samples    u64      (N)
//! attrs      F x u16  feature order (0 when unknown)
//! x          N*T*F x f64, row-major
//! y          N*T x f64
//! starts     N x u32
//! groups     N x (u32 length + UTF-8 bytes)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::WindowedDataset;
use crate::error::{Error, Result};

pub const WINDOWS_MAGIC: &[u8; 8] = b"DRULWIN\0";
pub const WINDOWS_VERSION: u32 = 1;

pub fn write_windows(path: &Path, ds: &WindowedDataset) -> Result<()> {
    let io = |e| Error::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    encode(&mut w, ds).map_err(io)?;
    w.flush().map_err(io)
}

fn encode<W: Write>(w: &mut W, ds: &WindowedDataset) -> std::io::Result<()> {
    w.write_all(WINDOWS_MAGIC)?;
    w.write_u32::<LE>(WINDOWS_VERSION)?;
    w.write_u32::<LE>(ds.timesteps as u32)?;
    w.write_u32::<LE>(ds.n_features as u32)?;
    w.write_u32::<LE>(ds.horizon as u32)?;
    w.write_u64::<LE>(ds.len() as u64)?;
    for f in 0..ds.n_features {
        w.write_u16::<LE>(ds.features.get(f).copied().unwrap_or(0))?;
    }
    for v in ds.x.iter().chain(&ds.y) {
        w.write_f64::<LE>(*v)?;
    }
    for s in &ds.starts {
        w.write_u32::<LE>(*s as u32)?;
    }
    for g in &ds.groups {
        w.write_u32::<LE>(g.len() as u32)?;
        w.write_all(g.as_bytes())?;
    }
    Ok(())
}

pub fn read_windows(path: &Path) -> Result<WindowedDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode(&mut BufReader::new(file)).map_err(|e| match e {
        DecodeError::Io(e) => Error::io(path, e),
        DecodeError::Format(m) => Error::schema(format!("{}: {m}", path.display())),
    })
}

enum DecodeError {
    Io(std::io::Error),
    Format(String),
}

impl From<std::io::Error> for DecodeError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            DecodeError::Format("truncated windows file".into())
        } else {
            DecodeError::Io(e)
        }
    }
}

fn decode<R: Read>(r: &mut R) -> std::result::Result<WindowedDataset, DecodeError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != WINDOWS_MAGIC {
        return Err(DecodeError::Format("not a windows file".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != WINDOWS_VERSION {
        return Err(DecodeError::Format(format!("unsupported version {version}")));
    }
    let timesteps = r.read_u32::<LE>()? as usize;
    let n_features = r.read_u32::<LE>()? as usize;
    let horizon = r.read_u32::<LE>()? as usize;
    let n = r.read_u64::<LE>()? as usize;
    let mut features = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        features.push(r.read_u16::<LE>()?);
    }
    if features.iter().all(|&f| f == 0) {
        features.clear();
    }
    let mut x = vec![0.0; n * timesteps * n_features];
    r.read_f64_into::<LE>(&mut x)?;
    let mut y = vec![0.0; n * timesteps];
    r.read_f64_into::<LE>(&mut y)?;
    let mut starts = Vec::with_capacity(n);
    for _ in 0..n {
        starts.push(r.read_u32::<LE>()? as usize);
    }
    let mut groups = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.read_u32::<LE>()? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        groups.push(String::from_utf8(buf).map_err(|_| DecodeError::Format("serial is not UTF-8".into()))?);
    }
    Ok(WindowedDataset {
        timesteps,
        n_features,
        horizon,
        features,
        x,
        y,
        groups,
        starts,
    })
}
