//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `DRULCKPT`, `u32` format version, `u8`
//! element width (4 or 8), `u32` header length, JSON header, then every
//! parameter tensor in [`Parameters::tensors`] order. When the header says
//! the optimizer is included, the Adam first and second moments follow in the
//! same order.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::model::{EncoderDecoderConfig, EncoderDecoderModel, Parameters, TargetTransform};
use super::scalar::{Precision, Scalar};
use super::train::{train_new, DatasetPredictions, TrainConfig, TrainReport};
use crate::dataset::WindowedDataset;
use crate::error::{Error, Result};
use crate::ingest::write_atomic;

const MAGIC: &[u8; 8] = b"DRULCKPT";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: EncoderDecoderConfig,
    target: TargetTransform,
    epoch: usize,
    optimizer_step: Option<u64>,
}

/// A model plus, optionally, the optimizer state needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    pub model: EncoderDecoderModel<S>,
    pub optimizer: Option<AdamState<S>>,
    /// Epoch the parameters come from.
    pub epoch: usize,
}

fn write_params<S: Scalar, W: Write>(p: &Parameters<S>, w: &mut W) -> io::Result<()> {
    for t in p.tensors() {
        for &v in t {
            v.write_le(w)?;
        }
    }
    Ok(())
}

fn read_params<S: Scalar, R: Read>(cfg: &EncoderDecoderConfig, r: &mut R) -> io::Result<Parameters<S>> {
    let mut p = Parameters::zeros(cfg);
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = S::read_le(r)?;
        }
    }
    Ok(p)
}

impl<S: Scalar> Checkpoint<S> {
    pub fn to_writer<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = Header {
            config: self.model.config().clone(),
            target: self.model.target,
            epoch: self.epoch,
            optimizer_step: self.optimizer.as_ref().map(|a| a.step),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::schema(e.to_string()))?;
        let io = |e| Error::io("<checkpoint>", e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_u32::<LE>(FORMAT_VERSION).map_err(io)?;
        w.write_u8(S::PRECISION.bytes()).map_err(io)?;
        w.write_u32::<LE>(json.len() as u32).map_err(io)?;
        w.write_all(&json).map_err(io)?;
        write_params(self.model.params(), w).map_err(io)?;
        if let Some(adam) = &self.optimizer {
            write_params(&adam.m, w).map_err(io)?;
            write_params(&adam.v, w).map_err(io)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.to_writer(&mut buf)?;
        write_atomic(path, &buf)
    }
}

/// A checkpoint of either precision.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyCheckpoint {
    Single(Checkpoint<f32>),
    Double(Checkpoint<f64>),
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::schema("checkpoint is truncated")
    } else {
        Error::io("<checkpoint>", e)
    }
}

fn read_body<S: Scalar, R: Read>(header: Header, r: &mut R) -> Result<Checkpoint<S>> {
    let params = read_params::<S, _>(&header.config, r).map_err(truncated)?;
    let optimizer = match header.optimizer_step {
        None => None,
        Some(step) => {
            let m = read_params(&header.config, r).map_err(truncated)?;
            let v = read_params(&header.config, r).map_err(truncated)?;
            Some(AdamState { step, m, v })
        }
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(truncated)? != 0 {
        return Err(Error::schema("checkpoint has trailing bytes"));
    }
    let model = EncoderDecoderModel::from_parts(header.config, params, header.target)?;
    Ok(Checkpoint {
        model,
        optimizer,
        epoch: header.epoch,
    })
}

impl AnyCheckpoint {
    pub fn from_reader<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::schema("not a model checkpoint"));
        }
        let version = r.read_u32::<LE>().map_err(truncated)?;
        if version != FORMAT_VERSION {
            return Err(Error::schema(format!("unsupported checkpoint version {version}")));
        }
        let width = r.read_u8().map_err(truncated)?;
        let len = r.read_u32::<LE>().map_err(truncated)? as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(truncated)?;
        let header: Header =
            serde_json::from_slice(&json).map_err(|e| Error::schema(format!("checkpoint header: {e}")))?;
        match width {
            4 => Ok(AnyCheckpoint::Single(read_body(header, r)?)),
            8 => Ok(AnyCheckpoint::Double(read_body(header, r)?)),
            w => Err(Error::schema(format!("unsupported element width {w}"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(&mut BufReader::new(file))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            AnyCheckpoint::Single(c) => c.save(path),
            AnyCheckpoint::Double(c) => c.save(path),
        }
    }

    pub fn to_writer<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut w = BufWriter::new(w);
        match self {
            AnyCheckpoint::Single(c) => c.to_writer(&mut w)?,
            AnyCheckpoint::Double(c) => c.to_writer(&mut w)?,
        }
        w.flush().map_err(|e| Error::io("<checkpoint>", e))
    }

    pub fn precision(&self) -> Precision {
        match self {
            AnyCheckpoint::Single(_) => Precision::Single,
            AnyCheckpoint::Double(_) => Precision::Double,
        }
    }

    pub fn config(&self) -> &EncoderDecoderConfig {
        match self {
            AnyCheckpoint::Single(c) => c.model.config(),
            AnyCheckpoint::Double(c) => c.model.config(),
        }
    }

    pub fn target(&self) -> TargetTransform {
        match self {
            AnyCheckpoint::Single(c) => c.model.target,
            AnyCheckpoint::Double(c) => c.model.target,
        }
    }

    pub fn epoch(&self) -> usize {
        match self {
            AnyCheckpoint::Single(c) => c.epoch,
            AnyCheckpoint::Double(c) => c.epoch,
        }
    }

    pub fn predict_dataset(&self, ds: &WindowedDataset) -> Result<DatasetPredictions> {
        match self {
            AnyCheckpoint::Single(c) => c.model.predict_dataset(ds),
            AnyCheckpoint::Double(c) => c.model.predict_dataset(ds),
        }
    }
}

/// Initializes and trains a model at `tcfg.precision`.
pub fn train_checkpoint(
    config: EncoderDecoderConfig,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    tcfg: &TrainConfig,
) -> Result<(AnyCheckpoint, TrainReport)> {
    fn wrap<S: Scalar>(
        config: EncoderDecoderConfig,
        train_set: &WindowedDataset,
        val_set: &WindowedDataset,
        tcfg: &TrainConfig,
    ) -> Result<(Checkpoint<S>, TrainReport)> {
        let out = train_new::<S>(config, train_set, val_set, tcfg)?;
        let ckpt = Checkpoint {
            model: out.model,
            optimizer: Some(out.optimizer),
            epoch: out.report.best_epoch,
        };
        Ok((ckpt, out.report))
    }
    Ok(match tcfg.precision {
        Precision::Single => {
            let (c, r) = wrap::<f32>(config, train_set, val_set, tcfg)?;
            (AnyCheckpoint::Single(c), r)
        }
        Precision::Double => {
            let (c, r) = wrap::<f64>(config, train_set, val_set, tcfg)?;
            (AnyCheckpoint::Double(c), r)
        }
    })
}
