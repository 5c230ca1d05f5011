use std::fmt::Debug;
use std::io::{self, Read, Write};
use std::iter::Sum;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Floating-point width used for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Single,
    Double,
}

impl Precision {
    pub fn bytes(self) -> u8 {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }
}

/// Element type of network parameters and activations.
pub trait Scalar: Float + Sum + Debug + Default + Send + Sync + 'static {
    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;

    fn write_le<W: Write>(self, w: &mut W) -> io::Result<()>;

    fn read_le<R: Read>(r: &mut R) -> io::Result<Self>;
}

impl Scalar for f32 {
    const PRECISION: Precision = Precision::Single;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn write_le<W: Write>(self, w: &mut W) -> io::Result<()> {
        w.write_f32::<LE>(self)
    }

    fn read_le<R: Read>(r: &mut R) -> io::Result<Self> {
        r.read_f32::<LE>()
    }
}

impl Scalar for f64 {
    const PRECISION: Precision = Precision::Double;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn write_le<W: Write>(self, w: &mut W) -> io::Result<()> {
        w.write_f64::<LE>(self)
    }

    fn read_le<R: Read>(r: &mut R) -> io::Result<Self> {
        r.read_f64::<LE>()
    }
}

#[inline]
pub fn sigmoid<S: Scalar>(z: S) -> S {
    // Split by sign so exp never overflows.
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}
