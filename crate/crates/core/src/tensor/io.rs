//! `PHT1` tensor files: an 8-byte magic, a dtype tag, the rank (always 4),
//! four little-endian `u32` extents and the raw little-endian payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Shape, Tensor};
use crate::error::{bail, Error, Result};
use crate::scalar::{DType, Scalar};

pub const MAGIC: [u8; 8] = *b"PHT1\0\0\0\0";

/// A tensor of whichever dtype a file declared.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::F64(_) => DType::F64,
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    /// Converts to `T`, rounding if the stored dtype is wider.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }

    /// Returns the tensor only if it was stored as `T`.
    pub fn exact<T: Scalar>(self) -> Result<Tensor<T>> {
        if self.dtype() != T::DTYPE {
            bail!(Format, "expected dtype {:?}, file holds {:?}", T::DTYPE, self.dtype());
        }
        Ok(self.cast())
    }
}

pub fn write_tensor_to<T: Scalar>(out: &mut impl Write, t: &Tensor<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + 2 + 16 + t.numel() * T::DTYPE.size());
    buf.extend_from_slice(&MAGIC);
    buf.push(T::DTYPE as u8);
    buf.push(4);
    for d in t.shape().0 {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("extent {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        v.put_le(&mut buf);
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor_from(input: &mut impl Read) -> Result<AnyTensor> {
    let mut header = [0u8; 26];
    input.read_exact(&mut header)?;
    if header[..8] != MAGIC {
        bail!(Format, "bad magic {:?}", &header[..8]);
    }
    let Some(dtype) = DType::from_tag(header[8]) else {
        bail!(Format, "unknown dtype tag {}", header[8]);
    };
    if header[9] != 4 {
        bail!(Format, "rank {} (only rank 4 is supported)", header[9]);
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let at = 10 + 4 * i;
        *d = u32::from_le_bytes(header[at..at + 4].try_into().unwrap()) as usize;
    }
    let shape = Shape(dims);
    let mut payload = vec![0u8; shape.numel() * dtype.size()];
    input.read_exact(&mut payload)?;
    Ok(match dtype {
        DType::F32 => AnyTensor::F32(decode(shape, &payload)?),
        DType::F64 => AnyTensor::F64(decode(shape, &payload)?),
    })
}

fn decode<T: Scalar>(shape: Shape, payload: &[u8]) -> Result<Tensor<T>> {
    let size = T::DTYPE.size();
    let data = payload.chunks_exact(size).map(T::get_le).collect();
    Tensor::from_vec(shape, data)
}

pub fn write_tensor<T: Scalar>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_tensor_to(&mut out, t)?;
    out.flush()?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<AnyTensor> {
    let mut input = BufReader::new(File::open(path)?);
    read_tensor_from(&mut input)
}
