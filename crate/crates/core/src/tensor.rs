//! Binary tensor interchange format.
//!
//! Layout: an 8-byte little-endian `u64` giving the header length `n`, then
//! `n` bytes of UTF-8 JSON `{"shape", "dtype", "layout", "schema_version"}`,
//! then the payload in row-major order. `f64` elements are 8 little-endian
//! bytes; `c128` elements are the real part followed by the imaginary part.

use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TENSOR_SCHEMA_VERSION: u32 = 1;
const ROW_MAJOR: &str = "row-major";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F64,
    C128,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F64 => 8,
            DType::C128 => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorHeader {
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub layout: String,
    pub schema_version: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    F64(ArrayD<f64>),
    C128(ArrayD<Complex64>),
}

impl Tensor {
    pub fn dtype(&self) -> DType {
        match self {
            Tensor::F64(_) => DType::F64,
            Tensor::C128(_) => DType::C128,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            Tensor::F64(a) => a.shape(),
            Tensor::C128(a) => a.shape(),
        }
    }

    pub fn into_complex(self) -> Result<ArrayD<Complex64>> {
        match self {
            Tensor::C128(a) => Ok(a),
            Tensor::F64(_) => Err(Error::Shape("expected a c128 tensor, found f64".into())),
        }
    }

    pub fn into_real(self) -> Result<ArrayD<f64>> {
        match self {
            Tensor::F64(a) => Ok(a),
            Tensor::C128(_) => Err(Error::Shape("expected an f64 tensor, found c128".into())),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = TensorHeader {
            shape: self.shape().to_vec(),
            dtype: self.dtype(),
            layout: ROW_MAJOR.into(),
            schema_version: TENSOR_SCHEMA_VERSION,
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let count: usize = header.shape.iter().product();
        let mut out = Vec::with_capacity(8 + json.len() + count * header.dtype.size());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        // `iter()` visits elements in logical row-major order regardless of memory layout.
        match self {
            Tensor::F64(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            Tensor::C128(a) => a.iter().for_each(|v| {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let prefix: [u8; 8] = bytes
            .get(..8)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| Error::Truncated("tensor header length".into()))?;
        let header_len = usize::try_from(u64::from_le_bytes(prefix))
            .map_err(|_| Error::MalformedHeader("tensor header length overflows".into()))?;
        let header_end = 8usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::Truncated("tensor header".into()))?;
        let header: TensorHeader = serde_json::from_slice(&bytes[8..header_end])
            .map_err(|e| Error::MalformedHeader(format!("tensor header: {e}")))?;
        if header.layout != ROW_MAJOR {
            return Err(Error::MalformedHeader(format!("unsupported layout {:?}", header.layout)));
        }
        if header.schema_version != TENSOR_SCHEMA_VERSION {
            return Err(Error::MalformedHeader(format!(
                "unsupported tensor schema version {}",
                header.schema_version
            )));
        }
        let expected = header
            .shape
            .iter()
            .try_fold(header.dtype.size(), |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::MalformedHeader("tensor shape overflows".into()))?;
        let payload = &bytes[header_end..];
        if payload.len() < expected {
            return Err(Error::Truncated(format!(
                "tensor payload has {} bytes, shape needs {expected}",
                payload.len()
            )));
        }
        if payload.len() > expected {
            return Err(Error::MalformedHeader(format!(
                "tensor payload has {} bytes, shape needs {expected}",
                payload.len()
            )));
        }
        let f64s = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let shape = IxDyn(&header.shape);
        Ok(match header.dtype {
            DType::F64 => Tensor::F64(
                ArrayD::from_shape_vec(shape, f64s.collect()).expect("length checked above"),
            ),
            DType::C128 => {
                let flat: Vec<f64> = f64s.collect();
                let values = flat.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
                Tensor::C128(ArrayD::from_shape_vec(shape, values).expect("length checked above"))
            }
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Missing(path.display().to_string()),
            _ => Error::io(path, e),
        })?;
        Self::decode(&bytes)
    }
}
