//! Element type abstraction so every layer and loss can run in `f32` for
//! training speed and in `f64` for finite-difference gradient verification.

use ndarray::LinalgScalar;
use num_traits::Float;

/// Dtype tag stored in serialized tensor containers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size_of(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::F64),
            _ => None,
        }
    }
}

/// Floating-point element type usable throughout the autodiff engine.
///
/// `LinalgScalar` routes matrix products through ndarray's BLAS-free GEMM;
/// the byte-level hooks drive the binary tensor container.
pub trait Scalar:
    Float
    + LinalgScalar
    + std::ops::AddAssign
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    const DTYPE: Dtype;

    fn of_f64(v: f64) -> Self;
    fn into_f64(self) -> f64;
    /// Reads one element from little-endian bytes (`buf.len() == DTYPE.size_of()`).
    fn read_le(buf: &[u8]) -> Self;
    /// Appends this element to `out` in little-endian byte order.
    fn write_le(self, out: &mut Vec<u8>);
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn of_f64(v: f64) -> Self {
        v as f32
    }

    fn into_f64(self) -> f64 {
        self as f64
    }

    fn read_le(buf: &[u8]) -> Self {
        f32::from_le_bytes(buf.try_into().expect("f32 needs 4 bytes"))
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn of_f64(v: f64) -> Self {
        v
    }

    fn into_f64(self) -> f64 {
        self
    }

    fn read_le(buf: &[u8]) -> Self {
        f64::from_le_bytes(buf.try_into().expect("f64 needs 8 bytes"))
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}
