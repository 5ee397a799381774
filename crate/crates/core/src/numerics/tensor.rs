use std::fmt::Debug;
use std::io::{Read, Write};
use std::path::Path;

use num_traits::Float;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Floating point element type of a [`Tensor`]. Implemented for `f32`
/// (training) and `f64` (gradient verification).
pub trait Real:
    Float + Debug + Default + Send + Sync + std::iter::Sum + std::ops::AddAssign + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

const UDET_MAGIC: &[u8; 4] = b"UDET";
const UDET_VERSION: u16 = 1;

/// Dense row-major array with an explicit shape.
///
/// Construction through [`Tensor::new`] rejects NaN and infinities, so a
/// tensor obtained that way is always finite. Mutable access exists for the
/// single-writer optimizer loops; use [`Tensor::validate`] after in-place
/// updates when finiteness matters.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let t = Self::from_parts_unchecked(shape, data)?;
        t.validate()?;
        Ok(t)
    }

    fn from_parts_unchecked(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite("tensor"))
        }
    }

    /// Same data, new shape with the same element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::shape(format!("expected a matrix, got shape {s:?}"))),
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let cols = self.shape[1..].iter().product::<usize>();
        &self.data[i * cols..(i + 1) * cols]
    }

    /// Gather rows of a rank-2 tensor in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let (rows, cols) = self.dims2()?;
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            if i >= rows {
                return Err(Error::shape(format!("row {i} out of range for {rows} rows")));
            }
            data.extend_from_slice(&self.data[i * cols..(i + 1) * cols]);
        }
        Ok(Self {
            shape: vec![idx.len(), cols],
            data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        if self.data.len() != other.data.len() {
            return Err(Error::shape(format!(
                "dot of {} and {} values",
                self.data.len(),
                other.data.len()
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    /// `self [m×k] · rhs [k×n]`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        let (m, k) = self.dims2()?;
        let (k2, n) = rhs.dims2()?;
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul {:?} x {:?}",
                self.shape, rhs.shape
            )));
        }
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let b_row = &rhs.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `self [m×k] · rhsᵀ` where `rhs` is `[n×k]`.
    pub fn matmul_transposed(&self, rhs: &Self) -> Result<Self> {
        let (m, k) = self.dims2()?;
        let (n, k2) = rhs.dims2()?;
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul_transposed {:?} x {:?}ᵀ",
                self.shape, rhs.shape
            )));
        }
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &rhs.data[j * k..(j + 1) * k];
                out.push(a_row.iter().zip(b_row).map(|(&a, &b)| a * b).sum());
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `selfᵀ · rhs` where `self` is `[m×k]` and `rhs` is `[m×n]`, giving `[k×n]`.
    pub fn transposed_matmul(&self, rhs: &Self) -> Result<Self> {
        let (m, k) = self.dims2()?;
        let (m2, n) = rhs.dims2()?;
        if m != m2 {
            return Err(Error::shape(format!(
                "transposed_matmul {:?}ᵀ x {:?}",
                self.shape, rhs.shape
            )));
        }
        let mut out = vec![T::zero(); k * n];
        for r in 0..m {
            let a_row = &self.data[r * k..(r + 1) * k];
            let b_row = &rhs.data[r * n..(r + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                let o_row = &mut out[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            shape: vec![k, n],
            data: out,
        })
    }

    /// Add a length-`n` vector to every row of an `[m×n]` matrix.
    pub fn add_row_vector(&self, v: &Self) -> Result<Self> {
        let (_, n) = self.dims2()?;
        if v.len() != n {
            return Err(Error::shape(format!(
                "row vector of {} values for {n} columns",
                v.len()
            )));
        }
        let mut out = self.clone();
        for row in out.data.chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(&v.data) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Column sums of an `[m×n]` matrix.
    pub fn sum_rows(&self) -> Result<Self> {
        let (_, n) = self.dims2()?;
        let mut out = vec![T::zero(); n];
        for row in self.data.chunks(n) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        Ok(Self {
            shape: vec![n],
            data: out,
        })
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(Real::to_f64(*v))).collect(),
        }
    }
}

impl Tensor<f32> {
    /// Encode as a UDET container: magic, u16 version, u8 rank, u32 dims,
    /// then the values, all little-endian.
    pub fn to_udet_bytes(&self) -> Result<Vec<u8>> {
        let rank = u8::try_from(self.shape.len())
            .map_err(|_| Error::Format(format!("rank {} exceeds 255", self.shape.len())))?;
        let mut out = Vec::with_capacity(7 + 4 * self.shape.len() + 4 * self.data.len());
        out.extend_from_slice(UDET_MAGIC);
        out.extend_from_slice(&UDET_VERSION.to_le_bytes());
        out.push(rank);
        for &d in &self.shape {
            let d = u32::try_from(d)
                .map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_udet_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let t = Self::read_udet(&mut r)?;
        if !r.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after UDET tensor", r.len())));
        }
        Ok(t)
    }

    pub fn read_udet(r: &mut impl Read) -> Result<Self> {
        let fmt = |e: std::io::Error| Error::Format(format!("truncated UDET tensor: {e}"));
        let mut head = [0u8; 7];
        r.read_exact(&mut head).map_err(fmt)?;
        if &head[..4] != UDET_MAGIC {
            return Err(Error::Format("bad UDET magic".into()));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != UDET_VERSION {
            return Err(Error::Format(format!("unsupported UDET version {version}")));
        }
        let rank = head[6] as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut buf = [0u8; 4];
        for _ in 0..rank {
            r.read_exact(&mut buf).map_err(fmt)?;
            shape.push(u32::from_le_bytes(buf) as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("UDET element count overflows".into()))?;
        let mut raw = Vec::new();
        r.take(4 * n as u64).read_to_end(&mut raw)?;
        if raw.len() != 4 * n {
            return Err(Error::Format(format!(
                "UDET payload has {} bytes, expected {}",
                raw.len(),
                4 * n
            )));
        }
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::from_parts_unchecked(shape, data)
    }

    pub fn write_udet(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_udet_bytes()?)?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_udet_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_udet_bytes(&std::fs::read(path)?)
    }

    /// Hex SHA-256 of the UDET encoding.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_udet_bytes()?)))
    }
}
