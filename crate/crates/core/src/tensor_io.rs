//! Self-describing binary tensor files and 16-bit PGM previews.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | field                                             |
//! |--------------|---------------------------------------------------|
//! | 4            | magic `QKT1`                                      |
//! | 1            | version (1)                                       |
//! | 1            | dtype: 0 complex f32 (re, im), 1 real f32, 2 real f64 |
//! | 1            | ndim (1..=4)                                      |
//! | 8 × ndim     | dims as u64                                       |
//! | rest         | row-major payload                                 |
//!
//! dtype 2 is only used for network checkpoints so that parameters survive a
//! save/load cycle bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex32;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"QKT1";
pub const VERSION: u8 = 1;
pub const MAX_NDIM: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    Complex(Vec<Complex32>),
    Real(Vec<f32>),
    Real64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::Complex(v) => v.len(),
            TensorData::Real(v) => v.len(),
            TensorData::Real64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype(&self) -> u8 {
        match self {
            TensorData::Complex(_) => 0,
            TensorData::Real(_) => 1,
            TensorData::Real64(_) => 2,
        }
    }
}

fn element_size(dtype: u8) -> Result<usize> {
    match dtype {
        0 => Ok(8),
        1 => Ok(4),
        2 => Ok(8),
        other => Err(Error::UnknownDtype(other)),
    }
}

/// A dense row-major tensor with up to four dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn complex(dims: Vec<usize>, data: Vec<Complex32>) -> Result<Self> {
        Self::new(dims, TensorData::Complex(data))
    }

    pub fn real(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(dims, TensorData::Real(data))
    }

    pub fn real64(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(dims, TensorData::Real64(data))
    }

    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let t = Tensor { dims, data };
        t.validate()?;
        Ok(t)
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.len() > MAX_NDIM {
            return Err(Error::UnsupportedNdim(self.dims.len()));
        }
        if self.dims.contains(&0) {
            return Err(Error::EmptyTensor);
        }
        if self.numel() != self.data.len() {
            return Err(Error::Shape(format!(
                "dims {:?} hold {} elements but payload has {}",
                self.dims,
                self.numel(),
                self.data.len()
            )));
        }
        Ok(())
    }

    pub fn as_complex(&self) -> Result<&[Complex32]> {
        match &self.data {
            TensorData::Complex(v) => Ok(v),
            _ => Err(Error::Invalid("expected a complex tensor".into())),
        }
    }

    pub fn as_real(&self) -> Result<&[f32]> {
        match &self.data {
            TensorData::Real(v) => Ok(v),
            _ => Err(Error::Invalid("expected a real float32 tensor".into())),
        }
    }

    pub fn as_real64(&self) -> Result<&[f64]> {
        match &self.data {
            TensorData::Real64(v) => Ok(v),
            _ => Err(Error::Invalid("expected a real float64 tensor".into())),
        }
    }

    pub fn expect_dims(&self, dims: &[usize]) -> Result<()> {
        if self.dims != dims {
            return Err(Error::Shape(format!(
                "expected dims {:?}, found {:?}",
                dims, self.dims
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let dtype = self.data.dtype();
        let mut out =
            Vec::with_capacity(7 + 8 * self.dims.len() + self.numel() * element_size(dtype)?);
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(dtype);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::Complex(v) => {
                for z in v {
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }
            }
            TensorData::Real(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            TensorData::Real64(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 7 {
            return Err(Error::Truncated {
                expected: 7,
                found: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        if bytes[4] != VERSION {
            return Err(Error::VersionMismatch {
                found: bytes[4] as u32,
                expected: VERSION as u32,
            });
        }
        let dtype = bytes[5];
        let elem = element_size(dtype)?;
        let ndim = bytes[6] as usize;
        if ndim == 0 || ndim > MAX_NDIM {
            return Err(Error::UnsupportedNdim(ndim));
        }
        let header = 7 + 8 * ndim;
        if bytes.len() < header {
            return Err(Error::Truncated {
                expected: header,
                found: bytes.len(),
            });
        }
        let dims: Vec<usize> = bytes[7..header]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8")) as usize)
            .collect();
        if dims.contains(&0) {
            return Err(Error::EmptyTensor);
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Invalid(format!("dims {dims:?} overflow")))?;
        let expected = numel
            .checked_mul(elem)
            .ok_or_else(|| Error::Invalid(format!("dims {dims:?} overflow")))?;
        let payload = &bytes[header..];
        if payload.len() != expected {
            // Trailing garbage is as suspicious as a short file.
            if payload.len() < expected {
                return Err(Error::Truncated {
                    expected,
                    found: payload.len(),
                });
            }
            return Err(Error::Invalid(format!(
                "payload has {} bytes, dims require {}",
                payload.len(),
                expected
            )));
        }
        let f32_at = |c: &[u8]| f32::from_le_bytes(c.try_into().expect("chunk of 4"));
        let data = match dtype {
            0 => TensorData::Complex(
                payload
                    .chunks_exact(8)
                    .map(|c| Complex32::new(f32_at(&c[..4]), f32_at(&c[4..])))
                    .collect(),
            ),
            1 => TensorData::Real(payload.chunks_exact(4).map(f32_at).collect()),
            _ => TensorData::Real64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                    .collect(),
            ),
        };
        Ok(Tensor { dims, data })
    }
}

/// Writes `bytes` to `path` via a sibling temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Invalid(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    write_atomic(path.as_ref(), &t.to_bytes()?)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}

/// Encodes a magnitude image as a binary 16-bit PGM (P5, big-endian samples).
///
/// `image` is `width × height` with x fastest. Values map linearly from
/// `[0, max]` to `[0, 65535]`; an all-zero image stays zero.
pub fn preview_pgm_bytes(image: &[f64], width: usize, height: usize) -> Result<Vec<u8>> {
    if width == 0 || height == 0 || image.len() != width * height {
        return Err(Error::Shape(format!(
            "preview of {width}x{height} needs {} values, got {}",
            width * height,
            image.len()
        )));
    }
    if let Some(bad) = image.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("preview value {bad}")));
    }
    let max = image.iter().cloned().fold(0.0f64, f64::max);
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(2 * image.len());
    for &v in image {
        let level = if max > 0.0 {
            (v.max(0.0) / max * 65535.0).round().min(65535.0) as u16
        } else {
            0
        };
        out.extend_from_slice(&level.to_be_bytes());
    }
    Ok(out)
}

pub fn export_preview(
    image: &[f64],
    width: usize,
    height: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_atomic(path.as_ref(), &preview_pgm_bytes(image, width, height)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_2x2_layout() {
        let t = Tensor::complex(vec![2, 2], vec![Complex32::new(1.0, 1.0); 4]).unwrap();
        let bytes = t.to_bytes().unwrap();
        assert_eq!(bytes.len(), 4 + 1 + 1 + 1 + 16 + 32);
        assert_eq!(&bytes[..4], b"QKT1");
        assert_eq!(bytes[5], 0);
        assert_eq!(Tensor::from_bytes(&bytes).unwrap(), t);
    }

    #[test]
    fn smallest_real_tensor() {
        let t = Tensor::real(vec![1], vec![0.0]).unwrap();
        let bytes = t.to_bytes().unwrap();
        assert_eq!(bytes[5], 1);
        assert_eq!(bytes[6], 1);
        assert_eq!(&bytes[7..15], &1u64.to_le_bytes());
        assert_eq!(bytes.len(), 15 + 4);
    }

    #[test]
    fn zero_dimension_is_rejected() {
        let err = Tensor::real(vec![2, 0], vec![]).unwrap_err();
        assert!(err.to_string().contains("empty tensor"));
    }

    #[test]
    fn five_dims_rejected() {
        let err = Tensor::real(vec![1; 5], vec![0.0]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedNdim(5)));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = Tensor::real(vec![1], vec![1.0]).unwrap().to_bytes().unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        let err = Tensor::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = Tensor::real(vec![1], vec![1.0]).unwrap().to_bytes().unwrap();
        bytes[4] = 2;
        assert!(matches!(
            Tensor::from_bytes(&bytes),
            Err(Error::VersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn truncated_payload() {
        let bytes = Tensor::real(vec![2, 2], vec![1.0; 4]).unwrap().to_bytes().unwrap();
        let short = &bytes[..bytes.len() - 4];
        let err = Tensor::from_bytes(short).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn pgm_constant_image_saturates() {
        let bytes = preview_pgm_bytes(&[1.0; 4], 2, 2).unwrap();
        let header = b"P5\n2 2\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        assert!(bytes[header.len()..].iter().all(|&b| b == 0xff));
    }

    #[test]
    fn pgm_zero_image_stays_zero() {
        let bytes = preview_pgm_bytes(&[0.0; 6], 3, 2).unwrap();
        assert!(bytes[b"P5\n3 2\n65535\n".len()..].iter().all(|&b| b == 0));
    }

    #[test]
    fn pgm_endpoints() {
        let bytes = preview_pgm_bytes(&[0.0, 2.0], 2, 1).unwrap();
        let px = &bytes[b"P5\n2 1\n65535\n".len()..];
        assert_eq!(px, &[0, 0, 0xff, 0xff]);
    }

    #[test]
    fn pgm_rejects_nan() {
        assert!(preview_pgm_bytes(&[f64::NAN], 1, 1).is_err());
    }
}

/// Reorders a buffer whose first logical index varies fastest into row-major
/// order for the same logical `dims`.
pub fn first_fastest_to_row_major<T: Copy>(data: &[T], dims: &[usize]) -> Vec<T> {
    reorder(data, dims, true)
}

/// Inverse of [`first_fastest_to_row_major`].
pub fn row_major_to_first_fastest<T: Copy>(data: &[T], dims: &[usize]) -> Vec<T> {
    reorder(data, dims, false)
}

fn reorder<T: Copy>(data: &[T], dims: &[usize], to_row_major: bool) -> Vec<T> {
    let n: usize = dims.iter().product();
    assert_eq!(n, data.len(), "reorder: dims do not match buffer");
    if dims.len() <= 1 {
        return data.to_vec();
    }
    let nd = dims.len();
    // Strides for both orders.
    let mut f_stride = vec![1usize; nd];
    for i in 1..nd {
        f_stride[i] = f_stride[i - 1] * dims[i - 1];
    }
    let mut c_stride = vec![1usize; nd];
    for i in (0..nd - 1).rev() {
        c_stride[i] = c_stride[i + 1] * dims[i + 1];
    }
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; nd];
    // Walk the destination in its own memory order.
    for _ in 0..n {
        let src = if to_row_major {
            idx.iter().zip(&f_stride).map(|(i, s)| i * s).sum::<usize>()
        } else {
            idx.iter().zip(&c_stride).map(|(i, s)| i * s).sum::<usize>()
        };
        out.push(data[src]);
        if to_row_major {
            for d in (0..nd).rev() {
                idx[d] += 1;
                if idx[d] < dims[d] {
                    break;
                }
                idx[d] = 0;
            }
        } else {
            for d in 0..nd {
                idx[d] += 1;
                if idx[d] < dims[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
    }
    out
}
