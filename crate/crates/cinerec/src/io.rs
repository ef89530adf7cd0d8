//! CXT binary tensor format.
//!
//! Little-endian throughout: bytes 0-3 magic "CXT1"; byte 4 dtype code
//! (0=real32, 1=real64, 2=complex64, 3=complex128, complex interleaved re,im);
//! byte 5 ndim (1-8); ndim x 8-byte unsigned dims; row-major payload.
//! No padding, no checksum.

use num_complex::{Complex32, Complex64};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{CoilSensitivities, ComplexCine, DomainTag, RealImageSequence};

pub const CXT_MAGIC: [u8; 4] = *b"CXT1";

#[derive(Debug, Clone, PartialEq)]
pub enum Cxt {
    Real32 { dims: Vec<u64>, data: Vec<f32> },
    Real64 { dims: Vec<u64>, data: Vec<f64> },
    Complex64 { dims: Vec<u64>, data: Vec<Complex32> },
    Complex128 { dims: Vec<u64>, data: Vec<Complex64> },
}

impl Cxt {
    pub fn dims(&self) -> &[u64] {
        match self {
            Cxt::Real32 { dims, .. }
            | Cxt::Real64 { dims, .. }
            | Cxt::Complex64 { dims, .. }
            | Cxt::Complex128 { dims, .. } => dims,
        }
    }

    pub fn dtype_code(&self) -> u8 {
        match self {
            Cxt::Real32 { .. } => 0,
            Cxt::Real64 { .. } => 1,
            Cxt::Complex64 { .. } => 2,
            Cxt::Complex128 { .. } => 3,
        }
    }

    fn numel(&self) -> usize {
        self.dims().iter().product::<u64>() as usize
    }

    fn scalar_bytes(dtype: u8) -> usize {
        match dtype {
            0 => 4,
            1 => 8,
            2 => 8,
            3 => 16,
            _ => unreachable!(),
        }
    }
}

pub fn write_tensor<P: AsRef<Path>>(path: P, x: &Cxt) -> Result<()> {
    let dims = x.dims();
    if dims.is_empty() || dims.len() > 8 {
        return Err(Error::Parameter(format!("ndim must be 1-8, got {}", dims.len())));
    }
    if x.numel()
        != match x {
            Cxt::Real32 { data, .. } => data.len(),
            Cxt::Real64 { data, .. } => data.len(),
            Cxt::Complex64 { data, .. } => data.len(),
            Cxt::Complex128 { data, .. } => data.len(),
        }
    {
        return Err(Error::Shape("tensor data length does not match dims".into()));
    }
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&CXT_MAGIC)?;
    f.write_all(&[x.dtype_code(), dims.len() as u8])?;
    for &d in dims {
        f.write_all(&d.to_le_bytes())?;
    }
    match x {
        Cxt::Real32 { data, .. } => {
            for v in data {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        Cxt::Real64 { data, .. } => {
            for v in data {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        Cxt::Complex64 { data, .. } => {
            for z in data {
                f.write_all(&z.re.to_le_bytes())?;
                f.write_all(&z.im.to_le_bytes())?;
            }
        }
        Cxt::Complex128 { data, .. } => {
            for z in data {
                f.write_all(&z.re.to_le_bytes())?;
                f.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    f.flush()?;
    Ok(())
}

pub fn read_tensor<P: AsRef<Path>>(path: P) -> Result<Cxt> {
    let file = File::open(&path)?;
    let file_len = file.metadata()?.len();
    let mut r = BufReader::new(file);

    let mut head = [0u8; 6];
    read_exact_at(&mut r, &mut head, 0, file_len)?;
    if head[0..4] != CXT_MAGIC {
        return Err(Error::Format { offset: 0, msg: format!("bad magic {:?}", &head[0..4]) });
    }
    let dtype = head[4];
    if dtype > 3 {
        return Err(Error::Format { offset: 4, msg: format!("unknown dtype code {dtype}") });
    }
    let ndim = head[5] as usize;
    if ndim == 0 || ndim > 8 {
        return Err(Error::Format { offset: 5, msg: format!("ndim must be 1-8, got {ndim}") });
    }
    let mut dims = vec![0u64; ndim];
    for (i, d) in dims.iter_mut().enumerate() {
        let mut b = [0u8; 8];
        read_exact_at(&mut r, &mut b, 6 + 8 * i as u64, file_len)?;
        *d = u64::from_le_bytes(b);
    }
    // Validate the claimed payload size against the actual file length before
    // allocating anything proportional to the claimed dims.
    let numel = dims.iter().try_fold(1u64, |a, &d| a.checked_mul(d)).ok_or(Error::Format {
        offset: 6,
        msg: "dims overflow".into(),
    })?;
    let header_len = 6 + 8 * ndim as u64;
    let expected = header_len + numel * Cxt::scalar_bytes(dtype) as u64;
    if file_len != expected {
        return Err(Error::Format {
            offset: file_len.min(expected),
            msg: format!("expected {expected} bytes for dims {dims:?}, file has {file_len}"),
        });
    }
    let numel = numel as usize;
    let mut payload = vec![0u8; numel * Cxt::scalar_bytes(dtype)];
    r.read_exact(&mut payload)?;
    let t = match dtype {
        0 => Cxt::Real32 {
            dims,
            data: payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect(),
        },
        1 => Cxt::Real64 {
            dims,
            data: payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
        },
        2 => Cxt::Complex64 {
            dims,
            data: payload
                .chunks_exact(8)
                .map(|b| {
                    Complex32::new(
                        f32::from_le_bytes(b[0..4].try_into().unwrap()),
                        f32::from_le_bytes(b[4..8].try_into().unwrap()),
                    )
                })
                .collect(),
        },
        3 => Cxt::Complex128 {
            dims,
            data: payload
                .chunks_exact(16)
                .map(|b| {
                    Complex64::new(
                        f64::from_le_bytes(b[0..8].try_into().unwrap()),
                        f64::from_le_bytes(b[8..16].try_into().unwrap()),
                    )
                })
                .collect(),
        },
        _ => unreachable!(),
    };
    Ok(t)
}

fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: u64, file_len: u64) -> Result<()> {
    if file_len < offset + buf.len() as u64 {
        return Err(Error::Format {
            offset: file_len,
            msg: format!("expected at least {} bytes, file has {file_len}", offset + buf.len() as u64),
        });
    }
    r.read_exact(buf)?;
    Ok(())
}

// Conversions between CXT and the domain containers.

impl ComplexCine {
    pub fn to_cxt(&self) -> Cxt {
        let (t, c, h, w) = self.dims();
        Cxt::Complex128 { dims: vec![t as u64, c as u64, h as u64, w as u64], data: self.data.clone() }
    }

    pub fn from_cxt(t: &Cxt, domain: DomainTag) -> Result<Self> {
        match t {
            Cxt::Complex128 { dims, data } if dims.len() == 4 => ComplexCine::new(
                data.clone(),
                (dims[0] as usize, dims[1] as usize, dims[2] as usize, dims[3] as usize),
                domain,
            ),
            _ => Err(Error::Format {
                offset: 4,
                msg: "expected complex128 rank-4 tensor for cine data".into(),
            }),
        }
    }
}

impl RealImageSequence {
    pub fn to_cxt(&self) -> Cxt {
        let (t, h, w) = self.dims();
        Cxt::Real64 { dims: vec![t as u64, h as u64, w as u64], data: self.data.clone() }
    }

    pub fn from_cxt(t: &Cxt) -> Result<Self> {
        match t {
            Cxt::Real64 { dims, data } if dims.len() == 3 => RealImageSequence::new(
                data.clone(),
                (dims[0] as usize, dims[1] as usize, dims[2] as usize),
            ),
            _ => Err(Error::Format {
                offset: 4,
                msg: "expected real64 rank-3 tensor for magnitude images".into(),
            }),
        }
    }
}

impl CoilSensitivities {
    pub fn to_cxt(&self) -> Cxt {
        let (c, h, w) = self.dims();
        Cxt::Complex128 { dims: vec![c as u64, h as u64, w as u64], data: self.data.clone() }
    }

    pub fn from_cxt(t: &Cxt) -> Result<Self> {
        match t {
            Cxt::Complex128 { dims, data } if dims.len() == 3 => CoilSensitivities::new(
                data.clone(),
                (dims[0] as usize, dims[1] as usize, dims[2] as usize),
            ),
            _ => Err(Error::Format {
                offset: 4,
                msg: "expected complex128 rank-3 tensor for sensitivity maps".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_all_dtypes() {
        let dir = tempfile::tempdir().unwrap();
        let tensors = vec![
            Cxt::Real32 { dims: vec![2, 3], data: vec![1.0, -2.5, 0.0, f32::MIN_POSITIVE, 3.25, 9.5] },
            Cxt::Real64 { dims: vec![6], data: vec![1.0, -2.5, 1e-300, f64::MAX, 0.0, -0.0] },
            Cxt::Complex64 {
                dims: vec![1, 2],
                data: vec![Complex32::new(1.5, -2.5), Complex32::new(0.0, 1e-20)],
            },
            Cxt::Complex128 {
                dims: vec![2, 1, 1, 1],
                data: vec![Complex64::new(1.5, -2.5), Complex64::new(1e300, -1e-300)],
            },
        ];
        for (i, t) in tensors.iter().enumerate() {
            let path = dir.path().join(format!("t{i}.cxt"));
            write_tensor(&path, t).unwrap();
            let back = read_tensor(&path).unwrap();
            assert_eq!(&back, t);
        }
    }

    #[test]
    fn truncated_file_names_expected_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.cxt");
        let t = Cxt::Real64 { dims: vec![4], data: vec![1.0, 2.0, 3.0, 4.0] };
        write_tensor(&path, &t).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        match read_tensor(&path) {
            Err(Error::Format { msg, .. }) => assert!(msg.contains("46 bytes"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_rejected_before_dims_are_trusted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cxt");
        let mut f = File::create(&path).unwrap();
        // claims absurd dims, but magic check must fire first
        f.write_all(b"XXXX").unwrap();
        f.write_all(&[1u8, 1u8]).unwrap();
        f.write_all(&u64::MAX.to_le_bytes()).unwrap();
        drop(f);
        match read_tensor(&path) {
            Err(Error::Format { offset: 0, msg }) => assert!(msg.contains("magic")),
            other => panic!("expected bad-magic error, got {other:?}"),
        }
    }

    #[test]
    fn huge_claimed_dims_rejected_without_allocation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("huge.cxt");
        let mut f = File::create(&path).unwrap();
        f.write_all(&CXT_MAGIC).unwrap();
        f.write_all(&[1u8, 2u8]).unwrap();
        f.write_all(&(1u64 << 60).to_le_bytes()).unwrap();
        f.write_all(&(1u64 << 60).to_le_bytes()).unwrap();
        drop(f);
        assert!(matches!(read_tensor(&path), Err(Error::Format { .. })));
    }
}
