//! Side-by-side comparison montages as 16-bit binary PGM (P5, maxval 65535,
//! big-endian samples), one file per frame.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::RealImageSequence;

/// Width of the white separator column between methods.
pub const SEPARATOR_PX: usize = 2;

pub fn write_pgm16<P: AsRef<Path>>(path: P, w: usize, h: usize, data: &[u16]) -> Result<()> {
    if data.len() != w * h {
        return Err(Error::Shape(format!("pgm: {w}x{h} needs {} samples, got {}", w * h, data.len())));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P5\n{w} {h}\n65535\n")?;
    for &v in data {
        f.write_all(&v.to_be_bytes())?;
    }
    f.flush()?;
    Ok(())
}

/// One montage per frame: methods left to right, shared intensity scale
/// (global max over all images), separated by white columns. Returns the
/// written paths, `frame_###.pgm` under `dir`.
pub fn write_montages<P: AsRef<Path>>(dir: P, methods: &[&RealImageSequence]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    if methods.is_empty() {
        return Err(Error::Parameter("montage needs at least one method".into()));
    }
    let (t, h, w) = methods[0].dims();
    for m in methods {
        if m.dims() != (t, h, w) {
            return Err(Error::Shape(format!(
                "montage dims disagree: {:?} vs {:?}",
                m.dims(),
                (t, h, w)
            )));
        }
    }
    let peak = methods.iter().map(|m| m.max()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let mw = methods.len() * w + (methods.len() - 1) * SEPARATOR_PX;
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::with_capacity(t);
    for ti in 0..t {
        let mut img = vec![u16::MAX; mw * h]; // separators stay white
        for (mi, m) in methods.iter().enumerate() {
            let x0 = mi * (w + SEPARATOR_PX);
            let frame = m.frame(ti);
            for y in 0..h {
                for x in 0..w {
                    let v = (frame[y * w + x] / peak).clamp(0.0, 1.0);
                    img[y * mw + x0 + x] = (v * 65535.0).round() as u16;
                }
            }
        }
        let path = dir.join(format!("frame_{ti:03}.pgm"));
        write_pgm16(&path, mw, h, &img)?;
        out.push(path);
    }
    Ok(out)
}
