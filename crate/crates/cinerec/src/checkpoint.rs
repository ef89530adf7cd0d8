//! Model checkpoints: one CXT file holding the concatenated flat parameter
//! payload (real32) plus a plain-text header listing the architecture as
//! key=value pairs and name/shape/offset per parameter.

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::RTensor;
use crate::crnn::{ArchConfig, ModelParams};
use crate::error::{Error, Result};
use crate::io::{read_tensor, write_tensor, Cxt};

fn hdr_path(base: &Path) -> std::path::PathBuf {
    base.with_extension("hdr")
}

fn cxt_path(base: &Path) -> std::path::PathBuf {
    base.with_extension("cxt")
}

/// Write `<base>.cxt` and `<base>.hdr`.
pub fn save_checkpoint<P: AsRef<Path>>(base: P, model: &ModelParams<f32>) -> Result<()> {
    let base = base.as_ref();
    let mut payload = Vec::with_capacity(model.param_count());
    let mut hdr = String::from("[arch]\n");
    let a = &model.arch;
    writeln!(hdr, "n_iters={}", a.n_iters).unwrap();
    writeln!(hdr, "n_bcrnn_layers={}", a.n_bcrnn_layers).unwrap();
    writeln!(hdr, "feat_channels={}", a.feat_channels).unwrap();
    writeln!(hdr, "hidden_channels={}", a.hidden_channels).unwrap();
    writeln!(hdr, "io_channels={}", a.io_channels).unwrap();
    writeln!(hdr, "share_weights={}", a.share_weights).unwrap();
    hdr.push_str("\n[params]\n");
    for (name, t) in model.names.iter().zip(&model.tensors) {
        let shape: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
        writeln!(hdr, "{name} {} {}", shape.join("x"), payload.len()).unwrap();
        payload.extend_from_slice(&t.data);
    }
    let n = payload.len() as u64;
    write_tensor(cxt_path(base), &Cxt::Real32 { dims: vec![n], data: payload })?;
    std::fs::write(hdr_path(base), hdr)?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format { offset: 0, msg: msg.into() }
}

fn parse_kv<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| bad(format!("checkpoint header: expected `{key}=...`, got `{line}`")))
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint<P: AsRef<Path>>(base: P) -> Result<ModelParams<f32>> {
    let base = base.as_ref();
    let hdr = std::fs::read_to_string(hdr_path(base))?;
    let mut lines = hdr.lines().filter(|l| !l.trim().is_empty());
    if lines.next() != Some("[arch]") {
        return Err(bad("checkpoint header must start with [arch]"));
    }
    let mut next = || lines.next().ok_or_else(|| bad("checkpoint header truncated"));
    let arch = ArchConfig {
        n_iters: parse_kv(next()?, "n_iters")?.parse().map_err(|e| bad(format!("n_iters: {e}")))?,
        n_bcrnn_layers: parse_kv(next()?, "n_bcrnn_layers")?
            .parse()
            .map_err(|e| bad(format!("n_bcrnn_layers: {e}")))?,
        feat_channels: parse_kv(next()?, "feat_channels")?
            .parse()
            .map_err(|e| bad(format!("feat_channels: {e}")))?,
        hidden_channels: parse_kv(next()?, "hidden_channels")?
            .parse()
            .map_err(|e| bad(format!("hidden_channels: {e}")))?,
        io_channels: parse_kv(next()?, "io_channels")?.parse().map_err(|e| bad(format!("io_channels: {e}")))?,
        share_weights: parse_kv(next()?, "share_weights")?
            .parse()
            .map_err(|e| bad(format!("share_weights: {e}")))?,
    };
    arch.validate()?;
    if next()? != "[params]" {
        return Err(bad("checkpoint header: expected [params] after the arch block"));
    }

    let payload = match read_tensor(cxt_path(base))? {
        Cxt::Real32 { data, .. } => data,
        other => return Err(bad(format!("checkpoint payload must be real32, found dtype {}", other.dtype_code()))),
    };

    // header entries must exactly match the canonical parameter layout
    let reference = ModelParams::<f32>::init(&arch, 0)?;
    let mut tensors: Vec<RTensor<f32>> = Vec::with_capacity(reference.names.len());
    let mut expect_offset = 0usize;
    for (name, reft) in reference.names.iter().zip(&reference.tensors) {
        let line = lines.next().ok_or_else(|| bad(format!("checkpoint header: missing entry for {name}")))?;
        let mut parts = line.split_whitespace();
        let (n, s, o) = (parts.next(), parts.next(), parts.next());
        let (n, s, o) = match (n, s, o, parts.next()) {
            (Some(n), Some(s), Some(o), None) => (n, s, o),
            _ => return Err(bad(format!("checkpoint header: malformed line `{line}`"))),
        };
        if n != name {
            return Err(bad(format!("checkpoint header: expected parameter {name}, found {n}")));
        }
        let shape: Vec<usize> = s
            .split('x')
            .map(|d| d.parse().map_err(|e| bad(format!("{name} shape: {e}"))))
            .collect::<Result<_>>()?;
        if shape != reft.shape {
            return Err(bad(format!("{name}: shape {shape:?} does not match architecture {:?}", reft.shape)));
        }
        let offset: usize = o.parse().map_err(|e| bad(format!("{name} offset: {e}")))?;
        if offset != expect_offset {
            return Err(bad(format!("{name}: offset {offset}, expected {expect_offset}")));
        }
        let n_el = reft.numel();
        if offset + n_el > payload.len() {
            return Err(bad(format!("{name}: payload ends before offset {}", offset + n_el)));
        }
        tensors.push(RTensor::new(payload[offset..offset + n_el].to_vec(), shape)?);
        expect_offset += n_el;
    }
    if lines.next().is_some() {
        return Err(bad("checkpoint header: trailing entries"));
    }
    if expect_offset != payload.len() {
        return Err(bad(format!("payload has {} values, header accounts for {expect_offset}", payload.len())));
    }
    Ok(ModelParams { arch, names: reference.names, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn arch() -> ArchConfig {
        ArchConfig { n_iters: 2, feat_channels: 4, ..Default::default() }
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("model");
        let mut m = ModelParams::<f32>::init(&arch(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in &mut m.tensors {
            for v in &mut t.data {
                *v = rng.gen::<f32>() - 0.5;
            }
        }
        save_checkpoint(&base, &m).unwrap();
        let back = load_checkpoint(&base).unwrap();
        assert_eq!(back.arch, m.arch);
        assert_eq!(back.names, m.names);
        for (a, b) in back.tensors.iter().zip(&m.tensors) {
            assert_eq!(a.data, b.data);
            assert_eq!(a.shape, b.shape);
        }
    }

    #[test]
    fn header_mismatches_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("model");
        let m = ModelParams::<f32>::init(&arch(), 0).unwrap();
        save_checkpoint(&base, &m).unwrap();

        // truncate the payload
        let cxt = base.with_extension("cxt");
        let bytes = std::fs::read(&cxt).unwrap();
        std::fs::write(&cxt, &bytes[..bytes.len() - 64]).unwrap();
        assert!(load_checkpoint(&base).is_err());

        // corrupt a header name
        save_checkpoint(&base, &m).unwrap();
        let hdr = base.with_extension("hdr");
        let text = std::fs::read_to_string(&hdr).unwrap().replace("iter0.layer0.fwd.w_x", "bogus");
        std::fs::write(&hdr, text).unwrap();
        assert!(load_checkpoint(&base).is_err());
    }
}
