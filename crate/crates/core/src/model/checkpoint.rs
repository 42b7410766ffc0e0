//! Little-endian binary checkpoints.
//!
//! Layout: magic `RAGT`, `u32` version, `u32` layer count, then for every
//! layer `u32` inputs, `u32` outputs, the weights in row-major order
//! (inputs × outputs) and the biases, all as `f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{AgentParams, Arch, Dense};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RAGT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save(params: &AgentParams, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 8 * params.num_params());
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let layers = params.layers();
    buf.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in layers {
        buf.extend_from_slice(&(l.inputs() as u32).to_le_bytes());
        buf.extend_from_slice(&(l.outputs() as u32).to_le_bytes());
        for v in l.w.iter().chain(l.b.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("layer too large".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn parse(bytes: &[u8]) -> Result<AgentParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    if count != 11 {
        return Err(Error::Checkpoint(format!("expected 11 layers, found {count}")));
    }
    let mut dims = Vec::with_capacity(count);
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let (i, o) = (r.u32()? as usize, r.u32()? as usize);
        let w = r.f64s(i * o)?;
        let b = r.f64s(o)?;
        dims.push((i, o));
        layers.push(Dense {
            w: ndarray::Array2::from_shape_vec((i, o), w).map_err(|e| Error::Checkpoint(e.to_string()))?,
            b: b.into(),
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let arch = Arch::from_layer_dims(&dims).ok_or_else(|| Error::Checkpoint(format!("layer shapes do not chain: {dims:?}")))?;
    let mut params = AgentParams::zeros(arch);
    for (dst, src) in params.layers_mut().into_iter().zip(layers) {
        *dst = src;
    }
    if !params.is_finite() {
        return Err(Error::Checkpoint("non-finite parameter".into()));
    }
    Ok(params)
}

/// Loads a checkpoint, accepting any consistent architecture.
pub fn load(path: impl AsRef<Path>) -> Result<AgentParams> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse(&bytes)
}

/// Loads a checkpoint and checks that its architecture is `arch`.
pub fn load_expecting(path: impl AsRef<Path>, arch: Arch) -> Result<AgentParams> {
    let p = load(path)?;
    if p.arch != arch {
        return Err(Error::Checkpoint(format!("architecture mismatch: expected {arch:?}, found {:?}", p.arch)));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bin");
        let p = AgentParams::init(Arch::TINY, 1);
        save(&p, &path).unwrap();
        let q = load_expecting(&path, Arch::TINY).unwrap();
        assert_eq!(p, q);
        assert!(matches!(load_expecting(&path, Arch::FULL), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bin");
        save(&AgentParams::init(Arch::TINY, 1), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        for cut in [0, 3, 10, bytes.len() - 1] {
            fs::write(&path, &bytes[..cut]).unwrap();
            assert!(matches!(load(&path), Err(Error::Checkpoint(_))), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        fs::write(&path, &bad).unwrap();
        assert!(matches!(load(&path), Err(Error::Checkpoint(_))));
        let mut extra = bytes;
        extra.push(0);
        fs::write(&path, &extra).unwrap();
        assert!(matches!(load(&path), Err(Error::Checkpoint(_))));
    }
}
