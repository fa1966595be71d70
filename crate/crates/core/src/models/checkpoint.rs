//! Versioned binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PTFM" | version u16 | arch u8 | pad u8
//! dim u32 | graph_layers u32 | n_hidden u32 | hidden[n_hidden] u32
//! lr f64 | beta1 f64 | beta2 f64 | eps f64
//! n_tensors u32 | { rows u32 | cols u32 | rows*cols f64 } ...
//! ```
//!
//! Optimizer moments are not stored; a restored model starts a fresh Adam.

use std::path::Path;

use super::{AdamConfig, Architecture, ModelConfig, ModelError, ModelState, Param};

pub const MAGIC: &[u8; 4] = b"PTFM";
pub const VERSION: u16 = 1;

pub fn encode(model: &ModelState) -> Vec<u8> {
    let (arch, cfg, params) = model.parts();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(arch.tag());
    out.push(0);
    for v in [cfg.dim, cfg.graph_layers, cfg.hidden.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for &h in &cfg.hidden {
        out.extend_from_slice(&(h as u32).to_le_bytes());
    }
    for v in [cfg.adam.lr, cfg.adam.beta1, cfg.adam.beta2, cfg.adam.eps] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.rows as u32).to_le_bytes());
        out.extend_from_slice(&(p.cols as u32).to_le_bytes());
        for x in &p.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            ModelError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelState, ModelError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let tag = r.take(2)?[0];
    let arch = Architecture::from_tag(tag)
        .ok_or_else(|| ModelError::Checkpoint(format!("unknown architecture tag {tag}")))?;
    let dim = r.u32()?;
    let graph_layers = r.u32()?;
    let n_hidden = r.u32()?;
    let hidden = (0..n_hidden).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let adam = AdamConfig {
        lr: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        eps: r.f64()?,
    };
    let n_tensors = r.u32()?;
    let mut params = Vec::with_capacity(n_tensors.min(64));
    for _ in 0..n_tensors {
        let rows = r.u32()?;
        let cols = r.u32()?;
        let raw = r.take(rows.checked_mul(cols).and_then(|n| n.checked_mul(8)).ok_or_else(|| {
            ModelError::Checkpoint("tensor size overflow".into())
        })?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        params.push(Param { rows, cols, data });
    }
    if r.pos != bytes.len() {
        return Err(ModelError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let config = ModelConfig {
        dim,
        hidden,
        graph_layers,
        adam,
    };
    ModelState::from_parts(arch, config, params)
}

pub fn save(model: &ModelState, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, encode(model))
}

pub fn load(path: &Path) -> Result<ModelState, ModelError> {
    let bytes = std::fs::read(path).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_each_architecture() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = ModelConfig {
            dim: 4,
            hidden: vec![6, 3],
            graph_layers: 2,
            ..ModelConfig::default()
        };
        for arch in Architecture::ALL {
            let m = ModelState::new(arch, 3, 5, &cfg, &mut rng);
            let bytes = encode(&m);
            assert_eq!(&bytes[..4], b"PTFM");
            let back = decode(&bytes).unwrap();
            assert_eq!(back.architecture(), arch);
            assert_eq!(back.params(), m.params());
            assert_eq!(back.config(), m.config());
        }
    }

    #[test]
    fn rejects_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ModelState::new(Architecture::NeuMf, 1, 1, &ModelConfig::default(), &mut rng);
        let bytes = encode(&m);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = bytes;
        bad[4] = 9;
        assert!(decode(&bad).is_err());
    }
}
