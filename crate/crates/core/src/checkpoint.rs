//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "DRCK" | version: u32 | meta_len: u64 | meta: JSON
//! n_arrays: u32 | { name_len: u32 | name | ndim: u32 | dims: u64* | values: f64* }*
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Vocab;
use crate::error::{Error, Result};
use crate::generator::{BagMode, GeneratorDims, GeneratorParams};
use crate::gru::GruParams;
use crate::tensor::{hex, Parameterized, Tensor};
use crate::teacher::{Teacher, TeacherKind};

pub const MAGIC: &[u8; 4] = b"DRCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Teacher {
        kind: TeacherKind,
        vocab: usize,
        embed: usize,
        hidden: usize,
        dropout: f64,
    },
    Generator {
        dims: GeneratorDims,
        bag: BagMode,
        dropout: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: ModelSpec,
    pub vocab: Vocab,
    pub vocab_checksum: String,
    /// Parameter checksum ([`Parameterized::checksum`]).
    pub params_checksum: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub arrays: Vec<NamedArray>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| corrupt("truncated file"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| corrupt("truncated file"))?;
    Ok(u64::from_le_bytes(b))
}

fn read_bytes(r: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(corrupt("truncated file"));
    }
    Ok(buf)
}

impl Checkpoint {
    fn from_model<P: Parameterized>(model: &P, spec: ModelSpec, vocab: &Vocab, seed: u64, config: serde_json::Value) -> Self {
        Checkpoint {
            meta: CheckpointMeta {
                spec,
                vocab: vocab.clone(),
                vocab_checksum: vocab.checksum(),
                params_checksum: model.checksum(),
                seed,
                config,
            },
            arrays: model
                .params()
                .into_iter()
                .map(|(name, t)| NamedArray {
                    name,
                    shape: t.shape().to_vec(),
                    values: t.values().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::with_capacity(meta.len() + 64);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.extend_from_slice(&(a.shape.len() as u32).to_le_bytes());
            for d in &a.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in &a.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let magic = read_bytes(&mut r, 4)?;
        if magic != MAGIC {
            return Err(corrupt("not a checkpoint file (bad magic)"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let meta_len = read_u64(&mut r)? as usize;
        if meta_len > r.len() {
            return Err(corrupt("truncated file"));
        }
        let meta: CheckpointMeta = serde_json::from_slice(&read_bytes(&mut r, meta_len)?)?;
        let n = read_u32(&mut r)? as usize;
        let mut arrays = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let name_len = read_u32(&mut r)? as usize;
            let name = String::from_utf8(read_bytes(&mut r, name_len)?).map_err(|_| corrupt("array name is not UTF-8"))?;
            let ndim = read_u32(&mut r)? as usize;
            let shape = (0..ndim).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            if len.saturating_mul(8) > r.len() {
                return Err(corrupt("truncated file"));
            }
            let values = (0..len)
                .map(|_| read_u64(&mut r).map(f64::from_bits))
                .collect::<Result<Vec<_>>>()?;
            arrays.push(NamedArray { name, shape, values });
        }
        if !r.is_empty() {
            return Err(corrupt("trailing bytes after last array"));
        }
        Ok(Checkpoint { meta, arrays })
    }

    /// Writes through a temporary file and renames into place.
    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        write_atomic(path, &bytes)?;
        Ok(sha256_hex(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Copies arrays into `model`, requiring identical names and shapes, then
    /// verifies the stored parameter checksum.
    fn fill<P: Parameterized>(&self, model: &mut P) -> Result<()> {
        let params = model.params_mut();
        if params.len() != self.arrays.len() {
            return Err(corrupt(format!(
                "expected {} arrays, found {}",
                params.len(),
                self.arrays.len()
            )));
        }
        for ((name, t), a) in params.into_iter().zip(&self.arrays) {
            if name != a.name || t.shape() != a.shape.as_slice() {
                return Err(corrupt(format!(
                    "array {:?} {:?} does not match parameter {name:?} {:?}",
                    a.name,
                    a.shape,
                    t.shape()
                )));
            }
            t.values_mut().copy_from_slice(&a.values);
        }
        let found = model.checksum();
        if found != self.meta.params_checksum {
            return Err(Error::ChecksumMismatch {
                expected: self.meta.params_checksum.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn teacher(&self) -> Result<Teacher> {
        match self.meta.spec {
            ModelSpec::Teacher {
                kind,
                vocab,
                embed,
                hidden,
                dropout,
            } => {
                let mut t = Teacher {
                    kind,
                    embedding: Tensor::zeros(vec![vocab, embed]),
                    gru: GruParams::zeros(embed, hidden),
                    dropout,
                };
                self.fill(&mut t)?;
                Ok(t)
            }
            ModelSpec::Generator { .. } => Err(corrupt("checkpoint holds a generator, not a teacher")),
        }
    }

    pub fn generator(&self) -> Result<GeneratorParams> {
        match self.meta.spec {
            ModelSpec::Generator { dims, bag, dropout } => {
                let mut p = zero_generator(dims, bag, dropout);
                self.fill(&mut p)?;
                Ok(p)
            }
            ModelSpec::Teacher { .. } => Err(corrupt("checkpoint holds a teacher, not a generator")),
        }
    }
}

fn zero_generator(dims: GeneratorDims, bag: BagMode, dropout: f64) -> GeneratorParams {
    let (v, e, c, hd) = (dims.vocab, dims.embed, dims.context(), dims.dec_hidden);
    GeneratorParams {
        dims,
        bag,
        dropout,
        title_emb: Tensor::zeros(vec![v, e]),
        ingredient_emb: Tensor::zeros(vec![v, e]),
        text_emb: Tensor::zeros(vec![v, e]),
        enc_fwd: GruParams::zeros(e, dims.enc_hidden),
        enc_bwd: GruParams::zeros(e, dims.enc_hidden),
        empty_marker: Tensor::zeros(vec![e]),
        w1: Tensor::zeros(vec![c, hd]),
        w2: Tensor::zeros(vec![c, e]),
        b1: Tensor::zeros(vec![c]),
        init_w: Tensor::zeros(vec![hd, c]),
        init_b: Tensor::zeros(vec![hd]),
        dec: GruParams::zeros(e + c, hd),
        out_w: Tensor::zeros(vec![v, hd]),
        out_b: Tensor::zeros(vec![v]),
    }
}

pub fn teacher_checkpoint(t: &Teacher, vocab: &Vocab, seed: u64, config: serde_json::Value) -> Checkpoint {
    let spec = ModelSpec::Teacher {
        kind: t.kind,
        vocab: t.vocab_size(),
        embed: t.embed_dim(),
        hidden: t.hidden(),
        dropout: t.dropout,
    };
    Checkpoint::from_model(t, spec, vocab, seed, config)
}

pub fn generator_checkpoint(p: &GeneratorParams, vocab: &Vocab, seed: u64, config: serde_json::Value) -> Checkpoint {
    let spec = ModelSpec::Generator {
        dims: p.dims,
        bag: p.bag,
        dropout: p.dropout,
    };
    Checkpoint::from_model(p, spec, vocab, seed, config)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn file_checksum(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Writes `bytes` to a sibling temporary file, syncs it and renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab() -> Vocab {
        let toks = ["<pad>", "<unk>", "<bos>", "<eos>", ".", "a", "b", "c"];
        Vocab::from_tokens(toks.iter().map(|s| s.to_string()).collect(), &["."]).unwrap()
    }

    #[test]
    fn teacher_round_trip() {
        let t = Teacher::new(TeacherKind::Relative, 8, 3, 4, 0.3, &mut ChaCha8Rng::seed_from_u64(1));
        let ck = teacher_checkpoint(&t, &vocab(), 7, serde_json::json!({"lr": 0.001}));
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.teacher().unwrap(), t);
        assert!(back.generator().is_err());
    }

    #[test]
    fn generator_round_trip() {
        let dims = GeneratorDims {
            vocab: 8,
            embed: 3,
            enc_hidden: 2,
            dec_hidden: 4,
        };
        let p = GeneratorParams::new(dims, BagMode::Sum, 0.1, &mut ChaCha8Rng::seed_from_u64(2));
        let ck = generator_checkpoint(&p, &vocab(), 0, serde_json::Value::Null);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back.generator().unwrap(), p);
    }

    #[test]
    fn rejects_corruption() {
        let t = Teacher::new(TeacherKind::Absolute, 8, 3, 4, 0.3, &mut ChaCha8Rng::seed_from_u64(3));
        let bytes = teacher_checkpoint(&t, &vocab(), 0, serde_json::Value::Null).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 0x40;
        let ck = Checkpoint::from_bytes(&flipped).unwrap();
        assert!(matches!(ck.teacher(), Err(Error::ChecksumMismatch { .. })));
    }

    #[test]
    fn atomic_save_and_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        let t = Teacher::new(TeacherKind::Absolute, 8, 3, 4, 0.3, &mut ChaCha8Rng::seed_from_u64(4));
        let ck = teacher_checkpoint(&t, &vocab(), 0, serde_json::Value::Null);
        let sum = ck.save(&path).unwrap();
        assert_eq!(sum, file_checksum(&path).unwrap());
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
