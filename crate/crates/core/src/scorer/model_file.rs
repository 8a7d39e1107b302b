//! Versioned binary model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "SKSC"
//! version    u32      1
//! kind       u8       0 linear, 1 tiny conv classifier, 2 embedding
//! in_w, in_h, out_dim   u32 each
//! n_labels   u32, then per label: u16 byte length + UTF-8
//! n_tensors  u32, then per tensor:
//!            u16 name length + UTF-8 name, u8 rank, u32 per dim,
//!            f32 values (row-major)
//! ```

use std::path::Path;

use super::net::{ConvNet, ConvParams, LinearNet, CONV_TENSOR_NAMES};
use super::{Net, Scorer, ScorerError, ScorerKind};

pub const MODEL_MAGIC: [u8; 4] = *b"SKSC";
pub const MODEL_VERSION: u32 = 1;

fn kind_tag(kind: ScorerKind) -> u8 {
    match kind {
        ScorerKind::Linear => 0,
        ScorerKind::TinyConvClassifier => 1,
        ScorerKind::Embedding => 2,
    }
}

impl Scorer {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.push(kind_tag(self.kind));
        let (w, h) = self.input_dims();
        for v in [w, h, self.output_dim()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.labels.len() as u32).to_le_bytes());
        for l in &self.labels {
            out.extend_from_slice(&(l.len() as u16).to_le_bytes());
            out.extend_from_slice(l.as_bytes());
        }
        let tensors = self.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, shape, data) in tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(shape.len() as u8);
            for d in &shape {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Scorer, ScorerError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MODEL_MAGIC {
            return Err(ScorerError::ModelFormat("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(ScorerError::ModelFormat(format!("unsupported version {version}")));
        }
        let kind = match r.u8()? {
            0 => ScorerKind::Linear,
            1 => ScorerKind::TinyConvClassifier,
            2 => ScorerKind::Embedding,
            t => return Err(ScorerError::ModelFormat(format!("unknown kind tag {t}"))),
        };
        let (in_w, in_h, out_dim) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let n_labels = r.u32()? as usize;
        let mut labels = Vec::with_capacity(n_labels.min(1024));
        for _ in 0..n_labels {
            labels.push(r.string()?);
        }
        let n_tensors = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n_tensors.min(64));
        for _ in 0..n_tensors {
            let name = r.string()?;
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let len: usize = shape.iter().product();
            let raw = r.take(len.checked_mul(4).ok_or_else(|| ScorerError::ModelFormat("tensor too large".into()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
            tensors.push((name, shape, data));
        }
        if r.pos != bytes.len() {
            return Err(ScorerError::ModelFormat(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let net = match kind {
            ScorerKind::Linear => {
                let mut it = tensors.into_iter();
                let weight = expect_tensor(it.next(), "weight", &[out_dim, in_h, in_w])?;
                let bias = expect_tensor(it.next(), "bias", &[out_dim])?;
                Net::Linear(LinearNet { in_w, in_h, out_dim, weight, bias })
            }
            ScorerKind::TinyConvClassifier | ScorerKind::Embedding => {
                if tensors.len() != CONV_TENSOR_NAMES.len() {
                    return Err(ScorerError::ModelFormat(format!("expected 8 tensors, found {}", tensors.len())));
                }
                let shapes = ConvNet::shapes(in_w, in_h, out_dim);
                let mut it = tensors.into_iter();
                let mut loaded: Vec<Vec<f64>> = Vec::with_capacity(8);
                for (name, shape) in CONV_TENSOR_NAMES.iter().zip(&shapes) {
                    loaded.push(expect_tensor(it.next(), name, shape)?);
                }
                let tensors: [Vec<f64>; 8] = loaded.try_into().expect("eight tensors");
                Net::Conv(ConvNet {
                    in_w,
                    in_h,
                    out_dim,
                    normalize: kind == ScorerKind::Embedding,
                    params: ConvParams { tensors },
                })
            }
        };
        Ok(Scorer { kind, net, labels })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScorerError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scorer, ScorerError> {
        Scorer::from_bytes(&std::fs::read(path)?)
    }
}

fn expect_tensor(
    t: Option<(String, Vec<usize>, Vec<f64>)>,
    name: &str,
    shape: &[usize],
) -> Result<Vec<f64>, ScorerError> {
    match t {
        Some((n, s, data)) if n == name && s == shape => Ok(data),
        Some((n, s, _)) => Err(ScorerError::ModelFormat(format!("expected tensor {name} {shape:?}, found {n} {s:?}"))),
        None => Err(ScorerError::ModelFormat(format!("missing tensor {name}"))),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ScorerError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            ScorerError::ModelFormat(format!("truncated at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ScorerError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ScorerError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String, ScorerError> {
        let b = self.take(2)?;
        let len = u16::from_le_bytes([b[0], b[1]]) as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| ScorerError::ModelFormat(e.to_string()))
    }
}
