//! GCL1 binary container for datasets and fitted models.
//!
//! Layout: 16-byte header (`b"GCL1"`, u32 kind, u32 version, u32 reserved),
//! then a kind-specific payload. All integers and floats are little-endian;
//! floats are IEEE-754 f64. See SCHEMAS.md for the payloads.

use std::path::Path;

use gencls_core::ar_textgen::{ARClassLM, Objective};
use gencls_core::linear_models::{FitMetadata, LinearModel, Method};
use gencls_core::synth_data::{LabeledDataset, TokenDataset, TokenVocab};
use nalgebra::DMatrix;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"GCL1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Kind {
    GaussianDataset = 1,
    TokenDataset = 2,
    LinearModel = 3,
    ArModel = 4,
}

impl Kind {
    fn from_u32(v: u32) -> Option<Self> {
        match v {
            1 => Some(Kind::GaussianDataset),
            2 => Some(Kind::TokenDataset),
            3 => Some(Kind::LinearModel),
            4 => Some(Kind::ArModel),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum BinError {
    #[error("not a GCL1 file")]
    BadMagic,
    #[error("unsupported GCL1 version {0}")]
    Version(u32),
    #[error("unknown GCL1 kind {0}")]
    UnknownKind(u32),
    #[error("expected {expected:?}, found {found:?}")]
    WrongKind { expected: Kind, found: Kind },
    #[error("truncated file: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("invalid payload: {0}")]
    Invalid(String),
}

/// Any decoded GCL1 object.
#[derive(Debug, Clone, PartialEq)]
pub enum Object {
    Gaussian(LabeledDataset),
    Tokens(TokenDataset, TokenVocab),
    Linear(LinearModel),
    Ar(ARClassLM),
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(kind: Kind) -> Self {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(kind as u32);
        w.u32(VERSION);
        w.u32(0);
        w
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn groups(&mut self, labels: &[i8], agreement: &[bool], group_id: &[u8]) {
        self.0.extend(labels.iter().map(|&y| y as u8));
        self.0.extend(agreement.iter().map(|&a| u8::from(a)));
        self.0.extend_from_slice(group_id);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BinError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(BinError::Truncated {
            offset: self.pos,
            needed: n.saturating_sub(self.buf.len() - self.pos),
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, BinError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<usize, BinError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| BinError::Invalid(format!("length {v} too large")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, BinError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| BinError::Invalid("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
    fn groups(&mut self, n: usize) -> Result<(Vec<i8>, Vec<bool>, Vec<u8>), BinError> {
        let labels: Vec<i8> = self.take(n)?.iter().map(|&b| b as i8).collect();
        if labels.iter().any(|&y| y != 1 && y != -1) {
            return Err(BinError::Invalid("labels must be +1 or -1".into()));
        }
        let agreement = self.take(n)?.iter().map(|&b| b != 0).collect();
        let group_id = self.take(n)?.to_vec();
        if group_id.iter().any(|&g| g > 3) {
            return Err(BinError::Invalid("group ids must be in 0..4".into()));
        }
        Ok((labels, agreement, group_id))
    }
}

pub fn encode_gaussian(data: &LabeledDataset) -> Vec<u8> {
    let mut w = Writer::new(Kind::GaussianDataset);
    let (n, d) = data.features.shape();
    w.u64(n);
    w.u64(d);
    for i in 0..n {
        for j in 0..d {
            w.f64s(&[data.features[(i, j)]]);
        }
    }
    w.groups(&data.labels, &data.agreement, &data.group_id);
    w.0
}

pub fn encode_tokens(data: &TokenDataset, vocab: TokenVocab) -> Vec<u8> {
    let mut w = Writer::new(Kind::TokenDataset);
    w.u64(data.len());
    w.u64(data.seq_len);
    w.u64(vocab.content);
    for &t in &data.tokens {
        w.u32(t);
    }
    w.groups(&data.labels, &data.agreement, &data.group_id);
    w.0
}

pub fn encode_linear(model: &LinearModel) -> Vec<u8> {
    let mut w = Writer::new(Kind::LinearModel);
    w.u32(model.method.code());
    w.u64(model.weights.len());
    w.f64s(&[model.bias]);
    w.f64s(&model.weights);
    w.0
}

pub fn encode_ar(model: &ARClassLM) -> Vec<u8> {
    let mut w = Writer::new(Kind::ArModel);
    w.u32(model.objective.code());
    w.u64(model.vocab.content);
    w.u64(model.lm.len());
    w.f64s(&model.lm);
    w.u64(model.head.len());
    w.f64s(&model.head);
    w.0
}

pub fn decode(buf: &[u8]) -> Result<Object, BinError> {
    let mut r = Reader { buf, pos: 0 };
    if buf.len() < 4 || r.take(4)? != MAGIC {
        return Err(BinError::BadMagic);
    }
    let kind_raw = r.u32()?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(BinError::Version(version));
    }
    r.u32()?;
    let kind = Kind::from_u32(kind_raw).ok_or(BinError::UnknownKind(kind_raw))?;
    let obj = match kind {
        Kind::GaussianDataset => {
            let n = r.u64()?;
            let d = r.u64()?;
            let values = r.f64s(n.checked_mul(d).ok_or_else(|| BinError::Invalid("size overflow".into()))?)?;
            let (labels, agreement, group_id) = r.groups(n)?;
            Object::Gaussian(LabeledDataset {
                features: DMatrix::from_row_slice(n, d, &values),
                labels,
                agreement,
                group_id,
            })
        }
        Kind::TokenDataset => {
            let n = r.u64()?;
            let seq_len = r.u64()?;
            let content = r.u64()?;
            let count = n.checked_mul(seq_len).ok_or_else(|| BinError::Invalid("size overflow".into()))?;
            let mut tokens = Vec::with_capacity(count.min(buf.len() / 4));
            for _ in 0..count {
                tokens.push(r.u32()?);
            }
            let (labels, agreement, group_id) = r.groups(n)?;
            Object::Tokens(
                TokenDataset {
                    seq_len,
                    tokens,
                    labels,
                    agreement,
                    group_id,
                },
                TokenVocab { content },
            )
        }
        Kind::LinearModel => {
            let code = r.u32()?;
            let method = Method::from_code(code).ok_or_else(|| BinError::Invalid(format!("unknown method code {code}")))?;
            let d = r.u64()?;
            let bias = r.f64s(1)?[0];
            let weights = r.f64s(d)?;
            Object::Linear(LinearModel {
                weights,
                bias,
                method,
                meta: FitMetadata::default(),
            })
        }
        Kind::ArModel => {
            let code = r.u32()?;
            let objective =
                Objective::from_code(code).ok_or_else(|| BinError::Invalid(format!("unknown objective code {code}")))?;
            let content = r.u64()?;
            let n_lm = r.u64()?;
            let lm = r.f64s(n_lm)?;
            let n_head = r.u64()?;
            let head = r.f64s(n_head)?;
            let expected = ARClassLM::new(objective, TokenVocab { content });
            if expected.lm.len() != lm.len() || expected.head.len() != head.len() {
                return Err(BinError::Invalid("parameter block sizes do not match the objective".into()));
            }
            Object::Ar(ARClassLM {
                objective,
                vocab: TokenVocab { content },
                lm,
                head,
            })
        }
    };
    if r.pos != buf.len() {
        return Err(BinError::Trailing(buf.len() - r.pos));
    }
    Ok(obj)
}

pub fn read_object(path: &Path) -> anyhow::Result<Object> {
    let buf = std::fs::read(path).map_err(|e| anyhow::anyhow!(crate::InputError(format!("cannot read {}: {e}", path.display()))))?;
    decode(&buf).map_err(|e| anyhow::anyhow!(crate::InputError(format!("{}: {e}", path.display()))))
}
