//! Model file: one line of JSON header, then a little-endian binary payload.
//!
//! | kind | payload                                                              |
//! |------|----------------------------------------------------------------------|
//! | rf   | u64 trees; per tree u64 nodes; per node u8 tag then `[u8 vote]` (leaf) or `[u32 feature, f64 threshold, u32 left, u32 right]` (split) |
//! | svc  | u64 support vectors, f64 bias, f64 A, f64 B, then per vector f64 coef and d × f64 |
//! | mlp  | u64 parameter count, then the flattened parameters as f64            |

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::forest::{Forest, Node, Tree};
use super::{Fitted, HyperParams, ModelKind, Network, Normalization, SvcFit, TrainedModel};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("model header error: {0}")]
    Header(String),
    #[error("model payload error: {0}")]
    Payload(String),
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: ModelKind,
    hyperparams: HyperParams,
    n_features: usize,
    normalization: Option<Normalization>,
    training_hash: String,
    payload_bytes: usize,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ModelFormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            ModelFormatError::Payload(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ModelFormatError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, ModelFormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<usize, ModelFormatError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| ModelFormatError::Payload(format!("count {v} out of range")))
    }
    fn f64(&mut self) -> Result<f64, ModelFormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn payload(model: &TrainedModel) -> Vec<u8> {
    let mut out = Vec::new();
    let put_u64 = |o: &mut Vec<u8>, v: usize| o.extend_from_slice(&(v as u64).to_le_bytes());
    match &model.fitted {
        Fitted::Rf(forest) => {
            put_u64(&mut out, forest.trees.len());
            for t in &forest.trees {
                put_u64(&mut out, t.nodes.len());
                for n in &t.nodes {
                    match *n {
                        Node::Leaf { failed } => out.extend_from_slice(&[0, u8::from(failed)]),
                        Node::Split { feature, threshold, left, right } => {
                            out.push(1);
                            out.extend_from_slice(&feature.to_le_bytes());
                            out.extend_from_slice(&threshold.to_le_bytes());
                            out.extend_from_slice(&left.to_le_bytes());
                            out.extend_from_slice(&right.to_le_bytes());
                        }
                    }
                }
            }
        }
        Fitted::Svc(s) => {
            put_u64(&mut out, s.coef.len());
            for v in [s.bias, s.platt.0, s.platt.1] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for (c, sv) in s.coef.iter().zip(s.support.chunks_exact(s.d)) {
                out.extend_from_slice(&c.to_le_bytes());
                sv.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            }
        }
        Fitted::Mlp(net) => {
            put_u64(&mut out, net.params.len());
            net.params.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
    }
    out
}

pub fn encode_model(model: &TrainedModel) -> Vec<u8> {
    let body = payload(model);
    let header = Header {
        format_version: MODEL_FORMAT_VERSION,
        kind: model.kind(),
        hyperparams: model.hyperparams,
        n_features: model.n_features,
        normalization: model.normalization.clone(),
        training_hash: model.training_hash.clone(),
        payload_bytes: body.len(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.extend(body);
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<TrainedModel, ModelFormatError> {
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| ModelFormatError::Header("missing header line".into()))?;
    let h: Header = serde_json::from_slice(&bytes[..nl]).map_err(|e| ModelFormatError::Header(e.to_string()))?;
    if h.format_version != MODEL_FORMAT_VERSION {
        return Err(ModelFormatError::Header(format!("format version {}", h.format_version)));
    }
    if h.kind != h.hyperparams.kind() {
        return Err(ModelFormatError::Header("kind disagrees with hyperparameters".into()));
    }
    let body = &bytes[nl + 1..];
    if body.len() != h.payload_bytes {
        return Err(ModelFormatError::Payload(format!("expected {} bytes, found {}", h.payload_bytes, body.len())));
    }
    let d = h.n_features;
    let mut r = Reader { buf: body, pos: 0 };
    let fitted = match h.hyperparams {
        HyperParams::Rf(_) => {
            let n_trees = r.u64()?;
            let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
            for _ in 0..n_trees {
                let n_nodes = r.u64()?;
                let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
                for _ in 0..n_nodes {
                    nodes.push(match r.u8()? {
                        0 => Node::Leaf { failed: r.u8()? == 1 },
                        1 => {
                            let (feature, threshold, left, right) = (r.u32()?, r.f64()?, r.u32()?, r.u32()?);
                            if feature as usize >= d || left as usize >= n_nodes || right as usize >= n_nodes {
                                return Err(ModelFormatError::Payload("split references out of range".into()));
                            }
                            Node::Split { feature, threshold, left, right }
                        }
                        t => return Err(ModelFormatError::Payload(format!("unknown node tag {t}"))),
                    });
                }
                trees.push(Tree { nodes });
            }
            Fitted::Rf(Forest { trees })
        }
        HyperParams::Svc(p) => {
            let n_sv = r.u64()?;
            let (bias, a, b) = (r.f64()?, r.f64()?, r.f64()?);
            let (mut coef, mut support) = (Vec::new(), Vec::new());
            for _ in 0..n_sv {
                coef.push(r.f64()?);
                for _ in 0..d {
                    support.push(r.f64()?);
                }
            }
            Fitted::Svc(SvcFit { d, gamma: p.gamma, support, coef, bias, platt: (a, b) })
        }
        HyperParams::Mlp(p) => {
            let n = r.u64()?;
            if n != p.units * d + 2 * p.units + 1 {
                return Err(ModelFormatError::Payload(format!("{n} parameters for {} units and {d} features", p.units)));
            }
            let params = (0..n).map(|_| r.f64()).collect::<Result<_, _>>()?;
            Fitted::Mlp(Network { d, units: p.units, activation: p.activation, params })
        }
    };
    if r.pos != body.len() {
        return Err(ModelFormatError::Payload(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(TrainedModel { hyperparams: h.hyperparams, n_features: d, normalization: h.normalization, training_hash: h.training_hash, fitted })
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), ModelFormatError> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, ModelFormatError> {
    decode_model(&fs::read(path)?)
}
