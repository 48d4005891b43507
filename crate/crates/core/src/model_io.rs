//! `MNDBN1` model container.
//!
//! ```text
//! "MNDBN1"                      6 bytes magic
//! header_len: u32 LE
//! header: UTF-8 JSON            dimensions, penalty config, training metadata
//! kind = "rbm":
//!     w (row-major), b_vis, a_hid       f64 LE
//! kind = "dbn":
//!     layer_count: u32 LE
//!     per layer: visible u32, hidden u32, w, b_vis, a_hid
//!     has_head: u8
//!     head: inputs u32, classes u32, w_out (row-major), b_out
//! ```
//!
//! Writing a loaded file reproduces it byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dbn::{Dbn, SoftmaxLayer};
use crate::error::{Error, Result};
use crate::groups::GroupPartition;
use crate::math::Matrix;
use crate::mixed_norm::PenaltyConfig;
use crate::rbm::Rbm;

pub const MAGIC: &[u8; 6] = b"MNDBN1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rbm,
    Dbn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerHeader {
    pub visible: usize,
    pub hidden: usize,
    pub lambda: f64,
    pub group_size: usize,
    pub overlap_fraction: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadHeader {
    pub inputs: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub kind: ModelKind,
    pub layers: Vec<LayerHeader>,
    pub head: Option<HeadHeader>,
    /// Free-form training record: hyperparameters, seed, dataset.
    pub training: serde_json::Value,
}

impl LayerHeader {
    fn describe(m: &Rbm, cfg: &PenaltyConfig) -> Self {
        LayerHeader {
            visible: m.visible(),
            hidden: m.hidden(),
            lambda: cfg.lambda,
            group_size: cfg.partition.group_size(),
            overlap_fraction: cfg.partition.overlap_fraction(),
            epsilon: cfg.epsilon,
        }
    }

    pub fn penalty(&self) -> Result<PenaltyConfig> {
        let part = GroupPartition::new(self.hidden, self.group_size, self.overlap_fraction)?;
        PenaltyConfig::with_epsilon(self.lambda, part, self.epsilon)
    }
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Contract(format!("dimension {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_rbm(out: &mut Vec<u8>, m: &Rbm) {
    put_f64s(out, m.weights().as_slice());
    put_f64s(out, m.visible_bias());
    put_f64s(out, m.hidden_bias());
}

fn begin(header: &ModelHeader) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)
        .map_err(|e| Error::Contract(format!("cannot encode model header: {e}")))?;
    let mut out = Vec::with_capacity(json.len() + 64);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, json.len())?;
    out.extend_from_slice(&json);
    Ok(out)
}

pub fn rbm_to_bytes(m: &Rbm, cfg: &PenaltyConfig, training: serde_json::Value) -> Result<Vec<u8>> {
    let header = ModelHeader {
        kind: ModelKind::Rbm,
        layers: vec![LayerHeader::describe(m, cfg)],
        head: None,
        training,
    };
    let mut out = begin(&header)?;
    put_rbm(&mut out, m);
    Ok(out)
}

pub fn dbn_to_bytes(d: &Dbn, training: serde_json::Value) -> Result<Vec<u8>> {
    let header = ModelHeader {
        kind: ModelKind::Dbn,
        layers: d
            .layers
            .iter()
            .zip(&d.layer_configs)
            .map(|(m, c)| LayerHeader::describe(m, c))
            .collect(),
        head: d.head.as_ref().map(|h| HeadHeader {
            inputs: h.inputs(),
            classes: h.classes(),
        }),
        training,
    };
    let mut out = begin(&header)?;
    put_u32(&mut out, d.layers.len())?;
    for m in &d.layers {
        put_u32(&mut out, m.visible())?;
        put_u32(&mut out, m.hidden())?;
        put_rbm(&mut out, m);
    }
    match &d.head {
        None => out.push(0),
        Some(h) => {
            out.push(1);
            put_u32(&mut out, h.inputs())?;
            put_u32(&mut out, h.classes())?;
            put_f64s(&mut out, h.w_out.as_slice());
            put_f64s(&mut out, &h.b_out);
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    name: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.name, format!("byte offset {}", self.pos), msg)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| self.err(format!("truncated: need {n} more bytes")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.err("size overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn rbm(&mut self, visible: usize, hidden: usize) -> Result<Rbm> {
        let w = Matrix::from_vec(visible, hidden, self.f64s(visible * hidden)?)?;
        let b = self.f64s(visible)?;
        let a = self.f64s(hidden)?;
        Rbm::from_parts(w, b, a)
    }

    fn expect_u32(&mut self, expected: usize, what: &str) -> Result<()> {
        let found = self.u32()?;
        if found != expected {
            return Err(self.err(format!(
                "{what} {found} disagrees with header value {expected}"
            )));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

/// Parsed container: the header plus the network (a single RBM becomes a
/// one-layer network without head).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub header: ModelHeader,
    pub dbn: Dbn,
}

impl ModelFile {
    /// Re-encodes in the container's original kind.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        match self.header.kind {
            ModelKind::Rbm => rbm_to_bytes(
                &self.dbn.layers[0],
                &self.dbn.layer_configs[0],
                self.header.training.clone(),
            ),
            ModelKind::Dbn => dbn_to_bytes(&self.dbn, self.header.training.clone()),
        }
    }
}

pub fn from_bytes(name: &str, bytes: &[u8]) -> Result<ModelFile> {
    let mut c = Cursor {
        name,
        bytes,
        pos: 0,
    };
    if c.take(MAGIC.len())? != MAGIC {
        c.pos = 0;
        return Err(c.err("missing MNDBN1 magic"));
    }
    let header_len = c.u32()?;
    let header_start = c.pos;
    let header: ModelHeader = serde_json::from_slice(c.take(header_len)?).map_err(|e| {
        Error::parse(
            name,
            format!("byte offset {header_start}"),
            format!("bad header: {e}"),
        )
    })?;
    if header.layers.is_empty() {
        return Err(c.err("header lists no layers"));
    }
    let configs = header
        .layers
        .iter()
        .map(LayerHeader::penalty)
        .collect::<Result<Vec<_>>>()?;
    let dbn = match header.kind {
        ModelKind::Rbm => {
            if header.layers.len() != 1 || header.head.is_some() {
                return Err(c.err("an rbm container holds exactly one layer and no head"));
            }
            let l = &header.layers[0];
            let m = c.rbm(l.visible, l.hidden)?;
            Dbn::new(vec![m], None, configs)?
        }
        ModelKind::Dbn => {
            c.expect_u32(header.layers.len(), "layer count")?;
            let mut layers = Vec::with_capacity(header.layers.len());
            for l in &header.layers {
                c.expect_u32(l.visible, "visible size")?;
                c.expect_u32(l.hidden, "hidden size")?;
                layers.push(c.rbm(l.visible, l.hidden)?);
            }
            let head = match (c.u8()?, &header.head) {
                (0, None) => None,
                (1, Some(h)) => {
                    c.expect_u32(h.inputs, "head inputs")?;
                    c.expect_u32(h.classes, "head classes")?;
                    let w_out =
                        Matrix::from_vec(h.inputs, h.classes, c.f64s(h.inputs * h.classes)?)?;
                    let b_out = c.f64s(h.classes)?;
                    Some(SoftmaxLayer { w_out, b_out })
                }
                (flag, _) => return Err(c.err(format!("head flag {flag} disagrees with header"))),
            };
            Dbn::new(layers, head, configs)?
        }
    };
    c.finish()?;
    Ok(ModelFile { header, dbn })
}

pub fn load(path: &Path) -> Result<ModelFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&path.display().to_string(), &bytes)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_rbm(
    path: &Path,
    m: &Rbm,
    cfg: &PenaltyConfig,
    training: serde_json::Value,
) -> Result<()> {
    write_bytes(path, &rbm_to_bytes(m, cfg, training)?)
}

pub fn save_dbn(path: &Path, d: &Dbn, training: serde_json::Value) -> Result<()> {
    write_bytes(path, &dbn_to_bytes(d, training)?)
}
