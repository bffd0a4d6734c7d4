//! Checkpoint file: one JSON header line, then the tensors listed in the
//! header as row-major little-endian `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Dense, DistanceKind, LossKind, MetricModel, ModelShape, Params};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    shape: ModelShape,
    alpha: f64,
    loss: LossKind,
    distance: DistanceKind,
    sources: Vec<String>,
    config_hash: Option<String>,
    tensors: Vec<TensorInfo>,
}

/// A trained model plus optional denoising centers (`k x value_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MetricModel,
    pub centers: Option<Vec<f64>>,
    pub config_hash: Option<String>,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Format(format!("writing checkpoint: {e}"));
        let mut tensors: Vec<(String, usize, usize, &[f64])> = self.model.params.tensors();
        if let Some(c) = &self.centers {
            let dv = self.model.shape.value_dim;
            tensors.push(("centers".into(), c.len() / dv, dv, &c[..]));
        }
        let header = Header {
            version: CHECKPOINT_VERSION,
            shape: self.model.shape.clone(),
            alpha: self.model.alpha,
            loss: self.model.loss,
            distance: self.model.distance,
            sources: self.model.sources.clone(),
            config_hash: self.config_hash.clone(),
            tensors: tensors
                .iter()
                .map(|(name, rows, cols, _)| TensorInfo {
                    name: name.clone(),
                    rows: *rows,
                    cols: *cols,
                })
                .collect(),
        };
        let json = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{json}").map_err(io)?;
        for (_, _, _, data) in &tensors {
            for v in *data {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)
            .map_err(|e| Error::Format(format!("reading checkpoint header: {e}")))?;
        let header: Header = serde_json::from_str(line.trim_end())
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                header.version
            )));
        }
        header.shape.validate()?;
        let mut params = empty_params(&header);
        let expected: Vec<(String, usize, usize)> = params
            .tensors()
            .into_iter()
            .map(|(n, r, c, _)| (n, r, c))
            .collect();
        let mut centers = None;
        let listed = &header.tensors;
        let has_centers = listed.len() == expected.len() + 1;
        if listed.len() != expected.len() && !has_centers {
            return Err(Error::Format(format!(
                "checkpoint lists {} tensors, expected {}",
                listed.len(),
                expected.len()
            )));
        }
        for (info, (name, rows, cols)) in listed.iter().zip(&expected) {
            if (&info.name, info.rows, info.cols) != (name, *rows, *cols) {
                return Err(Error::Format(format!(
                    "tensor `{}` ({}x{}) does not match expected `{name}` ({rows}x{cols})",
                    info.name, info.rows, info.cols
                )));
            }
        }
        for t in params.tensors_mut() {
            read_f64s(&mut r, t)?;
        }
        if has_centers {
            let info = &listed[expected.len()];
            if info.name != "centers" || info.cols != header.shape.value_dim || info.rows == 0 {
                return Err(Error::Format(format!("unexpected trailing tensor `{}`", info.name)));
            }
            let mut c = vec![0.0; info.rows * info.cols];
            read_f64s(&mut r, &mut c)?;
            centers = Some(c);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::Format(e.to_string()))? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint tensors".into()));
        }
        Ok(Checkpoint {
            model: MetricModel {
                shape: header.shape,
                alpha: header.alpha,
                distance: header.distance,
                loss: header.loss,
                sources: header.sources,
                params,
            },
            centers,
            config_hash: header.config_hash,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}

fn empty_params(h: &Header) -> Params {
    let s = &h.shape;
    let mut trunk = Vec::new();
    let mut prev = s.input_dim;
    for &n in &s.hidden {
        trunk.push(Dense::zeros(prev, n));
        prev = n;
    }
    Params {
        trunk,
        key: Dense::zeros(prev, s.key_dim),
        value: Dense::zeros(prev, s.value_dim),
        q: vec![0.0; h.sources.len() * 2 * s.key_dim],
        bilinear: (h.distance == DistanceKind::Bilinear).then(|| vec![0.0; s.value_dim * s.value_dim]),
    }
}

fn read_f64s<R: Read>(r: &mut R, out: &mut [f64]) -> Result<()> {
    let mut buf = [0u8; 8];
    for v in out {
        r.read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(())
}
