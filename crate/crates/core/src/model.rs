//! Layer parameters for 2-layer GCN and GAT models, and the
//! `weights.json` + `weights.f32` file pair.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    Gat,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gcn => "gcn",
            ModelKind::Gat => "gat",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMerge {
    Concat,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `in_dim x out_dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub in_dim: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub merge: HeadMerge,
    /// `heads x in_dim x head_dim`.
    pub weight: Vec<f64>,
    /// `heads x head_dim`, applied to the sender's transformed features.
    pub att_src: Vec<f64>,
    /// `heads x head_dim`, applied to the receiver's transformed features.
    pub att_dst: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GatLayer {
    pub fn out_dim(&self) -> usize {
        match self.merge {
            HeadMerge::Concat => self.heads * self.head_dim,
            HeadMerge::Mean => self.head_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerWeights {
    Gcn(GcnLayer),
    Gat(GatLayer),
}

impl LayerWeights {
    pub fn in_dim(&self) -> usize {
        match self {
            LayerWeights::Gcn(l) => l.in_dim,
            LayerWeights::Gat(l) => l.in_dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            LayerWeights::Gcn(l) => l.out_dim,
            LayerWeights::Gat(l) => l.out_dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub kind: ModelKind,
    pub layers: Vec<LayerWeights>,
    pub leaky_slope: f64,
}

impl ModelWeights {
    pub fn gcn(layers: Vec<GcnLayer>) -> Result<Self> {
        let w = Self {
            kind: ModelKind::Gcn,
            layers: layers.into_iter().map(LayerWeights::Gcn).collect(),
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn gat(layers: Vec<GatLayer>, leaky_slope: f64) -> Result<Self> {
        let w = Self {
            kind: ModelKind::Gat,
            layers: layers.into_iter().map(LayerWeights::Gat).collect(),
            leaky_slope,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(LayerWeights::out_dim).unwrap_or(0)
    }

    /// Checks shapes, layer chaining, and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidModel("model has no layers".into()));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::InvalidModel("leaky slope is not finite".into()));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            let tensors: Vec<(&str, &[f64], usize)> = match (self.kind, layer) {
                (ModelKind::Gcn, LayerWeights::Gcn(l)) => vec![
                    ("weight", &l.weight, l.in_dim * l.out_dim),
                    ("bias", &l.bias, l.out_dim),
                ],
                (ModelKind::Gat, LayerWeights::Gat(l)) => vec![
                    ("weight", &l.weight, l.heads * l.in_dim * l.head_dim),
                    ("att_src", &l.att_src, l.heads * l.head_dim),
                    ("att_dst", &l.att_dst, l.heads * l.head_dim),
                    ("bias", &l.bias, l.out_dim()),
                ],
                _ => {
                    return Err(Error::InvalidModel(format!(
                        "layer {k} does not match model kind {}",
                        self.kind.as_str()
                    )))
                }
            };
            for (name, values, len) in tensors {
                if values.len() != len {
                    return Err(Error::InvalidModel(format!(
                        "layers.{k}.{name} has {} values, expected {len}",
                        values.len()
                    )));
                }
                if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel(format!(
                        "layers.{k}.{name}[{i}] is not finite"
                    )));
                }
            }
            if let LayerWeights::Gat(l) = layer {
                if l.heads == 0 {
                    return Err(Error::InvalidModel(format!("layers.{k} has zero heads")));
                }
            }
            if k > 0 && self.layers[k - 1].out_dim() != layer.in_dim() {
                return Err(Error::InvalidModel(format!(
                    "layer {} outputs {} features but layer {k} expects {}",
                    k - 1,
                    self.layers[k - 1].out_dim(),
                    layer.in_dim()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into `weights.f32`.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsManifest {
    pub format_version: u32,
    pub kind: ModelKind,
    /// Input width followed by the merged output width of every layer.
    pub dims: Vec<usize>,
    pub heads: Vec<usize>,
    pub merge: Vec<HeadMerge>,
    pub leaky_slope: f64,
    pub tensors: Vec<TensorEntry>,
}

fn layer_tensors(k: usize, layer: &LayerWeights) -> Vec<(String, Vec<usize>, &[f64])> {
    match layer {
        LayerWeights::Gcn(l) => vec![
            (format!("layers.{k}.weight"), vec![l.in_dim, l.out_dim], &l.weight[..]),
            (format!("layers.{k}.bias"), vec![l.out_dim], &l.bias[..]),
        ],
        LayerWeights::Gat(l) => vec![
            (
                format!("layers.{k}.weight"),
                vec![l.heads, l.in_dim, l.head_dim],
                &l.weight[..],
            ),
            (format!("layers.{k}.att_src"), vec![l.heads, l.head_dim], &l.att_src[..]),
            (format!("layers.{k}.att_dst"), vec![l.heads, l.head_dim], &l.att_dst[..]),
            (format!("layers.{k}.bias"), vec![l.out_dim()], &l.bias[..]),
        ],
    }
}

/// Serializes to the `(weights.json, weights.f32)` byte pair.
pub fn encode_weights(w: &ModelWeights) -> (Vec<u8>, Vec<u8>) {
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    for (k, layer) in w.layers.iter().enumerate() {
        for (name, shape, values) in layer_tensors(k, layer) {
            tensors.push(TensorEntry {
                name,
                shape,
                offset: blob.len(),
            });
            for &v in values {
                blob.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    let mut dims = vec![w.in_dim()];
    dims.extend(w.layers.iter().map(LayerWeights::out_dim));
    let (heads, merge) = w
        .layers
        .iter()
        .map(|l| match l {
            LayerWeights::Gcn(_) => (1, HeadMerge::Concat),
            LayerWeights::Gat(g) => (g.heads, g.merge),
        })
        .unzip();
    let manifest = WeightsManifest {
        format_version: WEIGHTS_FORMAT_VERSION,
        kind: w.kind,
        dims,
        heads,
        merge,
        leaky_slope: w.leaky_slope,
        tensors,
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    (json, blob)
}

pub fn decode_weights(json: &[u8], blob: &[u8]) -> Result<ModelWeights> {
    let manifest: WeightsManifest = serde_json::from_slice(json).map_err(|e| {
        Error::format(
            "weights.json",
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let bad = |msg: String| Error::format("weights.json", "manifest", msg);
    if manifest.format_version != WEIGHTS_FORMAT_VERSION {
        return Err(bad(format!("unsupported format_version {}", manifest.format_version)));
    }
    let layers = manifest.dims.len().saturating_sub(1);
    if layers == 0 || manifest.heads.len() != layers || manifest.merge.len() != layers {
        return Err(bad("dims, heads and merge lengths disagree".into()));
    }

    let tensor = |name: String, shape: &[usize]| -> Result<Vec<f64>> {
        let (idx, entry) = manifest
            .tensors
            .iter()
            .enumerate()
            .find(|(_, t)| t.name == name)
            .ok_or_else(|| bad(format!("missing tensor {name}")))?;
        if entry.shape != shape {
            return Err(Error::format(
                "weights.json",
                format!("tensor {idx}"),
                format!("{name} has shape {:?}, expected {shape:?}", entry.shape),
            ));
        }
        let len: usize = shape.iter().product();
        let end = entry.offset + len * 4;
        if entry.offset % 4 != 0 || end > blob.len() {
            return Err(Error::format(
                "weights.f32",
                format!("byte {}", entry.offset),
                format!("{name} spans bytes {}..{end} of {}", entry.offset, blob.len()),
            ));
        }
        Ok(blob[entry.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    };

    let mut out = Vec::with_capacity(layers);
    for k in 0..layers {
        let (in_dim, out_dim) = (manifest.dims[k], manifest.dims[k + 1]);
        let layer = match manifest.kind {
            ModelKind::Gcn => LayerWeights::Gcn(GcnLayer {
                in_dim,
                out_dim,
                weight: tensor(format!("layers.{k}.weight"), &[in_dim, out_dim])?,
                bias: tensor(format!("layers.{k}.bias"), &[out_dim])?,
            }),
            ModelKind::Gat => {
                let heads = manifest.heads[k];
                let merge = manifest.merge[k];
                let head_dim = match merge {
                    HeadMerge::Concat if heads > 0 && out_dim % heads == 0 => out_dim / heads,
                    HeadMerge::Mean => out_dim,
                    _ => {
                        return Err(bad(format!(
                            "layer {k}: output width {out_dim} not divisible by {heads} heads"
                        )))
                    }
                };
                LayerWeights::Gat(GatLayer {
                    in_dim,
                    heads,
                    head_dim,
                    merge,
                    weight: tensor(format!("layers.{k}.weight"), &[heads, in_dim, head_dim])?,
                    att_src: tensor(format!("layers.{k}.att_src"), &[heads, head_dim])?,
                    att_dst: tensor(format!("layers.{k}.att_dst"), &[heads, head_dim])?,
                    bias: tensor(format!("layers.{k}.bias"), &[out_dim])?,
                })
            }
        };
        out.push(layer);
    }
    let w = ModelWeights {
        kind: manifest.kind,
        layers: out,
        leaky_slope: manifest.leaky_slope,
    };
    w.validate()?;
    Ok(w)
}

/// Loads `weights.json` and `weights.f32` from a directory, or from the
/// `.json` path with its `.f32` sibling.
pub fn load_weights(path: &Path) -> Result<ModelWeights> {
    let (json_path, blob_path) = weight_paths(path);
    let json = io::read_file(&json_path)?;
    let blob = io::read_file(&blob_path)?;
    decode_weights(&json, &blob)
}

pub fn save_weights(w: &ModelWeights, path: &Path) -> Result<()> {
    let (json_path, blob_path) = weight_paths(path);
    let (json, blob) = encode_weights(w);
    io::write_atomic(&blob_path, &blob)?;
    io::write_atomic(&json_path, &json)
}

fn weight_paths(path: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    if path.extension().is_some_and(|e| e == "json") {
        (path.to_path_buf(), path.with_extension("f32"))
    } else {
        (path.join("weights.json"), path.join("weights.f32"))
    }
}
