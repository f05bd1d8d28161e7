//! Seeded planted-partition graphs with known signal and noise edges.
//!
//! Nodes are split evenly over classes. Each unordered node pair is joined
//! (in both directions) with probability `p_in` when the classes match and
//! `p_out` otherwise. Cross-class edges are the planted noise. Features put
//! `signal` on the node's class coordinate and add Gaussian noise to every
//! coordinate.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, GraphBundle};
use crate::io;
use crate::model::{GatLayer, GcnLayer, HeadMerge, ModelWeights, DEFAULT_LEAKY_SLOPE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub nodes_per_class: usize,
    pub num_classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub num_features: usize,
    pub signal: f64,
    pub feature_noise: f64,
    /// Cap on each node's undirected degree; pairs that would exceed it are
    /// skipped.
    pub max_degree: Option<usize>,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            nodes_per_class: 20,
            num_classes: 3,
            p_in: 0.2,
            p_out: 0.05,
            num_features: 8,
            signal: 1.0,
            feature_noise: 0.5,
            max_degree: None,
            train_fraction: 0.2,
            val_fraction: 0.2,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_in", self.p_in),
            ("p_out", self.p_out),
            ("train_fraction", self.train_fraction),
            ("val_fraction", self.val_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::arg(name, format!("{p} is outside [0, 1]")));
            }
        }
        if self.train_fraction + self.val_fraction > 1.0 {
            return Err(Error::arg("val_fraction", "train + val fractions exceed 1"));
        }
        if self.num_classes == 0 || self.nodes_per_class == 0 {
            return Err(Error::arg("num_classes", "need at least one class and one node per class"));
        }
        if self.num_features < self.num_classes {
            return Err(Error::arg("num_features", "must be at least the number of classes"));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) || !self.signal.is_finite() {
            return Err(Error::arg("feature_noise", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Per-edge ground truth: `true` marks a cross-class (noise) edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedTruth {
    pub noise: Vec<bool>,
}

impl PlantedTruth {
    pub fn is_noise(&self, e: EdgeId) -> bool {
        self.noise[e.index()]
    }

    pub fn noise_count(&self) -> usize {
        self.noise.iter().filter(|&&b| b).count()
    }

    pub fn noise_fraction(&self) -> f64 {
        if self.noise.is_empty() {
            0.0
        } else {
            self.noise_count() as f64 / self.noise.len() as f64
        }
    }

    /// `planted.u8`: one byte per edge, 1 for noise.
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &io::flag_bytes(&self.noise))
    }

    pub fn load(path: &Path, num_edges: usize) -> Result<Self> {
        Ok(Self {
            noise: io::read_flags(path, num_edges)?,
        })
    }
}

pub fn generate_synthetic(seed: u64, params: &SynthParams) -> Result<(GraphBundle, PlantedTruth)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = params.num_classes;
    let n = params.nodes_per_class * c;

    let mut labels: Vec<u32> = (0..n).map(|i| (i % c) as u32).collect();
    labels.shuffle(&mut rng);

    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    pairs.shuffle(&mut rng);
    let mut degree = vec![0usize; n];
    let mut edges = Vec::new();
    for (i, j) in pairs {
        let same = labels[i] == labels[j];
        let p = if same { params.p_in } else { params.p_out };
        // one draw per pair keeps the stream independent of the cap
        let draw: f64 = rng.random();
        if draw >= p {
            continue;
        }
        if let Some(cap) = params.max_degree {
            if degree[i] >= cap || degree[j] >= cap {
                continue;
            }
        }
        degree[i] += 1;
        degree[j] += 1;
        edges.push((i, j));
        edges.push((j, i));
    }

    let f = params.num_features;
    let normal = Normal::new(0.0, params.feature_noise).map_err(|e| Error::arg("feature_noise", e.to_string()))?;
    let mut features = vec![0f32; n * f];
    for i in 0..n {
        let row = &mut features[i * f..(i + 1) * f];
        for x in row.iter_mut() {
            *x = normal.sample(&mut rng) as f32;
        }
        row[labels[i] as usize] += params.signal as f32;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (params.train_fraction * n as f64).round() as usize;
    let n_val = ((params.val_fraction * n as f64).round() as usize).min(n - n_train);
    let mut train = vec![false; n];
    let mut val = vec![false; n];
    let mut test = vec![false; n];
    for (rank, &node) in order.iter().enumerate() {
        if rank < n_train {
            train[node] = true;
        } else if rank < n_train + n_val {
            val[node] = true;
        } else {
            test[node] = true;
        }
    }

    let g = GraphBundle::from_edges(n, &edges, f, features, c, labels, Some((train, val, test)))?;
    let noise = g.edges().map(|(_, s, d)| g.labels()[s] != g.labels()[d]).collect();
    Ok((g, PlantedTruth { noise }))
}

/// GCN that reads the class coordinates of the features: layer 1 copies
/// them into the first `num_classes` hidden units, layer 2 maps hidden unit
/// `c` to class `c` with gain `scale`.
pub fn planted_gcn(num_features: usize, num_classes: usize, hidden: usize, scale: f64) -> Result<ModelWeights> {
    if hidden < num_classes || num_features < num_classes {
        return Err(Error::arg("hidden", "must be at least the number of classes"));
    }
    let mut w1 = vec![0.0; num_features * hidden];
    let mut w2 = vec![0.0; hidden * num_classes];
    for c in 0..num_classes {
        w1[c * hidden + c] = 1.0;
        w2[c * num_classes + c] = scale;
    }
    ModelWeights::gcn(vec![
        GcnLayer { in_dim: num_features, out_dim: hidden, weight: w1, bias: vec![0.0; hidden] },
        GcnLayer { in_dim: hidden, out_dim: num_classes, weight: w2, bias: vec![0.0; num_classes] },
    ])
}

/// GAT counterpart of [`planted_gcn`]: `heads` concatenated heads of width
/// `head_dim` with uniform attention (zero attention vectors), then a single
/// output head summing the class units of every head.
pub fn planted_gat(
    num_features: usize,
    num_classes: usize,
    heads: usize,
    head_dim: usize,
    scale: f64,
) -> Result<ModelWeights> {
    if head_dim < num_classes || num_features < num_classes {
        return Err(Error::arg("head_dim", "must be at least the number of classes"));
    }
    let mut w1 = vec![0.0; heads * num_features * head_dim];
    for h in 0..heads {
        for c in 0..num_classes {
            w1[h * num_features * head_dim + c * head_dim + c] = 1.0;
        }
    }
    let hidden = heads * head_dim;
    let mut w2 = vec![0.0; hidden * num_classes];
    for h in 0..heads {
        for c in 0..num_classes {
            w2[(h * head_dim + c) * num_classes + c] = scale / heads as f64;
        }
    }
    ModelWeights::gat(
        vec![
            GatLayer {
                in_dim: num_features,
                heads,
                head_dim,
                merge: HeadMerge::Concat,
                weight: w1,
                att_src: vec![0.0; heads * head_dim],
                att_dst: vec![0.0; heads * head_dim],
                bias: vec![0.0; hidden],
            },
            GatLayer {
                in_dim: hidden,
                heads: 1,
                head_dim: num_classes,
                merge: HeadMerge::Mean,
                weight: w2,
                att_src: vec![0.0; num_classes],
                att_dst: vec![0.0; num_classes],
                bias: vec![0.0; num_classes],
            },
        ],
        DEFAULT_LEAKY_SLOPE,
    )
}
