//! Shared fixtures and a dense reference implementation for the
//! integration tests. The dense forward pass builds full N x N matrices and
//! shares no code with the engine.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapsparse::model::{GatLayer, GcnLayer, HeadMerge, LayerWeights};
use shapsparse::synth::{generate_synthetic, planted_gcn, PlantedTruth, SynthParams};
use shapsparse::{GraphBundle, ModelWeights};

type Matrix = Vec<Vec<f64>>;

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

fn dense(flat: &[f64], rows: usize, cols: usize) -> Matrix {
    (0..rows).map(|r| flat[r * cols..(r + 1) * cols].to_vec()).collect()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Class probabilities of every node. `renorm` recomputes GCN degrees
/// from the mask.
pub fn dense_forward(g: &GraphBundle, w: &ModelWeights, mask: &[f64], renorm: bool) -> Matrix {
    let n = g.num_nodes();
    let f = g.num_features();
    let edges: Vec<(usize, usize)> = g.edges().map(|(_, s, d)| (s, d)).collect();
    let mut h: Matrix = (0..n).map(|i| g.features(i).iter().map(|&x| x as f64).collect()).collect();
    assert_eq!(h[0].len(), f);
    let last = w.layers.len() - 1;
    for (k, layer) in w.layers.iter().enumerate() {
        h = match layer {
            LayerWeights::Gcn(l) => dense_gcn_layer(&h, &edges, mask, l, renorm),
            LayerWeights::Gat(l) => dense_gat_layer(&h, &edges, mask, l, w.leaky_slope),
        };
        if k < last {
            for row in h.iter_mut() {
                for x in row.iter_mut() {
                    *x = x.max(0.0);
                }
            }
        }
    }
    h.iter().map(|row| softmax(row)).collect()
}

fn dense_gcn_layer(h: &Matrix, edges: &[(usize, usize)], mask: &[f64], l: &GcnLayer, renorm: bool) -> Matrix {
    let n = h.len();
    let mut deg = vec![1.0; n];
    for (e, &(_, d)) in edges.iter().enumerate() {
        deg[d] += if renorm { mask[e] } else { 1.0 };
    }
    let mut a = vec![vec![0.0; n]; n];
    for (e, &(s, d)) in edges.iter().enumerate() {
        a[d][s] += mask[e] / (deg[d] * deg[s]).sqrt();
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1.0 / deg[i];
    }
    let xw = matmul(h, &dense(&l.weight, l.in_dim, l.out_dim));
    let mut out = matmul(&a, &xw);
    for row in out.iter_mut() {
        for (x, b) in row.iter_mut().zip(&l.bias) {
            *x += b;
        }
    }
    out
}

fn dense_gat_layer(h: &Matrix, edges: &[(usize, usize)], mask: &[f64], l: &GatLayer, slope: f64) -> Matrix {
    let n = h.len();
    let hd = l.head_dim;
    let leaky = |x: f64| if x >= 0.0 { x } else { slope * x };
    let mut merged = vec![vec![0.0; l.out_dim()]; n];
    for head in 0..l.heads {
        let wh = dense(&l.weight[head * l.in_dim * hd..(head + 1) * l.in_dim * hd], l.in_dim, hd);
        let z = matmul(h, &wh);
        let a_src = &l.att_src[head * hd..(head + 1) * hd];
        let a_dst = &l.att_dst[head * hd..(head + 1) * hd];
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n {
            // (source, mask) pairs that participate in node i's softmax
            let mut senders = vec![(i, 1.0)];
            for (e, &(s, d)) in edges.iter().enumerate() {
                if d == i && mask[e] > 0.0 {
                    senders.push((s, mask[e]));
                }
            }
            let logits: Vec<f64> = senders.iter().map(|&(s, _)| leaky(dot(&z[s], a_src) + dot(&z[i], a_dst))).collect();
            let alpha = softmax(&logits);
            let mut acc = vec![0.0; hd];
            for (&(s, m), a) in senders.iter().zip(&alpha) {
                for (o, x) in acc.iter_mut().zip(&z[s]) {
                    *o += a * m * x;
                }
            }
            match l.merge {
                HeadMerge::Concat => merged[i][head * hd..(head + 1) * hd].copy_from_slice(&acc),
                HeadMerge::Mean => {
                    for (o, x) in merged[i].iter_mut().zip(&acc) {
                        *o += x / l.heads as f64;
                    }
                }
            }
        }
    }
    for row in merged.iter_mut() {
        for (x, b) in row.iter_mut().zip(&l.bias) {
            *x += b;
        }
    }
    merged
}

pub fn random_gcn(rng: &mut ChaCha8Rng, dims: &[usize]) -> ModelWeights {
    let layers = dims
        .windows(2)
        .map(|d| GcnLayer {
            in_dim: d[0],
            out_dim: d[1],
            weight: (0..d[0] * d[1]).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: (0..d[1]).map(|_| rng.random_range(-0.2..0.2)).collect(),
        })
        .collect();
    ModelWeights::gcn(layers).unwrap()
}

/// Two-layer GAT: `heads` concatenated heads, then one mean-merged head.
pub fn random_gat(rng: &mut ChaCha8Rng, in_dim: usize, heads: usize, head_dim: usize, classes: usize) -> ModelWeights {
    let mut layer = |in_dim: usize, heads: usize, head_dim: usize, merge: HeadMerge| {
        let out = if merge == HeadMerge::Concat { heads * head_dim } else { head_dim };
        GatLayer {
            in_dim,
            heads,
            head_dim,
            merge,
            weight: (0..heads * in_dim * head_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            att_src: (0..heads * head_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            att_dst: (0..heads * head_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: (0..out).map(|_| rng.random_range(-0.2..0.2)).collect(),
        }
    };
    let l1 = layer(in_dim, heads, head_dim, HeadMerge::Concat);
    let l2 = layer(heads * head_dim, 1, classes, HeadMerge::Mean);
    ModelWeights::gat(vec![l1, l2], 0.2).unwrap()
}

/// Random directed graph without self-loops or duplicates, random
/// features and labels, every node in the test split.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, edge_prob: f64, features: usize, classes: usize) -> GraphBundle {
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d && rng.random_bool(edge_prob) {
                edges.push((s, d));
            }
        }
    }
    let x = (0..n * features).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes as u32)).collect();
    GraphBundle::from_edges(n, &edges, features, x, classes, labels, None).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const STAR_X: [[f32; 3]; 6] = [
    [0.2, 0.1, 0.0],
    [1.0, 0.0, 0.3],
    [0.0, 1.0, 0.0],
    [0.9, 0.2, 0.1],
    [0.0, 0.4, 1.0],
    [-0.5, 0.0, 0.8],
];

/// Center 0 with five spokes `i -> 0`; the fixture of `oracles/gcn_oracle.py`.
pub fn star() -> (GraphBundle, ModelWeights) {
    let edges: Vec<(usize, usize)> = (1..=5).map(|i| (i, 0)).collect();
    let x = STAR_X.iter().flatten().copied().collect();
    let g = GraphBundle::from_edges(6, &edges, 3, x, 3, vec![0; 6], None).unwrap();
    let w = ModelWeights::gcn(vec![
        GcnLayer {
            in_dim: 3,
            out_dim: 4,
            weight: vec![1.0, -0.5, 0.2, 0.0, 0.3, 1.2, -0.4, 0.5, -0.2, 0.1, 1.0, -0.7],
            bias: vec![0.05, 0.0, -0.1, 0.2],
        },
        GcnLayer {
            in_dim: 4,
            out_dim: 3,
            weight: vec![1.5, -0.3, 0.2, -0.6, 1.1, 0.4, 0.2, -0.8, 1.3, 0.7, 0.5, -1.0],
            bias: vec![0.0, 0.1, -0.1],
        },
    ])
    .unwrap();
    (g, w)
}

/// Planted-partition graph used by the acceptance sweep: three classes,
/// about 30% cross-class edges, degree capped so every computational graph
/// stays small enough for exact enumeration.
pub fn planted_params() -> SynthParams {
    SynthParams {
        nodes_per_class: 40,
        num_classes: 3,
        p_in: 0.08,
        p_out: 0.018,
        num_features: 6,
        signal: 1.0,
        feature_noise: 0.7,
        max_degree: Some(3),
        train_fraction: 0.2,
        val_fraction: 0.2,
    }
}

pub fn planted(seed: u64) -> (GraphBundle, PlantedTruth, ModelWeights) {
    let p = planted_params();
    let (g, truth) = generate_synthetic(seed, &p).unwrap();
    let w = planted_gcn(p.num_features, p.num_classes, 4, 4.0).unwrap();
    (g, truth, w)
}

/// Adds two identical leaves and one zero-feature leaf, each with a single
/// edge into `center`. Under full-graph normalization with zero biases the
/// zero leaf's edge is a dummy player and the twin edges are symmetric.
pub fn with_twins_and_dummy(g: &GraphBundle, center: usize, twin_features: &[f32]) -> GraphBundle {
    let n = g.num_nodes();
    let f = g.num_features();
    let mut edges: Vec<(usize, usize)> = g.edges().map(|(_, s, d)| (s, d)).collect();
    edges.extend([(n, center), (n + 1, center), (n + 2, center)]);
    let mut x = g.raw().features.clone();
    x.extend_from_slice(twin_features);
    x.extend_from_slice(twin_features);
    x.extend(std::iter::repeat_n(0.0, f));
    let mut labels = g.labels().to_vec();
    labels.extend([0, 0, 0]);
    GraphBundle::from_edges(n + 3, &edges, f, x, g.num_classes(), labels, None).unwrap()
}

pub fn zero_biases(w: &ModelWeights) -> ModelWeights {
    let mut w = w.clone();
    for layer in w.layers.iter_mut() {
        match layer {
            LayerWeights::Gcn(l) => l.bias.iter_mut().for_each(|b| *b = 0.0),
            LayerWeights::Gat(l) => l.bias.iter_mut().for_each(|b| *b = 0.0),
        }
    }
    w
}
