//! Immutable node-classification graphs in CSR form, and computational-graph
//! extraction.
//!
//! Edges are directed. Edge `(src, dst)` carries a message from `src` to
//! `dst`. The canonical edge order (by `src`, then `dst`) is the CSR order,
//! and the position of an edge in that order is its [`EdgeId`].

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position of a directed edge in the canonical CSR order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

impl EdgeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Unvalidated graph contents, laid out exactly like the bundle files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawGraph {
    pub num_features: usize,
    pub num_classes: usize,
    pub csr_offsets: Vec<u64>,
    pub csr_targets: Vec<u32>,
    /// Row-major `N x F`.
    pub features: Vec<f32>,
    pub labels: Vec<u32>,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// A validated, immutable node-classification instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBundle {
    raw: RawGraph,
    edge_src: Vec<u32>,
    // reverse index: in-edges of each node, ordered by source
    in_offsets: Vec<usize>,
    in_edges: Vec<(u32, EdgeId)>,
}

impl GraphBundle {
    /// Validates every structural invariant and builds the reverse index.
    pub fn new(raw: RawGraph) -> Result<Self> {
        validate(&raw)?;
        let n = raw.csr_offsets.len() - 1;
        let m = raw.csr_targets.len();

        let mut edge_src = Vec::with_capacity(m);
        for u in 0..n {
            let (lo, hi) = (raw.csr_offsets[u] as usize, raw.csr_offsets[u + 1] as usize);
            edge_src.extend(std::iter::repeat_n(u as u32, hi - lo));
        }

        let mut in_offsets = vec![0usize; n + 1];
        for &t in &raw.csr_targets {
            in_offsets[t as usize + 1] += 1;
        }
        for i in 0..n {
            in_offsets[i + 1] += in_offsets[i];
        }
        let mut cursor = in_offsets.clone();
        let mut in_edges = vec![(0u32, EdgeId(0)); m];
        // edges visited in canonical order, so each in-list ends up sorted by source
        for (e, (&src, &dst)) in edge_src.iter().zip(&raw.csr_targets).enumerate() {
            let slot = &mut cursor[dst as usize];
            in_edges[*slot] = (src, EdgeId(e as u32));
            *slot += 1;
        }

        Ok(Self {
            raw,
            edge_src,
            in_offsets,
            in_edges,
        })
    }

    /// Builds a graph from an arbitrary edge list. Edges are sorted into
    /// canonical order; duplicates and self-loops are rejected.
    #[allow(clippy::too_many_arguments)]
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(usize, usize)],
        num_features: usize,
        features: Vec<f32>,
        num_classes: usize,
        labels: Vec<u32>,
        splits: Option<(Vec<bool>, Vec<bool>, Vec<bool>)>,
    ) -> Result<Self> {
        let mut sorted = edges.to_vec();
        sorted.sort_unstable();
        let mut csr_offsets = vec![0u64; num_nodes + 1];
        let mut csr_targets = Vec::with_capacity(sorted.len());
        for &(s, d) in &sorted {
            if s >= num_nodes || d >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({s}, {d}) references a node outside [0, {num_nodes})"
                )));
            }
            csr_offsets[s + 1] += 1;
            csr_targets.push(d as u32);
        }
        for i in 0..num_nodes {
            csr_offsets[i + 1] += csr_offsets[i];
        }
        let (train_mask, val_mask, test_mask) = splits.unwrap_or_else(|| {
            (
                vec![false; num_nodes],
                vec![false; num_nodes],
                vec![true; num_nodes],
            )
        });
        Self::new(RawGraph {
            num_features,
            num_classes,
            csr_offsets,
            csr_targets,
            features,
            labels,
            train_mask,
            val_mask,
            test_mask,
        })
    }

    pub fn raw(&self) -> &RawGraph {
        &self.raw
    }

    pub fn num_nodes(&self) -> usize {
        self.raw.csr_offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.raw.csr_targets.len()
    }

    pub fn num_features(&self) -> usize {
        self.raw.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.raw.num_classes
    }

    pub fn features(&self, node: usize) -> &[f32] {
        let f = self.raw.num_features;
        &self.raw.features[node * f..(node + 1) * f]
    }

    pub fn labels(&self) -> &[u32] {
        &self.raw.labels
    }

    pub fn mask(&self, split: Split) -> &[bool] {
        match split {
            Split::Train => &self.raw.train_mask,
            Split::Val => &self.raw.val_mask,
            Split::Test => &self.raw.test_mask,
        }
    }

    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        self.mask(split)
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    /// `(src, dst)` of an edge.
    pub fn endpoints(&self, e: EdgeId) -> (usize, usize) {
        (
            self.edge_src[e.index()] as usize,
            self.raw.csr_targets[e.index()] as usize,
        )
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, usize, usize)> + '_ {
        self.edge_src
            .iter()
            .zip(&self.raw.csr_targets)
            .enumerate()
            .map(|(e, (&s, &d))| (EdgeId(e as u32), s as usize, d as usize))
    }

    /// Out-neighbors of `node` with their edge ids, in canonical order.
    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = (usize, EdgeId)> + '_ {
        let lo = self.raw.csr_offsets[node] as usize;
        let hi = self.raw.csr_offsets[node + 1] as usize;
        (lo..hi).map(|e| (self.raw.csr_targets[e] as usize, EdgeId(e as u32)))
    }

    /// In-edges of `node` as `(src, edge)`, sorted by source.
    pub fn in_edges(&self, node: usize) -> &[(u32, EdgeId)] {
        &self.in_edges[self.in_offsets[node]..self.in_offsets[node + 1]]
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.in_offsets[node + 1] - self.in_offsets[node]
    }

    pub fn find_edge(&self, src: usize, dst: usize) -> Option<EdgeId> {
        let lo = self.raw.csr_offsets[src] as usize;
        let hi = self.raw.csr_offsets[src + 1] as usize;
        self.raw.csr_targets[lo..hi]
            .binary_search(&(dst as u32))
            .ok()
            .map(|i| EdgeId((lo + i) as u32))
    }

    pub(crate) fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.num_nodes() {
            return Err(Error::NodeOutOfRange {
                node,
                num_nodes: self.num_nodes(),
            });
        }
        Ok(())
    }

    /// New canonical bundle holding only the given edges. `kept` must be
    /// sorted and in range.
    pub fn with_edges(&self, kept: &[EdgeId]) -> Result<Self> {
        let n = self.num_nodes();
        let mut csr_offsets = vec![0u64; n + 1];
        let mut csr_targets = Vec::with_capacity(kept.len());
        for &e in kept {
            if e.index() >= self.num_edges() {
                return Err(Error::InvalidGraph(format!("edge {e} out of range")));
            }
            let (s, d) = self.endpoints(e);
            csr_offsets[s + 1] += 1;
            csr_targets.push(d as u32);
        }
        for i in 0..n {
            csr_offsets[i + 1] += csr_offsets[i];
        }
        Self::new(RawGraph {
            csr_offsets,
            csr_targets,
            ..self.raw.clone()
        })
    }
}

fn validate(raw: &RawGraph) -> Result<()> {
    let bad = |file: &str, record: usize, msg: String| {
        Err(Error::format(file, format!("record {record}"), msg))
    };
    if raw.csr_offsets.is_empty() {
        return bad("csr_offsets.u64", 0, "offsets array is empty".into());
    }
    let n = raw.csr_offsets.len() - 1;
    let m = raw.csr_targets.len();
    if raw.csr_offsets[0] != 0 {
        return bad("csr_offsets.u64", 0, format!("first offset is {}, expected 0", raw.csr_offsets[0]));
    }
    for i in 0..n {
        if raw.csr_offsets[i + 1] < raw.csr_offsets[i] {
            return bad("csr_offsets.u64", i + 1, "offsets decrease".into());
        }
    }
    if raw.csr_offsets[n] != m as u64 {
        return bad(
            "csr_offsets.u64",
            n,
            format!("last offset {} does not equal edge count {m}", raw.csr_offsets[n]),
        );
    }
    if m > u32::MAX as usize {
        return Err(Error::InvalidGraph(format!("{m} edges exceed the u32 edge id range")));
    }
    for u in 0..n {
        let (lo, hi) = (raw.csr_offsets[u] as usize, raw.csr_offsets[u + 1] as usize);
        for e in lo..hi {
            let t = raw.csr_targets[e] as usize;
            if t >= n {
                return bad("csr_targets.u32", e, format!("target {t} out of range [0, {n})"));
            }
            if t == u {
                return bad("csr_targets.u32", e, format!("self-loop on node {u}"));
            }
            if e > lo && raw.csr_targets[e - 1] >= raw.csr_targets[e] {
                let what = if raw.csr_targets[e - 1] == raw.csr_targets[e] {
                    "duplicate edge"
                } else {
                    "non-canonical edge order"
                };
                return bad("csr_targets.u32", e, format!("{what} ({u}, {t})"));
            }
        }
    }
    if raw.features.len() != n * raw.num_features {
        return bad(
            "features.f32",
            raw.features.len().min(n * raw.num_features),
            format!("expected {} values ({n} x {})", n * raw.num_features, raw.num_features),
        );
    }
    if let Some(i) = raw.features.iter().position(|x| !x.is_finite()) {
        return bad("features.f32", i, "non-finite feature value".into());
    }
    if raw.labels.len() != n {
        return bad("labels.u32", raw.labels.len().min(n), format!("expected {n} labels"));
    }
    if let Some(i) = raw.labels.iter().position(|&y| y as usize >= raw.num_classes) {
        return bad(
            "labels.u32",
            i,
            format!("label {} outside [0, {})", raw.labels[i], raw.num_classes),
        );
    }
    for (file, mask) in [
        ("train_mask.u8", &raw.train_mask),
        ("val_mask.u8", &raw.val_mask),
        ("test_mask.u8", &raw.test_mask),
    ] {
        if mask.len() != n {
            return bad(file, mask.len().min(n), format!("expected {n} entries"));
        }
    }
    for i in 0..n {
        let count = raw.train_mask[i] as u8 + raw.val_mask[i] as u8 + raw.test_mask[i] as u8;
        if count > 1 {
            return bad("test_mask.u8", i, format!("node {i} is in more than one split"));
        }
    }
    Ok(())
}

/// The `l`-hop subgraph that determines an `l`-layer model's output at
/// `center`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputationalGraph {
    pub center: usize,
    /// Sorted node ids within `l` reverse hops of the center.
    pub nodes: Vec<usize>,
    /// Sorted ids of every edge on a walk of length at most `l` ending at
    /// the center.
    pub edge_ids: Vec<EdgeId>,
}

impl ComputationalGraph {
    pub fn num_players(&self) -> usize {
        self.edge_ids.len()
    }
}

/// Extracts the computational graph of `center` for an `layers`-layer model.
///
/// An edge `s -> d` belongs to it iff `d` reaches the center in at most
/// `layers - 1` hops.
pub fn extract_computational_graph(
    g: &GraphBundle,
    center: usize,
    layers: usize,
) -> Result<ComputationalGraph> {
    g.check_node(center)?;
    if layers == 0 {
        return Err(Error::arg("layers", "must be at least 1"));
    }
    let hops = reverse_hops(g, center, layers);
    let mut nodes = Vec::new();
    let mut edge_ids = Vec::new();
    for (u, &h) in hops.iter().enumerate() {
        if h > layers {
            continue;
        }
        nodes.push(u);
        if h < layers {
            edge_ids.extend(g.in_edges(u).iter().map(|&(_, e)| e));
        }
    }
    edge_ids.sort_unstable();
    Ok(ComputationalGraph {
        center,
        nodes,
        edge_ids,
    })
}

/// Hop distance from every node to `center` along edge direction, capped
/// at `limit + 1` for unreached nodes.
fn reverse_hops(g: &GraphBundle, center: usize, limit: usize) -> Vec<usize> {
    let mut hops = vec![limit + 1; g.num_nodes()];
    hops[center] = 0;
    let mut queue = VecDeque::from([center]);
    while let Some(u) = queue.pop_front() {
        if hops[u] == limit {
            continue;
        }
        for &(src, _) in g.in_edges(u) {
            let s = src as usize;
            if hops[s] > hops[u] + 1 {
                hops[s] = hops[u] + 1;
                queue.push_back(s);
            }
        }
    }
    hops
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn bare(n: usize, edges: &[(usize, usize)]) -> GraphBundle {
        GraphBundle::from_edges(n, edges, 1, vec![0.0; n], 1, vec![0; n], None).unwrap()
    }

    #[test]
    fn path_toward_center() {
        // a=0 -> b=1 -> c=2
        let g = bare(3, &[(0, 1), (1, 2)]);
        let cg = extract_computational_graph(&g, 2, 2).unwrap();
        assert_eq!(cg.nodes, vec![0, 1, 2]);
        assert_eq!(cg.edge_ids, vec![EdgeId(0), EdgeId(1)]);
        let cg1 = extract_computational_graph(&g, 2, 1).unwrap();
        assert_eq!(cg1.nodes, vec![1, 2]);
        assert_eq!(cg1.edge_ids, vec![EdgeId(1)]);
    }

    #[test]
    fn isolated_node() {
        let g = bare(3, &[(0, 1)]);
        let cg = extract_computational_graph(&g, 2, 2).unwrap();
        assert_eq!(cg.nodes, vec![2]);
        assert!(cg.edge_ids.is_empty());
    }

    #[test]
    fn star_excludes_spoke_to_spoke_at_one_layer() {
        let g = bare(5, &[(1, 0), (2, 0), (3, 0), (4, 0), (1, 2), (3, 4)]);
        let cg = extract_computational_graph(&g, 0, 1).unwrap();
        assert_eq!(cg.nodes, vec![0, 1, 2, 3, 4]);
        let spokes: Vec<_> = [1, 2, 3, 4].iter().map(|&s| g.find_edge(s, 0).unwrap()).collect();
        assert_eq!(cg.edge_ids, spokes);
    }

    #[test]
    fn rejects_out_of_range_center() {
        let g = bare(2, &[]);
        assert!(matches!(
            extract_computational_graph(&g, 5, 2),
            Err(Error::NodeOutOfRange { node: 5, .. })
        ));
    }

    #[test]
    fn validation_errors_name_the_file() {
        let mut raw = bare(3, &[(0, 1), (0, 2)]).raw().clone();
        raw.csr_targets.swap(0, 1);
        let err = GraphBundle::new(raw).unwrap_err().to_string();
        assert!(err.contains("csr_targets.u32") && err.contains("record 1"), "{err}");

        let mut raw = bare(2, &[(0, 1)]).raw().clone();
        raw.csr_offsets[2] = 2;
        let err = GraphBundle::new(raw).unwrap_err().to_string();
        assert!(err.contains("csr_offsets.u64"), "{err}");

        let mut raw = bare(2, &[(0, 1)]).raw().clone();
        raw.train_mask[0] = true;
        assert!(GraphBundle::new(raw).is_err());

        assert!(GraphBundle::from_edges(2, &[(1, 1)], 1, vec![0.0; 2], 1, vec![0; 2], None).is_err());
        assert!(GraphBundle::from_edges(2, &[(0, 1), (0, 1)], 1, vec![0.0; 2], 1, vec![0; 2], None).is_err());
    }

    #[test]
    fn in_edges_sorted_by_source() {
        let g = bare(4, &[(3, 0), (1, 0), (2, 0), (0, 3)]);
        let srcs: Vec<u32> = g.in_edges(0).iter().map(|&(s, _)| s).collect();
        assert_eq!(srcs, vec![1, 2, 3]);
        for &(s, e) in g.in_edges(0) {
            assert_eq!(g.endpoints(e), (s as usize, 0));
        }
    }

    #[test]
    fn with_edges_keeps_subset() {
        let g = bare(3, &[(0, 1), (1, 2), (2, 0)]);
        let sub = g.with_edges(&[EdgeId(0), EdgeId(2)]).unwrap();
        assert_eq!(sub.num_edges(), 2);
        assert_eq!(sub.endpoints(EdgeId(1)), (2, 0));
    }
}
