//! Forward-only GCN/GAT inference under per-edge masks.
//!
//! A [`Plan`] fixes, for a set of target nodes, which node representations
//! every layer must produce and which edges feed them. Evaluating a plan
//! under a mask touches only the plan's edges, so one plan can be reused
//! for thousands of coalitions. The full-graph forward is the same code
//! run on the plan for every node, which makes per-node and full-graph
//! outputs bit-identical.
//!
//! Masking:
//! - GCN, [`Normalization::FullGraph`]: the normalized adjacency is built
//!   once on the full graph and each edge coefficient is multiplied by its
//!   mask value.
//! - GCN, [`Normalization::PerMask`]: degrees are recomputed from the mask,
//!   as if the masked graph were the input graph. Degrees of frontier nodes
//!   then depend on edges just outside the computational graph; the plan
//!   carries those as non-player slots.
//! - GAT: an edge with mask 0 is left out of the neighbor softmax; any other
//!   mask value scales its post-softmax coefficient.
//!
//! Self-loops are always present with weight 1.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, GraphBundle};
use crate::model::{GatLayer, GcnLayer, HeadMerge, LayerWeights, ModelKind, ModelWeights};

/// One value per directed edge of the full graph: 0 removes the edge, 1
/// keeps it.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMask {
    values: Vec<f64>,
}

impl EdgeMask {
    pub fn ones(num_edges: usize) -> Self {
        Self { values: vec![1.0; num_edges] }
    }

    pub fn zeros(num_edges: usize) -> Self {
        Self { values: vec![0.0; num_edges] }
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg("mask", format!("entry {i} is not finite")));
        }
        Ok(Self { values })
    }

    /// 1 on the kept edges, 0 elsewhere.
    pub fn from_kept(num_edges: usize, kept: &[EdgeId]) -> Self {
        let mut m = Self::zeros(num_edges);
        for &e in kept {
            m.values[e.index()] = 1.0;
        }
        m
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, e: EdgeId) -> f64 {
        self.values[e.index()]
    }

    pub fn set(&mut self, e: EdgeId, value: f64) {
        self.values[e.index()] = value;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub predicted_class: usize,
}

impl Prediction {
    pub fn from_probs(probs: Vec<f64>) -> Self {
        Self {
            predicted_class: argmax(&probs),
            probs,
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Normalize on the full graph, then scale coefficients by the mask.
    #[default]
    FullGraph,
    /// Recompute degrees from the masked graph.
    PerMask,
}

#[derive(Debug, Clone, Copy)]
struct PlanEdge {
    input: usize,
    slot: usize,
}

#[derive(Debug, Clone)]
struct LayerPlan {
    /// Global ids of nodes whose previous-layer representation is read.
    inputs: Vec<usize>,
    /// Local input index of each output node's own representation.
    out_self: Vec<usize>,
    row_start: Vec<usize>,
    edges: Vec<PlanEdge>,
    /// Index into the degree table for each input (per-mask GCN only).
    input_degree: Vec<usize>,
}

#[derive(Debug, Clone)]
struct DegreePlan {
    start: Vec<usize>,
    slots: Vec<usize>,
}

/// Precomputed evaluation schedule for a fixed set of target nodes.
#[derive(Debug, Clone)]
pub struct Plan {
    targets: Vec<usize>,
    slots: Vec<EdgeId>,
    layers: Vec<LayerPlan>,
    degrees: Option<DegreePlan>,
    normalization: Normalization,
}

impl Plan {
    /// Sorted, deduplicated target nodes, in output order.
    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Every edge whose mask value the plan reads, sorted.
    pub fn slots(&self) -> &[EdgeId] {
        &self.slots
    }

    pub fn slot_of(&self, e: EdgeId) -> Option<usize> {
        self.slots.binary_search(&e).ok()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Gathers the plan's slot values out of a full-graph mask.
    pub fn gather(&self, mask: &EdgeMask) -> Vec<f64> {
        self.slots.iter().map(|&e| mask.get(e)).collect()
    }
}

/// Per-node transformed features: `H W` for GCN, per-head `H W_h` plus the
/// attention scalars for GAT.
#[derive(Debug, Clone, Default)]
struct Transformed {
    width: usize,
    heads: usize,
    values: Vec<f64>,
    att_src: Vec<f64>,
    att_dst: Vec<f64>,
}

impl Transformed {
    fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.width..(r + 1) * self.width]
    }
}

fn transform_rows<'r>(layer: &LayerWeights, rows: impl Iterator<Item = &'r [f64]>, capacity: usize) -> Transformed {
    match layer {
        LayerWeights::Gcn(l) => {
            let mut values = Vec::with_capacity(capacity * l.out_dim);
            for x in rows {
                let start = values.len();
                values.resize(start + l.out_dim, 0.0);
                let out = &mut values[start..];
                for (i, &xi) in x.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    let w = &l.weight[i * l.out_dim..(i + 1) * l.out_dim];
                    for (o, &wv) in out.iter_mut().zip(w) {
                        *o += xi * wv;
                    }
                }
            }
            Transformed {
                width: l.out_dim,
                heads: 1,
                values,
                ..Default::default()
            }
        }
        LayerWeights::Gat(l) => {
            let width = l.heads * l.head_dim;
            let mut t = Transformed {
                width,
                heads: l.heads,
                values: Vec::with_capacity(capacity * width),
                att_src: Vec::with_capacity(capacity * l.heads),
                att_dst: Vec::with_capacity(capacity * l.heads),
            };
            let block = l.in_dim * l.head_dim;
            for x in rows {
                let start = t.values.len();
                t.values.resize(start + width, 0.0);
                for h in 0..l.heads {
                    let out = &mut t.values[start + h * l.head_dim..start + (h + 1) * l.head_dim];
                    let wh = &l.weight[h * block..(h + 1) * block];
                    for (i, &xi) in x.iter().enumerate() {
                        if xi == 0.0 {
                            continue;
                        }
                        for (o, &wv) in out.iter_mut().zip(&wh[i * l.head_dim..(i + 1) * l.head_dim]) {
                            *o += xi * wv;
                        }
                    }
                    let out = &t.values[start + h * l.head_dim..start + (h + 1) * l.head_dim];
                    let a_src = &l.att_src[h * l.head_dim..(h + 1) * l.head_dim];
                    let a_dst = &l.att_dst[h * l.head_dim..(h + 1) * l.head_dim];
                    t.att_src.push(dot(out, a_src));
                    t.att_dst.push(dot(out, a_dst));
                }
            }
            t
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn gcn_coefficient(mask: f64, deg_src: f64, deg_dst: f64) -> f64 {
    mask * (1.0 / (deg_src * deg_dst).sqrt())
}

#[inline]
fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Inference over one graph with one model. Immutable and `Sync`; any
/// number of threads may evaluate plans concurrently.
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    graph: &'a GraphBundle,
    model: &'a ModelWeights,
    normalization: Normalization,
    full_degree: Vec<f64>,
    first: Transformed,
}

impl<'a> Engine<'a> {
    pub fn new(graph: &'a GraphBundle, model: &'a ModelWeights, normalization: Normalization) -> Result<Self> {
        model.validate()?;
        if model.in_dim() != graph.num_features() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} input features, graph has {}",
                model.in_dim(),
                graph.num_features()
            )));
        }
        if model.out_dim() != graph.num_classes() {
            return Err(Error::DimensionMismatch(format!(
                "model outputs {} classes, graph has {}",
                model.out_dim(),
                graph.num_classes()
            )));
        }
        let n = graph.num_nodes();
        let full_degree = (0..n).map(|i| 1.0 + graph.in_degree(i) as f64).collect();
        let features: Vec<Vec<f64>> = (0..n)
            .map(|i| graph.features(i).iter().map(|&x| x as f64).collect())
            .collect();
        let first = transform_rows(&model.layers[0], features.iter().map(Vec::as_slice), n);
        Ok(Self {
            graph,
            model,
            normalization,
            full_degree,
            first,
        })
    }

    pub fn graph(&self) -> &'a GraphBundle {
        self.graph
    }

    pub fn model(&self) -> &'a ModelWeights {
        self.model
    }

    pub fn num_layers(&self) -> usize {
        self.model.num_layers()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn plan(&self, targets: &[usize]) -> Result<Plan> {
        self.plan_with(targets, self.normalization)
    }

    pub fn plan_with(&self, targets: &[usize], normalization: Normalization) -> Result<Plan> {
        let g = self.graph;
        for &t in targets {
            g.check_node(t)?;
        }
        let layers = self.num_layers();
        // needed[k] = nodes whose layer-k output is required (needed[layers] = targets)
        let mut needed: Vec<Vec<usize>> = vec![Vec::new(); layers + 1];
        needed[layers] = targets.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        for k in (0..layers).rev() {
            let mut set: BTreeSet<usize> = needed[k + 1].iter().copied().collect();
            for &u in &needed[k + 1] {
                set.extend(g.in_edges(u).iter().map(|&(s, _)| s as usize));
            }
            needed[k] = set.into_iter().collect();
        }

        let per_mask = normalization == Normalization::PerMask && self.model.kind == ModelKind::Gcn;
        let mut slot_set: BTreeSet<EdgeId> = BTreeSet::new();
        for outputs in &needed[1..] {
            for &u in outputs {
                slot_set.extend(g.in_edges(u).iter().map(|&(_, e)| e));
            }
        }
        if per_mask {
            for &u in &needed[0] {
                slot_set.extend(g.in_edges(u).iter().map(|&(_, e)| e));
            }
        }
        let slots: Vec<EdgeId> = slot_set.into_iter().collect();
        let slot = |e: EdgeId| slots.binary_search(&e).expect("edge registered as slot");
        let local = |list: &[usize], u: usize| list.binary_search(&u).expect("node registered");

        let degrees = per_mask.then(|| {
            let mut start = vec![0];
            let mut deg_slots = Vec::new();
            for &u in &needed[0] {
                deg_slots.extend(g.in_edges(u).iter().map(|&(_, e)| slot(e)));
                start.push(deg_slots.len());
            }
            DegreePlan { start, slots: deg_slots }
        });

        let mut layer_plans = Vec::with_capacity(layers);
        for k in 0..layers {
            let inputs = &needed[k];
            let outputs = &needed[k + 1];
            let mut row_start = vec![0];
            let mut edges = Vec::new();
            let mut out_self = Vec::with_capacity(outputs.len());
            for &u in outputs {
                out_self.push(local(inputs, u));
                for &(s, e) in g.in_edges(u) {
                    edges.push(PlanEdge {
                        input: local(inputs, s as usize),
                        slot: slot(e),
                    });
                }
                row_start.push(edges.len());
            }
            let input_degree = if per_mask {
                inputs.iter().map(|&u| local(&needed[0], u)).collect()
            } else {
                Vec::new()
            };
            layer_plans.push(LayerPlan {
                inputs: inputs.clone(),
                out_self,
                row_start,
                edges,
                input_degree,
            });
        }

        Ok(Plan {
            targets: needed[layers].clone(),
            slots,
            layers: layer_plans,
            degrees,
            normalization,
        })
    }

    /// Plan covering every node of the graph.
    pub fn plan_all(&self, normalization: Normalization) -> Plan {
        let all: Vec<usize> = (0..self.graph.num_nodes()).collect();
        self.plan_with(&all, normalization).expect("all nodes are in range")
    }

    /// Class probabilities of every plan target, in `plan.targets()` order.
    /// `slot_mask` holds one value per `plan.slots()` entry.
    pub fn evaluate(&self, plan: &Plan, slot_mask: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(slot_mask.len(), plan.slots.len(), "slot mask length");
        let degree_table: Option<Vec<f64>> = plan.degrees.as_ref().map(|d| {
            (0..d.start.len() - 1)
                .map(|i| {
                    let mut deg = 1.0;
                    for &s in &d.slots[d.start[i]..d.start[i + 1]] {
                        deg += slot_mask[s];
                    }
                    deg
                })
                .collect()
        });

        let last = plan.layers.len() - 1;
        let mut hidden: Vec<Vec<f64>> = Vec::new();
        for (k, lp) in plan.layers.iter().enumerate() {
            let computed;
            let (t, rows): (&Transformed, Vec<usize>) = if k == 0 {
                (&self.first, lp.inputs.clone())
            } else {
                computed = transform_rows(&self.model.layers[k], hidden.iter().map(Vec::as_slice), hidden.len());
                (&computed, (0..lp.inputs.len()).collect())
            };
            let degree = |input: usize| -> f64 {
                match &degree_table {
                    Some(table) => table[lp.input_degree[input]],
                    None => self.full_degree[lp.inputs[input]],
                }
            };

            let mut outputs = Vec::with_capacity(lp.out_self.len());
            for (o, &self_input) in lp.out_self.iter().enumerate() {
                let edges = &lp.edges[lp.row_start[o]..lp.row_start[o + 1]];
                let mut out = match &self.model.layers[k] {
                    LayerWeights::Gcn(l) => gcn_row(l, t, &rows, self_input, edges, slot_mask, &degree),
                    LayerWeights::Gat(l) => gat_row(l, t, &rows, self_input, edges, slot_mask, self.model.leaky_slope),
                };
                if k == last {
                    softmax_in_place(&mut out);
                } else {
                    for x in out.iter_mut() {
                        *x = x.max(0.0);
                    }
                }
                outputs.push(out);
            }
            hidden = outputs;
        }
        hidden
    }

    /// Predictions at `targets` under `mask` (all ones when absent).
    pub fn forward(&self, mask: Option<&EdgeMask>, targets: &[usize]) -> Result<BTreeMap<usize, Prediction>> {
        let plan = self.plan(targets)?;
        self.forward_plan(&plan, mask)
    }

    pub fn forward_plan(&self, plan: &Plan, mask: Option<&EdgeMask>) -> Result<BTreeMap<usize, Prediction>> {
        let slot_mask = match mask {
            Some(m) => {
                if m.len() != self.graph.num_edges() {
                    return Err(Error::DimensionMismatch(format!(
                        "mask has {} entries, graph has {} edges",
                        m.len(),
                        self.graph.num_edges()
                    )));
                }
                plan.gather(m)
            }
            None => vec![1.0; plan.slots.len()],
        };
        let probs = self.evaluate(plan, &slot_mask);
        Ok(plan
            .targets
            .iter()
            .copied()
            .zip(probs.into_iter().map(Prediction::from_probs))
            .collect())
    }

    /// Predictions for every node, indexed by node id.
    pub fn predict_all(&self, mask: Option<&EdgeMask>) -> Result<Vec<Prediction>> {
        let plan = self.plan_all(self.normalization);
        Ok(self.forward_plan(&plan, mask)?.into_values().collect())
    }
}

fn gcn_row(
    layer: &GcnLayer,
    t: &Transformed,
    rows: &[usize],
    self_input: usize,
    edges: &[PlanEdge],
    slot_mask: &[f64],
    degree: &dyn Fn(usize) -> f64,
) -> Vec<f64> {
    let deg_self = degree(self_input);
    let self_coef = 1.0 / deg_self;
    let mut acc: Vec<f64> = t.row(rows[self_input]).iter().map(|&x| self_coef * x).collect();
    for pe in edges {
        let m = slot_mask[pe.slot];
        if m == 0.0 {
            continue;
        }
        let c = gcn_coefficient(m, degree(pe.input), deg_self);
        for (a, &x) in acc.iter_mut().zip(t.row(rows[pe.input])) {
            *a += c * x;
        }
    }
    for (a, &b) in acc.iter_mut().zip(&layer.bias) {
        *a += b;
    }
    acc
}

fn gat_row(
    layer: &GatLayer,
    t: &Transformed,
    rows: &[usize],
    self_input: usize,
    edges: &[PlanEdge],
    slot_mask: &[f64],
    slope: f64,
) -> Vec<f64> {
    let hd = layer.head_dim;
    let heads = t.heads;
    let self_row = rows[self_input];
    let mut merged = vec![0.0; layer.out_dim()];
    let mut logits = Vec::with_capacity(edges.len() + 1);
    for h in 0..heads {
        let dst = t.att_dst[self_row * heads + h];
        logits.clear();
        logits.push(leaky_relu(t.att_src[self_row * heads + h] + dst, slope));
        for pe in edges {
            if slot_mask[pe.slot] > 0.0 {
                logits.push(leaky_relu(t.att_src[rows[pe.input] * heads + h] + dst, slope));
            }
        }
        softmax_in_place(&mut logits);

        let mut acc = vec![0.0; hd];
        let head = |r: usize| &t.row(r)[h * hd..(h + 1) * hd];
        for (a, &x) in acc.iter_mut().zip(head(self_row)) {
            *a += logits[0] * x;
        }
        let mut next = 1;
        for pe in edges {
            let m = slot_mask[pe.slot];
            if m <= 0.0 {
                continue;
            }
            let c = logits[next] * m;
            next += 1;
            for (a, &x) in acc.iter_mut().zip(head(rows[pe.input])) {
                *a += c * x;
            }
        }
        match layer.merge {
            HeadMerge::Concat => merged[h * hd..(h + 1) * hd].copy_from_slice(&acc),
            HeadMerge::Mean => {
                for (m, a) in merged.iter_mut().zip(&acc) {
                    *m += a;
                }
            }
        }
    }
    if layer.merge == HeadMerge::Mean {
        for m in merged.iter_mut() {
            *m /= heads as f64;
        }
    }
    for (m, &b) in merged.iter_mut().zip(&layer.bias) {
        *m += b;
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GcnLayer;

    fn two_node() -> (GraphBundle, ModelWeights) {
        let g = GraphBundle::from_edges(2, &[(0, 1), (1, 0)], 2, vec![1.0, 0.0, 0.5, 2.0], 2, vec![0, 1], None)
            .unwrap();
        let w = ModelWeights::gcn(vec![
            GcnLayer { in_dim: 2, out_dim: 2, weight: vec![1.0, -1.0, 0.5, 2.0], bias: vec![0.1, -0.2] },
            GcnLayer { in_dim: 2, out_dim: 2, weight: vec![2.0, -1.0, -1.0, 1.0], bias: vec![0.0, 0.3] },
        ])
        .unwrap();
        (g, w)
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    // Frozen from tests/oracles/gcn_oracle.py (dense numpy reference).
    #[test]
    fn two_node_matches_dense_reference() {
        let (g, w) = two_node();
        let engine = Engine::new(&g, &w, Normalization::FullGraph).unwrap();
        let out = engine.predict_all(None).unwrap();
        assert_close(&out[0].probs, &[0.8388910504234147, 0.1611089495765852], 1e-12);
        assert_close(&out[1].probs, &[0.8388910504234147, 0.1611089495765852], 1e-12);

        let mut mask = EdgeMask::ones(2);
        mask.set(EdgeId(0), 0.0);
        let out = engine.predict_all(Some(&mask)).unwrap();
        assert_close(&out[0].probs, &[0.598687660112452, 0.401312339887548], 1e-12);
        assert_close(&out[1].probs, &[0.36008390326226586, 0.6399160967377341], 1e-12);

        let renorm = Engine::new(&g, &w, Normalization::PerMask).unwrap();
        let out = renorm.predict_all(Some(&mask)).unwrap();
        assert_close(&out[0].probs, &[0.29803435842422005, 0.70196564157578], 1e-12);
        assert_close(&out[1].probs, &[0.10909682119561298, 0.8909031788043871], 1e-12);
    }

    #[test]
    fn single_node_uses_self_loop_only() {
        let g = GraphBundle::from_edges(1, &[], 2, vec![0.5, -1.0], 2, vec![0], None).unwrap();
        let w = ModelWeights::gcn(vec![
            GcnLayer { in_dim: 2, out_dim: 2, weight: vec![1.0, 0.0, 0.0, 1.0], bias: vec![0.0; 2] },
            GcnLayer { in_dim: 2, out_dim: 2, weight: vec![3.0, 1.0, -2.0, 0.5], bias: vec![0.0; 2] },
        ])
        .unwrap();
        let engine = Engine::new(&g, &w, Normalization::FullGraph).unwrap();
        let p = &engine.predict_all(None).unwrap()[0];
        // relu([0.5, -1]) = [0.5, 0]; logits = [1.5, 0.5]
        let z = (1.5f64).exp() + (0.5f64).exp();
        assert_close(&p.probs, &[(1.5f64).exp() / z, (0.5f64).exp() / z], 1e-15);
        assert_eq!(p.predicted_class, 0);
    }

    #[test]
    fn ones_mask_is_identity() {
        let (g, w) = two_node();
        for norm in [Normalization::FullGraph, Normalization::PerMask] {
            let engine = Engine::new(&g, &w, norm).unwrap();
            let a = engine.predict_all(None).unwrap();
            let b = engine.predict_all(Some(&EdgeMask::ones(2))).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn dimension_checks() {
        let (g, w) = two_node();
        let g3 = GraphBundle::from_edges(1, &[], 3, vec![0.0; 3], 2, vec![0], None).unwrap();
        assert!(matches!(Engine::new(&g3, &w, Normalization::FullGraph), Err(Error::DimensionMismatch(_))));
        let engine = Engine::new(&g, &w, Normalization::FullGraph).unwrap();
        assert!(engine.forward(Some(&EdgeMask::ones(5)), &[0]).is_err());
        assert!(engine.forward(None, &[9]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}
