//! Per-node signed edge attributions.
//!
//! The players of node `v` are the directed edges of its computational
//! graph. A coalition keeps its players and masks every other player to 0;
//! edges outside the computational graph stay at 1. The value of a
//! coalition is the model's probability for the target class at `v`.

mod baselines;
mod exact;
mod kernel;

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, Plan};
use crate::error::{Error, Result};
use crate::graph::{extract_computational_graph, EdgeId, Split};
use crate::io;

pub use baselines::{random_baseline, saliency_baseline, RandomScores, Saliency, DEFAULT_SALIENCY_STEP};
pub use exact::{exact_shapley, shapley_from_table, ExactShapley, DEFAULT_PLAYER_LIMIT};
pub use kernel::{
    default_sample_count, kernel_shapley, kernel_weight, sample_coalitions, solve_constrained_wls, Coalition,
    CoalitionSample, KernelShapley, RIDGE_LAMBDA,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Kernel,
    Saliency,
    Random,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Kernel => "kernel",
            Method::Saliency => "saliency",
            Method::Random => "random",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Method::Exact),
            "kernel" => Ok(Method::Kernel),
            "saliency" => Ok(Method::Saliency),
            "random" => Ok(Method::Random),
            other => Err(format!("unknown explainer `{other}` (exact, kernel, saliency, random)")),
        }
    }
}

/// The players of one node, in canonical edge order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayerSet {
    pub center: usize,
    pub players: Vec<EdgeId>,
}

impl PlayerSet {
    pub fn of(engine: &Engine<'_>, center: usize) -> Result<Self> {
        let cg = extract_computational_graph(engine.graph(), center, engine.num_layers())?;
        Ok(Self {
            center,
            players: cg.edge_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.players.len()
    }

    pub fn is_empty(&self) -> bool {
        self.players.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub node: usize,
    pub target: usize,
    /// Value of the empty coalition (0 for the baselines).
    pub base: f64,
    pub method: Method,
    /// Coalitions (or forward passes) spent on this node.
    pub samples: usize,
    /// One score per player, sorted by edge id.
    pub scores: Vec<(EdgeId, f64)>,
    /// Set when the surrogate system was singular and had to be ridge
    /// regularized.
    pub regularized: bool,
}

impl Explanation {
    pub fn score_sum(&self) -> f64 {
        self.scores.iter().map(|&(_, s)| s).sum()
    }

    pub fn score_of(&self, e: EdgeId) -> Option<f64> {
        self.scores
            .binary_search_by_key(&e, |&(id, _)| id)
            .ok()
            .map(|i| self.scores[i].1)
    }
}

/// Cooperative game of one node: coalition value = target-class
/// probability under the coalition's mask.
pub struct NodeGame<'e, 'a> {
    engine: &'e Engine<'a>,
    plan: Plan,
    players: PlayerSet,
    player_slots: Vec<usize>,
    target: usize,
}

impl<'e, 'a> NodeGame<'e, 'a> {
    pub fn new(engine: &'e Engine<'a>, node: usize, target: usize) -> Result<Self> {
        if target >= engine.graph().num_classes() {
            return Err(Error::arg("target", format!("class {target} out of range")));
        }
        let players = PlayerSet::of(engine, node)?;
        let plan = engine.plan(&[node])?;
        let player_slots = players
            .players
            .iter()
            .map(|&e| plan.slot_of(e).expect("players are plan slots"))
            .collect();
        Ok(Self {
            engine,
            plan,
            players,
            player_slots,
            target,
        })
    }

    pub fn node(&self) -> usize {
        self.players.center
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn players(&self) -> &[EdgeId] {
        &self.players.players
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    /// Target probability with player `i` set to `values[i]`.
    pub fn value_with(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.player_slots.len());
        let mut slot_mask = vec![1.0; self.plan.slots().len()];
        for (&slot, &v) in self.player_slots.iter().zip(values) {
            slot_mask[slot] = v;
        }
        self.engine.evaluate(&self.plan, &slot_mask)[0][self.target]
    }

    /// Coalition value where `present(i)` decides whether player `i` is kept.
    pub fn value(&self, present: impl Fn(usize) -> bool) -> f64 {
        let values: Vec<f64> = (0..self.num_players()).map(|i| if present(i) { 1.0 } else { 0.0 }).collect();
        self.value_with(&values)
    }

    pub fn full_value(&self) -> f64 {
        self.value(|_| true)
    }

    pub fn empty_value(&self) -> f64 {
        self.value(|_| false)
    }

    fn explanation(&self, method: Method, base: f64, samples: usize, scores: Vec<f64>) -> Explanation {
        Explanation {
            node: self.node(),
            target: self.target,
            base,
            method,
            samples,
            scores: self.players().iter().copied().zip(scores).collect(),
            regularized: false,
        }
    }
}

/// Something that scores the players of one node.
pub trait NodeExplainer: Sync {
    fn method(&self) -> Method;

    fn explain(&self, engine: &Engine<'_>, node: usize, target: usize) -> Result<Explanation>;
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum NodeFilter {
    #[default]
    All,
    Test,
    List(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeFailure {
    pub node: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExplainRun {
    pub explanations: Vec<Explanation>,
    pub failures: Vec<NodeFailure>,
}

/// Explains every selected node that has at least one player, targeting
/// the class the model predicts on the full graph. Results are in node
/// order regardless of `workers` (0 = one per core).
pub fn explain_all(
    engine: &Engine<'_>,
    explainer: &dyn NodeExplainer,
    filter: &NodeFilter,
    workers: usize,
) -> Result<ExplainRun> {
    let g = engine.graph();
    let candidates: Vec<usize> = match filter {
        NodeFilter::All => (0..g.num_nodes()).collect(),
        NodeFilter::Test => g.nodes_in(Split::Test),
        NodeFilter::List(nodes) => {
            let mut nodes = nodes.clone();
            nodes.sort_unstable();
            nodes.dedup();
            for &v in &nodes {
                g.check_node(v)?;
            }
            nodes
        }
    };
    let predictions = engine.predict_all(None)?;
    let layers = engine.num_layers();
    let mut selected = Vec::with_capacity(candidates.len());
    for v in candidates {
        if extract_computational_graph(g, v, layers)?.num_players() > 0 {
            selected.push(v);
        }
    }

    let run_one = |&v: &usize| explainer.explain(engine, v, predictions[v].predicted_class);
    let results = run_parallel(&selected, workers, run_one)?;

    let mut run = ExplainRun::default();
    for (v, result) in selected.into_iter().zip(results) {
        match result {
            Ok(e) => run.explanations.push(e),
            Err(err) => run.failures.push(NodeFailure {
                node: v,
                error: err.to_string(),
            }),
        }
    }
    Ok(run)
}

#[cfg(feature = "parallel")]
fn run_parallel<T, F>(items: &[usize], workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if workers == 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::arg("workers", e.to_string()))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn run_parallel<T, F>(items: &[usize], _workers: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(&usize) -> T,
{
    Ok(items.iter().map(f).collect())
}

#[derive(Serialize, Deserialize)]
struct ExplanationRecord {
    node: usize,
    target: usize,
    base: f64,
    method: Method,
    k: usize,
    scores: Vec<(u32, f64)>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    regularized: bool,
}

pub fn write_explanations(out: &mut impl Write, explanations: &[Explanation]) -> std::io::Result<()> {
    for e in explanations {
        let record = ExplanationRecord {
            node: e.node,
            target: e.target,
            base: e.base,
            method: e.method,
            k: e.samples,
            scores: e.scores.iter().map(|&(id, s)| (id.0, s)).collect(),
            regularized: e.regularized,
        };
        serde_json::to_writer(&mut *out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes `explanations.jsonl` atomically.
pub fn save_explanations(path: &Path, explanations: &[Explanation]) -> Result<()> {
    let mut buf = Vec::new();
    write_explanations(&mut buf, explanations).map_err(|e| Error::io(path, e))?;
    io::write_atomic(path, &buf)
}

pub fn read_explanations(reader: impl BufRead, file: &str) -> Result<Vec<Explanation>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(file, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: ExplanationRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(file, format!("record {i}"), e.to_string()))?;
        if r.scores.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::format(file, format!("record {i}"), "edge ids are not strictly ascending"));
        }
        out.push(Explanation {
            node: r.node,
            target: r.target,
            base: r.base,
            method: r.method,
            samples: r.k,
            scores: r.scores.into_iter().map(|(id, s)| (EdgeId(id), s)).collect(),
            regularized: r.regularized,
        });
    }
    Ok(out)
}

pub fn load_explanations(path: &Path) -> Result<Vec<Explanation>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_explanations(std::io::BufReader::new(file), &name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_layout() {
        let e = Explanation {
            node: 3,
            target: 1,
            base: 0.25,
            method: Method::Kernel,
            samples: 40,
            scores: vec![(EdgeId(2), 0.5), (EdgeId(9), -0.125)],
            regularized: false,
        };
        let mut buf = Vec::new();
        write_explanations(&mut buf, std::slice::from_ref(&e)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "{\"node\":3,\"target\":1,\"base\":0.25,\"method\":\"kernel\",\"k\":40,\"scores\":[[2,0.5],[9,-0.125]]}\n"
        );
        let back = read_explanations(&buf[..], "explanations.jsonl").unwrap();
        assert_eq!(back, vec![e]);
    }

    #[test]
    fn unsorted_scores_rejected() {
        let line = "{\"node\":0,\"target\":0,\"base\":0,\"method\":\"exact\",\"k\":1,\"scores\":[[4,0.1],[2,0.2]]}\n";
        let err = read_explanations(line.as_bytes(), "explanations.jsonl").unwrap_err().to_string();
        assert!(err.contains("record 0"), "{err}");
    }
}
