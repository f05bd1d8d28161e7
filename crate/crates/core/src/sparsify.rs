//! Global edge scores and score-ordered pruning.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::EdgeMask;
use crate::error::{Error, Result};
use crate::explain::Explanation;
use crate::graph::{EdgeId, GraphBundle};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Sum,
    WeightedMean,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Sum => "sum",
            Aggregation::WeightedMean => "weighted_mean",
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "sum" => Ok(Aggregation::Sum),
            "weighted_mean" => Ok(Aggregation::WeightedMean),
            other => Err(format!("unknown aggregation `{other}` (mean, sum, weighted_mean)")),
        }
    }
}

/// One signed score per directed edge. `None` marks an edge that no
/// explained node used.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalEdgeScores {
    pub scores: Vec<Option<f64>>,
    pub contributors: Vec<u32>,
    pub aggregation: Aggregation,
    pub abs_transform: bool,
}

impl GlobalEdgeScores {
    pub fn num_edges(&self) -> usize {
        self.scores.len()
    }

    pub fn unscored(&self) -> usize {
        self.scores.iter().filter(|s| s.is_none()).count()
    }

    /// Scores with every edge scored, `contributors` all 1.
    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            contributors: vec![1; values.len()],
            scores: values.into_iter().map(Some).collect(),
            aggregation: Aggregation::Mean,
            abs_transform: false,
        }
    }
}

/// Folds local explanations into global scores. `probs[v]` is the
/// full-graph probability of node `v`'s predicted class and is required
/// for [`Aggregation::WeightedMean`].
pub fn aggregate(
    explanations: &[Explanation],
    num_edges: usize,
    mode: Aggregation,
    abs_transform: bool,
    probs: Option<&[f64]>,
) -> Result<GlobalEdgeScores> {
    let probs = match (mode, probs) {
        (Aggregation::WeightedMean, None) => {
            return Err(Error::arg("aggregation", "weighted_mean needs prediction probabilities"))
        }
        (Aggregation::WeightedMean, Some(p)) => Some(p),
        _ => None,
    };
    let mut total = vec![0.0f64; num_edges];
    let mut weight = vec![0.0f64; num_edges];
    let mut contributors = vec![0u32; num_edges];
    for ex in explanations {
        let p = match probs {
            Some(p) => *p
                .get(ex.node)
                .ok_or_else(|| Error::arg("probs", format!("no probability for node {}", ex.node)))?,
            None => 1.0,
        };
        for &(e, s) in &ex.scores {
            let i = e.index();
            if i >= num_edges {
                return Err(Error::arg(
                    "explanations",
                    format!("node {} scores edge {i} but the graph has {num_edges} edges", ex.node),
                ));
            }
            let s = if abs_transform { s.abs() } else { s };
            total[i] += p * s;
            weight[i] += p;
            contributors[i] += 1;
        }
    }
    let mut scores = Vec::with_capacity(num_edges);
    for e in 0..num_edges {
        if contributors[e] == 0 {
            scores.push(None);
            continue;
        }
        let s = match mode {
            Aggregation::Sum => total[e],
            Aggregation::Mean => total[e] / contributors[e] as f64,
            Aggregation::WeightedMean => {
                if weight[e] == 0.0 {
                    return Err(Error::ZeroWeight { edge: e });
                }
                total[e] / weight[e]
            }
        };
        scores.push(Some(s));
    }
    Ok(GlobalEdgeScores {
        scores,
        contributors,
        aggregation: mode,
        abs_transform,
    })
}

/// All edge ids, most important first: scored edges by descending score
/// (ties by ascending id), then unscored edges by ascending id.
pub fn rank_edges(scores: &GlobalEdgeScores) -> Vec<EdgeId> {
    let mut order: Vec<u32> = (0..scores.num_edges() as u32).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (scores.scores[a as usize], scores.scores[b as usize]);
        match (sa, sb) {
            (Some(x), Some(y)) => y.total_cmp(&x).then(a.cmp(&b)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.cmp(&b),
        }
    });
    order.into_iter().map(EdgeId).collect()
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::arg("tau", format!("{tau} is outside [0, 1)")));
    }
    Ok(())
}

/// `ceil((1 - tau) * M)`, with a small slack so that products such as
/// `0.7 * 10` that land a hair above an integer do not round up.
pub fn keep_count(num_edges: usize, tau: f64) -> Result<usize> {
    check_tau(tau)?;
    let k = ((1.0 - tau) * num_edges as f64 - 1e-9).ceil();
    Ok((k.max(0.0) as usize).min(num_edges))
}

#[derive(Debug, Clone)]
pub struct SparsifiedGraph<'g> {
    pub parent: &'g GraphBundle,
    /// Sorted ascending.
    pub kept: Vec<EdgeId>,
    pub tau: f64,
}

impl<'g> SparsifiedGraph<'g> {
    pub fn edge_mask(&self) -> EdgeMask {
        EdgeMask::from_kept(self.parent.num_edges(), &self.kept)
    }

    /// A standalone bundle holding only the kept edges.
    pub fn materialize(&self) -> Result<GraphBundle> {
        self.parent.with_edges(&self.kept)
    }
}

pub fn sparsify<'g>(g: &'g GraphBundle, scores: &GlobalEdgeScores, tau: f64) -> Result<SparsifiedGraph<'g>> {
    if scores.num_edges() != g.num_edges() {
        return Err(Error::DimensionMismatch(format!(
            "{} edge scores for a graph with {} edges",
            scores.num_edges(),
            g.num_edges()
        )));
    }
    let ranking = rank_edges(scores);
    sparsify_ranked(g, &ranking, tau)
}

/// Keeps the first `keep_count` edges of a precomputed ranking, so one
/// ranking serves every sparsity level.
pub fn sparsify_ranked<'g>(g: &'g GraphBundle, ranking: &[EdgeId], tau: f64) -> Result<SparsifiedGraph<'g>> {
    let keep = keep_count(ranking.len(), tau)?;
    let mut kept = ranking[..keep].to_vec();
    kept.sort_unstable();
    Ok(SparsifiedGraph { parent: g, kept, tau })
}

pub const SCORES_HEADER: &str = "edge_id,src,dst,score,contributors";
const UNSCORED: &str = "unscored";

pub fn scores_csv(g: &GraphBundle, scores: &GlobalEdgeScores) -> String {
    let mut out = String::with_capacity(32 * g.num_edges());
    out.push_str(SCORES_HEADER);
    out.push('\n');
    for (e, s, d) in g.edges() {
        let i = e.index();
        let score = match scores.scores[i] {
            Some(x) => x.to_string(),
            None => UNSCORED.to_string(),
        };
        out.push_str(&format!("{},{s},{d},{score},{}\n", e.0, scores.contributors[i]));
    }
    out
}

pub fn save_scores(path: &Path, g: &GraphBundle, scores: &GlobalEdgeScores) -> Result<()> {
    io::write_atomic(path, scores_csv(g, scores).as_bytes())
}

/// Reads `scores.csv`; aggregation metadata is not stored in the file and
/// comes back as mean / signed.
pub fn load_scores(path: &Path, g: &GraphBundle) -> Result<GlobalEdgeScores> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_scores_csv(&text, &file, g)
}

pub fn parse_scores_csv(text: &str, file: &str, g: &GraphBundle) -> Result<GlobalEdgeScores> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(SCORES_HEADER) {
        return Err(Error::format(file, "line 1", format!("expected header `{SCORES_HEADER}`")));
    }
    let m = g.num_edges();
    let mut scores = Vec::with_capacity(m);
    let mut contributors = Vec::with_capacity(m);
    for (i, line) in lines.enumerate() {
        let lineno = format!("line {}", i + 2);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |msg: String| Error::format(file, lineno.clone(), msg);
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", fields.len())));
        }
        let id: usize = fields[0].parse().map_err(|_| bad(format!("bad edge id `{}`", fields[0])))?;
        if id != scores.len() || id >= m {
            return Err(bad(format!("edge id {id} out of order or out of range")));
        }
        let (s, d) = g.endpoints(EdgeId(id as u32));
        if fields[1] != s.to_string() || fields[2] != d.to_string() {
            return Err(bad(format!("edge {id} is {s}->{d} in the graph")));
        }
        let score = if fields[3] == UNSCORED {
            None
        } else {
            let x: f64 = fields[3].parse().map_err(|_| bad(format!("bad score `{}`", fields[3])))?;
            if !x.is_finite() {
                return Err(bad("score is not finite".into()));
            }
            Some(x)
        };
        let c: u32 = fields[4].parse().map_err(|_| bad(format!("bad contributor count `{}`", fields[4])))?;
        scores.push(score);
        contributors.push(c);
    }
    if scores.len() != m {
        return Err(Error::format(file, "end", format!("{} rows for {m} edges", scores.len())));
    }
    Ok(GlobalEdgeScores {
        scores,
        contributors,
        aggregation: Aggregation::Mean,
        abs_transform: false,
    })
}

/// `kept.u32`: the sorted kept edge ids.
pub fn save_kept(path: &Path, kept: &[EdgeId]) -> Result<()> {
    let ids: Vec<u32> = kept.iter().map(|e| e.0).collect();
    io::write_atomic(path, &io::u32_bytes(&ids))
}

pub fn load_kept(path: &Path) -> Result<Vec<EdgeId>> {
    Ok(io::read_u32s(path, None)?.into_iter().map(EdgeId).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::Method;

    fn ex(node: usize, scores: &[(u32, f64)]) -> Explanation {
        Explanation {
            node,
            target: 0,
            base: 0.0,
            method: Method::Exact,
            samples: 0,
            scores: scores.iter().map(|&(e, s)| (EdgeId(e), s)).collect(),
            regularized: false,
        }
    }

    fn score(g: &GlobalEdgeScores, e: usize) -> f64 {
        g.scores[e].unwrap()
    }

    #[test]
    fn single_explanation_mean() {
        let s = aggregate(&[ex(0, &[(0, 0.3)])], 1, Aggregation::Mean, false, None).unwrap();
        assert_eq!(score(&s, 0), 0.3);
        assert_eq!(s.contributors, vec![1]);
    }

    // Frozen from tests/oracles/gcn_oracle.py.
    #[test]
    fn modes_on_two_explanations() {
        let exps = [ex(0, &[(0, 0.4)]), ex(1, &[(0, -0.2)])];
        let probs = [0.5, 1.0];
        let mean = aggregate(&exps, 1, Aggregation::Mean, false, None).unwrap();
        let sum = aggregate(&exps, 1, Aggregation::Sum, false, None).unwrap();
        let wm = aggregate(&exps, 1, Aggregation::WeightedMean, false, Some(&probs)).unwrap();
        assert!((score(&mean, 0) - 0.1).abs() < 1e-15);
        assert!((score(&sum, 0) - 0.2).abs() < 1e-15);
        assert!(score(&wm, 0).abs() < 1e-15);
    }

    #[test]
    fn abs_transform_folds_magnitudes() {
        let s = aggregate(&[ex(0, &[(0, -0.2)])], 1, Aggregation::Mean, true, None).unwrap();
        assert_eq!(score(&s, 0), 0.2);
    }

    #[test]
    fn unscored_and_errors() {
        let s = aggregate(&[ex(0, &[(1, 0.5)])], 3, Aggregation::Sum, false, None).unwrap();
        assert_eq!(s.scores, vec![None, Some(0.5), None]);
        assert_eq!(s.unscored(), 2);
        assert!(aggregate(&[ex(0, &[(5, 0.5)])], 3, Aggregation::Sum, false, None).is_err());
        assert!(aggregate(&[], 3, Aggregation::WeightedMean, false, None).is_err());
        let err = aggregate(&[ex(0, &[(2, 0.5)])], 3, Aggregation::WeightedMean, false, Some(&[0.0])).unwrap_err();
        assert!(matches!(err, Error::ZeroWeight { edge: 2 }));
    }

    #[test]
    fn keep_counts() {
        assert_eq!(keep_count(10, 0.0).unwrap(), 10);
        assert_eq!(keep_count(10, 0.55).unwrap(), 5);
        assert_eq!(keep_count(10, 0.3).unwrap(), 7);
        assert_eq!(keep_count(10556, 0.8).unwrap(), 2112);
        assert_eq!(keep_count(0, 0.5).unwrap(), 0);
        assert!(keep_count(10, 1.0).is_err());
        assert!(keep_count(10, -0.1).is_err());
    }

    #[test]
    fn tie_break_by_id() {
        let g = crate::graph::tests::bare(3, &[(0, 1), (1, 0), (1, 2), (2, 1), (0, 2)]);
        let s = GlobalEdgeScores::from_values(vec![5.0, -1.0, 3.0, 3.0, 0.0]);
        let sp = sparsify(&g, &s, 0.4).unwrap();
        assert_eq!(sp.kept, vec![EdgeId(0), EdgeId(2), EdgeId(3)]);
    }

    #[test]
    fn unscored_pruned_first() {
        let s = GlobalEdgeScores {
            scores: vec![None, Some(-4.0), None, Some(0.1)],
            contributors: vec![0, 1, 0, 1],
            aggregation: Aggregation::Mean,
            abs_transform: false,
        };
        assert_eq!(rank_edges(&s), vec![EdgeId(3), EdgeId(1), EdgeId(0), EdgeId(2)]);
    }

    #[test]
    fn csv_round_trip() {
        let g = crate::graph::tests::bare(3, &[(0, 1), (1, 2), (2, 0)]);
        let s = GlobalEdgeScores {
            scores: vec![Some(0.1 + 0.2), None, Some(-1e-300)],
            contributors: vec![2, 0, 1],
            aggregation: Aggregation::Mean,
            abs_transform: false,
        };
        let text = scores_csv(&g, &s);
        assert!(text.starts_with("edge_id,src,dst,score,contributors\n0,0,1,0.30000000000000004,2\n1,1,2,unscored,0\n"));
        assert_eq!(parse_scores_csv(&text, "scores.csv", &g).unwrap(), s);
        let broken = text.replace("1,1,2", "1,2,1");
        let err = parse_scores_csv(&broken, "scores.csv", &g).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }
}
