//! Accuracy, fidelity and MAC reporting over a range of sparsity levels.
//!
//! A pruned graph is always evaluated as a graph in its own right: GCN
//! degrees are recomputed from the kept edges and GAT attention is
//! normalized over them. This matches running the model on the
//! materialized bundle.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{EdgeMask, Engine, Normalization, Plan, Prediction};
use crate::error::{Error, Result};
use crate::explain::Explanation;
use crate::graph::{EdgeId, GraphBundle, Split};
use crate::io;
use crate::macs::count_macs;
use crate::model::ModelWeights;
use crate::sparsify::{aggregate, keep_count, rank_edges, sparsify_ranked, Aggregation, GlobalEdgeScores, SparsifiedGraph};

pub const DEFAULT_FIDELITY_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FidelitySign {
    /// Remove the most important edges.
    Plus,
    /// Remove the least important edges.
    Minus,
}

/// Test-node evaluator shared by every sparsity level of a sweep.
pub struct Evaluator<'a> {
    engine: Engine<'a>,
    plan: Plan,
    test_nodes: Vec<usize>,
    full: Vec<Prediction>,
}

impl<'a> Evaluator<'a> {
    pub fn new(g: &'a GraphBundle, model: &'a ModelWeights) -> Result<Self> {
        let test_nodes = g.nodes_in(Split::Test);
        if test_nodes.is_empty() {
            return Err(Error::InvalidGraph("test mask is empty".into()));
        }
        let engine = Engine::new(g, model, Normalization::PerMask)?;
        let plan = engine.plan(&test_nodes)?;
        let full = engine.forward_plan(&plan, None)?.into_values().collect();
        Ok(Self {
            engine,
            plan,
            test_nodes,
            full,
        })
    }

    pub fn graph(&self) -> &'a GraphBundle {
        self.engine.graph()
    }

    pub fn test_nodes(&self) -> &[usize] {
        &self.test_nodes
    }

    fn predict(&self, mask: &EdgeMask) -> Result<Vec<Prediction>> {
        Ok(self.engine.forward_plan(&self.plan, Some(mask))?.into_values().collect())
    }

    pub fn accuracy(&self, mask: &EdgeMask) -> Result<f64> {
        let labels = self.graph().labels();
        let preds = self.predict(mask)?;
        let correct = self
            .test_nodes
            .iter()
            .zip(&preds)
            .filter(|(&v, p)| p.predicted_class == labels[v] as usize)
            .count();
        Ok(correct as f64 / self.test_nodes.len() as f64)
    }

    /// Mean drop of the full-graph predicted class probability after
    /// removing `floor(fraction * M)` edges from the top or bottom of
    /// `ranking` (most important first).
    pub fn fidelity(&self, ranking: &[EdgeId], fraction: f64, sign: FidelitySign) -> Result<f64> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::arg("fidelity_fraction", format!("{fraction} is outside (0, 1)")));
        }
        let m = ranking.len();
        let removed = ((fraction * m as f64) + 1e-9).floor() as usize;
        if removed == 0 {
            return Ok(0.0);
        }
        let drop = match sign {
            FidelitySign::Plus => &ranking[..removed],
            FidelitySign::Minus => &ranking[m - removed..],
        };
        let mut mask = EdgeMask::ones(m);
        for &e in drop {
            mask.set(e, 0.0);
        }
        let preds = self.predict(&mask)?;
        let total: f64 = self
            .full
            .iter()
            .zip(&preds)
            .map(|(f, p)| f.probs[f.predicted_class] - p.probs[f.predicted_class])
            .sum();
        Ok(total / self.test_nodes.len() as f64)
    }
}

/// Fraction of test nodes classified correctly on the sparsified graph.
pub fn test_accuracy(g: &GraphBundle, model: &ModelWeights, sparsified: &SparsifiedGraph<'_>) -> Result<f64> {
    Evaluator::new(g, model)?.accuracy(&sparsified.edge_mask())
}

pub fn fidelity(
    g: &GraphBundle,
    model: &ModelWeights,
    scores: &GlobalEdgeScores,
    fraction: f64,
    sign: FidelitySign,
) -> Result<f64> {
    Evaluator::new(g, model)?.fidelity(&rank_edges(scores), fraction, sign)
}

pub enum SweepInput<'x> {
    Explanations(&'x [Explanation]),
    Scores(&'x GlobalEdgeScores),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub taus: Vec<f64>,
    pub aggregation: Aggregation,
    pub abs_transform: bool,
    pub fidelity_fraction: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            taus: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            aggregation: Aggregation::Mean,
            abs_transform: false,
            fidelity_fraction: DEFAULT_FIDELITY_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub kept_edges: usize,
    pub test_accuracy: f64,
    pub fidelity_plus: f64,
    pub fidelity_minus: f64,
    pub macs: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub dataset: String,
    pub model_kind: String,
    pub explainer: String,
    pub aggregation: String,
    pub abs_transform: bool,
    pub seeds: Vec<u64>,
    pub k: Option<usize>,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub unscored_edges: usize,
    pub fidelity_fraction: f64,
    /// Fidelity at `fidelity_fraction`, independent of the sweep levels.
    pub fidelity_plus: f64,
    pub fidelity_minus: f64,
    /// The run configuration, echoed as given.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub metadata: SweepMetadata,
    pub rows: Vec<SweepRow>,
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::arg("taus", "no sparsity levels given"));
    }
    for &t in taus {
        keep_count(0, t)?;
    }
    if taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::arg("taus", "must be strictly ascending"));
    }
    Ok(())
}

/// Aggregates once, ranks once, then evaluates every sparsity level.
/// At level `tau` the fidelity columns remove a `tau` fraction of edges
/// (0 at `tau = 0`). A failing level is reported in its row's `error`.
///
/// The caller fills in the descriptive metadata fields.
pub fn run_sweep(
    g: &GraphBundle,
    model: &ModelWeights,
    input: SweepInput<'_>,
    config: &SweepConfig,
) -> Result<SweepReport> {
    check_taus(&config.taus)?;
    if !(config.fidelity_fraction > 0.0 && config.fidelity_fraction < 1.0) {
        return Err(Error::arg(
            "fidelity_fraction",
            format!("{} is outside (0, 1)", config.fidelity_fraction),
        ));
    }
    let aggregated;
    let scores = match input {
        SweepInput::Scores(s) => s,
        SweepInput::Explanations(exps) => {
            let probs = match config.aggregation {
                Aggregation::WeightedMean => {
                    let engine = Engine::new(g, model, Normalization::FullGraph)?;
                    Some(
                        engine
                            .predict_all(None)?
                            .into_iter()
                            .map(|p| p.probs[p.predicted_class])
                            .collect::<Vec<_>>(),
                    )
                }
                _ => None,
            };
            aggregated = aggregate(exps, g.num_edges(), config.aggregation, config.abs_transform, probs.as_deref())?;
            &aggregated
        }
    };
    if scores.num_edges() != g.num_edges() {
        return Err(Error::DimensionMismatch(format!(
            "{} edge scores for a graph with {} edges",
            scores.num_edges(),
            g.num_edges()
        )));
    }

    let evaluator = Evaluator::new(g, model)?;
    let ranking = rank_edges(scores);
    let rows = config
        .taus
        .iter()
        .map(|&tau| {
            let kept = keep_count(g.num_edges(), tau).unwrap_or(0);
            let mut row = SweepRow {
                tau,
                kept_edges: kept,
                test_accuracy: f64::NAN,
                fidelity_plus: f64::NAN,
                fidelity_minus: f64::NAN,
                macs: count_macs(g.num_nodes(), kept, model),
                error: None,
            };
            let result = (|| -> Result<()> {
                let sp = sparsify_ranked(g, &ranking, tau)?;
                row.test_accuracy = evaluator.accuracy(&sp.edge_mask())?;
                if tau == 0.0 {
                    row.fidelity_plus = 0.0;
                    row.fidelity_minus = 0.0;
                } else {
                    row.fidelity_plus = evaluator.fidelity(&ranking, tau, FidelitySign::Plus)?;
                    row.fidelity_minus = evaluator.fidelity(&ranking, tau, FidelitySign::Minus)?;
                }
                Ok(())
            })();
            if let Err(e) = result {
                row.error = Some(e.to_string());
            }
            row
        })
        .collect();

    let metadata = SweepMetadata {
        model_kind: model.kind.as_str().to_string(),
        aggregation: scores.aggregation.as_str().to_string(),
        abs_transform: scores.abs_transform,
        num_nodes: g.num_nodes(),
        num_edges: g.num_edges(),
        unscored_edges: scores.unscored(),
        fidelity_fraction: config.fidelity_fraction,
        fidelity_plus: evaluator.fidelity(&ranking, config.fidelity_fraction, FidelitySign::Plus)?,
        fidelity_minus: evaluator.fidelity(&ranking, config.fidelity_fraction, FidelitySign::Minus)?,
        ..SweepMetadata::default()
    };
    Ok(SweepReport { metadata, rows })
}

/// Element-wise mean of reports over the same sparsity levels. The
/// metadata of the first report is kept, with the seed lists concatenated.
pub fn average_reports(reports: &[SweepReport]) -> Result<SweepReport> {
    let first = reports.first().ok_or_else(|| Error::arg("seeds", "nothing to average"))?;
    let n = reports.len() as f64;
    let mut out = first.clone();
    for r in &reports[1..] {
        if r.rows.len() != first.rows.len() || r.rows.iter().zip(&first.rows).any(|(a, b)| a.tau != b.tau) {
            return Err(Error::arg("taus", "reports cover different sparsity levels"));
        }
        out.metadata.seeds.extend(&r.metadata.seeds);
    }
    let mean = |f: &dyn Fn(&SweepReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    out.metadata.fidelity_plus = mean(&|r| r.metadata.fidelity_plus);
    out.metadata.fidelity_minus = mean(&|r| r.metadata.fidelity_minus);
    for (i, row) in out.rows.iter_mut().enumerate() {
        row.test_accuracy = mean(&|r| r.rows[i].test_accuracy);
        row.fidelity_plus = mean(&|r| r.rows[i].fidelity_plus);
        row.fidelity_minus = mean(&|r| r.rows[i].fidelity_minus);
        row.error = reports.iter().find_map(|r| r.rows[i].error.clone());
    }
    Ok(out)
}

pub const REPORT_HEADER: &str = "tau,kept_edges,test_accuracy,fidelity_plus,fidelity_minus,macs";

pub fn report_csv(report: &SweepReport) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in &report.rows {
        if r.error.is_some() {
            let _ = writeln!(out, "{:.6},{},error,error,error,{}", r.tau, r.kept_edges, r.macs);
        } else {
            let _ = writeln!(
                out,
                "{:.6},{},{:.6},{:.6},{:.6},{}",
                r.tau, r.kept_edges, r.test_accuracy, r.fidelity_plus, r.fidelity_minus, r.macs
            );
        }
    }
    out
}

pub fn report_json(report: &SweepReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Accuracy-versus-sparsity line plot.
pub fn curve_svg(report: &SweepReport) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const PAD: f64 = 48.0;
    let x = |tau: f64| PAD + tau * (W - 2.0 * PAD);
    let y = |acc: f64| H - PAD - acc * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#, x(v), H - PAD + 16.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#, PAD - 6.0, y(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">sparsity</text>"#, W / 2.0, H - 8.0);
    let _ = writeln!(s, r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">test accuracy</text>"#, H / 2.0, H / 2.0);
    let points: Vec<String> = report
        .rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| format!("{:.2},{:.2}", x(r.tau), y(r.test_accuracy)))
        .collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f6fb2" stroke-width="2"/>"##, points.join(" "));
    for p in &points {
        let (px, py) = p.split_once(',').expect("point");
        let _ = writeln!(s, r##"<circle cx="{px}" cy="{py}" r="3" fill="#1f6fb2"/>"##);
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `report.csv`, `report.json` and optionally `curve.svg` into `dir`.
pub fn save_report(dir: &Path, report: &SweepReport, svg: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_atomic(&dir.join("report.csv"), report_csv(report).as_bytes())?;
    io::write_atomic(&dir.join("report.json"), report_json(report).as_bytes())?;
    if svg {
        io::write_atomic(&dir.join("curve.svg"), curve_svg(report).as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GcnLayer;

    /// Two classes, features one-hot on the class, identity weights: every
    /// node is classified from its own features.
    fn fixture() -> (GraphBundle, ModelWeights) {
        let n = 6;
        let labels: Vec<u32> = (0..n as u32).map(|i| i % 2).collect();
        let features: Vec<f32> = labels
            .iter()
            .flat_map(|&c| if c == 0 { [1.0, 0.0] } else { [0.0, 1.0] })
            .collect();
        let edges = [(0, 2), (2, 0), (1, 3), (3, 1), (2, 4), (4, 2), (1, 5), (5, 1)];
        let g = GraphBundle::from_edges(n, &edges, 2, features, 2, labels, None).unwrap();
        let eye = vec![1.0, 0.0, 0.0, 1.0];
        let w = ModelWeights::gcn(vec![
            GcnLayer { in_dim: 2, out_dim: 2, weight: eye.clone(), bias: vec![0.0; 2] },
            GcnLayer { in_dim: 2, out_dim: 2, weight: eye, bias: vec![0.0; 2] },
        ])
        .unwrap();
        (g, w)
    }

    #[test]
    fn perfect_accuracy_with_and_without_edges() {
        let (g, w) = fixture();
        let ev = Evaluator::new(&g, &w).unwrap();
        assert_eq!(ev.accuracy(&EdgeMask::ones(g.num_edges())).unwrap(), 1.0);
        assert_eq!(ev.accuracy(&EdgeMask::zeros(g.num_edges())).unwrap(), 1.0);
    }

    #[test]
    fn flipped_label_costs_one_node() {
        let (g, w) = fixture();
        let mut raw = g.raw().clone();
        raw.labels[3] = 0;
        let flipped = GraphBundle::new(raw).unwrap();
        let acc = Evaluator::new(&flipped, &w).unwrap().accuracy(&EdgeMask::ones(g.num_edges())).unwrap();
        assert!((acc - (1.0 - 1.0 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn fidelity_of_nothing_removed_is_zero() {
        let (g, w) = fixture();
        let scores = GlobalEdgeScores::from_values(vec![0.0; g.num_edges()]);
        assert_eq!(fidelity(&g, &w, &scores, 0.05, FidelitySign::Plus).unwrap(), 0.0);
        assert!(fidelity(&g, &w, &scores, 1.0, FidelitySign::Plus).is_err());
        assert!(fidelity(&g, &w, &scores, 0.0, FidelitySign::Minus).is_err());
    }

    #[test]
    fn sweep_rows_shrink() {
        let (g, w) = fixture();
        let scores = GlobalEdgeScores::from_values((0..g.num_edges()).map(|i| i as f64).collect());
        let config = SweepConfig { taus: vec![0.0, 0.5, 0.8], ..SweepConfig::default() };
        let report = run_sweep(&g, &w, SweepInput::Scores(&scores), &config).unwrap();
        let kept: Vec<usize> = report.rows.iter().map(|r| r.kept_edges).collect();
        assert_eq!(kept, vec![8, 4, 2]);
        assert!(report.rows.windows(2).all(|p| p[0].macs > p[1].macs));
        assert_eq!(report.rows[0].fidelity_plus, 0.0);
        let csv = report_csv(&report);
        assert!(csv.starts_with("tau,kept_edges,test_accuracy,fidelity_plus,fidelity_minus,macs\n0.000000,8,1.000000,"));
    }

    #[test]
    fn unsorted_taus_rejected() {
        let (g, w) = fixture();
        let scores = GlobalEdgeScores::from_values(vec![0.0; g.num_edges()]);
        let config = SweepConfig { taus: vec![0.5, 0.2], ..SweepConfig::default() };
        assert!(run_sweep(&g, &w, SweepInput::Scores(&scores), &config).is_err());
        let config = SweepConfig { taus: vec![1.5], ..SweepConfig::default() };
        let err = run_sweep(&g, &w, SweepInput::Scores(&scores), &config).unwrap_err().to_string();
        assert!(err.contains("tau"), "{err}");
    }

    #[test]
    fn averaging() {
        let (g, w) = fixture();
        let scores = GlobalEdgeScores::from_values(vec![1.0; g.num_edges()]);
        let config = SweepConfig { taus: vec![0.0, 0.5], ..SweepConfig::default() };
        let mut a = run_sweep(&g, &w, SweepInput::Scores(&scores), &config).unwrap();
        a.metadata.seeds = vec![1];
        let mut b = a.clone();
        b.metadata.seeds = vec![2];
        b.rows[1].test_accuracy = 0.5;
        let avg = average_reports(&[a.clone(), b]).unwrap();
        assert_eq!(avg.metadata.seeds, vec![1, 2]);
        assert!((avg.rows[1].test_accuracy - (a.rows[1].test_accuracy + 0.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let (g, w) = fixture();
        let scores = GlobalEdgeScores::from_values(vec![1.0; g.num_edges()]);
        let report = run_sweep(&g, &w, SweepInput::Scores(&scores), &SweepConfig::default()).unwrap();
        let svg = curve_svg(&report);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<circle").count(), report.rows.len());
    }
}
