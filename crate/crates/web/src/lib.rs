use serde_json::{json, Value};
use shapsparse::eval::{run_sweep, SweepConfig, SweepInput};
use shapsparse::explain::{explain_all, ExactShapley, KernelShapley, NodeExplainer, NodeFilter, RandomScores, Saliency};
use shapsparse::macs::count_gcn_macs;
use shapsparse::sparsify::keep_count;
use shapsparse::synth::{generate_synthetic, planted_gcn, PlantedTruth, SynthParams};
use shapsparse::{Aggregation, Engine, GraphBundle, ModelWeights, Normalization};
use wasm_bindgen::prelude::*;

fn planted(seed: u64, nodes_per_class: usize, p_out: f64) -> Result<(GraphBundle, PlantedTruth, ModelWeights), String> {
    let params = SynthParams {
        nodes_per_class,
        num_classes: 3,
        p_in: 0.08,
        p_out,
        num_features: 6,
        signal: 1.0,
        feature_noise: 0.7,
        max_degree: Some(3),
        train_fraction: 0.2,
        val_fraction: 0.2,
    };
    let (g, truth) = generate_synthetic(seed, &params).map_err(|e| e.to_string())?;
    let w = planted_gcn(params.num_features, params.num_classes, 4, 4.0).map_err(|e| e.to_string())?;
    Ok((g, truth, w))
}

fn explainer(method: &str, k: usize, seed: u64) -> Result<Box<dyn NodeExplainer>, String> {
    Ok(match method {
        "exact" => Box::new(ExactShapley::default()),
        "kernel" => Box::new(KernelShapley { samples: Some(k), seed }),
        "saliency" => Box::new(Saliency::default()),
        "random" => Box::new(RandomScores { seed }),
        other => return Err(format!("unknown explainer `{other}`")),
    })
}

/// The planted graph and one node's explanation: every node with its
/// class, every edge with its planted-noise flag, and a score for each
/// edge in the node's computational graph.
#[wasm_bindgen]
pub fn explain_node(
    seed: u64,
    nodes_per_class: usize,
    p_out: f64,
    node: usize,
    method: &str,
    k: usize,
) -> Result<String, String> {
    let (g, truth, w) = planted(seed, nodes_per_class, p_out)?;
    let engine = Engine::new(&g, &w, Normalization::FullGraph).map_err(|e| e.to_string())?;
    let predictions = engine.predict_all(None).map_err(|e| e.to_string())?;
    let node = node.min(g.num_nodes() - 1);
    let target = predictions[node].predicted_class;
    let nodes: Vec<Value> = (0..g.num_nodes())
        .map(|v| json!({ "label": g.labels()[v], "predicted": predictions[v].predicted_class }))
        .collect();
    let edges: Vec<Value> = g.edges().map(|(e, s, d)| json!([s, d, truth.is_noise(e)])).collect();
    let explanation = explainer(method, k, seed)?.explain(&engine, node, target);
    let scores: Vec<Value> = match &explanation {
        Ok(x) => x.scores.iter().map(|(e, s)| json!([e.index(), s])).collect(),
        Err(_) => Vec::new(),
    };
    Ok(json!({
        "node": node,
        "target": target,
        "confidence": predictions[node].probs[target],
        "nodes": nodes,
        "edges": edges,
        "scores": scores,
        "base": explanation.as_ref().map(|x| x.base).unwrap_or(0.0),
        "error": explanation.err().map(|e| e.to_string()),
    })
    .to_string())
}

/// Test accuracy and fidelity over sparsity levels, once with signed
/// scores and once with absolute scores, on the same explanations.
#[wasm_bindgen]
pub fn sweep_curves(seed: u64, nodes_per_class: usize, p_out: f64, method: &str, k: usize) -> Result<String, String> {
    let (g, truth, w) = planted(seed, nodes_per_class, p_out)?;
    let engine = Engine::new(&g, &w, Normalization::FullGraph).map_err(|e| e.to_string())?;
    let run = explain_all(&engine, explainer(method, k, seed)?.as_ref(), &NodeFilter::All, 1).map_err(|e| e.to_string())?;
    let mut curves = serde_json::Map::new();
    for (name, abs_transform) in [("signed", false), ("abs", true)] {
        let config = SweepConfig { abs_transform, aggregation: Aggregation::Mean, ..SweepConfig::default() };
        let report =
            run_sweep(&g, &w, SweepInput::Explanations(&run.explanations), &config).map_err(|e| e.to_string())?;
        curves.insert(name.into(), serde_json::to_value(&report.rows).map_err(|e| e.to_string())?);
    }
    Ok(json!({
        "num_nodes": g.num_nodes(),
        "num_edges": g.num_edges(),
        "noise_fraction": truth.noise_fraction(),
        "explained": run.explanations.len(),
        "failed": run.failures.len(),
        "curves": curves,
    })
    .to_string())
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, T::Err> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::parse).collect()
}

/// Multiply-accumulate counts of a GCN with the given layer widths
/// (input first) at each comma-separated sparsity level.
#[wasm_bindgen]
pub fn mac_table(num_nodes: usize, num_edges: usize, dims: &str, taus: &str) -> Result<String, String> {
    let dims: Vec<usize> = parse_list(dims).map_err(|e| format!("dims: {e}"))?;
    let taus: Vec<f64> = parse_list(taus).map_err(|e| format!("taus: {e}"))?;
    if dims.len() < 2 {
        return Err("dims: give the input width and at least one layer width".into());
    }
    let full = count_gcn_macs(num_nodes, num_edges, &dims[1..]);
    let rows = taus
        .iter()
        .map(|&t| {
            let kept = keep_count(num_edges, t).map_err(|e| e.to_string())?;
            let macs = count_gcn_macs(num_nodes, kept, &dims[1..]);
            Ok(json!({ "tau": t, "kept_edges": kept, "macs": macs, "relative": macs as f64 / full as f64 }))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(Value::Array(rows).to_string())
}
