mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use shapsparse::eval::{average_reports, run_sweep, save_report, SweepConfig, SweepInput, SweepReport};
use shapsparse::explain::{
    explain_all, load_explanations, save_explanations, ExactShapley, Explanation, KernelShapley, NodeExplainer,
    NodeFilter, RandomScores, Saliency,
};
use shapsparse::io::write_atomic;
use shapsparse::macs::count_gcn_macs;
use shapsparse::model::WEIGHTS_FORMAT_VERSION;
use shapsparse::sparsify::{keep_count, load_scores, save_kept, save_scores};
use shapsparse::synth::{generate_synthetic, planted_gcn};
use shapsparse::{
    aggregate, count_macs, load_bundle, load_weights, save_bundle, save_weights, sparsify, Engine, GraphBundle,
    ModelWeights, Normalization, FORMAT_VERSION,
};

use config::{RunArgs, RunConfig, SynthArgs};

#[derive(Parser)]
#[command(name = "shapsparse", about = "Shapley-value edge scoring and graph sparsification for GNNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score the edges of every selected node's computational graph
    Explain(RunArgs),
    /// Fold per-node explanations into one score per edge
    Aggregate(RunArgs),
    /// Keep the top-scored edges and write the pruned bundle
    Sparsify(RunArgs),
    /// Accuracy, fidelity and MACs over a range of sparsity levels
    Sweep(RunArgs),
    /// Print the multiply-accumulate count at each sparsity level
    Macs(MacsArgs),
    /// Generate a planted-partition graph with known noise edges
    GenSynth(SynthArgs),
}

#[derive(Args)]
struct MacsArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Node count, when no bundle is given
    #[arg(long)]
    nodes: Option<usize>,
    /// Directed edge count, when no bundle is given
    #[arg(long)]
    edges: Option<usize>,
    /// GCN layer widths including the input, e.g. 1433,16,7
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Usage,
    Runtime,
}

/// A reason to stop, rendered as one line on standard error.
#[derive(Debug)]
pub struct Failure {
    kind: FailureKind,
    flag: Option<String>,
    message: String,
}

impl Failure {
    pub fn usage(flag: &str, message: impl Into<String>) -> Self {
        Failure { kind: FailureKind::Usage, flag: Some(flag.to_string()), message: message.into() }
    }

    fn line(&self) -> String {
        let kind = match self.kind {
            FailureKind::Usage => "usage",
            FailureKind::Runtime => "runtime",
        };
        let flag = self.flag.as_ref().map(|f| format!(" flag={f}")).unwrap_or_default();
        format!("shapsparse: kind={kind}{flag} message={}", self.message.replace('\n', " "))
    }

    fn exit_code(&self) -> ExitCode {
        match self.kind {
            FailureKind::Usage => ExitCode::from(2),
            FailureKind::Runtime => ExitCode::from(1),
        }
    }
}

pub fn usage_from_core(e: shapsparse::Error) -> Failure {
    match e {
        shapsparse::Error::InvalidArgument { name, message } => Failure::usage(&format!("--{}", name.replace('_', "-")), message),
        other => Failure::from(other),
    }
}

impl From<shapsparse::Error> for Failure {
    fn from(e: shapsparse::Error) -> Self {
        match e {
            shapsparse::Error::InvalidArgument { .. } => usage_from_core(e),
            other => Failure { kind: FailureKind::Runtime, flag: None, message: other.to_string() },
        }
    }
}

fn runtime(message: impl Into<String>) -> Failure {
    Failure { kind: FailureKind::Runtime, flag: None, message: message.into() }
}

fn version() -> String {
    format!(
        "{} (bundle format_version {FORMAT_VERSION}, weights format_version {WEIGHTS_FORMAT_VERSION})",
        env!("CARGO_PKG_VERSION")
    )
}

fn clap_failure(e: &clap::Error) -> Failure {
    let flag = match e.get(ContextKind::InvalidArg) {
        Some(ContextValue::String(s)) => s.split_whitespace().next().map(str::to_string),
        _ => None,
    };
    let rendered = e.render().to_string();
    let message = rendered.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ").to_string();
    Failure { kind: FailureKind::Usage, flag, message }
}

fn main() -> ExitCode {
    let command = Cli::command().version(&*Box::leak(version().into_boxed_str()));
    let cli = match command.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("{}", clap_failure(&e).line());
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            f.exit_code()
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Explain(args) => cmd_explain(&args.resolve()?),
        Command::Aggregate(args) => cmd_aggregate(&args.resolve()?),
        Command::Sparsify(args) => cmd_sparsify(&args.resolve()?),
        Command::Sweep(args) => cmd_sweep(&args.resolve()?),
        Command::Macs(args) => cmd_macs(args),
        Command::GenSynth(args) => cmd_gen_synth(&args.resolve()?),
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

/// Writes the resolved settings next to a subcommand's outputs.
fn echo_config(config: &RunConfig, name: &str) -> Result<(), Failure> {
    let mut json = serde_json::to_string_pretty(config).expect("config serializes");
    json.push('\n');
    write_atomic(&config.out.join(format!("{name}.config.json")), json.as_bytes())?;
    Ok(())
}

fn node_filter(config: &RunConfig) -> Result<NodeFilter, Failure> {
    match config.node_filter.as_str() {
        "all" => Ok(NodeFilter::All),
        "test" => Ok(NodeFilter::Test),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::usage("--node-filter", format!("{path}: {e}")))?;
            let nodes = text
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<usize>().map_err(|_| Failure::usage("--node-filter", format!("{path}: `{t}` is not a node id"))))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(NodeFilter::List(nodes))
        }
    }
}

fn explainer(config: &RunConfig, seed: u64) -> Box<dyn NodeExplainer> {
    use shapsparse::explain::Method;
    match config.explainer {
        Method::Exact => Box::new(ExactShapley { player_limit: config.player_limit }),
        Method::Kernel => Box::new(KernelShapley { samples: config.k, seed }),
        Method::Saliency => Box::new(Saliency { step: config.saliency_step }),
        Method::Random => Box::new(RandomScores { seed }),
    }
}

fn normalization(config: &RunConfig) -> Normalization {
    if config.renormalize_per_mask {
        Normalization::PerMask
    } else {
        Normalization::FullGraph
    }
}

/// Explains the selected nodes. Nodes that cannot be explained are listed
/// on standard error; the run fails only when none succeed.
fn explain_nodes(
    g: &GraphBundle,
    w: &ModelWeights,
    config: &RunConfig,
    seed: u64,
) -> Result<Vec<Explanation>, Failure> {
    let engine = Engine::new(g, w, normalization(config))?;
    let filter = node_filter(config)?;
    let run = explain_all(&engine, explainer(config, seed).as_ref(), &filter, config.workers)?;
    for f in &run.failures {
        eprintln!("shapsparse: kind=warning node={} message={}", f.node, f.error);
    }
    if run.explanations.is_empty() && !run.failures.is_empty() {
        return Err(runtime(format!("all {} selected nodes failed; first: {}", run.failures.len(), run.failures[0].error)));
    }
    Ok(run.explanations)
}

fn load_inputs(config: &RunConfig) -> Result<(GraphBundle, ModelWeights), Failure> {
    let g = load_bundle(config.bundle()?)?;
    let w = load_weights(config.weights()?)?;
    Ok((g, w))
}

fn cmd_explain(config: &RunConfig) -> Result<(), Failure> {
    let (g, w) = load_inputs(config)?;
    if config.seed.len() > 1 {
        return Err(Failure::usage("--seed", "explain takes a single seed"));
    }
    let explanations = explain_nodes(&g, &w, config, config.seed[0])?;
    create_dir(&config.out)?;
    save_explanations(&config.out.join("explanations.jsonl"), &explanations)?;
    echo_config(config, "explain")
}

fn explanations_path(config: &RunConfig) -> PathBuf {
    config.explanations.clone().unwrap_or_else(|| config.out.join("explanations.jsonl"))
}

fn scores_path(config: &RunConfig) -> PathBuf {
    config.scores.clone().unwrap_or_else(|| config.out.join("scores.csv"))
}

/// Confidence of the full-graph prediction at every node, for weighted_mean.
fn confidences(g: &GraphBundle, w: &ModelWeights) -> Result<Vec<f64>, Failure> {
    let engine = Engine::new(g, w, Normalization::FullGraph)?;
    Ok(engine.predict_all(None)?.into_iter().map(|p| p.probs[p.predicted_class]).collect())
}

fn cmd_aggregate(config: &RunConfig) -> Result<(), Failure> {
    let g = load_bundle(config.bundle()?)?;
    let explanations = load_explanations(&explanations_path(config))?;
    let probs = match config.aggregation {
        shapsparse::Aggregation::WeightedMean => Some(confidences(&g, &load_weights(config.weights()?)?)?),
        _ => None,
    };
    let scores = aggregate(&explanations, g.num_edges(), config.aggregation, config.abs_transform, probs.as_deref())?;
    create_dir(&config.out)?;
    save_scores(&config.out.join("scores.csv"), &g, &scores)?;
    echo_config(config, "aggregate")
}

fn cmd_sparsify(config: &RunConfig) -> Result<(), Failure> {
    let g = load_bundle(config.bundle()?)?;
    let scores = load_scores(&scores_path(config), &g)?;
    let sp = sparsify(&g, &scores, config.tau)?;
    create_dir(&config.out)?;
    save_bundle(&sp.materialize()?, &config.out.join("sparsified"))?;
    save_kept(&config.out.join("kept.u32"), &sp.kept)?;
    echo_config(config, "sparsify")
}

fn sweep_config(config: &RunConfig) -> SweepConfig {
    SweepConfig {
        taus: config.taus.clone(),
        aggregation: config.aggregation,
        abs_transform: config.abs_transform,
        fidelity_fraction: config.fidelity_fraction,
    }
}

fn cmd_sweep(config: &RunConfig) -> Result<(), Failure> {
    use shapsparse::explain::Method;
    let (g, w) = load_inputs(config)?;
    let sweep = sweep_config(config);
    create_dir(&config.out)?;

    let mut reports: Vec<SweepReport> = Vec::new();
    if config.scores.is_some() {
        let scores = load_scores(&scores_path(config), &g)?;
        reports.push(run_sweep(&g, &w, SweepInput::Scores(&scores), &sweep)?);
    } else if let Some(path) = &config.explanations {
        let explanations = load_explanations(path)?;
        reports.push(run_sweep(&g, &w, SweepInput::Explanations(&explanations), &sweep)?);
    } else {
        let seeded = matches!(config.explainer, Method::Kernel | Method::Random);
        let multi = config.seed.len() > 1;
        let mut cached: Option<Vec<Explanation>> = None;
        for &seed in &config.seed {
            let explanations = match (&cached, seeded) {
                (Some(e), false) => e.clone(),
                _ => explain_nodes(&g, &w, config, seed)?,
            };
            let name = if multi { format!("explanations.seed-{seed}.jsonl") } else { "explanations.jsonl".into() };
            save_explanations(&config.out.join(name), &explanations)?;
            reports.push(run_sweep(&g, &w, SweepInput::Explanations(&explanations), &sweep)?);
            cached = Some(explanations);
        }
    }
    for (r, &seed) in reports.iter_mut().zip(&config.seed) {
        r.metadata.seeds = vec![seed];
    }
    let mut report = average_reports(&reports)?;
    let m = &mut report.metadata;
    m.dataset = config.dataset.clone().unwrap_or_else(|| {
        config
            .bundle
            .as_deref()
            .and_then(Path::file_name)
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    m.explainer = if config.scores.is_some() { "scores".into() } else { config.explainer.as_str().into() };
    m.k = config.k;
    m.config = serde_json::to_value(config).expect("config serializes");
    save_report(&config.out, &report, config.svg)?;
    Ok(())
}

fn cmd_macs(args: MacsArgs) -> Result<(), Failure> {
    let config = args.run.resolve()?;
    let rows: Vec<(f64, usize, u64)> = if config.bundle.is_some() {
        let (g, w) = load_inputs(&config)?;
        config
            .taus
            .iter()
            .map(|&t| {
                let kept = keep_count(g.num_edges(), t)?;
                Ok((t, kept, count_macs(g.num_nodes(), kept, &w)))
            })
            .collect::<Result<_, shapsparse::Error>>()?
    } else {
        let nodes = args.nodes.ok_or_else(|| Failure::usage("--nodes", "required without --bundle"))?;
        let edges = args.edges.ok_or_else(|| Failure::usage("--edges", "required without --bundle"))?;
        let dims = args.dims.ok_or_else(|| Failure::usage("--dims", "required without --bundle"))?;
        if dims.len() < 2 {
            return Err(Failure::usage("--dims", "give the input width and at least one layer width"));
        }
        config
            .taus
            .iter()
            .map(|&t| {
                let kept = keep_count(edges, t)?;
                Ok((t, kept, count_gcn_macs(nodes, kept, &dims[1..])))
            })
            .collect::<Result<_, shapsparse::Error>>()?
    };
    println!("tau,kept_edges,macs");
    for (t, kept, macs) in rows {
        println!("{t},{kept},{macs}");
    }
    Ok(())
}

fn cmd_gen_synth(config: &config::SynthConfig) -> Result<(), Failure> {
    let p = &config.params;
    let (g, truth) = generate_synthetic(config.seed, p)?;
    let w = planted_gcn(p.num_features, p.num_classes, config.hidden, config.gain)?;
    create_dir(&config.out)?;
    save_bundle(&g, &config.out.join("bundle"))?;
    truth.save(&config.out.join("planted.u8"))?;
    save_weights(&w, &config.out.join("weights"))?;
    let mut json = serde_json::to_string_pretty(config).expect("config serializes");
    json.push('\n');
    write_atomic(&config.out.join("gen-synth.config.json"), json.as_bytes())?;
    println!(
        "{} nodes, {} edges, {} planted noise edges ({:.3})",
        g.num_nodes(),
        g.num_edges(),
        truth.noise_count(),
        truth.noise_fraction()
    );
    Ok(())
}
