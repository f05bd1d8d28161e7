//! Run settings: command-line flags layered over an optional TOML or JSON
//! file, layered over defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use shapsparse::eval::DEFAULT_FIDELITY_FRACTION;
use shapsparse::explain::{Method, DEFAULT_PLAYER_LIMIT, DEFAULT_SALIENCY_STEP};
use shapsparse::synth::SynthParams;
use shapsparse::Aggregation;

use crate::Failure;

/// Flags shared by the pipeline subcommands. Every field is optional so
/// that an unset flag falls through to the config file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    /// TOML or JSON file holding any of these settings; flags win
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Graph bundle directory
    #[arg(long)]
    pub bundle: Option<PathBuf>,

    /// Weights directory, or the path of weights.json
    #[arg(long)]
    pub weights: Option<PathBuf>,

    /// exact, kernel, saliency or random
    #[arg(long)]
    pub explainer: Option<Method>,

    /// Coalitions per node for the kernel explainer
    #[arg(long)]
    pub k: Option<usize>,

    /// Seed, or a comma-separated list of seeds to average over (sweep)
    #[arg(long, value_delimiter = ',')]
    #[serde(deserialize_with = "one_or_many")]
    pub seed: Option<Vec<u64>>,

    /// mean, sum or weighted_mean
    #[arg(long)]
    pub aggregation: Option<Aggregation>,

    /// Fold absolute local scores instead of signed ones
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub abs_transform: Option<bool>,

    /// Comma-separated sparsity levels in [0, 1), ascending
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,

    /// Sparsity level for `sparsify`
    #[arg(long)]
    pub tau: Option<f64>,

    /// Edge fraction removed for the reported fidelity, in (0, 1)
    #[arg(long)]
    pub fidelity_fraction: Option<f64>,

    /// all, test, or a file of node ids
    #[arg(long)]
    pub node_filter: Option<String>,

    /// Recompute GCN degrees from each coalition's mask
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub renormalize_per_mask: Option<bool>,

    /// Players above which exact enumeration refuses a node
    #[arg(long)]
    pub player_limit: Option<usize>,

    /// Finite-difference step of the saliency baseline
    #[arg(long)]
    pub saliency_step: Option<f64>,

    /// explanations.jsonl to read instead of the one in the output directory
    #[arg(long)]
    pub explanations: Option<PathBuf>,

    /// scores.csv to read instead of the one in the output directory
    #[arg(long)]
    pub scores: Option<PathBuf>,

    /// Also write curve.svg (sweep)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub svg: Option<bool>,

    /// Name recorded in report metadata; defaults to the bundle directory name
    #[arg(long)]
    pub dataset: Option<String>,

    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Worker threads, 0 for one per core; results do not depend on it
    #[arg(long)]
    pub workers: Option<usize>,
}

fn one_or_many<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Vec<u64>>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(u64),
        Many(Vec<u64>),
    }
    Ok(Some(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    }))
}

/// Fully resolved settings, echoed into report metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub bundle: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub explainer: Method,
    pub k: Option<usize>,
    pub seed: Vec<u64>,
    pub aggregation: Aggregation,
    pub abs_transform: bool,
    pub taus: Vec<f64>,
    pub tau: f64,
    pub fidelity_fraction: f64,
    pub node_filter: String,
    pub renormalize_per_mask: bool,
    pub player_limit: usize,
    pub saliency_step: f64,
    pub explanations: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub svg: bool,
    pub dataset: Option<String>,
    pub out: PathBuf,
    pub workers: usize,
}

fn read_config_file<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage("--config", format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Failure::usage("--config", format!("{}: {}", path.display(), e.replace('\n', " "))))
}

impl RunArgs {
    pub fn resolve(self) -> Result<RunConfig, Failure> {
        let file: RunArgs = read_config_file(self.config.as_deref())?;
        macro_rules! pick {
            ($field:ident) => {
                self.$field.or(file.$field)
            };
        }
        let config = RunConfig {
            bundle: pick!(bundle),
            weights: pick!(weights),
            explainer: pick!(explainer).unwrap_or(Method::Kernel),
            k: pick!(k),
            seed: pick!(seed).unwrap_or_else(|| vec![0]),
            aggregation: pick!(aggregation).unwrap_or_default(),
            abs_transform: pick!(abs_transform).unwrap_or(false),
            taus: pick!(taus).unwrap_or_else(|| (0..10).map(|i| i as f64 / 10.0).collect()),
            tau: pick!(tau).unwrap_or(0.0),
            fidelity_fraction: pick!(fidelity_fraction).unwrap_or(DEFAULT_FIDELITY_FRACTION),
            node_filter: pick!(node_filter).unwrap_or_else(|| "all".into()),
            renormalize_per_mask: pick!(renormalize_per_mask).unwrap_or(false),
            player_limit: pick!(player_limit).unwrap_or(DEFAULT_PLAYER_LIMIT),
            saliency_step: pick!(saliency_step).unwrap_or(DEFAULT_SALIENCY_STEP),
            explanations: pick!(explanations),
            scores: pick!(scores),
            svg: pick!(svg).unwrap_or(false),
            dataset: pick!(dataset),
            out: pick!(out).unwrap_or_else(|| PathBuf::from(".")),
            workers: pick!(workers).unwrap_or(0),
        };
        config.validate()?;
        Ok(config)
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), Failure> {
        if self.seed.is_empty() {
            return Err(Failure::usage("--seed", "at least one seed is required"));
        }
        if self.taus.is_empty() {
            return Err(Failure::usage("--taus", "at least one sparsity level is required"));
        }
        for &t in &self.taus {
            if !(0.0..1.0).contains(&t) {
                return Err(Failure::usage("--taus", format!("{t} is outside [0, 1)")));
            }
        }
        if self.taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Failure::usage("--taus", "levels must be strictly ascending"));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Failure::usage("--tau", format!("{} is outside [0, 1)", self.tau)));
        }
        if !(self.fidelity_fraction > 0.0 && self.fidelity_fraction < 1.0) {
            return Err(Failure::usage("--fidelity-fraction", format!("{} is outside (0, 1)", self.fidelity_fraction)));
        }
        if !(self.saliency_step > 0.0 && self.saliency_step < 1.0) {
            return Err(Failure::usage("--saliency-step", format!("{} is outside (0, 1)", self.saliency_step)));
        }
        if self.k == Some(0) {
            return Err(Failure::usage("--k", "must be positive"));
        }
        Ok(())
    }

    pub fn bundle(&self) -> Result<&Path, Failure> {
        self.bundle.as_deref().ok_or_else(|| Failure::usage("--bundle", "required"))
    }

    pub fn weights(&self) -> Result<&Path, Failure> {
        self.weights.as_deref().ok_or_else(|| Failure::usage("--weights", "required"))
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthArgs {
    /// TOML or JSON file holding any of these settings; flags win
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub nodes_per_class: Option<usize>,
    #[arg(long)]
    pub num_classes: Option<usize>,
    /// Edge probability within a class
    #[arg(long)]
    pub p_in: Option<f64>,
    /// Edge probability across classes (the planted noise)
    #[arg(long)]
    pub p_out: Option<f64>,
    #[arg(long)]
    pub num_features: Option<usize>,
    #[arg(long)]
    pub signal: Option<f64>,
    #[arg(long)]
    pub feature_noise: Option<f64>,
    /// Cap on each node's degree
    #[arg(long)]
    pub max_degree: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Width of the planted model's hidden layer
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Output gain of the planted model
    #[arg(long)]
    pub gain: Option<f64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub params: SynthParams,
    pub hidden: usize,
    pub gain: f64,
    pub out: PathBuf,
}

impl SynthArgs {
    pub fn resolve(self) -> Result<SynthConfig, Failure> {
        let file: SynthArgs = read_config_file(self.config.as_deref())?;
        let d = SynthParams::default();
        macro_rules! pick {
            ($field:ident) => {
                self.$field.or(file.$field)
            };
        }
        let params = SynthParams {
            nodes_per_class: pick!(nodes_per_class).unwrap_or(d.nodes_per_class),
            num_classes: pick!(num_classes).unwrap_or(d.num_classes),
            p_in: pick!(p_in).unwrap_or(d.p_in),
            p_out: pick!(p_out).unwrap_or(d.p_out),
            num_features: pick!(num_features).unwrap_or(d.num_features),
            signal: pick!(signal).unwrap_or(d.signal),
            feature_noise: pick!(feature_noise).unwrap_or(d.feature_noise),
            max_degree: pick!(max_degree).or(d.max_degree),
            train_fraction: pick!(train_fraction).unwrap_or(d.train_fraction),
            val_fraction: pick!(val_fraction).unwrap_or(d.val_fraction),
        };
        params.validate().map_err(crate::usage_from_core)?;
        let hidden = pick!(hidden).unwrap_or(16);
        if hidden < params.num_classes {
            return Err(Failure::usage("--hidden", "must be at least the number of classes"));
        }
        Ok(SynthConfig {
            seed: pick!(seed).unwrap_or(0),
            params,
            hidden,
            gain: pick!(gain).unwrap_or(4.0),
            out: pick!(out).unwrap_or_else(|| PathBuf::from(".")),
        })
    }
}
