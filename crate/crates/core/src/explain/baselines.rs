use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Explanation, Method, NodeExplainer, NodeGame};
use crate::engine::Engine;
use crate::error::{Error, Result};

pub const DEFAULT_SALIENCY_STEP: f64 = 1e-3;

/// Gradient magnitude of the target probability with respect to each
/// player's mask value, taken at the full graph by central differences.
#[derive(Debug, Clone, Copy)]
pub struct Saliency {
    pub step: f64,
}

impl Default for Saliency {
    fn default() -> Self {
        Self {
            step: DEFAULT_SALIENCY_STEP,
        }
    }
}

impl NodeExplainer for Saliency {
    fn method(&self) -> Method {
        Method::Saliency
    }

    fn explain(&self, engine: &Engine<'_>, node: usize, target: usize) -> Result<Explanation> {
        saliency_baseline(engine, node, target, self.step)
    }
}

pub fn saliency_baseline(engine: &Engine<'_>, node: usize, target: usize, step: f64) -> Result<Explanation> {
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::arg("step", format!("{step} must lie in (0, 1)")));
    }
    let game = NodeGame::new(engine, node, target)?;
    let n = game.num_players();
    let mut values = vec![1.0; n];
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        values[i] = 1.0 + step;
        let up = game.value_with(&values);
        values[i] = 1.0 - step;
        let down = game.value_with(&values);
        values[i] = 1.0;
        scores.push(((up - down) / (2.0 * step)).abs());
    }
    Ok(game.explanation(Method::Saliency, 0.0, 2 * n, scores))
}

/// Uniform `[0, 1)` scores, reproducible per `(seed, node)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomScores {
    pub seed: u64,
}

impl NodeExplainer for RandomScores {
    fn method(&self) -> Method {
        Method::Random
    }

    fn explain(&self, engine: &Engine<'_>, node: usize, target: usize) -> Result<Explanation> {
        let game = NodeGame::new(engine, node, target)?;
        let scores = random_scores(game.num_players(), self.seed, node);
        Ok(game.explanation(Method::Random, 0.0, 0, scores))
    }
}

/// Random scores for `node`, targeting its full-graph prediction.
pub fn random_baseline(engine: &Engine<'_>, node: usize, seed: u64) -> Result<Explanation> {
    let target = engine.forward(None, &[node])?[&node].predicted_class;
    RandomScores { seed }.explain(engine, node, target)
}

fn random_scores(n: usize, seed: u64, node: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64);
    (0..n).map(|_| rng.random::<f64>()).collect()
}
