use super::{Explanation, Method, NodeExplainer, NodeGame};
use crate::engine::Engine;
use crate::error::{Error, Result};

pub const DEFAULT_PLAYER_LIMIT: usize = 20;

/// Shapley values by full enumeration of the `2^n` coalitions.
#[derive(Debug, Clone, Copy)]
pub struct ExactShapley {
    pub player_limit: usize,
}

impl Default for ExactShapley {
    fn default() -> Self {
        Self {
            player_limit: DEFAULT_PLAYER_LIMIT,
        }
    }
}

impl NodeExplainer for ExactShapley {
    fn method(&self) -> Method {
        Method::Exact
    }

    fn explain(&self, engine: &Engine<'_>, node: usize, target: usize) -> Result<Explanation> {
        exact_shapley(engine, node, target, self.player_limit)
    }
}

/// Refuses with [`Error::TooManyPlayers`] above `player_limit` players.
pub fn exact_shapley(engine: &Engine<'_>, node: usize, target: usize, player_limit: usize) -> Result<Explanation> {
    let game = NodeGame::new(engine, node, target)?;
    let n = game.num_players();
    if n > player_limit || n >= usize::BITS as usize - 1 {
        return Err(Error::TooManyPlayers {
            node,
            players: n,
            limit: player_limit,
        });
    }
    let table = coalition_table(&game);
    let scores = shapley_from_table(n, &table);
    Ok(game.explanation(Method::Exact, table[0], table.len(), scores))
}

/// `table[mask]` is the value of the coalition whose bit `i` marks player `i`.
fn coalition_table(game: &NodeGame<'_, '_>) -> Vec<f64> {
    let n = game.num_players();
    let value = |mask: usize| game.value(|i| mask >> i & 1 == 1);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..1usize << n).into_par_iter().map(value).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..1usize << n).map(value).collect()
    }
}

/// Shapley values of an `n`-player game given as a full value table:
/// `phi_i = sum over S without i of |S|! (n-|S|-1)! / n! * (v(S + i) - v(S))`.
pub fn shapley_from_table(n: usize, table: &[f64]) -> Vec<f64> {
    assert_eq!(table.len(), 1 << n, "value table size");
    if n == 0 {
        return Vec::new();
    }
    // |S|!(n-|S|-1)!/n! = 1 / (n * C(n-1, |S|))
    let mut binom = vec![1.0f64; n];
    for s in 1..n {
        binom[s] = binom[s - 1] * (n - s) as f64 / s as f64;
    }
    let weight: Vec<f64> = binom.iter().map(|c| 1.0 / (n as f64 * c)).collect();

    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for mask in 0..table.len() {
            if mask & bit == 0 {
                acc += weight[mask.count_ones() as usize] * (table[mask | bit] - table[mask]);
            }
        }
        *p = acc;
    }
    phi
}
