//! Kernel-weighted linear surrogate for Shapley values.
//!
//! Fits `g(m) = phi_0 + sum_i phi_i m_i` by weighted least squares over
//! sampled coalitions with the Shapley kernel
//! `pi(S) = (n - 1) / (C(n, |S|) |S| (n - |S|))`.
//! The empty and full coalitions are hard constraints, eliminated from the
//! system: `phi_0 = v(empty)` and the last player's value is
//! `v(full) - v(empty) - sum of the others`.
//!
//! Sampling is stratified by coalition size. Sizes `s` and `n - s` form one
//! stratum whose budget share follows its total kernel mass. Strata the
//! budget can cover are enumerated, largest mass first; the rest are
//! sampled as complementary pairs `(S, P \ S)` without replacement and each
//! sample carries an equal share of its stratum's mass.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Explanation, Method, NodeExplainer, NodeGame};
use crate::engine::Engine;
use crate::error::{Error, Result};

pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Player subset as a bitset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Coalition {
    words: Vec<u64>,
    size: usize,
}

impl Coalition {
    pub fn empty(n: usize) -> Self {
        Self {
            words: vec![0; n.div_ceil(64)],
            size: 0,
        }
    }

    pub fn full(n: usize) -> Self {
        Self::empty(n).complement(n)
    }

    pub fn from_indices(n: usize, members: impl IntoIterator<Item = usize>) -> Self {
        let mut c = Self::empty(n);
        for i in members {
            assert!(i < n, "player {i} out of range");
            if !c.contains(i) {
                c.words[i / 64] |= 1 << (i % 64);
                c.size += 1;
            }
        }
        c
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn complement(&self, n: usize) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        if !n.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (n % 64)) - 1;
            }
        }
        Self {
            words,
            size: n - self.size,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionSample {
    pub coalition: Coalition,
    pub weight: f64,
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight of one coalition of size `s` among `n` players.
pub fn kernel_weight(n: usize, s: usize) -> f64 {
    assert!(s > 0 && s < n, "kernel weight is only finite for 0 < s < n");
    (n - 1) as f64 / (binomial(n, s) * s as f64 * (n - s) as f64)
}

/// Total kernel mass of all coalitions of size `s`.
fn size_mass(n: usize, s: usize) -> f64 {
    (n - 1) as f64 / (s as f64 * (n - s) as f64)
}

fn nontrivial_coalitions(n: usize) -> usize {
    if n >= usize::BITS as usize {
        usize::MAX
    } else {
        (1usize << n).saturating_sub(2)
    }
}

/// `min(2^n - 2, 2048 * ceil(n / 64))`.
pub fn default_sample_count(n: usize) -> usize {
    nontrivial_coalitions(n).min(2048 * n.div_ceil(64))
}

/// Calls `f` with every size-`s` subset of `0..n` in lexicographic order.
fn for_each_combination(n: usize, s: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        f(&idx);
        let Some(pos) = (0..s).rev().find(|&i| idx[i] != i + n - s) else {
            return;
        };
        idx[pos] += 1;
        for j in pos + 1..s {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

struct Stratum {
    size: usize,
    /// Coalitions in the stratum, complements included.
    count: f64,
    mass: f64,
    self_complementary: bool,
}

/// Draws at most `budget` distinct non-trivial coalitions with their
/// regression weights. With `budget >= 2^n - 2` every coalition is
/// enumerated with its exact kernel weight.
pub fn sample_coalitions(n: usize, budget: usize, rng: &mut impl Rng) -> Vec<CoalitionSample> {
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    let enumerate = |s: usize, out: &mut Vec<CoalitionSample>| {
        let w = kernel_weight(n, s);
        for_each_combination(n, s, |idx| {
            out.push(CoalitionSample {
                coalition: Coalition::from_indices(n, idx.iter().copied()),
                weight: w,
            })
        });
    };
    if budget >= nontrivial_coalitions(n) {
        for s in 1..n {
            enumerate(s, &mut out);
        }
        return out;
    }

    let strata: Vec<Stratum> = (1..=n / 2)
        .map(|s| {
            let self_complementary = 2 * s == n;
            let sides = if self_complementary { 1.0 } else { 2.0 };
            Stratum {
                size: s,
                count: binomial(n, s) * sides,
                mass: size_mass(n, s) * sides,
                self_complementary,
            }
        })
        .collect();

    let mut remaining = budget as f64;
    let mut remaining_mass: f64 = strata.iter().map(|s| s.mass).sum();
    let mut first_sampled = strata.len();
    for (i, st) in strata.iter().enumerate() {
        if remaining * st.mass / remaining_mass + 1e-9 < st.count {
            first_sampled = i;
            break;
        }
        enumerate(st.size, &mut out);
        if !st.self_complementary {
            enumerate(n - st.size, &mut out);
        }
        remaining -= st.count;
        remaining_mass -= st.mass;
    }
    let rest = &strata[first_sampled..];
    if rest.is_empty() {
        return out;
    }

    // whole complementary pairs, split by largest remainder
    let pair_budget = (remaining.max(0.0) as usize) / 2;
    let capacity: Vec<usize> = rest.iter().map(|st| (st.count / 2.0).min(usize::MAX as f64) as usize).collect();
    let exact: Vec<f64> = rest.iter().map(|st| pair_budget as f64 * st.mass / remaining_mass).collect();
    let mut pairs: Vec<usize> = exact.iter().zip(&capacity).map(|(&x, &c)| (x.floor() as usize).min(c)).collect();
    let mut leftover = pair_budget.saturating_sub(pairs.iter().sum());
    let mut order: Vec<usize> = (0..rest.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    while leftover > 0 {
        let mut placed = false;
        for &i in &order {
            if leftover > 0 && pairs[i] < capacity[i] {
                pairs[i] += 1;
                leftover -= 1;
                placed = true;
            }
        }
        if !placed {
            break;
        }
    }

    for (st, &want) in rest.iter().zip(&pairs) {
        if want == 0 {
            continue;
        }
        let mut seen: HashSet<Coalition> = HashSet::with_capacity(want);
        let mut drawn = Vec::with_capacity(2 * want);
        let mut attempts = 0usize;
        while seen.len() < want && attempts < 64 * want + 1024 {
            attempts += 1;
            let c = Coalition::from_indices(n, index::sample(rng, n, st.size));
            let comp = c.complement(n);
            // a self-complementary pair is identified by the side holding player 0
            let key = if st.self_complementary && !c.contains(0) { comp.clone() } else { c.clone() };
            if seen.insert(key) {
                drawn.push(c);
                drawn.push(comp);
            }
        }
        let w = st.mass / drawn.len() as f64;
        out.extend(drawn.into_iter().map(|coalition| CoalitionSample { coalition, weight: w }));
    }
    out
}

/// Solves the constrained weighted least-squares problem. Returns the
/// player values and whether ridge regularization was needed.
pub fn solve_constrained_wls(
    n: usize,
    samples: &[(Coalition, f64, f64)],
    empty_value: f64,
    full_value: f64,
) -> (Vec<f64>, bool) {
    let delta = full_value - empty_value;
    match n {
        0 => return (Vec::new(), false),
        1 => return (vec![delta], false),
        _ => {}
    }
    let last = n - 1;
    let dim = n - 1;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DVector::<f64>::zeros(dim);
    let mut z = vec![0.0; dim];
    for (c, weight, value) in samples {
        let m_last = c.contains(last) as u8 as f64;
        let r = value - empty_value - m_last * delta;
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = c.contains(i) as u8 as f64 - m_last;
        }
        for i in 0..dim {
            if z[i] == 0.0 {
                continue;
            }
            b[i] += weight * z[i] * r;
            for j in 0..dim {
                a[(i, j)] += weight * z[i] * z[j];
            }
        }
    }

    let (x, regularized) = match well_conditioned_cholesky(&a) {
        Some(chol) => (chol.solve(&b), false),
        None => {
            let ridge = &a + DMatrix::identity(dim, dim) * RIDGE_LAMBDA;
            let x = match well_conditioned_cholesky(&ridge) {
                Some(chol) => chol.solve(&b),
                None => ridge
                    .svd(true, true)
                    .solve(&b, 1e-12)
                    .unwrap_or_else(|_| DVector::zeros(dim)),
            };
            (x, true)
        }
    };
    let mut phi: Vec<f64> = x.iter().copied().collect();
    phi.push(delta - phi.iter().sum::<f64>());
    (phi, regularized)
}

fn well_conditioned_cholesky(a: &DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let chol = a.clone().cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    (min > 0.0 && min * min > 1e-12 * max * max).then_some(chol)
}

/// Kernel-surrogate Shapley approximation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KernelShapley {
    /// Sampled coalitions per node; `None` picks [`default_sample_count`].
    pub samples: Option<usize>,
    pub seed: u64,
}

impl NodeExplainer for KernelShapley {
    fn method(&self) -> Method {
        Method::Kernel
    }

    fn explain(&self, engine: &Engine<'_>, node: usize, target: usize) -> Result<Explanation> {
        kernel_shapley(engine, node, target, self.samples, self.seed)
    }
}

pub fn kernel_shapley(
    engine: &Engine<'_>,
    node: usize,
    target: usize,
    samples: Option<usize>,
    seed: u64,
) -> Result<Explanation> {
    let game = NodeGame::new(engine, node, target)?;
    let n = game.num_players();
    let empty_value = game.empty_value();
    if n == 0 {
        return Ok(game.explanation(Method::Kernel, empty_value, 0, Vec::new()));
    }
    let total = nontrivial_coalitions(n);
    let k = samples.unwrap_or_else(|| default_sample_count(n));
    let required = (2 * n + 2).min(total);
    if k < required {
        return Err(Error::TooFewSamples {
            samples: k,
            players: n,
            required,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64);
    let drawn = sample_coalitions(n, k, &mut rng);

    // sampled coalitions are distinct, so each is evaluated exactly once
    let full_value = game.full_value();
    let evaluated: Vec<(Coalition, f64, f64)> = drawn
        .into_iter()
        .map(|s| {
            let value = game.value(|i| s.coalition.contains(i));
            (s.coalition, s.weight, value)
        })
        .collect();
    let (phi, regularized) = solve_constrained_wls(n, &evaluated, empty_value, full_value);
    let mut e = game.explanation(Method::Kernel, empty_value, evaluated.len(), phi);
    e.regularized = regularized;
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen from tests/oracles/gcn_oracle.py.
    #[test]
    fn kernel_weight_values() {
        assert!((kernel_weight(4, 1) - 0.25).abs() < 1e-15);
        assert!((kernel_weight(4, 2) - 3.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut seen = Vec::new();
        for_each_combination(5, 2, |c| seen.push(c.to_vec()));
        assert_eq!(seen.len(), 10);
        assert_eq!(seen[0], vec![0, 1]);
        assert_eq!(seen[9], vec![3, 4]);
    }

    #[test]
    fn complement_masks_tail() {
        let c = Coalition::from_indices(70, [0, 65]);
        let comp = c.complement(70);
        assert_eq!(comp.size(), 68);
        assert!(!comp.contains(65) && comp.contains(69) && comp.contains(1));
        assert_eq!(comp.complement(70), c);
    }

    #[test]
    fn full_enumeration_when_budget_covers_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sample_coalitions(4, 14, &mut rng);
        assert_eq!(s.len(), 14);
        let total: f64 = s.iter().map(|c| c.weight).sum();
        let expected: f64 = (1..4).map(|k| size_mass(4, k)).sum();
        assert!((total - expected).abs() < 1e-12);
    }

    #[test]
    fn samples_are_distinct_pairs_and_conserve_mass() {
        let n = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_coalitions(n, 200, &mut rng);
        assert!(s.len() <= 200);
        let set: HashSet<&Coalition> = s.iter().map(|c| &c.coalition).collect();
        assert_eq!(set.len(), s.len());
        for c in &s {
            assert!(set.contains(&c.coalition.complement(n)), "complement present");
            assert!(c.weight > 0.0);
        }
        let total: f64 = s.iter().map(|c| c.weight).sum();
        let expected: f64 = (1..n).map(|k| size_mass(n, k)).sum();
        assert!((total - expected).abs() < 1e-9, "{total} vs {expected}");
    }

    #[test]
    fn linear_game_is_recovered_exactly() {
        let n = 9;
        let coef: Vec<f64> = (0..n).map(|i| (i as f64 - 4.0) * 0.1).collect();
        let base = 0.3;
        let v = |c: &Coalition| base + (0..n).filter(|&i| c.contains(i)).map(|i| coef[i]).sum::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<_> = sample_coalitions(n, 2 * n + 2, &mut rng)
            .into_iter()
            .map(|s| {
                let val = v(&s.coalition);
                (s.coalition, s.weight, val)
            })
            .collect();
        let (phi, regularized) = solve_constrained_wls(n, &samples, base, v(&Coalition::full(n)));
        assert!(!regularized);
        for (p, c) in phi.iter().zip(&coef) {
            assert!((p - c).abs() < 1e-10, "{phi:?}");
        }
    }

    #[test]
    fn singular_system_is_flagged() {
        // every sample keeps players 0 and 1 together, so they cannot be separated
        let n = 3;
        let samples = vec![
            (Coalition::from_indices(n, [0, 1]), 1.0, 0.5),
            (Coalition::from_indices(n, [2]), 1.0, 0.2),
        ];
        let (phi, regularized) = solve_constrained_wls(n, &samples, 0.0, 0.7);
        assert!(regularized);
        assert!((phi.iter().sum::<f64>() - 0.7).abs() < 1e-9);
    }
}
