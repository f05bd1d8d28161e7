mod common;

use common::{dense_forward, random_gat, random_gcn, random_graph, rng, star};
use rand::Rng;
use shapsparse::explain::{exact_shapley, kernel_shapley, saliency_baseline, NodeGame, DEFAULT_SALIENCY_STEP};
use shapsparse::{EdgeMask, Engine, Normalization};

fn assert_close(got: &[f64], want: &[f64], tol: f64) {
    assert_eq!(got.len(), want.len());
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).abs() <= tol, "entry {i}: {g} vs {w}\n got {got:?}\nwant {want:?}");
    }
}

// Values below were produced by oracles/gcn_oracle.py (dense numpy,
// Shapley by enumerating all 120 permutations). Features pass through
// f32, hence the 1e-6 tolerance.
const STAR_FULL: [f64; 3] = [0.4701790343255893, 0.15359400764238218, 0.3762269580320285];
const STAR_BASE: f64 = 0.3439856251664736;
const STAR_PHI: [f64; 5] = [
    0.15803055233437435,
    -0.03588005598991013,
    0.18585105361413312,
    -0.10379399496709683,
    -0.0780141458323849,
];
const STAR_BASE_RENORM: f64 = 0.48159870809996436;
const STAR_PHI_RENORM: [f64; 5] = [
    0.19630424959359674,
    -0.0969188012462538,
    0.24259357712993446,
    -0.1918957523757466,
    -0.16150294687590608,
];
const STAR_SALIENCY: [f64; 5] = [
    0.15394017426995088,
    0.01909558086013452,
    0.19551253559429993,
    0.12870176038765058,
    0.09906591124325681,
];

#[test]
fn star_forward_matches_reference() {
    let (g, w) = star();
    let engine = Engine::new(&g, &w, Normalization::FullGraph).unwrap();
    let p = &engine.forward(None, &[0]).unwrap()[&0];
    assert_close(&p.probs, &STAR_FULL, 1e-6);
    assert_eq!(p.predicted_class, 0);
}

#[test]
fn star_exact_shapley_matches_reference() {
    let (g, w) = star();
    for (norm, base, phi) in [
        (Normalization::FullGraph, STAR_BASE, STAR_PHI),
        (Normalization::PerMask, STAR_BASE_RENORM, STAR_PHI_RENORM),
    ] {
        let engine = Engine::new(&g, &w, norm).unwrap();
        let e = exact_shapley(&engine, 0, 0, 20).unwrap();
        assert!((e.base - base).abs() < 1e-6, "{norm:?}");
        let scores: Vec<f64> = e.scores.iter().map(|s| s.1).collect();
        assert_close(&scores, &phi, 1e-6);
        assert_eq!(e.samples, 32);
    }
}

#[test]
fn star_saliency_matches_reference() {
    let (g, w) = star();
    let engine = Engine::new(&g, &w, Normalization::FullGraph).unwrap();
    let e = saliency_baseline(&engine, 0, 0, DEFAULT_SALIENCY_STEP).unwrap();
    let scores: Vec<f64> = e.scores.iter().map(|s| s.1).collect();
    assert_close(&scores, &STAR_SALIENCY, 1e-6);
}

#[test]
fn engine_matches_dense_gcn() {
    for seed in 0..8 {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 9, 0.25, 4, 3);
        let w = random_gcn(&mut r, &[4, 5, 3]);
        let mask: Vec<f64> = (0..g.num_edges())
            .map(|_| match r.random_range(0..3) {
                0 => 0.0,
                1 => 1.0,
                _ => r.random_range(0.0..1.0),
            })
            .collect();
        for (norm, renorm) in [(Normalization::FullGraph, false), (Normalization::PerMask, true)] {
            let engine = Engine::new(&g, &w, norm).unwrap();
            let got = engine.predict_all(Some(&EdgeMask::new(mask.clone()).unwrap())).unwrap();
            let want = dense_forward(&g, &w, &mask, renorm);
            for (p, q) in got.iter().zip(&want) {
                assert_close(&p.probs, q, 1e-12);
            }
        }
    }
}

#[test]
fn engine_matches_dense_gat() {
    for seed in 0..8 {
        let mut r = rng(100 + seed);
        let g = random_graph(&mut r, 9, 0.25, 4, 3);
        let w = random_gat(&mut r, 4, 3, 2, 3);
        let mask: Vec<f64> = (0..g.num_edges())
            .map(|_| if r.random_bool(0.3) { 0.0 } else { r.random_range(0.2..1.0) })
            .collect();
        for norm in [Normalization::FullGraph, Normalization::PerMask] {
            let engine = Engine::new(&g, &w, norm).unwrap();
            let got = engine.predict_all(Some(&EdgeMask::new(mask.clone()).unwrap())).unwrap();
            let want = dense_forward(&g, &w, &mask, false);
            for (p, q) in got.iter().zip(&want) {
                assert_close(&p.probs, q, 1e-12);
            }
        }
    }
}

/// Shapley values by averaging marginal contributions over every player
/// ordering, written without the closed-form weights used by the library.
fn permutation_shapley(game: &NodeGame<'_, '_>) -> Vec<f64> {
    fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == items.len() {
            out.push(items.clone());
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permutations(items, k + 1, out);
            items.swap(k, i);
        }
    }
    let n = game.num_players();
    let mut perms = Vec::new();
    permutations(&mut (0..n).collect(), 0, &mut perms);
    let mut phi = vec![0.0; n];
    for perm in &perms {
        let mut present = vec![0.0; n];
        let mut prev = game.value_with(&present);
        for &i in perm {
            present[i] = 1.0;
            let cur = game.value_with(&present);
            phi[i] += cur - prev;
            prev = cur;
        }
    }
    phi.iter().map(|p| p / perms.len() as f64).collect()
}

#[test]
fn exact_matches_permutation_average() {
    let mut checked = 0;
    for seed in 0..20 {
        let mut r = rng(200 + seed);
        let g = random_graph(&mut r, 7, 0.2, 3, 2);
        let w = if seed % 2 == 0 { random_gcn(&mut r, &[3, 4, 2]) } else { random_gat(&mut r, 3, 2, 2, 2) };
        let engine = Engine::new(&g, &w, Normalization::FullGraph).unwrap();
        for v in 0..g.num_nodes() {
            let game = NodeGame::new(&engine, v, 0).unwrap();
            if game.num_players() == 0 || game.num_players() > 7 {
                continue;
            }
            let exact = exact_shapley(&engine, v, 0, 20).unwrap();
            let scores: Vec<f64> = exact.scores.iter().map(|s| s.1).collect();
            assert_close(&scores, &permutation_shapley(&game), 1e-12);
            checked += 1;
        }
    }
    assert!(checked >= 20, "only {checked} nodes checked");
}

#[test]
fn kernel_with_full_budget_matches_exact_on_star() {
    let (g, w) = star();
    let engine = Engine::new(&g, &w, Normalization::FullGraph).unwrap();
    let k = kernel_shapley(&engine, 0, 0, Some(30), 0).unwrap();
    let scores: Vec<f64> = k.scores.iter().map(|s| s.1).collect();
    assert_close(&scores, &STAR_PHI, 1e-6);
    assert!((k.base - STAR_BASE).abs() < 1e-6);
}
