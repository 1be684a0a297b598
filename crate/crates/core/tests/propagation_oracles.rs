//! Chebyshev propagation against dense-eigendecomposition oracles on
//! randomized weighted graphs.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scatterlab_core::graph::WeightedGraph;
use scatterlab_core::operator::{assemble_laplacian, mu_norm, LaplacianOperator};
use scatterlab_core::propagation::{
    evolve, heat_apply, heat_apply_with, heat_kernel_row, DenseSpectral, HeatMethod,
};
use scatterlab_core::C64;

/// Connected random graph with extra chords and varied weights/measures.
fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> Arc<WeightedGraph> {
    let labels: Vec<i64> = (0..n as i64).collect();
    let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..3.0)).collect();
    let mut edges: Vec<(i64, i64, f64)> = (0..n as i64 - 1)
        .map(|i| (i, i + 1, rng.gen_range(0.1..2.0)))
        .collect();
    let chords = n / 3;
    for _ in 0..chords {
        let a = rng.gen_range(0..n as i64);
        let b = rng.gen_range(0..n as i64);
        if a != b && !edges.iter().any(|&(x, y, _)| (x, y) == (a.min(b), a.max(b))) {
            edges.push((a.min(b), a.max(b), rng.gen_range(0.1..2.0)));
        }
    }
    Arc::new(WeightedGraph::from_undirected_edges(labels, mu, &edges, 0).unwrap())
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

fn max_abs_err(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

#[test]
fn chebyshev_matches_dense_oracle_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
    for &n in &[7, 40, 113, 200] {
        let g = random_graph(&mut rng, n);
        let h = assemble_laplacian(g).unwrap();
        let dense = DenseSpectral::new(&h).unwrap();
        let psi = random_state(&mut rng, n);
        for &s in &[0.1, 1.0] {
            let a = heat_apply(&h, s, &psi).unwrap();
            let b = dense.heat_apply(s, &psi).unwrap();
            assert!(max_abs_err(&a, &b) <= 1e-9, "heat n = {n}, s = {s}");
        }
        for &t in &[1.0, 10.0, 100.0] {
            let a = evolve(&h, t, &psi).unwrap();
            let b = dense.unitary_apply(t, &psi).unwrap();
            assert!(max_abs_err(&a, &b) <= 1e-9, "unitary n = {n}, t = {t}");
        }
    }
}

#[test]
fn scaled_squaring_agrees_with_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let g = random_graph(&mut rng, 60);
    let h = assemble_laplacian(g).unwrap();
    let dense = DenseSpectral::new(&h).unwrap();
    let psi = random_state(&mut rng, 60);
    for &s in &[0.25, 1.5] {
        let a = heat_apply_with(&h, s, &psi, HeatMethod::ScaledSquaring).unwrap();
        let b = dense.heat_apply(s, &psi).unwrap();
        assert!(max_abs_err(&a, &b) <= 1e-9, "s = {s}");
    }
}

#[test]
fn unitary_norm_drift_over_long_times() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd01f);
    let g = random_graph(&mut rng, 90);
    let h = assemble_laplacian(g.clone()).unwrap();
    let mu = g.mu();
    for trial in 0..20 {
        let psi = random_state(&mut rng, 90);
        let norm0 = mu_norm(&psi, mu).unwrap();
        for &t in &[1.0, 10.0, 100.0] {
            let out = evolve(&h, t, &psi).unwrap();
            let drift = (mu_norm(&out, mu).unwrap() - norm0).abs();
            assert!(drift <= 1e-9 * norm0, "trial {trial}, t = {t}: drift {drift}");
        }
    }
}

#[test]
fn kernel_rows_behave_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xbeef);
    for &n in &[11, 64] {
        let g = random_graph(&mut rng, n);
        let h = assemble_laplacian(g.clone()).unwrap();
        for &s in &[0.1, 0.5, 1.0] {
            for x in [0, n / 2, n - 1] {
                let row = heat_kernel_row(&h, s, x, HeatMethod::Chebyshev).unwrap();
                assert!(row.invariant_violations(g.mu()).is_empty());
                let dense_row = heat_kernel_row(&h, s, x, HeatMethod::DenseEigen).unwrap();
                for (a, b) in row.values.iter().zip(dense_row.values.iter()) {
                    assert!((a - b).abs() <= 1e-9);
                }
            }
        }
    }
}

#[test]
fn semigroup_and_group_composition_against_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let g = random_graph(&mut rng, 48);
    let h: LaplacianOperator = assemble_laplacian(g).unwrap();
    let psi = random_state(&mut rng, 48);
    let split = heat_apply(&h, 0.7, &heat_apply(&h, 0.3, &psi).unwrap()).unwrap();
    let joint = heat_apply(&h, 1.0, &psi).unwrap();
    assert!(max_abs_err(&split, &joint) <= 1e-9);
    let split_u = evolve(&h, 13.0, &evolve(&h, 17.0, &psi).unwrap()).unwrap();
    let joint_u = evolve(&h, 30.0, &psi).unwrap();
    assert!(max_abs_err(&split_u, &joint_u) <= 1e-9);
}
