use std::f64::consts::PI;
use std::time::Instant;

use lstm_nudge::grom::{precompute_operators, GromOperators};
use lstm_nudge::numerics::UniformGrid;
use lstm_nudge::pod::PodBasis;
use proptest::prelude::*;

fn naive_rhs(r: usize, nu: f64, l: &[f64], n: &[f64], a: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; r];
    for k in 0..r {
        for i in 0..r {
            f[k] += nu * l[i * r + k] * a[i];
            for j in 0..r {
                f[k] += n[(i * r + j) * r + k] * a[i] * a[j];
            }
        }
    }
    f
}

fn filling() -> impl Strategy<Value = (usize, f64, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..9).prop_flat_map(|r| {
        (
            Just(r),
            0.0..1.0f64,
            prop::collection::vec(-10.0..10.0f64, r * r),
            prop::collection::vec(-10.0..10.0f64, r * r * r),
            prop::collection::vec(-3.0..3.0f64, r),
        )
    })
}

proptest! {
    #[test]
    fn rhs_matches_triple_loop((r, nu, l, n, a) in filling()) {
        let ops = GromOperators::new(r, nu, l.clone(), n.clone()).unwrap();
        let fast = ops.rhs(&a).unwrap();
        let slow = naive_rhs(r, nu, &l, &n, &a);
        let scale: f64 = slow.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in fast.iter().zip(&slow) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn skew_quadratic_term_conserves_norm((r, _nu, l, n, a) in filling()) {
        // N antisymmetric in (i, k) makes Σ N_ijk a_i a_j a_k vanish
        let mut skew = vec![0.0; r * r * r];
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    skew[(i * r + j) * r + k] = n[(i * r + j) * r + k] - n[(k * r + j) * r + i];
                }
            }
        }
        let ops = GromOperators::new(r, 0.0, l, skew).unwrap();
        let f = ops.rhs(&a).unwrap();
        let power: f64 = f.iter().zip(&a).map(|(x, y)| x * y).sum();
        let scale: f64 = f.iter().map(|v| v.abs()).sum::<f64>() * a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(power.abs() <= 1e-12 * scale.max(1.0));
    }
}

fn sine_basis(grid: &UniformGrid, r: usize) -> (PodBasis, f64) {
    let norm = grid.x().iter().map(|x| (PI * x).sin().powi(2)).sum::<f64>().sqrt();
    let modes = (1..=r)
        .map(|k| grid.x().iter().map(|x| (k as f64 * PI * x).sin() / norm).collect())
        .collect();
    (
        PodBasis {
            modes,
            singular_values: vec![1.0; r],
        },
        norm,
    )
}

// composite Simpson on [0, 1]
fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let mut s = f(0.0) + f(1.0);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn quadratic_operator_matches_continuous_integrals() {
    let grid = UniformGrid::unit(512).unwrap();
    let (basis, norm) = sine_basis(&grid, 3);
    let ops = precompute_operators(&basis, &grid, 1.0).unwrap();
    let h = grid.spacing();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                let (a, b, c) = ((i + 1) as f64 * PI, (j + 1) as f64 * PI, (k + 1) as f64 * PI);
                let integral = simpson(|x| -(a * x).sin() * b * (b * x).cos() * (c * x).sin(), 4096);
                let expected = integral / (h * norm.powi(3));
                let got = ops.quadratic(i, j, k);
                assert!(
                    (got - expected).abs() < 1e-6 * (1.0 + expected.abs()),
                    "N[{i},{j},{k}] = {got}, quadrature {expected}"
                );
            }
        }
    }
    for i in 0..3 {
        for k in 0..3 {
            let (a, c) = ((i + 1) as f64 * PI, (k + 1) as f64 * PI);
            let integral = simpson(|x| -a * a * (a * x).sin() * (c * x).sin(), 4096);
            let expected = integral / (h * norm * norm);
            assert!((ops.linear(i, k) - expected).abs() < 1e-5 * (1.0 + expected.abs()));
        }
    }
}

fn rhs_seconds(r: usize) -> f64 {
    let l: Vec<f64> = (0..r * r).map(|i| (i as f64).sin()).collect();
    let n: Vec<f64> = (0..r * r * r).map(|i| (i as f64 * 0.37).cos()).collect();
    let ops = GromOperators::new(r, 0.01, l, n).unwrap();
    let a: Vec<f64> = (0..r).map(|i| 1.0 / (1.0 + i as f64)).collect();
    let reps = (4.0e7 / (r * r * r) as f64) as usize;
    let mut best = f64::INFINITY;
    for _ in 0..15 {
        let clock = Instant::now();
        let mut acc = 0.0;
        for _ in 0..reps {
            acc += std::hint::black_box(ops.rhs(std::hint::black_box(&a)).unwrap())[0];
        }
        std::hint::black_box(acc);
        best = best.min(clock.elapsed().as_secs_f64());
    }
    best / reps as f64
}

#[test]
fn rhs_cost_grows_cubically() {
    let ratio = rhs_seconds(64) / rhs_seconds(32);
    assert!((8.0 * 0.7..=8.0 * 1.3).contains(&ratio), "cost ratio {ratio}");
}
