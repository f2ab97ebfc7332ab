mod common;

use cmc_lab::curvature::{covariant_derivatives_along_geodesics, curvature_at, riemann_at, Depth};
use cmc_lab::metric::{coordinate_basis, orthonormalize};
use cmc_lab::rng::{random_orthogonal, seeded};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn symmetries_hold_at_random_points() {
    let mut rng = seeded(7);
    for (name, chart) in common::zoo3() {
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-0.3..0.3)).collect();
            let frame = orthonormalize(&chart, &x, &coordinate_basis(3)).unwrap();
            let cd = riemann_at(&chart, &DVector::from_vec(x), &frame).unwrap();
            let (anti, pair, bianchi) = cd.symmetry_defects();
            assert!(anti.max(pair).max(bianchi) < 1e-8, "{name}: {anti} {pair} {bianchi}");
        }
    }
}

#[test]
fn euclidean_arrays_vanish() {
    let chart = cmc_lab::metric::MetricChart::euclidean(3);
    let cd = riemann_at(&chart, &DVector::from_column_slice(&[0.4, -1.0, 2.0]), &coordinate_basis(3)).unwrap();
    assert!(cd.r.iter().chain(cd.dr.as_ref().unwrap()).chain(cd.d2r.as_ref().unwrap()).all(|v| *v == 0.0));
}

#[test]
fn covariant_derivative_agrees_with_geodesic_differences() {
    for (name, chart) in common::zoo3() {
        let p = DVector::from_column_slice(&[0.08, -0.05, 0.1]);
        let frame = orthonormalize(&chart, p.as_slice(), &coordinate_basis(3)).unwrap();
        let cd = riemann_at(&chart, &p, &frame).unwrap();
        let (dr, _) = covariant_derivatives_along_geodesics(&chart, &p, &frame, 2e-3).unwrap();
        let exact = cd.dr.as_ref().unwrap();
        let n = 3;
        let at = |d: &[f64], i: usize, j: usize, k: usize, l: usize, a: usize| d[(((i * n + j) * n + k) * n + l) * n + a];
        for (c, v) in dr.iter().enumerate() {
            assert!((v - exact[c]).abs() < 1e-6, "{name}: component {c}");
        }
        // Second Bianchi identity: cyclic sum over (derivative, i, j).
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        for a in 0..n {
                            let s = at(exact, i, j, k, l, a) + at(exact, j, a, k, l, i) + at(exact, a, i, k, l, j);
                            assert!(s.abs() < 1e-9, "{name}: {s}");
                        }
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn frame_rotation_is_tensorial(seed in any::<u64>()) {
        let chart = common::conformal3();
        let p = DVector::from_column_slice(&[0.05, 0.02, -0.04]);
        let frame = orthonormalize(&chart, p.as_slice(), &coordinate_basis(3)).unwrap();
        let cd = curvature_at(&chart, &p, &frame, Depth::Second).unwrap();
        let q = random_orthogonal(&mut seeded(seed), 3);
        let rotated_frame: Vec<DVector<f64>> =
            (0..3).map(|a| (0..3).fold(DVector::zeros(3), |acc, b| acc + &frame[b] * q[(b, a)])).collect();
        let direct = curvature_at(&chart, &p, &rotated_frame, Depth::Second).unwrap();
        let transformed = cd.rotated(&q);
        for (a, b) in direct.r.iter().zip(&transformed.r) {
            prop_assert!((a - b).abs() < 1e-8);
        }
        for (a, b) in direct.dr.as_ref().unwrap().iter().zip(transformed.dr.as_ref().unwrap()) {
            prop_assert!((a - b).abs() < 1e-8);
        }
        for (a, b) in direct.d2r.as_ref().unwrap().iter().zip(transformed.d2r.as_ref().unwrap()) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }
}
