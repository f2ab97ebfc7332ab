use cmc_lab::model::{
    dtn, harmonic_decompose, harmonic_dimension, harmonic_spanning_set, laplacian, q, q_frac, reconstruct,
    sphere_laplacian, ModelOperator, Poly, Q,
};
use num_traits::ToPrimitive;
use proptest::prelude::*;

fn poly_strategy() -> impl Strategy<Value = Poly> {
    (2usize..=4).prop_flat_map(|n| {
        prop::collection::vec((prop::collection::vec(0u32..=2, n), -9i64..=9, 1i64..=4), 1..6).prop_map(move |terms| {
            terms
                .into_iter()
                .fold(Poly::zero(n), |acc, (e, a, b)| acc.add(&Poly::monomial(n, &e, q_frac(a, b))))
        })
    })
}

fn eval_f64(p: &Poly, y: &[f64]) -> f64 {
    p.terms()
        .map(|(e, c)| c.to_f64().unwrap() * e.iter().zip(y).map(|(&k, v)| v.powi(k as i32)).product::<f64>())
        .sum()
}

/// Sphere Laplacian by central differences of the degree-zero extension
/// `y ↦ p(y/|y|)` at a unit point.
fn sphere_laplacian_fd(p: &Poly, y: &[f64]) -> f64 {
    let f = |z: &[f64]| {
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let u: Vec<f64> = z.iter().map(|v| v / r).collect();
        eval_f64(p, &u)
    };
    let h = 1e-3;
    let f0 = f(y);
    (0..y.len())
        .map(|i| {
            let mut a = y.to_vec();
            let mut b = y.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - 2.0 * f0 + f(&b)) / (h * h)
        })
        .sum()
}

fn unit(n: usize, seed: u64) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|i| ((seed as f64 + 1.3) * (i as f64 + 0.7)).sin()).collect();
    let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / r).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_reconstructs_exactly(p in poly_strategy()) {
        let comps = harmonic_decompose(&p);
        prop_assert_eq!(reconstruct(&comps, p.nvars()), p);
        for c in &comps {
            prop_assert!(laplacian(&c.harmonic).is_zero());
            prop_assert!(c.harmonic.is_homogeneous());
            prop_assert_eq!(c.harmonic.degree(), Some(c.degree));
        }
    }

    #[test]
    fn sphere_laplacian_matches_finite_differences(p in poly_strategy(), seed in 0u64..100) {
        let y = unit(p.nvars(), seed);
        let exact = eval_f64(&sphere_laplacian(&p), &y);
        let fd = sphere_laplacian_fd(&p, &y);
        let scale = p.terms().map(|(_, c)| c.to_f64().unwrap().abs()).sum::<f64>().max(1.0);
        prop_assert!((exact - fd).abs() < 1e-4 * scale, "{} vs {}", exact, fd);
    }

    #[test]
    fn dtn_keeps_boundary_values_of_harmonics(p in poly_strategy()) {
        // Boundary data and its harmonic extension agree on the sphere, so
        // the map only depends on the restriction.
        let reduced = p.reduce_on_sphere();
        prop_assert!(dtn(&p).equal_on_sphere(&dtn(&reduced)));
        // dtn(p) = -Σ ℓ h_ℓ over the harmonic pieces of p.
        let mut want = Poly::zero(p.nvars());
        for c in harmonic_decompose(&p) {
            want = want.add(&c.harmonic.scale(&q(-(c.degree as i64))));
        }
        prop_assert!(dtn(&p).equal_on_sphere(&want));
    }
}

#[test]
fn operators_act_by_their_closed_forms() {
    for k in 1..=3u32 {
        for l in 0..=4u32 {
            for h in harmonic_spanning_set(k, l) {
                for op in ModelOperator::ALL {
                    let lambda: Q = op.closed_form(k, l);
                    assert!(op.apply(&h).equal_on_sphere(&h.scale(&lambda)), "{op:?} k={k} l={l}");
                }
            }
        }
    }
}

#[test]
fn combined_is_sphere_laplacian_minus_k_dtn() {
    // -ℓ(ℓ+k-1) + kℓ = -ℓ(ℓ-1)
    for k in 1..=4u32 {
        for l in 0..=6u32 {
            let lhs = ModelOperator::JPerp.closed_form(k, l) - ModelOperator::Dtn.closed_form(k, l) * q(k as i64);
            assert_eq!(lhs, ModelOperator::Combined.closed_form(k, l));
        }
    }
}

#[test]
fn harmonic_dimensions_on_low_spheres() {
    // Circle: 1, 2, 2, ...; two-sphere: 2l + 1.
    assert_eq!(harmonic_dimension(1, 0), 1);
    for l in 1..6 {
        assert_eq!(harmonic_dimension(1, l), 2);
        assert_eq!(harmonic_dimension(2, l), 2 * l as usize + 1);
    }
    assert_eq!(harmonic_dimension(3, 2), 9);
}
