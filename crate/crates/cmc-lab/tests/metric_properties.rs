mod common;

use cmc_lab::metric::{DerivativeScheme, MetricChart};
use nalgebra::DVector;
use proptest::prelude::*;

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn point3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.3f64..0.3, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn metric_is_symmetric_positive_definite(x in point3()) {
        for (name, chart) in common::zoo3() {
            let g = chart.metric(&x);
            prop_assert!((&g - g.transpose()).amax() < 1e-15, "{name}");
            prop_assert!(g.clone().cholesky().is_some(), "{name}");
        }
    }

    #[test]
    fn christoffel_fd_converges_at_second_order(x in point3()) {
        for (name, chart) in common::zoo3() {
            let exact = chart.christoffel(&x).unwrap();
            let mut errs = Vec::new();
            for h in [1e-2, 5e-3, 2.5e-3] {
                let fd = chart.clone().with_scheme(DerivativeScheme::FiniteDifference { steps: [h, 1e-4, 5e-4, 2e-3] }).unwrap();
                let approx = fd.christoffel(&x).unwrap();
                let e = exact.iter().zip(&approx).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                errs.push(e);
            }
            // Either the error is at round-off, or it decays at least like h².
            for w in errs.windows(2) {
                prop_assert!(w[1] < 1e-9 || w[0] / w[1] > 3.5, "{name}: {errs:?}");
            }
        }
    }

    #[test]
    fn geodesic_speed_is_conserved(x in point3(), v in prop::collection::vec(-1.0f64..1.0, 3)) {
        let v = dv(&v);
        prop_assume!(v.norm() > 0.1);
        for (name, chart) in common::zoo3() {
            let p = dv(&x);
            let s0 = chart.inner(&x, &v, &v);
            for t in [0.1, 0.25, 0.4] {
                let sol = chart.geodesic(&p, &v, t).unwrap();
                let s = chart.inner(sol.endpoint.as_slice(), &sol.velocity, &sol.velocity);
                let tol = (10.0 * sol.integrator_error_estimate).max(1e-12 * s0);
                prop_assert!((s - s0).abs() <= tol, "{name} t={t}: {s} vs {s0}");
                let g = chart.metric(sol.endpoint.as_slice());
                for (i, a) in sol.transported_frame.iter().enumerate() {
                    for (j, b) in sol.transported_frame.iter().enumerate() {
                        let want = if i == j { 1.0 } else { 0.0 };
                        prop_assert!(((a.transpose() * &g * b)[(0, 0)] - want).abs() < 1e-9, "{name}");
                    }
                }
            }
        }
    }
}

#[test]
fn exp_map_differential_at_zero_is_identity() {
    let h = 1e-5;
    for (name, chart) in common::zoo3() {
        let p = dv(&[0.1, -0.2, 0.05]);
        for i in 0..3 {
            let mut w = DVector::zeros(3);
            w[i] = h;
            let plus = chart.exp_map(&p, &w).unwrap();
            let minus = chart.exp_map(&p, &(-&w)).unwrap();
            let col = (plus - minus) / (2.0 * h);
            let mut e = DVector::zeros(3);
            e[i] = 1.0;
            assert!((col - e).amax() < 1e-8, "{name} column {i}");
        }
    }
}

#[test]
fn euclidean_metric_is_identity_everywhere() {
    let ch = MetricChart::euclidean(4);
    for x in [[0.0; 4], [3.0, -1.0, 2.0, 0.5]] {
        assert_eq!(ch.metric(&x), nalgebra::DMatrix::identity(4, 4));
    }
    assert!(MetricChart::space_form(1.0, 3).has_closed_form_exp());
}

#[test]
fn leaving_the_chart_is_a_domain_error() {
    let ch = MetricChart::space_form(1.0, 3);
    let far = ch.geodesic(&dv(&[5.0, 0.0, 0.0]), &dv(&[1.0, 0.0, 0.0]), 0.1).unwrap_err();
    assert_eq!(far.exit_code(), 4);
    let bump = MetricChart::conformal(3, vec![(vec![2, 0, 0], 1.0)]).unwrap().with_domain_radius(1.0).unwrap();
    let out = bump.geodesic(&dv(&[0.0; 3]), &dv(&[1.0, 0.0, 0.0]), 3.0).unwrap_err();
    assert_eq!(out.exit_code(), 4);
}
