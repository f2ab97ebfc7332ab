mod common;

use cmc_lab::grassmann::{invariants, GrassmannPoint};
use cmc_lab::metric::MetricChart;
use cmc_lab::quadrature::RuleOrders;
use cmc_lab::rng::{random_orthogonal, seeded};
use cmc_lab::submanifold::{
    build, kernel_mode_residual, mean_curvature, surface_point, volume, CorrectionFields, SurfaceKind, SurfaceOptions,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn small() -> SurfaceOptions {
    SurfaceOptions { orders: RuleOrders { s1_nodes: 48, azimuth: 24, gl: 12 }, radial: 10, ..Default::default() }
}

fn setup(k: usize) -> (MetricChart, GrassmannPoint, CorrectionFields) {
    let chart = common::conformal4();
    let gp = GrassmannPoint::coordinate_plane(&chart, DVector::from_column_slice(&[0.04, -0.03, 0.02, 0.01]), k).unwrap();
    let inv = invariants(&chart, &gp).unwrap();
    let fields = CorrectionFields::new(&inv, 0.08);
    (chart, gp, fields)
}

fn ip(g: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (DVector::from_column_slice(a), DVector::from_column_slice(b));
    (a.transpose() * g * b)[(0, 0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn volume_and_kernel_modes_ignore_grid_rotation(seed in 0u64..1000) {
        let (chart, gp, fields) = setup(1);
        let eps = 0.08;
        let base = small();
        let rotated = SurfaceOptions { grid_rotation: Some(random_orthogonal(&mut seeded(seed), 2)), ..small() };
        for kind in [SurfaceKind::CorrectedSphere, SurfaceKind::CorrectedBall] {
            let v0 = volume(&chart, &build(&chart, &gp, eps, kind, Some(&fields), &base).unwrap()).unwrap();
            let v1 = volume(&chart, &build(&chart, &gp, eps, kind, Some(&fields), &rotated).unwrap()).unwrap();
            prop_assert!((v0 - v1).abs() < 1e-9 * v0.abs(), "{:?}: {} vs {}", kind, v0, v1);
        }
        let modes = |opts: &SurfaceOptions| {
            let jet = build(&chart, &gp, eps, SurfaceKind::CorrectedSphere, Some(&fields), opts).unwrap();
            kernel_mode_residual(&mean_curvature(&chart, &jet).unwrap(), eps, 1).unwrap()
        };
        let (m0, m1) = (modes(&base), modes(&rotated));
        let pairs = m0.a.iter().zip(&m1.a)
            .chain(m0.c.iter().flatten().zip(m1.c.iter().flatten()))
            .chain(m0.d.iter().zip(&m1.d));
        for (x, y) in pairs {
            prop_assert!((x - y).abs() < 1e-9, "{} vs {}", x, y);
        }
    }
}

#[test]
fn mean_curvature_is_normal_and_frames_are_orthonormal() {
    for k in [1usize, 2] {
        let (chart, gp, fields) = setup(k);
        for kind in [SurfaceKind::GeodesicSphere, SurfaceKind::CorrectedSphere, SurfaceKind::CorrectedBall] {
            let jet = build(&chart, &gp, 0.08, kind, Some(&fields), &small()).unwrap();
            let rep = mean_curvature(&chart, &jet).unwrap();
            assert!(rep.max_orthogonality_defect() < 1e-8, "{kind:?}");
            for (nd, hn) in jet.nodes.iter().zip(&rep.nodes) {
                let g = chart.metric(nd.x.as_slice());
                let mut frame: Vec<&[f64]> = hn.normal_frame.iter().map(|v| v.as_slice()).collect();
                if let Some(n) = &hn.n {
                    frame.push(n);
                }
                assert_eq!(frame.len(), 4 - jet.param_dim);
                for (i, a) in frame.iter().enumerate() {
                    for (j, b) in frame.iter().enumerate() {
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((ip(&g, a, b) - want).abs() < 1e-10);
                    }
                    for t in &nd.d1[..jet.param_dim] {
                        assert!(ip(&g, a, t.as_slice()).abs() < 1e-10 * t.norm().max(1.0));
                    }
                }
            }
        }
    }
}

#[test]
fn ball_boundary_is_the_corrected_sphere() {
    let (chart, gp, fields) = setup(2);
    let eps = 0.08;
    let jet = build(&chart, &gp, eps, SurfaceKind::CorrectedSphere, Some(&fields), &small()).unwrap();
    for nd in jet.nodes.iter().step_by(7) {
        let on_ball = surface_point(&chart, &gp, eps, Some(&fields), &nd.coords).unwrap();
        assert!((on_ball - &nd.x).norm() < 1e-13);
    }
    // The correction field vanishes on the unit sphere.
    let mut rng = seeded(5);
    for _ in 0..20 {
        let y = random_orthogonal(&mut rng, 3).column(0).into_owned();
        let w = fields.w(y.as_slice());
        assert!(w.iter().all(|v| v.abs() < 1e-15), "{w:?}");
    }
}

#[test]
fn induced_metrics_are_positive_definite() {
    let (chart, gp, fields) = setup(2);
    for kind in [SurfaceKind::GeodesicBall, SurfaceKind::CorrectedBall, SurfaceKind::CorrectedSphere] {
        let jet = build(&chart, &gp, 0.1, kind, Some(&fields), &small()).unwrap();
        for nd in &jet.nodes {
            let g = chart.metric(nd.x.as_slice());
            let t = &nd.d1[..jet.param_dim];
            let gb = DMatrix::from_fn(t.len(), t.len(), |a, b| ip(&g, t[a].as_slice(), t[b].as_slice()));
            assert!(gb.symmetric_eigenvalues().min() > 0.0);
        }
    }
}

#[test]
fn correction_needs_fields_and_a_small_radius() {
    let (chart, gp, _) = setup(1);
    assert!(build(&chart, &gp, 0.05, SurfaceKind::CorrectedSphere, None, &small()).is_err());
    assert!(build(&chart, &gp, 0.0, SurfaceKind::GeodesicSphere, None, &small()).is_err());
    assert!(build(&chart, &gp, chart.domain_radius(), SurfaceKind::GeodesicSphere, None, &small()).is_err());
}
