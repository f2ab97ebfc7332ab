mod common;

use cmc_lab::expansion::{
    energy_sweep, energy_term_table, fit_order, moment_identities, predicted_normalized, tangential_residual_sweep,
    SweepSpec,
};
use cmc_lab::grassmann::{invariants, GrassmannPoint};
use cmc_lab::metric::MetricChart;
use cmc_lab::quadrature::RuleOrders;
use cmc_lab::submanifold::SurfaceOptions;
use nalgebra::DVector;
use proptest::prelude::*;

fn small() -> SurfaceOptions {
    SurfaceOptions { orders: RuleOrders { s1_nodes: 48, azimuth: 24, gl: 12 }, radial: 10, ..Default::default() }
}

proptest! {
    #[test]
    fn fitted_order_ignores_residual_scale(
        p in 1.0f64..5.0,
        c in 0.1f64..10.0,
        scale in 1.0f64..1e3,
        wobble in prop::collection::vec(-0.05f64..0.05, 8),
    ) {
        let spec = SweepSpec::default();
        let res: Vec<f64> = spec.eps_list.iter().zip(&wobble).map(|(e, w)| c * e.powf(p) * (1.0 + w)).collect();
        let scaled: Vec<f64> = res.iter().map(|r| r * scale).collect();
        let a = fit_order(&spec.eps_list, &res, spec.fit_window()).slope().unwrap();
        let b = fit_order(&spec.eps_list, &scaled, spec.fit_window()).slope().unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((a - p).abs() < 0.2);
    }
}

#[test]
fn residuals_at_the_floor_give_no_fit() {
    let spec = SweepSpec::default();
    let res = vec![1e-14; spec.eps_list.len()];
    let fit = fit_order(&spec.eps_list, &res, spec.fit_window());
    assert!(fit.slope().is_none());
    assert_eq!(fit.points_used, 0);
}

#[test]
fn sweep_validation_rejects_bad_ratios() {
    assert!(SweepSpec::from_list(vec![0.2, 0.1, 0.05, 0.025], 1).is_ok());
    assert!(SweepSpec::from_list(vec![0.2, 0.19, 0.1, 0.05], 1).is_err());
    assert!(SweepSpec::from_list(vec![0.2, 0.1, 0.05], 0).is_err());
    assert!(SweepSpec::from_list(vec![0.2, 0.1, 0.05, 0.025], 3).is_err());
    assert!(SweepSpec::geometric(0.1, 0.2, 5).is_err());
}

#[test]
fn euclidean_energy_is_exactly_normalized() {
    for k in [1usize, 2] {
        let chart = MetricChart::euclidean(k + 2);
        let gp = GrassmannPoint::coordinate_plane(&chart, DVector::zeros(k + 2), k).unwrap();
        let sweep = energy_sweep(&chart, &gp, &SweepSpec::default(), &small()).unwrap();
        for r in &sweep.rows {
            assert!((r.normalized - 1.0).abs() < 1e-11, "k={k} eps={}: {}", r.eps, r.normalized);
        }
        assert!(sweep.residual_fit.slope().is_none());
    }
}

#[test]
fn prediction_matches_invariants() {
    let chart = MetricChart::space_form(1.0, 3);
    let gp = GrassmannPoint::coordinate_plane(&chart, DVector::zeros(3), 1).unwrap();
    let inv = invariants(&chart, &gp).unwrap();
    // On the unit sphere: scalar k(k+1) and r = k(k+1)(k+2)(k+3)/(4(k+5)).
    assert!((inv.scalar_k1 - 2.0).abs() < 1e-10);
    assert!((inv.r_invariant - 24.0 / 24.0).abs() < 1e-8);
    let eps: f64 = 0.1;
    let want = 1.0 - eps * eps * 2.0 / 8.0 + eps.powi(4) / 8.0;
    assert!((predicted_normalized(&inv, eps) - want).abs() < 1e-10);
}

#[test]
fn moment_identities_hold_in_low_dimensions() {
    for k in 1..=3 {
        let checks = moment_identities(k, 17).unwrap();
        assert!(!checks.is_empty());
        for c in checks {
            assert!(c.abs_error < 1e-10, "k={k} {}: {} vs {}", c.identity_id, c.quadrature_value, c.closed_form);
        }
    }
}

#[test]
fn energy_terms_match_on_the_zoo() {
    for (name, chart) in common::zoo3() {
        let gp = GrassmannPoint::coordinate_plane(&chart, DVector::from_column_slice(&[-0.04, 0.03, 0.06]), 1).unwrap();
        for t in energy_term_table(&chart, &gp, 0.07).unwrap() {
            assert!(t.rel_error < 1e-9, "{name} {}: {} vs {}", t.name, t.quadrature, t.closed_form);
        }
    }
}

#[test]
fn corrected_sphere_is_closer_to_constant_mean_curvature() {
    let chart = common::conformal3();
    let gp = GrassmannPoint::coordinate_plane(&chart, DVector::from_column_slice(&[0.02, -0.01, 0.03]), 1).unwrap();
    let spec = SweepSpec::from_list(vec![0.08, 0.04, 0.02, 0.01], 1).unwrap();
    let geo = tangential_residual_sweep(&chart, &gp, &spec, &small(), false).unwrap();
    let cor = tangential_residual_sweep(&chart, &gp, &spec, &small(), true).unwrap();
    assert!(geo.fit.slope().unwrap() > 0.9);
    assert!(cor.fit.slope().unwrap() > 1.9);
    for (g, c) in geo.rows.iter().zip(&cor.rows) {
        assert!(c.residual < g.residual);
    }
}
