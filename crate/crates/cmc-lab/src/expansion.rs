//! ε-sweeps, order fits, the energy functional of the corrected sphere/ball
//! pair, sphere moment identities and the table of closed-form integrals
//! entering the fourth-order energy coefficient.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::ad::Hyper;
use crate::curvature::{curvature_at, CurvatureData, Depth};
use crate::error::{GeomError, Result};
use crate::fit::{fit_line, fit_loglog, LineFit};
use crate::grassmann::{invariants_from, GrassmannPoint, PartialInvariants};
use crate::metric::MetricChart;
use crate::quadrature::{sphere_volume, BallRule, SphereRule};
use crate::submanifold::{build, mean_curvature, volume, CorrectionFields, SurfaceKind, SurfaceOptions};

/// Residuals at or below this are excluded from fits.
pub const FIT_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct SweepSpec {
    pub eps_list: Vec<f64>,
    /// Number of largest ε values left out of fits.
    pub skip_largest: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec::geometric(0.2, 0.0125, 8).expect("default sweep")
    }
}

impl SweepSpec {
    /// `count` geometric values from `max` down to `min`.
    pub fn geometric(max: f64, min: f64, count: usize) -> Result<Self> {
        if count < 2 || !(min > 0.0) || !(max > min) {
            return Err(GeomError::Config("sweep needs max > min > 0 and at least two values".into()));
        }
        let q = (min / max).powf(1.0 / (count - 1) as f64);
        let mut eps_list: Vec<f64> = (0..count).map(|i| max * q.powi(i as i32)).collect();
        eps_list[count - 1] = min;
        let s = SweepSpec { eps_list, skip_largest: 2 };
        s.validate()?;
        Ok(s)
    }

    pub fn from_list(eps_list: Vec<f64>, skip_largest: usize) -> Result<Self> {
        let s = SweepSpec { eps_list, skip_largest };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.eps_list;
        if e.len() < 4 {
            return Err(GeomError::Config("eps_list needs at least 4 values".into()));
        }
        for w in e.windows(2) {
            let ratio = w[0] / w[1];
            if !(w[1] > 0.0) || !(1.45..=2.5).contains(&ratio) {
                return Err(GeomError::Config(format!(
                    "eps_list must decrease with consecutive ratios in [1.45, 2.5], found {ratio}"
                )));
            }
        }
        if self.skip_largest + 2 > e.len() {
            return Err(GeomError::Config("fit window leaves fewer than two points".into()));
        }
        Ok(())
    }

    /// Indices used by fits.
    pub fn fit_window(&self) -> std::ops::Range<usize> {
        self.skip_largest..self.eps_list.len()
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OrderFit {
    /// `None` when fewer than two residuals lie above the noise floor.
    pub fit: Option<LineFit>,
    pub points_used: usize,
}

impl OrderFit {
    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }
}

/// Slope of `log|residual|` against `log ε` over `window`, skipping residuals
/// at or below [`FIT_FLOOR`].
pub fn fit_order(eps: &[f64], residuals: &[f64], window: std::ops::Range<usize>) -> OrderFit {
    let e = &eps[window.clone()];
    let r = &residuals[window];
    let points_used = r.iter().filter(|v| v.abs() > FIT_FLOOR).count();
    OrderFit { fit: fit_loglog(e, r, FIT_FLOOR), points_used }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    pub eps: f64,
    pub vol_k: f64,
    pub vol_q: f64,
    pub energy: f64,
    pub normalized: f64,
    pub predicted: f64,
    pub residual: f64,
}

/// Energy `Vol_k(K) − (k/ε) Vol_{k+1}(Q)` of the corrected sphere/ball pair.
pub fn energy_with(
    chart: &MetricChart,
    gp: &GrassmannPoint,
    inv: &PartialInvariants,
    eps: f64,
    opts: &SurfaceOptions,
) -> Result<EnergyReport> {
    let k = gp.k;
    let kf = k as f64;
    let fields = CorrectionFields::new(inv, eps);
    let sphere = build(chart, gp, eps, SurfaceKind::CorrectedSphere, Some(&fields), opts)?;
    let ball = build(chart, gp, eps, SurfaceKind::CorrectedBall, Some(&fields), opts)?;
    let vol_k = volume(chart, &sphere)?;
    let vol_q = volume(chart, &ball)?;
    let energy = vol_k - kf / eps * vol_q;
    let normalized = (kf + 1.0) * energy / (eps.powi(k as i32) * sphere_volume(k));
    let predicted = predicted_normalized(inv, eps);
    Ok(EnergyReport { eps, vol_k, vol_q, energy, normalized, predicted, residual: normalized - predicted })
}

pub fn energy(chart: &MetricChart, gp: &GrassmannPoint, eps: f64, opts: &SurfaceOptions) -> Result<EnergyReport> {
    let inv = crate::grassmann::invariants(chart, gp)?;
    energy_with(chart, gp, &inv, eps, opts)
}

/// `1 − ε²ℛ/(2(k+3)) + ε⁴**r**/(2(k+3))`.
pub fn predicted_normalized(inv: &PartialInvariants, eps: f64) -> f64 {
    let d = 2.0 * (inv.k as f64 + 3.0);
    let e2 = eps * eps;
    1.0 - e2 * inv.scalar_k1 / d + e2 * e2 * inv.r_invariant / d
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergySweep {
    pub rows: Vec<EnergyReport>,
    pub residual_fit: OrderFit,
    /// `(1 − normalized)·2(k+3)/ε²` per ε.
    pub eps2_coefficients: Vec<f64>,
    /// `(normalized − 1 + ε²ℛ/(2(k+3)))/ε⁴` per ε.
    pub eps4_coefficients: Vec<f64>,
    /// ε → 0 intercept of a linear fit of the ε⁴ coefficients over the window.
    pub eps4_extrapolated: Option<f64>,
    pub scalar_k1: f64,
    pub r_invariant: f64,
}

impl EnergySweep {
    pub fn to_csv(&self) -> String {
        use crate::report::fmt_f64;
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| vec![fmt_f64(r.eps), fmt_f64(r.normalized), fmt_f64(r.predicted), fmt_f64(r.residual)])
            .collect();
        crate::report::csv(&["eps", "value", "predicted", "residual"], &rows)
    }
}

pub fn energy_sweep(chart: &MetricChart, gp: &GrassmannPoint, spec: &SweepSpec, opts: &SurfaceOptions) -> Result<EnergySweep> {
    spec.validate()?;
    let inv = crate::grassmann::invariants(chart, gp)?;
    let d = 2.0 * (gp.k as f64 + 3.0);
    let mut rows = Vec::new();
    for &eps in &spec.eps_list {
        rows.push(energy_with(chart, gp, &inv, eps, opts)?);
    }
    let res: Vec<f64> = rows.iter().map(|r| r.residual).collect();
    let residual_fit = fit_order(&spec.eps_list, &res, spec.fit_window());
    let eps2_coefficients = rows.iter().map(|r| (1.0 - r.normalized) * d / (r.eps * r.eps)).collect();
    let eps4_coefficients: Vec<f64> = rows
        .iter()
        .map(|r| (r.normalized - 1.0 + r.eps * r.eps * inv.scalar_k1 / d) / r.eps.powi(4))
        .collect();
    let w = spec.fit_window();
    let eps4_extrapolated = fit_line(&spec.eps_list[w.clone()], &eps4_coefficients[w]).map(|f| f.intercept);
    Ok(EnergySweep {
        rows,
        residual_fit,
        eps2_coefficients,
        eps4_coefficients,
        eps4_extrapolated,
        scalar_k1: inv.scalar_k1,
        r_invariant: inv.r_invariant,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentCheck {
    pub identity_id: String,
    pub quadrature_value: f64,
    pub closed_form: f64,
    pub abs_error: f64,
}

fn check(id: impl Into<String>, q: f64, c: f64) -> MomentCheck {
    MomentCheck { identity_id: id.into(), quadrature_value: q, closed_form: c, abs_error: (q - c).abs() }
}

/// Second and fourth moments of `Θ` on `S^k`, including the general
/// contraction `∫ a_{ijpq}Θ^iΘ^jΘ^pΘ^q = Vol/((k+1)(k+3)) Σ (a_ppqq + a_pqpq + a_pqqp)`
/// on ten random arrays and one array antisymmetric in its last pair.
pub fn moment_identities(k: usize, seed: u64) -> Result<Vec<MomentCheck>> {
    let rule = SphereRule::new(k)?;
    let vol = sphere_volume(k);
    let k1 = k + 1;
    let kf = k as f64;
    let c4 = vol / ((kf + 1.0) * (kf + 3.0));
    let mut out = Vec::new();
    for i in 0..k1 {
        out.push(check(format!("second_moment_{i}"), rule.integrate(|t| t[i] * t[i]), vol / (kf + 1.0)));
        out.push(check(format!("fourth_moment_{i}"), rule.integrate(|t| t[i].powi(4)), 3.0 * c4));
        for j in 0..i {
            out.push(check(format!("mixed_fourth_moment_{i}_{j}"), rule.integrate(|t| (t[i] * t[j]).powi(2)), c4));
        }
    }
    let mut rng = crate::rng::seeded(seed);
    let idx = |i: usize, j: usize, p: usize, q: usize| ((i * k1 + j) * k1 + p) * k1 + q;
    let contract = |a: &[f64], t: &DVector<f64>| {
        let mut s = 0.0;
        for i in 0..k1 {
            for j in 0..k1 {
                for p in 0..k1 {
                    for q in 0..k1 {
                        s += a[idx(i, j, p, q)] * t[i] * t[j] * t[p] * t[q];
                    }
                }
            }
        }
        s
    };
    let closed = |a: &[f64]| {
        let mut s = 0.0;
        for p in 0..k1 {
            for q in 0..k1 {
                s += a[idx(p, p, q, q)] + a[idx(p, q, p, q)] + a[idx(p, q, q, p)];
            }
        }
        c4 * s
    };
    for t in 0..10 {
        let a: Vec<f64> = crate::rng::normal_matrix(&mut rng, k1.pow(4), 1).iter().copied().collect();
        out.push(check(format!("general_fourth_moment_{t}"), rule.integrate(|th| contract(&a, th)), closed(&a)));
    }
    let mut anti = crate::rng::normal_matrix(&mut rng, k1.pow(4), 1).iter().copied().collect::<Vec<f64>>();
    for i in 0..k1 {
        for j in 0..k1 {
            for p in 0..k1 {
                for q in 0..k1 {
                    if p < q {
                        anti[idx(i, j, q, p)] = -anti[idx(i, j, p, q)];
                    } else if p == q {
                        anti[idx(i, j, p, q)] = 0.0;
                    }
                }
            }
        }
    }
    out.push(check("antisymmetric_fourth_moment", rule.integrate(|th| contract(&anti, th)), 0.0));
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct TermCheck {
    pub name: String,
    pub quadrature: f64,
    pub closed_form: f64,
    /// `|quadrature − closed_form| / max(|closed_form|, scale)`.
    pub rel_error: f64,
}

/// Relative error with the scale floor `Vol(S^k)·max(1, |invariants|)·ε^p`
/// so that vanishing terms are judged on an absolute scale.
fn term(name: &str, q: f64, c: f64, scale: f64) -> TermCheck {
    let denom = c.abs().max(scale).max(f64::MIN_POSITIVE);
    TermCheck { name: name.into(), quadrature: q, closed_form: c, rel_error: (q - c).abs() / denom }
}

/// Quadrature values of the integrals entering the fourth-order energy
/// coefficient next to their closed forms.
pub fn energy_term_table(chart: &MetricChart, gp: &GrassmannPoint, eps: f64) -> Result<Vec<TermCheck>> {
    let cd = curvature_at(chart, &gp.p, &gp.frame, Depth::Second)?;
    energy_terms_from(&cd, gp, eps)
}

pub fn energy_terms_from(cd: &CurvatureData, gp: &GrassmannPoint, eps: f64) -> Result<Vec<TermCheck>> {
    let inv = invariants_from(cd, gp)?;
    let k = gp.k;
    let k1 = k + 1;
    let n = gp.dim();
    let kf = k as f64;
    let vol = sphere_volume(k);
    let c4 = vol / ((kf + 1.0) * (kf + 3.0));
    let rule = SphereRule::new(k)?;
    let s = cd.convention_sign;
    let ric = inv.ric_matrix();
    let perp = inv.ric_perp_matrix();
    let curv_scale = 1.0 + inv.scalar_k1.abs() + inv.norm_r.sqrt() + inv.norm_ric.sqrt();
    let scale = vol * curv_scale * 1e-3;
    let rtheta = |t: &DVector<f64>, i: usize, j: usize| {
        let mut v = 0.0;
        for a in 0..k1 {
            for b in 0..k1 {
                v += t[a] * t[b] * cd.r(a, i, b, j);
            }
        }
        v
    };
    let ric_tt = |t: &DVector<f64>| (t.rows(0, k1).transpose() * &ric * t.rows(0, k1))[(0, 0)];
    let mut out = Vec::new();
    out.push(term("int_ric_theta_theta", rule.integrate(ric_tt), vol * inv.scalar_k1 / (kf + 1.0), scale));
    out.push(term(
        "int_ric_theta_theta_squared",
        rule.integrate(|t| ric_tt(t).powi(2)),
        c4 * (2.0 * inv.norm_ric + inv.scalar_k1.powi(2)),
        scale * curv_scale,
    ));
    out.push(term(
        "int_sum_r_theta_i_theta_j_squared",
        rule.integrate(|t| {
            let mut v = 0.0;
            for i in 0..k1 {
                for j in 0..k1 {
                    v += rtheta(t, i, j).powi(2);
                }
            }
            v
        }),
        c4 * (inv.norm_ric + 1.5 * inv.norm_r),
        scale * curv_scale,
    ));
    let norm_ric_perp = inv.norm_ric_perp.unwrap_or(0.0);
    let norm_r_perp = inv.norm_r_perp.unwrap_or(0.0);
    out.push(term(
        "int_sum_r_theta_i_theta_mu_squared",
        rule.integrate(|t| {
            let mut v = 0.0;
            for i in 0..k1 {
                for mu in k1..n {
                    v += rtheta(t, i, mu).powi(2);
                }
            }
            v
        }),
        c4 * (norm_ric_perp + 1.5 * norm_r_perp),
        scale * curv_scale,
    ));
    // ∇²_{ΘΘ} 𝓡ic(Θ,Θ) = −Σ_i Θ^aΘ^bΘ^cΘ^d (∇²R)_{icid;ab}
    out.push(term(
        "int_hessian_ric_theta",
        rule.integrate(|t| {
            let mut v = 0.0;
            for a in 0..k1 {
                for b in 0..k1 {
                    for c in 0..k1 {
                        for d in 0..k1 {
                            let tt = t[a] * t[b] * t[c] * t[d];
                            for i in 0..k1 {
                                v -= tt * cd.d2r(i, c, i, d, a, b);
                            }
                        }
                    }
                }
            }
            s * v
        }),
        2.0 * c4 * inv.lap_scalar,
        scale,
    ));
    out.extend(w_integrals(k, &perp, cd, eps, scale * eps * eps)?);
    Ok(out)
}

/// The three ball integrals of `W_ε`, with `ΔW` and `∂W` from forward-mode
/// derivatives of the field rather than from its closed form.
fn w_integrals(k: usize, perp: &DMatrix<f64>, cd: &CurvatureData, eps: f64, scale: f64) -> Result<Vec<TermCheck>> {
    let k1 = k + 1;
    let codim = perp.ncols();
    let kf = k as f64;
    let vol = sphere_volume(k);
    let fields = CorrectionFields {
        k,
        eps,
        scalar: 0.0,
        ric: DMatrix::zeros(k1, k1),
        ric_perp: perp.clone(),
    };
    let ball = BallRule::new(k)?;
    let norm = perp.norm_squared();
    let denom = (kf + 1.0) * (kf + 3.0).powi(2) * (kf + 5.0);
    // Derivatives of W at y: values, gradients and Laplacians per μ.
    let derivs = |y: &DVector<f64>| -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
        let mut vals = vec![0.0; codim];
        let mut grads = vec![vec![0.0; k1]; codim];
        let mut laps = vec![0.0; codim];
        // Second derivatives one direction at a time keeps the hyper-dual size fixed.
        for a in 0..k1 {
            let ys: Vec<Hyper<1>> =
                (0..k1).map(|b| if a == b { Hyper::variable(y[b], 0) } else { Hyper::constant(y[b]) }).collect();
            for (mu, w) in fields.w(&ys).iter().enumerate() {
                vals[mu] = w.v;
                grads[mu][a] = w.g[0];
                laps[mu] += w.h[0][0];
            }
        }
        (vals, grads, laps)
    };
    let s = cd.convention_sign;
    let mut i1 = 0.0;
    let mut i2 = 0.0;
    let mut i3 = 0.0;
    for (r, wr) in ball.radii.iter().zip(&ball.radial_weights) {
        let jac = wr * f64::powi(*r, k as i32);
        for nd in &ball.sphere.nodes {
            let y = &nd.theta * *r;
            let (w, dw, lap) = derivs(&y);
            let wt = jac * nd.weight;
            for mu in 0..codim {
                let m = k1 + mu;
                i1 += wt * w[mu] * lap[mu];
                let mut lin = 0.0;
                for i in 0..k1 {
                    for p in 0..k1 {
                        lin += s * cd.r(i, p, i, m) * y[p];
                    }
                }
                i2 += wt * w[mu] * lin;
                let mut quad = 0.0;
                for i in 0..k1 {
                    for p in 0..k1 {
                        for q in 0..k1 {
                            quad += dw[mu][i] * s * cd.r(p, i, q, m) * y[p] * y[q];
                        }
                    }
                }
                i3 += wt * quad;
            }
        }
    }
    let e2 = eps * eps;
    Ok(vec![
        term("int_w_laplacian_w", i1, -(e2 * e2 / 9.0) * 4.0 / denom * vol * norm, scale * e2),
        term("int_w_r_linear", i2, -(e2 / 3.0) * 2.0 / denom * vol * norm, scale),
        term("int_grad_w_r_quadratic", i3, -(2.0 * e2 / 3.0) / denom * vol * norm, scale),
    ])
}

/// One row of a mean-curvature residual sweep.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualRow {
    pub eps: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualSweep {
    pub name: String,
    pub rows: Vec<ResidualRow>,
    pub fit: OrderFit,
}

impl ResidualSweep {
    pub fn to_csv(&self) -> String {
        use crate::report::fmt_f64;
        let rows: Vec<Vec<String>> = self.rows.iter().map(|r| vec![fmt_f64(r.eps), fmt_f64(r.residual)]).collect();
        crate::report::csv(&["eps", "residual"], &rows)
    }
}

fn residual_sweep(name: &str, spec: &SweepSpec, mut f: impl FnMut(f64) -> Result<f64>) -> Result<ResidualSweep> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &eps in &spec.eps_list {
        rows.push(ResidualRow { eps, residual: f(eps)? });
    }
    let res: Vec<f64> = rows.iter().map(|r| r.residual).collect();
    let fit = fit_order(&spec.eps_list, &res, spec.fit_window());
    Ok(ResidualSweep { name: name.into(), rows, fit })
}

/// Largest deviation of the geodesic sphere's mean curvature from
/// `(k/ε − (ε/3)𝓡ic(Θ,Θ)) n + Σ_μ (2ε/3)𝓡ic^⊥(Θ,E_μ) N_μ` over the nodes.
pub fn sphere_curvature_sweep(chart: &MetricChart, gp: &GrassmannPoint, spec: &SweepSpec, opts: &SurfaceOptions) -> Result<ResidualSweep> {
    let inv = crate::grassmann::invariants(chart, gp)?;
    let ric = inv.ric_matrix();
    let perp = inv.ric_perp_matrix();
    let kf = gp.k as f64;
    residual_sweep("sphere", spec, |eps| {
        let jet = build(chart, gp, eps, SurfaceKind::GeodesicSphere, None, opts)?;
        let rep = mean_curvature(chart, &jet)?;
        let mut worst: f64 = 0.0;
        for nd in &rep.nodes {
            let t = DVector::from_column_slice(&nd.coords);
            let rtt = (t.transpose() * &ric * &t)[(0, 0)];
            let pred = kf / eps - eps / 3.0 * rtt;
            worst = worst.max((nd.tangential_component.unwrap() - pred).abs());
            for (mu, v) in nd.perp_components.iter().enumerate() {
                let pred: f64 = (0..=gp.k).map(|a| t[a] * perp[(a, mu)]).sum::<f64>() * 2.0 * eps / 3.0;
                worst = worst.max((v - pred).abs());
            }
        }
        Ok(worst)
    })
}

/// Largest `|g(H, N_μ) − (2ε/3)𝓡ic^⊥(y, E_μ)|` over the geodesic ball's nodes.
pub fn ball_curvature_sweep(chart: &MetricChart, gp: &GrassmannPoint, spec: &SweepSpec, opts: &SurfaceOptions) -> Result<ResidualSweep> {
    let inv = crate::grassmann::invariants(chart, gp)?;
    let perp = inv.ric_perp_matrix();
    residual_sweep("ball", spec, |eps| {
        let jet = build(chart, gp, eps, SurfaceKind::GeodesicBall, None, opts)?;
        let rep = mean_curvature(chart, &jet)?;
        let mut worst: f64 = 0.0;
        for nd in &rep.nodes {
            for (mu, v) in nd.perp_components.iter().enumerate() {
                let pred: f64 = (0..=gp.k).map(|a| nd.coords[a] * perp[(a, mu)]).sum::<f64>() * 2.0 * eps / 3.0;
                worst = worst.max((v - pred).abs());
            }
        }
        Ok(worst)
    })
}

/// Largest `|g(H, n) − k/ε|` over the nodes of the geodesic or corrected sphere.
pub fn tangential_residual_sweep(
    chart: &MetricChart,
    gp: &GrassmannPoint,
    spec: &SweepSpec,
    opts: &SurfaceOptions,
    corrected: bool,
) -> Result<ResidualSweep> {
    let inv = crate::grassmann::invariants(chart, gp)?;
    let kf = gp.k as f64;
    let name = if corrected { "corrected_sphere_tangential" } else { "geodesic_sphere_tangential" };
    residual_sweep(name, spec, |eps| {
        let fields = CorrectionFields::new(&inv, eps);
        let kind = if corrected { SurfaceKind::CorrectedSphere } else { SurfaceKind::GeodesicSphere };
        let jet = build(chart, gp, eps, kind, Some(&fields), opts)?;
        let rep = mean_curvature(chart, &jet)?;
        Ok(rep.nodes.iter().map(|n| (n.tangential_component.unwrap() - kf / eps).abs()).fold(0.0, f64::max))
    })
}

/// Norm of the fitted kernel-mode coefficients on the corrected sphere per ε.
pub fn kernel_mode_sweep(chart: &MetricChart, gp: &GrassmannPoint, spec: &SweepSpec, opts: &SurfaceOptions) -> Result<ResidualSweep> {
    let inv = crate::grassmann::invariants(chart, gp)?;
    residual_sweep("kernel_modes", spec, |eps| {
        let fields = CorrectionFields::new(&inv, eps);
        let jet = build(chart, gp, eps, SurfaceKind::CorrectedSphere, Some(&fields), opts)?;
        let rep = mean_curvature(chart, &jet)?;
        Ok(crate::submanifold::kernel_mode_residual(&rep, eps, gp.k)?.coefficient_norm())
    })
}
