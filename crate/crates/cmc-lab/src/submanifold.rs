//! Parametrised spheres and balls through the exponential map, their
//! induced geometry, mean curvature and volume.
//!
//! Every surface is built from one map of `k+1` local parameters
//! `(u_1..u_k, r)` per sphere node `Θ_j`: `Θ(u)` is the normalised
//! `Θ_j + Σ u_α t_α` for an orthonormal basis `t_α` of `Θ_j^⊥`, `y = rΘ(u)`,
//! and the point is
//! `exp_p(ε[(1 − φ(Θ)) r Σ Θ^a E_a + Σ_μ W^μ(y) E_μ])`.
//! Spheres sit at `r = 1`, balls at the radial quadrature nodes. Geodesic
//! spheres and balls have `φ = W = 0`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::ad::{Hyper, Scalar, Taylor, TaylorSpace};
use crate::error::{GeomError, Result};
use crate::grassmann::{GrassmannPoint, PartialInvariants};
use crate::metric::{gram_schmidt_with, MetricChart};
use crate::quadrature::{BallRule, RuleOrders, SphereRule, GL_ORDER};

/// Step for finite-difference immersion jets in the local parameters.
pub const JET_FD_STEP: f64 = 1e-2;

/// The tangential correction `φ` on `S^k` and the normal field `W_ε` on
/// `B^{k+1}`:
///
/// `φ(Θ) = (ε²/3)(2ℛ/(k(k+2)) − 𝓡ic(Θ,Θ)/(k+2))`,
/// `W^μ(y) = (ε²/3)(1/(k+3))(1 − |y|²) 𝓡ic^⊥(y, E_μ)`.
#[derive(Clone, Debug)]
pub struct CorrectionFields {
    pub k: usize,
    pub eps: f64,
    pub scalar: f64,
    pub ric: DMatrix<f64>,
    pub ric_perp: DMatrix<f64>,
}

impl CorrectionFields {
    pub fn new(inv: &PartialInvariants, eps: f64) -> Self {
        CorrectionFields {
            k: inv.k,
            eps,
            scalar: inv.scalar_k1,
            ric: inv.ric_matrix(),
            ric_perp: inv.ric_perp_matrix(),
        }
    }

    /// Fields that vanish identically.
    pub fn zero(k: usize, codim: usize, eps: f64) -> Self {
        CorrectionFields { k, eps, scalar: 0.0, ric: DMatrix::zeros(k + 1, k + 1), ric_perp: DMatrix::zeros(k + 1, codim) }
    }

    pub fn codim(&self) -> usize {
        self.ric_perp.ncols()
    }

    /// `φ(Θ)` for unit `Θ`.
    pub fn phi<S: Scalar>(&self, theta: &[S]) -> S {
        let k = self.k as f64;
        let e2 = self.eps * self.eps;
        let mut q = theta[0].zero_like();
        for a in 0..=self.k {
            for b in 0..=self.k {
                let c = self.ric[(a, b)];
                if c != 0.0 {
                    q = q + theta[a].clone() * theta[b].clone() * c;
                }
            }
        }
        (q * (-1.0 / (k + 2.0)) + 2.0 * self.scalar / (k * (k + 2.0))) * (e2 / 3.0)
    }

    /// `W^μ(y)` for `μ = 0..m-k`.
    pub fn w<S: Scalar>(&self, y: &[S]) -> Vec<S> {
        let k = self.k as f64;
        let e2 = self.eps * self.eps;
        let r2 = y.iter().fold(y[0].zero_like(), |acc, v| acc + v.clone() * v.clone());
        let bump = (r2 * -1.0 + 1.0) * (e2 / (3.0 * (k + 3.0)));
        (0..self.codim())
            .map(|mu| {
                let lin = (0..=self.k).fold(y[0].zero_like(), |acc, a| acc + y[a].clone() * self.ric_perp[(a, mu)]);
                lin * bump.clone()
            })
            .collect()
    }

    /// `Δ_y W^μ = −(2ε²/3) 𝓡ic^⊥(y, E_μ)` coefficient vectors, one row per `μ`.
    pub fn laplacian_w_coefficients(&self) -> DMatrix<f64> {
        self.ric_perp.transpose() * (-2.0 * self.eps * self.eps / 3.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SurfaceKind {
    GeodesicSphere,
    CorrectedSphere,
    GeodesicBall,
    CorrectedBall,
}

impl SurfaceKind {
    pub fn is_ball(self) -> bool {
        matches!(self, SurfaceKind::GeodesicBall | SurfaceKind::CorrectedBall)
    }

    pub fn is_corrected(self) -> bool {
        matches!(self, SurfaceKind::CorrectedSphere | SurfaceKind::CorrectedBall)
    }
}

/// How parameter derivatives are obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JetScheme {
    /// Forward-mode AD through the exponential map when the chart allows it,
    /// finite differences otherwise.
    Auto,
    FiniteDifference { h: f64 },
}

#[derive(Clone, Debug)]
pub struct SurfaceOptions {
    pub orders: RuleOrders,
    pub radial: usize,
    pub scheme: JetScheme,
    /// Orthogonal `(k+1) × (k+1)` matrix applied to the parameter grid.
    pub grid_rotation: Option<DMatrix<f64>>,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        SurfaceOptions { orders: RuleOrders::default(), radial: GL_ORDER, scheme: JetScheme::Auto, grid_rotation: None }
    }
}

/// Position and parameter derivatives at one node. `d1[q]` and `d2[q][s]`
/// are derivatives in local parameter `q` (`u_1..u_k`, then `r`).
#[derive(Clone, Debug)]
pub struct JetNode {
    /// `Θ` on spheres, `y = rΘ` on balls.
    pub coords: DVector<f64>,
    pub weight: f64,
    pub coarse_weight: f64,
    pub x: DVector<f64>,
    pub d1: Vec<DVector<f64>>,
    pub d2: Vec<Vec<DVector<f64>>>,
}

#[derive(Clone, Debug)]
pub struct ImmersionJet {
    pub kind: SurfaceKind,
    pub k: usize,
    pub eps: f64,
    /// `k` for spheres, `k+1` for balls.
    pub param_dim: usize,
    /// `E_μ` at the base point, used to build normal frames.
    pub normals: Vec<DVector<f64>>,
    pub nodes: Vec<JetNode>,
}

struct MapSetup<'a> {
    chart: &'a MetricChart,
    gp: &'a GrassmannPoint,
    eps: f64,
    fields: Option<&'a CorrectionFields>,
}

impl MapSetup<'_> {
    /// Chart coordinates of the surface at local parameters `vars`
    /// (`u_1..u_k, r`) around node `theta0`.
    fn eval<S: Scalar>(&self, theta0: &DVector<f64>, tangent: &[DVector<f64>], vars: &[S]) -> Result<Vec<S>> {
        let k = self.gp.k;
        let n = self.gp.dim();
        let z = vars[0].zero_like();
        let v: Vec<S> = (0..=k)
            .map(|c| (0..k).fold(z.clone() + theta0[c], |acc, a| acc + vars[a].clone() * tangent[a][c]))
            .collect();
        let nrm = v.iter().fold(z.clone(), |acc, x| acc + x.clone() * x.clone()).sqrt().recip();
        let theta: Vec<S> = v.into_iter().map(|x| x * nrm.clone()).collect();
        let r = vars[k].clone();
        let (radial, w) = match self.fields {
            Some(f) => {
                let y: Vec<S> = theta.iter().map(|t| t.clone() * r.clone()).collect();
                ((f.phi(&theta) * -1.0 + 1.0) * r.clone(), f.w(&y))
            }
            None => (r.clone(), Vec::new()),
        };
        let normals = self.gp.normals();
        let tvec: Vec<S> = (0..n)
            .map(|c| {
                let mut s = z.clone();
                for a in 0..=k {
                    s = s + theta[a].clone() * radial.clone() * self.gp.frame[a][c];
                }
                for (mu, wm) in w.iter().enumerate() {
                    s = s + wm.clone() * normals[mu][c];
                }
                s * self.eps
            })
            .collect();
        self.chart.exp_generic(self.gp.p.as_slice(), &tvec)
    }
}

type Raw = (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>);

fn jet_hyper<const P: usize>(s: &MapSetup, theta0: &DVector<f64>, t: &[DVector<f64>], r0: f64) -> Result<Raw> {
    let vars: Vec<Hyper<P>> = (0..P).map(|q| Hyper::variable(if q == P - 1 { r0 } else { 0.0 }, q)).collect();
    let f = s.eval(theta0, t, &vars)?;
    let x = f.iter().map(|h| h.v).collect();
    let d1 = (0..P).map(|q| f.iter().map(|h| h.g[q]).collect()).collect();
    let d2 = (0..P).map(|q| (0..P).map(|r| f.iter().map(|h| h.h[q][r]).collect()).collect()).collect();
    Ok((x, d1, d2))
}

fn jet_taylor(s: &MapSetup, theta0: &DVector<f64>, t: &[DVector<f64>], r0: f64) -> Result<Raw> {
    let p = s.gp.k + 1;
    let space = TaylorSpace::new(p, 2);
    let vars: Vec<Taylor> = (0..p).map(|q| Taylor::variable(&space, q, if q == p - 1 { r0 } else { 0.0 })).collect();
    let f = s.eval(theta0, t, &vars)?;
    let mono = |q: usize, r: usize| {
        let mut a = vec![0u8; p];
        a[q] += 1;
        a[r] += 1;
        a
    };
    let unit = |q: usize| {
        let mut a = vec![0u8; p];
        a[q] = 1;
        a
    };
    let x = f.iter().map(Scalar::value).collect();
    let d1 = (0..p).map(|q| f.iter().map(|h| h.coefficient(&unit(q))).collect()).collect();
    let d2 = (0..p).map(|q| (0..p).map(|r| f.iter().map(|h| h.partial(&mono(q, r))).collect()).collect()).collect();
    Ok((x, d1, d2))
}

fn jet_fd(s: &MapSetup, theta0: &DVector<f64>, t: &[DVector<f64>], r0: f64, h: f64) -> Result<Raw> {
    let p = s.gp.k + 1;
    let at = |offs: &[(usize, f64)]| -> Result<Vec<f64>> {
        let mut v = vec![0.0; p];
        v[p - 1] = r0;
        for &(q, o) in offs {
            v[q] += o * h;
        }
        s.eval(theta0, t, &v)
    };
    let x = at(&[])?;
    let n = x.len();
    let comb = |terms: &[(f64, &Vec<f64>)], scale: f64| -> Vec<f64> {
        (0..n).map(|c| terms.iter().map(|(w, v)| w * v[c]).sum::<f64>() / scale).collect()
    };
    let mut d1 = Vec::with_capacity(p);
    let mut d2 = vec![vec![Vec::new(); p]; p];
    for q in 0..p {
        let (m2, m1, p1, p2) = (at(&[(q, -2.0)])?, at(&[(q, -1.0)])?, at(&[(q, 1.0)])?, at(&[(q, 2.0)])?);
        d1.push(comb(&[(1.0, &m2), (-8.0, &m1), (8.0, &p1), (-1.0, &p2)], 12.0 * h));
        d2[q][q] = comb(&[(-1.0, &m2), (16.0, &m1), (-30.0, &x), (16.0, &p1), (-1.0, &p2)], 12.0 * h * h);
    }
    for q in 0..p {
        for r in 0..q {
            let mut terms = Vec::new();
            let mut vals = Vec::new();
            // Fourth-order cross stencil on the (±1, ±2) lattice.
            for (a, b, w) in [
                (1.0, 1.0, 16.0),
                (-1.0, -1.0, 16.0),
                (1.0, -1.0, -16.0),
                (-1.0, 1.0, -16.0),
                (2.0, 2.0, -1.0),
                (-2.0, -2.0, -1.0),
                (2.0, -2.0, 1.0),
                (-2.0, 2.0, 1.0),
            ] {
                vals.push((w, at(&[(q, a), (r, b)])?));
            }
            for (w, v) in &vals {
                terms.push((*w, v));
            }
            let m = comb(&terms, 48.0 * h * h);
            d2[q][r] = m.clone();
            d2[r][q] = m;
        }
    }
    Ok((x, d1, d2))
}

fn node_jet(s: &MapSetup, theta0: &DVector<f64>, t: &[DVector<f64>], r0: f64, scheme: JetScheme) -> Result<Raw> {
    let use_ad = matches!(scheme, JetScheme::Auto) && s.chart.is_analytic();
    if !use_ad {
        let h = match scheme {
            JetScheme::FiniteDifference { h } => h,
            JetScheme::Auto => JET_FD_STEP,
        };
        return jet_fd(s, theta0, t, r0, h);
    }
    match s.gp.k + 1 {
        2 => jet_hyper::<2>(s, theta0, t, r0),
        3 => jet_hyper::<3>(s, theta0, t, r0),
        4 => jet_hyper::<4>(s, theta0, t, r0),
        5 => jet_hyper::<5>(s, theta0, t, r0),
        _ => jet_taylor(s, theta0, t, r0),
    }
}

/// Builds the immersion `kind` at scale `eps` over the quadrature grid.
pub fn build(
    chart: &MetricChart,
    gp: &GrassmannPoint,
    eps: f64,
    kind: SurfaceKind,
    fields: Option<&CorrectionFields>,
    opts: &SurfaceOptions,
) -> Result<ImmersionJet> {
    if !(eps > 0.0) || !(eps < chart.domain_radius() / 2.0) {
        return Err(GeomError::Config(format!("eps = {eps} must lie in (0, domain_radius/2)")));
    }
    let corrected = kind.is_corrected();
    if corrected && fields.is_none() {
        return Err(GeomError::Config("corrected surfaces need correction fields".into()));
    }
    let setup = MapSetup { chart, gp, eps, fields: if corrected { fields } else { None } };
    let k = gp.k;
    let mut nodes = Vec::new();
    if kind.is_ball() {
        let mut rule = BallRule::with_orders(k, opts.orders, opts.radial)?;
        if let Some(q) = &opts.grid_rotation {
            rule.sphere = rule.sphere.rotated(q);
        }
        for (r, wr) in rule.radii.iter().zip(&rule.radial_weights) {
            for nd in &rule.sphere.nodes {
                let (x, d1, d2) = node_jet(&setup, &nd.theta, &nd.tangent, *r, opts.scheme)?;
                nodes.push(to_node(&nd.theta * *r, wr * nd.weight, wr * nd.coarse_weight, x, d1, d2));
            }
        }
    } else {
        let mut rule = SphereRule::with_orders(k, opts.orders)?;
        if let Some(q) = &opts.grid_rotation {
            rule = rule.rotated(q);
        }
        for nd in &rule.nodes {
            let (x, d1, d2) = node_jet(&setup, &nd.theta, &nd.tangent, 1.0, opts.scheme)?;
            nodes.push(to_node(nd.theta.clone(), nd.weight, nd.coarse_weight, x, d1, d2));
        }
    }
    Ok(ImmersionJet {
        kind,
        k,
        eps,
        param_dim: if kind.is_ball() { k + 1 } else { k },
        normals: gp.normals().to_vec(),
        nodes,
    })
}

fn to_node(coords: DVector<f64>, weight: f64, coarse_weight: f64, x: Vec<f64>, d1: Vec<Vec<f64>>, d2: Vec<Vec<Vec<f64>>>) -> JetNode {
    JetNode {
        coords,
        weight,
        coarse_weight,
        x: DVector::from_vec(x),
        d1: d1.into_iter().map(DVector::from_vec).collect(),
        d2: d2.into_iter().map(|row| row.into_iter().map(DVector::from_vec).collect()).collect(),
    }
}

/// Surface point for sphere/ball coordinates `y` (`|y| = 1` on spheres).
pub fn surface_point(
    chart: &MetricChart,
    gp: &GrassmannPoint,
    eps: f64,
    fields: Option<&CorrectionFields>,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let r = y.norm();
    let setup = MapSetup { chart, gp, eps, fields };
    let theta = y / r;
    let tangent = crate::quadrature::tangent_basis(&theta);
    let mut vars = vec![0.0; gp.k + 1];
    vars[gp.k] = r;
    Ok(DVector::from_vec(setup.eval(&theta, &tangent, &vars)?))
}

pub fn geodesic_sphere(chart: &MetricChart, gp: &GrassmannPoint, eps: f64) -> Result<ImmersionJet> {
    build(chart, gp, eps, SurfaceKind::GeodesicSphere, None, &SurfaceOptions::default())
}

pub fn geodesic_ball(chart: &MetricChart, gp: &GrassmannPoint, eps: f64) -> Result<ImmersionJet> {
    build(chart, gp, eps, SurfaceKind::GeodesicBall, None, &SurfaceOptions::default())
}

pub fn corrected_sphere(chart: &MetricChart, gp: &GrassmannPoint, eps: f64, fields: &CorrectionFields) -> Result<ImmersionJet> {
    build(chart, gp, eps, SurfaceKind::CorrectedSphere, Some(fields), &SurfaceOptions::default())
}

pub fn corrected_ball(chart: &MetricChart, gp: &GrassmannPoint, eps: f64, fields: &CorrectionFields) -> Result<ImmersionJet> {
    build(chart, gp, eps, SurfaceKind::CorrectedBall, Some(fields), &SurfaceOptions::default())
}

fn ip(g: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a.transpose() * g * b)[(0, 0)]
}

fn induced_metric(g: &DMatrix<f64>, t: &[DVector<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(t.len(), t.len(), |a, b| ip(g, &t[a], &t[b]))
}

/// Relative tolerance on the embedded-rule disagreement of volumes.
pub const VOLUME_REFINEMENT_TOL: f64 = 1e-9;

/// `∫ √det ḡ` with a refinement check against the embedded coarse rule.
pub fn volume(chart: &MetricChart, jet: &ImmersionJet) -> Result<f64> {
    let (fine, coarse) = volume_pair(chart, jet)?;
    crate::quadrature::checked((fine, coarse), fine, VOLUME_REFINEMENT_TOL)
}

/// `(fine, coarse)` volumes.
pub fn volume_pair(chart: &MetricChart, jet: &ImmersionJet) -> Result<(f64, f64)> {
    let (mut fine, mut coarse) = (0.0, 0.0);
    for nd in &jet.nodes {
        let g = chart.metric(nd.x.as_slice());
        let gb = induced_metric(&g, &nd.d1[..jet.param_dim]);
        let det = gb.determinant();
        if !(det > 0.0) {
            return Err(GeomError::Conditioning("degenerate induced metric".into()));
        }
        fine += nd.weight * det.sqrt();
        coarse += nd.coarse_weight * det.sqrt();
    }
    Ok((fine, coarse))
}

#[derive(Clone, Debug, Serialize)]
pub struct MeanCurvatureNode {
    pub coords: Vec<f64>,
    pub h: Vec<f64>,
    /// Inward unit conormal (spheres only).
    pub n: Option<Vec<f64>>,
    pub normal_frame: Vec<Vec<f64>>,
    pub tangential_component: Option<f64>,
    pub perp_components: Vec<f64>,
    pub weight: f64,
    /// Largest `|g(H, ∂_α F)|` over tangent vectors.
    pub orthogonality_defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeanCurvatureReport {
    pub k: usize,
    pub eps: f64,
    pub nodes: Vec<MeanCurvatureNode>,
}

impl MeanCurvatureReport {
    pub fn to_csv(&self) -> String {
        use crate::report::fmt_f64;
        let dim = self.nodes.first().map_or(0, |n| n.coords.len());
        let codim = self.nodes.first().map_or(0, |n| n.perp_components.len());
        let mut header: Vec<String> = vec!["node_id".into()];
        header.extend((1..=dim).map(|i| format!("u{i}")));
        header.push("tangential_component".into());
        header.extend((1..=codim).map(|i| format!("perp_{i}")));
        let mut s = header.join(",");
        s.push('\n');
        for (i, nd) in self.nodes.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(nd.coords.iter().map(|v| fmt_f64(*v)));
            row.push(nd.tangential_component.map(fmt_f64).unwrap_or_default());
            row.extend(nd.perp_components.iter().map(|v| fmt_f64(*v)));
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn max_orthogonality_defect(&self) -> f64 {
        self.nodes.iter().map(|n| n.orthogonality_defect).fold(0.0, f64::max)
    }
}

/// `H = ḡ^{αβ}(∂²_{αβ}F + Γ(∂_αF, ∂_βF))^⊥` at every node, with the
/// inward conormal and a Gram–Schmidt normal frame from the `E_μ`.
pub fn mean_curvature(chart: &MetricChart, jet: &ImmersionJet) -> Result<MeanCurvatureReport> {
    let pd = jet.param_dim;
    let mut out = Vec::with_capacity(jet.nodes.len());
    for nd in &jet.nodes {
        let x = nd.x.as_slice();
        let n = x.len();
        let g = chart.metric(x);
        let gam = chart.christoffel(x)?;
        let t = &nd.d1[..pd];
        let gb = induced_metric(&g, t);
        let gbi = gb
            .clone()
            .cholesky()
            .ok_or_else(|| GeomError::Conditioning("degenerate induced metric".into()))?
            .inverse();
        let mut hv = DVector::zeros(n);
        for a in 0..pd {
            for b in 0..pd {
                let mut acc = nd.d2[a][b].clone();
                for l in 0..n {
                    let mut s = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            s += gam[(l * n + i) * n + j] * t[a][i] * t[b][j];
                        }
                    }
                    acc[l] += s;
                }
                hv += acc * gbi[(a, b)];
            }
        }
        let tangent_on = gram_schmidt_with(&g, t, &[])?;
        for e in &tangent_on {
            let c = ip(&g, e, &hv);
            hv -= e * c;
        }
        let orthogonality_defect = t.iter().map(|v| ip(&g, v, &hv).abs()).fold(0.0, f64::max);
        let (conormal, against) = if jet.kind.is_ball() {
            (None, tangent_on.clone())
        } else {
            let dr = &nd.d1[pd];
            let c = gram_schmidt_with(&g, std::slice::from_ref(dr), &tangent_on)?.remove(0) * -1.0;
            let mut ag = tangent_on.clone();
            ag.push(c.clone());
            (Some(c), ag)
        };
        let frame = gram_schmidt_with(&g, &jet.normals, &against)?;
        let tangential_component = conormal.as_ref().map(|c| ip(&g, &hv, c));
        let perp_components = frame.iter().map(|e| ip(&g, &hv, e)).collect();
        out.push(MeanCurvatureNode {
            coords: nd.coords.as_slice().to_vec(),
            h: hv.as_slice().to_vec(),
            n: conormal.map(|c| c.as_slice().to_vec()),
            normal_frame: frame.iter().map(|e| e.as_slice().to_vec()).collect(),
            tangential_component,
            perp_components,
            weight: nd.weight,
            orthogonality_defect,
        });
    }
    Ok(MeanCurvatureReport { k: jet.k, eps: jet.eps, nodes: out })
}

/// Fitted kernel-mode coefficients of `H − (k/ε) n`.
#[derive(Clone, Debug, Serialize)]
pub struct KernelModes {
    pub a: Vec<f64>,
    /// `c[μ][a]`.
    pub c: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    pub orth_residual: f64,
}

impl KernelModes {
    /// Euclidean norm of all fitted coefficients.
    pub fn coefficient_norm(&self) -> f64 {
        let s: f64 = self.a.iter().chain(self.c.iter().flatten()).chain(&self.d).map(|v| v * v).sum();
        s.sqrt()
    }
}

fn weighted_lsq(basis: &DMatrix<f64>, w: &[f64], y: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let sw = DVector::from_iterator(w.len(), w.iter().map(|v| v.sqrt()));
    let a = DMatrix::from_fn(basis.nrows(), basis.ncols(), |i, j| basis[(i, j)] * sw[i]);
    let b = y.component_mul(&sw);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax {
        return Err(GeomError::RankDeficient);
    }
    let x = svd.solve(&b, 0.0).map_err(|_| GeomError::RankDeficient)?;
    let r = (&a * &x - b).norm_squared();
    Ok((x, r))
}

/// Least-squares projection of `H − (k/ε)n` onto `span{Θ^a n}` and
/// `span{Θ^a N_μ, N_μ}` with quadrature weights.
pub fn kernel_mode_residual(report: &MeanCurvatureReport, eps: f64, k: usize) -> Result<KernelModes> {
    let nn = report.nodes.len();
    if nn == 0 || report.nodes[0].tangential_component.is_none() {
        return Err(GeomError::Config("kernel modes need a sphere report".into()));
    }
    let k1 = k + 1;
    let w: Vec<f64> = report.nodes.iter().map(|n| n.weight).collect();
    let theta = DMatrix::from_fn(nn, k1, |i, a| report.nodes[i].coords[a]);
    let tang = DVector::from_fn(nn, |i, _| report.nodes[i].tangential_component.unwrap() - k as f64 / eps);
    let (a, mut res) = weighted_lsq(&theta, &w, &tang)?;
    let with_const = DMatrix::from_fn(nn, k1 + 1, |i, j| if j < k1 { theta[(i, j)] } else { 1.0 });
    let codim = report.nodes[0].perp_components.len();
    let mut c = Vec::with_capacity(codim);
    let mut d = Vec::with_capacity(codim);
    for mu in 0..codim {
        let y = DVector::from_fn(nn, |i, _| report.nodes[i].perp_components[mu]);
        let (x, r) = weighted_lsq(&with_const, &w, &y)?;
        c.push(x.rows(0, k1).iter().copied().collect());
        d.push(x[k1]);
        res += r;
    }
    Ok(KernelModes { a: a.iter().copied().collect(), c, d, orth_residual: res.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::invariants;
    use crate::quadrature::sphere_volume;

    fn small() -> SurfaceOptions {
        SurfaceOptions { orders: RuleOrders { s1_nodes: 32, azimuth: 16, gl: 8 }, radial: 8, scheme: JetScheme::Auto, grid_rotation: None }
    }

    #[test]
    fn euclidean_round_sphere() {
        let ch = MetricChart::euclidean(3);
        let gp = GrassmannPoint::coordinate_plane(&ch, DVector::zeros(3), 2).unwrap();
        let eps = 0.1;
        let jet = build(&ch, &gp, eps, SurfaceKind::GeodesicSphere, None, &small()).unwrap();
        let rep = mean_curvature(&ch, &jet).unwrap();
        for nd in &rep.nodes {
            assert!((nd.tangential_component.unwrap() - 2.0 / eps).abs() < 1e-10);
        }
        let v = volume(&ch, &jet).unwrap();
        assert!((v - eps * eps * sphere_volume(2)).abs() < 1e-14);
        let ball = build(&ch, &gp, eps, SurfaceKind::GeodesicBall, None, &small()).unwrap();
        assert!((volume(&ch, &ball).unwrap() - eps.powi(3) * sphere_volume(2) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn space_form_circle_length_and_curvature() {
        let ch = MetricChart::space_form(1.0, 3);
        let gp = GrassmannPoint::coordinate_plane(&ch, DVector::from_column_slice(&[0.1, 0.0, -0.2]), 1).unwrap();
        let eps = 0.2;
        let jet = build(&ch, &gp, eps, SurfaceKind::GeodesicSphere, None, &small()).unwrap();
        assert!((volume(&ch, &jet).unwrap() - 2.0 * std::f64::consts::PI * eps.sin()).abs() < 1e-12);
        let rep = mean_curvature(&ch, &jet).unwrap();
        for nd in &rep.nodes {
            assert!((nd.tangential_component.unwrap() - 1.0 / eps.tan()).abs() < 1e-10);
            assert!(nd.perp_components[0].abs() < 1e-10);
        }
    }

    #[test]
    fn fd_jets_agree_with_ad() {
        let ch = MetricChart::conformal(3, vec![(vec![2, 0, 0], -0.3), (vec![1, 1, 1], 0.4)]).unwrap();
        let gp = GrassmannPoint::coordinate_plane(&ch, DVector::from_column_slice(&[0.1, 0.0, -0.1]), 1).unwrap();
        let inv = invariants(&ch, &gp).unwrap();
        let f = CorrectionFields::new(&inv, 0.1);
        let ad = build(&ch, &gp, 0.1, SurfaceKind::CorrectedBall, Some(&f), &small()).unwrap();
        let mut o = small();
        o.scheme = JetScheme::FiniteDifference { h: JET_FD_STEP };
        let fd = build(&ch, &gp, 0.1, SurfaceKind::CorrectedBall, Some(&f), &o).unwrap();
        for (a, b) in ad.nodes.iter().zip(&fd.nodes) {
            assert!((&a.x - &b.x).amax() < 1e-15);
            for q in 0..2 {
                assert!((&a.d1[q] - &b.d1[q]).amax() < 1e-8);
                for r in 0..2 {
                    assert!((&a.d2[q][r] - &b.d2[q][r]).amax() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn ball_boundary_is_corrected_sphere() {
        let ch = MetricChart::conformal(3, vec![(vec![2, 0, 0], -0.3), (vec![0, 1, 1], 0.4)]).unwrap();
        let gp = GrassmannPoint::coordinate_plane(&ch, DVector::from_column_slice(&[0.1, 0.0, -0.1]), 1).unwrap();
        let inv = invariants(&ch, &gp).unwrap();
        let f = CorrectionFields::new(&inv, 0.1);
        let sphere = build(&ch, &gp, 0.1, SurfaceKind::CorrectedSphere, Some(&f), &small()).unwrap();
        for nd in &sphere.nodes {
            let y = surface_point(&ch, &gp, 0.1, Some(&f), &nd.coords).unwrap();
            assert!((&y - &nd.x).amax() < 1e-15);
        }
        let y = DVector::from_column_slice(&[0.6, 0.8]);
        assert!(f.w(y.as_slice()).iter().all(|v: &f64| v.abs() < 1e-18));
    }
}
