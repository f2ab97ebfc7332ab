//! Points of the Grassmann bundle of `(k+1)`-planes, the partial curvature
//! invariants of a plane, and a critical-point search for `ℛ_{k+1}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::curvature::{curvature_at, CurvatureData, Depth, FRAME_TOL};
use crate::error::{GeomError, Result};
use crate::metric::{coordinate_basis, frame_deviation, gram_schmidt_with, orthonormalize, MetricChart};

/// A base point with a g-orthonormal frame; the first `k+1` vectors span `Π_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrassmannPoint {
    pub p: DVector<f64>,
    pub frame: Vec<DVector<f64>>,
    pub k: usize,
}

impl GrassmannPoint {
    pub fn new(chart: &MetricChart, p: DVector<f64>, frame: Vec<DVector<f64>>, k: usize) -> Result<Self> {
        let n = chart.dim();
        if p.len() != n || frame.len() != n || frame.iter().any(|e| e.len() != n) {
            return Err(GeomError::Dimension(format!("point and frame must live in dimension {n}")));
        }
        if k == 0 || k + 1 > n {
            return Err(GeomError::Dimension(format!("k = {k} must satisfy 1 <= k <= {}", n - 1)));
        }
        chart.check_inside(p.as_slice())?;
        let dev = frame_deviation(chart, p.as_slice(), &frame);
        if !(dev <= FRAME_TOL) {
            return Err(GeomError::Frame { deviation: dev });
        }
        Ok(GrassmannPoint { p, frame, k })
    }

    /// The plane spanned by the first `k+1` coordinate directions at `p`.
    pub fn coordinate_plane(chart: &MetricChart, p: DVector<f64>, k: usize) -> Result<Self> {
        chart.check_inside(p.as_slice())?;
        let frame = orthonormalize(chart, p.as_slice(), &coordinate_basis(chart.dim()))?;
        Self::new(chart, p, frame, k)
    }

    pub fn dim(&self) -> usize {
        self.frame.len()
    }

    /// Codimension `m - k` of `Π_p`.
    pub fn codim(&self) -> usize {
        self.dim() - self.k - 1
    }

    pub fn plane(&self) -> &[DVector<f64>] {
        &self.frame[..=self.k]
    }

    pub fn normals(&self) -> &[DVector<f64>] {
        &self.frame[self.k + 1..]
    }

    /// Replaces `E_1..E_{k+1}` by `E'_a = Σ_b q[(b,a)] E_b` and the normals by
    /// the analogous combination with `q_perp`.
    pub fn rotated(&self, q: &DMatrix<f64>, q_perp: &DMatrix<f64>) -> Self {
        let k1 = self.k + 1;
        let mix = |vs: &[DVector<f64>], q: &DMatrix<f64>| -> Vec<DVector<f64>> {
            (0..vs.len())
                .map(|a| (0..vs.len()).fold(DVector::zeros(self.dim()), |acc, b| acc + &vs[b] * q[(b, a)]))
                .collect()
        };
        let mut frame = mix(&self.frame[..k1], q);
        frame.extend(mix(&self.frame[k1..], q_perp));
        GrassmannPoint { p: self.p.clone(), frame, k: self.k }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "p": self.p.as_slice(),
            "frame": self.frame.iter().map(|e| e.as_slice().to_vec()).collect::<Vec<_>>(),
            "k": self.k,
        })
    }
}

fn check_frame(cd: &CurvatureData, gp: &GrassmannPoint) -> Result<()> {
    if cd.dim != gp.dim() || gp.k + 1 > cd.dim || gp.k == 0 {
        return Err(GeomError::Dimension(format!("k = {} out of range for dimension {}", gp.k, cd.dim)));
    }
    Ok(())
}

/// `ℛ_{k+1}(Π_p) = -Σ_{i,j ≤ k+1} R_ijij`.
pub fn partial_scalar(cd: &CurvatureData, gp: &GrassmannPoint) -> Result<f64> {
    check_frame(cd, gp)?;
    let mut s = 0.0;
    for i in 0..=gp.k {
        for j in 0..=gp.k {
            s -= cd.r(i, j, i, j);
        }
    }
    Ok(cd.convention_sign * s)
}

/// `(𝓡ic_{k+1}, 𝓡ic^⊥_{k+1})` in frame components.
pub fn partial_ricci(cd: &CurvatureData, gp: &GrassmannPoint) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_frame(cd, gp)?;
    let k1 = gp.k + 1;
    let n = gp.dim();
    let entry = |a: usize, b: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..k1 {
            s -= cd.r(i, a, i, b);
        }
        cd.convention_sign * s
    };
    let ric = DMatrix::from_fn(k1, k1, |a, b| entry(a, b));
    let perp = DMatrix::from_fn(k1, n - k1, |a, mu| entry(a, k1 + mu));
    Ok((ric, perp))
}

/// `(‖R_{k+1}‖², ‖R^⊥_{k+1}‖²)`.
pub fn restricted_riemann_norms(cd: &CurvatureData, gp: &GrassmannPoint) -> Result<(f64, f64)> {
    check_frame(cd, gp)?;
    let k1 = gp.k + 1;
    let (mut nr, mut np) = (0.0, 0.0);
    for a in 0..k1 {
        for b in 0..k1 {
            for c in 0..k1 {
                for d in 0..cd.dim {
                    let v = cd.r(a, b, c, d);
                    if d < k1 {
                        nr += v * v;
                    } else {
                        np += v * v;
                    }
                }
            }
        }
    }
    Ok((nr, np))
}

/// `Σ_{a ≤ k+1} ∇²_{E_a E_a} ℛ_{k+1}` from the covariant-derivative jets.
pub fn partial_laplacian_scalar_jet(cd: &CurvatureData, gp: &GrassmannPoint) -> Result<f64> {
    check_frame(cd, gp)?;
    let mut s = 0.0;
    for a in 0..=gp.k {
        for i in 0..=gp.k {
            for j in 0..=gp.k {
                s -= cd.d2r(i, j, i, j, a, a);
            }
        }
    }
    Ok(cd.convention_sign * s)
}

/// Default step for the geodesic second differences of `ℛ_{k+1}`.
pub const LAPLACIAN_STEP: f64 = 1e-3;

/// `ℛ_{k+1}` at `exp_p(t u)` with the frame transported in parallel.
fn scalar_along(chart: &MetricChart, gp: &GrassmannPoint, u: &DVector<f64>, t: f64) -> Result<f64> {
    let sol = chart.parallel_transport(&gp.p, u, &gp.frame, t)?;
    let moved = GrassmannPoint { p: sol.endpoint, frame: sol.transported_frame, k: gp.k };
    scalar_at(chart, &moved)
}

fn scalar_at(chart: &MetricChart, gp: &GrassmannPoint) -> Result<f64> {
    let cd = curvature_at(chart, &gp.p, &gp.frame, Depth::Riemann)?;
    partial_scalar(&cd, gp)
}

/// `Σ_{a ≤ k+1}` five-point second differences of `ℛ_{k+1}` along the
/// geodesics `exp_p(t E_a)`, with the plane transported in parallel.
pub fn partial_laplacian_scalar(chart: &MetricChart, gp: &GrassmannPoint) -> Result<f64> {
    partial_laplacian_scalar_with_step(chart, gp, LAPLACIAN_STEP)
}

pub fn partial_laplacian_scalar_with_step(chart: &MetricChart, gp: &GrassmannPoint, h: f64) -> Result<f64> {
    let s0 = scalar_at(chart, gp)?;
    let lap = |h: f64| -> Result<f64> {
        let mut total = 0.0;
        for a in 0..=gp.k {
            let e = &gp.frame[a];
            let f = |t: f64| scalar_along(chart, gp, e, t);
            total += (-f(-2.0 * h)? + 16.0 * f(-h)? - 30.0 * s0 + 16.0 * f(h)? - f(2.0 * h)?) / (12.0 * h * h);
        }
        Ok(total)
    };
    let fine = lap(h)?;
    let coarse = lap(2.0 * h)?;
    // Round-off in the stencil is about 64 ulp of ℛ over 12 h².
    let noise = 64.0 * f64::EPSILON * s0.abs().max(1.0) * (gp.k + 1) as f64 / (12.0 * h * h);
    let disagreement = (fine - coarse).abs();
    if disagreement > 1e-3 * fine.abs() + 100.0 * noise {
        return Err(GeomError::Precision {
            radius: h,
            detail: format!("Laplacian step halving disagrees by {disagreement:e}"),
        });
    }
    Ok(fine)
}

/// Ingredients of `**r**`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RIngredients {
    pub k: usize,
    pub scalar: f64,
    pub norm_ric: f64,
    pub lap_scalar: f64,
    pub norm_r: f64,
    pub norm_ric_perp: f64,
    pub norm_r_perp: f64,
}

pub fn r_invariant(x: &RIngredients) -> Result<f64> {
    if x.k == 0 {
        return Err(GeomError::Dimension("r is undefined for k = 0".into()));
    }
    let k = x.k as f64;
    let s2 = x.scalar * x.scalar;
    let a = (8.0 * x.norm_ric - 18.0 * x.lap_scalar - 3.0 * x.norm_r + 5.0 * s2 + 8.0 * x.norm_ric_perp
        + 12.0 * x.norm_r_perp)
        / (36.0 * (k + 5.0));
    let b = ((k + 6.0) / k * s2 - 2.0 * x.norm_ric) / (9.0 * (k + 2.0));
    let c = 4.0 * k / (3.0 * (k + 3.0) * (k + 5.0)) * x.norm_ric_perp;
    Ok(a + b - c)
}

/// `Ψ = 2ε⁻²(k+3)(1 − (k+1)ℰ/(ε^k Vol(S^k)))`.
pub fn psi(energy: f64, eps: f64, k: usize, vol_sk: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(GeomError::Config(format!("eps must be positive, got {eps}")));
    }
    let kf = k as f64;
    Ok(2.0 * (kf + 3.0) / (eps * eps) * (1.0 - (kf + 1.0) * energy / (eps.powi(k as i32) * vol_sk)))
}

#[derive(Clone, Debug, Serialize)]
pub struct PartialInvariants {
    pub k: usize,
    pub scalar_k1: f64,
    pub ric: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ric_perp: Option<Vec<Vec<f64>>>,
    pub norm_ric: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_ric_perp: Option<f64>,
    pub norm_r: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_r_perp: Option<f64>,
    pub lap_scalar: f64,
    pub r_invariant: f64,
    /// `(ε, Ψ(ε))` when an energy has been supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<(f64, f64)>,
}

impl PartialInvariants {
    pub fn ingredients(&self) -> RIngredients {
        RIngredients {
            k: self.k,
            scalar: self.scalar_k1,
            norm_ric: self.norm_ric,
            lap_scalar: self.lap_scalar,
            norm_r: self.norm_r,
            norm_ric_perp: self.norm_ric_perp.unwrap_or(0.0),
            norm_r_perp: self.norm_r_perp.unwrap_or(0.0),
        }
    }

    pub fn ric_matrix(&self) -> DMatrix<f64> {
        let k1 = self.k + 1;
        DMatrix::from_fn(k1, k1, |a, b| self.ric[a][b])
    }

    pub fn ric_perp_matrix(&self) -> DMatrix<f64> {
        let k1 = self.k + 1;
        match &self.ric_perp {
            Some(rows) => DMatrix::from_fn(k1, rows.first().map_or(0, |r| r.len()), |a, mu| rows[a][mu]),
            None => DMatrix::zeros(k1, 0),
        }
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// All invariants of `gp` from curvature data computed in `gp.frame`.
pub fn invariants_from(cd: &CurvatureData, gp: &GrassmannPoint) -> Result<PartialInvariants> {
    let scalar_k1 = partial_scalar(cd, gp)?;
    let (ric, perp) = partial_ricci(cd, gp)?;
    let (norm_r, norm_r_perp) = restricted_riemann_norms(cd, gp)?;
    let lap_scalar = partial_laplacian_scalar_jet(cd, gp)?;
    let hyper = gp.codim() == 0;
    let norm_ric = ric.norm_squared();
    let norm_ric_perp = perp.norm_squared();
    let ingredients =
        RIngredients { k: gp.k, scalar: scalar_k1, norm_ric, lap_scalar, norm_r, norm_ric_perp, norm_r_perp };
    Ok(PartialInvariants {
        k: gp.k,
        scalar_k1,
        ric: rows(&ric),
        ric_perp: (!hyper).then(|| rows(&perp)),
        norm_ric,
        norm_ric_perp: (!hyper).then_some(norm_ric_perp),
        norm_r,
        norm_r_perp: (!hyper).then_some(norm_r_perp),
        lap_scalar,
        r_invariant: r_invariant(&ingredients)?,
        psi: None,
    })
}

pub fn invariants(chart: &MetricChart, gp: &GrassmannPoint) -> Result<PartialInvariants> {
    let cd = curvature_at(chart, &gp.p, &gp.frame, Depth::Second)?;
    invariants_from(&cd, gp)
}

/// Tuning for [`find_critical`].
#[derive(Clone, Debug)]
pub struct CriticalOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Step for finite-difference gradients and Hessians.
    pub fd_step: f64,
    /// Gradient norm below which Newton refinement takes over.
    pub newton_switch: f64,
    /// Relative nondegeneracy floor on Hessian eigenvalues.
    pub nondegeneracy_floor: f64,
    /// Absolute floor, applied together with the relative one.
    pub nondegeneracy_abs: f64,
    /// Largest step norm taken by any single update.
    pub max_step: f64,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        CriticalOptions {
            grad_tol: 1e-10,
            max_iter: 200,
            fd_step: 1e-3,
            newton_switch: 1e-3,
            nondegeneracy_floor: 1e-4,
            nondegeneracy_abs: 1e-7,
            max_step: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CriticalPointResult {
    pub point: GrassmannPoint,
    pub value: f64,
    pub gradient_norm: f64,
    pub hessian_eigenvalues: Vec<f64>,
    pub nondegenerate: bool,
    pub iterations: usize,
}

impl CriticalPointResult {
    pub fn to_json(&self, invariants: Option<&PartialInvariants>) -> serde_json::Value {
        serde_json::json!({
            "point": self.point.to_json(),
            "value": self.value,
            "gradient_norm": self.gradient_norm,
            "hessian_eigenvalues": self.hessian_eigenvalues,
            "nondegenerate": self.nondegenerate,
            "iterations": self.iterations,
            "invariants": invariants.map(|i| serde_json::to_value(i).expect("serialisable")),
        })
    }
}

/// Number of local parameters: base translations plus plane rotations.
pub fn parameter_count(gp: &GrassmannPoint) -> usize {
    gp.dim() + (gp.k + 1) * gp.codim()
}

/// Moves `gp` by local parameters: the first `m+1` entries are a tangent
/// vector in frame components (geodesic step with parallel frame transport),
/// the rest are a `(m-k) × (k+1)` matrix `A` in row-major order, applied as
/// the rotation `exp([[0, -Aᵀ], [A, 0]])` of the transported frame, followed
/// by Gram–Schmidt.
pub fn retract(chart: &MetricChart, gp: &GrassmannPoint, params: &[f64]) -> Result<GrassmannPoint> {
    let n = gp.dim();
    let k1 = gp.k + 1;
    if params.len() != parameter_count(gp) {
        return Err(GeomError::Dimension("wrong number of Grassmann parameters".into()));
    }
    let v = (0..n).fold(DVector::zeros(n), |acc, i| acc + &gp.frame[i] * params[i]);
    let (p, moved) = if params[..n].iter().all(|x| *x == 0.0) {
        (gp.p.clone(), gp.frame.clone())
    } else {
        let sol = chart.parallel_transport(&gp.p, &v, &gp.frame, 1.0)?;
        (sol.endpoint, sol.transported_frame)
    };
    chart.check_inside(p.as_slice())?;
    let mut s = DMatrix::zeros(n, n);
    for mu in 0..gp.codim() {
        for a in 0..k1 {
            let x = params[n + mu * k1 + a];
            s[(k1 + mu, a)] = x;
            s[(a, k1 + mu)] = -x;
        }
    }
    let rot = s.exp();
    let rotated: Vec<DVector<f64>> =
        (0..n).map(|i| (0..n).fold(DVector::zeros(n), |acc, j| acc + &moved[j] * rot[(j, i)])).collect();
    let frame = gram_schmidt_with(&chart.metric(p.as_slice()), &rotated, &[])?;
    Ok(GrassmannPoint { p, frame, k: gp.k })
}

/// `ℛ_{k+1}` as a function of the local parameters around `gp`.
pub fn objective(chart: &MetricChart, gp: &GrassmannPoint, params: &[f64]) -> Result<f64> {
    scalar_at(chart, &retract(chart, gp, params)?)
}

fn fd_gradient(chart: &MetricChart, gp: &GrassmannPoint, h: f64) -> Result<DVector<f64>> {
    let d = parameter_count(gp);
    let mut g = DVector::zeros(d);
    for i in 0..d {
        let f = |s: f64| {
            let mut x = vec![0.0; d];
            x[i] = s * h;
            objective(chart, gp, &x)
        };
        g[i] = (f(-2.0)? - 8.0 * f(-1.0)? + 8.0 * f(1.0)? - f(2.0)?) / (12.0 * h);
    }
    Ok(g)
}

/// Symmetric finite-difference Hessian of the objective at `gp`.
pub fn fd_hessian(chart: &MetricChart, gp: &GrassmannPoint, h: f64) -> Result<DMatrix<f64>> {
    let d = parameter_count(gp);
    let f0 = objective(chart, gp, &vec![0.0; d])?;
    let at = |pairs: &[(usize, f64)]| {
        let mut x = vec![0.0; d];
        for &(i, s) in pairs {
            x[i] += s * h;
        }
        objective(chart, gp, &x)
    };
    let mut hm = DMatrix::zeros(d, d);
    for i in 0..d {
        hm[(i, i)] = (-at(&[(i, -2.0)])? + 16.0 * at(&[(i, -1.0)])? - 30.0 * f0 + 16.0 * at(&[(i, 1.0)])?
            - at(&[(i, 2.0)])?)
            / (12.0 * h * h);
        for j in 0..i {
            let v = (at(&[(i, 1.0), (j, 1.0)])? - at(&[(i, 1.0), (j, -1.0)])? - at(&[(i, -1.0), (j, 1.0)])?
                + at(&[(i, -1.0), (j, -1.0)])?)
                / (4.0 * h * h);
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    Ok(hm)
}

fn clamp_step(mut s: DVector<f64>, max: f64) -> DVector<f64> {
    let n = s.norm();
    if n > max {
        s *= max / n;
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Minimize,
    Maximize,
    /// Damped Newton on the gradient from the first iteration.
    Saddle,
}

fn search(
    chart: &MetricChart,
    seed: &GrassmannPoint,
    opts: &CriticalOptions,
    mode: Mode,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<(GrassmannPoint, f64, usize)> {
    let sign = if mode == Mode::Minimize { 1.0 } else { -1.0 };
    let d = parameter_count(seed);
    let mut gp = seed.clone();
    let mut f = scalar_at(chart, &gp)?;
    if let Some(t) = trace.as_deref_mut() {
        t.push(f);
    }
    let mut g = fd_gradient(chart, &gp, opts.fd_step)?;
    let mut alpha = 1.0;
    for it in 0..opts.max_iter {
        let gn = g.norm();
        if gn < opts.grad_tol {
            return Ok((gp, gn, it));
        }
        if mode == Mode::Saddle || gn < opts.newton_switch {
            // Newton on the gradient: accept the first backtracked step that reduces |g|.
            let hm = fd_hessian(chart, &gp, opts.fd_step)?;
            let eig = SymmetricEigen::new(hm);
            let floor = 1e-12 * eig.eigenvalues.amax().max(1e-300);
            let gq = eig.eigenvectors.transpose() * &g;
            let step_q = DVector::from_fn(d, |i, _| {
                let l = eig.eigenvalues[i];
                if l.abs() > floor { -gq[i] / l } else { 0.0 }
            });
            let full = clamp_step(&eig.eigenvectors * step_q, opts.max_step);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let step = &full * t;
                let cand = retract(chart, &gp, step.as_slice())?;
                let gc = fd_gradient(chart, &cand, opts.fd_step)?;
                if gc.norm() < gn {
                    f = scalar_at(chart, &cand)?;
                    gp = cand;
                    g = gc;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return Ok((gp, gn, it));
            }
            continue;
        }
        // Steepest descent on sign·ℛ with Armijo backtracking.
        let dir = &g * (-sign);
        let mut t = alpha;
        let mut accepted = false;
        for _ in 0..50 {
            let step = clamp_step(&dir * t, opts.max_step);
            let cand = retract(chart, &gp, step.as_slice())?;
            let fc = scalar_at(chart, &cand)?;
            if sign * (fc - f) <= -1e-4 * step.dot(&dir).abs() {
                gp = cand;
                f = fc;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(f);
                }
                g = fd_gradient(chart, &gp, opts.fd_step)?;
                accepted = true;
                alpha = (t * 2.0).min(1e6);
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Ok((gp, gn, it));
        }
    }
    Err(GeomError::MaxIterations(opts.max_iter))
}

fn flatten(gp: &GrassmannPoint) -> Vec<f64> {
    let mut v = gp.p.as_slice().to_vec();
    for e in &gp.frame {
        v.extend_from_slice(e.as_slice());
    }
    v
}

/// Searches for a critical point of `ℛ_{k+1}` from `seed`, in both descent
/// modes with Newton refinement and in a pure Newton mode, and keeps the result with the smallest
/// gradient (ties broken lexicographically on the parameters).
pub fn find_critical(chart: &MetricChart, seed: &GrassmannPoint, opts: &CriticalOptions) -> Result<CriticalPointResult> {
    find_critical_multi(chart, std::slice::from_ref(seed), opts)
}

pub fn find_critical_multi(chart: &MetricChart, seeds: &[GrassmannPoint], opts: &CriticalOptions) -> Result<CriticalPointResult> {
    let mut best: Option<(GrassmannPoint, f64, usize)> = None;
    let mut last_err = None;
    for seed in seeds {
        chart.check_inside(seed.p.as_slice())?;
        for mode in [Mode::Minimize, Mode::Maximize, Mode::Saddle] {
            match search(chart, seed, opts, mode, None) {
                Ok(r) => {
                    let better = match &best {
                        None => true,
                        Some(b) => {
                            r.1 < b.1
                                || (r.1 == b.1
                                    && flatten(&r.0).partial_cmp(&flatten(&b.0)) == Some(std::cmp::Ordering::Less))
                        }
                    };
                    if better {
                        best = Some(r);
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
    }
    let (point, gradient_norm, iterations) = match best {
        Some(b) => b,
        None => return Err(last_err.unwrap_or(GeomError::Config("no seeds supplied".into()))),
    };
    let hm = fd_hessian(chart, &point, opts.fd_step)?;
    let mut hessian_eigenvalues: Vec<f64> = SymmetricEigen::new(hm).eigenvalues.iter().copied().collect();
    hessian_eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nondegenerate = is_nondegenerate(&hessian_eigenvalues, opts);
    let value = scalar_at(chart, &point)?;
    Ok(CriticalPointResult { point, value, gradient_norm, hessian_eigenvalues, nondegenerate, iterations })
}

/// Objective values after each accepted steepest-descent step (ascent when
/// `maximize`), with Newton refinement disabled. Stops at convergence, at the
/// iteration cap or when the path leaves the chart.
pub fn descent_values(chart: &MetricChart, seed: &GrassmannPoint, opts: &CriticalOptions, maximize: bool) -> Vec<f64> {
    let opts = CriticalOptions { newton_switch: 0.0, ..opts.clone() };
    let mode = if maximize { Mode::Maximize } else { Mode::Minimize };
    let mut values = Vec::new();
    let _ = search(chart, seed, &opts, mode, Some(&mut values));
    values
}

pub fn is_nondegenerate(eigenvalues: &[f64], opts: &CriticalOptions) -> bool {
    let max = eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let min = eigenvalues.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    min > (opts.nondegeneracy_floor * max).max(opts.nondegeneracy_abs)
}

/// `(|Δp|²_g + Σ θ_i²)^{1/2}` with principal angles measured in `g(a.p)`.
pub fn grassmann_distance(chart: &MetricChart, a: &GrassmannPoint, b: &GrassmannPoint) -> Result<f64> {
    if a.k != b.k || a.dim() != b.dim() {
        return Err(GeomError::Dimension("points live in different Grassmannians".into()));
    }
    let g = chart.metric(a.p.as_slice());
    let dp = &b.p - &a.p;
    let dp2 = (dp.transpose() * &g * &dp)[(0, 0)];
    let ua = gram_schmidt_with(&g, a.plane(), &[])?;
    let ub = gram_schmidt_with(&g, b.plane(), &[])?;
    let m = DMatrix::from_fn(ua.len(), ub.len(), |i, j| (ua[i].transpose() * &g * &ub[j])[(0, 0)]);
    let angles: f64 = m.singular_values().iter().map(|s| s.clamp(-1.0, 1.0).acos().powi(2)).sum();
    Ok((dp2 + angles).sqrt())
}
