//! Riemann tensor and its first two covariant derivatives in an orthonormal
//! frame, plus the normal-coordinate metric expansion check.
//!
//! Components follow `R_ijkl = g(R(E_i, E_j) E_k, E_l)` with
//! `R(X, Y) = ∇_X ∇_Y − ∇_Y ∇_X − ∇_[X,Y]`. The production route expands the
//! metric at `p` as a fourth-order Taylor series and carries `g⁻¹`, `Γ`, `R`,
//! `∇R` and `∇∇R` through exact truncated-series arithmetic. A second,
//! independent route differentiates frame components of `R` along geodesics
//! with parallel-transported frames.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::ad::{Scalar, Taylor, TaylorSpace};
use crate::error::{GeomError, Result};
use crate::fit::{fit_loglog, LineFit, NOISE_FLOOR};
use crate::metric::{frame_deviation, MetricChart};

/// Calibrated so that `-Σ R_ijij` is the scalar curvature; see
/// [`calibrate_convention_sign`].
pub const CONVENTION_SIGN: f64 = 1.0;

/// Tolerance on the Gram matrix of an input frame.
pub const FRAME_TOL: f64 = 1e-10;

/// Riemann data at `p` in `frame`.
///
/// `dr[(i,j,k,l,a)] = (∇_{E_a} R)_{ijkl}` and
/// `d2r[(i,j,k,l,a,b)] = (∇_{E_b} ∇R)_{ijkl;a}`.
#[derive(Clone, Debug)]
pub struct CurvatureData {
    pub dim: usize,
    pub p: DVector<f64>,
    pub frame: Vec<DVector<f64>>,
    pub r: Vec<f64>,
    pub dr: Option<Vec<f64>>,
    pub d2r: Option<Vec<f64>>,
    pub convention_sign: f64,
}

impl CurvatureData {
    #[inline]
    pub fn r(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.dim;
        self.r[((i * n + j) * n + k) * n + l]
    }

    #[inline]
    pub fn dr(&self, i: usize, j: usize, k: usize, l: usize, a: usize) -> f64 {
        let n = self.dim;
        self.dr.as_ref().expect("first covariant derivative not computed")[(((i * n + j) * n + k) * n + l) * n + a]
    }

    #[inline]
    pub fn d2r(&self, i: usize, j: usize, k: usize, l: usize, a: usize, b: usize) -> f64 {
        let n = self.dim;
        self.d2r.as_ref().expect("second covariant derivative not computed")
            [((((i * n + j) * n + k) * n + l) * n + a) * n + b]
    }

    /// Tensor symmetry defects: (antisymmetry, pair symmetry, first Bianchi).
    pub fn symmetry_defects(&self) -> (f64, f64, f64) {
        let n = self.dim;
        let (mut anti, mut pair, mut bianchi) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = self.r(i, j, k, l);
                        anti = anti.max((v + self.r(j, i, k, l)).abs()).max((v + self.r(i, j, l, k)).abs());
                        pair = pair.max((v - self.r(k, l, i, j)).abs());
                        bianchi = bianchi.max((v + self.r(i, k, l, j) + self.r(i, l, j, k)).abs());
                    }
                }
            }
        }
        (anti, pair, bianchi)
    }

    /// Scalar curvature `-Σ_{i,j} R_ijij` of the full tangent space.
    pub fn scalar_curvature(&self) -> f64 {
        let n = self.dim;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s -= self.r(i, j, i, j);
            }
        }
        self.convention_sign * s
    }

    /// Components in the frame `E'_i = Σ_j q[(j, i)] E_j` for orthogonal `q`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> CurvatureData {
        let n = self.dim;
        let frame = (0..n)
            .map(|i| (0..n).fold(DVector::zeros(self.frame[0].len()), |acc, j| acc + &self.frame[j] * q[(j, i)]))
            .collect();
        CurvatureData {
            dim: n,
            p: self.p.clone(),
            frame,
            r: transform(&self.r, n, 4, q),
            dr: self.dr.as_ref().map(|t| transform(t, n, 5, q)),
            d2r: self.d2r.as_ref().map(|t| transform(t, n, 6, q)),
            convention_sign: self.convention_sign,
        }
    }
}

/// Contracts every index of a rank-`rank` tensor with the columns of `e`.
fn transform(t: &[f64], n: usize, rank: usize, e: &DMatrix<f64>) -> Vec<f64> {
    let mut cur = t.to_vec();
    for slot in 0..rank {
        let stride = n.pow((rank - 1 - slot) as u32);
        let mut next = vec![0.0; cur.len()];
        for (idx, out) in next.iter_mut().enumerate() {
            let i = (idx / stride) % n;
            let base = idx - i * stride;
            let mut s = 0.0;
            for p in 0..n {
                s += cur[base + p * stride] * e[(p, i)];
            }
            *out = s;
        }
        cur = next;
    }
    cur
}

/// Gauss–Jordan inverse on generic scalars (row-major), pivoting on values.
pub fn invert_generic<S: Scalar>(m: &[S], n: usize) -> Option<Vec<S>> {
    let mut a = m.to_vec();
    let mut inv: Vec<S> = (0..n * n).map(|i| m[0].lift(if i / n == i % n { 1.0 } else { 0.0 })).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| {
            a[x * n + col].value().abs().partial_cmp(&a[y * n + col].value().abs()).unwrap()
        })?;
        if a[piv * n + col].value().abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
                inv.swap(col * n + j, piv * n + j);
            }
        }
        let d = a[col * n + col].recip();
        for j in 0..n {
            a[col * n + j] = a[col * n + j].clone() * d.clone();
            inv[col * n + j] = inv[col * n + j].clone() * d.clone();
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col].clone();
            if f.value() == 0.0 && f.order() == 0 {
                continue;
            }
            for j in 0..n {
                a[r * n + j] = a[r * n + j].clone() - f.clone() * a[col * n + j].clone();
                inv[r * n + j] = inv[r * n + j].clone() - f.clone() * inv[col * n + j].clone();
            }
        }
    }
    Some(inv)
}

/// How many covariant derivatives of `R` to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Depth {
    Riemann,
    First,
    Second,
}

/// Coordinate components at `p`: `(g, R_ijkl, ∇R, ∇∇R)` as flattened arrays.
#[allow(clippy::type_complexity)]
fn coordinate_curvature(
    chart: &MetricChart,
    p: &[f64],
    depth: Depth,
) -> Result<(DMatrix<f64>, Vec<f64>, Option<Vec<f64>>, Option<Vec<f64>>)> {
    let n = chart.dim();
    let extra = match depth {
        Depth::Riemann => 0,
        Depth::First => 1,
        Depth::Second => 2,
    };
    let order = 2 + extra;
    let g = chart.metric_taylor(p, order)?;
    let ginv = invert_generic(&g, n).ok_or_else(|| GeomError::SingularMetric { at: p.to_vec() })?;
    let space: std::sync::Arc<TaylorSpace> = g[0].space().clone();
    let zero = |ord: usize| Taylor::constant(&space, 0.0).truncate(ord);

    // ∂_q g_ij
    let dg: Vec<Vec<Taylor>> = (0..n).map(|q| g.iter().map(|gij| gij.derivative(q)).collect()).collect();
    let gidx = |i: usize, j: usize| i * n + j;
    // Γ^l_ij, order-1 series
    let mut gam = vec![zero(order - 1); n * n * n];
    for l in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut s = zero(order - 1);
                for q in 0..n {
                    let t = dg[j][gidx(i, q)].clone() + dg[i][gidx(j, q)].clone() - dg[q][gidx(i, j)].clone();
                    s = s + ginv[gidx(l, q)].clone() * t;
                }
                s = s * 0.5;
                gam[(l * n + i) * n + j] = s.clone();
                gam[(l * n + j) * n + i] = s;
            }
        }
    }
    let gi = |l: usize, i: usize, j: usize| (l * n + i) * n + j;
    // R^m_ijk = ∂_i Γ^m_jk − ∂_j Γ^m_ik + Γ^m_iq Γ^q_jk − Γ^m_jq Γ^q_ik
    let ro = order - 2;
    let gam_lo: Vec<Taylor> = gam.iter().map(|t| t.truncate(ro)).collect();
    let mut rup = vec![zero(ro); n * n * n * n];
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for k in 0..n {
                    let mut s = gam[gi(m, j, k)].derivative(i) - gam[gi(m, i, k)].derivative(j);
                    for q in 0..n {
                        s = s + gam_lo[gi(m, i, q)].clone() * gam_lo[gi(q, j, k)].clone()
                            - gam_lo[gi(m, j, q)].clone() * gam_lo[gi(q, i, k)].clone();
                    }
                    rup[((m * n + i) * n + j) * n + k] = s;
                }
            }
        }
    }
    // R_ijkl = R^m_ijk g_ml
    let g_lo: Vec<Taylor> = g.iter().map(|t| t.truncate(ro)).collect();
    let r4 = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    let mut rlow = vec![zero(ro); n.pow(4)];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut s = zero(ro);
                    for m in 0..n {
                        s = s + rup[((m * n + i) * n + j) * n + k].clone() * g_lo[gidx(m, l)].clone();
                    }
                    rlow[r4(i, j, k, l)] = s;
                }
            }
        }
    }
    let gval = DMatrix::from_fn(n, n, |i, j| g[gidx(i, j)].value());
    let r_val: Vec<f64> = rlow.iter().map(Scalar::value).collect();
    if depth == Depth::Riemann {
        return Ok((gval, r_val, None, None));
    }

    // (∇_a R)_ijkl as series of order `order - 3`
    let d1o = order - 3;
    let gam1: Vec<Taylor> = gam.iter().map(|t| t.truncate(d1o)).collect();
    let rl1: Vec<Taylor> = rlow.iter().map(|t| t.truncate(d1o)).collect();
    let mut dr = vec![zero(d1o); n.pow(5)];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    for a in 0..n {
                        let mut s = rlow[r4(i, j, k, l)].derivative(a);
                        for m in 0..n {
                            s = s - gam1[gi(m, a, i)].clone() * rl1[r4(m, j, k, l)].clone()
                                - gam1[gi(m, a, j)].clone() * rl1[r4(i, m, k, l)].clone()
                                - gam1[gi(m, a, k)].clone() * rl1[r4(i, j, m, l)].clone()
                                - gam1[gi(m, a, l)].clone() * rl1[r4(i, j, k, m)].clone();
                        }
                        dr[r4(i, j, k, l) * n + a] = s;
                    }
                }
            }
        }
    }
    let dr_val: Vec<f64> = dr.iter().map(Scalar::value).collect();
    if depth == Depth::First {
        return Ok((gval, r_val, Some(dr_val), None));
    }

    // (∇_b ∇R)_{ijkl;a}, values only
    let gam0: Vec<f64> = gam.iter().map(Scalar::value).collect();
    let mut d2 = vec![0.0; n.pow(6)];
    let i5 = |i: usize, j: usize, k: usize, l: usize, a: usize| r4(i, j, k, l) * n + a;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    for a in 0..n {
                        for b in 0..n {
                            let mut s = dr[i5(i, j, k, l, a)].derivative(b).value();
                            for m in 0..n {
                                s -= gam0[gi(m, b, i)] * dr_val[i5(m, j, k, l, a)]
                                    + gam0[gi(m, b, j)] * dr_val[i5(i, m, k, l, a)]
                                    + gam0[gi(m, b, k)] * dr_val[i5(i, j, m, l, a)]
                                    + gam0[gi(m, b, l)] * dr_val[i5(i, j, k, m, a)]
                                    + gam0[gi(m, b, a)] * dr_val[i5(i, j, k, l, m)];
                            }
                            d2[i5(i, j, k, l, a) * n + b] = s;
                        }
                    }
                }
            }
        }
    }
    Ok((gval, r_val, Some(dr_val), Some(d2)))
}

fn frame_matrix(frame: &[DVector<f64>]) -> DMatrix<f64> {
    DMatrix::from_columns(frame)
}

/// Curvature data at `p` in the g-orthonormal `frame`, to the requested depth.
pub fn curvature_at(chart: &MetricChart, p: &DVector<f64>, frame: &[DVector<f64>], depth: Depth) -> Result<CurvatureData> {
    let n = chart.dim();
    if frame.len() != n || frame.iter().any(|e| e.len() != n) {
        return Err(GeomError::Dimension(format!("frame must contain {n} vectors of length {n}")));
    }
    chart.check_inside(p.as_slice())?;
    let dev = frame_deviation(chart, p.as_slice(), frame);
    if !(dev <= FRAME_TOL) {
        return Err(GeomError::Frame { deviation: dev });
    }
    let (_, r, dr, d2r) = coordinate_curvature(chart, p.as_slice(), depth)?;
    let e = frame_matrix(frame);
    let out = CurvatureData {
        dim: n,
        p: p.clone(),
        frame: frame.to_vec(),
        r: transform(&r, n, 4, &e),
        dr: dr.map(|t| transform(&t, n, 5, &e)),
        d2r: d2r.map(|t| transform(&t, n, 6, &e)),
        convention_sign: CONVENTION_SIGN,
    };
    if out.r.iter().any(|v| !v.is_finite()) {
        return Err(GeomError::Conditioning("non-finite curvature components".into()));
    }
    Ok(out)
}

/// `R`, `∇R` and `∇∇R` at `p` in `frame`.
pub fn riemann_at(chart: &MetricChart, p: &DVector<f64>, frame: &[DVector<f64>]) -> Result<CurvatureData> {
    curvature_at(chart, p, frame, Depth::Second)
}

/// Recomputes the sign calibration: `-Σ R_ijij` must be positive on the unit sphere.
pub fn calibrate_convention_sign() -> f64 {
    let ch = MetricChart::space_form(1.0, 3);
    let p = DVector::zeros(3);
    let frame = crate::metric::coordinate_basis(3);
    let cd = curvature_at(&ch, &p, &frame, Depth::Riemann).expect("unit sphere curvature");
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s -= cd.r(i, j, i, j);
        }
    }
    s.signum()
}

/// Frame components of `R` at points `exp_p(t u)` in the parallel-transported frame.
fn riemann_along(chart: &MetricChart, p: &DVector<f64>, frame: &[DVector<f64>], u: &DVector<f64>, t: f64) -> Result<Vec<f64>> {
    if t == 0.0 {
        return Ok(curvature_at(chart, p, frame, Depth::Riemann)?.r);
    }
    let sol = chart.parallel_transport(p, u, frame, t)?;
    let n = chart.dim();
    let (_, r, _, _) = coordinate_curvature(chart, sol.endpoint.as_slice(), Depth::Riemann)?;
    Ok(transform(&r, n, 4, &frame_matrix(&sol.transported_frame)))
}

/// Covariant derivatives from differences of frame components of `R` along
/// geodesics: returns `(∇R, symmetrised ∇∇R)` with the same index layout as
/// [`CurvatureData`]. Five-point stencils with step `h`.
pub fn covariant_derivatives_along_geodesics(
    chart: &MetricChart,
    p: &DVector<f64>,
    frame: &[DVector<f64>],
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = chart.dim();
    let n4 = n.pow(4);
    let first = |s: &[Vec<f64>]| -> Vec<f64> {
        (0..n4).map(|c| (s[0][c] - 8.0 * s[1][c] + 8.0 * s[3][c] - s[4][c]) / (12.0 * h)).collect()
    };
    let second = |s: &[Vec<f64>]| -> Vec<f64> {
        (0..n4)
            .map(|c| (-s[0][c] + 16.0 * s[1][c] - 30.0 * s[2][c] + 16.0 * s[3][c] - s[4][c]) / (12.0 * h * h))
            .collect()
    };
    let samples = |u: &DVector<f64>| -> Result<Vec<Vec<f64>>> {
        [-2.0, -1.0, 0.0, 1.0, 2.0].iter().map(|s| riemann_along(chart, p, frame, u, s * h)).collect()
    };
    let mut dr = vec![0.0; n4 * n];
    let mut diag = Vec::with_capacity(n);
    for a in 0..n {
        let s = samples(&frame[a])?;
        let d1 = first(&s);
        for c in 0..n4 {
            dr[c * n + a] = d1[c];
        }
        diag.push(second(&s));
    }
    let mut d2 = vec![0.0; n4 * n * n];
    for a in 0..n {
        for c in 0..n4 {
            d2[(c * n + a) * n + a] = diag[a][c];
        }
        for b in a + 1..n {
            let u = (&frame[a] + &frame[b]) / std::f64::consts::SQRT_2;
            let s = second(&samples(&u)?);
            for c in 0..n4 {
                // ∇²_{uu} = ½(∇²_aa + ∇²_bb) + sym_ab
                let sym = s[c] - 0.5 * (diag[a][c] + diag[b][c]);
                d2[(c * n + a) * n + b] = sym;
                d2[(c * n + b) * n + a] = sym;
            }
        }
    }
    Ok((dr, d2))
}

/// Where to truncate the normal-coordinate expansion of the metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ExpansionTruncation {
    /// `δ + (1/3) R` only.
    Quadratic,
    /// All terms through `|x|⁴`.
    Quartic,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionRow {
    pub direction_id: usize,
    pub radius: f64,
    pub residual: f64,
    pub fitted_slope: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionReport {
    pub truncation: ExpansionTruncation,
    pub rows: Vec<ExpansionRow>,
    /// Fitted slope per direction (`None` when every residual is at the noise floor).
    pub slopes: Vec<Option<f64>>,
}

impl ExpansionReport {
    pub fn min_slope(&self) -> Option<f64> {
        self.slopes.iter().flatten().copied().reduce(f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("direction_id,radius,residual,fitted_slope\n");
        for r in &self.rows {
            let slope = r.fitted_slope.map(crate::report::fmt_f64).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.direction_id,
                crate::report::fmt_f64(r.radius),
                crate::report::fmt_f64(r.residual),
                slope
            ));
        }
        s
    }
}

/// Fixed unit directions (frame components) probed by the expansion check.
pub fn expansion_directions(n: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..n {
        let mut d = vec![0.0; n];
        d[i] = 1.0;
        dirs.push(d);
    }
    for i in 0..n {
        for j in i + 1..n {
            let mut d = vec![0.0; n];
            d[i] = std::f64::consts::FRAC_1_SQRT_2;
            d[j] = -std::f64::consts::FRAC_1_SQRT_2;
            dirs.push(d);
        }
    }
    let generic: Vec<f64> = (0..n).map(|i| 1.0 + 0.37 * i as f64 - 0.11 * (i * i) as f64).collect();
    let nrm = generic.iter().map(|v| v * v).sum::<f64>().sqrt();
    dirs.push(generic.iter().map(|v| v / nrm).collect());
    dirs
}

/// Pulls the metric back by `x ↦ exp_p(Σ x^i E_i)`, subtracts the expansion
/// through the requested order, and fits the residual order per direction.
pub fn normal_coordinate_expansion_check(
    chart: &MetricChart,
    p: &DVector<f64>,
    frame: &[DVector<f64>],
    radii: &[f64],
    truncation: ExpansionTruncation,
) -> Result<ExpansionReport> {
    let n = chart.dim();
    if radii.windows(2).any(|w| w[1] >= w[0]) || radii.iter().any(|r| *r <= 0.0) {
        return Err(GeomError::Config("radii must be positive and strictly decreasing".into()));
    }
    let cd = riemann_at(chart, p, frame)?;
    let space = TaylorSpace::new(n, 1);
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for (did, d) in expansion_directions(n).iter().enumerate() {
        let mut res = Vec::with_capacity(radii.len());
        for &rho in radii {
            let x: Vec<f64> = d.iter().map(|v| v * rho).collect();
            let (fv, jac) = exp_jacobian(chart, p, frame, &x, &space)?;
            let pulled = jac.transpose() * chart.metric(&fv) * &jac;
            let expect = expansion_partial_sum(&cd, &x, truncation);
            let resid = (pulled - expect).amax();
            if !chart.has_closed_form_exp() {
                let wv = (0..n).fold(DVector::zeros(n), |acc, i| acc + &frame[i] * x[i]);
                let sol = chart.parallel_transport(p, &wv, &[], 1.0)?;
                if sol.integrator_error_estimate > 0.1 * resid.max(NOISE_FLOOR) {
                    return Err(GeomError::Precision {
                        radius: rho,
                        detail: format!(
                            "integrator error {:e} exceeds a tenth of the residual {:e}",
                            sol.integrator_error_estimate, resid
                        ),
                    });
                }
            }
            res.push(resid);
        }
        let slope = fit_loglog(radii, &res, NOISE_FLOOR).map(|f: LineFit| f.slope);
        for (rho, r) in radii.iter().zip(&res) {
            rows.push(ExpansionRow { direction_id: did, radius: *rho, residual: *r, fitted_slope: slope });
        }
        slopes.push(slope);
    }
    Ok(ExpansionReport { truncation, rows, slopes })
}

/// `exp_p(Σ x^i E_i)` and its Jacobian in `x`: forward-mode series for
/// analytic charts, fourth-order central differences otherwise.
fn exp_jacobian(
    chart: &MetricChart,
    p: &DVector<f64>,
    frame: &[DVector<f64>],
    x: &[f64],
    space: &std::sync::Arc<TaylorSpace>,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = chart.dim();
    let tangent = |x: &[f64]| (0..n).fold(DVector::zeros(n), |acc, i| acc + &frame[i] * x[i]);
    if chart.is_analytic() {
        let xs: Vec<Taylor> = (0..n).map(|q| Taylor::variable(space, q, x[q])).collect();
        let w: Vec<Taylor> = (0..n)
            .map(|c| (0..n).fold(Taylor::constant(space, 0.0), |acc, i| acc + xs[i].clone() * frame[i][c]))
            .collect();
        let f = chart.exp_generic(p.as_slice(), &w)?;
        let fv = f.iter().map(Scalar::value).collect();
        return Ok((fv, DMatrix::from_fn(n, n, |c, i| f[c].coefficient(&unit(n, i)))));
    }
    let h = 1e-3;
    let fv = chart.exp_map(p, &tangent(x))?.as_slice().to_vec();
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        let at = |s: f64| -> Result<DVector<f64>> {
            let mut y = x.to_vec();
            y[i] += s * h;
            chart.exp_map(p, &tangent(&y))
        };
        let col = (at(-2.0)? - at(-1.0)? * 8.0 + at(1.0)? * 8.0 - at(2.0)?) / (12.0 * h);
        jac.set_column(i, &col);
    }
    Ok((fv, jac))
}

fn unit(n: usize, i: usize) -> Vec<u8> {
    let mut e = vec![0u8; n];
    e[i] = 1;
    e
}

/// `δ_ij + (1/3)R(x,E_i,x,E_j) + (1/6)∇_xR(..) + (1/20)∇²_{xx}R(..) + (2/45)Σ_l R(x,E_i,x,E_l)R(x,E_j,x,E_l)`.
pub fn expansion_partial_sum(cd: &CurvatureData, x: &[f64], truncation: ExpansionTruncation) -> DMatrix<f64> {
    let n = cd.dim;
    let rx = DMatrix::from_fn(n, n, |i, j| {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += x[a] * x[b] * cd.r(a, i, b, j);
            }
        }
        s
    });
    let mut out = DMatrix::identity(n, n) + &rx / 3.0;
    if truncation == ExpansionTruncation::Quadratic {
        return out;
    }
    for i in 0..n {
        for j in 0..n {
            let (mut d1, mut d2) = (0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        let xabc = x[a] * x[b] * x[c];
                        d1 += xabc * cd.dr(b, i, c, j, a);
                        for e in 0..n {
                            d2 += xabc * x[e] * cd.d2r(b, i, c, j, a, e);
                        }
                    }
                }
            }
            let mut q = 0.0;
            for l in 0..n {
                q += rx[(i, l)] * rx[(j, l)];
            }
            out[(i, j)] += d1 / 6.0 + d2 / 20.0 + 2.0 * q / 45.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{coordinate_basis, orthonormalize};

    #[test]
    fn convention_is_calibrated() {
        assert_eq!(calibrate_convention_sign(), CONVENTION_SIGN);
    }

    #[test]
    fn space_form_tensor() {
        for c in [1.0, -0.5] {
            let ch = MetricChart::space_form(c, 3);
            let p = DVector::from_column_slice(&[0.2, -0.1, 0.3]);
            let frame = orthonormalize(&ch, p.as_slice(), &coordinate_basis(3)).unwrap();
            let cd = riemann_at(&ch, &p, &frame).unwrap();
            let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        for l in 0..3 {
                            let expect = c * (d(j, k) * d(i, l) - d(i, k) * d(j, l));
                            assert!((cd.r(i, j, k, l) - expect).abs() < 1e-12);
                            for a in 0..3 {
                                assert!(cd.dr(i, j, k, l, a).abs() < 1e-11);
                                for b in 0..3 {
                                    assert!(cd.d2r(i, j, k, l, a, b).abs() < 1e-10);
                                }
                            }
                        }
                    }
                }
            }
            assert!((cd.scalar_curvature() - 6.0 * c).abs() < 1e-11);
        }
    }

    #[test]
    fn geodesic_route_matches_taylor_route() {
        let ch = MetricChart::conformal(3, vec![(vec![2, 0, 0], -0.3), (vec![1, 1, 1], 0.4), (vec![0, 3, 0], 0.2)]).unwrap();
        let p = DVector::from_column_slice(&[0.1, 0.05, -0.1]);
        let frame = orthonormalize(&ch, p.as_slice(), &coordinate_basis(3)).unwrap();
        let cd = riemann_at(&ch, &p, &frame).unwrap();
        let (dr, d2) = covariant_derivatives_along_geodesics(&ch, &p, &frame, 2e-3).unwrap();
        let n = 3usize;
        for (c, v) in dr.iter().enumerate() {
            assert!((v - cd.dr.as_ref().unwrap()[c]).abs() < 1e-7, "dR {c}");
        }
        let exact = cd.d2r.as_ref().unwrap();
        for c in 0..n.pow(4) {
            for a in 0..n {
                for b in 0..n {
                    let sym = 0.5 * (exact[(c * n + a) * n + b] + exact[(c * n + b) * n + a]);
                    assert!((d2[(c * n + a) * n + b] - sym).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn expansion_residual_orders() {
        let ch = MetricChart::conformal(3, vec![(vec![2, 0, 0], -0.3), (vec![1, 1, 0], 0.4), (vec![0, 1, 2], 0.2)]).unwrap();
        let p = DVector::from_column_slice(&[0.05, -0.05, 0.1]);
        let frame = orthonormalize(&ch, p.as_slice(), &coordinate_basis(3)).unwrap();
        let radii = [0.16, 0.08, 0.04, 0.02];
        let q = normal_coordinate_expansion_check(&ch, &p, &frame, &radii, ExpansionTruncation::Quadratic).unwrap();
        let f = normal_coordinate_expansion_check(&ch, &p, &frame, &radii, ExpansionTruncation::Quartic).unwrap();
        let qs = q.min_slope().unwrap();
        let fs = f.min_slope().unwrap();
        assert!(qs > 2.7 && qs < 3.3, "quadratic slope {qs}");
        assert!(fs > 4.6, "quartic slope {fs}");
    }
}
