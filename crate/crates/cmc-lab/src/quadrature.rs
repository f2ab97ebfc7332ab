//! Product quadrature rules on the unit sphere `S^k ⊂ ℝ^{k+1}` and the unit
//! ball `B^{k+1}`.
//!
//! `S^1` uses the trapezoid rule. `S^2` uses Gauss–Legendre in `cos θ` times
//! the trapezoid rule in azimuth. Higher spheres peel off one polar angle at a
//! time, `Θ = (cos θ, sin θ Θ')`, with Gauss–Legendre in `θ` against the
//! weight `sin^{k-1} θ`. Every sphere rule carries an embedded coarse rule
//! (every other azimuth node) for refinement estimates.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{GeomError, Result};

pub const TRAPEZOID_NODES_S1: usize = 256;
pub const AZIMUTH_NODES: usize = 64;
pub const GL_ORDER: usize = 32;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    (x.iter().map(|t| a + h * (t + 1.0)).collect(), w.iter().map(|v| v * h).collect())
}

/// `Vol(S^k)`.
pub fn sphere_volume(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_volume(k - 2),
    }
}

/// A node of a sphere rule: position, weight, and an orthonormal basis of the
/// tangent space `Θ^⊥`.
#[derive(Clone, Debug)]
pub struct SphereNode {
    pub theta: DVector<f64>,
    pub weight: f64,
    /// Weight in the embedded coarse rule (zero for nodes it skips).
    pub coarse_weight: f64,
    pub tangent: Vec<DVector<f64>>,
}

#[derive(Clone, Debug)]
pub struct SphereRule {
    pub k: usize,
    pub nodes: Vec<SphereNode>,
}

/// Orders used to build sphere rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RuleOrders {
    pub s1_nodes: usize,
    pub azimuth: usize,
    pub gl: usize,
}

impl Default for RuleOrders {
    fn default() -> Self {
        RuleOrders { s1_nodes: TRAPEZOID_NODES_S1, azimuth: AZIMUTH_NODES, gl: GL_ORDER }
    }
}

/// Raw rule: (point, weight, coarse weight).
type Raw = Vec<(Vec<f64>, f64, f64)>;

fn circle(n: usize) -> Raw {
    (0..n)
        .map(|j| {
            let t = 2.0 * PI * j as f64 / n as f64;
            let w = 2.0 * PI / n as f64;
            (vec![t.cos(), t.sin()], w, if j % 2 == 0 { 2.0 * w } else { 0.0 })
        })
        .collect()
}

fn raw_sphere(k: usize, o: RuleOrders) -> Raw {
    match k {
        1 => circle(o.s1_nodes),
        2 => {
            let (t, w) = gauss_legendre(o.gl);
            let base = circle(o.azimuth);
            let mut out = Vec::with_capacity(t.len() * base.len());
            for (ti, wi) in t.iter().zip(&w) {
                let s = (1.0 - ti * ti).sqrt();
                for (b, bw, bc) in &base {
                    out.push((vec![*ti, s * b[0], s * b[1]], wi * bw, wi * bc));
                }
            }
            out
        }
        _ => {
            let (th, w) = gauss_legendre_on(o.gl, 0.0, PI);
            let base = raw_sphere(k - 1, o);
            let mut out = Vec::with_capacity(th.len() * base.len());
            for (ti, wi) in th.iter().zip(&w) {
                let (s, c) = ti.sin_cos();
                let wt = wi * s.powi(k as i32 - 1);
                for (b, bw, bc) in &base {
                    let mut pt = Vec::with_capacity(k + 1);
                    pt.push(c);
                    pt.extend(b.iter().map(|v| s * v));
                    out.push((pt, wt * bw, wt * bc));
                }
            }
            out
        }
    }
}

/// Orthonormal basis of `Θ^⊥` from the Householder reflection taking the last
/// coordinate axis to `Θ`.
pub fn tangent_basis(theta: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = theta.len();
    let mut e = DVector::zeros(n);
    e[n - 1] = 1.0;
    // Reflect about the bisector of e and ±Θ, choosing the sign that avoids cancellation.
    let sgn = if theta[n - 1] >= 0.0 { 1.0 } else { -1.0 };
    let v = theta * sgn - &e;
    let vv = v.dot(&v);
    (0..n - 1)
        .map(|i| {
            let mut col = DVector::zeros(n);
            col[i] = 1.0;
            if vv > 0.0 {
                let f = 2.0 * v[i] / vv;
                col -= &v * f;
            }
            col
        })
        .collect()
}

impl SphereRule {
    pub fn new(k: usize) -> Result<Self> {
        Self::with_orders(k, RuleOrders::default())
    }

    pub fn with_orders(k: usize, orders: RuleOrders) -> Result<Self> {
        if k == 0 {
            return Err(GeomError::Dimension("sphere rules need k >= 1".into()));
        }
        if orders.s1_nodes % 2 != 0 || orders.azimuth % 2 != 0 || orders.gl < 2 {
            return Err(GeomError::Config("azimuthal node counts must be even".into()));
        }
        let nodes = raw_sphere(k, orders)
            .into_iter()
            .map(|(p, w, c)| {
                let theta = DVector::from_vec(p);
                let tangent = tangent_basis(&theta);
                SphereNode { theta, weight: w, coarse_weight: c, tangent }
            })
            .collect();
        Ok(SphereRule { k, nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(fine, coarse)` integrals of `f(Θ)`.
    pub fn integrate_pair<F: FnMut(&DVector<f64>) -> f64>(&self, mut f: F) -> (f64, f64) {
        let mut fine = 0.0;
        let mut coarse = 0.0;
        for nd in &self.nodes {
            let v = f(&nd.theta);
            fine += nd.weight * v;
            coarse += nd.coarse_weight * v;
        }
        (fine, coarse)
    }

    pub fn integrate<F: FnMut(&DVector<f64>) -> f64>(&self, f: F) -> f64 {
        self.integrate_pair(f).0
    }

    /// The same rule rotated by the orthogonal matrix `q` (nodes and tangent bases).
    pub fn rotated(&self, q: &nalgebra::DMatrix<f64>) -> SphereRule {
        SphereRule {
            k: self.k,
            nodes: self
                .nodes
                .iter()
                .map(|nd| SphereNode {
                    theta: q * &nd.theta,
                    weight: nd.weight,
                    coarse_weight: nd.coarse_weight,
                    tangent: nd.tangent.iter().map(|t| q * t).collect(),
                })
                .collect(),
        }
    }
}

/// Ball rule: radial Gauss–Legendre on `[0, 1]` times a sphere rule. The
/// radial weights do not include the `r^k` Jacobian.
#[derive(Clone, Debug)]
pub struct BallRule {
    pub radii: Vec<f64>,
    pub radial_weights: Vec<f64>,
    pub sphere: SphereRule,
}

impl BallRule {
    pub fn new(k: usize) -> Result<Self> {
        Self::with_orders(k, RuleOrders::default(), GL_ORDER)
    }

    pub fn with_orders(k: usize, orders: RuleOrders, radial: usize) -> Result<Self> {
        let (radii, radial_weights) = gauss_legendre_on(radial, 0.0, 1.0);
        Ok(BallRule { radii, radial_weights, sphere: SphereRule::with_orders(k, orders)? })
    }

    /// `(fine, coarse)` integrals of `f(y)` over `B^{k+1}` with `dy = r^k dr dσ`.
    pub fn integrate_pair<F: FnMut(&DVector<f64>) -> f64>(&self, mut f: F) -> (f64, f64) {
        let k = self.sphere.k as i32;
        let mut fine = 0.0;
        let mut coarse = 0.0;
        for (r, wr) in self.radii.iter().zip(&self.radial_weights) {
            let jac = wr * r.powi(k);
            for nd in &self.sphere.nodes {
                let v = f(&(&nd.theta * *r));
                fine += jac * nd.weight * v;
                coarse += jac * nd.coarse_weight * v;
            }
        }
        (fine, coarse)
    }

    pub fn integrate<F: FnMut(&DVector<f64>) -> f64>(&self, f: F) -> f64 {
        self.integrate_pair(f).0
    }
}

/// Returns the fine value after checking it against the embedded coarse rule.
pub fn checked(pair: (f64, f64), scale: f64, rel_tol: f64) -> Result<f64> {
    let d = (pair.0 - pair.1).abs();
    if d > rel_tol * scale.abs().max(pair.0.abs()).max(f64::MIN_POSITIVE) {
        return Err(GeomError::Quadrature { disagreement: d });
    }
    Ok(pair.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exactness() {
        let (x, w) = gauss_legendre(GL_ORDER);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for d in [2, 10, 40, 62] {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d)).sum();
            assert!((q - 2.0 / (d as f64 + 1.0)).abs() < 1e-14, "degree {d}");
        }
        let (x5, _) = gauss_legendre(5);
        assert!(x5[2].abs() < 1e-16);
    }

    #[test]
    fn sphere_areas() {
        for k in 1..=4 {
            let r = SphereRule::with_orders(k, RuleOrders { s1_nodes: 32, azimuth: 16, gl: 12 }).unwrap();
            let (a, c) = r.integrate_pair(|_| 1.0);
            assert!((a - sphere_volume(k)).abs() < 1e-12 * sphere_volume(k), "k={k}");
            assert!((c - a).abs() < 1e-12);
        }
        assert!((sphere_volume(2) - 4.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn tangent_bases_are_orthonormal() {
        let r = SphereRule::with_orders(3, RuleOrders { s1_nodes: 8, azimuth: 8, gl: 4 }).unwrap();
        for nd in &r.nodes {
            let mut all = nd.tangent.clone();
            all.push(nd.theta.clone());
            for (i, a) in all.iter().enumerate() {
                for (j, b) in all.iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((a.dot(b) - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn ball_volume() {
        let b = BallRule::with_orders(2, RuleOrders { s1_nodes: 16, azimuth: 16, gl: 8 }, 8).unwrap();
        let v = b.integrate(|_| 1.0);
        assert!((v - 4.0 * PI / 3.0).abs() < 1e-13);
    }
}
