//! Exact polynomial algebra for the flat model: Laplacian, harmonic
//! decomposition, Dirichlet-to-Neumann map and Jacobi spectra on the unit
//! sphere `S^k` in `R^{k+1}`. Everything here is rational arithmetic.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use crate::error::{GeomError, Result};

pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn q_frac(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Exact rational value of a double (every finite f64 is a dyadic rational).
pub fn q_from_f64(x: f64) -> Result<Q> {
    Q::from_float(x).ok_or_else(|| GeomError::Conditioning(format!("non-finite value {x}")))
}

/// Polynomial in `nvars` variables with rational coefficients. Zero
/// coefficients are never stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, Q>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: Q) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        Poly::monomial(nvars, &unit_exp(nvars, i), q(1))
    }

    pub fn monomial(nvars: usize, exps: &[u32], c: Q) -> Self {
        assert_eq!(exps.len(), nvars, "exponent length mismatch");
        let mut p = Poly::zero(nvars);
        p.add_term(exps.to_vec(), c);
        p
    }

    /// `|y|^2`.
    pub fn radius_squared(nvars: usize) -> Self {
        let mut p = Poly::zero(nvars);
        for i in 0..nvars {
            let mut e = vec![0; nvars];
            e[i] = 2;
            p.add_term(e, q(1));
        }
        p
    }

    /// Linear form `Σ c_i y_i`.
    pub fn linear(coeffs: &[Q]) -> Self {
        let n = coeffs.len();
        let mut p = Poly::zero(n);
        for (i, c) in coeffs.iter().enumerate() {
            p.add_term(unit_exp(n, i), c.clone());
        }
        p
    }

    /// Quadratic form `Σ a_ij y_i y_j` for a square matrix `a` (row-major).
    pub fn quadratic_form(a: &[Vec<Q>]) -> Self {
        let n = a.len();
        let mut p = Poly::zero(n);
        for i in 0..n {
            for j in 0..n {
                let mut e = vec![0; n];
                e[i] += 1;
                e[j] += 1;
                p.add_term(e, a[i][j].clone());
            }
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Q)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, exps: &[u32]) -> Q {
        self.terms.get(exps).cloned().unwrap_or_else(Q::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    pub fn is_homogeneous(&self) -> bool {
        let mut degs = self.terms.keys().map(|e| e.iter().sum::<u32>());
        match degs.next() {
            None => true,
            Some(d) => degs.all(|x| x == d),
        }
    }

    fn add_term(&mut self, exps: Vec<u32>, c: Q) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(exps);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get() + c;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(&q(-1)))
    }

    pub fn scale(&self, s: &Q) -> Poly {
        let mut out = Poly::zero(self.nvars);
        if s.is_zero() {
            return out;
        }
        for (e, c) in &self.terms {
            out.terms.insert(e.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Poly::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1 * c2);
            }
        }
        out
    }

    pub fn derivative(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= 1;
            out.add_term(e2, c * q(e[i] as i64));
        }
        out
    }

    /// Homogeneous component of total degree `d`.
    pub fn homogeneous_part(&self, d: u32) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e.iter().sum::<u32>() == d {
                out.terms.insert(e.clone(), c.clone());
            }
        }
        out
    }

    /// Euler operator `Σ y_i ∂_i` (radial derivative at `|y| = 1`).
    pub fn euler(&self) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            let d: u32 = e.iter().sum();
            out.add_term(e.clone(), c * q(d as i64));
        }
        out
    }

    pub fn evaluate(&self, y: &[Q]) -> Q {
        let mut s = Q::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (yi, &ei) in y.iter().zip(e) {
                for _ in 0..ei {
                    t *= yi;
                }
            }
            s += t;
        }
        s
    }

    /// Canonical representative modulo `|y|^2 − 1`: every occurrence of
    /// `y_n^2` (last variable) is replaced by `1 − Σ_{i<n} y_i^2`. Two
    /// polynomials agree on the unit sphere iff their reductions are equal.
    pub fn reduce_on_sphere(&self) -> Poly {
        let n = self.nvars;
        let last = n - 1;
        let mut out = Poly::zero(n);
        let mut work = self.clone();
        while let Some((e, c)) = work.pop_highest_in(last) {
            if e[last] < 2 {
                out.add_term(e, c);
                continue;
            }
            let mut base = e.clone();
            base[last] -= 2;
            work.add_term(base.clone(), c.clone());
            for i in 0..last {
                let mut e2 = base.clone();
                e2[i] += 2;
                work.add_term(e2, -c.clone());
            }
        }
        out
    }

    fn pop_highest_in(&mut self, var: usize) -> Option<(Vec<u32>, Q)> {
        let key = self.terms.keys().max_by_key(|e| (e[var], (*e).clone()))?.clone();
        let c = self.terms.remove(&key)?;
        Some((key, c))
    }

    /// Exact quotient by `|y|^2`; `None` if the division leaves a remainder.
    pub fn div_radius_squared(&self) -> Option<Poly> {
        let n = self.nvars;
        let last = n - 1;
        let mut quotient = Poly::zero(n);
        let mut rem = self.clone();
        while let Some((e, c)) = rem.pop_highest_in(last) {
            if e[last] < 2 {
                return None;
            }
            let mut qe = e.clone();
            qe[last] -= 2;
            quotient.add_term(qe.clone(), c.clone());
            for i in 0..last {
                let mut e2 = qe.clone();
                e2[i] += 2;
                rem.add_term(e2, -c.clone());
            }
        }
        Some(quotient)
    }

    pub fn equal_on_sphere(&self, other: &Poly) -> bool {
        self.sub(other).reduce_on_sphere().is_zero()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let terms: Vec<serde_json::Value> = self
            .terms
            .iter()
            .map(|(e, c)| {
                serde_json::json!({
                    "exponents": e,
                    "coefficient": RationalJson::from(c),
                })
            })
            .collect();
        serde_json::json!({ "variables": self.nvars, "terms": terms })
    }
}

fn unit_exp(n: usize, i: usize) -> Vec<u32> {
    let mut e = vec![0; n];
    e[i] = 1;
    e
}

/// Rational as a numerator/denominator pair of decimal integer strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RationalJson {
    pub num: String,
    pub den: String,
}

impl From<&Q> for RationalJson {
    fn from(x: &Q) -> Self {
        RationalJson { num: x.numer().to_string(), den: x.denom().to_string() }
    }
}

/// Flat Laplacian `Σ ∂_i²`.
pub fn laplacian(p: &Poly) -> Poly {
    let mut out = Poly::zero(p.nvars);
    for (e, c) in &p.terms {
        for i in 0..p.nvars {
            if e[i] < 2 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= 2;
            out.add_term(e2, c * q((e[i] * (e[i] - 1)) as i64));
        }
    }
    out
}

/// Harmonic projection of a homogeneous polynomial of degree `d`:
/// `h = Σ_j a_j |y|^{2j} Δ^j p` with `a_0 = 1` and
/// `a_{j+1} = −a_j / [2(j+1)(2d + n − 2j − 4)]`.
fn harmonic_projection(p: &Poly, d: u32) -> Poly {
    let n = p.nvars as i64;
    let r2 = Poly::radius_squared(p.nvars);
    let mut out = p.clone();
    let mut a = q(1);
    let mut lap = p.clone();
    let mut rpow = Poly::constant(p.nvars, q(1));
    let mut j: i64 = 0;
    loop {
        lap = laplacian(&lap);
        if lap.is_zero() {
            break;
        }
        let denom = 2 * (j + 1) * (2 * d as i64 + n - 2 * j - 4);
        a = -a / q(denom);
        rpow = rpow.mul(&r2);
        out = out.add(&rpow.mul(&lap).scale(&a));
        j += 1;
    }
    out
}

/// One summand `|y|^{2·power} · harmonic` of a harmonic decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicComponent {
    pub harmonic: Poly,
    pub power: u32,
    /// Degree ℓ of the homogeneous harmonic.
    pub degree: u32,
}

/// Decomposes `p = Σ |y|^{2j} h_j` with homogeneous harmonic `h_j`. Each
/// homogeneous part of `p` is handled separately, so components of
/// different total degree are kept apart.
pub fn harmonic_decompose(p: &Poly) -> Vec<HarmonicComponent> {
    let mut out = Vec::new();
    let Some(top) = p.degree() else {
        return out;
    };
    for d in 0..=top {
        let mut part = p.homogeneous_part(d);
        let mut power = 0;
        let mut deg = d;
        while !part.is_zero() {
            let h = harmonic_projection(&part, deg);
            let rest = part.sub(&h);
            if !h.is_zero() {
                out.push(HarmonicComponent { harmonic: h, power, degree: deg });
            }
            part = rest
                .div_radius_squared()
                .expect("non-harmonic remainder is divisible by |y|^2");
            power += 1;
            deg = deg.saturating_sub(2);
        }
    }
    out
}

pub fn reconstruct(components: &[HarmonicComponent], nvars: usize) -> Poly {
    let r2 = Poly::radius_squared(nvars);
    let mut out = Poly::zero(nvars);
    for c in components {
        let mut t = c.harmonic.clone();
        for _ in 0..c.power {
            t = t.mul(&r2);
        }
        out = out.add(&t);
    }
    out
}

/// Harmonic extension into the unit ball of the boundary values of `p`.
pub fn harmonic_extension(p: &Poly) -> Poly {
    let mut out = Poly::zero(p.nvars);
    for c in harmonic_decompose(p) {
        out = out.add(&c.harmonic);
    }
    out
}

/// Dirichlet-to-Neumann map on `S^k` with the inward normal: minus the
/// radial derivative of the harmonic extension.
pub fn dtn(p: &Poly) -> Poly {
    harmonic_extension(p).euler().scale(&q(-1))
}

/// Laplace–Beltrami operator of `S^k` applied to the restriction of `p`,
/// using `Δ_S P = |y|²ΔP − ℓ(ℓ+k−1)P` on each homogeneous part of degree ℓ.
pub fn sphere_laplacian(p: &Poly) -> Poly {
    let k = p.nvars as i64 - 1;
    let r2 = Poly::radius_squared(p.nvars);
    let mut out = Poly::zero(p.nvars);
    let Some(top) = p.degree() else {
        return out;
    };
    for l in 0..=top {
        let part = p.homogeneous_part(l);
        if part.is_zero() {
            continue;
        }
        let l = l as i64;
        out = out.add(&r2.mul(&laplacian(&part)));
        out = out.add(&part.scale(&q(-l * (l + k - 1))));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOperator {
    JParallel,
    JPerp,
    Dtn,
    Combined,
}

impl ModelOperator {
    pub const ALL: [ModelOperator; 4] =
        [ModelOperator::JParallel, ModelOperator::JPerp, ModelOperator::Dtn, ModelOperator::Combined];

    pub fn apply(self, p: &Poly) -> Poly {
        let k = q(p.nvars as i64 - 1);
        match self {
            ModelOperator::JParallel => sphere_laplacian(p).add(&p.scale(&k)),
            ModelOperator::JPerp => sphere_laplacian(p),
            ModelOperator::Dtn => dtn(p),
            ModelOperator::Combined => sphere_laplacian(p).sub(&dtn(p).scale(&k)),
        }
    }

    /// Closed-form eigenvalue on degree-ℓ spherical harmonics.
    pub fn closed_form(self, k: u32, l: u32) -> Q {
        let (k, l) = (k as i64, l as i64);
        match self {
            ModelOperator::JParallel => q(k - l * (l + k - 1)),
            ModelOperator::JPerp => q(-l * (l + k - 1)),
            ModelOperator::Dtn => q(-l),
            ModelOperator::Combined => q(-l * (l - 1)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumRow {
    pub degree: u32,
    pub eigenvalue: Q,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumTable {
    pub operator: ModelOperator,
    pub k: u32,
    pub rows: Vec<SpectrumRow>,
}

impl SpectrumTable {
    pub fn kernel_dimension(&self) -> usize {
        self.rows.iter().filter(|r| r.eigenvalue.is_zero()).map(|r| r.multiplicity).sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "degree": r.degree,
                    "eigenvalue": RationalJson::from(&r.eigenvalue),
                    "multiplicity": r.multiplicity,
                })
            })
            .collect();
        serde_json::json!({
            "operator": self.operator,
            "k": self.k,
            "kernel_dimension": self.kernel_dimension(),
            "rows": rows,
        })
    }
}

/// All exponent vectors of total degree `d` in `n` variables.
pub fn monomials(n: usize, d: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, d: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n - 1 {
            prefix.push(d);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=d).rev() {
            prefix.push(e);
            rec(n, d - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, d, &mut Vec::new(), &mut out);
    out
}

/// Exact rank of a set of polynomials viewed as coefficient vectors.
pub fn rank(polys: &[Poly]) -> usize {
    let mut keys: Vec<Vec<u32>> = polys.iter().flat_map(|p| p.terms.keys().cloned()).collect();
    keys.sort();
    keys.dedup();
    let mut rows: Vec<Vec<Q>> =
        polys.iter().map(|p| keys.iter().map(|e| p.coefficient(e)).collect()).collect();
    let mut r = 0;
    for col in 0..keys.len() {
        let Some(piv) = (r..rows.len()).find(|&i| !rows[i][col].is_zero()) else {
            continue;
        };
        rows.swap(r, piv);
        let pivot = rows[r][col].clone();
        for i in (r + 1)..rows.len() {
            if rows[i][col].is_zero() {
                continue;
            }
            let f = &rows[i][col] / &pivot;
            for c in col..keys.len() {
                let t = &rows[r][c] * &f;
                rows[i][c] -= t;
            }
        }
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    r
}

/// Harmonic projections of all degree-ℓ monomials in `k+1` variables. They
/// span the degree-ℓ spherical harmonics.
pub fn harmonic_spanning_set(k: u32, l: u32) -> Vec<Poly> {
    let n = k as usize + 1;
    monomials(n, l)
        .into_iter()
        .map(|e| harmonic_projection(&Poly::monomial(n, &e, q(1)), l))
        .filter(|h| !h.is_zero())
        .collect()
}

/// `C(k+ℓ, ℓ) − C(k+ℓ−2, ℓ−2)`.
pub fn harmonic_dimension(k: u32, l: u32) -> usize {
    let binom = |n: u64, r: u64| -> u64 {
        if r > n {
            return 0;
        }
        (1..=r).fold(1u64, |acc, i| acc * (n - r + i) / i)
    };
    let (k, l) = (k as u64, l as u64);
    let a = binom(k + l, l);
    let b = if l >= 2 { binom(k + l - 2, l - 2) } else { 0 };
    (a - b) as usize
}

/// Eigenvalue of `op` on `h`, found by applying the operator and checking
/// `op(h) = λh` on the sphere exactly.
fn eigenvalue_on(op: ModelOperator, h: &Poly) -> Result<Q> {
    let image = op.apply(h).reduce_on_sphere();
    let base = h.reduce_on_sphere();
    let (e, c) = base
        .terms
        .iter()
        .next()
        .ok_or_else(|| GeomError::Conditioning("zero harmonic".into()))?;
    let lambda = image.coefficient(e) / c;
    if image != base.scale(&lambda) {
        return Err(GeomError::Conditioning(format!(
            "{op:?} does not act diagonally on a degree-{} harmonic",
            h.degree().unwrap_or(0)
        )));
    }
    Ok(lambda)
}

/// Spectra of the four model operators on `S^k`, for ℓ ≤ `l_max`.
/// Eigenvalues come from applying each operator to a basis of harmonics and
/// multiplicities from the exact rank of that basis.
pub fn model_spectra(k: u32, l_max: u32) -> Result<Vec<SpectrumTable>> {
    if k == 0 {
        return Err(GeomError::Dimension("model spectra need k >= 1".into()));
    }
    let mut bases = Vec::new();
    for l in 0..=l_max {
        let span = harmonic_spanning_set(k, l);
        let mult = rank(&span);
        bases.push((l, span, mult));
    }
    let mut tables = Vec::new();
    for op in ModelOperator::ALL {
        let mut rows = Vec::new();
        for (l, span, mult) in &bases {
            let mut lambda: Option<Q> = None;
            for h in span {
                let v = eigenvalue_on(op, h)?;
                match &lambda {
                    None => lambda = Some(v),
                    Some(prev) if *prev != v => {
                        return Err(GeomError::Conditioning(format!(
                            "{op:?}: two eigenvalues on degree {l}"
                        )))
                    }
                    _ => {}
                }
            }
            rows.push(SpectrumRow { degree: *l, eigenvalue: lambda.unwrap_or_else(Q::zero), multiplicity: *mult });
        }
        tables.push(SpectrumTable { operator: op, k, rows });
    }
    Ok(tables)
}

/// Kernel of the combined operator for codimension `codim` inside the
/// model ball: one constant and `k+1` linear functions per normal direction.
pub fn combined_kernel_dimension(tables: &[SpectrumTable], codim: usize) -> usize {
    tables
        .iter()
        .find(|t| t.operator == ModelOperator::Combined)
        .map(|t| t.kernel_dimension() * codim)
        .unwrap_or(0)
}

/// Sign in front of the correction field `W^μ(y) = ±(ε²/3)/(k+3)·(1 − |y|²)·Ric⊥(y, E_μ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorrectionSign {
    /// Leading minus, as the closed form is usually displayed. Its Laplacian
    /// is `+(2ε²/3)Ric⊥`.
    Displayed,
    /// Leading plus, the field used by the immersion code. Its Laplacian is
    /// `−(2ε²/3)Ric⊥`, which cancels the geodesic ball's mean curvature.
    Implemented,
}

/// Correction field as exact polynomials, one per normal direction.
/// `ric_perp` is the `(k+1) × codim` matrix `Ric⊥(E_a, E_μ)`.
pub fn correction_polynomials(ric_perp: &[Vec<f64>], eps: f64, sign: CorrectionSign) -> Result<Vec<Poly>> {
    let n = ric_perp.len();
    if n == 0 {
        return Err(GeomError::Dimension("empty Ric-perp matrix".into()));
    }
    let codim = ric_perp[0].len();
    let k = n as i64 - 1;
    let e = q_from_f64(eps)?;
    let mut s = &e * &e / q(3 * (k + 3));
    if sign == CorrectionSign::Displayed {
        s = -s;
    }
    let bump = Poly::constant(n, q(1)).sub(&Poly::radius_squared(n));
    (0..codim)
        .map(|mu| {
            let coeffs = ric_perp.iter().map(|row| q_from_f64(row[mu])).collect::<Result<Vec<_>>>()?;
            Ok(bump.mul(&Poly::linear(&coeffs)).scale(&s))
        })
        .collect()
}

/// Outcome of the exact Poisson check on a correction field.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonCheck {
    /// `ΔW^μ = +(2ε²/3) Ric⊥(y, E_μ)` for every μ.
    pub plus_source: bool,
    /// `ΔW^μ = −(2ε²/3) Ric⊥(y, E_μ)` for every μ.
    pub minus_source: bool,
    /// `W^μ` vanishes identically on `S^k`.
    pub boundary_trace_zero: bool,
}

pub fn poisson_check(ric_perp: &[Vec<f64>], eps: f64, sign: CorrectionSign) -> Result<PoissonCheck> {
    let ws = correction_polynomials(ric_perp, eps, sign)?;
    let e = q_from_f64(eps)?;
    let two_thirds = &e * &e * q_frac(2, 3);
    let mut plus = true;
    let mut minus = true;
    let mut trace = true;
    for (mu, w) in ws.iter().enumerate() {
        let coeffs = ric_perp.iter().map(|row| q_from_f64(row[mu])).collect::<Result<Vec<_>>>()?;
        let source = Poly::linear(&coeffs).scale(&two_thirds);
        let lap = laplacian(w);
        plus &= lap == source;
        minus &= lap == source.scale(&q(-1));
        trace &= w.reduce_on_sphere().is_zero();
    }
    Ok(PoissonCheck { plus_source: plus, minus_source: minus, boundary_trace_zero: trace })
}

/// Splits a symmetric quadratic form into its trace part `tr/(k+1)·|y|²`
/// and a trace-free harmonic part.
pub fn trace_split(a: &[Vec<Q>]) -> (Q, Poly) {
    let n = a.len();
    let tr: Q = (0..n).map(|i| a[i][i].clone()).fold(Q::zero(), |s, x| s + x);
    let p = Poly::quadratic_form(a);
    let free = p.sub(&Poly::radius_squared(n).scale(&(&tr / q(n as i64))));
    (tr / q(n as i64), free)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn y(n: usize, i: usize) -> Poly {
        Poly::var(n, i)
    }

    #[test]
    fn laplacian_examples() {
        for k in 1..4usize {
            let n = k + 1;
            let h = y(n, 0).mul(&y(n, 0)).sub(&y(n, 1).mul(&y(n, 1)));
            assert!(laplacian(&h).is_zero());
            let r2y = Poly::radius_squared(n).mul(&y(n, 0));
            assert_eq!(laplacian(&r2y), y(n, 0).scale(&q(2 * (k as i64 + 3))));
            let w = Poly::constant(n, q(1)).sub(&Poly::radius_squared(n)).mul(&y(n, 0));
            assert_eq!(laplacian(&w), y(n, 0).scale(&q(-2 * (k as i64 + 3))));
        }
    }

    #[test]
    fn decompose_square() {
        for k in 1..4usize {
            let n = k + 1;
            let x2 = y(n, 0).mul(&y(n, 0));
            let parts = harmonic_decompose(&x2);
            assert_eq!(parts.len(), 2);
            let expected_h = x2.sub(&Poly::radius_squared(n).scale(&q_frac(1, n as i64)));
            assert_eq!(parts[0].harmonic, expected_h);
            assert!(laplacian(&parts[0].harmonic).is_zero());
            assert_eq!(parts[1].power, 1);
            assert_eq!(parts[1].harmonic, Poly::constant(n, q_frac(1, n as i64)));
            assert_eq!(reconstruct(&parts, n), x2);
        }
    }

    #[test]
    fn harmonic_input_is_single_term() {
        let h = y(3, 0).mul(&y(3, 1));
        let parts = harmonic_decompose(&h);
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].harmonic, h);
        assert_eq!(parts[0].power, 0);
    }

    #[test]
    fn dtn_examples() {
        let n = 3;
        assert!(dtn(&Poly::constant(n, q(5))).is_zero());
        assert_eq!(dtn(&y(n, 0)), y(n, 0).scale(&q(-1)));
        let h = y(n, 0).mul(&y(n, 2));
        assert_eq!(dtn(&h), h.scale(&q(-2)));
        // x_1^2 on the sphere = harmonic part plus the constant 1/3.
        let x2 = y(n, 0).mul(&y(n, 0));
        let expected = x2.sub(&Poly::radius_squared(n).scale(&q_frac(1, 3))).scale(&q(-2));
        assert!(dtn(&x2).equal_on_sphere(&expected));
    }

    #[test]
    fn reduction_on_sphere() {
        let n = 3;
        let p = Poly::radius_squared(n).mul(&y(n, 0));
        assert!(p.equal_on_sphere(&y(n, 0)));
        assert!(!y(n, 0).equal_on_sphere(&y(n, 1)));
        assert_eq!(p.div_radius_squared(), Some(y(n, 0)));
        assert_eq!(y(n, 0).div_radius_squared(), None);
    }

    #[test]
    fn spectra_examples() {
        for k in 1..=3u32 {
            let tables = model_spectra(k, 4).unwrap();
            for t in &tables {
                for row in &t.rows {
                    assert_eq!(row.eigenvalue, t.operator.closed_form(k, row.degree), "{:?} {}", t.operator, row.degree);
                    assert_eq!(row.multiplicity, harmonic_dimension(k, row.degree));
                }
            }
            let jpar = &tables[0];
            assert_eq!(jpar.kernel_dimension(), k as usize + 1);
            assert_eq!(combined_kernel_dimension(&tables, 2), 2 * (k as usize + 2));
        }
        let t = model_spectra(2, 2).unwrap();
        let comb = t.iter().find(|t| t.operator == ModelOperator::Combined).unwrap();
        assert_eq!(comb.rows[2].eigenvalue, q(-2));
        assert_eq!(comb.rows[2].multiplicity, 5);
    }

    #[test]
    fn ricci_trace_split() {
        let a = vec![
            vec![q(2), q_frac(1, 2), q(0)],
            vec![q_frac(1, 2), q(-1), q(3)],
            vec![q(0), q(3), q(4)],
        ];
        let (mean, free) = trace_split(&a);
        assert_eq!(mean, q(5) / q(3));
        assert!(laplacian(&free).is_zero());
        let parts = harmonic_decompose(&Poly::quadratic_form(&a));
        assert_eq!(parts[0].harmonic, free);
        assert_eq!(parts[1].harmonic, Poly::constant(3, mean));
    }

    #[test]
    fn poisson_identity_sign() {
        let ric_perp = vec![vec![0.25, -1.5], vec![0.1, 0.0]];
        let d = poisson_check(&ric_perp, 0.05, CorrectionSign::Displayed).unwrap();
        assert!(d.plus_source && !d.minus_source && d.boundary_trace_zero);
        let i = poisson_check(&ric_perp, 0.05, CorrectionSign::Implemented).unwrap();
        assert!(i.minus_source && !i.plus_source && i.boundary_trace_zero);
    }

    #[test]
    fn json_shape() {
        let p = y(2, 0).scale(&q_frac(-3, 7));
        let v = p.to_json();
        assert_eq!(v["terms"][0]["coefficient"]["num"], "-3");
        assert_eq!(v["terms"][0]["coefficient"]["den"], "7");
    }
}
