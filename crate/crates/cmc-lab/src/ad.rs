//! Forward-mode automatic differentiation.
//!
//! Three number types implement [`Scalar`]: plain `f64`, the fixed-size
//! [`Dual`] (first derivatives) and [`Hyper`] (first and second derivatives)
//! in `P` seed directions, and the dynamic multivariate truncated Taylor
//! series [`Taylor`] used to expand the metric to fourth order at a point.
//!
//! Elementary functions are applied through [`Scalar::compose`], which takes
//! the derivatives `f(a), f'(a), ..., f''''(a)` at the value part and pushes
//! them through the nilpotent remainder.

use std::collections::HashMap;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

/// Highest derivative order any scalar type in this crate carries.
pub const MAX_ORDER: usize = 4;

pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(&self) -> f64;

    /// A constant living in the same derivative space as `self`.
    fn lift(&self, v: f64) -> Self;

    /// Highest derivative order carried by this value.
    fn order(&self) -> usize;

    /// `f(self)` given `d[j] = f^{(j)}(self.value())` for `j <= order()`.
    fn compose(&self, d: &[f64; MAX_ORDER + 1]) -> Self;

    fn zero_like(&self) -> Self {
        self.lift(0.0)
    }

    fn recip(&self) -> Self {
        let a = self.value();
        let mut d = [0.0; MAX_ORDER + 1];
        let mut f = 1.0 / a;
        for (j, dj) in d.iter_mut().enumerate().take(self.order() + 1) {
            *dj = f;
            f *= -((j + 1) as f64) / a;
        }
        self.compose(&d)
    }

    fn exp(&self) -> Self {
        let e = self.value().exp();
        self.compose(&[e; MAX_ORDER + 1])
    }

    fn ln(&self) -> Self {
        let a = self.value();
        let mut d = [0.0; MAX_ORDER + 1];
        d[0] = a.ln();
        let mut f = 1.0 / a;
        for j in 1..=self.order().min(MAX_ORDER) {
            d[j] = f;
            f *= -(j as f64) / a;
        }
        self.compose(&d)
    }

    fn sqrt(&self) -> Self {
        let a = self.value();
        let mut d = [0.0; MAX_ORDER + 1];
        let mut coef = 1.0;
        for (j, dj) in d.iter_mut().enumerate().take(self.order() + 1) {
            *dj = coef * a.powf(0.5 - j as f64);
            coef *= 0.5 - j as f64;
        }
        self.compose(&d)
    }

    fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose(&[s, c, -s, -c, s])
    }

    fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose(&[c, -s, -c, s, c])
    }

    fn sinh(&self) -> Self {
        let (s, c) = (self.value().sinh(), self.value().cosh());
        self.compose(&[s, c, s, c, s])
    }

    fn cosh(&self) -> Self {
        let (s, c) = (self.value().sinh(), self.value().cosh());
        self.compose(&[c, s, c, s, c])
    }

    fn powi(&self, n: u32) -> Self {
        let mut acc = self.lift(1.0);
        for _ in 0..n {
            acc = acc * self.clone();
        }
        acc
    }

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn lift(&self, v: f64) -> Self {
        v
    }
    fn order(&self) -> usize {
        0
    }
    fn compose(&self, d: &[f64; MAX_ORDER + 1]) -> Self {
        d[0]
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn sinh(&self) -> Self {
        f64::sinh(*self)
    }
    fn cosh(&self) -> Self {
        f64::cosh(*self)
    }
    fn powi(&self, n: u32) -> Self {
        f64::powi(*self, n as i32)
    }
}

/// Sum of `a[i] * b[i]`, seeded from the first element's derivative space.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = a[0].clone() * b[0].clone();
    for i in 1..a.len() {
        acc = acc + a[i].clone() * b[i].clone();
    }
    acc
}

/// First-order dual number with `P` seed directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const P: usize> {
    pub v: f64,
    pub g: [f64; P],
}

impl<const P: usize> Dual<P> {
    pub fn constant(v: f64) -> Self {
        Dual { v, g: [0.0; P] }
    }
    pub fn variable(v: f64, i: usize) -> Self {
        let mut g = [0.0; P];
        g[i] = 1.0;
        Dual { v, g }
    }
}

impl<const P: usize> Add for Dual<P> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..P {
            self.g[i] += o.g[i];
        }
        self
    }
}

impl<const P: usize> Sub for Dual<P> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for i in 0..P {
            self.g[i] -= o.g[i];
        }
        self
    }
}

impl<const P: usize> Mul for Dual<P> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut g = [0.0; P];
        for i in 0..P {
            g[i] = self.v * o.g[i] + o.v * self.g[i];
        }
        Dual { v: self.v * o.v, g }
    }
}

impl<const P: usize> Div for Dual<P> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let v = self.v * inv;
        let mut g = [0.0; P];
        for i in 0..P {
            g[i] = (self.g[i] - v * o.g[i]) * inv;
        }
        Dual { v, g }
    }
}

impl<const P: usize> Neg for Dual<P> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for x in self.g.iter_mut() {
            *x = -*x;
        }
        self
    }
}

impl<const P: usize> Scalar for Dual<P> {
    fn value(&self) -> f64 {
        self.v
    }
    fn lift(&self, v: f64) -> Self {
        Dual::constant(v)
    }
    fn order(&self) -> usize {
        1
    }
    #[inline]
    fn compose(&self, d: &[f64; MAX_ORDER + 1]) -> Self {
        let mut g = self.g;
        for x in g.iter_mut() {
            *x *= d[1];
        }
        Dual { v: d[0], g }
    }
}

/// Second-order hyper-dual number with `P` seed directions: value, gradient
/// and full symmetric Hessian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyper<const P: usize> {
    pub v: f64,
    pub g: [f64; P],
    pub h: [[f64; P]; P],
}

impl<const P: usize> Hyper<P> {
    pub fn constant(v: f64) -> Self {
        Hyper { v, g: [0.0; P], h: [[0.0; P]; P] }
    }
    pub fn variable(v: f64, i: usize) -> Self {
        let mut s = Self::constant(v);
        s.g[i] = 1.0;
        s
    }
}

impl<const P: usize> Add for Hyper<P> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..P {
            self.g[i] += o.g[i];
            for j in 0..P {
                self.h[i][j] += o.h[i][j];
            }
        }
        self
    }
}

impl<const P: usize> Sub for Hyper<P> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for i in 0..P {
            self.g[i] -= o.g[i];
            for j in 0..P {
                self.h[i][j] -= o.h[i][j];
            }
        }
        self
    }
}

impl<const P: usize> Mul for Hyper<P> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut r = Self::constant(self.v * o.v);
        for i in 0..P {
            r.g[i] = self.v * o.g[i] + o.v * self.g[i];
            for j in 0..P {
                r.h[i][j] = self.v * o.h[i][j]
                    + o.v * self.h[i][j]
                    + self.g[i] * o.g[j]
                    + o.g[i] * self.g[j];
            }
        }
        r
    }
}

impl<const P: usize> Div for Hyper<P> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<const P: usize> Neg for Hyper<P> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl<const P: usize> Scalar for Hyper<P> {
    fn value(&self) -> f64 {
        self.v
    }
    fn lift(&self, v: f64) -> Self {
        Hyper::constant(v)
    }
    fn order(&self) -> usize {
        2
    }
    #[inline]
    fn compose(&self, d: &[f64; MAX_ORDER + 1]) -> Self {
        let mut r = Self::constant(d[0]);
        for i in 0..P {
            r.g[i] = d[1] * self.g[i];
            for j in 0..P {
                r.h[i][j] = d[1] * self.h[i][j] + d[2] * self.g[i] * self.g[j];
            }
        }
        r
    }
}

macro_rules! f64_ops_copy {
    ($t:ident) => {
        impl<const P: usize> Add<f64> for $t<P> {
            type Output = Self;
            #[inline]
            fn add(mut self, o: f64) -> Self {
                self.v += o;
                self
            }
        }
        impl<const P: usize> Sub<f64> for $t<P> {
            type Output = Self;
            #[inline]
            fn sub(mut self, o: f64) -> Self {
                self.v -= o;
                self
            }
        }
        impl<const P: usize> Div<f64> for $t<P> {
            type Output = Self;
            #[inline]
            fn div(self, o: f64) -> Self {
                self * (1.0 / o)
            }
        }
    };
}

f64_ops_copy!(Dual);
f64_ops_copy!(Hyper);

impl<const P: usize> Mul<f64> for Dual<P> {
    type Output = Self;
    #[inline]
    fn mul(mut self, o: f64) -> Self {
        self.v *= o;
        for x in self.g.iter_mut() {
            *x *= o;
        }
        self
    }
}

impl<const P: usize> Mul<f64> for Hyper<P> {
    type Output = Self;
    #[inline]
    fn mul(mut self, o: f64) -> Self {
        self.v *= o;
        for i in 0..P {
            self.g[i] *= o;
            for j in 0..P {
                self.h[i][j] *= o;
            }
        }
        self
    }
}

/// Monomial bookkeeping shared by every [`Taylor`] value of one expansion.
#[derive(Debug)]
pub struct TaylorSpace {
    nvars: usize,
    order: usize,
    monomials: Vec<Vec<u8>>,
    degree: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
    /// `(i, j, k)` with `monomial[i] + monomial[j] = monomial[k]`, sorted by
    /// the degree of `k`.
    products: Vec<(usize, usize, usize)>,
    /// `products[..prefix[d]]` are the entries with output degree `<= d`.
    prefix: Vec<usize>,
    /// Per variable: `(source, target, factor)` for the partial derivative.
    derivs: Vec<Vec<(usize, usize, f64)>>,
}

impl TaylorSpace {
    pub fn new(nvars: usize, order: usize) -> Arc<Self> {
        let mut monomials: Vec<Vec<u8>> = vec![vec![0; nvars]];
        let mut layer = monomials.clone();
        for _ in 0..order {
            let mut next: Vec<Vec<u8>> = Vec::new();
            for m in &layer {
                let last = m.iter().rposition(|&e| e > 0).unwrap_or(0);
                for q in last..nvars {
                    let mut n = m.clone();
                    n[q] += 1;
                    next.push(n);
                }
            }
            monomials.extend(next.iter().cloned());
            layer = next;
        }
        let degree: Vec<usize> = monomials
            .iter()
            .map(|m| m.iter().map(|&e| e as usize).sum())
            .collect();
        let index: HashMap<Vec<u8>, usize> =
            monomials.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        let mut products = Vec::new();
        for i in 0..monomials.len() {
            for j in 0..monomials.len() {
                if degree[i] + degree[j] <= order {
                    let s: Vec<u8> =
                        monomials[i].iter().zip(&monomials[j]).map(|(a, b)| a + b).collect();
                    products.push((i, j, index[&s]));
                }
            }
        }
        products.sort_by_key(|&(_, _, k)| degree[k]);
        let prefix = (0..=order)
            .map(|d| products.iter().filter(|&&(_, _, k)| degree[k] <= d).count())
            .collect();
        let mut derivs = vec![Vec::new(); nvars];
        for (q, dq) in derivs.iter_mut().enumerate() {
            for (src, m) in monomials.iter().enumerate() {
                if m[q] > 0 {
                    let mut t = m.clone();
                    t[q] -= 1;
                    dq.push((src, index[&t], m[q] as f64));
                }
            }
        }
        Arc::new(TaylorSpace { nvars, order, monomials, degree, index, products, prefix, derivs })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Vec<u8>] {
        &self.monomials
    }

    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        self.index.get(alpha).copied()
    }
}

/// Multivariate Taylor polynomial truncated at `order`: coefficient `c[i]`
/// multiplies `δx^{monomial[i]}`.
#[derive(Clone, Debug)]
pub struct Taylor {
    space: Arc<TaylorSpace>,
    order: usize,
    c: Vec<f64>,
}

impl Taylor {
    pub fn constant(space: &Arc<TaylorSpace>, v: f64) -> Self {
        let mut c = vec![0.0; space.len()];
        c[0] = v;
        Taylor { space: space.clone(), order: space.order, c }
    }

    /// `value + δx_q`.
    pub fn variable(space: &Arc<TaylorSpace>, q: usize, value: f64) -> Self {
        let mut t = Self::constant(space, value);
        if space.order >= 1 {
            t.c[1 + q] = 1.0;
        }
        t
    }

    /// Builds a series from coefficients indexed like `space.monomials()`.
    pub fn from_coefficients(space: &Arc<TaylorSpace>, c: Vec<f64>) -> Self {
        assert_eq!(c.len(), space.len());
        Taylor { space: space.clone(), order: space.order, c }
    }

    pub fn space(&self) -> &Arc<TaylorSpace> {
        &self.space
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.c
    }

    pub fn coefficient(&self, alpha: &[u8]) -> f64 {
        self.space.index_of(alpha).map(|i| self.c[i]).unwrap_or(0.0)
    }

    /// Partial derivative `∂^α` at the expansion point.
    pub fn partial(&self, alpha: &[u8]) -> f64 {
        let fact: f64 = alpha.iter().map(|&e| (1..=e as u64).product::<u64>() as f64).product();
        self.coefficient(alpha) * fact
    }

    /// The series of `∂/∂x_q`, one order shorter.
    pub fn derivative(&self, q: usize) -> Self {
        assert!(self.order >= 1, "derivative of an order-0 series");
        let mut c = vec![0.0; self.c.len()];
        let new_order = self.order - 1;
        for &(src, dst, f) in &self.space.derivs[q] {
            if self.space.degree[dst] <= new_order {
                c[dst] += f * self.c[src];
            }
        }
        Taylor { space: self.space.clone(), order: new_order, c }
    }

    /// Drops all terms above `order`.
    pub fn truncate(&self, order: usize) -> Self {
        let order = order.min(self.order);
        let mut c = self.c.clone();
        for (i, x) in c.iter_mut().enumerate() {
            if self.space.degree[i] > order {
                *x = 0.0;
            }
        }
        Taylor { space: self.space.clone(), order, c }
    }

    fn mul_ref(&self, o: &Self) -> Self {
        let order = self.order.min(o.order);
        let mut c = vec![0.0; self.c.len()];
        for &(i, j, k) in &self.space.products[..self.space.prefix[order]] {
            let a = self.c[i];
            if a != 0.0 {
                c[k] += a * o.c[j];
            }
        }
        Taylor { space: self.space.clone(), order, c }
    }
}

impl Add for Taylor {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.order = self.order.min(o.order);
        for (a, b) in self.c.iter_mut().zip(&o.c) {
            *a += b;
        }
        self.truncate(self.order)
    }
}

impl Sub for Taylor {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        self.order = self.order.min(o.order);
        for (a, b) in self.c.iter_mut().zip(&o.c) {
            *a -= b;
        }
        self.truncate(self.order)
    }
}

impl Mul for Taylor {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.mul_ref(&o)
    }
}

impl Div for Taylor {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        self.mul_ref(&o.recip())
    }
}

impl Neg for Taylor {
    type Output = Self;
    fn neg(mut self) -> Self {
        for x in self.c.iter_mut() {
            *x = -*x;
        }
        self
    }
}

impl Add<f64> for Taylor {
    type Output = Self;
    fn add(mut self, o: f64) -> Self {
        self.c[0] += o;
        self
    }
}

impl Sub<f64> for Taylor {
    type Output = Self;
    fn sub(mut self, o: f64) -> Self {
        self.c[0] -= o;
        self
    }
}

impl Mul<f64> for Taylor {
    type Output = Self;
    fn mul(mut self, o: f64) -> Self {
        for x in self.c.iter_mut() {
            *x *= o;
        }
        self
    }
}

impl Div<f64> for Taylor {
    type Output = Self;
    fn div(self, o: f64) -> Self {
        self * (1.0 / o)
    }
}

impl Scalar for Taylor {
    fn value(&self) -> f64 {
        self.c[0]
    }
    fn lift(&self, v: f64) -> Self {
        Taylor::constant(&self.space, v)
    }
    fn order(&self) -> usize {
        self.order
    }
    fn compose(&self, d: &[f64; MAX_ORDER + 1]) -> Self {
        let mut rest = self.clone();
        rest.c[0] = 0.0;
        let mut out = Taylor::constant(&self.space, d[0]);
        out.order = self.order;
        let mut power = Taylor::constant(&self.space, 1.0);
        let mut fact = 1.0;
        for (j, dj) in d.iter().enumerate().take(self.order.min(MAX_ORDER) + 1).skip(1) {
            power = power.mul_ref(&rest);
            fact *= j as f64;
            let s = dj / fact;
            for (o, p) in out.c.iter_mut().zip(&power.c) {
                *o += s * p;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyper_matches_closed_form_derivatives() {
        // f(x, y) = exp(x) * sin(y) / (1 + x^2)
        let x = Hyper::<2>::variable(0.3, 0);
        let y = Hyper::<2>::variable(-0.7, 1);
        let f = x.exp() * y.sin() / (x * x + 1.0);
        let (xv, yv) = (0.3f64, -0.7f64);
        let q = 1.0 + xv * xv;
        let val = xv.exp() * yv.sin() / q;
        assert!((f.v - val).abs() < 1e-15);
        let fx = val * (1.0 - 2.0 * xv / q);
        assert!((f.g[0] - fx).abs() < 1e-14);
        let fxy = xv.exp() * yv.cos() / q * (1.0 - 2.0 * xv / q);
        assert!((f.h[0][1] - fxy).abs() < 1e-14);
        assert!((f.h[1][1] + val).abs() < 1e-14);
    }

    #[test]
    fn taylor_reproduces_univariate_series() {
        let sp = TaylorSpace::new(1, 4);
        let x = Taylor::variable(&sp, 0, 0.0);
        let e = x.exp();
        let expect = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for (k, v) in expect.iter().enumerate() {
            assert!((e.coefficient(&[k as u8]) - v).abs() < 1e-15);
        }
        let s = (x.clone() + 1.0).sqrt();
        assert!((s.coefficient(&[2]) + 0.125).abs() < 1e-15);
        let r = (x + 2.0).recip();
        assert!((r.coefficient(&[3]) + 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn taylor_derivative_and_partial() {
        let sp = TaylorSpace::new(2, 4);
        let x = Taylor::variable(&sp, 0, 0.5);
        let y = Taylor::variable(&sp, 1, -0.25);
        let f = x.clone() * x.clone() * y.clone() + y.sin();
        // ∂²_x ∂_y f = 2
        assert!((f.partial(&[2, 1]) - 2.0).abs() < 1e-14);
        let fy = f.derivative(1);
        assert_eq!(fy.order(), 3);
        assert!((fy.value() - (0.25 + (-0.25f64).cos())).abs() < 1e-15);
        assert!((fy.partial(&[0, 2]) + (0.25f64).cos()).abs() < 1e-14);
    }

    #[test]
    fn dual_division() {
        let x = Dual::<1>::variable(2.0, 0);
        let f = (x * x + 1.0) / x;
        assert!((f.g[0] - (1.0 - 1.0 / 4.0)).abs() < 1e-15);
    }
}
