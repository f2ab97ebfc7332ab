//! Metrics in a single coordinate chart: Christoffel symbols, geodesics,
//! parallel transport and the exponential map.
//!
//! Every zoo metric is a product of conformally flat blocks
//! `g = ⊕_b e^{2 f_b(x_b)} δ_b`, so the Christoffel symbols only need the
//! gradient of each log-factor `f_b`. Euclidean and space-form blocks have
//! closed-form geodesics through their embedding; polynomial conformal blocks
//! are integrated with classical RK4. All of this is generic over
//! [`Scalar`], which is how immersion jets get exact parameter derivatives.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::Value;

use crate::ad::{dot, Scalar, Taylor, TaylorSpace};
use crate::error::{GeomError, Result};

/// Default central-difference steps for derivative orders 1..4.
pub const DEFAULT_FD_STEPS: [f64; 4] = [1e-5, 1e-4, 5e-4, 2e-3];

/// RK4 steps per unit of geodesic length.
pub const STEPS_PER_UNIT: f64 = 200.0;
/// Lower bound on the RK4 step count of any geodesic.
pub const MIN_STEPS: usize = 16;

/// Real polynomial `Σ c_α x^α`, used as a conformal log-factor.
#[derive(Clone, Debug, PartialEq)]
pub struct RealPoly {
    pub nvars: usize,
    pub terms: Vec<(Vec<u32>, f64)>,
}

impl RealPoly {
    pub fn new(nvars: usize, terms: Vec<(Vec<u32>, f64)>) -> Result<Self> {
        for (e, _) in &terms {
            if e.len() != nvars {
                return Err(GeomError::Config(format!(
                    "monomial exponent {e:?} has {} entries, expected {nvars}",
                    e.len()
                )));
            }
        }
        Ok(RealPoly { nvars, terms })
    }

    pub fn eval<S: Scalar>(&self, x: &[S]) -> S {
        let mut acc = x[0].zero_like();
        for (e, c) in &self.terms {
            acc = acc + monomial(x, e) * *c;
        }
        acc
    }

    pub fn grad<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let mut g = vec![x[0].zero_like(); self.nvars];
        for (e, c) in &self.terms {
            for q in 0..self.nvars {
                if e[q] == 0 {
                    continue;
                }
                let mut d = e.clone();
                d[q] -= 1;
                g[q] = g[q].clone() + monomial(x, &d) * (*c * e[q] as f64);
            }
        }
        g
    }

    fn to_json(&self) -> Value {
        let mut m = serde_json::Map::new();
        for (e, c) in &self.terms {
            let key = e.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
            m.insert(key, Value::from(*c));
        }
        Value::Object(m)
    }
}

fn monomial<S: Scalar>(x: &[S], e: &[u32]) -> S {
    let mut acc = x[0].lift(1.0);
    for (xi, &p) in x.iter().zip(e) {
        if p > 0 {
            acc = acc * xi.powi(p);
        }
    }
    acc
}

/// Named metric families. Products are flattened into conformally flat blocks.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricZooEntry {
    Euclidean,
    SpaceForm { c: f64 },
    Conformal { f: RealPoly },
    Product { factors: Vec<(MetricZooEntry, usize)> },
}

impl MetricZooEntry {
    pub fn name(&self) -> &'static str {
        match self {
            MetricZooEntry::Euclidean => "euclidean",
            MetricZooEntry::SpaceForm { .. } => "space_form",
            MetricZooEntry::Conformal { .. } => "conformal",
            MetricZooEntry::Product { .. } => "product",
        }
    }

    pub fn to_json(&self, dim: usize) -> Value {
        let params = match self {
            MetricZooEntry::Euclidean => serde_json::json!({}),
            MetricZooEntry::SpaceForm { c } => serde_json::json!({ "c": c }),
            MetricZooEntry::Conformal { f } => serde_json::json!({ "f": f.to_json() }),
            MetricZooEntry::Product { factors } => serde_json::json!({
                "factors": factors.iter().map(|(e, d)| e.to_json(*d)).collect::<Vec<_>>()
            }),
        };
        serde_json::json!({ "metric": { "name": self.name(), "params": params }, "dim": dim })
    }
}

#[derive(Clone, Debug, PartialEq)]
enum BlockKind {
    Euclidean,
    SpaceForm(f64),
    Conformal(RealPoly),
}

#[derive(Clone, Debug, PartialEq)]
struct Block {
    offset: usize,
    dim: usize,
    kind: BlockKind,
}

impl Block {
    fn log_factor<S: Scalar>(&self, xb: &[S]) -> S {
        match &self.kind {
            BlockKind::Euclidean => xb[0].zero_like(),
            BlockKind::SpaceForm(c) => {
                let r2 = dot(xb, xb);
                -((r2 * (c / 4.0)) + 1.0).ln()
            }
            BlockKind::Conformal(f) => f.eval(xb),
        }
    }

    fn log_factor_grad<S: Scalar>(&self, xb: &[S]) -> Vec<S> {
        match &self.kind {
            BlockKind::Euclidean => vec![xb[0].zero_like(); self.dim],
            BlockKind::SpaceForm(c) => {
                let r2 = dot(xb, xb);
                let w = ((r2 * (c / 4.0)) + 1.0).recip() * (-c / 2.0);
                xb.iter().map(|xi| xi.clone() * w.clone()).collect()
            }
            BlockKind::Conformal(f) => f.grad(xb),
        }
    }

    fn closed_form(&self) -> bool {
        !matches!(self.kind, BlockKind::Conformal(_))
    }

    fn radius(&self) -> f64 {
        match self.kind {
            BlockKind::SpaceForm(c) if c != 0.0 => 2.0 / c.abs().sqrt(),
            _ => f64::INFINITY,
        }
    }
}

fn flatten(entry: &MetricZooEntry, dim: usize, offset: usize, out: &mut Vec<Block>) -> Result<()> {
    match entry {
        MetricZooEntry::Euclidean => out.push(Block { offset, dim, kind: BlockKind::Euclidean }),
        MetricZooEntry::SpaceForm { c } => {
            let kind = if *c == 0.0 { BlockKind::Euclidean } else { BlockKind::SpaceForm(*c) };
            out.push(Block { offset, dim, kind })
        }
        MetricZooEntry::Conformal { f } => {
            if f.nvars != dim {
                return Err(GeomError::Config(format!(
                    "conformal factor has {} variables but block dimension is {dim}",
                    f.nvars
                )));
            }
            out.push(Block { offset, dim, kind: BlockKind::Conformal(f.clone()) })
        }
        MetricZooEntry::Product { factors } => {
            let total: usize = factors.iter().map(|(_, d)| d).sum();
            if total != dim {
                return Err(GeomError::Config(format!(
                    "product factor dimensions sum to {total}, expected {dim}"
                )));
            }
            let mut off = offset;
            for (e, d) in factors {
                flatten(e, *d, off, out)?;
                off += d;
            }
        }
    }
    Ok(())
}

/// How derivatives of the metric components are obtained.
#[derive(Clone, Debug, PartialEq)]
pub enum DerivativeScheme {
    Analytic,
    FiniteDifference { steps: [f64; 4] },
}

pub type ComponentFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum ChartKind {
    Zoo { entry: MetricZooEntry, blocks: Vec<Block> },
    Custom(ComponentFn),
}

/// A metric in one coordinate chart.
#[derive(Clone)]
pub struct MetricChart {
    dim: usize,
    kind: ChartKind,
    scheme: DerivativeScheme,
    domain_radius: f64,
    scale: f64,
}

impl fmt::Debug for MetricChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            ChartKind::Zoo { entry, .. } => format!("{entry:?}"),
            ChartKind::Custom(_) => "Custom".to_string(),
        };
        f.debug_struct("MetricChart")
            .field("dim", &self.dim)
            .field("kind", &kind)
            .field("scheme", &self.scheme)
            .field("domain_radius", &self.domain_radius)
            .field("scale", &self.scale)
            .finish()
    }
}

/// Result of integrating a geodesic.
#[derive(Clone, Debug)]
pub struct GeodesicSolution {
    pub endpoint: DVector<f64>,
    pub velocity: DVector<f64>,
    pub transported_frame: Vec<DVector<f64>>,
    pub integrator_error_estimate: f64,
}

impl MetricChart {
    pub fn zoo(entry: MetricZooEntry, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(GeomError::Dimension("chart dimension must be positive".into()));
        }
        let mut blocks = Vec::new();
        flatten(&entry, dim, 0, &mut blocks)?;
        let radius = blocks.iter().map(Block::radius).fold(f64::INFINITY, f64::min);
        let domain_radius = if radius.is_finite() { radius } else { 1e3 };
        Ok(MetricChart {
            dim,
            kind: ChartKind::Zoo { entry, blocks },
            scheme: DerivativeScheme::Analytic,
            domain_radius,
            scale: 1.0,
        })
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::zoo(MetricZooEntry::Euclidean, dim).expect("euclidean chart")
    }

    pub fn space_form(c: f64, dim: usize) -> Self {
        Self::zoo(MetricZooEntry::SpaceForm { c }, dim).expect("space form chart")
    }

    /// `g = e^{2f} δ` with `f` given as `(exponents, coefficient)` pairs.
    pub fn conformal(dim: usize, terms: Vec<(Vec<u32>, f64)>) -> Result<Self> {
        Self::zoo(MetricZooEntry::Conformal { f: RealPoly::new(dim, terms)? }, dim)
    }

    /// A user-supplied component map; derivatives are always finite differences.
    pub fn custom(dim: usize, component_fn: ComponentFn, domain_radius: f64) -> Self {
        MetricChart {
            dim,
            kind: ChartKind::Custom(component_fn),
            scheme: DerivativeScheme::FiniteDifference { steps: DEFAULT_FD_STEPS },
            domain_radius,
            scale: 1.0,
        }
    }

    pub fn with_scheme(mut self, scheme: DerivativeScheme) -> Result<Self> {
        if matches!(self.kind, ChartKind::Custom(_)) && scheme == DerivativeScheme::Analytic {
            return Err(GeomError::Config("custom charts have no analytic derivatives".into()));
        }
        self.scheme = scheme;
        Ok(self)
    }

    pub fn with_domain_radius(mut self, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(GeomError::Config("domain_radius must be positive".into()));
        }
        self.domain_radius = r;
        Ok(self)
    }

    /// Multiplies the metric by a positive constant.
    pub fn with_scale(mut self, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(GeomError::Config("scale must be positive".into()));
        }
        self.scale = s;
        Ok(self)
    }

    /// Parses `{"metric": {"name", "params"}, "dim", ["scheme"], ["domain_radius"], ["scale"]}`.
    pub fn from_json(v: &Value) -> Result<Self> {
        let dim = v
            .get("dim")
            .and_then(Value::as_u64)
            .ok_or_else(|| GeomError::Config("field `dim` missing or not an integer".into()))?
            as usize;
        let metric = v
            .get("metric")
            .ok_or_else(|| GeomError::Config("field `metric` missing".into()))?;
        let entry = parse_entry(metric, dim)?;
        let mut chart = Self::zoo(entry, dim)?;
        if let Some(s) = v.get("scheme") {
            chart = chart.with_scheme(parse_scheme(s)?)?;
        }
        if let Some(r) = v.get("domain_radius") {
            let r = r
                .as_f64()
                .ok_or_else(|| GeomError::Config("field `domain_radius` must be a number".into()))?;
            chart = chart.with_domain_radius(r)?;
        }
        if let Some(s) = v.get("scale") {
            let s = s.as_f64().ok_or_else(|| GeomError::Config("field `scale` must be a number".into()))?;
            chart = chart.with_scale(s)?;
        }
        Ok(chart)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scheme(&self) -> &DerivativeScheme {
        &self.scheme
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn zoo_entry(&self) -> Option<&MetricZooEntry> {
        match &self.kind {
            ChartKind::Zoo { entry, .. } => Some(entry),
            ChartKind::Custom(_) => None,
        }
    }

    /// Whether derivatives can be pushed through the metric by automatic differentiation.
    pub fn is_analytic(&self) -> bool {
        matches!(self.kind, ChartKind::Zoo { .. }) && self.scheme == DerivativeScheme::Analytic
    }

    /// Whether geodesics are available in closed form.
    pub fn has_closed_form_exp(&self) -> bool {
        match &self.kind {
            ChartKind::Zoo { blocks, .. } => blocks.iter().all(Block::closed_form),
            ChartKind::Custom(_) => false,
        }
    }

    pub fn check_inside(&self, x: &[f64]) -> Result<()> {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r < self.domain_radius {
            Ok(())
        } else {
            Err(GeomError::OutsideDomain { at: x.to_vec(), radius: self.domain_radius })
        }
    }

    /// Metric components `g_ij(x)`.
    pub fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.kind {
            ChartKind::Zoo { blocks, .. } => {
                let mut g = DMatrix::zeros(self.dim, self.dim);
                for b in blocks {
                    let e = (2.0 * b.log_factor(&x[b.offset..b.offset + b.dim])).exp() * self.scale;
                    for i in b.offset..b.offset + b.dim {
                        g[(i, i)] = e;
                    }
                }
                g
            }
            ChartKind::Custom(f) => f(x) * self.scale,
        }
    }

    /// Metric components on generic scalars (row-major), `None` for custom charts.
    pub fn metric_generic<S: Scalar>(&self, x: &[S]) -> Option<Vec<S>> {
        let ChartKind::Zoo { blocks, .. } = &self.kind else { return None };
        let n = self.dim;
        let mut g = vec![x[0].zero_like(); n * n];
        for b in blocks {
            let e = (b.log_factor(&x[b.offset..b.offset + b.dim]) * 2.0).exp() * self.scale;
            for i in b.offset..b.offset + b.dim {
                g[i * n + i] = e.clone();
            }
        }
        Some(g)
    }

    pub fn inner(&self, x: &[f64], u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * self.metric(x) * v)[(0, 0)]
    }

    /// `Γ^l(u, w) = Γ^l_ij u^i w^j` on generic scalars; `None` when the
    /// chart has no analytic Christoffel symbols.
    pub fn gamma_contract<S: Scalar>(&self, x: &[S], u: &[S], w: &[S]) -> Option<Vec<S>> {
        if !self.is_analytic() {
            return None;
        }
        let ChartKind::Zoo { blocks, .. } = &self.kind else { return None };
        let mut out = vec![x[0].zero_like(); self.dim];
        for b in blocks {
            if matches!(b.kind, BlockKind::Euclidean) {
                continue;
            }
            let r = b.offset..b.offset + b.dim;
            let a = b.log_factor_grad(&x[r.clone()]);
            let (ub, wb) = (&u[r.clone()], &w[r.clone()]);
            let aw = dot(&a, wb);
            let au = dot(&a, ub);
            let uw = dot(ub, wb);
            for (j, l) in r.enumerate() {
                out[l] = ub[j].clone() * aw.clone() + wb[j].clone() * au.clone() - uw.clone() * a[j].clone();
            }
        }
        Some(out)
    }

    /// Christoffel symbols `Γ^l_ij`, flattened as `[l][i][j]`.
    pub fn christoffel(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim;
        if self.is_analytic() {
            let mut gam = vec![0.0; n * n * n];
            for i in 0..n {
                for j in 0..n {
                    let mut u = vec![0.0; n];
                    let mut w = vec![0.0; n];
                    u[i] = 1.0;
                    w[j] = 1.0;
                    let c = self.gamma_contract(x, &u, &w).expect("analytic chart");
                    for l in 0..n {
                        gam[(l * n + i) * n + j] = c[l];
                    }
                }
            }
            return Ok(gam);
        }
        let h = self.fd_steps()[0];
        let mut dg = Vec::with_capacity(n);
        for q in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[q] += h;
            xm[q] -= h;
            dg.push((self.metric(&xp) - self.metric(&xm)) / (2.0 * h));
        }
        let ginv = self
            .metric(x)
            .try_inverse()
            .ok_or_else(|| GeomError::SingularMetric { at: x.to_vec() })?;
        let mut gam = vec![0.0; n * n * n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for q in 0..n {
                        s += ginv[(l, q)] * (dg[j][(i, q)] + dg[i][(j, q)] - dg[q][(i, j)]);
                    }
                    gam[(l * n + i) * n + j] = 0.5 * s;
                }
            }
        }
        Ok(gam)
    }

    fn fd_steps(&self) -> [f64; 4] {
        match self.scheme {
            DerivativeScheme::FiniteDifference { steps } => steps,
            DerivativeScheme::Analytic => DEFAULT_FD_STEPS,
        }
    }

    fn gamma_contract_f64(&self, x: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        if let Some(c) = self.gamma_contract(x, u, w) {
            return Ok(c);
        }
        let n = self.dim;
        let gam = self.christoffel(x)?;
        let mut out = vec![0.0; n];
        for l in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += gam[(l * n + i) * n + j] * u[i] * w[j];
                }
            }
            out[l] = s;
        }
        Ok(out)
    }

    /// Taylor expansion of every metric component at `p` to `order`
    /// (row-major), exact for analytic charts and from central differences
    /// with per-order steps otherwise.
    pub fn metric_taylor(&self, p: &[f64], order: usize) -> Result<Vec<Taylor>> {
        self.check_inside(p)?;
        let n = self.dim;
        let space = TaylorSpace::new(n, order);
        if self.is_analytic() {
            let x: Vec<Taylor> = (0..n).map(|q| Taylor::variable(&space, q, p[q])).collect();
            return Ok(self.metric_generic(&x).expect("analytic chart"));
        }
        let steps = self.fd_steps();
        let mut coeffs = vec![vec![0.0; space.len()]; n * n];
        for (idx, alpha) in space.monomials().iter().enumerate() {
            let deg: usize = alpha.iter().map(|&e| e as usize).sum();
            let h = if deg == 0 { 0.0 } else { steps[deg - 1] };
            let mut acc = DMatrix::<f64>::zeros(n, n);
            for (offsets, w) in stencil_product(alpha) {
                let x: Vec<f64> = p.iter().zip(&offsets).map(|(pi, o)| pi + h * *o as f64).collect();
                acc += self.metric(&x) * w;
            }
            let fact: f64 = alpha.iter().map(|&e| (1..=e as u64).product::<u64>() as f64).product();
            let hp = h.powi(deg as i32);
            let scale = if deg == 0 { 1.0 } else { 1.0 / (hp * fact) };
            for i in 0..n {
                for j in 0..n {
                    coeffs[i * n + j][idx] = acc[(i, j)] * scale;
                }
            }
        }
        Ok(coeffs.into_iter().map(|c| Taylor::from_coefficients(&space, c)).collect())
    }

    /// Geodesic from `p` with initial velocity `v`, evaluated at time `t`,
    /// transporting an orthonormal frame built from the coordinate basis.
    pub fn geodesic(&self, p: &DVector<f64>, v: &DVector<f64>, t: f64) -> Result<GeodesicSolution> {
        let frame = orthonormalize(self, p.as_slice(), &coordinate_basis(self.dim))?;
        self.parallel_transport(p, v, &frame, t)
    }

    /// Parallel transport of `frame` along `t ↦ exp_p(t v)`.
    pub fn parallel_transport(
        &self,
        p: &DVector<f64>,
        v: &DVector<f64>,
        frame: &[DVector<f64>],
        t: f64,
    ) -> Result<GeodesicSolution> {
        self.check_inside(p.as_slice())?;
        if self.has_closed_form_exp() {
            return self.closed_form_transport(p, v, frame, t);
        }
        let len = self.inner(p.as_slice(), v, v).sqrt() * t.abs();
        let steps = step_count(len);
        let coarse = self.rk4_f64(p, v, frame, t, steps)?;
        let fine = self.rk4_f64(p, v, frame, t, 2 * steps)?;
        let mut err = (&fine.0 - &coarse.0).amax();
        err = err.max((&fine.1 - &coarse.1).amax());
        Ok(GeodesicSolution {
            endpoint: fine.0,
            velocity: fine.1,
            transported_frame: fine.2,
            integrator_error_estimate: err / 15.0,
        })
    }

    /// `exp_p(w)` in chart coordinates.
    pub fn exp_map(&self, p: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.exp_generic(p.as_slice(), w.as_slice())?;
        Ok(DVector::from_vec(x))
    }

    /// `exp_p(w)` on generic scalars: closed form where available, RK4
    /// otherwise. Fails for charts without analytic Christoffel symbols
    /// unless `S = f64`-valued data is passed through [`Self::exp_map`].
    pub fn exp_generic<S: Scalar>(&self, p: &[f64], w: &[S]) -> Result<Vec<S>> {
        self.check_inside(p)?;
        if self.has_closed_form_exp() {
            return Ok(self.closed_form_exp(p, w));
        }
        let wv: Vec<f64> = w.iter().map(Scalar::value).collect();
        let wv = DVector::from_vec(wv);
        let len = self.inner(p, &wv, &wv).sqrt();
        let steps = step_count(len);
        if self.is_analytic() {
            return self.rk4_generic(p, w, steps);
        }
        if w[0].order() > 0 {
            return Err(GeomError::Conditioning(
                "derivatives through a finite-difference chart need finite-difference jets".into(),
            ));
        }
        let pv = DVector::from_column_slice(p);
        let sol = self.rk4_f64(&pv, &wv, &[], 1.0, steps)?;
        Ok(sol.0.iter().map(|&x| w[0].lift(x)).collect())
    }

    fn rk4_generic<S: Scalar>(&self, p: &[f64], w: &[S], steps: usize) -> Result<Vec<S>> {
        let n = self.dim;
        let h = 1.0 / steps as f64;
        let mut x: Vec<S> = p.iter().map(|&pi| w[0].lift(pi)).collect();
        let mut v: Vec<S> = w.to_vec();
        let acc = |x: &[S], v: &[S]| -> Vec<S> {
            self.gamma_contract(x, v, v).expect("analytic").into_iter().map(|a| -a).collect()
        };
        for s in 0..steps {
            let k1x = v.clone();
            let k1v = acc(&x, &v);
            let x2: Vec<S> = (0..n).map(|i| x[i].clone() + k1x[i].clone() * (0.5 * h)).collect();
            let v2: Vec<S> = (0..n).map(|i| v[i].clone() + k1v[i].clone() * (0.5 * h)).collect();
            let k2v = acc(&x2, &v2);
            let x3: Vec<S> = (0..n).map(|i| x[i].clone() + v2[i].clone() * (0.5 * h)).collect();
            let v3: Vec<S> = (0..n).map(|i| v[i].clone() + k2v[i].clone() * (0.5 * h)).collect();
            let k3v = acc(&x3, &v3);
            let x4: Vec<S> = (0..n).map(|i| x[i].clone() + v3[i].clone() * h).collect();
            let v4: Vec<S> = (0..n).map(|i| v[i].clone() + k3v[i].clone() * h).collect();
            let k4v = acc(&x4, &v4);
            for i in 0..n {
                x[i] = x[i].clone()
                    + (k1x[i].clone() + v2[i].clone() * 2.0 + v3[i].clone() * 2.0 + v4[i].clone()) * (h / 6.0);
                v[i] = v[i].clone()
                    + (k1v[i].clone() + k2v[i].clone() * 2.0 + k3v[i].clone() * 2.0 + k4v[i].clone()) * (h / 6.0);
            }
            let r2: f64 = x.iter().map(|xi| xi.value() * xi.value()).sum();
            if r2.sqrt() >= self.domain_radius {
                return Err(GeomError::DomainExceeded { time: (s + 1) as f64 * h });
            }
        }
        Ok(x)
    }

    #[allow(clippy::type_complexity)]
    fn rk4_f64(
        &self,
        p: &DVector<f64>,
        v: &DVector<f64>,
        frame: &[DVector<f64>],
        t: f64,
        steps: usize,
    ) -> Result<(DVector<f64>, DVector<f64>, Vec<DVector<f64>>)> {
        let n = self.dim;
        let m = frame.len();
        // state: x, v, frame vectors
        let mut y = vec![0.0; n * (2 + m)];
        y[..n].copy_from_slice(p.as_slice());
        y[n..2 * n].copy_from_slice(v.as_slice());
        for (a, e) in frame.iter().enumerate() {
            y[(2 + a) * n..(3 + a) * n].copy_from_slice(e.as_slice());
        }
        let rhs = |y: &[f64]| -> Result<Vec<f64>> {
            let x = &y[..n];
            let vel = &y[n..2 * n];
            let mut d = vec![0.0; y.len()];
            d[..n].copy_from_slice(vel);
            let a = self.gamma_contract_f64(x, vel, vel)?;
            for i in 0..n {
                d[n + i] = -a[i];
            }
            for b in 0..m {
                let u = &y[(2 + b) * n..(3 + b) * n];
                let c = self.gamma_contract_f64(x, vel, u)?;
                for i in 0..n {
                    d[(2 + b) * n + i] = -c[i];
                }
            }
            Ok(d)
        };
        let h = t / steps as f64;
        let axpy = |y: &[f64], k: &[f64], s: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
        for s in 0..steps {
            let k1 = rhs(&y)?;
            let k2 = rhs(&axpy(&y, &k1, 0.5 * h))?;
            let k3 = rhs(&axpy(&y, &k2, 0.5 * h))?;
            let k4 = rhs(&axpy(&y, &k3, h))?;
            for i in 0..y.len() {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let r = y[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
            if r >= self.domain_radius {
                return Err(GeomError::DomainExceeded { time: (s + 1) as f64 * h });
            }
        }
        let x = DVector::from_column_slice(&y[..n]);
        let vel = DVector::from_column_slice(&y[n..2 * n]);
        let fr = (0..m).map(|b| DVector::from_column_slice(&y[(2 + b) * n..(3 + b) * n])).collect();
        Ok((x, vel, fr))
    }

    fn blocks(&self) -> &[Block] {
        match &self.kind {
            ChartKind::Zoo { blocks, .. } => blocks,
            ChartKind::Custom(_) => &[],
        }
    }

    fn closed_form_exp<S: Scalar>(&self, p: &[f64], w: &[S]) -> Vec<S> {
        let mut out: Vec<S> = p.iter().map(|&pi| w[0].lift(pi)).collect();
        for b in self.blocks() {
            let r = b.offset..b.offset + b.dim;
            match b.kind {
                BlockKind::Euclidean => {
                    for i in r {
                        out[i] = out[i].clone() + w[i].clone();
                    }
                }
                BlockKind::SpaceForm(c) => {
                    let x = space_form_exp(c, &p[r.clone()], &w[r.clone()]);
                    for (j, i) in r.enumerate() {
                        out[i] = x[j].clone();
                    }
                }
                BlockKind::Conformal(_) => unreachable!("closed form requested for conformal block"),
            }
        }
        out
    }

    fn closed_form_transport(
        &self,
        p: &DVector<f64>,
        v: &DVector<f64>,
        frame: &[DVector<f64>],
        t: f64,
    ) -> Result<GeodesicSolution> {
        let n = self.dim;
        let mut endpoint = p.clone();
        let mut velocity = v.clone();
        let mut out_frame: Vec<DVector<f64>> = frame.to_vec();
        for b in self.blocks() {
            let r = b.offset..b.offset + b.dim;
            let pb = &p.as_slice()[r.clone()];
            let vb: Vec<f64> = v.as_slice()[r.clone()].iter().map(|x| x * t).collect();
            match b.kind {
                BlockKind::Euclidean => {
                    for (j, i) in r.clone().enumerate() {
                        endpoint[i] = pb[j] + vb[j];
                    }
                }
                BlockKind::SpaceForm(c) => {
                    let (x, vel, fr) = space_form_transport(
                        c,
                        pb,
                        &v.as_slice()[r.clone()],
                        &frame.iter().map(|e| e.as_slice()[r.clone()].to_vec()).collect::<Vec<_>>(),
                        t,
                    );
                    for (j, i) in r.clone().enumerate() {
                        endpoint[i] = x[j];
                        velocity[i] = vel[j];
                        for (a, e) in out_frame.iter_mut().enumerate() {
                            e[i] = fr[a][j];
                        }
                    }
                }
                BlockKind::Conformal(_) => unreachable!(),
            }
        }
        let r = endpoint.norm();
        if r >= self.domain_radius || !endpoint.iter().all(|x| x.is_finite()) {
            return Err(GeomError::DomainExceeded { time: t });
        }
        debug_assert_eq!(endpoint.len(), n);
        Ok(GeodesicSolution { endpoint, velocity, transported_frame: out_frame, integrator_error_estimate: 0.0 })
    }
}

fn step_count(len: f64) -> usize {
    ((STEPS_PER_UNIT * len).ceil() as usize).max(MIN_STEPS)
}

/// `cos(√u)` (or `cosh(√−u)`) and `sin(√u)/√u`, smooth through `u = 0`.
fn trig_pair<S: Scalar>(u: &S) -> (S, S) {
    let uv = u.value();
    if uv.abs() < 0.25 {
        let mut c = u.lift(0.0);
        let mut s = u.lift(0.0);
        let mut pw = u.lift(1.0);
        let mut fc = 1.0; // (2j)!
        let mut fs = 1.0; // (2j+1)!
        for j in 0..14 {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            c = c + pw.clone() * (sign / fc);
            s = s + pw.clone() * (sign / fs);
            pw = pw * u.clone();
            let a = (2 * j + 1) as f64;
            let b = (2 * j + 2) as f64;
            fc *= a * b;
            fs *= b * (b + 1.0);
        }
        (c, s)
    } else if uv > 0.0 {
        let r = u.sqrt();
        (r.cos(), r.sin() / r)
    } else {
        let r = (-u.clone()).sqrt();
        (r.cosh(), r.sinh() / r)
    }
}

/// Normalised embedding `Ŷ` of the stereographic space-form chart:
/// `B(Ŷ, Ŷ) = sign(c)` with `B = diag(1, …, 1, sign(c))`.
fn space_form_embed(c: f64, x: &[f64]) -> (Vec<f64>, f64) {
    let sq = c.abs().sqrt();
    let s = c * x.iter().map(|v| v * v).sum::<f64>() / 4.0;
    let sp = x.iter().map(|v| sq * v / (1.0 + s)).collect();
    (sp, (1.0 - s) / (1.0 + s))
}

fn space_form_push<S: Scalar>(c: f64, x: &[f64], v: &[S]) -> (Vec<S>, S) {
    let sq = c.abs().sqrt();
    let s = c * x.iter().map(|a| a * a).sum::<f64>() / 4.0;
    let xv = v.iter().zip(x).fold(v[0].zero_like(), |acc, (vi, xi)| acc + vi.clone() * *xi);
    let sp = v
        .iter()
        .zip(x)
        .map(|(vi, xi)| (vi.clone() / (1.0 + s) - xv.clone() * (c * xi / 2.0 / (1.0 + s).powi(2))) * sq)
        .collect();
    (sp, xv * (-c / (1.0 + s).powi(2)))
}

fn space_form_pull(c: f64, ysp: &[f64], y0: f64, vsp: &[f64], v0: f64) -> Vec<f64> {
    let sq = c.abs().sqrt();
    ysp.iter()
        .zip(vsp)
        .map(|(y, v)| 2.0 / sq * (v / (1.0 + y0) - y * v0 / (1.0 + y0).powi(2)))
        .collect()
}

fn space_form_exp<S: Scalar>(c: f64, p: &[f64], w: &[S]) -> Vec<S> {
    let (ysp, y0) = space_form_embed(c, p);
    let (vsp, v0) = space_form_push(c, p, w);
    let sigma = c.signum();
    let sq = c.abs().sqrt();
    let b = dot(&vsp, &vsp) + v0.clone() * v0.clone() * sigma;
    // c |w|_g^2 = sign(c) B(V̂, V̂)
    let u = b * sigma;
    let (cu, su) = trig_pair(&u);
    let zsp: Vec<S> = ysp.iter().zip(&vsp).map(|(y, v)| cu.clone() * *y + su.clone() * v.clone()).collect();
    let z0 = cu * y0 + su * v0;
    let denom = (z0 + 1.0) * sq;
    zsp.into_iter().map(|z| z * 2.0 / denom.clone()).collect()
}

#[allow(clippy::type_complexity)]
fn space_form_transport(
    c: f64,
    p: &[f64],
    v: &[f64],
    frame: &[Vec<f64>],
    t: f64,
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let sigma = c.signum();
    let (ysp, y0) = space_form_embed(c, p);
    let (vsp, v0) = space_form_push(c, p, v);
    let vn = (vsp.iter().map(|a| a * a).sum::<f64>() + sigma * v0 * v0).sqrt();
    let theta = vn * t;
    let (ct, st) = if sigma > 0.0 { (theta.cos(), theta.sin()) } else { (theta.cosh(), theta.sinh()) };
    let bform = |asp: &[f64], a0: f64, bsp: &[f64], b0: f64| -> f64 {
        asp.iter().zip(bsp).map(|(x, y)| x * y).sum::<f64>() + sigma * a0 * b0
    };
    let (zsp, z0): (Vec<f64>, f64) = if vn > 0.0 {
        (
            ysp.iter().zip(&vsp).map(|(y, w)| ct * y + st / vn * w).collect(),
            ct * y0 + st / vn * v0,
        )
    } else {
        (ysp.clone(), y0)
    };
    let transport = |u: &[f64]| -> Vec<f64> {
        let (usp, u0) = space_form_push(c, p, u);
        if vn == 0.0 {
            return space_form_pull(c, &zsp, z0, &usp, u0);
        }
        let hsp: Vec<f64> = vsp.iter().map(|w| w / vn).collect();
        let h0 = v0 / vn;
        let a = bform(&usp, u0, &hsp, h0);
        let k = -sigma * st;
        let tsp: Vec<f64> = (0..usp.len()).map(|i| usp[i] + a * ((ct - 1.0) * hsp[i] + k * ysp[i])).collect();
        let t0 = u0 + a * ((ct - 1.0) * h0 + k * y0);
        space_form_pull(c, &zsp, z0, &tsp, t0)
    };
    let x: Vec<f64> = {
        let sq = c.abs().sqrt();
        zsp.iter().map(|z| 2.0 * z / (sq * (1.0 + z0))).collect()
    };
    let vel = transport(v);
    let fr = frame.iter().map(|e| transport(e)).collect();
    (x, vel, fr)
}

/// Tensor-product central-difference stencil for `∂^α` (second-order accurate),
/// as `(integer offsets, weight)` pairs, weights already divided by nothing
/// (caller divides by `h^|α|`).
fn stencil_product(alpha: &[u8]) -> Vec<(Vec<i32>, f64)> {
    let one_d = |e: u8| -> Vec<(i32, f64)> {
        match e {
            0 => vec![(0, 1.0)],
            1 => vec![(-1, -0.5), (1, 0.5)],
            2 => vec![(-1, 1.0), (0, -2.0), (1, 1.0)],
            3 => vec![(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
            4 => vec![(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
            _ => panic!("stencil order {e} not supported"),
        }
    };
    let mut out: Vec<(Vec<i32>, f64)> = vec![(Vec::new(), 1.0)];
    for &e in alpha {
        let mut next = Vec::new();
        for (offs, w) in &out {
            for (o, wo) in one_d(e) {
                let mut no = offs.clone();
                no.push(o);
                next.push((no, w * wo));
            }
        }
        out = next;
    }
    out
}

pub fn coordinate_basis(n: usize) -> Vec<DVector<f64>> {
    (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })).collect()
}

/// Gram–Schmidt in fixed index order w.r.t. `g(x)`, positive-diagonal convention.
pub fn orthonormalize(chart: &MetricChart, x: &[f64], vectors: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let g = chart.metric(x);
    gram_schmidt_with(&g, vectors, &[])
}

/// Gram–Schmidt of `vectors` against the already orthonormal `against` and
/// each other, using inner product `g`.
pub fn gram_schmidt_with(
    g: &DMatrix<f64>,
    vectors: &[DVector<f64>],
    against: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let ip = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * g * b)[(0, 0)];
    let mut basis: Vec<DVector<f64>> = against.to_vec();
    let mut out = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = ip(b, &w);
                w -= b * c;
            }
        }
        let nrm = ip(&w, &w).sqrt();
        if !(nrm > 1e-12 * ip(v, v).sqrt().max(1e-300)) {
            return Err(GeomError::Conditioning("linearly dependent vectors in Gram-Schmidt".into()));
        }
        w /= nrm;
        basis.push(w.clone());
        out.push(w);
    }
    Ok(out)
}

/// Maximum deviation of the Gram matrix of `frame` from the identity.
pub fn frame_deviation(chart: &MetricChart, x: &[f64], frame: &[DVector<f64>]) -> f64 {
    let g = chart.metric(x);
    let mut dev: f64 = 0.0;
    for (i, a) in frame.iter().enumerate() {
        for (j, b) in frame.iter().enumerate() {
            let v = (a.transpose() * &g * b)[(0, 0)];
            dev = dev.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    dev
}

fn parse_scheme(v: &Value) -> Result<DerivativeScheme> {
    match v {
        Value::String(s) if s == "analytic" => Ok(DerivativeScheme::Analytic),
        Value::String(s) if s == "finite_difference" => {
            Ok(DerivativeScheme::FiniteDifference { steps: DEFAULT_FD_STEPS })
        }
        Value::Object(m) if m.contains_key("finite_difference") => {
            let arr = m["finite_difference"]
                .as_array()
                .filter(|a| a.len() == 4)
                .ok_or_else(|| GeomError::Config("field `scheme.finite_difference` must list 4 steps".into()))?;
            let mut steps = [0.0; 4];
            for (s, a) in steps.iter_mut().zip(arr) {
                *s = a
                    .as_f64()
                    .filter(|h| *h > 0.0)
                    .ok_or_else(|| GeomError::Config("finite-difference steps must be positive numbers".into()))?;
            }
            Ok(DerivativeScheme::FiniteDifference { steps })
        }
        _ => Err(GeomError::Config("field `scheme` must be \"analytic\" or \"finite_difference\"".into())),
    }
}

fn parse_entry(metric: &Value, dim: usize) -> Result<MetricZooEntry> {
    let name = metric
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| GeomError::Config("field `metric.name` missing or not a string".into()))?;
    let empty = Value::Object(Default::default());
    let params = metric.get("params").unwrap_or(&empty);
    match name {
        "euclidean" => Ok(MetricZooEntry::Euclidean),
        "space_form" => {
            let c = params
                .get("c")
                .and_then(Value::as_f64)
                .ok_or_else(|| GeomError::Config("field `metric.params.c` missing or not a number".into()))?;
            Ok(MetricZooEntry::SpaceForm { c })
        }
        "conformal" => {
            let f = params
                .get("f")
                .and_then(Value::as_object)
                .ok_or_else(|| GeomError::Config("field `metric.params.f` missing or not an object".into()))?;
            let mut terms: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            for (k, v) in f {
                let e: std::result::Result<Vec<u32>, _> = k.split(',').map(|s| s.trim().parse::<u32>()).collect();
                let e = e.map_err(|_| GeomError::Config(format!("field `metric.params.f`: bad monomial key {k:?}")))?;
                let c = v
                    .as_f64()
                    .ok_or_else(|| GeomError::Config(format!("field `metric.params.f.{k}` is not a number")))?;
                *terms.entry(e).or_insert(0.0) += c;
            }
            Ok(MetricZooEntry::Conformal { f: RealPoly::new(dim, terms.into_iter().collect())? })
        }
        "product" => {
            let factors = params
                .get("factors")
                .and_then(Value::as_array)
                .ok_or_else(|| GeomError::Config("field `metric.params.factors` missing or not an array".into()))?;
            let mut out = Vec::new();
            for (i, f) in factors.iter().enumerate() {
                let d = f
                    .get("dim")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| GeomError::Config(format!("field `metric.params.factors[{i}].dim` missing")))?
                    as usize;
                let m = f
                    .get("metric")
                    .ok_or_else(|| GeomError::Config(format!("field `metric.params.factors[{i}].metric` missing")))?;
                out.push((parse_entry(m, d)?, d));
            }
            Ok(MetricZooEntry::Product { factors: out })
        }
        other => Err(GeomError::Config(format!("field `metric.name`: unknown metric {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn euclidean_geodesic_is_straight() {
        let ch = MetricChart::euclidean(3);
        let sol = ch.geodesic(&dv(&[0.1, 0.2, 0.3]), &dv(&[1.0, -1.0, 0.5]), 0.7).unwrap();
        assert!((sol.endpoint - dv(&[0.8, -0.5, 0.65])).amax() < 1e-15);
    }

    #[test]
    fn space_form_exp_has_closed_form_distance() {
        for c in [1.0, -1.0, 0.5] {
            let ch = MetricChart::space_form(c, 3);
            let w = dv(&[0.3, -0.2, 0.1]);
            let x = ch.exp_map(&dv(&[0.0, 0.0, 0.0]), &w).unwrap();
            // distance from origin in the stereographic chart
            let rho = x.norm();
            let sq = f64::sqrt(c.abs());
            let d = if c > 0.0 { 2.0 / sq * (sq * rho / 2.0).atan() } else { 2.0 / sq * (sq * rho / 2.0).atanh() };
            assert!((d - w.norm()).abs() < 1e-14, "c={c}: {d} vs {}", w.norm());
            // direction preserved from the origin
            assert!((x.normalize() - w.normalize()).amax() < 1e-14);
        }
    }

    #[test]
    fn closed_form_and_rk4_agree_off_origin() {
        let c = 1.0;
        let ch = MetricChart::space_form(c, 3);
        let p = dv(&[0.2, -0.1, 0.05]);
        let w = dv(&[0.1, 0.25, -0.15]);
        let closed = ch.exp_map(&p, &w).unwrap();
        // integrate the same metric with RK4 by forcing a finite-difference scheme
        let fd = ch.clone().with_scheme(DerivativeScheme::FiniteDifference { steps: DEFAULT_FD_STEPS }).unwrap();
        let sol = fd.rk4_f64(&p, &w, &[], 1.0, 400).unwrap();
        assert!((closed - sol.0).amax() < 1e-9);
    }

    #[test]
    fn taylor_matches_fd_for_conformal() {
        let ch = MetricChart::conformal(2, vec![(vec![2, 1], 0.3), (vec![0, 2], -0.5), (vec![1, 0], 0.2)]).unwrap();
        let p = [0.1, -0.2];
        let exact = ch.metric_taylor(&p, 4).unwrap();
        let fd = ch
            .clone()
            .with_scheme(DerivativeScheme::FiniteDifference { steps: DEFAULT_FD_STEPS })
            .unwrap()
            .metric_taylor(&p, 4)
            .unwrap();
        for (a, b) in exact.iter().zip(&fd) {
            for (x, y) in a.coefficients().iter().zip(b.coefficients()) {
                assert!((x - y).abs() < 2e-5, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn json_roundtrip() {
        let v: Value = serde_json::from_str(
            r#"{"metric": {"name": "conformal", "params": {"f": {"2,0,0": -1.0, "0,0,1": 0.5}}}, "dim": 3}"#,
        )
        .unwrap();
        let ch = MetricChart::from_json(&v).unwrap();
        let back = ch.zoo_entry().unwrap().to_json(3);
        let ch2 = MetricChart::from_json(&back).unwrap();
        assert_eq!(ch.zoo_entry(), ch2.zoo_entry());
        let bad: Value = serde_json::from_str(r#"{"metric": {"name": "space_form", "params": {}}, "dim": 3}"#).unwrap();
        let err = MetricChart::from_json(&bad).unwrap_err();
        assert!(err.to_string().contains("metric.params.c"));
    }
}
