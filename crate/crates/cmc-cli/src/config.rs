use std::collections::BTreeMap;
use std::path::PathBuf;

use cmc_lab::expansion::SweepSpec;
use cmc_lab::grassmann::GrassmannPoint;
use cmc_lab::metric::{coordinate_basis, orthonormalize, MetricChart};
use cmc_lab::quadrature::{RuleOrders, GL_ORDER};
use cmc_lab::submanifold::{JetScheme, SurfaceOptions};
use cmc_lab::{GeomError, Result};
use nalgebra::DVector;
use serde_json::Value;

const KNOWN_FIELDS: &[&str] = &[
    "metric",
    "dim",
    "scheme",
    "domain_radius",
    "scale",
    "k",
    "point",
    "frame_seed",
    "eps_sweep",
    "tolerances",
    "output_dir",
    "rng_seed",
    "seed_params",
    "psi_eps",
    "l_max",
    "radii",
    "quadrature",
];

/// Acceptance thresholds used by `verify`; every entry can be overridden
/// from the `tolerances` map.
#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub symmetry: f64,
    pub moments: f64,
    pub sphere_slope: f64,
    pub ball_slope: f64,
    pub energy_slope: f64,
    pub normal_coords_slope: f64,
    pub kernel_slope_min: Option<f64>,
    pub kernel_slope_max: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            symmetry: 1e-10,
            moments: 1e-10,
            sphere_slope: 1.9,
            ball_slope: 1.9,
            energy_slope: 4.75,
            normal_coords_slope: 4.75,
            kernel_slope_min: None,
            kernel_slope_max: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FrameSeed {
    Coordinate,
    Random,
    Vectors(Vec<Vec<f64>>),
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub chart: MetricChart,
    pub k: usize,
    pub point: Vec<f64>,
    pub frame_seed: FrameSeed,
    pub sweep: SweepSpec,
    pub tolerances: Tolerances,
    pub output_dir: Option<PathBuf>,
    pub rng_seed: u64,
    pub seed_params: Option<Vec<f64>>,
    pub psi_eps: Option<f64>,
    pub l_max: u32,
    pub radii: Vec<f64>,
    pub surface: SurfaceOptions,
}

fn cfg(msg: impl Into<String>) -> GeomError {
    GeomError::Config(msg.into())
}

fn number(v: &Value, field: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| cfg(format!("field `{field}` must be a number")))
}

fn integer(v: &Value, field: &str) -> Result<u64> {
    v.as_u64().ok_or_else(|| cfg(format!("field `{field}` must be a non-negative integer")))
}

fn numbers(v: &Value, field: &str) -> Result<Vec<f64>> {
    let arr = v.as_array().ok_or_else(|| cfg(format!("field `{field}` must be an array of numbers")))?;
    arr.iter().enumerate().map(|(i, x)| number(x, &format!("{field}[{i}]"))).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| cfg(format!("malformed JSON: {e}")))?;
        Self::from_value(&v)
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| cfg("configuration must be a JSON object"))?;
        for key in obj.keys() {
            if !KNOWN_FIELDS.contains(&key.as_str()) {
                return Err(cfg(format!("unknown field `{key}`")));
            }
        }
        let chart = MetricChart::from_json(v)?;
        let m = chart.dim();
        let k = integer(v.get("k").ok_or_else(|| cfg("field `k` missing"))?, "k")? as usize;
        if k == 0 || k + 1 > m {
            return Err(cfg(format!("field `k` must satisfy 1 <= k <= dim - 1, got {k}")));
        }
        let point = match v.get("point") {
            Some(p) => numbers(p, "point")?,
            None => vec![0.0; m],
        };
        if point.len() != m {
            return Err(cfg(format!("field `point` has {} entries, expected {m}", point.len())));
        }
        let frame_seed = match v.get("frame_seed") {
            None | Some(Value::Null) => FrameSeed::Coordinate,
            Some(Value::String(s)) if s == "coordinate" => FrameSeed::Coordinate,
            Some(Value::String(s)) if s == "random" => FrameSeed::Random,
            Some(Value::Array(rows)) => {
                let vecs = rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| numbers(r, &format!("frame_seed[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                if vecs.len() != m || vecs.iter().any(|r| r.len() != m) {
                    return Err(cfg(format!("field `frame_seed` must be {m} vectors of length {m}")));
                }
                FrameSeed::Vectors(vecs)
            }
            Some(_) => return Err(cfg("field `frame_seed` must be \"coordinate\", \"random\" or a list of vectors")),
        };
        let sweep = match v.get("eps_sweep") {
            None => SweepSpec::default(),
            Some(s) => parse_sweep(s)?,
        };
        let tolerances = match v.get("tolerances") {
            None => Tolerances::default(),
            Some(t) => parse_tolerances(t)?,
        };
        let output_dir = match v.get("output_dir") {
            None => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => return Err(cfg("field `output_dir` must be a string")),
        };
        let rng_seed = match v.get("rng_seed") {
            None => 0,
            Some(s) => integer(s, "rng_seed")?,
        };
        let seed_params = v.get("seed_params").map(|s| numbers(s, "seed_params")).transpose()?;
        let psi_eps = v.get("psi_eps").map(|s| number(s, "psi_eps")).transpose()?;
        if let Some(e) = psi_eps {
            if !(e > 0.0) {
                return Err(cfg("field `psi_eps` must be positive"));
            }
        }
        let l_max = match v.get("l_max") {
            None => 6,
            Some(s) => integer(s, "l_max")? as u32,
        };
        let radii = match v.get("radii") {
            None => vec![0.16, 0.08, 0.04, 0.02],
            Some(r) => numbers(r, "radii")?,
        };
        let surface = match v.get("quadrature") {
            None => SurfaceOptions::default(),
            Some(q) => parse_quadrature(q)?,
        };
        Ok(RunConfig {
            chart,
            k,
            point,
            frame_seed,
            sweep,
            tolerances,
            output_dir,
            rng_seed,
            seed_params,
            psi_eps,
            l_max,
            radii,
            surface,
        })
    }

    /// Replaces the sweep with `count` geometric values between the bounds,
    /// filling in missing bounds from the configured sweep.
    pub fn override_sweep(&mut self, min: Option<f64>, max: Option<f64>, count: Option<usize>) -> Result<()> {
        if min.is_none() && max.is_none() && count.is_none() {
            return Ok(());
        }
        let e = &self.sweep.eps_list;
        let max = max.unwrap_or(e[0]);
        let min = min.unwrap_or(e[e.len() - 1]);
        let count = count.unwrap_or(e.len());
        let skip = self.sweep.skip_largest.min(count.saturating_sub(2));
        let mut s = SweepSpec::geometric(max, min, count)?;
        s.skip_largest = skip;
        s.validate()?;
        self.sweep = s;
        Ok(())
    }

    pub fn grassmann_point(&self) -> Result<GrassmannPoint> {
        let m = self.chart.dim();
        self.chart.check_inside(&self.point)?;
        let p = DVector::from_column_slice(&self.point);
        let raw: Vec<DVector<f64>> = match &self.frame_seed {
            FrameSeed::Coordinate => coordinate_basis(m),
            FrameSeed::Vectors(rows) => rows.iter().map(|r| DVector::from_column_slice(r)).collect(),
            FrameSeed::Random => {
                let mut rng = cmc_lab::rng::seeded(self.rng_seed);
                let q = cmc_lab::rng::random_orthogonal(&mut rng, m);
                (0..m).map(|j| q.column(j).into_owned()).collect()
            }
        };
        let frame = orthonormalize(&self.chart, &self.point, &raw)?;
        GrassmannPoint::new(&self.chart, p, frame, self.k)
    }
}

fn parse_sweep(v: &Value) -> Result<SweepSpec> {
    let skip = match v.get("skip_largest") {
        None => 2,
        Some(s) => integer(s, "eps_sweep.skip_largest")? as usize,
    };
    let mut s = if let Some(list) = v.get("eps_list") {
        SweepSpec { eps_list: numbers(list, "eps_sweep.eps_list")?, skip_largest: skip }
    } else {
        let max = number(v.get("max").ok_or_else(|| cfg("field `eps_sweep.max` missing"))?, "eps_sweep.max")?;
        let min = number(v.get("min").ok_or_else(|| cfg("field `eps_sweep.min` missing"))?, "eps_sweep.min")?;
        let count =
            integer(v.get("count").ok_or_else(|| cfg("field `eps_sweep.count` missing"))?, "eps_sweep.count")?;
        SweepSpec::geometric(max, min, count as usize)
            .map_err(|e| cfg(format!("field `eps_sweep`: {e}")))?
    };
    s.skip_largest = skip;
    s.validate().map_err(|e| cfg(format!("field `eps_sweep`: {e}")))?;
    Ok(s)
}

fn parse_tolerances(v: &Value) -> Result<Tolerances> {
    let obj = v.as_object().ok_or_else(|| cfg("field `tolerances` must be an object"))?;
    let mut t = Tolerances::default();
    let map: BTreeMap<&str, &Value> = obj.iter().map(|(k, v)| (k.as_str(), v)).collect();
    for (key, val) in map {
        let field = format!("tolerances.{key}");
        let x = number(val, &field)?;
        match key {
            "symmetry" => t.symmetry = x,
            "moments" => t.moments = x,
            "sphere_slope" => t.sphere_slope = x,
            "ball_slope" => t.ball_slope = x,
            "energy_slope" => t.energy_slope = x,
            "normal_coords_slope" => t.normal_coords_slope = x,
            "kernel_slope_min" => t.kernel_slope_min = Some(x),
            "kernel_slope_max" => t.kernel_slope_max = Some(x),
            _ => return Err(cfg(format!("unknown field `{field}`"))),
        }
    }
    Ok(t)
}

fn parse_quadrature(v: &Value) -> Result<SurfaceOptions> {
    let obj = v.as_object().ok_or_else(|| cfg("field `quadrature` must be an object"))?;
    let mut orders = RuleOrders::default();
    let mut radial = GL_ORDER;
    let mut scheme = JetScheme::Auto;
    for (key, val) in obj {
        let field = format!("quadrature.{key}");
        match key.as_str() {
            "s1_nodes" => orders.s1_nodes = integer(val, &field)? as usize,
            "azimuth" => orders.azimuth = integer(val, &field)? as usize,
            "gl" => orders.gl = integer(val, &field)? as usize,
            "radial" => radial = integer(val, &field)? as usize,
            "jet_fd_step" => scheme = JetScheme::FiniteDifference { h: number(val, &field)? },
            _ => return Err(cfg(format!("unknown field `{field}`"))),
        }
    }
    Ok(SurfaceOptions { orders, radial, scheme, grid_rotation: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{"metric": {"name": "euclidean"}, "dim": 3, "k": 1}"#;

    #[test]
    fn defaults() {
        let c = RunConfig::parse(BASE).unwrap();
        assert_eq!(c.point, vec![0.0; 3]);
        assert_eq!(c.frame_seed, FrameSeed::Coordinate);
        assert_eq!(c.sweep.eps_list.len(), 8);
        assert_eq!(c.l_max, 6);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = r#"{"metric": {"name": "euclidean"}, "dim": 3, "k": "one"}"#;
        assert!(RunConfig::parse(bad).unwrap_err().to_string().contains("`k`"));
        let bad = r#"{"metric": {"name": "euclidean"}, "dim": 3, "k": 1, "tolerances": {"sphere": 1}}"#;
        assert!(RunConfig::parse(bad).unwrap_err().to_string().contains("tolerances.sphere"));
        let bad = r#"{"metric": {"name": "euclidean"}, "dim": 3, "k": 1, "colour": 1}"#;
        assert!(RunConfig::parse(bad).unwrap_err().to_string().contains("colour"));
    }

    #[test]
    fn sweep_override() {
        let mut c = RunConfig::parse(BASE).unwrap();
        c.override_sweep(Some(0.025), Some(0.1), Some(4)).unwrap();
        assert_eq!(c.sweep.eps_list.first(), Some(&0.1));
        assert_eq!(c.sweep.eps_list.last(), Some(&0.025));
    }

    #[test]
    fn random_frame_is_reproducible() {
        let text = r#"{"metric": {"name": "euclidean"}, "dim": 3, "k": 1, "frame_seed": "random", "rng_seed": 9}"#;
        let a = RunConfig::parse(text).unwrap().grassmann_point().unwrap();
        let b = RunConfig::parse(text).unwrap().grassmann_point().unwrap();
        assert_eq!(a.frame, b.frame);
    }
}
