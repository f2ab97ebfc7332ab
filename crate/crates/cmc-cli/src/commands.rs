use std::fs;
use std::path::{Path, PathBuf};

use cmc_lab::curvature::{curvature_at, normal_coordinate_expansion_check, Depth, ExpansionTruncation};
use cmc_lab::expansion::{
    ball_curvature_sweep, energy, energy_sweep, kernel_mode_sweep, moment_identities, sphere_curvature_sweep, ResidualSweep,
};
use cmc_lab::grassmann::{find_critical, invariants, psi, retract, CriticalOptions};
use cmc_lab::model::{combined_kernel_dimension, model_spectra, ModelOperator};
use cmc_lab::quadrature::sphere_volume;
use cmc_lab::report::{csv, fmt_f64};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Which {
    Sphere,
    Ball,
    Energy,
    Moments,
    NormalCoords,
    Spectra,
    KernelModes,
}

impl Which {
    fn name(self) -> &'static str {
        match self {
            Which::Sphere => "sphere",
            Which::Ball => "ball",
            Which::Energy => "energy",
            Which::Moments => "moments",
            Which::NormalCoords => "normal_coords",
            Which::Spectra => "spectra",
            Which::KernelModes => "kernel_modes",
        }
    }
}

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::Io(dir.clone(), e))?;
        Ok(Output { dir })
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(path, e))
    }

    fn write_json(&self, name: &str, v: &Value) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(v).expect("json values serialise");
        s.push('\n');
        self.write(name, &s)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

pub fn curvature(cfg: &RunConfig, out: &Output) -> Result<Value, CliError> {
    let gp = cfg.grassmann_point()?;
    let cd = curvature_at(&cfg.chart, &gp.p, &gp.frame, Depth::Second)?;
    let n = cd.dim;
    let mut rows = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    rows.push(vec![
                        i.to_string(),
                        j.to_string(),
                        k.to_string(),
                        l.to_string(),
                        fmt_f64(cd.r(i, j, k, l)),
                    ]);
                }
            }
        }
    }
    out.write("riemann.csv", &csv(&["i", "j", "k", "l", "value"], &rows))?;
    let (anti, pair, bianchi) = cd.symmetry_defects();
    let worst = anti.max(pair).max(bianchi);
    let status = if worst <= cfg.tolerances.symmetry { "pass" } else { "fail" };
    let summary = json!({
        "dim": n,
        "point": gp.p.as_slice(),
        "frame": gp.frame.iter().map(|e| e.as_slice().to_vec()).collect::<Vec<_>>(),
        "convention_sign": cd.convention_sign,
        "scalar_curvature": cd.scalar_curvature(),
        "riemann": cd.r,
        "nabla_riemann": cd.dr,
        "symmetry": {
            "antisymmetry": anti,
            "pair_symmetry": pair,
            "first_bianchi": bianchi,
            "tolerance": cfg.tolerances.symmetry,
            "status": status,
        },
    });
    out.write_json("curvature.json", &summary)?;
    Ok(json!({ "command": "curvature", "symmetry": status, "scalar_curvature": cd.scalar_curvature() }))
}

pub fn invariants_cmd(cfg: &RunConfig, out: &Output) -> Result<Value, CliError> {
    let gp = cfg.grassmann_point()?;
    let mut inv = invariants(&cfg.chart, &gp)?;
    if let Some(eps) = cfg.psi_eps {
        let e = energy(&cfg.chart, &gp, eps, &cfg.surface)?;
        inv.psi = Some((eps, psi(e.energy, eps, gp.k, sphere_volume(gp.k))?));
    }
    let v = json!({ "grassmann_point": gp.to_json(), "invariants": serde_json::to_value(&inv).expect("serialisable") });
    out.write_json("invariants.json", &v)?;
    Ok(json!({ "command": "invariants", "scalar_k1": inv.scalar_k1, "r_invariant": inv.r_invariant }))
}

pub fn find_critical_cmd(cfg: &RunConfig, out: &Output) -> Result<Value, CliError> {
    let base = cfg.grassmann_point()?;
    let seed = match &cfg.seed_params {
        Some(params) => retract(&cfg.chart, &base, params)?,
        None => base,
    };
    let res = find_critical(&cfg.chart, &seed, &CriticalOptions::default())?;
    let inv = invariants(&cfg.chart, &res.point)?;
    out.write_json("critical_point.json", &res.to_json(Some(&inv)))?;
    Ok(json!({
        "command": "find-critical",
        "gradient_norm": res.gradient_norm,
        "nondegenerate": res.nondegenerate,
    }))
}

fn slope_check(sweep: &ResidualSweep, min: f64) -> (Option<f64>, bool) {
    let slope = sweep.fit.slope();
    // Residuals entirely at the noise floor mean the expansion is exact.
    let pass = match slope {
        Some(s) => s >= min,
        None => sweep.rows.iter().all(|r| r.residual.abs() <= cmc_lab::expansion::FIT_FLOOR),
    };
    (slope, pass)
}

pub fn verify(cfg: &RunConfig, which: Which, out: &Output) -> Result<(Value, bool), CliError> {
    let tol = &cfg.tolerances;
    let (details, pass) = match which {
        Which::Sphere | Which::Ball => {
            let gp = cfg.grassmann_point()?;
            let (sweep, min) = if which == Which::Sphere {
                (sphere_curvature_sweep(&cfg.chart, &gp, &cfg.sweep, &cfg.surface)?, tol.sphere_slope)
            } else {
                (ball_curvature_sweep(&cfg.chart, &gp, &cfg.sweep, &cfg.surface)?, tol.ball_slope)
            };
            out.write(&format!("{}_sweep.csv", which.name()), &sweep.to_csv())?;
            let (slope, pass) = slope_check(&sweep, min);
            (json!({ "slope": slope, "min_slope": min }), pass)
        }
        Which::Energy => {
            let gp = cfg.grassmann_point()?;
            let sweep = energy_sweep(&cfg.chart, &gp, &cfg.sweep, &cfg.surface)?;
            out.write("energy_sweep.csv", &sweep.to_csv())?;
            let slope = sweep.residual_fit.slope();
            let pass = match slope {
                Some(s) => s >= tol.energy_slope,
                None => sweep.rows.iter().all(|r| r.residual.abs() <= cmc_lab::expansion::FIT_FLOOR),
            };
            let d = 2.0 * (gp.k as f64 + 3.0);
            (
                json!({
                    "slope": slope,
                    "min_slope": tol.energy_slope,
                    "eps2_coefficients": sweep.eps2_coefficients,
                    "eps4_coefficients": sweep.eps4_coefficients,
                    "eps4_extrapolated": sweep.eps4_extrapolated,
                    "eps4_expected": sweep.r_invariant / d,
                    "scalar_k1": sweep.scalar_k1,
                    "r_invariant": sweep.r_invariant,
                }),
                pass,
            )
        }
        Which::Moments => {
            let checks = moment_identities(cfg.k, cfg.rng_seed)?;
            let rows: Vec<Vec<String>> = checks
                .iter()
                .map(|c| {
                    vec![c.identity_id.clone(), fmt_f64(c.quadrature_value), fmt_f64(c.closed_form), fmt_f64(c.abs_error)]
                })
                .collect();
            out.write("moments.csv", &csv(&["identity_id", "quadrature_value", "closed_form", "abs_error"], &rows))?;
            let worst = checks.iter().map(|c| c.abs_error).fold(0.0, f64::max);
            (json!({ "max_abs_error": worst, "tolerance": tol.moments }), worst < tol.moments)
        }
        Which::NormalCoords => {
            let gp = cfg.grassmann_point()?;
            let rep = normal_coordinate_expansion_check(
                &cfg.chart,
                &gp.p,
                &gp.frame,
                &cfg.radii,
                ExpansionTruncation::Quartic,
            )?;
            out.write("normal_coords.csv", &rep.to_csv())?;
            let min = rep.min_slope();
            let pass = match min {
                Some(s) => s >= tol.normal_coords_slope,
                None => rep.rows.iter().all(|r| r.residual <= cmc_lab::fit::NOISE_FLOOR),
            };
            (json!({ "min_slope": min, "required": tol.normal_coords_slope }), pass)
        }
        Which::Spectra => {
            let k = cfg.k as u32;
            let tables = model_spectra(k, cfg.l_max)?;
            let mut pass = true;
            for t in &tables {
                for r in &t.rows {
                    pass &= r.eigenvalue == t.operator.closed_form(k, r.degree)
                        && r.multiplicity == cmc_lab::model::harmonic_dimension(k, r.degree);
                }
            }
            let jpar = tables.iter().find(|t| t.operator == ModelOperator::JParallel).expect("table");
            pass &= jpar.kernel_dimension() == cfg.k + 1;
            let codim = cfg.chart.dim() - cfg.k - 1;
            let combined_kernel = combined_kernel_dimension(&tables, codim);
            pass &= combined_kernel == codim * (cfg.k + 2);
            let v = json!({
                "k": k,
                "l_max": cfg.l_max,
                "tables": tables.iter().map(|t| t.to_json()).collect::<Vec<_>>(),
                "combined_kernel_dimension": combined_kernel,
            });
            out.write_json("spectra.json", &v)?;
            (json!({ "combined_kernel_dimension": combined_kernel }), pass)
        }
        Which::KernelModes => {
            let gp = cfg.grassmann_point()?;
            let sweep = kernel_mode_sweep(&cfg.chart, &gp, &cfg.sweep, &cfg.surface)?;
            out.write("kernel_modes.csv", &sweep.to_csv())?;
            let slope = sweep.fit.slope();
            let at_floor = sweep.rows.iter().all(|r| r.residual.abs() <= cmc_lab::expansion::FIT_FLOOR);
            let mut pass = true;
            if let Some(min) = tol.kernel_slope_min {
                pass &= slope.map_or(at_floor, |s| s >= min);
            }
            if let Some(max) = tol.kernel_slope_max {
                pass &= slope.is_some_and(|s| s <= max);
            }
            (json!({ "slope": slope, "min_slope": tol.kernel_slope_min, "max_slope": tol.kernel_slope_max }), pass)
        }
    };
    let summary = json!({
        "command": "verify",
        "which": which.name(),
        "eps_list": cfg.sweep.eps_list,
        "details": details,
        "status": if pass { "pass" } else { "fail" },
    });
    out.write_json(&format!("verify_{}.json", which.name()), &summary)?;
    Ok((summary, pass))
}
