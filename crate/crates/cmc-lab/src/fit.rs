//! Least-squares fits used by every order and coefficient check.

use serde::Serialize;

/// Residuals at or below this magnitude are treated as noise.
pub const NOISE_FLOOR: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(x_i, y_i)`; `None` with fewer than two points.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LineFit { slope, intercept, r_squared })
}

/// Fit of `log|r|` against `log h`, ignoring residuals at or below `floor`.
pub fn fit_loglog(hs: &[f64], rs: &[f64], floor: f64) -> Option<LineFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = hs
        .iter()
        .zip(rs)
        .filter(|(_, r)| r.abs() > floor)
        .map(|(h, r)| (h.ln(), r.abs().ln()))
        .unzip();
    fit_line(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let hs = [0.1, 0.05, 0.025, 0.0125];
        let rs: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powi(3)).collect();
        let f = fit_loglog(&hs, &rs, NOISE_FLOOR).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn noise_floor_drops_points() {
        assert!(fit_loglog(&[0.1, 0.05], &[0.0, 1e-16], NOISE_FLOOR).is_none());
    }
}
