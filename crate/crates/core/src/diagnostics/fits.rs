//! Least-squares fits of trajectory tails.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::timestep::Trajectory;

/// Ordinary least squares `y = intercept + slope · x` with parameter covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub var_slope: f64,
    pub var_intercept: f64,
    pub cov: f64,
    pub n: usize,
}

impl LinearFit {
    pub fn stderr_slope(&self) -> f64 {
        self.var_slope.max(0.0).sqrt()
    }
}

/// `None` with fewer than two points or no spread in `x`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<LinearFit> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) || !sxy.is_finite() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points
        .iter()
        .map(|p| {
            let r = p.1 - intercept - slope * p.0;
            r * r
        })
        .sum();
    let s2 = if n > 2 { sse / (nf - 2.0) } else { 0.0 };
    let var_slope = s2 / sxx;
    Some(LinearFit {
        slope,
        intercept,
        var_slope,
        var_intercept: s2 * (1.0 / nf + mx * mx / sxx),
        cov: -mx * var_slope,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub stderr: f64,
    pub points: usize,
}

fn window_points(traj: &Trajectory, window: (f64, f64)) -> Vec<(f64, f64)> {
    traj.samples.iter().filter(|s| s.t >= window.0 && s.t <= window.1).map(|s| (s.t, s.sup_abs_u)).collect()
}

fn fit_transformed(pts: Vec<(f64, f64)>, log_t: bool) -> Result<ExponentFit> {
    if pts.len() < 5 {
        return Err(Error::Fit(format!("need at least 5 samples in the window, got {}", pts.len())));
    }
    if pts.iter().any(|&(t, u)| !(u > 0.0) || (log_t && !(t > 0.0))) {
        return Err(Error::Fit("sup|u| and t must be positive inside the window".into()));
    }
    let xy: Vec<(f64, f64)> = pts.iter().map(|&(t, u)| (if log_t { t.ln() } else { t }, u.ln())).collect();
    let fit = linear_fit(&xy).ok_or_else(|| Error::Fit("degenerate fit window".into()))?;
    Ok(ExponentFit { exponent: fit.slope, stderr: fit.stderr_slope(), points: fit.n })
}

/// Slope of `ln sup|u|` against `ln t` over `window`.
pub fn decay_exponent_fit(traj: &Trajectory, window: (f64, f64)) -> Result<ExponentFit> {
    fit_transformed(window_points(traj, window), true)
}

/// Slope of `ln sup|u|` against `t` over `window` (negative for decay).
pub fn exponential_rate_fit(traj: &Trajectory, window: (f64, f64)) -> Result<ExponentFit> {
    fit_transformed(window_points(traj, window), false)
}

/// Fitted coefficients of the comparison inequality
/// `g' ≥ -λ g + C a(t) g^σ` along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonFit {
    pub lambda1: f64,
    pub c: f64,
    pub points: usize,
    /// Last time used in the fit.
    pub t_window_end: f64,
}

/// Fits `C` (and `λ` when `lambda1` is `None`) from the early part of the
/// `g` record: the first 5% of the recorded time span or until `g` has
/// grown by 10%, whichever comes first, with at least five points.
/// `forcing(t)` multiplies `g^σ`.
pub fn fit_comparison(
    traj: &Trajectory,
    sigma: f64,
    lambda1: Option<f64>,
    forcing: impl Fn(f64) -> f64,
) -> Result<ComparisonFit> {
    let s = &traj.samples;
    if s.iter().any(|x| !x.g.is_finite()) {
        return Err(Error::Fit("trajectory has no g record".into()));
    }
    if s.len() < 6 {
        return Err(Error::Fit("too few samples to fit the comparison ODE".into()));
    }
    let (g0, t0) = (s[0].g, s[0].t);
    let span = s[s.len() - 1].t - t0;
    let early = s.iter().position(|x| x.t - t0 >= 0.05 * span || x.g.abs() >= 1.1 * g0.abs()).unwrap_or(s.len() - 1);
    let end = early.max(6).min(s.len() - 1);
    // Central differences on the non-uniform time grid.
    let mut rows = Vec::new();
    for i in 1..end {
        let (a, b, c) = (&s[i - 1], &s[i], &s[i + 1]);
        let (h1, h2) = (b.t - a.t, c.t - b.t);
        if !(h1 > 0.0 && h2 > 0.0) {
            continue;
        }
        let dg = (h1 * h1 * (c.g - b.g) + h2 * h2 * (b.g - a.g)) / (h1 * h2 * (h1 + h2));
        rows.push((dg, b.g, forcing(b.t) * b.g.abs().powf(sigma)));
    }
    if rows.len() < 4 {
        return Err(Error::Fit("too few usable points in the fit window".into()));
    }
    let t_window_end = s[end].t;
    match lambda1 {
        Some(l) => {
            let sxx: f64 = rows.iter().map(|r| r.2 * r.2).sum();
            let sxy: f64 = rows.iter().map(|r| r.2 * (r.0 + l * r.1)).sum();
            if !(sxx > 0.0) {
                return Err(Error::Fit("g^σ vanishes on the fit window".into()));
            }
            Ok(ComparisonFit { lambda1: l, c: sxy / sxx, points: rows.len(), t_window_end })
        }
        None => {
            // g' = -λ g + C x: two-column normal equations.
            let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for &(y, g, x) in &rows {
                a11 += g * g;
                a12 -= g * x;
                a22 += x * x;
                b1 -= g * y;
                b2 += x * y;
            }
            let det = a11 * a22 - a12 * a12;
            if !(det.abs() > 1e-14 * a11 * a22) {
                return Err(Error::Fit("collinear regressors in the comparison fit".into()));
            }
            let lambda = (b1 * a22 - a12 * b2) / det;
            let c = (a11 * b2 - a12 * b1) / det;
            Ok(ComparisonFit { lambda1: lambda, c, points: rows.len(), t_window_end })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timestep::Sample;

    fn traj(ts: &[f64], f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> Trajectory {
        Trajectory {
            samples: ts
                .iter()
                .map(|&t| Sample { t, dt: 0.0, sup_abs_u: f(t), mass: 0.0, g: g(t), energy: 0.0 })
                .collect(),
            snapshots: vec![],
            t_end: *ts.last().unwrap(),
        }
    }

    #[test]
    fn exact_power_law_exponent() {
        let ts: Vec<f64> = (0..40).map(|k| 1.0 + k as f64 * 0.25).collect();
        let tr = traj(&ts, |t| t.powf(-0.4), |_| 0.0);
        let fit = decay_exponent_fit(&tr, (1.0, 10.0)).unwrap();
        assert!((fit.exponent + 0.4).abs() < 1e-6);
        assert!(fit.stderr < 1e-8);
    }

    #[test]
    fn exponential_rate() {
        let ts: Vec<f64> = (0..40).map(|k| k as f64 * 0.01).collect();
        let tr = traj(&ts, |t| (-9.0 * t).exp(), |_| 0.0);
        let fit = exponential_rate_fit(&tr, (0.0, 1.0)).unwrap();
        assert!((fit.exponent + 9.0).abs() < 1e-9);
    }

    #[test]
    fn fit_rejects_nonpositive_or_short_windows() {
        let ts: Vec<f64> = (1..10).map(|k| k as f64).collect();
        let tr = traj(&ts, |t| if t > 5.0 { 0.0 } else { 1.0 / t }, |_| 0.0);
        assert!(matches!(decay_exponent_fit(&tr, (1.0, 9.0)), Err(Error::Fit(_))));
        assert!(matches!(decay_exponent_fit(&tr, (1.0, 3.0)), Err(Error::Fit(_))));
    }

    #[test]
    fn comparison_fit_recovers_bernoulli_coefficients() {
        // g' = -2 g + 3 g², g(0) = 1: h = g^{-1} = 1.5 - 0.5 e^{2t}.
        let ts: Vec<f64> = (0..200).map(|k| k as f64 * 1e-3).collect();
        let g = |t: f64| 1.0 / (1.5 - 0.5 * (2.0 * t).exp());
        let tr = traj(&ts, |_| 1.0, g);
        let fixed = fit_comparison(&tr, 2.0, Some(2.0), |_| 1.0).unwrap();
        assert!((fixed.c - 3.0).abs() < 1e-4, "{}", fixed.c);
        let free = fit_comparison(&tr, 2.0, None, |_| 1.0).unwrap();
        assert!((free.lambda1 - 2.0).abs() < 1e-2 && (free.c - 3.0).abs() < 1e-2, "{free:?}");
    }
}
