//! Self-similar source-type profiles for `u_t = div(|x|^θ |∇u|^{p-2} ∇u)`
//! and the discrete residual used to test candidate solutions.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::plap::PLaplacian;
use crate::weights::WeightSpec;

use super::characteristics::Exponents;

/// Profile variants of `U(ξ) = (1 - q ξ^γ)_+^{(p-1)/(p-2)}` with
/// `q = ((p-2)/(p-θ)) (n/β)^{1/(p-1)}`, `γ = (p-θ)/(p-1)`, `ξ = |x| t^{-1/β}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactVariant {
    /// `U(ξ)` with no time amplitude.
    Verbatim,
    /// `t^{-n/β} U(ξ)`.
    AmplitudeCorrected,
    /// `n^{-1/(p-2)} t^{-n/β} U(ξ)`, the member of the source-type family
    /// whose support matches `U`.
    SelfSimilar,
}

impl ExactVariant {
    pub const ALL: [ExactVariant; 3] = [Self::Verbatim, Self::AmplitudeCorrected, Self::SelfSimilar];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Verbatim => "verbatim",
            Self::AmplitudeCorrected => "amplitude_corrected",
            Self::SelfSimilar => "self_similar",
        }
    }
}

fn check(exps: &Exponents, t: f64) -> Result<()> {
    if !(exps.p > 2.0) {
        return Err(Error::Parameter(format!("exact profile needs p > 2, got {}", exps.p)));
    }
    if !(exps.theta_w >= 0.0 && exps.theta_w < exps.p) {
        return Err(Error::Parameter(format!("need 0 <= theta_w < p, got {}", exps.theta_w)));
    }
    if !(t > 0.0) {
        return Err(Error::Parameter(format!("exact profile needs t > 0, got {t}")));
    }
    Ok(())
}

fn coefficient(exps: &Exponents) -> (f64, f64) {
    let p = exps.p;
    let n = exps.n as f64;
    let q = (p - 2.0) / (p - exps.theta_w) * (n / exps.beta()).powf(1.0 / (p - 1.0));
    (q, (p - exps.theta_w) / (p - 1.0))
}

/// The profile `U(|x| t^{-1/β})` with no time amplitude.
pub fn barenblatt_exact(radius: f64, t: f64, exps: &Exponents) -> Result<f64> {
    check(exps, t)?;
    let (q, gamma) = coefficient(exps);
    let xi = radius.abs() / t.powf(1.0 / exps.beta());
    let inner = (1.0 - q * xi.powf(gamma)).max(0.0);
    Ok(inner.powf((exps.p - 1.0) / (exps.p - 2.0)))
}

pub fn barenblatt_variant(variant: ExactVariant, radius: f64, t: f64, exps: &Exponents) -> Result<f64> {
    let base = barenblatt_exact(radius, t, exps)?;
    let decay = t.powf(-(exps.n as f64) / exps.beta());
    Ok(match variant {
        ExactVariant::Verbatim => base,
        ExactVariant::AmplitudeCorrected => decay * base,
        ExactVariant::SelfSimilar => (exps.n as f64).powf(-1.0 / (exps.p - 2.0)) * decay * base,
    })
}

/// Edge of the support, `t^{1/β} q^{-1/γ}`; shared by all variants.
pub fn front_radius(t: f64, exps: &Exponents) -> Result<f64> {
    check(exps, t)?;
    let (q, gamma) = coefficient(exps);
    Ok(t.powf(1.0 / exps.beta()) * q.powf(-1.0 / gamma))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualOptions {
    /// Nodes where the candidate is at most this value are skipped.
    pub front_margin: f64,
    /// Central time difference step relative to `t`.
    pub dt_rel: f64,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self { front_margin: 1e-3, dt_rel: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualSample {
    pub t: f64,
    /// Volume-weighted root mean square over the nodes used.
    pub rms: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    /// Largest per-time RMS residual.
    pub max_residual: f64,
    /// Largest pointwise residual; dominated by profile cusps at the origin.
    pub max_pointwise: f64,
    pub per_time: Vec<ResidualSample>,
    pub nodes_used: usize,
}

/// `u_t - div(ω|∇u|^{p-2}∇u)` at interior nodes where the candidate exceeds
/// `front_margin`, at each sample time, reduced to RMS and max norms.
pub fn residual_check(
    candidate: impl Fn(&[f64], f64) -> f64,
    grid: Arc<Grid>,
    weight: &WeightSpec,
    p: f64,
    times: &[f64],
    opts: ResidualOptions,
) -> Result<ResidualReport> {
    let op = PLaplacian::new(grid.clone(), weight, p)?;
    let vols = grid.volumes();
    let mut per_time = Vec::with_capacity(times.len());
    let mut nodes_used = 0;
    for &t in times {
        let delta = opts.dt_rel * t.abs().max(1e-300);
        let now = Field::sample(grid.clone(), |x| candidate(x, t));
        let ahead = Field::sample(grid.clone(), |x| candidate(x, t + delta));
        let behind = Field::sample(grid.clone(), |x| candidate(x, t - delta));
        if !now.is_finite() || !ahead.is_finite() || !behind.is_finite() {
            return Err(Error::NonFinite(format!("candidate at t = {t}")));
        }
        let lu = op.apply(now.values());
        let (mut linf, mut sq, mut vol) = (0.0f64, 0.0, 0.0);
        for i in 0..grid.len() {
            if grid.is_boundary(i) || now.values()[i] <= opts.front_margin {
                continue;
            }
            nodes_used += 1;
            let ut = (ahead.values()[i] - behind.values()[i]) / (2.0 * delta);
            let r = ut - lu[i];
            linf = linf.max(r.abs());
            sq += vols[i] * r * r;
            vol += vols[i];
        }
        let rms = if vol > 0.0 { (sq / vol).sqrt() } else { 0.0 };
        per_time.push(ResidualSample { t, rms, linf });
    }
    Ok(ResidualReport {
        max_residual: per_time.iter().fold(0.0f64, |m, r| m.max(r.rms)),
        max_pointwise: per_time.iter().fold(0.0f64, |m, r| m.max(r.linf)),
        per_time,
        nodes_used,
    })
}
