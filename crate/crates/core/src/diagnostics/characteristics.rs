//! Scaling exponents and the radius-supremum characteristics of a solution.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, GridMode};
use crate::weights::WeightSpec;

/// Dimension, diffusion exponent, doubling exponent `μ` and weight power `θ_w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exponents {
    pub n: usize,
    pub p: f64,
    pub mu: f64,
    pub theta_w: f64,
}

impl Exponents {
    pub fn new(n: usize, p: f64, mu: f64, theta_w: f64) -> Self {
        Self { n, p, mu, theta_w }
    }

    /// `μ = 1 + θ_w / n`, the doubling exponent of `|x|^θ_w`.
    pub fn matched(n: usize, p: f64, theta_w: f64) -> Self {
        Self::new(n, p, 1.0 + theta_w / n as f64, theta_w)
    }

    /// `k = n(p - 1 - μ) + p`.
    pub fn k(&self) -> f64 {
        let n = self.n as f64;
        n * (self.p - 1.0 - self.mu) + self.p
    }

    /// `n(2p - 2 - pμ) + p²`.
    pub fn lambda_exp(&self) -> f64 {
        let n = self.n as f64;
        n * (2.0 * self.p - 2.0 - self.p * self.mu) + self.p * self.p
    }

    /// `β = n(p - 2) + p - θ_w`.
    pub fn beta(&self) -> f64 {
        let n = self.n as f64;
        n * (self.p - 2.0) + self.p - self.theta_w
    }

    /// Whether `μ = 1 + θ_w / n` (to rounding).
    pub fn is_matched(&self) -> bool {
        let target = 1.0 + self.theta_w / self.n as f64;
        (self.mu - target).abs() <= 1e-12 * target.abs().max(1.0)
    }

    /// `k = β` whenever the exponents are matched.
    pub fn identity_holds(&self) -> bool {
        !self.is_matched() || (self.k() - self.beta()).abs() <= 1e-12 * self.beta().abs().max(1.0)
    }

    fn check_degenerate(&self) -> Result<()> {
        if self.p <= 2.0 {
            return Err(Error::Unsupported(format!(
                "characteristic needs p > 2 (exponent 1/(p-2)), got p = {}",
                self.p
            )));
        }
        Ok(())
    }
}

/// `{r · 2^{j/per_octave}} ∩ (0, R]`.
pub fn radius_grid(r: f64, outer: f64, per_octave: u32) -> Vec<f64> {
    let k = per_octave.max(1) as f64;
    let mut out = Vec::new();
    let mut j = 0;
    loop {
        let rho = r * 2f64.powf(j as f64 / k);
        if rho > outer * (1.0 + 1e-12) {
            break;
        }
        out.push(rho.min(outer));
        j += 1;
    }
    out
}

fn radial_dim(u: &Field) -> Result<usize> {
    match u.grid().mode() {
        GridMode::Radial { dim } => Ok(dim),
        other => Err(Error::Unsupported(format!("ball characteristics need a radial grid, got {other:?}"))),
    }
}

fn sup_on_ball(u: &Field, rho: f64) -> f64 {
    let axis = u.grid().axis();
    u.values().iter().zip(axis).filter(|(_, &r)| r <= rho * (1.0 + 1e-12)).fold(0.0, |m, (v, _)| m.max(v.abs()))
}

/// `∫_{B_ρ} u dx` for the piecewise-linear radial interpolant, exactly.
pub fn ball_integral(u: &Field, rho: f64) -> Result<f64> {
    let n = radial_dim(u)?;
    let s = crate::quadrature::unit_sphere_area(n);
    let axis = u.grid().axis();
    let v = u.values();
    let nf = n as f64;
    let mut sum = 0.0;
    for k in 0..axis.len() - 1 {
        let (a, b) = (axis[k], axis[k + 1]);
        if a >= rho {
            break;
        }
        let c = b.min(rho);
        let slope = (v[k + 1] - v[k]) / (b - a);
        let alpha = v[k] - slope * a;
        sum += alpha * (c.powf(nf) - a.powf(nf)) / nf + slope * (c.powf(nf + 1.0) - a.powf(nf + 1.0)) / (nf + 1.0);
    }
    Ok(s * sum)
}

/// `sup_τ sup_{ρ ≥ r} (ω(B_ρ)/ρ^{n+p})^{1/(p-2)} ‖u(·,τ)‖_{L∞(B_ρ)}` over the
/// snapshots with `τ ≤ t` and the geometric radius grid.
pub fn phi_r_characteristic(
    snapshots: &[(f64, Field)],
    r: f64,
    t: f64,
    exps: &Exponents,
    weight: &WeightSpec,
    per_octave: u32,
) -> Result<f64> {
    exps.check_degenerate()?;
    let used: Vec<&Field> = snapshots.iter().filter(|(tau, _)| *tau <= t).map(|(_, f)| f).collect();
    let Some(first) = used.first() else {
        return Err(Error::Parameter("no snapshots at or before the requested time".into()));
    };
    if !(r > 0.0) {
        return Err(Error::Parameter(format!("radius must be positive, got {r}")));
    }
    let n = radial_dim(first)?;
    let radii = radius_grid(r, first.grid().extent(), per_octave);
    let mut factors = Vec::with_capacity(radii.len());
    for &rho in &radii {
        let m = weight.ball_mass(rho, n)?;
        factors.push((m / rho.powf(n as f64 + exps.p)).powf(1.0 / (exps.p - 2.0)));
    }
    let mut best = 0.0f64;
    for u in used {
        for (&rho, &f) in radii.iter().zip(&factors) {
            best = best.max(f * sup_on_ball(u, rho));
        }
    }
    Ok(best)
}

/// `sup_{ρ ≥ r} ρ^{-k/(p-2)} [ω(B_ρ)/ρ^{nμ}]^{1/(p-2)} ∫_{B_ρ} u dx` on the
/// geometric radius grid.
pub fn triple_norm(u: &Field, r: f64, exps: &Exponents, weight: &WeightSpec, per_octave: u32) -> Result<f64> {
    exps.check_degenerate()?;
    if !(r > 0.0) {
        return Err(Error::Parameter(format!("radius must be positive, got {r}")));
    }
    let n = radial_dim(u)?;
    let e = 1.0 / (exps.p - 2.0);
    let mut best = f64::NEG_INFINITY;
    for rho in radius_grid(r, u.grid().extent(), per_octave) {
        let m = weight.ball_mass(rho, n)?;
        let term = rho.powf(-exps.k() * e) * (m / rho.powf(n as f64 * exps.mu)).powf(e) * ball_integral(u, rho)?;
        best = best.max(term);
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::Parameter(format!("radius {r} lies outside the domain")));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use proptest::prelude::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn disc(res: usize) -> Arc<crate::grid::Grid> {
        Arc::new(build_grid(GridMode::Radial { dim: 2 }, 1.0, res).unwrap())
    }

    #[test]
    fn exponent_values() {
        let e = Exponents::new(2, 3.0, 1.0, 0.0);
        assert_eq!(e.k(), 5.0);
        assert_eq!(e.beta(), 5.0);
        assert_eq!(Exponents::matched(2, 3.0, 1.0).beta(), 4.0);
        assert_eq!(Exponents::new(2, 3.0, 1.0, 0.0).lambda_exp(), 2.0 * (6.0 - 2.0 - 3.0) + 9.0);
    }

    #[test]
    fn phi_r_constant_snapshot() {
        let u = Field::sample(disc(16), |_| 1.0);
        let e = Exponents::new(2, 3.0, 1.0, 0.0);
        let v = phi_r_characteristic(&[(0.5, u)], 0.5, 1.0, &e, &WeightSpec::constant(), 2).unwrap();
        assert!((v - 8.0 * PI).abs() < 1e-6, "{v}");
    }

    #[test]
    fn phi_r_errors_and_zero() {
        let z = Field::zeros(disc(16));
        let e = Exponents::new(2, 3.0, 1.0, 0.0);
        assert_eq!(phi_r_characteristic(&[(0.1, z.clone())], 0.5, 1.0, &e, &WeightSpec::constant(), 2).unwrap(), 0.0);
        assert!(phi_r_characteristic(&[], 0.5, 1.0, &e, &WeightSpec::constant(), 2).is_err());
        let e2 = Exponents::new(2, 2.0, 1.0, 0.0);
        assert!(matches!(
            phi_r_characteristic(&[(0.1, z)], 0.5, 1.0, &e2, &WeightSpec::constant(), 2),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn triple_norm_constant_field() {
        // k = 5, term π² ρ^{-3}, largest at ρ = 1/2.
        let u = Field::sample(disc(16), |_| 1.0);
        let e = Exponents::new(2, 3.0, 1.0, 0.0);
        let v = triple_norm(&u, 0.5, &e, &WeightSpec::constant(), 2).unwrap();
        assert!((v - 8.0 * PI * PI).abs() < 1e-6, "{v}");
        assert_eq!(triple_norm(&Field::zeros(disc(16)), 0.5, &e, &WeightSpec::constant(), 2).unwrap(), 0.0);
    }

    #[test]
    fn ball_integral_exact_for_linear_profile() {
        // u = 1 - r on the unit disc: 2π ∫ (1 - r) r dr = π/3.
        let u = Field::sample(disc(7), |x| 1.0 - x[0]);
        assert!((ball_integral(&u, 1.0).unwrap() - PI / 3.0).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn characteristics_are_homogeneous(c in 0.1f64..10.0, a in 0.1f64..3.0) {
            let u = Field::sample(disc(20), |x| a * (1.0 - x[0] * x[0]));
            let e = Exponents::new(2, 3.5, 1.2, 0.4);
            let w = WeightSpec::power(0.4);
            let t1 = triple_norm(&u, 0.2, &e, &w, 2).unwrap();
            let t2 = triple_norm(&u.scaled(c), 0.2, &e, &w, 2).unwrap();
            prop_assert!((t2 - c * t1).abs() <= 1e-12 * t2.abs());
            let p1 = phi_r_characteristic(&[(0.0, u.clone())], 0.2, 1.0, &e, &w, 2).unwrap();
            let p2 = phi_r_characteristic(&[(0.0, u.scaled(c))], 0.2, 1.0, &e, &w, 2).unwrap();
            prop_assert!((p2 - c * p1).abs() <= 1e-12 * p2.abs());
        }

        #[test]
        fn matched_exponents_satisfy_identity(n in 1usize..6, p in 2.0f64..8.0, theta in 0.0f64..2.0) {
            let e = Exponents::matched(n, p, theta);
            prop_assert!(e.identity_holds());
            prop_assert!((e.k() - e.beta()).abs() < 1e-12 * e.beta().abs().max(1.0));
        }
    }
}
