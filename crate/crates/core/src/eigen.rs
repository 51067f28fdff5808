//! Principal eigenpair of the weighted p-Laplacian,
//! `div(ω|∇u|^{p-2}∇u) + λ ω |u|^{p-2} u = 0` with `u = 0` on the Dirichlet
//! boundary, obtained by minimizing the Rayleigh quotient
//! `R(u) = ∫ ω|∇u|^p / ∫ ω|u|^p`.
//!
//! The minimizer is found with the nonlinear inverse power iteration: each
//! sweep minimizes the convex functional `E(w) - ⟨ω|u|^{p-2}u, w⟩` by damped
//! Newton and projects `w` back to the positive unit sphere `|w| / ‖w‖_p`.
//! The projection onto `|w|` never increases `R`, so iterates stay positive.

use std::sync::Arc;

use serde::Serialize;

use crate::banded::BandLu;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::plap::PLaplacian;
use crate::weights::WeightSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `∫_Ω u₀ dx = 1`.
    UnitMass,
    /// `∫_Ω ω |u₀|^p dx = 1`.
    UnitPNorm,
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda1: f64,
    pub u0: Field,
    pub p: f64,
    pub normalization: Normalization,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenSummary {
    pub lambda1: f64,
    pub residual: f64,
    pub iterations: usize,
    pub normalization: Normalization,
}

impl EigenPair {
    pub fn summary(&self) -> EigenSummary {
        EigenSummary {
            lambda1: self.lambda1,
            residual: self.residual,
            iterations: self.iterations,
            normalization: self.normalization,
        }
    }

    /// Same eigenfunction rescaled to another normalization.
    pub fn renormalized(&self, weight: &WeightSpec, normalization: Normalization) -> Result<Self> {
        let u0 = normalize(&self.u0, weight, self.p, normalization)?;
        Ok(Self { u0, normalization, ..self.clone() })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Relative eigen-residual target; defaults to 1e-6 for p = 2 and 1e-4 otherwise.
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub normalization: Normalization,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: None, max_iter: 50_000, normalization: Normalization::UnitMass }
    }
}

impl EigenOptions {
    pub fn tolerance(&self, p: f64) -> f64 {
        self.tol.unwrap_or(if p == 2.0 { 1e-6 } else { 1e-4 })
    }
}

/// `∫ ω|∇u|^p dx / ∫ ω|u|^p dx` using the operator's discrete energy.
pub fn rayleigh_quotient(u: &Field, weight: &WeightSpec, p: f64) -> Result<f64> {
    let op = PLaplacian::new(u.grid().clone(), weight, p)?;
    let mass = node_mass(u.grid(), weight)?;
    quotient(&op, &mass, u.values())
}

fn node_mass(grid: &Grid, weight: &WeightSpec) -> Result<Vec<f64>> {
    Ok(grid.nodal_weight(weight)?.iter().zip(grid.volumes()).map(|(w, v)| w * v).collect())
}

fn pnorm_p(mass: &[f64], u: &[f64], p: f64) -> f64 {
    mass.iter().zip(u).map(|(m, x)| m * x.abs().powf(p)).sum()
}

fn quotient(op: &PLaplacian, mass: &[f64], u: &[f64]) -> Result<f64> {
    let den = pnorm_p(mass, u, op.p());
    if !(den > 0.0) {
        return Err(Error::DegenerateField("field has zero weighted p-norm".into()));
    }
    Ok(op.p() * op.energy(u) / den)
}

fn normalize(u: &Field, weight: &WeightSpec, p: f64, normalization: Normalization) -> Result<Field> {
    let scale = match normalization {
        Normalization::UnitMass => crate::grid::integrate(u, &WeightSpec::constant())?,
        Normalization::UnitPNorm => {
            let mass = node_mass(u.grid(), weight)?;
            pnorm_p(&mass, u.values(), p).powf(1.0 / p)
        }
    };
    if !(scale > 0.0) {
        return Err(Error::DegenerateField("cannot normalize a zero field".into()));
    }
    Ok(u.scaled(1.0 / scale))
}

struct Solver {
    op: PLaplacian,
    mass: Vec<f64>,
    boundary: Vec<bool>,
    /// Cached factorization of the (constant) stiffness when p = 2.
    linear: Option<BandLu>,
}

impl Solver {
    fn new(grid: Arc<Grid>, weight: &WeightSpec, p: f64) -> Result<Self> {
        let op = PLaplacian::new(grid.clone(), weight, p)?;
        let mass = node_mass(&grid, weight)?;
        let boundary = grid.boundary_mask().to_vec();
        let linear = if p == 2.0 {
            let zero = vec![0.0; grid.len()];
            Some(self_hessian(&op, &zero, &boundary)?)
        } else {
            None
        };
        Ok(Self { op, mass, boundary, linear })
    }

    fn source(&self, u: &[f64]) -> Vec<f64> {
        let p = self.op.p();
        u.iter()
            .zip(&self.mass)
            .zip(&self.boundary)
            .map(|((x, m), &b)| if b { 0.0 } else { m * x.abs().powf(p - 2.0) * x })
            .collect()
    }

    /// Minimizes `E(w) - ⟨b, w⟩`.
    fn solve_source(&self, b: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        if let Some(lu) = &self.linear {
            return Ok(lu.solve(b));
        }
        let p = self.op.p();
        let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
        // Best multiple of the guess as the starting point.
        let e = self.op.energy(guess);
        let bg = dot(b, guess);
        let mut w: Vec<f64> = if e > 0.0 && bg > 0.0 {
            let s = (bg / (p * e)).powf(1.0 / (p - 1.0));
            guess.iter().map(|x| s * x).collect()
        } else {
            guess.to_vec()
        };
        let bnorm = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let objective = |w: &[f64]| self.op.energy(w) - dot(b, w);
        for _ in 0..200 {
            let mut grad = self.op.energy_gradient(&w);
            for (g, (bi, &bd)) in grad.iter_mut().zip(b.iter().zip(&self.boundary)) {
                *g = if bd { 0.0 } else { *g - bi };
            }
            let gnorm = grad.iter().map(|x| x.abs()).fold(0.0, f64::max);
            if gnorm <= 1e-13 * bnorm {
                return Ok(w);
            }
            let lu = self_hessian(&self.op, &w, &self.boundary)?;
            let mut d: Vec<f64> = grad.iter().map(|g| -g).collect();
            lu.solve_in_place(&mut d);
            let slope = dot(&grad, &d);
            let j0 = objective(&w);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..50 {
                let trial: Vec<f64> = w.iter().zip(&d).map(|(x, y)| x + alpha * y).collect();
                if objective(&trial) <= j0 + 1e-4 * alpha * slope {
                    w = trial;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            let wmax = w.iter().map(|x| x.abs()).fold(0.0, f64::max);
            let step = alpha * d.iter().map(|x| x.abs()).fold(0.0, f64::max);
            if !accepted || step <= 1e-15 * wmax {
                return Ok(w);
            }
        }
        Ok(w)
    }

    fn normalize_p(&self, u: &mut [f64]) {
        let n = pnorm_p(&self.mass, u, self.op.p()).powf(1.0 / self.op.p());
        if n > 0.0 {
            u.iter_mut().for_each(|x| *x /= n);
        }
    }

    /// Relative residual `‖L u + λ ω|u|^{p-2}u‖_M / ‖λ ω|u|^{p-2}u‖_M`.
    fn residual(&self, u: &[f64], lambda: f64) -> f64 {
        let grad = self.op.energy_gradient(u);
        let src = self.source(u);
        let vols = self.op.grid().volumes();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..u.len() {
            if self.boundary[i] {
                continue;
            }
            let r = grad[i] - lambda * src[i];
            num += r * r / vols[i];
            den += (lambda * src[i]).powi(2) / vols[i];
        }
        if den > 0.0 {
            (num / den).sqrt()
        } else {
            f64::INFINITY
        }
    }
}

/// Factorized `∇²E(w) + δ M`, Dirichlet rows replaced by identity.
fn self_hessian(op: &PLaplacian, w: &[f64], boundary: &[bool]) -> Result<BandLu> {
    let mut h = op.band_matrix();
    op.add_hessian(w, 1.0, false, &mut h);
    let vols = op.grid().volumes();
    let mean_diag = (0..w.len()).map(|i| h.get(i, i) / vols[i]).sum::<f64>() / w.len() as f64;
    let delta = 1e-12 * mean_diag.max(1e-300);
    for (i, &b) in boundary.iter().enumerate() {
        if b {
            h.set_identity_row(i);
        } else {
            h.add(i, i, delta * vols[i]);
        }
    }
    h.factor()
}

/// Smallest eigenvalue and positive eigenfunction on `grid`.
pub fn smallest_eigenpair(grid: Arc<Grid>, weight: &WeightSpec, p: f64, opts: EigenOptions) -> Result<EigenPair> {
    let tol = opts.tolerance(p);
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("eigen tolerance must be positive, got {tol}")));
    }
    let solver = Solver::new(grid.clone(), weight, p)?;
    let mut u: Vec<f64> = solver.boundary.iter().map(|&b| if b { 0.0 } else { 1.0 }).collect();
    solver.normalize_p(&mut u);

    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    let mut iterations = 0;
    for it in 1..=opts.max_iter.max(1) {
        iterations = it;
        let b = solver.source(&u);
        let w = solver.solve_source(&b, &u)?;
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateField("inverse iteration produced non-finite values".into()));
        }
        u = w.iter().zip(&solver.boundary).map(|(x, &b)| if b { 0.0 } else { x.abs() }).collect();
        solver.normalize_p(&mut u);
        let lambda = p * solver.op.energy(&u);
        let res = solver.residual(&u, lambda);
        if best.as_ref().is_none_or(|(_, r, _)| res < *r) {
            best = Some((lambda, res, u.clone()));
        }
        if res <= tol {
            break;
        }
    }
    let (lambda1, residual, values) = best.expect("at least one iteration runs");
    let field = Field::new(grid, values)?;
    let u0 = normalize(&field, weight, p, opts.normalization)?;
    let pair = EigenPair { lambda1, u0, p, normalization: opts.normalization, residual, iterations };
    if residual > tol {
        return Err(Error::EigenConvergence { iterations, residual, best: Box::new(pair) });
    }
    Ok(pair)
}

/// Closed-form first Dirichlet eigenvalue of the 1D p-Laplacian on an
/// interval of length `len`: `(p-1) (π_p / len)^p` with
/// `π_p = 2π / (p sin(π/p))`.
pub fn interval_eigenvalue_1d(p: f64, len: f64) -> f64 {
    use std::f64::consts::PI;
    let pi_p = 2.0 * PI / (p * (PI / p).sin());
    (p - 1.0) * (pi_p / len).powf(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridMode};
    use std::f64::consts::PI;

    fn interval(len: f64, res: usize) -> Arc<Grid> {
        Arc::new(build_grid(GridMode::Interval, len, res).unwrap())
    }

    #[test]
    fn quotient_of_classical_modes() {
        let g = interval(1.0, 256);
        let w = WeightSpec::constant();
        let s1 = Field::from_fn(g.clone(), |x| (PI * x[0]).sin());
        let r1 = rayleigh_quotient(&s1, &w, 2.0).unwrap();
        assert!((r1 / (PI * PI) - 1.0).abs() < 5e-3);
        let s2 = Field::from_fn(g.clone(), |x| (2.0 * PI * x[0]).sin());
        let r2 = rayleigh_quotient(&s2, &w, 2.0).unwrap();
        assert!((r2 / (4.0 * PI * PI) - 1.0).abs() < 5e-3);
        // hat: ∫|u'|² = 4, ∫u² = 1/3
        let hat = Field::from_fn(g, |x| 1.0 - (2.0 * x[0] - 1.0).abs());
        let r3 = rayleigh_quotient(&hat, &w, 2.0).unwrap();
        assert!((r3 - 12.0).abs() < 0.05);
    }

    #[test]
    fn zero_field_is_degenerate() {
        let z = Field::zeros(interval(1.0, 16));
        assert!(matches!(rayleigh_quotient(&z, &WeightSpec::constant(), 2.0), Err(Error::DegenerateField(_))));
    }

    #[test]
    fn quotient_is_scale_invariant() {
        let g = interval(1.0, 64);
        let w = WeightSpec::power(0.7);
        let u = Field::from_fn(g, |x| x[0] * (1.0 - x[0]) * (3.0 + x[0]));
        let a = rayleigh_quotient(&u, &w, 3.0).unwrap();
        for c in [-4.0, 0.01, 17.0] {
            let b = rayleigh_quotient(&u.scaled(c), &w, 3.0).unwrap();
            assert!((a - b).abs() <= 1e-10 * a);
        }
    }

    #[test]
    fn classical_eigenvalue_p2() {
        let pair = smallest_eigenpair(interval(1.0, 256), &WeightSpec::constant(), 2.0, Default::default()).unwrap();
        assert!((pair.lambda1 / (PI * PI) - 1.0).abs() < 0.01);
        assert!(pair.residual <= 1e-6);
        let g = pair.u0.grid().clone();
        for (i, &v) in pair.u0.values().iter().enumerate() {
            if g.is_boundary(i) {
                assert_eq!(v, 0.0);
            } else {
                assert!(v > 0.0);
            }
        }
        let mass = crate::grid::integrate(&pair.u0, &WeightSpec::constant()).unwrap();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn p3_matches_closed_form() {
        let pair = smallest_eigenpair(interval(1.0, 512), &WeightSpec::constant(), 3.0, Default::default()).unwrap();
        let exact = interval_eigenvalue_1d(3.0, 1.0);
        // sin(πx) gives the upper bound π³.
        assert!((exact - 28.2886).abs() < 1e-3 && exact < PI.powi(3));
        assert!((pair.lambda1 / exact - 1.0).abs() < 0.02, "{} vs {exact}", pair.lambda1);
        assert!(pair.residual <= 1e-4);
    }

    #[test]
    fn enlarging_domain_scales_eigenvalue() {
        for &p in &[2.0, 3.0] {
            let a = smallest_eigenpair(interval(1.0, 128), &WeightSpec::constant(), p, Default::default()).unwrap();
            let b = smallest_eigenpair(interval(2.0, 256), &WeightSpec::constant(), p, Default::default()).unwrap();
            let ratio = b.lambda1 / a.lambda1;
            assert!((ratio / 2f64.powf(-p) - 1.0).abs() < 0.02, "p = {p}: {ratio}");
        }
    }

    #[test]
    fn nonconvergence_carries_best_iterate() {
        let opts = EigenOptions { tol: Some(1e-15), max_iter: 3, ..Default::default() };
        match smallest_eigenpair(interval(1.0, 64), &WeightSpec::constant(), 3.0, opts) {
            Err(Error::EigenConvergence { iterations, best, .. }) => {
                assert_eq!(iterations, 3);
                assert!(best.lambda1 > 0.0);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }
}
