//! Functionals, comparison ODEs, characteristics, fits and exact profiles.

pub mod characteristics;
pub mod exact;
pub mod fits;
pub mod ode;

pub use characteristics::{ball_integral, phi_r_characteristic, radius_grid, triple_norm, Exponents};
pub use exact::{
    barenblatt_exact, barenblatt_variant, front_radius, residual_check, ExactVariant, ResidualOptions, ResidualReport,
};
pub use fits::{
    decay_exponent_fit, exponential_rate_fit, fit_comparison, linear_fit, ComparisonFit, ExponentFit, LinearFit,
};
pub use ode::{bernoulli_blowup, blowup_threshold, exp_forced_bound, BernoulliSolution, OdeParams, Threshold};

use crate::eigen::EigenPair;
use crate::error::Result;
use crate::grid::Field;
use crate::plap::PLaplacian;
use crate::weights::WeightSpec;

/// `g = ∫ ω u₀ u dx` with lumped quadrature.
pub fn g_functional(u: &Field, eig: &EigenPair, weight: &WeightSpec) -> Result<f64> {
    u.check_same_grid(&eig.u0)?;
    let grid = u.grid();
    let w = grid.nodal_weight(weight)?;
    Ok(u.values().iter().zip(eig.u0.values()).zip(&w).zip(grid.volumes()).map(|(((a, b), c), v)| a * b * c * v).sum())
}

/// `∫ ω (|∇u|^{p-2}∇u - |∇u₀|^{p-2}∇u₀) · ∇(u₀ ω) dx`, discretized with the
/// same face fluxes as the operator.
pub fn condition_star(u: &Field, eig: &EigenPair, weight: &WeightSpec, p: f64) -> Result<f64> {
    u.check_same_grid(&eig.u0)?;
    let grid = u.grid();
    let op = PLaplacian::new(grid.clone(), weight, p)?;
    let w = grid.nodal_weight(weight)?;
    let test: Vec<f64> = eig.u0.values().iter().zip(&w).map(|(a, b)| a * b).collect();
    let gu = op.energy_gradient(u.values());
    let g0 = op.energy_gradient(eig.u0.values());
    Ok(gu.iter().zip(&g0).zip(&test).map(|((a, b), c)| (a - b) * c).sum())
}
