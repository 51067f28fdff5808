//! The discrete weighted p-Laplacian `div(ω |∇u|^{p-2} ∇u)`, its energy and
//! the reaction families.
//!
//! Everything is built from one face list. Each face carries a measure
//! (cell size times ω at the face) and a linear stencil producing the face
//! gradient `g_f`. The energy is
//!
//! ```text
//! E(u) = (1/p) Σ_f μ_f |g_f|^p
//! ```
//!
//! and the operator is `L_p u = -M⁻¹ ∇E(u)` with `M` the lumped mass, so the
//! operator is exactly the (negative) discrete gradient of the energy.

use std::sync::Arc;

use serde::Serialize;

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, GridMode};
use crate::quadrature::unit_sphere_area;
use crate::weights::WeightSpec;

#[derive(Debug, Clone)]
struct Face {
    measure: f64,
    comps: Vec<Vec<(usize, f64)>>,
}

impl Face {
    fn gradient(&self, u: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (k, comp) in self.comps.iter().enumerate() {
            g[k] = comp.iter().map(|&(i, c)| c * u[i]).sum();
        }
        g
    }
}

/// Weighted p-Laplacian on a fixed grid and weight.
#[derive(Debug, Clone)]
pub struct PLaplacian {
    grid: Arc<Grid>,
    p: f64,
    reg_eps: f64,
    faces: Vec<Face>,
}

impl PLaplacian {
    /// Builds the face list. Requires `p ≥ 2`.
    pub fn new(grid: Arc<Grid>, weight: &WeightSpec, p: f64) -> Result<Self> {
        Self::with_regularization(grid, weight, p, 0.0)
    }

    /// As [`PLaplacian::new`], replacing `|∇u|` by `√(|∇u|² + ε²)`.
    pub fn with_regularization(grid: Arc<Grid>, weight: &WeightSpec, p: f64, reg_eps: f64) -> Result<Self> {
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::Unsupported(format!("p = {p}: only the degenerate range p >= 2 is supported")));
        }
        if !(reg_eps >= 0.0) {
            return Err(Error::Parameter(format!("regularization must be nonnegative, got {reg_eps}")));
        }
        let faces = build_faces(&grid, weight)?;
        Ok(Self { grid, p, reg_eps, faces })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn reg_eps(&self) -> f64 {
        self.reg_eps
    }

    #[inline]
    fn norm(&self, g: [f64; 2]) -> f64 {
        let s2 = g[0] * g[0] + g[1] * g[1];
        if self.reg_eps > 0.0 {
            (s2 + self.reg_eps * self.reg_eps).sqrt()
        } else {
            s2.sqrt()
        }
    }

    #[inline]
    fn pow(&self, s: f64, e: f64) -> f64 {
        if e == 0.0 {
            1.0
        } else if s == 0.0 {
            0.0
        } else {
            s.powf(e)
        }
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        let p = self.p;
        self.faces.iter().map(|f| f.measure * self.pow(self.norm(f.gradient(u)), p)).sum::<f64>() / p
    }

    /// Euclidean gradient `∂E/∂u_i`; zero on Dirichlet nodes.
    pub fn energy_gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for f in &self.faces {
            let g = f.gradient(u);
            let coef = f.measure * self.pow(self.norm(g), self.p - 2.0);
            if coef == 0.0 {
                continue;
            }
            for (k, comp) in f.comps.iter().enumerate() {
                let flux = coef * g[k];
                for &(i, c) in comp {
                    out[i] += c * flux;
                }
            }
        }
        for (o, &b) in out.iter_mut().zip(self.grid.boundary_mask()) {
            if b {
                *o = 0.0;
            }
        }
        out
    }

    /// Nodal values of `div(ω|∇u|^{p-2}∇u)`, zero on Dirichlet nodes.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.energy_gradient(u);
        for (o, &vol) in out.iter_mut().zip(self.grid.volumes()) {
            *o = -*o / vol;
        }
        out
    }

    /// Adds `scale · ∇²E(u)` into `m`. With `lagged`, only the frozen
    /// coefficient `μ|g|^{p-2} GᵀG` is added (Picard linearization).
    pub fn add_hessian(&self, u: &[f64], scale: f64, lagged: bool, m: &mut BandMatrix) {
        for f in &self.faces {
            let g = f.gradient(u);
            let s = self.norm(g);
            let c = scale * f.measure * self.pow(s, self.p - 2.0);
            let d = if lagged || self.p == 2.0 || s == 0.0 {
                0.0
            } else {
                scale * f.measure * (self.p - 2.0) * self.pow(s, self.p - 4.0)
            };
            if c == 0.0 && d == 0.0 {
                continue;
            }
            let nc = f.comps.len();
            // Local 2x2 coefficient matrix c I + d g gᵀ.
            let mut a = [[0.0; 2]; 2];
            for (k, row) in a.iter_mut().enumerate().take(nc) {
                for (l, v) in row.iter_mut().enumerate().take(nc) {
                    *v = d * g[k] * g[l] + if k == l { c } else { 0.0 };
                }
            }
            for k in 0..nc {
                for l in 0..nc {
                    let akl = a[k][l];
                    if akl == 0.0 {
                        continue;
                    }
                    for &(i, ci) in &f.comps[k] {
                        for &(j, cj) in &f.comps[l] {
                            m.add(i, j, akl * ci * cj);
                        }
                    }
                }
            }
        }
    }

    /// Band matrix sized for this operator's couplings.
    pub fn band_matrix(&self) -> BandMatrix {
        let b = self.grid.half_bandwidth();
        BandMatrix::zeros(self.grid.len(), b, b)
    }
}

fn build_faces(grid: &Grid, weight: &WeightSpec) -> Result<Vec<Face>> {
    let h = grid.h();
    let m = grid.axis_len();
    let axis = grid.axis();
    let inv = 1.0 / h;
    let mut faces = Vec::new();
    match grid.mode() {
        GridMode::Interval => {
            for i in 0..m - 1 {
                let w = weight.eval(&[0.5 * (axis[i] + axis[i + 1])])?;
                faces.push(Face { measure: h * w, comps: vec![vec![(i, -inv), (i + 1, inv)]] });
            }
        }
        GridMode::Radial { dim } => {
            let s = unit_sphere_area(dim);
            let n = dim as i32;
            for i in 0..m - 1 {
                let (a, b) = (axis[i], axis[i + 1]);
                let w = weight.eval_radius(0.5 * (a + b))?;
                let shell = s * (b.powi(n) - a.powi(n)) / dim as f64;
                faces.push(Face { measure: shell * w, comps: vec![vec![(i, -inv), (i + 1, inv)]] });
            }
        }
        GridMode::Tensor2d => {
            // Nodal derivative along one axis as a stencil.
            let nodal = |k: usize, idx: usize, stride: usize| -> Vec<(usize, f64)> {
                if k == 0 {
                    vec![(idx, -inv), (idx + stride, inv)]
                } else if k == m - 1 {
                    vec![(idx - stride, -inv), (idx, inv)]
                } else {
                    vec![(idx - stride, -0.5 * inv), (idx + stride, 0.5 * inv)]
                }
            };
            let half = |v: Vec<(usize, f64)>| v.into_iter().map(|(i, c)| (i, 0.5 * c));
            let edge = |k: usize| if k == 0 || k == m - 1 { 0.5 } else { 1.0 };
            // x-faces: exact x-difference, y-derivative averaged from the two nodes.
            for j in 0..m {
                for i in 0..m - 1 {
                    let a = grid.index2(i, j);
                    let b = grid.index2(i + 1, j);
                    let w = weight.eval(&[0.5 * (axis[i] + axis[i + 1]), axis[j]])?;
                    let cross: Vec<_> = half(nodal(j, a, m)).chain(half(nodal(j, b, m))).collect();
                    faces.push(Face {
                        measure: 0.5 * h * h * edge(j) * w,
                        comps: vec![vec![(a, -inv), (b, inv)], cross],
                    });
                }
            }
            // y-faces.
            for j in 0..m - 1 {
                for i in 0..m {
                    let a = grid.index2(i, j);
                    let b = grid.index2(i, j + 1);
                    let w = weight.eval(&[axis[i], 0.5 * (axis[j] + axis[j + 1])])?;
                    let cross: Vec<_> = half(nodal(i, a, 1)).chain(half(nodal(i, b, 1))).collect();
                    faces.push(Face {
                        measure: 0.5 * h * h * edge(i) * w,
                        comps: vec![cross, vec![(a, -inv), (b, inv)]],
                    });
                }
            }
        }
    }
    Ok(faces)
}

/// `div(ω|∇u|^{p-2}∇u)` at every node (zero on Dirichlet nodes).
pub fn apply_plaplacian(u: &Field, weight: &WeightSpec, p: f64) -> Result<Field> {
    let op = PLaplacian::new(u.grid().clone(), weight, p)?;
    u.with_values(op.apply(u.values()))
}

/// `(1/p) ∫ ω |∇u|^p dx` with the same face fluxes as [`apply_plaplacian`].
pub fn energy(u: &Field, weight: &WeightSpec, p: f64) -> Result<f64> {
    let op = PLaplacian::new(u.grid().clone(), weight, p)?;
    Ok(op.energy(u.values()))
}

/// Reaction term `f(x, t, u)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ReactionSpec {
    None,
    /// `α₀ |u|^{σ-1} u`.
    Power {
        alpha0: f64,
        sigma: f64,
    },
    /// `(C₃ + C₄ t^m) |u|^{σ-1} u`, the sign-preserving representative of
    /// the bound `|f| ≤ (C₃ + C₄ t^m)|u|^σ`.
    BoundedPower {
        c3: f64,
        c4: f64,
        m: f64,
        sigma: f64,
    },
    /// `C₆ e^{λ₁ σ t} |u|^{σ-1} u`.
    ExpForced {
        c6: f64,
        sigma: f64,
        lambda1_ref: f64,
    },
}

impl ReactionSpec {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be a nonnegative number, got {v}")))
            }
        };
        match *self {
            ReactionSpec::None => Ok(()),
            ReactionSpec::Power { alpha0, sigma } => {
                nonneg("alpha0", alpha0)?;
                check_sigma(sigma)
            }
            ReactionSpec::BoundedPower { c3, c4, m, sigma } => {
                nonneg("c3", c3)?;
                nonneg("c4", c4)?;
                if !(m > 1.0) {
                    return Err(Error::Parameter(format!("m must exceed 1, got {m}")));
                }
                check_sigma(sigma)
            }
            ReactionSpec::ExpForced { c6, sigma, lambda1_ref } => {
                nonneg("c6", c6)?;
                nonneg("lambda1_ref", lambda1_ref)?;
                check_sigma(sigma)
            }
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match *self {
            ReactionSpec::None => None,
            ReactionSpec::Power { sigma, .. }
            | ReactionSpec::BoundedPower { sigma, .. }
            | ReactionSpec::ExpForced { sigma, .. } => Some(sigma),
        }
    }

    /// Time-dependent coefficient `a(t)` in `f = a(t) |u|^{σ-1} u`.
    pub fn coefficient(&self, t: f64) -> f64 {
        match *self {
            ReactionSpec::None => 0.0,
            ReactionSpec::Power { alpha0, .. } => alpha0,
            ReactionSpec::BoundedPower { c3, c4, m, .. } => c3 + c4 * t.powf(m),
            ReactionSpec::ExpForced { c6, sigma, lambda1_ref } => c6 * (lambda1_ref * sigma * t).exp(),
        }
    }

    pub fn eval(&self, t: f64, u: f64) -> f64 {
        match self.sigma() {
            None => 0.0,
            Some(_) if u == 0.0 => 0.0,
            Some(sigma) => self.coefficient(t) * u.abs().powf(sigma - 1.0) * u,
        }
    }

    /// `∂f/∂u`.
    pub fn du(&self, t: f64, u: f64) -> f64 {
        match self.sigma() {
            None => 0.0,
            Some(_) if u == 0.0 => 0.0,
            Some(sigma) => self.coefficient(t) * sigma * u.abs().powf(sigma - 1.0),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, ReactionSpec::None)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 1.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("sigma must exceed 1, got {sigma}")))
    }
}

/// `f(x, t, u)`; all implemented families are independent of `x`.
pub fn reaction_eval(spec: &ReactionSpec, _x: &[f64], t: f64, u: f64) -> f64 {
    spec.eval(t, u)
}
