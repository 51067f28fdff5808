//! Admissible weights ω(x) and numerical checks of the Muckenhoupt and
//! doubling conditions they are assumed to satisfy.
//!
//! All weights here are radial: ω(x) = w(|x|). The Muckenhoupt exponent
//! (`theta_mk`) and the power-law exponent of `ω = |x|^θ` are independent
//! parameters even though both are conventionally written θ.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{radial_ball_integral, QuadTolerance};

/// Radial profile sampled at strictly increasing radii, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialTable {
    positions: Vec<f64>,
    values: Vec<f64>,
}

impl RadialTable {
    pub fn new(positions: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if positions.len() != values.len() {
            return Err(Error::Shape(format!("{} positions but {} values", positions.len(), values.len())));
        }
        if positions.len() < 2 {
            return Err(Error::Parameter("a weight table needs at least two samples".into()));
        }
        for (i, (&x, &v)) in positions.iter().zip(&values).enumerate() {
            if !x.is_finite() || !v.is_finite() {
                return Err(Error::NonFinite(format!("weight sample {i} is not finite")));
            }
            if x < 0.0 {
                return Err(Error::Parameter(format!("weight position {x} is negative")));
            }
            if v < 0.0 {
                return Err(Error::Parameter(format!("weight value {v} at {x} is negative")));
            }
        }
        if positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("weight positions must be strictly increasing".into()));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::Parameter("weight is identically zero".into()));
        }
        Ok(Self { positions, values })
    }

    /// Parses a two-column CSV `(position, value)` with an optional header row.
    /// Lines starting with `#` are comments.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut positions = Vec::new();
        let mut values = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            let line = record.position().map_or(row + 1, |p| p.line() as usize);
            if record.len() != 2 {
                return Err(Error::Parse { line, msg: format!("expected 2 columns, found {}", record.len()) });
            }
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(v) => {
                    positions.push(v[0]);
                    values.push(v[1]);
                }
                // A non-numeric first row is the header.
                Err(_) if positions.is_empty() && row == 0 => continue,
                Err(e) => {
                    return Err(Error::Parse { line, msg: format!("invalid number: {e}") });
                }
            }
        }
        Self::new(positions, values)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Below the first sample the boundary value is used; beyond the last
    /// sample evaluation is an error.
    pub fn eval(&self, r: f64) -> Result<f64> {
        let lo = self.positions[0];
        let hi = *self.positions.last().unwrap();
        if r > hi || r.is_nan() {
            return Err(Error::OutOfRange { x: r, lo, hi });
        }
        if r <= lo {
            return Ok(self.values[0]);
        }
        let k = self.positions.partition_point(|&p| p < r).max(1);
        let (x0, x1) = (self.positions[k - 1], self.positions[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        Ok(v0 + (v1 - v0) * (r - x0) / (x1 - x0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    Constant,
    Power { exponent: f64 },
    Tabulated(RadialTable),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSpec {
    pub kind: WeightKind,
    /// Muckenhoupt exponent (> 1).
    pub theta_mk: f64,
    /// Doubling exponent.
    pub mu: f64,
}

impl WeightSpec {
    pub fn constant() -> Self {
        Self { kind: WeightKind::Constant, theta_mk: 2.0, mu: 1.0 }
    }

    pub fn power(exponent: f64) -> Self {
        Self { kind: WeightKind::Power { exponent }, theta_mk: 2.0, mu: 1.0 }
    }

    pub fn tabulated(table: RadialTable) -> Self {
        Self { kind: WeightKind::Tabulated(table), theta_mk: 2.0, mu: 1.0 }
    }

    pub fn with_theta_mk(mut self, theta_mk: f64) -> Self {
        self.theta_mk = theta_mk;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, WeightKind::Constant)
            || matches!(self.kind, WeightKind::Power { exponent } if exponent == 0.0)
    }

    pub fn power_exponent(&self) -> Option<f64> {
        match self.kind {
            WeightKind::Constant => Some(0.0),
            WeightKind::Power { exponent } => Some(exponent),
            WeightKind::Tabulated(_) => None,
        }
    }

    /// Structural validity independent of any problem.
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_mk > 1.0) || !self.theta_mk.is_finite() {
            return Err(Error::Parameter(format!("Muckenhoupt exponent must exceed 1, got {}", self.theta_mk)));
        }
        if !self.mu.is_finite() {
            return Err(Error::Parameter("doubling exponent must be finite".into()));
        }
        if let WeightKind::Power { exponent } = self.kind {
            if !exponent.is_finite() {
                return Err(Error::Parameter("power exponent must be finite".into()));
            }
        }
        Ok(())
    }

    /// Constraints that apply when the weight drives a problem with
    /// exponent `p` in dimension `n`: `0 ≤ θ < p` and `μ < 1 + p/n`.
    pub fn validate_for_problem(&self, p: f64, n: usize) -> Result<()> {
        self.validate()?;
        if let WeightKind::Power { exponent } = self.kind {
            if !(0.0..p).contains(&exponent) {
                return Err(Error::Parameter(format!(
                    "power exponent must satisfy 0 <= theta < p = {p}, got {exponent}"
                )));
            }
        }
        let bound = 1.0 + p / n as f64;
        if !(self.mu < bound) {
            return Err(Error::Parameter(format!("doubling exponent mu = {} must be < 1 + p/n = {bound}", self.mu)));
        }
        Ok(())
    }

    pub fn eval_radius(&self, r: f64) -> Result<f64> {
        let r = r.abs();
        match &self.kind {
            WeightKind::Constant => Ok(1.0),
            WeightKind::Power { exponent } => {
                if *exponent == 0.0 {
                    Ok(1.0)
                } else if r == 0.0 && *exponent < 0.0 {
                    Err(Error::Divergent(format!("|x|^{exponent} is unbounded at the origin")))
                } else {
                    Ok(r.powf(*exponent))
                }
            }
            WeightKind::Tabulated(t) => t.eval(r),
        }
    }

    /// ω(x) for a point given by its coordinates.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("evaluation point".into()));
        }
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        self.eval_radius(r)
    }

    fn breaks(&self) -> &[f64] {
        match &self.kind {
            WeightKind::Tabulated(t) => t.positions(),
            _ => &[],
        }
    }

    fn check_power_integrable(&self, exponent: f64, n: usize, what: &str) -> Result<()> {
        if exponent <= -(n as f64) {
            return Err(Error::Divergent(format!(
                "{what} behaves like |x|^{exponent} near 0, not integrable in dimension {n}"
            )));
        }
        Ok(())
    }

    /// ω(B_ρ) = ∫_{B_ρ} ω dx over the full ball in `R^n`.
    pub fn ball_mass(&self, rho: f64, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::Parameter("dimension must be at least 1".into()));
        }
        if let WeightKind::Power { exponent } = self.kind {
            self.check_power_integrable(exponent, n, "weight")?;
        }
        let f = |r: f64| self.eval_radius(r).unwrap_or(f64::NAN);
        self.eval_radius(rho)?;
        radial_ball_integral(f, rho, n, self.breaks(), QuadTolerance::default())
    }

    /// ∫_{B_ρ} ω^{-1/(θ_mk-1)} dx.
    pub fn dual_ball_mass(&self, rho: f64, n: usize) -> Result<f64> {
        let q = -1.0 / (self.theta_mk - 1.0);
        if let WeightKind::Power { exponent } = self.kind {
            self.check_power_integrable(exponent * q, n, "dual weight")?;
        }
        self.eval_radius(rho)?;
        let f = |r: f64| match self.eval_radius(r) {
            Ok(w) if w > 0.0 => w.powf(q),
            Ok(_) => f64::INFINITY,
            Err(_) => f64::NAN,
        };
        radial_ball_integral(f, rho, n, self.breaks(), QuadTolerance::default())
    }

    /// ess sup of ω over B_ρ, sampled on a fine radial grid (plus table nodes).
    pub fn ess_sup_on_ball(&self, rho: f64) -> Result<f64> {
        match self.kind {
            WeightKind::Constant => Ok(1.0),
            WeightKind::Power { exponent } if exponent >= 0.0 => self.eval_radius(rho),
            WeightKind::Power { .. } => Ok(f64::INFINITY),
            WeightKind::Tabulated(ref t) => {
                let mut sup = t.eval(rho)?;
                for (&x, &v) in t.positions().iter().zip(t.values()) {
                    if x <= rho {
                        sup = sup.max(v);
                    }
                }
                Ok(sup)
            }
        }
    }
}

/// Thresholds used to decide whether a sampled supremum is "finite".
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassCheckOptions {
    /// Sampled constants above this cap count as unbounded.
    pub cap: f64,
    /// Relative growth per sample towards the ends of the radius grid that
    /// counts as an unbounded trend.
    pub trend_tol: f64,
}

impl Default for ClassCheckOptions {
    fn default() -> Self {
        Self { cap: 1e6, trend_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MuckenhouptReport {
    pub passes: bool,
    pub worst_constant: f64,
    /// `(r, constant(r))` per radius, in increasing r.
    pub constants: Vec<(f64, f64)>,
    /// sup_r of ess sup_{B_r} ω · r^n / ω(B_r).
    pub ess_sup_constant: f64,
    pub diagnostic: Option<String>,
}

/// True when the last three samples grow strictly by more than `tol` each.
fn growing_tail(values: &[f64], tol: f64) -> bool {
    if values.len() < 3 {
        return false;
    }
    values[values.len() - 3..].windows(2).all(|w| w[1] > w[0] * (1.0 + tol))
}

/// Samples the A_θ product
/// `ω(B_r) · [∫_{B_r} ω^{-1/(θ-1)}]^{θ-1} / r^{nθ}` over the supplied radii.
pub fn check_muckenhoupt(
    spec: &WeightSpec,
    n: usize,
    radii: &[f64],
    opts: ClassCheckOptions,
) -> Result<MuckenhouptReport> {
    if radii.is_empty() {
        return Err(Error::Parameter("radius list is empty".into()));
    }
    if radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Parameter("radii must be positive".into()));
    }
    spec.validate()?;
    let theta = spec.theta_mk;
    let mut radii = radii.to_vec();
    radii.sort_by(f64::total_cmp);
    radii.dedup();

    let fail = |msg: String, constants: Vec<(f64, f64)>| MuckenhouptReport {
        passes: false,
        worst_constant: f64::INFINITY,
        constants,
        ess_sup_constant: f64::INFINITY,
        diagnostic: Some(msg),
    };

    let mut constants = Vec::with_capacity(radii.len());
    let mut ess_sup_constant: f64 = 0.0;
    for &r in &radii {
        let mass = match spec.ball_mass(r, n) {
            Ok(m) => m,
            Err(e) => return Ok(fail(format!("weight mass at r = {r}: {e}"), constants)),
        };
        let dual = match spec.dual_ball_mass(r, n) {
            Ok(d) => d,
            Err(e) => return Ok(fail(format!("dual integral at r = {r}: {e}"), constants)),
        };
        let c = mass * dual.powf(theta - 1.0) / r.powf(n as f64 * theta);
        constants.push((r, c));
        if mass > 0.0 {
            let es = spec.ess_sup_on_ball(r)?;
            ess_sup_constant = ess_sup_constant.max(es * r.powi(n as i32) / mass);
        } else {
            ess_sup_constant = f64::INFINITY;
        }
    }
    let values: Vec<f64> = constants.iter().map(|c| c.1).collect();
    let worst = values.iter().copied().fold(0.0, f64::max);
    let reversed: Vec<f64> = values.iter().rev().copied().collect();

    let mut diagnostic = None;
    let mut passes = true;
    if !worst.is_finite() || worst > opts.cap {
        passes = false;
        diagnostic = Some(format!("A_theta constant {worst:e} exceeds cap {:e}", opts.cap));
    } else if !ess_sup_constant.is_finite() || ess_sup_constant > opts.cap {
        passes = false;
        diagnostic = Some(format!("ess-sup constant {ess_sup_constant:e} exceeds cap"));
    } else if growing_tail(&values, opts.trend_tol) {
        passes = false;
        diagnostic = Some("A_theta constant grows with r at the large-radius end".into());
    } else if growing_tail(&reversed, opts.trend_tol) {
        passes = false;
        diagnostic = Some("A_theta constant grows as r -> 0".into());
    }
    Ok(MuckenhouptReport { passes, worst_constant: worst, constants, ess_sup_constant, diagnostic })
}

#[derive(Debug, Clone, Serialize)]
pub struct DoublingReport {
    pub passes: bool,
    pub worst_ratio: f64,
    /// `(s, h, normalized ratio)` sorted by s/h.
    pub ratios: Vec<(f64, f64, f64)>,
    pub diagnostic: Option<String>,
}

/// Samples `[ω(B_s)/ω(B_h)] / (s/h)^{nμ}` over the supplied radius pairs.
pub fn check_doubling(
    spec: &WeightSpec,
    n: usize,
    mu: f64,
    radius_pairs: &[(f64, f64)],
    opts: ClassCheckOptions,
) -> Result<DoublingReport> {
    if radius_pairs.is_empty() {
        return Err(Error::Parameter("radius pair list is empty".into()));
    }
    for &(s, h) in radius_pairs {
        if !(h > 0.0 && s >= h) {
            return Err(Error::Parameter(format!("radius pair ({s}, {h}) must satisfy s >= h > 0")));
        }
    }
    let mut pairs = radius_pairs.to_vec();
    pairs.sort_by(|a, b| (a.0 / a.1).total_cmp(&(b.0 / b.1)));

    let mut ratios = Vec::with_capacity(pairs.len());
    for &(s, h) in &pairs {
        let big = spec.ball_mass(s, n)?;
        let small = spec.ball_mass(h, n)?;
        if small == 0.0 {
            return Err(Error::DegenerateBall { radius: h });
        }
        let ratio = (big / small) / (s / h).powf(n as f64 * mu);
        ratios.push((s, h, ratio));
    }
    // Largest normalized ratio per distinct s/h, in increasing s/h.
    let mut envelope: Vec<(f64, f64)> = Vec::new();
    for &(s, h, v) in &ratios {
        match envelope.last_mut() {
            Some((q, m)) if ((s / h) / *q - 1.0).abs() <= 1e-9 => *m = m.max(v),
            _ => envelope.push((s / h, v)),
        }
    }
    let values: Vec<f64> = envelope.iter().map(|e| e.1).collect();
    let worst = values.iter().copied().fold(0.0, f64::max);
    let (passes, diagnostic) = if !worst.is_finite() || worst > opts.cap {
        (false, Some(format!("doubling ratio {worst:e} exceeds cap {:e}", opts.cap)))
    } else if growing_tail(&values, opts.trend_tol) {
        (false, Some("normalized doubling ratio keeps growing with s/h".into()))
    } else {
        (true, None)
    };
    Ok(DoublingReport { passes, worst_ratio: worst, ratios, diagnostic })
}

/// `r · 2^{j/per_octave}` for `j` in `lo..=hi`.
pub fn geometric_radii(r: f64, lo: i32, hi: i32, per_octave: u32) -> Vec<f64> {
    let k = per_octave.max(1) as f64;
    (lo * per_octave as i32..=hi * per_octave as i32).map(|j| r * 2f64.powf(j as f64 / k)).collect()
}
