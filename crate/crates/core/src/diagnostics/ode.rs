//! Closed-form comparison ODEs for the `g` functional.

use serde::Serialize;

use crate::error::{Error, Result};

/// Data of `g' = -λ g + C g^σ`, `g(0) = g₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeParams {
    pub lambda1: f64,
    pub c: f64,
    pub sigma: f64,
    pub g0: f64,
}

impl OdeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 1.0) || !self.sigma.is_finite() {
            return Err(Error::Parameter(format!("sigma must exceed 1, got {}", self.sigma)));
        }
        if !(self.lambda1 >= 0.0) || !self.lambda1.is_finite() {
            return Err(Error::Parameter(format!("lambda1 must be nonnegative, got {}", self.lambda1)));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::Parameter(format!("C must be positive, got {}", self.c)));
        }
        if !(self.g0 >= 0.0) || !self.g0.is_finite() {
            return Err(Error::Parameter(format!("g0 must be nonnegative, got {}", self.g0)));
        }
        Ok(())
    }
}

/// Exact solution of the Bernoulli equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernoulliSolution {
    pub params: OdeParams,
    pub blows_up: bool,
    pub t_blowup: Option<f64>,
}

impl BernoulliSolution {
    /// `h = g^{1-σ}` solves the linear equation `h' = (σ-1)(λ h - C)`.
    fn h(&self, t: f64) -> f64 {
        let OdeParams { lambda1, c, sigma, g0 } = self.params;
        let a = (sigma - 1.0) * lambda1;
        let h0 = g0.powf(1.0 - sigma);
        let growth = (a * t).exp();
        // (e^{at} - 1)/a, continuous at a = 0.
        let ramp = if a * t == 0.0 { t } else { (a * t).exp_m1() / a };
        h0 * growth - (sigma - 1.0) * c * ramp
    }

    /// `g(t)`; infinite at and after the blow-up time.
    pub fn eval(&self, t: f64) -> f64 {
        if self.params.g0 == 0.0 {
            return 0.0;
        }
        if let Some(tb) = self.t_blowup {
            if t >= tb {
                return f64::INFINITY;
            }
        }
        let h = self.h(t);
        if h <= 0.0 {
            return f64::INFINITY;
        }
        h.powf(1.0 / (1.0 - self.params.sigma))
    }
}

pub fn bernoulli_blowup(params: OdeParams) -> Result<BernoulliSolution> {
    params.validate()?;
    let OdeParams { lambda1, c, sigma, g0 } = params;
    let (blows_up, t_blowup) = if g0 == 0.0 {
        (false, None)
    } else if lambda1 == 0.0 {
        (true, Some(g0.powf(1.0 - sigma) / ((sigma - 1.0) * c)))
    } else {
        let h0 = g0.powf(1.0 - sigma);
        let ratio = h0 * lambda1 / c;
        if ratio < 1.0 {
            // e^{aT} (C/λ - h₀) = C/λ.
            (true, Some(-(-ratio).ln_1p() / ((sigma - 1.0) * lambda1)))
        } else {
            (false, None)
        }
    };
    Ok(BernoulliSolution { params, blows_up, t_blowup })
}

/// Equilibrium of `g' = -λ g + C g^σ` and the exponent-`1/σ` variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Threshold {
    pub operative: f64,
    pub stated_value: f64,
}

pub fn blowup_threshold(lambda1: f64, c: f64, sigma: f64) -> Threshold {
    let r = lambda1 / c;
    Threshold { operative: r.powf(1.0 / (sigma - 1.0)), stated_value: r.powf(1.0 / sigma) }
}

/// Blow-up time of `ψ' = C₈ ψ^σ`, `ψ(0) = ψ₀`; an upper bound for any
/// `ψ' ≥ C₈ ψ^σ`.
pub fn exp_forced_bound(psi0: f64, c8: f64, sigma: f64) -> Result<f64> {
    if !(psi0 > 0.0) {
        return Err(Error::Parameter(format!("psi0 must be positive, got {psi0}")));
    }
    if !(c8 > 0.0) {
        return Err(Error::Parameter(format!("C8 must be positive, got {c8}")));
    }
    if !(sigma > 1.0) {
        return Err(Error::Parameter(format!("sigma must exceed 1, got {sigma}")));
    }
    Ok(psi0.powf(1.0 - sigma) / (c8 * (sigma - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lambda1: f64, c: f64, sigma: f64, g0: f64) -> OdeParams {
        OdeParams { lambda1, c, sigma, g0 }
    }

    #[test]
    fn separable_square() {
        let s = bernoulli_blowup(p(0.0, 1.0, 2.0, 1.0)).unwrap();
        assert!(s.blows_up);
        assert!((s.t_blowup.unwrap() - 1.0).abs() < 1e-15);
        assert!((s.eval(0.5) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn log_two_blowup() {
        let s = bernoulli_blowup(p(1.0, 1.0, 2.0, 2.0)).unwrap();
        assert!((s.t_blowup.unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(s.eval(1.0), f64::INFINITY);
    }

    #[test]
    fn below_equilibrium_decays() {
        let s = bernoulli_blowup(p(1.0, 1.0, 2.0, 0.5)).unwrap();
        assert!(!s.blows_up && s.t_blowup.is_none());
        assert!(s.eval(10.0) < 1e-4);
        // Exact: g = 1/(1 + e^t).
        assert!((s.eval(1.0) - 1.0 / (1.0 + 1f64.exp())).abs() < 1e-12);
    }

    #[test]
    fn invalid_sigma() {
        assert!(matches!(bernoulli_blowup(p(1.0, 1.0, 1.0, 1.0)), Err(Error::Parameter(_))));
    }

    #[test]
    fn thresholds() {
        let t = blowup_threshold(1.0, 1.0, 3.0);
        assert_eq!((t.operative, t.stated_value), (1.0, 1.0));
        let t = blowup_threshold(4.0, 1.0, 2.0);
        assert!((t.operative - 4.0).abs() < 1e-12 && (t.stated_value - 2.0).abs() < 1e-12);
        assert!((blowup_threshold(1.0, 4.0, 2.0).operative - 0.25).abs() < 1e-12);
    }

    #[test]
    fn forced_bound() {
        assert_eq!(exp_forced_bound(1.0, 1.0, 2.0).unwrap(), 1.0);
        assert!((exp_forced_bound(2.0, 1.0, 3.0).unwrap() - 0.125).abs() < 1e-15);
        assert!(exp_forced_bound(0.0, 1.0, 2.0).is_err());
    }
}
