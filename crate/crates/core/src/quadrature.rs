//! Adaptive Gauss–Kronrod quadrature and radial ball integrals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

const MAX_SEGMENTS: usize = 4000;

#[derive(Debug, Clone, Copy)]
pub struct QuadTolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for QuadTolerance {
    fn default() -> Self {
        Self { rel: 1e-8, abs: 1e-300 }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut gauss = fc * WG[3];
    let mut kronrod = fc * WGK[7];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// The segment with the largest error estimate is bisected until the total
/// estimate falls below `max(abs, rel * |I|)`. Non-finite samples or an
/// exhausted segment budget are reported as divergence.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: QuadTolerance) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Parameter(format!("integration bounds [{a}, {b}] must be finite")));
    }
    let (value, error) = kronrod15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    loop {
        if !total.is_finite() || !total_err.is_finite() {
            return Err(Error::Divergent(format!("non-finite integrand on [{a}, {b}]")));
        }
        if total_err <= tol.abs.max(tol.rel * total.abs()) {
            return Ok(total);
        }
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::Divergent(format!(
                "no convergence on [{a}, {b}] after {MAX_SEGMENTS} segments (estimate {total:e} ± {total_err:e})"
            )));
        }
        let seg = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Segment can no longer be split in floating point.
            return Err(Error::Divergent(format!(
                "interval collapsed near {mid:e} (estimate {total:e} ± {total_err:e})"
            )));
        }
        let (lv, le) = kronrod15(&f, seg.a, mid);
        let (rv, re) = kronrod15(&f, mid, seg.b);
        total += lv + rv - seg.value;
        total_err += le + re - seg.error;
        heap.push(Segment { a: seg.a, b: mid, value: lv, error: le });
        heap.push(Segment { a: mid, b: seg.b, value: rv, error: re });
    }
}

/// Integrates `f` over consecutive pieces `[breaks[i], breaks[i+1]]`.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: QuadTolerance) -> Result<f64> {
    let mut sum = 0.0;
    for w in breaks.windows(2) {
        sum += integrate(&f, w[0], w[1], tol)?;
    }
    Ok(sum)
}

/// Surface measure of the unit sphere in `R^n`: `2 π^{n/2} / Γ(n/2)`.
pub fn unit_sphere_area(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => unit_sphere_area(n - 2) * 2.0 * PI / (n as f64 - 2.0),
    }
}

/// `|S^{n-1}| ∫₀^ρ f(r) r^{n-1} dr` for a radial profile `f`.
///
/// The substitution `r = ρ s²` smooths algebraic endpoint behaviour at the
/// origin, so `r^a` integrands with `a > -n` converge quickly.
pub fn radial_ball_integral<F: Fn(f64) -> f64>(
    f: F,
    rho: f64,
    n: usize,
    breaks: &[f64],
    tol: QuadTolerance,
) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Parameter(format!("ball radius must be positive, got {rho}")));
    }
    let jac = |r: f64| r.powi(n as i32 - 1);
    let integrand = |s: f64| {
        let r = rho * s * s;
        if r == 0.0 {
            return 0.0;
        }
        f(r) * jac(r) * 2.0 * rho * s
    };
    let mut pts = vec![0.0];
    pts.extend(breaks.iter().copied().filter(|&b| b > 0.0 && b < rho).map(|b| (b / rho).sqrt()));
    pts.push(1.0);
    let value = integrate_pieces(integrand, &pts, tol)?;
    Ok(unit_sphere_area(n) * value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomials_are_exact() {
        let v = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, QuadTolerance::default()).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity_converges() {
        let v = integrate(|x: f64| x.powf(-0.5), 0.0, 1.0, QuadTolerance::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-7);
    }

    #[test]
    fn nonintegrable_reports_divergence() {
        let r = integrate(|x: f64| 1.0 / x, 0.0, 1.0, QuadTolerance::default());
        assert!(matches!(r, Err(Error::Divergent(_))));
    }

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn unit_disk_area() {
        let v = radial_ball_integral(|_| 1.0, 1.0, 2, &[], QuadTolerance::default()).unwrap();
        assert!((v - PI).abs() < 1e-12);
    }
}
