//! Shared helpers for integration tests. The ODE integrator here is written
//! independently of the library so it can serve as an oracle.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use degenflow::{build_grid, Field, Grid, GridMode};

/// Dormand–Prince 5(4) with standard step control. Integrates the scalar
/// `y' = f(t, y)` from `t0` to `t1`, stopping early if `y` exceeds `cap`.
/// Returns `(t_reached, y)`.
pub fn rk45(f: impl Fn(f64, f64) -> f64, t0: f64, y0: f64, t1: f64, rtol: f64, atol: f64, cap: f64) -> (f64, f64) {
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] =
        [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

    let (mut t, mut y) = (t0, y0);
    let mut h = (t1 - t0) * 1e-4;
    while t < t1 && y.abs() < cap {
        h = h.min(t1 - t);
        let mut k = [0.0; 7];
        for s in 0..7 {
            let ys = y + h * (0..s).map(|j| A[s][j] * k[j]).sum::<f64>();
            k[s] = f(t + C[s] * h, ys);
        }
        let y5 = y + h * (0..7).map(|s| B5[s] * k[s]).sum::<f64>();
        let y4 = y + h * (0..7).map(|s| B4[s] * k[s]).sum::<f64>();
        let scale = atol + rtol * y.abs().max(y5.abs());
        let err = ((y5 - y4) / scale).abs();
        let err = if err.is_finite() { err } else { 1e10 };
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
        if h < 1e-16 * t.abs().max(1.0) {
            break;
        }
    }
    (t, y)
}

pub fn interval(resolution: usize) -> Arc<Grid> {
    Arc::new(build_grid(GridMode::Interval, 1.0, resolution).unwrap())
}

pub fn square(resolution: usize) -> Arc<Grid> {
    Arc::new(build_grid(GridMode::Tensor2d, 1.0, resolution).unwrap())
}

pub fn sine(grid: Arc<Grid>, amplitude: f64) -> Field {
    Field::from_fn(grid, |x| amplitude * x.iter().map(|&xi| (PI * xi).sin()).product::<f64>())
}

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn config_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}
