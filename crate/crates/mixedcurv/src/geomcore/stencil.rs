//! Central finite-difference stencils on functions of chart coordinates.
//!
//! Generic over the output type so the same stencils serve metric matrices,
//! vector fields, immersion maps and scalar fields.

use std::ops::{Add, Mul, Sub};

use crate::geomcore::{DiffConfig, DiffScheme, StepScaling};

/// Anything that can be combined linearly: `f64`, `DVector`, `DMatrix`.
pub trait Linear: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl<T> Linear for T where T: Clone + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> {}

/// Step along axis `dir` at point `x` under the configured scaling.
pub fn step(cfg: &DiffConfig, x: &[f64], dir: usize) -> f64 {
    match cfg.step_scaling {
        StepScaling::Absolute => cfg.base_step,
        StepScaling::RelativeToCoordinate => cfg.base_step * x[dir].abs().max(1.0),
    }
}

/// Half-width of the stencil in units of the step (2 for the 4th-order
/// scheme, 1 for the 2nd-order one).
pub fn extent(cfg: &DiffConfig) -> usize {
    match cfg.scheme {
        DiffScheme::Central2 => 1,
        DiffScheme::Central4 => 2,
    }
}

fn shifted(x: &[f64], dir: usize, delta: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[dir] += delta;
    y
}

/// First derivative along `dir`.
pub fn d1<T: Linear>(f: &dyn Fn(&[f64]) -> T, x: &[f64], dir: usize, cfg: &DiffConfig) -> T {
    let h = step(cfg, x, dir);
    match cfg.scheme {
        DiffScheme::Central2 => {
            let fp = f(&shifted(x, dir, h));
            let fm = f(&shifted(x, dir, -h));
            (fp - fm) * (0.5 / h)
        }
        DiffScheme::Central4 => {
            let f2p = f(&shifted(x, dir, 2.0 * h));
            let fp = f(&shifted(x, dir, h));
            let fm = f(&shifted(x, dir, -h));
            let f2m = f(&shifted(x, dir, -2.0 * h));
            (fp - fm) * (8.0 / (12.0 * h)) + (f2m - f2p) * (1.0 / (12.0 * h))
        }
    }
}

/// Pure second derivative along `dir`.
pub fn d2_diag<T: Linear>(f: &dyn Fn(&[f64]) -> T, x: &[f64], dir: usize, cfg: &DiffConfig) -> T {
    let h = step(cfg, x, dir);
    let f0 = f(x);
    match cfg.scheme {
        DiffScheme::Central2 => {
            let fp = f(&shifted(x, dir, h));
            let fm = f(&shifted(x, dir, -h));
            (fp + fm - f0.clone() * 2.0) * (1.0 / (h * h))
        }
        DiffScheme::Central4 => {
            let f2p = f(&shifted(x, dir, 2.0 * h));
            let fp = f(&shifted(x, dir, h));
            let fm = f(&shifted(x, dir, -h));
            let f2m = f(&shifted(x, dir, -2.0 * h));
            ((fp + fm) * 16.0 - (f2p + f2m) - f0 * 30.0) * (1.0 / (12.0 * h * h))
        }
    }
}

/// Mixed second derivative `∂_a ∂_b` with `a != b`, as the outer stencil of
/// the inner first derivative.
pub fn d2_cross<T: Linear>(
    f: &dyn Fn(&[f64]) -> T,
    x: &[f64],
    a: usize,
    b: usize,
    cfg: &DiffConfig,
) -> T {
    let inner = |y: &[f64]| d1(f, y, b, cfg);
    d1(&inner, x, a, cfg)
}

/// Second derivative dispatch.
pub fn d2<T: Linear>(f: &dyn Fn(&[f64]) -> T, x: &[f64], a: usize, b: usize, cfg: &DiffConfig) -> T {
    if a == b {
        d2_diag(f, x, a, cfg)
    } else {
        d2_cross(f, x, a, b, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg4() -> DiffConfig {
        DiffConfig::default()
    }

    #[test]
    fn first_derivative_of_sin() {
        let f = |x: &[f64]| x[0].sin();
        let d = d1(&f, &[0.7], 0, &cfg4());
        assert!((d - 0.7_f64.cos()).abs() < 1e-10);
    }

    #[test]
    fn second_derivatives() {
        let f = |x: &[f64]| x[0].powi(3) * x[1].powi(2);
        let daa = d2(&f, &[1.3, 0.4], 0, 0, &cfg4());
        assert!((daa - 6.0 * 1.3 * 0.4_f64.powi(2)).abs() < 1e-6);
        let dab = d2(&f, &[1.3, 0.4], 0, 1, &cfg4());
        assert!((dab - 6.0 * 1.3_f64.powi(2) * 0.4).abs() < 1e-6);
    }

    #[test]
    fn central2_lower_order() {
        let f = |x: &[f64]| x[0].exp();
        let c2 = DiffConfig { scheme: DiffScheme::Central2, base_step: 1e-3, ..DiffConfig::default() };
        let c4 = DiffConfig { scheme: DiffScheme::Central4, base_step: 1e-3, ..DiffConfig::default() };
        let e2 = (d1(&f, &[0.2], 0, &c2) - 0.2_f64.exp()).abs();
        let e4 = (d1(&f, &[0.2], 0, &c4) - 0.2_f64.exp()).abs();
        assert!(e4 < e2);
    }
}
