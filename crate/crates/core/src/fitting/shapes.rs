//! Exponential peak shapes convolved with a Gaussian instrument response,
//! in closed form, plus a discrete convolution used to cross-check them.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::erfc;

use crate::error::{invalid, require_non_negative, Result};

/// Scaled complementary error function e^{x²}·erfc(x) for x ≥ 0.
pub fn erfcx(x: f64) -> f64 {
    if x <= 25.0 {
        (x * x).exp() * erfc(x)
    } else {
        let r = 1.0 / (x * x);
        let series = 1.0 - r * (0.5 - r * (0.75 - r * (1.875 - r * (6.5625 - r * 29.53125))));
        series / (x * PI.sqrt())
    }
}

/// Unit-area Gaussian density.
pub fn gaussian(t: f64, sigma: f64) -> f64 {
    (-0.5 * (t / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
}

/// e^{−t/τ}·H(t) convolved with a unit-area Gaussian of width σ.
pub fn one_sided_exp_conv(t: f64, tau: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return if t > 0.0 {
            (-t / tau).exp()
        } else if t == 0.0 {
            0.5
        } else {
            0.0
        };
    }
    let x = (sigma / tau - t / sigma) / SQRT_2;
    if x > 0.0 {
        0.5 * (-0.5 * (t / sigma).powi(2)).exp() * erfcx(x)
    } else {
        // exponent is ≤ 0 on this branch
        0.5 * (0.5 * (sigma / tau).powi(2) - t / tau).exp() * erfc(x)
    }
}

/// e^{−|t|/τ} convolved with a unit-area Gaussian of width σ. The area 2τ
/// is preserved; the height at zero drops below 1 as σ grows.
pub fn two_sided_exp_conv(t: f64, tau: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return (-t.abs() / tau).exp();
    }
    one_sided_exp_conv(t, tau, sigma) + one_sided_exp_conv(-t, tau, sigma)
}

/// Gaussian-blurred e^{−|t|/τ₁}(1 − v·e^{−2|t|/τ_deph}) with τ_deph set by
/// 1/τ₂ = 1/(2τ₁) + 1/τ_deph, so that the dip term decays with τ₂/2.
pub fn hom_dip_conv(t: f64, tau1: f64, tau2: f64, v: f64, sigma: f64) -> f64 {
    two_sided_exp_conv(t, tau1, sigma) - v * two_sided_exp_conv(t, 0.5 * tau2, sigma)
}

/// Discrete convolution of samples on a uniform grid with a unit-sum
/// Gaussian kernel truncated at ±6σ. Values beyond the grid are taken as 0.
pub fn convolve_gaussian(xs: &[f64], ys: &[f64], sigma: f64) -> Result<Vec<f64>> {
    require_non_negative("sigma", sigma)?;
    if xs.len() != ys.len() {
        return Err(invalid("ys", "must have one value per grid point"));
    }
    if xs.len() < 2 || sigma == 0.0 {
        return Ok(ys.to_vec());
    }
    let dx = xs[1] - xs[0];
    if !(dx > 0.0) {
        return Err(invalid("xs", "grid must be strictly increasing"));
    }
    let uniform = xs.windows(2).all(|w| ((w[1] - w[0]) - dx).abs() <= 1e-9 * dx.max(xs[0].abs()));
    if !uniform {
        return Err(invalid("xs", "grid must be uniform"));
    }
    let half = (6.0 * sigma / dx).floor() as isize;
    let mut kernel: Vec<f64> = (-half..=half).map(|j| (-0.5 * (j as f64 * dx / sigma).powi(2)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);

    let n = ys.len() as isize;
    Ok((0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (k, &w) in kernel.iter().enumerate() {
                let src = i - (k as isize - half);
                if (0..n).contains(&src) {
                    acc += w * ys[src as usize];
                }
            }
            acc
        })
        .collect())
}

/// Trapezoid integral on a uniform grid.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}
