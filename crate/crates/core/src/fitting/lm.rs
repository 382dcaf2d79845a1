//! Bounded Levenberg-Marquardt least squares with finite-difference
//! Jacobians.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

/// Identifier of a fitted model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    TwoSidedExpTrain,
    HomDipParallel,
    HomDipOrthogonal,
    Saturation,
    SingleExpDecay,
    BiexpDecay,
}

/// A model curve y = f(p, x). `p` always holds every parameter, fixed or free.
pub trait Model: Sync {
    fn value(&self, p: &[f64], x: f64) -> f64;
}

impl<F: Fn(&[f64], f64) -> f64 + Sync> Model for F {
    fn value(&self, p: &[f64], x: f64) -> f64 {
        self(p, x)
    }
}

/// One parameter with its starting value and bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub fixed: bool,
}

impl Param {
    pub fn free(name: &str, value: f64, lower: f64, upper: f64) -> Self {
        Self { name: name.into(), value, lower, upper, fixed: false }
    }

    pub fn fixed(name: &str, value: f64) -> Self {
        Self { name: name.into(), value, lower: value, upper: value, fixed: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: ModelId,
    pub params: Vec<Param>,
}

impl ModelSpec {
    pub fn new(model_id: ModelId, params: Vec<Param>) -> Self {
        Self { model_id, params }
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.iter().all(|p| p.fixed) {
            return Err(invalid("params", "at least one parameter must be free"));
        }
        for p in &self.params {
            if p.lower.is_nan() || p.upper.is_nan() || p.lower > p.upper {
                return Err(invalid("params", format!("{}: invalid bounds [{}, {}]", p.name, p.lower, p.upper)));
            }
            if !(p.value.is_finite() && p.value >= p.lower && p.value <= p.upper) {
                return Err(invalid("params", format!("{}: start {} outside [{}, {}]", p.name, p.value, p.lower, p.upper)));
            }
        }
        Ok(())
    }
}

/// Optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Stop when an accepted step lowers χ² by less than this fraction.
    pub chi2_rtol: f64,
    /// Stop when every parameter moves by less than this fraction.
    pub step_rtol: f64,
    /// Scale covariance by the reduced χ².
    pub scale_covariance: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 500, chi2_rtol: 1e-10, step_rtol: 1e-10, scale_covariance: true }
    }
}

/// Fitted parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
    pub fixed: bool,
    pub at_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model_id: ModelId,
    pub params: Vec<FitParam>,
    /// Covariance over all parameters (rows/columns of fixed ones are 0).
    pub covariance: Vec<Vec<f64>>,
    /// √χ² of the weighted residuals.
    pub residual_norm: f64,
    pub reduced_chi2: f64,
    pub n_points: usize,
    pub converged: bool,
    pub n_iter: usize,
    /// sha256 of the fitted (x, y, weight) data.
    pub data_digest: String,
}

impl FitResult {
    fn index(&self, name: &str) -> usize {
        self.params
            .iter()
            .position(|p| p.name == name)
            .unwrap_or_else(|| panic!("fit has no parameter {name}"))
    }

    pub fn value(&self, name: &str) -> f64 {
        self.params[self.index(name)].value
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.params[self.index(name)].sigma
    }

    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }

    pub fn any_at_bound(&self) -> bool {
        self.params.iter().any(|p| p.at_bound)
    }

    /// 1σ of a derived quantity with the given gradient over all parameters.
    pub fn propagate(&self, gradient: &[f64]) -> f64 {
        let mut var = 0.0;
        for (i, gi) in gradient.iter().enumerate() {
            for (j, gj) in gradient.iter().enumerate() {
                var += gi * self.covariance[i][j] * gj;
            }
        }
        var.max(0.0).sqrt()
    }

    /// 1σ of `f(params)` by central differences through the covariance.
    pub fn propagate_fn(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let p = self.values();
        let grad: Vec<f64> = (0..p.len())
            .map(|i| {
                if self.params[i].fixed {
                    return 0.0;
                }
                let h = 1e-6 * (p[i].abs() + 1e-3);
                let mut a = p.clone();
                let mut b = p.clone();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect();
        self.propagate(&grad)
    }
}

/// sha256 over the little-endian bytes of the fitted data.
pub fn data_digest(xs: &[f64], ys: &[f64], weights: &[f64]) -> String {
    let mut h = Sha256::new();
    for s in [xs, ys, weights] {
        for v in s {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Poisson weights 1/max(y, 1) for count data.
pub fn poisson_weights(ys: &[f64]) -> Vec<f64> {
    ys.iter().map(|&y| 1.0 / y.max(1.0)).collect()
}

struct Problem<'a, M: Model + ?Sized> {
    model: &'a M,
    xs: &'a [f64],
    ys: &'a [f64],
    sqrt_w: Vec<f64>,
    free: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<M: Model + ?Sized> Problem<'_, M> {
    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        self.xs
            .par_iter()
            .zip(self.ys.par_iter())
            .zip(self.sqrt_w.par_iter())
            .map(|((&x, &y), &sw)| sw * (y - self.model.value(p, x)))
            .collect()
    }

    fn chi2(r: &[f64]) -> f64 {
        r.iter().map(|v| v * v).sum()
    }

    /// Jacobian of the model (not the residual) with respect to the free
    /// parameters, weighted. Central differences, one-sided at a bound.
    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let n = self.xs.len();
        let mut jac = DMatrix::<f64>::zeros(n, self.free.len());
        for (col, &k) in self.free.iter().enumerate() {
            let h = 1e-6 * (p[k].abs() + 1e-3);
            let mut hi = p.to_vec();
            let mut lo = p.to_vec();
            hi[k] = (p[k] + h).min(self.upper[k]);
            lo[k] = (p[k] - h).max(self.lower[k]);
            let span = hi[k] - lo[k];
            if span <= 0.0 {
                continue;
            }
            let rh = self.residuals(&hi);
            let rl = self.residuals(&lo);
            for i in 0..n {
                // residual = sw(y − f), so df = −dr
                jac[(i, col)] = (rl[i] - rh[i]) / span;
            }
        }
        jac
    }
}

/// Minimizes Σ wᵢ(yᵢ − f(p, xᵢ))² over the free parameters of `spec`.
///
/// Steps are only accepted when χ² decreases. Free parameters are clamped
/// to their bounds. Returns the best point found with `converged = false`
/// when the iteration limit is reached or the damping diverges.
pub fn fit_curve<M: Model + ?Sized>(
    model: &M,
    spec: &ModelSpec,
    xs: &[f64],
    ys: &[f64],
    weights: Option<&[f64]>,
    options: &FitOptions,
) -> Result<FitResult> {
    spec.validate()?;
    if xs.len() != ys.len() {
        return Err(invalid("ys", "must have one value per x"));
    }
    let weights: Vec<f64> = match weights {
        Some(w) if w.len() != xs.len() => return Err(invalid("weights", "must have one value per x")),
        Some(w) => w.to_vec(),
        None => vec![1.0; xs.len()],
    };
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(invalid("weights", "must be finite and >= 0"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(invalid("ys", "data must be finite"));
    }
    let free: Vec<usize> = (0..spec.params.len()).filter(|&i| !spec.params[i].fixed).collect();
    if xs.len() < free.len() {
        return Err(invalid("xs", format!("{} points cannot determine {} parameters", xs.len(), free.len())));
    }
    let prob = Problem {
        model,
        xs,
        ys,
        sqrt_w: weights.iter().map(|w| w.sqrt()).collect(),
        free: free.clone(),
        lower: spec.params.iter().map(|p| p.lower).collect(),
        upper: spec.params.iter().map(|p| p.upper).collect(),
    };

    let data_scale: f64 = ys.iter().zip(&weights).map(|(y, w)| w * y * y).sum::<f64>().max(1e-300);
    let mut p: Vec<f64> = spec.params.iter().map(|q| q.value).collect();
    let mut r = prob.residuals(&p);
    let mut chi2 = Problem::<M>::chi2(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut n_iter = 0;

    while n_iter < options.max_iter {
        n_iter += 1;
        let jac = prob.jacobian(&p);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * DVector::from_column_slice(&r);
        // parameters pinned at a bound with the gradient pushing outward
        // are held for this iteration
        let active: Vec<usize> = (0..free.len())
            .filter(|&c| {
                let k = free[c];
                !((p[k] <= prob.lower[k] && jtr[c] < 0.0) || (p[k] >= prob.upper[k] && jtr[c] > 0.0))
            })
            .collect();
        if active.is_empty() {
            converged = true;
            break;
        }
        let jtj_a = jtj.select_rows(&active).select_columns(&active);
        let jtr_a = jtr.select_rows(&active);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj_a.clone();
            for d in 0..active.len() {
                a[(d, d)] += lambda * jtj_a[(d, d)].max(1e-12);
            }
            let Some(delta) = a.lu().solve(&jtr_a) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p.clone();
            for (col, &c) in active.iter().enumerate() {
                let k = free[c];
                trial[k] = (p[k] + delta[col]).clamp(prob.lower[k], prob.upper[k]);
            }
            let tr = prob.residuals(&trial);
            let tchi2 = Problem::<M>::chi2(&tr);
            if tchi2.is_finite() && tchi2 < chi2 {
                let small_step = free
                    .iter()
                    .all(|&k| (trial[k] - p[k]).abs() <= options.step_rtol * (p[k].abs() + 1e-12));
                let small_gain = chi2 - tchi2 <= options.chi2_rtol * chi2;
                p = trial;
                r = tr;
                chi2 = tchi2;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill direction left: a minimum if the projected
            // gradient vanishes
            converged = chi2 <= 1e-24 * data_scale || projected_gradient_small(&prob, &p, &jtr, &jtj, chi2);
            break;
        }
        if converged {
            break;
        }
    }

    let jac = prob.jacobian(&p);
    let jtj = jac.transpose() * &jac;
    let dof = xs.len().saturating_sub(free.len());
    let reduced = if dof > 0 { chi2 / dof as f64 } else { f64::NAN };
    let scale = if options.scale_covariance && dof > 0 && reduced > 0.0 { reduced } else { 1.0 };
    let cov_free = jtj.clone().try_inverse();
    let np = spec.params.len();
    let mut covariance = vec![vec![0.0; np]; np];
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            covariance[i][j] = match &cov_free {
                Some(c) => c[(a, b)] * scale,
                None if i == j => f64::INFINITY,
                None => 0.0,
            };
        }
    }
    let params = spec
        .params
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let span = q.upper - q.lower;
            let tol = 1e-9 * span.abs().max(q.upper.abs()).max(1e-12);
            let at_bound = !q.fixed && ((p[i] - q.lower).abs() <= tol || (q.upper - p[i]).abs() <= tol);
            let var = covariance[i][i];
            FitParam {
                name: q.name.clone(),
                value: p[i],
                sigma: if q.fixed { 0.0 } else if var.is_nan() { f64::INFINITY } else { var.max(0.0).sqrt() },
                fixed: q.fixed,
                at_bound,
            }
        })
        .collect();
    Ok(FitResult {
        model_id: spec.model_id,
        params,
        covariance,
        residual_norm: chi2.sqrt(),
        reduced_chi2: reduced,
        n_points: xs.len(),
        converged,
        n_iter,
        data_digest: data_digest(xs, ys, &weights),
    })
}

/// True when the residual is orthogonal to every free Jacobian column to
/// within 1e-4 in cosine, ignoring components pushing against a bound.
fn projected_gradient_small<M: Model + ?Sized>(
    prob: &Problem<M>,
    p: &[f64],
    jtr: &DVector<f64>,
    jtj: &DMatrix<f64>,
    chi2: f64,
) -> bool {
    prob.free.iter().enumerate().all(|(col, &k)| {
        let g = jtr[col];
        // at a bound, a gradient pointing outward is allowed
        let at_lower = p[k] <= prob.lower[k] && g < 0.0;
        let at_upper = p[k] >= prob.upper[k] && g > 0.0;
        at_lower || at_upper || g.abs() <= 1e-4 * chi2.sqrt() * jtj[(col, col)].sqrt()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(p: &[f64], x: f64) -> f64 {
        p[0] + p[1] * x
    }

    #[test]
    fn linear_fit_is_exact() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let spec = ModelSpec::new(ModelId::Saturation, vec![
            Param::free("a", 1.0, -10.0, 10.0),
            Param::free("b", 1.0, -10.0, 10.0),
        ]);
        let fit = fit_curve(&line, &spec, &xs, &ys, None, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.value("a"), 3.0, max_relative = 1e-8);
        assert_relative_eq!(fit.value("b"), -0.5, max_relative = 1e-8);
    }

    #[test]
    fn linear_fit_sigmas_match_normal_equations() {
        // unscaled covariance of a weighted line fit has a closed form
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [0.1, 0.9, 2.2, 2.8];
        let spec = ModelSpec::new(ModelId::Saturation, vec![
            Param::free("a", 0.0, -10.0, 10.0),
            Param::free("b", 0.0, -10.0, 10.0),
        ]);
        let opts = FitOptions { scale_covariance: false, ..Default::default() };
        let fit = fit_curve(&line, &spec, &xs, &ys, None, &opts).unwrap();
        let (n, sx, sxx) = (4.0f64, 6.0, 14.0);
        let det = n * sxx - sx * sx;
        assert_relative_eq!(fit.sigma("a"), (sxx / det).sqrt(), max_relative = 1e-5);
        assert_relative_eq!(fit.sigma("b"), (n / det).sqrt(), max_relative = 1e-5);
    }

    #[test]
    fn fixed_parameters_stay_put() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 + x).collect();
        let spec = ModelSpec::new(ModelId::Saturation, vec![Param::fixed("a", 2.0), Param::free("b", 0.0, -5.0, 5.0)]);
        let fit = fit_curve(&line, &spec, &xs, &ys, None, &FitOptions::default()).unwrap();
        assert_eq!(fit.value("a"), 2.0);
        assert_eq!(fit.sigma("a"), 0.0);
        assert_relative_eq!(fit.value("b"), 1.0, max_relative = 1e-8);
    }

    #[test]
    fn bounds_are_respected_and_flagged() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let spec = ModelSpec::new(ModelId::Saturation, vec![Param::fixed("a", 0.0), Param::free("b", 0.5, 0.0, 1.0)]);
        let fit = fit_curve(&line, &spec, &xs, &ys, None, &FitOptions::default()).unwrap();
        assert_eq!(fit.value("b"), 1.0);
        assert!(fit.params[1].at_bound);
    }

    #[test]
    fn spec_validation() {
        let all_fixed = ModelSpec::new(ModelId::Saturation, vec![Param::fixed("a", 1.0)]);
        assert!(fit_curve(&line, &all_fixed, &[0.0], &[0.0], None, &FitOptions::default()).is_err());
        let outside = ModelSpec::new(ModelId::Saturation, vec![Param::free("a", 5.0, 0.0, 1.0)]);
        assert!(fit_curve(&line, &outside, &[0.0], &[0.0], None, &FitOptions::default()).is_err());
    }

    #[test]
    fn digest_tracks_data() {
        let a = data_digest(&[1.0], &[2.0], &[1.0]);
        assert_eq!(a.len(), 64);
        assert_ne!(a, data_digest(&[1.0], &[2.5], &[1.0]));
    }

    #[test]
    fn json_shape() {
        let xs: Vec<f64> = (0..5).map(f64::from).collect();
        let spec = ModelSpec::new(ModelId::SingleExpDecay, vec![Param::free("a", 0.0, -1.0, 1.0), Param::fixed("b", 0.0)]);
        let fit = fit_curve(&line, &spec, &xs, &[0.0; 5], None, &FitOptions::default()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&fit).unwrap();
        assert_eq!(v["model_id"], "single_exp_decay");
        assert!(v["params"][1]["fixed"].as_bool().unwrap());
        assert!(v["data_digest"].is_string());
    }
}
