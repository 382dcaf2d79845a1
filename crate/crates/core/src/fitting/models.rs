//! Fits of the measured curves: the pulsed g² peak train, the two-photon
//! interference dip, the saturation curve and the decay histograms.

use serde::{Deserialize, Serialize};

use super::lm::{fit_curve, poisson_weights, FitOptions, FitResult, Model, ModelId, ModelSpec, Param};
use super::shapes::{hom_dip_conv, one_sided_exp_conv, two_sided_exp_conv};
use crate::correlate::{Estimate, Histogram};
use crate::error::{invalid, require_non_negative, require_positive, Error, Result};
use crate::model::dephasing_time;

/// Parameter layout shared by the peak-cluster models.
const TAU1: usize = 0;
const BG: usize = 1;
const V: usize = 2;
const TAU2: usize = 3;
const AMP0: usize = 4;

/// Background handling for histogram fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    /// Constant counts per bin, held fixed.
    Fixed(f64),
    Free,
}

/// Sum of IRF-blurred two-sided exponential peaks on a constant
/// background; optionally one peak carries the interference dip.
struct PeakCluster {
    centers: Vec<f64>,
    sigma: f64,
    dip: Option<usize>,
}

impl Model for PeakCluster {
    fn value(&self, p: &[f64], x: f64) -> f64 {
        let reach = 40.0 * p[TAU1] + 8.0 * self.sigma;
        let mut y = p[BG];
        for (k, &c) in self.centers.iter().enumerate() {
            let d = x - c;
            if d.abs() > reach {
                continue;
            }
            let shape = if self.dip == Some(k) {
                hom_dip_conv(d, p[TAU1], p[TAU2], p[V], self.sigma)
            } else {
                two_sided_exp_conv(d, p[TAU1], self.sigma)
            };
            y += p[AMP0 + k] * shape;
        }
        y
    }
}

fn amp_name(c: f64) -> String {
    format!("amp_{}", c.round() as i64)
}

/// Fits with Poisson weights, then refits once with weights taken from the
/// first-pass model, which removes the low bias of data-derived weights.
fn fit_counts<M: Model>(model: &M, spec: &ModelSpec, xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    let opts = FitOptions::default();
    let first = fit_curve(model, spec, xs, ys, Some(&poisson_weights(ys)), &opts)?;
    let p = first.values();
    let w: Vec<f64> = xs.iter().map(|&x| 1.0 / model.value(&p, x).max(1.0)).collect();
    let mut refined = spec.clone();
    for (q, v) in refined.params.iter_mut().zip(&p) {
        q.value = *v;
    }
    let second = fit_curve(model, &refined, xs, ys, Some(&w), &opts)?;
    Ok(FitResult { n_iter: first.n_iter + second.n_iter, converged: first.converged && second.converged, ..second })
}

/// Mean counts per bin within ±`half` of each position.
fn mean_near(hist: &Histogram, positions: &[f64], half: f64) -> Option<f64> {
    let (mut s, mut n) = (0u64, 0usize);
    for &x in positions {
        let (a, b) = hist.sum_between(x - half, x + half);
        s += a;
        n += b;
    }
    (n > 0).then(|| s as f64 / n as f64)
}

/// Starting τ and peak heights from peak areas and maxima: a two-sided
/// exponential of height A has area 2Aτ.
fn peak_starts(hist: &Histogram, centers: &[f64], half_window: f64, bg: f64) -> (f64, Vec<f64>) {
    let w = hist.bin_width_ps as f64;
    let mut areas = Vec::with_capacity(centers.len());
    let mut heights = Vec::with_capacity(centers.len());
    for &c in centers {
        let mut area = 0.0;
        let mut height: f64 = 0.0;
        for i in 0..hist.n_bins() {
            let x = hist.bin_center(i);
            if (x - c).abs() < half_window {
                let y = hist.counts[i] as f64 - bg;
                area += y * w;
                height = height.max(y);
            }
        }
        areas.push(area.max(0.0));
        heights.push(height);
    }
    let (best, _) = areas.iter().enumerate().fold((0, f64::MIN), |acc, (i, &a)| if a > acc.1 { (i, a) } else { acc });
    let tau = if heights[best] > 0.0 { areas[best] / (2.0 * heights[best]) } else { half_window / 4.0 };
    let tau = tau.clamp(10.0, half_window);
    (tau, areas.iter().map(|a| a / (2.0 * tau * w)).collect())
}

fn center_neighbours(centers: &[f64]) -> Result<(usize, usize, usize)> {
    let c = centers
        .iter()
        .position(|&x| x == 0.0)
        .ok_or_else(|| Error::InsufficientData("no peak at zero delay".into()))?;
    if c == 0 || c + 1 == centers.len() {
        return Err(Error::InsufficientData("both neighbours of the zero-delay peak are required".into()));
    }
    Ok((c, c - 1, c + 1))
}

/// Pulsed g² fit result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2TrainFit {
    pub fit: FitResult,
    /// Zero-delay peak amplitude over the mean of the ±1 peaks.
    pub g2_0: Estimate,
    pub tau1: Estimate,
    pub centers_ps: Vec<f64>,
}

/// Fits Σ_k A_k·(e^{−|τ−kT|/τ₁} ⊗ IRF) + background to a pulsed
/// correlation histogram, with one shared τ₁.
pub fn fit_g2_train(hist: &Histogram, rep_period_ps: f64, irf_sigma_ps: f64, background: Background) -> Result<G2TrainFit> {
    require_positive("rep_period_ps", rep_period_ps)?;
    require_non_negative("irf_sigma_ps", irf_sigma_ps)?;
    let (lo, hi) = (hist.t_min_ps as f64, hist.t_max_ps() as f64);
    let k_lo = (lo / rep_period_ps).ceil() as i64;
    let k_hi = (hi / rep_period_ps).floor() as i64;
    let centers: Vec<f64> = (k_lo..=k_hi).map(|k| k as f64 * rep_period_ps).filter(|&c| c >= lo && c < hi).collect();
    if centers.len() < 3 {
        return Err(Error::InsufficientData(format!("{} peaks in span, at least 3 required", centers.len())));
    }
    let (c0, cl, cr) = center_neighbours(&centers)?;

    let midpoints: Vec<f64> = centers.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let bg0 = match background {
        Background::Fixed(b) => {
            require_non_negative("background", b)?;
            b
        }
        Background::Free => mean_near(hist, &midpoints, rep_period_ps / 10.0).unwrap_or(0.0),
    };
    let (tau0, amps0) = peak_starts(hist, &centers, rep_period_ps / 2.0, bg0);

    let mut params = vec![
        Param::free("tau1_ps", tau0, 1.0, rep_period_ps / 2.0),
        match background {
            Background::Fixed(b) => Param::fixed("background", b),
            Background::Free => Param::free("background", bg0, 0.0, f64::INFINITY),
        },
        Param::fixed("v", 0.0),
        Param::fixed("tau2_ps", 2.0 * tau0),
    ];
    params.extend(centers.iter().zip(&amps0).map(|(&c, &a)| Param::free(&amp_name(c), a, 0.0, f64::INFINITY)));
    let spec = ModelSpec::new(ModelId::TwoSidedExpTrain, params);
    let model = PeakCluster { centers: centers.clone(), sigma: irf_sigma_ps, dip: None };
    let xs = hist.centers();
    let fit = fit_counts(&model, &spec, &xs, &hist.values())?;

    let ratio = |p: &[f64]| {
        let side = 0.5 * (p[AMP0 + cl] + p[AMP0 + cr]);
        if side > 0.0 {
            p[AMP0 + c0] / side
        } else {
            f64::NAN
        }
    };
    let value = ratio(&fit.values());
    if !value.is_finite() {
        return Err(Error::Undefined("fitted side peaks have zero amplitude".into()));
    }
    let g2_0 = Estimate { value, sigma: fit.propagate_fn(ratio) };
    let tau1 = Estimate { value: fit.value("tau1_ps"), sigma: fit.sigma("tau1_ps") };
    Ok(G2TrainFit { fit, g2_0, tau1, centers_ps: centers })
}

/// Settings for the two-photon interference fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomFitConfig {
    /// Radiative lifetime, held fixed in both fits.
    pub tau1_ps: f64,
    pub irf_sigma_ps: f64,
    /// Peak spacing Δ of the double-pulse pattern.
    pub spacing_ps: f64,
    pub rep_period_ps: f64,
    /// Half-width of the fitted delay range.
    pub half_range_ps: f64,
}

/// Two-photon interference fit result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomFit {
    pub orthogonal: FitResult,
    pub parallel: FitResult,
    pub v: Estimate,
    pub tau2_ps: Estimate,
    pub tau_deph_ps: f64,
    /// Orthogonal zero-delay peak over the mean ±Δ peak.
    pub g2_orth_0: Estimate,
    /// Parallel fitted curve at zero delay over the fitted ±Δ peak heights,
    /// including the instrument response.
    pub g2_par_0: Estimate,
    /// 1 − g∥(0)/g⊥(0) with the instrument response.
    pub vbar: Estimate,
    /// Same ratio for the deconvolved model, i.e. for an ideal detector.
    pub vbar_deconvolved: f64,
    /// Area-based visibility from the fitted peak areas, side-normalized.
    pub visibility_area: f64,
    pub centers_ps: Vec<f64>,
}

/// Peak positions mT + kΔ (k = −2..2, m = −1..1) whose tails reach the
/// fitted range.
fn hom_centers(cfg: &HomFitConfig) -> Vec<f64> {
    let reach = cfg.half_range_ps + 6.0 * cfg.tau1_ps + 4.0 * cfg.irf_sigma_ps;
    let mut c: Vec<f64> = (-1..=1)
        .flat_map(|m| (-2..=2).map(move |k| (m, k)))
        .map(|(m, k)| m as f64 * cfg.rep_period_ps + k as f64 * cfg.spacing_ps)
        .filter(|c| c.abs() <= reach)
        .collect();
    c.sort_by(f64::total_cmp);
    c.dedup_by(|a, b| (*a - *b).abs() < 1.0);
    c
}

/// Fits the orthogonal histogram with plain peaks and the parallel one with
/// e^{−|τ|/τ₁}(1 − v·e^{−2|τ|/τ_deph}) at zero delay, both blurred by the
/// IRF and with τ₁ fixed. τ_deph follows from τ₂ through the dephasing
/// relation.
pub fn fit_hom_dip(hist_par: &Histogram, hist_orth: &Histogram, cfg: &HomFitConfig) -> Result<HomFit> {
    require_positive("tau1_ps", cfg.tau1_ps)?;
    require_non_negative("irf_sigma_ps", cfg.irf_sigma_ps)?;
    require_positive("spacing_ps", cfg.spacing_ps)?;
    require_positive("rep_period_ps", cfg.rep_period_ps)?;
    require_positive("half_range_ps", cfg.half_range_ps)?;
    if 2.0 * 2.0 * cfg.spacing_ps >= cfg.rep_period_ps {
        return Err(invalid("spacing_ps", "the ±2Δ peaks must not overlap the next repetition"));
    }
    for h in [hist_par, hist_orth] {
        if (h.t_min_ps as f64) > -cfg.half_range_ps || (h.t_max_ps() as f64) < cfg.half_range_ps {
            return Err(Error::InsufficientData("histogram does not cover the fitted delay range".into()));
        }
    }
    let centers = hom_centers(cfg);
    let (c0, cl, cr) = center_neighbours(&centers)?;
    let tau1 = cfg.tau1_ps;
    let sigma = cfg.irf_sigma_ps;

    let build = |id: ModelId, amps: &[f64], bg: f64, extra: [Param; 2]| {
        let [v, tau2] = extra;
        let mut params = vec![Param::fixed("tau1_ps", tau1), Param::free("background", bg, 0.0, f64::INFINITY), v, tau2];
        params.extend(centers.iter().zip(amps).map(|(&c, &a)| Param::free(&amp_name(c), a.max(0.0), 0.0, f64::INFINITY)));
        ModelSpec::new(id, params)
    };
    let starts = |hist: &Histogram| {
        let mids: Vec<f64> = centers.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let bg = mean_near(hist, &mids, cfg.spacing_ps / 20.0).unwrap_or(0.0);
        let w = hist.bin_width_ps as f64;
        let amps: Vec<f64> = centers
            .iter()
            .map(|&c| {
                let (s, n) = hist.sum_between(c - cfg.spacing_ps / 2.0, c + cfg.spacing_ps / 2.0);
                ((s as f64 - bg * n as f64) / (2.0 * tau1 * w)).max(0.0)
            })
            .collect();
        (bg, amps)
    };

    // orthogonal: plain peaks
    let orth_hist = hist_orth.slice(-cfg.half_range_ps, cfg.half_range_ps);
    let (bg_o, amps_o) = starts(&orth_hist);
    let spec_o = build(ModelId::HomDipOrthogonal, &amps_o, bg_o, [Param::fixed("v", 0.0), Param::fixed("tau2_ps", 2.0 * tau1)]);
    let model_o = PeakCluster { centers: centers.clone(), sigma, dip: None };
    let orthogonal = fit_counts(&model_o, &spec_o, &orth_hist.centers(), &orth_hist.values())?;

    // parallel: dip at zero delay
    let par_hist = hist_par.slice(-cfg.half_range_ps, cfg.half_range_ps);
    let (bg_p, amps_p) = starts(&par_hist);
    let po = orthogonal.values();
    let side_o = 0.5 * (po[AMP0 + cl] + po[AMP0 + cr]);
    let side_p = 0.5 * (amps_p[cl] + amps_p[cr]);
    // unsuppressed center from the orthogonal pattern, rescaled to this run
    let mut amps_init = amps_p.clone();
    if side_o > 0.0 {
        amps_init[c0] = po[AMP0 + c0] * side_p / side_o;
    }
    let near_zero = mean_near(&par_hist, &[0.0], (0.5 * sigma).max(par_hist.bin_width_ps as f64)).unwrap_or(0.0) - bg_p;
    let undipped = amps_init[c0] * two_sided_exp_conv(0.0, tau1, sigma);
    let v0 = if undipped > 0.0 { (1.0 - near_zero / undipped).clamp(0.0, 1.0) } else { 0.5 };
    let spec_p = build(
        ModelId::HomDipParallel,
        &amps_init,
        bg_p,
        [Param::free("v", v0, 0.0, 1.0), Param::free("tau2_ps", (2.0 * tau1 / 3.0).min(2.0 * tau1), 1.0, 2.0 * tau1)],
    );
    let model_p = PeakCluster { centers: centers.clone(), sigma, dip: Some(c0) };
    let parallel = fit_counts(&model_p, &spec_p, &par_hist.centers(), &par_hist.values())?;

    let g_orth = |p: &[f64]| p[AMP0 + c0] / (0.5 * (p[AMP0 + cl] + p[AMP0 + cr]));
    let g_par = |p: &[f64]| {
        p[AMP0 + c0] * hom_dip_conv(0.0, tau1, p[TAU2], p[V], sigma)
            / (0.5 * (p[AMP0 + cl] + p[AMP0 + cr]) * two_sided_exp_conv(0.0, tau1, sigma))
    };
    let pp = parallel.values();
    let go = Estimate { value: g_orth(&po), sigma: orthogonal.propagate_fn(g_orth) };
    let gp = Estimate { value: g_par(&pp), sigma: parallel.propagate_fn(g_par) };
    if !(go.value > 0.0) {
        return Err(Error::Undefined("orthogonal zero-delay peak vanished".into()));
    }
    let vbar_value = 1.0 - gp.value / go.value;
    let vbar_sigma = (gp.sigma / go.value).hypot(gp.value * go.sigma / (go.value * go.value));
    let g_par_ideal = g_orth(&pp) * (1.0 - pp[V]);
    let area_par = g_orth(&pp) * (1.0 - pp[V] * pp[TAU2] / (2.0 * tau1));

    Ok(HomFit {
        v: Estimate { value: pp[V], sigma: parallel.sigma("v") },
        tau2_ps: Estimate { value: pp[TAU2], sigma: parallel.sigma("tau2_ps") },
        tau_deph_ps: dephasing_time(tau1, pp[TAU2])?,
        g2_orth_0: go,
        g2_par_0: gp,
        vbar: Estimate { value: vbar_value, sigma: vbar_sigma },
        vbar_deconvolved: 1.0 - g_par_ideal / go.value,
        visibility_area: 1.0 - area_par / go.value,
        orthogonal,
        parallel,
        centers_ps: centers,
    })
}

/// Area deficit of the interfering peak relative to the non-interfering one,
/// v·τ₂/(2τ₁).
pub fn analytic_visibility(tau1_ps: f64, tau2_ps: f64, v: f64) -> Result<f64> {
    // validates τ₂ ≤ 2τ₁
    dephasing_time(tau1_ps, tau2_ps)?;
    if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
        return Err(invalid("v", format!("must lie in [0, 1], got {v}")));
    }
    Ok(v * tau2_ps / (2.0 * tau1_ps))
}

/// How residuals are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub fit: FitResult,
    pub i_max: Estimate,
    pub p_sat: Estimate,
}

/// Fits I = I_max(1 − e^{−P/P_sat}) to (power, intensity) points.
pub fn fit_saturation(points: &[(f64, f64)], weighting: Weighting) -> Result<SaturationFit> {
    if points.len() < 3 {
        return Err(invalid("points", "at least 3 points are required"));
    }
    if points.iter().any(|&(p, i)| !(p.is_finite() && p >= 0.0 && i.is_finite() && i >= 0.0)) {
        return Err(invalid("points", "powers and intensities must be finite and >= 0"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let p_max = xs.iter().copied().fold(0.0, f64::max);
    let i_peak = ys.iter().copied().fold(0.0, f64::max);
    if !(p_max > 0.0 && i_peak > 0.0) {
        return Err(Error::InsufficientData("saturation data has no signal".into()));
    }
    // P_sat start: first power reaching 1 − 1/e of the largest intensity
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let target = (1.0 - (-1.0f64).exp()) * i_peak;
    let p_sat0 = order.iter().map(|&i| (xs[i], ys[i])).find(|&(_, y)| y >= target).map_or(p_max, |(x, _)| x).max(1e-3 * p_max);
    let i_max0 = i_peak / (1.0 - (-p_max / p_sat0).exp());

    let spec = ModelSpec::new(ModelId::Saturation, vec![
        Param::free("i_max", i_max0, 0.0, f64::INFINITY),
        Param::free("p_sat", p_sat0, 1e-6 * p_max, 1e3 * p_max),
    ]);
    let model = |p: &[f64], x: f64| p[0] * (1.0 - (-x / p[1]).exp());
    let weights = match weighting {
        Weighting::Uniform => None,
        Weighting::Poisson => Some(poisson_weights(&ys)),
    };
    let fit = fit_curve(&model, &spec, &xs, &ys, weights.as_deref(), &FitOptions::default())?;
    Ok(SaturationFit {
        i_max: Estimate { value: fit.value("i_max"), sigma: fit.sigma("i_max") },
        p_sat: Estimate { value: fit.value("p_sat"), sigma: fit.sigma("p_sat") },
        fit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    Single,
    Biexp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    pub fit: FitResult,
    /// Single-exponential lifetime, or the fast component for `Biexp`.
    pub tau_ps: Estimate,
    pub tau_slow_ps: Option<Estimate>,
    /// Photon fraction in the fast component.
    pub branch_fast: Option<Estimate>,
}

/// Decay density convolved with the IRF, including the tails of the
/// neighbouring repetitions. Parameters: t0, background, n, τ_fast, τ_slow,
/// branch (the last two unused for a single exponential).
struct Decay {
    sigma: f64,
    period: f64,
    bin: f64,
    biexp: bool,
}

impl Model for Decay {
    fn value(&self, p: &[f64], x: f64) -> f64 {
        let (t0, bg, n) = (p[0], p[1], p[2]);
        let mut density = 0.0;
        for m in -1..=1 {
            let t = x - t0 + m as f64 * self.period;
            density += if self.biexp {
                let (tf, ts, b) = (p[3], p[4], p[5]);
                b / tf * one_sided_exp_conv(t, tf, self.sigma) + (1.0 - b) / ts * one_sided_exp_conv(t, ts, self.sigma)
            } else {
                one_sided_exp_conv(t, p[3], self.sigma) / p[3]
            };
        }
        bg + n * self.bin * density
    }
}

/// Fits a phase-folded decay histogram over one repetition period.
pub fn fit_lifetime(hist: &Histogram, model: DecayModel, irf_sigma_ps: f64, rep_period_ps: f64) -> Result<LifetimeFit> {
    require_non_negative("irf_sigma_ps", irf_sigma_ps)?;
    require_positive("rep_period_ps", rep_period_ps)?;
    if hist.n_bins() < 8 {
        return Err(Error::InsufficientData("decay histogram needs at least 8 bins".into()));
    }
    let xs = hist.centers();
    let ys = hist.values();
    let w = hist.bin_width_ps as f64;
    let mut sorted = ys.clone();
    sorted.sort_by(f64::total_cmp);
    let low = (sorted.len() / 20).max(1);
    let bg0 = sorted[..low].iter().sum::<f64>() / low as f64;
    let (i_peak, &y_peak) = ys.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    if y_peak <= bg0 {
        return Err(Error::InsufficientData("decay histogram has no peak above background".into()));
    }
    let n0 = (ys.iter().sum::<f64>() - bg0 * ys.len() as f64).max(1.0);
    let tau0 = (n0 * w / (y_peak - bg0)).clamp(2.0 * w, rep_period_ps / 3.0);
    let x_peak = xs[i_peak];
    let t0_lo = x_peak - 5.0 * irf_sigma_ps - 500.0;
    let t0_hi = x_peak + 500.0;
    let single_spec = ModelSpec::new(ModelId::SingleExpDecay, vec![
        Param::free("t0_ps", (x_peak - irf_sigma_ps).clamp(t0_lo, t0_hi), t0_lo, t0_hi),
        Param::free("background", bg0, 0.0, f64::INFINITY),
        Param::free("n", n0, 0.0, f64::INFINITY),
        Param::free("tau_ps", tau0, 1.0, rep_period_ps),
        Param::fixed("tau_slow_ps", 0.0),
        Param::fixed("branch_fast", 1.0),
    ]);
    let single = Decay { sigma: irf_sigma_ps, period: rep_period_ps, bin: w, biexp: false };
    let fit = fit_counts(&single, &single_spec, &xs, &ys)?;
    if model == DecayModel::Single {
        let tau_ps = Estimate { value: fit.value("tau_ps"), sigma: fit.sigma("tau_ps") };
        return Ok(LifetimeFit { fit, tau_ps, tau_slow_ps: None, branch_fast: None });
    }

    let p = fit.values();
    let tau_s = p[3];
    let spec = ModelSpec::new(ModelId::BiexpDecay, vec![
        Param::free("t0_ps", p[0], t0_lo, t0_hi),
        Param::free("background", p[1], 0.0, f64::INFINITY),
        Param::free("n", p[2], 0.0, f64::INFINITY),
        Param::free("tau_fast_ps", 0.75 * tau_s, 1.0, rep_period_ps),
        Param::free("tau_slow_ps", (2.0 * tau_s).min(rep_period_ps), 1.0, rep_period_ps),
        Param::free("branch_fast", 0.7, 0.0, 1.0),
    ]);
    let bi = Decay { biexp: true, ..single };
    let mut fit = fit_counts(&bi, &spec, &xs, &ys)?;
    if fit.value("tau_fast_ps") > fit.value("tau_slow_ps") {
        // relabel so the fast component comes first
        fit.params.swap(3, 4);
        fit.params[3].name = "tau_fast_ps".into();
        fit.params[4].name = "tau_slow_ps".into();
        fit.params[5].value = 1.0 - fit.params[5].value;
        fit.covariance.swap(3, 4);
        for row in &mut fit.covariance {
            row.swap(3, 4);
        }
        for i in 0..6 {
            if i != 5 {
                fit.covariance[5][i] = -fit.covariance[5][i];
                fit.covariance[i][5] = -fit.covariance[i][5];
            }
        }
    }
    let est = |name: &str| Estimate { value: fit.value(name), sigma: fit.sigma(name) };
    Ok(LifetimeFit {
        tau_ps: est("tau_fast_ps"),
        tau_slow_ps: Some(est("tau_slow_ps")),
        branch_fast: Some(est("branch_fast")),
        fit,
    })
}

/// Ratio of a reference lifetime to a modified one, e.g. bulk over cavity.
pub fn lifetime_enhancement(tau_reference_ps: f64, tau_ps: f64) -> Result<f64> {
    require_positive("tau_reference_ps", tau_reference_ps)?;
    require_positive("tau_ps", tau_ps)?;
    Ok(tau_reference_ps / tau_ps)
}
