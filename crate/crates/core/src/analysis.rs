//! End-to-end analysis pipelines from timestamp lists to reported
//! statistics, shared by the command line and the acceptance tests.

use serde::{Deserialize, Serialize};

use crate::correlate::{
    background_level, coincidence_histogram, decay_histogram, g2_zero_pulsed, integrate_peaks, peak_centers,
    postselection_sweep, Estimate, Histogram, PeakSet, SweepPoint,
};
use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::mc::{coincidence_sigma_ps, DetectorParams, PulseTrainConfig};
use crate::fitting::{fit_g2_train, fit_hom_dip, fit_lifetime, Background, DecayModel, G2TrainFit, HomFit, HomFitConfig, LifetimeFit};

/// Smallest span ≥ `half_range_ps` that puts a bin center at zero delay
/// (an odd number of bins) when the bin width is even.
pub fn centered_span(half_range_ps: f64, bin_width_ps: i64) -> i64 {
    let w = bin_width_ps;
    if w % 2 == 0 {
        let k = ((half_range_ps / w as f64) - 0.5).ceil().max(0.0) as i64;
        k * w + w / 2
    } else {
        (half_range_ps / w as f64).ceil() as i64 * w
    }
}

/// Coincidence σ of the default detectors and pulse train.
pub fn default_coincidence_sigma_ps() -> f64 {
    coincidence_sigma_ps(&DetectorParams::default(), &PulseTrainConfig::default())
}

/// Settings for the pulsed g² analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct G2Config {
    pub bin_width_ps: i64,
    pub rep_period_ps: f64,
    /// Number of repetition periods shown on each side of zero delay.
    pub n_side_peaks: u32,
    /// σ of the coincidence timing response.
    pub irf_sigma_ps: f64,
    /// Dark-count rate of the second detector, for the accidental level.
    pub dark_rate_hz: f64,
}

impl Default for G2Config {
    fn default() -> Self {
        Self { bin_width_ps: 32, rep_period_ps: 25_000.0, n_side_peaks: 2, irf_sigma_ps: default_coincidence_sigma_ps(), dark_rate_hz: 200.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct G2Report {
    #[serde(skip)]
    pub histogram: Histogram,
    pub background_per_bin: f64,
    pub peaks: PeakSet,
    /// Window-integrated, background-subtracted g²(0).
    pub g2_0_area: Estimate,
    pub fit: G2TrainFit,
}

/// Histogram, integrate and fit a pulsed HBT measurement.
pub fn analyze_g2(ch0: &[i64], ch1: &[i64], duration_ps: i64, cfg: &G2Config) -> Result<G2Report> {
    require_positive("rep_period_ps", cfg.rep_period_ps)?;
    require_non_negative("dark_rate_hz", cfg.dark_rate_hz)?;
    if cfg.n_side_peaks == 0 {
        return Err(Error::Config("n_side_peaks must be >= 1".into()));
    }
    let half = (cfg.n_side_peaks as f64 + 0.5) * cfg.rep_period_ps;
    let span = centered_span(half, cfg.bin_width_ps);
    let hist = coincidence_histogram(ch0, ch1, cfg.bin_width_ps, span, duration_ps)?;
    let duration_s = duration_ps as f64 * 1e-12;
    let bg = background_level(hist.rate_hz(0), cfg.dark_rate_hz, cfg.bin_width_ps as f64, duration_s)?;
    let n = cfg.n_side_peaks as i32;
    let centers = peak_centers(cfg.rep_period_ps, -n, n);
    let peaks = integrate_peaks(&hist, &centers, cfg.rep_period_ps / 4.0, bg)?;
    let g2_0_area = g2_zero_pulsed(&peaks)?;
    let fit = fit_g2_train(&hist, cfg.rep_period_ps, cfg.irf_sigma_ps, Background::Free)?;
    Ok(G2Report { histogram: hist, background_per_bin: bg, peaks, g2_0_area, fit })
}

/// Coincidence σ from the two default detectors alone. The interference
/// dip acts on the emission-time difference, so the excitation-time
/// spread does not blur it.
pub fn default_detector_pair_sigma_ps() -> f64 {
    std::f64::consts::SQRT_2 * DetectorParams::default().irf_sigma_ps
}

/// Settings for the two-photon interference analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomAnalysisConfig {
    pub bin_width_ps: i64,
    pub spacing_ps: f64,
    pub rep_period_ps: f64,
    pub tau1_ps: f64,
    pub irf_sigma_ps: f64,
    pub half_range_ps: f64,
    pub dark_rate_hz: f64,
}

impl Default for HomAnalysisConfig {
    fn default() -> Self {
        Self {
            bin_width_ps: 32,
            spacing_ps: 5000.0,
            rep_period_ps: 25_000.0,
            tau1_ps: 650.0,
            irf_sigma_ps: default_detector_pair_sigma_ps(),
            half_range_ps: 12_500.0,
            dark_rate_hz: 200.0,
        }
    }
}

impl HomAnalysisConfig {
    fn fit_config(&self) -> HomFitConfig {
        HomFitConfig {
            tau1_ps: self.tau1_ps,
            irf_sigma_ps: self.irf_sigma_ps,
            spacing_ps: self.spacing_ps,
            rep_period_ps: self.rep_period_ps,
            half_range_ps: self.half_range_ps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomReport {
    #[serde(skip)]
    pub hist_parallel: Histogram,
    #[serde(skip)]
    pub hist_orthogonal: Histogram,
    pub peaks_parallel: PeakSet,
    pub peaks_orthogonal: PeakSet,
    /// Zero-delay peak over the mean ±Δ peak, from integrated areas.
    pub g2_par_area: Estimate,
    pub g2_orth_area: Estimate,
    /// 1 − g∥/g⊥ from integrated areas.
    pub visibility_raw: f64,
    pub fit: HomFit,
}

/// One histogram per polarization, integrated over ±Δ/2 windows at
/// −2Δ…2Δ, then fitted.
pub fn hom_histogram(ch0: &[i64], ch1: &[i64], duration_ps: i64, cfg: &HomAnalysisConfig) -> Result<Histogram> {
    let half = cfg.half_range_ps.max(2.5 * cfg.spacing_ps);
    coincidence_histogram(ch0, ch1, cfg.bin_width_ps, centered_span(half, cfg.bin_width_ps), duration_ps)
}

fn hom_peaks(hist: &Histogram, cfg: &HomAnalysisConfig) -> Result<PeakSet> {
    let bg = background_level(hist.rate_hz(0), cfg.dark_rate_hz, cfg.bin_width_ps as f64, hist.duration_ps as f64 * 1e-12)?;
    integrate_peaks(hist, &peak_centers(cfg.spacing_ps, -2, 2), cfg.spacing_ps / 2.0, bg)
}

pub fn analyze_hom(par: &Histogram, orth: &Histogram, cfg: &HomAnalysisConfig) -> Result<HomReport> {
    let peaks_parallel = hom_peaks(par, cfg)?;
    let peaks_orthogonal = hom_peaks(orth, cfg)?;
    let g2_par_area = g2_zero_pulsed(&peaks_parallel)?;
    let g2_orth_area = g2_zero_pulsed(&peaks_orthogonal)?;
    let visibility_raw = crate::correlate::postselected_visibility(g2_par_area.value, g2_orth_area.value)?;
    let fit = fit_hom_dip(par, orth, &cfg.fit_config())?;
    Ok(HomReport {
        hist_parallel: par.clone(),
        hist_orthogonal: orth.clone(),
        peaks_parallel,
        peaks_orthogonal,
        g2_par_area,
        g2_orth_area,
        visibility_raw,
        fit,
    })
}

/// Post-selection sweep over the given windows.
pub fn sweep(par: &Histogram, orth: &Histogram, spacing_ps: f64, windows_ps: &[f64]) -> Result<Vec<SweepPoint>> {
    postselection_sweep(par, orth, spacing_ps, windows_ps)
}

/// Phase-folds single-channel detections and fits the decay.
pub fn analyze_lifetime(
    times: &[i64],
    rep_period_ps: f64,
    bin_width_ps: i64,
    irf_sigma_ps: f64,
    model: DecayModel,
) -> Result<(Histogram, LifetimeFit)> {
    let hist = decay_histogram(times, rep_period_ps, bin_width_ps)?;
    let fit = fit_lifetime(&hist, model, irf_sigma_ps, rep_period_ps)?;
    Ok((hist, fit))
}
