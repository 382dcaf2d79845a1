//! Start-stop coincidence histograms from two timestamp streams, accidental
//! background, peak integration and the derived g²(0) and two-photon
//! visibility statistics.
//!
//! Delay convention: τ = t(channel 1) − t(channel 0).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_non_negative, require_positive, Error, Result};

/// Uniformly binned delay histogram. Bin `i` covers
/// `[t_min + i·w, t_min + (i+1)·w)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_ps: i64,
    pub t_min_ps: i64,
    pub counts: Vec<u64>,
    pub n_events_ch0: usize,
    pub n_events_ch1: usize,
    /// Measurement duration the events were taken over, in ps (0 if unknown).
    pub duration_ps: i64,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn t_max_ps(&self) -> i64 {
        self.t_min_ps + self.bin_width_ps * self.counts.len() as i64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.t_min_ps as f64 + (i as f64 + 0.5) * self.bin_width_ps as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins()).map(|i| self.bin_center(i)).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts as floats, for fitting.
    pub fn values(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Sum of the bins whose centers lie in `[lo, hi)`, with the bin count.
    pub fn sum_between(&self, lo_ps: f64, hi_ps: f64) -> (u64, usize) {
        let mut sum = 0;
        let mut n = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            let x = self.bin_center(i);
            if x >= lo_ps && x < hi_ps {
                sum += c;
                n += 1;
            }
        }
        (sum, n)
    }

    /// Sub-histogram of the bins whose centers lie in `[lo, hi)`.
    pub fn slice(&self, lo_ps: f64, hi_ps: f64) -> Histogram {
        let idx: Vec<usize> = (0..self.n_bins()).filter(|&i| {
            let x = self.bin_center(i);
            x >= lo_ps && x < hi_ps
        }).collect();
        let (first, counts) = match idx.first() {
            Some(&f) => (f, idx.iter().map(|&i| self.counts[i]).collect()),
            None => (0, Vec::new()),
        };
        Histogram {
            t_min_ps: self.t_min_ps + first as i64 * self.bin_width_ps,
            counts,
            ..self.clone()
        }
    }

    /// Event rate of a channel over the recorded duration.
    pub fn rate_hz(&self, channel: u8) -> f64 {
        if self.duration_ps <= 0 {
            return 0.0;
        }
        let n = if channel == 0 { self.n_events_ch0 } else { self.n_events_ch1 };
        n as f64 / (self.duration_ps as f64 * 1e-12)
    }

    /// Writes `bin_center_ps,counts`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bin_center_ps,counts")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{c}", self.bin_center(i))?;
        }
        Ok(())
    }

    pub fn metadata(&self, background_per_bin: f64) -> HistogramMeta {
        HistogramMeta {
            bin_width_ps: self.bin_width_ps,
            t_min_ps: self.t_min_ps,
            t_max_ps: self.t_max_ps(),
            n_bins: self.n_bins(),
            n_events_ch0: self.n_events_ch0,
            n_events_ch1: self.n_events_ch1,
            rate_ch0_hz: self.rate_hz(0),
            rate_ch1_hz: self.rate_hz(1),
            duration_ps: self.duration_ps,
            background_per_bin,
            delay_convention: "tau = t(ch1) - t(ch0)".into(),
        }
    }
}

/// Sidecar description of a histogram CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramMeta {
    pub bin_width_ps: i64,
    pub t_min_ps: i64,
    pub t_max_ps: i64,
    pub n_bins: usize,
    pub n_events_ch0: usize,
    pub n_events_ch1: usize,
    pub rate_ch0_hz: f64,
    pub rate_ch1_hz: f64,
    pub duration_ps: i64,
    pub background_per_bin: f64,
    pub delay_convention: String,
}

fn check_sorted(times: &[i64], what: &str) -> Result<()> {
    match times.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => Err(Error::Unsorted(format!("{what} at index {}", i + 1))),
        None => Ok(()),
    }
}

/// Histogram of all pair delays t₁ − t₀ in `[−span, span)`.
///
/// `2·span_ps` must be a multiple of `bin_width_ps`; an odd multiple puts a
/// bin center at zero delay. Channel 0 is sharded across threads; the result
/// is exact and independent of the partitioning.
pub fn coincidence_histogram(
    ch0: &[i64],
    ch1: &[i64],
    bin_width_ps: i64,
    span_ps: i64,
    duration_ps: i64,
) -> Result<Histogram> {
    if bin_width_ps <= 0 {
        return Err(invalid("bin_width_ps", "must be > 0"));
    }
    if span_ps <= 0 {
        return Err(invalid("span_ps", "must be > 0"));
    }
    if (2 * span_ps) % bin_width_ps != 0 {
        return Err(invalid("span_ps", "2·span must be a multiple of the bin width"));
    }
    check_sorted(ch0, "channel 0")?;
    check_sorted(ch1, "channel 1")?;
    let n_bins = (2 * span_ps / bin_width_ps) as usize;

    const SHARD: usize = 1 << 15;
    let counts = ch0
        .par_chunks(SHARD)
        .map(|shard| {
            let mut counts = vec![0u64; n_bins];
            let Some(&first) = shard.first() else { return counts };
            let mut lo = ch1.partition_point(|&t| t < first - span_ps);
            for &t0 in shard {
                while lo < ch1.len() && ch1[lo] < t0 - span_ps {
                    lo += 1;
                }
                for &t1 in &ch1[lo..] {
                    let d = t1 - t0;
                    if d >= span_ps {
                        break;
                    }
                    counts[((d + span_ps) / bin_width_ps) as usize] += 1;
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; n_bins],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(Histogram {
        bin_width_ps,
        t_min_ps: -span_ps,
        counts,
        n_events_ch0: ch0.len(),
        n_events_ch1: ch1.len(),
        duration_ps,
    })
}

/// Accidental coincidences per bin between a measured stream of rate `R_m1`
/// and a background stream of rate `R_b2`, counted twice for both channel
/// orderings: 2·R_m1·R_b2·w·T.
pub fn background_level(rate_m1_hz: f64, rate_b2_hz: f64, bin_width_ps: f64, duration_s: f64) -> Result<f64> {
    require_non_negative("rate_m1_hz", rate_m1_hz)?;
    require_non_negative("rate_b2_hz", rate_b2_hz)?;
    require_non_negative("bin_width_ps", bin_width_ps)?;
    require_non_negative("duration_s", duration_s)?;
    Ok(2.0 * rate_m1_hz * rate_b2_hz * bin_width_ps * 1e-12 * duration_s)
}

/// Background-subtracted peak areas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    pub centers_ps: Vec<f64>,
    pub window_ps: f64,
    pub areas: Vec<f64>,
    /// Poisson 1σ of each area, from the raw counts in the window.
    pub sigmas: Vec<f64>,
    pub background_per_bin: f64,
}

impl PeakSet {
    /// Index of the peak nearest zero delay.
    pub fn center_index(&self) -> Option<usize> {
        self.centers_ps
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() < self.window_ps)
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
    }
}

/// Peak positions k·spacing for k in `k_min..=k_max`.
pub fn peak_centers(spacing_ps: f64, k_min: i32, k_max: i32) -> Vec<f64> {
    (k_min..=k_max).map(|k| k as f64 * spacing_ps).collect()
}

/// Default half-width: a quarter of the repetition period.
pub fn default_window_ps(rep_period_ps: f64) -> f64 {
    rep_period_ps / 4.0
}

/// Integrates counts in `[c − window, c + window)` around each center (by
/// bin center), subtracting `background_per_bin` per bin and clamping at 0.
pub fn integrate_peaks(hist: &Histogram, centers_ps: &[f64], window_ps: f64, background_per_bin: f64) -> Result<PeakSet> {
    require_positive("window_ps", window_ps)?;
    require_non_negative("background_per_bin", background_per_bin)?;
    if centers_ps.is_empty() {
        return Err(invalid("centers_ps", "at least one peak is required"));
    }
    let mut sorted = centers_ps.to_vec();
    sorted.sort_by(f64::total_cmp);
    for w in sorted.windows(2) {
        if w[1] - w[0] < 2.0 * window_ps {
            return Err(Error::OverlappingWindows { left_ps: w[0], right_ps: w[1] });
        }
    }
    let (lo, hi) = (hist.t_min_ps as f64, hist.t_max_ps() as f64);
    let mut areas = Vec::with_capacity(centers_ps.len());
    let mut sigmas = Vec::with_capacity(centers_ps.len());
    for &c in centers_ps {
        if c - window_ps < lo || c + window_ps > hi {
            return Err(invalid("centers_ps", format!("window around {c} ps leaves the histogram span [{lo}, {hi})")));
        }
        let (sum, n) = hist.sum_between(c - window_ps, c + window_ps);
        areas.push((sum as f64 - background_per_bin * n as f64).max(0.0));
        sigmas.push((sum as f64).sqrt());
    }
    Ok(PeakSet { centers_ps: centers_ps.to_vec(), window_ps, areas, sigmas, background_per_bin })
}

/// Ratio with its propagated 1σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

fn center_and_sides(peaks: &PeakSet) -> Result<(usize, usize, usize)> {
    let i = peaks
        .center_index()
        .ok_or_else(|| Error::InsufficientData("no peak at zero delay".into()))?;
    let mut order: Vec<usize> = (0..peaks.centers_ps.len()).collect();
    order.sort_by(|&a, &b| peaks.centers_ps[a].total_cmp(&peaks.centers_ps[b]));
    let pos = order.iter().position(|&k| k == i).unwrap();
    if pos == 0 || pos + 1 == order.len() {
        return Err(Error::InsufficientData("both neighbours of the zero-delay peak are required".into()));
    }
    Ok((i, order[pos - 1], order[pos + 1]))
}

/// Zero-delay peak area normalized by the mean of its two neighbours.
pub fn g2_zero_pulsed(peaks: &PeakSet) -> Result<Estimate> {
    let (c, l, r) = center_and_sides(peaks)?;
    let side = 0.5 * (peaks.areas[l] + peaks.areas[r]);
    if side <= 0.0 {
        return Err(Error::Undefined("side peaks have zero area".into()));
    }
    let value = peaks.areas[c] / side;
    let side_sigma = 0.5 * peaks.sigmas[l].hypot(peaks.sigmas[r]);
    let sigma = (peaks.sigmas[c] / side).hypot(value * side_sigma / side);
    Ok(Estimate { value, sigma })
}

/// Raw two-photon visibility (A⊥ − A∥)/A⊥.
pub fn hom_visibility_raw(area_parallel: f64, area_orthogonal: f64) -> Result<f64> {
    if !(area_orthogonal > 0.0) {
        return Err(Error::Undefined(format!("orthogonal area must be > 0, got {area_orthogonal}")));
    }
    Ok((area_orthogonal - area_parallel) / area_orthogonal)
}

/// Post-selected visibility (g⊥ − g∥)/g⊥ at zero delay.
pub fn postselected_visibility(g2_par_0: f64, g2_orth_0: f64) -> Result<f64> {
    if !(g2_orth_0 > 0.0) {
        return Err(Error::Undefined(format!("orthogonal g2(0) must be > 0, got {g2_orth_0}")));
    }
    Ok((g2_orth_0 - g2_par_0) / g2_orth_0)
}

/// One window of a post-selection sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub window_ps: f64,
    pub g2_parallel: f64,
    pub g2_orthogonal: f64,
    pub visibility: f64,
    /// Parallel zero-delay counts kept, relative to the full peak window.
    pub retained_fraction: f64,
}

fn windowed_g2(hist: &Histogram, spacing_ps: f64, w: f64) -> Result<(f64, u64)> {
    let (c, _) = hist.sum_between(-w, w);
    let (l, _) = hist.sum_between(-spacing_ps - w, -spacing_ps + w);
    let (r, _) = hist.sum_between(spacing_ps - w, spacing_ps + w);
    let side = 0.5 * (l + r) as f64;
    if side <= 0.0 {
        return Err(Error::Undefined(format!("no side-peak counts within ±{w} ps")));
    }
    Ok((c as f64 / side, c))
}

/// Visibility as a function of the coincidence window ±w around zero delay.
///
/// Each histogram's zero-delay counts within ±w are normalized by the mean
/// of its ±spacing peaks taken over the same window. At the widest allowed
/// window, spacing/2, the visibility is the side-normalized area statistic
/// and the retained fraction is 1.
pub fn postselection_sweep(
    hist_par: &Histogram,
    hist_orth: &Histogram,
    spacing_ps: f64,
    windows_ps: &[f64],
) -> Result<Vec<SweepPoint>> {
    require_positive("spacing_ps", spacing_ps)?;
    if windows_ps.is_empty() {
        return Err(invalid("windows_ps", "at least one window is required"));
    }
    if windows_ps.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("windows_ps", "windows must be strictly ascending"));
    }
    let full = 0.5 * spacing_ps;
    if windows_ps[0] <= 0.0 || *windows_ps.last().unwrap() > full {
        return Err(invalid("windows_ps", format!("windows must lie in (0, {full}] ps")));
    }
    for h in [hist_par, hist_orth] {
        if (h.t_min_ps as f64) > -spacing_ps - full || (h.t_max_ps() as f64) < spacing_ps + full {
            return Err(Error::InsufficientData("histogram does not cover the ±spacing peaks".into()));
        }
    }
    let (par_total, _) = hist_par.sum_between(-full, full);
    windows_ps
        .iter()
        .map(|&w| {
            let (g_par, c_par) = windowed_g2(hist_par, spacing_ps, w)?;
            let (g_orth, _) = windowed_g2(hist_orth, spacing_ps, w)?;
            Ok(SweepPoint {
                window_ps: w,
                g2_parallel: g_par,
                g2_orthogonal: g_orth,
                visibility: postselected_visibility(g_par, g_orth)?,
                retained_fraction: if par_total > 0 { c_par as f64 / par_total as f64 } else { 0.0 },
            })
        })
        .collect()
}

/// Histogram of detection phase t mod T over one repetition period, for
/// lifetime fits.
pub fn decay_histogram(times_ps: &[i64], rep_period_ps: f64, bin_width_ps: i64) -> Result<Histogram> {
    require_positive("rep_period_ps", rep_period_ps)?;
    if bin_width_ps <= 0 {
        return Err(invalid("bin_width_ps", "must be > 0"));
    }
    let n_bins = (rep_period_ps / bin_width_ps as f64).floor() as usize;
    if n_bins == 0 {
        return Err(invalid("bin_width_ps", "must not exceed the repetition period"));
    }
    let mut counts = vec![0u64; n_bins];
    for &t in times_ps {
        let t = t as f64;
        let phase = t - (t / rep_period_ps).floor() * rep_period_ps;
        let i = (phase / bin_width_ps as f64) as usize;
        if i < n_bins {
            counts[i] += 1;
        }
    }
    let duration = times_ps.last().map_or(0, |&t| t + 1);
    Ok(Histogram { bin_width_ps, t_min_ps: 0, counts, n_events_ch0: times_ps.len(), n_events_ch1: 0, duration_ps: duration })
}
