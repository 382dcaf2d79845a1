//! Monte Carlo generation of time-tagged detection events for pulsed
//! excitation of a quantum-dot emitter, routed through a Hanbury-Brown–Twiss
//! splitter or an unbalanced Mach-Zehnder two-photon interferometer, and
//! recorded by imperfect detectors.
//!
//! Work is split into fixed blocks of laser repetitions. Each repetition and
//! each photon draws from its own window of a seeded ChaCha stream (see
//! [`crate::rng`]), so outputs are bit-identical for any worker count.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_non_negative, require_positive, require_unit, Error, Result};
use crate::model::{excitation_probability, EmitterParams};
use crate::rng::{check_budget, stage_rng, ItemRng, Stage};

/// Repetitions handled per parallel task.
const BLOCK: u64 = 4096;
/// Random words reserved per laser repetition.
const WORDS_PER_REP: u32 = 128;
/// Random words reserved per photon at the detector.
const WORDS_PER_PHOTON: u32 = 8;

/// Coincidence timing resolution (FWHM, ps) of the detector pair.
pub const COINCIDENCE_FWHM_PS: f64 = 200.0;

/// Per-detector Gaussian σ such that the difference of two detectors'
/// jitters has the given FWHM.
pub fn detector_sigma_for_coincidence_fwhm(fwhm_ps: f64) -> f64 {
    fwhm_ps / (2.0 * (2.0 * LN_2).sqrt() * 2f64.sqrt())
}

/// Pulsed excitation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseTrainConfig {
    pub rep_rate_hz: f64,
    pub n_pulses: u64,
    pub pulse_width_ps: f64,
    /// Pump power in units of the saturation power.
    pub power_over_psat: f64,
    /// Separation of the excitation double pulse; 0 for single pulses.
    pub double_pulse_delay_ps: f64,
}

impl Default for PulseTrainConfig {
    fn default() -> Self {
        Self {
            rep_rate_hz: 40e6,
            n_pulses: 1_000_000,
            pulse_width_ps: 50.0,
            // 5 nW against a 12 nW pulsed saturation power
            power_over_psat: 5.0 / 12.0,
            double_pulse_delay_ps: 0.0,
        }
    }
}

impl PulseTrainConfig {
    /// Double-pulse train for two-photon interference at the saturation power.
    pub fn hom_default() -> Self {
        Self { power_over_psat: 1.0, double_pulse_delay_ps: 5000.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("rep_rate_hz", self.rep_rate_hz)?;
        if self.n_pulses == 0 {
            return Err(invalid("n_pulses", "must be > 0"));
        }
        require_non_negative("pulse_width_ps", self.pulse_width_ps)?;
        require_non_negative("power_over_psat", self.power_over_psat)?;
        require_non_negative("double_pulse_delay_ps", self.double_pulse_delay_ps)?;
        if self.double_pulse_delay_ps >= self.rep_period_ps() {
            return Err(invalid("double_pulse_delay_ps", "must be shorter than the repetition period"));
        }
        Ok(())
    }

    pub fn rep_period_ps(&self) -> f64 {
        1e12 / self.rep_rate_hz
    }

    pub fn duration_ps(&self) -> f64 {
        self.n_pulses as f64 * self.rep_period_ps()
    }

    pub fn sub_pulses(&self) -> u8 {
        if self.double_pulse_delay_ps > 0.0 {
            2
        } else {
            1
        }
    }

    pub fn excitation_probability(&self) -> f64 {
        excitation_probability(self.power_over_psat)
    }
}

/// Single-photon detector model, shared by both channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorParams {
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub dead_time_ps: f64,
    /// Per-detector Gaussian timing jitter σ.
    pub irf_sigma_ps: f64,
    /// Transmission of the optics between the emitter and the detector
    /// fibers, applied on top of `efficiency`.
    pub path_transmission: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            efficiency: 0.20,
            dark_rate_hz: 200.0,
            dead_time_ps: 0.0,
            irf_sigma_ps: detector_sigma_for_coincidence_fwhm(COINCIDENCE_FWHM_PS),
            path_transmission: 1.0,
        }
    }
}

impl DetectorParams {
    /// Noiseless, jitter-free, unit-efficiency detectors.
    pub fn perfect() -> Self {
        Self { efficiency: 1.0, dark_rate_hz: 0.0, dead_time_ps: 0.0, irf_sigma_ps: 0.0, path_transmission: 1.0 }
    }

    /// InGaAs avalanche diode with its 4 μs hold-off.
    pub fn with_dead_time(self) -> Self {
        Self { dead_time_ps: 4e6, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        require_unit("efficiency", self.efficiency)?;
        require_non_negative("dark_rate_hz", self.dark_rate_hz)?;
        require_non_negative("dead_time_ps", self.dead_time_ps)?;
        require_non_negative("irf_sigma_ps", self.irf_sigma_ps)?;
        require_unit("path_transmission", self.path_transmission)
    }

    fn total_efficiency(&self) -> f64 {
        self.efficiency * self.path_transmission
    }
}

/// σ of the detection-time difference between two photons from different
/// pulses: both detector jitters plus the uniform excitation jitter of both
/// emissions.
pub fn coincidence_sigma_ps(det: &DetectorParams, train: &PulseTrainConfig) -> f64 {
    let w = train.pulse_width_ps;
    (2.0 * det.irf_sigma_ps * det.irf_sigma_ps + 2.0 * w * w / 12.0).sqrt()
}

/// σ of a single detection time relative to its laser pulse, excluding the
/// decay itself.
pub fn single_channel_sigma_ps(det: &DetectorParams, train: &PulseTrainConfig) -> f64 {
    let w = train.pulse_width_ps;
    (det.irf_sigma_ps * det.irf_sigma_ps + w * w / 12.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolMode {
    Parallel,
    Orthogonal,
}

/// Two-photon interferometer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomConfig {
    /// Path difference of the analysis interferometer.
    pub mz_delay_ps: f64,
    pub pol_mode: PolMode,
    /// Wavepacket overlap v.
    pub v_wavepacket: f64,
    /// Probability that an independent photon leaves the final splitter
    /// towards channel 0.
    pub splitter_ratio: f64,
    /// Coincidence weight of path-matched, fully distinguishable pairs
    /// relative to an ideal lossless combiner. 0.5 gives a zero-delay peak
    /// at half the height of the ±Δ peaks (g⊥(0) = 0.5); 1.0 gives equal
    /// heights.
    pub matched_pair_weight: f64,
}

impl Default for HomConfig {
    fn default() -> Self {
        Self {
            mz_delay_ps: 5000.0,
            pol_mode: PolMode::Parallel,
            v_wavepacket: 0.97,
            splitter_ratio: 0.5,
            matched_pair_weight: 0.5,
        }
    }
}

impl HomConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("mz_delay_ps", self.mz_delay_ps)?;
        require_unit("v_wavepacket", self.v_wavepacket)?;
        require_unit("splitter_ratio", self.splitter_ratio)?;
        require_unit("matched_pair_weight", self.matched_pair_weight)
    }

    pub fn effective_visibility(&self) -> f64 {
        match self.pol_mode {
            PolMode::Parallel => self.v_wavepacket,
            PolMode::Orthogonal => 0.0,
        }
    }
}

/// One detection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimestampRecord {
    pub channel: u8,
    pub t_ps: i64,
}

/// Detection events of a two-detector run, one time-sorted list per channel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Detections {
    pub ch0: Vec<TimestampRecord>,
    pub ch1: Vec<TimestampRecord>,
}

impl Detections {
    pub fn times(&self, channel: u8) -> Vec<i64> {
        let list = if channel == 0 { &self.ch0 } else { &self.ch1 };
        list.iter().map(|r| r.t_ps).collect()
    }
}

/// A photon leaving the emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub pulse_index: u64,
    /// 0 for the first (or only) pulse of a repetition, 1 for the delayed one.
    pub sub_pulse: u8,
    pub t_emit_ps: f64,
    /// False for the uncorrelated multi-photon/background emission.
    pub is_signal: bool,
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}

/// Exponential variate from a uniform in [0, 1).
fn exp_variate(tau: f64, u: f64) -> f64 {
    -tau * (-u).ln_1p()
}

/// Standard normal variate by Box-Muller; always consumes two uniforms.
fn normal_variate(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = uniform(rng);
    let u2 = uniform(rng);
    (-2.0 * (-u1).ln_1p()).sqrt() * (2.0 * PI * u2).cos()
}

/// Decay delay drawn from the fast/slow mixture.
fn decay_delay(em: &EmitterParams, rng: &mut ChaCha8Rng) -> f64 {
    let u_branch = uniform(rng);
    let u = uniform(rng);
    let tau = if u_branch < em.branch_fast { em.tau1_ps } else { em.tau_slow_ps };
    exp_variate(tau, u)
}

/// Photons emitted in one repetition. Always consumes the same number of
/// uniforms per sub-pulse.
fn emit_repetition(
    em: &EmitterParams,
    train: &PulseTrainConfig,
    p_exc: f64,
    rep: u64,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Emission>,
) {
    let period = train.rep_period_ps();
    for sub in 0..train.sub_pulses() {
        let base = rep as f64 * period + sub as f64 * train.double_pulse_delay_ps;
        let excited = uniform(rng) < p_exc;
        let jitter = train.pulse_width_ps * uniform(rng);
        let delay = decay_delay(em, rng);
        if excited {
            out.push(Emission { pulse_index: rep, sub_pulse: sub, t_emit_ps: base + jitter + delay, is_signal: true });
        }
        let extra = uniform(rng) < em.p_multi;
        let jitter = train.pulse_width_ps * uniform(rng);
        let delay = decay_delay(em, rng);
        if extra {
            out.push(Emission { pulse_index: rep, sub_pulse: sub, t_emit_ps: base + jitter + delay, is_signal: false });
        }
    }
}

fn blocks(n: u64) -> impl IndexedParallelIterator<Item = (u64, u64)> {
    let n_blocks = n.div_ceil(BLOCK) as usize;
    (0..n_blocks).into_par_iter().map(move |b| {
        let b = b as u64;
        (b * BLOCK, ((b + 1) * BLOCK).min(n))
    })
}

/// Emission times for every repetition of the train, in repetition order.
///
/// A pulse excites the dot with probability 1 − e^{−P/P_sat}; the photon
/// leaves after a uniform excitation offset within the pulse width plus a
/// fast/slow exponential decay delay. Independently, an extra uncorrelated
/// photon is emitted with probability `p_multi`.
pub fn generate_emission_times(em: &EmitterParams, train: &PulseTrainConfig, seed: u64) -> Result<Vec<Emission>> {
    em.validate()?;
    train.validate()?;
    let p_exc = train.excitation_probability();
    let chunks: Vec<Vec<Emission>> = blocks(train.n_pulses)
        .map(|(lo, hi)| {
            let mut items = ItemRng::new(seed, Stage::Emission, WORDS_PER_REP);
            let mut out = Vec::new();
            for rep in lo..hi {
                let (rng, end) = items.seek(rep);
                emit_repetition(em, train, p_exc, rep, rng, &mut out);
                check_budget(rng, end);
            }
            out
        })
        .collect();
    Ok(chunks.concat())
}

/// Applies detection efficiency, Gaussian timing jitter, dark counts and
/// dead time to photons arriving at one detector.
///
/// `arrivals_ps` must be time-sorted; the randomness applied to each photon
/// is keyed by its index in that list. Events outside `[0, duration_ps)` are
/// discarded, times are rounded to integer picoseconds, and an event closer
/// than the dead time to the previous accepted event is dropped (at least
/// 1 ps apart, so accepted times are strictly increasing).
pub fn apply_detector(
    arrivals_ps: &[f64],
    det: &DetectorParams,
    channel: u8,
    duration_ps: f64,
    seed: u64,
) -> Result<Vec<TimestampRecord>> {
    det.validate()?;
    if channel > 1 {
        return Err(invalid("channel", "must be 0 or 1"));
    }
    if arrivals_ps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Unsorted(format!("photon arrivals for channel {channel}")));
    }
    let eff = det.total_efficiency();
    let sigma = det.irf_sigma_ps;
    let chunk = BLOCK as usize * 4;
    let detected: Vec<Vec<f64>> = arrivals_ps
        .par_chunks(chunk)
        .enumerate()
        .map(|(c, part)| {
            let mut items = ItemRng::new(seed, Stage::detector(channel), WORDS_PER_PHOTON);
            let mut out = Vec::with_capacity((part.len() as f64 * eff) as usize + 1);
            for (k, &t) in part.iter().enumerate() {
                let (rng, end) = items.seek((c * chunk + k) as u64);
                let survives = uniform(rng) < eff;
                let z = normal_variate(rng);
                check_budget(rng, end);
                if survives {
                    out.push(t + sigma * z);
                }
            }
            out
        })
        .collect();
    let mut times = detected.concat();
    times.extend(dark_counts(det.dark_rate_hz, duration_ps, channel, seed));
    times.sort_unstable_by(f64::total_cmp);

    let hold_off = (det.dead_time_ps.ceil() as i64).max(1);
    let mut out = Vec::with_capacity(times.len());
    let mut last: Option<i64> = None;
    for t in times {
        if !(t >= 0.0 && t < duration_ps) {
            continue;
        }
        let t = t.round() as i64;
        if let Some(prev) = last {
            if t - prev < hold_off {
                continue;
            }
        }
        out.push(TimestampRecord { channel, t_ps: t });
        last = Some(t);
    }
    Ok(out)
}

/// Homogeneous Poisson dark counts over `[0, duration_ps)`.
fn dark_counts(rate_hz: f64, duration_ps: f64, channel: u8, seed: u64) -> Vec<f64> {
    if rate_hz <= 0.0 {
        return Vec::new();
    }
    let mean_gap = 1e12 / rate_hz;
    let mut rng = stage_rng(seed, Stage::dark(channel));
    let mut out = Vec::with_capacity((duration_ps / mean_gap * 1.1) as usize + 8);
    let mut t = 0.0;
    loop {
        t += exp_variate(mean_gap, uniform(&mut rng));
        if t >= duration_ps {
            break;
        }
        out.push(t);
    }
    out
}

fn route_and_detect(
    arrivals: [Vec<f64>; 2],
    det: &DetectorParams,
    duration_ps: f64,
    seed: u64,
) -> Result<Detections> {
    let [mut a0, mut a1] = arrivals;
    a0.sort_unstable_by(f64::total_cmp);
    a1.sort_unstable_by(f64::total_cmp);
    let (ch0, ch1) = rayon::join(
        || apply_detector(&a0, det, 0, duration_ps, seed),
        || apply_detector(&a1, det, 1, duration_ps, seed),
    );
    Ok(Detections { ch0: ch0?, ch1: ch1? })
}

/// Hanbury-Brown–Twiss measurement: each emitted photon is sent to channel
/// 0 or 1 with equal probability, then detected.
pub fn hbt_simulate(em: &EmitterParams, train: &PulseTrainConfig, det: &DetectorParams, seed: u64) -> Result<Detections> {
    em.validate()?;
    train.validate()?;
    det.validate()?;
    let p_exc = train.excitation_probability();
    let parts: Vec<[Vec<f64>; 2]> = blocks(train.n_pulses)
        .map(|(lo, hi)| {
            let mut items = ItemRng::new(seed, Stage::Emission, WORDS_PER_REP);
            let mut photons = Vec::new();
            let mut out: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for rep in lo..hi {
                let (rng, end) = items.seek(rep);
                photons.clear();
                emit_repetition(em, train, p_exc, rep, rng, &mut photons);
                for p in &photons {
                    let ch = usize::from(uniform(rng) >= 0.5);
                    out[ch].push(p.t_emit_ps);
                }
                check_budget(rng, end);
            }
            out
        })
        .collect();
    let arrivals = merge_channels(parts);
    route_and_detect(arrivals, det, train.duration_ps(), seed)
}

fn merge_channels(parts: Vec<[Vec<f64>; 2]>) -> [Vec<f64>; 2] {
    let mut a0 = Vec::with_capacity(parts.iter().map(|p| p[0].len()).sum());
    let mut a1 = Vec::with_capacity(parts.iter().map(|p| p[1].len()).sum());
    for [p0, p1] in parts {
        a0.extend(p0);
        a1.extend(p1);
    }
    [a0, a1]
}

/// Two-photon interference with a double-pulse excitation and an unbalanced
/// analysis interferometer of the same delay Δ.
///
/// Each photon takes the short or long arm with probability ½ and then
/// leaves the final splitter independently, giving coincidence peaks at 0,
/// ±Δ and ±2Δ. When the first signal photon takes the long arm and the
/// second the short arm they meet at the splitter with arrival-time
/// difference τ; they then exit through different ports with probability
/// `matched_pair_weight`·2R(1−R)·(1 − v·e^{−2|τ|/τ_deph}) and otherwise bunch
/// into the same port. Orthogonal polarization sets v = 0.
pub fn hom_simulate(
    em: &EmitterParams,
    train: &PulseTrainConfig,
    hom: &HomConfig,
    det: &DetectorParams,
    seed: u64,
) -> Result<Detections> {
    em.validate()?;
    train.validate()?;
    hom.validate()?;
    det.validate()?;
    if train.double_pulse_delay_ps <= 0.0 || (hom.mz_delay_ps - train.double_pulse_delay_ps).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "analysis delay {} ps must equal the excitation double-pulse delay {} ps",
            hom.mz_delay_ps, train.double_pulse_delay_ps
        )));
    }
    let p_exc = train.excitation_probability();
    let v_eff = hom.effective_visibility();
    let tau_deph = em.dephasing_time_ps()?;
    let delta = hom.mz_delay_ps;
    let r = hom.splitter_ratio;
    let split_base = hom.matched_pair_weight * 2.0 * r * (1.0 - r);

    let parts: Vec<[Vec<f64>; 2]> = blocks(train.n_pulses)
        .map(|(lo, hi)| {
            let mut items = ItemRng::new(seed, Stage::Emission, WORDS_PER_REP);
            let mut photons = Vec::new();
            let mut out: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for rep in lo..hi {
                let (rng, end) = items.seek(rep);
                photons.clear();
                emit_repetition(em, train, p_exc, rep, rng, &mut photons);
                // arm and port draws for every photon, then one pair draw
                let routed: Vec<(f64, bool, f64)> = photons
                    .iter()
                    .map(|p| {
                        let long = uniform(rng) < 0.5;
                        let u_port = uniform(rng);
                        (p.t_emit_ps + if long { delta } else { 0.0 }, long, u_port)
                    })
                    .collect();
                let u_pair = uniform(rng);
                check_budget(rng, end);

                let first = photons.iter().position(|p| p.is_signal && p.sub_pulse == 0);
                let second = photons.iter().position(|p| p.is_signal && p.sub_pulse == 1);
                let matched = match (first, second) {
                    (Some(a), Some(b)) if routed[a].1 && !routed[b].1 => Some((a, b)),
                    _ => None,
                };
                for (i, &(t, _, u_port)) in routed.iter().enumerate() {
                    let ch = match matched {
                        Some((a, b)) if i == a || i == b => {
                            let tau = routed[b].0 - routed[a].0;
                            let overlap = if tau_deph.is_infinite() { 1.0 } else { (-2.0 * tau.abs() / tau_deph).exp() };
                            let p_split = split_base * (1.0 - v_eff * overlap);
                            let ch_a = usize::from(routed[a].2 >= r);
                            if i == a || u_pair >= p_split {
                                // bunched pairs share photon a's port
                                ch_a
                            } else {
                                1 - ch_a
                            }
                        }
                        _ => usize::from(u_port >= r),
                    };
                    out[ch].push(t);
                }
            }
            out
        })
        .collect();
    let arrivals = merge_channels(parts);
    // photons delayed by up to 2Δ may overrun the last period
    route_and_detect(arrivals, det, train.duration_ps(), seed)
}

/// Lifetime measurement: every emitted photon goes to channel 0.
pub fn lifetime_simulate(
    em: &EmitterParams,
    train: &PulseTrainConfig,
    det: &DetectorParams,
    seed: u64,
) -> Result<Vec<TimestampRecord>> {
    det.validate()?;
    let mut arrivals: Vec<f64> = generate_emission_times(em, train, seed)?.iter().map(|e| e.t_emit_ps).collect();
    arrivals.sort_unstable_by(f64::total_cmp);
    apply_detector(&arrivals, det, 0, train.duration_ps(), seed)
}

/// HBT g²(0) of the generative model for signal probability `p_exc` and
/// extra-photon probability `p_multi`: 2ab/(a + b)².
pub fn predicted_g2_zero(p_exc: f64, p_multi: f64) -> f64 {
    let s = p_exc + p_multi;
    if s == 0.0 {
        0.0
    } else {
        2.0 * p_exc * p_multi / (s * s)
    }
}

/// Extra-photon probability that yields the target HBT g²(0); the smaller
/// root of g(a + b)² = 2ab. For small targets this is ≈ g·a/2.
pub fn calibrate_p_multi(target_g2: f64, p_exc: f64) -> Result<f64> {
    if !(target_g2.is_finite() && (0.0..=0.5).contains(&target_g2)) {
        return Err(invalid("target_g2", format!("must lie in [0, 0.5], got {target_g2}")));
    }
    if !(p_exc.is_finite() && p_exc > 0.0 && p_exc <= 1.0) {
        return Err(invalid("p_exc", format!("must lie in (0, 1], got {p_exc}")));
    }
    if target_g2 == 0.0 {
        return Ok(0.0);
    }
    let g = target_g2;
    // rationalized to avoid cancellation at small g
    let b = p_exc * g / ((1.0 - g) + (1.0 - 2.0 * g).sqrt());
    if b >= 1.0 {
        return Err(invalid("target_g2", "requires an extra-photon probability >= 1"));
    }
    Ok(b)
}

/// Runs `f` on a dedicated pool of `workers` threads (0 = rayon default).
pub fn run_with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} worker threads: {e}")))?;
    Ok(pool.install(f))
}
