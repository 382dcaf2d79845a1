//! Simulate-then-analyze round trips through the public API.

use sps_core::analysis::{analyze_g2, analyze_hom, analyze_lifetime, hom_histogram, G2Config, HomAnalysisConfig};
use sps_core::fitting::DecayModel;
use sps_core::mc::{
    hbt_simulate, hom_simulate, lifetime_simulate, single_channel_sigma_ps, DetectorParams, HomConfig, PolMode,
    PulseTrainConfig,
};
use sps_core::model::EmitterParams;

fn channel0(recs: &[sps_core::mc::TimestampRecord]) -> Vec<i64> {
    recs.iter().map(|r| r.t_ps).collect()
}

#[test]
fn single_exponential_lifetime_recovered() {
    let em = EmitterParams { tau1_ps: 1700.0, ..Default::default() };
    let train = PulseTrainConfig { n_pulses: 400_000, ..Default::default() };
    let det = DetectorParams::default();
    let recs = lifetime_simulate(&em, &train, &det, 3).unwrap();
    let sigma = single_channel_sigma_ps(&det, &train);
    let (_, fit) = analyze_lifetime(&channel0(&recs), train.rep_period_ps(), 16, sigma, DecayModel::Single).unwrap();
    assert!(fit.fit.converged);
    assert!((fit.tau_ps.value / 1700.0 - 1.0).abs() < 0.03, "{:?}", fit.tau_ps);
}

#[test]
fn biexponential_lifetime_recovered() {
    let em = EmitterParams { tau1_ps: 650.0, tau_slow_ps: 1800.0, branch_fast: 0.8, ..Default::default() };
    let train = PulseTrainConfig { n_pulses: 2_000_000, ..Default::default() };
    let det = DetectorParams::default();
    let recs = lifetime_simulate(&em, &train, &det, 4).unwrap();
    let sigma = single_channel_sigma_ps(&det, &train);
    let (_, fit) = analyze_lifetime(&channel0(&recs), train.rep_period_ps(), 16, sigma, DecayModel::Biexp).unwrap();
    let slow = fit.tau_slow_ps.unwrap().value;
    let branch = fit.branch_fast.unwrap().value;
    assert!((fit.tau_ps.value / 650.0 - 1.0).abs() < 0.05, "fast {:?}", fit.tau_ps);
    assert!((slow / 1800.0 - 1.0).abs() < 0.05, "slow {slow}");
    assert!((branch / 0.8 - 1.0).abs() < 0.05, "branch {branch}");
}

#[test]
fn hbt_without_extra_photons_has_empty_center() {
    let em = EmitterParams::default();
    let train = PulseTrainConfig { n_pulses: 1_000_000, ..Default::default() };
    let d = hbt_simulate(&em, &train, &DetectorParams::default(), 9).unwrap();
    let r = analyze_g2(&d.times(0), &d.times(1), train.duration_ps() as i64, &G2Config::default()).unwrap();
    let g = r.fit.g2_0.value;
    assert!(g.abs() < 4.0 * r.fit.g2_0.sigma.max(0.005), "g2(0) = {g} ± {}", r.fit.g2_0.sigma);
    assert!((r.fit.tau1.value / 650.0 - 1.0).abs() < 0.05);
}

#[test]
fn distinguishable_photons_show_no_dip() {
    let em = EmitterParams::default();
    let train = PulseTrainConfig { n_pulses: 2_000_000, ..PulseTrainConfig::hom_default() };
    let det = DetectorParams { efficiency: 1.0, ..Default::default() };
    let cfg = HomAnalysisConfig::default();
    let hist = |seed| {
        let hom = HomConfig { v_wavepacket: 0.0, pol_mode: PolMode::Parallel, ..Default::default() };
        let d = hom_simulate(&em, &train, &hom, &det, seed).unwrap();
        hom_histogram(&d.times(0), &d.times(1), train.duration_ps() as i64, &cfg).unwrap()
    };
    // two parallel runs with no overlap look like a parallel/orthogonal pair
    // with zero visibility
    let r = analyze_hom(&hist(1), &hist(2), &cfg).unwrap();
    assert!(r.visibility_raw.abs() < 0.03, "raw visibility {}", r.visibility_raw);
}
