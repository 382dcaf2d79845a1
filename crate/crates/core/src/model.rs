//! Closed-form emitter and cavity physics: Purcell enhancement, modified
//! lifetimes, the β-factor, the dephasing relation and the saturation curve.
//!
//! All functions are pure and validate their inputs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_non_negative, require_positive, require_unit, Result};

/// Off-resonant spontaneous-emission rate relative to bulk. With a coupled
/// lifetime of 650 ps this reproduces β ≈ 0.77.
pub const DEFAULT_BACKGROUND_RATE: f64 = 0.63;

/// Timescales and per-pulse probabilities describing a quantum-dot emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmitterParams {
    /// Radiative lifetime τ₁ (ps).
    pub tau1_ps: f64,
    /// Coherence time τ₂ (ps).
    pub tau2_ps: f64,
    /// Slow decay component (ps).
    pub tau_slow_ps: f64,
    /// Probability that a decay follows the fast component.
    pub branch_fast: f64,
    pub wavelength_nm: f64,
    /// Probability of an extra uncorrelated photon per excitation pulse.
    pub p_multi: f64,
}

impl Default for EmitterParams {
    fn default() -> Self {
        Self {
            tau1_ps: 650.0,
            tau2_ps: 150.0,
            tau_slow_ps: 1800.0,
            branch_fast: 1.0,
            wavelength_nm: 1320.0,
            p_multi: 0.0,
        }
    }
}

impl EmitterParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("tau1_ps", self.tau1_ps)?;
        require_positive("tau2_ps", self.tau2_ps)?;
        if self.tau2_ps > 2.0 * self.tau1_ps * (1.0 + 1e-12) {
            return Err(invalid(
                "tau2_ps",
                format!("must not exceed 2·tau1_ps = {}, got {}", 2.0 * self.tau1_ps, self.tau2_ps),
            ));
        }
        require_positive("tau_slow_ps", self.tau_slow_ps)?;
        if self.tau_slow_ps < self.tau1_ps {
            return Err(invalid("tau_slow_ps", "must be >= tau1_ps"));
        }
        require_unit("branch_fast", self.branch_fast)?;
        require_positive("wavelength_nm", self.wavelength_nm)?;
        if !(self.p_multi.is_finite() && (0.0..1.0).contains(&self.p_multi)) {
            return Err(invalid("p_multi", format!("must lie in [0, 1), got {}", self.p_multi)));
        }
        Ok(())
    }

    /// Pure-dephasing time implied by τ₁ and τ₂.
    pub fn dephasing_time_ps(&self) -> Result<f64> {
        dephasing_time(self.tau1_ps, self.tau2_ps)
    }
}

/// A single cavity mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityMode {
    /// Quality factor.
    pub q: f64,
    /// Mode volume in units of (λ/n)³.
    pub v_norm: f64,
    pub lambda_c_nm: f64,
    /// Linear polarization axis (degrees).
    pub pol_axis_deg: f64,
}

impl Default for CavityMode {
    fn default() -> Self {
        Self { q: 380.0, v_norm: 0.66, lambda_c_nm: 1320.0, pol_axis_deg: 0.0 }
    }
}

impl CavityMode {
    pub fn validate(&self) -> Result<()> {
        require_positive("q", self.q)?;
        require_positive("v_norm", self.v_norm)?;
        require_positive("lambda_c_nm", self.lambda_c_nm)?;
        if !self.pol_axis_deg.is_finite() {
            return Err(invalid("pol_axis_deg", "must be finite"));
        }
        Ok(())
    }

    /// Cavity linewidth (FWHM) in nm.
    pub fn linewidth_nm(&self) -> f64 {
        self.lambda_c_nm / self.q
    }
}

/// How well an emitter overlaps the cavity mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingGeometry {
    /// |E(r)|²/|E_max|² at the emitter position.
    pub spatial_mismatch: f64,
    /// cos²(Δθ) between dipole and mode polarization.
    pub pol_mismatch: f64,
    /// |λ_dot − λ_c| (nm).
    pub detuning_nm: f64,
}

impl Default for CouplingGeometry {
    fn default() -> Self {
        Self::IDEAL
    }
}

impl CouplingGeometry {
    pub const IDEAL: Self = Self { spatial_mismatch: 1.0, pol_mismatch: 1.0, detuning_nm: 0.0 };

    pub fn validate(&self) -> Result<()> {
        require_unit("spatial_mismatch", self.spatial_mismatch)?;
        require_unit("pol_mismatch", self.pol_mismatch)?;
        require_non_negative("detuning_nm", self.detuning_nm)
    }
}

/// Lorentzian spectral overlap with FWHM λ_c/Q; 1 on resonance.
pub fn spectral_factor(mode: &CavityMode, detuning_nm: f64) -> f64 {
    let half = 0.5 * mode.linewidth_nm();
    half * half / (detuning_nm * detuning_nm + half * half)
}

/// Purcell factor F_P = 3/(4π²)·Q/V scaled by the spatial, polarization and
/// spectral overlap factors.
pub fn purcell_factor(mode: &CavityMode, geom: &CouplingGeometry) -> Result<f64> {
    mode.validate()?;
    geom.validate()?;
    let ideal = 3.0 / (4.0 * PI * PI) * mode.q / mode.v_norm;
    Ok(ideal * geom.spatial_mismatch * geom.pol_mismatch * spectral_factor(mode, geom.detuning_nm))
}

/// Lifetime of an emitter whose bulk lifetime is `tau_bulk_ps`, given the
/// cavity enhancement and the residual (off-resonant) rate factor.
pub fn coupled_lifetime(tau_bulk_ps: f64, purcell: f64, background_rate: f64) -> Result<f64> {
    require_positive("tau_bulk_ps", tau_bulk_ps)?;
    require_non_negative("purcell", purcell)?;
    require_positive("background_rate", background_rate)?;
    Ok(tau_bulk_ps / (purcell + background_rate))
}

/// Coupling efficiency β ≈ 1 − τ_c/τ_uc.
pub fn beta_factor(tau_c_ps: f64, tau_uc_ps: f64) -> Result<f64> {
    require_positive("tau_c_ps", tau_c_ps)?;
    require_positive("tau_uc_ps", tau_uc_ps)?;
    if tau_c_ps > tau_uc_ps {
        return Err(invalid(
            "tau_c_ps",
            format!("coupled lifetime {tau_c_ps} ps exceeds uncoupled lifetime {tau_uc_ps} ps"),
        ));
    }
    Ok(1.0 - tau_c_ps / tau_uc_ps)
}

/// Pure-dephasing time from 1/τ_deph = 1/τ₂ − 1/(2τ₁).
///
/// Returns `f64::INFINITY` when τ₂ = 2τ₁ (lifetime-limited coherence, no
/// dephasing). Values of τ₂ above 2τ₁ are unphysical and rejected.
pub fn dephasing_time(tau1_ps: f64, tau2_ps: f64) -> Result<f64> {
    require_positive("tau1_ps", tau1_ps)?;
    require_positive("tau2_ps", tau2_ps)?;
    let rate = 1.0 / tau2_ps - 1.0 / (2.0 * tau1_ps);
    // relative slack absorbs rounding in τ₂ = 2τ₁ inputs
    let scale = 1.0 / tau2_ps;
    if rate.abs() <= 1e-12 * scale {
        return Ok(f64::INFINITY);
    }
    if rate < 0.0 {
        return Err(invalid(
            "tau2_ps",
            format!("τ₂ = {tau2_ps} ps exceeds the radiative limit 2τ₁ = {} ps", 2.0 * tau1_ps),
        ));
    }
    Ok(1.0 / rate)
}

/// Emission intensity under excitation power `p`: I = I_max(1 − e^{−P/P_sat}).
pub fn saturation_intensity(p_nw: f64, i_max: f64, p_sat_nw: f64) -> Result<f64> {
    require_non_negative("p_nw", p_nw)?;
    require_non_negative("i_max", i_max)?;
    require_positive("p_sat_nw", p_sat_nw)?;
    Ok(i_max * -(-p_nw / p_sat_nw).exp_m1())
}

/// Probability that a pulse of relative power P/P_sat excites the emitter.
pub fn excitation_probability(power_over_psat: f64) -> f64 {
    -(-power_over_psat).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn m3() -> CavityMode {
        CavityMode::default()
    }

    #[test]
    fn purcell_ideal_m3() {
        let f = purcell_factor(&m3(), &CouplingGeometry::IDEAL).unwrap();
        assert_relative_eq!(f, 43.75, max_relative = 1e-3);
        assert_eq!(format!("{f:.2}"), "43.75");
    }

    #[test]
    fn purcell_spatial_mismatch() {
        let mut g = CouplingGeometry::IDEAL;
        g.spatial_mismatch = 0.0;
        assert_eq!(purcell_factor(&m3(), &g).unwrap(), 0.0);
        g.spatial_mismatch = 0.1;
        let f = purcell_factor(&m3(), &g).unwrap();
        assert_relative_eq!(f, 4.375, max_relative = 1e-3);
    }

    #[test]
    fn purcell_detuning_half_linewidth_halves() {
        let mode = m3();
        let g = CouplingGeometry { detuning_nm: 0.5 * mode.linewidth_nm(), ..CouplingGeometry::IDEAL };
        let on = purcell_factor(&mode, &CouplingGeometry::IDEAL).unwrap();
        assert_relative_eq!(purcell_factor(&mode, &g).unwrap(), 0.5 * on, max_relative = 1e-12);
    }

    #[test]
    fn purcell_rejects_bad_mode() {
        let mut mode = m3();
        mode.q = 0.0;
        assert!(purcell_factor(&mode, &CouplingGeometry::IDEAL).is_err());
        mode.q = f64::NAN;
        assert!(purcell_factor(&mode, &CouplingGeometry::IDEAL).is_err());
        let mut mode = m3();
        mode.v_norm = -1.0;
        assert!(purcell_factor(&mode, &CouplingGeometry::IDEAL).is_err());
    }

    #[test]
    fn coupled_lifetime_examples() {
        // 1780/400 = 4.45 total rate enhancement
        let tau = coupled_lifetime(1780.0, 4.45 - 0.63, 0.63).unwrap();
        assert_relative_eq!(tau, 400.0, max_relative = 1e-12);
        assert_eq!(coupled_lifetime(1234.0, 0.0, 1.0).unwrap(), 1234.0);
        let off = coupled_lifetime(1780.0, 0.0, 0.63).unwrap();
        assert_relative_eq!(off, 2825.4, max_relative = 1e-4);
        assert!(coupled_lifetime(1780.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn beta_examples() {
        assert_relative_eq!(beta_factor(650.0, 2826.0).unwrap(), 0.770, epsilon = 5e-4);
        assert_eq!(beta_factor(700.0, 700.0).unwrap(), 0.0);
        assert_eq!(beta_factor(650.0, 1300.0).unwrap(), 0.5);
        assert!(beta_factor(800.0, 700.0).is_err());
    }

    #[test]
    fn dephasing_examples() {
        assert_relative_eq!(dephasing_time(650.0, 150.0).unwrap(), 169.5652, max_relative = 1e-6);
        assert_relative_eq!(dephasing_time(1000.0, 100.0).unwrap(), 105.2632, max_relative = 1e-6);
        assert!(dephasing_time(650.0, 1300.0).unwrap().is_infinite());
        assert!(dephasing_time(650.0, 1400.0).is_err());
    }

    #[test]
    fn saturation_examples() {
        let i = saturation_intensity(12.0, 1.55e6, 12.0).unwrap();
        assert_relative_eq!(i, 1.55e6 * (1.0 - (-1.0f64).exp()), max_relative = 1e-14);
        assert_relative_eq!(i, 9.798e5, max_relative = 1e-4);
        assert_eq!(saturation_intensity(0.0, 5.0, 3.0).unwrap(), 0.0);
        assert_relative_eq!(saturation_intensity(1e6, 7.0, 1.0).unwrap(), 7.0);
        assert!(saturation_intensity(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn emitter_validation() {
        let mut e = EmitterParams::default();
        assert!(e.validate().is_ok());
        e.tau2_ps = 2.0 * e.tau1_ps + 1.0;
        assert!(e.validate().is_err());
        let e = EmitterParams { tau_slow_ps: 100.0, ..Default::default() };
        assert!(e.validate().is_err());
        let e = EmitterParams { p_multi: 1.0, ..Default::default() };
        assert!(e.validate().is_err());
    }

    proptest! {
        #[test]
        fn purcell_linear_in_mismatch(s in 0.0f64..1.0, p in 0.0f64..1.0, k in 0.0f64..1.0) {
            let mode = m3();
            let base = CouplingGeometry { spatial_mismatch: s, pol_mismatch: p, detuning_nm: 0.0 };
            let scaled = CouplingGeometry { spatial_mismatch: s * k, ..base };
            let f0 = purcell_factor(&mode, &base).unwrap();
            let f1 = purcell_factor(&mode, &scaled).unwrap();
            prop_assert!((f1 - k * f0).abs() <= 1e-12 * f0.max(1.0));
            let scaled = CouplingGeometry { pol_mismatch: p * k, ..base };
            let f2 = purcell_factor(&mode, &scaled).unwrap();
            prop_assert!((f2 - k * f0).abs() <= 1e-12 * f0.max(1.0));
        }

        #[test]
        fn purcell_monotone_in_q_and_v(q in 10.0f64..1e4, dq in 0.1f64..100.0, v in 0.1f64..5.0, dv in 0.01f64..1.0) {
            let g = CouplingGeometry::IDEAL;
            let m = CavityMode { q, v_norm: v, ..m3() };
            let f = purcell_factor(&m, &g).unwrap();
            let higher_q = purcell_factor(&CavityMode { q: q + dq, ..m }, &g).unwrap();
            let larger_v = purcell_factor(&CavityMode { v_norm: v + dv, ..m }, &g).unwrap();
            prop_assert!(higher_q > f);
            prop_assert!(larger_v < f);
        }

        #[test]
        fn beta_identity(tau in 100.0f64..5000.0, f in 0.0f64..50.0, fb in 0.05f64..2.0) {
            let tc = coupled_lifetime(tau, f, fb).unwrap();
            let tuc = coupled_lifetime(tau, 0.0, fb).unwrap();
            let beta = beta_factor(tc, tuc).unwrap();
            let expected = f / (f + fb);
            prop_assert!((beta - expected).abs() <= 1e-12 * expected.max(1e-300) + 1e-15);
        }

        #[test]
        fn dephasing_round_trip(tau1 in 50.0f64..5000.0, frac in 0.01f64..0.999) {
            let tau2 = 2.0 * tau1 * frac;
            let td = dephasing_time(tau1, tau2).unwrap();
            let lhs = 1.0 / td + 1.0 / (2.0 * tau1);
            prop_assert!(((lhs - 1.0 / tau2) * tau2).abs() <= 1e-12);
        }

        #[test]
        fn saturation_monotone_concave(p in 0.0f64..100.0, psat in 0.5f64..50.0, h in 0.01f64..1.0) {
            let i = |x: f64| saturation_intensity(x, 1.0e6, psat).unwrap();
            prop_assert!(i(p + h) >= i(p));
            // second difference is non-positive
            prop_assert!(i(p + 2.0 * h) - 2.0 * i(p + h) + i(p) <= 1e-9);
        }
    }
}
