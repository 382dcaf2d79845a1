//! Collection-efficiency bookkeeping: chained optical losses, the inferred
//! first-lens efficiency, the multi-photon correction and the predicted
//! efficiency from emission geometry.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_non_negative, require_unit, Error, Result};

/// One loss element of the detection path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyStage {
    pub name: String,
    pub transmission: f64,
    /// Relative 1σ uncertainty of `transmission`.
    #[serde(default)]
    pub rel_sigma: f64,
}

impl EfficiencyStage {
    pub fn new(name: impl Into<String>, transmission: f64, rel_sigma: f64) -> Result<Self> {
        let stage = Self { name: name.into(), transmission, rel_sigma };
        stage.validate()?;
        Ok(stage)
    }

    /// Stage given as `transmission ± abs_sigma`.
    pub fn with_abs_sigma(name: impl Into<String>, transmission: f64, abs_sigma: f64) -> Result<Self> {
        Self::new(name, transmission, abs_sigma / transmission)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.transmission.is_finite() && self.transmission > 0.0 && self.transmission <= 1.0) {
            return Err(invalid("transmission", format!("must lie in (0, 1], got {}", self.transmission)));
        }
        require_non_negative("rel_sigma", self.rel_sigma)
    }
}

/// The measured collection path: spectrometer, fiber coupling and the
/// remaining lenses, mirrors and splitters.
pub fn reference_collection_stages() -> Vec<EfficiencyStage> {
    vec![
        EfficiencyStage::with_abs_sigma("spectrometer", 0.42, 0.02).unwrap(),
        EfficiencyStage::with_abs_sigma("fiber coupling", 0.48, 0.04).unwrap(),
        EfficiencyStage::with_abs_sigma("lenses, mirrors, splitters", 0.41, 0.02).unwrap(),
    ]
}

/// InGaAs avalanche-diode quantum efficiency, taken as exact.
pub fn reference_detector_stage() -> EfficiencyStage {
    EfficiencyStage::new("detector quantum efficiency", 0.20, 0.0).unwrap()
}

/// Combined transmission of a stage chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainEfficiency {
    pub eta: f64,
    pub rel_sigma: f64,
}

impl ChainEfficiency {
    pub fn abs_sigma(&self) -> f64 {
        self.eta * self.rel_sigma
    }
}

/// Product of stage transmissions with relative uncertainties added in
/// quadrature.
pub fn chain_efficiency(stages: &[EfficiencyStage]) -> Result<ChainEfficiency> {
    if stages.is_empty() {
        return Err(invalid("stages", "at least one stage is required"));
    }
    let mut eta = 1.0;
    let mut var = 0.0;
    for s in stages {
        s.validate()?;
        eta *= s.transmission;
        var += s.rel_sigma * s.rel_sigma;
    }
    Ok(ChainEfficiency { eta, rel_sigma: var.sqrt() })
}

/// First-lens collection efficiency implied by a detected-photon probability
/// and the downstream transmission.
pub fn infer_collection_efficiency(detected_prob: f64, downstream_eta: f64) -> Result<f64> {
    for (name, v) in [("detected_prob", detected_prob), ("downstream_eta", downstream_eta)] {
        if !(v.is_finite() && v > 0.0 && v <= 1.0) {
            return Err(invalid(name, format!("must lie in (0, 1], got {v}")));
        }
    }
    let eta = detected_prob / downstream_eta;
    if eta > 1.0 {
        return Err(Error::Inconsistent(format!(
            "detected probability {detected_prob} exceeds downstream transmission {downstream_eta}"
        )));
    }
    Ok(eta)
}

/// Removes the multi-photon contribution: η·√(1 − g²(0)).
pub fn multiphoton_correct(eta: f64, g2_0: f64) -> Result<f64> {
    require_unit("eta", eta)?;
    if !(g2_0.is_finite() && (0.0..1.0).contains(&g2_0)) {
        return Err(invalid("g2_0", format!("must lie in [0, 1), got {g2_0}")));
    }
    Ok(eta * (1.0 - g2_0).sqrt())
}

/// Expected first-lens efficiency from the upward-emitted fraction, the
/// fraction inside the lens NA, and the cavity coupling β.
pub fn predicted_collection(upward_fraction: f64, na_fraction: f64, beta: f64) -> Result<f64> {
    require_unit("upward_fraction", upward_fraction)?;
    require_unit("na_fraction", na_fraction)?;
    require_unit("beta", beta)?;
    Ok(upward_fraction * na_fraction * beta)
}

/// Efficiency report rendered as an aligned text table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub stages: Vec<EfficiencyStage>,
    pub total: ChainEfficiency,
}

impl BudgetReport {
    pub fn new(stages: Vec<EfficiencyStage>) -> Result<Self> {
        let total = chain_efficiency(&stages)?;
        Ok(Self { stages, total })
    }
}

impl fmt::Display for BudgetReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.stages.iter().map(|s| s.name.len()).max().unwrap_or(0).max(5);
        writeln!(f, "{:<width$}  {:>12}  {:>10}", "stage", "transmission", "rel_sigma")?;
        for s in &self.stages {
            writeln!(f, "{:<width$}  {:>12.4}  {:>10.4}", s.name, s.transmission, s.rel_sigma)?;
        }
        write!(
            f,
            "{:<width$}  {:>12.4}  {:>10.4}  (± {:.4})",
            "total",
            self.total.eta,
            self.total.rel_sigma,
            self.total.abs_sigma()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn reference_chain() {
        let c = chain_efficiency(&reference_collection_stages()).unwrap();
        assert_relative_eq!(c.eta, 0.082656, max_relative = 1e-12);
        // quadrature of 2/42, 4/48, 2/41
        assert_relative_eq!(c.abs_sigma(), 0.0088991, max_relative = 1e-4);
        let mut with_det = reference_collection_stages();
        with_det.push(reference_detector_stage());
        let d = chain_efficiency(&with_det).unwrap();
        assert_relative_eq!(d.eta, 0.0165312, max_relative = 1e-6);
        assert_relative_eq!(d.rel_sigma, c.rel_sigma, max_relative = 1e-15);
    }

    #[test]
    fn single_stage_is_identity() {
        let s = EfficiencyStage::new("x", 0.3, 0.1).unwrap();
        let c = chain_efficiency(std::slice::from_ref(&s)).unwrap();
        assert_eq!(c.eta, 0.3);
        assert_eq!(c.rel_sigma, 0.1);
        assert!(chain_efficiency(&[]).is_err());
    }

    #[test]
    fn inferred_collection() {
        assert_relative_eq!(infer_collection_efficiency(0.0074, 0.0165).unwrap(), 0.448485, max_relative = 1e-5);
        assert_relative_eq!(infer_collection_efficiency(0.0074, 0.016).unwrap(), 0.4625, max_relative = 1e-12);
        assert_eq!(infer_collection_efficiency(0.37, 1.0).unwrap(), 0.37);
        assert!(matches!(infer_collection_efficiency(0.5, 0.25), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn multiphoton() {
        assert_relative_eq!(multiphoton_correct(0.46, 0.39).unwrap(), 0.359270, max_relative = 1e-5);
        assert_relative_eq!(multiphoton_correct(0.46, 0.085).unwrap(), 0.440019, max_relative = 1e-5);
        assert_eq!(multiphoton_correct(0.46, 0.0).unwrap(), 0.46);
        assert!(multiphoton_correct(0.46, 1.0).is_err());
    }

    #[test]
    fn predicted() {
        assert_relative_eq!(predicted_collection(0.62, 0.80, 0.77).unwrap(), 0.38192, max_relative = 1e-12);
        assert_eq!(predicted_collection(0.0, 0.8, 0.77).unwrap(), 0.0);
        assert_eq!(predicted_collection(1.0, 1.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn table_render() {
        let r = BudgetReport::new(reference_collection_stages()).unwrap();
        let text = r.to_string();
        assert!(text.lines().count() == 5);
        assert!(text.contains("0.0827"));
    }

    proptest! {
        #[test]
        fn order_invariant(ts in proptest::collection::vec((0.01f64..1.0, 0.0f64..0.2), 1..6)) {
            let stages: Vec<_> = ts.iter().enumerate()
                .map(|(i, (t, s))| EfficiencyStage::new(format!("s{i}"), *t, *s).unwrap()).collect();
            let mut rev = stages.clone();
            rev.reverse();
            let a = chain_efficiency(&stages).unwrap();
            let b = chain_efficiency(&rev).unwrap();
            prop_assert!((a.eta - b.eta).abs() <= 1e-14 * a.eta);
            prop_assert!((a.rel_sigma - b.rel_sigma).abs() <= 1e-14);
            // grouping: collapse the first stage pair into one equivalent stage
            if stages.len() >= 2 {
                let head = chain_efficiency(&stages[..2]).unwrap();
                let mut grouped = vec![EfficiencyStage::new("g", head.eta, head.rel_sigma).unwrap()];
                grouped.extend_from_slice(&stages[2..]);
                let c = chain_efficiency(&grouped).unwrap();
                prop_assert!((a.eta - c.eta).abs() <= 1e-14 * a.eta);
                prop_assert!((a.rel_sigma - c.rel_sigma).abs() <= 1e-12);
            }
        }

        #[test]
        fn correction_monotone(eta in 0.0f64..1.0, g in 0.0f64..0.98, dg in 0.001f64..0.01) {
            prop_assert!(multiphoton_correct(eta, g + dg).unwrap() <= multiphoton_correct(eta, g).unwrap());
        }

        #[test]
        fn inference_inverts_chain(x in 0.01f64..1.0, chain in 0.001f64..1.0) {
            let detected = chain * x;
            let back = infer_collection_efficiency(detected, chain).unwrap();
            prop_assert!((back - x).abs() <= 1e-15 * x.max(1.0) * 4.0);
        }
    }
}
