//! Linear-polarization angle scans and the polarization ratio
//! ρ = (I_max − I_min)/(I_max + I_min).

use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Error, Result};

/// Intensity recorded behind a rotating linear analyzer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleScan {
    pub angles_deg: Vec<f64>,
    pub intensities: Vec<f64>,
}

impl AngleScan {
    pub fn new(angles_deg: Vec<f64>, intensities: Vec<f64>) -> Result<Self> {
        let scan = Self { angles_deg, intensities };
        scan.validate()?;
        Ok(scan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles_deg.len() != self.intensities.len() {
            return Err(invalid("intensities", "must have one value per angle"));
        }
        if self.angles_deg.len() < 4 {
            return Err(invalid("angles_deg", "at least 4 angles are required"));
        }
        if self.angles_deg.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("angles_deg", "angles must be strictly increasing"));
        }
        if self.intensities.iter().any(|i| !(i.is_finite() && *i >= 0.0)) {
            return Err(invalid("intensities", "intensities must be finite and >= 0"));
        }
        Ok(())
    }

    /// Writes `angle_deg,counts_per_s`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "angle_deg,counts_per_s")?;
        for (a, i) in self.angles_deg.iter().zip(&self.intensities) {
            writeln!(out, "{a},{i}")?;
        }
        Ok(())
    }
}

/// Malus-law scan of a partially polarized source with polarization ratio
/// `rho_true` and peak intensity `i_peak` along `pol_axis_deg`.
pub fn simulate_angle_scan(pol_axis_deg: f64, rho_true: f64, i_peak: f64, angles_deg: &[f64]) -> Result<AngleScan> {
    if !(rho_true.is_finite() && (0.0..=1.0).contains(&rho_true)) {
        return Err(invalid("rho_true", format!("must lie in [0, 1], got {rho_true}")));
    }
    require_positive("i_peak", i_peak)?;
    let floor = (1.0 - rho_true) / (1.0 + rho_true);
    let swing = 2.0 * rho_true / (1.0 + rho_true);
    let intensities = angles_deg
        .iter()
        .map(|a| {
            let c = (a - pol_axis_deg).to_radians().cos();
            i_peak * (floor + swing * c * c)
        })
        .collect();
    AngleScan::new(angles_deg.to_vec(), intensities)
}

/// ρ from a pair of extreme intensities.
pub fn ratio_from_extrema(i_max: f64, i_min: f64) -> Result<f64> {
    let total = i_max + i_min;
    if !(total > 0.0) {
        return Err(Error::Undefined("polarization ratio of a dark scan".into()));
    }
    Ok((i_max - i_min) / total)
}

/// Fitted `I(θ) = c₀ + c₁cos2θ + c₂sin2θ`, i.e. an offset plus cos² term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cos2Fit {
    pub offset: f64,
    pub amplitude: f64,
    pub axis_deg: f64,
}

impl Cos2Fit {
    pub fn i_max(&self) -> f64 {
        self.offset + self.amplitude
    }

    pub fn i_min(&self) -> f64 {
        (self.offset - self.amplitude).max(0.0)
    }
}

/// Linear least-squares cos² fit of a scan.
pub fn fit_cos2(scan: &AngleScan) -> Result<Cos2Fit> {
    scan.validate()?;
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for (a, i) in scan.angles_deg.iter().zip(&scan.intensities) {
        let t = 2.0 * a.to_radians();
        let row = Vector3::new(1.0, t.cos(), t.sin());
        ata += row * row.transpose();
        atb += row * *i;
    }
    let coef = ata
        .lu()
        .solve(&atb)
        .ok_or_else(|| Error::Undefined("scan angles do not determine a cos² curve".into()))?;
    let amplitude = coef[1].hypot(coef[2]);
    let axis_deg = 0.5 * coef[2].atan2(coef[1]).to_degrees();
    Ok(Cos2Fit { offset: coef[0], amplitude, axis_deg })
}

/// Polarization ratio of a scan, taken from the extrema of a fitted cos²
/// curve so that coarse angle grids that miss the true axis are handled.
pub fn polarization_ratio(scan: &AngleScan) -> Result<f64> {
    scan.validate()?;
    if scan.intensities.iter().all(|&i| i == 0.0) {
        return Err(Error::Undefined("polarization ratio of an all-zero scan".into()));
    }
    let fit = fit_cos2(scan)?;
    ratio_from_extrema(fit.i_max(), fit.i_min())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid(step: f64) -> Vec<f64> {
        let n = (360.0 / step) as usize;
        (0..n).map(|k| k as f64 * step).collect()
    }

    #[test]
    fn generator_examples() {
        let s = simulate_angle_scan(0.0, 1.0, 100.0, &[0.0, 45.0, 90.0, 135.0]).unwrap();
        assert!(s.intensities[2].abs() < 1e-12);
        let s = simulate_angle_scan(0.0, 0.0, 100.0, &grid(30.0)).unwrap();
        assert!(s.intensities.iter().all(|&i| (i - 100.0).abs() < 1e-12));
        let s = simulate_angle_scan(0.0, 0.96, 100.0, &[0.0, 45.0, 90.0, 135.0]).unwrap();
        assert_relative_eq!(s.intensities[0], 100.0, max_relative = 1e-12);
        assert_relative_eq!(s.intensities[2], 2.0408, max_relative = 1e-4);
    }

    #[test]
    fn ratio_examples() {
        let s = simulate_angle_scan(0.0, 0.96, 100.0, &grid(10.0)).unwrap();
        assert!((polarization_ratio(&s).unwrap() - 0.96).abs() < 0.005);
        let flat = AngleScan::new(grid(45.0), vec![7.0; 8]).unwrap();
        assert!(polarization_ratio(&flat).unwrap().abs() < 1e-12);
        assert_relative_eq!(ratio_from_extrema(100.0, 2.0408).unwrap(), 0.96, epsilon = 1e-4);
    }

    #[test]
    fn dark_scan_is_an_error() {
        let dark = AngleScan::new(grid(45.0), vec![0.0; 8]).unwrap();
        assert!(matches!(polarization_ratio(&dark), Err(Error::Undefined(_))));
    }

    #[test]
    fn off_grid_axis_recovered() {
        // axis 37° is never sampled by a 20° grid
        let s = simulate_angle_scan(37.0, 0.93, 50.0, &grid(20.0)).unwrap();
        let fit = fit_cos2(&s).unwrap();
        assert_relative_eq!(fit.axis_deg, 37.0, epsilon = 1e-9);
        assert_relative_eq!(polarization_ratio(&s).unwrap(), 0.93, epsilon = 1e-9);
    }

    #[test]
    fn scan_validation() {
        assert!(AngleScan::new(vec![0.0, 10.0, 20.0], vec![1.0; 3]).is_err());
        assert!(AngleScan::new(vec![0.0, 10.0, 5.0, 30.0], vec![1.0; 4]).is_err());
        assert!(AngleScan::new(vec![0.0, 10.0, 20.0, 30.0], vec![1.0, -1.0, 1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn ratio_scale_invariant(rho in 0.0f64..1.0, axis in 0.0f64..180.0, k in 1e-3f64..1e3) {
            let s = simulate_angle_scan(axis, rho, 100.0, &grid(15.0)).unwrap();
            let scaled = AngleScan::new(s.angles_deg.clone(), s.intensities.iter().map(|i| i * k).collect()).unwrap();
            let a = polarization_ratio(&s).unwrap();
            let b = polarization_ratio(&scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn dense_round_trip(rho in 0.0f64..1.0, axis in -90.0f64..90.0) {
            let s = simulate_angle_scan(axis, rho, 1234.0, &grid(5.0)).unwrap();
            prop_assert!((polarization_ratio(&s).unwrap() - rho).abs() < 1e-6);
        }
    }
}
