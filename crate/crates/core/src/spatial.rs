//! Gaussian-lobe model of a cavity mode's normalized intensity
//! |E(r)|²/|E_max|² and the resulting position-dependent Purcell factor.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Result};
use crate::model::{purcell_factor, CavityMode, CouplingGeometry};

/// Normalized in-plane intensity profile built from one or more Gaussian lobes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeProfile {
    pub lobe_centers_nm: Vec<(f64, f64)>,
    pub sigma_x_nm: f64,
    pub sigma_y_nm: f64,
}

impl ModeProfile {
    pub fn new(lobe_centers_nm: Vec<(f64, f64)>, sigma_x_nm: f64, sigma_y_nm: f64) -> Result<Self> {
        let profile = Self { lobe_centers_nm, sigma_x_nm, sigma_y_nm };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("sigma_x_nm", self.sigma_x_nm)?;
        require_positive("sigma_y_nm", self.sigma_y_nm)?;
        if self.lobe_centers_nm.is_empty() {
            return Err(invalid("lobe_centers_nm", "at least one lobe is required"));
        }
        if self.lobe_centers_nm.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(invalid("lobe_centers_nm", "lobe positions must be finite"));
        }
        Ok(())
    }

    /// Returns a copy with two lobes placed symmetrically at ±separation/2
    /// along x.
    pub fn with_lobe_pair(&self, separation_nm: f64) -> Self {
        let h = 0.5 * separation_nm;
        Self { lobe_centers_nm: vec![(-h, 0.0), (h, 0.0)], ..self.clone() }
    }
}

/// |E(r)|²/|E_max|² at (x, y): the brightest lobe wins, so the value never
/// exceeds 1 and equals 1 at every lobe center.
pub fn mode_intensity(profile: &ModeProfile, x_nm: f64, y_nm: f64) -> f64 {
    profile
        .lobe_centers_nm
        .iter()
        .map(|&(x0, y0)| {
            let u = (x_nm - x0) / profile.sigma_x_nm;
            let v = (y_nm - y0) / profile.sigma_y_nm;
            (-(u * u) - v * v).exp()
        })
        .fold(0.0, f64::max)
}

/// Builds a single-lobe profile at the origin whose intensity falls to
/// `1/drop_factor` at distance `drop_x_nm` along x and `drop_y_nm` along y.
pub fn calibrate_profile(drop_x_nm: f64, drop_y_nm: f64, drop_factor: f64) -> Result<ModeProfile> {
    require_positive("drop_x_nm", drop_x_nm)?;
    require_positive("drop_y_nm", drop_y_nm)?;
    if !(drop_factor.is_finite() && drop_factor > 1.0) {
        return Err(invalid("drop_factor", format!("must be > 1, got {drop_factor}")));
    }
    let root = drop_factor.ln().sqrt();
    ModeProfile::new(vec![(0.0, 0.0)], drop_x_nm / root, drop_y_nm / root)
}

/// Rectangular evaluation grid (inclusive of both extents).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min_nm: f64,
    pub x_max_nm: f64,
    pub y_min_nm: f64,
    pub y_max_nm: f64,
    pub step_nm: f64,
}

impl GridSpec {
    pub fn centered(half_extent_nm: f64, step_nm: f64) -> Self {
        Self {
            x_min_nm: -half_extent_nm,
            x_max_nm: half_extent_nm,
            y_min_nm: -half_extent_nm,
            y_max_nm: half_extent_nm,
            step_nm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("step_nm", self.step_nm)?;
        for (name, v) in [
            ("x_min_nm", self.x_min_nm),
            ("x_max_nm", self.x_max_nm),
            ("y_min_nm", self.y_min_nm),
            ("y_max_nm", self.y_max_nm),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.x_max_nm <= self.x_min_nm {
            return Err(invalid("x_max_nm", "extent along x must be positive"));
        }
        if self.y_max_nm <= self.y_min_nm {
            return Err(invalid("y_max_nm", "extent along y must be positive"));
        }
        Ok(())
    }

    fn axis(min: f64, max: f64, step: f64) -> Vec<f64> {
        let n = ((max - min) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| min + i as f64 * step).collect()
    }

    pub fn xs(&self) -> Vec<f64> {
        Self::axis(self.x_min_nm, self.x_max_nm, self.step_nm)
    }

    pub fn ys(&self) -> Vec<f64> {
        Self::axis(self.y_min_nm, self.y_max_nm, self.step_nm)
    }
}

/// Purcell factor sampled on a grid, stored row-major (y rows, x columns).
#[derive(Debug, Clone, PartialEq)]
pub struct PurcellMap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl PurcellMap {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.xs.len() + ix]
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `x_nm,y_nm,purcell`, one row per grid point in row-major order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x_nm,y_nm,purcell")?;
        for (iy, y) in self.ys.iter().enumerate() {
            for (ix, x) in self.xs.iter().enumerate() {
                writeln!(out, "{x},{y},{}", self.at(ix, iy))?;
            }
        }
        Ok(())
    }
}

/// Evaluates the on-resonance, polarization-matched Purcell factor over the
/// grid with the spatial overlap taken from `profile`. Rows are computed in
/// parallel; the result does not depend on the partitioning.
pub fn purcell_map(mode: &CavityMode, profile: &ModeProfile, grid: &GridSpec) -> Result<PurcellMap> {
    grid.validate()?;
    profile.validate()?;
    let peak = purcell_factor(mode, &CouplingGeometry::IDEAL)?;
    let xs = grid.xs();
    let ys = grid.ys();
    let values: Vec<f64> = ys
        .par_iter()
        .flat_map_iter(|&y| xs.iter().map(move |&x| peak * mode_intensity(profile, x, y)))
        .collect();
    Ok(PurcellMap { xs, ys, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn calibrated_widths() {
        let p = calibrate_profile(150.0, 85.0, 10.0).unwrap();
        assert_relative_eq!(p.sigma_x_nm, 98.85, epsilon = 5e-3);
        assert_relative_eq!(p.sigma_y_nm, 56.02, epsilon = 5e-3);
        let e = calibrate_profile(42.0, 42.0, std::f64::consts::E).unwrap();
        assert_relative_eq!(e.sigma_x_nm, 42.0, max_relative = 1e-15);
        assert_relative_eq!(e.sigma_y_nm, 42.0, max_relative = 1e-15);
    }

    #[test]
    fn calibration_points_drop_by_ten() {
        let p = calibrate_profile(150.0, 85.0, 10.0).unwrap();
        assert_relative_eq!(mode_intensity(&p, 150.0, 0.0), 0.1, max_relative = 1e-9);
        assert_relative_eq!(mode_intensity(&p, 0.0, 85.0), 0.1, max_relative = 1e-9);
        assert_eq!(mode_intensity(&p, 0.0, 0.0), 1.0);
    }

    #[test]
    fn calibrate_rejects_bad_input() {
        assert!(calibrate_profile(0.0, 1.0, 10.0).is_err());
        assert!(calibrate_profile(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn map_peak_and_tail() {
        let p = calibrate_profile(150.0, 85.0, 10.0).unwrap();
        let grid = GridSpec::centered(600.0, 5.0);
        let map = purcell_map(&CavityMode::default(), &p, &grid).unwrap();
        assert_relative_eq!(map.peak(), 43.75, max_relative = 1e-3);
        let ix = map.xs.iter().position(|&x| (x - 150.0).abs() < 1e-9).unwrap();
        let iy = map.ys.iter().position(|&y| y.abs() < 1e-9).unwrap();
        assert_relative_eq!(map.at(ix, iy), 0.1 * map.peak(), max_relative = 1e-9);
        // corner is > 5σ away along x
        assert!(map.at(0, 0) < 1e-5 * map.peak());
    }

    #[test]
    fn map_is_reflection_symmetric_for_symmetric_lobes() {
        let p = calibrate_profile(150.0, 85.0, 10.0).unwrap().with_lobe_pair(120.0);
        let grid = GridSpec::centered(300.0, 10.0);
        let map = purcell_map(&CavityMode::default(), &p, &grid).unwrap();
        let (nx, ny) = (map.xs.len(), map.ys.len());
        for iy in 0..ny {
            for ix in 0..nx {
                let v = map.at(ix, iy);
                assert_relative_eq!(v, map.at(nx - 1 - ix, iy), max_relative = 1e-12);
                assert_relative_eq!(v, map.at(ix, ny - 1 - iy), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn csv_layout() {
        let p = calibrate_profile(150.0, 85.0, 10.0).unwrap();
        let grid = GridSpec { x_min_nm: 0.0, x_max_nm: 10.0, y_min_nm: 0.0, y_max_nm: 5.0, step_nm: 5.0 };
        let map = purcell_map(&CavityMode::default(), &p, &grid).unwrap();
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x_nm,y_nm,purcell");
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert!(lines[1].starts_with("0,0,"));
        assert!(lines[2].starts_with("5,0,"));
        assert!(lines[4].starts_with("0,5,"));
    }

    #[test]
    fn bad_grid() {
        let p = calibrate_profile(150.0, 85.0, 10.0).unwrap();
        let mut grid = GridSpec::centered(100.0, 0.0);
        assert!(purcell_map(&CavityMode::default(), &p, &grid).is_err());
        grid.step_nm = 1.0;
        grid.x_max_nm = grid.x_min_nm;
        assert!(purcell_map(&CavityMode::default(), &p, &grid).is_err());
    }

    proptest! {
        #[test]
        fn intensity_bounded(x in -2000.0f64..2000.0, y in -2000.0f64..2000.0, sep in 0.0f64..400.0) {
            let p = calibrate_profile(150.0, 85.0, 10.0).unwrap().with_lobe_pair(sep);
            let i = mode_intensity(&p, x, y);
            prop_assert!((0.0..=1.0).contains(&i));
        }

        #[test]
        fn calibration_round_trip(dx in 10.0f64..500.0, dy in 10.0f64..500.0, k in 1.5f64..1000.0) {
            let p = calibrate_profile(dx, dy, k).unwrap();
            prop_assert!((mode_intensity(&p, dx, 0.0) * k - 1.0).abs() < 1e-9);
            prop_assert!((mode_intensity(&p, 0.0, -dy) * k - 1.0).abs() < 1e-9);
        }
    }
}
