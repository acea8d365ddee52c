use alloc::format;

use crate::error::{invalid, Result};

/// Every tunable of the pipeline. Defaults are the published method values
/// where one exists; the rest are artifact choices.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PipelineConfig {
    /// Locale height histogram bin width (m).
    pub bin_width_m: f64,
    /// Standard deviation of the histogram smoothing kernel (m).
    pub smooth_sigma_m: f64,
    /// Locale radius as a multiple of the average footprint.
    pub locale_factor: f64,
    /// Lower bound on the locale radius (m).
    pub locale_min_radius_m: f64,
    /// Smoothed mass below which a concave run is treated as ripple.
    pub min_curve_mass: f64,
    /// Locales with fewer points skip curve analysis (take-all).
    pub min_locale_points: usize,
    /// Layers entirely below this height are flagged as ground vegetation.
    pub ground_vegetation_height_m: f64,
    /// Crowns narrower than this average width are noise (m).
    pub noise_min_width_m: f64,
    /// Crowns whose apex is below this height are noise (m).
    pub noise_min_height_m: f64,
    /// Surface model cell size (m), lower-bounded by the layer AFP.
    pub dsm_cell_m: f64,
    /// 3x3 mean smoothing of the surface model before marker detection.
    pub dsm_smoothing: bool,
    /// Minimum surface height for a watershed marker (m).
    pub marker_min_height_m: f64,
    /// DEM cell size (m).
    pub dem_cell_m: f64,
    /// Maximum relative height difference for a crown/stem pair.
    pub match_height_tol: f64,
    /// Maximum lean angle from nadir for a crown/stem pair (degrees).
    pub match_lean_tol_deg: f64,
    /// Evaluation plot radius (m); 0.04 ha circle by default.
    pub plot_radius_m: f64,
    /// Buffer ring around a plot whose crowns may match but never count as commissions (m).
    pub plot_buffer_m: f64,
    /// When false, the segmenter runs once on the whole cloud (surface-only baseline).
    pub stratification_enabled: bool,
}

/// Radius of a 0.04 ha circular plot.
pub const PLOT_RADIUS_0_04_HA: f64 = 11.283_791_670_955_125;

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bin_width_m: 0.25,
            smooth_sigma_m: 5.0,
            locale_factor: 6.0,
            locale_min_radius_m: 1.5,
            min_curve_mass: 1.0,
            min_locale_points: 8,
            ground_vegetation_height_m: 4.0,
            noise_min_width_m: 1.5,
            noise_min_height_m: 4.0,
            dsm_cell_m: 0.5,
            dsm_smoothing: true,
            marker_min_height_m: 2.0,
            dem_cell_m: 1.0,
            match_height_tol: 0.30,
            match_lean_tol_deg: 15.0,
            plot_radius_m: PLOT_RADIUS_0_04_HA,
            plot_buffer_m: 4.7,
            stratification_enabled: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bin_width_m", self.bin_width_m),
            ("smooth_sigma_m", self.smooth_sigma_m),
            ("locale_factor", self.locale_factor),
            ("locale_min_radius_m", self.locale_min_radius_m),
            ("noise_min_width_m", self.noise_min_width_m),
            ("noise_min_height_m", self.noise_min_height_m),
            ("dsm_cell_m", self.dsm_cell_m),
            ("dem_cell_m", self.dem_cell_m),
            ("match_height_tol", self.match_height_tol),
            ("match_lean_tol_deg", self.match_lean_tol_deg),
            ("plot_radius_m", self.plot_radius_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("min_curve_mass", self.min_curve_mass),
            ("ground_vegetation_height_m", self.ground_vegetation_height_m),
            ("marker_min_height_m", self.marker_min_height_m),
            ("plot_buffer_m", self.plot_buffer_m),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}
