//! Flat TOML experiment configuration. Every key is optional; missing keys
//! take the reference values, unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{LinkClass, LinkGeometry};
use crate::constellation::{ConstellationConfig, LinkLimits};
use crate::lens::LensSystem;
use crate::optimizer::{OptimizerSettings, SearchGrid};
use crate::relay::NoiseBudget;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("config: {0}")]
    Parse(String),
    #[error("config key {key} must be {rule}, got {value}")]
    Invalid {
        key: &'static str,
        rule: &'static str,
        value: f64,
    },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub tx_power_w: f64,
    pub sigma_theta_intra_rad: f64,
    pub sigma_theta_inter_rad: f64,
    pub aperture_radius_m: f64,
    pub wavelength_m: f64,
    /// Beam divergence; sets the receiver beam radius `divergence * L` in
    /// the fixed-beam sweeps.
    pub divergence_rad: f64,
    pub planck_h: f64,
    pub optical_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub n_sp: f64,
    pub p_bg_w: f64,
    pub responsivity_a_per_w: f64,
    pub sigma_thermal: f64,
    /// Hard-limiter output level ahead of the EDFA.
    pub ohl_output_level_w: f64,

    pub link_length_m: f64,
    pub sigma_theta_rad: f64,
    pub threshold_min_w: f64,
    pub threshold_max_w: f64,
    pub threshold_points: usize,
    /// Threshold nodes of the exhaustive search grid.
    pub grid_threshold_points: usize,
    pub beam_min_m: f64,
    pub beam_max_m: f64,
    pub beam_points: usize,

    pub relays_min: usize,
    pub relays_max: usize,
    pub total_distance_m: f64,

    pub lens_waist_m: f64,
    pub lens_spacing_m: f64,
    pub focal_min_m: f64,
    pub focal_max_m: f64,
    pub lens_response_s: f64,

    pub altitude_m: f64,
    pub inclination_deg: f64,
    pub planes: usize,
    pub sats_per_plane: usize,
    pub perturbation_max_deg: f64,
    pub earth_radius_m: f64,
    pub max_inter_orbit_m: f64,
    pub max_intra_orbit_m: f64,
    pub min_clearance_m: f64,
    pub ground_separation_m: f64,
    pub ground_bearing_deg: f64,
    pub corridor_half_angle_deg: f64,

    pub epsilon_rel: f64,
    pub max_inner: usize,
    pub max_outer: usize,

    pub mc_trials: u64,
    pub confidence_z: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let grid = SearchGrid::default();
        let opt = OptimizerSettings::default();
        Self {
            tx_power_w: 4.0,
            sigma_theta_intra_rad: 50e-6,
            sigma_theta_inter_rad: 150e-6,
            aperture_radius_m: 0.1,
            wavelength_m: 1550e-9,
            divergence_rad: 400e-6,
            planck_h: 6.6e-34,
            optical_freq_hz: 1.9e14,
            bandwidth_hz: 2e8,
            n_sp: 1.1,
            p_bg_w: 6e-9,
            responsivity_a_per_w: 0.8,
            sigma_thermal: 1e-9,
            ohl_output_level_w: 1e-3,

            link_length_m: 1.0e6,
            sigma_theta_rad: 110e-6,
            threshold_min_w: grid.threshold_min_w,
            threshold_max_w: grid.threshold_max_w,
            threshold_points: 200,
            grid_threshold_points: grid.threshold_points,
            beam_min_m: grid.beam_min_m,
            beam_max_m: grid.beam_max_m,
            beam_points: grid.beam_points,

            relays_min: 1,
            relays_max: 14,
            total_distance_m: 4.0e6,

            lens_waist_m: 2e-3,
            lens_spacing_m: 0.04,
            focal_min_m: 0.015,
            focal_max_m: 0.060,
            lens_response_s: 5e-3,

            altitude_m: 600e3,
            inclination_deg: 53.0,
            planes: 20,
            sats_per_plane: 25,
            perturbation_max_deg: 1.0,
            earth_radius_m: 6371e3,
            max_inter_orbit_m: 1e6,
            max_intra_orbit_m: 2e6,
            min_clearance_m: 100e3,
            ground_separation_m: 14_125e3,
            ground_bearing_deg: 45.0,
            corridor_half_angle_deg: 15.0,

            epsilon_rel: opt.epsilon_rel,
            max_inner: opt.max_inner,
            max_outer: opt.max_outer,

            mc_trials: 1_000_000,
            confidence_z: 3.0,
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, in hex.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tx_power_w", self.tx_power_w),
            ("sigma_theta_intra_rad", self.sigma_theta_intra_rad),
            ("sigma_theta_inter_rad", self.sigma_theta_inter_rad),
            ("aperture_radius_m", self.aperture_radius_m),
            ("wavelength_m", self.wavelength_m),
            ("divergence_rad", self.divergence_rad),
            ("planck_h", self.planck_h),
            ("optical_freq_hz", self.optical_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("n_sp", self.n_sp),
            ("p_bg_w", self.p_bg_w),
            ("responsivity_a_per_w", self.responsivity_a_per_w),
            ("sigma_thermal", self.sigma_thermal),
            ("ohl_output_level_w", self.ohl_output_level_w),
            ("link_length_m", self.link_length_m),
            ("sigma_theta_rad", self.sigma_theta_rad),
            ("threshold_min_w", self.threshold_min_w),
            ("beam_min_m", self.beam_min_m),
            ("total_distance_m", self.total_distance_m),
            ("lens_waist_m", self.lens_waist_m),
            ("lens_spacing_m", self.lens_spacing_m),
            ("focal_min_m", self.focal_min_m),
            ("lens_response_s", self.lens_response_s),
            ("altitude_m", self.altitude_m),
            ("earth_radius_m", self.earth_radius_m),
            ("max_inter_orbit_m", self.max_inter_orbit_m),
            ("max_intra_orbit_m", self.max_intra_orbit_m),
            ("ground_separation_m", self.ground_separation_m),
            ("epsilon_rel", self.epsilon_rel),
            ("confidence_z", self.confidence_z),
        ];
        for (key, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::Invalid {
                    key,
                    rule: "positive and finite",
                    value,
                });
            }
        }
        let ordered = [
            ("threshold_max_w", self.threshold_min_w, self.threshold_max_w),
            ("beam_max_m", self.beam_min_m, self.beam_max_m),
            ("focal_max_m", self.focal_min_m, self.focal_max_m),
        ];
        for (key, lo, hi) in ordered {
            if !(hi > lo) {
                return Err(ConfigError::Invalid {
                    key,
                    rule: "greater than its minimum",
                    value: hi,
                });
            }
        }
        let counts = [
            ("threshold_points", self.threshold_points, 2),
            ("grid_threshold_points", self.grid_threshold_points, 32),
            ("beam_points", self.beam_points, 32),
            ("planes", self.planes, 1),
            ("sats_per_plane", self.sats_per_plane, 1),
            ("max_inner", self.max_inner, 1),
            ("max_outer", self.max_outer, 1),
            ("relays_min", self.relays_min, 1),
        ];
        for (key, value, min) in counts {
            if value < min {
                return Err(ConfigError::Invalid {
                    key,
                    rule: "at least its minimum count",
                    value: value as f64,
                });
            }
        }
        if self.relays_max < self.relays_min {
            return Err(ConfigError::Invalid {
                key: "relays_max",
                rule: "at least relays_min",
                value: self.relays_max as f64,
            });
        }
        if !(self.inclination_deg > 0.0 && self.inclination_deg <= 90.0) {
            return Err(ConfigError::Invalid {
                key: "inclination_deg",
                rule: "in (0, 90]",
                value: self.inclination_deg,
            });
        }
        if self.mc_trials < 10_000 {
            return Err(ConfigError::Invalid {
                key: "mc_trials",
                rule: "at least 10000",
                value: self.mc_trials as f64,
            });
        }
        for (key, value) in [
            ("perturbation_max_deg", self.perturbation_max_deg),
            ("min_clearance_m", self.min_clearance_m),
            ("corridor_half_angle_deg", self.corridor_half_angle_deg),
        ] {
            if !(value >= 0.0) {
                return Err(ConfigError::Invalid {
                    key,
                    rule: "non-negative",
                    value,
                });
            }
        }
        Ok(())
    }

    pub fn noise(&self) -> NoiseBudget {
        NoiseBudget {
            background_sigma: self.p_bg_w,
            n_sp: self.n_sp,
            planck_h: self.planck_h,
            optical_freq_hz: self.optical_freq_hz,
            bandwidth_hz: self.bandwidth_hz,
            responsivity_a_per_w: self.responsivity_a_per_w,
            thermal_sigma_a: self.sigma_thermal,
        }
    }

    pub fn link(&self, length_m: f64, sigma_theta_rad: f64, class: LinkClass) -> Option<LinkGeometry> {
        LinkGeometry::new(length_m, sigma_theta_rad, self.aperture_radius_m, self.wavelength_m, class).ok()
    }

    /// Receiver beam radius produced by the configured divergence over `length_m`.
    pub fn fixed_beam_radius(&self, length_m: f64) -> f64 {
        self.divergence_rad * length_m
    }

    pub fn sigma_for(&self, class: LinkClass) -> f64 {
        match class {
            LinkClass::IntraOrbit => self.sigma_theta_intra_rad,
            LinkClass::InterOrbit => self.sigma_theta_inter_rad,
        }
    }

    pub fn optimizer_settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            epsilon_rel: self.epsilon_rel,
            max_inner: self.max_inner,
            max_outer: self.max_outer,
        }
    }

    pub fn search_grid(&self) -> SearchGrid {
        SearchGrid {
            threshold_min_w: self.threshold_min_w,
            threshold_max_w: self.threshold_max_w,
            threshold_points: self.grid_threshold_points,
            beam_min_m: self.beam_min_m,
            beam_max_m: self.beam_max_m,
            beam_points: self.beam_points,
        }
    }

    pub fn lens_system(&self) -> Option<LensSystem> {
        let mut sys = LensSystem::new(
            self.lens_waist_m,
            self.wavelength_m,
            self.lens_spacing_m,
            (self.focal_min_m, self.focal_max_m),
        )
        .ok()?;
        sys.response_time_s = self.lens_response_s;
        Some(sys)
    }

    pub fn constellation(&self) -> ConstellationConfig {
        ConstellationConfig {
            num_planes: self.planes,
            sats_per_plane: self.sats_per_plane,
            altitude_m: self.altitude_m,
            inclination_deg: self.inclination_deg,
            perturbation_max_deg: self.perturbation_max_deg,
            earth_radius_m: self.earth_radius_m,
            seed: self.seed,
        }
    }

    pub fn link_limits(&self) -> LinkLimits {
        LinkLimits {
            max_inter_orbit_m: self.max_inter_orbit_m,
            max_intra_orbit_m: self.max_intra_orbit_m,
            min_altitude_clearance_m: self.min_clearance_m,
            sigma_theta_intra_rad: self.sigma_theta_intra_rad,
            sigma_theta_inter_rad: self.sigma_theta_inter_rad,
        }
    }
}
