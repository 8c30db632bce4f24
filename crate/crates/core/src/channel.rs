//! Gaussian-beam geometry and the pointing-error fading of one optical hop.
//!
//! The received fraction of power `h` depends on the beam radius at the
//! receiver and on the random beam-center offset caused by two independent
//! Gaussian pointing angles. In the far field `h` is power-law distributed
//! on `(0, h_max]` with shape `gamma = w^2 / (4 L^2 sigma^2)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{integrate_breakpoints, NumericsError, QuadratureSpec};

/// Far-field approximation is trusted when the beam is this many times
/// wider than the aperture.
pub const FARFIELD_VALIDITY_RATIO: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ChannelError::InvalidParameter { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    IntraOrbit,
    InterOrbit,
}

impl LinkClass {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkClass::IntraOrbit => "intra_orbit",
            LinkClass::InterOrbit => "inter_orbit",
        }
    }
}

/// Physical parameters of one hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub length_m: f64,
    /// Standard deviation of each pointing-error axis.
    pub sigma_theta_rad: f64,
    pub aperture_radius_m: f64,
    pub wavelength_m: f64,
    pub link_class: LinkClass,
}

impl LinkGeometry {
    pub fn new(
        length_m: f64,
        sigma_theta_rad: f64,
        aperture_radius_m: f64,
        wavelength_m: f64,
        link_class: LinkClass,
    ) -> Result<Self> {
        let g = Self {
            length_m,
            sigma_theta_rad,
            aperture_radius_m,
            wavelength_m,
            link_class,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        positive("link length", self.length_m)?;
        positive("pointing jitter", self.sigma_theta_rad)?;
        positive("aperture radius", self.aperture_radius_m)?;
        positive("wavelength", self.wavelength_m)?;
        Ok(())
    }
}

/// Transmitter waist and the derived beam at the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub waist_w0: f64,
    pub receiver_beam_radius_wi: f64,
    /// Far-field half-angle divergence.
    pub divergence_theta_d: f64,
}

impl BeamConfig {
    pub fn from_waist(geom: &LinkGeometry, waist_w0: f64) -> Result<Self> {
        positive("beam waist", waist_w0)?;
        Ok(Self {
            waist_w0,
            receiver_beam_radius_wi: beam_radius_at(geom, waist_w0),
            divergence_theta_d: geom.wavelength_m / (PI * waist_w0),
        })
    }

    /// The waist whose far-field spot at the receiver has radius `wi`
    /// (`wi ~ theta L`, the regime of every inter-satellite hop).
    pub fn for_receiver_radius(geom: &LinkGeometry, wi: f64) -> Result<Self> {
        positive("receiver beam radius", wi)?;
        let theta = wi / geom.length_m;
        Self::from_waist(geom, geom.wavelength_m / (PI * theta))
    }
}

/// Gaussian beam radius after propagating the hop length from waist `w0`.
pub fn beam_radius_at(geom: &LinkGeometry, w0: f64) -> f64 {
    beam_radius_at_distance(w0, geom.wavelength_m, geom.length_m)
}

/// `w(z) = w0 sqrt(1 + (z / z_R)^2)` with `z_R = pi w0^2 / lambda`.
pub fn beam_radius_at_distance(w0: f64, wavelength: f64, z: f64) -> f64 {
    let ratio = wavelength * z / (PI * w0 * w0);
    w0 * ratio.hypot(1.0)
}

/// Pointing-fading distribution of the channel gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingModel {
    pub gamma_shape: f64,
    pub h_max: f64,
}

impl FadingModel {
    pub fn new(gamma_shape: f64, h_max: f64) -> Result<Self> {
        positive("fading shape", gamma_shape)?;
        if !(h_max > 0.0 && h_max < 1.0) {
            return Err(ChannelError::InvalidParameter {
                name: "peak gain (must lie in (0, 1))",
                value: h_max,
            });
        }
        Ok(Self { gamma_shape, h_max })
    }

    /// Fading of a hop whose receiver beam radius is `wi`.
    pub fn for_link(geom: &LinkGeometry, wi: f64) -> Result<Self> {
        geom.validate()?;
        positive("receiver beam radius", wi)?;
        let l_sigma = geom.length_m * geom.sigma_theta_rad;
        let gamma = wi * wi / (4.0 * l_sigma * l_sigma);
        let ra_w = geom.aperture_radius_m / wi;
        Self::new(gamma, ra_w * ra_w)
    }

    /// Density `gamma h^(gamma-1) / h_max^gamma` on `(0, h_max)`, zero elsewhere.
    pub fn pdf(&self, h: f64) -> f64 {
        if !(h > 0.0 && h < self.h_max) {
            return 0.0;
        }
        let g = self.gamma_shape;
        g / h * (g * (h / self.h_max).ln()).exp()
    }

    /// `(h / h_max)^gamma`, clamped to `[0, 1]`.
    pub fn cdf(&self, h: f64) -> f64 {
        if h <= 0.0 {
            0.0
        } else if h >= self.h_max {
            1.0
        } else {
            (h / self.h_max).powf(self.gamma_shape)
        }
    }

    /// Inverse CDF.
    pub fn quantile(&self, u: f64) -> f64 {
        self.h_max * u.clamp(0.0, 1.0).powf(1.0 / self.gamma_shape)
    }

    /// Mean gain `h_max gamma / (gamma + 1)`.
    pub fn mean(&self) -> f64 {
        self.h_max * self.gamma_shape / (self.gamma_shape + 1.0)
    }
}

/// Pointing angles of the beam center.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PointingError {
    pub theta_x: f64,
    pub theta_y: f64,
}

impl PointingError {
    pub fn squared_norm(&self) -> f64 {
        self.theta_x * self.theta_x + self.theta_y * self.theta_y
    }
}

/// One i.i.d. Gaussian draw per axis; `theta_x` is drawn first.
pub fn sample_pointing<R: Rng + ?Sized>(geom: &LinkGeometry, rng: &mut R) -> PointingError {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    PointingError {
        theta_x: x * geom.sigma_theta_rad,
        theta_y: y * geom.sigma_theta_rad,
    }
}

/// Whether the far-field gain formula is trusted for this beam.
pub fn farfield_valid(geom: &LinkGeometry, wi: f64, ratio: f64) -> bool {
    wi >= ratio * geom.aperture_radius_m
}

/// Far-field gain `h_max exp(-2 L^2 |theta|^2 / wi^2)`.
///
/// Logs a warning when the beam is narrower than
/// [`FARFIELD_VALIDITY_RATIO`] aperture radii; the value is still returned.
pub fn channel_gain_farfield(
    fm: &FadingModel,
    geom: &LinkGeometry,
    wi: f64,
    err: &PointingError,
) -> f64 {
    if !farfield_valid(geom, wi, FARFIELD_VALIDITY_RATIO) {
        log::warn!(
            "far-field gain used with beam radius {wi} m below {FARFIELD_VALIDITY_RATIO} aperture radii"
        );
    }
    farfield_gain_unchecked(fm.h_max, geom.length_m, wi, err.squared_norm())
}

#[inline]
pub(crate) fn farfield_gain_unchecked(h_max: f64, length: f64, wi: f64, theta_sq: f64) -> f64 {
    let s = length / wi;
    h_max * (-2.0 * s * s * theta_sq).exp()
}

/// Fraction of beam power collected by the circular aperture, by direct
/// integration of the displaced Gaussian intensity.
///
/// For a beam much wider than the aperture this tends to `2 r_a^2 / w^2`
/// (peak intensity times aperture area), twice the far-field peak gain
/// used by the fading model. See [`channel_gain_exact_farfield_scale`].
///
/// The intensity is `2/(pi wi^2) exp(-2 |r - d|^2 / wi^2)` with beam-center
/// offset `d = L theta`. In polar coordinates centered on the aperture the
/// angular integral is periodic and analytic, so a trapezoid rule converges
/// geometrically; the radial integral is adaptive.
pub fn channel_gain_exact(
    geom: &LinkGeometry,
    wi: f64,
    err: &PointingError,
    spec: &QuadratureSpec,
) -> Result<f64> {
    geom.validate()?;
    positive("receiver beam radius", wi)?;
    let d = geom.length_m * err.squared_norm().sqrt();
    let ra = geom.aperture_radius_m;
    let inv_w2 = 1.0 / (wi * wi);
    let radial = |rho: f64| {
        let kappa = 4.0 * rho * d * inv_w2;
        // exp(-2 (rho - d)^2 / w^2) * mean over phi of exp(-kappa (1 - cos phi))
        let base = (-2.0 * (rho - d) * (rho - d) * inv_w2).exp();
        rho * base * angular_mean(kappa)
    };
    let mut points = vec![0.0];
    if d > 0.0 && d < ra {
        points.push(d);
    }
    points.push(ra);
    let integral = integrate_breakpoints(radial, &points, spec)?;
    Ok(4.0 * inv_w2 * integral)
}

/// Peak-gain ratio between the literal collected fraction and the far-field
/// convention `h_max = r_a^2 / w^2`.
pub const FARFIELD_CONVENTION_FACTOR: f64 = 0.5;

/// [`channel_gain_exact`] expressed in the far-field convention, so that it
/// tends to `h_max exp(-2 L^2 |theta|^2 / w^2)` for wide beams and differs
/// from it only through the intensity variation across the aperture.
pub fn channel_gain_exact_farfield_scale(
    geom: &LinkGeometry,
    wi: f64,
    err: &PointingError,
    spec: &QuadratureSpec,
) -> Result<f64> {
    Ok(FARFIELD_CONVENTION_FACTOR * channel_gain_exact(geom, wi, err, spec)?)
}

// (1 / 2 pi) * integral over phi of exp(-kappa (1 - cos phi)), i.e. I0e(kappa)
fn angular_mean(kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 1.0;
    }
    let n = (48.0 + 4.0 * kappa.sqrt() * 8.0 + 2.0 * kappa).min(8192.0) as usize;
    let step = 2.0 * PI / n as f64;
    let sum: f64 = (0..n)
        .map(|k| (-kappa * (1.0 - (k as f64 * step).cos())).exp())
        .sum();
    sum / n as f64
}

/// Tabulated ratio of the exact (far-field convention) to the far-field gain as a function of the
/// normalized offset `s = (L |theta| / wi)^2`, for fast repeated use.
#[derive(Debug, Clone)]
pub struct ExactGainTable {
    h_max: f64,
    length: f64,
    wi: f64,
    s_max: f64,
    ln_ratio: Vec<f64>,
}

impl ExactGainTable {
    const POINTS: usize = 2049;

    /// Offsets are tabulated up to `s = 15`, where the far-field gain is
    /// already `e^-30` of its peak; beyond it the last ratio is reused.
    pub fn new(geom: &LinkGeometry, wi: f64, spec: &QuadratureSpec) -> Result<Self> {
        let fm = FadingModel::for_link(geom, wi)?;
        let s_max = 15.0;
        let mut ln_ratio = Vec::with_capacity(Self::POINTS);
        for k in 0..Self::POINTS {
            let s = s_max * k as f64 / (Self::POINTS - 1) as f64;
            let theta = s.sqrt() * wi / geom.length_m;
            let err = PointingError {
                theta_x: theta,
                theta_y: 0.0,
            };
            let exact = channel_gain_exact_farfield_scale(geom, wi, &err, spec)?;
            let ff = farfield_gain_unchecked(fm.h_max, geom.length_m, wi, theta * theta);
            ln_ratio.push((exact / ff).ln());
        }
        Ok(Self {
            h_max: fm.h_max,
            length: geom.length_m,
            wi,
            s_max,
            ln_ratio,
        })
    }

    pub fn gain(&self, theta_sq: f64) -> f64 {
        let s = theta_sq * (self.length / self.wi).powi(2);
        let pos = (s / self.s_max).min(1.0) * (Self::POINTS - 1) as f64;
        let i = (pos as usize).min(Self::POINTS - 2);
        let t = pos - i as f64;
        let corr = self.ln_ratio[i] * (1.0 - t) + self.ln_ratio[i + 1] * t;
        farfield_gain_unchecked(self.h_max, self.length, self.wi, theta_sq) * corr.exp()
    }
}
