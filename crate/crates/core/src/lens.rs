//! Liquid-lens beam control: a tunable lens of focal length `F` followed by
//! free propagation over `L'` to a fixed output lens. The beam radius at the
//! output lens sets the far-field divergence, and hence the beam width at
//! the receiver.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{bisect_root, NumericsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LensError {
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("target beam radius {target:e} m below the smallest achievable {achievable_min:e} m")]
    Infeasible { target: f64, achievable_min: f64 },
    #[error("target beam radius {target:e} m needs a focal length outside [{f_min}, {f_max}] m (achievable radii {w_lo:e} to {w_hi:e} m)")]
    OutOfRange {
        target: f64,
        f_min: f64,
        f_max: f64,
        w_lo: f64,
        w_hi: f64,
    },
    #[error("calibration table: {0}")]
    Calibration(String),
    #[error("focal length {0} m outside the calibration table")]
    OutsideCalibration(f64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, LensError>;

/// Tunable-lens optics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensSystem {
    pub input_waist_w0: f64,
    pub wavelength_m: f64,
    pub rayleigh_zr: f64,
    /// Distance from the tunable lens to the fixed output lens.
    pub spacing_lprime: f64,
    pub focal_range: (f64, f64),
    /// Settling time of the lens; informational.
    pub response_time_s: f64,
}

impl LensSystem {
    pub fn new(
        input_waist_w0: f64,
        wavelength_m: f64,
        spacing_lprime: f64,
        focal_range: (f64, f64),
    ) -> Result<Self> {
        for (name, v) in [
            ("input waist", input_waist_w0),
            ("wavelength", wavelength_m),
            ("lens spacing", spacing_lprime),
            ("minimum focal length", focal_range.0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LensError::InvalidParameter { name, value: v });
            }
        }
        if !(focal_range.1 > focal_range.0) {
            return Err(LensError::InvalidParameter {
                name: "maximum focal length",
                value: focal_range.1,
            });
        }
        Ok(Self {
            input_waist_w0,
            wavelength_m,
            rayleigh_zr: PI * input_waist_w0 * input_waist_w0 / wavelength_m,
            spacing_lprime,
            focal_range,
            response_time_s: 5e-3,
        })
    }

    /// Beam radius at the output lens for focal length `F`.
    pub fn beam_radius(&self, f: f64) -> f64 {
        propagate_q(self, f).beam_radius
    }

    /// Smallest radius reachable inside the focal range.
    pub fn achievable_min(&self) -> f64 {
        let (lo, hi) = self.focal_range;
        self.beam_radius(self.spacing_lprime.clamp(lo, hi))
    }
}

/// Far-field divergence needed for receiver beam radius `wi_star` over `L`.
/// Angles beyond a paraxial 0.1 rad are logged as suspicious.
pub fn divergence_for_target(wi_star: f64, length: f64) -> f64 {
    let theta = wi_star / length;
    if theta > 0.1 {
        log::warn!("divergence {theta} rad is outside the paraxial regime");
    }
    theta
}

/// Beam radius at the output lens producing divergence `theta`.
pub fn waist_for_divergence(theta: f64, wavelength: f64) -> f64 {
    wavelength / (PI * theta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QPropagation {
    pub beam_radius: f64,
    /// Wavefront curvature `1 / R`.
    pub curvature: f64,
    pub q: Complex64,
}

/// Propagates the input waist (`q0 = i z_R`) through the tunable lens and
/// the spacing `L'` with the ABCD law `q' = (A q0 + B) / (C q0 + D)`.
/// `f = inf` means no lens.
pub fn propagate_q(sys: &LensSystem, f: f64) -> QPropagation {
    let lp = sys.spacing_lprime;
    let inv_f = if f.is_infinite() { 0.0 } else { 1.0 / f };
    let (a, b, c, d) = (1.0 - lp * inv_f, lp, -inv_f, 1.0);
    let q0 = Complex64::new(0.0, sys.rayleigh_zr);
    let q = (q0 * a + b) / (q0 * c + d);
    let inv_q = q.inv();
    // 1/q = 1/R - i lambda / (pi w^2)
    let w_sq = -sys.wavelength_m / (PI * inv_q.im);
    QPropagation {
        beam_radius: w_sq.sqrt(),
        curvature: inv_q.re,
        q,
    }
}

/// `w^2(F) = (lambda/pi) (L'^2 + z_R^2 (1 - L'/F)^2) / z_R`, written out.
pub fn beam_radius_closed(sys: &LensSystem, f: f64) -> f64 {
    let lp = sys.spacing_lprime;
    let zr = sys.rayleigh_zr;
    let x = 1.0 - lp / f;
    (sys.wavelength_m / PI * (lp * lp + zr * zr * x * x) / zr).sqrt()
}

/// Monotone pieces of `w(F)`, split at `F = L'` where the radius is smallest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LensBranch {
    /// Long branch first, short branch if the long one is out of range.
    #[default]
    Auto,
    /// `F > L'`, radius increasing in `F`.
    Long,
    /// `F < L'`, radius decreasing in `F`.
    Short,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensSolution {
    pub focal_length_f: f64,
    pub target_wlprime: f64,
    /// Divergence produced by the target radius.
    pub target_divergence: f64,
    /// `|w(F) / target - 1|` after solving.
    pub forward_residual: f64,
    pub branch: LensBranch,
    /// The closed-form focal length evaluated on the same inputs,
    /// when its square root is real.
    pub closed_form_focal_length: Option<f64>,
}

impl LensSolution {
    /// Relative difference of the closed-form focal length to the solved one.
    pub fn closed_form_discrepancy(&self) -> Option<f64> {
        self.closed_form_focal_length
            .map(|f| (f - self.focal_length_f) / self.focal_length_f)
    }
}

/// Focal length giving beam radius `target` at the output lens, by a
/// bracketed root solve of the ABCD relation on one monotone branch.
pub fn solve_focal_length(sys: &LensSystem, target: f64) -> Result<LensSolution> {
    solve_focal_length_on(sys, target, LensBranch::Auto)
}

pub fn solve_focal_length_on(
    sys: &LensSystem,
    target: f64,
    branch: LensBranch,
) -> Result<LensSolution> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(LensError::InvalidParameter {
            name: "target beam radius",
            value: target,
        });
    }
    let (f_lo, f_hi) = sys.focal_range;
    let lp = sys.spacing_lprime;
    let achievable_min = sys.achievable_min();
    if target < achievable_min * (1.0 - 1e-12) {
        return Err(LensError::Infeasible {
            target,
            achievable_min,
        });
    }
    let attempt = |b: LensBranch| -> Option<(f64, f64)> {
        let (a, z) = match b {
            LensBranch::Long => (lp.max(f_lo), f_hi),
            LensBranch::Short => (f_lo, lp.min(f_hi)),
            LensBranch::Auto => unreachable!(),
        };
        if a >= z {
            return None;
        }
        let g = |f: f64| propagate_q(sys, f).beam_radius / target - 1.0;
        let root = bisect_root(g, a, z, 1e-15 * z).ok()?;
        Some((root, g(root).abs()))
    };
    let order: &[LensBranch] = match branch {
        LensBranch::Auto => &[LensBranch::Long, LensBranch::Short],
        LensBranch::Long => &[LensBranch::Long],
        LensBranch::Short => &[LensBranch::Short],
    };
    for &b in order {
        if let Some((f, residual)) = attempt(b) {
            return Ok(LensSolution {
                focal_length_f: f,
                target_wlprime: target,
                target_divergence: sys.wavelength_m / (PI * target),
                forward_residual: residual,
                branch: b,
                closed_form_focal_length: closed_form_focal_length(sys, target),
            });
        }
    }
    let ends = [sys.beam_radius(f_lo), sys.beam_radius(f_hi)];
    Err(LensError::OutOfRange {
        target,
        f_min: f_lo,
        f_max: f_hi,
        w_lo: achievable_min,
        w_hi: ends[0].max(ends[1]),
    })
}

/// Closed-form focal length
/// `(2L' + c + sqrt((2L' + c)^2 - 4(L'^2 + z_R^2))) / 2` with
/// `c = pi w^2 z_R / lambda`, evaluated literally. `None` when the square
/// root is imaginary.
pub fn closed_form_focal_length(sys: &LensSystem, target: f64) -> Option<f64> {
    let lp = sys.spacing_lprime;
    let zr = sys.rayleigh_zr;
    let c = PI * target * target * zr / sys.wavelength_m;
    let s = 2.0 * lp + c;
    let disc = s * s - 4.0 * (lp * lp + zr * zr);
    (disc >= 0.0).then(|| 0.5 * (s + disc.sqrt()))
}

/// Full chain from an optimal receiver beam width to a lens setting.
pub fn lens_for_receiver_width(sys: &LensSystem, wi_star: f64, length: f64) -> Result<LensSolution> {
    let theta = divergence_for_target(wi_star, length);
    solve_focal_length(sys, waist_for_divergence(theta, sys.wavelength_m))
}

/// Monotone voltage to focal-length map, interpolated with a shape-preserving
/// piecewise cubic (Fritsch-Carlson).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageCalibration {
    volts: Vec<f64>,
    focal_m: Vec<f64>,
    slopes: Vec<f64>,
}

impl VoltageCalibration {
    pub fn new(volts: Vec<f64>, focal_m: Vec<f64>) -> Result<Self> {
        if volts.len() != focal_m.len() || volts.len() < 2 {
            return Err(LensError::Calibration(
                "need at least two (volts, meters) rows".into(),
            ));
        }
        if volts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LensError::Calibration(
                "volts must be strictly increasing".into(),
            ));
        }
        let inc = focal_m.windows(2).all(|w| w[1] > w[0]);
        let dec = focal_m.windows(2).all(|w| w[1] < w[0]);
        if !(inc || dec) {
            return Err(LensError::Calibration(
                "focal lengths must be strictly monotone".into(),
            ));
        }
        let slopes = pchip_slopes(&volts, &focal_m);
        Ok(Self {
            volts,
            focal_m,
            slopes,
        })
    }

    /// Placeholder mapping one volt to one meter over the given focal range.
    pub fn identity(focal_range: (f64, f64)) -> Self {
        Self::new(
            vec![focal_range.0, focal_range.1],
            vec![focal_range.0, focal_range.1],
        )
        .expect("valid identity table")
    }

    /// Parses whitespace or comma separated `volts meters` rows; `#` starts
    /// a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut v = Vec::new();
        let mut f = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if cols.len() != 2 {
                return Err(LensError::Calibration(format!(
                    "line {}: expected two columns",
                    n + 1
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| LensError::Calibration(format!("line {}: {e}", n + 1)))
            };
            v.push(parse(cols[0])?);
            f.push(parse(cols[1])?);
        }
        Self::new(v, f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LensError::Calibration(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Focal length at voltage `v`.
    pub fn focal_at(&self, v: f64) -> Result<f64> {
        let n = self.volts.len();
        if !(v >= self.volts[0] && v <= self.volts[n - 1]) {
            return Err(LensError::OutsideCalibration(v));
        }
        let k = match self.volts.partition_point(|&x| x <= v) {
            0 => 0,
            i => (i - 1).min(n - 2),
        };
        let (x0, x1) = (self.volts[k], self.volts[k + 1]);
        let (y0, y1) = (self.focal_m[k], self.focal_m[k + 1]);
        let (d0, d1) = (self.slopes[k], self.slopes[k + 1]);
        let h = x1 - x0;
        let t = (v - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        Ok((2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * h * d0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * d1)
    }

    /// Voltage producing focal length `f` (inverse of [`Self::focal_at`]).
    pub fn voltage_for(&self, f: f64) -> Result<f64> {
        let n = self.focal_m.len();
        let (lo, hi) = (
            self.focal_m[0].min(self.focal_m[n - 1]),
            self.focal_m[0].max(self.focal_m[n - 1]),
        );
        if !(f >= lo && f <= hi) {
            return Err(LensError::OutsideCalibration(f));
        }
        let (a, b) = (self.volts[0], self.volts[n - 1]);
        let g = |v: f64| self.focal_at(v).map(|x| x - f).unwrap_or(f64::NAN);
        Ok(bisect_root(g, a, b, 1e-14 * (b - a).abs())?)
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3.min(n - 1)], delta[n - 2], delta[n - 3.min(n - 2)]);
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::beam_radius_at_distance;

    fn default_lens() -> LensSystem {
        LensSystem::new(2e-3, 1550e-9, 0.04, (0.015, 0.060)).unwrap()
    }

    #[test]
    fn divergence_and_waist() {
        assert!((divergence_for_target(400.0, 1e6) - 4e-4).abs() < 1e-18);
        assert_eq!(divergence_for_target(5.0, 5.0), 1.0);
        assert!((divergence_for_target(400.0, 2e6) - 2e-4).abs() < 1e-18);
        let w = waist_for_divergence(4e-4, 1550e-9);
        assert!((w - 1.233450808962188779e-3).abs() < 1e-15);
        assert!((1550e-9 / (PI * w) - 4e-4).abs() < 1e-18);
        assert!(waist_for_divergence(2e-4, 1550e-9) > w);
    }

    #[test]
    fn rayleigh_range() {
        let s = default_lens();
        assert!((s.rayleigh_zr - 8.107_335_880_231_723).abs() < 1e-9);
    }

    #[test]
    fn propagation_limits() {
        let s = default_lens();
        let free = propagate_q(&s, f64::INFINITY).beam_radius;
        let want = beam_radius_at_distance(s.input_waist_w0, s.wavelength_m, s.spacing_lprime);
        assert!((free / want - 1.0).abs() < 1e-12);
        let focal = propagate_q(&s, s.spacing_lprime).beam_radius;
        let spot = s.wavelength_m * s.spacing_lprime / (PI * s.input_waist_w0);
        assert!((focal / spot - 1.0).abs() < 1e-9);
        for k in 0..200 {
            let f = 0.015 + 0.045 * k as f64 / 199.0;
            let a = propagate_q(&s, f).beam_radius;
            let b = beam_radius_closed(&s, f);
            assert!((a / b - 1.0).abs() < 1e-12);
        }
        let mut prev = 0.0;
        for k in 1..100 {
            let f = s.spacing_lprime * (1.0 + 0.05 * k as f64);
            let w = s.beam_radius(f);
            assert!(w > prev);
            prev = w;
        }
    }

    #[test]
    fn solves_default_target() {
        let s = default_lens();
        let sol = solve_focal_length(&s, 1.2335e-3).unwrap();
        assert_eq!(sol.branch, LensBranch::Short);
        assert!(sol.forward_residual < 1e-9);
        assert!((s.beam_radius(sol.focal_length_f) / 1.2335e-3 - 1.0).abs() < 1e-9);
        // F = L' / (1 - x), x = -sqrt((pi w^2 z_R / lambda - L'^2) / z_R^2)
        let zr = s.rayleigh_zr;
        let x = -((PI * 1.2335e-3f64.powi(2) * zr / 1550e-9 - 0.04f64.powi(2)) / (zr * zr)).sqrt();
        assert!((sol.focal_length_f / (0.04 / (1.0 - x)) - 1.0).abs() < 1e-10);
        // the closed form lands far from the physical root
        let closed = sol.closed_form_focal_length.unwrap();
        assert!(closed > 1.0);
        let long = solve_focal_length_on(&s, 1.2335e-3, LensBranch::Long);
        assert!(matches!(long, Err(LensError::OutOfRange { .. })));
    }

    #[test]
    fn infeasible_and_free_space_targets() {
        let s = default_lens();
        assert!(matches!(
            solve_focal_length(&s, 1e-6),
            Err(LensError::Infeasible { .. })
        ));
        let free = s.beam_radius(f64::INFINITY);
        assert!(matches!(
            solve_focal_length_on(&s, free, LensBranch::Long),
            Err(LensError::OutOfRange { .. })
        ));
    }

    #[test]
    fn round_trip_on_each_branch() {
        let s = LensSystem::new(2e-3, 1550e-9, 0.03, (0.015, 0.060)).unwrap();
        for k in 0..50 {
            let f = 0.0151 + 0.0448 * k as f64 / 49.0;
            let w = s.beam_radius(f);
            let branch = if f > s.spacing_lprime { LensBranch::Long } else { LensBranch::Short };
            let sol = solve_focal_length_on(&s, w, branch).unwrap();
            assert!((sol.focal_length_f / f - 1.0).abs() < 1e-9, "f={f}");
        }
    }

    #[test]
    fn calibration_interpolates_monotonically() {
        let cal = VoltageCalibration::parse("# volts meters\n10 0.060\n20, 0.045\n35 0.030\n50 0.015\n").unwrap();
        assert!((cal.focal_at(20.0).unwrap() - 0.045).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for k in 0..=400 {
            let v = 10.0 + 40.0 * k as f64 / 400.0;
            let f = cal.focal_at(v).unwrap();
            assert!(f <= prev);
            prev = f;
        }
        let v = cal.voltage_for(0.04).unwrap();
        assert!((cal.focal_at(v).unwrap() - 0.04).abs() < 1e-12);
        assert!(cal.focal_at(60.0).is_err());
        assert!(cal.voltage_for(0.01).is_err());
        assert!(VoltageCalibration::parse("1 0.02\n1 0.03\n").is_err());
        let id = VoltageCalibration::identity((0.015, 0.06));
        assert!((id.voltage_for(0.0321).unwrap() - 0.0321).abs() < 1e-12);
    }
}
