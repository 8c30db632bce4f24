//! Joint optimization of the hard-limiter threshold and the receiver beam
//! width of one hop, plus the exhaustive-search reference.
//!
//! The threshold is the fixed point of the stationarity condition of the
//! hop error in `P_th`; the beam width is the interior stationary point of
//! the power-law surrogate, available in closed form through Lambert W. The
//! joint solver alternates the two.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, LinkGeometry, FARFIELD_VALIDITY_RATIO};
use crate::error_analysis::{pe_df_hop_quadrature, pe_ohl_hop, AnalysisError, HopErrorInputs};
use crate::numerics::{
    golden_section_min, integrate_breakpoints, lambert_w, LambertBranch, NumericsError,
    QuadratureSpec,
};
use crate::relay::NoiseBudget;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("stationarity integral {integral} >= 1 at threshold {threshold:e} W: noise comparable to signal, no positive fixed point")]
    StationarityInfeasible { threshold: f64, integral: f64 },
    #[error("no interior beam-width optimum: Lambert argument {argument} < -1/e")]
    NoInteriorOptimum { argument: f64 },
    #[error("invalid optimizer setting {name}: {value}")]
    InvalidSetting { name: &'static str, value: f64 },
    #[error("{source} (after {outer} outer iterations, last point {threshold:e} W / {beam_width} m)")]
    Partial {
        source: Box<OptimizerError>,
        outer: usize,
        threshold: f64,
        beam_width: f64,
    },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

pub type Result<T> = std::result::Result<T, OptimizerError>;

/// Iteration controls.
///
/// The Lambert branch is always the principal one: its stationary point
/// of the surrogate is the local minimum, the other real branch gives a
/// local maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    /// Relative change of each parameter below which iteration stops.
    pub epsilon_rel: f64,
    pub max_inner: usize,
    pub max_outer: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            epsilon_rel: 1e-3,
            max_inner: 50,
            max_outer: 50,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_rel > 0.0) {
            return Err(OptimizerError::InvalidSetting {
                name: "epsilon_rel",
                value: self.epsilon_rel,
            });
        }
        if self.max_inner < 1 || self.max_outer < 1 {
            return Err(OptimizerError::InvalidSetting {
                name: "iteration cap",
                value: self.max_inner.min(self.max_outer) as f64,
            });
        }
        Ok(())
    }
}

/// Result of a joint (threshold, beam width) optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointOptimum {
    pub threshold_star: f64,
    pub beam_width_star: f64,
    /// Exact hop error at the returned pair.
    pub achieved_pe: f64,
    pub outer_iterations: usize,
    pub inner_iterations_total: usize,
    pub converged: bool,
    /// The starting point was better than the iterate and was returned instead.
    pub used_initial_point: bool,
    /// Number of hop-error evaluations spent (exhaustive search) or
    /// fixed-point steps taken (iterative solver).
    pub evaluations: usize,
}

/// `I(P) = E_h[exp(-(P_t h - P)^2 / (2 sigma^2))]`, the right-hand side of the
/// threshold stationarity condition `exp(-P^2 / (2 sigma^2)) = I(P)`.
pub fn stationarity_integral(
    inputs: &HopErrorInputs,
    threshold: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let sigma = inputs.sigma_bg;
    let peak = inputs.peak_received();
    let g = inputs.fading.gamma_shape;
    let mut pts = vec![0.0, 1.0];
    for k in [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0] {
        let ratio = (threshold + k * sigma) / peak;
        if ratio > 0.0 && ratio < 1.0 {
            pts.push(ratio.powf(g));
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let inv_g = 1.0 / g;
    let integral = integrate_breakpoints(
        |u| {
            let z = (peak * u.powf(inv_g) - threshold) / sigma;
            (-0.5 * z * z).exp()
        },
        &pts,
        spec,
    )?;
    Ok(integral)
}

/// Relative stationarity residual `|exp(-P^2/(2 sigma^2)) - I(P)| / I(P)`.
pub fn stationarity_residual(
    inputs: &HopErrorInputs,
    threshold: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let i = stationarity_integral(inputs, threshold, spec)?;
    let z = threshold / inputs.sigma_bg;
    Ok(((-0.5 * z * z).exp() - i).abs() / i)
}

/// One fixed-point update `P <- sigma sqrt(-2 ln I(P))`.
pub fn threshold_fixed_point_step(
    inputs: &HopErrorInputs,
    p_th_current: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let i = stationarity_integral(inputs, p_th_current, spec)?;
    if i >= 1.0 {
        return Err(OptimizerError::StationarityInfeasible {
            threshold: p_th_current,
            integral: i,
        });
    }
    Ok(inputs.sigma_bg * (-2.0 * i.ln()).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOutcome {
    pub threshold: f64,
    pub iterations: usize,
    pub converged: bool,
    /// All iterates, starting with the initial guess.
    pub history: Vec<f64>,
}

/// Iterates the fixed-point step from `inputs.threshold` until the relative
/// change drops below `epsilon_rel`. Without convergence the iterate with
/// the lowest hop error is returned and flagged.
pub fn threshold_optimize(
    inputs: &HopErrorInputs,
    settings: &OptimizerSettings,
    spec: &QuadratureSpec,
) -> Result<ThresholdOutcome> {
    settings.validate()?;
    let mut p = inputs.threshold;
    let mut history = vec![p];
    for k in 1..=settings.max_inner {
        let next = threshold_fixed_point_step(inputs, p, spec)?;
        history.push(next);
        if (next - p).abs() < settings.epsilon_rel * p {
            return Ok(ThresholdOutcome {
                threshold: next,
                iterations: k,
                converged: true,
                history,
            });
        }
        p = next;
    }
    let mut best = (f64::INFINITY, p);
    for &cand in &history[1..] {
        let pe = pe_ohl_hop(&inputs.with_threshold(cand), spec)?;
        if pe < best.0 {
            best = (pe, cand);
        }
    }
    log::debug!("threshold iteration did not converge in {} steps", settings.max_inner);
    Ok(ThresholdOutcome {
        threshold: best.1,
        iterations: settings.max_inner,
        converged: false,
        history,
    })
}

/// Argument `-4 e P_th L^2 sigma^2 / (r_a^2 P_t)` of the beam-width Lambert W.
pub fn beamwidth_lambert_argument(inputs: &HopErrorInputs, geom: &LinkGeometry) -> f64 {
    let ls = geom.length_m * geom.sigma_theta_rad;
    let ra = geom.aperture_radius_m;
    -4.0 * std::f64::consts::E * inputs.threshold * ls * ls / (ra * ra * inputs.tx_power_prev)
}

/// Stationary beam width of the surrogate on the requested branch:
/// `w^2 = -1 / (alpha W(x))` with `alpha = 1 / (4 L^2 sigma^2)`.
pub fn beamwidth_stationary_point(
    inputs: &HopErrorInputs,
    geom: &LinkGeometry,
    branch: LambertBranch,
) -> Result<f64> {
    let x = beamwidth_lambert_argument(inputs, geom);
    let w = match lambert_w(x, branch) {
        Ok(w) => w,
        Err(NumericsError::NoRealSolution(_)) => {
            return Err(OptimizerError::NoInteriorOptimum { argument: x })
        }
        Err(e) => return Err(e.into()),
    };
    let ls = geom.length_m * geom.sigma_theta_rad;
    let w_sq = -4.0 * ls * ls / w;
    Ok(w_sq.sqrt())
}

/// Beam width minimizing the surrogate at the current threshold
/// (principal branch).
pub fn beamwidth_closed_form(inputs: &HopErrorInputs, geom: &LinkGeometry) -> Result<f64> {
    beamwidth_stationary_point(inputs, geom, LambertBranch::Principal)
}

/// Narrowest beam the optimizers will use, where the far-field model
/// stops being trusted.
pub fn min_beam_width(geom: &LinkGeometry) -> f64 {
    FARFIELD_VALIDITY_RATIO * geom.aperture_radius_m
}

/// Default starting point: five background sigmas and the geometric mean
/// of a 200 to 600 m beam.
pub fn default_initial_point(noise: &NoiseBudget) -> (f64, f64) {
    (5.0 * noise.background_sigma, (200.0f64 * 600.0).sqrt())
}

/// Alternates the closed-form beam width and the threshold fixed point
/// (warm-started from the previous threshold) until both change by less
/// than `epsilon_rel`.
pub fn joint_optimize(
    geom: &LinkGeometry,
    noise: &NoiseBudget,
    tx_power: f64,
    settings: &OptimizerSettings,
    init: (f64, f64),
    spec: &QuadratureSpec,
) -> Result<JointOptimum> {
    settings.validate()?;
    let (p0, w0) = init;
    let w_floor = min_beam_width(geom);
    let mut p = p0;
    let mut w = w0.max(w_floor);
    let mut inner_total = 0;
    let mut outer = 0;
    let mut converged = false;
    let partial = |e: OptimizerError, outer: usize, p: f64, w: f64| OptimizerError::Partial {
        source: Box::new(e),
        outer,
        threshold: p,
        beam_width: w,
    };
    while outer < settings.max_outer {
        outer += 1;
        let at_p = HopErrorInputs::for_link(geom, w, tx_power, p, noise)
            .map_err(|e| partial(e.into(), outer, p, w))?;
        let w_new = beamwidth_closed_form(&at_p, geom)
            .map_err(|e| partial(e, outer, p, w))?
            .max(w_floor);
        let at_w = HopErrorInputs::for_link(geom, w_new, tx_power, p, noise)
            .map_err(|e| partial(e.into(), outer, p, w_new))?;
        let inner = threshold_optimize(&at_w, settings, spec).map_err(|e| partial(e, outer, p, w_new))?;
        inner_total += inner.iterations;
        let p_new = inner.threshold;
        let done = (p_new - p).abs() < settings.epsilon_rel * p
            && (w_new - w).abs() < settings.epsilon_rel * w;
        p = p_new;
        w = w_new;
        if done {
            converged = true;
            break;
        }
    }
    let achieved = pe_ohl_hop(&HopErrorInputs::for_link(geom, w, tx_power, p, noise)?, spec)?;
    let mut result = JointOptimum {
        threshold_star: p,
        beam_width_star: w,
        achieved_pe: achieved,
        outer_iterations: outer,
        inner_iterations_total: inner_total,
        converged,
        used_initial_point: false,
        evaluations: inner_total,
    };
    let w_init = w0.max(w_floor);
    let init_pe = pe_ohl_hop(&HopErrorInputs::for_link(geom, w_init, tx_power, p0, noise)?, spec)?;
    if init_pe < achieved {
        result.threshold_star = p0;
        result.beam_width_star = w_init;
        result.achieved_pe = init_pe;
        result.used_initial_point = true;
    }
    Ok(result)
}

/// Axes of the exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchGrid {
    pub threshold_min_w: f64,
    pub threshold_max_w: f64,
    pub threshold_points: usize,
    pub beam_min_m: f64,
    pub beam_max_m: f64,
    pub beam_points: usize,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            threshold_min_w: 1e-9,
            threshold_max_w: 100e-9,
            threshold_points: 256,
            beam_min_m: 100.0,
            beam_max_m: 2000.0,
            beam_points: 256,
        }
    }
}

impl SearchGrid {
    fn axis(min: f64, max: f64, n: usize, k: usize) -> f64 {
        min + (max - min) * k as f64 / (n - 1) as f64
    }

    pub fn threshold(&self, k: usize) -> f64 {
        Self::axis(self.threshold_min_w, self.threshold_max_w, self.threshold_points, k)
    }

    pub fn beam(&self, k: usize) -> f64 {
        Self::axis(self.beam_min_m, self.beam_max_m, self.beam_points, k)
    }
}

/// Brute-force minimum of the exact hop error over the grid, then one
/// golden-section refinement per axis within the neighbouring cells.
pub fn exhaustive_joint_search(
    geom: &LinkGeometry,
    noise: &NoiseBudget,
    tx_power: f64,
    grid: &SearchGrid,
    spec: &QuadratureSpec,
) -> Result<JointOptimum> {
    if grid.threshold_points < 32 || grid.beam_points < 32 {
        return Err(OptimizerError::InvalidSetting {
            name: "grid size (at least 32 per axis)",
            value: grid.threshold_points.min(grid.beam_points) as f64,
        });
    }
    let pe_at = |p: f64, w: f64| -> Result<f64> {
        Ok(pe_ohl_hop(&HopErrorInputs::for_link(geom, w, tx_power, p, noise)?, spec)?)
    };
    let mut best = (f64::INFINITY, 0, 0);
    let mut evaluations = 0;
    for j in 0..grid.beam_points {
        let w = grid.beam(j);
        for i in 0..grid.threshold_points {
            let pe = pe_at(grid.threshold(i), w)?;
            evaluations += 1;
            if pe < best.0 {
                best = (pe, i, j);
            }
        }
    }
    let (grid_pe, bi, bj) = best;
    let mut p = grid.threshold(bi);
    let mut w = grid.beam(bj);
    let mut pe = grid_pe;

    let p_lo = grid.threshold(bi.saturating_sub(1));
    let p_hi = grid.threshold((bi + 1).min(grid.threshold_points - 1));
    let mut failure = None;
    let r = golden_section_min(
        |x| match pe_at(x, w) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::INFINITY
            }
        },
        p_lo,
        p_hi,
        1e-6 * p,
    );
    if let Some(e) = failure.take() {
        return Err(e);
    }
    evaluations += r.evaluations;
    if r.fx < pe {
        p = r.x;
        pe = r.fx;
    }
    let w_lo = grid.beam(bj.saturating_sub(1));
    let w_hi = grid.beam((bj + 1).min(grid.beam_points - 1));
    let r = golden_section_min(
        |x| match pe_at(p, x) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::INFINITY
            }
        },
        w_lo,
        w_hi,
        1e-6 * w,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    evaluations += r.evaluations;
    if r.fx < pe {
        w = r.x;
        pe = r.fx;
    }
    Ok(JointOptimum {
        threshold_star: p,
        beam_width_star: w,
        achieved_pe: pe,
        outer_iterations: 0,
        inner_iterations_total: 0,
        converged: true,
        used_initial_point: false,
        evaluations,
    })
}

/// Beam width minimizing the decode-and-forward hop error, by golden-section
/// search on `[w_min, w_max]`. Returns `(w, pe)`.
pub fn df_beamwidth_optimize(
    geom: &LinkGeometry,
    noise: &NoiseBudget,
    tx_power: f64,
    bounds: (f64, f64),
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    let mut failure = None;
    let eval = |w: f64| -> Result<f64> {
        // the threshold plays no role in the decode-and-forward error
        let inputs = HopErrorInputs::for_link(geom, w, tx_power, 1e-9, noise)?;
        Ok(pe_df_hop_quadrature(&inputs, spec)?)
    };
    let r = golden_section_min(
        |w| match eval(w) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::INFINITY
            }
        },
        bounds.0.max(min_beam_width(geom)),
        bounds.1,
        1e-6 * bounds.1,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((r.x, r.fx))
}
