//! Analytical bit-error probabilities of hard-limiter and decode-and-forward
//! hops under pointing fading, their end-to-end composition, and the
//! power-law surrogate used by the beam-width optimizer.
//!
//! Expectations over the fading gain use the substitution
//! `u = (h / h_max)^gamma`, under which the fading density becomes uniform
//! on `(0, 1)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, FadingModel, LinkGeometry};
use crate::numerics::{
    integrate_breakpoints, ln_lower_incomplete_gamma, q_approx3, q_exact, NumericsError,
    QuadratureSpec, Q_APPROX_A, Q_APPROX_B,
};
use crate::relay::NoiseBudget;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("invalid {name}: {value}")]
    InvalidInput { name: &'static str, value: f64 },
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("surrogate base {base} >= 1: threshold above the peak received power")]
    SurrogateOutOfRegime { base: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Everything a single-hop error expression depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopErrorInputs {
    pub fading: FadingModel,
    /// Mark power launched by the previous node.
    pub tx_power_prev: f64,
    /// Hard-limiter threshold at the receiving node.
    pub threshold: f64,
    pub sigma_bg: f64,
    /// Combined thermal and background sigma at a photodetecting receiver.
    pub sigma_prime: f64,
}

impl HopErrorInputs {
    pub fn new(
        fading: FadingModel,
        tx_power_prev: f64,
        threshold: f64,
        noise: &NoiseBudget,
    ) -> Result<Self> {
        let inputs = Self {
            fading,
            tx_power_prev,
            threshold,
            sigma_bg: noise.background_sigma,
            sigma_prime: noise.sigma_prime(),
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn for_link(
        geom: &LinkGeometry,
        wi: f64,
        tx_power_prev: f64,
        threshold: f64,
        noise: &NoiseBudget,
    ) -> Result<Self> {
        Self::new(FadingModel::for_link(geom, wi)?, tx_power_prev, threshold, noise)
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        Self { threshold, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("transmit power", self.tx_power_prev),
            ("threshold", self.threshold),
            ("background sigma", self.sigma_bg),
            ("receiver sigma", self.sigma_prime),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(AnalysisError::InvalidInput { name, value });
            }
        }
        if self.threshold >= self.peak_received() {
            log::debug!(
                "threshold {:e} W at or above the peak received power {:e} W",
                self.threshold,
                self.peak_received()
            );
        }
        Ok(())
    }

    /// Noise-free received mark power at zero pointing error.
    pub fn peak_received(&self) -> f64 {
        self.tx_power_prev * self.fading.h_max
    }

    fn gain_at(&self, u: f64) -> f64 {
        self.fading.h_max * u.powf(1.0 / self.fading.gamma_shape)
    }

    // u-coordinate where the received mark power equals `p`
    fn u_at_power(&self, p: f64) -> Option<f64> {
        let ratio = p / self.peak_received();
        (ratio > 0.0 && ratio < 1.0).then(|| ratio.powf(self.fading.gamma_shape))
    }

    fn breakpoints(&self, centre: f64, sigma: f64, multiples: &[f64]) -> Vec<f64> {
        let mut pts = vec![0.0, 1.0];
        for &k in multiples {
            if let Some(u) = self.u_at_power(centre + k * sigma) {
                pts.push(u);
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

const TRANSITION_MULTIPLES: [f64; 9] = [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0];

/// Which Q function sits inside a fading average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QVariant {
    Exact,
    Approx3,
}

impl QVariant {
    fn eval(self, x: f64) -> f64 {
        match self {
            QVariant::Exact => q_exact(x),
            // the approximation is a tail form; use symmetry below zero
            QVariant::Approx3 => {
                if x >= 0.0 {
                    q_approx3(x).unwrap_or(0.0)
                } else {
                    1.0 - q_approx3(-x).unwrap_or(0.0)
                }
            }
        }
    }
}

/// Hard-limiter hop error with equiprobable bits:
/// `Q(P_th / sigma) / 2 + E_h[Q((P h - P_th) / sigma)] / 2`.
pub fn pe_ohl_hop(inputs: &HopErrorInputs, spec: &QuadratureSpec) -> Result<f64> {
    let sigma = inputs.sigma_bg;
    let pth = inputs.threshold;
    let false_alarm = q_exact(pth / sigma);
    let pts = inputs.breakpoints(pth, sigma, &TRANSITION_MULTIPLES);
    let miss = integrate_breakpoints(
        |u| q_exact((inputs.tx_power_prev * inputs.gain_at(u) - pth) / sigma),
        &pts,
        spec,
    )?;
    Ok(0.5 * false_alarm + 0.5 * miss)
}

/// Decode-and-forward hop error `E_h[Q(P h / (2 sigma'))]` by quadrature.
pub fn pe_df_hop_quadrature(inputs: &HopErrorInputs, spec: &QuadratureSpec) -> Result<f64> {
    pe_df_hop_quadrature_with(inputs, spec, QVariant::Exact)
}

/// As [`pe_df_hop_quadrature`] with a selectable Q function.
pub fn pe_df_hop_quadrature_with(
    inputs: &HopErrorInputs,
    spec: &QuadratureSpec,
    q: QVariant,
) -> Result<f64> {
    let s2 = 2.0 * inputs.sigma_prime;
    let pts = inputs.breakpoints(0.0, s2, &[0.5, 1.0, 2.0, 4.0, 8.0]);
    Ok(integrate_breakpoints(
        |u| q.eval(inputs.tx_power_prev * inputs.gain_at(u) / s2),
        &pts,
        spec,
    )?)
}

/// Coefficients of a three-exponential Q approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QCoefficients {
    pub a: [f64; 3],
    pub b: [f64; 3],
}

impl Default for QCoefficients {
    fn default() -> Self {
        Self {
            a: Q_APPROX_A,
            b: Q_APPROX_B,
        }
    }
}

/// Closed-form decode-and-forward hop error using the three-term Q
/// approximation:
/// `(gamma/2) h_max^-gamma sum_j a_j k_j^(-gamma/2) lgamma_inc(gamma/2, k_j h_max^2)`
/// with `k_j = b_j P^2 / (4 sigma'^2)`. Carries the approximation error of
/// the three-term form.
pub fn pe_df_hop_closed(inputs: &HopErrorInputs) -> Result<f64> {
    pe_df_hop_closed_with(inputs, &QCoefficients::default())
}

/// [`pe_df_hop_closed`] with explicit coefficients.
pub fn pe_df_hop_closed_with(inputs: &HopErrorInputs, coeffs: &QCoefficients) -> Result<f64> {
    let g = inputs.fading.gamma_shape;
    let hm = inputs.fading.h_max;
    let ratio = inputs.tx_power_prev / (2.0 * inputs.sigma_prime);
    let mut total = 0.0;
    for (&a, &b) in coeffs.a.iter().zip(coeffs.b.iter()) {
        let k = b * ratio * ratio;
        let x = k * hm * hm;
        // (g/2) hm^-g k^(-g/2) lgamma_inc(g/2, k hm^2) = (g/2) x^(-g/2) lgamma_inc(g/2, x)
        let ln_term = (0.5 * g).ln() - 0.5 * g * x.ln() + ln_lower_incomplete_gamma(0.5 * g, x)?;
        total += a * ln_term.exp();
    }
    Ok(total)
}

/// How the per-hop probabilities of a chain are composed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// Hard-limiter relays followed by a photodetecting destination; the
    /// last entry is the destination hop.
    OhlChain,
    DfChain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEndResult {
    pub per_hop_pe: Vec<f64>,
    pub e2e_pe: f64,
    pub composition: Composition,
}

/// End-to-end error of independent hops, `1 - prod(1 - p_i)`, evaluated as
/// `-expm1(sum ln1p(-p_i))`.
pub fn pe_e2e(per_hop: &[f64], composition: Composition) -> Result<EndToEndResult> {
    let mut log_ok = 0.0;
    for &p in per_hop {
        if !(0.0..=1.0).contains(&p) {
            return Err(AnalysisError::InvalidProbability(p));
        }
        log_ok += (-p).ln_1p();
    }
    Ok(EndToEndResult {
        per_hop_pe: per_hop.to_vec(),
        e2e_pe: -log_ok.exp_m1(),
        composition,
    })
}

/// Power-law surrogate `(P_th / (P h_max))^(gamma + 1)` of the hard-limiter
/// hop error. Follows the trend of [`pe_ohl_hop`] in the beam width but not
/// its value.
pub fn pe_ohl_approx(inputs: &HopErrorInputs) -> Result<f64> {
    let base = inputs.threshold / inputs.peak_received();
    if base >= 1.0 {
        return Err(AnalysisError::SurrogateOutOfRegime { base });
    }
    Ok(base.powf(inputs.fading.gamma_shape + 1.0))
}

/// Largest relative error of the three-term Q approximation over `[0, x_max]`,
/// sampled on a uniform grid of `points` nodes.
///
/// Since the approximation error enters the decode-and-forward average
/// pointwise, `|closed - exact| / exact` is bounded by this value taken at
/// `x_max = P h_max / (2 sigma')`.
pub fn q_approx3_envelope(x_max: f64, points: usize) -> f64 {
    let n = points.max(2);
    (0..n)
        .map(|k| {
            let x = x_max * k as f64 / (n - 1) as f64;
            let exact = q_exact(x);
            if exact > 0.0 {
                (q_approx3(x).unwrap_or(0.0) / exact - 1.0).abs()
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Envelope for one hop; see [`q_approx3_envelope`].
pub fn df_closed_form_envelope(inputs: &HopErrorInputs) -> f64 {
    let x_max = inputs.peak_received() / (2.0 * inputs.sigma_prime);
    q_approx3_envelope(x_max, 20_001)
}
