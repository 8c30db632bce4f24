//! Forward signal and noise models of amplify-and-forward (EDFA),
//! optical-hard-limiter and decode-and-forward relay chains for on-off keying.
//!
//! Powers are optical watts at the decision point. Background noise enters
//! as a zero-mean Gaussian term with standard deviation `background_sigma`;
//! photodetector thermal noise is referred to the optical domain through the
//! responsivity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{BeamConfig, ChannelError, FadingModel, LinkGeometry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelayError {
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("chain has {hops} hops but {nodes} node descriptors (expected one per hop)")]
    NodeCountMismatch { hops: usize, nodes: usize },
    #[error("node {index} is {found:?}, expected {expected:?}")]
    WrongNodeType {
        index: usize,
        expected: RelayType,
        found: RelayType,
    },
    #[error("per-hop input has {got} entries, chain has {hops} hops")]
    LengthMismatch { hops: usize, got: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

pub type Result<T> = std::result::Result<T, RelayError>;

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(RelayError::InvalidParameter { name, value })
    }
}

/// Receiver noise and amplifier constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    /// Standard deviation of the background term in the optical decision variable.
    pub background_sigma: f64,
    pub n_sp: f64,
    pub planck_h: f64,
    pub optical_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub responsivity_a_per_w: f64,
    /// Thermal noise standard deviation in amperes.
    pub thermal_sigma_a: f64,
}

impl NoiseBudget {
    pub fn validate(&self) -> Result<()> {
        positive("background sigma", self.background_sigma)?;
        positive("spontaneous emission factor", self.n_sp)?;
        positive("Planck constant", self.planck_h)?;
        positive("optical frequency", self.optical_freq_hz)?;
        positive("optical bandwidth", self.bandwidth_hz)?;
        positive("responsivity", self.responsivity_a_per_w)?;
        positive("thermal sigma", self.thermal_sigma_a)?;
        Ok(())
    }

    /// Thermal noise expressed as optical power.
    pub fn thermal_equiv(&self) -> f64 {
        self.thermal_sigma_a / self.responsivity_a_per_w
    }

    /// Combined background and thermal standard deviation at a
    /// photodetecting receiver.
    pub fn sigma_prime(&self) -> f64 {
        self.thermal_equiv().hypot(self.background_sigma)
    }
}

/// Amplified spontaneous emission power `n_sp h f B0 G`.
pub fn ase_power(noise: &NoiseBudget, gain: f64) -> f64 {
    noise.n_sp * noise.planck_h * noise.optical_freq_hz * noise.bandwidth_hz * gain
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelayType {
    #[serde(rename = "af")]
    Af,
    #[serde(rename = "ohl")]
    Ohl,
    #[serde(rename = "df")]
    Df,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdfaGain {
    Fixed(f64),
    /// Set from the chain statistics (amplify-and-forward).
    Auto,
}

/// One relay (or the destination descriptor at the end of a chain).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayNodeConfig {
    pub relay_type: RelayType,
    /// Transmitted power of a mark.
    pub target_tx_power_w: f64,
    pub ohl_threshold_w: f64,
    pub ohl_output_level_w: f64,
    pub edfa_gain: EdfaGain,
}

impl RelayNodeConfig {
    /// Hard limiter followed by a fixed-gain EDFA restoring the target power.
    pub fn ohl(target_tx_power_w: f64, threshold_w: f64, output_level_w: f64) -> Result<Self> {
        positive("target transmit power", target_tx_power_w)?;
        positive("hard-limiter threshold", threshold_w)?;
        positive("hard-limiter output level", output_level_w)?;
        Ok(Self {
            relay_type: RelayType::Ohl,
            target_tx_power_w,
            ohl_threshold_w: threshold_w,
            ohl_output_level_w: output_level_w,
            edfa_gain: EdfaGain::Fixed(target_tx_power_w / output_level_w),
        })
    }

    pub fn af(target_tx_power_w: f64) -> Result<Self> {
        positive("target transmit power", target_tx_power_w)?;
        Ok(Self {
            relay_type: RelayType::Af,
            target_tx_power_w,
            ohl_threshold_w: 0.0,
            ohl_output_level_w: 0.0,
            edfa_gain: EdfaGain::Auto,
        })
    }

    pub fn df(target_tx_power_w: f64) -> Result<Self> {
        positive("target transmit power", target_tx_power_w)?;
        Ok(Self {
            relay_type: RelayType::Df,
            target_tx_power_w,
            ohl_threshold_w: 0.0,
            ohl_output_level_w: 0.0,
            edfa_gain: EdfaGain::Fixed(1.0),
        })
    }

    /// Fixed EDFA gain of a hard-limiter node.
    pub fn gain(&self) -> f64 {
        match self.edfa_gain {
            EdfaGain::Fixed(g) => g,
            EdfaGain::Auto => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("target transmit power", self.target_tx_power_w)?;
        if self.relay_type == RelayType::Ohl {
            positive("hard-limiter threshold", self.ohl_threshold_w)?;
            positive("hard-limiter output level", self.ohl_output_level_w)?;
            let g = self.gain();
            let restored = g * self.ohl_output_level_w;
            if ((restored - self.target_tx_power_w) / self.target_tx_power_w).abs() > 1e-9 {
                return Err(RelayError::InvalidParameter {
                    name: "EDFA gain times output level (must equal target power)",
                    value: restored,
                });
            }
        }
        Ok(())
    }
}

/// One hop of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    pub geometry: LinkGeometry,
    pub beam: BeamConfig,
}

impl Hop {
    pub fn fading(&self) -> Result<FadingModel> {
        Ok(FadingModel::for_link(
            &self.geometry,
            self.beam.receiver_beam_radius_wi,
        )?)
    }
}

/// Source, hops and per-node descriptors. `nodes[i]` sits at the receiving
/// end of `hops[i]`; the last entry describes the destination receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayChainConfig {
    pub hops: Vec<Hop>,
    pub nodes: Vec<RelayNodeConfig>,
    pub source_power_w: f64,
}

impl RelayChainConfig {
    pub fn validate(&self) -> Result<()> {
        positive("source power", self.source_power_w)?;
        if self.hops.is_empty() || self.nodes.len() != self.hops.len() {
            return Err(RelayError::NodeCountMismatch {
                hops: self.hops.len(),
                nodes: self.nodes.len(),
            });
        }
        for hop in &self.hops {
            hop.geometry.validate()?;
        }
        for node in &self.nodes[..self.nodes.len() - 1] {
            node.validate()?;
        }
        Ok(())
    }

    pub fn relay_count(&self) -> usize {
        self.hops.len() - 1
    }

    /// Mark power launched into hop `i` in the noise-free chain.
    pub fn nominal_tx_power(&self, i: usize) -> f64 {
        if i == 0 {
            self.source_power_w
        } else {
            self.nodes[i - 1].target_tx_power_w
        }
    }

    fn require_all(&self, expected: RelayType) -> Result<()> {
        for (index, node) in self.nodes[..self.nodes.len() - 1].iter().enumerate() {
            if node.relay_type != expected {
                return Err(RelayError::WrongNodeType {
                    index,
                    expected,
                    found: node.relay_type,
                });
            }
        }
        Ok(())
    }

    pub fn require_ohl(&self) -> Result<()> {
        self.require_all(RelayType::Ohl)
    }

    pub fn require_df(&self) -> Result<()> {
        self.require_all(RelayType::Df)
    }

    pub fn require_af(&self) -> Result<()> {
        self.require_all(RelayType::Af)
    }
}

/// How an amplify-and-forward node sets its EDFA gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AfGainMode {
    /// Target power over the expected mark input power (automatic gain
    /// control over many symbols).
    #[default]
    Average,
    /// Target power over the realized input power of the current slot.
    Instantaneous,
}

/// Average-mode AF gains, one per relay.
///
/// The expected mark input at relay `i` is
/// `(P_tx,i-1 + P_ASE,i-1) E[h_i]`, with `E[h] = h_max gamma / (gamma + 1)`
/// and zero-mean background; the gain brings it back to the target power.
pub fn af_average_gains(cfg: &RelayChainConfig, noise: &NoiseBudget) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut gains = Vec::with_capacity(cfg.relay_count());
    let mut launched = cfg.source_power_w;
    for i in 0..cfg.relay_count() {
        let mean_in = launched * cfg.hops[i].fading()?.mean();
        let target = cfg.nodes[i].target_tx_power_w;
        let g = (target / mean_in).max(1.0);
        gains.push(g);
        launched = g * mean_in + ase_power(noise, g);
    }
    Ok(gains)
}

/// Destination optical power after an AF chain.
///
/// Applies `P_in,i = (G_{i-1} P_in,i-1 + P_ASE,i-1) h_i + bg_i` starting from
/// `P_in,1 = tx h_1 + bg_1`, where `tx` is the source power of the current
/// symbol. Intermediate values keep the sign of the Gaussian draws; only the
/// returned total is clamped at zero.
pub fn af_chain_output(
    cfg: &RelayChainConfig,
    noise: &NoiseBudget,
    tx: f64,
    gains_realized: &[f64],
    h_realized: &[f64],
    bg_draws: &[f64],
) -> Result<AfOutput> {
    let n = cfg.hops.len();
    for len in [h_realized.len(), bg_draws.len()] {
        if len != n {
            return Err(RelayError::LengthMismatch { hops: n, got: len });
        }
    }
    if gains_realized.len() != n - 1 {
        return Err(RelayError::LengthMismatch {
            hops: n - 1,
            got: gains_realized.len(),
        });
    }
    Ok(af_recursion(noise, tx, gains_realized, h_realized, bg_draws))
}

pub(crate) fn af_recursion(
    noise: &NoiseBudget,
    tx: f64,
    gains: &[f64],
    h: &[f64],
    bg: &[f64],
) -> AfOutput {
    let mut p_in = tx * h[0] + bg[0];
    for i in 1..h.len() {
        let g = gains[i - 1];
        p_in = (g * p_in + ase_power(noise, g)) * h[i] + bg[i];
    }
    AfOutput::clamp(p_in)
}

/// AF chain output when every relay normalizes by its realized input.
/// A non-positive input leaves the amplifier at unit gain.
pub fn af_chain_output_instantaneous(
    cfg: &RelayChainConfig,
    noise: &NoiseBudget,
    tx: f64,
    h_realized: &[f64],
    bg_draws: &[f64],
) -> Result<AfOutput> {
    let n = cfg.hops.len();
    for len in [h_realized.len(), bg_draws.len()] {
        if len != n {
            return Err(RelayError::LengthMismatch { hops: n, got: len });
        }
    }
    let mut p_in = tx * h_realized[0] + bg_draws[0];
    for i in 1..n {
        let target = cfg.nodes[i - 1].target_tx_power_w;
        let g = if p_in > 0.0 { (target / p_in).max(1.0) } else { 1.0 };
        p_in = (g * p_in + ase_power(noise, g)) * h_realized[i] + bg_draws[i];
    }
    Ok(AfOutput::clamp(p_in))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AfOutput {
    pub power_w: f64,
    /// The raw total was negative and has been clamped to zero.
    pub clamped: bool,
    /// Unclamped total, keeping the sign of the background draws.
    pub raw_w: f64,
}

impl AfOutput {
    fn clamp(p: f64) -> Self {
        if p < 0.0 {
            Self {
                power_w: 0.0,
                clamped: true,
                raw_w: p,
            }
        } else {
            Self {
                power_w: p,
                clamped: false,
                raw_w: p,
            }
        }
    }
}

/// Photocurrent `R P + n_th`.
pub fn photodetect(noise: &NoiseBudget, p_optical: f64, thermal_draw: f64) -> f64 {
    noise.responsivity_a_per_w * p_optical + thermal_draw
}

/// Two-level hard limiting: the output level when `p_in >= threshold`, else 0.
pub fn ohl_decide(node: &RelayNodeConfig, p_in: f64) -> f64 {
    if p_in >= node.ohl_threshold_w {
        node.ohl_output_level_w
    } else {
        0.0
    }
}

/// One hard-limiter relay: receive, limit, amplify.
///
/// The received power is `p_prev_tx h + bg`. With `use_ase_approx` the EDFA
/// output is the clean level `G P_OHL`; otherwise its ASE is added to the
/// launched power and therefore reaches the next input as `P_ASE h`.
pub fn ohl_chain_step(
    node: &RelayNodeConfig,
    noise: &NoiseBudget,
    p_prev_tx: f64,
    h: f64,
    bg_draw: f64,
    use_ase_approx: bool,
) -> (f64, u8) {
    let p_in = p_prev_tx * h + bg_draw;
    let limited = ohl_decide(node, p_in);
    let g = node.gain();
    let mut next = g * limited;
    if !use_ase_approx {
        next += ase_power(noise, g);
    }
    (next, u8::from(limited > 0.0))
}

/// Decode-and-forward soft decision: 1 iff `p_in >= level / 2`, where
/// `level` is the noise-free received mark power.
pub fn df_decide(p_rx_signal_level: f64, p_in: f64) -> u8 {
    u8::from(p_in >= 0.5 * p_rx_signal_level)
}
