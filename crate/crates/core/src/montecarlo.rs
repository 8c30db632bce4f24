//! Bit-level Monte Carlo of OOK transmission through relay chains.
//!
//! Each trial draws the source bit and then, for every hop in order,
//! `theta_x`, `theta_y`, the background sample and the thermal sample. The
//! order is the same for every relay type, so simulations of different
//! chains with one plan see common random numbers. Pointing errors are
//! redrawn per bit.
//!
//! Trials are split into batches; batch `b` uses substream `b` of the plan's
//! stream, so results do not depend on the number of threads.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{farfield_gain_unchecked, sample_pointing, ChannelError, ExactGainTable, LinkGeometry};
use crate::numerics::{QuadratureSpec, RngStream};
use crate::relay::{
    af_average_gains, af_recursion, ase_power, df_decide, ohl_chain_step, photodetect, AfGainMode,
    NoiseBudget, RelayChainConfig, RelayError, RelayType,
};

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("{0:?} node at position {1} is not supported by this simulator")]
    UnsupportedNode(RelayType, usize),
    #[error(transparent)]
    Relay(#[from] RelayError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

pub type Result<T> = std::result::Result<T, McError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// Tabulated aperture integral in the far-field gain convention.
    ExactIntegral,
    #[default]
    Farfield,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McPlan {
    pub trials: u64,
    pub batch_size: u64,
    pub rng: RngStream,
    pub channel_mode: ChannelMode,
    pub confidence_z: f64,
    /// Add amplifier ASE to launched powers; off reproduces the
    /// ASE-suppressed relay model.
    pub include_ase: bool,
}

impl McPlan {
    const MAX_BATCH: u64 = 1 << 20;

    /// Plan with the largest batch size up to about a million that divides
    /// `trials`.
    pub fn new(trials: u64, rng: RngStream) -> Self {
        let mut batches = trials.div_ceil(Self::MAX_BATCH).max(1);
        while trials % batches != 0 {
            batches += 1;
        }
        Self {
            trials,
            batch_size: trials / batches,
            rng,
            channel_mode: ChannelMode::Farfield,
            confidence_z: 3.0,
            include_ase: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 10_000 {
            return Err(McError::InvalidPlan(format!(
                "{} trials; at least 10000 required",
                self.trials
            )));
        }
        if self.batch_size == 0 || self.trials % self.batch_size != 0 {
            return Err(McError::InvalidPlan(format!(
                "batch size {} does not divide {} trials",
                self.batch_size, self.trials
            )));
        }
        if !(self.confidence_z > 0.0) {
            return Err(McError::InvalidPlan(format!(
                "confidence z {}",
                self.confidence_z
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub ber_estimate: f64,
    pub std_error: f64,
    pub trials_run: u64,
    /// Errors counted per hop against that hop's own input bit; the last
    /// entry is the destination decision.
    pub per_hop_flip_counts: Vec<u64>,
    pub errors: u64,
}

impl McResult {
    fn from_counts(errors: u64, trials: u64, per_hop: Vec<u64>) -> Self {
        let p = errors as f64 / trials as f64;
        Self {
            ber_estimate: p,
            std_error: (p * (1.0 - p) / trials as f64).sqrt(),
            trials_run: trials,
            per_hop_flip_counts: per_hop,
            errors,
        }
    }
}

struct HopSampler {
    geom: LinkGeometry,
    h_max: f64,
    wi: f64,
    table: Option<ExactGainTable>,
}

impl HopSampler {
    fn for_chain(cfg: &RelayChainConfig, mode: ChannelMode) -> Result<Vec<Self>> {
        cfg.hops
            .iter()
            .map(|hop| {
                let wi = hop.beam.receiver_beam_radius_wi;
                let table = match mode {
                    ChannelMode::Farfield => None,
                    ChannelMode::ExactIntegral => {
                        Some(ExactGainTable::new(&hop.geometry, wi, &QuadratureSpec::default())?)
                    }
                };
                Ok(Self {
                    geom: hop.geometry,
                    h_max: hop.fading()?.h_max,
                    wi,
                    table,
                })
            })
            .collect()
    }

    #[inline]
    fn draw(&self, rng: &mut ChaCha8Rng, sigma_bg: f64, sigma_th: f64) -> HopDraw {
        let theta_sq = sample_pointing(&self.geom, rng).squared_norm();
        let bg: f64 = rng.sample(StandardNormal);
        let th: f64 = rng.sample(StandardNormal);
        let h = match &self.table {
            Some(t) => t.gain(theta_sq),
            None => farfield_gain_unchecked(self.h_max, self.geom.length_m, self.wi, theta_sq),
        };
        HopDraw {
            h,
            bg: bg * sigma_bg,
            thermal: th * sigma_th,
        }
    }
}

#[derive(Clone, Copy)]
struct HopDraw {
    h: f64,
    bg: f64,
    thermal: f64,
}

/// Runs `trial` over all batches and merges counts. `trial` returns whether
/// the destination bit was wrong and bumps per-hop flip counters.
fn run_batches<F>(plan: &McPlan, hops: usize, trial: F) -> McResult
where
    F: Fn(&mut ChaCha8Rng, &mut [u64]) -> bool + Sync,
{
    let batches = plan.trials / plan.batch_size;
    let (errors, per_hop) = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = plan.rng.substream(b).rng();
            let mut flips = vec![0u64; hops];
            let mut errors = 0u64;
            for _ in 0..plan.batch_size {
                errors += u64::from(trial(&mut rng, &mut flips));
            }
            (errors, flips)
        })
        .reduce(
            || (0, vec![0; hops]),
            |(e1, mut f1), (e2, f2)| {
                for (a, b) in f1.iter_mut().zip(f2) {
                    *a += b;
                }
                (e1 + e2, f1)
            },
        );
    McResult::from_counts(errors, plan.trials, per_hop)
}

/// BER of a chain of hard-limiter and decode-and-forward nodes.
///
/// Relay nodes act by type. The destination node decides with its hard
/// limiter threshold when it is an OHL node, and otherwise with the
/// decode-and-forward rule at half the noise-free received mark power
/// (the previous node's nominal launch power times the realized gain).
pub fn simulate_chain_ber(cfg: &RelayChainConfig, noise: &NoiseBudget, plan: &McPlan) -> Result<McResult> {
    plan.validate()?;
    cfg.validate()?;
    let n = cfg.hops.len();
    for (i, node) in cfg.nodes.iter().enumerate() {
        if node.relay_type == RelayType::Af {
            return Err(McError::UnsupportedNode(RelayType::Af, i));
        }
    }
    let samplers = HopSampler::for_chain(cfg, plan.channel_mode)?;
    let resp = noise.responsivity_a_per_w;
    let (sbg, sth) = (noise.background_sigma, noise.thermal_sigma_a);
    let use_approx = !plan.include_ase;
    Ok(run_batches(plan, n, |rng, flips| {
        let source_bit = u8::from(rng.gen::<bool>());
        let mut bit = source_bit;
        let mut launched = if bit == 1 { cfg.source_power_w } else { 0.0 };
        for (i, (sampler, node)) in samplers.iter().zip(&cfg.nodes).enumerate() {
            let d = sampler.draw(rng, sbg, sth);
            let decided = if i + 1 < n {
                match node.relay_type {
                    RelayType::Ohl => {
                        let (next, b) = ohl_chain_step(node, noise, launched, d.h, d.bg, use_approx);
                        launched = next;
                        b
                    }
                    _ => {
                        let p_in = launched * d.h + d.bg + d.thermal / resp;
                        let b = df_decide(cfg.nominal_tx_power(i) * d.h, p_in);
                        let mut next = if b == 1 { node.target_tx_power_w } else { 0.0 };
                        if !use_approx {
                            next += ase_power(noise, node.gain());
                        }
                        launched = next;
                        b
                    }
                }
            } else {
                let p_in = launched * d.h + d.bg;
                match node.relay_type {
                    RelayType::Ohl => u8::from(p_in >= node.ohl_threshold_w),
                    _ => {
                        let current = photodetect(noise, p_in, d.thermal);
                        df_decide(cfg.nominal_tx_power(i) * d.h, current / resp)
                    }
                }
            };
            if decided != bit {
                flips[i] += 1;
            }
            bit = decided;
        }
        bit != source_bit
    }))
}

/// Decision threshold at the end of an AF chain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AfDestination {
    /// Midpoint of the noise-free mark and space outputs for the realized
    /// channel gains.
    #[default]
    GenieMidpoint,
    /// Fixed optical-power threshold in watts.
    Fixed(f64),
}

/// BER of an amplify-and-forward chain with average-mode gains.
pub fn simulate_af_ber(
    cfg: &RelayChainConfig,
    noise: &NoiseBudget,
    plan: &McPlan,
    dest: AfDestination,
) -> Result<McResult> {
    simulate_af_ber_with(cfg, noise, plan, dest, AfGainMode::Average)
}

pub fn simulate_af_ber_with(
    cfg: &RelayChainConfig,
    noise: &NoiseBudget,
    plan: &McPlan,
    dest: AfDestination,
    gain_mode: AfGainMode,
) -> Result<McResult> {
    plan.validate()?;
    cfg.validate()?;
    cfg.require_af()?;
    if let AfDestination::Fixed(t) = dest {
        if !(t > 0.0) {
            return Err(McError::InvalidPlan(format!("destination threshold {t}")));
        }
    }
    let n = cfg.hops.len();
    let samplers = HopSampler::for_chain(cfg, plan.channel_mode)?;
    let avg_gains = af_average_gains(cfg, noise)?;
    let resp = noise.responsivity_a_per_w;
    let (sbg, sth) = (noise.background_sigma, noise.thermal_sigma_a);
    let ase_noise = if plan.include_ase {
        *noise
    } else {
        NoiseBudget { n_sp: 0.0, ..*noise }
    };
    let zeros = vec![0.0; n];
    Ok(run_batches(plan, n, |rng, flips| {
        let bit = u8::from(rng.gen::<bool>());
        let mut h = [0.0; 64];
        let mut bg = [0.0; 64];
        let mut hv = Vec::new();
        let mut bgv = Vec::new();
        let (h, bg): (&mut [f64], &mut [f64]) = if n <= 64 {
            (&mut h[..n], &mut bg[..n])
        } else {
            hv.resize(n, 0.0);
            bgv.resize(n, 0.0);
            (&mut hv, &mut bgv)
        };
        let mut thermal = 0.0;
        for (i, s) in samplers.iter().enumerate() {
            let d = s.draw(rng, sbg, sth);
            h[i] = d.h;
            bg[i] = d.bg;
            thermal = d.thermal;
        }
        let tx = if bit == 1 { cfg.source_power_w } else { 0.0 };
        let gains: Vec<f64> = match gain_mode {
            AfGainMode::Average => avg_gains.clone(),
            AfGainMode::Instantaneous => instantaneous_gains(cfg, &ase_noise, tx, h, bg),
        };
        let p_out = af_recursion(&ase_noise, tx, &gains, h, bg);
        let threshold = match dest {
            AfDestination::Fixed(t) => t,
            AfDestination::GenieMidpoint => {
                let gains_mark = match gain_mode {
                    AfGainMode::Average => avg_gains.clone(),
                    AfGainMode::Instantaneous => {
                        instantaneous_gains(cfg, &ase_noise, cfg.source_power_w, h, &zeros)
                    }
                };
                let mark = af_recursion(&ase_noise, cfg.source_power_w, &gains_mark, h, &zeros).power_w;
                let space = af_recursion(&ase_noise, 0.0, &gains_mark, h, &zeros).power_w;
                0.5 * (mark + space)
            }
        };
        // the decision variable keeps negative background excursions, as in
        // the other simulators
        let current = photodetect(noise, p_out.raw_w, thermal);
        let decided = u8::from(current / resp >= threshold);
        if decided != bit {
            flips[n - 1] += 1;
        }
        decided != bit
    }))
}

fn instantaneous_gains(cfg: &RelayChainConfig, noise: &NoiseBudget, tx: f64, h: &[f64], bg: &[f64]) -> Vec<f64> {
    let mut gains = Vec::with_capacity(h.len() - 1);
    let mut p_in = tx * h[0] + bg[0];
    for i in 1..h.len() {
        let target = cfg.nodes[i - 1].target_tx_power_w;
        let g = if p_in > 0.0 { (target / p_in).max(1.0) } else { 1.0 };
        gains.push(g);
        p_in = (g * p_in + ase_power(noise, g)) * h[i] + bg[i];
    }
    gains
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub analytic_pe: f64,
    pub mc_pe: f64,
    pub std_error: f64,
    /// `(analytic - mc) / std_error`.
    pub z_margin: f64,
    pub verdict: Verdict,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Relative allowance added when the analytic value comes from the
/// three-term Q approximation.
pub const APPROX_MODEL_BAND: f64 = 0.10;

/// Pass iff `|analytic - mc| <= z * std_error`, widened by
/// [`APPROX_MODEL_BAND`] of the analytic value when `uses_q_approx`.
pub fn validate_report(analytic: f64, mc: &McResult, confidence_z: f64, uses_q_approx: bool) -> ValidationReport {
    let diff = analytic - mc.ber_estimate;
    let z_margin = if diff == 0.0 {
        0.0
    } else if mc.std_error > 0.0 {
        diff / mc.std_error
    } else {
        diff.signum() * f64::INFINITY
    };
    let band = if uses_q_approx { APPROX_MODEL_BAND * analytic.abs() } else { 0.0 };
    let ok = diff.abs() <= confidence_z * mc.std_error + band;
    ValidationReport {
        analytic_pe: analytic,
        mc_pe: mc.ber_estimate,
        std_error: mc.std_error,
        z_margin,
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{BeamConfig, LinkClass};
    use crate::error_analysis::{pe_df_hop_quadrature, pe_ohl_hop, HopErrorInputs};
    use crate::relay::{Hop, RelayNodeConfig};

    fn noise() -> NoiseBudget {
        NoiseBudget {
            background_sigma: 6e-9,
            n_sp: 1.1,
            planck_h: 6.6e-34,
            optical_freq_hz: 1.9e14,
            bandwidth_hz: 2e8,
            responsivity_a_per_w: 0.8,
            thermal_sigma_a: 1e-9,
        }
    }

    fn hop(length: f64, sigma: f64, wi: f64) -> Hop {
        let geometry = LinkGeometry::new(length, sigma, 0.1, 1550e-9, LinkClass::InterOrbit).unwrap();
        Hop {
            beam: BeamConfig::for_receiver_radius(&geometry, wi).unwrap(),
            geometry,
        }
    }

    fn df_chain(hops: usize) -> RelayChainConfig {
        RelayChainConfig {
            hops: (0..hops).map(|_| hop(1.2e6, 150e-6, 400.0)).collect(),
            nodes: (0..hops).map(|_| RelayNodeConfig::df(4.0).unwrap()).collect(),
            source_power_w: 4.0,
        }
    }

    #[test]
    fn plan_rules() {
        let p = McPlan::new(3_000_000, RngStream::new(1, 0));
        assert_eq!(p.trials % p.batch_size, 0);
        assert!(p.batch_size <= McPlan::MAX_BATCH);
        assert!(McPlan::new(1000, RngStream::new(1, 0)).validate().is_err());
        let bad = McPlan { batch_size: 7, ..McPlan::new(100_000, RngStream::new(1, 0)) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn noiseless_chain_is_error_free() {
        let quiet = NoiseBudget {
            background_sigma: 1e-30,
            thermal_sigma_a: 1e-30,
            ..noise()
        };
        let mut cfg = df_chain(3);
        for h in &mut cfg.hops {
            h.geometry.sigma_theta_rad = 1e-9;
        }
        let plan = McPlan { include_ase: false, ..McPlan::new(20_000, RngStream::new(5, 0)) };
        let r = simulate_chain_ber(&cfg, &quiet, &plan).unwrap();
        assert_eq!(r.ber_estimate, 0.0);
        assert_eq!(r.std_error, 0.0);
    }

    #[test]
    fn single_df_hop_matches_quadrature() {
        let cfg = df_chain(1);
        let n = noise();
        let plan = McPlan::new(2_000_000, RngStream::new(11, 0));
        let mc = simulate_chain_ber(&cfg, &n, &plan).unwrap();
        let inputs = HopErrorInputs::new(cfg.hops[0].fading().unwrap(), 4.0, 1e-8, &n).unwrap();
        let pe = pe_df_hop_quadrature(&inputs, &QuadratureSpec::probability()).unwrap();
        let rep = validate_report(pe, &mc, 3.0, false);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn single_ohl_hop_matches_quadrature() {
        let n = noise();
        let th = 2e-8;
        let cfg = RelayChainConfig {
            hops: vec![hop(1.0e6, 120e-6, 350.0)],
            nodes: vec![RelayNodeConfig::ohl(4.0, th, 1e-3).unwrap()],
            source_power_w: 4.0,
        };
        let plan = McPlan::new(2_000_000, RngStream::new(12, 0));
        let mc = simulate_chain_ber(&cfg, &n, &plan).unwrap();
        let inputs = HopErrorInputs::new(cfg.hops[0].fading().unwrap(), 4.0, th, &n).unwrap();
        let pe = pe_ohl_hop(&inputs, &QuadratureSpec::probability()).unwrap();
        let rep = validate_report(pe, &mc, 3.0, false);
        assert!(rep.passed(), "{rep:?}");
        assert_eq!(mc.per_hop_flip_counts, vec![mc.errors]);
    }

    #[test]
    fn batch_split_and_threads_do_not_change_results() {
        let cfg = df_chain(2);
        let n = noise();
        let plan = McPlan { batch_size: 10_000, ..McPlan::new(200_000, RngStream::new(3, 1)) };
        let a = simulate_chain_ber(&cfg, &n, &plan).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| simulate_chain_ber(&cfg, &n, &plan).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn single_hop_af_equals_df_without_ase() {
        let n = NoiseBudget { n_sp: 0.0, ..noise() };
        let af = RelayChainConfig {
            nodes: vec![RelayNodeConfig::af(4.0).unwrap()],
            ..df_chain(1)
        };
        let plan = McPlan::new(500_000, RngStream::new(9, 0));
        let a = simulate_af_ber(&af, &n, &plan, AfDestination::GenieMidpoint).unwrap();
        let d = simulate_chain_ber(&df_chain(1), &n, &plan).unwrap();
        assert_eq!(a.errors, d.errors);
    }

    #[test]
    fn af_not_better_than_df_with_common_numbers() {
        let n = noise();
        for hops in [2, 4] {
            let af = RelayChainConfig {
                nodes: (0..hops).map(|_| RelayNodeConfig::af(4.0).unwrap()).collect(),
                ..df_chain(hops)
            };
            let plan = McPlan::new(400_000, RngStream::new(21, hops as u64));
            let a = simulate_af_ber(&af, &n, &plan, AfDestination::GenieMidpoint).unwrap();
            let d = simulate_chain_ber(&df_chain(hops), &n, &plan).unwrap();
            assert!(a.ber_estimate >= d.ber_estimate, "{hops}: {} < {}", a.ber_estimate, d.ber_estimate);
        }
    }

    #[test]
    fn std_error_scales_with_trials() {
        let cfg = df_chain(1);
        let n = noise();
        let full = simulate_chain_ber(&cfg, &n, &McPlan::new(400_000, RngStream::new(4, 0))).unwrap();
        let half = simulate_chain_ber(&cfg, &n, &McPlan::new(200_000, RngStream::new(4, 0))).unwrap();
        let ratio = half.std_error / full.std_error;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn report_rules() {
        let mc = McResult::from_counts(100, 100_000, vec![100]);
        let same = validate_report(1e-3, &mc, 3.0, false);
        assert!(same.passed());
        assert_eq!(same.z_margin, 0.0);
        let far = validate_report(2e-3, &mc, 3.0, false);
        assert!(!far.passed());
        assert!(far.z_margin > 3.0);
        let below = validate_report(0.5e-3, &mc, 3.0, false);
        assert!(below.z_margin < -3.0);
        assert!(validate_report(1.1e-3, &mc, 3.0, true).passed());
        assert_eq!(far.to_json(), validate_report(2e-3, &mc, 3.0, false).to_json());
    }
}
