//! Experiment workflows behind the command-line tool: parameter sweeps,
//! per-link path optimization, multi-snapshot studies, lens settings and
//! the validation suites. Everything here is deterministic for a fixed
//! configuration and seed.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    channel_gain_exact_farfield_scale, channel_gain_farfield, sample_pointing, BeamConfig, ChannelError,
    FadingModel, LinkClass, LinkGeometry, PointingError,
};
use crate::config::{ConfigError, ExperimentConfig};
use crate::constellation::{
    feasible_links, filter_candidates, generate_snapshot, ground_pair, nearest_satellite, route,
    validate_route, ConstellationError, ConstellationSnapshot, RouteObjective, RoutePath,
};
use crate::error_analysis::{
    df_closed_form_envelope, pe_df_hop_closed_with, pe_df_hop_quadrature, pe_df_hop_quadrature_with, pe_e2e,
    pe_ohl_approx, pe_ohl_hop, AnalysisError, Composition, EndToEndResult, HopErrorInputs, QCoefficients,
    QVariant,
};
use crate::lens::{lens_for_receiver_width, LensBranch, LensError};
use crate::montecarlo::{
    simulate_af_ber, simulate_chain_ber, validate_report, AfDestination, McError, McPlan, McResult,
};
use crate::numerics::{
    golden_section_min, integrate_power_singular, lambert_w, lower_incomplete_gamma, q_exact, LambertBranch,
    NumericsError, QuadratureSpec, RngStream,
};
use crate::optimizer::{
    beamwidth_closed_form, default_initial_point, exhaustive_joint_search, joint_optimize, min_beam_width,
    stationarity_residual, threshold_optimize, JointOptimum, OptimizerError, OptimizerSettings,
};
use crate::relay::{Hop, NoiseBudget, RelayChainConfig, RelayError, RelayNodeConfig};

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("integrity: {0}")]
    Integrity(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Constellation(#[from] ConstellationError),
    #[error(transparent)]
    Lens(#[from] LensError),
    #[error(transparent)]
    MonteCarlo(#[from] McError),
    #[error(transparent)]
    Relay(#[from] RelayError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, WorkflowError>;

impl WorkflowError {
    /// Process exit status: 2 usage, 3 infeasible, 4 integrity, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            WorkflowError::Usage(_) | WorkflowError::Config(_) => 2,
            WorkflowError::Constellation(ConstellationError::Io { .. }) => 2,
            WorkflowError::Infeasible(_)
            | WorkflowError::Constellation(ConstellationError::CorridorTooNarrow { .. })
            | WorkflowError::Constellation(ConstellationError::NoRoute { .. })
            | WorkflowError::Lens(LensError::Infeasible { .. })
            | WorkflowError::Lens(LensError::OutOfRange { .. }) => 3,
            WorkflowError::Integrity(_)
            | WorkflowError::Constellation(ConstellationError::Integrity(_))
            | WorkflowError::Constellation(ConstellationError::UnknownSatellite(_)) => 4,
            _ => 1,
        }
    }
}

// stream ids of the independent random experiments
const STREAM_SNAPSHOT: u64 = 0x100;
const STREAM_SWEEP_AF: u64 = 0x200;
const STREAM_RELAYS_AF: u64 = 0x300;
const STREAM_VALIDATE: u64 = 0x400;

/// Header, rows and a provenance comment sufficient to regenerate the table.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub provenance: String,
}

impl CsvTable {
    pub fn new(command: &str, cfg: &ExperimentConfig, header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            provenance: format!(
                "command={command} seed={} config_sha256={}",
                cfg.seed,
                cfg.digest()
            ),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r[k].parse().unwrap_or(f64::NAN))
                .collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# {}\n{}\n", self.provenance, self.header.join(","));
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip representation in exponent form.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:e}")
    }
}

fn spec() -> QuadratureSpec {
    QuadratureSpec::probability()
}

fn geometry(cfg: &ExperimentConfig, length: f64, sigma: f64, class: LinkClass) -> Result<LinkGeometry> {
    Ok(LinkGeometry::new(
        length,
        sigma,
        cfg.aperture_radius_m,
        cfg.wavelength_m,
        class,
    )?)
}

fn hop(geom: LinkGeometry, wi: f64) -> Result<Hop> {
    Ok(Hop {
        beam: BeamConfig::for_receiver_radius(&geom, wi)?,
        geometry: geom,
    })
}

/// Chain of hard-limiter relays (one threshold per relay) ending in a
/// photodetecting destination.
pub fn ohl_chain(cfg: &ExperimentConfig, hops: Vec<Hop>, thresholds: &[f64]) -> Result<RelayChainConfig> {
    assert_eq!(thresholds.len() + 1, hops.len());
    let mut nodes = thresholds
        .iter()
        .map(|&t| RelayNodeConfig::ohl(cfg.tx_power_w, t, cfg.ohl_output_level_w))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    nodes.push(RelayNodeConfig::df(cfg.tx_power_w)?);
    Ok(RelayChainConfig {
        hops,
        nodes,
        source_power_w: cfg.tx_power_w,
    })
}

pub fn df_chain(cfg: &ExperimentConfig, hops: Vec<Hop>) -> Result<RelayChainConfig> {
    let nodes = (0..hops.len())
        .map(|_| RelayNodeConfig::df(cfg.tx_power_w))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(RelayChainConfig {
        hops,
        nodes,
        source_power_w: cfg.tx_power_w,
    })
}

pub fn af_chain(cfg: &ExperimentConfig, hops: Vec<Hop>) -> Result<RelayChainConfig> {
    let nodes = (0..hops.len())
        .map(|_| RelayNodeConfig::af(cfg.tx_power_w))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(RelayChainConfig {
        hops,
        nodes,
        source_power_w: cfg.tx_power_w,
    })
}

/// Analytic error of a hard-limiter chain: one hop error per relay at its
/// threshold, then the decode-and-forward rule at the destination.
pub fn ohl_chain_analytic(chain: &RelayChainConfig, noise: &NoiseBudget) -> Result<EndToEndResult> {
    let n = chain.hops.len();
    let mut per_hop = Vec::with_capacity(n);
    for i in 0..n {
        let fading = chain.hops[i].fading()?;
        let tx = chain.nominal_tx_power(i);
        let pe = if i + 1 < n {
            let inputs = HopErrorInputs::new(fading, tx, chain.nodes[i].ohl_threshold_w, noise)?;
            pe_ohl_hop(&inputs, &spec())?
        } else {
            pe_df_hop_quadrature(&HopErrorInputs::new(fading, tx, 1e-9, noise)?, &spec())?
        };
        per_hop.push(pe);
    }
    Ok(pe_e2e(&per_hop, Composition::OhlChain)?)
}

pub fn df_chain_analytic(chain: &RelayChainConfig, noise: &NoiseBudget) -> Result<EndToEndResult> {
    let mut per_hop = Vec::with_capacity(chain.hops.len());
    for (i, h) in chain.hops.iter().enumerate() {
        let inputs = HopErrorInputs::new(h.fading()?, chain.nominal_tx_power(i), 1e-9, noise)?;
        per_hop.push(pe_df_hop_quadrature(&inputs, &spec())?);
    }
    Ok(pe_e2e(&per_hop, Composition::DfChain)?)
}

/// Error of the two-hop single-relay systems at one threshold:
/// `(pe_ohl, pe_df)`.
pub fn single_relay_point(cfg: &ExperimentConfig, geom: &LinkGeometry, threshold: f64) -> Result<(f64, f64)> {
    let noise = cfg.noise();
    let wi = cfg.fixed_beam_radius(geom.length_m);
    let fading = FadingModel::for_link(geom, wi)?;
    let relay = pe_ohl_hop(&HopErrorInputs::new(fading, cfg.tx_power_w, threshold, &noise)?, &spec())?;
    let df = pe_df_hop_quadrature(&HopErrorInputs::new(fading, cfg.tx_power_w, threshold, &noise)?, &spec())?;
    let ohl = pe_e2e(&[relay, df], Composition::OhlChain)?.e2e_pe;
    let df2 = pe_e2e(&[df, df], Composition::DfChain)?.e2e_pe;
    Ok((ohl, df2))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThresholdSweep {
    pub length_m: Option<f64>,
    pub sigma_theta_rad: Option<f64>,
    pub with_af: bool,
}

/// Single-relay error against the hard-limiter threshold, on a linear
/// threshold grid.
pub fn sweep_threshold(cfg: &ExperimentConfig, opts: &ThresholdSweep) -> Result<CsvTable> {
    let length = opts.length_m.unwrap_or(cfg.link_length_m);
    let sigma = opts.sigma_theta_rad.unwrap_or(cfg.sigma_theta_rad);
    if !(length > 0.0 && sigma > 0.0) {
        return Err(WorkflowError::Usage(format!("link length {length} and sigma {sigma} must be positive")));
    }
    let geom = geometry(cfg, length, sigma, LinkClass::InterOrbit)?;
    let n = cfg.threshold_points;
    let rows: Vec<(f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let t = cfg.threshold_min_w + (cfg.threshold_max_w - cfg.threshold_min_w) * k as f64 / (n - 1) as f64;
            let (ohl, df) = single_relay_point(cfg, &geom, t)?;
            Ok((t, ohl, df))
        })
        .collect::<Result<_>>()?;
    let (af, af_se) = if opts.with_af {
        let wi = cfg.fixed_beam_radius(length);
        let chain = af_chain(cfg, vec![hop(geom, wi)?, hop(geom, wi)?])?;
        let plan = McPlan::new(cfg.mc_trials, RngStream::new(cfg.seed, STREAM_SWEEP_AF));
        let r = simulate_af_ber(&chain, &cfg.noise(), &plan, AfDestination::GenieMidpoint)?;
        (r.ber_estimate, r.std_error)
    } else {
        (f64::NAN, f64::NAN)
    };
    let mut table = CsvTable::new(
        "sweep-threshold",
        cfg,
        &["p_th_w", "pe_ohl", "pe_df", "pe_af_mc", "pe_af_stderr"],
    );
    for (t, ohl, df) in rows {
        table.push(vec![num(t), num(ohl), num(df), num(af), num(af_se)]);
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HopSpacing {
    /// The configured total distance is split evenly over `N_r + 1` hops.
    FixedTotal,
    /// Every hop has this length.
    FixedHop(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaySweep {
    pub spacing: HopSpacing,
    pub with_af: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaySweepRow {
    pub n_relays: usize,
    pub hop_length_m: f64,
    pub threshold_w: f64,
    pub pe_ohl_e2e: f64,
    pub pe_df_e2e: f64,
    pub pe_af_e2e_mc: f64,
    pub pe_af_stderr: f64,
}

pub fn relay_sweep_rows(cfg: &ExperimentConfig, opts: &RelaySweep) -> Result<Vec<RelaySweepRow>> {
    let noise = cfg.noise();
    let settings = cfg.optimizer_settings();
    (cfg.relays_min..=cfg.relays_max)
        .into_par_iter()
        .map(|nr| {
            let length = match opts.spacing {
                HopSpacing::FixedTotal => cfg.total_distance_m / (nr + 1) as f64,
                HopSpacing::FixedHop(l) => l,
            };
            let geom = geometry(cfg, length, cfg.sigma_theta_rad, LinkClass::InterOrbit)?;
            let wi = cfg.fixed_beam_radius(length);
            let fading = FadingModel::for_link(&geom, wi)?;
            let start = HopErrorInputs::new(fading, cfg.tx_power_w, 5.0 * noise.background_sigma, &noise)?;
            let th = threshold_optimize(&start, &settings, &spec())?.threshold;
            let hops = vec![hop(geom, wi)?; nr + 1];
            let ohl = ohl_chain_analytic(&ohl_chain(cfg, hops.clone(), &vec![th; nr])?, &noise)?.e2e_pe;
            let df = df_chain_analytic(&df_chain(cfg, hops.clone())?, &noise)?.e2e_pe;
            let (af, af_se) = if opts.with_af {
                let plan = McPlan::new(cfg.mc_trials, RngStream::new(cfg.seed, STREAM_RELAYS_AF + nr as u64));
                let r = simulate_af_ber(&af_chain(cfg, hops)?, &noise, &plan, AfDestination::GenieMidpoint)?;
                (r.ber_estimate, r.std_error)
            } else {
                (f64::NAN, f64::NAN)
            };
            Ok(RelaySweepRow {
                n_relays: nr,
                hop_length_m: length,
                threshold_w: th,
                pe_ohl_e2e: ohl,
                pe_df_e2e: df,
                pe_af_e2e_mc: af,
                pe_af_stderr: af_se,
            })
        })
        .collect()
}

/// End-to-end error against the number of relays.
pub fn sweep_relays(cfg: &ExperimentConfig, opts: &RelaySweep) -> Result<CsvTable> {
    let rows = relay_sweep_rows(cfg, opts)?;
    let mut table = CsvTable::new(
        "sweep-relays",
        cfg,
        &["n_relays", "pe_ohl_e2e", "pe_df_e2e", "pe_af_e2e_mc", "pe_af_stderr", "hop_length_m", "p_th_w"],
    );
    for r in rows {
        table.push(vec![
            r.n_relays.to_string(),
            num(r.pe_ohl_e2e),
            num(r.pe_df_e2e),
            num(r.pe_af_e2e_mc),
            num(r.pe_af_stderr),
            num(r.hop_length_m),
            num(r.threshold_w),
        ]);
    }
    Ok(table)
}

/// Snapshot `k` of the scenario and its minimum-length route between the
/// satellites nearest the two ground stations.
pub fn scenario_route(cfg: &ExperimentConfig, k: u64) -> Result<(ConstellationSnapshot, RoutePath)> {
    let stream = RngStream::new(cfg.seed, STREAM_SNAPSHOT).substream(k);
    let snap = generate_snapshot(&cfg.constellation(), &stream)?;
    let (a, b) = ground_pair(cfg.ground_separation_m, cfg.ground_bearing_deg, cfg.earth_radius_m);
    let (src, _) = nearest_satellite(&snap, a);
    let (dst, _) = nearest_satellite(&snap, b);
    let links = feasible_links(&snap, &cfg.link_limits());
    let subset = filter_candidates(&snap, a, b, cfg.corridor_half_angle_deg)?;
    let path = route(&snap, &subset, &links, src, dst, RouteObjective::MinTotalLength)?;
    validate_route(&snap, &path, &cfg.link_limits())?;
    Ok((snap, path))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkOptimization {
    pub link_index: usize,
    pub link_class: LinkClass,
    pub length_m: f64,
    pub sigma_theta_rad: f64,
    pub proposed: JointOptimum,
    pub exhaustive: JointOptimum,
    pub focal_length_m: Option<f64>,
    pub runtime_proposed_s: f64,
    pub runtime_exhaustive_s: f64,
}

impl LinkOptimization {
    pub fn rel_gap(&self) -> f64 {
        (self.proposed.achieved_pe - self.exhaustive.achieved_pe) / self.exhaustive.achieved_pe
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathOptimization {
    pub links: Vec<LinkOptimization>,
    pub e2e_proposed: f64,
    pub e2e_exhaustive: f64,
}

/// Joint optimization and exhaustive search on every link of a route.
pub fn optimize_route(cfg: &ExperimentConfig, snap: &ConstellationSnapshot, path: &RoutePath) -> Result<PathOptimization> {
    validate_route(snap, path, &cfg.link_limits()).map_err(|e| WorkflowError::Integrity(e.to_string()))?;
    let noise = cfg.noise();
    let settings = cfg.optimizer_settings();
    let grid = cfg.search_grid();
    let lens = cfg.lens_system();
    let links: Vec<LinkOptimization> = path
        .links
        .par_iter()
        .enumerate()
        .map(|(k, l)| {
            let geom = geometry(cfg, l.length_m, l.sigma_theta_rad, l.link_class)?;
            let t0 = Instant::now();
            let proposed = joint_optimize(&geom, &noise, cfg.tx_power_w, &settings, default_initial_point(&noise), &spec())?;
            let runtime_proposed_s = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let exhaustive = exhaustive_joint_search(&geom, &noise, cfg.tx_power_w, &grid, &spec())?;
            let runtime_exhaustive_s = t1.elapsed().as_secs_f64();
            let focal_length_m = lens
                .as_ref()
                .and_then(|sys| lens_for_receiver_width(sys, proposed.beam_width_star, l.length_m).ok())
                .map(|s| s.focal_length_f);
            Ok(LinkOptimization {
                link_index: k,
                link_class: l.link_class,
                length_m: l.length_m,
                sigma_theta_rad: l.sigma_theta_rad,
                proposed,
                exhaustive,
                focal_length_m,
                runtime_proposed_s,
                runtime_exhaustive_s,
            })
        })
        .collect::<Result<_>>()?;
    let e2e = |f: fn(&LinkOptimization) -> f64| -> Result<f64> {
        let pe: Vec<f64> = links.iter().map(f).collect();
        Ok(pe_e2e(&pe, Composition::OhlChain)?.e2e_pe)
    };
    Ok(PathOptimization {
        e2e_proposed: e2e(|l| l.proposed.achieved_pe)?,
        e2e_exhaustive: e2e(|l| l.exhaustive.achieved_pe)?,
        links,
    })
}

/// Per-link optimized parameters for a stored snapshot and route, with an
/// `e2e` footer row.
pub fn optimize_path(cfg: &ExperimentConfig, snap: &ConstellationSnapshot, path: &RoutePath) -> Result<CsvTable> {
    let opt = optimize_route(cfg, snap, path)?;
    let mut table = CsvTable::new(
        "optimize-path",
        cfg,
        &[
            "link_index",
            "link_class",
            "length_m",
            "sigma_theta",
            "p_th_star_w",
            "w_star_m",
            "focal_len_m",
            "pe_hop",
            "pe_hop_exhaustive",
            "rel_gap",
        ],
    );
    for l in &opt.links {
        table.push(vec![
            l.link_index.to_string(),
            l.link_class.as_str().to_string(),
            num(l.length_m),
            num(l.sigma_theta_rad),
            num(l.proposed.threshold_star),
            num(l.proposed.beam_width_star),
            num(l.focal_length_m.unwrap_or(f64::NAN)),
            num(l.proposed.achieved_pe),
            num(l.exhaustive.achieved_pe),
            num(l.rel_gap()),
        ]);
    }
    let gap = (opt.e2e_proposed - opt.e2e_exhaustive) / opt.e2e_exhaustive;
    let empty = || String::new();
    table.push(vec![
        "e2e".into(),
        empty(),
        num(path.total_length_m),
        empty(),
        empty(),
        empty(),
        empty(),
        num(opt.e2e_proposed),
        num(opt.e2e_exhaustive),
        num(gap),
    ]);
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotOutcome {
    pub snapshot_id: u64,
    pub route: RoutePath,
    pub optimization: PathOptimization,
}

impl SnapshotOutcome {
    pub fn runtime_proposed_s(&self) -> f64 {
        self.optimization.links.iter().map(|l| l.runtime_proposed_s).sum()
    }

    pub fn runtime_exhaustive_s(&self) -> f64 {
        self.optimization.links.iter().map(|l| l.runtime_exhaustive_s).sum()
    }

    pub fn evaluations(&self) -> (usize, usize) {
        self.optimization.links.iter().fold((0, 0), |(a, b), l| {
            (a + l.proposed.evaluations, b + l.exhaustive.evaluations)
        })
    }
}

pub fn snapshot_outcomes(cfg: &ExperimentConfig, count: u64) -> Result<Vec<SnapshotOutcome>> {
    (0..count)
        .map(|k| {
            let (snap, route) = scenario_route(cfg, k)?;
            let optimization = optimize_route(cfg, &snap, &route)?;
            Ok(SnapshotOutcome {
                snapshot_id: k,
                route,
                optimization,
            })
        })
        .collect()
}

/// One row per snapshot. Wall-clock columns are filled only with
/// `timing`, since they differ between runs.
pub fn snapshot_study(cfg: &ExperimentConfig, count: u64, timing: bool) -> Result<CsvTable> {
    if count == 0 {
        return Err(WorkflowError::Usage("at least one snapshot required".into()));
    }
    let outcomes = snapshot_outcomes(cfg, count)?;
    let mut table = CsvTable::new(
        "snapshot-study",
        cfg,
        &[
            "snapshot_id",
            "n_relays",
            "e2e_pe_proposed",
            "e2e_pe_exhaustive",
            "runtime_proposed_s",
            "runtime_exhaustive_s",
            "evals_proposed",
            "evals_exhaustive",
        ],
    );
    for o in &outcomes {
        let (ep, ee) = o.evaluations();
        let (rp, re) = if timing {
            (o.runtime_proposed_s(), o.runtime_exhaustive_s())
        } else {
            (f64::NAN, f64::NAN)
        };
        table.push(vec![
            o.snapshot_id.to_string(),
            o.route.relay_count.to_string(),
            num(o.optimization.e2e_proposed),
            num(o.optimization.e2e_exhaustive),
            num(rp),
            num(re),
            ep.to_string(),
            ee.to_string(),
        ]);
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensReport {
    pub receiver_beam_radius_m: f64,
    pub link_length_m: f64,
    pub divergence_rad: f64,
    pub output_beam_radius_m: f64,
    pub focal_length_m: f64,
    pub focal_length_closed_form_m: Option<f64>,
    pub forward_residual: f64,
    pub relative_difference: Option<f64>,
    pub branch: LensBranch,
    pub response_time_s: f64,
}

impl LensReport {
    pub fn to_text(&self) -> String {
        let opt = |x: Option<f64>| x.map(num).unwrap_or_else(|| "none".into());
        let mut s = String::new();
        let _ = writeln!(s, "receiver_beam_radius_m = {}", num(self.receiver_beam_radius_m));
        let _ = writeln!(s, "link_length_m = {}", num(self.link_length_m));
        let _ = writeln!(s, "divergence_rad = {}", num(self.divergence_rad));
        let _ = writeln!(s, "output_beam_radius_m = {}", num(self.output_beam_radius_m));
        let _ = writeln!(s, "focal_length_m = {}", num(self.focal_length_m));
        let _ = writeln!(s, "focal_length_closed_form_m = {}", opt(self.focal_length_closed_form_m));
        let _ = writeln!(s, "relative_difference = {}", opt(self.relative_difference));
        let _ = writeln!(s, "forward_residual = {}", num(self.forward_residual));
        let _ = writeln!(s, "branch = {}", match self.branch {
            LensBranch::Long => "long",
            LensBranch::Short => "short",
            LensBranch::Auto => "auto",
        });
        let _ = writeln!(s, "response_time_s = {}", num(self.response_time_s));
        s
    }
}

/// Tunable-lens setting for a receiver beam radius over a link.
pub fn lens_report(cfg: &ExperimentConfig, wi: f64, length: f64) -> Result<LensReport> {
    if !(wi > 0.0 && length > 0.0) {
        return Err(WorkflowError::Usage(format!("beam radius {wi} and length {length} must be positive")));
    }
    let sys = cfg
        .lens_system()
        .ok_or_else(|| WorkflowError::Usage("invalid lens parameters".into()))?;
    let sol = lens_for_receiver_width(&sys, wi, length).map_err(|e| match e {
        LensError::Infeasible { .. } | LensError::OutOfRange { .. } => WorkflowError::Infeasible(e.to_string()),
        other => other.into(),
    })?;
    Ok(LensReport {
        receiver_beam_radius_m: wi,
        link_length_m: length,
        divergence_rad: wi / length,
        output_beam_radius_m: sol.target_wlprime,
        focal_length_m: sol.focal_length_f,
        focal_length_closed_form_m: sol.closed_form_focal_length,
        forward_residual: sol.forward_residual,
        relative_difference: sol.closed_form_discrepancy(),
        branch: sol.branch,
        response_time_s: sys.response_time_s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Numerics,
    Channel,
    Hop,
    Chain,
    Optimizer,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Numerics, Suite::Channel, Suite::Hop, Suite::Chain, Suite::Optimizer];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Numerics => "numerics",
            Suite::Channel => "channel",
            Suite::Hop => "hop",
            Suite::Chain => "chain",
            Suite::Optimizer => "optimizer",
        }
    }
}

/// Deliberate corruption used to show that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Doubles the leading coefficient of the closed-form hop error.
    ClosedFormCoefficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub checks: Vec<Check>,
}

impl ValidationOutcome {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {}.{} value={} limit={}",
                if c.passed { "PASS" } else { "FAIL" },
                c.suite.as_str(),
                c.name,
                num(c.value),
                num(c.limit)
            );
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        let _ = writeln!(s, "{} checks, {} failed", self.checks.len(), failed);
        s
    }
}

struct Checks {
    suite: Suite,
    out: Vec<Check>,
}

impl Checks {
    fn at_most(&mut self, name: &str, value: f64, limit: f64) {
        self.out.push(Check {
            suite: self.suite,
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        });
    }

    fn mc(&mut self, name: &str, analytic: f64, mc: &McResult, z: f64) {
        let rep = validate_report(analytic, mc, z, false);
        self.out.push(Check {
            suite: self.suite,
            name: name.into(),
            value: rep.z_margin.abs(),
            limit: z,
            passed: rep.passed(),
        });
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Runs the requested oracle comparisons on the configured single link.
pub fn validate(cfg: &ExperimentConfig, suites: &[Suite], fault: Option<Fault>) -> Result<ValidationOutcome> {
    let mut checks = Vec::new();
    for &suite in Suite::ALL.iter().filter(|s| suites.contains(s)) {
        let mut c = Checks { suite, out: Vec::new() };
        match suite {
            Suite::Numerics => numerics_checks(&mut c)?,
            Suite::Channel => channel_checks(cfg, &mut c)?,
            Suite::Hop => hop_checks(cfg, fault, &mut c)?,
            Suite::Chain => chain_checks(cfg, &mut c)?,
            Suite::Optimizer => optimizer_checks(cfg, &mut c)?,
        }
        checks.extend(c.out);
    }
    Ok(ValidationOutcome { checks })
}

fn numerics_checks(c: &mut Checks) -> Result<()> {
    c.at_most("q_exact_at_3", rel(q_exact(3.0), 1.349_898_031_630_094_6e-3), 1e-14);
    c.at_most("q_exact_at_6", rel(q_exact(6.0), 9.865_876_450_376_98e-10), 1e-14);
    for (name, x, b) in [
        ("lambert_w0_residual", 1.0, LambertBranch::Principal),
        ("lambert_wm1_residual", -0.2, LambertBranch::MinusOne),
        ("lambert_w0_branch_point_residual", -0.367_879, LambertBranch::Principal),
    ] {
        let w = lambert_w(x, b)?;
        c.at_most(name, ((w * w.exp() - x) / x).abs(), 1e-12);
    }
    c.at_most(
        "incomplete_gamma_unit_shape",
        rel(lower_incomplete_gamma(1.0, 2.0)?, -(-2.0f64).exp_m1()),
        1e-12,
    );
    let half = lower_incomplete_gamma(0.5, 1.3)?;
    let erf_form = std::f64::consts::PI.sqrt() * (1.0 - 2.0 * q_exact((2.0f64 * 1.3).sqrt()));
    c.at_most("incomplete_gamma_half_shape", rel(half, erf_form), 1e-12);
    let singular = integrate_power_singular(|x: f64| x.powf(-0.5), 0.0, 1.0, 0.5, &QuadratureSpec::default())?;
    c.at_most("quadrature_endpoint_singularity", rel(singular, 2.0), 1e-10);
    Ok(())
}

fn default_link(cfg: &ExperimentConfig) -> Result<(LinkGeometry, f64)> {
    let geom = geometry(cfg, cfg.link_length_m, cfg.sigma_theta_rad, LinkClass::InterOrbit)?;
    Ok((geom, cfg.fixed_beam_radius(cfg.link_length_m)))
}

/// One-sample Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

fn channel_checks(cfg: &ExperimentConfig, c: &mut Checks) -> Result<()> {
    let (geom, wi) = default_link(cfg)?;
    let fm = FadingModel::for_link(&geom, wi)?;
    let total = integrate_power_singular(|h| fm.pdf(h), 0.0, fm.h_max, fm.gamma_shape, &QuadratureSpec::default())?;
    c.at_most("fading_pdf_normalization", (total - 1.0).abs(), 1e-9);
    let boresight = PointingError { theta_x: 0.0, theta_y: 0.0 };
    let exact = channel_gain_exact_farfield_scale(&geom, wi, &boresight, &QuadratureSpec::default())?;
    c.at_most("exact_vs_farfield_boresight", rel(exact, fm.h_max), 1e-4);
    let mut rng = RngStream::new(cfg.seed, STREAM_VALIDATE).substream(1).rng();
    let samples: Vec<f64> = (0..100_000)
        .map(|_| channel_gain_farfield(&fm, &geom, wi, &sample_pointing(&geom, &mut rng)))
        .collect();
    c.at_most("fading_ks_statistic", ks_statistic(samples, |h| fm.cdf(h)), 0.005);
    let mean = fm.mean();
    c.at_most(
        "fading_mean_closed_form",
        rel(mean, fm.h_max * fm.gamma_shape / (fm.gamma_shape + 1.0)),
        1e-12,
    );
    Ok(())
}

fn hop_checks(cfg: &ExperimentConfig, fault: Option<Fault>, c: &mut Checks) -> Result<()> {
    let noise = cfg.noise();
    let (geom, wi) = default_link(cfg)?;
    let fm = FadingModel::for_link(&geom, wi)?;
    let mut coeffs = QCoefficients::default();
    if fault == Some(Fault::ClosedFormCoefficient) {
        coeffs.a[0] *= 2.0;
    }
    let inputs = HopErrorInputs::new(fm, cfg.tx_power_w, 5.0 * noise.background_sigma, &noise)?;
    let closed = pe_df_hop_closed_with(&inputs, &coeffs)?;
    let approx_quad = pe_df_hop_quadrature_with(&inputs, &spec(), QVariant::Approx3)?;
    let exact_quad = pe_df_hop_quadrature(&inputs, &spec())?;
    c.at_most("df_closed_vs_approx_quadrature", rel(closed, approx_quad), 1e-6);
    c.at_most(
        "df_closed_vs_exact_quadrature",
        rel(closed, exact_quad),
        df_closed_form_envelope(&inputs),
    );
    let th = threshold_optimize(&inputs, &cfg.optimizer_settings(), &spec())?.threshold;
    let ohl = pe_ohl_hop(&inputs.with_threshold(th), &spec())?;
    let trials = cfg.mc_trials;
    let z = cfg.confidence_z;
    let base = RngStream::new(cfg.seed, STREAM_VALIDATE).substream(2);
    let one_hop = vec![hop(geom, wi)?];
    let ohl_node = RelayNodeConfig::ohl(cfg.tx_power_w, th, cfg.ohl_output_level_w)?;
    let ohl_cfg = RelayChainConfig {
        hops: one_hop.clone(),
        nodes: vec![ohl_node],
        source_power_w: cfg.tx_power_w,
    };
    let mc = simulate_chain_ber(&ohl_cfg, &noise, &McPlan::new(trials, base.substream(0)))?;
    c.mc("ohl_hop_vs_monte_carlo", ohl, &mc, z);
    let mc = simulate_chain_ber(&df_chain(cfg, one_hop)?, &noise, &McPlan::new(trials, base.substream(1)))?;
    c.mc("df_hop_vs_monte_carlo", exact_quad, &mc, z);
    Ok(())
}

fn chain_checks(cfg: &ExperimentConfig, c: &mut Checks) -> Result<()> {
    let noise = cfg.noise();
    let (geom, wi) = default_link(cfg)?;
    let hops = vec![hop(geom, wi)?; 4];
    let fm = FadingModel::for_link(&geom, wi)?;
    let start = HopErrorInputs::new(fm, cfg.tx_power_w, 5.0 * noise.background_sigma, &noise)?;
    let th = threshold_optimize(&start, &cfg.optimizer_settings(), &spec())?.threshold;
    let base = RngStream::new(cfg.seed, STREAM_VALIDATE).substream(3);
    let ohl = ohl_chain(cfg, hops.clone(), &[th; 3])?;
    let analytic = ohl_chain_analytic(&ohl, &noise)?.e2e_pe;
    let mc = simulate_chain_ber(&ohl, &noise, &McPlan::new(cfg.mc_trials, base.substream(0)))?;
    c.mc("ohl_chain_vs_monte_carlo", analytic, &mc, cfg.confidence_z);
    let df = df_chain(cfg, hops)?;
    let analytic = df_chain_analytic(&df, &noise)?.e2e_pe;
    let mc = simulate_chain_ber(&df, &noise, &McPlan::new(cfg.mc_trials, base.substream(1)))?;
    c.mc("df_chain_vs_monte_carlo", analytic, &mc, cfg.confidence_z);
    Ok(())
}

fn optimizer_checks(cfg: &ExperimentConfig, c: &mut Checks) -> Result<()> {
    let noise = cfg.noise();
    let (geom, wi) = default_link(cfg)?;
    let fm = FadingModel::for_link(&geom, wi)?;
    let tight = OptimizerSettings {
        epsilon_rel: 1e-12,
        max_inner: 200,
        ..cfg.optimizer_settings()
    };
    let start = HopErrorInputs::new(fm, cfg.tx_power_w, 5.0 * noise.background_sigma, &noise)?;
    let out = threshold_optimize(&start, &tight, &spec())?;
    c.at_most(
        "threshold_stationarity_residual",
        stationarity_residual(&start, out.threshold, &spec())?,
        1e-9,
    );
    let n = 10_000;
    let step = (cfg.threshold_max_w - cfg.threshold_min_w) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|k| pe_ohl_hop(&start.with_threshold(cfg.threshold_min_w + step * k as f64), &spec()))
        .collect::<std::result::Result<_, _>>()?;
    let best = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| cfg.threshold_min_w + step * k as f64)
        .unwrap_or(f64::NAN);
    c.at_most("threshold_vs_grid_argmin_cells", (out.threshold - best).abs() / step, 1.0);

    // closed-form beam width against a direct search of the same surrogate
    let inputs = start.with_threshold(out.threshold);
    let w_closed = beamwidth_closed_form(&inputs, &geom)?;
    let surrogate = |w: f64| {
        HopErrorInputs::for_link(&geom, w, cfg.tx_power_w, out.threshold, &noise)
            .ok()
            .and_then(|i| pe_ohl_approx(&i).ok())
            .unwrap_or(f64::INFINITY)
    };
    let g = golden_section_min(surrogate, min_beam_width(&geom), 20.0 * w_closed, 1e-10 * w_closed);
    c.at_most("beamwidth_closed_form_vs_search", rel(w_closed, g.x), 1e-5);

    let joint = joint_optimize(
        &geom,
        &noise,
        cfg.tx_power_w,
        &cfg.optimizer_settings(),
        default_initial_point(&noise),
        &spec(),
    )?;
    c.at_most("joint_outer_iterations", joint.outer_iterations as f64, 10.0);
    let initial = pe_ohl_hop(
        &HopErrorInputs::for_link(&geom, default_initial_point(&noise).1, cfg.tx_power_w, default_initial_point(&noise).0, &noise)?,
        &spec(),
    )?;
    c.at_most("joint_not_worse_than_start", joint.achieved_pe / initial, 1.0);
    let _ = wi;
    Ok(())
}
