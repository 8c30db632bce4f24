//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero when any of them fails.
//!
//! A criterion name (for example `ac3`) given on the command line restricts
//! the run to matching criteria.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;

use ohlink::channel::{
    beam_radius_at_distance, channel_gain_farfield, sample_pointing, BeamConfig, FadingModel, LinkClass,
    LinkGeometry,
};
use ohlink::config::ExperimentConfig;
use ohlink::constellation::{
    feasible_links, generate_snapshot, route, ConstellationConfig, ConstellationError, LinkCandidate,
    LinkLimits, RouteObjective,
};
use ohlink::error_analysis::{
    df_closed_form_envelope, pe_df_hop_closed, pe_df_hop_quadrature, pe_df_hop_quadrature_with, pe_ohl_hop,
    HopErrorInputs, QVariant,
};
use ohlink::lens::{propagate_q, solve_focal_length, LensSystem};
use ohlink::montecarlo::{simulate_af_ber, simulate_chain_ber, validate_report, AfDestination, McPlan, McResult};
use ohlink::numerics::{
    integrate_power_singular, lambert_w, lower_incomplete_gamma, q_exact, LambertBranch, QuadratureSpec,
    RngStream,
};
use ohlink::optimizer::{stationarity_residual, threshold_optimize, OptimizerSettings};
use ohlink::relay::{Hop, RelayChainConfig, RelayNodeConfig};
use ohlink::workflows::{
    self, df_chain, ks_statistic, ohl_chain, relay_sweep_rows, snapshot_outcomes, HopSpacing, RelaySweep,
    SnapshotOutcome, ThresholdSweep,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn spec() -> QuadratureSpec {
    QuadratureSpec::probability()
}

fn defaults() -> ExperimentConfig {
    ExperimentConfig::default()
}

fn geometry(l: f64, s: f64) -> LinkGeometry {
    LinkGeometry::new(l, s, 0.1, 1550e-9, LinkClass::InterOrbit).unwrap()
}

fn hop(l: f64, s: f64, w: f64) -> Hop {
    let g = geometry(l, s);
    Hop {
        beam: BeamConfig::for_receiver_radius(&g, w).unwrap(),
        geometry: g,
    }
}

#[derive(Debug, Clone, Copy)]
struct HopSet {
    length: f64,
    sigma: f64,
    beam: f64,
    threshold: f64,
}

impl HopSet {
    fn inputs(&self) -> HopErrorInputs {
        HopErrorInputs::for_link(&geometry(self.length, self.sigma), self.beam, 4.0, self.threshold, &defaults().noise())
            .unwrap()
    }
}

/// 25 hop parameter sets drawn over L 200-2000 km, sigma 80-160 urad,
/// w 200-600 m and a log-uniform P_th of 1-100 nW, keeping those whose
/// hard-limiter and decode-and-forward errors are both at least 1e-6 so
/// that the Monte Carlo comparison has errors to count.
fn hop_sets() -> &'static [HopSet] {
    static SETS: OnceLock<Vec<HopSet>> = OnceLock::new();
    SETS.get_or_init(|| {
        let mut rng = RngStream::new(2024, 1).rng();
        let mut sets = Vec::new();
        while sets.len() < 25 {
            let set = HopSet {
                length: rng.gen_range(200e3..2000e3),
                sigma: rng.gen_range(80e-6..160e-6),
                beam: rng.gen_range(200.0..600.0),
                threshold: 1e-9 * 100f64.powf(rng.gen::<f64>()),
            };
            let i = set.inputs();
            let ohl = pe_ohl_hop(&i, &spec()).unwrap();
            let df = pe_df_hop_quadrature(&i, &spec()).unwrap();
            if ohl >= 1e-6 && df >= 1e-6 {
                sets.push(set);
            }
        }
        sets
    })
}

fn trials_for(pe: f64) -> u64 {
    if pe < 1e-5 {
        100_000_000
    } else {
        10_000_000
    }
}

fn ac1_oracle_equivalence() -> Outcome {
    let noise = defaults().noise();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (k, s) in hop_sets().iter().enumerate() {
        let i = s.inputs();
        let h = hop(s.length, s.sigma, s.beam);
        let base = RngStream::new(2024, 2).substream(k as u64);

        let ohl = pe_ohl_hop(&i, &spec()).unwrap();
        let chain = RelayChainConfig {
            hops: vec![h],
            nodes: vec![RelayNodeConfig::ohl(4.0, s.threshold, 1e-3).unwrap()],
            source_power_w: 4.0,
        };
        let mc = simulate_chain_ber(&chain, &noise, &McPlan::new(trials_for(ohl), base.substream(0))).unwrap();
        let rep = validate_report(ohl, &mc, 3.0, false);
        worst = worst.max(rep.z_margin.abs());
        if !rep.passed() {
            failures.push(format!("set {k} ohl z={:.2}", rep.z_margin));
        }

        let df = pe_df_hop_quadrature(&i, &spec()).unwrap();
        let chain = RelayChainConfig {
            hops: vec![h],
            nodes: vec![RelayNodeConfig::df(4.0).unwrap()],
            source_power_w: 4.0,
        };
        let mc = simulate_chain_ber(&chain, &noise, &McPlan::new(trials_for(df), base.substream(1))).unwrap();
        let rep = validate_report(df, &mc, 3.0, false);
        worst = worst.max(rep.z_margin.abs());
        if !rep.passed() {
            failures.push(format!("set {k} df z={:.2}", rep.z_margin));
        }
    }
    outcome(
        failures.is_empty(),
        format!("50 comparisons, max |z| = {worst:.2}; failures: {failures:?}"),
    )
}

fn ac2_closed_form_fidelity() -> Outcome {
    let mut worst_vs_approx: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    let mut envelope_max: f64 = 0.0;
    let mut failures = Vec::new();
    for (k, s) in hop_sets().iter().enumerate() {
        let i = s.inputs();
        let closed = pe_df_hop_closed(&i).unwrap();
        let approx = pe_df_hop_quadrature_with(&i, &spec(), QVariant::Approx3).unwrap();
        let exact = pe_df_hop_quadrature(&i, &spec()).unwrap();
        let envelope = df_closed_form_envelope(&i);
        let d_approx = ((closed - approx) / approx).abs();
        let d_exact = ((closed - exact) / exact).abs();
        worst_vs_approx = worst_vs_approx.max(d_approx);
        worst_ratio = worst_ratio.max(d_exact / envelope);
        envelope_max = envelope_max.max(envelope);
        if d_approx > 1e-6 || d_exact > envelope {
            failures.push(format!("set {k}: {d_approx:.2e} / {d_exact:.3} vs {envelope:.3}"));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "max rel vs approx-Q quadrature {worst_vs_approx:.2e}; max deviation/envelope {worst_ratio:.3}; \
             envelope up to {envelope_max:.3}; failures: {failures:?}"
        ),
    )
}

fn snapshots() -> &'static [SnapshotOutcome] {
    static CACHE: OnceLock<Vec<SnapshotOutcome>> = OnceLock::new();
    CACHE.get_or_init(|| snapshot_outcomes(&defaults(), 4).expect("snapshot study"))
}

fn ac3_optimizer_optimality() -> Outcome {
    let mut max_gap: f64 = 0.0;
    let mut min_gap = f64::INFINITY;
    let mut max_outer = 0;
    let mut max_runtime: f64 = 0.0;
    let mut min_speedup = f64::INFINITY;
    let mut failures = 0;
    let mut links = 0;
    for s in snapshots() {
        for l in &s.optimization.links {
            links += 1;
            let gap = l.rel_gap();
            let speedup = l.runtime_exhaustive_s / l.runtime_proposed_s;
            max_gap = max_gap.max(gap);
            min_gap = min_gap.min(gap);
            max_outer = max_outer.max(l.proposed.outer_iterations);
            max_runtime = max_runtime.max(l.runtime_proposed_s);
            min_speedup = min_speedup.min(speedup);
            if gap > 0.05 || l.proposed.outer_iterations > 10 || l.runtime_proposed_s >= 1.0 || speedup < 100.0 {
                failures += 1;
            }
        }
    }
    outcome(
        failures == 0,
        format!(
            "{links} links, {failures} out of bound; rel gap {:.1}% to {:.1}% (bound 5%), max outer {max_outer}, \
             max proposed runtime {max_runtime:.2e} s, min speedup {min_speedup:.0}x",
            100.0 * min_gap,
            100.0 * max_gap
        ),
    )
}

fn argmin(xs: &[f64]) -> usize {
    xs.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).unwrap()
}

fn threshold_argmin(cfg: &ExperimentConfig, length: f64, sigma: f64) -> f64 {
    let opts = ThresholdSweep {
        length_m: Some(length),
        sigma_theta_rad: Some(sigma),
        with_af: false,
    };
    let t = workflows::sweep_threshold(cfg, &opts).unwrap();
    let th = t.column("p_th_w").unwrap();
    th[argmin(&t.column("pe_ohl").unwrap())]
}

fn ac4_trend_reproduction() -> Outcome {
    let cfg = defaults();
    let mut notes = Vec::new();
    let mut pass = true;

    let t = workflows::sweep_threshold(&cfg, &ThresholdSweep::default()).unwrap();
    let pe = t.column("pe_ohl").unwrap();
    let k = argmin(&pe);
    let u_shape = k > 0 && k + 1 < pe.len();
    pass &= u_shape;
    notes.push(format!("U-shape argmin index {k}/{}", pe.len()));

    let (a80, a160) = (threshold_argmin(&cfg, 1e6, 80e-6), threshold_argmin(&cfg, 1e6, 160e-6));
    let (a1000, a1600) = (threshold_argmin(&cfg, 1000e3, 110e-6), threshold_argmin(&cfg, 1600e3, 110e-6));
    pass &= a80 > a160 && a1000 > a1600;
    notes.push(format!(
        "argmin sigma 80/160: {:.1}/{:.1} nW, L 1000/1600: {:.1}/{:.1} nW",
        a80 * 1e9,
        a160 * 1e9,
        a1000 * 1e9,
        a1600 * 1e9
    ));

    // single-relay system at the default operating point, common random numbers
    let noise = cfg.noise();
    let length = cfg.link_length_m;
    let w = cfg.fixed_beam_radius(length);
    let h = hop(length, cfg.sigma_theta_rad, w);
    let fm = FadingModel::for_link(&h.geometry, w).unwrap();
    let start = HopErrorInputs::new(fm, 4.0, 5.0 * noise.background_sigma, &noise).unwrap();
    let th = threshold_optimize(&start, &cfg.optimizer_settings(), &spec()).unwrap().threshold;
    let plan = McPlan::new(10_000_000, RngStream::new(2024, 4));
    let ohl = simulate_chain_ber(&ohl_chain(&cfg, vec![h, h], &[th]).unwrap(), &noise, &plan).unwrap();
    let df = simulate_chain_ber(&df_chain(&cfg, vec![h, h]).unwrap(), &noise, &plan).unwrap();
    let af = simulate_af_ber(&workflows::af_chain(&cfg, vec![h, h]).unwrap(), &noise, &plan, AfDestination::GenieMidpoint)
        .unwrap();
    let within = |lo: &McResult, hi: &McResult| {
        lo.ber_estimate <= hi.ber_estimate + 3.0 * lo.std_error.hypot(hi.std_error)
    };
    let ordered = within(&df, &ohl) && within(&ohl, &af);
    pass &= ordered;
    notes.push(format!(
        "single relay DF/OHL/AF = {:.3e}/{:.3e}/{:.3e} (AF stderr {:.1e})",
        df.ber_estimate, ohl.ber_estimate, af.ber_estimate, af.std_error
    ));

    // fixed 1000 km hops: 2 against 10 hops
    let sweep_cfg = ExperimentConfig {
        relays_min: 1,
        relays_max: 9,
        mc_trials: 2_000_000,
        ..cfg
    };
    let rows = relay_sweep_rows(&sweep_cfg, &RelaySweep { spacing: HopSpacing::FixedHop(1e6), with_af: true }).unwrap();
    let (two, ten) = (rows[0], rows[8]);
    let growth = |a: f64, b: f64| b / a;
    let (g_af, g_ohl, g_df) = (
        growth(two.pe_af_e2e_mc, ten.pe_af_e2e_mc),
        growth(two.pe_ohl_e2e, ten.pe_ohl_e2e),
        growth(two.pe_df_e2e, ten.pe_df_e2e),
    );
    pass &= g_af > g_ohl && g_af > g_df;
    notes.push(format!("2->10 hop growth AF/OHL/DF = {g_af:.1}/{g_ohl:.1}/{g_df:.1}"));

    outcome(pass, notes.join("; "))
}

fn ac5_end_to_end_magnitude() -> Outcome {
    let rows: Vec<(usize, f64)> = snapshots()
        .iter()
        .map(|s| (s.route.relay_count, s.optimization.e2e_proposed))
        .collect();
    let pass = rows.len() >= 4
        && rows
            .iter()
            .all(|&(n, pe)| (9..=13).contains(&n) && (1e-4..=5e-3).contains(&pe));
    let text: Vec<String> = rows.iter().map(|(n, pe)| format!("{n} links {pe:.2e}")).collect();
    outcome(pass, format!("snapshots: {}", text.join(", ")))
}

fn ac6_lens_self_consistency() -> Outcome {
    let sys = LensSystem::new(2e-3, 1550e-9, 0.04, (0.015, 0.060)).unwrap();
    let w_lo = sys.achievable_min();
    let w_hi = sys.beam_radius(0.015).max(sys.beam_radius(0.060));
    let mut rng = RngStream::new(2024, 6).rng();
    let mut worst: f64 = 0.0;
    let mut closed_missing = 0;
    let mut closed_dev = Vec::new();
    for _ in 0..1000 {
        let target = rng.gen_range(w_lo..w_hi);
        let sol = solve_focal_length(&sys, target).unwrap();
        let back = propagate_q(&sys, sol.focal_length_f).beam_radius;
        worst = worst.max(((back - target) / target).abs());
        match sol.closed_form_discrepancy() {
            Some(d) => closed_dev.push(d.abs()),
            None => closed_missing += 1,
        }
    }
    let free = beam_radius_at_distance(2e-3, 1550e-9, 0.04);
    let reduction = ((propagate_q(&sys, f64::INFINITY).beam_radius - free) / free).abs();
    closed_dev.sort_by(f64::total_cmp);
    let median = closed_dev.get(closed_dev.len() / 2).copied().unwrap_or(f64::NAN);
    outcome(
        worst < 1e-9 && reduction < 1e-12,
        format!(
            "max round-trip residual {worst:.2e}, no-lens reduction {reduction:.2e}; \
             closed-form F* (reported only): undefined for {closed_missing}/1000, median relative deviation {median:.3e}"
        ),
    )
}

fn ac7_fixed_point_correctness() -> Outcome {
    let noise = defaults().noise();
    let tight = OptimizerSettings {
        epsilon_rel: 1e-11,
        max_inner: 500,
        ..Default::default()
    };
    // relative accuracy only: some optima sit at hop errors near 1e-30
    let precise = QuadratureSpec::new(1e-300, 1e-12, 2000);
    let mut rng = RngStream::new(2024, 7).rng();
    let (lo, hi, n) = (1e-9, 100e-9, 10_000);
    let step = (hi - lo) / (n - 1) as f64;
    let mut worst_res: f64 = 0.0;
    let mut worst_cells: f64 = 0.0;
    let mut failures = 0;
    let mut accepted = 0;
    while accepted < 25 {
        let s = HopSet {
            length: rng.gen_range(200e3..2000e3),
            sigma: rng.gen_range(80e-6..160e-6),
            beam: rng.gen_range(200.0..600.0),
            threshold: 5.0 * noise.background_sigma,
        };
        let i = s.inputs();
        let Ok(out) = threshold_optimize(&i, &tight, &precise) else {
            continue;
        };
        // keep sets whose optimum lies inside the grid
        if !(out.threshold > lo + step && out.threshold < hi - step) {
            continue;
        }
        accepted += 1;
        let res = stationarity_residual(&i, out.threshold, &precise).unwrap();
        let grid: Vec<f64> = (0..n)
            .map(|k| pe_ohl_hop(&i.with_threshold(lo + step * k as f64), &precise).unwrap())
            .collect();
        let best = lo + step * argmin(&grid) as f64;
        let cells = (out.threshold - best).abs() / step;
        worst_res = worst_res.max(res);
        worst_cells = worst_cells.max(cells);
        if !(out.converged && res < 1e-9 && cells <= 1.0) {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("25 sets, {failures} failing; max residual {worst_res:.2e}, max distance {worst_cells:.2} cells"),
    )
}

fn run_cli(args: &[&str], threads: usize) -> (i32, Vec<u8>) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ohlink"));
    cmd.args(args).arg("--threads").arg(threads.to_string());
    let out = cmd.output().expect("ohlink runs");
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn ac8_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = ExperimentConfig {
        grid_threshold_points: 32,
        beam_points: 32,
        mc_trials: 100_000,
        relays_max: 3,
        threshold_points: 24,
        ..defaults()
    };
    let cfg_path = d.join("small.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).unwrap();
    let c = cfg_path.to_str().unwrap();
    let path = |name: &str| d.join(name).to_str().unwrap().to_string();

    let (code, _) = run_cli(&["--config", c, "snapshot", "--index", "1", "--out", &path("snap.json"), "--route-out", &path("route.json")], 1);
    assert_eq!(code, 0);
    let snap_bytes = std::fs::read(path("snap.json")).unwrap();
    let route_bytes = std::fs::read(path("route.json")).unwrap();

    let commands: Vec<Vec<String>> = vec![
        vec!["sweep-threshold".into(), "--with-af".into()],
        vec!["sweep-relays".into(), "--with-af".into()],
        vec!["sweep-relays".into(), "--fixed-hop-m".into(), "1e6".into()],
        vec!["optimize-path".into(), "--snapshot".into(), path("snap.json"), "--route".into(), path("route.json")],
        vec!["snapshot-study".into(), "--count".into(), "1".into()],
        vec!["lens".into(), "--beam-radius-m".into(), "400".into()],
        vec!["validate".into()],
    ];
    let mut differing = Vec::new();
    for args in &commands {
        let mut full: Vec<&str> = vec!["--config", c, "--seed", "7"];
        full.extend(args.iter().map(String::as_str));
        let runs: Vec<(i32, Vec<u8>)> = [1, 1, 4].iter().map(|&t| run_cli(&full, t)).collect();
        if runs.iter().any(|r| r != &runs[0]) || runs[0].1.is_empty() {
            differing.push(args[0].clone());
        }
    }
    for t in [1, 4] {
        let (code, _) = run_cli(&["--config", c, "snapshot", "--index", "1", "--out", &path("snap2.json"), "--route-out", &path("route2.json")], t);
        assert_eq!(code, 0);
        if std::fs::read(path("snap2.json")).unwrap() != snap_bytes
            || std::fs::read(path("route2.json")).unwrap() != route_bytes
        {
            differing.push(format!("snapshot --threads {t}"));
        }
    }
    outcome(
        differing.is_empty(),
        format!("{} commands x 3 runs (1, 1, 4 threads) plus snapshot files; differing: {differing:?}", commands.len()),
    )
}

fn ac9_property_suites() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let mut worst_norm: f64 = 0.0;
    for (l, s, w) in [(200e3, 80e-6, 200.0), (1e6, 110e-6, 400.0), (2e6, 160e-6, 600.0), (1.5e6, 50e-6, 900.0)] {
        let fm = FadingModel::for_link(&geometry(l, s), w).unwrap();
        let total = integrate_power_singular(|h| fm.pdf(h), 0.0, fm.h_max, fm.gamma_shape, &QuadratureSpec::default()).unwrap();
        worst_norm = worst_norm.max((total - 1.0).abs());
    }
    pass &= worst_norm < 1e-9;
    notes.push(format!("pdf normalization {worst_norm:.1e}"));

    let mut worst_w: f64 = 0.0;
    let e_inv = (-1.0f64).exp();
    for k in 0..10_000 {
        let t = (k as f64 + 0.5) / 10_000.0;
        let x0 = -e_inv + (1e4 + e_inv) * t * t * t;
        let xm = -e_inv * (1.0 - t);
        for (x, b) in [(x0, LambertBranch::Principal), (xm, LambertBranch::MinusOne)] {
            let w = lambert_w(x, b).unwrap();
            worst_w = worst_w.max((w * w.exp() - x).abs() / x.abs().max(1e-300));
        }
    }
    pass &= worst_w < 1e-12;
    notes.push(format!("Lambert residual {worst_w:.1e}"));

    let mut worst_g: f64 = 0.0;
    for x in [0.1, 0.7, 2.0, 5.5, 13.0, 30.0] {
        let e1 = lower_incomplete_gamma(1.0, x).unwrap() - (-(-x).exp_m1());
        let erf = std::f64::consts::PI.sqrt() * (1.0 - 2.0 * q_exact((2.0 * x).sqrt()));
        let e2 = lower_incomplete_gamma(0.5, x).unwrap() / erf - 1.0;
        let mut e3: f64 = 0.0;
        for s in [0.3, 1.7, 4.2] {
            let lhs = lower_incomplete_gamma(s + 1.0, x).unwrap();
            let rhs = s * lower_incomplete_gamma(s, x).unwrap() - x.powf(s) * (-x).exp();
            e3 = e3.max(((lhs - rhs) / lhs).abs());
        }
        worst_g = worst_g.max(e1.abs()).max(e2.abs()).max(e3);
    }
    pass &= worst_g < 1e-12;
    notes.push(format!("incomplete gamma identities {worst_g:.1e}"));

    let (cases, mismatches) = dijkstra_vs_brute_force(200);
    pass &= mismatches == 0;
    notes.push(format!("Dijkstra vs enumeration {mismatches}/{cases} mismatches"));

    let mut worst_ks: f64 = 0.0;
    for (k, (l, s, w)) in [(1e6, 110e-6, 400.0), (1.8e6, 50e-6, 700.0), (600e3, 150e-6, 250.0)].into_iter().enumerate() {
        let g = geometry(l, s);
        let fm = FadingModel::for_link(&g, w).unwrap();
        let mut rng = RngStream::new(2024, 9).substream(k as u64).rng();
        let samples: Vec<f64> = (0..100_000).map(|_| channel_gain_farfield(&fm, &g, w, &sample_pointing(&g, &mut rng))).collect();
        worst_ks = worst_ks.max(ks_statistic(samples, |h| fm.cdf(h)));
    }
    pass &= worst_ks < 0.005;
    notes.push(format!("K-S {worst_ks:.4}"));

    outcome(pass, notes.join("; "))
}

/// Compares the router with exhaustive simple-path enumeration on `cases`
/// random subgraphs of at most 12 satellites.
fn dijkstra_vs_brute_force(cases: usize) -> (usize, usize) {
    fn enumerate(at: usize, dst: usize, cost: f64, seen: &mut Vec<usize>, edges: &[(usize, usize, f64)], best: &mut Option<f64>) {
        if at == dst {
            *best = Some(best.map_or(cost, |b: f64| b.min(cost)));
            return;
        }
        for &(a, b, w) in edges {
            let next = if a == at { b } else if b == at { a } else { continue };
            if !seen.contains(&next) {
                seen.push(next);
                enumerate(next, dst, cost + w, seen, edges, best);
                seen.pop();
            }
        }
    }
    let limits = LinkLimits::default();
    let snap = generate_snapshot(&ConstellationConfig::default(), &RngStream::new(2024, 10)).unwrap();
    let links = feasible_links(&snap, &limits);
    let mut rng = RngStream::new(2024, 11).rng();
    let mut mismatches = 0;
    for _ in 0..cases {
        let center = snap.satellites[rng.gen_range(0..snap.satellites.len())].position_m;
        let n = rng.gen_range(3..=12);
        let mut ids: Vec<usize> = (0..snap.satellites.len()).collect();
        let d = |id: usize| {
            let p = snap.satellites[id].position_m;
            (0..3).map(|k| (p[k] - center[k]).powi(2)).sum::<f64>()
        };
        ids.sort_by(|&a, &b| d(a).total_cmp(&d(b)));
        ids.truncate(n);
        let (src, dst) = (ids[rng.gen_range(0..n)], ids[rng.gen_range(0..n)]);
        let edges: Vec<(usize, usize, f64)> = links
            .iter()
            .filter(|l: &&LinkCandidate| ids.contains(&l.from_id) && ids.contains(&l.to_id))
            .map(|l| (l.from_id, l.to_id, l.length_m))
            .collect();
        let mut best = None;
        enumerate(src, dst, 0.0, &mut vec![src], &edges, &mut best);
        let got = match route(&snap, &ids, &links, src, dst, RouteObjective::MinTotalLength) {
            Ok(p) => Some(p.links.iter().fold(0.0, |c, l| c + l.length_m)),
            Err(ConstellationError::NoRoute { .. }) => None,
            Err(e) => panic!("{e}"),
        };
        if got != best {
            mismatches += 1;
        }
    }
    (cases, mismatches)
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("ac1", "oracle equivalence (hop level)", ac1_oracle_equivalence),
        ("ac2", "closed-form fidelity", ac2_closed_form_fidelity),
        ("ac3", "optimizer optimality", ac3_optimizer_optimality),
        ("ac4", "trend reproduction", ac4_trend_reproduction),
        ("ac5", "end-to-end magnitude", ac5_end_to_end_magnitude),
        ("ac6", "lens self-consistency", ac6_lens_self_consistency),
        ("ac7", "fixed-point correctness", ac7_fixed_point_correctness),
        ("ac8", "determinism", ac8_determinism),
        ("ac9", "property suites", ac9_property_suites),
    ];
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .map(|a| a.to_lowercase())
        .collect();
    let _ = Path::new(env!("CARGO_BIN_EXE_ohlink"));
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|p| id.contains(p.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "{} {} {}: {} [{:.1} s]",
            if result.pass { "PASS" } else { "FAIL" },
            id.to_uppercase(),
            name,
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
