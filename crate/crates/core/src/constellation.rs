//! Walker-style LEO constellation snapshots, link feasibility and
//! shortest-path relay selection.
//!
//! Satellite ids are `plane_index * sats_per_plane + slot_index`. Positions
//! are Earth-centered inertial at the snapshot epoch; ground points are
//! taken in the same frame.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::LinkClass;
use crate::numerics::RngStream;

#[derive(Debug, Error)]
pub enum ConstellationError {
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("no satellite within {half_angle_deg} deg of the corridor; try a wider half-angle")]
    CorridorTooNarrow { half_angle_deg: f64 },
    #[error("satellite {0} is not in the snapshot or candidate set")]
    UnknownSatellite(usize),
    #[error("no route from {src} to {dst}; {} satellites reachable: {reachable:?}", reachable.len())]
    NoRoute {
        src: usize,
        dst: usize,
        reachable: Vec<usize>,
    },
    #[error("route integrity: {0}")]
    Integrity(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, ConstellationError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstellationConfig {
    pub num_planes: usize,
    pub sats_per_plane: usize,
    pub altitude_m: f64,
    pub inclination_deg: f64,
    /// Half-width of the uniform in-plane slot offset.
    pub perturbation_max_deg: f64,
    pub earth_radius_m: f64,
    pub seed: u64,
}

impl Default for ConstellationConfig {
    fn default() -> Self {
        Self {
            num_planes: 20,
            sats_per_plane: 25,
            altitude_m: 600e3,
            inclination_deg: 53.0,
            perturbation_max_deg: 1.0,
            earth_radius_m: 6371e3,
            seed: 1,
        }
    }
}

impl ConstellationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_planes == 0 {
            return Err(ConstellationError::InvalidParameter {
                name: "num_planes",
                value: 0.0,
            });
        }
        if self.sats_per_plane == 0 {
            return Err(ConstellationError::InvalidParameter {
                name: "sats_per_plane",
                value: 0.0,
            });
        }
        if !(self.inclination_deg > 0.0 && self.inclination_deg <= 90.0) {
            return Err(ConstellationError::InvalidParameter {
                name: "inclination_deg",
                value: self.inclination_deg,
            });
        }
        if !(self.altitude_m > 0.0 && self.altitude_m.is_finite()) {
            return Err(ConstellationError::InvalidParameter {
                name: "altitude_m",
                value: self.altitude_m,
            });
        }
        if !(self.earth_radius_m > 0.0) {
            return Err(ConstellationError::InvalidParameter {
                name: "earth_radius_m",
                value: self.earth_radius_m,
            });
        }
        if !(self.perturbation_max_deg >= 0.0) {
            return Err(ConstellationError::InvalidParameter {
                name: "perturbation_max_deg",
                value: self.perturbation_max_deg,
            });
        }
        Ok(())
    }

    pub fn orbit_radius(&self) -> f64 {
        self.earth_radius_m + self.altitude_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Satellite {
    pub id: usize,
    pub plane_index: usize,
    pub slot_index: usize,
    pub position_m: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstellationSnapshot {
    pub epoch_tag: String,
    pub earth_radius_m: f64,
    pub satellites: Vec<Satellite>,
}

impl ConstellationSnapshot {
    pub fn get(&self, id: usize) -> Result<&Satellite> {
        self.satellites
            .get(id)
            .filter(|s| s.id == id)
            .ok_or(ConstellationError::UnknownSatellite(id))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let snap: Self = serde_json::from_str(text).map_err(|e| ConstellationError::Io {
            path: "<snapshot>".into(),
            message: e.to_string(),
        })?;
        if snap.satellites.iter().enumerate().any(|(k, s)| s.id != k) {
            return Err(ConstellationError::Integrity(
                "satellite ids must equal their list index".into(),
            ));
        }
        Ok(snap)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read(path)?).map_err(|e| relabel(e, path))
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| ConstellationError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn relabel(e: ConstellationError, path: &Path) -> ConstellationError {
    match e {
        ConstellationError::Io { message, .. } => ConstellationError::Io {
            path: path.display().to_string(),
            message,
        },
        other => other,
    }
}

/// Builds a snapshot: RAAN spaced `360/P` deg, slots spaced `360/S` deg in
/// argument of latitude, each slot offset by a uniform draw in
/// `[-perturbation_max, perturbation_max]`.
pub fn generate_snapshot(cfg: &ConstellationConfig, stream: &RngStream) -> Result<ConstellationSnapshot> {
    cfg.validate()?;
    let mut rng = stream.rng();
    let r = cfg.orbit_radius();
    let inc = cfg.inclination_deg.to_radians();
    let (si, ci) = inc.sin_cos();
    let mut satellites = Vec::with_capacity(cfg.num_planes * cfg.sats_per_plane);
    for p in 0..cfg.num_planes {
        let raan = (360.0 / cfg.num_planes as f64 * p as f64).to_radians();
        let (so, co) = raan.sin_cos();
        for s in 0..cfg.sats_per_plane {
            let offset = if cfg.perturbation_max_deg > 0.0 {
                rng.gen_range(-cfg.perturbation_max_deg..=cfg.perturbation_max_deg)
            } else {
                0.0
            };
            let u = (360.0 / cfg.sats_per_plane as f64 * s as f64 + offset).to_radians();
            let (su, cu) = u.sin_cos();
            satellites.push(Satellite {
                id: satellites.len(),
                plane_index: p,
                slot_index: s,
                position_m: [
                    r * (co * cu - so * su * ci),
                    r * (so * cu + co * su * ci),
                    r * su * si,
                ],
            });
        }
    }
    Ok(ConstellationSnapshot {
        epoch_tag: format!("seed{}-stream{}", stream.seed, stream.stream_id),
        earth_radius_m: cfg.earth_radius_m,
        satellites,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkLimits {
    pub max_inter_orbit_m: f64,
    pub max_intra_orbit_m: f64,
    pub min_altitude_clearance_m: f64,
    pub sigma_theta_intra_rad: f64,
    pub sigma_theta_inter_rad: f64,
}

impl Default for LinkLimits {
    fn default() -> Self {
        Self {
            max_inter_orbit_m: 1e6,
            max_intra_orbit_m: 2e6,
            min_altitude_clearance_m: 100e3,
            sigma_theta_intra_rad: 50e-6,
            sigma_theta_inter_rad: 150e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkCandidate {
    pub from_id: usize,
    pub to_id: usize,
    pub length_m: f64,
    pub link_class: LinkClass,
    pub sigma_theta_rad: f64,
}

impl LinkCandidate {
    pub fn reversed(&self) -> Self {
        Self {
            from_id: self.to_id,
            to_id: self.from_id,
            ..*self
        }
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn unit(a: [f64; 3]) -> [f64; 3] {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    // atan2 form stays accurate for nearly parallel vectors
    norm(cross(a, b)).atan2(dot(a, b))
}

/// Distance from Earth's center to the closest point of segment `a`-`b`.
pub fn segment_closest_approach(a: [f64; 3], b: [f64; 3]) -> f64 {
    let v = sub(b, a);
    let vv = dot(v, v);
    if vv == 0.0 {
        return norm(a);
    }
    let t = (-dot(a, v) / vv).clamp(0.0, 1.0);
    norm([a[0] + t * v[0], a[1] + t * v[1], a[2] + t * v[2]])
}

pub fn classify(a: &Satellite, b: &Satellite) -> LinkClass {
    if a.plane_index == b.plane_index {
        LinkClass::IntraOrbit
    } else {
        LinkClass::InterOrbit
    }
}

/// All satellite pairs within their class length limit and with clear line
/// of sight, as `from_id < to_id` candidates in lexicographic order.
pub fn feasible_links(snap: &ConstellationSnapshot, limits: &LinkLimits) -> Vec<LinkCandidate> {
    let sats = &snap.satellites;
    let clearance = snap.earth_radius_m + limits.min_altitude_clearance_m;
    (0..sats.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = sats[i];
            sats[i + 1..].iter().filter_map(move |b| {
                let class = classify(&a, b);
                let length = norm(sub(b.position_m, a.position_m));
                let (limit, sigma) = match class {
                    LinkClass::IntraOrbit => (limits.max_intra_orbit_m, limits.sigma_theta_intra_rad),
                    LinkClass::InterOrbit => (limits.max_inter_orbit_m, limits.sigma_theta_inter_rad),
                };
                if !(length > 0.0 && length <= limit) {
                    return None;
                }
                if segment_closest_approach(a.position_m, b.position_m) <= clearance {
                    return None;
                }
                Some(LinkCandidate {
                    from_id: a.id,
                    to_id: b.id,
                    length_m: length,
                    link_class: class,
                    sigma_theta_rad: sigma,
                })
            })
        })
        .collect()
}

/// Angular distance from direction `p` to the minor great-circle arc `a`-`b`.
fn angle_to_arc(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let n = cross(a, b);
    let to_ends = angle_between(p, a).min(angle_between(p, b));
    if norm(n) < 1e-12 * norm(a) * norm(b) {
        return to_ends;
    }
    let n = unit(n);
    let off_plane = dot(unit(p), n);
    let proj = [p[0] - off_plane * norm(p) * n[0], p[1] - off_plane * norm(p) * n[1], p[2] - off_plane * norm(p) * n[2]];
    let arc = angle_between(a, b);
    let inside = angle_between(a, proj) <= arc && angle_between(proj, b) <= arc;
    if inside {
        off_plane.abs().clamp(0.0, 1.0).asin()
    } else {
        to_ends
    }
}

/// Satellites whose direction lies within `half_angle_deg` of the great-circle
/// arc from `source_pos` to `dest_pos`. Returned ids are sorted.
pub fn filter_candidates(
    snap: &ConstellationSnapshot,
    source_pos: [f64; 3],
    dest_pos: [f64; 3],
    half_angle_deg: f64,
) -> Result<Vec<usize>> {
    if !(half_angle_deg >= 0.0) {
        return Err(ConstellationError::InvalidParameter {
            name: "corridor half-angle",
            value: half_angle_deg,
        });
    }
    let limit = half_angle_deg.to_radians();
    let ids: Vec<usize> = snap
        .satellites
        .iter()
        .filter(|s| half_angle_deg >= 180.0 || angle_to_arc(s.position_m, source_pos, dest_pos) <= limit)
        .map(|s| s.id)
        .collect();
    if ids.is_empty() {
        return Err(ConstellationError::CorridorTooNarrow { half_angle_deg });
    }
    Ok(ids)
}

/// Ground point on a spherical Earth from geodetic latitude and longitude.
pub fn ground_point(lat_deg: f64, lon_deg: f64, earth_radius_m: f64) -> [f64; 3] {
    let (sla, cla) = lat_deg.to_radians().sin_cos();
    let (slo, clo) = lon_deg.to_radians().sin_cos();
    [earth_radius_m * cla * clo, earth_radius_m * cla * slo, earth_radius_m * sla]
}

/// Ground point `distance_m` along the surface from (`lat_deg`, `lon_deg`)
/// on initial bearing `bearing_deg` (clockwise from north).
pub fn ground_destination(
    lat_deg: f64,
    lon_deg: f64,
    bearing_deg: f64,
    distance_m: f64,
    earth_radius_m: f64,
) -> [f64; 3] {
    let (la, b, s) = (lat_deg.to_radians(), bearing_deg.to_radians(), distance_m / earth_radius_m);
    let la2 = (la.sin() * s.cos() + la.cos() * s.sin() * b.cos()).asin();
    let dlon = (b.sin() * s.sin() * la.cos()).atan2(s.cos() - la.sin() * la2.sin());
    ground_point(la2.to_degrees(), lon_deg + dlon.to_degrees(), earth_radius_m)
}

/// Source at (0, 0) and destination `separation_m` away on `bearing_deg`.
pub fn ground_pair(separation_m: f64, bearing_deg: f64, earth_radius_m: f64) -> ([f64; 3], [f64; 3]) {
    (
        ground_point(0.0, 0.0, earth_radius_m),
        ground_destination(0.0, 0.0, bearing_deg, separation_m, earth_radius_m),
    )
}

/// Closest satellite to a ground point and its distance. Ties go to the
/// lowest id.
pub fn nearest_satellite(snap: &ConstellationSnapshot, point_m: [f64; 3]) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for s in &snap.satellites {
        let d = norm(sub(s.position_m, point_m));
        if d < best.1 {
            best = (s.id, d);
        }
    }
    best
}

#[derive(Clone, Copy)]
pub enum RouteObjective<'a> {
    MinTotalLength,
    /// Edge weight `-ln(1 - pe)` with `pe` supplied per link.
    MinE2ePe(&'a (dyn Fn(&LinkCandidate) -> f64 + Sync)),
}

impl RouteObjective<'_> {
    fn weight(&self, link: &LinkCandidate) -> f64 {
        match self {
            RouteObjective::MinTotalLength => link.length_m,
            RouteObjective::MinE2ePe(pe) => -(-pe(link)).ln_1p(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePath {
    pub node_sequence: Vec<usize>,
    pub links: Vec<LinkCandidate>,
    pub total_length_m: f64,
    /// Number of relay links on the path.
    pub relay_count: usize,
}

impl RoutePath {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("route serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&read(path)?).map_err(|e| ConstellationError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over the feasible links whose endpoints are both in `candidates`.
pub fn route(
    snap: &ConstellationSnapshot,
    candidates: &[usize],
    links: &[LinkCandidate],
    src: usize,
    dst: usize,
    objective: RouteObjective<'_>,
) -> Result<RoutePath> {
    let allowed: HashSet<usize> = candidates.iter().copied().collect();
    for id in [src, dst] {
        snap.get(id)?;
        if !allowed.contains(&id) {
            return Err(ConstellationError::UnknownSatellite(id));
        }
    }
    let mut adj: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for (k, l) in links.iter().enumerate() {
        if allowed.contains(&l.from_id) && allowed.contains(&l.to_id) {
            adj.entry(l.from_id).or_default().push((l.to_id, k));
            adj.entry(l.to_id).or_default().push((l.from_id, k));
        }
    }
    let mut dist: HashMap<usize, f64> = HashMap::from([(src, 0.0)]);
    let mut prev: HashMap<usize, (usize, usize)> = HashMap::new();
    let mut heap = BinaryHeap::from([HeapEntry { cost: 0.0, node: src }]);
    while let Some(HeapEntry { cost, node }) = heap.pop() {
        if node == dst {
            break;
        }
        if cost > dist[&node] {
            continue;
        }
        for &(next, k) in adj.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
            let c = cost + objective.weight(&links[k]);
            if dist.get(&next).map_or(true, |&d| c < d) {
                dist.insert(next, c);
                prev.insert(next, (node, k));
                heap.push(HeapEntry { cost: c, node: next });
            }
        }
    }
    if !dist.contains_key(&dst) {
        let mut reachable: Vec<usize> = dist.keys().copied().collect();
        reachable.sort_unstable();
        return Err(ConstellationError::NoRoute { src, dst, reachable });
    }
    let mut nodes = vec![dst];
    let mut hops = Vec::new();
    while let Some(&(p, k)) = prev.get(nodes.last().unwrap()) {
        let l = links[k];
        hops.push(if l.to_id == *nodes.last().unwrap() { l } else { l.reversed() });
        nodes.push(p);
        if p == src {
            break;
        }
    }
    if src == dst {
        nodes = vec![src];
        hops.clear();
    }
    nodes.reverse();
    hops.reverse();
    let total = hops.iter().map(|l| l.length_m).sum();
    Ok(RoutePath {
        node_sequence: nodes,
        relay_count: hops.len(),
        links: hops,
        total_length_m: total,
    })
}

/// Re-derives every link of `path` from the snapshot positions and checks
/// it against the limits. Independent of how the route was built.
pub fn validate_route(snap: &ConstellationSnapshot, path: &RoutePath, limits: &LinkLimits) -> Result<()> {
    let fail = |m: String| Err(ConstellationError::Integrity(m));
    if path.links.len() + 1 != path.node_sequence.len() {
        return fail(format!(
            "{} links for {} nodes",
            path.links.len(),
            path.node_sequence.len()
        ));
    }
    if path.relay_count != path.links.len() {
        return fail(format!("relay_count {} for {} links", path.relay_count, path.links.len()));
    }
    let mut total = 0.0;
    for (k, l) in path.links.iter().enumerate() {
        let (a, b) = (path.node_sequence[k], path.node_sequence[k + 1]);
        if (l.from_id, l.to_id) != (a, b) {
            return fail(format!("link {k} joins {}-{}, expected {a}-{b}", l.from_id, l.to_id));
        }
        let (sa, sb) = (snap.get(a)?, snap.get(b)?);
        let length = norm(sub(sa.position_m, sb.position_m));
        if (length - l.length_m).abs() > 1e-6 * length.max(1.0) {
            return fail(format!("link {k} length {} m, positions give {length} m", l.length_m));
        }
        let in_plane = sa.plane_index == sb.plane_index;
        if in_plane != (l.link_class == LinkClass::IntraOrbit) {
            return fail(format!("link {k} class {}", l.link_class.as_str()));
        }
        let limit = if in_plane { limits.max_intra_orbit_m } else { limits.max_inter_orbit_m };
        if length > limit {
            return fail(format!("link {k} length {length} m exceeds {limit} m"));
        }
        if segment_closest_approach(sa.position_m, sb.position_m)
            <= snap.earth_radius_m + limits.min_altitude_clearance_m
        {
            return fail(format!("link {k} passes too close to Earth"));
        }
        total += length;
    }
    if (total - path.total_length_m).abs() > 1e-6 * total.max(1.0) {
        return fail(format!("total length {} m, links sum to {total} m", path.total_length_m));
    }
    Ok(())
}
