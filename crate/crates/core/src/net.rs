//! Network instances: station placement, the communication graph, the two
//! random generators (uniform and preferential/social), eccentricity,
//! granularity, and versioned JSON persistence.
//!
//! The communication graph has an edge between two stations exactly when
//! their distance is at most `(1 - eps) * r = 1 - eps`; generated instances
//! are regenerated until this graph is connected.

use std::collections::VecDeque;
use std::fs;
use std::io;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sinr::{Point, SinrParams, SinrError, Station};

pub const NETWORK_FORMAT_VERSION: u32 = 1;
/// Generated stations are resampled until no pair is closer than this, so
/// granularity stays finite and the reception formula never sees distance 0.
pub const MIN_SEPARATION: f64 = 1e-9;
/// Absolute tolerance on the edge-rule comparison `dist <= 1 - eps`.
pub const EDGE_TOLERANCE: f64 = 1e-12;
/// Default number of whole-instance regenerations before giving up on
/// connectivity.
pub const DEFAULT_GEN_ATTEMPTS: u32 = 1000;

#[derive(Error, Debug)]
pub enum NetError {
    #[error(transparent)]
    Sinr(#[from] SinrError),
    #[error("need at least {1} stations, got {0}")]
    TooFewStations(usize, usize),
    #[error("side must be positive, got {0}")]
    NonPositiveSide(f64),
    #[error("duplicate station id {0}")]
    DuplicateId(u64),
    #[error("station ids must be positive")]
    ZeroId,
    #[error("source id {0} not present in the network")]
    UnknownSource(u64),
    #[error("stations {0} and {1} occupy the same position")]
    CoincidentStations(u64, u64),
    #[error("communication graph is disconnected ({0} of {1} reachable)")]
    Disconnected(usize, usize),
    #[error("no connected instance in {attempts} attempts (100% rejected)")]
    ConnectivityBudgetExhausted { attempts: u32 },
    #[error("preferential placement probability must lie in [0, 1], got {0}")]
    BadPreferentialProbability(f64),
    #[error("unsupported network file version {0} (expected {NETWORK_FORMAT_VERSION})")]
    VersionMismatch(u32),
    #[error("malformed network file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A connected deployment with its derived communication graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    stations: Vec<Station>,
    params: SinrParams,
    side: f64,
    source: usize,
    adj: Vec<Vec<u32>>,
}

/// Derived instance statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkStats {
    pub n: usize,
    /// Maximum hop distance from the source.
    pub eccentricity: u32,
    /// Range over the minimum pairwise distance.
    pub granularity: f64,
}

/// Generation bookkeeping from the detailed generator entry points.
#[derive(Clone, Copy, Debug, Default)]
pub struct GenStats {
    /// Whole instances drawn until one was connected.
    pub attempts: u32,
    /// Nodes placed through the weighted-box mode (social generator only).
    pub preferential_placements: u32,
}

impl Network {
    /// Build a network from explicit stations. Ids must be unique and
    /// positive, positions pairwise distinct. Connectivity is not enforced
    /// here; operations that need it fail on disconnected instances.
    pub fn from_stations(
        stations: Vec<Station>,
        params: SinrParams,
        side: f64,
        source_id: u64,
    ) -> Result<Self, NetError> {
        params.validate()?;
        if !(side > 0.0) {
            return Err(NetError::NonPositiveSide(side));
        }
        if stations.is_empty() {
            return Err(NetError::TooFewStations(0, 1));
        }
        let mut ids: Vec<u64> = Vec::with_capacity(stations.len());
        for s in &stations {
            if s.id == 0 {
                return Err(NetError::ZeroId);
            }
            ids.push(s.id);
        }
        ids.sort_unstable();
        for w in ids.windows(2) {
            if w[0] == w[1] {
                return Err(NetError::DuplicateId(w[0]));
            }
        }
        let source = stations
            .iter()
            .position(|s| s.id == source_id)
            .ok_or(NetError::UnknownSource(source_id))?;
        let adj = build_adjacency(&stations, &params)?;
        Ok(Network {
            stations,
            params,
            side,
            source,
            adj,
        })
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn params(&self) -> &SinrParams {
        &self.params
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// Index of the source station.
    pub fn source(&self) -> usize {
        self.source
    }

    pub fn source_id(&self) -> u64 {
        self.stations[self.source].id
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    /// Neighbor indices of station `i` in the communication graph.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adj[i]
    }

    /// Hop distances from `from`, `None` for unreachable stations.
    pub fn bfs_distances(&self, from: usize) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.stations.len()];
        dist[from] = Some(0);
        let mut queue = VecDeque::new();
        queue.push_back(from);
        while let Some(v) = queue.pop_front() {
            let dv = dist[v].expect("queued nodes have distances");
            for &w in &self.adj[v] {
                let w = w as usize;
                if dist[w].is_none() {
                    dist[w] = Some(dv + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.bfs_distances(self.source).iter().all(Option::is_some)
    }

    /// Maximum hop distance from the source; errors when disconnected.
    pub fn eccentricity(&self) -> Result<u32, NetError> {
        let dist = self.bfs_distances(self.source);
        let mut max = 0;
        let mut reachable = 0;
        for d in dist.iter().flatten() {
            reachable += 1;
            max = max.max(*d);
        }
        if reachable < self.stations.len() {
            return Err(NetError::Disconnected(reachable, self.stations.len()));
        }
        Ok(max)
    }

    /// Range over the minimum pairwise station distance.
    pub fn granularity(&self) -> Result<f64, NetError> {
        if self.stations.len() < 2 {
            return Err(NetError::TooFewStations(self.stations.len(), 2));
        }
        let mut min_sq = f64::INFINITY;
        for i in 0..self.stations.len() {
            for j in (i + 1)..self.stations.len() {
                min_sq = min_sq.min(self.stations[i].pos.dist_sq(&self.stations[j].pos));
            }
        }
        Ok(self.params.range() / min_sq.sqrt())
    }

    pub fn stats(&self) -> Result<NetworkStats, NetError> {
        Ok(NetworkStats {
            n: self.stations.len(),
            eccentricity: self.eccentricity()?,
            granularity: self.granularity()?,
        })
    }

    /// Replace ids 1..n with distinct ids drawn from `[1, n^3]`, keeping the
    /// source station marked. Off the default generation path.
    pub fn randomize_ids(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.stations.len() as u64;
        let hi = n.saturating_mul(n).saturating_mul(n).max(1);
        let mut used = std::collections::HashSet::new();
        for s in &mut self.stations {
            loop {
                let id = rng.random_range(1..=hi);
                if used.insert(id) {
                    s.id = id;
                    break;
                }
            }
        }
    }

    pub fn to_json_string(&self) -> String {
        let doc = NetworkDoc {
            version: NETWORK_FORMAT_VERSION,
            sinr_params: SinrDoc {
                alpha: self.params.alpha,
                beta: self.params.beta,
                noise: self.params.noise,
                eps: self.params.eps,
            },
            side: self.side,
            source_id: self.source_id(),
            stations: self
                .stations
                .iter()
                .map(|s| StationDoc {
                    id: s.id,
                    x: s.pos.x,
                    y: s.pos.y,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("network document serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self, NetError> {
        let doc: NetworkDoc =
            serde_json::from_str(text).map_err(|e| NetError::Malformed(e.to_string()))?;
        if doc.version != NETWORK_FORMAT_VERSION {
            return Err(NetError::VersionMismatch(doc.version));
        }
        let params = SinrParams::new(
            doc.sinr_params.alpha,
            doc.sinr_params.beta,
            doc.sinr_params.noise,
            doc.sinr_params.eps,
        )?;
        let stations = doc
            .stations
            .iter()
            .map(|s| Station::new(s.id, s.x, s.y))
            .collect();
        Network::from_stations(stations, params, doc.side, doc.source_id)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetError> {
        fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetError> {
        let text = fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    version: u32,
    sinr_params: SinrDoc,
    side: f64,
    source_id: u64,
    stations: Vec<StationDoc>,
}

#[derive(Serialize, Deserialize)]
struct SinrDoc {
    alpha: f64,
    beta: f64,
    noise: f64,
    eps: f64,
}

#[derive(Serialize, Deserialize)]
struct StationDoc {
    id: u64,
    x: f64,
    y: f64,
}

fn build_adjacency(stations: &[Station], params: &SinrParams) -> Result<Vec<Vec<u32>>, NetError> {
    let radius = params.comm_radius() + EDGE_TOLERANCE;
    let r_sq = radius * radius;
    let mut adj = vec![Vec::new(); stations.len()];
    for i in 0..stations.len() {
        for j in (i + 1)..stations.len() {
            let d_sq = stations[i].pos.dist_sq(&stations[j].pos);
            if d_sq == 0.0 {
                return Err(NetError::CoincidentStations(
                    stations[i].id,
                    stations[j].id,
                ));
            }
            if d_sq <= r_sq {
                adj[i].push(j as u32);
                adj[j].push(i as u32);
            }
        }
    }
    Ok(adj)
}

fn source_nearest_center(stations: &[Station], side: f64) -> u64 {
    let center = Point::new(side / 2.0, side / 2.0);
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, s) in stations.iter().enumerate() {
        let d = s.pos.dist_sq(&center);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    stations[best].id
}

fn too_close(pos: Point, placed: &[Point]) -> bool {
    placed
        .iter()
        .any(|p| p.dist(&pos) < MIN_SEPARATION)
}

/// Uniform generator: `n` i.i.d. positions on `[0, side]^2`, regenerated
/// whole until the communication graph is connected. Ids are `1..=n` in
/// placement order; the source is the station nearest the square center.
pub fn gen_uniform(
    n: usize,
    side: f64,
    params: &SinrParams,
    seed: u64,
) -> Result<Network, NetError> {
    gen_uniform_detailed(n, side, params, seed).map(|(net, _)| net)
}

pub fn gen_uniform_detailed(
    n: usize,
    side: f64,
    params: &SinrParams,
    seed: u64,
) -> Result<(Network, GenStats), NetError> {
    gen_with(n, side, params, seed, None, DEFAULT_GEN_ATTEMPTS)
}

/// Uniform generator with an explicit connectivity retry budget. Sparse
/// settings (such as 50 stations on a 6x6 square) reject almost every draw
/// and need far more than the default 1000 attempts.
pub fn gen_uniform_budget(
    n: usize,
    side: f64,
    params: &SinrParams,
    seed: u64,
    max_attempts: u32,
) -> Result<(Network, GenStats), NetError> {
    gen_with(n, side, params, seed, None, max_attempts)
}

/// Preferential ("social") generator. The square is covered by an
/// `eps x eps` box grid; each box is weighted by the number of existing
/// stations within distance 2 of the box. Each new node goes into a
/// weight-proportional box with probability `p_pref`, otherwise uniformly
/// onto the square; the first node always falls back to the uniform mode
/// because all weights are zero.
pub fn gen_social(
    n: usize,
    side: f64,
    params: &SinrParams,
    p_pref: f64,
    seed: u64,
) -> Result<Network, NetError> {
    gen_social_detailed(n, side, params, p_pref, seed).map(|(net, _)| net)
}

pub fn gen_social_detailed(
    n: usize,
    side: f64,
    params: &SinrParams,
    p_pref: f64,
    seed: u64,
) -> Result<(Network, GenStats), NetError> {
    gen_social_budget(n, side, params, p_pref, seed, DEFAULT_GEN_ATTEMPTS)
}

/// Social generator with an explicit connectivity retry budget.
pub fn gen_social_budget(
    n: usize,
    side: f64,
    params: &SinrParams,
    p_pref: f64,
    seed: u64,
    max_attempts: u32,
) -> Result<(Network, GenStats), NetError> {
    if !(0.0..=1.0).contains(&p_pref) {
        return Err(NetError::BadPreferentialProbability(p_pref));
    }
    gen_with(n, side, params, seed, Some(p_pref), max_attempts)
}

fn gen_with(
    n: usize,
    side: f64,
    params: &SinrParams,
    seed: u64,
    social_p: Option<f64>,
    max_attempts: u32,
) -> Result<(Network, GenStats), NetError> {
    params.validate()?;
    if n < 2 {
        return Err(NetError::TooFewStations(n, 2));
    }
    if !(side > 0.0) {
        return Err(NetError::NonPositiveSide(side));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = GenStats::default();
    for attempt in 1..=max_attempts.max(1) {
        stats.attempts = attempt;
        let mut pref_count = 0;
        let positions = match social_p {
            None => draw_uniform(n, side, &mut rng),
            Some(p) => draw_social(n, side, params.eps, p, &mut rng, &mut pref_count),
        };
        let stations: Vec<Station> = positions
            .iter()
            .enumerate()
            .map(|(i, p)| Station {
                id: i as u64 + 1,
                pos: *p,
            })
            .collect();
        let source_id = source_nearest_center(&stations, side);
        let net = Network::from_stations(stations, *params, side, source_id)?;
        if net.is_connected() {
            stats.preferential_placements = pref_count;
            return Ok((net, stats));
        }
    }
    Err(NetError::ConnectivityBudgetExhausted {
        attempts: max_attempts.max(1),
    })
}

fn draw_uniform(n: usize, side: f64, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(n);
    while out.len() < n {
        let p = Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side);
        if !too_close(p, &out) {
            out.push(p);
        }
    }
    out
}

struct SocialGrid {
    cols: usize,
    rows: usize,
    cell: f64,
    side: f64,
    weights: Vec<u64>,
}

impl SocialGrid {
    fn new(side: f64, eps: f64) -> Self {
        let cols = (side / eps).ceil().max(1.0) as usize;
        SocialGrid {
            cols,
            rows: cols,
            cell: eps,
            side,
            weights: vec![0; cols * cols],
        }
    }

    fn rect(&self, idx: usize) -> (f64, f64, f64, f64) {
        let i = idx % self.cols;
        let j = idx / self.cols;
        let x0 = i as f64 * self.cell;
        let y0 = j as f64 * self.cell;
        (
            x0,
            y0,
            (x0 + self.cell).min(self.side),
            (y0 + self.cell).min(self.side),
        )
    }

    fn rect_dist(&self, idx: usize, p: Point) -> f64 {
        let (x0, y0, x1, y1) = self.rect(idx);
        let dx = (x0 - p.x).max(0.0).max(p.x - x1);
        let dy = (y0 - p.y).max(0.0).max(p.y - y1);
        (dx * dx + dy * dy).sqrt()
    }

    /// Bump the weight of every box within distance 2 of the new station.
    fn add_station(&mut self, p: Point) {
        for idx in 0..self.weights.len() {
            if self.rect_dist(idx, p) <= 2.0 {
                self.weights[idx] += 1;
            }
        }
    }

    fn total_weight(&self) -> u64 {
        self.weights.iter().sum()
    }

    fn pick_box(&self, rng: &mut ChaCha8Rng, total: u64) -> usize {
        let mut x = rng.random_range(0..total);
        for (idx, &w) in self.weights.iter().enumerate() {
            if x < w {
                return idx;
            }
            x -= w;
        }
        unreachable!("total weight covers all boxes")
    }
}

fn draw_social(
    n: usize,
    side: f64,
    eps: f64,
    p_pref: f64,
    rng: &mut ChaCha8Rng,
    pref_count: &mut u32,
) -> Vec<Point> {
    let mut grid = SocialGrid::new(side, eps);
    let _ = grid.rows;
    let mut out: Vec<Point> = Vec::with_capacity(n);
    while out.len() < n {
        let total = grid.total_weight();
        let preferential = total > 0 && rng.random::<f64>() < p_pref;
        let p = if preferential {
            let idx = grid.pick_box(rng, total);
            let (x0, y0, x1, y1) = grid.rect(idx);
            loop {
                let cand = Point::new(rng.random_range(x0..x1), rng.random_range(y0..y1));
                if !too_close(cand, &out) {
                    break cand;
                }
            }
        } else {
            loop {
                let cand = Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side);
                if !too_close(cand, &out) {
                    break cand;
                }
            }
        };
        if preferential {
            *pref_count += 1;
        }
        grid.add_station(p);
        out.push(p);
    }
    out
}
