//! Shared fixtures and oracles for the integration suites.
#![allow(dead_code)] // not every suite uses every fixture

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sinrcast::engine::{mix_seed, run, EngineConfig, SimResult};
use sinrcast::grid::Grid;
use sinrcast::net::Network;
use sinrcast::protocols::{UnknownBroadcast, UnknownConfig};
use sinrcast::sinr::{SinrParams, Station};

pub fn params() -> SinrParams {
    SinrParams::new(2.5, 1.0, 1.0, 0.2).unwrap()
}

/// Term-by-term evaluation of the reception rule, independent of the
/// library's resolution path: for every (transmitter, listener) pair the
/// ratio is computed with a plain index-order interference sum.
pub fn brute_force_deliveries(
    transmitters: &[Station],
    listeners: &[Station],
    p: &SinrParams,
) -> Vec<Option<usize>> {
    listeners
        .iter()
        .map(|l| {
            let mut winner = None;
            for (i, t) in transmitters.iter().enumerate() {
                let mut denom = p.noise;
                for (j, w) in transmitters.iter().enumerate() {
                    if j != i {
                        denom += p.power * w.pos.dist(&l.pos).powf(-p.alpha);
                    }
                }
                let ratio = p.power * t.pos.dist(&l.pos).powf(-p.alpha) / denom;
                if ratio >= p.beta - 1e-12 {
                    assert!(winner.is_none(), "two transmitters above threshold");
                    winner = Some(i);
                }
            }
            winner
        })
        .collect()
}

/// Same brute force, returning the raw ratio of one pair.
pub fn brute_force_ratio(
    sender: usize,
    listener: &Station,
    transmitters: &[Station],
    p: &SinrParams,
) -> f64 {
    let mut denom = p.noise;
    for (j, w) in transmitters.iter().enumerate() {
        if j != sender {
            denom += p.power * w.pos.dist(&listener.pos).powf(-p.alpha);
        }
    }
    p.power * transmitters[sender].pos.dist(&listener.pos).powf(-p.alpha) / denom
}

/// Isolated two-box election fixture: a helper leader (the source) in box
/// (0,0) of the fine grid and `density` stations in box (10,0), with no
/// other traffic. Runs one outer iteration and reports whether the far box
/// elected a leader, plus the per-candidacy-round transmitter counts of its
/// one election loop.
pub struct ElectionOutcome {
    pub elected: bool,
    /// Number of far-box transmitters in each candidacy round that had any.
    pub k1_counts: Vec<usize>,
    pub result: SimResult,
}

pub fn election_fixture(density: usize, prob_n: u64, seed: u64) -> ElectionOutcome {
    let p = params();
    let cell = Grid::unknown_density_cell(p.eps);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xE1EC));
    let mut stations = vec![Station::new(1, 0.5 * cell, 0.5 * cell)];
    for k in 0..density {
        stations.push(Station::new(
            2 + k as u64,
            (10.0 + 0.02 + 0.96 * rng.random::<f64>()) * cell,
            (0.02 + 0.96 * rng.random::<f64>()) * cell,
        ));
    }
    let net = Network::from_stations(stations, p, 1.0, 1).unwrap();
    let cfg = UnknownConfig {
        d: 1,
        dbar: 1,
        iterations: 1,
        prob_n,
    };
    let mut proto = UnknownBroadcast::new(&net, cfg).unwrap();
    let engine_cfg = EngineConfig {
        max_rounds: proto.horizon(),
        record_trace: true,
        stop_when_informed: false,
    };
    let result = run(&net, &mut proto, mix_seed(seed, 0x5EED), &engine_cfg).unwrap();
    let elected = (1..=density).any(|i| proto.is_leader(i));
    let far_ids: Vec<u64> = (2..2 + density as u64).collect();
    let k1_counts = result
        .trace
        .as_ref()
        .unwrap()
        .rounds
        .iter()
        .filter(|r| proto.candidacy_section(r.round).is_some())
        .map(|r| r.tx.iter().filter(|id| far_ids.contains(id)).count())
        .filter(|&c| c > 0)
        .collect();
    ElectionOutcome {
        elected,
        k1_counts,
        result,
    }
}
