//! Trace-level properties of the three protocols.

mod common;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{election_fixture, params};
use sinrcast::engine::{replay_check, run, EngineConfig};
use sinrcast::grid::{box_of, dilution_class, Grid};
use sinrcast::net::gen_uniform;
use sinrcast::params::{dilution_factor, DilutionSpec};
use sinrcast::protocols::{Backoff, RandBroadcast, UnknownBroadcast, UnknownConfig};
use sinrcast::sinr::{resolve_round, Point, Station};

/// All transmitters of one slot of the density-aware schedule belong to a
/// single dilution class.
#[test]
fn diluted_schedule_keeps_classes_apart() {
    let p = params();
    let net = gen_uniform(80, 3.0, &p, 21).unwrap();
    let d = 3u32;
    let mut proto = RandBroadcast::new(&net, d, 30).unwrap();
    let cfg = EngineConfig {
        max_rounds: proto.horizon(),
        record_trace: true,
        stop_when_informed: false,
    };
    let res = run(&net, &mut proto, 4, &cfg).unwrap();
    let grid = Grid::new(Grid::known_density_cell(p.eps)).unwrap();
    let trace = res.trace.unwrap();
    assert!(!trace.rounds.is_empty());
    for tr in &trace.rounds {
        if tr.round == 1 {
            continue;
        }
        let classes: std::collections::HashSet<(u32, u32)> = tr
            .tx
            .iter()
            .map(|id| {
                let s = net
                    .stations()
                    .iter()
                    .find(|s| s.id == *id)
                    .expect("trace ids exist");
                dilution_class(box_of(s.pos, &grid), d)
            })
            .collect();
        assert!(classes.len() <= 1, "mixed classes in round {}", tr.round);
        // and the class matches the slot position
        let slot = (tr.round - 2) % (d as u64 * d as u64);
        let expect = ((slot / d as u64) as u32, (slot % d as u64) as u32);
        assert_eq!(classes.into_iter().next().unwrap(), expect);
    }
}

/// On a synthetic diluted layout, the per-slot frequency of "exactly one
/// transmitter in the focal box, heard by every listener within 1 - eps/2"
/// stays above 1/(2e) - 0.05.
#[test]
fn lone_capture_rate_beats_half_inverse_e() {
    let p = params();
    let gamma = Grid::known_density_cell(p.eps);
    let d = dilution_factor(&DilutionSpec {
        alpha: p.alpha,
        power: p.power,
        gamma,
        budget: p.noise * p.alpha * p.eps / 4.0,
        n: 1_000_000,
    })
    .unwrap();
    let spacing = d as f64 * gamma;
    let density = 4usize;
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    // one density-4 group per diluted box in an 11x11 window
    let mut groups: Vec<Vec<Station>> = Vec::new();
    let mut id = 1u64;
    let mut focal = 0usize;
    for i in -5i64..=5 {
        for j in -5i64..=5 {
            let mut group = Vec::new();
            for _ in 0..density {
                group.push(Station::new(
                    id,
                    i as f64 * spacing + gamma * rng.random::<f64>(),
                    j as f64 * spacing + gamma * rng.random::<f64>(),
                ));
                id += 1;
            }
            if i == 0 && j == 0 {
                focal = groups.len();
            }
            groups.push(group);
        }
    }
    // passive listeners around the focal box
    let mut listeners = Vec::new();
    for _ in 0..40 {
        let theta = rng.random::<f64>() * std::f64::consts::TAU;
        let r = 0.95 * rng.random::<f64>().sqrt();
        listeners.push(Station::new(
            id,
            gamma / 2.0 + r * theta.cos(),
            gamma / 2.0 + r * theta.sin(),
        ));
        id += 1;
    }

    let slots = 10_000;
    let mut successes = 0usize;
    for _ in 0..slots {
        let mut tx: Vec<(Station, ())> = Vec::new();
        let mut focal_tx: Vec<u64> = Vec::new();
        for (g, group) in groups.iter().enumerate() {
            for s in group {
                if rng.random::<f64>() * (density as f64) < 1.0 {
                    tx.push((*s, ()));
                    if g == focal {
                        focal_tx.push(s.id);
                    }
                }
            }
        }
        if focal_tx.len() != 1 {
            continue;
        }
        let outcome = resolve_round(&tx, &listeners, &p).unwrap();
        if outcome
            .c_successful(focal_tx[0], 1.0 - p.eps / 2.0)
            .unwrap()
        {
            successes += 1;
        }
    }
    let rate = successes as f64 / slots as f64;
    let floor = 1.0 / (2.0 * std::f64::consts::E) - 0.05;
    assert!(rate > floor, "capture rate {rate:.4} not above {floor:.4}");
}

/// Average over election loops of the contender count in the round a box
/// goes silent (or elects) stays at most 6 + sampling slack.
#[test]
fn election_contention_stays_bounded() {
    let mut total = 0usize;
    let mut loops = 0usize;
    for &density in &[4usize, 16, 64] {
        for seed in 0..400u64 {
            let out = election_fixture(density, 1024, 1000 + seed);
            if let Some(&last) = out.k1_counts.last() {
                total += last;
                loops += 1;
            }
        }
    }
    assert!(loops > 300, "too few active loops ({loops})");
    let avg = total as f64 / loops as f64;
    assert!(avg <= 6.5, "average final contention {avg:.3} above 6.5");
}

/// Election success rate per loop stays above 1/18 (smoke-scale run; the
/// acceptance suite runs the full version).
#[test]
fn election_rate_smoke() {
    for &density in &[1usize, 8] {
        let mut wins = 0usize;
        let trials = 500;
        for seed in 0..trials {
            if election_fixture(density, 1024, seed as u64).elected {
                wins += 1;
            }
        }
        let rate = wins as f64 / trials as f64;
        assert!(rate >= 1.0 / 18.0, "density {density}: rate {rate:.4}");
    }
}

/// No run ever announces two different leaders for one box, and deliveries
/// replay exactly.
#[test]
fn unknown_runs_keep_leaders_unique_and_replayable() {
    let p = params();
    for seed in 0..5u64 {
        let net = gen_uniform(50, 2.0, &p, 300 + seed).unwrap();
        let cfg = UnknownConfig {
            d: 5,
            dbar: 10,
            iterations: 40,
            prob_n: net.len() as u64,
        };
        let mut proto = UnknownBroadcast::new(&net, cfg).unwrap();
        let engine_cfg = EngineConfig {
            max_rounds: proto.horizon(),
            record_trace: true,
            stop_when_informed: true,
        };
        let res = run(&net, &mut proto, seed, &engine_cfg).unwrap();
        assert!(res.leader_conflict.is_none(), "seed {seed}: {:?}", res.leader_conflict);
        assert!(res.complete(), "seed {seed} did not complete");
        assert!(replay_check(res.trace.as_ref().unwrap(), &net).unwrap());
    }
}

/// Clustered instances put many stations into single boxes; elections must
/// still converge with unique leaders.
#[test]
fn unknown_handles_clustered_networks() {
    let p = params();
    for seed in 0..3u64 {
        let net = sinrcast::net::gen_social(70, 2.5, &p, 0.9, 600 + seed).unwrap();
        let cfg = UnknownConfig {
            d: 5,
            dbar: 10,
            iterations: 60,
            prob_n: net.len() as u64,
        };
        let mut proto = UnknownBroadcast::new(&net, cfg).unwrap();
        let engine_cfg = EngineConfig {
            max_rounds: proto.horizon(),
            record_trace: true,
            stop_when_informed: true,
        };
        let res = run(&net, &mut proto, seed, &engine_cfg).unwrap();
        assert!(res.complete(), "seed {seed}: {}/{} informed", res.informed_count, res.n);
        assert!(res.leader_conflict.is_none(), "seed {seed}");
        assert!(replay_check(res.trace.as_ref().unwrap(), &net).unwrap());
    }
}

/// Backoff traces replay exactly as well.
#[test]
fn backoff_runs_are_replayable() {
    let p = params();
    for seed in 0..5u64 {
        let net = gen_uniform(40, 2.0, &p, 400 + seed).unwrap();
        let mut proto = Backoff::new(&net).unwrap();
        let cfg = EngineConfig {
            max_rounds: 20_000,
            record_trace: true,
            stop_when_informed: false,
        };
        let res = run(&net, &mut proto, seed, &cfg).unwrap();
        assert!(res.all_done_round.is_some(), "backoff never went silent");
        assert!(replay_check(res.trace.as_ref().unwrap(), &net).unwrap());
    }
}

/// The engine's wake-up rule: nobody transmits before being informed.
#[test]
fn transmitters_are_informed_first() {
    let p = params();
    let net = gen_uniform(60, 2.5, &p, 77).unwrap();
    let mut proto = RandBroadcast::new(&net, 2, 200).unwrap();
    let cfg = EngineConfig {
        max_rounds: proto.horizon(),
        record_trace: true,
        stop_when_informed: false,
    };
    let res = run(&net, &mut proto, 8, &cfg).unwrap();
    let mut informed: std::collections::HashSet<u64> = std::collections::HashSet::new();
    informed.insert(net.source_id());
    for tr in &res.trace.unwrap().rounds {
        for id in &tr.tx {
            assert!(informed.contains(id), "round {}: {id} not informed", tr.round);
        }
        for (listener, _) in &tr.rx {
            informed.insert(*listener);
        }
    }
}

/// Any two stations lying in boxes of one octant of a box neighborhood are
/// within the reduced range 1 - eps/2 of each other.
#[test]
fn octant_boxes_hold_stations_within_reduced_range() {
    use sinrcast::grid::octant_of;
    use sinrcast::protocols::BoxNeighborhood;
    use std::collections::HashMap;

    let p = params();
    let limit = 1.0 - p.eps / 2.0 + 1e-9;
    let mut checked_pairs = 0usize;
    for seed in 0..6u64 {
        let net = gen_uniform(120, 2.5, &p, 500 + seed).unwrap();
        let grid = Grid::new(Grid::unknown_density_cell(p.eps)).unwrap();
        let nbhd = BoxNeighborhood::build(&net, &grid);
        let mut by_box: HashMap<sinrcast::BoxCoord, Vec<Station>> = HashMap::new();
        for s in net.stations() {
            by_box.entry(box_of(s.pos, &grid)).or_default().push(*s);
        }
        for &v in nbhd.occupied() {
            for octant in 0..8u8 {
                let members: Vec<&Station> = nbhd
                    .occupied()
                    .iter()
                    .filter(|&&w| nbhd.is_adjacent(v, w) && octant_of(v, w).ok() == Some(octant))
                    .flat_map(|w| by_box[w].iter())
                    .collect();
                for (a, s1) in members.iter().enumerate() {
                    for s2 in members.iter().skip(a + 1) {
                        let d = s1.pos.dist(&s2.pos);
                        assert!(
                            d <= limit,
                            "seed {seed}: stations {} and {} at {d:.4} share octant {octant} of {v:?}",
                            s1.id,
                            s2.id
                        );
                        checked_pairs += 1;
                    }
                }
            }
        }
    }
    assert!(checked_pairs > 10_000, "too few pairs sampled: {checked_pairs}");
}

/// A two-transmitter jam at close range really delivers nothing.
#[test]
fn symmetric_jam_delivers_nothing() {
    let p = params();
    let tx = [
        (Station::new(1, 0.0, 0.1), ()),
        (Station::new(2, 0.0, -0.1), ()),
    ];
    let listeners = [Station::new(3, 0.5, 0.0), Station::new(4, -0.5, 0.0)];
    let out = resolve_round(&tx, &listeners, &p).unwrap();
    assert_eq!(out.delivered, vec![None, None]);
    let _ = Point::new(0.0, 0.0);
}
