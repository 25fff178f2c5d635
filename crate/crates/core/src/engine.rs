//! Synchronous round loop. Each round the engine polls every informed,
//! not-yet-finished station for a transmit/listen decision, resolves
//! reception through the SINR rule, and dispatches deliveries back to the
//! per-station protocol logic.
//!
//! Wake-up is non-spontaneous: a station is polled only after it has
//! received the broadcast message (the source is informed from the start).
//! There is no collision detection: a listener that receives nothing gets
//! no callback and no channel information.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::Network;
use crate::sinr::{clears_threshold, resolve_deliveries, SinrError, Station};

#[derive(Error, Debug)]
pub enum EngineError {
    #[error(transparent)]
    Sinr(#[from] SinrError),
    #[error("max_rounds must be at least 1")]
    NoRounds,
    #[error("trace references unknown station id {0}")]
    UnknownStation(u64),
    #[error("malformed trace line {0}: {1}")]
    MalformedTrace(usize, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable combination of two seeds; used for per-station random streams
/// and per-trial seeds so results never depend on iteration order.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a).wrapping_add(b))
}

/// What a station does in a round.
#[derive(Clone, Debug, PartialEq)]
pub enum Decision {
    Transmit(Message),
    Listen,
}

/// Wire content. Every message implicitly carries the broadcast payload;
/// the variants distinguish the control role. Box coordinates are raw grid
/// indices of the sender-side grid.
#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    /// Plain relay of the broadcast payload.
    Broadcast,
    /// A box leader announcing itself (and the payload).
    LeaderBeacon { box_i: i64, box_j: i64 },
    /// A station volunteering for election in its box.
    Candidate { box_i: i64, box_j: i64 },
    /// A helper leader naming the elected station of a box.
    Announce {
        elected: u64,
        box_i: i64,
        box_j: i64,
    },
    /// Channel probe in the confirmation round of an election triple.
    Probe,
}

/// Per-station protocol logic driven by the engine.
///
/// `decide` must be a deterministic function of the station's state, the
/// round number, and the station's own random stream; `round` equals the
/// counter a station would maintain locally, since every message carries
/// the round counter and rounds are synchronous.
pub trait Protocol {
    fn decide(&mut self, station: usize, round: u64, rng: &mut ChaCha8Rng) -> Decision;
    fn on_receive(&mut self, station: usize, sender: usize, msg: &Message, round: u64);
    /// True once the station's activity is finished as of `round`.
    fn is_done(&self, station: usize, round: u64) -> bool;
}

#[derive(Clone, Copy, Debug)]
pub struct EngineConfig {
    pub max_rounds: u64,
    pub record_trace: bool,
    /// Stop as soon as every station is informed (otherwise run until every
    /// informed station reports done, or `max_rounds`).
    pub stop_when_informed: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_rounds: 100_000,
            record_trace: false,
            stop_when_informed: true,
        }
    }
}

/// One recorded round; rounds without transmitters are omitted from traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRound {
    pub round: u64,
    /// Station ids that transmitted.
    pub tx: Vec<u64>,
    /// `(listener id, sender id)` pairs that were delivered.
    pub rx: Vec<(u64, u64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub rounds: Vec<TraceRound>,
}

impl Trace {
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<(), EngineError> {
        for r in &self.rounds {
            serde_json::to_writer(&mut w, r).map_err(std::io::Error::other)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self, EngineError> {
        let mut rounds = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let round: TraceRound = serde_json::from_str(&line)
                .map_err(|e| EngineError::MalformedTrace(k + 1, e.to_string()))?;
            rounds.push(round);
        }
        Ok(Trace { rounds })
    }
}

/// Conflicting leader announcements observed for one box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeaderConflict {
    pub box_i: i64,
    pub box_j: i64,
    pub first: u64,
    pub second: u64,
}

#[derive(Clone, Debug)]
pub struct SimResult {
    /// First round after which every station was informed.
    pub completion_round: Option<u64>,
    /// First round after which no informed station had activity left.
    pub all_done_round: Option<u64>,
    pub rounds_executed: u64,
    pub informed_count: usize,
    pub n: usize,
    /// Set when two announcements named different leaders for one box.
    pub leader_conflict: Option<LeaderConflict>,
    pub trace: Option<Trace>,
}

impl SimResult {
    pub fn complete(&self) -> bool {
        self.completion_round.is_some()
    }
}

/// Run a protocol over a network. Round 0 only marks the source informed;
/// decisions start at round 1. Station randomness comes from dedicated
/// streams seeded by `mix_seed(seed, station_id)`.
pub fn run(
    net: &Network,
    protocol: &mut dyn Protocol,
    seed: u64,
    cfg: &EngineConfig,
) -> Result<SimResult, EngineError> {
    if cfg.max_rounds < 1 {
        return Err(EngineError::NoRounds);
    }
    let n = net.len();
    let stations = net.stations();
    let mut rngs: Vec<ChaCha8Rng> = stations
        .iter()
        .map(|s| ChaCha8Rng::seed_from_u64(mix_seed(seed, s.id)))
        .collect();

    let mut informed = vec![false; n];
    let mut informed_list: Vec<usize> = Vec::with_capacity(n);
    informed[net.source()] = true;
    informed_list.push(net.source());
    let mut informed_count = 1usize;

    let mut completion_round = if n == 1 { Some(0) } else { None };
    let mut all_done_round = None;
    let mut announced: HashMap<(i64, i64), u64> = HashMap::new();
    let mut leader_conflict = None;
    let mut trace = cfg.record_trace.then(Trace::default);
    let mut rounds_executed = 0;

    let mut tx_idx: Vec<usize> = Vec::new();
    let mut tx_msgs: Vec<Message> = Vec::new();
    let mut tx_stations: Vec<Station> = Vec::new();
    let mut listener_idx: Vec<usize> = Vec::new();
    let mut listener_stations: Vec<Station> = Vec::new();
    let mut transmitting = vec![false; n];

    'rounds: for round in 1..=cfg.max_rounds {
        if cfg.stop_when_informed && completion_round.is_some() {
            break;
        }
        rounds_executed = round;

        tx_idx.clear();
        tx_msgs.clear();
        for &i in &informed_list {
            if protocol.is_done(i, round) {
                continue;
            }
            if let Decision::Transmit(msg) = protocol.decide(i, round, &mut rngs[i]) {
                tx_idx.push(i);
                tx_msgs.push(msg);
            }
        }

        if !tx_idx.is_empty() {
            // leader-uniqueness watch over transmitted announcements
            for msg in &tx_msgs {
                if let Message::Announce {
                    elected,
                    box_i,
                    box_j,
                } = msg
                {
                    match announced.get(&(*box_i, *box_j)) {
                        Some(&prev) if prev != *elected && leader_conflict.is_none() => {
                            leader_conflict = Some(LeaderConflict {
                                box_i: *box_i,
                                box_j: *box_j,
                                first: prev,
                                second: *elected,
                            });
                        }
                        Some(_) => {}
                        None => {
                            announced.insert((*box_i, *box_j), *elected);
                        }
                    }
                }
            }

            for &i in &tx_idx {
                transmitting[i] = true;
            }
            tx_stations.clear();
            tx_stations.extend(tx_idx.iter().map(|&i| stations[i]));
            listener_idx.clear();
            listener_stations.clear();
            for (i, s) in stations.iter().enumerate() {
                if !transmitting[i] {
                    listener_idx.push(i);
                    listener_stations.push(*s);
                }
            }

            let delivered = resolve_deliveries(&tx_stations, &listener_stations, net.params())?;

            let mut rx_record = Vec::new();
            for (k, d) in delivered.iter().enumerate() {
                if let Some(t) = *d {
                    let li = listener_idx[k];
                    let si = tx_idx[t];
                    if !informed[li] {
                        informed[li] = true;
                        informed_list.push(li);
                        informed_count += 1;
                    }
                    protocol.on_receive(li, si, &tx_msgs[t], round);
                    if trace.is_some() {
                        rx_record.push((stations[li].id, stations[si].id));
                    }
                }
            }
            if let Some(tr) = trace.as_mut() {
                tr.rounds.push(TraceRound {
                    round,
                    tx: tx_idx.iter().map(|&i| stations[i].id).collect(),
                    rx: rx_record,
                });
            }
            for &i in &tx_idx {
                transmitting[i] = false;
            }

            if informed_count == n && completion_round.is_none() {
                completion_round = Some(round);
            }
        }

        // activity ceases when every informed station is done; nothing can
        // change after that, so stop regardless of the stop mode
        let all_informed_done = informed_list
            .iter()
            .all(|&i| protocol.is_done(i, round + 1));
        if all_informed_done {
            all_done_round = Some(round);
            break 'rounds;
        }
    }

    Ok(SimResult {
        completion_round,
        all_done_round,
        rounds_executed,
        informed_count,
        n,
        leader_conflict,
        trace,
    })
}

/// Re-resolve every recorded round of a trace with a direct term-by-term
/// evaluation of the reception rule and compare against the recorded
/// deliveries. Returns true when they match exactly.
pub fn replay_check(trace: &Trace, net: &Network) -> Result<bool, EngineError> {
    let params = net.params();
    let by_id: HashMap<u64, usize> = net
        .stations()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id, i))
        .collect();

    for round in &trace.rounds {
        let mut tx: Vec<Station> = Vec::with_capacity(round.tx.len());
        for id in &round.tx {
            let &i = by_id.get(id).ok_or(EngineError::UnknownStation(*id))?;
            tx.push(net.stations()[i]);
        }
        let tx_ids: std::collections::HashSet<u64> = round.tx.iter().copied().collect();

        let mut expected: Vec<(u64, u64)> = Vec::new();
        for listener in net.stations() {
            if tx_ids.contains(&listener.id) {
                continue;
            }
            for sender in &tx {
                // direct evaluation: noise plus each other transmitter's
                // received power, summed in index order
                let mut denom = params.noise;
                for w in &tx {
                    if w.id == sender.id {
                        continue;
                    }
                    denom += params.received_power_sq(w.pos.dist_sq(&listener.pos));
                }
                let d_sq = sender.pos.dist_sq(&listener.pos);
                if d_sq == 0.0 {
                    return Err(EngineError::Sinr(SinrError::CoincidentStations(
                        sender.id,
                        listener.id,
                    )));
                }
                let ratio = params.received_power_sq(d_sq) / denom;
                if clears_threshold(ratio, params.beta) {
                    expected.push((listener.id, sender.id));
                }
            }
        }
        let mut got = round.rx.clone();
        expected.sort_unstable();
        got.sort_unstable();
        if expected != got {
            return Ok(false);
        }
    }
    Ok(true)
}
