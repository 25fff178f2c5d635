//! Density-oblivious broadcast with per-box leader election.
//!
//! The schedule works on the fine grid (`cell = eps/(6*sqrt(2))`). Each
//! outer iteration has two parts:
//!
//! * Part 1: `d^2` slots in which the leader of every box of the scheduled
//!   dilution class relays the payload, waking new stations and telling
//!   nearby boxes where leaders exist.
//! * Part 2: for each of `dbar^2` classes and each of the 8 octants of a
//!   box neighborhood, a loop over `k = 0..=ceil(log2 n)` of three-round
//!   election triples. In the candidacy round every eligible station of a
//!   leaderless box transmits with probability `2^k / n`; in the announce
//!   round the helper leader (the lexicographically smallest leader box the
//!   station knows in that octant) names the candidate it heard, electing
//!   it; the probe round lets silent stations detect that their box is
//!   contended and stand down for the rest of the loop.
//!
//! Stations act only on knowledge gathered from messages they actually
//! received: leader beacons and announcements populate a per-station leader
//! table that drives helper selection.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{Decision, Message, Protocol};
use crate::grid::{box_distance, dilution_class, near_window, octant_of, BoxCoord, Grid};
use crate::net::Network;
use crate::params::{trial_count, unknown_density_dilutions};

use super::{ceil_log2, station_boxes, ProtocolError};

/// Schedule parameters. `prob_n` is the station bound `n` that scales the
/// candidacy probability `2^k / n`.
#[derive(Clone, Copy, Debug)]
pub struct UnknownConfig {
    pub d: u32,
    pub dbar: u32,
    pub iterations: u64,
    pub prob_n: u64,
}

/// Box adjacency of one instance under the modified notion: boxes within
/// distance `1 - eps/2` excluding the `[-2,2]^2` near window, extended
/// around witness edges of the communication graph. Only occupied boxes are
/// tracked; leaders always sit in occupied boxes.
pub struct BoxNeighborhood {
    occupied: Vec<BoxCoord>,
    adjacent: HashSet<(BoxCoord, BoxCoord)>,
}

impl BoxNeighborhood {
    pub fn build(net: &Network, grid: &Grid) -> Self {
        let eps = net.params().eps;
        let boxes = station_boxes(net, grid);
        let mut occupied = boxes.clone();
        occupied.sort_unstable();
        occupied.dedup();

        // boxes joined by a communication-graph edge
        let mut witnessed: HashMap<BoxCoord, HashSet<BoxCoord>> = HashMap::new();
        for i in 0..net.len() {
            for &j in net.neighbors(i) {
                witnessed
                    .entry(boxes[i])
                    .or_default()
                    .insert(boxes[j as usize]);
            }
        }

        let limit = 1.0 - eps / 2.0 + 1e-12;
        let mut adjacent = HashSet::new();
        for &v in &occupied {
            for &w in &occupied {
                if near_window(v, w) {
                    continue;
                }
                let base = box_distance(v, w, grid) <= limit;
                let extended = || {
                    witnessed
                        .get(&v)
                        .is_some_and(|us| us.iter().any(|u| near_window(*u, w)))
                };
                if base || extended() {
                    adjacent.insert((v, w));
                }
            }
        }
        BoxNeighborhood { occupied, adjacent }
    }

    pub fn occupied(&self) -> &[BoxCoord] {
        &self.occupied
    }

    /// Whether `w` belongs to the neighborhood of `v`.
    pub fn is_adjacent(&self, v: BoxCoord, w: BoxCoord) -> bool {
        self.adjacent.contains(&(v, w))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Step {
    Candidacy,
    Announce,
    Probe,
}

/// Position inside one election triple.
#[derive(Clone, Copy, Debug, PartialEq)]
struct TripleCtx {
    class: (u32, u32),
    octant: u8,
    k: u32,
    section: u64,
    k1_round: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Phase {
    SourceOpen,
    Part1 { class: (u32, u32) },
    Triple { step: Step, ctx: TripleCtx },
    Finished,
}

#[derive(Clone, Copy, Debug)]
struct Schedule {
    d: u64,
    dbar: u64,
    iterations: u64,
    k_count: u64,
    section_len: u64,
    class_len: u64,
    iter_len: u64,
}

impl Schedule {
    fn new(cfg: &UnknownConfig) -> Self {
        let d = cfg.d as u64;
        let dbar = cfg.dbar as u64;
        let k_count = ceil_log2(cfg.prob_n) as u64 + 1;
        let section_len = 3 * k_count;
        let class_len = 8 * section_len;
        let iter_len = d * d + dbar * dbar * class_len;
        Schedule {
            d,
            dbar,
            iterations: cfg.iterations,
            k_count,
            section_len,
            class_len,
            iter_len,
        }
    }

    fn iter_of(&self, round: u64) -> u64 {
        debug_assert!(round >= 2);
        (round - 2) / self.iter_len
    }

    fn iteration_start(&self, iter: u64) -> u64 {
        2 + iter * self.iter_len
    }

    fn horizon(&self) -> u64 {
        1 + self.iterations * self.iter_len
    }

    fn phase(&self, round: u64) -> Phase {
        if round <= 1 {
            return Phase::SourceOpen;
        }
        let s = round - 2;
        let iter = s / self.iter_len;
        if iter >= self.iterations {
            return Phase::Finished;
        }
        let off = s % self.iter_len;
        if off < self.d * self.d {
            return Phase::Part1 {
                class: ((off / self.d) as u32, (off % self.d) as u32),
            };
        }
        let o = off - self.d * self.d;
        let class_idx = o / self.class_len;
        let rest = o % self.class_len;
        let octant = (rest / self.section_len) as u8;
        let r2 = rest % self.section_len;
        let k = (r2 / 3) as u32;
        debug_assert!((k as u64) < self.k_count);
        let step = match r2 % 3 {
            0 => Step::Candidacy,
            1 => Step::Announce,
            _ => Step::Probe,
        };
        Phase::Triple {
            step,
            ctx: TripleCtx {
                class: ((class_idx / self.dbar) as u32, (class_idx % self.dbar) as u32),
                octant,
                k,
                section: iter * self.dbar * self.dbar * 8 + class_idx * 8 + octant as u64,
                k1_round: round - r2 % 3,
            },
        }
    }
}

#[derive(Clone, Debug)]
struct StationState {
    active_from: Option<u64>,
    is_leader: bool,
    /// The station's own box has a leader (itself or a learned one).
    box_led: bool,
    known_leaders: BTreeMap<BoxCoord, u64>,
    epoch: u64,
    conflict: bool,
    cur_section: Option<u64>,
    // triple-scoped state, valid while triple_k1_round matches the schedule
    triple_k1_round: u64,
    txed_k1: bool,
    listened_k1: bool,
    helper: Option<(BoxCoord, u64)>,
    // pending silence checks resolved at the next decide call
    await_k2: Option<u64>,
    heard_in_await_k2: bool,
    await_k3: Option<u64>,
    probe_heard: bool,
    // helper side: candidate heard in the latest candidacy round
    cand: Option<(u64, u64, BoxCoord)>,
    prober_cache: Option<(u64, ProberSections)>,
}

/// Sections `(class_a, class_b, octant)` in which a leader probes.
type ProberSections = HashSet<(u32, u32, u8)>;

impl StationState {
    fn new() -> Self {
        StationState {
            active_from: None,
            is_leader: false,
            box_led: false,
            known_leaders: BTreeMap::new(),
            epoch: 0,
            conflict: false,
            cur_section: None,
            triple_k1_round: 0,
            txed_k1: false,
            listened_k1: false,
            helper: None,
            await_k2: None,
            heard_in_await_k2: false,
            await_k3: None,
            probe_heard: false,
            cand: None,
            prober_cache: None,
        }
    }

    fn learn(&mut self, my_box: BoxCoord, b: BoxCoord, id: u64) {
        if self.known_leaders.insert(b, id) != Some(id) {
            self.epoch += 1;
        }
        if b == my_box {
            self.box_led = true;
        }
    }
}

pub struct UnknownBroadcast {
    cfg: UnknownConfig,
    sched: Schedule,
    nbhd: BoxNeighborhood,
    boxes: Vec<BoxCoord>,
    class_d: Vec<(u32, u32)>,
    class_dbar: Vec<(u32, u32)>,
    ids: Vec<u64>,
    source: usize,
    st: Vec<StationState>,
}

impl UnknownBroadcast {
    pub fn new(net: &Network, cfg: UnknownConfig) -> Result<Self, ProtocolError> {
        if cfg.d == 0 || cfg.dbar == 0 {
            return Err(ProtocolError::ZeroDilution);
        }
        if cfg.iterations == 0 || cfg.prob_n == 0 {
            return Err(ProtocolError::ZeroIterations);
        }
        let grid = Grid::new(Grid::unknown_density_cell(net.params().eps))?;
        let boxes = station_boxes(net, &grid);
        let class_d = boxes.iter().map(|b| dilution_class(*b, cfg.d)).collect();
        let class_dbar = boxes.iter().map(|b| dilution_class(*b, cfg.dbar)).collect();
        let nbhd = BoxNeighborhood::build(net, &grid);
        let ids: Vec<u64> = net.stations().iter().map(|s| s.id).collect();
        let source = net.source();
        let mut st = vec![StationState::new(); net.len()];
        // the source opens the run as the leader of its own box
        st[source].active_from = Some(1);
        st[source].is_leader = true;
        let src_box = boxes[source];
        let src_id = ids[source];
        st[source].learn(src_box, src_box, src_id);
        Ok(UnknownBroadcast {
            cfg,
            sched: Schedule::new(&cfg),
            nbhd,
            boxes,
            class_d,
            class_dbar,
            ids,
            source,
            st,
        })
    }

    /// Dilution pair and iteration budget for a target failure probability,
    /// with optional overrides for desk-scale runs.
    pub fn defaults(
        net: &Network,
        delta_fail: f64,
        d_override: Option<u32>,
        dbar_override: Option<u32>,
        iterations_override: Option<u64>,
    ) -> Result<UnknownConfig, ProtocolError> {
        let p = net.params();
        let (d0, dbar0) =
            unknown_density_dilutions(p.alpha, p.noise, p.power, p.eps, net.len().max(2) as u64)?;
        let ecc = net.eccentricity()?;
        let iterations = match iterations_override {
            Some(t) => t,
            None => {
                let delta_prime = delta_fail / (4.0 * ((ecc as f64) + 1.0).powi(3));
                trial_count(ecc, delta_prime, 1.0 / 18.0)?
            }
        };
        Ok(UnknownConfig {
            d: d_override.unwrap_or(d0),
            dbar: dbar_override.unwrap_or(dbar0),
            iterations,
            prob_n: net.len() as u64,
        })
    }

    pub fn iteration_len(&self) -> u64 {
        self.sched.iter_len
    }

    /// Total scheduled rounds.
    pub fn horizon(&self) -> u64 {
        self.sched.horizon()
    }

    /// Test hook: whether a station currently holds its box's leadership.
    pub fn is_leader(&self, station: usize) -> bool {
        self.st[station].is_leader
    }

    /// Test hook: when `round` is a candidacy round, its `(section, k)`.
    pub fn candidacy_section(&self, round: u64) -> Option<(u64, u32)> {
        match self.sched.phase(round) {
            Phase::Triple {
                step: Step::Candidacy,
                ctx,
            } => Some((ctx.section, ctx.k)),
            _ => None,
        }
    }

    fn active(&self, station: usize, round: u64) -> bool {
        self.st[station]
            .active_from
            .is_some_and(|a| round >= a)
    }

    /// Wake-ups during an election triple take effect at the next iteration;
    /// wake-ups at the opening round or during Part 1 are immediate.
    fn activation_round(&self, informed_round: u64) -> u64 {
        match self.sched.phase(informed_round) {
            Phase::SourceOpen | Phase::Part1 { .. } | Phase::Finished => informed_round,
            Phase::Triple { .. } => self
                .sched
                .iteration_start(self.sched.iter_of(informed_round) + 1),
        }
    }

    /// Lexicographically smallest leader box this station knows inside the
    /// given octant of its own box's neighborhood.
    fn lex_min_helper(&self, station: usize, octant: u8) -> Option<(BoxCoord, u64)> {
        let my_box = self.boxes[station];
        for (w, id) in &self.st[station].known_leaders {
            if self.nbhd.is_adjacent(my_box, *w) && octant_of(my_box, *w).ok() == Some(octant) {
                return Some((*w, *id));
            }
        }
        None
    }

    /// Whether this leader's box is the lex-min helper it knows for `vbox`
    /// in the given octant of `vbox`'s neighborhood.
    fn is_lex_min_helper_of(&self, station: usize, vbox: BoxCoord, octant: u8) -> bool {
        let my_box = self.boxes[station];
        if !self.nbhd.is_adjacent(vbox, my_box) || octant_of(vbox, my_box).ok() != Some(octant) {
            return false;
        }
        for w in self.st[station].known_leaders.keys() {
            if self.nbhd.is_adjacent(vbox, *w) && octant_of(vbox, *w).ok() == Some(octant) {
                return *w == my_box;
            }
        }
        false
    }

    /// Sections `(class_a, class_b, octant)` in which this leader serves as
    /// the probing helper of some leaderless occupied box, per its own
    /// knowledge. Cached until the leader table changes.
    fn prober_sections(&mut self, station: usize) -> &ProberSections {
        let epoch = self.st[station].epoch;
        let stale = match &self.st[station].prober_cache {
            Some((e, _)) => *e != epoch,
            None => true,
        };
        if stale {
            let my_box = self.boxes[station];
            let mut out = HashSet::new();
            for &v in &self.nbhd.occupied {
                if self.st[station].known_leaders.contains_key(&v) {
                    continue;
                }
                if !self.nbhd.is_adjacent(v, my_box) {
                    continue;
                }
                let Ok(oct) = octant_of(v, my_box) else {
                    continue;
                };
                if self.is_lex_min_helper_of(station, v, oct) {
                    let cls = dilution_class(v, self.cfg.dbar);
                    out.insert((cls.0, cls.1, oct));
                }
            }
            self.st[station].prober_cache = Some((epoch, out));
        }
        &self.st[station].prober_cache.as_ref().expect("just built").1
    }

    fn resolve_pending(&mut self, station: usize, round: u64) {
        let st = &mut self.st[station];
        if let Some(r2) = st.await_k2 {
            if round > r2 {
                if !st.heard_in_await_k2 {
                    st.conflict = true;
                }
                st.await_k2 = None;
            }
        }
        if let Some(r3) = st.await_k3 {
            if round > r3 {
                if !st.probe_heard {
                    st.conflict = true;
                }
                st.await_k3 = None;
            }
        }
    }

    fn decide_candidacy(
        &mut self,
        station: usize,
        round: u64,
        ctx: TripleCtx,
        rng: &mut ChaCha8Rng,
    ) -> Decision {
        {
            let st = &mut self.st[station];
            if st.cur_section != Some(ctx.section) {
                st.cur_section = Some(ctx.section);
                st.conflict = false;
            }
            st.triple_k1_round = round;
            st.txed_k1 = false;
            st.listened_k1 = false;
            st.helper = None;
        }
        if !self.active(station, round) {
            return Decision::Listen;
        }
        {
            let st = &self.st[station];
            if st.is_leader || st.box_led || st.conflict || self.class_dbar[station] != ctx.class
            {
                return Decision::Listen;
            }
        }
        let Some(helper) = self.lex_min_helper(station, ctx.octant) else {
            return Decision::Listen;
        };
        let st = &mut self.st[station];
        st.helper = Some(helper);
        let p = ((1u64 << ctx.k) as f64 / self.cfg.prob_n as f64).min(1.0);
        if rng.random::<f64>() < p {
            st.txed_k1 = true;
            let b = self.boxes[station];
            Decision::Transmit(Message::Candidate {
                box_i: b.i,
                box_j: b.j,
            })
        } else {
            st.listened_k1 = true;
            Decision::Listen
        }
    }

    fn decide_announce(&mut self, station: usize, round: u64, ctx: TripleCtx) -> Decision {
        {
            let st = &mut self.st[station];
            if st.triple_k1_round == ctx.k1_round && st.txed_k1 {
                // a candidate listens here; silence means contention
                st.await_k2 = Some(round);
                st.heard_in_await_k2 = false;
                return Decision::Listen;
            }
        }
        if !self.st[station].is_leader || !self.active(station, round) {
            return Decision::Listen;
        }
        let announce = match self.st[station].cand {
            Some((r, cand_id, cand_box)) if r == ctx.k1_round => {
                // never elect into a box already known to have a leader
                if dilution_class(cand_box, self.cfg.dbar) == ctx.class
                    && !self.st[station].known_leaders.contains_key(&cand_box)
                    && self.is_lex_min_helper_of(station, cand_box, ctx.octant)
                {
                    Some((cand_id, cand_box))
                } else {
                    None
                }
            }
            _ => None,
        };
        match announce {
            Some((cand_id, cand_box)) => Decision::Transmit(Message::Announce {
                elected: cand_id,
                box_i: cand_box.i,
                box_j: cand_box.j,
            }),
            None => Decision::Listen,
        }
    }

    fn decide_probe(&mut self, station: usize, round: u64, ctx: TripleCtx) -> Decision {
        let fresh = self.st[station].triple_k1_round == ctx.k1_round;
        if fresh && self.st[station].txed_k1 {
            return Decision::Transmit(Message::Probe);
        }
        if self.st[station].is_leader && self.active(station, round) {
            let key = (ctx.class.0, ctx.class.1, ctx.octant);
            if self.prober_sections(station).contains(&key) {
                return Decision::Transmit(Message::Probe);
            }
        }
        let st = &mut self.st[station];
        if fresh && st.listened_k1 && !st.box_led && !st.conflict {
            st.await_k3 = Some(round);
            st.probe_heard = false;
        }
        Decision::Listen
    }
}

impl Protocol for UnknownBroadcast {
    fn decide(&mut self, station: usize, round: u64, rng: &mut ChaCha8Rng) -> Decision {
        self.resolve_pending(station, round);
        match self.sched.phase(round) {
            Phase::SourceOpen => {
                if station == self.source {
                    let b = self.boxes[station];
                    Decision::Transmit(Message::LeaderBeacon {
                        box_i: b.i,
                        box_j: b.j,
                    })
                } else {
                    Decision::Listen
                }
            }
            Phase::Part1 { class } => {
                let st = &self.st[station];
                if st.is_leader && self.active(station, round) && self.class_d[station] == class {
                    let b = self.boxes[station];
                    Decision::Transmit(Message::LeaderBeacon {
                        box_i: b.i,
                        box_j: b.j,
                    })
                } else {
                    Decision::Listen
                }
            }
            Phase::Triple { step, ctx } => match step {
                Step::Candidacy => self.decide_candidacy(station, round, ctx, rng),
                Step::Announce => self.decide_announce(station, round, ctx),
                Step::Probe => self.decide_probe(station, round, ctx),
            },
            Phase::Finished => Decision::Listen,
        }
    }

    fn on_receive(&mut self, station: usize, sender: usize, msg: &Message, round: u64) {
        let sender_id = self.ids[sender];
        let sender_box = self.boxes[sender];
        let my_box = self.boxes[station];
        let my_id = self.ids[station];
        let activation = if self.st[station].active_from.is_none() {
            Some(self.activation_round(round))
        } else {
            None
        };
        let st = &mut self.st[station];
        if let Some(a) = activation {
            st.active_from = Some(a);
        }
        if st.await_k2 == Some(round) {
            st.heard_in_await_k2 = true;
        }
        match msg {
            Message::LeaderBeacon { box_i, box_j } => {
                st.learn(my_box, BoxCoord::new(*box_i, *box_j), sender_id);
            }
            Message::Announce {
                elected,
                box_i,
                box_j,
            } => {
                let b = BoxCoord::new(*box_i, *box_j);
                st.learn(my_box, b, *elected);
                st.learn(my_box, sender_box, sender_id);
                if *elected == my_id {
                    st.is_leader = true;
                    st.learn(my_box, my_box, my_id);
                }
            }
            Message::Candidate { box_i, box_j } => {
                if st.is_leader {
                    st.cand = Some((round, sender_id, BoxCoord::new(*box_i, *box_j)));
                }
            }
            Message::Probe => {
                if st.await_k3 == Some(round) {
                    if let Some((_, helper_id)) = st.helper {
                        if helper_id == sender_id {
                            st.probe_heard = true;
                        }
                    }
                }
            }
            Message::Broadcast => {}
        }
    }

    fn is_done(&self, _station: usize, round: u64) -> bool {
        round > self.sched.horizon()
    }
}
