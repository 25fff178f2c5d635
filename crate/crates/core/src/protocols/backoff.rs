//! Exponential-backoff baseline with density-limited windows.
//!
//! An informed station walks through windows of sizes `2^0, 2^1, ...,
//! 2^ceil(log2(Delta))`, transmitting the payload in one uniformly random
//! slot of each window. `Delta` is the station's local density bound: the
//! number of stations within its communication radius, itself included.
//! Receiving a transmission from a station not heard before counts as an
//! acknowledgment: the window sequence restarts at size 1. A full silent
//! sequence (plus one listening round for a late acknowledgment) ends the
//! station's participation.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{Decision, Message, Protocol};
use crate::net::Network;

use super::{ceil_log2, ProtocolError};

#[derive(Clone, Debug)]
struct StationState {
    started: bool,
    done: bool,
    /// Current window exponent.
    w: u32,
    w_max: u32,
    window_end: u64,
    tx_round: u64,
    acked: bool,
    heard: HashSet<u64>,
}

impl StationState {
    fn new(w_max: u32) -> Self {
        StationState {
            started: false,
            done: false,
            w: 0,
            w_max,
            window_end: 0,
            tx_round: 0,
            acked: false,
            heard: HashSet::new(),
        }
    }
}

pub struct Backoff {
    st: Vec<StationState>,
    ids: Vec<u64>,
}

impl Backoff {
    pub fn new(net: &Network) -> Result<Self, ProtocolError> {
        let st = (0..net.len())
            .map(|i| StationState::new(ceil_log2(net.neighbors(i).len() as u64 + 1)))
            .collect();
        Ok(Backoff {
            st,
            ids: net.stations().iter().map(|s| s.id).collect(),
        })
    }

    fn open_window(st: &mut StationState, start: u64, rng: &mut ChaCha8Rng) {
        let size = 1u64 << st.w;
        st.window_end = start + size - 1;
        st.tx_round = if size == 1 {
            start
        } else {
            start + rng.random_range(0..size)
        };
    }
}

impl Protocol for Backoff {
    fn decide(&mut self, station: usize, round: u64, rng: &mut ChaCha8Rng) -> Decision {
        let st = &mut self.st[station];
        if st.done {
            return Decision::Listen;
        }
        if !st.started {
            st.started = true;
            st.w = 0;
            Self::open_window(st, round, rng);
        } else if st.acked {
            // restart with the smallest window from the next round onwards
            st.acked = false;
            st.w = 0;
            Self::open_window(st, round, rng);
        } else if round > st.window_end {
            // after the final window the station listens one more round for
            // a late acknowledgment before giving up
            if st.w == st.w_max && round == st.window_end + 1 {
                return Decision::Listen;
            }
            st.w += 1;
            if st.w > st.w_max {
                st.done = true;
                return Decision::Listen;
            }
            Self::open_window(st, round, rng);
        }
        if round == st.tx_round {
            Decision::Transmit(Message::Broadcast)
        } else {
            Decision::Listen
        }
    }

    fn on_receive(&mut self, station: usize, sender: usize, _msg: &Message, _round: u64) {
        let sender_id = self.ids[sender];
        let st = &mut self.st[station];
        let new_voice = st.heard.insert(sender_id);
        // the reception that wakes the station up records the informer but
        // is not an acknowledgment of anything the station sent
        if new_voice && st.started && !st.done {
            st.acked = true;
        }
    }

    fn is_done(&self, station: usize, _round: u64) -> bool {
        self.st[station].done
    }
}
