//! Density-aware randomized broadcast.
//!
//! Round 1: the source transmits. Every following round belongs to one slot
//! of an outer iteration of `d^2` slots; slot `(a, b)` (row-major) permits
//! exactly the informed stations whose box coordinates are congruent to
//! `(a, b) mod d` on the `eps/(2*sqrt(2))` grid, each transmitting
//! independently with probability `1/Delta` where `Delta` is the station
//! count of its own box. The schedule runs for a fixed number of iterations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{Decision, Message, Protocol};
use crate::grid::{dilution_class, Grid};
use crate::net::Network;
use crate::params::{dilution_factor, trial_count, DilutionSpec};

use super::{local_densities, station_boxes, ProtocolError};

pub struct RandBroadcast {
    d: u64,
    iterations: u64,
    source: usize,
    class: Vec<(u32, u32)>,
    density: Vec<u32>,
    /// Last round of the schedule; stations are done afterwards.
    deadline: u64,
}

impl RandBroadcast {
    pub fn new(net: &Network, d: u32, iterations: u64) -> Result<Self, ProtocolError> {
        if d == 0 {
            return Err(ProtocolError::ZeroDilution);
        }
        if iterations == 0 {
            return Err(ProtocolError::ZeroIterations);
        }
        let grid = Grid::new(Grid::known_density_cell(net.params().eps))?;
        let boxes = station_boxes(net, &grid);
        let density = local_densities(&boxes);
        let class = boxes.iter().map(|b| dilution_class(*b, d)).collect();
        Ok(RandBroadcast {
            d: d as u64,
            iterations,
            source: net.source(),
            class,
            density,
            deadline: 1 + iterations * (d as u64) * (d as u64),
        })
    }

    /// Schedule parameters for a target failure probability `delta_fail`:
    /// the dilution that caps interference at `N*alpha*eps/4` (or an
    /// explicit override, as the simulation study uses `d = 10`), and the
    /// iteration budget `trial_count(D, delta', 1/(2e))` with
    /// `delta' = delta_fail / (4 * (D+1)^3)`.
    pub fn defaults(
        net: &Network,
        delta_fail: f64,
        d_override: Option<u32>,
    ) -> Result<(u32, u64), ProtocolError> {
        let p = net.params();
        let ecc = net.eccentricity()?;
        let d = match d_override {
            Some(d) if d >= 1 => d,
            Some(_) => return Err(ProtocolError::ZeroDilution),
            None => dilution_factor(&DilutionSpec {
                alpha: p.alpha,
                power: p.power,
                gamma: Grid::known_density_cell(p.eps),
                budget: p.noise * p.alpha * p.eps / 4.0,
                n: net.len().max(2) as u64,
            })?,
        };
        let delta_prime = delta_fail / (4.0 * ((ecc as f64) + 1.0).powi(3));
        let t = trial_count(ecc, delta_prime, 1.0 / (2.0 * std::f64::consts::E))?;
        Ok((d, t))
    }

    /// Total scheduled rounds (the round-budget prediction for this run).
    pub fn horizon(&self) -> u64 {
        self.deadline
    }
}

impl Protocol for RandBroadcast {
    fn decide(&mut self, station: usize, round: u64, rng: &mut ChaCha8Rng) -> Decision {
        if round == 1 {
            return if station == self.source {
                Decision::Transmit(Message::Broadcast)
            } else {
                Decision::Listen
            };
        }
        let s = round - 2;
        let d2 = self.d * self.d;
        if s / d2 >= self.iterations {
            return Decision::Listen;
        }
        let slot = s % d2;
        let (a, b) = ((slot / self.d) as u32, (slot % self.d) as u32);
        if self.class[station] == (a, b)
            && (rng.random::<f64>() * self.density[station] as f64) < 1.0
        {
            Decision::Transmit(Message::Broadcast)
        } else {
            Decision::Listen
        }
    }

    fn on_receive(&mut self, _station: usize, _sender: usize, _msg: &Message, _round: u64) {}

    fn is_done(&self, _station: usize, round: u64) -> bool {
        round > self.deadline
    }
}
