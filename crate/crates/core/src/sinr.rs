//! Reception physics: the signal-to-interference-and-noise ratio and the
//! per-round resolution of which listeners receive which transmission.
//!
//! A transmission from `v` is received by `u` when `u` is not itself
//! transmitting and
//!
//! ```text
//!     P * dist(v,u)^-alpha
//! ----------------------------------------  >=  beta
//! N + sum_{w transmitting, w != v} P * dist(w,u)^-alpha
//! ```
//!
//! With `beta >= 1` at most one transmitter can clear the threshold at any
//! given listener, so reception is unambiguous.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute slack applied to the threshold comparison so that results are
/// robust to floating-point summation order: a ratio counts as received when
/// `ratio >= beta - RECEPTION_SLACK`.
pub const RECEPTION_SLACK: f64 = 1e-12;

/// Above this many (transmitter, listener) pairs a round is resolved in
/// parallel across listeners.
const PAR_PAIR_THRESHOLD: usize = 32_768;

#[derive(Error, Debug)]
pub enum SinrError {
    #[error("invalid SINR parameters: {0}")]
    InvalidParams(String),
    #[error("threshold below one breaks reception uniqueness (beta = {0})")]
    ThresholdBelowOne(f64),
    #[error("sender {0} is not in the transmitter set")]
    SenderNotTransmitting(u64),
    #[error("receiver {0} is in the transmitter set")]
    ReceiverTransmitting(u64),
    #[error("stations {0} and {1} occupy the same position")]
    CoincidentStations(u64, u64),
    #[error("station {0} appears in both the transmitter and listener sets")]
    OverlappingSets(u64),
    #[error("station {0} appears more than once")]
    DuplicateStation(u64),
    #[error("more than one transmitter above threshold at listener {0}")]
    AmbiguousReception(u64),
}

/// A point in the plane, in range units (the transmission range is 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist_sq(other).sqrt()
    }
}

/// A station: a unique positive integer id and a position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Station {
    pub id: u64,
    pub pos: Point,
}

impl Station {
    pub fn new(id: u64, x: f64, y: f64) -> Self {
        Station {
            id,
            pos: Point::new(x, y),
        }
    }
}

/// Model parameters. `power` is pinned to `beta * noise` so that the
/// single-transmission range `r = (P / (beta * N))^(1/alpha)` is exactly 1;
/// all distances in the crate are expressed in these range units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinrParams {
    /// Path-loss exponent, `>= 2`.
    pub alpha: f64,
    /// Reception threshold, `>= 1`.
    pub beta: f64,
    /// Ambient noise, `>= 1`.
    pub noise: f64,
    /// Uniform transmit power, equal to `beta * noise`.
    pub power: f64,
    /// Communication-graph slack, `0 < eps < 1/2`.
    pub eps: f64,
}

impl SinrParams {
    pub fn new(alpha: f64, beta: f64, noise: f64, eps: f64) -> Result<Self, SinrError> {
        let p = SinrParams {
            alpha,
            beta,
            noise,
            power: beta * noise,
            eps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SinrError> {
        if !(self.alpha >= 2.0) {
            return Err(SinrError::InvalidParams(format!(
                "alpha must be >= 2, got {}",
                self.alpha
            )));
        }
        if !(self.beta >= 1.0) {
            return Err(SinrError::ThresholdBelowOne(self.beta));
        }
        if !(self.noise >= 1.0) {
            return Err(SinrError::InvalidParams(format!(
                "noise must be >= 1, got {}",
                self.noise
            )));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(SinrError::InvalidParams(format!(
                "eps must lie in (0, 1/2), got {}",
                self.eps
            )));
        }
        if !((self.power - self.beta * self.noise).abs() <= 1e-9 * self.beta * self.noise) {
            return Err(SinrError::InvalidParams(format!(
                "power {} breaks the range normalization (expected beta * noise = {})",
                self.power,
                self.beta * self.noise
            )));
        }
        Ok(())
    }

    /// Single-transmission range; 1 by construction.
    pub fn range(&self) -> f64 {
        (self.power / (self.beta * self.noise)).powf(1.0 / self.alpha)
    }

    /// Edge threshold of the communication graph: `(1 - eps) * r`.
    pub fn comm_radius(&self) -> f64 {
        (1.0 - self.eps) * self.range()
    }

    /// Received power of one transmission over squared distance `d_sq`.
    pub fn received_power_sq(&self, d_sq: f64) -> f64 {
        self.power * d_sq.powf(-self.alpha * 0.5)
    }
}

/// Whether a computed ratio clears the reception threshold.
pub fn clears_threshold(ratio: f64, beta: f64) -> bool {
    ratio >= beta - RECEPTION_SLACK
}

/// The ratio of `sender`'s signal at `receiver` to noise plus the combined
/// signal of every other transmitter. Interference terms are accumulated in
/// descending-distance order so the sum is reproducible.
pub fn sinr_ratio(
    sender: &Station,
    receiver: &Station,
    transmitters: &[Station],
    params: &SinrParams,
) -> Result<f64, SinrError> {
    params.validate()?;
    if !transmitters.iter().any(|t| t.id == sender.id) {
        return Err(SinrError::SenderNotTransmitting(sender.id));
    }
    if transmitters.iter().any(|t| t.id == receiver.id) {
        return Err(SinrError::ReceiverTransmitting(receiver.id));
    }
    let d_sq = sender.pos.dist_sq(&receiver.pos);
    if d_sq == 0.0 {
        return Err(SinrError::CoincidentStations(sender.id, receiver.id));
    }
    let signal = params.received_power_sq(d_sq);

    let mut others: Vec<f64> = Vec::with_capacity(transmitters.len().saturating_sub(1));
    for w in transmitters {
        if w.id == sender.id {
            continue;
        }
        let wd_sq = w.pos.dist_sq(&receiver.pos);
        if wd_sq == 0.0 {
            return Err(SinrError::CoincidentStations(w.id, receiver.id));
        }
        others.push(wd_sq);
    }
    // descending distance == ascending power: smallest terms first
    others.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite distances"));
    let mut interference = 0.0;
    for wd_sq in others {
        interference += params.received_power_sq(wd_sq);
    }
    Ok(signal / (params.noise + interference))
}

/// Deliveries of one round: `delivered[k]` is the index into `transmitters`
/// of the message listener `k` received, if any.
pub fn resolve_deliveries(
    transmitters: &[Station],
    listeners: &[Station],
    params: &SinrParams,
) -> Result<Vec<Option<usize>>, SinrError> {
    if params.beta < 1.0 {
        return Err(SinrError::ThresholdBelowOne(params.beta));
    }
    params.validate()?;

    let mut seen = HashSet::with_capacity(transmitters.len());
    for t in transmitters {
        if !seen.insert(t.id) {
            return Err(SinrError::DuplicateStation(t.id));
        }
    }
    for l in listeners {
        if seen.contains(&l.id) {
            return Err(SinrError::OverlappingSets(l.id));
        }
    }
    if transmitters.is_empty() {
        return Ok(vec![None; listeners.len()]);
    }

    let resolve_one = |listener: &Station| -> Result<Option<usize>, SinrError> {
        let mut powers: Vec<(f64, f64)> = Vec::with_capacity(transmitters.len()); // (d_sq, power)
        let mut total = 0.0;
        for t in transmitters {
            let d_sq = t.pos.dist_sq(&listener.pos);
            if d_sq == 0.0 {
                return Err(SinrError::CoincidentStations(t.id, listener.id));
            }
            let p = params.received_power_sq(d_sq);
            powers.push((d_sq, p));
            total += p;
        }
        // First pass with the pooled sum; near-threshold candidates are then
        // re-evaluated term by term (descending distance, as in sinr_ratio)
        // to avoid cancellation when one signal dominates the pool.
        let mut winner: Option<usize> = None;
        for (i, &(_, p)) in powers.iter().enumerate() {
            let coarse = p / (params.noise + (total - p).max(0.0));
            if coarse < params.beta - 1e-6 {
                continue;
            }
            let mut rest: Vec<f64> = powers
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &(d_sq, _))| d_sq)
                .collect();
            rest.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite distances"));
            let mut interference = 0.0;
            for d_sq in rest {
                interference += params.received_power_sq(d_sq);
            }
            let ratio = p / (params.noise + interference);
            if clears_threshold(ratio, params.beta) {
                if winner.is_some() {
                    return Err(SinrError::AmbiguousReception(listener.id));
                }
                winner = Some(i);
            }
        }
        Ok(winner)
    };

    if transmitters.len() * listeners.len() >= PAR_PAIR_THRESHOLD {
        listeners.par_iter().map(resolve_one).collect()
    } else {
        listeners.iter().map(resolve_one).collect()
    }
}

/// A resolved round with the message attached to each transmitter. The
/// resolution itself is agnostic to message content.
#[derive(Clone, Debug)]
pub struct RoundOutcome<M> {
    pub transmitters: Vec<(Station, M)>,
    pub listeners: Vec<Station>,
    /// Per listener: index into `transmitters`.
    pub delivered: Vec<Option<usize>>,
}

impl<M> RoundOutcome<M> {
    /// The (sender, message) a listener received, if any.
    pub fn delivery_to(&self, listener_id: u64) -> Option<(&Station, &M)> {
        let k = self.listeners.iter().position(|l| l.id == listener_id)?;
        self.delivered[k].map(|i| (&self.transmitters[i].0, &self.transmitters[i].1))
    }

    /// True when every listener within Euclidean distance `c` of `sender_id`
    /// received that sender's message in this round.
    pub fn c_successful(&self, sender_id: u64, c: f64) -> Result<bool, SinrError> {
        let idx = self
            .transmitters
            .iter()
            .position(|(t, _)| t.id == sender_id)
            .ok_or(SinrError::SenderNotTransmitting(sender_id))?;
        let sender = self.transmitters[idx].0;
        for (k, l) in self.listeners.iter().enumerate() {
            if l.pos.dist(&sender.pos) <= c && self.delivered[k] != Some(idx) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Resolve one round keeping messages attached.
pub fn resolve_round<M: Clone>(
    transmitters: &[(Station, M)],
    listeners: &[Station],
    params: &SinrParams,
) -> Result<RoundOutcome<M>, SinrError> {
    let tx: Vec<Station> = transmitters.iter().map(|(s, _)| *s).collect();
    let delivered = resolve_deliveries(&tx, listeners, params)?;
    Ok(RoundOutcome {
        transmitters: transmitters.to_vec(),
        listeners: listeners.to_vec(),
        delivered,
    })
}

/// Whether `sender_id` transmitted `c`-successfully in the resolved round.
pub fn is_c_successful<M>(
    sender_id: u64,
    c: f64,
    outcome: &RoundOutcome<M>,
) -> Result<bool, SinrError> {
    outcome.c_successful(sender_id, c)
}
