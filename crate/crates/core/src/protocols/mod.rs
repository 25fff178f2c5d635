//! The three broadcast protocols driven by the engine: a density-aware
//! randomized schedule over diluted grid classes, a density-oblivious
//! variant that elects one leader per box, and an exponential-backoff
//! baseline.

mod backoff;
mod rand_broadcast;
mod unknown;

pub use backoff::Backoff;
pub use rand_broadcast::RandBroadcast;
pub use unknown::{BoxNeighborhood, UnknownBroadcast, UnknownConfig};

use std::collections::HashMap;

use thiserror::Error;

use crate::grid::{box_of, BoxCoord, Grid};
use crate::net::Network;

#[derive(Error, Debug)]
pub enum ProtocolError {
    #[error("dilution must be at least 1")]
    ZeroDilution,
    #[error("iteration budget must be at least 1")]
    ZeroIterations,
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Param(#[from] crate::params::ParamError),
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
}

/// Box of every station on the given grid.
pub(crate) fn station_boxes(net: &Network, grid: &Grid) -> Vec<BoxCoord> {
    net.stations()
        .iter()
        .map(|s| box_of(s.pos, grid))
        .collect()
}

/// Per-station count of stations sharing its box, the "known local
/// density" the harness grants density-aware protocols.
pub(crate) fn local_densities(boxes: &[BoxCoord]) -> Vec<u32> {
    let mut counts: HashMap<BoxCoord, u32> = HashMap::new();
    for b in boxes {
        *counts.entry(*b).or_insert(0) += 1;
    }
    boxes.iter().map(|b| counts[b]).collect()
}

/// `ceil(log2(x))` for `x >= 1`.
pub(crate) fn ceil_log2(x: u64) -> u32 {
    debug_assert!(x >= 1);
    x.next_power_of_two().trailing_zeros()
}
