//! Discrete-round simulator and protocol library for broadcast in ad-hoc
//! wireless networks under the physical (SINR) interference model.
//!
//! The crate provides:
//!
//! * [`sinr`]: the reception rule and per-round delivery resolution;
//! * [`grid`]: square grids, box adjacency, octants and dilution classes;
//! * [`params`]: closed-form schedule parameters and bounds;
//! * [`net`]: uniform and preferential random network generators with
//!   connectivity enforcement and JSON persistence;
//! * [`engine`]: the synchronous round loop with non-spontaneous wake-up
//!   and no collision detection;
//! * [`protocols`]: a density-aware randomized broadcast, a
//!   density-oblivious leader-electing broadcast, and an exponential
//!   backoff baseline;
//! * [`experiment`]: a seeded, reproducible batch harness with CSV/JSON
//!   export.
//!
//! ```
//! use sinrcast::engine::{run, EngineConfig};
//! use sinrcast::protocols::RandBroadcast;
//! use sinrcast::{gen_uniform, SinrParams};
//!
//! let params = SinrParams::new(2.5, 1.0, 1.0, 0.2)?;
//! let net = gen_uniform(60, 3.0, &params, 7)?;
//! let (d, budget) = RandBroadcast::defaults(&net, 0.05, Some(10))?;
//! let mut protocol = RandBroadcast::new(&net, d, budget)?;
//! let cfg = EngineConfig {
//!     max_rounds: protocol.horizon(),
//!     ..Default::default()
//! };
//! let result = run(&net, &mut protocol, 1, &cfg)?;
//! assert!(result.complete());
//! assert!(result.completion_round.unwrap() >= 1);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

// validation uses negated comparisons so NaN inputs fail closed
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod experiment;
pub mod grid;
pub mod net;
pub mod params;
pub mod protocols;
pub mod sinr;

pub use engine::{mix_seed, replay_check, run, Decision, EngineConfig, Message, Protocol, SimResult, Trace};
pub use grid::{box_of, BoxCoord, Grid};
pub use net::{gen_social, gen_uniform, Network, NetworkStats};
pub use sinr::{Point, SinrParams, Station};
