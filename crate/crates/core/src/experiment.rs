//! Batch experiment harness: seeded generation, multi-trial protocol runs,
//! per-trial records, per-n aggregates, and CSV/JSON export.
//!
//! Reruns of the same configuration produce byte-identical outputs: trial
//! seeds derive from `(base_seed, n, trial)`, trials merge in `(n, trial)`
//! order regardless of the worker count, and exports carry no timestamps.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{mix_seed, run, EngineConfig, SimResult};
use crate::net::{gen_social_budget, gen_uniform_budget, NetError, Network};
use crate::protocols::{Backoff, ProtocolError, RandBroadcast, UnknownBroadcast};
use crate::sinr::{SinrError, SinrParams};

/// Environment variable overriding the default worker count.
pub const WORKERS_ENV: &str = "SINRCAST_WORKERS";

#[derive(Error, Debug)]
pub enum ExperimentError {
    #[error(transparent)]
    Sinr(#[from] SinrError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SinrSpec {
    pub alpha: f64,
    pub beta: f64,
    pub noise: f64,
    pub eps: f64,
}

impl SinrSpec {
    pub fn params(&self) -> Result<SinrParams, SinrError> {
        SinrParams::new(self.alpha, self.beta, self.noise, self.eps)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeneratorKind {
    Uniform,
    Social { p_pref: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Rand,
    Unknown,
    Backoff,
}

impl ProtocolKind {
    pub fn label(&self) -> &'static str {
        match self {
            ProtocolKind::Rand => "rand",
            ProtocolKind::Unknown => "unknown",
            ProtocolKind::Backoff => "backoff",
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    #[serde(default)]
    pub d: Option<u32>,
    #[serde(default)]
    pub dbar: Option<u32>,
    #[serde(default)]
    pub t: Option<u64>,
    #[serde(default = "default_delta_fail")]
    pub delta_fail: f64,
}

fn default_delta_fail() -> f64 {
    0.05
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub generator: GeneratorKind,
    pub protocol: ProtocolConfig,
    pub n_values: Vec<usize>,
    pub trials: u32,
    pub side: f64,
    pub sinr: SinrSpec,
    pub base_seed: u64,
    /// Engine guard: multiples of the schedule's predicted round budget.
    #[serde(default = "default_max_rounds_factor")]
    pub max_rounds_factor: u64,
    /// Absolute engine guard overriding the factor when set.
    #[serde(default)]
    pub max_rounds_override: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Connectivity retry budget per generated instance.
    #[serde(default = "default_gen_attempts")]
    pub gen_attempts: u32,
}

fn default_gen_attempts() -> u32 {
    crate::net::DEFAULT_GEN_ATTEMPTS
}

fn default_max_rounds_factor() -> u64 {
    50
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_values.is_empty() {
            return Err(ExperimentError::BadConfig("n_values is empty".into()));
        }
        if self.trials == 0 {
            return Err(ExperimentError::BadConfig("trials must be >= 1".into()));
        }
        self.sinr.params()?;
        if let GeneratorKind::Social { p_pref } = self.generator {
            if !(0.0..=1.0).contains(&p_pref) {
                return Err(ExperimentError::BadConfig(format!(
                    "p_pref must lie in [0,1], got {p_pref}"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ExperimentError::Malformed(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// One trial's outcome. `time` is the completion round or `-1`, `ratio` is
/// `time / D` or `-1`; both sentinels mark incomplete runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub n: usize,
    pub trial: u32,
    pub seed: u64,
    pub ecc: u32,
    pub time: i64,
    pub ratio: f64,
    pub protocol: String,
    pub complete: bool,
    pub rounds_executed: u64,
    pub all_done_round: Option<u64>,
    pub d_used: Option<u32>,
    pub dbar_used: Option<u32>,
    pub t_used: Option<u64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub n: usize,
    pub trials: u32,
    pub completed: u32,
    pub errored: u32,
    pub complete_rate: f64,
    /// Mean/min/max completion round over complete trials (-1 when none).
    pub mean_time: f64,
    pub min_time: i64,
    pub max_time: i64,
    /// Mean time/eccentricity over complete trials (-1 when none).
    pub mean_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct BatchResult {
    pub records: Vec<ExperimentRecord>,
    pub aggregates: Vec<Aggregate>,
}

/// Seed of one trial; also the generation seed of its network.
pub fn trial_seed(base_seed: u64, n: usize, trial: u32) -> u64 {
    mix_seed(mix_seed(base_seed, n as u64), trial as u64)
}

fn generate(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<Network, NetError> {
    let params = cfg.sinr.params()?;
    match cfg.generator {
        GeneratorKind::Uniform => {
            gen_uniform_budget(n, cfg.side, &params, seed, cfg.gen_attempts).map(|(net, _)| net)
        }
        GeneratorKind::Social { p_pref } => {
            gen_social_budget(n, cfg.side, &params, p_pref, seed, cfg.gen_attempts)
                .map(|(net, _)| net)
        }
    }
}

/// Run one trial: generate the network, size the protocol, run the engine.
pub fn run_trial(
    cfg: &ExperimentConfig,
    n: usize,
    trial: u32,
) -> Result<(ExperimentRecord, SimResult), ExperimentError> {
    let seed = trial_seed(cfg.base_seed, n, trial);
    let net = generate(cfg, n, seed)?;
    let ecc = net.eccentricity()?;
    let run_seed = mix_seed(seed, 0x52554e);
    let pc = &cfg.protocol;

    let (result, d_used, dbar_used, t_used) = match pc.kind {
        ProtocolKind::Rand => {
            let (d, t_default) = RandBroadcast::defaults(&net, pc.delta_fail, pc.d)?;
            let t = pc.t.unwrap_or(t_default);
            let mut proto = RandBroadcast::new(&net, d, t)?;
            let engine_cfg = EngineConfig {
                max_rounds: guard(cfg, proto.horizon()),
                record_trace: false,
                stop_when_informed: true,
            };
            let res = run(&net, &mut proto, run_seed, &engine_cfg)?;
            (res, Some(d), None, Some(t))
        }
        ProtocolKind::Unknown => {
            let mut ucfg = UnknownBroadcast::defaults(&net, pc.delta_fail, pc.d, pc.dbar, pc.t)?;
            if let Some(t) = pc.t {
                ucfg.iterations = t;
            }
            let mut proto = UnknownBroadcast::new(&net, ucfg)?;
            let engine_cfg = EngineConfig {
                max_rounds: guard(cfg, proto.horizon()),
                record_trace: false,
                stop_when_informed: true,
            };
            let res = run(&net, &mut proto, run_seed, &engine_cfg)?;
            (res, Some(ucfg.d), Some(ucfg.dbar), Some(ucfg.iterations))
        }
        ProtocolKind::Backoff => {
            // backoff has no schedule horizon of its own; it terminates on
            // silence, so guard with the randomized schedule's prediction
            let (d, t) = RandBroadcast::defaults(&net, pc.delta_fail, Some(pc.d.unwrap_or(10)))?;
            let horizon = 1 + t * (d as u64) * (d as u64);
            let mut proto = Backoff::new(&net)?;
            let engine_cfg = EngineConfig {
                max_rounds: guard(cfg, horizon),
                record_trace: false,
                stop_when_informed: false,
            };
            let res = run(&net, &mut proto, run_seed, &engine_cfg)?;
            (res, None, None, None)
        }
    };

    let time = result.completion_round.map(|r| r as i64).unwrap_or(-1);
    let record = ExperimentRecord {
        n,
        trial,
        seed,
        ecc,
        time,
        ratio: if time >= 0 {
            time as f64 / ecc.max(1) as f64
        } else {
            -1.0
        },
        protocol: pc.kind.label().to_string(),
        complete: result.complete(),
        rounds_executed: result.rounds_executed,
        all_done_round: result.all_done_round,
        d_used,
        dbar_used,
        t_used,
        error: None,
    };
    // each round's receptions reach at most the unit range, so completion
    // takes at least the farthest station's Euclidean distance in rounds
    // (hop count over the shorter graph edges is not a valid floor: a
    // low-interference shot can reach past the (1-eps) edge threshold)
    debug_assert!(
        !record.complete || record.time >= euclidean_floor(&net) as i64,
        "completion {} beats the range floor",
        record.time
    );
    Ok((record, result))
}

/// Minimum number of rounds to reach the farthest station from the source.
fn euclidean_floor(net: &Network) -> u64 {
    let src = net.stations()[net.source()].pos;
    let max_dist = net
        .stations()
        .iter()
        .map(|s| s.pos.dist(&src))
        .fold(0.0f64, f64::max);
    (max_dist / net.params().range()).ceil() as u64
}

fn guard(cfg: &ExperimentConfig, horizon: u64) -> u64 {
    cfg.max_rounds_override
        .unwrap_or_else(|| horizon.saturating_mul(cfg.max_rounds_factor).max(1))
}

fn error_record(cfg: &ExperimentConfig, n: usize, trial: u32, err: String) -> ExperimentRecord {
    ExperimentRecord {
        n,
        trial,
        seed: trial_seed(cfg.base_seed, n, trial),
        ecc: 0,
        time: -1,
        ratio: -1.0,
        protocol: cfg.protocol.kind.label().to_string(),
        complete: false,
        rounds_executed: 0,
        all_done_round: None,
        d_used: None,
        dbar_used: None,
        t_used: None,
        error: Some(err),
    }
}

fn worker_count(cfg: &ExperimentConfig) -> usize {
    cfg.workers
        .or_else(|| {
            std::env::var(WORKERS_ENV)
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1)
}

/// Run every `(n, trial)` pair of the configuration. Trial errors are
/// recorded and the batch continues.
pub fn run_batch(cfg: &ExperimentConfig) -> Result<BatchResult, ExperimentError> {
    cfg.validate()?;
    let mut jobs: Vec<(usize, u32)> = Vec::new();
    for &n in &cfg.n_values {
        for t in 0..cfg.trials {
            jobs.push((n, t));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(cfg))
        .build()
        .map_err(|e| ExperimentError::BadConfig(e.to_string()))?;
    let records: Vec<ExperimentRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(n, t)| match run_trial(cfg, n, t) {
                Ok((rec, _)) => rec,
                Err(e) => error_record(cfg, n, t, e.to_string()),
            })
            .collect()
    });
    let aggregates = aggregate(&records, &cfg.n_values);
    Ok(BatchResult {
        records,
        aggregates,
    })
}

/// Per-n aggregates, recomputable from the per-trial records.
pub fn aggregate(records: &[ExperimentRecord], n_values: &[usize]) -> Vec<Aggregate> {
    n_values
        .iter()
        .map(|&n| {
            let rows: Vec<&ExperimentRecord> = records.iter().filter(|r| r.n == n).collect();
            let complete: Vec<&&ExperimentRecord> =
                rows.iter().filter(|r| r.complete).collect();
            let errored = rows.iter().filter(|r| r.error.is_some()).count() as u32;
            let (mean_time, min_time, max_time, mean_ratio) = if complete.is_empty() {
                (-1.0, -1, -1, -1.0)
            } else {
                let k = complete.len() as f64;
                (
                    complete.iter().map(|r| r.time as f64).sum::<f64>() / k,
                    complete.iter().map(|r| r.time).min().unwrap(),
                    complete.iter().map(|r| r.time).max().unwrap(),
                    complete.iter().map(|r| r.ratio).sum::<f64>() / k,
                )
            };
            Aggregate {
                n,
                trials: rows.len() as u32,
                completed: complete.len() as u32,
                errored,
                complete_rate: if rows.is_empty() {
                    0.0
                } else {
                    complete.len() as f64 / rows.len() as f64
                },
                mean_time,
                min_time,
                max_time,
                mean_ratio,
            }
        })
        .collect()
}

/// Per-trial CSV: `n,trial,seed,D,time,ratio,protocol,complete`.
pub fn trials_csv(records: &[ExperimentRecord]) -> String {
    let mut out = String::from("n,trial,seed,D,time,ratio,protocol,complete\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.n,
            r.trial,
            r.seed,
            r.ecc,
            r.time,
            format_ratio(r.ratio),
            r.protocol,
            r.complete
        ));
    }
    out
}

/// Per-n aggregate CSV: `n,mean_time,mean_ratio,complete_rate`.
pub fn aggregates_csv(aggregates: &[Aggregate]) -> String {
    let mut out = String::from("n,mean_time,mean_ratio,complete_rate\n");
    for a in aggregates {
        out.push_str(&format!(
            "{},{},{},{}\n",
            a.n,
            format_ratio(a.mean_time),
            format_ratio(a.mean_ratio),
            format_ratio(a.complete_rate)
        ));
    }
    out
}

fn format_ratio(x: f64) -> String {
    if x < 0.0 {
        "-1".to_string()
    } else {
        format!("{x:.6}")
    }
}

/// Write `trials.csv`, `aggregates.csv` and `records.json` into `dir`.
pub fn write_outputs(result: &BatchResult, dir: impl AsRef<Path>) -> Result<(), ExperimentError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trials.csv"), trials_csv(&result.records))?;
    fs::write(dir.join("aggregates.csv"), aggregates_csv(&result.aggregates))?;
    let json = serde_json::json!({
        "records": result.records,
        "aggregates": result.aggregates,
    });
    fs::write(
        dir.join("records.json"),
        serde_json::to_string_pretty(&json).expect("records serialize"),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            generator: GeneratorKind::Uniform,
            protocol: ProtocolConfig {
                kind: ProtocolKind::Rand,
                d: Some(2),
                dbar: None,
                t: None,
                delta_fail: 0.05,
            },
            n_values: vec![12],
            trials: 1,
            side: 1.0,
            sinr: SinrSpec {
                alpha: 2.5,
                beta: 1.0,
                noise: 1.0,
                eps: 0.2,
            },
            base_seed: 7,
            max_rounds_factor: 50,
            max_rounds_override: None,
            workers: Some(1),
            gen_attempts: 1000,
        }
    }

    #[test]
    fn one_trial_yields_one_record() {
        let res = run_batch(&tiny_config()).unwrap();
        assert_eq!(res.records.len(), 1);
        assert_eq!(res.aggregates.len(), 1);
        let r = &res.records[0];
        assert!(r.complete);
        assert!(r.time >= r.ecc as i64);
        assert!((r.ratio - r.time as f64 / r.ecc.max(1) as f64).abs() < 1e-12);
    }

    #[test]
    fn reruns_and_worker_counts_do_not_change_the_bytes() {
        let mut cfg = tiny_config();
        cfg.n_values = vec![12, 20];
        cfg.trials = 3;
        let a = run_batch(&cfg).unwrap();
        cfg.workers = Some(4);
        let b = run_batch(&cfg).unwrap();
        assert_eq!(trials_csv(&a.records), trials_csv(&b.records));
        assert_eq!(aggregates_csv(&a.aggregates), aggregates_csv(&b.aggregates));
    }

    #[test]
    fn incomplete_runs_carry_sentinels() {
        let mut cfg = tiny_config();
        // one round on a wide square: stations beyond unit range of the
        // source cannot be informed yet
        cfg.max_rounds_override = Some(1);
        cfg.side = 4.0;
        cfg.n_values = vec![40];
        let res = run_batch(&cfg).unwrap();
        let r = &res.records[0];
        assert!(!r.complete);
        assert_eq!(r.time, -1);
        assert_eq!(r.ratio, -1.0);
        let csv = trials_csv(&res.records);
        assert!(csv.lines().nth(1).unwrap().ends_with("false"));
        assert_eq!(res.aggregates[0].mean_time, -1.0);
    }

    #[test]
    fn csv_headers_match_the_contract() {
        let res = run_batch(&tiny_config()).unwrap();
        assert!(trials_csv(&res.records).starts_with("n,trial,seed,D,time,ratio,protocol,complete\n"));
        assert!(aggregates_csv(&res.aggregates).starts_with("n,mean_time,mean_ratio,complete_rate\n"));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = tiny_config();
        let text = cfg.to_json_string();
        let back = ExperimentConfig::from_json_str(&text).unwrap();
        assert_eq!(cfg.n_values, back.n_values);
        assert_eq!(cfg.base_seed, back.base_seed);
        assert_eq!(cfg.protocol.kind, back.protocol.kind);
    }

    #[test]
    fn overrides_are_echoed_in_run_metadata() {
        let mut cfg = tiny_config();
        cfg.n_values = vec![20];
        cfg.side = 1.5;
        cfg.protocol = ProtocolConfig {
            kind: ProtocolKind::Unknown,
            d: Some(5),
            dbar: Some(10),
            t: Some(12),
            delta_fail: 0.05,
        };
        let (rec, _) = run_trial(&cfg, 20, 0).unwrap();
        assert_eq!(rec.d_used, Some(5));
        assert_eq!(rec.dbar_used, Some(10));
        assert_eq!(rec.t_used, Some(12));
        assert_eq!(rec.protocol, "unknown");
    }

    #[test]
    fn aggregates_are_recomputable_from_records() {
        let mut cfg = tiny_config();
        cfg.trials = 4;
        let res = run_batch(&cfg).unwrap();
        let again = aggregate(&res.records, &cfg.n_values);
        assert_eq!(res.aggregates, again);
    }
}
