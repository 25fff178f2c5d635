//! Command line for network generation, single protocol runs, batch
//! experiments, schedule-parameter tables, and trace verification.

use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sinrcast::engine::{replay_check, run, EngineConfig, Trace};
use sinrcast::experiment::{run_batch, write_outputs, ExperimentConfig};
use sinrcast::grid::Grid;
use sinrcast::net::{gen_social_budget, gen_uniform_budget, Network};
use sinrcast::params::{
    dilution_factor, series_constant, trial_count, unknown_density_dilutions, DilutionSpec,
};
use sinrcast::protocols::{Backoff, RandBroadcast, UnknownBroadcast};
use sinrcast::sinr::SinrParams;

#[derive(Parser)]
#[command(name = "sinrcast", version, about = "Broadcast simulation under the SINR model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a connected random network and write it as JSON.
    Gen(GenArgs),
    /// Run one protocol over a network file.
    Run(RunArgs),
    /// Run a batch experiment from a JSON config.
    Batch(BatchArgs),
    /// Print a CSV table of schedule parameters.
    Params(ParamsArgs),
    /// Re-verify a recorded trace against a network file.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Uniform,
    Social,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    kind: GenKind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 6.0)]
    side: f64,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long, default_value_t = 2.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Weighted-box placement probability (social generator).
    #[arg(long, default_value_t = 0.9)]
    p_pref: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Override the source station by id (default: nearest the center).
    #[arg(long)]
    source_id: Option<u64>,
    /// Draw station ids from [1, n^3] instead of 1..=n.
    #[arg(long, default_value_t = false)]
    random_ids: bool,
    /// Connectivity retry budget (sparse settings may need far more).
    #[arg(long, default_value_t = sinrcast::net::DEFAULT_GEN_ATTEMPTS)]
    attempts: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtoArg {
    Rand,
    Unknown,
    Backoff,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long, value_enum)]
    protocol: ProtoArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    dbar: Option<u32>,
    /// Iteration budget override.
    #[arg(long)]
    t: Option<u64>,
    #[arg(long, default_value_t = 0.05)]
    delta_fail: f64,
    #[arg(long)]
    max_rounds: Option<u64>,
    /// Keep running after everyone is informed (to observe termination).
    #[arg(long, default_value_t = false)]
    run_to_done: bool,
    /// Record the run and write it as JSON-lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override the config's trial count.
    #[arg(long)]
    trials: Option<u32>,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Override the config's protocol.
    #[arg(long, value_enum)]
    protocol: Option<ProtoArg>,
    /// Override the protocol's dilution.
    #[arg(long)]
    d: Option<u32>,
    /// Override the coarse dilution (density-oblivious protocol).
    #[arg(long)]
    dbar: Option<u32>,
    /// Override the iteration budget.
    #[arg(long)]
    t: Option<u64>,
    /// Override the config's square side.
    #[arg(long)]
    side: Option<f64>,
    /// Override the config's network sizes.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
}

#[derive(Args)]
struct ParamsArgs {
    /// Comma-separated path-loss exponents.
    #[arg(long, value_delimiter = ',', default_value = "2.5")]
    alpha: Vec<f64>,
    /// Comma-separated slack values.
    #[arg(long, value_delimiter = ',', default_value = "0.2")]
    eps: Vec<f64>,
    /// Comma-separated station bounds.
    #[arg(long, value_delimiter = ',', default_value = "1000000")]
    n: Vec<u64>,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Eccentricity assumed by the round-budget column.
    #[arg(long, default_value_t = 10)]
    big_d: u32,
    #[arg(long, default_value_t = 0.05)]
    delta_fail: f64,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    trace: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Params(a) => cmd_params(a),
        Command::Replay(a) => cmd_replay(a),
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let params = SinrParams::new(a.alpha, a.beta, a.noise, a.eps)?;
    let mut net = match a.kind {
        GenKind::Uniform => gen_uniform_budget(a.n, a.side, &params, a.seed, a.attempts)?.0,
        GenKind::Social => {
            gen_social_budget(a.n, a.side, &params, a.p_pref, a.seed, a.attempts)?.0
        }
    };
    if a.random_ids {
        net.randomize_ids(a.seed.wrapping_add(1));
    }
    if let Some(src) = a.source_id {
        net = Network::from_stations(net.stations().to_vec(), *net.params(), net.side(), src)?;
    }
    let stats = net.stats()?;
    net.save(&a.out)?;
    println!(
        "wrote {} ({} stations, D={}, g={:.3})",
        a.out.display(),
        stats.n,
        stats.eccentricity,
        stats.granularity
    );
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let net = Network::load(&a.net).with_context(|| format!("loading {}", a.net.display()))?;
    let ecc = net.eccentricity()?;
    let engine_cfg = |horizon: u64, stop_when_informed: bool| EngineConfig {
        max_rounds: a.max_rounds.unwrap_or_else(|| horizon.saturating_mul(50)),
        record_trace: a.trace.is_some(),
        stop_when_informed: stop_when_informed && !a.run_to_done,
    };

    let (label, result, params_used) = match a.protocol {
        ProtoArg::Rand => {
            let (d, t_default) = RandBroadcast::defaults(&net, a.delta_fail, a.d)?;
            let t = a.t.unwrap_or(t_default);
            let mut p = RandBroadcast::new(&net, d, t)?;
            let cfg = engine_cfg(p.horizon(), true);
            let res = run(&net, &mut p, a.seed, &cfg)?;
            ("rand", res, format!("d={d} T={t}"))
        }
        ProtoArg::Unknown => {
            let mut ucfg = UnknownBroadcast::defaults(&net, a.delta_fail, a.d, a.dbar, a.t)?;
            if let Some(t) = a.t {
                ucfg.iterations = t;
            }
            let mut p = UnknownBroadcast::new(&net, ucfg)?;
            let cfg = engine_cfg(p.horizon(), true);
            let res = run(&net, &mut p, a.seed, &cfg)?;
            (
                "unknown",
                res,
                format!("d={} dbar={} T={}", ucfg.d, ucfg.dbar, ucfg.iterations),
            )
        }
        ProtoArg::Backoff => {
            let (d, t) = RandBroadcast::defaults(&net, a.delta_fail, Some(a.d.unwrap_or(10)))?;
            let mut p = Backoff::new(&net)?;
            let cfg = engine_cfg(1 + t * (d as u64) * (d as u64), false);
            let res = run(&net, &mut p, a.seed, &cfg)?;
            ("backoff", res, String::new())
        }
    };

    if let (Some(path), Some(trace)) = (&a.trace, &result.trace) {
        let file = fs::File::create(path)?;
        trace.write_jsonl(file)?;
    }
    println!(
        "protocol={label} n={} D={ecc} complete={} time={} rounds={} all_done={} informed={} {}",
        result.n,
        result.complete(),
        result
            .completion_round
            .map(|r| r.to_string())
            .unwrap_or_else(|| "-1".into()),
        result.rounds_executed,
        result
            .all_done_round
            .map(|r| r.to_string())
            .unwrap_or_else(|| "-1".into()),
        result.informed_count,
        params_used
    );
    if let Some(c) = result.leader_conflict {
        bail!(
            "leader uniqueness violated in box ({}, {}): {} then {}",
            c.box_i,
            c.box_j,
            c.first,
            c.second
        );
    }
    Ok(())
}

fn cmd_batch(a: BatchArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config)
        .with_context(|| format!("reading {}", a.config.display()))?;
    let mut cfg = ExperimentConfig::from_json_str(&text)?;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.base_seed = s;
    }
    if let Some(w) = a.workers {
        cfg.workers = Some(w);
    }
    if let Some(p) = a.protocol {
        cfg.protocol.kind = match p {
            ProtoArg::Rand => sinrcast::experiment::ProtocolKind::Rand,
            ProtoArg::Unknown => sinrcast::experiment::ProtocolKind::Unknown,
            ProtoArg::Backoff => sinrcast::experiment::ProtocolKind::Backoff,
        };
    }
    if a.d.is_some() {
        cfg.protocol.d = a.d;
    }
    if a.dbar.is_some() {
        cfg.protocol.dbar = a.dbar;
    }
    if a.t.is_some() {
        cfg.protocol.t = a.t;
    }
    if let Some(s) = a.side {
        cfg.side = s;
    }
    if let Some(n) = a.n {
        cfg.n_values = n;
    }
    let result = run_batch(&cfg)?;
    write_outputs(&result, &a.out_dir)?;
    for agg in &result.aggregates {
        println!(
            "n={} completed={}/{} mean_time={:.2} mean_ratio={:.3}",
            agg.n, agg.completed, agg.trials, agg.mean_time, agg.mean_ratio
        );
    }
    let errors: Vec<&sinrcast::experiment::ExperimentRecord> = result
        .records
        .iter()
        .filter(|r| r.error.is_some())
        .collect();
    if !errors.is_empty() {
        for r in &errors {
            eprintln!(
                "trial error: n={} trial={}: {}",
                r.n,
                r.trial,
                r.error.as_deref().unwrap_or("?")
            );
        }
        bail!("{} trial(s) errored", errors.len());
    }
    println!("outputs in {}", a.out_dir.display());
    Ok(())
}

fn cmd_params(a: ParamsArgs) -> Result<()> {
    println!("alpha,eps,n,gamma,s_alpha,d,dbar,T");
    for &alpha in &a.alpha {
        for &eps in &a.eps {
            for &n in &a.n {
                let gamma = Grid::known_density_cell(eps);
                let s = series_constant(alpha, n)?;
                let d = dilution_factor(&DilutionSpec {
                    alpha,
                    power: a.noise, // beta = 1 normalization: P = beta * N
                    gamma,
                    budget: a.noise * alpha * eps / 4.0,
                    n,
                })?;
                let (_, dbar) = unknown_density_dilutions(alpha, a.noise, a.noise, eps, n)?;
                let delta_prime =
                    a.delta_fail / (4.0 * ((a.big_d as f64) + 1.0).powi(3));
                let t = trial_count(a.big_d, delta_prime, 1.0 / (2.0 * std::f64::consts::E))?;
                println!("{alpha},{eps},{n},{gamma:.6},{s:.6},{d},{dbar},{t}");
            }
        }
    }
    Ok(())
}

fn cmd_replay(a: ReplayArgs) -> Result<()> {
    let net = Network::load(&a.net)?;
    let file = fs::File::open(&a.trace)?;
    let trace = Trace::read_jsonl(BufReader::new(file))?;
    if replay_check(&trace, &net)? {
        println!("trace verified: {} recorded rounds", trace.rounds.len());
        Ok(())
    } else {
        bail!("trace does not match an independent re-resolution");
    }
}
