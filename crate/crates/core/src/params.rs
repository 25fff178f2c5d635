//! Closed-form schedule parameters and bounds: the interference series
//! constant, the dilution factor that caps expected interference, trial
//! counts for round budgets, and the greedy net construction.

use thiserror::Error;

use crate::net::Network;

/// Upper bound (exclusive) on the per-trial success probability accepted by
/// [`trial_count`]: `1 - ln 2`.
pub const TRIAL_P_MAX: f64 = 1.0 - std::f64::consts::LN_2;

#[derive(Error, Debug)]
pub enum ParamError {
    #[error("path-loss exponent must be >= 2, got {0}")]
    AlphaBelowTwo(f64),
    #[error("station bound must be >= 2, got {0}")]
    TooFewStations(u64),
    #[error("interference budget must be positive, got {0}")]
    NonPositiveBudget(f64),
    #[error("invalid dilution input: {0}")]
    InvalidSpec(String),
    #[error("d * gamma must exceed 2 for the series bound, got {0}")]
    SpacingTooSmall(f64),
    #[error("success probability must lie in (0, 1 - ln 2), got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("failure probability must lie in (0, 1], got {0}")]
    DeltaOutOfRange(f64),
}

/// Series constant bounding the ring sum of interference contributions:
///
/// `min(ln(n)/2 + ln 2, 1 / (2^(alpha-2) * (alpha-2))) + 1 / (2^alpha * (alpha-1))`
///
/// Constant in `n` once the min saturates (any `alpha > 2`), logarithmic in
/// `n` at `alpha = 2`, where the second argument of the min is taken as
/// positive infinity.
pub fn series_constant(alpha: f64, n: u64) -> Result<f64, ParamError> {
    if !(alpha >= 2.0) {
        return Err(ParamError::AlphaBelowTwo(alpha));
    }
    if n < 2 {
        return Err(ParamError::TooFewStations(n));
    }
    let log_term = (n as f64).ln() / 2.0 + std::f64::consts::LN_2;
    let flat_term = if alpha > 2.0 {
        1.0 / (2f64.powf(alpha - 2.0) * (alpha - 2.0))
    } else {
        f64::INFINITY
    };
    let tail = 1.0 / (2f64.powf(alpha) * (alpha - 1.0));
    Ok(log_term.min(flat_term) + tail)
}

/// Inputs to the dilution computation.
#[derive(Clone, Copy, Debug)]
pub struct DilutionSpec {
    pub alpha: f64,
    pub power: f64,
    /// Cell side of the grid being diluted, in range units.
    pub gamma: f64,
    /// Target bound on expected maximum interference.
    pub budget: f64,
    /// Station count bound, drives the series constant.
    pub n: u64,
}

impl DilutionSpec {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.alpha >= 2.0) {
            return Err(ParamError::AlphaBelowTwo(self.alpha));
        }
        if !(self.budget > 0.0) {
            return Err(ParamError::NonPositiveBudget(self.budget));
        }
        if !(self.power > 0.0) || !(self.gamma > 0.0) {
            return Err(ParamError::InvalidSpec(format!(
                "power and gamma must be positive, got {} and {}",
                self.power, self.gamma
            )));
        }
        if self.n < 2 {
            return Err(ParamError::TooFewStations(self.n));
        }
        Ok(())
    }
}

/// Pre-ceiling value of the dilution factor.
fn dilution_factor_real(spec: &DilutionSpec) -> Result<f64, ParamError> {
    spec.validate()?;
    let s = series_constant(spec.alpha, spec.n)?;
    Ok((8.0 * spec.power * s / spec.budget).powf(1.0 / spec.alpha) / spec.gamma)
}

/// Smallest integer grid dilution for which the expected maximum
/// interference from one corner-placed transmitter per diluted box stays
/// below the budget: `ceil((1/gamma) * (8 * P * s / I)^(1/alpha))`.
pub fn dilution_factor(spec: &DilutionSpec) -> Result<u32, ParamError> {
    let real = dilution_factor_real(spec)?;
    let d = real.ceil();
    if !(d >= 1.0) || d > u32::MAX as f64 {
        return Err(ParamError::InvalidSpec(format!(
            "dilution factor {d} out of range"
        )));
    }
    Ok(d as u32)
}

/// Closed-form bound on the expected maximum interference measured within
/// unit distance of a box, when one transmitter sits in every `d`-diluted
/// box of a grid with cell `gamma`: `(8 * P / (d*gamma)^alpha) * s(alpha, n)`.
/// Requires `d * gamma > 2`.
pub fn interference_bound(
    alpha: f64,
    power: f64,
    d: u32,
    gamma: f64,
    n: u64,
) -> Result<f64, ParamError> {
    let t = d as f64 * gamma;
    if !(t > 2.0) {
        return Err(ParamError::SpacingTooSmall(t));
    }
    let s = series_constant(alpha, n)?;
    Ok(8.0 * power / t.powf(alpha) * s)
}

/// Ring-by-ring partial sum the closed form dominates:
/// `sum_{k=1}^{ceil(sqrt(n)/4)} 8*k*P / ((k - 1/2) * d*gamma)^alpha`.
pub fn interference_partial_sum(
    alpha: f64,
    power: f64,
    d: u32,
    gamma: f64,
    n: u64,
) -> Result<f64, ParamError> {
    let t = d as f64 * gamma;
    if !(t > 2.0) {
        return Err(ParamError::SpacingTooSmall(t));
    }
    if !(alpha >= 2.0) {
        return Err(ParamError::AlphaBelowTwo(alpha));
    }
    let rings = ((n as f64).sqrt() / 4.0).ceil() as u64;
    let mut sum = 0.0;
    for k in (1..=rings).rev() {
        let kf = k as f64;
        sum += 8.0 * kf * power / ((kf - 0.5) * t).powf(alpha);
    }
    Ok(sum)
}

/// Number of independent trials with per-trial success probability `p` after
/// which fewer than `ecc + 1` successes occur with probability below
/// `(ecc + 1) * delta`: `ceil(2*D/p + 2*ln(1/delta)/p)`.
pub fn trial_count(ecc: u32, delta: f64, p: f64) -> Result<u64, ParamError> {
    if !(p > 0.0 && p < TRIAL_P_MAX) {
        return Err(ParamError::ProbabilityOutOfRange(p));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(ParamError::DeltaOutOfRange(delta));
    }
    let t = 2.0 * ecc as f64 / p + 2.0 * (1.0 / delta).ln() / p;
    Ok(t.ceil() as u64)
}

/// Upper bound on the size of a `(1 - eps)`-net of a connected network of
/// eccentricity `ecc`: `4 * (ecc + 1)^2`.
pub fn net_size_bound(ecc: u32) -> u64 {
    4 * (ecc as u64 + 1) * (ecc as u64 + 1)
}

/// Greedily pick a maximal subset of stations with pairwise distance at
/// least `radius` (scanned in index order). Maximality makes the result a
/// `radius`-net: every station lies within `radius` of some member.
pub fn greedy_net(net: &Network, radius: f64) -> Vec<usize> {
    let mut picked: Vec<usize> = Vec::new();
    for (i, s) in net.stations().iter().enumerate() {
        if picked
            .iter()
            .all(|&k| net.stations()[k].pos.dist(&s.pos) >= radius)
        {
            picked.push(i);
        }
    }
    picked
}

/// The dilution pair used when local density is unknown, on the fine grid
/// with cell `gamma = eps / (6*sqrt(2))`:
///
/// * `d`     caps interference at `N * alpha * eps / 2` on the fine grid;
/// * `d_bar` is `floor(1/gamma)` times the dilution that caps interference
///   at `N * alpha * eps / 28` on the coarser grid with cell
///   `gamma * floor(1/gamma)`, expressed in fine-grid boxes.
pub fn unknown_density_dilutions(
    alpha: f64,
    noise: f64,
    power: f64,
    eps: f64,
    n: u64,
) -> Result<(u32, u32), ParamError> {
    let gamma = crate::grid::Grid::unknown_density_cell(eps);
    let d = dilution_factor(&DilutionSpec {
        alpha,
        power,
        gamma,
        budget: noise * alpha * eps / 2.0,
        n,
    })?;
    let coarse_factor = (1.0 / gamma).floor();
    let d_coarse = dilution_factor(&DilutionSpec {
        alpha,
        power,
        gamma: gamma * coarse_factor,
        budget: noise * alpha * eps / 28.0,
        n,
    })?;
    let d_bar = (coarse_factor as u32).saturating_mul(d_coarse);
    Ok((d, d_bar))
}
