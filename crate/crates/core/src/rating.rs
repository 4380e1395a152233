//! Elo arithmetic: expected score, sequential update, the Stockfish
//! skill-level/Elo cubic, and sequential rating estimation with a bootstrap
//! interval.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, derive_seed, Exec};

/// Elo at which normalized skill `e` is 0.
pub const ELO_FLOOR: f64 = 1320.0;
/// Elo span mapped onto `e` in [0, 1].
pub const ELO_SPAN: f64 = 1870.0;
/// Skill value of the cubic at `e = 0`.
pub const SK_MIN: f64 = -0.311;
/// Skill value of the cubic at `e = 1`.
pub const SK_MAX: f64 = 37.247 - 40.852 + 22.294 - 0.311;

/// Published Elo bands for the lowest Stockfish skill levels.
const PUBLISHED_BANDS: [(f64, f64); 3] = [(1350.0, 1440.0), (1450.0, 1560.0), (1570.0, 1720.0)];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RatingError {
    #[error("game result must be 0, 0.5 or 1, got {0}")]
    InvalidResult(f64),
    #[error("K factor must be positive, got {0}")]
    InvalidK(f64),
    #[error("Elo {0} is outside the convertible range [1320, 3190]")]
    EloOutOfRange(f64),
    #[error("skill {0} is outside the convertible range [-0.311, 18.378]")]
    SkillOutOfRange(f64),
    #[error("no games to rate")]
    NoGames,
    #[error("invalid K schedule {0:?}: expected K, or K_LOW:K_HIGH@THRESHOLD")]
    BadSchedule(String),
}

/// Win probability (draws counting half) of `player_elo` against
/// `opponent_elo`.
pub fn expected_score(player_elo: f64, opponent_elo: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((opponent_elo - player_elo) / 400.0))
}

/// All quantities of one sequential update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingUpdate {
    pub elo_old: f64,
    pub elo_new: f64,
    pub k: f64,
    pub actual: f64,
    pub expected: f64,
    pub player_elo: f64,
    pub opponent_elo: f64,
}

fn check_actual(actual: f64) -> Result<(), RatingError> {
    if actual == 0.0 || actual == 0.5 || actual == 1.0 {
        Ok(())
    } else {
        Err(RatingError::InvalidResult(actual))
    }
}

/// `elo_new = elo_old + (actual - expected) * k`, no rounding.
pub fn update(elo_old: f64, actual: f64, opponent_elo: f64, k: f64) -> Result<RatingUpdate, RatingError> {
    check_actual(actual)?;
    if k.is_nan() || k <= 0.0 {
        return Err(RatingError::InvalidK(k));
    }
    let expected = expected_score(elo_old, opponent_elo);
    Ok(RatingUpdate {
        elo_old,
        elo_new: elo_old + (actual - expected) * k,
        k,
        actual,
        expected,
        player_elo: elo_old,
        opponent_elo,
    })
}

/// K chosen from the player's current rating: `low_k` below `threshold`,
/// `high_k` at or above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSchedule {
    pub low_k: f64,
    pub high_k: f64,
    pub threshold: f64,
}

impl KSchedule {
    pub const fn constant(k: f64) -> KSchedule {
        KSchedule { low_k: k, high_k: k, threshold: f64::INFINITY }
    }

    pub fn k_for(&self, elo: f64) -> f64 {
        if elo < self.threshold {
            self.low_k
        } else {
            self.high_k
        }
    }
}

impl Default for KSchedule {
    fn default() -> Self {
        KSchedule { low_k: 20.0, high_k: 10.0, threshold: 2000.0 }
    }
}

impl fmt::Display for KSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.threshold.is_infinite() {
            write!(f, "{}", self.low_k)
        } else {
            write!(f, "{}:{}@{}", self.low_k, self.high_k, self.threshold)
        }
    }
}

impl FromStr for KSchedule {
    type Err = RatingError;

    /// `"16"` or `"20:10@2000"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RatingError::BadSchedule(s.to_string());
        let num = |t: &str| t.trim().parse::<f64>().ok().filter(|v| *v > 0.0).ok_or_else(bad);
        match s.split_once(':') {
            None => Ok(KSchedule::constant(num(s)?)),
            Some((low, rest)) => {
                let (high, threshold) = rest.split_once('@').ok_or_else(bad)?;
                Ok(KSchedule { low_k: num(low)?, high_k: num(high)?, threshold: num(threshold)? })
            }
        }
    }
}

/// A point on the skill/Elo cubic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillLevel {
    pub sk: f64,
    /// Normalized Elo, `(elo - 1320) / 1870`.
    pub e: f64,
}

fn skill_poly(e: f64) -> f64 {
    ((37.247 * e - 40.852) * e + 22.294) * e - 0.311
}

pub fn skill_from_elo(elo: f64) -> Result<SkillLevel, RatingError> {
    if !(ELO_FLOOR..=ELO_FLOOR + ELO_SPAN).contains(&elo) {
        return Err(RatingError::EloOutOfRange(elo));
    }
    let e = (elo - ELO_FLOOR) / ELO_SPAN;
    Ok(SkillLevel { sk: skill_poly(e), e })
}

/// Inverts the cubic by bisection on `e` in [0, 1]. The cubic's derivative
/// has a negative discriminant, so the root is unique.
pub fn elo_from_skill(sk: f64) -> Result<f64, RatingError> {
    if !(SK_MIN..=SK_MAX).contains(&sk) {
        return Err(RatingError::SkillOutOfRange(sk));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if skill_poly(mid) < sk {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(ELO_FLOOR + ELO_SPAN * 0.5 * (lo + hi))
}

/// Elo interval for an integer engine skill level: the published bands for
/// levels 0-2, otherwise the cubic evaluated at `skill` and `skill + 1`
/// (clamped to the top of the convertible range).
pub fn skill_band(skill: u8) -> (f64, f64) {
    if let Some(&band) = PUBLISHED_BANDS.get(skill as usize) {
        return band;
    }
    let at = |s: f64| elo_from_skill(s.min(SK_MAX)).expect("clamped into range");
    (at(skill as f64), at(skill as f64 + 1.0))
}

/// Point Elo assigned to an engine skill level: midpoint of the cubic at
/// `skill` and `skill + 1`, clamped into the published band where one exists.
pub fn opponent_elo(skill: u8) -> f64 {
    let at = |s: f64| elo_from_skill(s.min(SK_MAX)).expect("clamped into range");
    let mid = 0.5 * (at(skill as f64) + at(skill as f64 + 1.0));
    match PUBLISHED_BANDS.get(skill as usize) {
        Some(&(lo, hi)) => mid.clamp(lo, hi),
        None => mid,
    }
}

/// One rated game from the player's perspective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatedGame {
    pub actual: f64,
    pub opponent_elo: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub samples: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions { samples: 1000, seed: 0, exec: Exec::Sequential }
    }
}

/// Rating estimate from a game sequence. The point estimate, the mean over
/// the second half of the trajectory and the bootstrap interval are reported
/// side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingEstimate {
    pub elo: f64,
    pub tail_mean: f64,
    /// Half-width of the central 95% bootstrap interval.
    pub uncertainty: f64,
    pub interval: (f64, f64),
    pub games: usize,
    pub initial_elo: f64,
    pub k_schedule: String,
    pub bootstrap_samples: usize,
    pub bootstrap_seed: u64,
}

/// Folds the sequential update over `games`, returning the trajectory
/// (initial rating first).
pub fn trajectory(games: &[RatedGame], k: &KSchedule, initial_elo: f64) -> Result<Vec<f64>, RatingError> {
    let mut elos = Vec::with_capacity(games.len() + 1);
    let mut elo = initial_elo;
    elos.push(elo);
    for g in games {
        elo = update(elo, g.actual, g.opponent_elo, k.k_for(elo))?.elo_new;
        elos.push(elo);
    }
    Ok(elos)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn estimate_rating(
    games: &[RatedGame],
    k: &KSchedule,
    initial_elo: f64,
    opts: BootstrapOptions,
) -> Result<RatingEstimate, RatingError> {
    if games.is_empty() {
        return Err(RatingError::NoGames);
    }
    let traj = trajectory(games, k, initial_elo)?;
    let elo = *traj.last().expect("nonempty");
    let tail = &traj[1 + games.len() / 2..];
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;

    let samples = opts.samples.max(1);
    let n = games.len();
    let mut finals = exec::map_indexed(opts.exec, samples, |b| {
        let mut rng = exec::rng(derive_seed(opts.seed, b as u64));
        let resample: Vec<RatedGame> = (0..n).map(|_| games[rng.gen_range(0..n)]).collect();
        *trajectory(&resample, k, initial_elo).expect("validated above").last().expect("nonempty")
    });
    finals.sort_by(f64::total_cmp);
    let low = quantile(&finals, 0.025);
    let high = quantile(&finals, 0.975);

    Ok(RatingEstimate {
        elo,
        tail_mean,
        uncertainty: 0.5 * (high - low),
        interval: (low, high),
        games: n,
        initial_elo,
        k_schedule: k.to_string(),
        bootstrap_samples: samples,
        bootstrap_seed: opts.seed,
    })
}
