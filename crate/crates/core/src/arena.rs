//! Games, matches and skill ladders.
//!
//! Every source of randomness in a game is derived from its seed: ply `n`
//! samples with `derive_seed(seed, n)`, so a game replays move for move
//! from its seed alone. Matches derive game seeds from the master seed and
//! hand the games to the executor; results are gathered in game order.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{BestMoveSource, EngineConfig, SearchLimits, SourceFactory};
use crate::exec::{self, derive_seed, Exec};
use crate::notation::{GameRecord, GameResult, ReplayError};
use crate::policy::{
    fallback_move, retry_sample, ExhaustionRule, Policy, PolicyError, PolicyFactory, PolicySpec,
    SamplingConfig, SpecFactory,
};
use crate::rating::{self, BootstrapOptions, KSchedule, RatedGame, RatingEstimate};
use crate::rules::{legal_moves, status, Color, Position, StatusTag};

pub use crate::policy::FallbackSource;

/// One move event. A forfeited turn has an event but no move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveTelemetry {
    pub ply: u32,
    pub proposer: Color,
    pub attempts_used: u32,
    pub first_attempt_legal: bool,
    pub fallback_source: Option<FallbackSource>,
    /// The retry budget ran out on this turn.
    #[serde(default)]
    pub exhausted: bool,
    /// Zero unless timing was requested; wall-clock time would otherwise
    /// break byte-identical replays.
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    EloProtocol,
    LmMatchProtocol,
}

impl Protocol {
    pub fn default_sampling(self) -> SamplingConfig {
        match self {
            Protocol::EloProtocol => SamplingConfig::elo_protocol(),
            Protocol::LmMatchProtocol => SamplingConfig::lm_match_protocol(),
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = ArenaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "elo" | "elo_protocol" => Ok(Protocol::EloProtocol),
            "lm" | "lm_match_protocol" => Ok(Protocol::LmMatchProtocol),
            _ => Err(ArenaError::Config(format!("unknown protocol {s:?}"))),
        }
    }
}

/// Termination tag for a forfeit on an exhausted retry budget.
pub const FORFEIT_TERMINATION: &str = "forfeit_exhausted_retries";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub protocol: Protocol,
    pub white_sampling: SamplingConfig,
    pub black_sampling: SamplingConfig,
    pub exhaustion: ExhaustionRule,
    pub fallback_limits: SearchLimits,
    pub move_cap: u32,
    pub seed: u64,
    pub record_timing: bool,
}

impl GameConfig {
    pub const DEFAULT_MOVE_CAP: u32 = 512;

    pub fn new(protocol: Protocol) -> GameConfig {
        let sampling = protocol.default_sampling();
        GameConfig {
            protocol,
            white_sampling: sampling,
            black_sampling: sampling,
            exhaustion: ExhaustionRule::default(),
            fallback_limits: SearchLimits::movetime(100),
            move_cap: Self::DEFAULT_MOVE_CAP,
            seed: 0,
            record_timing: false,
        }
    }

    pub fn with_seed(self, seed: u64) -> GameConfig {
        GameConfig { seed, ..self }
    }

    fn sampling(&self, side: Color) -> &SamplingConfig {
        match side {
            Color::White => &self.white_sampling,
            Color::Black => &self.black_sampling,
        }
    }

    pub fn validate(&self) -> Result<(), ArenaError> {
        self.white_sampling.validate()?;
        self.black_sampling.validate()?;
        self.fallback_limits.validate().map_err(|e| ArenaError::Config(e.to_string()))?;
        if self.move_cap == 0 {
            return Err(ArenaError::Config("move cap must be positive".into()));
        }
        Ok(())
    }
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig::new(Protocol::EloProtocol)
    }
}

#[derive(Debug, Error)]
pub enum ArenaError {
    #[error("invalid arena configuration: {0}")]
    Config(String),
    #[error("game aborted at ply {ply}: {source}")]
    Aborted { ply: u32, source: PolicyError },
    #[error("emitted game does not replay: {0}")]
    Replay(#[from] ReplayError),
    #[error("only {completed} of {games} games completed (90% required)")]
    TooManyAborted { completed: usize, games: usize },
}

impl From<PolicyError> for ArenaError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::Config(m) => ArenaError::Config(m),
            other => ArenaError::Aborted { ply: 0, source: other },
        }
    }
}

/// Names and round number written into the game's tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameLabels {
    pub event: String,
    pub round: String,
    pub white: String,
    pub black: String,
}

impl Default for GameLabels {
    fn default() -> Self {
        GameLabels { event: "fenbench".into(), round: "1".into(), white: "?".into(), black: "?".into() }
    }
}

/// Plays one game from the standard start position.
///
/// A fallback source is required under the LM-match protocol, where a turn
/// whose retry budget runs out is settled by [`fallback_move`]. Under the
/// Elo protocol the configured [`ExhaustionRule`] applies instead.
pub fn play_game<'e>(
    white: &mut dyn Policy,
    black: &mut dyn Policy,
    mut fallback: Option<&mut (dyn BestMoveSource + 'e)>,
    cfg: &GameConfig,
    labels: &GameLabels,
) -> Result<GameRecord, ArenaError> {
    cfg.validate()?;
    if cfg.protocol == Protocol::LmMatchProtocol && fallback.is_none() {
        return Err(ArenaError::Config("the lm_match protocol needs a fallback engine".into()));
    }

    let mut pos = Position::startpos();
    let mut history = vec![pos.clone()];
    let mut moves = Vec::new();
    let mut telemetry = Vec::new();
    let (result, termination) = loop {
        let st = status(&pos, &history);
        if st.tag != StatusTag::Ongoing {
            break (GameResult::from_status(st), tag_name(st.tag));
        }
        let ply = moves.len() as u32;
        if ply >= cfg.move_cap {
            break (GameResult::Draw, tag_name(StatusTag::DrawMoveCap));
        }

        let side = pos.side_to_move();
        let ply_seed = derive_seed(cfg.seed, ply as u64);
        let sampling = cfg.sampling(side).with_seed(derive_seed(ply_seed, 0));
        let policy: &mut dyn Policy = match side {
            Color::White => &mut *white,
            Color::Black => &mut *black,
        };
        let started = Instant::now();
        let outcome =
            retry_sample(policy, &pos, &sampling).map_err(|source| ArenaError::Aborted { ply, source })?;

        let mut event = MoveTelemetry {
            ply,
            proposer: side,
            attempts_used: outcome.attempts_used,
            first_attempt_legal: outcome.first_attempt_legal,
            fallback_source: None,
            exhausted: outcome.mv.is_none(),
            elapsed_ms: 0,
        };
        let settle_seed = derive_seed(ply_seed, 1);
        let mv = match (outcome.mv, cfg.protocol, cfg.exhaustion) {
            (Some(m), _, _) => Some(m),
            (None, Protocol::LmMatchProtocol, _) => {
                let choice = fallback_move(&pos, fallback.as_deref_mut(), &cfg.fallback_limits, settle_seed)
                    .map_err(|source| ArenaError::Aborted { ply, source })?;
                event.fallback_source = Some(choice.source);
                Some(choice.mv)
            }
            (None, Protocol::EloProtocol, ExhaustionRule::RandomLegalContinue) => {
                let legal = legal_moves(&pos);
                Some(legal[exec::rng(settle_seed).gen_range(0..legal.len())])
            }
            (None, Protocol::EloProtocol, ExhaustionRule::ForfeitLoss) => None,
        };
        if cfg.record_timing {
            event.elapsed_ms = started.elapsed().as_millis() as u64;
        }
        telemetry.push(event);

        let Some(mv) = mv else {
            break (GameResult::win_for(side.opposite()), FORFEIT_TERMINATION.to_string());
        };
        pos = pos.apply_move(mv).map_err(|e| ReplayError::Illegal { ply: ply as usize, source: e })?;
        history.push(pos.clone());
        moves.push(mv);
    };

    let mut rec = GameRecord::new();
    rec.set_tag("Event", labels.event.clone());
    rec.set_tag("Site", "local");
    rec.set_tag("Date", "????.??.??");
    rec.set_tag("Round", labels.round.clone());
    rec.set_tag("White", labels.white.clone());
    rec.set_tag("Black", labels.black.clone());
    rec.set_tag("Result", result.as_str());
    rec.set_tag("Termination", termination);
    rec.set_tag("Seed", cfg.seed.to_string());
    rec.moves = moves;
    rec.result = result;
    rec.per_move_meta = Some(telemetry);
    // Re-validate through the rules before the record leaves the arena.
    rec.positions()?;
    Ok(rec)
}

fn tag_name(tag: StatusTag) -> String {
    serde_json::to_value(tag)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| format!("{tag:?}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub game: GameConfig,
    /// Master seed; game `i` is seeded with `derive_seed(seed, i)`.
    pub seed: u64,
    pub event: String,
}

impl MatchConfig {
    pub fn new(protocol: Protocol, seed: u64) -> MatchConfig {
        MatchConfig { game: GameConfig::new(protocol), seed, event: "fenbench match".into() }
    }

    pub fn game_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, index as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortedGame {
    pub index: usize,
    pub seed: u64,
    pub reason: String,
}

/// Match outcome from the first contestant's point of view. `games`,
/// `seeds` and `indices` are parallel lists over completed games.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub a: String,
    pub b: String,
    pub wins: u32,
    pub losses: u32,
    pub draws: u32,
    pub games: Vec<GameRecord>,
    pub seeds: Vec<u64>,
    pub indices: Vec<usize>,
    pub aborted: Vec<AbortedGame>,
    pub protocol: Protocol,
    pub colors: String,
}

impl MatchResult {
    pub fn completed(&self) -> usize {
        self.games.len()
    }

    /// `a` has white in even-indexed games.
    pub fn a_color(index: usize) -> Color {
        if index.is_multiple_of(2) {
            Color::White
        } else {
            Color::Black
        }
    }

    pub fn score(&self, draw_weight: f64) -> f64 {
        let n = self.completed() as f64;
        (self.wins as f64 + draw_weight * self.draws as f64) / n
    }

    /// Results for `a`, in game order, against an opponent of fixed rating.
    pub fn rated_games(&self, opponent_elo: f64) -> Vec<RatedGame> {
        self.games
            .iter()
            .zip(&self.indices)
            .filter_map(|(g, &i)| g.result.score_for(Self::a_color(i)))
            .map(|actual| RatedGame { actual, opponent_elo })
            .collect()
    }
}

/// Plays `n_games` between fresh instances from `a` and `b`, alternating
/// colors. Games whose transport fails are set aside; the match fails if
/// fewer than 90% complete.
pub fn run_match(
    a: &dyn PolicyFactory,
    b: &dyn PolicyFactory,
    fallback: Option<&dyn SourceFactory>,
    n_games: usize,
    cfg: &MatchConfig,
    exec: Exec,
) -> Result<MatchResult, ArenaError> {
    if n_games == 0 {
        return Err(ArenaError::Config("a match needs at least one game".into()));
    }
    cfg.game.validate()?;
    if cfg.game.protocol == Protocol::LmMatchProtocol && fallback.is_none() {
        return Err(ArenaError::Config("the lm_match protocol needs a fallback engine".into()));
    }
    let (a_name, b_name) = (a.describe(), b.describe());

    let outcomes = exec::map_indexed(exec, n_games, |i| {
        let seed = cfg.game_seed(i);
        let a_white = MatchResult::a_color(i) == Color::White;
        let labels = GameLabels {
            event: cfg.event.clone(),
            round: (i + 1).to_string(),
            white: if a_white { a_name.clone() } else { b_name.clone() },
            black: if a_white { b_name.clone() } else { a_name.clone() },
        };
        let game = || -> Result<GameRecord, ArenaError> {
            let mut pa = a.build()?;
            let mut pb = b.build()?;
            let mut fb = match fallback {
                Some(f) => Some(f.build().map_err(|e| ArenaError::from(PolicyError::from(e)))?),
                None => None,
            };
            let (w, bl) = if a_white { (&mut pa, &mut pb) } else { (&mut pb, &mut pa) };
            play_game(w.as_mut(), bl.as_mut(), fb.as_deref_mut(), &cfg.game.clone().with_seed(seed), &labels)
        };
        (seed, game())
    });

    let mut res = MatchResult {
        a: a_name,
        b: b_name,
        wins: 0,
        losses: 0,
        draws: 0,
        games: Vec::new(),
        seeds: Vec::new(),
        indices: Vec::new(),
        aborted: Vec::new(),
        protocol: cfg.game.protocol,
        colors: "alternate; a is white in even-indexed games".into(),
    };
    for (i, (seed, outcome)) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rec) => {
                match rec.result.score_for(MatchResult::a_color(i)) {
                    Some(1.0) => res.wins += 1,
                    Some(0.0) => res.losses += 1,
                    _ => res.draws += 1,
                }
                res.games.push(rec);
                res.seeds.push(seed);
                res.indices.push(i);
            }
            Err(ArenaError::Config(m)) => return Err(ArenaError::Config(m)),
            Err(e) => res.aborted.push(AbortedGame { index: i, seed, reason: e.to_string() }),
        }
    }
    if res.completed() * 10 < n_games * 9 {
        return Err(ArenaError::TooManyAborted { completed: res.completed(), games: n_games });
    }
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderConfig {
    pub matches: MatchConfig,
    pub games_per_rung: usize,
    /// Search limits for the ladder's engine opponents.
    pub opponent_limits: SearchLimits,
    pub k_schedule: KSchedule,
    pub bootstrap: BootstrapOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRung {
    pub skill: u8,
    pub opponent_elo: f64,
    pub result: Option<MatchResult>,
    pub estimate: Option<RatingEstimate>,
    pub error: Option<String>,
}

/// Plays `policy` against the engine at each skill level and rates it per
/// rung, starting from the opponent's own rating. A failing rung records
/// its error and the ladder moves on.
pub fn ladder(
    policy: &dyn PolicyFactory,
    skills: &[u8],
    engine: &EngineConfig,
    cfg: &LadderConfig,
    exec: Exec,
) -> Result<Vec<LadderRung>, ArenaError> {
    if let Some(&s) = skills.iter().find(|&&s| s > 20) {
        return Err(ArenaError::Config(format!("skill level {s} outside 0..=20")));
    }
    let fallback = (cfg.matches.game.protocol == Protocol::LmMatchProtocol).then_some(engine);
    let mut rungs = Vec::with_capacity(skills.len());
    for (r, &skill) in skills.iter().enumerate() {
        let limits = cfg.opponent_limits;
        let opponent = SpecFactory {
            spec: PolicySpec::Engine { skill: Some(skill), depth: limits.depth, movetime_ms: limits.movetime_ms },
            engine: engine.clone(),
        };
        let opponent_elo = rating::opponent_elo(skill);
        let mcfg = MatchConfig { seed: derive_seed(cfg.matches.seed, r as u64), ..cfg.matches.clone() };
        let mut rung = LadderRung { skill, opponent_elo, result: None, estimate: None, error: None };
        match run_match(policy, &opponent, fallback.map(|e| e as &dyn SourceFactory), cfg.games_per_rung, &mcfg, exec)
        {
            Ok(m) => {
                let games = m.rated_games(opponent_elo);
                match rating::estimate_rating(&games, &cfg.k_schedule, opponent_elo, cfg.bootstrap) {
                    Ok(est) => rung.estimate = Some(est),
                    Err(e) => rung.error = Some(e.to_string()),
                }
                rung.result = Some(m);
            }
            Err(ArenaError::Config(m)) => return Err(ArenaError::Config(m)),
            Err(e) => rung.error = Some(e.to_string()),
        }
        rungs.push(rung);
    }
    Ok(rungs)
}

/// Win / loss / draw / Elo table, one row per skill level.
pub fn ladder_table(rungs: &[LadderRung]) -> String {
    let mut out = String::from("Skill  Win  Lose  Draw  Elo\n");
    for r in rungs {
        match (&r.result, &r.estimate) {
            (Some(m), Some(e)) => {
                let _ = writeln!(
                    out,
                    "{:>5}  {:>3}  {:>4}  {:>4}  {:.0} ± {:.0}",
                    r.skill, m.wins, m.losses, m.draws, e.elo, e.uncertainty
                );
            }
            _ => {
                let _ = writeln!(out, "{:>5}  failed: {}", r.skill, r.error.as_deref().unwrap_or("unknown"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{FixedText, FnFactory, Noisy, RandomLegal};

    fn random_factory() -> FnFactory<impl Fn() -> Result<Box<dyn Policy>, PolicyError> + Send + Sync> {
        FnFactory::new("random", || Ok(Box::new(RandomLegal) as Box<dyn Policy>))
    }

    #[test]
    fn forfeit_at_first_ply() {
        let mut w = Noisy::new(1.0, Box::new(RandomLegal)).unwrap();
        let mut b = RandomLegal;
        let rec = play_game(&mut w, &mut b, None, &GameConfig::default(), &GameLabels::default()).unwrap();
        assert!(rec.moves.is_empty());
        assert_eq!(rec.result, GameResult::BlackWins);
        assert_eq!(rec.tag("Termination"), Some(FORFEIT_TERMINATION));
        let meta = rec.per_move_meta.unwrap();
        assert_eq!(meta.len(), 1);
        assert_eq!(meta[0].attempts_used, 10);
        assert!(meta[0].exhausted);
    }

    #[test]
    fn random_continue_keeps_playing() {
        let cfg = GameConfig { exhaustion: ExhaustionRule::RandomLegalContinue, move_cap: 20, ..GameConfig::default() };
        let mut w = FixedText("resign".into());
        let mut b = RandomLegal;
        let rec = play_game(&mut w, &mut b, None, &cfg, &GameLabels::default()).unwrap();
        assert_eq!(rec.moves.len(), 20);
        assert_eq!(rec.tag("Termination"), Some("draw_move_cap"));
        assert!(rec.per_move_meta.unwrap().iter().all(|t| t.fallback_source.is_none()));
    }

    #[test]
    fn lm_protocol_requires_fallback() {
        let cfg = GameConfig::new(Protocol::LmMatchProtocol);
        let err = play_game(&mut RandomLegal, &mut RandomLegal, None, &cfg, &GameLabels::default());
        assert!(matches!(err, Err(ArenaError::Config(_))));
    }

    #[test]
    fn same_seed_same_game() {
        let cfg = GameConfig::default().with_seed(42);
        let a = play_game(&mut RandomLegal, &mut RandomLegal, None, &cfg, &GameLabels::default()).unwrap();
        let b = play_game(&mut RandomLegal, &mut RandomLegal, None, &cfg, &GameLabels::default()).unwrap();
        assert_eq!(a, b);
        let c = play_game(&mut RandomLegal, &mut RandomLegal, None, &cfg.with_seed(43), &GameLabels::default())
            .unwrap();
        assert_ne!(a.moves, c.moves);
    }

    #[test]
    fn result_matches_final_status() {
        for seed in 0..10 {
            let cfg = GameConfig::default().with_seed(seed);
            let rec = play_game(&mut RandomLegal, &mut RandomLegal, None, &cfg, &GameLabels::default()).unwrap();
            let st = rec.final_status().unwrap();
            if st.tag == StatusTag::Ongoing {
                assert_eq!(rec.moves.len(), GameConfig::DEFAULT_MOVE_CAP as usize);
                assert_eq!(rec.result, GameResult::Draw);
            } else {
                assert_eq!(rec.result, GameResult::from_status(st));
            }
        }
    }

    #[test]
    fn single_game_match() {
        let f = random_factory();
        let m = run_match(&f, &f, None, 1, &MatchConfig::new(Protocol::EloProtocol, 7), Exec::Sequential).unwrap();
        assert_eq!(m.games.len(), 1);
        assert_eq!(m.seeds, vec![derive_seed(7, 0)]);
        assert_eq!(m.wins + m.losses + m.draws, 1);
    }

    #[test]
    fn colors_alternate() {
        let f = random_factory();
        let g = FnFactory::new("greedy", || Ok(Box::new(crate::policy::GreedyMaterial) as Box<dyn Policy>));
        let m = run_match(&f, &g, None, 4, &MatchConfig::new(Protocol::EloProtocol, 1), Exec::Sequential).unwrap();
        let whites: Vec<_> = m.games.iter().map(|g| g.tag("White").unwrap().to_string()).collect();
        assert_eq!(whites, ["random", "greedy", "random", "greedy"]);
    }

    #[test]
    fn too_many_aborts_fail_the_match() {
        let broken = FnFactory::new("broken", || Err(PolicyError::Transport("down".into())));
        let f = random_factory();
        let err = run_match(&broken, &f, None, 3, &MatchConfig::new(Protocol::EloProtocol, 0), Exec::Sequential);
        assert!(matches!(err, Err(ArenaError::TooManyAborted { completed: 0, games: 3 })));
    }

    #[test]
    fn empty_ladder() {
        let f = random_factory();
        let cfg = LadderConfig {
            matches: MatchConfig::new(Protocol::EloProtocol, 0),
            games_per_rung: 2,
            opponent_limits: SearchLimits::movetime(10),
            k_schedule: KSchedule::default(),
            bootstrap: BootstrapOptions::default(),
        };
        let rungs = ladder(&f, &[], &EngineConfig::new("stockfish"), &cfg, Exec::Sequential).unwrap();
        assert!(rungs.is_empty());
        assert!(ladder(&f, &[21], &EngineConfig::new("stockfish"), &cfg, Exec::Sequential).is_err());
    }
}
