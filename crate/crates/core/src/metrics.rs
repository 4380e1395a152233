//! Evaluation quantities and reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{LadderRung, MatchResult, MoveTelemetry};
use crate::dataset::{BucketSpec, DatasetRecord};
use crate::exec::{self, derive_seed, Exec};
use crate::notation::{parse_fen, GameRecord};
use crate::policy::{propose, Legality, Policy, PolicyError, PolicyFactory, Proposal};
use crate::rating::RatingEstimate;
use crate::rules::{has_legal_move, Color, Move, Position};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid eval item: {0}")]
    BadItem(String),
    #[error("no items to evaluate")]
    NoItems,
    #[error("game {0} carries no move telemetry")]
    MissingTelemetry(usize),
    #[error("no completed games")]
    NoGames,
    #[error("move score needs candidates with at least two distinct scores")]
    NoCandidates,
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// A position with its reference move and, optionally, scored candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub fen: String,
    pub reference_best: Move,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<(Move, f64)>>,
    #[serde(skip)]
    position: Option<Position>,
}

impl EvalItem {
    /// Rejects terminal positions and illegal reference or candidate moves.
    pub fn new(fen: &str, reference_best: Move, candidates: Option<Vec<(Move, f64)>>) -> Result<EvalItem, MetricsError> {
        let pos = parse_fen(fen).map_err(|e| MetricsError::BadItem(format!("{fen}: {e}")))?;
        if !has_legal_move(&pos) {
            return Err(MetricsError::BadItem(format!("{fen}: no legal moves")));
        }
        if !pos.is_legal(reference_best) {
            return Err(MetricsError::BadItem(format!("{fen}: reference {reference_best} is illegal")));
        }
        if let Some(c) = candidates.iter().flatten().find(|(m, _)| !pos.is_legal(*m)) {
            return Err(MetricsError::BadItem(format!("{fen}: candidate {} is illegal", c.0)));
        }
        Ok(EvalItem { fen: fen.to_string(), reference_best, candidates, position: Some(pos) })
    }

    pub fn from_record(r: &DatasetRecord) -> Result<EvalItem, MetricsError> {
        EvalItem::new(&r.fen, r.best_move, None)
    }

    pub fn position(&self) -> Position {
        self.position.clone().unwrap_or_else(|| parse_fen(&self.fen).expect("validated at construction"))
    }
}

/// One proposal per item, each from its own derived seed.
pub fn item_proposals(
    policies: &dyn PolicyFactory,
    items: &[EvalItem],
    seed: u64,
    exec: Exec,
) -> Result<Vec<Proposal>, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::NoItems);
    }
    let out = exec::map_init_indexed(
        exec,
        items.len(),
        || None::<Box<dyn Policy>>,
        |slot, i| -> Result<Proposal, PolicyError> {
            if slot.is_none() {
                *slot = Some(policies.build()?);
            }
            let policy = slot.as_deref_mut().expect("filled above");
            propose(policy, &items[i].position(), derive_seed(seed, i as u64))
        },
    );
    Ok(out.into_iter().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketBreakdown {
    pub bucket: String,
    pub items: usize,
    pub legal_move_accuracy: Option<f64>,
    pub best_move_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub items: usize,
    pub legal: usize,
    pub best: usize,
    pub illegal_syntax: usize,
    pub illegal_move: usize,
    pub legal_move_accuracy: f64,
    pub best_move_accuracy: f64,
    pub by_bucket: Vec<BucketBreakdown>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Scores single-attempt proposals against their items. Legal and best
/// accuracy share the same proposals, so a best move is always counted as
/// a legal one too.
pub fn score_proposals(items: &[EvalItem], proposals: &[Proposal], buckets: Option<&BucketSpec>) -> Accuracy {
    assert_eq!(items.len(), proposals.len(), "one proposal per item");
    let is_best = |i: usize| proposals[i].parsed == Some(items[i].reference_best);
    let count = |idx: &[usize], f: &dyn Fn(usize) -> bool| idx.iter().filter(|&&i| f(i)).count();
    let all: Vec<usize> = (0..items.len()).collect();
    let legal = count(&all, &|i| proposals[i].is_legal());
    let best = count(&all, &is_best);
    let by_bucket = buckets
        .map(|spec| {
            spec.0
                .iter()
                .map(|b| {
                    let idx: Vec<usize> =
                        all.iter().copied().filter(|&i| b.contains(items[i].position().fullmove_number())).collect();
                    BucketBreakdown {
                        bucket: b.label(),
                        items: idx.len(),
                        legal_move_accuracy: ratio(count(&idx, &|i| proposals[i].is_legal()), idx.len()),
                        best_move_accuracy: ratio(count(&idx, &is_best), idx.len()),
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    let n = items.len().max(1) as f64;
    Accuracy {
        items: items.len(),
        legal,
        best,
        illegal_syntax: proposals.iter().filter(|p| p.legality == Legality::IllegalSyntax).count(),
        illegal_move: proposals.iter().filter(|p| p.legality == Legality::IllegalMove).count(),
        legal_move_accuracy: legal as f64 / n,
        best_move_accuracy: best as f64 / n,
        by_bucket,
    }
}

pub fn accuracy(
    policies: &dyn PolicyFactory,
    items: &[EvalItem],
    buckets: Option<&BucketSpec>,
    seed: u64,
    exec: Exec,
) -> Result<Accuracy, MetricsError> {
    let proposals = item_proposals(policies, items, seed, exec)?;
    Ok(score_proposals(items, &proposals, buckets))
}

/// Fraction of items whose single proposal is legal.
pub fn legal_move_accuracy(
    policies: &dyn PolicyFactory,
    items: &[EvalItem],
    seed: u64,
    exec: Exec,
) -> Result<f64, MetricsError> {
    Ok(accuracy(policies, items, None, seed, exec)?.legal_move_accuracy)
}

/// Fraction of items whose single proposal is the reference move.
pub fn best_move_accuracy(
    policies: &dyn PolicyFactory,
    items: &[EvalItem],
    seed: u64,
    exec: Exec,
) -> Result<f64, MetricsError> {
    Ok(accuracy(policies, items, None, seed, exec)?.best_move_accuracy)
}

/// Pooled first-attempt legality over the measured side's move events.
/// `None` when there are no such events.
pub fn pass_at_1(games: &[(&GameRecord, Color)]) -> Result<Option<f64>, MetricsError> {
    let mut events = 0usize;
    let mut legal = 0usize;
    for (i, (rec, side)) in games.iter().enumerate() {
        let meta: &[MoveTelemetry] = rec.per_move_meta.as_deref().ok_or(MetricsError::MissingTelemetry(i))?;
        for t in meta.iter().filter(|t| t.proposer == *side) {
            events += 1;
            legal += usize::from(t.first_attempt_legal);
        }
    }
    Ok(ratio(legal, events))
}

/// Pass@1 of the first contestant of a match.
pub fn match_pass_at_1(m: &MatchResult) -> Result<Option<f64>, MetricsError> {
    let games: Vec<_> = m.games.iter().zip(&m.indices).map(|(g, &i)| (g, MatchResult::a_color(i))).collect();
    pass_at_1(&games)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub score: f64,
    pub stderr: f64,
    pub games: usize,
    pub draw_weight: f64,
}

pub fn win_rate_from_tallies(wins: u32, losses: u32, draws: u32, draw_weight: f64) -> Result<WinRate, MetricsError> {
    let games = (wins + losses + draws) as usize;
    if games == 0 {
        return Err(MetricsError::NoGames);
    }
    let score = (wins as f64 + draw_weight * draws as f64) / games as f64;
    Ok(WinRate { score, stderr: (score * (1.0 - score) / games as f64).sqrt(), games, draw_weight })
}

pub fn win_rate(m: &MatchResult, draw_weight: f64) -> Result<WinRate, MetricsError> {
    win_rate_from_tallies(m.wins, m.losses, m.draws, draw_weight)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveScore {
    pub score: f64,
    pub off_menu: bool,
}

/// Min-max normalized score of `choice` among the item's candidates; a move
/// outside the candidate list scores 0 and is flagged.
pub fn move_score(choice: Move, item: &EvalItem) -> Result<MoveScore, MetricsError> {
    let cands = item.candidates.as_deref().ok_or(MetricsError::NoCandidates)?;
    let lo = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let hi = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(MetricsError::NoCandidates);
    }
    Ok(match cands.iter().find(|c| c.0 == choice) {
        Some(&(_, raw)) => MoveScore { score: (raw - lo) / (hi - lo), off_menu: false },
        None => MoveScore { score: 0.0, off_menu: true },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveScoreSummary {
    pub mean: f64,
    pub items: usize,
    pub off_menu: usize,
    pub normalization: String,
}

pub fn mean_move_score(choices: &[Move], items: &[EvalItem]) -> Result<MoveScoreSummary, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::NoItems);
    }
    let mut sum = 0.0;
    let mut off_menu = 0;
    for (&c, item) in choices.iter().zip(items) {
        let s = move_score(c, item)?;
        sum += s.score;
        off_menu += usize::from(s.off_menu);
    }
    Ok(MoveScoreSummary {
        mean: sum / items.len() as f64,
        items: items.len(),
        off_menu,
        normalization: "per-item min-max".into(),
    })
}

/// Structured run report. Every field that depends on the run is echoed so
/// the run can be replayed from the report alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub command: String,
    pub config: serde_json::Value,
    pub engine_build: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<Accuracy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass_at_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub win_rate: Option<WinRate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tallies: Option<Tallies>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elo: Option<RatingEstimate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ladder: Vec<LadderRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tallies {
    pub wins: u32,
    pub losses: u32,
    pub draws: u32,
    pub aborted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub skill: u8,
    pub opponent_elo: f64,
    pub tallies: Option<Tallies>,
    pub win_rate: Option<WinRate>,
    pub pass_at_1: Option<f64>,
    pub elo: Option<RatingEstimate>,
    pub error: Option<String>,
}

impl Tallies {
    pub fn of(m: &MatchResult) -> Tallies {
        Tallies { wins: m.wins, losses: m.losses, draws: m.draws, aborted: m.aborted.len() }
    }
}

impl LadderRow {
    pub fn of(r: &LadderRung, draw_weight: f64) -> LadderRow {
        let m = r.result.as_ref();
        LadderRow {
            skill: r.skill,
            opponent_elo: r.opponent_elo,
            tallies: m.map(Tallies::of),
            win_rate: m.and_then(|m| win_rate(m, draw_weight).ok()),
            pass_at_1: m.and_then(|m| match_pass_at_1(m).ok().flatten()),
            elo: r.estimate.clone(),
            error: r.error.clone(),
        }
    }
}

impl Report {
    pub fn new(command: &str, config: serde_json::Value) -> Report {
        Report {
            tool: format!("fenbench {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            config,
            engine_build: None,
            accuracy: None,
            pass_at_1: None,
            win_rate: None,
            tallies: None,
            elo: None,
            ladder: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Every reported fraction lies in [0, 1].
    pub fn fractions_in_range(&self) -> bool {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let acc_ok = self.accuracy.as_ref().is_none_or(|a| {
            unit(a.legal_move_accuracy)
                && unit(a.best_move_accuracy)
                && a.by_bucket
                    .iter()
                    .all(|b| b.legal_move_accuracy.is_none_or(unit) && b.best_move_accuracy.is_none_or(unit))
        });
        let rows_ok = self
            .ladder
            .iter()
            .all(|r| r.pass_at_1.is_none_or(unit) && r.win_rate.is_none_or(|w| unit(w.score)));
        acc_ok && rows_ok && self.pass_at_1.is_none_or(unit) && self.win_rate.is_none_or(|w| unit(w.score))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} | {}", self.tool, self.command);
        if let Some(b) = &self.engine_build {
            let _ = writeln!(out, "engine: {b}");
        }
        if let Some(a) = &self.accuracy {
            let _ = writeln!(out, "items: {}", a.items);
            let _ = writeln!(out, "legal move accuracy: {:.4}", a.legal_move_accuracy);
            let _ = writeln!(out, "best move accuracy:  {:.4}", a.best_move_accuracy);
            if !a.by_bucket.is_empty() {
                let _ = writeln!(out, "{:<10} {:>6} {:>8} {:>8}", "rounds", "items", "legal", "best");
                for b in &a.by_bucket {
                    let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
                    let _ = writeln!(
                        out,
                        "{:<10} {:>6} {:>8} {:>8}",
                        b.bucket,
                        b.items,
                        f(b.legal_move_accuracy),
                        f(b.best_move_accuracy)
                    );
                }
            }
        }
        if let Some(t) = &self.tallies {
            let _ = writeln!(out, "W/L/D: {}/{}/{} (aborted {})", t.wins, t.losses, t.draws, t.aborted);
        }
        if let Some(w) = &self.win_rate {
            let _ = writeln!(out, "score: {:.4} ± {:.4} over {} games", w.score, w.stderr, w.games);
        }
        if let Some(p) = self.pass_at_1 {
            let _ = writeln!(out, "pass@1: {p:.4}");
        }
        if let Some(e) = &self.elo {
            let _ = writeln!(
                out,
                "elo: {:.1} ± {:.1} (95% interval {:.1}..{:.1}, tail mean {:.1})",
                e.elo, e.uncertainty, e.interval.0, e.interval.1, e.tail_mean
            );
        }
        if !self.ladder.is_empty() {
            let _ = writeln!(out, "{:>5} {:>5} {:>5} {:>5}  {:<16} {:>7}", "Skill", "Win", "Lose", "Draw", "Elo", "pass@1");
            for r in &self.ladder {
                match (&r.tallies, &r.elo) {
                    (Some(t), Some(e)) => {
                        let _ = writeln!(
                            out,
                            "{:>5} {:>5} {:>5} {:>5}  {:<16} {:>7}",
                            r.skill,
                            t.wins,
                            t.losses,
                            t.draws,
                            format!("{:.0} ± {:.0}", e.elo, e.uncertainty),
                            r.pass_at_1.map_or("-".into(), |p| format!("{p:.3}"))
                        );
                    }
                    _ => {
                        let _ = writeln!(out, "{:>5} failed: {}", r.skill, r.error.as_deref().unwrap_or("unknown"));
                    }
                }
            }
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}
