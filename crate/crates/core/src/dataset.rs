//! FEN to best-move datasets.
//!
//! Positions come from PGN corpora ([`Harvest`]) or from engine self-play
//! ([`self_play_endgames`]), get labeled by an engine
//! ([`label_best_moves`]) and are split into train and eval sets by round
//! bucket ([`make_split`]).
//!
//! On disk a record is one line: `FEN:<fen>\tBM:<uci>\t<json metadata>`.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{BestMoveSource, EngineError, Score, SearchLimits, SourceFactory};
use crate::exec::{self, derive_seed, Exec};
use crate::notation::{parse_fen, parse_uci_shape, position_key, render_fen, PgnReader};
use crate::rules::{has_legal_move, legal_moves, status, Move, Position, StatusTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundClass {
    Short,
    Long,
}

impl RoundClass {
    /// Inclusive search-depth range used when labeling this class.
    pub fn depth_range(self) -> (u32, u32) {
        match self {
            RoundClass::Short => (12, 50),
            RoundClass::Long => (50, 200),
        }
    }
}

impl FromStr for RoundClass {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "short" => Ok(RoundClass::Short),
            "long" => Ok(RoundClass::Long),
            _ => Err(DatasetError::Config(format!("unknown round class {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Corpus,
    SelfPlay,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("{0}")]
    Io(String),
    #[error("invalid dataset configuration: {0}")]
    Config(String),
    #[error("not enough records for the split: {}", format_deficits(.0))]
    Shortfall(Vec<Deficit>),
}

impl From<std::io::Error> for DatasetError {
    fn from(e: std::io::Error) -> Self {
        DatasetError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deficit {
    pub bucket: String,
    pub needed: usize,
    pub available: usize,
}

fn format_deficits(d: &[Deficit]) -> String {
    d.iter()
        .map(|d| format!("bucket {} needs {} but has {}", d.bucket, d.needed, d.available))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub fen: String,
    pub best_move: Move,
    pub search_depth: u32,
    pub movetime_ms: Option<u64>,
    pub engine_eval: Option<Score>,
    pub round_class: RoundClass,
    pub source: Source,
}

#[derive(Serialize, Deserialize)]
struct RecordMeta {
    search_depth: u32,
    movetime_ms: Option<u64>,
    engine_eval: Option<Score>,
    round_class: RoundClass,
    source: Source,
}

impl DatasetRecord {
    /// Checks that the FEN is valid and the best move legal in it.
    pub fn validate(&self) -> Result<Position, String> {
        let pos = parse_fen(&self.fen).map_err(|e| e.to_string())?;
        if !pos.is_legal(self.best_move) {
            return Err(format!("best move {} is illegal in {}", self.best_move, self.fen));
        }
        Ok(pos)
    }

    pub fn key(&self) -> String {
        parse_fen(&self.fen).map(|p| position_key(&p)).unwrap_or_else(|_| self.fen.clone())
    }

    pub fn fullmove(&self) -> u32 {
        parse_fen(&self.fen).map(|p| p.fullmove_number()).unwrap_or(0)
    }

    pub fn to_line(&self) -> String {
        let meta = RecordMeta {
            search_depth: self.search_depth,
            movetime_ms: self.movetime_ms,
            engine_eval: self.engine_eval,
            round_class: self.round_class,
            source: self.source,
        };
        let json = serde_json::to_string(&meta).expect("metadata serializes");
        format!("FEN:{}\tBM:{}\t{json}", self.fen, self.best_move)
    }

    /// Parses and validates one line; the error text names what is wrong.
    pub fn from_line(line: &str) -> Result<DatasetRecord, String> {
        let mut parts = line.splitn(3, '\t');
        let fen = parts.next().and_then(|s| s.strip_prefix("FEN:")).ok_or("missing FEN: section")?;
        let bm = parts.next().and_then(|s| s.strip_prefix("BM:")).ok_or("missing BM: section")?;
        let meta: RecordMeta =
            serde_json::from_str(parts.next().ok_or("missing metadata")?).map_err(|e| format!("metadata: {e}"))?;
        let best_move = parse_uci_shape(bm).ok_or_else(|| format!("bad UCI move {bm:?}"))?;
        let rec = DatasetRecord {
            fen: fen.to_string(),
            best_move,
            search_depth: meta.search_depth,
            movetime_ms: meta.movetime_ms,
            engine_eval: meta.engine_eval,
            round_class: meta.round_class,
            source: meta.source,
        };
        rec.validate()?;
        Ok(rec)
    }
}

pub fn write_records<'a>(
    records: impl IntoIterator<Item = &'a DatasetRecord>,
    path: impl AsRef<Path>,
) -> Result<(), DatasetError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in records {
        writeln!(out, "{}", r.to_line())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset file, re-checking every best move for legality and
/// rejecting duplicate position keys. Lines starting with `#` are headers.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, DatasetError> {
    let file = fs::File::open(path)?;
    let mut records = Vec::new();
    let mut keys = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let rec = DatasetRecord::from_line(&line).map_err(|reason| DatasetError::Line { line: i + 1, reason })?;
        if !keys.insert(rec.key()) {
            return Err(DatasetError::Line { line: i + 1, reason: "duplicate position key".into() });
        }
        records.push(rec);
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarvestedPosition {
    pub position: Position,
    pub fullmove: u32,
    pub source: Source,
}

/// Deduplicating position collector.
#[derive(Debug, Default)]
pub struct Harvest {
    pub positions: Vec<HarvestedPosition>,
    pub games: usize,
    pub skipped_games: usize,
    pub duplicates: usize,
    /// Positions with no legal move; they cannot be labeled.
    pub terminal: usize,
    pub warnings: Vec<String>,
    seen: HashSet<String>,
}

impl Harvest {
    pub fn new() -> Harvest {
        Harvest::default()
    }

    /// Adds `pos` unless its key has been seen or it has no legal move.
    /// Returns whether it was kept.
    pub fn add(&mut self, position: Position, source: Source) -> bool {
        if !has_legal_move(&position) {
            self.terminal += 1;
            return false;
        }
        if !self.seen.insert(position_key(&position)) {
            self.duplicates += 1;
            return false;
        }
        let fullmove = position.fullmove_number();
        self.positions.push(HarvestedPosition { position, fullmove, source });
        true
    }

    /// Adds every non-terminal position of every game in `text`, start
    /// positions included. Games with illegal moves are skipped and counted; a syntax
    /// error ends the file.
    pub fn add_pgn(&mut self, text: &str) {
        for game in PgnReader::new(text) {
            let rec = match game {
                Ok(rec) => rec,
                Err(e) => {
                    self.skipped_games += 1;
                    self.warnings.push(e.to_string());
                    continue;
                }
            };
            match rec.positions() {
                Ok(positions) => {
                    self.games += 1;
                    for p in positions {
                        self.add(p, Source::Corpus);
                    }
                }
                Err(e) => {
                    self.skipped_games += 1;
                    self.warnings.push(e.to_string());
                }
            }
        }
    }

    /// Adds every `*.pgn` file under `dir`, in file-name order.
    pub fn add_pgn_dir(&mut self, dir: impl AsRef<Path>) -> Result<(), DatasetError> {
        let mut files: Vec<_> = fs::read_dir(dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgn")))
            .collect();
        files.sort();
        for f in files {
            self.add_pgn(&fs::read_to_string(&f)?);
        }
        Ok(())
    }
}

pub fn harvest_positions(pgn: &str) -> Harvest {
    let mut h = Harvest::new();
    h.add_pgn(pgn);
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfPlayOptions {
    /// Positions with a fullmove number above this are kept.
    pub fullmove_threshold: u32,
    /// Seeded random plies before the engine takes over, so that games
    /// from a deterministic engine differ.
    pub random_opening_plies: u32,
    pub move_cap: u32,
}

impl Default for SelfPlayOptions {
    fn default() -> Self {
        SelfPlayOptions { fullmove_threshold: 40, random_opening_plies: 4, move_cap: 512 }
    }
}

#[derive(Debug, Default)]
pub struct SelfPlayOutput {
    pub harvest: Harvest,
    pub games_played: usize,
    pub aborted: Vec<(usize, String)>,
}

/// Plays one self-play game and returns every position past the threshold
/// that still has a move to label.
pub fn self_play_game(
    engine: &mut dyn BestMoveSource,
    limits: &SearchLimits,
    seed: u64,
    opts: &SelfPlayOptions,
) -> Result<Vec<Position>, EngineError> {
    let mut rng = exec::rng(seed);
    let mut pos = Position::startpos();
    let mut history = vec![pos.clone()];
    let mut kept = Vec::new();
    for ply in 0..opts.move_cap {
        if status(&pos, &history).tag != StatusTag::Ongoing {
            break;
        }
        if pos.fullmove_number() > opts.fullmove_threshold {
            kept.push(pos.clone());
        }
        let mv = if ply < opts.random_opening_plies {
            let moves = legal_moves(&pos);
            moves[rng.gen_range(0..moves.len())]
        } else {
            engine.query(&pos, limits)?.best_move
        };
        pos = pos.apply_move(mv).expect("engine replies are checked for legality");
        history.push(pos.clone());
    }
    Ok(kept)
}

/// Engine self-play from the start position, keeping late-game positions.
/// A failing game is recorded and skipped; its worker restarts the engine.
pub fn self_play_endgames(
    engines: &dyn SourceFactory,
    n_games: usize,
    limits: &SearchLimits,
    seed: u64,
    opts: &SelfPlayOptions,
    exec: Exec,
) -> SelfPlayOutput {
    let games = exec::map_init_indexed(
        exec,
        n_games,
        || None::<Box<dyn BestMoveSource>>,
        |slot, i| {
            if slot.is_none() {
                *slot = Some(engines.build().map_err(|e| e.to_string())?);
            }
            let engine = slot.as_deref_mut().expect("filled above");
            let result = self_play_game(engine, limits, derive_seed(seed, i as u64), opts);
            if result.is_err() {
                *slot = None;
            }
            result.map_err(|e| e.to_string())
        },
    );
    let mut out = SelfPlayOutput::default();
    for (i, g) in games.into_iter().enumerate() {
        match g {
            Ok(positions) => {
                out.games_played += 1;
                for p in positions {
                    out.harvest.add(p, Source::SelfPlay);
                }
            }
            Err(e) => out.aborted.push((i, e)),
        }
    }
    out
}

/// How deep to search when labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DepthRule {
    /// Uniform over the class's depth range, capped at two seconds.
    ClassRange,
    /// Depth 1 within 100 ms, as for the evaluation set.
    Eval,
    Fixed { depth: u32, movetime_ms: Option<u64> },
}

impl DepthRule {
    pub fn limits(&self, class: RoundClass, seed: u64) -> SearchLimits {
        match *self {
            DepthRule::ClassRange => {
                let (lo, hi) = class.depth_range();
                SearchLimits::train_label(exec::rng(seed).gen_range(lo..=hi))
            }
            DepthRule::Eval => SearchLimits::eval_label(),
            DepthRule::Fixed { depth, movetime_ms } => SearchLimits { depth: Some(depth), movetime_ms },
        }
    }
}

#[derive(Debug, Default)]
pub struct LabelOutput {
    pub records: Vec<DatasetRecord>,
    /// Index into the input and the reason it was skipped.
    pub skipped: Vec<(usize, String)>,
}

/// Labels each position with the engine's best move. Depth for position
/// `i` is drawn from `derive_seed(seed, i)`, so labels do not depend on how
/// the work is spread over workers.
pub fn label_best_moves(
    positions: &[HarvestedPosition],
    class: RoundClass,
    rule: DepthRule,
    engines: &dyn SourceFactory,
    seed: u64,
    exec: Exec,
) -> LabelOutput {
    let labeled = exec::map_init_indexed(
        exec,
        positions.len(),
        || None::<Box<dyn BestMoveSource>>,
        |slot, i| {
            let hp = &positions[i];
            let limits = rule.limits(class, derive_seed(seed, i as u64));
            if slot.is_none() {
                *slot = Some(engines.build().map_err(|e| e.to_string())?);
            }
            let engine = slot.as_deref_mut().expect("filled above");
            match engine.query(&hp.position, &limits) {
                Ok(reply) => Ok(DatasetRecord {
                    fen: render_fen(&hp.position),
                    best_move: reply.best_move,
                    search_depth: limits.depth.unwrap_or(0),
                    movetime_ms: limits.movetime_ms,
                    engine_eval: reply.score,
                    round_class: class,
                    source: hp.source,
                }),
                Err(e) => {
                    if !matches!(e, EngineError::NoLegalMoves) {
                        *slot = None;
                    }
                    Err(e.to_string())
                }
            }
        },
    );
    let mut out = LabelOutput::default();
    for (i, r) in labeled.into_iter().enumerate() {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(e) => out.skipped.push((i, e)),
        }
    }
    out
}

/// A fullmove-number range `[lo, hi)` with its share of the eval set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: u32,
    pub hi: Option<u32>,
    pub fraction: f64,
}

impl Bucket {
    pub fn contains(&self, fullmove: u32) -> bool {
        fullmove >= self.lo && self.hi.is_none_or(|h| fullmove < h)
    }

    pub fn label(&self) -> String {
        match self.hi {
            Some(h) => format!("{}-{}", self.lo, h),
            None => format!("{}-", self.lo),
        }
    }
}

/// Round buckets, written `lo-hi:fraction,...` with an empty `hi` for an
/// open-ended bucket, e.g. `10-20:0.3,20-40:0.5,0-10:0.1,40-:0.1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSpec(pub Vec<Bucket>);

impl Default for BucketSpec {
    fn default() -> Self {
        BucketSpec(vec![
            Bucket { lo: 10, hi: Some(20), fraction: 0.3 },
            Bucket { lo: 20, hi: Some(40), fraction: 0.5 },
            Bucket { lo: 0, hi: Some(10), fraction: 0.1 },
            Bucket { lo: 40, hi: None, fraction: 0.1 },
        ])
    }
}

impl BucketSpec {
    pub fn new(buckets: Vec<Bucket>) -> Result<BucketSpec, DatasetError> {
        let spec = BucketSpec(buckets);
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::Config(m));
        if self.0.is_empty() {
            return bad("no buckets".into());
        }
        for b in &self.0 {
            if !(0.0..=1.0).contains(&b.fraction) {
                return bad(format!("bucket {} has fraction {}", b.label(), b.fraction));
            }
            if b.hi.is_some_and(|h| h <= b.lo) {
                return bad(format!("bucket {} is empty", b.label()));
            }
        }
        for (i, a) in self.0.iter().enumerate() {
            for b in &self.0[i + 1..] {
                let a_hi = a.hi.unwrap_or(u32::MAX);
                let b_hi = b.hi.unwrap_or(u32::MAX);
                if a.lo < b_hi && b.lo < a_hi {
                    return bad(format!("buckets {} and {} overlap", a.label(), b.label()));
                }
            }
        }
        let total: f64 = self.0.iter().map(|b| b.fraction).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("fractions sum to {total}, not 1"));
        }
        Ok(())
    }

    pub fn bucket_of(&self, fullmove: u32) -> Option<usize> {
        self.0.iter().position(|b| b.contains(fullmove))
    }

    /// Per-bucket counts summing exactly to `total` (largest remainder).
    pub fn targets(&self, total: usize) -> Vec<usize> {
        let exact: Vec<f64> = self.0.iter().map(|b| b.fraction * total as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&i, &j| (exact[j] - exact[j].floor()).total_cmp(&(exact[i] - exact[i].floor())));
        let left = total.saturating_sub(counts.iter().sum());
        for &i in order.iter().cycle().take(left) {
            counts[i] += 1;
        }
        counts
    }
}

impl fmt::Display for BucketSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|b| format!("{}:{}", b.label(), b.fraction)).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for BucketSpec {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DatasetError::Config(format!("bad bucket spec {s:?}; expected lo-hi:fraction,..."));
        let mut buckets = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (range, frac) = part.split_once(':').ok_or_else(bad)?;
            let (lo, hi) = range.split_once('-').ok_or_else(bad)?;
            let fraction: f64 = frac.trim().trim_end_matches('%').parse().map_err(|_| bad())?;
            let fraction = if frac.trim().ends_with('%') { fraction / 100.0 } else { fraction };
            buckets.push(Bucket {
                lo: lo.trim().parse().map_err(|_| bad())?,
                hi: if hi.trim().is_empty() { None } else { Some(hi.trim().parse().map_err(|_| bad())?) },
                fraction,
            });
        }
        BucketSpec::new(buckets)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketCount {
    pub bucket: String,
    pub target_fraction: f64,
    pub target: usize,
    pub actual: usize,
    pub actual_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub eval_size: usize,
    pub seed: u64,
    pub buckets: String,
    pub engine_build: Option<String>,
    pub distribution: Vec<BucketCount>,
    pub train_ids: BTreeSet<String>,
    pub eval_ids: BTreeSet<String>,
}

impl SplitManifest {
    /// Splits `records` by the manifest's key sets, dropping any record
    /// whose key is in neither.
    pub fn partition<'a>(&self, records: &'a [DatasetRecord]) -> (Vec<&'a DatasetRecord>, Vec<&'a DatasetRecord>) {
        let mut train = Vec::new();
        let mut eval = Vec::new();
        for r in records {
            let k = r.key();
            if self.eval_ids.contains(&k) {
                eval.push(r);
            } else if self.train_ids.contains(&k) {
                train.push(r);
            }
        }
        (train, eval)
    }
}

/// Samples an eval set of `eval_size` unique positions hitting the bucket
/// targets; everything else goes to train. Records sharing a position key
/// count once.
pub fn make_split(
    records: &[DatasetRecord],
    eval_size: usize,
    buckets: &BucketSpec,
    seed: u64,
) -> Result<SplitManifest, DatasetError> {
    buckets.validate()?;
    let mut seen = HashSet::new();
    let mut per_bucket: Vec<Vec<String>> = vec![Vec::new(); buckets.0.len()];
    let mut unbucketed = Vec::new();
    for r in records {
        let key = r.key();
        if !seen.insert(key.clone()) {
            continue;
        }
        match buckets.bucket_of(r.fullmove()) {
            Some(b) => per_bucket[b].push(key),
            None => unbucketed.push(key),
        }
    }

    let targets = buckets.targets(eval_size);
    let deficits: Vec<Deficit> = buckets
        .0
        .iter()
        .zip(&targets)
        .zip(&per_bucket)
        .filter(|((_, &t), keys)| keys.len() < t)
        .map(|((b, &t), keys)| Deficit { bucket: b.label(), needed: t, available: keys.len() })
        .collect();
    if !deficits.is_empty() {
        return Err(DatasetError::Shortfall(deficits));
    }

    let mut train_ids: BTreeSet<String> = unbucketed.into_iter().collect();
    let mut eval_ids = BTreeSet::new();
    let mut distribution = Vec::new();
    for (i, (mut keys, &target)) in per_bucket.into_iter().zip(&targets).enumerate() {
        keys.sort();
        keys.shuffle(&mut exec::rng(derive_seed(seed, i as u64)));
        let rest = keys.split_off(target);
        distribution.push(BucketCount {
            bucket: buckets.0[i].label(),
            target_fraction: buckets.0[i].fraction,
            target,
            actual: keys.len(),
            actual_fraction: if eval_size == 0 { 0.0 } else { keys.len() as f64 / eval_size as f64 },
        });
        eval_ids.extend(keys);
        train_ids.extend(rest);
    }
    Ok(SplitManifest {
        eval_size,
        seed,
        buckets: buckets.to_string(),
        engine_build: None,
        distribution,
        train_ids,
        eval_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EngineReply;
    use crate::policy::{GreedyMaterial, Policy};

    const REFERENCE_GAME: &str = include_str!("../tests/data/reference_game.pgn");

    fn record(fen: &str, mv: &str) -> DatasetRecord {
        DatasetRecord {
            fen: fen.into(),
            best_move: parse_uci_shape(mv).unwrap(),
            search_depth: 12,
            movetime_ms: Some(2000),
            engine_eval: Some(Score::Cp(31)),
            round_class: RoundClass::Short,
            source: Source::Corpus,
        }
    }

    /// In-process stand-in for an engine.
    struct Greedy;

    impl BestMoveSource for Greedy {
        fn query(&mut self, pos: &Position, _: &SearchLimits) -> Result<EngineReply, EngineError> {
            let text = GreedyMaterial.propose_text(pos, 0).map_err(|_| EngineError::NoLegalMoves)?;
            Ok(EngineReply { best_move: parse_uci_shape(&text).unwrap(), score: None, win_rate: None, depth_reached: None })
        }

        fn describe(&self) -> String {
            "greedy".into()
        }
    }

    struct GreedyFactory;

    impl SourceFactory for GreedyFactory {
        fn build(&self) -> Result<Box<dyn BestMoveSource>, EngineError> {
            Ok(Box::new(Greedy))
        }

        fn describe(&self) -> String {
            "greedy".into()
        }
    }

    #[test]
    fn line_round_trip() {
        let r = record(crate::notation::START_FEN, "e2e4");
        let line = r.to_line();
        assert!(line.starts_with("FEN:rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1\tBM:e2e4\t{"));
        assert_eq!(DatasetRecord::from_line(&line).unwrap(), r);
        let mate = DatasetRecord { engine_eval: Some(Score::Mate(1)), ..r };
        assert_eq!(DatasetRecord::from_line(&mate.to_line()).unwrap(), mate);
    }

    #[test]
    fn illegal_best_move_rejected_on_read() {
        let line = record(crate::notation::START_FEN, "e2e4").to_line().replace("BM:e2e4", "BM:e2e5");
        assert!(DatasetRecord::from_line(&line).unwrap_err().contains("illegal"));
        assert!(DatasetRecord::from_line("garbage").is_err());
    }

    #[test]
    fn file_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.txt");
        let good = record(crate::notation::START_FEN, "e2e4").to_line();
        fs::write(&path, format!("{good}\nFEN:x\tBM:e2e4\t{{}}\n")).unwrap();
        match read_records(&path) {
            Err(DatasetError::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        fs::write(&path, format!("{good}\n{good}\n")).unwrap();
        assert!(matches!(read_records(&path), Err(DatasetError::Line { line: 2, .. })));
        fs::write(&path, "").unwrap();
        assert!(read_records(&path).unwrap().is_empty());
    }

    #[test]
    fn reference_game_positions() {
        let h = harvest_positions(REFERENCE_GAME);
        assert_eq!(h.games, 1);
        // The final checkmate has nothing to label.
        assert_eq!((h.positions.len(), h.terminal), (91, 1));
        assert_eq!(h.positions[0].position, Position::startpos());
        let twice = harvest_positions(&format!("{REFERENCE_GAME}\n\n{REFERENCE_GAME}"));
        assert_eq!(twice.positions.len(), 91);
        assert_eq!((twice.duplicates, twice.terminal), (91, 2));
        assert!(harvest_positions("").positions.is_empty());
    }

    #[test]
    fn bad_games_are_skipped() {
        let h = harvest_positions("1. e4 e5 2. Ke3 *\n\n1. d4 d5 *\n");
        assert_eq!(h.skipped_games, 1);
        assert_eq!(h.games, 1);
        assert_eq!(h.positions.len(), 3);
    }

    #[test]
    fn self_play_keeps_late_positions() {
        let opts = SelfPlayOptions { fullmove_threshold: 10, random_opening_plies: 8, move_cap: 120 };
        let out = self_play_endgames(&GreedyFactory, 3, &SearchLimits::depth(1), 9, &opts, Exec::Sequential);
        assert_eq!(out.games_played, 3);
        assert!(!out.harvest.positions.is_empty());
        assert!(out.harvest.positions.iter().all(|p| p.fullmove > 10 && !legal_moves(&p.position).is_empty()));
        let empty = self_play_endgames(&GreedyFactory, 0, &SearchLimits::depth(1), 9, &opts, Exec::Sequential);
        assert_eq!(empty.games_played, 0);
    }

    #[test]
    fn class_depths_sampled_in_range() {
        for seed in 0..200 {
            let s = DepthRule::ClassRange.limits(RoundClass::Short, seed);
            assert!((12..=50).contains(&s.depth.unwrap()));
            assert_eq!(s.movetime_ms, Some(2000));
            let l = DepthRule::ClassRange.limits(RoundClass::Long, seed);
            assert!((50..=200).contains(&l.depth.unwrap()));
        }
        assert_eq!(DepthRule::Eval.limits(RoundClass::Short, 0), SearchLimits::eval_label());
    }

    #[test]
    fn labels_are_legal() {
        let mut positions = harvest_positions(REFERENCE_GAME).positions;
        let mate = parse_fen("rnb1kbnr/pppp1ppp/8/4p3/6Pq/5P2/PPPPP2P/RNBQKBNR w KQkq - 1 3").unwrap();
        positions.push(HarvestedPosition { position: mate, fullmove: 3, source: Source::Corpus });
        let out = label_best_moves(&positions, RoundClass::Short, DepthRule::Eval, &GreedyFactory, 0, Exec::Sequential);
        assert_eq!(out.records.len(), 91);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].0, 91);
        assert!(out.records.iter().all(|r| r.validate().is_ok()));
    }

    #[test]
    fn bucket_spec_parsing() {
        let spec: BucketSpec = "10-20:0.3,20-40:0.5,0-10:0.1,40-:0.1".parse().unwrap();
        assert_eq!(spec, BucketSpec::default());
        assert_eq!(spec.to_string().parse::<BucketSpec>().unwrap(), spec);
        assert!("10-20:30%,20-40:50%,0-10:10%,40-:10%".parse::<BucketSpec>().is_ok());
        assert!("0-10:0.5,5-20:0.5".parse::<BucketSpec>().is_err());
        assert!("0-10:0.5".parse::<BucketSpec>().is_err());
        assert_eq!(BucketSpec::default().targets(10_000), vec![3000, 5000, 1000, 1000]);
        assert_eq!(BucketSpec::default().targets(7).iter().sum::<usize>(), 7);
    }

    #[test]
    fn split_shortfall_and_empty() {
        let recs = vec![record(crate::notation::START_FEN, "e2e4")];
        match make_split(&recs, 10, &BucketSpec::default(), 0) {
            Err(DatasetError::Shortfall(d)) => assert_eq!(d.len(), 3),
            other => panic!("{other:?}"),
        }
        let m = make_split(&recs, 0, &BucketSpec::default(), 0).unwrap();
        assert!(m.eval_ids.is_empty());
        assert_eq!(m.train_ids.len(), 1);
    }
}
