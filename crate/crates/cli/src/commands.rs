use std::fmt::Display;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use fenbench::arena::{ladder, run_match, GameConfig, LadderConfig, MatchConfig, MatchResult, Protocol};
use fenbench::dataset::{
    label_best_moves, make_split, read_records, self_play_endgames, BucketSpec, DatasetRecord, DepthRule, Harvest,
    RoundClass, SelfPlayOptions,
};
use fenbench::engine::{EngineConfig, EngineHandle, SearchLimits, SourceFactory};
use fenbench::exec::{derive_seed, Exec};
use fenbench::metrics::{
    accuracy, match_pass_at_1, win_rate, win_rate_from_tallies, EvalItem, LadderRow, Report, Tallies,
};
use fenbench::notation::{
    game_fens, parse_fen, parse_move_text, parse_pgn, render_fen, render_pgn, render_pgn_many, render_san,
};
use fenbench::policy::{ExhaustionRule, PolicySpec, SpecFactory};
use fenbench::rating::{estimate_rating, opponent_elo, BootstrapOptions, KSchedule, RatedGame};
use fenbench::rules::{divide, perft_with, Color, Position};
use serde::Serialize;

use crate::args::{
    AccuracyArgs, ArenaArgs, BuildDatasetArgs, ClassArg, Command, Common, ConvertArgs, ExhaustionArg, LadderArgs,
    PerftArgs, PgnOutput, ProtocolArg, RateArgs, SplitArgs,
};

/// A flag value that parsed as a string but means nothing; exits with 2.
#[derive(Debug)]
pub struct UsageError(String);

impl Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_flag<T>(value: &str, flag: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    value.parse().map_err(|e| usage(format!("--{flag} {value:?}: {e}")))
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Perft(a) => perft(a),
        Command::Convert(a) => convert(a),
        Command::BuildDataset(a) => build_dataset(a),
        Command::Split(a) => split(a),
        Command::Accuracy(a) => accuracy_cmd(a),
        Command::Arena(a) => arena(a),
        Command::Ladder(a) => ladder_cmd(a),
        Command::Rate(a) => rate(a),
    }
}

fn exec_of(c: &Common) -> Result<Exec> {
    if c.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    Ok(Exec::from_jobs(c.jobs))
}

fn engine_of(c: &Common) -> Result<EngineConfig> {
    let cfg = EngineConfig { threads: c.threads, ..EngineConfig::new(&c.engine) };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

/// Starts the engine once to learn its build string for the report.
fn engine_build(cfg: &EngineConfig) -> Result<String> {
    let handle = EngineHandle::spawn(cfg.clone())
        .with_context(|| format!("starting engine {}", cfg.executable_path.display()))?;
    Ok(handle.build())
}

fn echo<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

/// One-line provenance header: tool, command and config echo.
fn header(command: &str, config: &serde_json::Value) -> String {
    format!("fenbench {} {command} {config}", env!("CARGO_PKG_VERSION"))
}

fn emit(report: &Report, c: &Common, print: bool) -> Result<()> {
    if !report.fractions_in_range() {
        bail!("internal error: a reported fraction is outside [0, 1]");
    }
    if print {
        print!("{}", report.to_text());
    }
    if let Some(path) = &c.report {
        fs::write(path, report.to_json()).with_context(|| format!("writing report {}", path.display()))?;
    }
    Ok(())
}

fn position_arg(text: &str) -> Result<Position> {
    if text == "startpos" {
        return Ok(Position::startpos());
    }
    parse_fen(text).map_err(|e| usage(format!("bad FEN {text:?}: {e}")))
}

fn perft(a: PerftArgs) -> Result<()> {
    let pos = position_arg(&a.fen)?;
    let exec = exec_of(&a.common)?;
    if a.divide {
        for (m, n) in divide(&pos, a.depth) {
            println!("{}: {n}", m.to_uci());
        }
    }
    let nodes = perft_with(exec, &pos, a.depth);
    let mut report = Report::new("perft", echo(&a));
    report.notes.push(format!("nodes {nodes}"));
    if a.engine_check {
        let cfg = engine_of(&a.common)?;
        let mut engine = EngineHandle::spawn(cfg).context("starting engine for the perft cross-check")?;
        let theirs = engine.perft(&pos, a.depth)?;
        report.engine_build = Some(engine.build());
        if theirs != nodes {
            bail!("perft mismatch at depth {}: ours {nodes}, engine {theirs}", a.depth);
        }
        report.notes.push("engine agrees".into());
    }
    println!("{nodes}");
    emit(&report, &a.common, false)
}

fn convert(a: ConvertArgs) -> Result<()> {
    match a {
        ConvertArgs::Pgn { file, to, .. } => {
            let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let games = parse_pgn(&text).with_context(|| format!("parsing {}", file.display()))?;
            let mut out = String::new();
            for (i, g) in games.iter().enumerate() {
                match to {
                    PgnOutput::Pgn => out.push_str(&render_pgn(g)?),
                    PgnOutput::Fen => {
                        if i > 0 {
                            out.push('\n');
                        }
                        for fen in game_fens(g)? {
                            out.push_str(&fen);
                            out.push('\n');
                        }
                    }
                    PgnOutput::Uci => {
                        let moves: Vec<String> = g.moves.iter().map(|m| m.to_uci()).collect();
                        out.push_str(&moves.join(" "));
                        out.push('\n');
                    }
                    PgnOutput::San => {
                        let positions = g.positions()?;
                        let sans = g
                            .moves
                            .iter()
                            .zip(&positions)
                            .map(|(&m, p)| render_san(m, p))
                            .collect::<Result<Vec<_>, _>>()?;
                        out.push_str(&sans.join(" "));
                        out.push('\n');
                    }
                }
                if to == PgnOutput::Pgn && i + 1 < games.len() {
                    out.push('\n');
                }
            }
            print!("{out}");
            Ok(())
        }
        ConvertArgs::Fen { fen, moves, san, .. } => {
            let mut pos = position_arg(&fen)?;
            let mut sans = Vec::new();
            for text in &moves {
                let m = parse_move_text(text, &pos).with_context(|| format!("move {text:?} in {}", render_fen(&pos)))?;
                sans.push(render_san(m, &pos)?);
                pos = pos.apply_move(m)?;
            }
            if san {
                println!("{}", sans.join(" "));
            } else {
                println!("{}", render_fen(&pos));
            }
            Ok(())
        }
    }
}

fn depth_rule(text: &str) -> Result<DepthRule> {
    match text {
        "class" => Ok(DepthRule::ClassRange),
        "eval" => Ok(DepthRule::Eval),
        _ => {
            let depth = text
                .strip_prefix("fixed:")
                .and_then(|d| d.parse::<u32>().ok())
                .filter(|&d| d > 0)
                .ok_or_else(|| usage(format!("--depth-rule {text:?}: expected class, eval or fixed:D")))?;
            Ok(DepthRule::Fixed { depth, movetime_ms: None })
        }
    }
}

fn write_dataset<'a>(
    path: &Path,
    head: &str,
    records: impl IntoIterator<Item = &'a DatasetRecord>,
) -> Result<usize> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# {head}")?;
    let mut n = 0;
    for r in records {
        writeln!(out, "{}", r.to_line())?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

fn build_dataset(a: BuildDatasetArgs) -> Result<()> {
    let config = echo(&a);
    let exec = exec_of(&a.common)?;
    let engine = engine_of(&a.common)?;
    let rule = depth_rule(&a.depth_rule)?;
    let class = match a.class {
        ClassArg::Short => RoundClass::Short,
        ClassArg::Long => RoundClass::Long,
    };
    let mut report = Report::new("build-dataset", config.clone());
    report.engine_build = Some(engine_build(&engine)?);

    let harvest = match (&a.pgn, a.self_play) {
        (Some(dir), _) => {
            let mut h = Harvest::new();
            h.add_pgn_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
            report.notes.push(format!("{} games read, {} skipped", h.games, h.skipped_games));
            report.notes.extend(h.warnings.iter().take(20).cloned());
            h
        }
        (None, Some(n)) => {
            let limits = match a.play_depth {
                Some(d) => SearchLimits::depth(d),
                None => SearchLimits::movetime(a.play_movetime),
            };
            let opts = SelfPlayOptions {
                fullmove_threshold: a.fullmove_threshold,
                random_opening_plies: a.random_plies,
                ..SelfPlayOptions::default()
            };
            let out = self_play_endgames(&engine, n, &limits, derive_seed(a.common.seed, 0), &opts, exec);
            report.notes.push(format!("{} self-play games, {} aborted", out.games_played, out.aborted.len()));
            report.notes.extend(out.aborted.iter().map(|(i, e)| format!("game {i} aborted: {e}")));
            out.harvest
        }
        (None, None) => return Err(usage("one of --pgn or --self-play is required")),
    };
    report.notes.push(format!(
        "{} positions kept, {} duplicates, {} terminal",
        harvest.positions.len(),
        harvest.duplicates,
        harvest.terminal
    ));

    let labeled = label_best_moves(&harvest.positions, class, rule, &engine, derive_seed(a.common.seed, 1), exec);
    let n = write_dataset(&a.out, &header("build-dataset", &config), &labeled.records)?;
    report.notes.push(format!("{n} records written, {} skipped", labeled.skipped.len()));
    report.notes.extend(labeled.skipped.iter().take(20).map(|(i, e)| format!("position {i} skipped: {e}")));
    emit(&report, &a.common, true)
}

fn split(a: SplitArgs) -> Result<()> {
    let config = echo(&a);
    let buckets: BucketSpec = parse_flag(&a.buckets, "buckets")?;
    let records = read_records(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let manifest = make_split(&records, a.eval_size, &buckets, a.common.seed)?;
    let (train, eval) = manifest.partition(&records);
    let head = header("split", &config);
    write_dataset(&a.train, &head, train)?;
    write_dataset(&a.eval, &head, eval)?;
    if let Some(path) = &a.manifest {
        let doc = serde_json::json!({
            "tool": format!("fenbench {}", env!("CARGO_PKG_VERSION")),
            "config": config,
            "manifest": manifest,
        });
        fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    }
    let mut report = Report::new("split", config);
    report.notes.push(format!("{} train, {} eval", manifest.train_ids.len(), manifest.eval_ids.len()));
    for d in &manifest.distribution {
        report.notes.push(format!(
            "bucket {}: {} of {} ({:.4}, target {:.4})",
            d.bucket, d.actual, d.target, d.actual_fraction, d.target_fraction
        ));
    }
    emit(&report, &a.common, true)
}

fn policy_factory(spec: &str, flag: &str, engine: &EngineConfig) -> Result<SpecFactory> {
    Ok(SpecFactory { spec: parse_flag::<PolicySpec>(spec, flag)?, engine: engine.clone() })
}

fn accuracy_cmd(a: AccuracyArgs) -> Result<()> {
    let exec = exec_of(&a.common)?;
    let engine = engine_of(&a.common)?;
    let factory = policy_factory(&a.policy, "policy", &engine)?;
    let buckets: BucketSpec = parse_flag(&a.buckets, "buckets")?;
    let records = read_records(&a.items).with_context(|| format!("reading {}", a.items.display()))?;
    let items = records.iter().map(EvalItem::from_record).collect::<Result<Vec<_>, _>>()?;
    let mut report = Report::new("accuracy", echo(&a));
    if factory.spec.uses_engine() {
        report.engine_build = Some(engine_build(&engine)?);
    }
    report.accuracy = Some(accuracy(&factory, &items, Some(&buckets), a.common.seed, exec)?);
    emit(&report, &a.common, true)
}

fn protocol_of(p: ProtocolArg) -> Protocol {
    match p {
        ProtocolArg::Elo => Protocol::EloProtocol,
        ProtocolArg::Lm => Protocol::LmMatchProtocol,
    }
}

/// Loads the arguments echoed in an earlier arena report, keeping this
/// invocation's output paths.
fn replay_args(path: &Path, current: &ArenaArgs) -> Result<ArenaArgs> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let report: Report = serde_json::from_str(&text).with_context(|| format!("parsing report {}", path.display()))?;
    if report.command != "arena" {
        return Err(usage(format!("{} is a {} report, not an arena report", path.display(), report.command)));
    }
    let mut args: ArenaArgs = serde_json::from_value(report.config).context("config echo is incomplete")?;
    args.pgn = current.pgn.clone();
    args.common.report = current.common.report.clone();
    Ok(args)
}

fn arena(a: ArenaArgs) -> Result<()> {
    let a = match &a.config {
        Some(path) => replay_args(path, &a)?,
        None => a,
    };
    let config = echo(&a);
    let exec = exec_of(&a.common)?;
    let engine = engine_of(&a.common)?;
    let (Some(white), Some(black)) = (&a.white, &a.black) else {
        return Err(usage("--white and --black are required"));
    };
    let wf = policy_factory(white, "white", &engine)?;
    let bf = policy_factory(black, "black", &engine)?;
    if !(0.0..=1.0).contains(&a.draw_weight) {
        return Err(usage("--draw-weight must lie in [0, 1]"));
    }
    let protocol = protocol_of(a.protocol);
    let mut game = GameConfig::new(protocol);
    game.exhaustion = match a.exhaustion {
        ExhaustionArg::ForfeitLoss => ExhaustionRule::ForfeitLoss,
        ExhaustionArg::RandomLegalContinue => ExhaustionRule::RandomLegalContinue,
    };
    game.move_cap = a.move_cap;
    game.fallback_limits = SearchLimits::movetime(a.fallback_movetime);
    let mcfg = MatchConfig { game, seed: a.common.seed, event: a.event.clone() };
    let fallback = (protocol == Protocol::LmMatchProtocol).then_some(&engine as &dyn SourceFactory);

    let mut report = Report::new("arena", config.clone());
    if fallback.is_some() || wf.spec.uses_engine() || bf.spec.uses_engine() {
        report.engine_build = Some(engine_build(&engine)?);
    }
    let m = run_match(&wf, &bf, fallback, a.games, &mcfg, exec)?;
    report.tallies = Some(Tallies::of(&m));
    report.win_rate = Some(win_rate(&m, a.draw_weight)?);
    report.pass_at_1 = match_pass_at_1(&m)?;
    report.notes.push(format!("tallies and pass@1 are for {}; colors: {}", m.a, m.colors));
    report.notes.extend(m.aborted.iter().map(|g| format!("game {} (seed {}) aborted: {}", g.index, g.seed, g.reason)));
    if let Some(path) = &a.pgn {
        write_games(path, &header("arena", &config), &m)?;
    }
    emit(&report, &a.common, true)
}

fn write_games(path: &Path, head: &str, m: &MatchResult) -> Result<()> {
    let body = render_pgn_many(&m.games)?;
    fs::write(path, format!("% {head}\n{body}")).with_context(|| format!("writing {}", path.display()))
}

fn ladder_cmd(a: LadderArgs) -> Result<()> {
    let config = echo(&a);
    let exec = exec_of(&a.common)?;
    let engine = engine_of(&a.common)?;
    let factory = policy_factory(&a.policy, "policy", &engine)?;
    let k_schedule: KSchedule = parse_flag(&a.k_schedule, "k-schedule")?;
    if let Some(s) = a.skills.iter().find(|&&s| s > 20) {
        return Err(usage(format!("--skills: {s} is outside 0..=20")));
    }
    let mut game = GameConfig::new(protocol_of(a.protocol));
    game.move_cap = a.move_cap;
    let cfg = LadderConfig {
        matches: MatchConfig { game, seed: a.common.seed, event: "fenbench ladder".into() },
        games_per_rung: a.games,
        opponent_limits: SearchLimits { depth: a.depth, movetime_ms: Some(a.movetime) },
        k_schedule,
        bootstrap: BootstrapOptions { samples: a.bootstrap, seed: derive_seed(a.common.seed, u64::MAX), exec },
    };
    let mut report = Report::new("ladder", config.clone());
    if !a.skills.is_empty() {
        report.engine_build = Some(engine_build(&engine)?);
    }
    let rungs = ladder(&factory, &a.skills, &engine, &cfg, exec)?;
    report.ladder = rungs.iter().map(|r| LadderRow::of(r, a.draw_weight)).collect();
    if let Some(dir) = &a.pgn_dir {
        fs::create_dir_all(dir)?;
        let head = header("ladder", &config);
        for r in &rungs {
            if let Some(m) = &r.result {
                write_games(&dir.join(format!("skill_{}.pgn", r.skill)), &head, m)?;
            }
        }
    }
    emit(&report, &a.common, true)
}

fn rated_games_from_lines(text: &str) -> Result<Vec<RatedGame>> {
    let mut games = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| s.parse::<f64>().ok();
        let (Some(actual), Some(opponent_elo)) = (fields.first().and_then(|s| parse(s)), fields.get(1).and_then(|s| parse(s)))
        else {
            bail!("line {}: expected `RESULT OPPONENT_ELO`, got {line:?}", i + 1);
        };
        if fields.len() != 2 {
            bail!("line {}: expected two fields, got {}", i + 1, fields.len());
        }
        games.push(RatedGame { actual, opponent_elo });
    }
    Ok(games)
}

fn rated_games_from_pgn(text: &str, a: &RateArgs) -> Result<(Vec<RatedGame>, usize)> {
    let player = a.player.as_deref().ok_or_else(|| usage("--player is required for PGN results"))?;
    let opp = match (a.opponent_elo, a.skill) {
        (Some(e), _) => e,
        (None, Some(s)) if s <= 20 => opponent_elo(s),
        (None, Some(s)) => return Err(usage(format!("--skill {s} is outside 0..=20"))),
        (None, None) => return Err(usage("PGN results need --opponent-elo or --skill")),
    };
    let mut games = Vec::new();
    let mut ignored = 0;
    for g in parse_pgn(text)? {
        let color = if g.tag("White") == Some(player) {
            Color::White
        } else if g.tag("Black") == Some(player) {
            Color::Black
        } else {
            ignored += 1;
            continue;
        };
        match g.result.score_for(color) {
            Some(actual) => games.push(RatedGame { actual, opponent_elo: opp }),
            None => ignored += 1,
        }
    }
    Ok((games, ignored))
}

fn rate(a: RateArgs) -> Result<()> {
    let exec = exec_of(&a.common)?;
    let k: KSchedule = parse_flag(&a.k_schedule, "k-schedule")?;
    let text = fs::read_to_string(&a.results).with_context(|| format!("reading {}", a.results.display()))?;
    let is_pgn = a.results.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgn"));
    let (games, ignored) = if is_pgn { rated_games_from_pgn(&text, &a)? } else { (rated_games_from_lines(&text)?, 0) };
    let Some(first) = games.first() else {
        bail!("{} holds no rated games", a.results.display());
    };
    let initial = a.initial_elo.unwrap_or(first.opponent_elo);
    let opts = BootstrapOptions { samples: a.bootstrap, seed: a.common.seed, exec };
    let est = estimate_rating(&games, &k, initial, opts)?;

    let count = |v: f64| games.iter().filter(|g| g.actual == v).count() as u32;
    let (wins, draws, losses) = (count(1.0), count(0.5), count(0.0));
    let mut report = Report::new("rate", echo(&a));
    report.tallies = Some(Tallies { wins, losses, draws, aborted: 0 });
    report.win_rate = Some(win_rate_from_tallies(wins, losses, draws, 0.5)?);
    report.elo = Some(est);
    if ignored > 0 {
        report.notes.push(format!("{ignored} games without a rated result for the player were ignored"));
    }
    emit(&report, &a.common, true)
}
