//! Acceptance checks, one PASS/FAIL line per criterion. Exits non-zero when
//! any criterion fails. Engine-backed criteria fail (rather than skip) when
//! no engine is available.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use fenbench::arena::{play_game, run_match, FallbackSource, GameConfig, GameLabels, MatchConfig, MatchResult, Protocol};
use fenbench::dataset::{
    label_best_moves, make_split, read_records, write_records, BucketSpec, DatasetRecord, DepthRule,
    HarvestedPosition, RoundClass,
};
use fenbench::engine::{EngineConfig, EngineHandle, SearchLimits};
use fenbench::exec::{derive_seed, map_indexed, rng, Exec};
use fenbench::metrics::{accuracy, match_pass_at_1, mean_move_score, EvalItem};
use fenbench::notation::{game_fens, parse_fen, parse_move_text, parse_pgn, render_fen, render_pgn, render_san};
use fenbench::policy::{
    fallback_move, retry_sample, FnFactory, Noisy, Policy, PolicySpec, RandomLegal, SamplingConfig, SpecFactory,
};
use fenbench::rating::{
    elo_from_skill, estimate_rating, expected_score, opponent_elo, skill_from_elo, update, BootstrapOptions,
    KSchedule,
};
use fenbench::rules::{legal_moves, perft, perft_with, Position};
use rand::seq::SliceRandom;
use rand::Rng;

const REFERENCE_GAME: &str = include_str!("../../core/tests/data/reference_game.pgn");

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn engine() -> Result<EngineConfig, String> {
    common::engine_config().ok_or_else(|| "no UCI engine found (set FENBENCH_ENGINE)".to_string())
}

fn spec_factory(spec: &str, engine: &EngineConfig) -> SpecFactory {
    SpecFactory { spec: spec.parse().unwrap(), engine: engine.clone() }
}

fn noisy_factory(p: f64) -> impl fenbench::policy::PolicyFactory {
    FnFactory::new("noisy", move || -> Result<Box<dyn Policy>, _> {
        Ok(Box::new(Noisy::new(p, Box::new(RandomLegal))?))
    })
}

// 1. Move generation.
fn c1_perft() -> Check {
    const PUBLISHED: [u64; 5] = [20, 400, 8902, 197_281, 4_865_609];
    let start = Position::startpos();
    let board = common::oracle::parse(fenbench::notation::START_FEN);
    let mut detail = Vec::new();
    for (d, &want) in (1..=5u32).zip(&PUBLISHED) {
        let oracle = common::oracle::perft(&board, d);
        let t = Instant::now();
        let got = perft(&start, d);
        let secs = t.elapsed().as_secs_f64();
        ensure(oracle == want, format!("oracle depth {d}: {oracle} != {want}"))?;
        ensure(got == oracle, format!("depth {d}: {got} != oracle {oracle}"))?;
        if d == 5 {
            ensure(secs < 60.0, format!("depth 5 took {secs:.1}s"))?;
            detail.push(format!("d5 {got} in {secs:.2}s"));
        }
    }
    ensure(perft_with(Exec::parallel(), &start, 5) == PUBLISHED[4], "parallel perft disagrees")?;
    if let Ok(cfg) = engine() {
        let mut h = EngineHandle::spawn(cfg).map_err(|e| e.to_string())?;
        for d in 1..=4 {
            let e = h.perft(&start, d).map_err(|e| e.to_string())?;
            ensure(e == PUBLISHED[d as usize - 1], format!("engine perft {d}: {e}"))?;
        }
        detail.push("engine agrees to d4".into());
    }
    Ok(detail.join(", "))
}

// 2. Notation round trips.
fn c2_notation() -> Check {
    let mut fens = 0usize;
    let mut seed = 0u64;
    while fens < 10_000 {
        let cfg = GameConfig::default().with_seed(derive_seed(2, seed));
        seed += 1;
        let rec = play_game(&mut RandomLegal, &mut RandomLegal, None, &cfg, &GameLabels::default())
            .map_err(|e| e.to_string())?;
        for fen in game_fens(&rec).map_err(|e| e.to_string())? {
            let pos = parse_fen(&fen).map_err(|e| format!("{fen}: {e}"))?;
            ensure(render_fen(&pos) == fen, format!("FEN mismatch: {fen}"))?;
            fens += 1;
        }
    }

    let mut positions = 0usize;
    let mut sans = 0usize;
    for rec in common::random_records(20, 22).into_iter().take(1000) {
        let pos = rec.validate()?;
        for m in legal_moves(&pos) {
            let san = render_san(m, &pos).map_err(|e| e.to_string())?;
            let back = parse_move_text(&san, &pos).map_err(|e| format!("{san}: {e}"))?;
            ensure(back == m, format!("SAN {san} in {} parsed as {}", rec.fen, back.to_uci()))?;
            sans += 1;
        }
        positions += 1;
    }
    ensure(positions >= 1000, format!("only {positions} SAN positions"))?;

    let g = parse_pgn(REFERENCE_GAME).map_err(|e| e.to_string())?.remove(0);
    let text = render_pgn(&g).map_err(|e| e.to_string())?;
    let back = parse_pgn(&text).map_err(|e| e.to_string())?.remove(0);
    ensure(back.tags == g.tags && back.moves == g.moves && back.result == g.result, "reference PGN differs")?;
    ensure(g.moves.len() == 91, format!("reference has {} plies", g.moves.len()))?;
    Ok(format!("{fens} FENs, {sans} SAN moves over {positions} positions, reference game ({} plies)", g.moves.len()))
}

// 3. Elo algebra.
fn c3_elo() -> Check {
    let mut r = rng(3);
    let n = 100_000;
    let mut worst_complement = 0f64;
    let mut worst_zero_sum = 0f64;
    for _ in 0..n {
        let a: f64 = r.gen_range(0.0..4000.0);
        let b: f64 = r.gen_range(0.0..4000.0);
        let k: f64 = r.gen_range(1.0..64.0);
        ensure(expected_score(a, a) == 0.5, format!("expected({a},{a}) != 0.5"))?;
        worst_complement = worst_complement.max((expected_score(a, b) + expected_score(b, a) - 1.0).abs());
        // Results are 0, 0.5 or 1 and expectations lie strictly inside
        // (0, 1), so they meet only at a draw between equal ratings.
        let u = update(a, 0.5, a, k).map_err(|e| e.to_string())?;
        ensure(u.elo_new == a, format!("draw at equal ratings moved {a} to {}", u.elo_new))?;
        let s = [0.0, 0.5, 1.0][r.gen_range(0..3)];
        let ua = update(a, s, b, k).map_err(|e| e.to_string())?;
        let ub = update(b, 1.0 - s, a, k).map_err(|e| e.to_string())?;
        ensure(ua.elo_new == a + (s - ua.expected) * k, "update is not elo_old + (actual - expected) * k")?;
        worst_zero_sum = worst_zero_sum.max(((ua.elo_new - a) + (ub.elo_new - b)).abs());
    }
    ensure(worst_complement < 1e-12, format!("complement error {worst_complement:e}"))?;
    ensure(worst_zero_sum < 1e-9, format!("zero-sum error {worst_zero_sum:e}"))?;
    Ok(format!("{n} samples, complement {worst_complement:.1e}, zero-sum {worst_zero_sum:.1e}"))
}

// 4. Skill conversion.
fn c4_skill() -> Check {
    let sk0 = skill_from_elo(1320.0).map_err(|e| e.to_string())?.sk;
    ensure(sk0 == -0.311, format!("SK(1320) = {sk0}"))?;
    let sk1 = skill_from_elo(3190.0).map_err(|e| e.to_string())?.sk;
    ensure((sk1 - 18.378).abs() <= 1e-9, format!("SK(3190) = {sk1}"))?;
    let grid: Vec<f64> = (0..1000).map(|i| skill_from_elo(1320.0 + 1870.0 * i as f64 / 999.0).unwrap().sk).collect();
    ensure(grid.windows(2).all(|w| w[1] > w[0]), "not monotone on the grid")?;
    let mut worst = 0f64;
    for i in 0..=1800 {
        let x = i as f64 / 100.0;
        let back = skill_from_elo(elo_from_skill(x).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?.sk;
        worst = worst.max((back - x).abs());
    }
    ensure(worst < 0.01, format!("round trip error {worst}"))?;
    Ok(format!("SK(0)={sk0}, SK(1)={sk1:.12}, round trip {worst:.1e}"))
}

// 5. Calibration against the skill bands.
fn c5_calibration() -> Check {
    let engine = engine()?;
    let t = Instant::now();
    let strong = spec_factory("engine:skill=2,movetime=100", &engine);
    let weak = spec_factory("engine:skill=0,movetime=100", &engine);
    let cfg = MatchConfig::new(Protocol::EloProtocol, 5);
    let m = run_match(&strong, &weak, None, 50, &cfg, Exec::Sequential).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    ensure(m.completed() == 50, format!("{} games aborted", m.aborted.len()))?;
    let score = m.score(0.5);
    let base = opponent_elo(0);
    let est = estimate_rating(
        &m.rated_games(base),
        &KSchedule::default(),
        base,
        BootstrapOptions { samples: 1000, seed: 5, exec: Exec::Sequential },
    )
    .map_err(|e| e.to_string())?;
    let gap = est.elo - base;
    let predicted = opponent_elo(2) - base;
    let detail = format!(
        "W/L/D {}/{}/{} score {score:.3}, gap {gap:.1} vs predicted {predicted:.1}, {:.0}s",
        m.wins,
        m.losses,
        m.draws,
        elapsed.as_secs_f64()
    );
    ensure(score > 0.70, format!("score too low: {detail}"))?;
    ensure(gap.signum() == predicted.signum() && (gap - predicted).abs() <= 150.0, format!("gap off: {detail}"))?;
    ensure(elapsed < Duration::from_secs(30 * 60), format!("too slow: {detail}"))?;
    Ok(detail)
}

// 6. Sampling protocols.
fn c6_sampling() -> Check {
    let mut cfg = MatchConfig::new(Protocol::EloProtocol, 6);
    cfg.game.move_cap = 200;
    let random = SpecFactory { spec: PolicySpec::Random, engine: EngineConfig::new("unused") };
    let m = run_match(&noisy_factory(0.2), &random, None, 20, &cfg, Exec::parallel()).map_err(|e| e.to_string())?;
    let events: usize = m
        .games
        .iter()
        .zip(&m.indices)
        .map(|(g, &i)| {
            let side = MatchResult::a_color(i);
            g.per_move_meta.as_ref().map_or(0, |t| t.iter().filter(|t| t.proposer == side).count())
        })
        .sum();
    ensure(events >= 1000, format!("only {events} pass@1 events"))?;
    let p1 = match_pass_at_1(&m).map_err(|e| e.to_string())?.ok_or("no pass@1")?;
    ensure((p1 - 0.8).abs() <= 0.04, format!("pass@1 {p1:.4} over {events}"))?;

    let n = 100_000;
    let pos = Position::startpos();
    let exhausted = map_indexed(Exec::parallel(), n, |i| {
        let cfg = SamplingConfig::elo_protocol().with_seed(derive_seed(66, i as u64));
        let mut p = Noisy::new(0.2, Box::new(RandomLegal)).unwrap();
        retry_sample(&mut p, &pos, &cfg).unwrap().mv.is_none()
    });
    let rate = exhausted.iter().filter(|&&e| e).count() as f64 / n as f64;
    let p = 0.2f64.powi(10);
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    ensure((rate - p).abs() <= 3.0 * sigma, format!("exhaustion {rate:e} vs {p:e} (3 sigma {:e})", 3.0 * sigma))?;

    let engine = engine()?;
    let mut h = EngineHandle::spawn(engine).map_err(|e| e.to_string())?;
    let draws = 10_000u64;
    let mut engine_best = 0u64;
    let pos = parse_fen("r1bqkbnr/pppp1ppp/2n5/4p3/4P3/5N2/PPPP1PPP/RNBQKB1R w KQkq - 2 3").unwrap();
    for i in 0..draws {
        let c = fallback_move(&pos, Some(&mut h), &SearchLimits::depth(1), derive_seed(606, i)).map_err(|e| e.to_string())?;
        ensure(c.engine_error.is_none(), format!("engine error: {:?}", c.engine_error))?;
        engine_best += u64::from(c.source == FallbackSource::EngineBest);
    }
    let frac = engine_best as f64 / draws as f64;
    ensure((frac - 0.5).abs() <= 0.01, format!("engine_best fraction {frac}"))?;
    Ok(format!("pass@1 {p1:.4} over {events}, exhaustion {rate:.1e} vs {p:.1e}, engine_best {frac:.4}"))
}

fn harvested(records: &[DatasetRecord]) -> Vec<HarvestedPosition> {
    records
        .iter()
        .map(|r| {
            let position = r.validate().unwrap();
            HarvestedPosition { fullmove: position.fullmove_number(), position, source: r.source }
        })
        .collect()
}

const LABEL_DEPTH: u32 = 4;

fn labeled_records(engine: &EngineConfig, dir: &Path) -> Result<Vec<DatasetRecord>, String> {
    let positions = harvested(&common::random_records(40, 77).into_iter().step_by(7).take(1000).collect::<Vec<_>>());
    ensure(positions.len() == 1000, format!("only {} positions", positions.len()))?;
    let rule = DepthRule::Fixed { depth: LABEL_DEPTH, movetime_ms: None };
    let mut files = Vec::new();
    for run in 0..2 {
        let out = label_best_moves(&positions, RoundClass::Short, rule, engine, 1, Exec::Sequential);
        ensure(out.skipped.is_empty(), format!("skipped {:?}", out.skipped))?;
        let path = dir.join(format!("labels_{run}.txt"));
        write_records(&out.records, &path).map_err(|e| e.to_string())?;
        files.push(path);
    }
    let (a, b) = (fs::read(&files[0]).unwrap(), fs::read(&files[1]).unwrap());
    ensure(a == b, "labels differ between runs")?;
    read_records(&files[0]).map_err(|e| e.to_string())
}

// 7. Dataset construction.
fn c7_dataset(labels: &Result<Vec<DatasetRecord>, String>) -> Check {
    let records = labels.as_ref().map_err(Clone::clone)?;
    ensure(records.len() == 1000, format!("{} records on re-read", records.len()))?;
    let illegal = records.iter().filter(|r| r.validate().is_err()).count();
    ensure(illegal == 0, format!("{illegal} illegal records"))?;

    let pool = common::random_records(400, 3);
    let m = make_split(&pool, 10_000, &BucketSpec::default(), 17).map_err(|e| e.to_string())?;
    ensure(m.eval_ids.len() == 10_000 && m.eval_ids.is_disjoint(&m.train_ids), "split not disjoint")?;
    let eval: Vec<_> = pool.iter().filter(|r| m.eval_ids.contains(&r.key())).collect();
    let frac = |f: &dyn Fn(u32) -> bool| eval.iter().filter(|r| f(r.fullmove())).count() as f64 / eval.len() as f64;
    let got = [frac(&|n| (10..20).contains(&n)), frac(&|n| (20..40).contains(&n)), frac(&|n| !(10..40).contains(&n))];
    for (g, want) in got.iter().zip([0.3, 0.5, 0.2]) {
        ensure((g - want).abs() <= 0.02, format!("bucket fractions {got:?}"))?;
    }
    Ok(format!(
        "1000 depth-{LABEL_DEPTH} labels identical across runs and legal; split {:.3}/{:.3}/{:.3} of {}",
        got[0],
        got[1],
        got[2],
        eval.len()
    ))
}

// 8. Metrics.
fn c8_metrics(labels: &Result<Vec<DatasetRecord>, String>) -> Check {
    let records = labels.as_ref().map_err(Clone::clone)?;
    let engine = engine()?;
    let items: Vec<EvalItem> = records.iter().map(|r| EvalItem::from_record(r).unwrap()).collect();
    let mut detail = Vec::new();
    for spec in ["random", "greedy", "noisy:p=0.2,inner=random", "noisy:p=0.5,inner=greedy"] {
        let acc = accuracy(&spec_factory(spec, &engine), &items, None, 8, Exec::parallel()).map_err(|e| e.to_string())?;
        ensure(acc.legal_move_accuracy >= acc.best_move_accuracy, format!("{spec}: legal < best"))?;
        detail.push(format!("{spec} {:.3}/{:.3}", acc.legal_move_accuracy, acc.best_move_accuracy));
    }
    let own = SpecFactory { spec: PolicySpec::Engine { skill: None, depth: Some(LABEL_DEPTH), movetime_ms: None }, engine };
    let acc = accuracy(&own, &items, None, 0, Exec::Sequential).map_err(|e| e.to_string())?;
    ensure(acc.best_move_accuracy == 1.0, format!("engine self-accuracy {}", acc.best_move_accuracy))?;

    let mut r = rng(88);
    let mut sym_items = Vec::new();
    let mut choices = Vec::new();
    for rec in common::random_records(100, 7).into_iter().take(10_000) {
        let pos = rec.validate()?;
        let mut moves = legal_moves(&pos);
        if moves.len() < 2 {
            continue;
        }
        moves.shuffle(&mut r);
        let b = moves.len();
        let cands: Vec<_> = moves.iter().enumerate().map(|(i, &m)| (m, i as f64 / (b - 1) as f64 * 300.0 - 150.0)).collect();
        choices.push(moves[r.gen_range(0..b)]);
        sym_items.push(EvalItem::new(&render_fen(&pos), moves[0], Some(cands)).map_err(|e| e.to_string())?);
    }
    let s = mean_move_score(&choices, &sym_items).map_err(|e| e.to_string())?;
    ensure((s.mean - 0.5).abs() <= 0.02, format!("move_score {}", s.mean))?;
    Ok(format!("{}; engine self 1.0; move_score {:.4} over {}", detail.join(", "), s.mean, sym_items.len()))
}

// 9. Replay determinism through the CLI.
fn c9_replay() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_fenbench");
    let run = |args: &[&str]| -> Result<(), String> {
        let o = Command::new(bin).args(args).current_dir(dir.path()).output().map_err(|e| e.to_string())?;
        ensure(o.status.success(), String::from_utf8_lossy(&o.stderr).into_owned())
    };
    // The engine plays at fixed depth so its moves are reproducible.
    let white = if engine().is_ok() { "engine:depth=2" } else { "greedy" };
    run(&[
        "arena", "--white", white, "--black", "noisy:p=0.2,inner=random", "--games", "4", "--seed", "9", "--jobs",
        "2", "--move-cap", "200", "--report", "r1.json", "--pgn", "g1.pgn",
    ])?;
    run(&["arena", "--config", "r1.json", "--report", "r2.json", "--pgn", "g2.pgn"])?;
    let read = |f: &str| fs::read(dir.path().join(f)).unwrap();
    ensure(read("r1.json") == read("r2.json"), "reports differ")?;
    ensure(read("g1.pgn") == read("g2.pgn"), "PGN differs")?;
    Ok(format!("{white} vs noisy: report {} bytes, PGN {} bytes identical", read("r1.json").len(), read("g1.pgn").len()))
}

fn main() -> ExitCode {
    let work = tempfile::tempdir().unwrap();
    let labels = engine().and_then(|e| labeled_records(&e, work.path()));
    let criteria: Vec<Criterion> = vec![
        ("perft", Box::new(c1_perft)),
        ("notation round trips", Box::new(c2_notation)),
        ("Elo algebra", Box::new(c3_elo)),
        ("skill conversion", Box::new(c4_skill)),
        ("calibration", Box::new(c5_calibration)),
        ("sampling", Box::new(c6_sampling)),
        ("dataset", Box::new(|| c7_dataset(&labels))),
        ("metrics", Box::new(|| c8_metrics(&labels))),
        ("determinism", Box::new(c9_replay)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
