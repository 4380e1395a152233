//! UCI engine driver.
//!
//! An [`EngineHandle`] owns one engine subprocess and speaks the UCI text
//! protocol to it strictly request by response. Handles are single-owner;
//! run one per worker when games or labels are produced in parallel.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::notation::{parse_uci_shape, render_fen};
use crate::rules::{has_legal_move, Move, Position};

/// Environment variable naming the default engine executable.
pub const ENGINE_ENV: &str = "FENBENCH_ENGINE";

/// Engine executable from [`ENGINE_ENV`], falling back to `stockfish` on
/// the `PATH`.
pub fn default_engine_path() -> String {
    std::env::var(ENGINE_ENV).unwrap_or_else(|_| "stockfish".to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchLimits {
    pub depth: Option<u32>,
    pub movetime_ms: Option<u64>,
}

impl SearchLimits {
    pub fn new(depth: Option<u32>, movetime_ms: Option<u64>) -> Result<SearchLimits, EngineError> {
        let lim = SearchLimits { depth, movetime_ms };
        lim.validate()?;
        Ok(lim)
    }

    pub fn depth(depth: u32) -> SearchLimits {
        SearchLimits { depth: Some(depth), movetime_ms: None }
    }

    pub fn movetime(ms: u64) -> SearchLimits {
        SearchLimits { depth: None, movetime_ms: Some(ms) }
    }

    /// Dataset labeling search: the given depth, capped at two seconds.
    pub fn train_label(depth: u32) -> SearchLimits {
        SearchLimits { depth: Some(depth), movetime_ms: Some(2000) }
    }

    /// Evaluation-set labeling search: depth 1 within 100 ms.
    pub fn eval_label() -> SearchLimits {
        SearchLimits { depth: Some(1), movetime_ms: Some(100) }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        match (self.depth, self.movetime_ms) {
            (None, None) => Err(EngineError::Config("search limits need a depth or a movetime".into())),
            (Some(0), _) => Err(EngineError::Config("depth must be at least 1".into())),
            (_, Some(0)) => Err(EngineError::Config("movetime must be at least 1 ms".into())),
            _ => Ok(()),
        }
    }

    fn go_command(&self) -> String {
        let mut cmd = String::from("go");
        if let Some(d) = self.depth {
            cmd.push_str(&format!(" depth {d}"));
        }
        if let Some(t) = self.movetime_ms {
            cmd.push_str(&format!(" movetime {t}"));
        }
        cmd
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub executable_path: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
    pub skill_level: Option<u8>,
    pub threads: u32,
    pub hash_mb: u32,
    #[serde(default)]
    pub extra_options: Vec<(String, String)>,
    pub handshake_timeout_ms: u64,
    /// Extra time allowed beyond `movetime` before a reply counts as late.
    pub grace_ms: u64,
    /// Deadline for depth-only searches.
    pub depth_timeout_ms: u64,
    /// Send `ucinewgame` before every query so replies do not depend on
    /// earlier searches.
    pub new_game_per_query: bool,
}

impl EngineConfig {
    pub fn new(executable_path: impl Into<PathBuf>) -> EngineConfig {
        EngineConfig {
            executable_path: executable_path.into(),
            args: Vec::new(),
            skill_level: None,
            threads: 1,
            hash_mb: 16,
            extra_options: Vec::new(),
            handshake_timeout_ms: 10_000,
            grace_ms: 1000,
            depth_timeout_ms: 120_000,
            new_game_per_query: true,
        }
    }

    pub fn with_skill(mut self, skill: u8) -> EngineConfig {
        self.skill_level = Some(skill);
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if let Some(s) = self.skill_level {
            if s > 20 {
                return Err(EngineError::Config(format!("skill level {s} outside 0..=20")));
            }
        }
        if self.threads == 0 {
            return Err(EngineError::Config("threads must be positive".into()));
        }
        if self.hash_mb == 0 {
            return Err(EngineError::Config("hash size must be positive".into()));
        }
        Ok(())
    }

    /// Multi-threaded searches are not reproducible.
    pub fn is_deterministic(&self) -> bool {
        self.threads == 1 && self.new_game_per_query
    }
}

/// Engine score from the side to move's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Score {
    Cp(i32),
    Mate(i32),
}

impl Score {
    /// Logistic expected score for centipawns; certain win or loss for mates.
    pub fn win_rate(self) -> f64 {
        match self {
            Score::Cp(cp) => 1.0 / (1.0 + 10f64.powf(-(cp as f64) / 400.0)),
            Score::Mate(n) if n > 0 => 1.0,
            Score::Mate(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineReply {
    pub best_move: Move,
    pub score: Option<Score>,
    pub win_rate: Option<f64>,
    pub depth_reached: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("invalid engine configuration: {0}")]
    Config(String),
    #[error("failed to start engine {path}: {reason}")]
    Spawn { path: String, reason: String },
    #[error("engine handshake failed: {reason}; stderr: {stderr}")]
    Handshake { reason: String, stderr: String },
    #[error("engine does not support option {name:?}; stderr: {stderr}")]
    UnknownOption { name: String, stderr: String },
    #[error("position has no legal moves; nothing to search")]
    NoLegalMoves,
    #[error("engine did not answer within {0} ms")]
    Timeout(u64),
    #[error("engine returned no move")]
    NoMove,
    #[error("engine replied with illegal move {0:?}")]
    IllegalReply(String),
    #[error("engine process is gone; stderr: {0}")]
    Dead(String),
    #[error("engine handle is unusable after an earlier failure")]
    Unhealthy,
    #[error("engine I/O error: {0}")]
    Io(String),
}

/// Anything that can name a best move for a position under search limits:
/// a live engine, or an in-process stand-in for tests and baselines.
pub trait BestMoveSource: Send {
    fn query(&mut self, pos: &Position, limits: &SearchLimits) -> Result<EngineReply, EngineError>;

    /// Identifies the source (engine build string) in reports.
    fn describe(&self) -> String;
}

/// Builds fresh [`BestMoveSource`]s, one per worker.
pub trait SourceFactory: Sync + Send {
    fn build(&self) -> Result<Box<dyn BestMoveSource>, EngineError>;
    fn describe(&self) -> String;
}

impl SourceFactory for EngineConfig {
    fn build(&self) -> Result<Box<dyn BestMoveSource>, EngineError> {
        Ok(Box::new(EngineHandle::spawn(self.clone())?))
    }

    fn describe(&self) -> String {
        format!("uci:{}", self.executable_path.display())
    }
}

pub struct EngineHandle {
    child: Option<Child>,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
    stderr: Arc<Mutex<String>>,
    name: String,
    options: Vec<String>,
    cfg: EngineConfig,
    healthy: bool,
}

fn option_name(line: &str) -> Option<&str> {
    let rest = line.strip_prefix("option name ")?;
    Some(rest.split(" type ").next().unwrap_or(rest).trim())
}

impl EngineHandle {
    /// Starts the engine, completes the `uci`/`uciok` handshake, applies the
    /// configured options and waits for `readyok`.
    pub fn spawn(cfg: EngineConfig) -> Result<EngineHandle, EngineError> {
        cfg.validate()?;
        let mut child = Command::new(&cfg.executable_path)
            .args(&cfg.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| EngineError::Spawn {
                path: cfg.executable_path.display().to_string(),
                reason: e.to_string(),
            })?;

        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        if let Some(mut err) = child.stderr.take() {
            let sink = Arc::clone(&stderr);
            thread::spawn(move || {
                let mut buf = [0u8; 4096];
                while let Ok(n) = err.read(&mut buf) {
                    if n == 0 {
                        break;
                    }
                    let mut s = sink.lock().expect("stderr lock");
                    if s.len() < 64 * 1024 {
                        s.push_str(&String::from_utf8_lossy(&buf[..n]));
                    }
                }
            });
        }

        let stdin = child.stdin.take();
        let mut handle = EngineHandle {
            child: Some(child),
            stdin,
            lines: rx,
            stderr,
            name: String::new(),
            options: Vec::new(),
            cfg,
            healthy: true,
        };
        if let Err(e) = handle.handshake() {
            handle.shutdown();
            return Err(e);
        }
        Ok(handle)
    }

    fn handshake(&mut self) -> Result<(), EngineError> {
        let deadline = Instant::now() + Duration::from_millis(self.cfg.handshake_timeout_ms);
        let fail = |this: &Self, e: EngineError| match e {
            EngineError::Timeout(_) | EngineError::Dead(_) | EngineError::Io(_) => {
                EngineError::Handshake { reason: e.to_string(), stderr: this.stderr_text() }
            }
            other => other,
        };
        self.send("uci").map_err(|e| fail(self, e))?;
        loop {
            let line = self.recv_until(deadline).map_err(|e| fail(self, e))?;
            if let Some(name) = line.strip_prefix("id name ") {
                self.name = name.trim().to_string();
            } else if let Some(opt) = option_name(&line) {
                self.options.push(opt.to_string());
            } else if line.trim() == "uciok" {
                break;
            }
        }

        let mut settings: Vec<(String, String)> = vec![
            ("Threads".into(), self.cfg.threads.to_string()),
            ("Hash".into(), self.cfg.hash_mb.to_string()),
        ];
        if let Some(skill) = self.cfg.skill_level {
            settings.push(("Skill Level".into(), skill.to_string()));
        }
        settings.extend(self.cfg.extra_options.iter().cloned());
        for (name, value) in settings {
            if !self.options.iter().any(|o| o.eq_ignore_ascii_case(&name)) {
                return Err(EngineError::UnknownOption { name, stderr: self.stderr_text() });
            }
            self.send(&format!("setoption name {name} value {value}"))
                .map_err(|e| fail(self, e))?;
        }
        self.sync(deadline).map_err(|e| fail(self, e))
    }

    fn stderr_text(&self) -> String {
        self.stderr.lock().map(|s| s.trim().to_string()).unwrap_or_default()
    }

    fn send(&mut self, cmd: &str) -> Result<(), EngineError> {
        let stdin = self.stdin.as_mut().ok_or_else(|| EngineError::Dead(String::new()))?;
        writeln!(stdin, "{cmd}")
            .and_then(|_| stdin.flush())
            .map_err(|e| EngineError::Io(e.to_string()))
    }

    fn recv_until(&mut self, deadline: Instant) -> Result<String, EngineError> {
        let wait = deadline.saturating_duration_since(Instant::now());
        match self.lines.recv_timeout(wait) {
            Ok(line) => Ok(line),
            Err(RecvTimeoutError::Timeout) => {
                Err(EngineError::Timeout(self.cfg.handshake_timeout_ms.max(wait.as_millis() as u64)))
            }
            Err(RecvTimeoutError::Disconnected) => Err(EngineError::Dead(self.stderr_text())),
        }
    }

    fn sync(&mut self, deadline: Instant) -> Result<(), EngineError> {
        self.send("isready")?;
        loop {
            if self.recv_until(deadline)?.trim() == "readyok" {
                return Ok(());
            }
        }
    }

    /// `id name` reported by the engine, e.g. `Stockfish 17`.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Engine name plus executable path, recorded in every report.
    pub fn build(&self) -> String {
        format!("{} ({})", self.name, self.cfg.executable_path.display())
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn supported_options(&self) -> &[String] {
        &self.options
    }

    pub fn pid(&self) -> Option<u32> {
        self.child.as_ref().map(Child::id)
    }

    pub fn is_healthy(&self) -> bool {
        self.healthy && self.child.is_some()
    }

    fn guard<T>(&mut self, result: Result<T, EngineError>) -> Result<T, EngineError> {
        if result.is_err() {
            self.healthy = false;
        }
        result
    }

    /// Searches `pos` and returns the engine's move, checked for legality.
    /// Terminal positions are refused without contacting the engine.
    pub fn best_move(&mut self, pos: &Position, limits: &SearchLimits) -> Result<EngineReply, EngineError> {
        limits.validate()?;
        if !has_legal_move(pos) {
            return Err(EngineError::NoLegalMoves);
        }
        if !self.is_healthy() {
            return Err(EngineError::Unhealthy);
        }
        let result = self.search(pos, limits);
        self.guard(result)
    }

    fn search(&mut self, pos: &Position, limits: &SearchLimits) -> Result<EngineReply, EngineError> {
        if self.cfg.new_game_per_query {
            self.send("ucinewgame")?;
            let deadline = Instant::now() + Duration::from_millis(self.cfg.handshake_timeout_ms);
            self.sync(deadline)?;
        }
        self.send(&format!("position fen {}", render_fen(pos)))?;
        self.send(&limits.go_command())?;

        let budget = match limits.movetime_ms {
            Some(t) => t + self.cfg.grace_ms,
            None => self.cfg.depth_timeout_ms,
        };
        let deadline = Instant::now() + Duration::from_millis(budget);
        let mut score = None;
        let mut depth_reached = None;
        loop {
            let line = match self.recv_until(deadline) {
                Err(EngineError::Timeout(_)) => {
                    let _ = self.send("stop");
                    return Err(EngineError::Timeout(budget));
                }
                other => other?,
            };
            if line.starts_with("info ") {
                if let Some((s, d)) = parse_info(&line) {
                    score = Some(s);
                    depth_reached = d.or(depth_reached);
                }
            } else if let Some(rest) = line.strip_prefix("bestmove") {
                let text = rest.split_whitespace().next().unwrap_or("");
                if text.is_empty() || text == "(none)" || text == "0000" {
                    return Err(EngineError::NoMove);
                }
                let m = parse_uci_shape(text)
                    .filter(|&m| pos.is_legal(m))
                    .ok_or_else(|| EngineError::IllegalReply(text.to_string()))?;
                return Ok(EngineReply {
                    best_move: m,
                    score,
                    win_rate: score.map(Score::win_rate),
                    depth_reached,
                });
            }
        }
    }

    /// Leaf count reported by the engine's `go perft` extension.
    pub fn perft(&mut self, pos: &Position, depth: u32) -> Result<u64, EngineError> {
        if !self.is_healthy() {
            return Err(EngineError::Unhealthy);
        }
        self.send(&format!("position fen {}", render_fen(pos)))?;
        self.send(&format!("go perft {depth}"))?;
        let deadline = Instant::now() + Duration::from_millis(self.cfg.depth_timeout_ms);
        loop {
            let line = self.recv_until(deadline);
            let line = self.guard(line)?;
            if let Some(n) = line.strip_prefix("Nodes searched:") {
                return n.trim().parse().map_err(|_| EngineError::Io(format!("bad perft line {line:?}")));
            }
        }
    }

    /// Sends `quit`, waits up to two seconds for exit, then kills. Safe to
    /// call repeatedly and after the engine has crashed.
    pub fn shutdown(&mut self) {
        if self.child.is_none() {
            return;
        }
        let _ = self.send("quit");
        self.stdin = None;
        let mut child = self.child.take().expect("checked above");
        let deadline = Instant::now() + Duration::from_secs(2);
        loop {
            match child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                _ => break,
            }
        }
        let _ = child.kill();
        let _ = child.wait();
    }
}

impl Drop for EngineHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl BestMoveSource for EngineHandle {
    fn query(&mut self, pos: &Position, limits: &SearchLimits) -> Result<EngineReply, EngineError> {
        self.best_move(pos, limits)
    }

    fn describe(&self) -> String {
        self.build()
    }
}

/// Extracts the score (and depth) from an `info` line, ignoring secondary
/// MultiPV lines.
fn parse_info(line: &str) -> Option<(Score, Option<u32>)> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let value_after = |key: &str| tokens.iter().position(|t| *t == key).and_then(|i| tokens.get(i + 1));
    if let Some(pv) = value_after("multipv") {
        if *pv != "1" {
            return None;
        }
    }
    let i = tokens.iter().position(|t| *t == "score")?;
    let kind = *tokens.get(i + 1)?;
    let value: i32 = tokens.get(i + 2)?.parse().ok()?;
    let score = match kind {
        "cp" => Score::Cp(value),
        "mate" => Score::Mate(value),
        _ => return None,
    };
    let depth = value_after("depth").and_then(|d| d.parse().ok());
    Some((score, depth))
}
