//! Move-proposing policies and the sampling protocols around them.
//!
//! A [`Policy`] emits raw text the way a language model would; the harness
//! classifies that text against the position. [`retry_sample`] resamples
//! until a legal proposal appears or the budget runs out, and
//! [`fallback_move`] settles exhausted turns in LM-vs-LM matches.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{BestMoveSource, EngineConfig, EngineError, SearchLimits, SourceFactory};
use crate::exec::{derive_seed, rng};
use crate::notation::{parse_move_text, render_fen, MoveTextError};
use crate::rules::{has_legal_move, legal_moves, Move, Position, Role};

/// Token emitted by [`Noisy`] on its illegal branch. It is not move text in
/// any accepted notation.
pub const NOISE_TOKEN: &str = "zz99";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Legality {
    Legal,
    IllegalSyntax,
    IllegalMove,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub raw_text: String,
    pub parsed: Option<Move>,
    pub legality: Legality,
}

impl Proposal {
    /// Classifies raw policy output against `pos`.
    pub fn classify(raw_text: impl Into<String>, pos: &Position) -> Proposal {
        let raw_text = raw_text.into();
        match parse_move_text(&raw_text, pos) {
            Ok(m) => Proposal { raw_text, parsed: Some(m), legality: Legality::Legal },
            Err(MoveTextError::Syntax(_)) => {
                Proposal { raw_text, parsed: None, legality: Legality::IllegalSyntax }
            }
            Err(_) => Proposal { raw_text, parsed: None, legality: Legality::IllegalMove },
        }
    }

    pub fn is_legal(&self) -> bool {
        self.legality == Legality::Legal
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("position has no legal moves")]
    NoLegalMoves,
    #[error("policy transport failure: {0}")]
    Transport(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("invalid policy configuration: {0}")]
    Config(String),
}

/// Sampling parameters for the model behind a policy. Built-in policies
/// ignore everything but the seed; external adapters receive the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub max_attempts: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub seed: u64,
}

impl SamplingConfig {
    /// Ten attempts per move for games against the engine.
    pub fn elo_protocol() -> SamplingConfig {
        SamplingConfig { max_attempts: 10, temperature: 0.7, top_p: 0.7, top_k: 50, seed: 0 }
    }

    /// Fifty attempts per move before the fallback in LM-vs-LM matches.
    pub fn lm_match_protocol() -> SamplingConfig {
        SamplingConfig { max_attempts: 50, temperature: 0.7, top_p: 0.7, top_k: 50, seed: 0 }
    }

    /// One attempt at neutral sampling, for legality measurements.
    pub fn pass_at_1() -> SamplingConfig {
        SamplingConfig { max_attempts: 1, temperature: 1.0, top_p: 1.0, top_k: 50, seed: 0 }
    }

    pub fn with_seed(self, seed: u64) -> SamplingConfig {
        SamplingConfig { seed, ..self }
    }

    pub fn with_attempts(self, max_attempts: u32) -> SamplingConfig {
        SamplingConfig { max_attempts, ..self }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.max_attempts == 0 {
            return Err(PolicyError::Config("max_attempts must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(PolicyError::Config(format!("temperature {} must be >= 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(PolicyError::Config(format!("top_p {} must be in (0, 1]", self.top_p)));
        }
        if self.top_k == 0 {
            return Err(PolicyError::Config("top_k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOutcome {
    #[serde(rename = "move")]
    pub mv: Option<Move>,
    pub attempts_used: u32,
    pub first_attempt_legal: bool,
    pub proposals: Vec<Proposal>,
}

/// What happens when the Elo-game retry budget runs out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExhaustionRule {
    #[default]
    ForfeitLoss,
    RandomLegalContinue,
}

impl FromStr for ExhaustionRule {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forfeit_loss" | "forfeit" => Ok(ExhaustionRule::ForfeitLoss),
            "random_legal_continue" | "random" => Ok(ExhaustionRule::RandomLegalContinue),
            _ => Err(PolicyError::Config(format!("unknown exhaustion rule {s:?}"))),
        }
    }
}

pub trait Policy: Send {
    /// Emits move text for `pos`. Precondition: `pos` has a legal move.
    fn propose_text(&mut self, pos: &Position, seed: u64) -> Result<String, PolicyError>;

    /// Receives the sampling parameters in force for subsequent proposals.
    fn configure_sampling(&mut self, _cfg: &SamplingConfig) {}

    fn name(&self) -> String;
}

/// Asks `policy` for one proposal and classifies it.
pub fn propose(policy: &mut dyn Policy, pos: &Position, seed: u64) -> Result<Proposal, PolicyError> {
    if !has_legal_move(pos) {
        return Err(PolicyError::NoLegalMoves);
    }
    let text = policy.propose_text(pos, seed)?;
    Ok(Proposal::classify(text, pos))
}

/// Proposes up to `cfg.max_attempts` times with per-attempt seeds derived
/// from `cfg.seed`, stopping at the first legal proposal.
pub fn retry_sample(
    policy: &mut dyn Policy,
    pos: &Position,
    cfg: &SamplingConfig,
) -> Result<SampleOutcome, PolicyError> {
    cfg.validate()?;
    if !has_legal_move(pos) {
        return Err(PolicyError::NoLegalMoves);
    }
    policy.configure_sampling(cfg);
    let mut proposals = Vec::new();
    for attempt in 0..cfg.max_attempts {
        let p = propose(policy, pos, derive_seed(cfg.seed, attempt as u64))?;
        let mv = p.parsed;
        proposals.push(p);
        if mv.is_some() {
            break;
        }
    }
    Ok(SampleOutcome {
        mv: proposals.last().and_then(|p| p.parsed),
        attempts_used: proposals.len() as u32,
        first_attempt_legal: proposals[0].is_legal(),
        proposals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackSource {
    EngineBest,
    RandomLegal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FallbackChoice {
    pub mv: Move,
    pub source: FallbackSource,
    /// Set when the coin chose the engine but the engine failed.
    pub engine_error: Option<String>,
}

/// Settles an exhausted turn: a fair seeded coin picks between the engine's
/// best move and a uniformly random legal move. The engine is consulted
/// only when the coin selects it; if it fails, the random move is used and
/// the failure is reported in the result.
pub fn fallback_move<'e>(
    pos: &Position,
    engine: Option<&mut (dyn BestMoveSource + 'e)>,
    limits: &SearchLimits,
    seed: u64,
) -> Result<FallbackChoice, PolicyError> {
    let moves = legal_moves(pos);
    if moves.is_empty() {
        return Err(PolicyError::NoLegalMoves);
    }
    let mut r = rng(seed);
    let use_engine = r.gen_bool(0.5);
    let random = moves[r.gen_range(0..moves.len())];
    let random_choice = |engine_error| FallbackChoice { mv: random, source: FallbackSource::RandomLegal, engine_error };
    if !use_engine {
        return Ok(random_choice(None));
    }
    let Some(engine) = engine else {
        return Ok(random_choice(Some("no fallback engine configured".into())));
    };
    match engine.query(pos, limits) {
        Ok(reply) => Ok(FallbackChoice { mv: reply.best_move, source: FallbackSource::EngineBest, engine_error: None }),
        Err(e) => Ok(random_choice(Some(e.to_string()))),
    }
}

/// Uniform over legal moves, seeded.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomLegal;

impl Policy for RandomLegal {
    fn propose_text(&mut self, pos: &Position, seed: u64) -> Result<String, PolicyError> {
        let moves = legal_moves(pos);
        if moves.is_empty() {
            return Err(PolicyError::NoLegalMoves);
        }
        Ok(moves[rng(seed).gen_range(0..moves.len())].to_uci())
    }

    fn name(&self) -> String {
        "random".into()
    }
}

/// One-ply material grabber; ties go to the first move in generator order.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyMaterial;

fn material_gain(pos: &Position, m: Move) -> i32 {
    let captured = match pos.piece_at(m.to) {
        Some(p) => p.role.value(),
        None if pos.is_capture(m) => Role::Pawn.value(),
        None => 0,
    };
    let promoted = m.promotion.map_or(0, |r| r.value() - Role::Pawn.value());
    captured + promoted
}

impl Policy for GreedyMaterial {
    fn propose_text(&mut self, pos: &Position, _seed: u64) -> Result<String, PolicyError> {
        let mut best: Option<(i32, Move)> = None;
        for m in legal_moves(pos) {
            let gain = material_gain(pos, m);
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, m));
            }
        }
        best.map(|(_, m)| m.to_uci()).ok_or(PolicyError::NoLegalMoves)
    }

    fn name(&self) -> String {
        "greedy".into()
    }
}

/// Plays whatever the wrapped engine considers best.
pub struct EnginePolicy {
    source: Box<dyn BestMoveSource>,
    limits: SearchLimits,
}

impl EnginePolicy {
    pub fn new(source: Box<dyn BestMoveSource>, limits: SearchLimits) -> EnginePolicy {
        EnginePolicy { source, limits }
    }
}

impl Policy for EnginePolicy {
    fn propose_text(&mut self, pos: &Position, _seed: u64) -> Result<String, PolicyError> {
        Ok(self.source.query(pos, &self.limits)?.best_move.to_uci())
    }

    fn name(&self) -> String {
        self.source.describe()
    }
}

/// With probability `p` emits [`NOISE_TOKEN`], otherwise defers to `inner`.
pub struct Noisy {
    p: f64,
    inner: Box<dyn Policy>,
}

impl Noisy {
    pub fn new(p: f64, inner: Box<dyn Policy>) -> Result<Noisy, PolicyError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(PolicyError::Config(format!("noise probability {p} outside [0, 1]")));
        }
        Ok(Noisy { p, inner })
    }
}

impl Policy for Noisy {
    fn propose_text(&mut self, pos: &Position, seed: u64) -> Result<String, PolicyError> {
        if rng(derive_seed(seed, 0)).gen_bool(self.p) {
            return Ok(NOISE_TOKEN.to_string());
        }
        self.inner.propose_text(pos, derive_seed(seed, 1))
    }

    fn configure_sampling(&mut self, cfg: &SamplingConfig) {
        self.inner.configure_sampling(cfg);
    }

    fn name(&self) -> String {
        format!("noisy:p={},inner={}", self.p, self.inner.name())
    }
}

/// Always emits the same text, legal or not.
#[derive(Debug, Clone)]
pub struct FixedText(pub String);

impl Policy for FixedText {
    fn propose_text(&mut self, _pos: &Position, _seed: u64) -> Result<String, PolicyError> {
        Ok(self.0.clone())
    }

    fn name(&self) -> String {
        format!("fixed:{}", self.0)
    }
}

/// Bridge to an external completion process, launched through `sh -c`.
///
/// Each request is one line `FEN: <fen>`; the reply is the next line of
/// output. Sampling parameters reach the process as environment variables
/// `FENBENCH_TEMPERATURE`, `FENBENCH_TOP_P`, `FENBENCH_TOP_K` and
/// `FENBENCH_SEED`; the process is restarted if they change.
pub struct ExternalText {
    cmd: String,
    timeout: Duration,
    sampling: Option<SamplingConfig>,
    proc: Option<ExternalProc>,
}

struct ExternalProc {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    sampling: Option<SamplingConfig>,
}

impl ExternalText {
    pub fn new(cmd: impl Into<String>) -> ExternalText {
        ExternalText { cmd: cmd.into(), timeout: Duration::from_secs(60), sampling: None, proc: None }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> ExternalText {
        self.timeout = timeout;
        self
    }

    fn start(&mut self) -> Result<(), PolicyError> {
        let mut command = Command::new("sh");
        command.arg("-c").arg(&self.cmd).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::null());
        if let Some(s) = &self.sampling {
            command
                .env("FENBENCH_TEMPERATURE", s.temperature.to_string())
                .env("FENBENCH_TOP_P", s.top_p.to_string())
                .env("FENBENCH_TOP_K", s.top_k.to_string())
                .env("FENBENCH_SEED", s.seed.to_string());
        }
        let mut child = command.spawn().map_err(|e| PolicyError::Transport(format!("spawn {:?}: {e}", self.cmd)))?;
        let stdin = child.stdin.take().expect("piped stdin");
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
        self.proc = Some(ExternalProc { child, stdin, lines: rx, sampling: self.sampling });
        Ok(())
    }

    fn stop(&mut self) {
        if let Some(mut p) = self.proc.take() {
            drop(p.stdin);
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
    }
}

impl Policy for ExternalText {
    fn propose_text(&mut self, pos: &Position, _seed: u64) -> Result<String, PolicyError> {
        if self.proc.as_ref().is_some_and(|p| p.sampling != self.sampling) {
            self.stop();
        }
        if self.proc.is_none() {
            self.start()?;
        }
        let proc = self.proc.as_mut().expect("started above");
        let sent = writeln!(proc.stdin, "FEN: {}", render_fen(pos)).and_then(|_| proc.stdin.flush());
        let reply = match sent {
            Err(e) => Err(PolicyError::Transport(format!("write: {e}"))),
            Ok(()) => match proc.lines.recv_timeout(self.timeout) {
                Ok(line) => Ok(line.trim().to_string()),
                Err(RecvTimeoutError::Timeout) => {
                    Err(PolicyError::Transport(format!("no reply within {:?}", self.timeout)))
                }
                Err(RecvTimeoutError::Disconnected) => Err(PolicyError::Transport("adapter exited".into())),
            },
        };
        if reply.is_err() {
            self.stop();
        }
        reply
    }

    fn configure_sampling(&mut self, cfg: &SamplingConfig) {
        // The per-move seed changes every turn; only restart for the
        // parameters that describe the model's sampling behavior.
        let key = SamplingConfig { seed: 0, max_attempts: 1, ..*cfg };
        if self.sampling != Some(key) {
            self.sampling = Some(key);
        }
    }

    fn name(&self) -> String {
        format!("extern:cmd={}", self.cmd)
    }
}

impl Drop for ExternalText {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Builds fresh policy instances, one per game.
pub trait PolicyFactory: Send + Sync {
    fn build(&self) -> Result<Box<dyn Policy>, PolicyError>;
    fn describe(&self) -> String;
}

/// Parsed form of the policy mini-language:
/// `random`, `greedy`, `engine:skill=K[,depth=D][,movetime=T]`,
/// `noisy:p=X,inner=SPEC`, `extern:cmd=COMMAND`.
///
/// `inner=` and `cmd=` swallow the rest of the string, so nesting needs no
/// quoting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PolicySpec {
    Random,
    Greedy,
    Engine { skill: Option<u8>, depth: Option<u32>, movetime_ms: Option<u64> },
    Noisy { p: f64, inner: Box<PolicySpec> },
    Extern { cmd: String },
}

impl PolicySpec {
    /// Engine searches use the time limit when none is given.
    pub const DEFAULT_ENGINE_MOVETIME_MS: u64 = 100;

    pub fn engine_skill(skill: u8) -> PolicySpec {
        PolicySpec::Engine { skill: Some(skill), depth: None, movetime_ms: None }
    }

    pub fn engine_limits(&self) -> Option<SearchLimits> {
        match *self {
            PolicySpec::Engine { depth, movetime_ms, .. } => Some(SearchLimits {
                depth,
                movetime_ms: if depth.is_none() && movetime_ms.is_none() {
                    Some(Self::DEFAULT_ENGINE_MOVETIME_MS)
                } else {
                    movetime_ms
                },
            }),
            _ => None,
        }
    }

    /// Instantiates the policy; engine-backed specs start a process from
    /// `engine` with the spec's skill level.
    pub fn build(&self, engine: &EngineConfig) -> Result<Box<dyn Policy>, PolicyError> {
        Ok(match self {
            PolicySpec::Random => Box::new(RandomLegal),
            PolicySpec::Greedy => Box::new(GreedyMaterial),
            PolicySpec::Engine { skill, .. } => {
                let cfg = EngineConfig { skill_level: *skill, ..engine.clone() };
                let limits = self.engine_limits().expect("engine spec");
                Box::new(EnginePolicy::new(SourceFactory::build(&cfg)?, limits))
            }
            PolicySpec::Noisy { p, inner } => Box::new(Noisy::new(*p, inner.build(engine)?)?),
            PolicySpec::Extern { cmd } => Box::new(ExternalText::new(cmd.clone())),
        })
    }

    pub fn uses_engine(&self) -> bool {
        match self {
            PolicySpec::Engine { .. } => true,
            PolicySpec::Noisy { inner, .. } => inner.uses_engine(),
            _ => false,
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Random => f.write_str("random"),
            PolicySpec::Greedy => f.write_str("greedy"),
            PolicySpec::Engine { skill, depth, movetime_ms } => {
                let mut parts = Vec::new();
                if let Some(s) = skill {
                    parts.push(format!("skill={s}"));
                }
                if let Some(d) = depth {
                    parts.push(format!("depth={d}"));
                }
                if let Some(t) = movetime_ms {
                    parts.push(format!("movetime={t}"));
                }
                if parts.is_empty() {
                    f.write_str("engine")
                } else {
                    write!(f, "engine:{}", parts.join(","))
                }
            }
            PolicySpec::Noisy { p, inner } => write!(f, "noisy:p={p},inner={inner}"),
            PolicySpec::Extern { cmd } => write!(f, "extern:cmd={cmd}"),
        }
    }
}

fn spec_err(s: &str, why: &str) -> PolicyError {
    PolicyError::Config(format!("bad policy spec {s:?}: {why}"))
}

fn parse_num<T: FromStr>(s: &str, key: &str, value: &str) -> Result<T, PolicyError> {
    value.parse().map_err(|_| spec_err(s, &format!("{key}={value} is not a valid number")))
}

impl FromStr for PolicySpec {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        match head {
            "random" | "greedy" if !rest.is_empty() => Err(spec_err(s, "takes no parameters")),
            "random" => Ok(PolicySpec::Random),
            "greedy" => Ok(PolicySpec::Greedy),
            "engine" => {
                let (mut skill, mut depth, mut movetime_ms) = (None, None, None);
                for kv in rest.split(',').filter(|kv| !kv.is_empty()) {
                    let (k, v) = kv.split_once('=').ok_or_else(|| spec_err(s, "expected key=value"))?;
                    match k {
                        "skill" => {
                            let sk: u8 = parse_num(s, k, v)?;
                            if sk > 20 {
                                return Err(spec_err(s, "skill must be in 0..=20"));
                            }
                            skill = Some(sk);
                        }
                        "depth" => depth = Some(parse_num(s, k, v)?),
                        "movetime" => movetime_ms = Some(parse_num(s, k, v)?),
                        _ => return Err(spec_err(s, &format!("unknown engine key {k:?}"))),
                    }
                }
                Ok(PolicySpec::Engine { skill, depth, movetime_ms })
            }
            "noisy" => {
                let (p_part, inner) = rest
                    .split_once(",inner=")
                    .ok_or_else(|| spec_err(s, "expected noisy:p=X,inner=SPEC"))?;
                let p_text = p_part.strip_prefix("p=").ok_or_else(|| spec_err(s, "expected p=X"))?;
                let p: f64 = parse_num(s, "p", p_text)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(spec_err(s, "p must be in [0, 1]"));
                }
                Ok(PolicySpec::Noisy { p, inner: Box::new(inner.parse()?) })
            }
            "extern" => {
                let cmd = rest.strip_prefix("cmd=").ok_or_else(|| spec_err(s, "expected extern:cmd=COMMAND"))?;
                if cmd.trim().is_empty() {
                    return Err(spec_err(s, "empty command"));
                }
                Ok(PolicySpec::Extern { cmd: cmd.to_string() })
            }
            _ => Err(spec_err(s, "unknown policy kind")),
        }
    }
}

impl From<PolicySpec> for String {
    fn from(p: PolicySpec) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PolicySpec {
    type Error = PolicyError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// A [`PolicySpec`] bound to the engine configuration it should use.
#[derive(Debug, Clone)]
pub struct SpecFactory {
    pub spec: PolicySpec,
    pub engine: EngineConfig,
}

impl PolicyFactory for SpecFactory {
    fn build(&self) -> Result<Box<dyn Policy>, PolicyError> {
        self.spec.build(&self.engine)
    }

    fn describe(&self) -> String {
        self.spec.to_string()
    }
}

/// Wraps a closure as a [`PolicyFactory`].
pub struct FnFactory<F> {
    name: String,
    f: F,
}

impl<F> FnFactory<F>
where
    F: Fn() -> Result<Box<dyn Policy>, PolicyError> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> FnFactory<F> {
        FnFactory { name: name.into(), f }
    }
}

impl<F> PolicyFactory for FnFactory<F>
where
    F: Fn() -> Result<Box<dyn Policy>, PolicyError> + Send + Sync,
{
    fn build(&self) -> Result<Box<dyn Policy>, PolicyError> {
        (self.f)()
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}
