use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::fen::{parse_fen, render_fen, FenError};
use super::movetext::{parse_move_text, render_san, MoveTextError};
use crate::arena::MoveTelemetry;
use crate::rules::{status, Color, GameStatus, IllegalMoveError, Move, Position, StatusTag};

const SEVEN_TAG_ROSTER: [&str; 7] = ["Event", "Site", "Date", "Round", "White", "Black", "Result"];
const MAX_LINE: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GameResult {
    #[serde(rename = "1-0")]
    WhiteWins,
    #[serde(rename = "0-1")]
    BlackWins,
    #[serde(rename = "1/2-1/2")]
    Draw,
    #[serde(rename = "*")]
    Unfinished,
}

impl GameResult {
    pub fn as_str(self) -> &'static str {
        match self {
            GameResult::WhiteWins => "1-0",
            GameResult::BlackWins => "0-1",
            GameResult::Draw => "1/2-1/2",
            GameResult::Unfinished => "*",
        }
    }

    pub fn parse(token: &str) -> Option<GameResult> {
        Some(match token {
            "1-0" => GameResult::WhiteWins,
            "0-1" => GameResult::BlackWins,
            "1/2-1/2" | "½-½" => GameResult::Draw,
            "*" => GameResult::Unfinished,
            _ => return None,
        })
    }

    pub fn win_for(color: Color) -> GameResult {
        match color {
            Color::White => GameResult::WhiteWins,
            Color::Black => GameResult::BlackWins,
        }
    }

    /// Score for `color`: 1, 0.5 or 0. `None` for unfinished games.
    pub fn score_for(self, color: Color) -> Option<f64> {
        match (self, color) {
            (GameResult::Unfinished, _) => None,
            (GameResult::Draw, _) => Some(0.5),
            (GameResult::WhiteWins, Color::White) | (GameResult::BlackWins, Color::Black) => Some(1.0),
            _ => Some(0.0),
        }
    }

    /// The result implied by a terminal status; `Unfinished` while ongoing.
    pub fn from_status(status: GameStatus) -> GameResult {
        match status.tag {
            StatusTag::Ongoing => GameResult::Unfinished,
            StatusTag::Checkmate => GameResult::win_for(status.winner.expect("mate has a winner")),
            _ => GameResult::Draw,
        }
    }
}

impl fmt::Display for GameResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One complete game: ordered tag pairs, the move list, the result and,
/// for games played by the arena, per-move sampling telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub tags: Vec<(String, String)>,
    pub moves: Vec<Move>,
    pub result: GameResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_move_meta: Option<Vec<MoveTelemetry>>,
}

impl GameRecord {
    pub fn new() -> GameRecord {
        GameRecord { tags: Vec::new(), moves: Vec::new(), result: GameResult::Unfinished, per_move_meta: None }
    }

    pub fn tag(&self, name: &str) -> Option<&str> {
        self.tags.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str())
    }

    pub fn set_tag(&mut self, name: &str, value: impl Into<String>) {
        let value = value.into();
        match self.tags.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.tags.push((name.to_string(), value)),
        }
    }

    /// Start position: the `FEN` tag when present, else the standard one.
    pub fn start_position(&self) -> Result<Position, FenError> {
        match self.tag("FEN") {
            Some(fen) => parse_fen(fen),
            None => Ok(Position::startpos()),
        }
    }

    /// Replays the moves, returning every position from the start through the
    /// final one (`moves.len() + 1` entries).
    pub fn positions(&self) -> Result<Vec<Position>, ReplayError> {
        let mut pos = self.start_position()?;
        let mut out = Vec::with_capacity(self.moves.len() + 1);
        out.push(pos.clone());
        for (ply, &m) in self.moves.iter().enumerate() {
            pos = pos.apply_move(m).map_err(|e| ReplayError::Illegal { ply: ply + 1, source: e })?;
            out.push(pos.clone());
        }
        Ok(out)
    }

    /// Status of the final position, with repetition checked over the game.
    pub fn final_status(&self) -> Result<GameStatus, ReplayError> {
        let positions = self.positions()?;
        let last = positions.last().expect("at least the start position");
        Ok(status(last, &positions))
    }
}

impl Default for GameRecord {
    fn default() -> Self {
        GameRecord::new()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("bad FEN tag: {0}")]
    Fen(#[from] FenError),
    #[error("illegal move at ply {ply}: {source}")]
    Illegal { ply: usize, source: IllegalMoveError },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PgnError {
    #[error("game {game}: {message}")]
    Syntax { game: usize, message: String },
    #[error("game {game}, ply {ply}: cannot play {token:?}: {cause}")]
    IllegalMove { game: usize, ply: usize, token: String, cause: MoveTextError },
    #[error("game {game}: bad FEN tag: {cause}")]
    BadFen { game: usize, cause: FenError },
}

impl PgnError {
    /// Syntax errors leave the reader in an unknown state; the other kinds
    /// only spoil the current game.
    pub fn is_fatal(&self) -> bool {
        matches!(self, PgnError::Syntax { .. })
    }
}

/// Parses every game in `text`. Fails on the first bad game.
pub fn parse_pgn(text: &str) -> Result<Vec<GameRecord>, PgnError> {
    PgnReader::new(text).collect()
}

/// Streaming PGN reader yielding one result per game. After a move-level
/// error the reader skips to the next game; after a syntax error it stops.
pub struct PgnReader<'a> {
    src: Vec<char>,
    pos: usize,
    game: usize,
    done: bool,
    _text: std::marker::PhantomData<&'a str>,
}

impl<'a> PgnReader<'a> {
    pub fn new(text: &'a str) -> PgnReader<'a> {
        let text = text.strip_prefix('\u{feff}').unwrap_or(text);
        let src = text
            .chars()
            .map(|c| match c {
                '\u{201c}' | '\u{201d}' | '\u{201e}' => '"',
                c => c,
            })
            .collect();
        PgnReader { src, pos: 0, game: 0, done: false, _text: std::marker::PhantomData }
    }

    fn peek(&self) -> Option<char> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += 1;
            } else if c == '%' && (self.pos == 0 || self.src[self.pos - 1] == '\n') {
                self.skip_line();
            } else {
                break;
            }
        }
    }

    fn skip_line(&mut self) {
        while let Some(c) = self.peek() {
            self.pos += 1;
            if c == '\n' {
                break;
            }
        }
    }

    fn syntax(&self, message: impl Into<String>) -> PgnError {
        PgnError::Syntax { game: self.game, message: message.into() }
    }

    fn parse_tag(&mut self) -> Result<(String, String), PgnError> {
        self.pos += 1; // '['
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        let name: String = self.src[start..self.pos].iter().collect();
        if name.is_empty() {
            return Err(self.syntax("tag without a name"));
        }
        self.skip_ws();
        let value = match self.peek() {
            Some('"') => {
                self.pos += 1;
                let mut value = String::new();
                loop {
                    match self.peek() {
                        None => return Err(self.syntax(format!("unterminated value of tag {name}"))),
                        Some('\\') if matches!(self.src.get(self.pos + 1), Some('"' | '\\')) => {
                            value.push(self.src[self.pos + 1]);
                            self.pos += 2;
                        }
                        Some('"') => {
                            self.pos += 1;
                            break;
                        }
                        Some('\n') => return Err(self.syntax(format!("unterminated value of tag {name}"))),
                        Some(c) => {
                            value.push(c);
                            self.pos += 1;
                        }
                    }
                }
                value
            }
            // TeX-style ``value'' quoting.
            Some('`') if self.src.get(self.pos + 1) == Some(&'`') => {
                self.pos += 2;
                let start = self.pos;
                loop {
                    match self.peek() {
                        None | Some('\n') => {
                            return Err(self.syntax(format!("unterminated value of tag {name}")))
                        }
                        Some('\'') if self.src.get(self.pos + 1) == Some(&'\'') => break,
                        Some(_) => self.pos += 1,
                    }
                }
                let value: String = self.src[start..self.pos].iter().collect();
                self.pos += 2;
                value
            }
            _ => return Err(self.syntax(format!("tag {name} has no quoted value"))),
        };
        self.skip_ws();
        if self.peek() != Some(']') {
            return Err(self.syntax(format!("unterminated tag {name}")));
        }
        self.pos += 1;
        Ok((name, value))
    }

    /// Skips `{...}` or a nested `(...)` block starting at the current char.
    fn skip_block(&mut self, open: char, close: char, what: &str) -> Result<(), PgnError> {
        let mut depth = 0;
        while let Some(c) = self.peek() {
            self.pos += 1;
            if c == open {
                depth += 1;
            } else if c == close {
                depth -= 1;
                if depth == 0 {
                    return Ok(());
                }
            } else if c == '{' && open == '(' {
                self.pos -= 1;
                self.skip_block('{', '}', "comment")?;
            }
        }
        Err(self.syntax(format!("unterminated {what}")))
    }

    fn next_token(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_whitespace() || matches!(c, '{' | '}' | '(' | ')' | '[' | ']' | ';' | '$') {
                break;
            }
            self.pos += 1;
        }
        self.src[start..self.pos].iter().collect()
    }

    /// Advances past the rest of the current game's movetext.
    fn skip_game(&mut self) -> Result<(), PgnError> {
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Ok(()),
                Some('[') => return Ok(()),
                Some('{') => self.skip_block('{', '}', "comment")?,
                Some('(') => self.skip_block('(', ')', "variation")?,
                Some(';') => self.skip_line(),
                Some(_) => {
                    let token = self.next_token();
                    if token.is_empty() {
                        self.pos += 1;
                    } else if GameResult::parse(&token).is_some() {
                        return Ok(());
                    }
                }
            }
        }
    }

    fn read_game(&mut self) -> Option<Result<GameRecord, PgnError>> {
        self.skip_ws();
        self.peek()?;
        self.game += 1;
        let mut record = GameRecord::new();

        while self.peek() == Some('[') {
            match self.parse_tag() {
                Ok(tag) => record.tags.push(tag),
                Err(e) => return Some(Err(e)),
            }
            self.skip_ws();
        }

        let mut pos = match record.start_position() {
            Ok(p) => p,
            Err(cause) => {
                let err = PgnError::BadFen { game: self.game, cause };
                return Some(self.skip_game().and(Err(err)));
            }
        };
        let mut saw_movetext = false;
        loop {
            self.skip_ws();
            let Some(c) = self.peek() else { break };
            match c {
                '[' => break,
                '{' => {
                    if let Err(e) = self.skip_block('{', '}', "comment") {
                        return Some(Err(e));
                    }
                }
                '(' => {
                    if let Err(e) = self.skip_block('(', ')', "variation") {
                        return Some(Err(e));
                    }
                }
                ';' => self.skip_line(),
                '$' => {
                    self.pos += 1;
                    self.next_token();
                }
                ')' | '}' | ']' => return Some(Err(self.syntax(format!("stray {c:?}")))),
                _ => {
                    let token = self.next_token();
                    if token.is_empty() {
                        self.pos += 1;
                        continue;
                    }
                    saw_movetext = true;
                    if let Some(result) = GameResult::parse(&token) {
                        record.result = result;
                        break;
                    }
                    let Some(san) = strip_move_number(&token) else { continue };
                    let san = san.replace("\\#", "#");
                    match parse_move_text(&san, &pos) {
                        Ok(m) => {
                            pos = pos.apply_move(m).expect("parsed move is legal");
                            record.moves.push(m);
                        }
                        Err(cause) => {
                            let err = PgnError::IllegalMove {
                                game: self.game,
                                ply: record.moves.len() + 1,
                                token: san,
                                cause,
                            };
                            return Some(self.skip_game().and(Err(err)));
                        }
                    }
                }
            }
        }
        if record.tags.is_empty() && !saw_movetext {
            // Only comments or escapes before end of input.
            return None;
        }
        Some(Ok(record))
    }
}

/// Strips a leading move number (`12.`, `12...`) and trailing annotation
/// glyphs. Returns `None` for tokens that are only a move number or dots.
fn strip_move_number(token: &str) -> Option<&str> {
    let digits_end = token.find(|c: char| !c.is_ascii_digit()).unwrap_or(token.len());
    let rest = if digits_end > 0 && token[digits_end..].starts_with('.') {
        token[digits_end..].trim_start_matches('.')
    } else if digits_end == token.len() {
        ""
    } else {
        token.trim_start_matches('.')
    };
    let rest = rest.trim_end_matches(['!', '?']);
    (!rest.is_empty()).then_some(rest)
}

impl Iterator for PgnReader<'_> {
    type Item = Result<GameRecord, PgnError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.read_game();
        match &item {
            None => self.done = true,
            Some(Err(e)) if e.is_fatal() => self.done = true,
            _ => {}
        }
        item
    }
}

fn escape_tag_value(value: &str) -> String {
    value.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders a game in PGN export style: seven-tag roster first, then other
/// tags in their stored order, SAN movetext wrapped at 80 columns, and the
/// result token.
pub fn render_pgn(rec: &GameRecord) -> Result<String, ReplayError> {
    let mut out = String::new();
    for name in SEVEN_TAG_ROSTER {
        if let Some(value) = rec.tag(name) {
            out.push_str(&format!("[{name} \"{}\"]\n", escape_tag_value(value)));
        }
    }
    for (name, value) in &rec.tags {
        if !SEVEN_TAG_ROSTER.contains(&name.as_str()) {
            out.push_str(&format!("[{name} \"{}\"]\n", escape_tag_value(value)));
        }
    }
    if !rec.tags.is_empty() {
        out.push('\n');
    }

    let mut tokens = Vec::with_capacity(rec.moves.len() * 3 / 2 + 1);
    let mut pos = rec.start_position()?;
    for (i, &m) in rec.moves.iter().enumerate() {
        let number = pos.fullmove_number();
        if pos.side_to_move() == Color::White {
            tokens.push(format!("{number}."));
        } else if i == 0 {
            tokens.push(format!("{number}..."));
        }
        let san = render_san(m, &pos).map_err(|e| ReplayError::Illegal { ply: i + 1, source: e })?;
        tokens.push(san);
        pos = pos.apply_move(m).expect("rendered move is legal");
    }
    tokens.push(rec.result.as_str().to_string());

    let mut line_len = 0;
    for token in tokens {
        if line_len > 0 && line_len + 1 + token.len() > MAX_LINE {
            out.push('\n');
            line_len = 0;
        } else if line_len > 0 {
            out.push(' ');
            line_len += 1;
        }
        line_len += token.len();
        out.push_str(&token);
    }
    out.push('\n');
    Ok(out)
}

/// Renders several games separated by blank lines.
pub fn render_pgn_many<'a>(records: impl IntoIterator<Item = &'a GameRecord>) -> Result<String, ReplayError> {
    let mut out = String::new();
    for (i, rec) in records.into_iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&render_pgn(rec)?);
    }
    Ok(out)
}

/// FEN of every position in the game, start included.
pub fn game_fens(rec: &GameRecord) -> Result<Vec<String>, ReplayError> {
    Ok(rec.positions()?.iter().map(render_fen).collect())
}
