use thiserror::Error;

use crate::rules::{legal_moves, Move, Position, Role, Square};

/// Why a piece of move text could not be bound to a legal move.
///
/// The split between [`MoveTextError::Syntax`] and [`MoveTextError::Illegal`]
/// is load-bearing: pass@1 accounting counts them separately.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoveTextError {
    #[error("unparseable move text {0:?}")]
    Syntax(String),
    #[error("move {text:?} is not legal here")]
    Illegal { text: String },
    #[error("move {text:?} is ambiguous ({candidates} candidates)")]
    Ambiguous { text: String, candidates: usize },
}

impl MoveTextError {
    pub fn is_syntax(&self) -> bool {
        matches!(self, MoveTextError::Syntax(_))
    }
}

/// Parses strict UCI shape (`e2e4`, `e7e8q`) without looking at a position.
pub fn parse_uci_shape(text: &str) -> Option<Move> {
    let b = text.as_bytes();
    if !(b.len() == 4 || b.len() == 5) || !text.is_ascii() {
        return None;
    }
    let from = Square::parse(&text[0..2])?;
    let to = Square::parse(&text[2..4])?;
    if from == to {
        return None;
    }
    let promotion = match b.get(4) {
        None => None,
        Some(&c) => match c {
            b'n' | b'b' | b'r' | b'q' => Role::from_char(c as char),
            _ => return None,
        },
    };
    Some(Move { from, to, promotion })
}

fn strip_suffixes(text: &str) -> &str {
    text.trim_end_matches(['+', '#', '!', '?'])
}

/// Binds move text to the unique legal move it denotes in `pos`.
///
/// Forms are tried in order: strict UCI (`e2e4`), lenient piece-prefixed UCI
/// (`Ng1f3`, `Nd2xc4`, `e7-e8=Q`), castling words (`O-O`, `0-0-0`), then SAN
/// (`Bg5`, `exd5`, `Qf6+`, `e8=Q#`).
pub fn parse_move_text(text: &str, pos: &Position) -> Result<Move, MoveTextError> {
    let raw = text.trim();
    let core = strip_suffixes(raw);
    if core.is_empty() || !core.is_ascii() {
        return Err(MoveTextError::Syntax(raw.to_string()));
    }
    let legal = legal_moves(pos);
    let illegal = || MoveTextError::Illegal { text: raw.to_string() };

    if let Some(m) = parse_uci_shape(core) {
        return legal.contains(&m).then_some(m).ok_or_else(illegal);
    }

    if let Some((role, m)) = parse_lenient_uci(core) {
        let piece_ok = match role {
            Some(r) => pos.piece_at(m.from).is_some_and(|p| p.role == r),
            None => true,
        };
        return (piece_ok && legal.contains(&m)).then_some(m).ok_or_else(illegal);
    }

    if let Some(king_side) = parse_castling_word(core) {
        let home = pos.king(pos.side_to_move());
        let df = if king_side { 2 } else { -2 };
        let m = home.offset(df, 0).map(|to| Move::new(home, to));
        return m.filter(|m| legal.contains(m)).ok_or_else(illegal);
    }

    let san = parse_san_shape(core).ok_or_else(|| MoveTextError::Syntax(raw.to_string()))?;
    let candidates: Vec<Move> = legal
        .iter()
        .copied()
        .filter(|m| {
            let piece = pos.piece_at(m.from).expect("legal move has a piece");
            piece.role == san.role
                && m.to == san.to
                && m.promotion == san.promotion
                && san.from_file.is_none_or(|f| m.from.file() == f)
                && san.from_rank.is_none_or(|r| m.from.rank() == r)
                // A SAN king step never means castling.
                && !(piece.role == Role::King && (m.to.file() as i8 - m.from.file() as i8).abs() == 2)
        })
        .collect();
    match candidates.len() {
        0 => Err(illegal()),
        1 => Ok(candidates[0]),
        n => Err(MoveTextError::Ambiguous { text: raw.to_string(), candidates: n }),
    }
}

fn parse_castling_word(text: &str) -> Option<bool> {
    match text {
        "O-O" | "0-0" | "o-o" => Some(true),
        "O-O-O" | "0-0-0" | "o-o-o" => Some(false),
        _ => None,
    }
}

fn promotion_suffix(text: &str) -> (&str, Option<Option<Role>>) {
    // Returns (rest, Some(promotion)) when a well-formed suffix was found, or
    // (rest, Some(None)) when there is none. `None` signals a malformed one.
    let b = text.as_bytes();
    let Some(&last) = b.last() else { return (text, Some(None)) };
    if b"NBRQnbrq".contains(&last) && b.len() >= 3 {
        let role = Role::from_char(last as char);
        let mut rest = &text[..text.len() - 1];
        rest = rest.strip_suffix('=').unwrap_or(rest);
        if rest.len() >= 2 && Square::parse(&rest[rest.len() - 2..]).is_some() {
            return (rest, Some(role));
        }
        return (text, None);
    }
    (text, Some(None))
}

/// `[KQRBNP]? from [x-]? to (=?[NBRQ])?`
fn parse_lenient_uci(text: &str) -> Option<(Option<Role>, Move)> {
    let (body, promo) = promotion_suffix(text);
    let promotion = promo?;
    let mut rest = body;
    let mut role = None;
    if let Some(c) = rest.chars().next() {
        if "KQRBNP".contains(c) {
            role = Role::from_char(c);
            rest = &rest[1..];
        }
    }
    if rest.len() < 4 {
        return None;
    }
    let from = Square::parse(&rest[..2])?;
    let mut tail = &rest[2..];
    if let Some(t) = tail.strip_prefix(['x', '-', ':']) {
        tail = t;
    }
    let to = Square::parse(tail)?;
    (from != to).then_some((role, Move { from, to, promotion }))
}

struct SanShape {
    role: Role,
    from_file: Option<u8>,
    from_rank: Option<u8>,
    to: Square,
    promotion: Option<Role>,
}

fn parse_san_shape(text: &str) -> Option<SanShape> {
    let (body, promo) = promotion_suffix(text);
    let promotion = promo?;
    if body.len() < 2 {
        return None;
    }
    let to = Square::parse(&body[body.len() - 2..])?;
    let mut head = &body[..body.len() - 2];

    let mut role = Role::Pawn;
    if let Some(c) = head.chars().next() {
        if "KQRBN".contains(c) {
            role = Role::from_char(c)?;
            head = &head[1..];
        }
    }
    if let Some(h) = head.strip_suffix(['x', ':']) {
        head = h;
    }
    let (mut from_file, mut from_rank) = (None, None);
    for c in head.chars() {
        match c {
            'a'..='h' if from_file.is_none() && from_rank.is_none() => {
                from_file = Some(c as u8 - b'a')
            }
            '1'..='8' if from_rank.is_none() => from_rank = Some(c as u8 - b'1'),
            _ => return None,
        }
    }
    if role == Role::Pawn && from_rank.is_some() {
        return None;
    }
    if promotion.is_some() && role != Role::Pawn {
        return None;
    }
    Some(SanShape { role, from_file, from_rank, to, promotion })
}

/// Standard algebraic notation with minimal disambiguation and check/mate
/// suffixes. Rejects moves that are not legal in `pos`.
pub fn render_san(m: Move, pos: &Position) -> Result<String, crate::rules::IllegalMoveError> {
    let next = pos.apply_move(m)?;
    let mut san = san_without_suffix(m, pos);
    if next.in_check() {
        san.push(if crate::rules::has_legal_move(&next) { '+' } else { '#' });
    }
    Ok(san)
}

fn san_without_suffix(m: Move, pos: &Position) -> String {
    let piece = pos.piece_at(m.from).expect("legal move has a piece");
    let df = m.to.file() as i8 - m.from.file() as i8;
    if piece.role == Role::King && df.abs() == 2 {
        return if df > 0 { "O-O".into() } else { "O-O-O".into() };
    }
    let capture = pos.is_capture(m);
    let mut san = String::with_capacity(8);
    match piece.role.san_char() {
        None => {
            if capture {
                san.push(m.from.file_char());
            }
        }
        Some(letter) => {
            san.push(letter);
            let rivals: Vec<Square> = legal_moves(pos)
                .into_iter()
                .filter(|o| {
                    o.to == m.to
                        && o.from != m.from
                        && pos.piece_at(o.from).is_some_and(|p| p.role == piece.role)
                })
                .map(|o| o.from)
                .collect();
            if !rivals.is_empty() {
                let file_unique = rivals.iter().all(|s| s.file() != m.from.file());
                let rank_unique = rivals.iter().all(|s| s.rank() != m.from.rank());
                if file_unique {
                    san.push(m.from.file_char());
                } else if rank_unique {
                    san.push(m.from.rank_char());
                } else {
                    san.push(m.from.file_char());
                    san.push(m.from.rank_char());
                }
            }
        }
    }
    if capture {
        san.push('x');
    }
    san.push_str(&m.to.to_string());
    if let Some(role) = m.promotion {
        san.push('=');
        san.push(role.san_char().expect("promotion piece has a letter"));
    }
    san
}
