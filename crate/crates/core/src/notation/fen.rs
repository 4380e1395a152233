use std::fmt;

use thiserror::Error;

use crate::rules::{Castling, Color, Piece, Position, PositionError, Square};

pub const START_FEN: &str = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FenField {
    Placement,
    SideToMove,
    Castling,
    EnPassant,
    HalfmoveClock,
    FullmoveNumber,
}

impl fmt::Display for FenField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FenField::Placement => "piece placement",
            FenField::SideToMove => "side to move",
            FenField::Castling => "castling",
            FenField::EnPassant => "en passant",
            FenField::HalfmoveClock => "halfmove clock",
            FenField::FullmoveNumber => "fullmove number",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FenError {
    #[error("expected 6 FEN fields, found {0}")]
    FieldCount(usize),
    #[error("invalid {field} field: {reason}")]
    Field { field: FenField, reason: String },
    #[error("FEN describes an invalid position: {0}")]
    Position(#[from] PositionError),
}

fn field_err(field: FenField, reason: impl Into<String>) -> FenError {
    FenError::Field { field, reason: reason.into() }
}

/// Parses a six-field FEN string. Any run of whitespace separates fields.
pub fn parse_fen(text: &str) -> Result<Position, FenError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(FenError::FieldCount(fields.len()));
    }

    let board = parse_placement(fields[0])?;

    let side = match fields[1] {
        "w" => Color::White,
        "b" => Color::Black,
        other => return Err(field_err(FenField::SideToMove, format!("{other:?} is not w or b"))),
    };

    let mut castling = Castling::NONE;
    if fields[2] != "-" {
        for c in fields[2].chars() {
            let flag = Castling::from_char(c)
                .ok_or_else(|| field_err(FenField::Castling, format!("unexpected {c:?}")))?;
            if castling.contains(flag) {
                return Err(field_err(FenField::Castling, format!("duplicate {c:?}")));
            }
            castling.insert(flag);
        }
    }

    let en_passant = match fields[3] {
        "-" => None,
        text => Some(
            Square::parse(text)
                .ok_or_else(|| field_err(FenField::EnPassant, format!("{text:?} is not a square")))?,
        ),
    };

    let halfmove = fields[4]
        .parse::<u32>()
        .map_err(|_| field_err(FenField::HalfmoveClock, format!("{:?}", fields[4])))?;
    let fullmove = fields[5]
        .parse::<u32>()
        .map_err(|_| field_err(FenField::FullmoveNumber, format!("{:?}", fields[5])))?;
    if fullmove == 0 {
        return Err(field_err(FenField::FullmoveNumber, "must be at least 1"));
    }

    Ok(Position::from_parts(board, side, castling, en_passant, halfmove, fullmove)?)
}

fn parse_placement(text: &str) -> Result<[Option<Piece>; 64], FenError> {
    let ranks: Vec<&str> = text.split('/').collect();
    if ranks.len() != 8 {
        return Err(field_err(FenField::Placement, format!("expected 8 ranks, found {}", ranks.len())));
    }
    let mut board = [None; 64];
    for (i, row) in ranks.iter().enumerate() {
        let rank = 7 - i as u8;
        let mut file = 0u8;
        for c in row.chars() {
            if let Some(d) = c.to_digit(10) {
                if !(1..=8).contains(&d) {
                    return Err(field_err(FenField::Placement, format!("bad digit {c:?}")));
                }
                file += d as u8;
            } else {
                let piece = Piece::from_fen_char(c)
                    .ok_or_else(|| field_err(FenField::Placement, format!("unknown piece {c:?}")))?;
                if file >= 8 {
                    return Err(field_err(FenField::Placement, format!("rank {} too long", rank + 1)));
                }
                board[Square::new(file, rank).expect("in range").index()] = Some(piece);
                file += 1;
            }
            if file > 8 {
                return Err(field_err(FenField::Placement, format!("rank {} too long", rank + 1)));
            }
        }
        if file != 8 {
            return Err(field_err(
                FenField::Placement,
                format!("rank {} has {} squares, expected 8", rank + 1, file),
            ));
        }
    }
    Ok(board)
}

/// Canonical single-line FEN with maximal empty-square compression.
pub fn render_fen(pos: &Position) -> String {
    let mut out = String::with_capacity(90);
    out.push_str(&render_placement(pos));
    out.push(' ');
    out.push(pos.side_to_move().fen_char());
    out.push(' ');
    if pos.castling().is_empty() {
        out.push('-');
    } else {
        out.extend(pos.castling().flags().map(|(_, c)| c));
    }
    out.push(' ');
    match pos.en_passant() {
        Some(sq) => out.push_str(&sq.to_string()),
        None => out.push('-'),
    }
    out.push_str(&format!(" {} {}", pos.halfmove_clock(), pos.fullmove_number()));
    out
}

fn render_placement(pos: &Position) -> String {
    let mut out = String::with_capacity(72);
    for rank in (0..8u8).rev() {
        let mut empty = 0;
        for file in 0..8u8 {
            match pos.piece_at(Square::new(file, rank).expect("in range")) {
                None => empty += 1,
                Some(p) => {
                    if empty > 0 {
                        out.push(char::from(b'0' + empty));
                        empty = 0;
                    }
                    out.push(p.fen_char());
                }
            }
        }
        if empty > 0 {
            out.push(char::from(b'0' + empty));
        }
        if rank > 0 {
            out.push('/');
        }
    }
    out
}

/// FEN fields 1-4 (placement, side, castling, en passant): the identity of a
/// board state with the clocks stripped.
pub fn position_key(pos: &Position) -> String {
    let fen = render_fen(pos);
    fen.rsplitn(3, ' ').nth(2).expect("six fields").to_string()
}
