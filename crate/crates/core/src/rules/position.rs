use std::fmt;

use thiserror::Error;

use super::types::{Castling, Color, Move, Piece, Role, Square};

/// Structural violations of the position invariants.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PositionError {
    #[error("{0} has no king")]
    MissingKing(Color),
    #[error("{0} has more than one king")]
    ExtraKing(Color),
    #[error("pawn on back rank at {0}")]
    PawnOnBackRank(Square),
    #[error("en passant square {0} is inconsistent with the position")]
    BadEnPassant(Square),
    #[error("side not to move ({0}) is in check")]
    OpponentInCheck(Color),
    #[error("castling right '{0}' without king and rook on their home squares")]
    CastlingWithoutPieces(char),
    #[error("fullmove number must be positive")]
    ZeroFullmove,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("illegal move {mv} in position {fen}")]
pub struct IllegalMoveError {
    pub mv: Move,
    pub fen: String,
}

pub(crate) const KNIGHT_STEPS: [(i8, i8); 8] =
    [(1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)];
pub(crate) const KING_STEPS: [(i8, i8); 8] =
    [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
pub(crate) const ROOK_DIRS: [(i8, i8); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
pub(crate) const BISHOP_DIRS: [(i8, i8); 4] = [(1, 1), (-1, 1), (-1, -1), (1, -1)];

/// Full game state, one field per FEN field.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Position {
    board: [Option<Piece>; 64],
    side_to_move: Color,
    castling: Castling,
    en_passant: Option<Square>,
    halfmove_clock: u32,
    fullmove_number: u32,
    kings: [Square; 2],
}

/// The part of a position that decides repetition and dataset identity:
/// placement, side to move, castling rights and en passant square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoardKey {
    board: [Option<Piece>; 64],
    side_to_move: Color,
    castling: Castling,
    en_passant: Option<Square>,
}

fn corner(color: Color, king_side: bool) -> Square {
    let rank = if color == Color::White { 0 } else { 7 };
    Square::new(if king_side { 7 } else { 0 }, rank).expect("corner square")
}

fn king_home(color: Color) -> Square {
    Square::new(4, if color == Color::White { 0 } else { 7 }).expect("king home")
}

impl Position {
    /// The standard initial position.
    pub fn startpos() -> Position {
        use Role::*;
        let back = [Rook, Knight, Bishop, Queen, King, Bishop, Knight, Rook];
        let mut board = [None; 64];
        for (file, &role) in back.iter().enumerate() {
            board[file] = Some(Piece::new(role, Color::White));
            board[8 + file] = Some(Piece::new(Pawn, Color::White));
            board[48 + file] = Some(Piece::new(Pawn, Color::Black));
            board[56 + file] = Some(Piece::new(role, Color::Black));
        }
        Position::from_parts(board, Color::White, Castling::ALL, None, 0, 1)
            .expect("start position is valid")
    }

    /// Assembles a position and checks every structural invariant.
    pub fn from_parts(
        board: [Option<Piece>; 64],
        side_to_move: Color,
        castling: Castling,
        en_passant: Option<Square>,
        halfmove_clock: u32,
        fullmove_number: u32,
    ) -> Result<Position, PositionError> {
        let mut kings = [None, None];
        for sq in Square::all() {
            match board[sq.index()] {
                Some(Piece { role: Role::King, color }) => {
                    if kings[color.index()].replace(sq).is_some() {
                        return Err(PositionError::ExtraKing(color));
                    }
                }
                Some(Piece { role: Role::Pawn, .. }) if sq.rank() == 0 || sq.rank() == 7 => {
                    return Err(PositionError::PawnOnBackRank(sq));
                }
                _ => {}
            }
        }
        let white_king = kings[0].ok_or(PositionError::MissingKing(Color::White))?;
        let black_king = kings[1].ok_or(PositionError::MissingKing(Color::Black))?;
        if fullmove_number == 0 {
            return Err(PositionError::ZeroFullmove);
        }

        for (flag, ch) in castling.flags() {
            let color = if ch.is_ascii_uppercase() { Color::White } else { Color::Black };
            let king_side = flag == Castling::king_side(color);
            let king_ok = board[king_home(color).index()] == Some(Piece::new(Role::King, color));
            let rook_ok =
                board[corner(color, king_side).index()] == Some(Piece::new(Role::Rook, color));
            if !(king_ok && rook_ok) {
                return Err(PositionError::CastlingWithoutPieces(ch));
            }
        }

        if let Some(ep) = en_passant {
            // The square a pawn just skipped: empty, with the pawn of the side
            // that just moved directly in front of it.
            let mover = side_to_move.opposite();
            let expected_rank = if mover == Color::White { 2 } else { 5 };
            let pawn_sq = ep.offset(0, mover.forward());
            let origin = ep.offset(0, -mover.forward());
            let ok = ep.rank() == expected_rank
                && board[ep.index()].is_none()
                && pawn_sq.and_then(|s| board[s.index()]) == Some(Piece::new(Role::Pawn, mover))
                && origin.is_some_and(|s| board[s.index()].is_none());
            if !ok {
                return Err(PositionError::BadEnPassant(ep));
            }
        }

        let pos = Position {
            board,
            side_to_move,
            castling,
            en_passant,
            halfmove_clock,
            fullmove_number,
            kings: [white_king, black_king],
        };
        let waiting = side_to_move.opposite();
        if pos.is_attacked(pos.king(waiting), side_to_move) {
            return Err(PositionError::OpponentInCheck(waiting));
        }
        Ok(pos)
    }

    pub fn piece_at(&self, sq: Square) -> Option<Piece> {
        self.board[sq.index()]
    }

    pub fn board(&self) -> &[Option<Piece>; 64] {
        &self.board
    }

    pub fn side_to_move(&self) -> Color {
        self.side_to_move
    }

    pub fn castling(&self) -> Castling {
        self.castling
    }

    pub fn en_passant(&self) -> Option<Square> {
        self.en_passant
    }

    pub fn halfmove_clock(&self) -> u32 {
        self.halfmove_clock
    }

    pub fn fullmove_number(&self) -> u32 {
        self.fullmove_number
    }

    pub fn king(&self, color: Color) -> Square {
        self.kings[color.index()]
    }

    pub fn key(&self) -> BoardKey {
        BoardKey {
            board: self.board,
            side_to_move: self.side_to_move,
            castling: self.castling,
            en_passant: self.en_passant,
        }
    }

    pub fn pieces(&self) -> impl Iterator<Item = (Square, Piece)> + '_ {
        Square::all().filter_map(move |sq| self.board[sq.index()].map(|p| (sq, p)))
    }

    pub fn piece_count(&self) -> usize {
        self.board.iter().flatten().count()
    }

    pub fn in_check(&self) -> bool {
        self.is_attacked(self.king(self.side_to_move), self.side_to_move.opposite())
    }

    /// Whether any piece of `by` attacks `target`.
    pub fn is_attacked(&self, target: Square, by: Color) -> bool {
        let is = |sq: Option<Square>, role: Role| {
            sq.and_then(|s| self.board[s.index()]) == Some(Piece::new(role, by))
        };
        // A pawn of `by` attacks diagonally forward, so look one rank back.
        if is(target.offset(-1, -by.forward()), Role::Pawn)
            || is(target.offset(1, -by.forward()), Role::Pawn)
        {
            return true;
        }
        if KNIGHT_STEPS.iter().any(|&(df, dr)| is(target.offset(df, dr), Role::Knight)) {
            return true;
        }
        if KING_STEPS.iter().any(|&(df, dr)| is(target.offset(df, dr), Role::King)) {
            return true;
        }
        let slider = |dirs: &[(i8, i8)], role: Role| {
            dirs.iter().any(|&(df, dr)| {
                let mut cur = target;
                while let Some(next) = cur.offset(df, dr) {
                    match self.board[next.index()] {
                        None => cur = next,
                        Some(p) => return p.color == by && (p.role == role || p.role == Role::Queen),
                    }
                }
                false
            })
        };
        slider(&ROOK_DIRS, Role::Rook) || slider(&BISHOP_DIRS, Role::Bishop)
    }

    /// Applies a move known to be pseudo-legal without any legality check.
    pub(crate) fn apply_unchecked(&self, m: Move) -> Position {
        let mut next = self.clone();
        let mover = self.side_to_move;
        let piece = self.board[m.from.index()].expect("move from an occupied square");
        let mut captured = self.board[m.to.index()].is_some();

        next.board[m.from.index()] = None;
        if piece.role == Role::Pawn && Some(m.to) == self.en_passant && m.from.file() != m.to.file()
        {
            let victim = Square::new(m.to.file(), m.from.rank()).expect("en passant victim");
            next.board[victim.index()] = None;
            captured = true;
        }
        let placed = match m.promotion {
            Some(role) => Piece::new(role, mover),
            None => piece,
        };
        next.board[m.to.index()] = Some(placed);

        if piece.role == Role::King {
            next.kings[mover.index()] = m.to;
            next.castling.remove(Castling::both(mover));
            let df = m.to.file() as i8 - m.from.file() as i8;
            if df.abs() == 2 {
                let king_side = df > 0;
                let rook_from = corner(mover, king_side);
                let rook_to = m.from.offset(df.signum(), 0).expect("rook destination");
                next.board[rook_from.index()] = None;
                next.board[rook_to.index()] = Some(Piece::new(Role::Rook, mover));
            }
        }
        for color in [Color::White, Color::Black] {
            for king_side in [true, false] {
                let c = corner(color, king_side);
                if m.from == c || m.to == c {
                    next.castling.remove(if king_side {
                        Castling::king_side(color)
                    } else {
                        Castling::queen_side(color)
                    });
                }
            }
        }

        next.en_passant = None;
        if piece.role == Role::Pawn && (m.to.rank() as i8 - m.from.rank() as i8).abs() == 2 {
            next.en_passant = m.from.offset(0, mover.forward());
        }

        next.halfmove_clock = if piece.role == Role::Pawn || captured {
            0
        } else {
            self.halfmove_clock + 1
        };
        if mover == Color::Black {
            next.fullmove_number += 1;
        }
        next.side_to_move = mover.opposite();
        next
    }

    /// Returns the successor position, rejecting moves outside
    /// [`legal_moves`](super::legal_moves).
    pub fn apply_move(&self, m: Move) -> Result<Position, IllegalMoveError> {
        if self.is_legal(m) {
            Ok(self.apply_unchecked(m))
        } else {
            Err(IllegalMoveError { mv: m, fen: crate::notation::render_fen(self) })
        }
    }

    pub fn is_legal(&self, m: Move) -> bool {
        super::movegen::legal_moves(self).contains(&m)
    }

    pub fn is_capture(&self, m: Move) -> bool {
        self.board[m.to.index()].is_some()
            || (self.board[m.from.index()].map(|p| p.role) == Some(Role::Pawn)
                && m.from.file() != m.to.file())
    }
}

impl fmt::Debug for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Position({})", crate::notation::render_fen(self))
    }
}

impl Default for Position {
    fn default() -> Self {
        Position::startpos()
    }
}

pub(crate) fn castle_rook_corner(color: Color, king_side: bool) -> Square {
    corner(color, king_side)
}

pub(crate) fn castle_king_home(color: Color) -> Square {
    king_home(color)
}
