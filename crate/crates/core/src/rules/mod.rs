//! Board representation, legal move generation, move application and
//! game-termination adjudication.
//!
//! Positions are immutable values: [`Position::apply_move`] returns a new
//! position and never mutates its receiver.

mod movegen;
mod perft;
mod position;
mod status;
mod types;

pub use movegen::{has_legal_move, legal_moves};
pub use perft::{divide, perft, perft_with};
pub use position::{BoardKey, IllegalMoveError, Position, PositionError};
pub use status::{insufficient_material, status, GameStatus, StatusTag};
pub use types::{Castling, Color, Move, Piece, Role, Square};

/// Free-function form of [`Position::apply_move`].
pub fn apply_move(pos: &Position, m: Move) -> Result<Position, IllegalMoveError> {
    pos.apply_move(m)
}
