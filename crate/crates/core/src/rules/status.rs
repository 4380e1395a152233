use serde::{Deserialize, Serialize};

use super::movegen::has_legal_move;
use super::position::Position;
use super::types::{Color, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusTag {
    Ongoing,
    Checkmate,
    Stalemate,
    DrawFiftyMove,
    DrawThreefold,
    DrawInsufficientMaterial,
    DrawMoveCap,
}

/// Adjudicated state of a game. `winner` is set only for checkmate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GameStatus {
    pub tag: StatusTag,
    pub winner: Option<Color>,
}

impl GameStatus {
    pub const ONGOING: GameStatus = GameStatus { tag: StatusTag::Ongoing, winner: None };

    pub fn draw(tag: StatusTag) -> GameStatus {
        GameStatus { tag, winner: None }
    }

    pub fn is_over(&self) -> bool {
        self.tag != StatusTag::Ongoing
    }
}

/// Adjudicates `pos`. `history` holds every position of the game in order,
/// ending with `pos`; it is only consulted for threefold repetition.
///
/// Precedence: mate and stalemate, then dead material, then the
/// fifty-move rule, then repetition.
pub fn status(pos: &Position, history: &[Position]) -> GameStatus {
    if !has_legal_move(pos) {
        return if pos.in_check() {
            GameStatus { tag: StatusTag::Checkmate, winner: Some(pos.side_to_move().opposite()) }
        } else {
            GameStatus::draw(StatusTag::Stalemate)
        };
    }
    if insufficient_material(pos) {
        return GameStatus::draw(StatusTag::DrawInsufficientMaterial);
    }
    if pos.halfmove_clock() >= 100 {
        return GameStatus::draw(StatusTag::DrawFiftyMove);
    }
    let key = pos.key();
    if history.iter().filter(|p| p.key() == key).count() >= 3 {
        return GameStatus::draw(StatusTag::DrawThreefold);
    }
    GameStatus::ONGOING
}

/// K vs K, K+minor vs K, and positions where every remaining minor piece is
/// a bishop on one square color (covers K+B vs K+B with same-colored bishops).
pub fn insufficient_material(pos: &Position) -> bool {
    let mut minors = 0;
    let mut knights = 0;
    let mut bishop_colors = [false, false];
    for (sq, piece) in pos.pieces() {
        match piece.role {
            Role::King => {}
            Role::Pawn | Role::Rook | Role::Queen => return false,
            Role::Knight => {
                minors += 1;
                knights += 1;
            }
            Role::Bishop => {
                minors += 1;
                bishop_colors[sq.is_light() as usize] = true;
            }
        }
    }
    minors <= 1 || (knights == 0 && !(bishop_colors[0] && bishop_colors[1]))
}
