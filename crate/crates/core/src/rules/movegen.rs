use super::position::{
    castle_king_home, castle_rook_corner, Position, BISHOP_DIRS, KING_STEPS, KNIGHT_STEPS,
    ROOK_DIRS,
};
use super::types::{Castling, Color, Move, Role, Square};

/// Every legal move in `pos`, sorted by from-square, to-square, then
/// promotion kind.
pub fn legal_moves(pos: &Position) -> Vec<Move> {
    let mover = pos.side_to_move();
    let mut moves = Vec::with_capacity(48);
    pseudo_legal(pos, &mut moves);
    moves.retain(|&m| {
        let next = pos.apply_unchecked(m);
        !next.is_attacked(next.king(mover), mover.opposite())
    });
    moves.sort_unstable();
    moves
}

/// Whether the side to move has at least one legal move.
pub fn has_legal_move(pos: &Position) -> bool {
    let mover = pos.side_to_move();
    let mut moves = Vec::with_capacity(48);
    pseudo_legal(pos, &mut moves);
    moves.into_iter().any(|m| {
        let next = pos.apply_unchecked(m);
        !next.is_attacked(next.king(mover), mover.opposite())
    })
}

fn pseudo_legal(pos: &Position, out: &mut Vec<Move>) {
    let us = pos.side_to_move();
    for (from, piece) in pos.pieces() {
        if piece.color != us {
            continue;
        }
        match piece.role {
            Role::Pawn => pawn_moves(pos, from, us, out),
            Role::Knight => step_moves(pos, from, us, &KNIGHT_STEPS, out),
            Role::King => {
                step_moves(pos, from, us, &KING_STEPS, out);
                castling_moves(pos, us, out);
            }
            Role::Bishop => slide_moves(pos, from, us, &BISHOP_DIRS, out),
            Role::Rook => slide_moves(pos, from, us, &ROOK_DIRS, out),
            Role::Queen => {
                slide_moves(pos, from, us, &ROOK_DIRS, out);
                slide_moves(pos, from, us, &BISHOP_DIRS, out);
            }
        }
    }
}

fn push_pawn(from: Square, to: Square, out: &mut Vec<Move>) {
    if to.rank() == 0 || to.rank() == 7 {
        out.extend(Role::PROMOTIONS.iter().map(|&r| Move::with_promotion(from, to, r)));
    } else {
        out.push(Move::new(from, to));
    }
}

fn pawn_moves(pos: &Position, from: Square, us: Color, out: &mut Vec<Move>) {
    let fwd = us.forward();
    if let Some(one) = from.offset(0, fwd) {
        if pos.piece_at(one).is_none() {
            push_pawn(from, one, out);
            let start_rank = if us == Color::White { 1 } else { 6 };
            if from.rank() == start_rank {
                let two = one.offset(0, fwd).expect("double push stays on board");
                if pos.piece_at(two).is_none() {
                    out.push(Move::new(from, two));
                }
            }
        }
    }
    for df in [-1, 1] {
        if let Some(to) = from.offset(df, fwd) {
            let enemy = pos.piece_at(to).is_some_and(|p| p.color != us);
            if enemy || Some(to) == pos.en_passant() {
                push_pawn(from, to, out);
            }
        }
    }
}

fn step_moves(pos: &Position, from: Square, us: Color, steps: &[(i8, i8)], out: &mut Vec<Move>) {
    for &(df, dr) in steps {
        if let Some(to) = from.offset(df, dr) {
            if pos.piece_at(to).is_none_or(|p| p.color != us) {
                out.push(Move::new(from, to));
            }
        }
    }
}

fn slide_moves(pos: &Position, from: Square, us: Color, dirs: &[(i8, i8)], out: &mut Vec<Move>) {
    for &(df, dr) in dirs {
        let mut cur = from;
        while let Some(to) = cur.offset(df, dr) {
            match pos.piece_at(to) {
                None => out.push(Move::new(from, to)),
                Some(p) => {
                    if p.color != us {
                        out.push(Move::new(from, to));
                    }
                    break;
                }
            }
            cur = to;
        }
    }
}

fn castling_moves(pos: &Position, us: Color, out: &mut Vec<Move>) {
    let home = castle_king_home(us);
    if pos.king(us) != home {
        return;
    }
    let them = us.opposite();
    for king_side in [true, false] {
        let right = if king_side { Castling::king_side(us) } else { Castling::queen_side(us) };
        if !pos.castling().contains(right) {
            continue;
        }
        let rook = castle_rook_corner(us, king_side);
        let dir: i8 = if king_side { 1 } else { -1 };
        // Every square strictly between king and rook must be empty.
        let mut cur = home;
        let mut clear = true;
        while let Some(next) = cur.offset(dir, 0) {
            if next == rook {
                break;
            }
            if pos.piece_at(next).is_some() {
                clear = false;
                break;
            }
            cur = next;
        }
        if !clear {
            continue;
        }
        let pass = home.offset(dir, 0).expect("castling path");
        let dest = home.offset(2 * dir, 0).expect("castling destination");
        if pos.is_attacked(home, them) || pos.is_attacked(pass, them) {
            continue;
        }
        // The destination square is covered by the generic king-safety filter.
        out.push(Move::new(home, dest));
    }
}
