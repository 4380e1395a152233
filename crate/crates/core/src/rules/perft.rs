use crate::exec::{self, Exec};

use super::movegen::legal_moves;
use super::position::Position;

/// Leaf count of the legal-move tree at exactly `depth` plies.
///
/// `depth == 0` counts the root itself, which keeps the recursion identity
/// `perft(p, d) = sum(perft(child, d - 1))` true at every depth.
pub fn perft(pos: &Position, depth: u32) -> u64 {
    match depth {
        0 => 1,
        1 => legal_moves(pos).len() as u64,
        _ => legal_moves(pos)
            .into_iter()
            .map(|m| perft(&pos.apply_unchecked(m), depth - 1))
            .sum(),
    }
}

/// [`perft`] with the root moves split across workers.
pub fn perft_with(exec: Exec, pos: &Position, depth: u32) -> u64 {
    if depth <= 1 {
        return perft(pos, depth);
    }
    let moves = legal_moves(pos);
    exec::map_indexed(exec, moves.len(), |i| perft(&pos.apply_unchecked(moves[i]), depth - 1))
        .into_iter()
        .sum()
}

/// Per-root-move counts, as printed by `go perft` in UCI engines.
pub fn divide(pos: &Position, depth: u32) -> Vec<(crate::rules::Move, u64)> {
    assert!(depth >= 1, "divide needs depth >= 1");
    legal_moves(pos)
        .into_iter()
        .map(|m| (m, perft(&pos.apply_unchecked(m), depth - 1)))
        .collect()
}
