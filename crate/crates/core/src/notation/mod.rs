//! FEN, SAN, UCI move text and PGN.
//!
//! Output is always ASCII and canonical: strict UCI for moves, minimal
//! SAN in PGN movetext, maximal empty-square compression in FEN. Input is
//! lenient where real-world text demands it (piece-prefixed UCI, castling
//! words, byte-order marks, curly or TeX quotes around tag values).

mod fen;
mod movetext;
mod pgn;

pub use fen::{parse_fen, position_key, render_fen, FenError, FenField, START_FEN};
pub use movetext::{parse_move_text, parse_uci_shape, render_san, MoveTextError};
pub use pgn::{
    game_fens, parse_pgn, render_pgn, render_pgn_many, GameRecord, GameResult, PgnError,
    PgnReader, ReplayError,
};
