//! Shared test support: an independent 0x88 move generator used as a perft
//! oracle, engine discovery and fake UCI engines.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fenbench::engine::{EngineConfig, ENGINE_ENV};

pub mod oracle {
    //! Copy-make 0x88 board sharing no code with the crate under test.

    const N: i32 = 16;
    const KNIGHT: [i32; 8] = [33, 31, 18, 14, -33, -31, -18, -14];
    const KING: [i32; 8] = [1, -1, 16, -16, 15, 17, -15, -17];
    const DIAG: [i32; 4] = [15, 17, -15, -17];
    const ORTHO: [i32; 4] = [1, -1, 16, -16];

    #[derive(Clone)]
    pub struct Board {
        sq: [i8; 128],
        white: bool,
        castle: u8,
        ep: i32,
    }

    fn on(s: i32) -> bool {
        (0..128).contains(&s) && s & 0x88 == 0
    }

    pub fn parse(fen: &str) -> Board {
        let f: Vec<&str> = fen.split_whitespace().collect();
        let mut sq = [0i8; 128];
        for (r, row) in f[0].split('/').enumerate() {
            let mut file = 0;
            for c in row.chars() {
                if let Some(d) = c.to_digit(10) {
                    file += d as i32;
                    continue;
                }
                let v = match c.to_ascii_lowercase() {
                    'p' => 1,
                    'n' => 2,
                    'b' => 3,
                    'r' => 4,
                    'q' => 5,
                    'k' => 6,
                    _ => panic!("bad piece {c}"),
                };
                sq[((7 - r as i32) * N + file) as usize] = if c.is_ascii_uppercase() { v } else { -v };
                file += 1;
            }
        }
        let mut castle = 0;
        for c in f[2].chars() {
            castle |= match c {
                'K' => 1,
                'Q' => 2,
                'k' => 4,
                'q' => 8,
                _ => 0,
            };
        }
        let ep = if f[3] == "-" {
            -1
        } else {
            let b = f[3].as_bytes();
            (b[1] - b'1') as i32 * N + (b[0] - b'a') as i32
        };
        Board { sq, white: f[1] == "w", castle, ep }
    }

    impl Board {
        fn at(&self, s: i32) -> i8 {
            self.sq[s as usize]
        }

        fn attacked(&self, s: i32, by_white: bool) -> bool {
            let sign: i8 = if by_white { 1 } else { -1 };
            let pawn_from = if by_white { [-15, -17] } else { [15, 17] };
            for d in pawn_from {
                let t = s + d;
                if on(t) && self.at(t) == sign {
                    return true;
                }
            }
            for d in KNIGHT {
                let t = s + d;
                if on(t) && self.at(t) == 2 * sign {
                    return true;
                }
            }
            for d in KING {
                let t = s + d;
                if on(t) && self.at(t) == 6 * sign {
                    return true;
                }
            }
            for (dirs, a, b) in [(DIAG, 3, 5), (ORTHO, 4, 5)] {
                for d in dirs {
                    let mut t = s + d;
                    while on(t) {
                        let p = self.at(t);
                        if p != 0 {
                            if p == a * sign || p == b * sign {
                                return true;
                            }
                            break;
                        }
                        t += d;
                    }
                }
            }
            false
        }

        fn king(&self, white: bool) -> i32 {
            let k = if white { 6 } else { -6 };
            (0..128).find(|&s| on(s) && self.at(s) == k).expect("king present")
        }

        fn make(&self, from: i32, to: i32, promo: i8) -> Option<Board> {
            let mut b = self.clone();
            let p = b.at(from);
            let pawn = p.abs() == 1;
            if pawn && to == self.ep {
                let victim = if self.white { to - N } else { to + N };
                b.sq[victim as usize] = 0;
            }
            if p.abs() == 6 && (to - from).abs() == 2 {
                let (rf, rt) = if to > from { (from + 3, from + 1) } else { (from - 4, from - 1) };
                b.sq[rt as usize] = b.sq[rf as usize];
                b.sq[rf as usize] = 0;
            }
            b.sq[to as usize] = if promo != 0 { promo * p.signum() } else { p };
            b.sq[from as usize] = 0;
            b.ep = if pawn && (to - from).abs() == 32 { (from + to) / 2 } else { -1 };
            for (s, mask) in [(0, 2u8), (7, 1), (4, 3), (112, 8), (119, 4), (116, 12)] {
                if from == s || to == s {
                    b.castle &= !mask;
                }
            }
            b.white = !self.white;
            (!b.attacked(b.king(self.white), b.white)).then_some(b)
        }

        pub fn children(&self) -> Vec<Board> {
            let mut out = Vec::new();
            let sign: i8 = if self.white { 1 } else { -1 };
            let mine = |p: i8| p * sign > 0;
            let theirs = |p: i8| p * sign < 0;
            for s in (0..128).filter(|&s| on(s)) {
                let p = self.at(s);
                if !mine(p) {
                    continue;
                }
                let mut push = |to: i32, promo: i8| {
                    if let Some(b) = self.make(s, to, promo) {
                        out.push(b);
                    }
                };
                match p.abs() {
                    1 => {
                        let fwd = if self.white { N } else { -N };
                        let last = if self.white { 7 } else { 0 };
                        let home = if self.white { 1 } else { 6 };
                        let mut pawn_to = |to: i32| {
                            if to / N == last {
                                for pr in [5, 4, 3, 2] {
                                    push(to, pr);
                                }
                            } else {
                                push(to, 0);
                            }
                        };
                        let one = s + fwd;
                        if on(one) && self.at(one) == 0 {
                            pawn_to(one);
                            let two = one + fwd;
                            if s / N == home && self.at(two) == 0 {
                                pawn_to(two);
                            }
                        }
                        for d in [fwd - 1, fwd + 1] {
                            let t = s + d;
                            if on(t) && (theirs(self.at(t)) || t == self.ep) {
                                pawn_to(t);
                            }
                        }
                    }
                    2 | 6 => {
                        let steps = if p.abs() == 2 { KNIGHT } else { KING };
                        for d in steps {
                            let t = s + d;
                            if on(t) && !mine(self.at(t)) {
                                push(t, 0);
                            }
                        }
                    }
                    k => {
                        let dirs: Vec<i32> = match k {
                            3 => DIAG.to_vec(),
                            4 => ORTHO.to_vec(),
                            _ => DIAG.iter().chain(ORTHO.iter()).copied().collect(),
                        };
                        for d in dirs {
                            let mut t = s + d;
                            while on(t) && !mine(self.at(t)) {
                                push(t, 0);
                                if self.at(t) != 0 {
                                    break;
                                }
                                t += d;
                            }
                        }
                    }
                }
            }
            // Castling: rights, empty path, king not in check, transit and
            // destination not attacked (destination via `make`).
            let (base, ks, qs) = if self.white { (0, 1u8, 2u8) } else { (112, 4u8, 8u8) };
            let enemy = !self.white;
            if self.at(base + 4) == 6 * sign && !self.attacked(base + 4, enemy) {
                if self.castle & ks != 0
                    && self.at(base + 7) == 4 * sign
                    && self.at(base + 5) == 0
                    && self.at(base + 6) == 0
                    && !self.attacked(base + 5, enemy)
                {
                    if let Some(b) = self.make(base + 4, base + 6, 0) {
                        out.push(b);
                    }
                }
                if self.castle & qs != 0
                    && self.at(base) == 4 * sign
                    && (1..4).all(|i| self.at(base + i) == 0)
                    && !self.attacked(base + 3, enemy)
                {
                    if let Some(b) = self.make(base + 4, base + 2, 0) {
                        out.push(b);
                    }
                }
            }
            out
        }
    }

    pub fn perft(b: &Board, depth: u32) -> u64 {
        if depth == 0 {
            return 1;
        }
        let kids = b.children();
        if depth == 1 {
            return kids.len() as u64;
        }
        kids.iter().map(|k| perft(k, depth - 1)).sum()
    }
}

/// The engine named by `FENBENCH_ENGINE`, else `stockfish` on the PATH.
pub fn find_engine() -> Option<PathBuf> {
    let named = std::env::var(ENGINE_ENV).unwrap_or_else(|_| "stockfish".into());
    let p = Path::new(&named);
    if p.components().count() > 1 {
        return p.is_file().then(|| p.to_path_buf());
    }
    std::env::var_os("PATH")
        .into_iter()
        .flat_map(|paths| std::env::split_paths(&paths).collect::<Vec<_>>())
        .map(|d| d.join(&named))
        .find(|c| c.is_file())
}

pub fn engine_config() -> Option<EngineConfig> {
    find_engine().map(EngineConfig::new)
}

/// Writes an executable shell script standing in for a UCI engine.
pub fn fake_engine(dir: &Path, name: &str, body: &str) -> PathBuf {
    use std::os::unix::fs::PermissionsExt;
    let path = dir.join(name);
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path
}

/// A scripted engine: answers the handshake, then replies to every `go`
/// with `reply` (a full line such as `bestmove e2e4`).
pub fn scripted_engine(dir: &Path, name: &str, reply: &str) -> PathBuf {
    let body = format!(
        r#"while read line; do
  case "$line" in
    uci) echo "id name Scripted"; echo "option name Hash type spin default 16 min 1 max 64"; echo "option name Threads type spin default 1 min 1 max 8"; echo "option name Skill Level type spin default 20 min 0 max 20"; echo uciok ;;
    isready) echo readyok ;;
    go*) echo "info depth 1 score cp 12 pv e2e4"; echo "{reply}" ;;
    quit) exit 0 ;;
  esac
done"#
    );
    fake_engine(dir, name, &body)
}

/// Positions from seeded random-legal playouts, labeled with a random legal
/// move. Cheap stand-ins for engine-labeled records.
pub fn random_records(n_games: usize, seed: u64) -> Vec<fenbench::dataset::DatasetRecord> {
    use fenbench::dataset::{DatasetRecord, RoundClass, Source};
    use fenbench::exec::{derive_seed, rng};
    use fenbench::notation::{position_key, render_fen};
    use fenbench::rules::{legal_moves, Position};
    use rand::Rng;

    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for g in 0..n_games {
        let mut r = rng(derive_seed(seed, g as u64));
        let mut pos = Position::startpos();
        for _ in 0..300 {
            let moves = legal_moves(&pos);
            if moves.is_empty() {
                break;
            }
            let mv = moves[r.gen_range(0..moves.len())];
            if seen.insert(position_key(&pos)) {
                out.push(DatasetRecord {
                    fen: render_fen(&pos),
                    best_move: mv,
                    search_depth: 1,
                    movetime_ms: None,
                    engine_eval: None,
                    round_class: RoundClass::Short,
                    source: Source::SelfPlay,
                });
            }
            pos = pos.apply_move(mv).unwrap();
        }
    }
    out
}
