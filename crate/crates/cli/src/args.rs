use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fenbench::engine::ENGINE_ENV;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "fenbench", version, about = "Chess move-proposal evaluation harness", arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Output paths are not part of the
/// config echo.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Common {
    /// Master seed; every random choice derives from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// UCI engine executable.
    #[arg(long, env = ENGINE_ENV, default_value = "stockfish")]
    pub engine: String,
    /// Engine search threads; anything but 1 is not reproducible.
    #[arg(long, default_value_t = 1)]
    pub threads: u32,
    /// Worker count for games, labeling and scoring.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Write the JSON report here.
    #[serde(skip)]
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count leaf nodes of the legal move tree.
    Perft(PerftArgs),
    /// Re-render PGN games or apply moves to a FEN.
    #[command(subcommand)]
    Convert(ConvertArgs),
    /// Harvest positions and label them with the engine's best move.
    BuildDataset(BuildDatasetArgs),
    /// Split a dataset into train and eval sets by fullmove bucket.
    Split(SplitArgs),
    /// Legal and best move accuracy of a policy on a dataset.
    Accuracy(AccuracyArgs),
    /// Play a match between two policies.
    Arena(ArenaArgs),
    /// Play a policy against the engine at several skill levels.
    Ladder(LadderArgs),
    /// Rate a sequence of game results.
    Rate(RateArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PerftArgs {
    /// A FEN, or `startpos`.
    pub fen: String,
    pub depth: u32,
    /// Print per-move subtotals first.
    #[arg(long)]
    pub divide: bool,
    /// Cross-check against the engine's `go perft`.
    #[arg(long)]
    pub engine_check: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PgnOutput {
    Pgn,
    Fen,
    Uci,
    San,
}

#[derive(Debug, Clone, Subcommand)]
pub enum ConvertArgs {
    /// Read a PGN file and print it in another form.
    Pgn {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "pgn")]
        to: PgnOutput,
        #[command(flatten)]
        common: Common,
    },
    /// Apply moves (SAN or UCI) to a FEN and print the result.
    Fen {
        /// A FEN, or `startpos`.
        fen: String,
        moves: Vec<String>,
        /// Print the moves in SAN instead of the final FEN.
        #[arg(long)]
        san: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassArg {
    Short,
    Long,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[group(id = "source", required = true, multiple = false, args = ["pgn", "self_play"])]
pub struct BuildDatasetArgs {
    /// Directory of `.pgn` files to harvest.
    #[arg(long)]
    pub pgn: Option<PathBuf>,
    /// Number of engine self-play games to harvest late positions from.
    #[arg(long)]
    pub self_play: Option<usize>,
    #[arg(long, value_enum)]
    pub class: ClassArg,
    #[serde(skip)]
    #[arg(long)]
    pub out: PathBuf,
    /// `class` (depth drawn from the class range), `eval` (depth 1, 100 ms)
    /// or `fixed:D`.
    #[arg(long, default_value = "class")]
    pub depth_rule: String,
    /// Self-play keeps positions past this fullmove number.
    #[arg(long, default_value_t = 40)]
    pub fullmove_threshold: u32,
    /// Seeded random plies opening each self-play game.
    #[arg(long, default_value_t = 4)]
    pub random_plies: u32,
    /// Self-play search depth; when absent, `--play-movetime` applies.
    #[arg(long)]
    pub play_depth: Option<u32>,
    #[arg(long, default_value_t = 100)]
    pub play_movetime: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SplitArgs {
    /// Dataset file to split.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub eval_size: usize,
    /// Buckets as `LO-HI:FRACTION,...`; `HI` may be empty.
    #[arg(long, default_value = "10-20:0.3,20-40:0.5,0-10:0.1,40-:0.1")]
    pub buckets: String,
    #[serde(skip)]
    #[arg(long)]
    pub train: PathBuf,
    #[serde(skip)]
    #[arg(long)]
    pub eval: PathBuf,
    /// Split manifest (key lists and bucket counts) as JSON.
    #[serde(skip)]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AccuracyArgs {
    /// Policy spec, e.g. `random` or `engine:skill=20,depth=1`.
    #[arg(long)]
    pub policy: String,
    /// Dataset file whose best moves are the references.
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long, default_value = "10-20:0.3,20-40:0.5,0-10:0.1,40-:0.1")]
    pub buckets: String,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolArg {
    Elo,
    Lm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExhaustionArg {
    ForfeitLoss,
    RandomLegalContinue,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ArenaArgs {
    /// First contestant; plays white in even-indexed games.
    #[arg(long, required_unless_present = "config")]
    pub white: Option<String>,
    /// Second contestant.
    #[arg(long, required_unless_present = "config")]
    pub black: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub games: usize,
    #[arg(long, value_enum, default_value = "elo")]
    pub protocol: ProtocolArg,
    /// What an exhausted retry budget means under the elo protocol.
    #[arg(long, value_enum, default_value = "forfeit-loss")]
    pub exhaustion: ExhaustionArg,
    #[arg(long, default_value_t = 512)]
    pub move_cap: u32,
    #[arg(long, default_value_t = 0.5)]
    pub draw_weight: f64,
    /// Search time for the lm protocol's fallback engine.
    #[arg(long, default_value_t = 100)]
    pub fallback_movetime: u64,
    #[arg(long, default_value = "fenbench match")]
    pub event: String,
    /// Write all games here.
    #[serde(skip)]
    #[arg(long)]
    pub pgn: Option<PathBuf>,
    /// Replay the run echoed in this report; other run flags are ignored.
    #[serde(skip)]
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LadderArgs {
    #[arg(long)]
    pub policy: String,
    /// Engine skill levels, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 0.., default_value = "0,1,2")]
    pub skills: Vec<u8>,
    #[arg(long, default_value_t = 100)]
    pub games: usize,
    #[arg(long, value_enum, default_value = "elo")]
    pub protocol: ProtocolArg,
    /// Engine opponents' search time.
    #[arg(long, default_value_t = 100)]
    pub movetime: u64,
    /// Engine opponents' search depth, in addition to the time limit.
    #[arg(long)]
    pub depth: Option<u32>,
    #[arg(long, default_value = "20:10@2000")]
    pub k_schedule: String,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.5)]
    pub draw_weight: f64,
    #[arg(long, default_value_t = 512)]
    pub move_cap: u32,
    /// Write one PGN file per rung into this directory.
    #[serde(skip)]
    #[arg(long)]
    pub pgn_dir: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RateArgs {
    /// Lines of `RESULT OPPONENT_ELO` (RESULT 1, 0.5 or 0; `#` comments),
    /// or a `.pgn` file together with `--player` and an opponent rating.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, default_value = "20:10@2000")]
    pub k_schedule: String,
    /// Starting rating; defaults to the first opponent's rating.
    #[arg(long)]
    pub initial_elo: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    /// Player whose results are rated (PGN input).
    #[arg(long)]
    pub player: Option<String>,
    /// Opponent rating for PGN input.
    #[arg(long, conflicts_with = "skill")]
    pub opponent_elo: Option<f64>,
    /// Opponent engine skill level for PGN input, converted to a rating.
    #[arg(long)]
    pub skill: Option<u8>,
    #[command(flatten)]
    pub common: Common,
}
