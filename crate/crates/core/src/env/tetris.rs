//! Placement Tetris with a modified line-clear score.
//!
//! An action places the current piece at a (rotation, column) and drops it
//! straight down. Clearing 1, 2, 3 or 4 lines at once pays the configured
//! score (1, 4, 8, 16 by default), so the controller trades frequent single
//! clears against rarer, more profitable multi-line clears. An episode ends
//! when no placement fits or after the step cap.
//!
//! Placements that would overflow the board are masked out of the softmax.
//! Pieces arrive i.i.d. uniform over the configured set.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParamVector, ScoredSample, StochasticModel};

/// Widest supported board (rows are `u16` bitmasks).
pub const MAX_WIDTH: usize = 16;
/// Tallest supported board.
pub const MAX_HEIGHT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PieceKind {
    I,
    O,
    T,
    S,
    Z,
    J,
    L,
}

impl PieceKind {
    pub const ALL: [PieceKind; 7] = [
        PieceKind::I,
        PieceKind::O,
        PieceKind::T,
        PieceKind::S,
        PieceKind::Z,
        PieceKind::J,
        PieceKind::L,
    ];

    /// Cells `(x, y)` of the spawn orientation, `y` pointing up.
    fn cells(self) -> [(i32, i32); 4] {
        match self {
            PieceKind::I => [(0, 0), (1, 0), (2, 0), (3, 0)],
            PieceKind::O => [(0, 0), (1, 0), (0, 1), (1, 1)],
            PieceKind::T => [(0, 0), (1, 0), (2, 0), (1, 1)],
            PieceKind::S => [(0, 0), (1, 0), (1, 1), (2, 1)],
            PieceKind::Z => [(1, 0), (2, 0), (0, 1), (1, 1)],
            PieceKind::J => [(0, 0), (1, 0), (2, 0), (0, 1)],
            PieceKind::L => [(0, 0), (1, 0), (2, 0), (2, 1)],
        }
    }
}

/// One orientation of a piece as row bitmasks (bit `x` = column offset `x`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Orientation {
    pub rows: [u16; 4],
    pub width: usize,
    pub height: usize,
    /// Lowest occupied row offset in each column of the orientation.
    pub bottom: [usize; 4],
}

impl Orientation {
    fn from_cells(cells: &[(i32, i32); 4]) -> Self {
        let min_x = cells.iter().map(|c| c.0).min().unwrap();
        let min_y = cells.iter().map(|c| c.1).min().unwrap();
        let mut rows = [0u16; 4];
        let mut width = 0;
        let mut height = 0;
        let mut bottom = [usize::MAX; 4];
        for &(x, y) in cells {
            let (x, y) = ((x - min_x) as usize, (y - min_y) as usize);
            rows[y] |= 1 << x;
            width = width.max(x + 1);
            height = height.max(y + 1);
            bottom[x] = bottom[x].min(y);
        }
        Self {
            rows,
            width,
            height,
            bottom,
        }
    }
}

/// Distinct orientations of a piece, in a fixed order.
pub fn orientations(kind: PieceKind) -> Vec<Orientation> {
    let mut cells = kind.cells();
    let mut out: Vec<Orientation> = Vec::with_capacity(4);
    for _ in 0..4 {
        let o = Orientation::from_cells(&cells);
        if !out.contains(&o) {
            out.push(o);
        }
        for c in cells.iter_mut() {
            *c = (c.1, -c.0);
        }
    }
    out
}

/// The board: row 0 is the bottom, bit `c` of a row is column `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Board {
    width: usize,
    height: usize,
    rows: [u16; MAX_HEIGHT],
}

impl Board {
    pub fn empty(width: usize, height: usize) -> Self {
        assert!(width <= MAX_WIDTH && height <= MAX_HEIGHT);
        Self {
            width,
            height,
            rows: [0; MAX_HEIGHT],
        }
    }

    /// Builds a board from text rows listed top to bottom; `#` is filled.
    pub fn from_rows(width: usize, height: usize, top_down: &[&str]) -> Result<Self> {
        if width > MAX_WIDTH || height > MAX_HEIGHT || top_down.len() > height {
            return Err(Error::invalid("board", "too large"));
        }
        let mut board = Self::empty(width, height);
        for (i, line) in top_down.iter().enumerate() {
            if line.chars().count() != width {
                return Err(Error::invalid("board", format!("row {i} has the wrong width")));
            }
            let r = top_down.len() - 1 - i;
            for (c, ch) in line.chars().enumerate() {
                if ch == '#' {
                    board.rows[r] |= 1 << c;
                }
            }
        }
        Ok(board)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn full_mask(&self) -> u16 {
        ((1u32 << self.width) - 1) as u16
    }

    pub fn row(&self, r: usize) -> u16 {
        self.rows[r]
    }

    pub fn filled(&self, col: usize, row: usize) -> bool {
        self.rows[row] >> col & 1 == 1
    }

    pub fn column_heights(&self) -> [usize; MAX_WIDTH] {
        let mut h = [0; MAX_WIDTH];
        for r in 0..self.height {
            let mut bits = self.rows[r];
            while bits != 0 {
                let c = bits.trailing_zeros() as usize;
                h[c] = r + 1;
                bits &= bits - 1;
            }
        }
        h
    }

    /// Empty cells with a filled cell somewhere above them in the column.
    pub fn holes(&self) -> usize {
        let mut covered = 0u16;
        let mut holes = 0;
        for r in (0..self.height).rev() {
            holes += (covered & !self.rows[r]).count_ones() as usize;
            covered |= self.rows[r];
        }
        holes
    }

    /// Open cells (nothing filled above them) whose left and right
    /// neighbours are both filled; the side walls count as filled.
    pub fn well_cells(&self) -> usize {
        let full = self.full_mask();
        let left_wall = 1u16;
        let right_wall = 1u16 << (self.width - 1);
        let mut covered = 0u16;
        let mut wells = 0;
        for r in (0..self.height).rev() {
            let row = self.rows[r];
            let open = !covered & !row & full;
            let left = (row << 1) | left_wall;
            let right = (row >> 1) | right_wall;
            wells += (open & left & right).count_ones() as usize;
            covered |= row;
        }
        wells
    }

    pub fn aggregate_height(&self) -> usize {
        self.column_heights()[..self.width].iter().sum()
    }

    pub fn max_height(&self) -> usize {
        self.column_heights()[..self.width].iter().copied().max().unwrap_or(0)
    }

    pub fn has_full_row(&self) -> bool {
        let full = self.full_mask();
        self.rows[..self.height].iter().any(|&r| r == full)
    }

    /// Drops `o` with its left edge at `col`. Returns `None` if it does not
    /// fit horizontally or would stick out of the top.
    pub fn drop_piece(&self, o: &Orientation, col: usize) -> Option<Placed> {
        self.drop_with_heights(o, col, &self.column_heights())
    }

    fn drop_with_heights(&self, o: &Orientation, col: usize, heights: &[usize; MAX_WIDTH]) -> Option<Placed> {
        if col + o.width > self.width {
            return None;
        }
        let mut y = 0;
        for dx in 0..o.width {
            y = y.max(heights[col + dx].saturating_sub(o.bottom[dx]));
        }
        if y + o.height > self.height {
            return None;
        }
        let mut board = *self;
        for dy in 0..o.height {
            board.rows[y + dy] |= o.rows[dy] << col;
        }
        let full = self.full_mask();
        let mut cleared = 0;
        let mut write = 0;
        for r in 0..self.height {
            if board.rows[r] == full {
                cleared += 1;
            } else {
                board.rows[write] = board.rows[r];
                write += 1;
            }
        }
        for r in write..self.height {
            board.rows[r] = 0;
        }
        Some(Placed {
            board,
            landing_row: y,
            piece_height: o.height,
            lines_cleared: cleared,
        })
    }
}

/// Result of dropping a piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placed {
    /// Board after full lines were removed.
    pub board: Board,
    pub landing_row: usize,
    pub piece_height: usize,
    pub lines_cleared: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TetrisFeature {
    /// Height of the piece centre where it landed.
    LandingHeight,
    RowsCleared,
    Holes,
    /// Sum of column heights.
    ColumnHeights,
    /// Number of well cells.
    BoardWells,
    Bias,
}

impl TetrisFeature {
    pub const REQUIRED: [TetrisFeature; 5] = [
        TetrisFeature::LandingHeight,
        TetrisFeature::RowsCleared,
        TetrisFeature::Holes,
        TetrisFeature::ColumnHeights,
        TetrisFeature::BoardWells,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TetrisFeature::LandingHeight => "landing_height",
            TetrisFeature::RowsCleared => "rows_cleared",
            TetrisFeature::Holes => "holes",
            TetrisFeature::ColumnHeights => "column_heights",
            TetrisFeature::BoardWells => "board_wells",
            TetrisFeature::Bias => "bias",
        }
    }

    pub fn value(self, placed: &Placed) -> f64 {
        match self {
            TetrisFeature::LandingHeight => {
                placed.landing_row as f64 + (placed.piece_height as f64 - 1.0) / 2.0
            }
            TetrisFeature::RowsCleared => placed.lines_cleared as f64,
            TetrisFeature::Holes => placed.board.holes() as f64,
            TetrisFeature::ColumnHeights => placed.board.aggregate_height() as f64,
            TetrisFeature::BoardWells => placed.board.well_cells() as f64,
            TetrisFeature::Bias => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TetrisConfig {
    pub width: usize,
    pub height: usize,
    pub pieces: Vec<PieceKind>,
    /// Score for clearing 1, 2, 3 and 4 lines with one placement.
    pub line_scores: [f64; 4],
    pub max_steps: usize,
    pub features: Vec<TetrisFeature>,
    pub smoothing: f64,
}

impl Default for TetrisConfig {
    /// 6×12 board, pieces I, O, L, S, 300-step cap, all features.
    fn default() -> Self {
        Self {
            width: 6,
            height: 12,
            pieces: vec![PieceKind::I, PieceKind::O, PieceKind::L, PieceKind::S],
            line_scores: [1.0, 4.0, 8.0, 16.0],
            max_steps: 300,
            features: vec![
                TetrisFeature::LandingHeight,
                TetrisFeature::RowsCleared,
                TetrisFeature::Holes,
                TetrisFeature::ColumnHeights,
                TetrisFeature::BoardWells,
                TetrisFeature::Bias,
            ],
            smoothing: 0.0,
        }
    }
}

impl TetrisConfig {
    /// The full-size 10×20 game with all seven pieces and a 1000-step cap.
    pub fn standard() -> Self {
        Self {
            width: 10,
            height: 20,
            pieces: PieceKind::ALL.to_vec(),
            max_steps: 1000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 4 || self.width > MAX_WIDTH {
            return Err(Error::invalid("tetris", format!("width {} outside [4, {MAX_WIDTH}]", self.width)));
        }
        if self.height < 6 || self.height > MAX_HEIGHT {
            return Err(Error::invalid("tetris", format!("height {} outside [6, {MAX_HEIGHT}]", self.height)));
        }
        if self.pieces.is_empty() {
            return Err(Error::invalid("tetris", "empty piece set"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("tetris", "step cap must be at least 1"));
        }
        if self.line_scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("line scores"));
        }
        for f in TetrisFeature::REQUIRED {
            if !self.features.contains(&f) {
                return Err(Error::invalid("tetris", format!("feature set must include {}", f.name())));
            }
        }
        if !(self.smoothing.is_finite() && self.smoothing >= 0.0) {
            return Err(Error::invalid("tetris", "bad smoothing"));
        }
        Ok(())
    }

    pub fn feature_index(&self, f: TetrisFeature) -> Option<usize> {
        self.features.iter().position(|&g| g == f)
    }
}

/// Features of placing `orientation` at `col` on `board`, or `None` if the
/// placement is invalid.
pub fn tetris_features(
    features: &[TetrisFeature],
    board: &Board,
    orientation: &Orientation,
    col: usize,
) -> Option<Vec<f64>> {
    let placed = board.drop_piece(orientation, col)?;
    Some(features.iter().map(|f| f.value(&placed)).collect())
}

/// A valid placement of the current piece.
#[derive(Debug, Clone)]
pub struct Candidate {
    /// `rotation * width + column`.
    pub id: usize,
    pub placed: Placed,
    pub features: Vec<f64>,
}

/// Tetris environment; implements [`StochasticModel`] by full rollouts.
#[derive(Debug, Clone)]
pub struct TetrisEnv {
    config: TetrisConfig,
    shapes: Vec<Vec<Orientation>>,
}

/// Per-episode statistics beyond the sample itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeStats {
    pub steps: usize,
    pub line_clears: [usize; 4],
    pub topped_out: bool,
}

pub fn build_tetris(config: TetrisConfig) -> Result<TetrisEnv> {
    config.validate()?;
    let shapes = config.pieces.iter().map(|&p| orientations(p)).collect();
    Ok(TetrisEnv { config, shapes })
}

impl TetrisEnv {
    pub fn config(&self) -> &TetrisConfig {
        &self.config
    }

    pub fn empty_board(&self) -> Board {
        Board::empty(self.config.width, self.config.height)
    }

    /// Valid placements of piece `piece` (index into the configured set).
    pub fn candidates(&self, board: &Board, piece: usize) -> Vec<Candidate> {
        let heights = board.column_heights();
        let mut out = Vec::with_capacity(4 * self.config.width);
        for (rot, o) in self.shapes[piece].iter().enumerate() {
            for col in 0..=self.config.width.saturating_sub(o.width) {
                if let Some(placed) = board.drop_with_heights(o, col, &heights) {
                    let features = self.config.features.iter().map(|f| f.value(&placed)).collect();
                    out.push(Candidate {
                        id: rot * self.config.width + col,
                        placed,
                        features,
                    });
                }
            }
        }
        out
    }

    fn line_reward(&self, lines: usize) -> f64 {
        if lines == 0 {
            0.0
        } else {
            self.config.line_scores[lines - 1]
        }
    }

    /// Plays one episode and returns the sample plus statistics.
    ///
    /// `y` interleaves piece indices and placement ids; `x` holds per-step
    /// rewards followed by the smoothing noise when enabled.
    pub fn rollout(&self, theta: &[f64], rng: &mut dyn RngCore) -> Result<(ScoredSample, EpisodeStats)> {
        let k = self.config.features.len();
        if theta.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: theta.len(),
            });
        }
        let n_pieces = self.config.pieces.len();
        let mut board = self.empty_board();
        let mut score = vec![0.0; k];
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut stats = EpisodeStats::default();
        let mut prefs = Vec::with_capacity(4 * MAX_WIDTH);
        let mut mean_phi = vec![0.0; k];
        while stats.steps < self.config.max_steps {
            let piece = rng.random_range(0..n_pieces);
            let cands = self.candidates(&board, piece);
            if cands.is_empty() {
                stats.topped_out = true;
                break;
            }
            prefs.clear();
            prefs.extend(cands.iter().map(|c| crate::model::dot(&c.features, theta)));
            let max = prefs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for p in prefs.iter_mut() {
                *p = (*p - max).exp();
                total += *p;
            }
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut choice = cands.len() - 1;
            for (i, p) in prefs.iter().enumerate() {
                acc += p;
                if u < acc {
                    choice = i;
                    break;
                }
            }
            mean_phi.iter_mut().for_each(|m| *m = 0.0);
            for (c, p) in cands.iter().zip(&prefs) {
                for (m, f) in mean_phi.iter_mut().zip(&c.features) {
                    *m += p / total * f;
                }
            }
            let chosen = &cands[choice];
            for ((s, f), m) in score.iter_mut().zip(&chosen.features).zip(&mean_phi) {
                *s += f - m;
            }
            let lines = chosen.placed.lines_cleared;
            if lines > 0 {
                stats.line_clears[lines.min(4) - 1] += 1;
            }
            x.push(self.line_reward(lines));
            y.push(piece as u32);
            y.push(chosen.id as u32);
            board = chosen.placed.board;
            stats.steps += 1;
        }
        let mut reward: f64 = x.iter().sum();
        if self.config.smoothing > 0.0 {
            let noise = self.config.smoothing * (2.0 * rng.random::<f64>() - 1.0);
            x.push(noise);
            reward += noise;
        }
        Ok((ScoredSample { y, x, reward, score }, stats))
    }
}

impl StochasticModel for TetrisEnv {
    fn dim(&self) -> usize {
        self.config.features.len()
    }

    fn sample(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> Result<ScoredSample> {
        Ok(self.rollout(theta, rng)?.0)
    }

    fn reward_bound(&self) -> Option<f64> {
        // At most one 4-line clear per four placements, bounded by the cap.
        Some(self.config.max_steps as f64 * self.config.line_scores.iter().fold(0.0f64, |a, s| a.max(s.abs())) + self.config.smoothing)
    }
}
