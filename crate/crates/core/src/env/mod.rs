//! Concrete environments.

pub mod chain;
pub mod tetris;

pub use chain::{build_chain, ChainAction, ChainMdp, ChainMdpConfig, ChainStage};
pub use tetris::{build_tetris, Board, PieceKind, TetrisConfig, TetrisEnv, TetrisFeature};
