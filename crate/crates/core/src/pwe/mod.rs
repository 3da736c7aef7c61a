//! Band structures and guided Bloch modes.

pub mod grid;
pub mod mode;
pub mod plane_wave;

pub use grid::{GridModeSolver, GridState};
pub use mode::{
    edge_index, group_index, group_index_with, guided_modes_at, BlochMode, Gauge, GuidedBand, ModeSearchOptions,
    Orientation,
};
pub use plane_wave::{bulk_gap, solve_bands, BandStructure, CellKind, Parity, PweSolver, PweState};
