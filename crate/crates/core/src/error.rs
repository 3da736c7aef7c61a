use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("eigensolver did not converge at k = {k}: {detail}")]
    EigenNonConvergence { k: f64, detail: String },
    #[error("mode search failed: {0}")]
    ModeSearch(String),
    #[error("target lies in the multivalued region near the band edge: {0}")]
    Multivalued(String),
    #[error("band edge too close: |dω/dk| = {slope:.3e} at k = {k}")]
    BandEdge { k: f64, slope: f64 },
    #[error("mode sampled at {mode} cells/a but grid uses {grid} cells/a")]
    ResolutionMismatch { mode: usize, grid: usize },
    #[error("sparse solve failed for {unknowns} unknowns: {detail}")]
    Solver { unknowns: usize, detail: String },
    #[error("flux box rejected: {0}")]
    FluxBox(String),
    #[error("negative power {name} = {value:.3e}")]
    NegativePower { name: &'static str, value: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
