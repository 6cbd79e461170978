use thiserror::Error;

use crate::network::PathError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    BadGrid(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("measure is not a probability measure (total mass {total})")]
    NonProbability { total: f64 },

    #[error("bad mixture component: {0}")]
    BadMixture(String),

    #[error("measures live on different grids")]
    GridMismatch,

    #[error("infeasible precondition: {0}")]
    InfeasiblePrecondition(String),

    #[error("mass mismatch: {left} vs {right}")]
    MassMismatch { left: f64, right: f64 },

    #[error("bad parameter: {0}")]
    BadParam(String),

    #[error("times must be strictly increasing")]
    NonIncreasingTimes,

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid paths: {}", fmt_path_errors(.0))]
    InvalidPaths(Vec<PathError>),

    #[error("node {node} has target mass {mass:e} at bin {bin} that no admissible chain reaches")]
    UnreachableMass { node: String, bin: usize, mass: f64 },

    #[error("joint target {origin}->{destination} has mass {mass:e} at bins ({t0_bin}, {tt_bin}) that no admissible chain reaches")]
    UnreachableJointMass {
        origin: String,
        destination: String,
        t0_bin: usize,
        tt_bin: usize,
        mass: f64,
    },

    #[error("plan enumeration needs {cells} cells, limit is {limit}")]
    TooLarge { cells: u128, limit: u128 },

    #[error("dense tensor exceeds size cap: {0}")]
    SizeCap(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("csv: {0}")]
    Csv(String),
}

fn fmt_path_errors(errs: &[PathError]) -> String {
    errs.iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
