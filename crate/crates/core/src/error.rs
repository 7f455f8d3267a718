use thiserror::Error;

/// Errors shared across the numerical modules.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid radial function: {0}")]
    InvalidFunction(String),

    #[error("evaluation at r = {r} beyond grid end r_max = {r_max}")]
    Extrapolation { r: f64, r_max: f64 },

    #[error("density has negative value {value} at node {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("potential must be attractive (nonnegative): value {value} at node {index}")]
    NegativePotential { index: usize, value: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual})")]
    EigenNoConvergence { iterations: usize, residual: f64 },

    #[error("ground state has {nodes} interior sign changes, expected none")]
    NotGroundState { nodes: usize },

    #[error(
        "self-consistent iteration exceeded {max_iter} iterations \
         (last density change {last_change})"
    )]
    ScfNoConvergence {
        max_iter: usize,
        last_change: f64,
        objective_history: Vec<f64>,
        change_history: Vec<f64>,
    },

    #[error("invalid occupation measure: {0}")]
    InvalidMeasure(String),

    #[error("duplicate points at indices {i} and {j} with softening 0")]
    DuplicatePoints { i: usize, j: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("shift candidate set is empty")]
    EmptyCandidates,

    #[error(
        "incremental Hamiltonian cache diverged from recomputation: \
         |{cached} - {recomputed}| = {gap} at step {step}"
    )]
    CacheDivergence {
        cached: f64,
        recomputed: f64,
        gap: f64,
        step: u64,
    },

    #[error("solver bundle required for shift statistics but not provided")]
    MissingSolution,

    #[error("trajectory blow-up: |x| = {radius} at step {step}")]
    BlowUp { radius: f64, step: u64 },

    #[error("wave function underflow at radius {r} along the path")]
    PsiUnderflow { r: f64 },
}

pub type Result<T> = std::result::Result<T, CoreError>;
