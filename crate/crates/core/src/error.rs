use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("design matrix is rank deficient at column {column} (|R_jj| = {pivot:.3e})")]
    RankDeficient { column: usize, pivot: f64 },
    #[error("degenerate truth: the true-model coefficient window carries no signal")]
    DegenerateTruth,
    #[error("enumeration budget exceeded: {count} grid points (limit {limit})")]
    Capacity { count: u128, limit: u128 },
    #[error("solver failed to converge: kkt residual {kkt_residual:.3e} after {iterations} iterations")]
    SolverFailure {
        kkt_residual: f64,
        iterations: usize,
        best_objective: f64,
    },
    #[error("replication {rep}: {source}")]
    Replication {
        rep: u64,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
