use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row} sums to {sum:.17e}, expected 1 within 1e-9")]
    RowSumError { row: usize, sum: f64 },
    #[error("transition matrix is not irreducible: state {witness} does not communicate with state 0")]
    NotIrreducible { witness: usize },
    #[error("perturbation weight theta={theta} outside [0, 1]")]
    ThetaOutOfRange { theta: f64 },
    #[error("semigroup time t={t} is negative or not finite")]
    NegativeTime { t: f64 },
    #[error("dense routine requested for n={n} states, cap is {cap}")]
    TooLargeForDense { n: usize, cap: usize },
    #[error("support is not weakly reversible: T({x},{y}) > 0 but T({y},{x}) = 0")]
    NotWeaklyReversible { x: usize, y: usize },
    #[error("input is not a probability vector: mass {total:.17e}")]
    NotNormalized { total: f64 },
    #[error("log-Sobolev estimation requires a reversible chain")]
    NonReversibleForLSI,
    #[error("epsilon={eps} outside the admissible range")]
    EpsilonOutOfRange { eps: f64 },
    #[error("total variation distance equals 1; comparison undefined")]
    TVEqualsOne,
    #[error("curvature bracket [{lo}, {hi}] exhausted without enclosing the optimum")]
    BracketExhausted { lo: f64, hi: f64 },
    #[error("model is not a group walk: {reason}")]
    NotAGroupWalk { reason: String },
    #[error("coupling certificate void: delta = {delta:.6e} at state {state}, site {site}")]
    NegativeDelta { state: usize, site: usize, delta: f64 },
    #[error("no reference values known for model kind {kind:?}")]
    NoKnownValues { kind: String },
    #[error("requested size {requested} exceeds cap {cap}")]
    TooLarge { requested: usize, cap: usize },
    #[error("invalid parameters: {message}")]
    InvalidParameters { message: String },
    #[error("observable is not 1-Lipschitz: seminorm {seminorm}")]
    NotLipschitz { seminorm: f64 },
    #[error("time t={t} must be strictly positive")]
    NonpositiveTime { t: f64 },
    #[error("matrix file line {line}: {message}")]
    MatrixParse { line: usize, message: String },
    #[error("iteration did not converge: {what}")]
    NotConverged { what: String },
    #[error("numerical failure: {message}")]
    Numeric { message: String },
}
