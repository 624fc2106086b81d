use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong while validating data, fitting models or estimating curves.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty cohort")]
    EmptyCohort,
    #[error("no events: every record is censored")]
    NoEvents,
    #[error("empty arm: no records with treatment z = {0}")]
    EmptyArm(u8),
    #[error("invalid record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },
    #[error("weight vector has {got} entries for {expected} records")]
    WeightLength { expected: usize, got: usize },
    #[error("invalid weight {value} at record {index}: weights must be finite and positive")]
    InvalidWeight { index: usize, value: f64 },
    #[error("negative evaluation time {0}")]
    NegativeTime(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("single class: treatment labels must contain both 0 and 1")]
    SingleClass,
    #[error("too few observations: n = {n} with {parameters} parameters")]
    TooFewObservations { n: usize, parameters: usize },
    #[error("{model} did not converge within {iterations} iterations (max |gradient| = {gradient:e})")]
    NonConvergence {
        model: &'static str,
        iterations: usize,
        gradient: f64,
    },
    #[error("complete separation: coefficient {index} reached {value} (bound {bound})")]
    Separation { index: usize, value: f64, bound: f64 },
    #[error("monotone partial likelihood for cause {cause}: coefficient {index} reached {value} (bound {bound})")]
    MonotoneLikelihood {
        cause: usize,
        index: usize,
        value: f64,
        bound: f64,
    },
    #[error("cause {0} has no events")]
    NoEventsForCause(usize),
    #[error("collinear design: column {column} is a linear combination of the others")]
    Collinear { column: usize },
    #[error("singular information matrix for {0}")]
    Singular(&'static str),
    #[error("aggregate hazard increment {total} exceeds 1 at time {time}")]
    HazardIncrement { time: f64, total: f64 },
    #[error("positivity violation at record {index}: propensity {propensity} outside ({epsilon}, 1 - {epsilon})")]
    Positivity {
        index: usize,
        propensity: f64,
        epsilon: f64,
    },
    #[error("pseudo-observations need at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("bootstrap for {method}: {failed} of {total} resamples failed (limit 20%)")]
    BootstrapFailures {
        method: &'static str,
        failed: usize,
        total: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{method}: {source}")]
    Replication {
        method: &'static str,
        source: Box<Error>,
    },
    #[error("{failed} of {total} replications failed (limit 2%); first failure: {first}")]
    ExcessiveFailures {
        failed: usize,
        total: usize,
        first: String,
    },
}
