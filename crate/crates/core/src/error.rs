use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("variation length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("body index {0} out of range")]
    UnknownBody(usize),
    #[error("parent {parent} of body {body} must be added before it")]
    ParentOrder { body: usize, parent: usize },
    #[error("duplicate body name {0:?}")]
    DuplicateName(String),
    #[error("coupling matrix must have 6 rows, got {0}")]
    BadCoupling(usize),
    #[error("body Jacobians are stale; call compute_body_jacobians first")]
    StaleJacobians,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("a constraint must reference two distinct bodies, got {0} twice")]
    SameBody(usize),
    #[error("a constraint must constrain at least one axis")]
    NoAxes,
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("KKT factorization failed at pivot {pivot} of {size}: contradictory or duplicate constraints, or indefinite reduced Hessian")]
    FactorizationFailed { pivot: usize, size: usize },
    #[error("expected one energy per body ({expected}), got {got}")]
    EnergyCountMismatch { expected: usize, got: usize },
    #[error("regularization weights must be non-negative")]
    NegativeRegularization,
    #[error("mode {0:?} needs a structure prepared for it")]
    ModeMismatch(crate::solver::Mode),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("point registration needs at least 3 correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("model and observed point counts differ: {model} vs {observed}")]
    CountMismatch { model: usize, observed: usize },
    #[error("energy weights must be non-negative")]
    NegativeWeight,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mesh has no vertices")]
    EmptyMesh,
    #[error("error threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("line {line}: {message}")]
    Obj { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}, column {column}, field `{field}`: {message}")]
    Parse { line: usize, column: usize, field: String, message: String },
    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("mesh for body {body:?}: {source}")]
    Mesh { body: String, source: MetricsError },
}

impl ConfigError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
