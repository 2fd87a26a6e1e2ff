use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scalar resolvent did not converge after {iterations} iterations (residual {residual:.3e})")]
    ResolventNonConvergence { iterations: usize, residual: f64 },

    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    CgNonConvergence { iterations: usize, residual: f64 },

    #[error("Newton iteration failed after {iterations} iterations; residual history {history:?}")]
    NewtonDivergence { iterations: usize, history: Vec<f64> },

    #[error("time step h = {h} violates the solvability threshold h < 1/|pi'|_inf = {threshold}")]
    StepTooLarge { h: f64, threshold: f64 },

    #[error("time step h = {h} is not below the estimate threshold h1 = 1/(4(|pi'|^2+1)) = {threshold}")]
    StepAboveEstimateThreshold { h: f64, threshold: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("initial phase is outside the closed domain of beta at point {index} (value {value})")]
    InfeasibleInitialPhase { index: usize, value: f64 },

    #[error("trajectory of {values} stored values exceeds the memory guard of {limit}")]
    TrajectoryTooLarge { values: usize, limit: usize },

    #[error("time {t} outside [0, {t_final}]")]
    TimeOutOfRange { t: f64, t_final: f64 },

    #[error("interpolant {kind} is not defined for component {component}")]
    UndefinedInterpolant { kind: &'static str, component: &'static str },

    #[error("incompatible trajectories: {0}")]
    IncompatibleTrajectories(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("run failed ({source}); diagnostics written to {}", path.display())]
    RunFailed {
        path: std::path::PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("csv parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep { step, source: Box::new(self) }
    }

    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field: field.into(), reason: reason.into() }
    }
}
