//! Finite-horizon trajectory synthesis under signal temporal logic (STL)
//! specifications.
//!
//! The toolkit plans open-loop control sequences for point-mass agents by
//! maximizing the quantitative robustness of an STL formula over the rolled
//! out state trajectory. The main optimizer transports a population of
//! control-sequence particles with Stein variational gradient descent, using
//! the gradient of a smoothed (LogSumExp) robustness as the attractive force
//! and an RBF kernel for repulsion. Sampling and gradient baselines share the
//! same dynamics and robustness stack so method comparisons are apples to
//! apples.
//!
//! Modules:
//! - [`stl`]: formula AST, text parser, pretty printer, structural checks
//! - [`semantics`]: hard (min/max) and smooth (LogSumExp) robustness with
//!   reverse-mode gradients with respect to every trace state
//! - [`dynamics`]: double-integrator rollouts, Jacobians, and the adjoint
//!   pass mapping state gradients to control gradients
//! - [`optimizer`]: the Stein variational path-integral optimizer
//! - [`baselines`]: MPPI with handcrafted costs, plain gradient ascent, and
//!   finite-difference SVGD
//! - [`scenario`]: declarative task definitions and the built-in catalog
//! - [`bench`]: seed sweeps, hyperparameter grids, reports, and SVG plots

pub mod baselines;
pub mod bench;
pub mod dynamics;
pub mod exec;
pub mod optimizer;
pub mod scenario;
pub mod semantics;
pub mod stl;

pub use dynamics::{ControlSequence, DynamicsSpec, RolloutJacobians};
pub use optimizer::{IterationDiag, RunResult, SvpioConfig};
pub use scenario::Scenario;
pub use semantics::{RobustnessResult, SmoothingConfig, Trace};
pub use stl::{Formula, Interval, PredicateDef, PredicateKind};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("invalid interval [{lo},{hi}] at line {line}, column {col}: lower bound exceeds upper bound")]
    IntervalOrder {
        lo: usize,
        hi: usize,
        line: usize,
        col: usize,
    },
    #[error("unbound predicate `{name}`")]
    UnboundPredicate { name: String },
    #[error("formula horizon overflow in `{subformula}`: requires trace of length {required} but horizon {horizon} provides {available}")]
    HorizonOverflow {
        subformula: String,
        required: usize,
        horizon: usize,
        available: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },
    #[error("empty evaluation window for `{subformula}` at step {t}")]
    EmptyWindow { subformula: String, t: usize },
    #[error("non-finite robustness value in `{subformula}`")]
    NonFinite { subformula: String },
    #[error("non-finite state at step {step} during rollout")]
    NonFiniteState { step: usize },
    #[error("non-finite update for particle {particle} at iteration {iteration}")]
    NonFiniteUpdate { particle: usize, iteration: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("scenario error ({path}): {msg}")]
    Scenario { path: String, msg: String },
    #[error("trace format error: {0}")]
    TraceFormat(String),
    #[error("unknown method `{0}` (expected one of svpio, mppi, gd, fd-svgd)")]
    UnknownMethod(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
