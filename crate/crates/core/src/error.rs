use thiserror::Error;

use crate::floquet::ResonanceInfo;
use crate::model::Physicality;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("parameter `{0}` is not finite")]
    NotFinite(&'static str),
    #[error("parameter `{name}` must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("drive frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("drive phase must lie in [0, 2π), got {0}")]
    PhaseOutOfRange(f64),
    #[error("per-qubit drive amplitudes differ ({a1} vs {a2}); only a shared amplitude is supported")]
    UnequalAmplitudes { a1: f64, a2: f64 },
    #[error(
        "state is not physical: hermiticity {:.3e}, trace error {:.3e}, min eigenvalue {:.3e}",
        .0.hermiticity, .0.trace_error, .0.min_eigenvalue
    )]
    NonPhysical(Physicality),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("end time {t1} does not exceed start time {t0}")]
    EmptyInterval { t0: f64, t1: f64 },
    #[error("adaptive step size underflow at t = {t} ns (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("no dissipation: the periodic steady state is not unique")]
    NoDissipation,
    #[error("eigenvalue 1 of the one-period map is degenerate (gap {gap:.3e})")]
    DegenerateFixedPoint { gap: f64 },
    #[error("fixed-point linear system is singular")]
    SingularFixedPoint,
    #[error("steady state not periodic: ‖ρ(T) − ρ(0)‖ = {residual:.3e} exceeds {tol:.3e}")]
    NotConverged { residual: f64, tol: f64 },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConcurrenceError {
    #[error(transparent)]
    NonPhysicalState(ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid averaging configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SeriesError {
    #[error("resonant denominator: {0}")]
    ResonantDenominator(ResonanceInfo),
    #[error("invalid series configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RwaError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("steady state requires relaxation or excitation on both qubits")]
    InsufficientDissipation,
    #[error("outside the single-resonance regime: {0}")]
    OutOfTheory(ResonanceInfo),
    #[error("concurrence stays positive across the resonance (2h14 = {two_h14:.3e} < Γ₁+Γ₂ = {gamma_sum:.3e})")]
    NoDip { two_h14: f64, gamma_sum: f64 },
    #[error("no entanglement window: dephasing without relaxation")]
    NoEntanglementWindow,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Concurrence(#[from] ConcurrenceError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Rwa(#[from] RwaError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
