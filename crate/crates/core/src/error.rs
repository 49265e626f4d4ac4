//! Error type shared by every module in the crate.

use num_complex::Complex64;
use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix/vector dimensions do not line up (message names the offender).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Transfer function with deg(num) > deg(den).
    #[error("improper transfer function: deg(num) = {num_deg} exceeds deg(den) = {den_deg}")]
    Improper { num_deg: usize, den_deg: usize },

    /// Empty denominator or zero leading coefficient.
    #[error("denominator is empty or has zero leading coefficient")]
    ZeroDenominator,

    /// Resolvent (zI - A) is singular at the requested evaluation point.
    #[error("evaluation point z = {z} is (numerically) a pole of the realization")]
    PoleAtEvaluation { z: Complex64 },

    /// ρ-scaling or certification called with ρ outside its admissible range.
    #[error("rho must be positive, got {0}")]
    NonPositiveRho(f64),

    /// Generic invalid scalar/argument (message names the parameter).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// 1 - slope·D is singular, so the linearized loop is ill-posed.
    #[error("singular algebraic loop: det(I - slope*D) = {0:.3e}")]
    SingularLoop(f64),

    /// A multiplier was requested at a ρ its family rules do not admit.
    #[error("rho-validity violated: {0}")]
    RhoValidity(String),

    /// Certification requires the ρ-circle strictly outside the plant poles.
    #[error("rho = {rho} is not above the plant spectral radius {sr:.12}")]
    RhoBelowSpectralRadius { rho: f64, sr: f64 },

    /// Frequency-grid evaluation would hit or enclose a pole.
    #[error(
        "eigenvalue {eigenvalue} of {which} has magnitude {magnitude:.9} >= rho = {rho}; \
         the evaluation circle must enclose all poles strictly"
    )]
    PoleOnOrOutsideCircle {
        which: &'static str,
        eigenvalue: Complex64,
        magnitude: f64,
        rho: f64,
    },

    /// The family cannot even certify ρ = 1 (no decay rate certifiable).
    #[error(
        "family {{{family}}} is infeasible at rho = 1 (not BIBO-certifiable); \
         best objective {best_objective:.3e}"
    )]
    BiboUncertifiable { family: String, best_objective: f64 },

    /// Malformed data handed to the LMI solver.
    #[error("solver input invalid: {0}")]
    SolverInput(String),

    /// Time-domain check called with signals of different lengths.
    #[error("signal length mismatch: y has {y_len} samples, u has {u_len}")]
    SignalLength { y_len: usize, u_len: usize },

    /// Per-step algebraic loop (D ≠ 0) failed to converge.
    #[error("algebraic loop iteration diverged at simulation step {step}")]
    LoopDivergence { step: usize },

    /// Decay-rate fit attempted on an unusable range.
    #[error("decay fit range invalid: {0}")]
    FitRange(String),

    /// Config file parsing / validation failure (message names the field).
    #[error("config error: {0}")]
    Config(String),

    /// Internal cross-check failed; indicates a bug, not a user error.
    #[error("internal inconsistency: {0}")]
    Inconsistency(String),
}
