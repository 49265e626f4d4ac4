//! Certified upper bounds on the exponential decay rate of a discrete-time
//! LTI plant in feedback with a sector/slope-restricted nonlinearity.
//!
//! The pipeline: describe the loop as `y = G(u)`, `u = Δ(y)` (positive
//! feedback), abstract Δ by a family of frequency-domain multipliers Π(z) =
//! Ψ(z)*MΨ(z), and ask whether
//!
//! ```text
//! [G(ρz); 1]* Π(ρz) [G(ρz); 1]  ⪯  −εI   for all |z| = 1
//! ```
//!
//! holds for a candidate rate ρ ∈ (0, 1]. The condition is reduced to a
//! finite-dimensional linear matrix inequality through the discrete KYP lemma
//! on the augmented realization of Ψ·[G; I], decided by a small dense interior
//! point solver, and minimized over ρ by bisection. A feasible solve yields a
//! certificate that every trajectory of the autonomous loop satisfies
//! ‖x_k‖ ≤ c·ρᵏ‖x₀‖; the toolkit also simulates the loop and fits empirical
//! decay rates so certificates can be sanity-checked against observations.
//!
//! Modules:
//! - [`lti`]: state-space / transfer-function algebra, ρ-scaling, linearized
//!   closed loops.
//! - [`iqc`]: multiplier factorizations (norm-bounded, sector, off-by-k,
//!   FIR Zames-Falb), stacking, and time-domain partial-sum checks.
//! - [`kyp`]: augmented-system assembly, LMI construction, and an independent
//!   frequency-grid check of the inequality.
//! - [`solver`]: strict-feasibility decisions for symmetric affine matrix
//!   inequalities.
//! - [`certify`]: fixed-ρ certification, bisection rate minimization, and
//!   gain sweeps.
//! - [`sim`]: nonlinear loop simulation and decay-rate fitting.
//! - [`config`]: JSON problem descriptions and certificate serialization.
//! - [`selftest`]: embedded invariant suite for quick health checks.

// Parameter guards are written `!(x > 0.0)` on purpose: unlike `x <= 0.0`,
// the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod config;
pub mod error;
pub mod iqc;
pub mod kyp;
pub mod lti;
pub mod selftest;
pub mod sim;
pub mod solver;

pub use certify::{
    certify_at, family_label, minimize_rho, sweep_gain, CertificateResult, CertifyOptions,
    CertifyOutcome, FamilySpec, InfeasibleReport, SweepRow,
};
pub use error::{Error, Result};
pub use iqc::{
    make_norm_bounded, make_off_by_k, make_sector, make_zames_falb_fir, pi_eval, stack,
    time_domain_check, validate_rho_zf, IqcFactorization, IqcKind, NonlinearityModel, StackedIqc,
};
pub use kyp::{
    build_augmented, build_augmented_stacked, build_lmi, default_eps, grid_fdi_check,
    AffineMatrixInequality, AugmentedSystem, GridCheck, VarLabel,
};
pub use lti::{
    linearized_closed_loop, matrix_eigenvalues, poly_roots, spectral_radius, ss_eval, ss_from_tf,
    ss_scale_rho, StateSpace, TransferFunction,
};
pub use sim::{fit_decay_rate, simulate, FitResult, Trajectory};
pub use solver::{max_eig_sym, solve_feasibility, FeasibilityResult, SolverOptions, Status};
