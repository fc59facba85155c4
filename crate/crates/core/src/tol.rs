//! Tolerance and sampling constants shared by every module.
//!
//! | constant | use |
//! |---|---|
//! | [`STRUCTURAL`] | algebraic identities: duality, row sums, symmetry of `MQ` |
//! | [`VALIDATION`] | report booleans in Assumption-A style checks |
//! | [`SPECTRAL`] | spectral and optimization comparisons (relative) |
//! | [`SPECTRAL_EDGE`] | exponential moments within this of `lambda0` are reported infinite |
//! | [`SADDLE_SAMPLING`] | one-sided saddle inequalities checked by random sampling |

/// Structural identities (duality, row sums, measure normalization).
pub const STRUCTURAL: f64 = 1e-12;

/// Violation magnitude below which a validation check passes.
pub const VALIDATION: f64 = 1e-10;

/// Relative tolerance for spectral and optimization comparisons.
pub const SPECTRAL: f64 = 1e-9;

/// Distance to `lambda0` below which `E[exp(beta tau)]` is reported as infinite.
pub const SPECTRAL_EDGE: f64 = 1e-9;

/// Slack allowed in the sampled saddle inequalities, relative to `max(1, value)`.
pub const SADDLE_SAMPLING: f64 = 1e-8;

/// Number of random admissible directions per side in the sampled saddle check.
pub const SADDLE_DIRECTIONS: usize = 50;

/// Seed of the deterministic direction sampler used by the saddle check.
pub const SADDLE_SEED: u64 = 0x5add1e;

/// Target residual of iterative refinement in restricted solves (relative).
pub const REFINEMENT: f64 = 1e-12;

/// Condition estimates above this are treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e14;

/// Offset above `beta0` at which the sector constant is probed by default.
pub const SECTOR_PROBE_OFFSET: f64 = 1.0;

/// Relative gap under which two eigenvalues are counted as one multiple eigenvalue.
pub const MULTIPLICITY: f64 = 1e-9;
