//! Exit-time functionals of finite-state Markov processes generated by lower
//! bounded semi-Dirichlet forms.
//!
//! The crate evaluates Laplace transforms, means and exponential moments of
//! exit times exactly through restricted Poisson solves, evaluates the
//! inf-sup variational characterizations of those quantities by two
//! independent routes, computes Dirichlet eigenvalues and spectral gaps with
//! the bounds that relate them to exit times, discretizes jump-diffusion
//! models on grids, and simulates exit times as a stochastic cross-check.
//!
//! Module map:
//!
//! * [`forms`]: chains, measures, dual generators, `E_beta`, Assumption-A checks
//! * [`poisson`]: restricted solves, `E_x exp(-beta tau)`, `E_x tau`, `E_x exp(beta tau)`
//! * [`variational`]: inf-sup values and optimizers
//! * [`spectral`]: `lambda0(Omega)`, `lambda1`, Lyapunov ratios and the bounds ledger
//! * [`models`]: graph, birth-death, cycle and grid jump-diffusion builders
//! * [`montecarlo`]: path simulation and plug-in estimators

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forms;
pub mod io;
pub mod linalg;
pub mod models;
pub mod montecarlo;
pub mod poisson;
pub mod spectral;
pub mod tol;
pub mod variational;

pub use error::{Error, Result};
pub use forms::{
    dual_generator, eval_form, validate_assumption_a, Chain, FormView, Generator, Measure,
    ValidationReport,
};
pub use poisson::{
    exit_exp_moment, exit_laplace, exit_mean, solve_poisson, DomainMask, ExitFunctionals,
    ExpMoment, Side,
};
