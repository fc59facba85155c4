//! Restricted Poisson equations and the exit-time functionals they produce.
//!
//! For a domain `Omega` the killed generator is the principal sub-matrix
//! `L_Omega`; any rate leaving `Omega` (including the killing defect) counts as
//! exit. The weak solution of `(beta - L) u = xi` on `Omega`, `u = 0` off
//! `Omega`, is `u = (beta I - L_Omega)^{-1} xi`, and
//!
//! * `E_x exp(-beta tau) = 1 - beta u(x)` with `xi = 1`,
//! * `E_x tau = ((-L_Omega)^{-1} 1)(x)`,
//! * `E_x exp(beta tau) = 1 + beta v(x)` with `(-beta - L_Omega) v = 1`, for
//!   reversible chains and `beta < lambda0(Omega)`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{dual_generator, Chain};
use crate::io;
use crate::linalg::{self, Matrix, Solver, Vector};
use crate::tol;

/// Indicator of the open set `Omega` over the states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainMask {
    inside: Vec<bool>,
}

impl DomainMask {
    pub fn new(inside: Vec<bool>) -> Result<Self> {
        if !inside.iter().any(|&b| b) {
            return Err(Error::Domain("no state inside the domain".into()));
        }
        Ok(DomainMask { inside })
    }

    pub fn from_states(n: usize, states: &[usize]) -> Result<Self> {
        let mut inside = vec![false; n];
        for &s in states {
            if s >= n {
                return Err(Error::Domain(format!("state {s} out of range (n = {n})")));
            }
            inside[s] = true;
        }
        Self::new(inside)
    }

    /// `Omega = E`. Exit operations reject it unless the chain has killing.
    pub fn full(n: usize) -> Result<Self> {
        Self::new(vec![true; n])
    }

    pub fn len(&self) -> usize {
        self.inside.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inside.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.inside[i]
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.inside.len()).filter(|&i| self.inside[i]).collect()
    }

    pub fn size(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn complement_is_empty(&self) -> bool {
        self.inside.iter().all(|&b| b)
    }

    /// `1_Omega`.
    pub fn indicator(&self) -> Vec<f64> {
        self.inside
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn check_len(&self, chain: &Chain) -> Result<()> {
        if self.len() != chain.n() {
            return Err(Error::Dimension {
                what: "domain mask",
                expected: chain.n(),
                got: self.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Primal,
    Dual,
}

/// Zero-extended solution of a restricted solve and the condition estimate
/// of the system matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedSolve {
    pub values: Vec<f64>,
    pub condition: f64,
}

/// Restricts a source to `Omega`. Accepts a full-length vector that vanishes
/// off `Omega`, or a vector indexed by the inside states.
pub fn source_on_domain(mask: &DomainMask, xi: &[f64]) -> Result<Vector> {
    let idx = mask.indices();
    if xi.len() == idx.len() {
        return Ok(Vector::from_column_slice(xi));
    }
    if xi.len() != mask.len() {
        return Err(Error::Dimension {
            what: "source vector",
            expected: mask.len(),
            got: xi.len(),
        });
    }
    if let Some(i) = (0..xi.len()).find(|&i| !mask.contains(i) && xi[i] != 0.0) {
        return Err(Error::Argument(format!(
            "source must vanish off the domain; xi[{i}] = {}",
            xi[i]
        )));
    }
    Ok(linalg::subvector(xi, &idx))
}

/// `beta I - G_Omega` for `G = L` or `L~`.
fn shifted_restriction(chain: &Chain, mask: &DomainMask, beta: f64, side: Side) -> Matrix {
    let idx = mask.indices();
    let g = match side {
        Side::Primal => linalg::submatrix(chain.q(), &idx),
        Side::Dual => linalg::submatrix(dual_generator(chain).matrix(), &idx),
    };
    Matrix::identity(idx.len(), idx.len()) * beta - g
}

/// Solves `(beta I - L_Omega) u = xi` (or with `L~` for the dual side).
pub fn solve_poisson(
    chain: &Chain,
    mask: &DomainMask,
    beta: f64,
    xi: &[f64],
    side: Side,
) -> Result<RestrictedSolve> {
    mask.check_len(chain)?;
    if !beta.is_finite() {
        return Err(Error::Argument(format!("beta must be finite, got {beta}")));
    }
    let rhs = source_on_domain(mask, xi)?;
    let a = shifted_restriction(chain, mask, beta, side);
    let solver = Solver::new(a, &format!("({beta} I - L_Omega), {side:?} side"))?;
    let u = solver.solve(&rhs);
    let idx = mask.indices();
    Ok(RestrictedSolve {
        values: linalg::extend_by_zero(&u, &idx, chain.n()),
        condition: solver.condition(),
    })
}

/// `E_x exp(-beta tau_Omega)` for every state (`1` off `Omega`).
pub fn exit_laplace(chain: &Chain, mask: &DomainMask, beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return Err(Error::Argument(format!("beta must be > 0, got {beta}")));
    }
    let u = solve_poisson(chain, mask, beta, &mask.indicator(), Side::Primal)?;
    Ok(laplace_from_potential(mask, beta, &u.values))
}

fn laplace_from_potential(mask: &DomainMask, beta: f64, u: &[f64]) -> Vec<f64> {
    u.iter()
        .enumerate()
        .map(|(i, &ui)| {
            if mask.contains(i) {
                1.0 - beta * ui
            } else {
                1.0
            }
        })
        .collect()
}

/// Inside states from which no path through `Omega` reaches an exit.
pub fn stuck_states(chain: &Chain, mask: &DomainMask) -> Vec<usize> {
    let n = chain.n();
    let q = chain.q();
    let thresh = tol::STRUCTURAL * chain.generator().scale();
    let killing = chain.killing_rates();
    let mut can_exit = vec![false; n];
    let mut queue = VecDeque::new();
    for x in mask.indices() {
        let out: f64 = killing[x]
            + (0..n)
                .filter(|&y| !mask.contains(y))
                .map(|y| q[(x, y)])
                .sum::<f64>();
        if out > thresh {
            can_exit[x] = true;
            queue.push_back(x);
        }
    }
    while let Some(y) = queue.pop_front() {
        for x in mask.indices() {
            if !can_exit[x] && q[(x, y)] > thresh {
                can_exit[x] = true;
                queue.push_back(x);
            }
        }
    }
    mask.indices()
        .into_iter()
        .filter(|&x| !can_exit[x])
        .collect()
}

/// `E_x tau_Omega` for every state (`0` off `Omega`).
pub fn exit_mean(chain: &Chain, mask: &DomainMask) -> Result<Vec<f64>> {
    mask.check_len(chain)?;
    let stuck = stuck_states(chain, mask);
    if !stuck.is_empty() {
        return Err(Error::RecurrentRestriction { stuck: stuck.len() });
    }
    Ok(solve_poisson(chain, mask, 0.0, &mask.indicator(), Side::Primal)?.values)
}

/// `E_x exp(beta tau_Omega)`, or the infinite marker past the spectral edge.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpMoment {
    Finite(Vec<f64>),
    Infinite,
}

impl ExpMoment {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExpMoment::Finite(_))
    }

    pub fn values(&self) -> Option<&[f64]> {
        match self {
            ExpMoment::Finite(v) => Some(v),
            ExpMoment::Infinite => None,
        }
    }

    /// Value at one state; `+inf` for the infinite marker.
    pub fn at(&self, i: usize) -> f64 {
        match self {
            ExpMoment::Finite(v) => v[i],
            ExpMoment::Infinite => f64::INFINITY,
        }
    }
}

impl Serialize for ExpMoment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExpMoment::Finite(v) => v.serialize(s),
            ExpMoment::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExpMoment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Values(Vec<f64>),
            Marker(String),
        }
        match Raw::deserialize(d)? {
            Raw::Values(v) => Ok(ExpMoment::Finite(v)),
            Raw::Marker(m) if m == "inf" => Ok(ExpMoment::Infinite),
            Raw::Marker(m) => Err(serde::de::Error::custom(format!("unknown marker {m:?}"))),
        }
    }
}

/// `E_x exp(beta tau_Omega)` for a reversible chain, given `lambda0(Omega)`.
pub fn exit_exp_moment(
    chain: &Chain,
    mask: &DomainMask,
    beta: f64,
    lambda0: f64,
) -> Result<ExpMoment> {
    mask.check_len(chain)?;
    chain.require_reversible()?;
    if !(beta > 0.0) {
        return Err(Error::Argument(format!("beta must be > 0, got {beta}")));
    }
    if beta >= lambda0 - tol::SPECTRAL_EDGE {
        return Ok(ExpMoment::Infinite);
    }
    let v = solve_poisson(chain, mask, -beta, &mask.indicator(), Side::Primal)?;
    Ok(ExpMoment::Finite(
        v.values
            .iter()
            .enumerate()
            .map(|(i, &vi)| {
                if mask.contains(i) {
                    1.0 + beta * vi
                } else {
                    1.0
                }
            })
            .collect(),
    ))
}

/// The exact exit-time functionals of one domain at one `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitFunctionals {
    pub beta: f64,
    pub u_beta: Vec<f64>,
    pub laplace: Vec<f64>,
    pub mean: Vec<f64>,
    /// Absent for non-reversible chains or when `lambda0` is not supplied.
    pub exp_moment: Option<ExpMoment>,
    /// `<xi, u_beta>_mu` for the supplied source.
    pub aggregate_mu: f64,
    pub condition: f64,
}

impl ExitFunctionals {
    /// Computes all functionals; `xi` defaults to `1_Omega`.
    pub fn compute(
        chain: &Chain,
        mask: &DomainMask,
        beta: f64,
        xi: Option<&[f64]>,
        lambda0: Option<f64>,
    ) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Argument(format!("beta must be > 0, got {beta}")));
        }
        let one = mask.indicator();
        let xi = xi.unwrap_or(&one);
        let source = source_on_domain(mask, xi)?;
        let full_source = linalg::extend_by_zero(&source, &mask.indices(), chain.n());
        let unit = solve_poisson(chain, mask, beta, &one, Side::Primal)?;
        let aggregate_mu = if full_source == one {
            chain.measure().inner(&one, &unit.values)
        } else {
            let u = solve_poisson(chain, mask, beta, &full_source, Side::Primal)?;
            chain.measure().inner(&full_source, &u.values)
        };
        let laplace = laplace_from_potential(mask, beta, &unit.values);
        let mean = exit_mean(chain, mask)?;
        let exp_moment = match lambda0 {
            Some(l0) if chain.is_reversible() => Some(exit_exp_moment(chain, mask, beta, l0)?),
            _ => None,
        };
        Ok(ExitFunctionals {
            beta,
            u_beta: unit.values,
            laplace,
            mean,
            exp_moment,
            aggregate_mu,
            condition: unit.condition,
        })
    }

    /// One row per state: `state, laplace, mean, exp_moment`.
    pub fn to_csv(&self, chain: &Chain) -> String {
        let rows: Vec<Vec<String>> = (0..self.laplace.len())
            .map(|i| {
                let em = match &self.exp_moment {
                    Some(e) => io::fmt_f64(e.at(i)),
                    None => String::new(),
                };
                vec![
                    chain.label(i),
                    io::fmt_f64(self.laplace[i]),
                    io::fmt_f64(self.mean[i]),
                    em,
                ]
            })
            .collect();
        io::csv_string(&["state", "laplace", "mean", "exp_moment"], &rows)
    }
}
