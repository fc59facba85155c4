//! Dirichlet eigenvalue, spectral gap, Lyapunov ratio, and the bound ledger
//! that compares exact exit functionals with their spectral estimates.
//!
//! All quantities here use the normalized invariant measure `pi = mu / mu(E)`
//! regardless of how the chain's measure is scaled.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{form_matrix, Chain};
use crate::io::{csv_string, extended_f64, extended_f64_opt, fmt_f64};
use crate::linalg;
use crate::poisson::{exit_exp_moment, exit_laplace, exit_mean, DomainMask, ExpMoment};
use crate::tol;

/// Ledger entries with slack at or above this are satisfied.
pub const LEDGER_SLACK: f64 = -1e-9;

/// Bottom of the Dirichlet spectrum on a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletPair {
    pub lambda0: f64,
    /// Eigenfunction, zero off the domain, `pi(phi^2) = 1`, `pi(phi) >= 0`.
    pub phi: Vec<f64>,
    pub multiplicity: usize,
}

/// `lambda0(Omega)` and its eigenfunction for a reversible chain.
pub fn dirichlet_pair(chain: &Chain, mask: &DomainMask) -> Result<DirichletPair> {
    mask.check_len(chain)?;
    chain.require_reversible()?;
    let pi = chain.measure().normalized();
    let idx = mask.indices();
    let normalized = chain.with_normalized_measure();
    let a = linalg::submatrix(&form_matrix(&normalized, 0.0), &idx);
    let w: Vec<f64> = idx.iter().map(|&i| pi.weights()[i]).collect();
    let (values, vectors) = linalg::weighted_symmetric_eigen(&a, &w);
    let lambda0 = values[0];
    let edge = tol::MULTIPLICITY * lambda0.abs().max(1.0);
    let multiplicity = values.iter().take_while(|&&v| v - lambda0 <= edge).count();
    let mut phi = linalg::extend_by_zero(&vectors.column(0).into_owned(), &idx, chain.n());
    if pi.integrate(&phi) < 0.0 {
        phi.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(DirichletPair {
        lambda0,
        phi,
        multiplicity,
    })
}

fn is_irreducible(chain: &Chain) -> bool {
    let n = chain.n();
    let q = chain.q();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                let rate = if forward { q[(i, j)] } else { q[(j, i)] };
                if i != j && rate > 0.0 && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    n > 0 && reach(true) && reach(false)
}

/// `lambda1`: the spectral gap of a reversible, irreducible, conservative chain.
pub fn spectral_gap(chain: &Chain) -> Result<f64> {
    chain.require_reversible()?;
    let gen = chain.generator();
    let defect = gen.row_sums().iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if defect > tol::STRUCTURAL * gen.scale() {
        return Err(Error::Generator(format!(
            "spectral gap needs a conservative generator (row-sum defect {defect:e})"
        )));
    }
    if !is_irreducible(chain) {
        return Err(Error::Reducible(
            "the jump graph is not strongly connected".into(),
        ));
    }
    if chain.n() == 1 {
        return Err(Error::Argument(
            "spectral gap of a one-state chain is undefined".into(),
        ));
    }
    let normalized = chain.with_normalized_measure();
    let (values, _) = linalg::weighted_symmetric_eigen(
        &form_matrix(&normalized, 0.0),
        normalized.measure().weights(),
    );
    Ok(values[1].max(0.0))
}

/// `delta = -max_{x in Omega} (L varphi)(x) / varphi(x)`.
pub fn lyapunov_delta(chain: &Chain, mask: &DomainMask, varphi: &[f64]) -> Result<f64> {
    mask.check_len(chain)?;
    if varphi.len() != chain.n() {
        return Err(Error::Dimension {
            what: "Lyapunov function",
            expected: chain.n(),
            got: varphi.len(),
        });
    }
    let q = chain.q();
    let mut sup = f64::NEG_INFINITY;
    for i in 0..chain.n() {
        if !mask.contains(i) {
            if varphi[i] != 0.0 {
                return Err(Error::Argument(format!(
                    "Lyapunov function must vanish off the domain (state {i} has {})",
                    varphi[i]
                )));
            }
            continue;
        }
        if !(varphi[i] > 0.0) {
            return Err(Error::Argument(format!(
                "Lyapunov function must be positive on the domain (state {i} has {})",
                varphi[i]
            )));
        }
        let lv: f64 = (0..chain.n()).map(|j| q[(i, j)] * varphi[j]).sum();
        sup = sup.max(lv / varphi[i]);
    }
    Ok(-sup)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub lambda0: f64,
    pub multiplicity: usize,
    pub phi: Vec<f64>,
    /// Absent when the chain is killed, reducible or has one state.
    #[serde(with = "extended_f64_opt", default)]
    pub lambda1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1_note: Option<String>,
    pub pi_omega_c: f64,
    #[serde(
        with = "extended_f64_opt",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub lyapunov_delta: Option<f64>,
}

impl SpectralReport {
    pub fn compute(chain: &Chain, mask: &DomainMask, varphi: Option<&[f64]>) -> Result<Self> {
        let pair = dirichlet_pair(chain, mask)?;
        let (lambda1, lambda1_note) = match spectral_gap(chain) {
            Ok(l1) => (Some(l1), None),
            Err(e @ (Error::Generator(_) | Error::Reducible(_) | Error::Argument(_))) => {
                (None, Some(format!("lambda1 undefined: {e}")))
            }
            Err(e) => return Err(e),
        };
        let pi = chain.measure().normalized();
        let pi_omega_c = (0..chain.n())
            .filter(|&i| !mask.contains(i))
            .map(|i| pi.weights()[i])
            .sum();
        let lyapunov_delta = varphi.map(|v| lyapunov_delta(chain, mask, v)).transpose()?;
        Ok(SpectralReport {
            lambda0: pair.lambda0,
            multiplicity: pair.multiplicity,
            phi: pair.phi,
            lambda1,
            lambda1_note,
            pi_omega_c,
            lyapunov_delta,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Satisfied,
    /// Satisfied with `|slack| <= tol::STRUCTURAL`.
    Equality,
    Violated,
    Skipped,
}

impl BoundStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundStatus::Satisfied => "satisfied",
            BoundStatus::Equality => "equality",
            BoundStatus::Violated => "violated",
            BoundStatus::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub bound: String,
    /// `None` for bounds that do not depend on `beta`.
    #[serde(with = "extended_f64_opt")]
    pub beta: Option<f64>,
    #[serde(with = "extended_f64")]
    pub lhs: f64,
    #[serde(with = "extended_f64")]
    pub rhs: f64,
    /// Signed margin, positive when the inequality holds, relative to
    /// `max(1, |lhs|, |rhs|)`.
    #[serde(with = "extended_f64")]
    pub slack: f64,
    pub status: BoundStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundEntry {
    pub fn satisfied(&self) -> bool {
        matches!(self.status, BoundStatus::Satisfied | BoundStatus::Equality)
    }

    fn skipped(bound: &str, beta: Option<f64>, reason: impl Into<String>) -> Self {
        BoundEntry {
            bound: bound.to_string(),
            beta,
            lhs: f64::NAN,
            rhs: f64::NAN,
            slack: f64::NAN,
            status: BoundStatus::Skipped,
            note: Some(reason.into()),
        }
    }

    /// `lhs <= rhs`.
    fn at_most(bound: &str, beta: Option<f64>, lhs: f64, rhs: f64) -> Self {
        Self::compare(bound, beta, lhs, rhs, rhs - lhs)
    }

    /// `lhs >= rhs`.
    fn at_least(bound: &str, beta: Option<f64>, lhs: f64, rhs: f64) -> Self {
        Self::compare(bound, beta, lhs, rhs, lhs - rhs)
    }

    fn compare(bound: &str, beta: Option<f64>, lhs: f64, rhs: f64, margin: f64) -> Self {
        let slack = margin / 1f64.max(lhs.abs()).max(rhs.abs());
        let status = if slack.abs() <= tol::STRUCTURAL {
            BoundStatus::Equality
        } else if slack >= LEDGER_SLACK {
            BoundStatus::Satisfied
        } else {
            BoundStatus::Violated
        };
        BoundEntry {
            bound: bound.to_string(),
            beta,
            lhs,
            rhs,
            slack,
            status,
            note: None,
        }
    }

    fn with_note(mut self, note: Option<String>) -> Self {
        if note.is_some() {
            self.note = note;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundLedger {
    pub spectral: SpectralReport,
    pub entries: Vec<BoundEntry>,
}

impl BoundLedger {
    pub fn all_satisfied(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.status != BoundStatus::Violated)
    }

    pub fn violations(&self) -> impl Iterator<Item = &BoundEntry> {
        self.entries
            .iter()
            .filter(|e| e.status == BoundStatus::Violated)
    }

    pub fn find(&self, bound: &str, beta: Option<f64>) -> Option<&BoundEntry> {
        self.entries
            .iter()
            .find(|e| e.bound == bound && e.beta == beta)
    }

    /// Columns `bound,beta,lhs,rhs,slack,status`.
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .entries
            .iter()
            .map(|e| {
                vec![
                    e.bound.clone(),
                    e.beta.map(fmt_f64).unwrap_or_default(),
                    fmt_f64(e.lhs),
                    fmt_f64(e.rhs),
                    fmt_f64(e.slack),
                    e.status.as_str().to_string(),
                ]
            })
            .collect();
        csv_string(&["bound", "beta", "lhs", "rhs", "slack", "status"], &rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ledger serializes")
    }
}

/// `pi`-averages of the exact exit functionals at one `beta`.
struct Averages {
    laplace: f64,
    exp_moment: Option<f64>,
}

fn averages(chain: &Chain, mask: &DomainMask, beta: f64, lambda0: f64) -> Result<Averages> {
    let pi = chain.measure().normalized();
    let laplace = pi.integrate(&exit_laplace(chain, mask, beta)?);
    let exp_moment = match exit_exp_moment(chain, mask, beta, lambda0)? {
        ExpMoment::Finite(v) => Some(pi.integrate(&v)),
        ExpMoment::Infinite => None,
    };
    Ok(Averages {
        laplace,
        exp_moment,
    })
}

/// Checks every spectral bound on the exact exit functionals of `mask`.
///
/// Bound families:
///
/// * `i`: `E e^{b tau} <= 1 + b/(l0 - b)`, `b < l0`
/// * `ii`: `E e^{b tau} <= 1 + b/(l1 pi(Omega^c) - b)`, `b < l1 pi(Omega^c)`
/// * `iii`: `E e^{b tau} >= 1 + b pi(phi)^2 / ((l0 - b) pi(phi^2))`
/// * `iv`: `E e^{-b tau} >= 1 - b/(l0 + b)` and `E tau <= 1/l0`
/// * `v`: `E e^{-b tau} <= 1 - b pi(phi)^2 / ((l0 + b) pi(phi^2))` and
///   `E tau >= pi(phi)^2 / (l0 pi(phi^2))`
/// * `vi`: `l0 >= l1 pi(Omega^c)`
/// * `vii`: `(E e^{tau} - E e^{-tau}) / 2 <= l0 / ((l0 - 1)(l0 + 1))`, `l0 > 1`
/// * `viii`: `i` and `iv` with the Lyapunov ratio `delta` in place of `l0`,
///   plus `delta <= l0`
///
/// Expectations are under `pi`.
pub fn bounds_report(
    chain: &Chain,
    mask: &DomainMask,
    betas: &[f64],
    lyapunov: Option<&[f64]>,
) -> Result<BoundLedger> {
    let spectral = SpectralReport::compute(chain, mask, lyapunov)?;
    let pi = chain.measure().normalized();
    let l0 = spectral.lambda0;
    let l1c = spectral.lambda1.map(|l1| l1 * spectral.pi_omega_c);
    let no_l1 = || {
        spectral
            .lambda1_note
            .clone()
            .unwrap_or_else(|| "lambda1 undefined".into())
    };
    let pi_phi = pi.integrate(&spectral.phi);
    let pi_phi2: f64 = pi.inner(&spectral.phi, &spectral.phi);
    let ratio = pi_phi * pi_phi / pi_phi2;
    let trivial = (pi_phi.abs() <= tol::STRUCTURAL)
        .then(|| "pi(phi) = 0: the bound reduces to a trivial one".to_string());
    let degenerate = (spectral.multiplicity > 1)
        .then(|| format!("lambda0 has multiplicity {}", spectral.multiplicity));
    let phi_note = trivial.clone().or(degenerate.clone());

    let mut entries = Vec::new();
    let mean = if l0 > 0.0 {
        Some(pi.integrate(&exit_mean(chain, mask)?))
    } else {
        None
    };

    for &beta in betas {
        let b = Some(beta);
        if !(beta > 0.0) || !beta.is_finite() {
            for name in ["i", "ii", "iii", "iv_laplace", "v_laplace"] {
                entries.push(BoundEntry::skipped(
                    name,
                    b,
                    "beta must be positive and finite",
                ));
            }
            continue;
        }
        let avg = averages(chain, mask, beta, l0)?;
        match avg.exp_moment {
            Some(e) => {
                entries.push(BoundEntry::at_most("i", b, e, 1.0 + beta / (l0 - beta)));
                match l1c {
                    Some(l1c) if beta < l1c => {
                        entries.push(BoundEntry::at_most("ii", b, e, 1.0 + beta / (l1c - beta)))
                    }
                    Some(_) => entries.push(BoundEntry::skipped(
                        "ii",
                        b,
                        "beta is not below lambda1 * pi(Omega^c)",
                    )),
                    None => entries.push(BoundEntry::skipped("ii", b, no_l1())),
                }
                entries.push(
                    BoundEntry::at_least("iii", b, e, 1.0 + beta * ratio / (l0 - beta))
                        .with_note(phi_note.clone()),
                );
            }
            None => {
                for name in ["i", "ii", "iii"] {
                    entries.push(BoundEntry::skipped(
                        name,
                        b,
                        "beta is not below lambda0: the exponential moment is infinite",
                    ));
                }
            }
        }
        entries.push(BoundEntry::at_least(
            "iv_laplace",
            b,
            avg.laplace,
            1.0 - beta / (l0 + beta),
        ));
        entries.push(
            BoundEntry::at_most(
                "v_laplace",
                b,
                avg.laplace,
                1.0 - beta * ratio / (l0 + beta),
            )
            .with_note(phi_note.clone()),
        );
    }

    match mean {
        Some(m) => {
            entries.push(BoundEntry::at_most("iv_mean", None, m, 1.0 / l0));
            entries.push(
                BoundEntry::at_least("v_mean", None, m, ratio / l0).with_note(phi_note.clone()),
            );
        }
        None => {
            for name in ["iv_mean", "v_mean"] {
                entries.push(BoundEntry::skipped(name, None, "lambda0 = 0"));
            }
        }
    }

    match l1c {
        Some(_) if spectral.pi_omega_c <= 0.0 => {
            entries.push(BoundEntry::skipped("vi", None, "Omega^c has zero mass"))
        }
        Some(l1c) => entries.push(BoundEntry::at_least("vi", None, l0, l1c)),
        None => entries.push(BoundEntry::skipped("vi", None, no_l1())),
    }

    if l0 > 1.0 {
        let avg = averages(chain, mask, 1.0, l0)?;
        match avg.exp_moment {
            Some(e) => entries.push(BoundEntry::at_most(
                "vii",
                Some(1.0),
                (e - avg.laplace) / 2.0,
                l0 / ((l0 - 1.0) * (l0 + 1.0)),
            )),
            None => entries.push(BoundEntry::skipped(
                "vii",
                Some(1.0),
                "lambda0 is within the spectral edge of 1",
            )),
        }
    } else {
        entries.push(BoundEntry::skipped(
            "vii",
            Some(1.0),
            "requires lambda0 > 1",
        ));
    }

    match spectral.lyapunov_delta {
        None => entries.push(BoundEntry::skipped(
            "viii",
            None,
            "no Lyapunov function supplied",
        )),
        Some(delta) if !(delta > 0.0) => entries.push(BoundEntry::skipped(
            "viii",
            None,
            format!("Lyapunov ratio delta = {delta} is not positive"),
        )),
        Some(delta) => {
            entries.push(BoundEntry::at_most("viii_delta", None, delta, l0));
            if let Some(m) = mean {
                entries.push(BoundEntry::at_most("viii_mean", None, m, 1.0 / delta));
            }
            for &beta in betas.iter().filter(|b| **b > 0.0 && b.is_finite()) {
                let b = Some(beta);
                let avg = averages(chain, mask, beta, l0)?;
                entries.push(BoundEntry::at_least(
                    "viii_laplace",
                    b,
                    avg.laplace,
                    1.0 - beta / (delta + beta),
                ));
                match avg.exp_moment {
                    Some(e) if beta < delta => entries.push(BoundEntry::at_most(
                        "viii_exp",
                        b,
                        e,
                        1.0 + beta / (delta - beta),
                    )),
                    _ => entries.push(BoundEntry::skipped(
                        "viii_exp",
                        b,
                        "beta is not below delta",
                    )),
                }
            }
        }
    }

    Ok(BoundLedger { spectral, entries })
}
