//! Inf-sup variational formulas for exit-time functionals.
//!
//! With admissible sets `M_1 = {f = 0 off Omega, <xi, f>_mu = 1}` and
//! `M_0 = {g = 0 off Omega, <xi, g>_mu = 0}`,
//!
//! ```text
//! 1 / <xi, u_beta>_mu = inf_{f in M_1} sup_{g in M_0} E_beta(f + g, f - g)
//! ```
//!
//! where `u_beta` solves the restricted Poisson equation. Two independent
//! routes evaluate the right side:
//!
//! * [`SaddleMode::ClosedForm`] builds the optimizers from the primal and
//!   dual solutions, `f* = (w + w~)/2`, `g* = (w - w~)/2` with
//!   `w = u / <xi, u>`, `w~ = u~ / <xi, u>`;
//! * [`SaddleMode::Iterative`] solves the constrained quadratic saddle
//!   directly. The constraint is eliminated along the largest coordinate of
//!   `M xi`; the inner concave maximization and the outer convex minimization
//!   are then unconstrained quadratics solved by Cholesky.

use nalgebra::Cholesky;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{form_matrix, FormView, Measure};
use crate::linalg::{self, Matrix, Vector};
use crate::poisson::{solve_poisson, source_on_domain, DomainMask, Side};
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaddleMode {
    ClosedForm,
    Iterative,
}

/// Constraint and first-order residuals at a candidate saddle point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `max(|<xi, f> - 1|, |<xi, g>|)`.
    pub constraint: f64,
    /// Largest entry of the gradients of `(f, g) -> E_beta(f+g, f-g)`
    /// projected onto the constraint directions.
    pub stationarity: f64,
}

/// Outcome of checking the two one-sided saddle inequalities on random
/// admissible perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledCheck {
    pub directions: usize,
    /// `max_g E_beta(f* + g, f* - g) - value`; should be `<= 0`.
    pub max_upper_excess: f64,
    /// `max_f value - E_beta(f + g*, f - g*)`; should be `<= 0`.
    pub max_lower_deficit: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleSolution {
    pub value: f64,
    /// Outer optimizer, zero off `Omega`.
    pub f_star: Vec<f64>,
    /// Inner optimizer, zero off `Omega`.
    pub g_star: Vec<f64>,
    pub residuals: Residuals,
    pub method: SaddleMode,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sampled_check: Option<SampledCheck>,
    /// Smallest `mu`-Rayleigh quotient of the symmetric part on the
    /// constraint subspace (iterative mode only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub min_subspace_eigenvalue: Option<f64>,
}

/// `(f*, g*)` from the primal and dual potentials.
pub fn construct_optimizers(
    u: &[f64],
    u_dual: &[f64],
    xi: &[f64],
    measure: &Measure,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = measure.len();
    for (what, v) in [
        ("primal potential", u),
        ("dual potential", u_dual),
        ("source", xi),
    ] {
        if v.len() != n {
            return Err(Error::Dimension {
                what,
                expected: n,
                got: v.len(),
            });
        }
    }
    let s = measure.inner(xi, u);
    let scale = measure.inner(xi, xi).sqrt() * measure.inner(u, u).sqrt();
    if !(s.abs() > f64::EPSILON * scale) || !s.is_finite() {
        return Err(Error::DegenerateSource(s));
    }
    let f = u
        .iter()
        .zip(u_dual)
        .map(|(a, b)| (a + b) / (2.0 * s))
        .collect();
    let g = u
        .iter()
        .zip(u_dual)
        .map(|(a, b)| (a - b) / (2.0 * s))
        .collect();
    Ok((f, g))
}

/// Restricted quantities shared by both evaluation routes.
struct Restricted {
    idx: Vec<usize>,
    /// `E_beta(f, g) = f^T k g` on `Omega`.
    k: Matrix,
    /// `<xi, f>_mu = c^T f`.
    c: Vector,
    mu: Vector,
}

impl Restricted {
    fn new(view: &FormView, mask: &DomainMask, xi: &[f64]) -> Result<Self> {
        let chain = view.chain();
        if mask.len() != chain.n() {
            return Err(Error::Dimension {
                what: "domain mask",
                expected: chain.n(),
                got: mask.len(),
            });
        }
        let idx = mask.indices();
        let source = source_on_domain(mask, xi)?;
        let mu = linalg::subvector(chain.measure().weights(), &idx);
        let c = source.component_mul(&mu);
        if c.amax() == 0.0 {
            return Err(Error::DegenerateSource(0.0));
        }
        Ok(Restricted {
            k: linalg::submatrix(view.primal_matrix(), &idx),
            idx,
            c,
            mu,
        })
    }

    fn phi(&self, f: &Vector, g: &Vector) -> f64 {
        (f + g).dot(&(&self.k * (f - g)))
    }

    fn full(&self, v: &Vector, n: usize) -> Vec<f64> {
        linalg::extend_by_zero(v, &self.idx, n)
    }

    fn local(&self, v: &[f64]) -> Vector {
        linalg::subvector(v, &self.idx)
    }

    /// Projection onto `{c^T y = 0}`.
    fn project(&self, y: &Vector) -> Vector {
        y - &self.c * (self.c.dot(y) / self.c.dot(&self.c))
    }

    fn residuals(&self, f: &Vector, g: &Vector) -> Residuals {
        let s = linalg::symmetrize(&self.k);
        let nn = &self.k - self.k.transpose();
        // phi = f'Sf - g'Sg + g'Nf
        let grad_f = &s * f * 2.0 + nn.transpose() * g;
        let grad_g = &s * g * -2.0 + &nn * f;
        let constraint = (self.c.dot(f) - 1.0).abs().max(self.c.dot(g).abs());
        let stationarity = self
            .project(&grad_f)
            .amax()
            .max(self.project(&grad_g).amax());
        Residuals {
            constraint,
            stationarity,
        }
    }

    /// Null-space basis eliminating the coordinate where `|c|` is largest.
    fn null_space(&self) -> (usize, Matrix) {
        let m = self.c.len();
        let p = self.c.iamax();
        let mut z = Matrix::zeros(m, m - 1);
        let mut col = 0;
        for j in 0..m {
            if j == p {
                continue;
            }
            z[(j, col)] = 1.0;
            z[(p, col)] = -self.c[j] / self.c[p];
            col += 1;
        }
        (p, z)
    }
}

fn check_lower_bound(view: &FormView) -> Result<()> {
    if !(view.beta() > view.beta0()) {
        return Err(Error::BelowLowerBound {
            beta: view.beta(),
            beta0: view.beta0(),
        });
    }
    Ok(())
}

/// Evaluates the inf-sup formula for `1 / <xi, u_beta>`.
pub fn saddle_value(
    view: &FormView,
    mask: &DomainMask,
    xi: &[f64],
    mode: SaddleMode,
) -> Result<SaddleSolution> {
    check_lower_bound(view)?;
    let r = Restricted::new(view, mask, xi)?;
    match mode {
        SaddleMode::ClosedForm => closed_form(view, mask, xi, &r),
        SaddleMode::Iterative => iterative(view, &r),
    }
}

fn closed_form(
    view: &FormView,
    mask: &DomainMask,
    xi: &[f64],
    r: &Restricted,
) -> Result<SaddleSolution> {
    let chain = view.chain();
    let n = chain.n();
    let full_xi = r.full(&source_on_domain(mask, xi)?, n);
    let u = solve_poisson(chain, mask, view.beta(), &full_xi, Side::Primal)?;
    let ud = solve_poisson(chain, mask, view.beta(), &full_xi, Side::Dual)?;
    let aggregate = chain.measure().inner(&full_xi, &u.values);
    let (f_star, g_star) = construct_optimizers(&u.values, &ud.values, &full_xi, chain.measure())?;
    let value = 1.0 / aggregate;
    let f = r.local(&f_star);
    let g = r.local(&g_star);
    let check = sample_inequalities(r, &f, &g, value, tol::SADDLE_DIRECTIONS, tol::SADDLE_SEED);
    Ok(SaddleSolution {
        value,
        residuals: r.residuals(&f, &g),
        f_star,
        g_star,
        method: SaddleMode::ClosedForm,
        sampled_check: Some(check),
        min_subspace_eigenvalue: None,
    })
}

fn iterative(view: &FormView, r: &Restricted) -> Result<SaddleSolution> {
    let n = view.chain().n();
    let m = r.idx.len();
    let s = linalg::symmetrize(&r.k);
    let nn = &r.k - r.k.transpose();
    let (p, z) = if m > 1 {
        r.null_space()
    } else {
        (0, Matrix::zeros(1, 0))
    };
    let mut f0 = Vector::zeros(m);
    f0[p] = 1.0 / r.c[p];

    let (f, g, min_eig) = if m == 1 {
        (f0, Vector::zeros(1), None)
    } else {
        let h = z.transpose() * &s * &z;
        let inner = Cholesky::new(h.clone()).ok_or_else(|| Error::Singular {
            context: "inner quadratic is not negative definite on the constraint subspace".into(),
            condition: f64::INFINITY,
        })?;
        let gram = z.transpose() * Matrix::from_diagonal(&r.mu) * &z;
        let min_eig = subspace_min_eigenvalue(&h, &gram);

        // sup_g: y(f) = H^{-1} Z^T N f / 2
        let a = z.transpose() * &nn;
        let t = &s + a.transpose() * inner.solve(&a) * 0.25;
        let outer = Cholesky::new(z.transpose() * &t * &z).ok_or_else(|| Error::Singular {
            context: "outer quadratic is not positive definite on the constraint subspace".into(),
            condition: f64::INFINITY,
        })?;
        let x = -outer.solve(&(z.transpose() * &t * &f0));
        let f = &f0 + &z * x;
        let y = inner.solve(&(&a * &f)) * 0.5;
        let g = &z * y;
        (f, g, Some(min_eig))
    };

    let value = r.phi(&f, &g);
    Ok(SaddleSolution {
        value,
        residuals: r.residuals(&f, &g),
        f_star: r.full(&f, n),
        g_star: r.full(&g, n),
        method: SaddleMode::Iterative,
        sampled_check: None,
        min_subspace_eigenvalue: min_eig,
    })
}

fn subspace_min_eigenvalue(h: &Matrix, gram: &Matrix) -> f64 {
    match Cholesky::new(gram.clone()) {
        Some(ch) => {
            let l = ch.l();
            let x = l
                .solve_lower_triangular(h)
                .expect("gram factor is nonsingular");
            let y = l
                .solve_lower_triangular(&x.transpose())
                .expect("gram factor is nonsingular");
            linalg::min_symmetric_eigenvalue(&y)
        }
        None => f64::NAN,
    }
}

fn sample_inequalities(
    r: &Restricted,
    f_star: &Vector,
    g_star: &Vector,
    value: f64,
    count: usize,
    seed: u64,
) -> SampledCheck {
    let m = r.idx.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = f_star.norm().max(g_star.norm()).max(f64::MIN_POSITIVE);
    let direction = |rng: &mut ChaCha8Rng| -> Vector {
        let raw = Vector::from_fn(m, |_, _| StandardNormal.sample(rng));
        let d = r.project(&raw);
        let len = d.norm();
        if len <= 1e-12 * raw.norm() {
            return Vector::zeros(m);
        }
        // magnitudes spread over four decades around the optimizer's size
        let mag: f64 = 10f64.powf(rand::Rng::random_range(rng, -2.0..2.0));
        d * (mag * scale / len)
    };
    let mut upper = f64::NEG_INFINITY;
    let mut lower = f64::NEG_INFINITY;
    for _ in 0..count {
        let g = direction(&mut rng);
        upper = upper.max(r.phi(f_star, &g) - value);
        let f = f_star + direction(&mut rng);
        lower = lower.max(value - r.phi(&f, g_star));
    }
    if count == 0 {
        upper = 0.0;
        lower = 0.0;
    }
    SampledCheck {
        directions: count,
        max_upper_excess: upper,
        max_lower_deficit: lower,
        passed: upper.max(lower) <= tol::SADDLE_SAMPLING * value.abs().max(1.0),
    }
}

/// Checks both saddle inequalities at `(f_star, g_star)` on `count` random
/// admissible perturbations per side.
pub fn check_saddle_inequalities(
    view: &FormView,
    mask: &DomainMask,
    xi: &[f64],
    solution: &SaddleSolution,
    count: usize,
    seed: u64,
) -> Result<SampledCheck> {
    let r = Restricted::new(view, mask, xi)?;
    Ok(sample_inequalities(
        &r,
        &r.local(&solution.f_star),
        &r.local(&solution.g_star),
        solution.value,
        count,
        seed,
    ))
}

/// `min s^T A s` over `{c^T s = 1}` for symmetric positive definite `A`:
/// `1 / (c^T A^{-1} c)`.
fn single_constraint_minimum(a: &Matrix, c: &Vector, context: &str) -> Result<f64> {
    let ch = Cholesky::new(linalg::symmetrize(a)).ok_or_else(|| Error::Singular {
        context: context.to_string(),
        condition: f64::INFINITY,
    })?;
    let z = ch.solve(c);
    Ok(1.0 / c.dot(&z))
}

/// `inf_{f in M_1} E_beta(f, f)` for a symmetric form.
pub fn symmetric_inf(view: &FormView, mask: &DomainMask, xi: &[f64]) -> Result<f64> {
    view.chain().require_reversible()?;
    check_lower_bound(view)?;
    let r = Restricted::new(view, mask, xi)?;
    single_constraint_minimum(&r.k, &r.c, "E_beta restricted to the domain")
}

/// `inf { E_pi(f, f) - beta pi(f^2) : f = 0 off Omega, pi(f) = 1 } v 0` for a
/// reversible chain, with `pi` the normalized reference measure.
pub fn exp_moment_inf(view: &FormView, mask: &DomainMask, beta: f64, lambda0: f64) -> Result<f64> {
    let chain = view.chain();
    chain.require_reversible()?;
    if mask.len() != chain.n() {
        return Err(Error::Dimension {
            what: "domain mask",
            expected: chain.n(),
            got: mask.len(),
        });
    }
    if !(beta > 0.0) {
        return Err(Error::Argument(format!("beta must be > 0, got {beta}")));
    }
    if beta >= lambda0 - tol::SPECTRAL_EDGE {
        return Ok(0.0);
    }
    let normalized = chain.with_normalized_measure();
    let idx = mask.indices();
    let a = linalg::submatrix(&form_matrix(&normalized, -beta), &idx);
    let c = linalg::subvector(normalized.measure().weights(), &idx);
    let v = single_constraint_minimum(&a, &c, "E_{pi,-beta} restricted to the domain")?;
    Ok(v.max(0.0))
}
