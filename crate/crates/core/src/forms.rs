//! Finite-state generators, reference measures and the bilinear forms they induce.
//!
//! A [`Chain`] is a generator `L` (a sub-Markov rate matrix) together with a
//! strictly positive reference measure `mu`. Every quantity downstream is
//! expressed through the form
//!
//! ```text
//! E_beta(f, g) = <(beta - L) f, g>_mu = sum_x mu(x) ((beta - L) f)(x) g(x)
//! ```
//!
//! and the dual generator `L~ = M^{-1} L^T M` (`M = diag(mu)`), which is the
//! adjoint of `L` in `L^2(mu)`. On a finite space "quasi-everywhere" means
//! "at every state", so no capacity machinery is needed.

use std::sync::OnceLock;

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::tol;

/// Strictly positive weights indexed by state.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    weights: Vec<f64>,
    normalized: bool,
}

impl Measure {
    /// Builds a measure; `normalized` is set when the weights sum to one.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Measure("no states".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::Measure(format!(
                "weight of state {i} is {w}; full support requires every weight > 0"
            )));
        }
        let total: f64 = weights.iter().sum();
        let normalized = (total - 1.0).abs() <= tol::STRUCTURAL;
        Ok(Measure {
            weights,
            normalized,
        })
    }

    /// A probability measure; rejects weights that do not sum to one.
    pub fn probability(weights: Vec<f64>) -> Result<Self> {
        let m = Self::new(weights)?;
        if !m.normalized {
            return Err(Error::Measure(format!(
                "weights sum to {}, not 1",
                m.total()
            )));
        }
        Ok(m)
    }

    pub fn uniform_probability(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n]).map(|mut m| {
            m.normalized = true;
            m
        })
    }

    pub fn counting(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// The probability measure `mu / mu(E)`.
    pub fn normalized(&self) -> Measure {
        if self.normalized {
            return self.clone();
        }
        let t = self.total();
        Measure {
            weights: self.weights.iter().map(|w| w / t).collect(),
            normalized: true,
        }
    }

    /// `<f, g>_mu`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    /// `mu(f)`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, a)| w * a).sum()
    }
}

/// Dense rate matrix `Q`.
///
/// Validated generators have nonnegative off-diagonal entries and row sums at
/// most zero; the row-sum defect is the killing (exit) rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    matrix: Matrix,
}

impl Generator {
    pub fn new(matrix: Matrix) -> Result<Self> {
        let g = Generator::from_matrix_unchecked(matrix)?;
        let (offdiag, rowsum) = g.markov_defects();
        let scale = g.scale();
        if offdiag > tol::STRUCTURAL * scale {
            let (i, j) = g.most_negative_offdiagonal();
            return Err(Error::NegativeRate {
                row: i,
                col: j,
                value: g.matrix[(i, j)],
                k_threshold: None,
            });
        }
        if rowsum > tol::STRUCTURAL * scale {
            return Err(Error::Generator(format!(
                "a row sums to {rowsum:e} > 0; rows must sum to at most 0"
            )));
        }
        Ok(g)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::Dimension {
                what: "generator row",
                expected: n,
                got: r.len(),
            });
        }
        Self::new(Matrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Square and finite, without sign checks. Used for dual generators,
    /// which need not be Markov.
    pub fn from_matrix_unchecked(matrix: Matrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Generator(format!(
                "matrix is {}x{}, not square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.nrows() == 0 {
            return Err(Error::Generator("no states".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Generator("non-finite entry".into()));
        }
        Ok(Generator { matrix })
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    /// Largest absolute diagonal entry, at least 1; reference scale for tolerances.
    pub fn scale(&self) -> f64 {
        self.matrix.diagonal().amax().max(1.0)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.sum()).collect()
    }

    /// `(max negative off-diagonal magnitude, max positive row sum)`, both `>= 0`.
    pub fn markov_defects(&self) -> (f64, f64) {
        let n = self.size();
        let mut off = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off = off.max(-self.matrix[(i, j)]);
                }
            }
        }
        let row = self.row_sums().into_iter().fold(0.0f64, f64::max);
        (off, row)
    }

    fn most_negative_offdiagonal(&self) -> (usize, usize) {
        let n = self.size();
        let mut best = (0, 0, f64::INFINITY);
        for i in 0..n {
            for j in 0..n {
                if i != j && self.matrix[(i, j)] < best.2 {
                    best = (i, j, self.matrix[(i, j)]);
                }
            }
        }
        (best.0, best.1)
    }
}

/// Generator plus reference measure: the finite carrier of a semi-Dirichlet form.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    generator: Generator,
    measure: Measure,
    labels: Option<Vec<String>>,
}

impl Chain {
    pub fn new(generator: Generator, measure: Measure) -> Result<Self> {
        if generator.size() != measure.len() {
            return Err(Error::Dimension {
                what: "measure length vs generator size",
                expected: generator.size(),
                got: measure.len(),
            });
        }
        Ok(Chain {
            generator,
            measure,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::Dimension {
                what: "state labels",
                expected: self.n(),
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.generator.size()
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn q(&self) -> &Matrix {
        self.generator.matrix()
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => i.to_string(),
        }
    }

    /// Total exit (killing) rate `-sum_y Q(x, y)` per state.
    pub fn killing_rates(&self) -> Vec<f64> {
        self.generator.row_sums().into_iter().map(|s| -s).collect()
    }

    /// `max |mu(x) Q(x,y) - mu(y) Q(y,x)|`, scaled by the largest `|mu Q|` entry.
    pub fn reversibility_defect(&self) -> f64 {
        let n = self.n();
        let w = self.measure.weights();
        let q = self.q();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let a = w[i] * q[(i, j)];
                scale = scale.max(a.abs());
                if j > i {
                    worst = worst.max((a - w[j] * q[(j, i)]).abs());
                }
            }
        }
        worst / scale.max(f64::MIN_POSITIVE)
    }

    /// Detailed balance `mu(x) Q(x,y) = mu(y) Q(y,x)` within [`tol::STRUCTURAL`].
    pub fn is_reversible(&self) -> bool {
        self.reversibility_defect() <= tol::STRUCTURAL
    }

    pub fn require_reversible(&self) -> Result<()> {
        let d = self.reversibility_defect();
        if d <= tol::STRUCTURAL {
            Ok(())
        } else {
            Err(Error::NotReversible { asymmetry: d })
        }
    }

    /// The chain driven by the dual generator, same measure. May be non-Markov.
    pub fn dual(&self) -> Chain {
        Chain {
            generator: dual_generator(self),
            measure: self.measure.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Same generator, measure rescaled to a probability.
    pub fn with_normalized_measure(&self) -> Chain {
        Chain {
            generator: self.generator.clone(),
            measure: self.measure.normalized(),
            labels: self.labels.clone(),
        }
    }

    pub fn to_document(&self) -> ChainDocument {
        ChainDocument {
            states: (0..self.n())
                .map(|i| StateLabel::Name(self.label(i)))
                .collect(),
            mu: self.measure.weights().to_vec(),
            q: self.generator.rows(),
        }
    }

    pub fn from_document(doc: &ChainDocument) -> Result<Self> {
        let n = doc.q.len();
        if doc.states.len() != n {
            return Err(Error::Dimension {
                what: "states list",
                expected: n,
                got: doc.states.len(),
            });
        }
        let chain = Chain::new(Generator::from_rows(&doc.q)?, Measure::new(doc.mu.clone())?)?;
        chain.with_labels(doc.states.iter().map(StateLabel::to_name).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("finite chain serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ChainDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

/// JSON layout `{"states": [...], "mu": [...], "Q": [[...]]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChainDocument {
    pub states: Vec<StateLabel>,
    pub mu: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
}

/// State names may be given as strings or integers.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum StateLabel {
    Index(i64),
    Name(String),
}

impl StateLabel {
    pub fn to_name(&self) -> String {
        match self {
            StateLabel::Index(i) => i.to_string(),
            StateLabel::Name(s) => s.clone(),
        }
    }
}

/// `L~ = M^{-1} L^T M`.
pub fn dual_generator(chain: &Chain) -> Generator {
    let w = chain.measure().weights();
    let q = chain.q();
    let n = chain.n();
    let m = Matrix::from_fn(n, n, |i, j| q[(j, i)] * w[j] / w[i]);
    Generator::from_matrix_unchecked(m).expect("dual of a valid generator is finite and square")
}

/// Matrix `K` with `E_beta(f, g) = f^T K g`, i.e. `K = (beta I - L)^T M`.
pub fn form_matrix(chain: &Chain, beta: f64) -> Matrix {
    let n = chain.n();
    let w = chain.measure().weights();
    let q = chain.q();
    Matrix::from_fn(n, n, |i, j| {
        let shift = if i == j { beta } else { 0.0 };
        (shift - q[(j, i)]) * w[j]
    })
}

/// `beta0` estimate: `max(0, -lambda_min)` of the symmetric part of `E_0`
/// in the `mu`-weighted inner product. Values below the structural tolerance
/// (relative to the generator scale) are reported as exactly zero.
pub fn lower_bound_estimate(chain: &Chain) -> f64 {
    let s0 = linalg::symmetrize(&form_matrix(chain, 0.0));
    let (vals, _) = linalg::weighted_symmetric_eigen(&s0, chain.measure().weights());
    let b = (-vals[0]).max(0.0);
    if b <= tol::STRUCTURAL * chain.generator().scale() * chain.n() as f64 {
        0.0
    } else {
        b
    }
}

/// `sup |E_p(f,g)| / sqrt(E_p(f,f) E_p(g,g))` at probe shift `p`, computed as
/// the spectral norm of `R^{-1} K_p R^{-T}` with `R R^T` the Cholesky factor of
/// the symmetric part. `+inf` when the symmetric part is not positive definite.
pub fn sector_constant_at(chain: &Chain, probe: f64) -> f64 {
    let k = form_matrix(chain, probe);
    let s = linalg::symmetrize(&k);
    let Some(chol) = Cholesky::new(s) else {
        return f64::INFINITY;
    };
    let r = chol.l();
    let Some(x) = r.solve_lower_triangular(&k) else {
        return f64::INFINITY;
    };
    // x = R^{-1} K; want R^{-1} K R^{-T} = (R^{-1} (R^{-1} K)^T)^T
    let Some(y) = r.solve_lower_triangular(&x.transpose()) else {
        return f64::INFINITY;
    };
    let sv = y.singular_values();
    let c = sv.iter().copied().fold(0.0, f64::max);
    // the diagonal pair f = g already gives ratio one
    c.max(1.0)
}

/// A chain viewed through its shifted form `E_beta`.
#[derive(Debug)]
pub struct FormView {
    chain: Chain,
    beta: f64,
    primal_matrix: Matrix,
    dual_generator: Generator,
    beta0: f64,
    sector: OnceLock<f64>,
}

impl Clone for FormView {
    fn clone(&self) -> Self {
        let sector = OnceLock::new();
        if let Some(c) = self.sector.get() {
            let _ = sector.set(*c);
        }
        FormView {
            chain: self.chain.clone(),
            beta: self.beta,
            primal_matrix: self.primal_matrix.clone(),
            dual_generator: self.dual_generator.clone(),
            beta0: self.beta0,
            sector,
        }
    }
}

impl FormView {
    pub fn new(chain: Chain, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::Argument(format!(
                "beta must be finite and >= 0, got {beta}"
            )));
        }
        let primal_matrix = form_matrix(&chain, beta);
        let dual_generator = dual_generator(&chain);
        let beta0 = lower_bound_estimate(&chain);
        Ok(FormView {
            chain,
            beta,
            primal_matrix,
            dual_generator,
            beta0,
            sector: OnceLock::new(),
        })
    }

    /// Same chain, different shift.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::Argument(format!(
                "beta must be finite and >= 0, got {beta}"
            )));
        }
        let mut v = self.clone();
        v.beta = beta;
        v.primal_matrix = form_matrix(&self.chain, beta);
        Ok(v)
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `K` with `E_beta(f, g) = f^T K g`.
    pub fn primal_matrix(&self) -> &Matrix {
        &self.primal_matrix
    }

    pub fn dual_generator(&self) -> &Generator {
        &self.dual_generator
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    /// Sector constant probed at `beta0 + 1`; computed on first use.
    pub fn sector_constant(&self) -> f64 {
        *self
            .sector
            .get_or_init(|| sector_constant_at(&self.chain, self.beta0 + tol::SECTOR_PROBE_OFFSET))
    }

    pub fn is_symmetric(&self) -> bool {
        self.chain.is_reversible()
    }
}

/// `E_beta(f, g) = <(beta - L) f, g>_mu`.
pub fn eval_form(view: &FormView, f: &[f64], g: &[f64]) -> Result<f64> {
    let n = view.chain().n();
    for v in [f, g] {
        if v.len() != n {
            return Err(Error::Dimension {
                what: "form argument",
                expected: n,
                got: v.len(),
            });
        }
    }
    let fv = Vector::from_column_slice(f);
    let gv = Vector::from_column_slice(g);
    Ok(fv.dot(&(view.primal_matrix() * gv)))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Violation {
    pub check: String,
    pub magnitude: f64,
}

/// Numeric check of lower boundedness, the weak sector condition and the
/// Markov property of `L` and `L~`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ValidationReport {
    pub beta0_estimate: f64,
    pub beta_probe: f64,
    #[serde(with = "crate::io::extended_f64")]
    pub sector_constant: f64,
    pub primal_markov_ok: bool,
    pub dual_markov_ok: bool,
    pub duality_defect: f64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn all_ok(&self) -> bool {
        self.primal_markov_ok
            && self.dual_markov_ok
            && self.duality_defect <= tol::VALIDATION
            && self.sector_constant.is_finite()
    }
}

fn duality_defect(chain: &Chain, dual: &Generator) -> f64 {
    // <L e_i, e_j>_mu = mu_j L_ji ; <e_i, L~ e_j>_mu = mu_i L~_ij
    let n = chain.n();
    let w = chain.measure().weights();
    let q = chain.q();
    let d = dual.matrix();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((w[j] * q[(j, i)] - w[i] * d[(i, j)]).abs());
        }
    }
    worst
}

pub fn validate_assumption_a(chain: &Chain, beta_probe: f64) -> ValidationReport {
    let beta0 = lower_bound_estimate(chain);
    let dual = dual_generator(chain);
    let mut violations = Vec::new();
    let mut record = |name: &str, m: f64| {
        if m > 0.0 {
            violations.push(Violation {
                check: name.to_string(),
                magnitude: m,
            });
        }
    };

    let (p_off, p_row) = chain.generator().markov_defects();
    let (d_off, d_row) = dual.markov_defects();
    record("primal_offdiagonal_nonnegative", p_off);
    record("primal_row_sum_nonpositive", p_row);
    record("dual_offdiagonal_nonnegative", d_off);
    record("dual_row_sum_nonpositive", d_row);
    let dd = duality_defect(chain, &dual);
    record("duality_identity", dd);

    let sector_constant = if beta_probe > beta0 {
        sector_constant_at(chain, beta_probe)
    } else {
        record(
            "sector_probe_not_above_beta0",
            (beta0 - beta_probe).max(f64::MIN_POSITIVE),
        );
        f64::INFINITY
    };

    ValidationReport {
        beta0_estimate: beta0,
        beta_probe,
        sector_constant,
        primal_markov_ok: p_off <= tol::VALIDATION && p_row <= tol::VALIDATION,
        dual_markov_ok: d_off <= tol::VALIDATION && d_row <= tol::VALIDATION,
        duality_defect: dd,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(rows: &[Vec<f64>], mu: Vec<f64>) -> Chain {
        Chain::new(
            Generator::from_rows(rows).unwrap(),
            Measure::new(mu).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn dual_under_uniform_measure_is_transpose() {
        let c = chain(&[vec![-3.0, 2.0], vec![0.0, -3.0]], vec![1.0, 1.0]);
        let d = dual_generator(&c);
        assert_eq!(d.rows(), vec![vec![-3.0, 0.0], vec![2.0, -3.0]]);
    }

    #[test]
    fn dual_with_weights_and_pairing() {
        let c = chain(&[vec![-1.0, 1.0], vec![0.0, 0.0]], vec![1.0, 2.0]);
        let d = dual_generator(&c);
        // L~_ij = L_ji mu_j / mu_i
        assert_eq!(d.rows(), vec![vec![-1.0, 0.0], vec![0.5, 0.0]]);
        let col = |m: &Matrix, j: usize| -> Vec<f64> { (0..2).map(|x| m[(x, j)]).collect() };
        let e = |i: usize| -> Vec<f64> { (0..2).map(|x| if x == i { 1.0 } else { 0.0 }).collect() };
        for i in 0..2 {
            for j in 0..2 {
                let lhs = c.measure().inner(&col(c.q(), i), &e(j));
                let rhs = c.measure().inner(&e(i), &col(d.matrix(), j));
                assert_eq!(lhs, rhs, "pair ({i},{j})");
            }
        }
        // <L e1, e0>_mu = mu_0 L_01 = 1 = mu_1 L~_10 = <e1, L~ e0>_mu
        assert_eq!(c.measure().inner(&col(c.q(), 1), &e(0)), 1.0);
    }

    #[test]
    fn reversible_chain_is_self_dual() {
        // mu = (1, 2), Q01 = 2, Q10 = 1: mu0 Q01 = 2 = mu1 Q10
        let c = chain(&[vec![-2.0, 2.0], vec![1.0, -1.0]], vec![1.0, 2.0]);
        assert!(c.is_reversible());
        let d = dual_generator(&c);
        assert!((d.matrix() - c.q()).amax() < 1e-15);
    }

    #[test]
    fn single_state_form_value() {
        let c = chain(&[vec![-2.0]], vec![1.0]);
        let v = FormView::new(c, 1.0).unwrap();
        assert_eq!(eval_form(&v, &[1.0], &[1.0]).unwrap(), 3.0);
        assert_eq!(eval_form(&v, &[0.0], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn form_rejects_wrong_length() {
        let c = chain(&[vec![-2.0]], vec![1.0]);
        let v = FormView::new(c, 1.0).unwrap();
        assert!(matches!(
            eval_form(&v, &[1.0, 2.0], &[1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn nonsymmetric_example_has_zero_beta0() {
        let c = chain(&[vec![-3.0, 2.0], vec![0.0, -3.0]], vec![1.0, 1.0]);
        let r = validate_assumption_a(&c, 1.0);
        assert_eq!(r.beta0_estimate, 0.0);
        assert!(r.primal_markov_ok && r.dual_markov_ok);
        assert!(r.sector_constant >= 1.0 && r.sector_constant.is_finite());
    }

    #[test]
    fn symmetric_chain_sector_constant_is_one() {
        let c = chain(
            &[
                vec![-1.0, 1.0, 0.0],
                vec![1.0, -2.0, 1.0],
                vec![0.0, 1.0, -1.0],
            ],
            vec![1.0, 1.0, 1.0],
        );
        let r = validate_assumption_a(&c, 0.5);
        assert_eq!(r.beta0_estimate, 0.0);
        assert!((r.sector_constant - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dual_markov_failure_detected() {
        let c = chain(&[vec![-1.0, 1.0], vec![5.0, -5.0]], vec![1.0, 10.0]);
        let r = validate_assumption_a(&c, 10.0);
        assert!(r.primal_markov_ok);
        assert!(!r.dual_markov_ok);
        // L~ = [[-1, 50], [0.1, -5]]: first row sums to 49
        assert!(r
            .violations
            .iter()
            .any(|v| v.check == "dual_row_sum_nonpositive" && (v.magnitude - 49.0).abs() < 1e-12));
    }

    #[test]
    fn probe_below_beta0_reports_infinite_sector() {
        let c = chain(&[vec![-1.0, 1.0], vec![5.0, -5.0]], vec![1.0, 10.0]);
        let r = validate_assumption_a(&c, 0.0);
        assert!(r.beta0_estimate > 0.0);
        assert!(r.sector_constant.is_infinite());
        assert!(r
            .violations
            .iter()
            .any(|v| v.check == "sector_probe_not_above_beta0"));
    }

    #[test]
    fn generator_rejects_bad_signs() {
        assert!(matches!(
            Generator::from_rows(&[vec![-1.0, -1.0], vec![0.0, 0.0]]),
            Err(Error::NegativeRate { .. })
        ));
        assert!(Generator::from_rows(&[vec![-1.0, 2.0], vec![0.0, 0.0]]).is_err());
        assert!(Measure::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn chain_json_layout() {
        let c = chain(&[vec![-1.0, 1.0], vec![0.5, -0.5]], vec![0.25, 0.75]);
        let text = c.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v.get("states").is_some() && v.get("mu").is_some() && v.get("Q").is_some());
        let back = Chain::from_json(&text).unwrap();
        assert_eq!(back.q(), c.q());
        assert!(back.measure().is_normalized());
        let parsed =
            Chain::from_json(r#"{"states":[0,"b"],"mu":[1,1],"Q":[[-1,1],[0,0]]}"#).unwrap();
        assert_eq!(parsed.label(1), "b");
    }
}
