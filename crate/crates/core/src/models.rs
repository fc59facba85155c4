//! Example processes: graph chains, grid discretizations of the jump
//! diffusion `kappa div(a grad) - k b.grad + epsilon Delta^{alpha/2}`, and
//! divergence-free perturbations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::forms::{Chain, ChainDocument, Generator, Measure, StateLabel};
use crate::linalg::Matrix;
use crate::poisson::DomainMask;
use crate::tol;

fn positive(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        Some(i) => Err(Error::Model(format!(
            "{what} must be positive and finite (entry {i} is {})",
            values[i]
        ))),
        None => Ok(()),
    }
}

fn nonnegative(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        Some(i) => Err(Error::Model(format!(
            "{what} must be nonnegative and finite (entry {i} is {})",
            values[i]
        ))),
        None => Ok(()),
    }
}

fn with_killing(mut q: Matrix, killing: Option<&[f64]>) -> Result<Matrix> {
    if let Some(k) = killing {
        if k.len() != q.nrows() {
            return Err(Error::Dimension {
                what: "killing rates",
                expected: q.nrows(),
                got: k.len(),
            });
        }
        nonnegative("killing rates", k)?;
        for (i, ki) in k.iter().enumerate() {
            q[(i, i)] -= ki;
        }
    }
    Ok(q)
}

fn fill_diagonal(q: &mut Matrix) {
    for i in 0..q.nrows() {
        let off: f64 = (0..q.ncols()).filter(|&j| j != i).map(|j| q[(i, j)]).sum();
        q[(i, i)] = -off;
    }
}

/// Birth-death chain on `up.len() + 1` states; `up[i]` is the rate
/// `i -> i+1`, `down[i]` the rate `i+1 -> i`. The measure solves detailed
/// balance and is normalized.
pub fn birth_death(up: &[f64], down: &[f64], killing: Option<&[f64]>) -> Result<Chain> {
    if up.len() != down.len() {
        return Err(Error::Dimension {
            what: "down rates",
            expected: up.len(),
            got: down.len(),
        });
    }
    positive("birth rates", up)?;
    positive("death rates", down)?;
    let n = up.len() + 1;
    let mut q = Matrix::zeros(n, n);
    let mut mu = vec![1.0; n];
    for i in 0..n - 1 {
        q[(i, i + 1)] = up[i];
        q[(i + 1, i)] = down[i];
        mu[i + 1] = mu[i] * up[i] / down[i];
    }
    fill_diagonal(&mut q);
    let q = with_killing(q, killing)?;
    Chain::new(Generator::new(q)?, Measure::new(mu)?.normalized())
}

/// Chain with jump rates `c(x, y) / mu(x)` for symmetric conductances `c`.
pub fn weighted_graph(
    edges: &[(usize, usize, f64)],
    mu: Vec<f64>,
    killing: Option<&[f64]>,
) -> Result<Chain> {
    let n = mu.len();
    positive("measure", &mu)?;
    let mut q = Matrix::zeros(n, n);
    for &(x, y, c) in edges {
        if x >= n || y >= n || x == y {
            return Err(Error::Model(format!(
                "invalid edge ({x}, {y}) on {n} states"
            )));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Model(format!("edge ({x}, {y}) has conductance {c}")));
        }
        q[(x, y)] += c / mu[x];
        q[(y, x)] += c / mu[y];
    }
    fill_diagonal(&mut q);
    let q = with_killing(q, killing)?;
    Chain::new(Generator::new(q)?, Measure::new(mu)?)
}

/// Complete graph on `n` states with uniform rate; uniform probability measure.
pub fn complete_graph(n: usize, rate: f64) -> Result<Chain> {
    if n == 0 {
        return Err(Error::Model(
            "complete graph needs at least one state".into(),
        ));
    }
    positive("rate", &[rate])?;
    let mut q = Matrix::from_element(n, n, rate);
    fill_diagonal(&mut q);
    Chain::new(Generator::new(q)?, Measure::uniform_probability(n)?)
}

/// Cycle on `n >= 3` states with rate to both neighbours; counting measure.
pub fn cycle(n: usize, rate: f64) -> Result<Chain> {
    if n < 3 {
        return Err(Error::Model(format!(
            "cycle needs at least 3 states, got {n}"
        )));
    }
    positive("rate", &[rate])?;
    let mut q = Matrix::zeros(n, n);
    for i in 0..n {
        q[(i, (i + 1) % n)] = rate;
        q[(i, (i + n - 1) % n)] = rate;
    }
    fill_diagonal(&mut q);
    Chain::new(Generator::new(q)?, Measure::counting(n)?)
}

/// A `mu`-antisymmetric, row-sum-free perturbation `Gamma = M^{-1} F` with
/// antisymmetric flux `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    gamma: Matrix,
}

impl FlowMatrix {
    /// Validates zero diagonal, zero row sums and antisymmetry of `M Gamma`.
    pub fn new(gamma: Matrix, measure: &Measure) -> Result<Self> {
        let n = measure.len();
        if gamma.nrows() != n || gamma.ncols() != n {
            return Err(Error::Dimension {
                what: "flow matrix",
                expected: n,
                got: gamma.nrows(),
            });
        }
        let mu = measure.weights();
        let scale = gamma.amax().max(1.0);
        let eps = tol::STRUCTURAL * scale * mu.iter().cloned().fold(1.0, f64::max);
        for i in 0..n {
            if gamma[(i, i)] != 0.0 {
                return Err(Error::Model(format!("flow has diagonal entry at {i}")));
            }
            let row: f64 = gamma.row(i).sum();
            if row.abs() > tol::STRUCTURAL * scale {
                return Err(Error::Model(format!("flow row {i} sums to {row:e}")));
            }
            for j in 0..i {
                let d = mu[i] * gamma[(i, j)] + mu[j] * gamma[(j, i)];
                if d.abs() > eps {
                    return Err(Error::Model(format!(
                        "flow is not antisymmetric in the weighted sense at ({i}, {j}): {d:e}"
                    )));
                }
            }
        }
        Ok(FlowMatrix { gamma })
    }

    pub fn from_flux(flux: &Matrix, measure: &Measure) -> Result<Self> {
        let mu = measure.weights();
        let gamma = Matrix::from_fn(flux.nrows(), flux.ncols(), |i, j| {
            if i == j {
                0.0
            } else {
                flux[(i, j)] / mu[i]
            }
        });
        Self::new(gamma, measure)
    }

    /// Unit circulation `i -> i+1` around a cycle of `n >= 3` states.
    pub fn circulant(measure: &Measure) -> Result<Self> {
        let n = measure.len();
        if n < 3 {
            return Err(Error::Model(format!(
                "circulant flow needs n >= 3, got {n}"
            )));
        }
        let mut f = Matrix::zeros(n, n);
        for i in 0..n {
            f[(i, (i + 1) % n)] += 1.0;
            f[((i + 1) % n, i)] -= 1.0;
        }
        Self::from_flux(&f, measure)
    }

    /// Counter-clockwise square plaquettes on an `nx x ny` grid (state
    /// `i + nx * j`), plaquette `(i, j)` weighted by `stream[i + (nx-1) * j]`.
    /// Adjacent plaquettes cancel on shared edges, so the flux is the discrete
    /// curl of `stream`.
    pub fn plaquettes(nx: usize, ny: usize, stream: &[f64], measure: &Measure) -> Result<Self> {
        let n = nx * ny;
        if measure.len() != n {
            return Err(Error::Dimension {
                what: "measure for plaquette flow",
                expected: n,
                got: measure.len(),
            });
        }
        let cells = nx.saturating_sub(1) * ny.saturating_sub(1);
        if stream.len() != cells {
            return Err(Error::Dimension {
                what: "plaquette weights",
                expected: cells,
                got: stream.len(),
            });
        }
        let mut f = Matrix::zeros(n, n);
        let id = |i: usize, j: usize| i + nx * j;
        for j in 0..ny.saturating_sub(1) {
            for i in 0..nx - 1 {
                let w = stream[i + (nx - 1) * j];
                let corners = [id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)];
                for k in 0..4 {
                    let (a, b) = (corners[k], corners[(k + 1) % 4]);
                    f[(a, b)] += w;
                    f[(b, a)] -= w;
                }
            }
        }
        Self::from_flux(&f, measure)
    }

    /// Plaquettes weighted by `sin(pi s) sin(pi t)` over the unit cell grid.
    pub fn sine_plaquettes(nx: usize, ny: usize, measure: &Measure) -> Result<Self> {
        let stream = sine_stream(nx, ny);
        Self::plaquettes(nx, ny, &stream, measure)
    }

    pub fn gamma(&self) -> &Matrix {
        &self.gamma
    }

    /// Largest `|k|` keeping every off-diagonal of `L0 + k Gamma` nonnegative.
    pub fn k_max(&self, base: &Chain) -> f64 {
        let l0 = base.q();
        let n = l0.nrows();
        let mut k = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                let g = self.gamma[(i, j)].abs();
                if i != j && g > 0.0 {
                    k = k.min(l0[(i, j)].max(0.0) / g);
                }
            }
        }
        k
    }
}

fn sine_stream(nx: usize, ny: usize) -> Vec<f64> {
    let (cx, cy) = (nx.saturating_sub(1), ny.saturating_sub(1));
    let mut s = Vec::with_capacity(cx * cy);
    for j in 0..cy {
        for i in 0..cx {
            let u = (i as f64 + 0.5) / cx as f64;
            let v = (j as f64 + 0.5) / cy as f64;
            s.push((std::f64::consts::PI * u).sin() * (std::f64::consts::PI * v).sin());
        }
    }
    s
}

/// `L0 + k Gamma` on the measure of `base`.
pub fn antisym_perturb(base: &Chain, flow: &FlowMatrix, k: f64) -> Result<Chain> {
    base.require_reversible()?;
    let flow = FlowMatrix::new(flow.gamma.clone(), base.measure())?;
    let k_max = flow.k_max(base);
    if !k.is_finite() || k.abs() > k_max * (1.0 + tol::STRUCTURAL) {
        return Err(Error::PerturbationTooLarge { k, k_max });
    }
    if k == 0.0 {
        return Ok(base.clone());
    }
    let q = base.q() + flow.gamma() * k;
    let chain = Chain::new(Generator::new(q)?, base.measure().clone())?;
    match base.labels() {
        Some(l) => chain.with_labels(l.to_vec()),
        None => Ok(chain),
    }
}

/// `kappa L_diff + epsilon L_jump` on the shared measure.
pub fn scaled_family(diff: &Chain, jump: &Chain, kappa: f64, epsilon: f64) -> Result<Chain> {
    if !(kappa >= 0.0 && epsilon >= 0.0) || (kappa == 0.0 && epsilon == 0.0) {
        return Err(Error::Model(format!(
            "scale factors must be nonnegative and not both zero (kappa = {kappa}, epsilon = {epsilon})"
        )));
    }
    if diff.n() != jump.n() {
        return Err(Error::Dimension {
            what: "jump part",
            expected: diff.n(),
            got: jump.n(),
        });
    }
    let (a, b) = (diff.measure().weights(), jump.measure().weights());
    if a.iter()
        .zip(b)
        .any(|(x, y)| (x - y).abs() > tol::STRUCTURAL * x.abs().max(y.abs()))
    {
        return Err(Error::Measure(
            "the two parts carry different measures".into(),
        ));
    }
    diff.require_reversible()?;
    jump.require_reversible()?;
    let q = diff.q() * kappa + jump.q() * epsilon;
    let chain = Chain::new(Generator::new(q)?, diff.measure().clone())?;
    match diff.labels() {
        Some(l) => chain.with_labels(l.to_vec()),
        None => Ok(chain),
    }
}

/// Diagonal diffusion matrix `a(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diffusivity {
    Isotropic {
        value: f64,
    },
    Diagonal {
        values: Vec<f64>,
    },
    /// Per interior point (in state order), one entry per axis.
    Field {
        values: Vec<Vec<f64>>,
    },
}

impl Default for Diffusivity {
    fn default() -> Self {
        Diffusivity::Isotropic { value: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftField {
    #[default]
    Zero,
    Constant {
        vector: Vec<f64>,
    },
    /// `b(x, y) = (-(y - cy), x - cx)` in two dimensions.
    Rotation {
        center: Vec<f64>,
    },
    /// Per interior point (in state order).
    Field {
        values: Vec<Vec<f64>>,
    },
}

fn default_one() -> f64 {
    1.0
}

/// Uniform-grid discretization parameters for the jump diffusion on a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridModelSpec {
    pub dimension: usize,
    /// `(lo, hi)` per axis; each side must be a multiple of `mesh_h`.
    pub domain_box: Vec<(f64, f64)>,
    pub mesh_h: f64,
    #[serde(default)]
    pub a: Diffusivity,
    /// Declared `(Lambda_1, Lambda_2)`; checked against `a` when present.
    #[serde(default)]
    pub ellipticity: Option<(f64, f64)>,
    #[serde(default)]
    pub b: DriftField,
    #[serde(default)]
    pub k: f64,
    #[serde(default = "default_one")]
    pub alpha: f64,
    #[serde(default = "default_one")]
    pub kappa: f64,
    #[serde(default = "default_one")]
    pub epsilon: f64,
    /// Defaults to twice the box diameter.
    #[serde(default)]
    pub jump_cutoff_radius: Option<f64>,
}

impl GridModelSpec {
    /// One-dimensional box with unit isotropic diffusivity and no drift.
    pub fn interval(lo: f64, hi: f64, h: f64) -> Self {
        GridModelSpec {
            dimension: 1,
            domain_box: vec![(lo, hi)],
            mesh_h: h,
            a: Diffusivity::default(),
            ellipticity: None,
            b: DriftField::Zero,
            k: 0.0,
            alpha: 1.0,
            kappa: 1.0,
            epsilon: 1.0,
            jump_cutoff_radius: None,
        }
    }

    /// Interior points per axis.
    pub fn shape(&self) -> Result<Vec<usize>> {
        if !(self.mesh_h > 0.0) || !self.mesh_h.is_finite() {
            return Err(Error::Model(format!(
                "mesh_h must be > 0, got {}",
                self.mesh_h
            )));
        }
        self.domain_box
            .iter()
            .map(|&(lo, hi)| {
                let cells = (hi - lo) / self.mesh_h;
                let rounded = cells.round();
                if !(hi > lo) || (cells - rounded).abs() > 1e-9 * rounded.max(1.0) || rounded < 2.0 {
                    Err(Error::Model(format!(
                        "box side ({lo}, {hi}) is not a multiple of h = {} with at least one interior point",
                        self.mesh_h
                    )))
                } else {
                    Ok(rounded as usize - 1)
                }
            })
            .collect()
    }

    pub fn num_points(&self) -> Result<usize> {
        Ok(self.shape()?.iter().product())
    }

    /// Coordinates of the interior points in state order (first axis fastest).
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        let shape = self.shape()?;
        let n: usize = shape.iter().product();
        Ok((0..n)
            .map(|s| {
                let mut rest = s;
                shape
                    .iter()
                    .zip(&self.domain_box)
                    .map(|(&m, &(lo, _))| {
                        let i = rest % m;
                        rest /= m;
                        lo + (i + 1) as f64 * self.mesh_h
                    })
                    .collect()
            })
            .collect())
    }

    pub fn diameter(&self) -> f64 {
        self.domain_box
            .iter()
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    pub fn cutoff(&self) -> f64 {
        self.jump_cutoff_radius.unwrap_or(2.0 * self.diameter())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dimension == 1 || self.dimension == 2) {
            return Err(Error::Model(format!(
                "dimension must be 1 or 2, got {}",
                self.dimension
            )));
        }
        if self.domain_box.len() != self.dimension {
            return Err(Error::Dimension {
                what: "domain_box axes",
                expected: self.dimension,
                got: self.domain_box.len(),
            });
        }
        let n = self.num_points()?;
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::Model(format!(
                "alpha must lie in (0, 2), got {}",
                self.alpha
            )));
        }
        if !(self.kappa >= 0.0 && self.epsilon >= 0.0) || (self.kappa == 0.0 && self.epsilon == 0.0)
        {
            return Err(Error::Model(format!(
                "kappa and epsilon must be nonnegative and not both zero (got {}, {})",
                self.kappa, self.epsilon
            )));
        }
        if !self.k.is_finite() {
            return Err(Error::Model("drift strength k must be finite".into()));
        }
        if self.cutoff() < self.diameter() {
            return Err(Error::Model(format!(
                "jump_cutoff_radius {} is below the box diameter {}",
                self.cutoff(),
                self.diameter()
            )));
        }
        let (lo, hi) = self.diffusivity_range(n)?;
        if let Some((l1, l2)) = self.ellipticity {
            if !(0.0 < l1 && l1 <= l2) {
                return Err(Error::Model(format!(
                    "ellipticity bounds ({l1}, {l2}) are invalid"
                )));
            }
            if lo < l1 || hi > l2 {
                return Err(Error::Model(format!(
                    "diffusivity range [{lo}, {hi}] violates the declared bounds [{l1}, {l2}]"
                )));
            }
        }
        self.drift_at_points(&self.points()?)?;
        Ok(())
    }

    fn diffusivity_at(&self, s: usize) -> Vec<f64> {
        match &self.a {
            Diffusivity::Isotropic { value } => vec![*value; self.dimension],
            Diffusivity::Diagonal { values } => values.clone(),
            Diffusivity::Field { values } => values[s].clone(),
        }
    }

    fn diffusivity_range(&self, n: usize) -> Result<(f64, f64)> {
        match &self.a {
            Diffusivity::Diagonal { values } if values.len() != self.dimension => {
                return Err(Error::Dimension {
                    what: "diagonal diffusivity",
                    expected: self.dimension,
                    got: values.len(),
                })
            }
            Diffusivity::Field { values } if values.len() != n => {
                return Err(Error::Dimension {
                    what: "diffusivity field points",
                    expected: n,
                    got: values.len(),
                })
            }
            _ => {}
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in 0..n {
            let a = self.diffusivity_at(s);
            if a.len() != self.dimension {
                return Err(Error::Dimension {
                    what: "diffusivity entries",
                    expected: self.dimension,
                    got: a.len(),
                });
            }
            positive("diffusivity", &a)?;
            for v in a {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        Ok((lo, hi))
    }

    fn drift_at_points(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let d = self.dimension;
        let out: Vec<Vec<f64>> = match &self.b {
            DriftField::Zero => vec![vec![0.0; d]; points.len()],
            DriftField::Constant { vector } => vec![vector.clone(); points.len()],
            DriftField::Rotation { center } => {
                if d != 2 || center.len() != 2 {
                    return Err(Error::Model("rotation drift needs dimension 2".into()));
                }
                points
                    .iter()
                    .map(|p| vec![-(p[1] - center[1]), p[0] - center[0]])
                    .collect()
            }
            DriftField::Field { values } => {
                if values.len() != points.len() {
                    return Err(Error::Dimension {
                        what: "drift field points",
                        expected: points.len(),
                        got: values.len(),
                    });
                }
                values.clone()
            }
        };
        if let Some(v) = out
            .iter()
            .find(|v| v.len() != d || v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Model(format!("drift vector {v:?} is invalid")));
        }
        Ok(out)
    }

    /// Chain parts `(diffusion, drift, jump)` before scaling.
    fn parts(&self) -> Result<(Matrix, Matrix, Matrix)> {
        self.validate()?;
        let shape = self.shape()?;
        let points = self.points()?;
        let n = points.len();
        let h = self.mesh_h;
        let grid = Lattice::new(&shape);
        let mut diff = Matrix::zeros(n, n);
        let mut drift = Matrix::zeros(n, n);
        let b = self.drift_at_points(&points)?;
        for s in 0..n {
            let a_here = self.diffusivity_at(s);
            for axis in 0..self.dimension {
                for dir in [-1i64, 1] {
                    let nb = grid.neighbour(s, axis, dir);
                    let face = match nb {
                        Some(t) => 0.5 * (a_here[axis] + self.diffusivity_at(t)[axis]),
                        None => a_here[axis],
                    };
                    let rate = face / (h * h);
                    if let Some(t) = nb {
                        diff[(s, t)] += rate;
                    }
                    diff[(s, s)] -= rate;
                }
                // -k b.grad, upwind along the transport velocity -k b
                let c = -self.k * b[s][axis];
                if c != 0.0 {
                    let rate = c.abs() / h;
                    if let Some(t) = grid.neighbour(s, axis, if c > 0.0 { 1 } else { -1 }) {
                        drift[(s, t)] += rate;
                    }
                    drift[(s, s)] -= rate;
                }
            }
        }
        let jump = if self.epsilon > 0.0 {
            self.jump_part(&grid)
        } else {
            Matrix::zeros(n, n)
        };
        Ok((diff, drift, jump))
    }

    fn jump_part(&self, grid: &Lattice) -> Matrix {
        let d = self.dimension;
        let h = self.mesh_h;
        let alpha = self.alpha;
        let c = fractional_constant(d, alpha);
        let r = self.cutoff();
        let reach = (r / h).floor() as i64;
        let rate = |m: &[i64]| {
            let norm = m.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt() * h;
            c * h.powi(d as i32) / norm.powf(d as f64 + alpha)
        };
        let lattice_total: f64 = match d {
            1 => (1..=reach).map(|m| 2.0 * rate(&[m])).sum(),
            _ => {
                let mut t = 0.0;
                for i in -reach..=reach {
                    for j in -reach..=reach {
                        if (i, j) != (0, 0) && ((i * i + j * j) as f64).sqrt() * h <= r {
                            t += rate(&[i, j]);
                        }
                    }
                }
                t
            }
        };
        let sphere = if d == 1 {
            2.0
        } else {
            2.0 * std::f64::consts::PI
        };
        let tail = c * sphere * r.powf(-alpha) / alpha;
        let singular = c * singular_cell_moment(d, alpha, h) / (2.0 * d as f64 * h * h);
        let out_rate = lattice_total + tail + 2.0 * d as f64 * singular;
        let n = grid.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|s| {
                let ms = grid.multi(s);
                let mut row = vec![0.0; n];
                for (t, slot) in row.iter_mut().enumerate() {
                    if t == s {
                        continue;
                    }
                    let mt = grid.multi(t);
                    let diff: Vec<i64> = mt.iter().zip(&ms).map(|(a, b)| a - b).collect();
                    *slot = rate(&diff);
                    if diff.iter().map(|x| x.abs()).sum::<i64>() == 1 {
                        *slot += singular;
                    }
                }
                row[s] = -out_rate;
                row
            })
            .collect();
        Matrix::from_fn(n, n, |i, j| rows[i][j])
    }

    fn labels(&self) -> Result<Vec<String>> {
        Ok(self
            .points()?
            .into_iter()
            .map(|p| {
                let parts: Vec<String> = p.iter().map(|x| format!("{x}")).collect();
                format!("({})", parts.join(","))
            })
            .collect())
    }

    fn measure(&self) -> Result<Measure> {
        Measure::new(vec![
            self.mesh_h.powi(self.dimension as i32);
            self.num_points()?
        ])
    }
}

/// Interior-point index arithmetic, first axis fastest.
struct Lattice {
    shape: Vec<usize>,
}

impl Lattice {
    fn new(shape: &[usize]) -> Self {
        Lattice {
            shape: shape.to_vec(),
        }
    }

    fn len(&self) -> usize {
        self.shape.iter().product()
    }

    fn multi(&self, mut s: usize) -> Vec<i64> {
        self.shape
            .iter()
            .map(|&m| {
                let i = s % m;
                s /= m;
                i as i64
            })
            .collect()
    }

    fn neighbour(&self, s: usize, axis: usize, dir: i64) -> Option<usize> {
        let mut m = self.multi(s);
        m[axis] += dir;
        if m[axis] < 0 || m[axis] >= self.shape[axis] as i64 {
            return None;
        }
        let mut idx = 0;
        for a in (0..m.len()).rev() {
            idx = idx * self.shape[a] + m[a] as usize;
        }
        Some(idx)
    }
}

/// `c_{d,alpha} = alpha 2^{alpha-1} Gamma((alpha+d)/2) / (pi^{d/2} Gamma(1-alpha/2))`.
pub fn fractional_constant(d: usize, alpha: f64) -> f64 {
    let d = d as f64;
    alpha * 2f64.powf(alpha - 1.0) * gamma((alpha + d) / 2.0)
        / (std::f64::consts::PI.powf(d / 2.0) * gamma(1.0 - alpha / 2.0))
}

/// `int_{[-h/2, h/2]^d} |z|^{2-d-alpha} dz`.
fn singular_cell_moment(d: usize, alpha: f64, h: f64) -> f64 {
    let radial = (h / 2.0).powf(2.0 - alpha) / (2.0 - alpha);
    match d {
        1 => 2.0 * radial,
        _ => {
            // 8 * int_0^{pi/4} cos(theta)^{alpha-2} dtheta, composite Simpson
            let m = 512;
            let a = std::f64::consts::FRAC_PI_4;
            let f = |t: f64| t.cos().powf(alpha - 2.0);
            let step = a / m as f64;
            let mut s = f(0.0) + f(a);
            for i in 1..m {
                s += f(i as f64 * step) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            8.0 * radial * s * step / 3.0
        }
    }
}

/// Sub-Markov chain on the interior grid points with cell measure `h^d`.
pub fn discretize_jump_diffusion(spec: &GridModelSpec) -> Result<Chain> {
    let (diff, drift, jump) = spec.parts()?;
    let q = diff * spec.kappa + drift + jump * spec.epsilon;
    let generator = Generator::new(q).map_err(|e| match e {
        Error::NegativeRate {
            row, col, value, ..
        } => Error::NegativeRate {
            row,
            col,
            value,
            k_threshold: None,
        },
        other => other,
    })?;
    Chain::new(generator, spec.measure()?)?.with_labels(spec.labels()?)
}

/// How to build the antisymmetric flux of a perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowSpec {
    /// Unit circulation around the state cycle `0 -> 1 -> ... -> n-1 -> 0`.
    Circulant,
    /// Plaquettes on the base grid (two dimensions), weighted by `stream` or
    /// by a sine bump when absent.
    GridPlaquettes {
        #[serde(default)]
        stream: Option<Vec<f64>>,
    },
    /// Explicit antisymmetric flux `F`; the flow is `M^{-1} F`.
    Flux { flux: Vec<Vec<f64>> },
}

/// A named model builder with its parameters, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case")]
pub enum BuilderConfig {
    BirthDeath {
        up: Vec<f64>,
        down: Vec<f64>,
        #[serde(default)]
        killing: Option<Vec<f64>>,
    },
    WeightedGraph {
        /// `(x, y, conductance)` triples.
        edges: Vec<(usize, usize, f64)>,
        mu: Vec<f64>,
        #[serde(default)]
        killing: Option<Vec<f64>>,
    },
    CompleteGraph {
        n: usize,
        rate: f64,
    },
    Cycle {
        n: usize,
        rate: f64,
    },
    /// A generator and measure given verbatim.
    Explicit(ChainDocument),
    Grid(GridModelSpec),
    Perturbed {
        base: Box<BuilderConfig>,
        flow: FlowSpec,
        k: f64,
    },
    Scaled {
        diffusion: Box<BuilderConfig>,
        jump: Box<BuilderConfig>,
        kappa: f64,
        epsilon: f64,
    },
}

impl BuilderConfig {
    pub fn name(&self) -> &'static str {
        match self {
            BuilderConfig::BirthDeath { .. } => "birth_death",
            BuilderConfig::WeightedGraph { .. } => "weighted_graph",
            BuilderConfig::CompleteGraph { .. } => "complete_graph",
            BuilderConfig::Cycle { .. } => "cycle",
            BuilderConfig::Explicit(_) => "explicit",
            BuilderConfig::Grid(_) => "grid",
            BuilderConfig::Perturbed { .. } => "perturbed",
            BuilderConfig::Scaled { .. } => "scaled",
        }
    }

    /// The underlying grid, if the model is (built from) one.
    pub fn grid(&self) -> Option<&GridModelSpec> {
        match self {
            BuilderConfig::Grid(g) => Some(g),
            BuilderConfig::Perturbed { base, .. } => base.grid(),
            BuilderConfig::Scaled { diffusion, .. } => diffusion.grid(),
            _ => None,
        }
    }

    pub fn build(&self) -> Result<Chain> {
        match self {
            BuilderConfig::BirthDeath { up, down, killing } => {
                birth_death(up, down, killing.as_deref())
            }
            BuilderConfig::WeightedGraph { edges, mu, killing } => {
                weighted_graph(edges, mu.clone(), killing.as_deref())
            }
            BuilderConfig::CompleteGraph { n, rate } => complete_graph(*n, *rate),
            BuilderConfig::Cycle { n, rate } => cycle(*n, *rate),
            BuilderConfig::Explicit(doc) => Chain::from_document(doc),
            BuilderConfig::Grid(spec) => discretize_jump_diffusion(spec),
            BuilderConfig::Perturbed { base, flow, k } => {
                let chain = base.build()?;
                let flow = self.flow_matrix(base, flow, &chain)?;
                antisym_perturb(&chain, &flow, *k)
            }
            BuilderConfig::Scaled {
                diffusion,
                jump,
                kappa,
                epsilon,
            } => scaled_family(&diffusion.build()?, &jump.build()?, *kappa, *epsilon),
        }
    }

    fn flow_matrix(
        &self,
        base: &BuilderConfig,
        flow: &FlowSpec,
        chain: &Chain,
    ) -> Result<FlowMatrix> {
        match flow {
            FlowSpec::Circulant => FlowMatrix::circulant(chain.measure()),
            FlowSpec::GridPlaquettes { stream } => {
                let grid = base.grid().ok_or_else(|| {
                    Error::Model("grid_plaquettes flow needs a grid base model".into())
                })?;
                let shape = grid.shape()?;
                if shape.len() != 2 {
                    return Err(Error::Model("grid_plaquettes flow needs a 2D grid".into()));
                }
                match stream {
                    Some(s) => FlowMatrix::plaquettes(shape[0], shape[1], s, chain.measure()),
                    None => FlowMatrix::sine_plaquettes(shape[0], shape[1], chain.measure()),
                }
            }
            FlowSpec::Flux { flux } => {
                let n = chain.n();
                if flux.len() != n || flux.iter().any(|r| r.len() != n) {
                    return Err(Error::Dimension {
                        what: "flux matrix",
                        expected: n,
                        got: flux.len(),
                    });
                }
                let f = Matrix::from_fn(n, n, |i, j| flux[i][j]);
                FlowMatrix::from_flux(&f, chain.measure())
            }
        }
    }
}

/// Parses and builds a chain from a JSON builder config.
pub fn build_chain(config: &BuilderConfig) -> Result<Chain> {
    config.build()
}

/// A small model with a domain, a start state and test parameters.
#[derive(Debug, Clone)]
pub struct BundledExample {
    pub name: &'static str,
    pub config: BuilderConfig,
    pub chain: Chain,
    pub mask: DomainMask,
    pub start: usize,
    pub betas: Vec<f64>,
}

/// The example chains shipped with the library.
pub fn bundled_examples() -> Vec<BundledExample> {
    let mut out = Vec::new();
    let mut push = |name: &'static str, config: BuilderConfig, inside: &[usize], start: usize| {
        let chain = config.build().expect("bundled example builds");
        let mask = DomainMask::from_states(chain.n(), inside).expect("bundled domain");
        out.push(BundledExample {
            name,
            config,
            chain,
            mask,
            start,
            betas: vec![0.5, 1.0, 2.0],
        });
    };
    push(
        "single_state",
        BuilderConfig::Explicit(ChainDocument {
            states: vec![StateLabel::Index(0)],
            mu: vec![1.0],
            q: vec![vec![-2.0]],
        }),
        &[0],
        0,
    );
    push(
        "complete_graph_3",
        BuilderConfig::CompleteGraph { n: 3, rate: 1.0 },
        &[0, 1],
        0,
    );
    push(
        "birth_death_6",
        BuilderConfig::BirthDeath {
            up: vec![1.0, 1.5, 0.5, 2.0, 1.0],
            down: vec![2.0, 1.0, 1.0, 0.5, 1.5],
            killing: None,
        },
        &[1, 2, 3, 4],
        2,
    );
    push(
        "weighted_graph_killed",
        BuilderConfig::WeightedGraph {
            edges: vec![
                (0, 1, 1.0),
                (1, 2, 0.5),
                (2, 3, 2.0),
                (3, 0, 0.75),
                (0, 2, 0.25),
            ],
            mu: vec![0.4, 0.2, 0.3, 0.1],
            killing: Some(vec![0.0, 0.5, 0.0, 0.2]),
        },
        &[0, 1, 2],
        0,
    );
    push(
        "cycle_flow_3",
        BuilderConfig::Perturbed {
            base: Box::new(BuilderConfig::Cycle { n: 3, rate: 1.0 }),
            flow: FlowSpec::Circulant,
            k: 0.5,
        },
        &[0, 1],
        0,
    );
    let grid = GridModelSpec {
        alpha: 1.0,
        kappa: 0.0,
        epsilon: 1.0,
        ..GridModelSpec::interval(-1.0, 1.0, 0.125)
    };
    let n = grid.num_points().expect("grid");
    let all: Vec<usize> = (0..n).collect();
    push("stable_interval", BuilderConfig::Grid(grid), &all, n / 2);
    out
}
