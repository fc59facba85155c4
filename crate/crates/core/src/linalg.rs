//! Dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU};

use crate::error::{Error, Result};
use crate::tol;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// LU factorization of a square system with its 1-norm condition estimate.
///
/// Solves run iterative refinement until the residual is below
/// [`tol::REFINEMENT`] relative to `|A||x| + |b|`, with at most a few sweeps.
#[derive(Debug, Clone)]
pub struct Solver {
    a: Matrix,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
}

impl Solver {
    pub fn new(a: Matrix, context: &str) -> Result<Self> {
        assert!(a.is_square(), "Solver requires a square matrix");
        let lu = a.clone().lu();
        let mut s = Solver {
            a,
            lu,
            condition: f64::INFINITY,
        };
        if s.a.nrows() == 0 {
            s.condition = 1.0;
            return Ok(s);
        }
        let pivots_ok = (0..s.a.nrows()).all(|i| {
            let d = s.lu.u()[(i, i)];
            d.is_finite() && d != 0.0
        });
        if !pivots_ok {
            return Err(Error::Singular {
                context: context.to_string(),
                condition: f64::INFINITY,
            });
        }
        s.condition = s.estimate_condition();
        if !(s.condition < tol::SINGULAR_CONDITION) {
            return Err(Error::Singular {
                context: context.to_string(),
                condition: s.condition,
            });
        }
        Ok(s)
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn solve(&self, b: &Vector) -> Vector {
        let mut x = self.lu.solve(b).expect("pivots checked at construction");
        let scale_a = norm_inf_matrix(&self.a);
        for _ in 0..4 {
            let r = b - &self.a * &x;
            let denom = scale_a * x.amax() + b.amax();
            if r.amax() <= tol::REFINEMENT * denom.max(f64::MIN_POSITIVE) {
                break;
            }
            let dx = self.lu.solve(&r).expect("pivots checked at construction");
            x += dx;
        }
        x
    }

    /// Solves `A^T x = b` using the same factorization.
    fn solve_transpose(&self, b: &Vector) -> Vector {
        // P A = L U  =>  A^T = U^T L^T P
        let l = self.lu.l();
        let u = self.lu.u();
        let z = u
            .transpose()
            .solve_lower_triangular(b)
            .expect("pivots checked at construction");
        let mut w = l
            .transpose()
            .solve_upper_triangular(&z)
            .expect("unit lower factor");
        self.lu.p().inv_permute_rows(&mut w);
        w
    }

    /// Hager's estimator of `|A|_1 |A^{-1}|_1`.
    fn estimate_condition(&self) -> f64 {
        let n = self.a.nrows();
        let norm_a = norm_1_matrix(&self.a);
        let mut x = Vector::from_element(n, 1.0 / n as f64);
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.lu.solve(&x).expect("pivots checked at construction");
            let new_est = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve_transpose(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.abs()))
                .fold((0, -1.0), |acc, it| if it.1 > acc.1 { it } else { acc });
            let ztx = z.dot(&x);
            if new_est <= est || zmax <= ztx {
                est = est.max(new_est);
                break;
            }
            est = new_est;
            x = Vector::zeros(n);
            x[j] = 1.0;
        }
        norm_a * est
    }
}

pub fn norm_1_matrix(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn norm_inf_matrix(a: &Matrix) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Principal sub-matrix on the given index set.
pub fn submatrix(a: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

pub fn subvector(v: &[f64], idx: &[usize]) -> Vector {
    Vector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Extends a vector on `idx` by zero to length `n`.
pub fn extend_by_zero(v: &Vector, idx: &[usize], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (k, &i) in idx.iter().enumerate() {
        out[i] = v[k];
    }
    out
}

pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Eigen-decomposition of the symmetric pencil `(A, diag(w))`, `w > 0`.
///
/// Returns eigenvalues ascending and the matching eigenvectors (columns) in
/// the original coordinates, `w`-orthonormal.
pub fn weighted_symmetric_eigen(a: &Matrix, w: &[f64]) -> (Vec<f64>, Matrix) {
    let n = a.nrows();
    let s: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let b = Matrix::from_fn(n, n, |i, j| a[(i, j)] / (s[i] * s[j]));
    let eig = SymmetricEigen::new(symmetrize(&b));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])] / s[r]);
    (values, vectors)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(a: &Matrix) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
