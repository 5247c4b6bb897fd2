//! Dense linear algebra kernels used throughout the simulator.
//!
//! Everything here is plain `f64` row-major storage. Problem dimensions in
//! this crate stay small (d <= a few hundred), so cubic direct methods are
//! always acceptable and keep results bitwise reproducible across runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot threshold below which LU elimination reports singularity.
pub const SINGULAR_PIVOT_REL: f64 = 1e-14;
/// Maximum allowed asymmetry |a_ij - a_ji| for symmetric-only routines.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Jacobi sweep termination: off-diagonal Frobenius mass relative to input.
pub const JACOBI_OFFDIAG_TOL: f64 = 1e-12;
/// Target residual for `solve`, relative to 1 + |b|_inf.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

/// Extremes useful for Hurwitz / Schur / definiteness checks.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub spectral_radius_estimate: f64,
    pub lambda_min_sym: f64,
    pub lambda_max_sym: f64,
}

/// Dense row-major matrix. Serialized as a nested array of rows so instance
/// files stay readable and diffable.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl std::fmt::Debug for Matrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", &self.data[r * self.cols..(r + 1) * self.cols])?;
        }
        write!(f, "]")
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        if rows.is_empty() {
            return Err("matrix needs at least one row".into());
        }
        let cols = rows[0].len();
        if cols == 0 {
            return Err("matrix needs at least one column".into());
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(format!("row {bad} has {} entries, expected {cols}", rows[bad].len()));
        }
        Ok(Matrix { rows: rows.len(), cols, data: rows.into_iter().flatten().collect() })
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        (0..m.rows).map(|r| m.data[r * m.cols..(r + 1) * m.cols].to_vec()).collect()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Matrix::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        Matrix::try_from(rows).expect("ragged or empty row list")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul inner dimensions");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out[(r, c)] += a * other[(k, c)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimensions");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| c * v).collect() }
    }

    /// self += c * other, entrywise.
    pub fn add_scaled(&mut self, other: &Matrix, c: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add_scaled dimensions");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        let mut out = self.clone();
        out.add_scaled(other, 1.0);
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    /// (A + A^T) / 2.
    pub fn symmetric_part(&self) -> Matrix {
        assert!(self.is_square(), "symmetric_part needs a square matrix");
        Matrix::from_fn(self.rows, self.cols, |r, c| 0.5 * (self[(r, c)] + self[(c, r)]))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Inner product; panics on length mismatch (programming error, not input).
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot dimensions");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// y += c * x.
#[inline]
pub fn axpy(y: &mut [f64], c: f64, x: &[f64]) {
    assert_eq!(y.len(), x.len(), "axpy dimensions");
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

pub fn vec_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "vec_sub dimensions");
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

struct LuFactors {
    /// Combined L (unit lower, below diagonal) and U (upper) in one matrix.
    lu: Matrix,
    /// Row permutation: pivot order applied to the right-hand side.
    perm: Vec<usize>,
}

impl LuFactors {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 1..n {
            for c in 0..r {
                x[r] -= self.lu[(r, c)] * x[c];
            }
        }
        for r in (0..n).rev() {
            for c in r + 1..n {
                x[r] -= self.lu[(r, c)] * x[c];
            }
            x[r] /= self.lu[(r, r)];
        }
        x
    }
}

fn lu_factor(a: &Matrix) -> Result<LuFactors> {
    assert!(a.is_square(), "lu_factor needs a square matrix");
    let n = a.rows();
    let threshold = SINGULAR_PIVOT_REL * a.max_abs();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (pivot_row, pivot) = (k..n)
            .map(|r| (r, lu[(r, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot <= threshold {
            return Err(Error::SingularMatrix { pivot, threshold, col: k });
        }
        if pivot_row != k {
            perm.swap(k, pivot_row);
            for c in 0..n {
                let tmp = lu[(k, c)];
                lu[(k, c)] = lu[(pivot_row, c)];
                lu[(pivot_row, c)] = tmp;
            }
        }
        for r in k + 1..n {
            let factor = lu[(r, k)] / lu[(k, k)];
            lu[(r, k)] = factor;
            for c in k + 1..n {
                let delta = factor * lu[(k, c)];
                lu[(r, c)] -= delta;
            }
        }
    }
    Ok(LuFactors { lu, perm })
}

/// Solves `a x = b` by partially pivoted LU with iterative refinement.
///
/// Refinement repeats while the residual exceeds
/// `SOLVE_RESIDUAL_TOL * (1 + |b|_inf)`, up to four correction passes; for
/// the well-conditioned systems that arise here one pass already lands
/// within tolerance.
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows() != b.len() {
        return Err(Error::dim(format!("solve: matrix is {}x{}, rhs has {}", a.rows(), a.cols(), b.len())));
    }
    let factors = lu_factor(a)?;
    let mut x = factors.solve(b);
    let tol = SOLVE_RESIDUAL_TOL * (1.0 + norm_inf(b));
    for _ in 0..4 {
        let mut r = vec_sub(b, &a.matvec(&x));
        if norm_inf(&r) <= tol {
            break;
        }
        let correction = factors.solve(&r);
        axpy(&mut x, 1.0, &correction);
        r = vec_sub(b, &a.matvec(&x));
        if norm_inf(&r) <= tol {
            break;
        }
    }
    Ok(x)
}

/// Spectral radius via Gelfand's formula with repeated squaring.
///
/// Tracks the Frobenius norm in log space while renormalizing the running
/// power, so the estimate never overflows even for wildly scaled inputs.
/// `rho(c * A) = |c| * rho(A)` holds to roundoff.
pub fn spectral_radius(a: &Matrix) -> f64 {
    assert!(a.is_square(), "spectral_radius needs a square matrix");
    let mut power = a.clone();
    // acc tracks log |A^(2^k)|_F / 2^k, which converges to log rho(A).
    let mut acc = 0.0;
    let mut weight = 1.0;
    let mut estimate = 0.0;
    for step in 0..=60 {
        let norm = power.frobenius_norm();
        if norm == 0.0 || !norm.is_finite() {
            return if norm == 0.0 { 0.0 } else { f64::INFINITY };
        }
        acc += weight * norm.ln();
        weight *= 0.5;
        let next = acc.exp();
        if step >= 8 && (next - estimate).abs() <= 1e-13 * next.abs().max(1e-300) {
            return next;
        }
        estimate = next;
        let unit = power.scale(1.0 / norm);
        power = unit.matmul(&unit);
    }
    estimate
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eigen_range(a: &Matrix) -> Result<(f64, f64)> {
    let eigs = sym_eigenvalues(a)?;
    Ok((eigs[0], *eigs.last().expect("matrices are nonempty")))
}

/// Spectral radius plus eigenvalue range of the symmetric part.
pub fn spectrum_report(a: &Matrix) -> Result<SpectrumReport> {
    let (lambda_min_sym, lambda_max_sym) = sym_eigen_range(&a.symmetric_part())?;
    Ok(SpectrumReport {
        spectral_radius_estimate: spectral_radius(a),
        lambda_min_sym,
        lambda_max_sym,
    })
}

/// Eigenvalues of a symmetric matrix, ascending, via cyclic Jacobi sweeps.
///
/// Rejects inputs whose asymmetry exceeds `SYMMETRY_TOL`. Sweeps run until
/// the off-diagonal Frobenius mass drops below `JACOBI_OFFDIAG_TOL`
/// relative to the input norm.
pub fn sym_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    assert!(a.is_square(), "sym_eigenvalues needs a square matrix");
    let n = a.rows();
    for r in 0..n {
        for c in r + 1..n {
            let deviation = (a[(r, c)] - a[(c, r)]).abs();
            if deviation > SYMMETRY_TOL * a.max_abs().max(1.0) {
                return Err(Error::NotSymmetric { row: r, col: c, deviation });
            }
        }
    }
    let mut m = a.symmetric_part();
    let target = JACOBI_OFFDIAG_TOL * m.frobenius_norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        if off_diag_norm(&m) <= target {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                jacobi_rotate(&mut m, p, q);
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues are finite"));
    Ok(eigs)
}

fn off_diag_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut sum = 0.0;
    for r in 0..n {
        for c in 0..n {
            if r != c {
                sum += m[(r, c)] * m[(r, c)];
            }
        }
    }
    sum.sqrt()
}

/// One two-sided Jacobi rotation annihilating m[p][q] (Golub & Van Loan 8.5).
fn jacobi_rotate(m: &mut Matrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    if apq == 0.0 {
        return;
    }
    let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
    let t = if theta >= 0.0 {
        1.0 / (theta + (1.0 + theta * theta).sqrt())
    } else {
        1.0 / (theta - (1.0 + theta * theta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let n = m.rows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    assert!(a.is_square(), "cholesky needs a square matrix");
    let n = a.rows();
    for r in 0..n {
        for c in r + 1..n {
            let deviation = (a[(r, c)] - a[(c, r)]).abs();
            if deviation > SYMMETRY_TOL * a.max_abs().max(1.0) {
                return Err(Error::NotSymmetric { row: r, col: c, deviation });
            }
        }
    }
    let mut l = Matrix::zeros(n, n);
    for r in 0..n {
        for c in 0..=r {
            let mut sum = a[(r, c)];
            for k in 0..c {
                sum -= l[(r, k)] * l[(c, k)];
            }
            if r == c {
                if sum <= 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "cholesky: matrix not positive definite (pivot {sum:.3e} at {r})"
                    )));
                }
                l[(r, r)] = sum.sqrt();
            } else {
                l[(r, c)] = sum / l[(c, c)];
            }
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn solve_linear_handles_identity_and_diagonal() {
        let x = solve_linear(&Matrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
        let d = Matrix::from_rows(vec![vec![2.0, 0.0], vec![0.0, 4.0]]);
        let x = solve_linear(&d, &[2.0, 4.0]).unwrap();
        assert_eq!(x, vec![1.0, 1.0]);
    }

    #[test]
    fn solve_linear_recovers_exact_rational_solution() {
        let a = Matrix::from_rows(vec![vec![4.0, 1.0], vec![1.0, 3.0]]);
        let x = solve_linear(&a, &[1.0, 2.0]).unwrap();
        assert_close(x[0], 1.0 / 11.0, 1e-15);
        assert_close(x[1], 7.0 / 11.0, 1e-15);
    }

    #[test]
    fn solve_linear_stays_backward_stable_on_hilbert_system() {
        // Condition number of the 8x8 Hilbert matrix is ~1e10 and the
        // solution norm is ~3e8, so no double-precision solver can reach
        // the absolute tolerance; refinement must still keep the residual
        // at the backward-stable level eps * |A| * |x|.
        let n = 8;
        let a = Matrix::from_fn(n, n, |r, c| 1.0 / ((r + c + 1) as f64));
        let b: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0).sin()).collect();
        let x = solve_linear(&a, &b).unwrap();
        let r = vec_sub(&b, &a.matvec(&x));
        let backward = 10.0 * n as f64 * f64::EPSILON * a.max_abs() * norm_inf(&x);
        assert!(norm_inf(&r) <= backward, "residual {} vs {backward}", norm_inf(&r));
    }

    #[test]
    fn solve_linear_residual_bound_on_random_well_conditioned_trials() {
        // Diagonally dominant random systems stay well conditioned.
        let mut seed = 0.377_f64;
        let mut next = move || {
            seed = (seed * 997.0 + 0.31).fract();
            seed - 0.5
        };
        for trial in 0..100 {
            let n = 2 + trial % 7;
            let mut a = Matrix::from_fn(n, n, |_, _| next());
            for i in 0..n {
                a[(i, i)] += n as f64;
            }
            let b: Vec<f64> = (0..n).map(|_| 10.0 * next()).collect();
            let x = solve_linear(&a, &b).unwrap();
            let r = vec_sub(&b, &a.matvec(&x));
            assert!(norm_inf(&r) <= SOLVE_RESIDUAL_TOL * (1.0 + norm_inf(&b)));
        }
    }

    #[test]
    fn solve_linear_rejects_singular_matrix() {
        let a = Matrix::from_rows(vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
        match solve_linear(&a, &[1.0, 1.0]) {
            Err(Error::SingularMatrix { col, .. }) => assert_eq!(col, 1),
            other => panic!("expected SingularMatrix, got {other:?}"),
        }
    }

    #[test]
    fn solve_linear_rejects_rhs_length_mismatch() {
        let a = Matrix::identity(3);
        assert!(matches!(solve_linear(&a, &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn spectral_radius_handles_known_cases() {
        // Nilpotent: exactly zero.
        let nil = Matrix::from_rows(vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert_eq!(spectral_radius(&nil), 0.0);
        // Diagonal: largest magnitude wins.
        let d = Matrix::from_rows(vec![vec![0.5, 0.0], vec![0.0, 0.25]]);
        assert_close(spectral_radius(&d), 0.5, 1e-6);
        // Rotation: complex eigenvalues of modulus one.
        let rot = Matrix::from_rows(vec![vec![0.0, 1.0], vec![-1.0, 0.0]]);
        assert_close(spectral_radius(&rot), 1.0, 1e-6);
        // Row-stochastic: radius one.
        let p = Matrix::from_rows(vec![vec![0.9, 0.1], vec![0.2, 0.8]]);
        assert_close(spectral_radius(&p), 1.0, 1e-8);
        // Scalar 1 + 2*eta*(-1.5) + eta^2*2.5 at eta = 0.1.
        let f = Matrix::from_rows(vec![vec![1.0 + 2.0 * 0.1 * (-1.5) + 0.01 * 2.5]]);
        assert_close(spectral_radius(&f), 0.725, 1e-10);
    }

    #[test]
    fn spectral_radius_scales_linearly() {
        let a = Matrix::from_rows(vec![
            vec![0.3, -1.2, 0.05],
            vec![0.7, 0.1, -0.4],
            vec![-0.2, 0.9, 0.6],
        ]);
        let base = spectral_radius(&a);
        for c in [1e-8, 0.5, 3.0, 1e9] {
            let scaled = spectral_radius(&a.scale(c));
            assert_close(scaled, c * base, 1e-6 * c * base);
        }
    }

    #[test]
    fn sym_eigenvalues_match_closed_form() {
        let a = Matrix::from_rows(vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        let eigs = sym_eigenvalues(&a).unwrap();
        assert_close(eigs[0], 1.0, 1e-12);
        assert_close(eigs[1], 3.0, 1e-12);

        // Tridiagonal with characteristic polynomial (x-3)(x^2-6x+6).
        let t = Matrix::from_rows(vec![
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ]);
        let eigs = sym_eigenvalues(&t).unwrap();
        let sqrt3 = 3.0_f64.sqrt();
        assert_close(eigs[0], 3.0 - sqrt3, 1e-12);
        assert_close(eigs[1], 3.0, 1e-12);
        assert_close(eigs[2], 3.0 + sqrt3, 1e-12);
    }

    #[test]
    fn sym_eigenvalues_preserve_trace_and_frobenius_mass() {
        // Deterministic "random" symmetric matrix from a simple recurrence.
        let n = 12;
        let mut seed = 0.123_f64;
        let mut next = move || {
            seed = (seed * 997.0 + 0.31).fract();
            seed - 0.5
        };
        let mut a = Matrix::zeros(n, n);
        for r in 0..n {
            for c in 0..=r {
                let v = next();
                a[(r, c)] = v;
                a[(c, r)] = v;
            }
        }
        let eigs = sym_eigenvalues(&a).unwrap();
        let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
        assert_close(eigs.iter().sum::<f64>(), trace, 1e-10);
        let frob2: f64 = eigs.iter().map(|e| e * e).sum();
        assert_close(frob2, a.frobenius_norm().powi(2), 1e-9);
        assert!(eigs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sym_eigenvalues_reject_asymmetric_input() {
        let a = Matrix::from_rows(vec![vec![1.0, 2.0], vec![2.001, 1.0]]);
        assert!(matches!(sym_eigenvalues(&a), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn sym_eigen_range_known_cases() {
        let a = Matrix::from_rows(vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        let (lo, hi) = sym_eigen_range(&a).unwrap();
        assert_close(lo, 1.0, 1e-12);
        assert_close(hi, 3.0, 1e-12);
        let (lo, hi) = sym_eigen_range(&Matrix::identity(4)).unwrap();
        assert_close(lo, 1.0, 0.0);
        assert_close(hi, 1.0, 0.0);
    }

    #[test]
    fn sym_eigen_range_gram_matrix_shifted_is_positive_definite() {
        let mut seed = 0.811_f64;
        let mut next = move || {
            seed = (seed * 997.0 + 0.31).fract();
            seed - 0.5
        };
        let m = Matrix::from_fn(5, 5, |_, _| next());
        let mut gram = m.transpose().matmul(&m);
        for i in 0..5 {
            gram[(i, i)] += 0.1;
        }
        let (lo, _) = sym_eigen_range(&gram).unwrap();
        assert!(lo >= 0.1 - 1e-9, "lambda_min {lo} below shift");

        // Rayleigh quotients stay inside the computed range.
        let (lo, hi) = sym_eigen_range(&gram).unwrap();
        let mut seed2 = 0.271_f64;
        let mut next2 = move || {
            seed2 = (seed2 * 997.0 + 0.31).fract();
            seed2 - 0.5
        };
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| next2()).collect();
            let q = dot(&x, &gram.matvec(&x)) / dot(&x, &x);
            assert!(q >= lo - 1e-9 && q <= hi + 1e-9, "Rayleigh {q} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn spectrum_report_orders_extremes() {
        let a = Matrix::from_rows(vec![vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let report = spectrum_report(&a).unwrap();
        assert!(report.lambda_min_sym <= report.lambda_max_sym);
        // Symmetric part of a rotation is zero.
        assert_close(report.lambda_min_sym, 0.0, 1e-12);
        assert_close(report.lambda_max_sym, 0.0, 1e-12);
        assert_close(report.spectral_radius_estimate, 1.0, 1e-6);
    }

    #[test]
    fn cholesky_factor_reproduces_input() {
        let a = Matrix::from_rows(vec![vec![4.0, 2.0], vec![2.0, 3.0]]);
        let l = cholesky(&a).unwrap();
        assert_close(l[(0, 0)], 2.0, 1e-15);
        assert_close(l[(0, 1)], 0.0, 0.0);
        assert_close(l[(1, 0)], 1.0, 1e-15);
        assert_close(l[(1, 1)], 2.0_f64.sqrt(), 1e-15);
        let recon = l.matmul(&l.transpose());
        assert!(recon.sub(&a).max_abs() <= 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite_matrix() {
        let a = Matrix::from_rows(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(cholesky(&a), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn matrix_round_trips_through_json() {
        let a = Matrix::from_rows(vec![vec![0.1, -2.5e-17], vec![std::f64::consts::PI, 4.0]]);
        let text = serde_json::to_string(&a).unwrap();
        let back: Matrix = serde_json::from_str(&text).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn matrix_rejects_ragged_json() {
        let res: std::result::Result<Matrix, _> = serde_json::from_str("[[1.0,2.0],[3.0]]");
        assert!(res.is_err());
    }
}
