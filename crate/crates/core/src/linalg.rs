//! Dense real matrices.
//!
//! [`Matrix`] wraps an `nalgebra` dynamic matrix and refuses non-finite
//! entries at every public constructor. The free functions cover what the
//! rest of the crate needs: products, SVD, symmetric eigenvalues, spectral
//! radius, Kronecker products, linear solves and block assembly.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Matrix(DMatrix<f64>);

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{:?}", self.to_rows())
    }
}

impl Matrix {
    /// Builds a matrix from row-major entries.
    pub fn new(rows: usize, cols: usize, row_major: Vec<f64>) -> Result<Self> {
        if row_major.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "Matrix::new",
                detail: format!("{} entries for {rows}x{cols}", row_major.len()),
            });
        }
        if row_major.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Matrix::new"));
        }
        Ok(Self(DMatrix::from_row_slice(rows, cols, &row_major)))
    }

    /// Builds a matrix from a list of rows. An empty list gives a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != ncols) {
            return Err(Error::DimensionMismatch {
                op: "Matrix::from_rows",
                detail: "ragged rows".into(),
            });
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(nrows, ncols, flat)
    }

    pub fn from_nalgebra(m: DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Matrix::from_nalgebra"));
        }
        Ok(Self(m))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Matrix::from_diagonal"));
        }
        let n = diag.len();
        Ok(Self(DMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 })))
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Sets one entry; non-finite values are rejected.
    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite("Matrix::set"));
        }
        self.0[(i, j)] = value;
        Ok(())
    }

    pub fn as_nalgebra(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_nalgebra(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().copied().collect()
    }

    /// Column-major stacking of the entries.
    pub fn vec(&self) -> Vec<f64> {
        self.0.as_slice().to_vec()
    }

    /// Inverse of [`Matrix::vec`].
    pub fn unvec(values: &[f64], rows: usize, cols: usize) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "Matrix::unvec",
                detail: format!("{} entries for {rows}x{cols}", values.len()),
            });
        }
        Self::from_nalgebra(DMatrix::from_column_slice(rows, cols, values))
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    pub fn norm_fro(&self) -> f64 {
        self.0.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    /// Spectral norm (largest singular value).
    pub fn norm2(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0
            .clone()
            .singular_values()
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrize(&self) -> Self {
        Self((&self.0 + self.0.transpose()) * 0.5)
    }

    /// Largest absolute entry of `M - Mᵀ`.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        (&self.0 - self.0.transpose()).amax()
    }

    /// Copy of the sub-block starting at `(r0, c0)`.
    pub fn slice(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Result<Self> {
        if r0 + rows > self.rows() || c0 + cols > self.cols() {
            return Err(Error::DimensionMismatch {
                op: "Matrix::slice",
                detail: format!(
                    "block ({r0},{c0})+{rows}x{cols} outside {}x{}",
                    self.rows(),
                    self.cols()
                ),
            });
        }
        Ok(Self(self.0.view((r0, c0), (rows, cols)).into_owned()))
    }

    pub fn try_add(&self, other: &Matrix) -> Result<Matrix> {
        same_shape("add", self, other)?;
        Ok(Self(&self.0 + &other.0))
    }

    pub fn try_sub(&self, other: &Matrix) -> Result<Matrix> {
        same_shape("sub", self, other)?;
        Ok(Self(&self.0 - &other.0))
    }
}

fn same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            op,
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    Ok(())
}

// Operator forms panic on shape mismatch, like nalgebra. Use `matmul`,
// `try_add` and `try_sub` where shapes come from user input.
impl<'a> Mul<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &'a Matrix) -> Matrix {
        Matrix(&self.0 * &rhs.0)
    }
}

impl<'a> Add<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn add(self, rhs: &'a Matrix) -> Matrix {
        Matrix(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a Matrix> for &'a Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &'a Matrix) -> Matrix {
        Matrix(&self.0 - &rhs.0)
    }
}

impl Neg for &Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        Matrix(-&self.0)
    }
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return Err(Error::DimensionMismatch {
            op: "matmul",
            detail: format!("{:?} x {:?}", a.shape(), b.shape()),
        });
    }
    Ok(a * b)
}

/// Thin singular value decomposition `m = U diag(S) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// rows x k, orthonormal columns.
    pub u: Matrix,
    /// k values, nonincreasing.
    pub s: Vec<f64>,
    /// cols x k, orthonormal columns.
    pub v: Matrix,
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(Svd {
            u: Matrix::zeros(rows, 0),
            s: Vec::new(),
            v: Matrix::zeros(cols, 0),
        });
    }
    let dec = m
        .0
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or(Error::NoConvergence)?;
    let u = dec.u.ok_or(Error::NoConvergence)?;
    let v_t = dec.v_t.ok_or(Error::NoConvergence)?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));
    let s: Vec<f64> = order.iter().map(|&i| dec.singular_values[i]).collect();
    let u_sorted = DMatrix::from_fn(rows, k, |r, c| u[(r, order[c])]);
    let v_sorted = DMatrix::from_fn(cols, k, |r, c| v_t[(order[c], r)]);
    Ok(Svd {
        u: Matrix(u_sorted),
        s,
        v: Matrix(v_sorted),
    })
}

/// Numerical rank: singular values above `rel_tol * sigma_max`.
pub fn rank(m: &Matrix, rel_tol: f64) -> Result<usize> {
    let dec = svd(m)?;
    let smax = dec.s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(dec.s.iter().filter(|&&s| s > rel_tol * smax).count())
}

fn check_symmetric(m: &Matrix, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            op: "sym_eig",
            detail: format!("non-square {:?}", m.shape()),
        });
    }
    let asym = m.asymmetry();
    if asym > tol * m.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eig(m: &Matrix, symmetry_tol: f64) -> Result<Vec<f64>> {
    Ok(sym_eigh(m, symmetry_tol)?.0)
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending; column `i` of the
/// returned matrix pairs with eigenvalue `i`.
pub fn sym_eigh(m: &Matrix, symmetry_tol: f64) -> Result<(Vec<f64>, Matrix)> {
    check_symmetric(m, symmetry_tol)?;
    let n = m.rows();
    if n == 0 {
        return Ok((Vec::new(), Matrix::zeros(0, 0)));
    }
    let eig = m.symmetrize().0.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, Matrix(vectors)))
}

pub fn lambda_max(m: &Matrix, symmetry_tol: f64) -> Result<f64> {
    Ok(sym_eig(m, symmetry_tol)?.last().copied().unwrap_or(f64::NEG_INFINITY))
}

/// All (complex) eigenvalues of a square matrix via the real Schur form.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            op: "eigenvalues",
            detail: format!("non-square {:?}", m.shape()),
        });
    }
    if m.rows() == 0 {
        return Ok(Vec::new());
    }
    let schur = m
        .0
        .clone()
        .try_schur(f64::EPSILON, 0)
        .ok_or(Error::NoConvergence)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// max |λ| over all eigenvalues.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix(a.0.kronecker(&b.0))
}

/// Solves `a x = b` by partial-pivot LU.
///
/// Fails when the reciprocal condition estimate falls below
/// `singular_tol`; the error carries the estimate.
pub fn solve(a: &Matrix, b: &Matrix, singular_tol: f64) -> Result<Matrix> {
    if !a.is_square() || a.rows() != b.rows() {
        return Err(Error::DimensionMismatch {
            op: "solve",
            detail: format!("{:?} \\ {:?}", a.shape(), b.shape()),
        });
    }
    let cond = condition_number(a)?;
    if !cond.is_finite() || cond * singular_tol > 1.0 {
        return Err(Error::Singular { condition: cond });
    }
    let x = a.0.clone().lu().solve(&b.0).ok_or(Error::Singular { condition: cond })?;
    Matrix::from_nalgebra(x)
}

pub fn inverse(a: &Matrix, singular_tol: f64) -> Result<Matrix> {
    solve(a, &Matrix::identity(a.rows()), singular_tol)
}

/// 2-norm condition number, `inf` for singular input.
pub fn condition_number(a: &Matrix) -> Result<f64> {
    let dec = svd(a)?;
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let smin = dec.s.last().copied().unwrap_or(0.0);
    if smin == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(smax / smin)
}

/// Lower-triangular Cholesky factor; fails iff `a` is not positive definite.
pub fn cholesky(a: &Matrix, symmetry_tol: f64) -> Result<Matrix> {
    check_symmetric(a, symmetry_tol)?;
    let chol = a.symmetrize().0.cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(Matrix(chol.l()))
}

/// Assembles a matrix from a grid of blocks. Every block in a grid row must
/// share the row count and every block in a grid column the column count.
pub fn block(grid: &[Vec<Matrix>]) -> Result<Matrix> {
    let ncols_grid = grid.first().map_or(0, Vec::len);
    if grid.iter().any(|r| r.len() != ncols_grid) {
        return Err(Error::DimensionMismatch {
            op: "block",
            detail: "ragged block grid".into(),
        });
    }
    let row_heights: Vec<usize> = grid.iter().map(|r| r[0].rows()).collect();
    let col_widths: Vec<usize> = (0..ncols_grid).map(|j| grid[0][j].cols()).collect();
    for (i, row) in grid.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            if b.rows() != row_heights[i] || b.cols() != col_widths[j] {
                return Err(Error::DimensionMismatch {
                    op: "block",
                    detail: format!(
                        "block ({i},{j}) is {:?}, expected {}x{}",
                        b.shape(),
                        row_heights[i],
                        col_widths[j]
                    ),
                });
            }
        }
    }
    let total_rows = row_heights.iter().sum();
    let total_cols = col_widths.iter().sum();
    let mut out = DMatrix::zeros(total_rows, total_cols);
    let mut r0 = 0;
    for (i, row) in grid.iter().enumerate() {
        let mut c0 = 0;
        for (j, b) in row.iter().enumerate() {
            out.view_mut((r0, c0), (row_heights[i], col_widths[j]))
                .copy_from(&b.0);
            c0 += col_widths[j];
        }
        r0 += row_heights[i];
    }
    Ok(Matrix(out))
}

/// Block-diagonal matrix from square or rectangular blocks.
pub fn block_diag(blocks: &[Matrix]) -> Matrix {
    let rows = blocks.iter().map(Matrix::rows).sum();
    let cols = blocks.iter().map(Matrix::cols).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), b.shape()).copy_from(&b.0);
        r0 += b.rows();
        c0 += b.cols();
    }
    Matrix(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        let v = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::new(r, c, v).unwrap()
    }

    fn sec4_a() -> Matrix {
        Matrix::from_rows(&[[-1.7, -0.5, 0.1], [1.0, 0.0, -0.7], [0.0, 0.8, 0.0]]).unwrap()
    }

    #[test]
    fn constructors_reject_non_finite() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0]).is_err());
        assert!(Matrix::from_diagonal(&[f64::INFINITY]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn matmul_examples() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Matrix::identity(2), &m).unwrap(), m);
        let v = Matrix::column(&[0.0, 1.0]).unwrap();
        assert_eq!(matmul(&m, &v).unwrap(), Matrix::column(&[2.0, 4.0]).unwrap());
        assert!(matmul(&v, &v).is_err());
    }

    #[test]
    fn matmul_plant_initial_state() {
        // hand multiplication: -1.7 - 0.6 - 0.08, 1 + 0.56, 0.96
        let x0 = Matrix::column(&[1.0, 1.2, -0.8]).unwrap();
        let y = matmul(&sec4_a(), &x0).unwrap();
        let expected = [-2.38, 1.56, 0.96];
        for (i, e) in expected.iter().enumerate() {
            assert!((y.get(i, 0) - e).abs() < 1e-14);
        }
    }

    #[test]
    fn svd_examples() {
        let d = Matrix::from_diagonal(&[2.0, 3.0]).unwrap();
        assert_eq!(svd(&d).unwrap().s, vec![3.0, 2.0]);
        let b = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        let s = svd(&b).unwrap().s;
        assert!((s[0] - 1.0).abs() < 1e-15 && (s[1] - 1.0).abs() < 1e-15);
    }

    fn assert_orthonormal_cols(m: &Matrix, tol: f64) {
        let g = &m.transpose() * m;
        let e = &g - &Matrix::identity(m.cols());
        assert!(e.max_abs() < tol, "orthonormality error {}", e.max_abs());
    }

    #[test]
    fn svd_reconstruction_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(r, c) in &[(5, 3), (3, 5), (50, 50), (20, 7), (1, 4)] {
            let m = random(&mut rng, r, c);
            let dec = svd(&m).unwrap();
            assert_orthonormal_cols(&dec.u, 1e-12);
            assert_orthonormal_cols(&dec.v, 1e-12);
            assert!(dec.s.windows(2).all(|w| w[0] >= w[1]));
            assert!(dec.s.iter().all(|&s| s >= 0.0));
            let rec = &(&dec.u * &Matrix::from_diagonal(&dec.s).unwrap()) * &dec.v.transpose();
            assert!((&rec - &m).norm_fro() <= 1e-10 * m.norm_fro());
        }
    }

    #[test]
    fn sym_eig_examples() {
        let d = Matrix::from_diagonal(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(sym_eig(&d, 1e-9).unwrap(), vec![1.0, 2.0, 3.0]);
        let swap = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let ev = sym_eig(&swap, 1e-9).unwrap();
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
        let nonsym = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(sym_eig(&nonsym, 1e-9), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn sym_eig_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = random(&mut rng, 12, 12);
        let m = (&r + &r.transpose()).scale(0.5);
        let (vals, vecs) = sym_eigh(&m, 1e-9).unwrap();
        let norm = m.norm2();
        for (i, &lam) in vals.iter().enumerate() {
            let v = vecs.slice(0, i, 12, 1).unwrap();
            let res = &(&m * &v) - &v.scale(lam);
            assert!(res.norm_fro() <= 1e-8 * norm);
        }
    }

    #[test]
    fn spectral_radius_examples() {
        let d = Matrix::from_diagonal(&[0.5, -0.9]).unwrap();
        assert!((spectral_radius(&d).unwrap() - 0.9).abs() < 1e-12);
        let th: f64 = 0.7;
        let rot = Matrix::from_rows(&[[th.cos(), -th.sin()], [th.sin(), th.cos()]]).unwrap();
        assert!((spectral_radius(&rot).unwrap() - 1.0).abs() < 1e-12);
        assert!(spectral_radius(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn spectral_radius_of_unstable_plant() {
        // The characteristic polynomial of A is s^3 + 1.7 s^2 + 1.06 s + 0.872;
        // its real root is found here by bisection, independently of Schur.
        let poly = |s: f64| s * s * s + 1.7 * s * s + 1.06 * s + 0.872;
        let (mut lo, mut hi) = (-2.0_f64, -1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if poly(lo) * poly(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let real_root = 0.5 * (lo + hi);
        let rho = spectral_radius(&sec4_a()).unwrap();
        assert!(rho > 1.0);
        assert!((rho - real_root.abs()).abs() < 1e-9 * rho);
        // remaining pair has modulus sqrt(0.872 / |root|) < |root|
        assert!((0.872 / real_root.abs()).sqrt() < rho);
    }

    #[test]
    fn kron_examples() {
        assert_eq!(kron(&Matrix::identity(2), &Matrix::identity(3)), Matrix::identity(6));
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let two = Matrix::from_rows(&[[2.0]]).unwrap();
        assert_eq!(kron(&two, &m), m.scale(2.0));
    }

    #[test]
    fn kron_vec_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random(&mut rng, 3, 3);
            let b = random(&mut rng, 3, 3);
            let m = random(&mut rng, 3, 3);
            let lhs = (&(&a * &m) * &b.transpose()).vec();
            let rhs = &kron(&b, &a) * &Matrix::column(&m.vec()).unwrap();
            let err: f64 = lhs
                .iter()
                .zip(rhs.vec())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = lhs.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(err <= 1e-10 * scale);
        }
    }

    #[test]
    fn solve_and_factorizations() {
        let b = Matrix::column(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(solve(&Matrix::identity(3), &b, 1e-12).unwrap(), b);
        let l = cholesky(&Matrix::from_diagonal(&[4.0]).unwrap(), 1e-9).unwrap();
        assert_eq!(l, Matrix::from_diagonal(&[2.0]).unwrap());
        let indefinite = Matrix::from_diagonal(&[1.0, -1.0]).unwrap();
        assert_eq!(cholesky(&indefinite, 1e-9), Err(Error::NotPositiveDefinite));
        let singular = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        assert!(matches!(
            solve(&singular, &Matrix::column(&[1.0, 1.0]).unwrap(), 1e-12),
            Err(Error::Singular { .. })
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = &random(&mut rng, 6, 6) + &Matrix::identity(6).scale(3.0);
        let rhs = random(&mut rng, 6, 2);
        let x = solve(&a, &rhs, 1e-12).unwrap();
        assert!((&(&a * &x) - &rhs).norm_fro() <= 1e-8 * rhs.norm_fro());
        let ainv = inverse(&a, 1e-12).unwrap();
        assert!((&(&a * &ainv) - &Matrix::identity(6)).max_abs() < 1e-10);
    }

    #[test]
    fn block_assembly_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = {
            let r = random(&mut rng, 3, 3);
            &(&r * &r.transpose()) + &Matrix::identity(3)
        };
        let s1 = random(&mut rng, 3, 3);
        let s2 = random(&mut rng, 3, 3);
        let z = Matrix::zeros(3, 3);
        let grid = vec![
            vec![-&q, s1.transpose(), s2.transpose()],
            vec![s1.clone(), -&q, z.clone()],
            vec![s2.clone(), z.clone(), -&q],
        ];
        let big = block(&grid).unwrap();
        assert_eq!(big.shape(), (9, 9));
        assert_eq!(big.asymmetry(), 0.0);
        for (i, row) in grid.iter().enumerate() {
            for (j, b) in row.iter().enumerate() {
                assert_eq!(&big.slice(3 * i, 3 * j, 3, 3).unwrap(), b);
            }
        }
        let bad = vec![vec![Matrix::zeros(2, 2), Matrix::zeros(3, 1)]];
        assert!(block(&bad).is_err());
    }
}
