//! Small dense linear algebra for `d <= 8`.
//!
//! [`Matrix`] is a stack-allocated row-major array sized for the largest
//! supported ambient dimension, so the hot loops (QR deflation, flag
//! iteration) never touch the allocator. Singular values come from a
//! one-sided Jacobi iteration, which is accurate to working precision for
//! small singular values and robust on rank-deficient input.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 8;
const CAP: usize = MAX_DIM * MAX_DIM;

/// Pivots below this magnitude make [`qr_positive`] fail.
pub const PIVOT_TOL: f64 = 1e-13;

/// Default numerical-intersection tolerance.
pub const INTERSECT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: [f64; CAP],
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows <= MAX_DIM && cols <= MAX_DIM, "matrix too large");
        Matrix { rows, cols, data: [0.0; CAP] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_slice(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if rows > MAX_DIM || cols > MAX_DIM {
            return Err(Error::DimensionTooLarge { d: rows.max(cols), max: MAX_DIM });
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = values[r * cols + c];
            }
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(r, c, &flat)
    }

    pub fn from_columns(d: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::zeros(d, columns.len());
        for (j, col) in columns.iter().enumerate() {
            if col.len() != d {
                return Err(Error::DimensionMismatch("column length".into()));
            }
            m.set_col(j, col);
        }
        Ok(m)
    }

    /// A `rows x cols` matrix of independent standard normals.
    pub fn random_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = rng.sample(StandardNormal);
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| (0..self.cols).map(|c| self[(r, c)]).collect()).collect()
    }

    /// Row-major copy of the entries.
    pub fn to_row_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(self[(r, c)]);
            }
        }
        out
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, values: &[f64]) {
        for (r, v) in values.iter().enumerate() {
            self[(r, j)] = *v;
        }
    }

    /// Columns `start..end` as a new matrix.
    pub fn column_block(&self, start: usize, end: usize) -> Matrix {
        let mut m = Matrix::zeros(self.rows, end - start);
        for r in 0..self.rows {
            for c in start..end {
                m[(r, c - start)] = self[(r, c)];
            }
        }
        m
    }

    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(self.rows, idx.len());
        for (k, &c) in idx.iter().enumerate() {
            for r in 0..self.rows {
                m[(r, k)] = self[(r, c)];
            }
        }
        m
    }

    pub fn hstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        let mut m = Matrix::zeros(self.rows, self.cols + other.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                m[(r, c)] = self[(r, c)];
            }
            for c in 0..other.cols {
                m[(r, self.cols + c)] = other[(r, c)];
            }
        }
        m
    }

    pub fn transpose(&self) -> Matrix {
        let mut m = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                m[(c, r)] = self[(r, c)];
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> Matrix {
        let mut m = *self;
        m.data.iter_mut().for_each(|x| *x *= s);
        m
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut m = *self;
        for (a, b) in m.data.iter_mut().zip(other.data.iter()) {
            *a -= *b;
        }
        m
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut m = *self;
        for (a, b) in m.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|r| (0..self.cols).map(|c| self[(r, c)] * v[c]).sum()).collect()
    }

    /// Determinant by LU with partial pivoting.
    pub fn det(&self) -> f64 {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = *self;
        let mut det = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs()))
                .unwrap_or(k);
            if a[(p, k)] == 0.0 {
                return 0.0;
            }
            if p != k {
                for c in 0..n {
                    let t = a[(k, c)];
                    a[(k, c)] = a[(p, c)];
                    a[(p, c)] = t;
                }
                det = -det;
            }
            let piv = a[(k, k)];
            det *= piv;
            for i in k + 1..n {
                let f = a[(i, k)] / piv;
                for c in k..n {
                    a[(i, c)] -= f * a[(k, c)];
                }
            }
        }
        det
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Matrix> {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = *self;
        let mut inv = Matrix::identity(n);
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs()))
                .unwrap_or(k);
            let pivot = a[(p, k)];
            if pivot.abs() < PIVOT_TOL {
                return Err(Error::SingularInput { pivot: pivot.abs() });
            }
            if p != k {
                for c in 0..n {
                    a.data.swap(k * MAX_DIM + c, p * MAX_DIM + c);
                    inv.data.swap(k * MAX_DIM + c, p * MAX_DIM + c);
                }
            }
            let piv = a[(k, k)];
            for c in 0..n {
                a[(k, c)] /= piv;
                inv[(k, c)] /= piv;
            }
            for i in 0..n {
                if i != k {
                    let f = a[(i, k)];
                    if f != 0.0 {
                        for c in 0..n {
                            a[(i, c)] -= f * a[(k, c)];
                            inv[(i, c)] -= f * inv[(k, c)];
                        }
                    }
                }
            }
        }
        Ok(inv)
    }

    /// Rescales to determinant one; odd dimensions absorb a negative sign.
    pub fn normalized_unimodular(&self) -> Result<Matrix> {
        let d = self.rows;
        let det = self.det();
        if !det.is_finite() || det.abs() < PIVOT_TOL {
            return Err(Error::SingularInput { pivot: det.abs() });
        }
        if det < 0.0 && d % 2 == 0 {
            return Err(Error::InvalidMeasure("negative determinant in even dimension".into()));
        }
        let s = det.signum() * det.abs().powf(-1.0 / d as f64);
        Ok(self.scale(s))
    }

    pub fn is_unimodular(&self, tol: f64) -> bool {
        self.is_square() && (self.det() - 1.0).abs() <= tol
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * MAX_DIM + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * MAX_DIM + c]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "inner dimensions");
        let mut m = Matrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == 0.0 {
                    continue;
                }
                for c in 0..rhs.cols {
                    m.data[r * MAX_DIM + c] += a * rhs.data[k * MAX_DIM + c];
                }
            }
        }
        m
    }
}

impl Mul for Matrix {
    type Output = Matrix;
    fn mul(self, rhs: Matrix) -> Matrix {
        &self * &rhs
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{:?}", self.to_rows())
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Thin QR with strictly positive diagonal in `R`.
///
/// Classical Gram-Schmidt with one reorthogonalization pass, which keeps
/// `Q` orthonormal to machine precision for the sizes used here. For a
/// `d x k` input returns `Q` of size `d x k` and `R` of size `k x k`.
pub fn qr_positive(m: &Matrix) -> Result<(Matrix, Matrix)> {
    let (n, k) = (m.rows(), m.cols());
    if k > n {
        return Err(Error::DimensionMismatch("more columns than rows".into()));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("qr_positive"));
    }
    let mut q = Matrix::zeros(n, k);
    let mut r = Matrix::zeros(k, k);
    let mut v = [0.0; MAX_DIM];
    for j in 0..k {
        for i in 0..n {
            v[i] = m[(i, j)];
        }
        for _pass in 0..2 {
            for p in 0..j {
                let mut c = 0.0;
                for i in 0..n {
                    c += q[(i, p)] * v[i];
                }
                r[(p, j)] += c;
                for i in 0..n {
                    v[i] -= c * q[(i, p)];
                }
            }
        }
        let nrm = v[..n].iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm < PIVOT_TOL {
            return Err(Error::SingularInput { pivot: nrm });
        }
        r[(j, j)] = nrm;
        for i in 0..n {
            q[(i, j)] = v[i] / nrm;
        }
    }
    Ok((q, r))
}

/// One-sided Jacobi SVD of the matrix with the given columns (any shape).
///
/// Returns singular values in descending order, the matching left singular
/// vectors (zero where the singular value vanishes) and the full right
/// singular basis, all as column lists.
fn jacobi_svd(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for cols in [&mut a, &mut v] {
                    let (lo, hi) = cols.split_at_mut(q);
                    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                        let (xp, yq) = (*x, *y);
                        *x = c * xp - s * yq;
                        *y = s * xp + c * yq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = a.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]).then(x.cmp(&y)));
    let s_sorted = order.iter().map(|&i| sigma[i]).collect();
    let u = order
        .iter()
        .map(|&i| {
            if sigma[i] > 0.0 {
                a[i].iter().map(|x| x / sigma[i]).collect()
            } else {
                vec![0.0; a[i].len()]
            }
        })
        .collect();
    let vs = order.iter().map(|&i| v[i].clone()).collect();
    (s_sorted, u, vs)
}

fn columns(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.cols()).map(|j| m.col(j)).collect()
}

/// Singular values (descending) with left and right singular vectors as
/// matrices of sizes `rows x cols` and `cols x cols`.
pub(crate) fn svd(m: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let (s, u, v) = jacobi_svd(columns(m));
    let um = Matrix::from_columns(m.rows(), &u).expect("shape");
    let vm = Matrix::from_columns(m.cols(), &v).expect("shape");
    (um, s, vm)
}

/// Singular values in descending order, truncated to `min(rows, cols)`.
pub(crate) fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.rows() == 0 || m.cols() == 0 {
        return Vec::new();
    }
    let (mut s, _, _) = jacobi_svd(columns(m));
    s.truncate(m.rows().min(m.cols()));
    s
}

/// Orthonormal basis of the null space of `m` (as columns in `R^cols`),
/// taking the `k` smallest right singular directions.
fn null_directions(m: &Matrix, k: usize) -> Vec<Vec<f64>> {
    let (_, _, v) = jacobi_svd(columns(m));
    v[v.len() - k..].to_vec()
}

/// A linear subspace of `R^d`, stored by an orthonormal `d x k` frame.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subspace {
    frame: Matrix,
}

impl Subspace {
    /// Span of the columns of `m`, which must be linearly independent.
    pub fn from_columns(m: &Matrix) -> Result<Subspace> {
        if m.cols() == 0 {
            return Ok(Subspace::zero(m.rows()));
        }
        let (q, _) = qr_positive(m)?;
        Ok(Subspace { frame: q })
    }

    /// Wraps a frame already known to be orthonormal.
    pub fn from_orthonormal(frame: Matrix) -> Subspace {
        debug_assert!(frame.cols() == 0 || {
            let g = &frame.transpose() * &frame;
            g.sub(&Matrix::identity(frame.cols())).max_abs() < 1e-8
        });
        Subspace { frame }
    }

    /// Span of the columns of `m` with numerical rank decided by `tol`.
    pub fn span(m: &Matrix, tol: f64) -> Subspace {
        if m.cols() == 0 {
            return Subspace::zero(m.rows());
        }
        let (u, s, _) = svd(m);
        let rank = s.iter().filter(|&&x| x > tol).count();
        Subspace { frame: u.column_block(0, rank) }
    }

    pub fn zero(d: usize) -> Subspace {
        Subspace { frame: Matrix::zeros(d, 0) }
    }

    pub fn full(d: usize) -> Subspace {
        Subspace { frame: Matrix::identity(d) }
    }

    /// Span of the coordinate vectors `e_i` for the given zero-based indices.
    pub fn coordinate(d: usize, idx: &[usize]) -> Subspace {
        let mut m = Matrix::zeros(d, idx.len());
        for (k, &i) in idx.iter().enumerate() {
            m[(i, k)] = 1.0;
        }
        Subspace { frame: m }
    }

    pub fn line(v: &[f64]) -> Result<Subspace> {
        Subspace::from_columns(&Matrix::from_columns(v.len(), &[v.to_vec()])?)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.frame.cols()
    }

    #[inline]
    pub fn ambient(&self) -> usize {
        self.frame.rows()
    }

    pub fn frame(&self) -> &Matrix {
        &self.frame
    }

    /// Orthogonal projector `F F^T`.
    pub fn projector(&self) -> Matrix {
        &self.frame * &self.frame.transpose()
    }

    /// Image under a nonsingular linear map.
    pub fn image(&self, g: &Matrix) -> Result<Subspace> {
        Subspace::from_columns(&(g * &self.frame))
    }

    pub fn complement(&self) -> Subspace {
        let d = self.ambient();
        let k = self.dim();
        if k == 0 {
            return Subspace::full(d);
        }
        let null = null_directions(&self.frame.transpose(), d - k);
        Subspace { frame: Matrix::from_columns(d, &null).expect("shape") }
    }

    /// Orthogonal complement of `sub` inside `self`, assuming `sub ⊂ self`.
    pub fn relative_complement(&self, sub: &Subspace) -> Subspace {
        let k = self.dim() - sub.dim();
        if k == 0 {
            return Subspace::zero(self.ambient());
        }
        if sub.dim() == 0 {
            return *self;
        }
        // coordinates in self's frame orthogonal to sub
        let null = null_directions(&(&sub.frame.transpose() * &self.frame), k);
        let coords = Matrix::from_columns(self.dim(), &null).expect("shape");
        Subspace { frame: &self.frame * &coords }
    }

    /// Sum of subspaces with the numerical rank decided by `tol`.
    pub fn sum(&self, other: &Subspace, tol: f64) -> Subspace {
        Subspace::span(&self.frame.hstack(&other.frame), tol)
    }

    /// Sum of subspaces known to have dimension `k`.
    pub fn sum_with_dim(&self, other: &Subspace, k: usize) -> Subspace {
        if k == 0 {
            return Subspace::zero(self.ambient());
        }
        let (u, _, _) = svd(&self.frame.hstack(&other.frame));
        Subspace { frame: u.column_block(0, k) }
    }

    /// Sum of many subspaces of known total dimension `k`.
    pub fn sum_all(parts: &[Subspace], d: usize, k: usize) -> Subspace {
        if k == 0 {
            return Subspace::zero(d);
        }
        let mut stacked = Matrix::zeros(d, 0);
        for p in parts {
            if p.dim() > 0 {
                stacked = stacked.hstack(&p.frame);
            }
        }
        if stacked.cols() == k {
            if let Ok(s) = Subspace::from_columns(&stacked) {
                return s;
            }
        }
        let (u, _, _) = svd(&stacked);
        Subspace { frame: u.column_block(0, k) }
    }

    /// Largest distance from a unit vector of `other` to `self`.
    pub fn contains(&self, other: &Subspace, tol: f64) -> bool {
        if other.dim() == 0 {
            return true;
        }
        let resid = other.frame.sub(&(&self.projector() * &other.frame));
        singular_values(&resid).first().copied().unwrap_or(0.0) <= tol
    }

    /// Unit vector spanning a one-dimensional subspace.
    pub fn direction(&self) -> Vec<f64> {
        assert_eq!(self.dim(), 1);
        self.frame.col(0)
    }
}

impl fmt::Debug for Subspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Subspace(d={}, k={}, {:?})", self.ambient(), self.dim(), self.frame)
    }
}

/// Volume distortion `|det_U(g)|` of `g` from `U` to `gU`.
pub fn restricted_det(g: &Matrix, u: &Subspace) -> Result<f64> {
    if g.rows() != u.ambient() {
        return Err(Error::DimensionMismatch("matrix vs subspace".into()));
    }
    if u.dim() == 0 {
        return Ok(1.0);
    }
    let img = g * u.frame();
    let v = match qr_positive(&img) {
        Ok((_, r)) => (0..r.rows()).map(|i| r[(i, i)]).product::<f64>(),
        Err(Error::SingularInput { .. }) => 0.0,
        Err(e) => return Err(e),
    };
    if !v.is_finite() {
        return Err(Error::NonFinite("restricted_det"));
    }
    Ok(v)
}

/// Principal angles between equidimensional subspaces, nonincreasing.
///
/// Cosines come from the singular values of `F^T F'`, sines from those of
/// `(I - F F^T) F'`; each angle is taken from whichever is better conditioned
/// so that tiny angles keep full relative accuracy.
pub fn principal_angles(s: &Subspace, t: &Subspace) -> Result<Vec<f64>> {
    if s.dim() != t.dim() || s.ambient() != t.ambient() {
        return Err(Error::DimensionMismatch(format!(
            "subspaces of dimension {} and {}",
            s.dim(),
            t.dim()
        )));
    }
    let k = s.dim();
    if k == 0 {
        return Ok(Vec::new());
    }
    let cross = &s.frame.transpose() * &t.frame;
    let cosines = singular_values(&cross);
    let resid = t.frame.sub(&(&s.frame * &cross));
    let mut sines = singular_values(&resid);
    sines.truncate(k);
    while sines.len() < k {
        sines.push(0.0);
    }
    sines.reverse();
    let mut angles: Vec<f64> = (0..k)
        .map(|i| {
            let c = cosines[i].clamp(0.0, 1.0);
            if c * c > 0.5 {
                sines[i].clamp(0.0, 1.0).asin()
            } else {
                c.acos()
            }
        })
        .collect();
    angles.sort_by(|a, b| b.total_cmp(a));
    Ok(angles)
}

/// Geodesic Grassmannian distance: Euclidean norm of the principal angles.
pub fn subspace_distance(s: &Subspace, t: &Subspace) -> Result<f64> {
    Ok(principal_angles(s, t)?.iter().map(|a| a * a).sum::<f64>().sqrt())
}

/// Numerical intersection `S ∩ S'`.
///
/// Directions are the right singular vectors of the stacked complement
/// projectors whose singular values fall below `tol`. A singular value within
/// a decade of `tol` leaves the dimension ambiguous and is reported.
pub fn subspace_intersect(s: &Subspace, t: &Subspace, tol: f64) -> Result<Subspace> {
    let d = s.ambient();
    if t.ambient() != d {
        return Err(Error::DimensionMismatch("ambient dimensions".into()));
    }
    let (sigma, v) = stacked_complement_svd(s, t);
    if let Some(&bad) = sigma.iter().find(|&&x| x >= tol / 10.0 && x <= 10.0 * tol) {
        return Err(Error::IllConditioned { value: bad, tol });
    }
    let idx: Vec<usize> = (0..d).filter(|&i| sigma[i] < tol).collect();
    Ok(Subspace { frame: v.select_columns(&idx) })
}

/// Best `k`-dimensional approximation of `S ∩ S'` when the dimension is known.
pub(crate) fn intersection_of_dim(s: &Subspace, t: &Subspace, k: usize) -> Subspace {
    let d = s.ambient();
    if k == 0 {
        return Subspace::zero(d);
    }
    let (_, v) = stacked_complement_svd(s, t);
    Subspace { frame: v.column_block(d - k, d) }
}

fn stacked_complement_svd(s: &Subspace, t: &Subspace) -> (Vec<f64>, Matrix) {
    let d = s.ambient();
    let ps = Matrix::identity(d).sub(&s.projector());
    let pt = Matrix::identity(d).sub(&t.projector());
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|c| ps.col(c).into_iter().chain(pt.col(c)).collect())
        .collect();
    let (sigma, _, v) = jacobi_svd(cols);
    (sigma, Matrix::from_columns(d, &v).expect("shape"))
}

pub(crate) fn unit(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    v.iter().map(|x| x / n).collect()
}

pub(crate) fn vdot(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b)
}
