//! Small dense linear algebra: a row-major matrix, Cholesky solves, and
//! symmetric eigensolvers (Householder tridiagonalization followed by the
//! implicit-shift QL iteration).

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major storage.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major buffer has wrong length");
        Self { rows, cols, data }
    }

    pub fn diagonal(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
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

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let src = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (r2, c2) = (other.rows, other.cols);
        Self::from_fn(self.rows * r2, self.cols * c2, |i, j| {
            self[(i / r2, j / c2)] * other[(i % r2, j % c2)]
        })
    }

    pub fn cast<U: Real>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Symmetric linear map applied matrix-free.
pub trait SymmetricOperator<T>: Sync {
    fn dim(&self) -> usize;

    /// `y = A x`; both slices have length `dim()`.
    fn apply_into(&self, x: &[T], y: &mut [T]);

    fn apply(&self, x: &[T]) -> Vec<T>
    where
        T: Real,
    {
        let mut y = vec![T::zero(); self.dim()];
        self.apply_into(x, &mut y);
        y
    }
}

impl<T: Real> SymmetricOperator<T> for Mat<T> {
    fn dim(&self) -> usize {
        self.rows
    }

    fn apply_into(&self, x: &[T], y: &mut [T]) {
        for (yi, row) in y.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *yi = row.iter().zip(x).map(|(a, b)| *a * *b).sum();
        }
    }
}

/// Solves `A x = b` for symmetric positive-definite `A` by Cholesky.
/// Returns `None` when the factorization breaks down (A not numerically PD).
pub fn cholesky_solve<T: Real>(a: &Mat<T>, b: &[T]) -> Option<Vec<T>> {
    let n = a.rows();
    assert!(a.is_square() && b.len() == n);
    let mut l = Mat::<T>::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag = diag - l[(j, k)] * l[(j, k)];
        }
        if !(diag > T::zero()) || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Least-squares solution of `min ‖A x - b‖₂` by Householder QR.
///
/// Columns whose diagonal pivot falls below `rcond · |R_00|` are treated as
/// dependent and get a zero coefficient.
pub fn least_squares<T: Real>(a: &Mat<T>, b: &[T], rcond: T) -> Vec<T> {
    let (m, n) = (a.rows(), a.cols());
    assert_eq!(b.len(), m);
    let mut r = a.clone();
    let mut y = b.to_vec();
    let steps = n.min(m);
    for j in 0..steps {
        let norm = (j..m).map(|i| r[(i, j)] * r[(i, j)]).sum::<T>().sqrt();
        if norm == T::zero() {
            continue;
        }
        let alpha = if r[(j, j)] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (j..m).map(|i| r[(i, j)]).collect();
        v[0] = v[0] - alpha;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        let two = T::lit(2.0);
        for c in j..n {
            let dot: T = (j..m).map(|i| v[i - j] * r[(i, c)]).sum();
            let f = two * dot / vnorm2;
            for i in j..m {
                r[(i, c)] = r[(i, c)] - f * v[i - j];
            }
        }
        let dot: T = (j..m).map(|i| v[i - j] * y[i]).sum();
        let f = two * dot / vnorm2;
        for i in j..m {
            y[i] = y[i] - f * v[i - j];
        }
    }
    let r00 = if steps > 0 { r[(0, 0)].abs() } else { T::zero() };
    let mut x = vec![T::zero(); n];
    for i in (0..steps).rev() {
        let rii = r[(i, i)];
        if rii.abs() <= rcond * r00 || rii == T::zero() {
            x[i] = T::zero();
            continue;
        }
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - r[(i, k)] * x[k];
        }
        x[i] = s / rii;
    }
    x
}

/// Which eigenvector information a tridiagonal solve should accumulate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Vectors {
    None,
    /// Only the first component of every eigenvector (Golub-Welsch weights).
    FirstRow,
    Full,
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
/// `vectors` holds eigenvectors as columns; with [`Vectors::FirstRow`] it is a
/// `1 × n` matrix with their first components.
#[derive(Clone, Debug)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Option<Mat<T>>,
}

/// Symmetric tridiagonal eigensolver. `diag` has length n, `off[k]` couples
/// rows k and k+1 (length n-1).
pub fn tridiagonal_eigen<T: Real>(diag: &[T], off: &[T], want: Vectors) -> SymEigen<T> {
    let n = diag.len();
    assert!(n == 0 || off.len() + 1 == n, "off-diagonal must have length n-1");
    let mut d = diag.to_vec();
    let mut e = vec![T::zero(); n];
    for i in 1..n {
        e[i] = off[i - 1];
    }
    let mut v = match want {
        Vectors::None => None,
        Vectors::FirstRow => {
            let mut m = Mat::zeros(1, n);
            if n > 0 {
                m[(0, 0)] = T::one();
            }
            Some(m)
        }
        Vectors::Full => Some(Mat::identity(n)),
    };
    tql2(&mut d, &mut e, v.as_mut());
    SymEigen { values: d, vectors: v }
}

/// Full eigen-decomposition of a dense symmetric matrix (only the lower
/// triangle is read).
pub fn symmetric_eigen<T: Real>(a: &Mat<T>) -> SymEigen<T> {
    assert!(a.is_square());
    let n = a.rows();
    if n == 0 {
        return SymEigen { values: vec![], vectors: Some(Mat::zeros(0, 0)) };
    }
    let mut v = Mat::from_fn(n, n, |i, j| if j <= i { a[(i, j)] } else { a[(j, i)] });
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut d, &mut e, Some(&mut v));
    SymEigen { values: d, vectors: Some(v) }
}

/// Householder reduction of the symmetric matrix stored in `v` to tridiagonal
/// form. On exit `v` holds the orthogonal transformation, `d` the diagonal and
/// `e[1..]` the sub-diagonal.
fn tred2<T: Real>(v: &mut Mat<T>, d: &mut [T], e: &mut [T]) {
    let n = v.rows();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for dk in d.iter().take(i) {
            scale = scale + dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = T::zero();
                v[(j, i)] = T::zero();
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk = *dk / scale;
                h = h + *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    g = g + v[(k, j)] * d[k];
                    e[k] = e[k] + v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[(k, j)] = v[(k, j)] - (f * e[k] + g * d[k]);
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g = g + v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] = v[(k, j)] - g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = T::zero();
    }
    v[(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

/// Implicit-shift QL iteration on the tridiagonal matrix (`d`, `e[1..]`),
/// accumulating the rotations into the columns of `v` (which may have any
/// number of rows). Eigenvalues are returned ascending in `d`.
fn tql2<T: Real>(d: &mut [T], e: &mut [T], mut v: Option<&mut Mat<T>>) {
    let n = d.len();
    if n == 0 {
        return;
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();

    let two = T::lit(2.0);
    let eps = T::epsilon();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let max_sweeps = 64 * n.max(4);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di = *di - h;
                }
                f = f + h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(v) = v.as_deref_mut() {
                        for k in 0..v.rows() {
                            let hk = v[(k, i + 1)];
                            v[(k, i + 1)] = s * v[(k, i)] + c * hk;
                            v[(k, i)] = c * v[(k, i)] - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if !(e[l].abs() > eps * tst1) || iter > max_sweeps {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = T::zero();
    }

    // Selection sort keeps the column swaps minimal.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            if let Some(v) = v.as_deref_mut() {
                for row in 0..v.rows() {
                    let tmp = v[(row, i)];
                    v[(row, i)] = v[(row, k)];
                    v[(row, k)] = tmp;
                }
            }
        }
    }
}
