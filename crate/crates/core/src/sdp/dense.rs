//! Small dense linear-algebra kernels used by the interior-point solver.
//!
//! Matrices are column-major. Only what the solver needs is here: products,
//! Cholesky factorization with triangular solves, and symmetric eigenvalues.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn scale(&self, k: T) -> Self {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * k).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += k * other`
    pub fn axpy(&mut self, k: T, other: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + k * b;
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `(A + A^T) / 2`
    pub fn symmetrize(&mut self) {
        let half = T::lit(0.5);
        for j in 0..self.cols {
            for i in 0..j {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let oc = other.col(j);
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for (k, &b) in oc.iter().enumerate() {
                if b == T::zero() {
                    continue;
                }
                let src = &self.data[k * self.rows..(k + 1) * self.rows];
                for (d, &a) in dst.iter_mut().zip(src) {
                    *d = *d + a * b;
                }
            }
        }
        out
    }

    /// Frobenius inner product `tr(A^T B)`.
    pub fn dot(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    pub fn frob_norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).fold(T::zero(), |acc, i| acc + self[(i, i)])
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |a, &v| a.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[j * self.rows + i]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[j * self.rows + i]
    }
}

/// Lower Cholesky factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Mat<T>,
}

const PANEL: usize = 48;
const ROW_CHUNK: usize = 256;

impl<T: Scalar> Cholesky<T> {
    /// Factorizes a symmetric matrix (only the lower triangle is read).
    /// Returns `None` when a pivot is not strictly positive.
    pub fn new(mut a: Mat<T>) -> Option<Self> {
        let n = a.rows;
        assert_eq!(n, a.cols);
        let mut j0 = 0;
        while j0 < n {
            let j1 = (j0 + PANEL).min(n);
            // bring the panel up to date with all finished columns
            if j0 > 0 {
                let mut r0 = j0;
                while r0 < n {
                    let r1 = (r0 + ROW_CHUNK).min(n);
                    for k in 0..j0 {
                        let (done, rest) = a.data.split_at_mut(j0 * n);
                        let lk = &done[k * n..(k + 1) * n];
                        for j in j0..j1 {
                            let ljk = lk[j];
                            if ljk == T::zero() {
                                continue;
                            }
                            let lo = r0.max(j);
                            if lo >= r1 {
                                continue;
                            }
                            let dst = &mut rest[(j - j0) * n + lo..(j - j0) * n + r1];
                            for (d, &s) in dst.iter_mut().zip(&lk[lo..r1]) {
                                *d = *d - s * ljk;
                            }
                        }
                    }
                    r0 = r1;
                }
            }
            // unblocked factorization inside the panel
            for j in j0..j1 {
                for k in j0..j {
                    let (left, right) = a.data.split_at_mut(j * n);
                    let lk = &left[k * n..(k + 1) * n];
                    let ljk = lk[j];
                    if ljk == T::zero() {
                        continue;
                    }
                    let dst = &mut right[j..n];
                    for (d, &s) in dst.iter_mut().zip(&lk[j..n]) {
                        *d = *d - s * ljk;
                    }
                }
                let d = a.data[j * n + j];
                if !(d > T::zero()) || !d.is_finite() {
                    return None;
                }
                let s = d.sqrt();
                let inv = T::one() / s;
                a.data[j * n + j] = s;
                for v in &mut a.data[j * n + j + 1..(j + 1) * n] {
                    *v = *v * inv;
                }
            }
            j0 = j1;
        }
        for j in 0..n {
            for i in 0..j {
                a.data[j * n + i] = T::zero();
            }
        }
        Some(Cholesky { l: a })
    }

    pub fn l(&self) -> &Mat<T> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// Solves `L z = b` in place.
    pub fn forward(&self, b: &mut [T]) {
        let n = self.l.rows;
        for j in 0..n {
            let col = self.l.col(j);
            let v = b[j] / col[j];
            b[j] = v;
            if v != T::zero() {
                for i in j + 1..n {
                    b[i] = b[i] - col[i] * v;
                }
            }
        }
    }

    /// Solves `L^T z = b` in place.
    pub fn backward(&self, b: &mut [T]) {
        let n = self.l.rows;
        for j in (0..n).rev() {
            let col = self.l.col(j);
            let mut s = b[j];
            for i in j + 1..n {
                s = s - col[i] * b[i];
            }
            b[j] = s / col[j];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    /// `L^{-1} B` for a block of right-hand sides.
    pub fn forward_mat(&self, b: &Mat<T>) -> Mat<T> {
        let mut out = b.clone();
        for j in 0..out.cols {
            self.forward(out.col_mut(j));
        }
        out
    }

    pub fn inverse(&self) -> Mat<T> {
        let n = self.l.rows;
        let mut inv = Mat::identity(n);
        for j in 0..n {
            let c = inv.col_mut(j);
            self.forward(c);
            self.backward(c);
        }
        inv.symmetrize();
        inv
    }

    /// `L^{-1} A L^{-T}` for symmetric `A`.
    pub fn congruence_inv(&self, a: &Mat<T>) -> Mat<T> {
        let mut t = self.forward_mat(a);
        t = t.transpose();
        let mut out = self.forward_mat(&t);
        out.symmetrize();
        out
    }
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues<T: Scalar>(a: &Mat<T>) -> Vec<T> {
    let (d, _) = sym_eigen_impl(a, false);
    d
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.
pub fn sym_eigen<T: Scalar>(a: &Mat<T>) -> (Vec<T>, Mat<T>) {
    let (d, v) = sym_eigen_impl(a, true);
    (d, v.expect("vectors requested"))
}

pub fn min_eigenvalue<T: Scalar>(a: &Mat<T>) -> T {
    sym_eigenvalues(a).first().copied().unwrap_or_else(T::zero)
}

// Householder tridiagonalization followed by implicit QL iterations.
fn sym_eigen_impl<T: Scalar>(a: &Mat<T>, vectors: bool) -> (Vec<T>, Option<Mat<T>>) {
    let n = a.rows;
    if n == 0 {
        return (Vec::new(), vectors.then(|| Mat::zeros(0, 0)));
    }
    // z holds the matrix in row-major-equivalent symmetric form.
    let mut z: Vec<Vec<T>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(&mut z, &mut d, &mut e, vectors);
    tqli(&mut d, &mut e, &mut z, vectors);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap_or(std::cmp::Ordering::Equal));
    let vals: Vec<T> = idx.iter().map(|&i| d[i]).collect();
    let vecs = vectors.then(|| Mat::from_fn(n, n, |r, c| z[r][idx[c]]));
    (vals, vecs)
}

fn tred2<T: Scalar>(a: &mut [Vec<T>], d: &mut [T], e: &mut [T], vectors: bool) {
    let n = a.len();
    let zero = T::zero();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = zero;
        if l > 0 {
            let scale = (0..=l).fold(zero, |s, k| s + a[i][k].abs());
            if scale == zero {
                e[i] = a[i][l];
            } else {
                for k in 0..=l {
                    a[i][k] = a[i][k] / scale;
                    h = h + a[i][k] * a[i][k];
                }
                let f = a[i][l];
                let g = if f >= zero { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h = h - f * g;
                a[i][l] = f - g;
                let mut f = zero;
                for j in 0..=l {
                    if vectors {
                        a[j][i] = a[i][j] / h;
                    }
                    let mut g = zero;
                    for k in 0..=j {
                        g = g + a[j][k] * a[i][k];
                    }
                    for k in j + 1..=l {
                        g = g + a[k][j] * a[i][k];
                    }
                    e[j] = g / h;
                    f = f + e[j] * a[i][j];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a[i][j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[j][k] = a[j][k] - (f * e[k] + g * a[i][k]);
                    }
                }
            }
        } else {
            e[i] = a[i][l];
        }
        d[i] = h;
    }
    d[0] = zero;
    e[0] = zero;
    for i in 0..n {
        if vectors {
            if d[i] != zero {
                for j in 0..i {
                    let mut g = zero;
                    for k in 0..i {
                        g = g + a[i][k] * a[k][j];
                    }
                    for k in 0..i {
                        a[k][j] = a[k][j] - g * a[k][i];
                    }
                }
            }
            d[i] = a[i][i];
            a[i][i] = T::one();
            for j in 0..i {
                a[j][i] = zero;
                a[i][j] = zero;
            }
        } else {
            d[i] = a[i][i];
        }
    }
}

fn tqli<T: Scalar>(d: &mut [T], e: &mut [T], z: &mut [Vec<T>], vectors: bool) {
    let n = d.len();
    let zero = T::zero();
    let one = T::one();
    let two = T::lit(2.0);
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = zero;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(one);
            g = d[m] - d[l] + e[l] / (g + if g >= zero { r.abs() } else { -r.abs() });
            let mut s = one;
            let mut c = one;
            let mut p = zero;
            let mut i = m;
            let mut early = false;
            while i > l {
                i -= 1;
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == zero {
                    d[i + 1] = d[i + 1] - p;
                    e[m] = zero;
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if vectors {
                    for row in z.iter_mut() {
                        f = row[i + 1];
                        row[i + 1] = s * row[i] + c * f;
                        row[i] = c * row[i] - s * f;
                    }
                }
            }
            if early {
                continue;
            }
            d[l] = d[l] - p;
            e[l] = g;
            e[m] = zero;
        }
    }
}
