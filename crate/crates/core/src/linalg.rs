//! Small dense matrices.
//!
//! Every matrix in this problem is tiny (state dimensions and parameter
//! counts are single digits), so a row-major `Vec`-backed type with
//! partial-pivot LU and cyclic Jacobi eigendecomposition covers all needs
//! without pulling in a linear-algebra dependency whose trait bounds would
//! fight the crate's scalar genericity.

use serde::{Deserialize, Serialize};

use crate::num::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Build from a row-major slice; length must equal `rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length mismatch");
        Mat { rows, cols, data: data.to_vec() }
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
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Mat<T>) -> Mat<T> {
        let mut out = Mat::zeros(self.rows, rhs.cols);
        self.matmul_into(rhs, &mut out);
        out
    }

    /// `out = self * rhs`, reusing `out`'s storage.
    pub fn matmul_into(&self, rhs: &Mat<T>, out: &mut Mat<T>) {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        assert_eq!(out.rows, self.rows);
        assert_eq!(out.cols, rhs.cols);
        for r in 0..self.rows {
            for c in 0..rhs.cols {
                let mut acc = T::zero();
                for k in 0..self.cols {
                    acc += self.data[r * self.cols + k] * rhs.data[k * rhs.cols + c];
                }
                out.data[r * rhs.cols + c] = acc;
            }
        }
    }

    /// `out = self * rhsᵀ` without materializing the transpose.
    pub fn matmul_nt_into(&self, rhs: &Mat<T>, out: &mut Mat<T>) {
        assert_eq!(self.cols, rhs.cols, "matmul_nt dimension mismatch");
        assert_eq!(out.rows, self.rows);
        assert_eq!(out.cols, rhs.rows);
        for r in 0..self.rows {
            for c in 0..rhs.rows {
                let mut acc = T::zero();
                for k in 0..self.cols {
                    acc += self.data[r * self.cols + k] * rhs.data[c * rhs.cols + k];
                }
                out.data[r * rhs.rows + c] = acc;
            }
        }
    }

    /// `out = selfᵀ * rhs` without materializing the transpose.
    pub fn t_matmul_into(&self, rhs: &Mat<T>, out: &mut Mat<T>) {
        assert_eq!(self.rows, rhs.rows, "t_matmul dimension mismatch");
        assert_eq!(out.rows, self.cols);
        assert_eq!(out.cols, rhs.cols);
        for r in 0..self.cols {
            for c in 0..rhs.cols {
                let mut acc = T::zero();
                for k in 0..self.rows {
                    acc += self.data[k * self.cols + r] * rhs.data[k * rhs.cols + c];
                }
                out.data[r * rhs.cols + c] = acc;
            }
        }
    }

    /// Gram matrix `self * selfᵀ`.
    pub fn gram_into(&self, out: &mut Mat<T>) {
        assert_eq!(out.rows, self.rows);
        assert_eq!(out.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..=r {
                let mut acc = T::zero();
                for k in 0..self.cols {
                    acc += self.data[r * self.cols + k] * self.data[c * self.cols + k];
                }
                out.data[r * self.rows + c] = acc;
                out.data[c * self.rows + r] = acc;
            }
        }
    }

    /// `out = self * v` for a vector `v`.
    pub fn mul_vec_into(&self, v: &[T], out: &mut [T]) {
        assert_eq!(v.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            let mut acc = T::zero();
            for k in 0..self.cols {
                acc += self.data[r * self.cols + k] * v[k];
            }
            out[r] = acc;
        }
    }

    /// `out = selfᵀ * v`.
    pub fn t_mul_vec_into(&self, v: &[T], out: &mut [T]) {
        assert_eq!(v.len(), self.rows);
        assert_eq!(out.len(), self.cols);
        for c in 0..self.cols {
            out[c] = T::zero();
        }
        for r in 0..self.rows {
            let vr = v[r];
            for c in 0..self.cols {
                out[c] += self.data[r * self.cols + c] * vr;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Max-abs row-sum norm.
    pub fn norm_inf(&self) -> T {
        let mut best = T::zero();
        for r in 0..self.rows {
            let mut acc = T::zero();
            for c in 0..self.cols {
                acc += self[(r, c)].abs();
            }
            if acc > best {
                best = acc;
            }
        }
        best
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy entries from a same-shape matrix.
    pub fn copy_from(&mut self, src: &Mat<T>) {
        assert_eq!(self.rows, src.rows);
        assert_eq!(self.cols, src.cols);
        self.data.copy_from_slice(&src.data);
    }

    /// Overwrite with the identity (square only).
    pub fn set_identity(&mut self) {
        assert_eq!(self.rows, self.cols);
        for v in &mut self.data {
            *v = T::zero();
        }
        for i in 0..self.rows {
            self.data[i * self.cols + i] = T::one();
        }
    }

    /// Symmetrize in place: `A ← (A + Aᵀ)/2`.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        let half = T::from_f64_lossy(0.5);
        for r in 0..self.rows {
            for c in 0..r {
                let m = (self[(r, c)] + self[(c, r)]) * half;
                self[(r, c)] = m;
                self[(c, r)] = m;
            }
        }
    }
}

impl<T: Real> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline(always)]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T: Real> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    #[inline(always)]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// LU factorization with partial pivoting, in place. Returns `None` when a
/// pivot collapses to zero (exactly singular to working precision).
pub struct Lu<T> {
    lu: Mat<T>,
    piv: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn new(a: &Mat<T>) -> Option<Self> {
        assert_eq!(a.rows, a.cols, "LU requires a square matrix");
        let n = a.rows;
        let mut lu = a.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            // pivot
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for r in k + 1..n {
                let v = lu[(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return None;
            }
            if p != k {
                for c in 0..n {
                    let tmp = lu[(k, c)];
                    lu[(k, c)] = lu[(p, c)];
                    lu[(p, c)] = tmp;
                }
                piv.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for r in k + 1..n {
                let factor = lu[(r, k)] / pivot;
                lu[(r, k)] = factor;
                for c in k + 1..n {
                    let v = lu[(k, c)];
                    lu[(r, c)] -= factor * v;
                }
            }
        }
        Some(Lu { lu, piv })
    }

    /// Solve `A x = b` into `x`.
    pub fn solve_vec(&self, b: &[T], x: &mut [T]) {
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        assert_eq!(x.len(), n);
        for i in 0..n {
            x[i] = b[self.piv[i]];
        }
        for i in 0..n {
            for j in 0..i {
                let xj = x[j];
                x[i] -= self.lu[(i, j)] * xj;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let xj = x[j];
                x[i] -= self.lu[(i, j)] * xj;
            }
            x[i] /= self.lu[(i, i)];
        }
    }

    /// Solve `A X = B` column by column.
    pub fn solve_mat(&self, b: &Mat<T>, out: &mut Mat<T>) {
        let n = self.lu.rows;
        assert_eq!(b.rows, n);
        assert_eq!(out.rows, n);
        assert_eq!(out.cols, b.cols);
        let mut col = vec![T::zero(); n];
        let mut sol = vec![T::zero(); n];
        for c in 0..b.cols {
            for r in 0..n {
                col[r] = b[(r, c)];
            }
            self.solve_vec(&col, &mut sol);
            for r in 0..n {
                out[(r, c)] = sol[r];
            }
        }
    }

    pub fn inverse(&self) -> Mat<T> {
        let n = self.lu.rows;
        let id = Mat::identity(n);
        let mut inv = Mat::zeros(n, n);
        self.solve_mat(&id, &mut inv);
        inv
    }
}

/// Invert a small square matrix; `None` if exactly singular.
pub fn inverse<T: Real>(a: &Mat<T>) -> Option<Mat<T>> {
    Lu::new(a).map(|lu| lu.inverse())
}

/// Allocation-free Gauss–Jordan inverse into preallocated buffers; returns
/// `false` when a pivot collapses (singular to working precision). Meant for
/// per-step use inside simulation/likelihood loops.
pub fn invert_into<T: Real>(a: &Mat<T>, scratch: &mut Mat<T>, out: &mut Mat<T>) -> bool {
    let n = a.rows();
    debug_assert_eq!(a.cols(), n);
    debug_assert_eq!(scratch.rows(), n);
    debug_assert_eq!(out.rows(), n);
    scratch.copy_from(a);
    out.set_identity();
    for k in 0..n {
        let mut p = k;
        let mut best = scratch[(k, k)].abs();
        for r in k + 1..n {
            let v = scratch[(r, k)].abs();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best == T::zero() || !best.is_finite() {
            return false;
        }
        if p != k {
            for c in 0..n {
                let tmp = scratch[(k, c)];
                scratch[(k, c)] = scratch[(p, c)];
                scratch[(p, c)] = tmp;
                let tmp = out[(k, c)];
                out[(k, c)] = out[(p, c)];
                out[(p, c)] = tmp;
            }
        }
        let pivot = scratch[(k, k)];
        for c in 0..n {
            scratch[(k, c)] /= pivot;
            out[(k, c)] /= pivot;
        }
        for r in 0..n {
            if r == k {
                continue;
            }
            let f = scratch[(r, k)];
            if f == T::zero() {
                continue;
            }
            for c in 0..n {
                let s = scratch[(k, c)];
                scratch[(r, c)] -= f * s;
                let o = out[(k, c)];
                out[(r, c)] -= f * o;
            }
        }
    }
    true
}

/// Cheap condition estimate `‖A‖∞ · ‖A⁻¹‖∞`; `f64::INFINITY` when singular.
pub fn cond_inf<T: Real>(a: &Mat<T>) -> f64 {
    match inverse(a) {
        Some(inv) => (a.norm_inf() * inv.norm_inf()).to_f64_lossy(),
        None => f64::INFINITY,
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues (ascending) and the orthogonal matrix of column
/// eigenvectors. Intended for matrices of dimension ≲ 16.
pub fn sym_eigen<T: Real>(a: &Mat<T>) -> (Vec<T>, Mat<T>) {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    let eps = T::from_f64_lossy(1e-14);
    let half = T::from_f64_lossy(0.5);

    for _sweep in 0..64 {
        let mut off = T::zero();
        for r in 0..n {
            for c in r + 1..n {
                off += m[(r, c)] * m[(r, c)];
            }
        }
        let mut diag = T::zero();
        for r in 0..n {
            diag += m[(r, r)] * m[(r, r)];
        }
        if off <= eps * eps * (diag + T::one()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = half * (aqq - app) / apq;
                // stable tangent of the rotation angle
                let t = {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (T::one() + theta * theta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
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
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap());
    let eigvals: Vec<T> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (new_c, &old_c) in order.iter().enumerate() {
        for r in 0..n {
            vecs[(r, new_c)] = v[(r, old_c)];
        }
    }
    (eigvals, vecs)
}

/// `A^{-1/2}` for a symmetric positive-definite matrix via eigendecomposition.
pub fn inv_sqrt_spd<T: Real>(a: &Mat<T>) -> Option<Mat<T>> {
    let n = a.rows();
    let (vals, vecs) = sym_eigen(a);
    if vals.iter().any(|&l| l <= T::zero()) {
        return None;
    }
    let mut scaled = vecs.clone(); // columns scaled by λ^{-1/2}
    for c in 0..n {
        let w = T::one() / vals[c].sqrt();
        for r in 0..n {
            scaled[(r, c)] *= w;
        }
    }
    let mut out = Mat::zeros(n, n);
    let vt = vecs.transpose();
    scaled.matmul_into(&vt, &mut out);
    Some(out)
}

/// Dot product.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m64(rows: usize, cols: usize, v: &[f64]) -> Mat<f64> {
        Mat::from_row_major(rows, cols, v)
    }

    #[test]
    fn lu_solves_3x3() {
        let a = m64(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.5, -1.0, 2.0]);
        let lu = Lu::new(&a).unwrap();
        let b = [1.0, 2.0, 3.0];
        let mut x = [0.0; 3];
        lu.solve_vec(&b, &mut x);
        let mut r = [0.0; 3];
        a.mul_vec_into(&x, &mut r);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-12, "residual {i}: {}", r[i] - b[i]);
        }
        let inv = lu.inverse();
        let id = a.matmul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lu_detects_singularity() {
        let a = m64(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(Lu::new(&a).is_none());
        assert!(cond_inf(&a).is_infinite());
    }

    #[test]
    fn jacobi_eigen_known_matrix() {
        // eigenvalues of [[2,1],[1,2]] are 1 and 3
        let a = m64(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (vals, vecs) = sym_eigen(&a);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        // V diag(vals) Vᵀ reconstructs A
        let mut d = Mat::zeros(2, 2);
        d[(0, 0)] = vals[0];
        d[(1, 1)] = vals[1];
        let rec = vecs.matmul(&d).matmul(&vecs.transpose());
        for i in 0..2 {
            for j in 0..2 {
                assert!((rec[(i, j)] - a[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inv_sqrt_spd_squares_back() {
        let a = m64(2, 2, &[2.5, 0.7, 0.7, 1.2]);
        let s = inv_sqrt_spd(&a).unwrap();
        // s * a * s = I
        let id = s.matmul(&a).matmul(&s);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - want).abs() < 1e-10);
            }
        }
        let neg = m64(1, 1, &[-1.0]);
        assert!(inv_sqrt_spd(&neg).is_none());
    }

    #[test]
    fn invert_into_matches_lu_inverse() {
        let a = m64(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.5, -1.0, 2.0]);
        let mut scratch = Mat::zeros(3, 3);
        let mut out = Mat::zeros(3, 3);
        assert!(invert_into(&a, &mut scratch, &mut out));
        let want = inverse(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((out[(i, j)] - want[(i, j)]).abs() < 1e-13);
            }
        }
        let sing = m64(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let mut s2 = Mat::zeros(2, 2);
        let mut o2 = Mat::zeros(2, 2);
        assert!(!invert_into(&sing, &mut s2, &mut o2));
    }

    #[test]
    fn transposed_products_agree() {
        let a = m64(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = m64(3, 2, &[0.5, -1.0, 2.0, 0.25, -0.75, 1.5]);
        let mut out = Mat::zeros(2, 2);
        a.t_matmul_into(&b, &mut out);
        let want = a.transpose().matmul(&b);
        assert_eq!(out, want);

        let mut nt = Mat::zeros(3, 3);
        a.matmul_nt_into(&b, &mut nt);
        let want = a.matmul(&b.transpose());
        assert_eq!(nt, want);

        let mut g = Mat::zeros(3, 3);
        a.gram_into(&mut g);
        let want = a.matmul(&a.transpose());
        for i in 0..3 {
            for j in 0..3 {
                assert!((g[(i, j)] - want[(i, j)]).abs() < 1e-14);
            }
        }
    }
}
