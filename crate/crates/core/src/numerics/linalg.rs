use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Div, Mul, Neg, Sub};

use super::DoubleDouble;
use crate::error::{invalid, Error, Result};

// Redundant (but harmless) when another crate in the graph links std.
#[allow(unused_imports)]
use num_traits::Float;

/// Pivots smaller than this are treated as exact zeros by [`solve`].
pub const SINGULAR_PIVOT: f64 = 1e-300;

/// Field operations needed by the LU factorization, so the same code runs in
/// plain and paired-limb precision.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn of(x: f64) -> Self;
    fn approx(self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn of(x: f64) -> Self {
        x
    }
    fn approx(self) -> f64 {
        self
    }
}

impl Scalar for DoubleDouble {
    fn zero() -> Self {
        DoubleDouble::ZERO
    }
    fn one() -> Self {
        DoubleDouble::ONE
    }
    fn of(x: f64) -> Self {
        DoubleDouble::from_f64(x)
    }
    fn approx(self) -> f64 {
        self.to_f64()
    }
}

/// Dense row-major square matrix with an optional paired-limb mirror.
///
/// When the mirror is populated, [`det_lu`] and [`solve`] factor in
/// double-double arithmetic and round the result.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    entries: Vec<f64>,
    extended: Option<Vec<DoubleDouble>>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        SquareMatrix { dim, entries: vec![0.0; dim * dim], extended: None }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.entries[i * values.len() + i] = v;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                entries.push(f(i, j));
            }
        }
        SquareMatrix { dim, entries, extended: None }
    }

    /// Wraps row-major data; rejects non-square lengths and non-finite entries.
    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(invalid(format!("expected {} entries for dimension {dim}, got {}", dim * dim, entries.len())));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(invalid("matrix entries must be finite"));
        }
        Ok(SquareMatrix { dim, entries, extended: None })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.entries[i * self.dim + j] = value;
        if let Some(ext) = self.extended.as_mut() {
            ext[i * self.dim + j] = DoubleDouble::from_f64(value);
        }
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn extended(&self) -> Option<&[DoubleDouble]> {
        self.extended.as_deref()
    }

    /// Populates the paired-limb mirror from the current entries.
    pub fn with_extended(mut self) -> Self {
        if self.extended.is_none() {
            self.extended = Some(self.entries.iter().map(|&x| x.into()).collect());
        }
        self
    }

    /// Installs an externally computed paired-limb mirror; the plain entries
    /// are replaced by its rounding.
    pub fn set_extended(&mut self, values: Vec<DoubleDouble>) {
        assert_eq!(values.len(), self.dim * self.dim);
        for (e, v) in self.entries.iter_mut().zip(&values) {
            *e = v.to_f64();
        }
        self.extended = Some(values);
    }

    pub fn drop_extended(&mut self) {
        self.extended = None;
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let mut t = Self::from_fn(n, |i, j| self.get(j, i));
        if let Some(ext) = &self.extended {
            let mut e = ext.clone();
            for i in 0..n {
                for j in 0..n {
                    e[i * n + j] = ext[j * n + i];
                }
            }
            t.extended = Some(e);
        }
        t
    }

    pub fn matmul(&self, rhs: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.entries[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let row = &rhs.entries[k * n..(k + 1) * n];
                for (o, &b) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        SquareMatrix { dim: n, entries: out, extended: None }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// `I - self`, carrying the mirror along.
    pub fn identity_minus(&self) -> SquareMatrix {
        let n = self.dim;
        let mut out = SquareMatrix::from_fn(n, |i, j| {
            let d = if i == j { 1.0 } else { 0.0 };
            d - self.get(i, j)
        });
        if let Some(ext) = &self.extended {
            let mut e: Vec<DoubleDouble> = ext.iter().map(|&x| -x).collect();
            for i in 0..n {
                e[i * n + i] += DoubleDouble::ONE;
            }
            out.extended = Some(e);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Replaces the matrix by its symmetric part.
    pub fn symmetrize(&mut self) {
        let n = self.dim;
        for i in 0..n {
            for j in 0..i {
                let a = 0.5 * (self.get(i, j) + self.get(j, i));
                self.entries[i * n + j] = a;
                self.entries[j * n + i] = a;
            }
        }
        if let Some(ext) = self.extended.as_mut() {
            for i in 0..n {
                for j in 0..i {
                    let a = (ext[i * n + j] + ext[j * n + i]).mul_f64(0.5);
                    ext[i * n + j] = a;
                    ext[j * n + i] = a;
                }
            }
        }
    }
}

/// Partially pivoted LU factorization `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
    parity: bool,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(n: usize, mut a: Vec<T>) -> Self {
        assert_eq!(a.len(), n * n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut parity = false;
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].approx().abs();
            for i in k + 1..n {
                let v = a[i * n + k].approx().abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                parity = !parity;
            }
            let pivot = a[k * n + k];
            if pivot.approx() == 0.0 {
                continue;
            }
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                a[i * n + k] = f;
                if f.approx() == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    let u = a[k * n + j];
                    a[i * n + j] = a[i * n + j] - f * u;
                }
            }
        }
        Lu { n, lu: a, perm, parity }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn pivots(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.n).map(move |i| self.lu[i * self.n + i])
    }

    pub fn det(&self) -> T {
        let mut d = T::one();
        for p in self.pivots() {
            d = d * p;
        }
        if self.parity {
            -d
        } else {
            d
        }
    }

    /// Sign and natural log of |det|, immune to overflow of the pivot product.
    pub fn log_det(&self) -> (f64, f64) {
        let mut sign = if self.parity { -1.0 } else { 1.0 };
        let mut log = 0.0;
        for p in self.pivots() {
            let v = p.approx();
            if v == 0.0 {
                return (0.0, f64::NEG_INFINITY);
            }
            if v < 0.0 {
                sign = -sign;
            }
            log += v.abs().ln();
        }
        (sign, log)
    }

    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        assert_eq!(rhs.len(), n);
        for (i, p) in self.pivots().enumerate() {
            if p.approx().abs() < SINGULAR_PIVOT {
                return Err(Error::SingularMatrix { pivot: i });
            }
        }
        let mut x: Vec<T> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s = s - self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        Ok(x)
    }

    /// Solves `A^T x = rhs`.
    pub fn solve_transpose(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        assert_eq!(rhs.len(), n);
        for (i, p) in self.pivots().enumerate() {
            if p.approx().abs() < SINGULAR_PIVOT {
                return Err(Error::SingularMatrix { pivot: i });
            }
        }
        // A^T = U^T L^T P, so solve U^T y = rhs, L^T z = y, x = P^T z.
        let mut y: Vec<T> = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s = s - self.lu[j * n + i] * y[j];
            }
            y[i] = s / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s = s - self.lu[j * n + i] * y[j];
            }
            y[i] = s;
        }
        let mut x = vec![T::zero(); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        Ok(x)
    }
}

/// Determinant by partially pivoted LU; uses the paired-limb mirror when set.
pub fn det_lu(m: &SquareMatrix) -> f64 {
    match m.extended() {
        Some(ext) => Lu::factor(m.dim(), ext.to_vec()).det().to_f64(),
        None => Lu::factor(m.dim(), m.entries().to_vec()).det(),
    }
}

/// Solves `m x = rhs`.
pub fn solve(m: &SquareMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != m.dim() {
        return Err(invalid("right-hand side length does not match matrix"));
    }
    match m.extended() {
        Some(ext) => {
            let b: Vec<DoubleDouble> = rhs.iter().map(|&x| x.into()).collect();
            let x = Lu::factor(m.dim(), ext.to_vec()).solve(&b)?;
            Ok(x.into_iter().map(|v| v.to_f64()).collect())
        }
        None => Lu::factor(m.dim(), m.entries().to_vec()).solve(rhs),
    }
}

/// Eigen-decomposition of a symmetric matrix. Eigenvalues ascend; the
/// eigenvectors are the columns of the returned matrix.
pub fn sym_eigen(m: &SquareMatrix) -> Result<(Vec<f64>, SquareMatrix)> {
    let n = m.dim();
    let scale = m.max_abs().max(1.0);
    if m.asymmetry() > 1e-12 * scale {
        return Err(invalid("sym_eigen requires a symmetric matrix"));
    }
    let mut v: Vec<f64> = m.entries().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e);
    // tql2 expects e[i] to couple i and i+1.
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    tql2(n, &mut d, &mut e, &mut v, n);
    let (vals, vecs) = sort_pairs(n, d, &v, n);
    Ok((vals, SquareMatrix::from_row_major(n, vecs)?))
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (`off[i]` couples `i` and `i + 1`), in ascending order,
/// together with the first `vector_rows` rows of the eigenvector matrix.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64], vector_rows: usize) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    assert!(off.len() + 1 >= n);
    let rows = vector_rows.min(n);
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    let mut v = vec![0.0; rows * n];
    for i in 0..rows {
        v[i * n + i] = 1.0;
    }
    tql2(n, &mut d, &mut e, &mut v, rows);
    sort_pairs(n, d, &v, rows)
}

fn sort_pairs(n: usize, d: Vec<f64>, v: &[f64], rows: usize) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let vals = order.iter().map(|&i| d[i]).collect();
    let mut vecs = vec![0.0; rows * n];
    for r in 0..rows {
        for (c, &src) in order.iter().enumerate() {
            vecs[r * n + c] = v[r * n + src];
        }
    }
    (vals, vecs)
}

// Householder reduction to tridiagonal form (EISPACK tred2 as in JAMA).
// On return `v` holds the orthogonal transformation, `d` the diagonal and
// `e[1..]` the sub-diagonal.
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

// Implicit QL on a symmetric tridiagonal matrix (EISPACK tql2 as in JAMA).
// `e[i]` couples `i` and `i + 1` with `e[n - 1] = 0`. Rotations are applied to
// the first `rows` rows of `v` (row-major, `rows x n`).
fn tql2(n: usize, d: &mut [f64], e: &mut [f64], v: &mut [f64], rows: usize) {
    if n == 0 {
        return;
    }
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..rows {
                        let h = v[k * n + i + 1];
                        v[k * n + i + 1] = s * v[k * n + i] + c * h;
                        v[k * n + i] = c * v[k * n + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 || iter > 100 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
}
