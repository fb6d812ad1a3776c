//! Dense vectors and matrices plus the weighted ridge least-squares solve
//! behind the natural-gradient projection.
//!
//! The least-squares problem is solved through the normal equations: the
//! Gram matrix `Jᵀ W J` is assembled with a blocked matrix product and then
//! factored with a blocked Cholesky decomposition. Sample counts are always
//! much larger than parameter counts here, so the `P × P` system is the cheap
//! side of the problem.

use std::ops::Deref;

use thiserror::Error;

use crate::scalar::Real;

/// Column block width used when assembling the Gram matrix.
///
/// Each output block is produced by exactly one sequential matrix product, so
/// the result is bit-reproducible for a fixed block width.
pub const GRAM_BLOCK: usize = 128;

/// Block width of the right-looking Cholesky factorization.
const CHOLESKY_BLOCK: usize = 64;

/// Maximum number of ridge doublings attempted by [`solve_ridge_lsq`].
pub const MAX_RIDGE_DOUBLINGS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("negative weight at index {0}")]
    NegativeWeight(usize),
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error(
        "least-squares solve failed after ridge escalation (relative ridge {ridge:e}, condition estimate {condition_estimate:e})"
    )]
    RidgeEscalationFailed { ridge: f64, condition_estimate: f64 },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

fn check_finite<T: Real>(values: &[T]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(LinalgError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Dense real vector with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector<T>(Vec<T>);

impl<T: Real> Vector<T> {
    pub fn new(entries: Vec<T>) -> Result<Self> {
        check_finite(&entries)?;
        Ok(Self(entries))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![T::zero(); len])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn dot(&self, other: &[T]) -> T {
        dot(&self.0, other)
    }

    /// Euclidean norm.
    pub fn norm(&self) -> T {
        self.dot(&self.0).sqrt()
    }
}

impl<T> Deref for Vector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Dense row-major matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::DimensionMismatch(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::DimensionMismatch("ragged rows".into()));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub(crate) fn from_row_major_unchecked(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_row_major_unchecked(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).fold(T::zero(), |acc, i| acc + self.get(i, i))
    }

    /// Matrix-vector product `A x`.
    pub fn mul_vec(&self, x: &[T]) -> Result<Vector<T>> {
        if x.len() != self.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok(Vector((0..self.rows).map(|i| dot(self.row(i), x)).collect()))
    }

    /// Weighted transposed product `Aᵀ diag(w) y`.
    pub fn weighted_transpose_mul_vec(&self, w: &[T], y: &[T]) -> Result<Vector<T>> {
        if w.len() != self.rows || y.len() != self.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} rows but {} weights and {} right-hand-side entries",
                self.rows,
                w.len(),
                y.len()
            )));
        }
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            let s = w[i] * y[i];
            if s == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += s * a;
            }
        }
        Ok(Vector(out))
    }

    /// True when `A == Aᵀ` bit for bit.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Weighted Gram matrix `Jᵀ diag(w) J`, exactly symmetric.
pub fn gram<T: Real>(j: &Matrix<T>, weights: &[T]) -> Result<Matrix<T>> {
    let (n, p) = (j.rows, j.cols);
    if weights.len() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "{n} Jacobian rows but {} weights",
            weights.len()
        )));
    }
    if let Some(i) = weights.iter().position(|&w| w < T::zero()) {
        return Err(LinalgError::NegativeWeight(i));
    }

    let mut weighted = j.data.clone();
    for (row, &w) in weighted.chunks_exact_mut(p).zip(weights) {
        row.iter_mut().for_each(|v| *v *= w);
    }

    // Upper block rows: G[b0..b1, b0..p] = J[:, b0..b1]ᵀ (W J)[:, b0..p].
    let mut g = vec![T::zero(); p * p];
    let mut b0 = 0;
    while b0 < p {
        let bw = GRAM_BLOCK.min(p - b0);
        // SAFETY: every view stays inside its own buffer and `g` is distinct.
        unsafe {
            T::gemm(
                bw,
                n,
                p - b0,
                T::one(),
                j.data.as_ptr().add(b0),
                1,
                p as isize,
                weighted.as_ptr().add(b0),
                p as isize,
                1,
                T::zero(),
                g.as_mut_ptr().add(b0 * p + b0),
                p as isize,
                1,
            );
        }
        b0 += bw;
    }
    for r in 0..p {
        for c in 0..r {
            g[r * p + c] = g[c * p + r];
        }
    }
    Ok(Matrix::from_row_major_unchecked(p, p, g))
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factors a symmetric positive definite matrix. Only the lower triangle
    /// of `a` is read.
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        if a.rows != a.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "Cholesky needs a square matrix, got {}x{}",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let mut l = a.data.clone();
        cholesky_in_place(&mut l, n).map_err(|pivot| LinalgError::NotPositiveDefinite { pivot })?;
        Ok(Self { n, l })
    }

    pub fn factor_matrix(&self) -> Matrix<T> {
        Matrix::from_row_major_unchecked(self.n, self.n, self.l.clone())
    }

    /// `(max L_ii / min L_ii)²`, a cheap lower-bound proxy for the condition number.
    pub fn condition_estimate(&self) -> T {
        diag_condition(&self.l, self.n, self.n)
    }

    pub fn solve(&self, b: &[T]) -> Result<Vector<T>> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch(format!(
                "{n}x{n} system with right-hand side of length {}",
                b.len()
            )));
        }
        let l = &self.l;
        let mut x = b.to_vec();
        for i in 0..n {
            let s = x[i] - dot(&l[i * n..i * n + i], &x[..i]);
            x[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        Ok(Vector(x))
    }
}

fn diag_condition<T: Real>(l: &[T], n: usize, upto: usize) -> T {
    let (mut lo, mut hi) = (T::infinity(), T::zero());
    for i in 0..upto.min(n) {
        let d = l[i * n + i].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if upto == 0 || lo == T::zero() {
        return T::infinity();
    }
    let ratio = hi / lo;
    (ratio * ratio).max(T::one())
}

/// Blocked right-looking Cholesky on a row-major `n × n` buffer. On failure
/// returns the offending pivot index; the lower triangle up to that pivot
/// then holds the partial factor.
fn cholesky_in_place<T: Real>(a: &mut [T], n: usize) -> std::result::Result<(), usize> {
    let mut k0 = 0;
    while k0 < n {
        let k1 = (k0 + CHOLESKY_BLOCK).min(n);

        for j in k0..k1 {
            let mut d = a[j * n + j];
            for k in k0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(j);
            }
            let djj = d.sqrt();
            a[j * n + j] = djj;
            for i in j + 1..k1 {
                let mut s = a[i * n + j];
                for k in k0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / djj;
            }
        }

        for i in k1..n {
            for j in k0..k1 {
                let mut s = a[i * n + j];
                for k in k0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / a[j * n + j];
            }
        }

        // Trailing update of the lower triangle: A22 -= L21 L21ᵀ, one row block at a time.
        let p = a.as_mut_ptr();
        let mut r0 = k1;
        while r0 < n {
            let r1 = (r0 + CHOLESKY_BLOCK).min(n);
            // SAFETY: the written block has columns >= k1 while both read
            // panels live in columns k0..k1, so the regions are disjoint.
            unsafe {
                T::gemm(
                    r1 - r0,
                    k1 - k0,
                    r1 - k1,
                    -T::one(),
                    p.add(r0 * n + k0),
                    n as isize,
                    1,
                    p.add(k1 * n + k0),
                    1,
                    n as isize,
                    T::one(),
                    p.add(r0 * n + k1),
                    n as isize,
                    1,
                );
            }
            r0 = r1;
        }
        k0 = k1;
    }
    for i in 0..n {
        for j in i + 1..n {
            a[i * n + j] = T::zero();
        }
    }
    Ok(())
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn solve_spd<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<Vector<T>> {
    Cholesky::factor(a)?.solve(b)
}

/// Output of [`solve_ridge_lsq`].
#[derive(Debug, Clone, PartialEq)]
pub struct LsqSolution<T> {
    pub delta_theta: Vector<T>,
    /// Weighted L² norm of `du - J Δθ`.
    pub residual_norm: T,
    pub gram_condition_estimate: T,
    /// Relative ridge actually used after any escalation.
    pub ridge_used: T,
}

/// Minimizes `Σ wᵢ (duᵢ - (J Δθ)ᵢ)² + ridge · s · ‖Δθ‖²` with
/// `s = max(trace(JᵀWJ)/P, tiny)`, so `ridge` is relative to the Gram scale.
///
/// If the regularized Gram matrix fails to factor, the ridge is doubled (from
/// at least `√ε`) up to [`MAX_RIDGE_DOUBLINGS`] times.
pub fn solve_ridge_lsq<T: Real>(
    j: &Matrix<T>,
    weights: &[T],
    du: &[T],
    ridge: T,
) -> Result<LsqSolution<T>> {
    if du.len() != j.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "{} Jacobian rows but residual of length {}",
            j.rows,
            du.len()
        )));
    }
    if !(ridge >= T::zero()) {
        return Err(LinalgError::DimensionMismatch(format!("ridge must be >= 0, got {ridge}")));
    }
    let g = gram(j, weights)?;
    let rhs = j.weighted_transpose_mul_vec(weights, du)?;
    let p = j.cols;
    let scale = (g.trace() / T::from_count(p)).max(T::min_positive_value());

    let mut current = ridge;
    let mut last_condition = T::infinity();
    for attempt in 0..=MAX_RIDGE_DOUBLINGS {
        if attempt > 0 {
            current = if attempt == 1 { ridge.max(T::epsilon().sqrt()) } else { current };
            current *= T::lit(2.0);
        }
        let mut a = g.data.clone();
        let shift = current * scale;
        for i in 0..p {
            a[i * p + i] += shift;
        }
        match cholesky_in_place(&mut a, p) {
            Ok(()) => {
                let chol = Cholesky { n: p, l: a };
                let delta = chol.solve(&rhs)?;
                let fitted = j.mul_vec(&delta)?;
                let residual_sq = weights
                    .iter()
                    .zip(du)
                    .zip(fitted.iter())
                    .fold(T::zero(), |acc, ((&w, &d), &f)| acc + w * (d - f) * (d - f));
                return Ok(LsqSolution {
                    delta_theta: delta,
                    residual_norm: residual_sq.sqrt(),
                    gram_condition_estimate: chol.condition_estimate(),
                    ridge_used: current,
                });
            }
            Err(pivot) => last_condition = diag_condition(&a, p, pivot),
        }
    }
    Err(LinalgError::RidgeEscalationFailed {
        ridge: current.to_f64().unwrap_or(f64::NAN),
        condition_estimate: last_condition.to_f64().unwrap_or(f64::NAN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::SplitMix64;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_row_major(rows, cols, data).unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SplitMix64::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn triple_loop_gram(j: &Matrix<f64>, w: &[f64]) -> Vec<f64> {
        let p = j.cols();
        let mut g = vec![0.0; p * p];
        for a in 0..p {
            for b in 0..p {
                for i in 0..j.rows() {
                    g[a * p + b] += j.get(i, a) * w[i] * j.get(i, b);
                }
            }
        }
        g
    }

    /// Gaussian elimination with partial pivoting, independent of Cholesky.
    fn pivoted_elimination(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
        let mut m: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut r = a[i * n..(i + 1) * n].to_vec();
                r.push(b[i]);
                r
            })
            .collect();
        for c in 0..n {
            let piv = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
            m.swap(c, piv);
            for r in c + 1..n {
                let f = m[r][c] / m[c][c];
                for k in c..=n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
            x[i] = (m[i][n] - s) / m[i][i];
        }
        x
    }

    #[test]
    fn constructors_reject_non_finite() {
        assert_eq!(Vector::new(vec![1.0, f64::NAN]), Err(LinalgError::NonFinite(1)));
        assert!(Matrix::from_row_major(1, 2, vec![f64::INFINITY, 0.0]).is_err());
        assert!(Matrix::<f64>::from_row_major(0, 2, vec![]).is_err());
    }

    #[test]
    fn gram_small_cases() {
        let j = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(gram(&j, &[1.0, 1.0]).unwrap().as_slice(), &[2.0]);
        assert_eq!(gram(&Matrix::<f64>::identity(3), &[1.0; 3]).unwrap(), Matrix::identity(3));
    }

    #[test]
    fn gram_matches_triple_loop() {
        let j = random_matrix(50, 8, 7);
        let w = vec![1.0; 50];
        let g = gram(&j, &w).unwrap();
        for (x, y) in g.as_slice().iter().zip(triple_loop_gram(&j, &w)) {
            assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn gram_spanning_several_blocks_is_symmetric_psd() {
        let j = random_matrix(40, GRAM_BLOCK + 37, 11);
        let mut rng = SplitMix64::seed_from_u64(3);
        let w: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..2.0)).collect();
        let g = gram(&j, &w).unwrap();
        assert!(g.is_symmetric());
        let oracle = triple_loop_gram(&j, &w);
        for (x, y) in g.as_slice().iter().zip(&oracle) {
            assert!((x - y).abs() <= 1e-12);
        }
        let tr = g.trace();
        for probe in 0..20 {
            let v = random_vec(g.cols(), 100 + probe);
            let q = g.mul_vec(&v).unwrap().dot(&v) / dot(&v, &v);
            assert!(q >= -1e-12 * tr);
        }
    }

    #[test]
    fn gram_dimension_errors() {
        let j = random_matrix(3, 2, 1);
        assert!(matches!(gram(&j, &[1.0, 1.0]), Err(LinalgError::DimensionMismatch(_))));
        assert_eq!(gram(&j, &[1.0, -1.0, 1.0]), Err(LinalgError::NegativeWeight(1)));
    }

    #[test]
    fn solve_spd_small_cases() {
        let b = [3.0, -1.0, 0.5];
        assert_eq!(solve_spd(&Matrix::identity(3), &b).unwrap().as_slice(), &b);
        let a = Matrix::from_rows(&[vec![2.0f64, 0.0], vec![0.0, 4.0]]).unwrap();
        for x in solve_spd(&a, &[2.0, 4.0]).unwrap().iter() {
            assert!((x - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn solve_spd_residual_random() {
        for (n, seed) in [(8, 1), (150, 2)] {
            let m = random_matrix(n, n, seed);
            let mut a = gram(&m, &vec![1.0; n]).unwrap();
            for i in 0..n {
                a.data[i * n + i] += 1.0;
            }
            let b = random_vec(n, seed + 10);
            let x = solve_spd(&a, &b).unwrap();
            let ax = a.mul_vec(&x).unwrap();
            let r: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            assert!(r <= 1e-10 * dot(&b, &b).sqrt(), "residual {r}");
        }
    }

    #[test]
    fn cholesky_factor_reconstructs() {
        let n = 70;
        let m = random_matrix(n, n, 5);
        let mut a = gram(&m, &vec![1.0; n]).unwrap();
        for i in 0..n {
            a.data[i * n + i] += 0.5;
        }
        let l = Cholesky::factor(&a).unwrap().factor_matrix();
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|k| l.get(i, k) * l.get(j, k)).sum();
                assert!((s - a.get(i, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn solve_spd_rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(solve_spd(&a, &[1.0, 1.0]), Err(LinalgError::NotPositiveDefinite { pivot: 1 }));
    }

    #[test]
    fn ridge_lsq_small_cases() {
        let v = vec![0.5, -2.0, 3.0];
        let sol = solve_ridge_lsq(&Matrix::identity(3), &[1.0; 3], &v, 0.0).unwrap();
        assert_eq!(sol.delta_theta.as_slice(), v.as_slice());
        assert_eq!(sol.residual_norm, 0.0);

        let j = Matrix::from_rows(&[vec![1.0f64], vec![1.0]]).unwrap();
        let sol = solve_ridge_lsq(&j, &[1.0, 1.0], &[1.0, 3.0], 0.0).unwrap();
        assert!((sol.delta_theta[0] - 2.0).abs() <= 1e-15);
        assert!((sol.residual_norm - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(sol.gram_condition_estimate, 1.0);
    }

    #[test]
    fn ridge_lsq_matches_pivoted_elimination() {
        let (n, p) = (100, 6);
        let j = random_matrix(n, p, 21);
        let du = random_vec(n, 22);
        let w = vec![1.0; n];
        let sol = solve_ridge_lsq(&j, &w, &du, 0.0).unwrap();
        let g = triple_loop_gram(&j, &w);
        let rhs: Vec<f64> = (0..p).map(|a| (0..n).map(|i| j.get(i, a) * du[i]).sum()).collect();
        let oracle = pivoted_elimination(&g, &rhs, p);
        for (x, y) in sol.delta_theta.iter().zip(&oracle) {
            assert!((x - y).abs() <= 1e-9);
        }
        // residual norm contract
        let fitted = j.mul_vec(&sol.delta_theta).unwrap();
        let r: f64 = du.iter().zip(fitted.iter()).map(|(d, f)| (d - f) * (d - f)).sum::<f64>().sqrt();
        assert!((r - sol.residual_norm).abs() <= 1e-10 * r);
    }

    #[test]
    fn ridge_lsq_normal_equation_optimality() {
        let (n, p) = (300, 12);
        let j = random_matrix(n, p, 31);
        let du = random_vec(n, 32);
        let mut rng = SplitMix64::seed_from_u64(33);
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let sol = solve_ridge_lsq(&j, &w, &du, 0.0).unwrap();
        let fitted = j.mul_vec(&sol.delta_theta).unwrap();
        let resid: Vec<f64> = du.iter().zip(fitted.iter()).map(|(d, f)| d - f).collect();
        let grad = j.weighted_transpose_mul_vec(&w, &resid).unwrap();
        let scale = j.weighted_transpose_mul_vec(&w, &du).unwrap().norm();
        assert!(grad.norm() <= 1e-8 * scale);
    }

    #[test]
    fn ridge_escalation_handles_rank_deficiency() {
        // a dead column makes the Gram matrix exactly singular
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 0.0]).collect();
        let j = Matrix::from_rows(&rows).unwrap();
        let du: Vec<f64> = (0..10).map(|i| 2.0 * i as f64).collect();
        let sol = solve_ridge_lsq(&j, &[1.0; 10], &du, 0.0).unwrap();
        assert!(sol.ridge_used > 0.0);
        assert!((sol.delta_theta[0] - 2.0).abs() < 1e-6);
        assert_eq!(sol.delta_theta[1], 0.0);
    }

    proptest! {
        #[test]
        fn ridge_shrinks_solution(seed in 0u64..1000, r1 in 1e-6f64..1e-1, factor in 1.5f64..100.0) {
            let j = random_matrix(30, 5, seed);
            let du = random_vec(30, seed + 1);
            let w = vec![1.0; 30];
            let a = solve_ridge_lsq(&j, &w, &du, r1).unwrap().delta_theta.norm();
            let b = solve_ridge_lsq(&j, &w, &du, r1 * factor).unwrap().delta_theta.norm();
            prop_assert!(a >= b);
        }

        #[test]
        fn row_permutation_invariance(seed in 0u64..1000) {
            let n = 40;
            let j = random_matrix(n, 4, seed);
            let du = random_vec(n, seed + 7);
            let mut rng = SplitMix64::seed_from_u64(seed + 9);
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let pj: Vec<Vec<f64>> = perm.iter().map(|&i| j.row(i).to_vec()).collect();
            let pw: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
            let pdu: Vec<f64> = perm.iter().map(|&i| du[i]).collect();
            let a = solve_ridge_lsq(&j, &w, &du, 1e-8).unwrap().delta_theta;
            let b = solve_ridge_lsq(&Matrix::from_rows(&pj).unwrap(), &pw, &pdu, 1e-8).unwrap().delta_theta;
            let scale = a.norm().max(1e-300);
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() <= 1e-9 * scale);
            }
        }
    }
}
