//! Dense linear algebra and index-selection utilities.
//!
//! Everything here is a pure function of its inputs. Matrices are stored
//! column-major, which matches how reduced bases are built (one snapshot
//! column at a time) and how restricted systems are assembled.

use std::ops::Deref;

use thiserror::Error;

/// Relative threshold on the diagonal of `R` below which a least-squares
/// system is declared rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix is rank deficient: |r_{index}{index}| = {value:e} below {threshold:e}")]
    RankDeficient {
        index: usize,
        value: f64,
        threshold: f64,
    },
    #[error("every candidate index is excluded")]
    EmptyCandidateSet,
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry at position {0}")]
    NonFinite(usize),
    #[error("zero pivot in banded factorization at column {0}")]
    SingularBanded(usize),
}

fn check_finite(values: &[f64]) -> Result<(), NumericsError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(NumericsError::NonFinite(i)),
        None => Ok(()),
    }
}

/// A vector of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self, NumericsError> {
        check_finite(&values)?;
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for DenseVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Column-major dense matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices, mostly for tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, NumericsError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut m = Self::zeros(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(NumericsError::DimensionMismatch("ragged rows".into()));
            }
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        check_finite(&m.data)?;
        Ok(m)
    }

    pub fn from_columns<C: AsRef<[f64]>>(rows: usize, columns: &[C]) -> Result<Self, NumericsError> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            let c = c.as_ref();
            if c.len() != rows {
                return Err(NumericsError::DimensionMismatch(format!(
                    "column of length {} in a matrix with {rows} rows",
                    c.len()
                )));
            }
            data.extend_from_slice(c);
        }
        Self::from_col_major(rows, columns.len(), data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_col_major(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn push_column(&mut self, column: &[f64]) -> Result<(), NumericsError> {
        if self.cols == 0 && self.rows == 0 {
            self.rows = column.len();
        }
        if column.len() != self.rows {
            return Err(NumericsError::DimensionMismatch(format!(
                "column of length {} pushed onto {} rows",
                column.len(),
                self.rows
            )));
        }
        check_finite(column)?;
        self.data.extend_from_slice(column);
        self.cols += 1;
        Ok(())
    }

    /// Keeps the first `cols` columns.
    pub fn truncate_columns(&mut self, cols: usize) {
        if cols < self.cols {
            self.cols = cols;
            self.data.truncate(cols * self.rows);
        }
    }

    /// `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if x.len() != self.cols {
            return Err(NumericsError::DimensionMismatch(format!(
                "matrix has {} columns, vector has {} entries",
                self.cols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (yi, aij) in y.iter_mut().zip(self.column(j)) {
                *yi += aij * xj;
            }
        }
        Ok(y)
    }

    /// `selfᵀ * x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if x.len() != self.rows {
            return Err(NumericsError::DimensionMismatch(format!(
                "matrix has {} rows, vector has {} entries",
                self.rows,
                x.len()
            )));
        }
        Ok((0..self.cols).map(|j| dot(self.column(j), x)).collect())
    }

    /// The submatrix made of the listed rows, in list order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<DenseMatrix, NumericsError> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.rows) {
            return Err(NumericsError::IndexOutOfRange {
                index: bad,
                len: self.rows,
            });
        }
        let mut out = DenseMatrix::zeros(rows.len(), self.cols);
        for j in 0..self.cols {
            let src = self.column(j);
            let dst = out.column_mut(j);
            for (d, &r) in dst.iter_mut().zip(rows) {
                *d = src[r];
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// Householder QR of an `m x n` matrix with `m >= n`.
///
/// The reflectors are kept in factored form so one factorization can serve
/// many right-hand sides, which is the common case for restricted systems
/// whose matrix is fixed over a time segment.
#[derive(Debug, Clone)]
pub struct QrFactorization {
    m: usize,
    n: usize,
    qr: Vec<f64>,
    rdiag: Vec<f64>,
}

impl QrFactorization {
    pub fn new(a: &DenseMatrix) -> Result<Self, NumericsError> {
        let (m, n) = (a.rows(), a.cols());
        if n == 0 || m < n {
            return Err(NumericsError::DimensionMismatch(format!(
                "least squares needs m >= n >= 1, got {m}x{n}"
            )));
        }
        let mut qr = a.as_col_major().to_vec();
        let mut rdiag = vec![0.0; n];
        for k in 0..n {
            let col_k = k * m;
            let mut nrm = 0.0f64;
            for i in k..m {
                nrm = nrm.hypot(qr[col_k + i]);
            }
            if nrm != 0.0 {
                if qr[col_k + k] < 0.0 {
                    nrm = -nrm;
                }
                for i in k..m {
                    qr[col_k + i] /= nrm;
                }
                qr[col_k + k] += 1.0;
                for j in k + 1..n {
                    let col_j = j * m;
                    let mut s = 0.0;
                    for i in k..m {
                        s += qr[col_k + i] * qr[col_j + i];
                    }
                    s = -s / qr[col_k + k];
                    for i in k..m {
                        qr[col_j + i] += s * qr[col_k + i];
                    }
                }
            }
            rdiag[k] = -nrm;
        }
        let largest = rdiag.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
        let threshold = RANK_TOLERANCE * largest;
        for (index, r) in rdiag.iter().enumerate() {
            if !(r.abs() > threshold) {
                return Err(NumericsError::RankDeficient {
                    index,
                    value: r.abs(),
                    threshold,
                });
            }
        }
        Ok(Self { m, n, qr, rdiag })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    /// Magnitudes of the diagonal of `R`.
    pub fn r_diagonal(&self) -> Vec<f64> {
        self.rdiag.iter().map(|r| r.abs()).collect()
    }

    /// Least-squares solution of `A x = b` without the finiteness check on `b`.
    pub fn solve_into(&self, b: &[f64], work: &mut Vec<f64>) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        assert_eq!(b.len(), m, "right-hand side length must equal row count");
        work.clear();
        work.extend_from_slice(b);
        for k in 0..n {
            let col_k = k * m;
            let mut s = 0.0;
            for i in k..m {
                s += self.qr[col_k + i] * work[i];
            }
            s = -s / self.qr[col_k + k];
            for i in k..m {
                work[i] += s * self.qr[col_k + i];
            }
        }
        let mut x = work[..n].to_vec();
        for k in (0..n).rev() {
            x[k] /= self.rdiag[k];
            let xk = x[k];
            let col_k = k * m;
            for i in 0..k {
                x[i] -= xk * self.qr[col_k + i];
            }
        }
        x
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut work = Vec::with_capacity(self.m);
        self.solve_into(b, &mut work)
    }
}

/// Minimizes `||A x - b||_2` through a Householder factorization of `A`.
pub fn solve_least_squares(a: &DenseMatrix, b: &[f64]) -> Result<DenseVector, NumericsError> {
    if b.len() != a.rows() {
        return Err(NumericsError::DimensionMismatch(format!(
            "matrix has {} rows, right-hand side has {}",
            a.rows(),
            b.len()
        )));
    }
    check_finite(b)?;
    let qr = QrFactorization::new(a)?;
    DenseVector::new(qr.solve(b))
}

/// Smallest index outside `excluded` whose entry has the largest magnitude.
///
/// `NaN` entries rank above every finite value so that a diverged quantity
/// is never silently skipped.
pub fn argmax_abs(v: &[f64], excluded: &[usize]) -> Result<usize, NumericsError> {
    let mut mask = vec![false; v.len()];
    for &e in excluded {
        if e < v.len() {
            mask[e] = true;
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in v.iter().enumerate() {
        if mask[i] {
            continue;
        }
        let key = if x.is_nan() { f64::INFINITY } else { x.abs() };
        match best {
            Some((_, b)) if key <= b => {}
            _ => best = Some((i, key)),
        }
    }
    best.map(|(i, _)| i).ok_or(NumericsError::EmptyCandidateSet)
}

/// Entries of `v` at `rows`, in list order.
pub fn gather(v: &[f64], rows: &[usize]) -> Result<DenseVector, NumericsError> {
    let mut out = Vec::with_capacity(rows.len());
    for &r in rows {
        match v.get(r) {
            Some(&x) => out.push(x),
            None => {
                return Err(NumericsError::IndexOutOfRange {
                    index: r,
                    len: v.len(),
                })
            }
        }
    }
    Ok(DenseVector(out))
}

/// Orthonormalizes `v` against the orthonormal columns of `basis` with two
/// passes of modified Gram-Schmidt.
///
/// Returns the projection coefficients (summed over both passes) and the norm
/// of the remainder; `v` is overwritten with the normalized remainder when
/// that norm is nonzero.
pub fn orthonormalize_against(basis: &DenseMatrix, v: &mut [f64]) -> (Vec<f64>, f64) {
    let mut coeffs = vec![0.0; basis.cols()];
    for _pass in 0..2 {
        for (j, c) in coeffs.iter_mut().enumerate() {
            let q = basis.column(j);
            let h = dot(q, v);
            *c += h;
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= h * qi;
            }
        }
    }
    let nrm = norm2(v);
    if nrm > 0.0 {
        for vi in v.iter_mut() {
            *vi /= nrm;
        }
    }
    (coeffs, nrm)
}

/// Square banded matrix in LAPACK `gbtrf` layout, with room for the fill
/// produced by partial pivoting.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        c * self.ldab + (self.kl + self.ku + r - c)
    }

    /// Adds `v` to entry `(r, c)`; panics outside the declared band.
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            r <= c + self.kl && c <= r + self.ku,
            "entry ({r}, {c}) outside band (kl = {}, ku = {})",
            self.kl,
            self.ku
        );
        let k = self.idx(r, c);
        self.ab[k] += v;
    }

    /// LU factorization with partial pivoting, consuming the matrix.
    pub fn factor(mut self) -> Result<BandedLu, NumericsError> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let kv = kl + ku;
        let ldab = self.ldab;
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let base = j * ldab + kv;
            let mut jp = 0;
            let mut best = self.ab[base].abs();
            for i in 1..=km {
                let a = self.ab[base + i].abs();
                if a > best {
                    best = a;
                    jp = i;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 {
                return Err(NumericsError::SingularBanded(j));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let off = c - j;
                    let a = c * ldab + kv + jp - off;
                    let b = c * ldab + kv - off;
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[base];
            for i in 1..=km {
                self.ab[base + i] /= pivot;
            }
            if km > 0 {
                for c in j + 1..=ju {
                    let off = c - j;
                    let u = self.ab[c * ldab + kv - off];
                    if u == 0.0 {
                        continue;
                    }
                    let col = c * ldab + kv - off;
                    for i in 1..=km {
                        let l = self.ab[base + i];
                        self.ab[col + i] -= l * u;
                    }
                }
            }
        }
        Ok(BandedLu { band: self, ipiv })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    band: BandedMatrix,
    ipiv: Vec<usize>,
}

impl BandedLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.band.n;
        assert_eq!(b.len(), n);
        let (kl, kv, ldab) = (self.band.kl, self.band.kl + self.band.ku, self.band.ldab);
        let ab = &self.band.ab;
        for j in 0..n {
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                let base = j * ldab + kv;
                for i in 1..=km {
                    b[j + i] -= ab[base + i] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let base = j * ldab + kv;
            b[j] /= ab[base];
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(kv);
                for i in lo..j {
                    b[i] -= ab[base + i - j] * bj;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_least_squares() {
        let a = DenseMatrix::identity(2);
        let x = solve_least_squares(&a, &[1.0, 2.0]).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn single_column_least_squares_matches_normal_equations() {
        // (AᵀA) x = Aᵀb with A = [1; 1], b = (1, 3): 2x = 4.
        let a = DenseMatrix::from_rows(&[&[1.0], &[1.0]]).unwrap();
        let x = solve_least_squares(&a, &[1.0, 3.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn consistent_overdetermined_system() {
        let a = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]).unwrap();
        let b = [1.0, 1.0, 2.0];
        let x = solve_least_squares(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        let r: Vec<f64> = a.matvec(&x).unwrap().iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(max_abs(&r) < 1e-14);
    }

    #[test]
    fn zero_column_is_rank_deficient() {
        let a = DenseMatrix::from_rows(&[&[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0]]).unwrap();
        let err = solve_least_squares(&a, &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, NumericsError::RankDeficient { index: 1, .. }));
    }

    #[test]
    fn underdetermined_is_rejected() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0]]).unwrap();
        assert!(matches!(
            solve_least_squares(&a, &[1.0]),
            Err(NumericsError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn non_finite_matrix_rejected() {
        assert_eq!(
            DenseMatrix::from_col_major(1, 2, vec![1.0, f64::NAN]),
            Err(NumericsError::NonFinite(1))
        );
        assert!(DenseVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_abs(&[0.0, -3.0, 3.0], &[]).unwrap(), 1);
        assert_eq!(argmax_abs(&[0.0, 0.0, 0.0], &[]).unwrap(), 0);
        assert_eq!(argmax_abs(&[1.0, 2.0], &[0, 1]), Err(NumericsError::EmptyCandidateSet));
        assert_eq!(argmax_abs(&[1.0, 5.0, 2.0], &[1]).unwrap(), 2);
    }

    #[test]
    fn argmax_matches_linear_scan_with_exclusions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let v: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let excluded: Vec<usize> = (0..10).collect();
            let mut oracle = 10;
            for i in 10..50 {
                if v[i].abs() > v[oracle].abs() {
                    oracle = i;
                }
            }
            assert_eq!(argmax_abs(&v, &excluded).unwrap(), oracle);
        }
    }

    #[test]
    fn gather_examples() {
        assert_eq!(gather(&[5.0, 6.0, 7.0], &[2, 0]).unwrap().as_slice(), &[7.0, 5.0]);
        assert!(gather(&[1.0], &[]).unwrap().is_empty());
        assert_eq!(
            gather(&[1.0], &[3]),
            Err(NumericsError::IndexOutOfRange { index: 3, len: 1 })
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..100).map(|_| rng.gen()).collect();
        let rows: Vec<usize> = (0..40).map(|_| rng.gen_range(0..100)).collect();
        let g = gather(&v, &rows).unwrap();
        for (k, &r) in rows.iter().enumerate() {
            assert_eq!(g[k], v[r]);
        }
    }

    #[test]
    fn banded_lu_matches_dense_solution() {
        // Tridiagonal plus a zero-diagonal row that forces a pivot.
        let n = 12;
        let mut band = BandedMatrix::zeros(n, 2, 2);
        let mut dense = DenseMatrix::zeros(n, n);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for r in 0..n {
            for c in r.saturating_sub(2)..(r + 3).min(n) {
                let v = if r == 5 && c == 5 { 0.0 } else { rng.gen_range(-1.0..1.0) + if r == c { 4.0 } else { 0.0 } };
                band.add(r, c, v);
                dense.set(r, c, v);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let mut b = dense.matvec(&x_true).unwrap();
        band.factor().unwrap().solve_in_place(&mut b);
        for (a, e) in b.iter().zip(&x_true) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn singular_band_detected() {
        let mut band = BandedMatrix::zeros(3, 1, 1);
        band.add(0, 0, 1.0);
        band.add(2, 2, 1.0);
        assert!(matches!(band.factor(), Err(NumericsError::SingularBanded(1))));
    }

    fn well_conditioned(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(m, n);
        for j in 0..n {
            for i in 0..m {
                a.set(i, j, rng.gen_range(-1.0..1.0) + if i == j { 3.0 } else { 0.0 });
            }
        }
        a
    }

    proptest! {
        #[test]
        fn recovers_consistent_solution(seed in 0u64..1000, m in 2usize..12, extra in 0usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = m.min(1 + extra + m / 2);
            let a = well_conditioned(&mut rng, m, n);
            let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let b = a.matvec(&x0).unwrap();
            let x = solve_least_squares(&a, &b).unwrap();
            let scale = max_abs(&x0);
            for (p, q) in x.iter().zip(&x0) {
                prop_assert!((p - q).abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn residual_is_orthogonal_to_range(seed in 0u64..1000, m in 3usize..15) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 1 + m / 3;
            let a = well_conditioned(&mut rng, m, n);
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x = solve_least_squares(&a, &b).unwrap();
            let r: Vec<f64> = a.matvec(&x).unwrap().iter().zip(&b).map(|(p, q)| p - q).collect();
            let atr = a.tr_matvec(&r).unwrap();
            let inf_norm_a = (0..m).map(|i| (0..n).map(|j| a.get(i, j).abs()).sum::<f64>()).fold(0.0, f64::max);
            prop_assert!(max_abs(&atr) <= 1e-8 * (inf_norm_a * max_abs(&b) + 1.0));
        }

        #[test]
        fn argmax_is_pure(v in proptest::collection::vec(-10.0f64..10.0, 1..40), k in 0usize..5) {
            let excluded: Vec<usize> = (0..k.min(v.len() - 1)).collect();
            prop_assert_eq!(argmax_abs(&v, &excluded), argmax_abs(&v, &excluded));
        }

        #[test]
        fn gather_composes(v in proptest::collection::vec(-1.0f64..1.0, 1..30), seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inner: Vec<usize> = (0..20).map(|_| rng.gen_range(0..v.len())).collect();
            let outer: Vec<usize> = (0..10).map(|_| rng.gen_range(0..inner.len())).collect();
            let composed: Vec<usize> = outer.iter().map(|&o| inner[o]).collect();
            let twice = gather(&gather(&v, &inner).unwrap(), &outer).unwrap();
            prop_assert_eq!(twice, gather(&v, &composed).unwrap());
        }
    }
}
