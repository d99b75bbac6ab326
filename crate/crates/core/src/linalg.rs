//! Small dense and banded linear algebra.
//!
//! Everything here is sized for the problems this crate builds: dense
//! systems with a handful of unknowns per boundary node, and banded Newton
//! systems from the 1D / periodic strip grids.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math::{dot, sqrt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinalgError {
    /// Zero pivot met at the given elimination step.
    Singular { step: usize },
    /// An entry was placed outside the declared band.
    OutOfBand { row: usize, col: usize },
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::Singular { step } => write!(f, "singular matrix at elimination step {step}"),
            LinalgError::OutOfBand { row, col } => {
                write!(f, "entry ({row}, {col}) lies outside the band")
            }
        }
    }
}

impl core::error::Error for LinalgError {}

/// Solves `a x = b` in place for a dense row-major `n x n` matrix with
/// partial pivoting. `a` is destroyed, `b` receives the solution.
pub fn solve_dense(a: &mut [f64], n: usize, b: &mut [f64]) -> Result<(), LinalgError> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for k in 0..n {
        let mut p = k;
        let mut best = a[k * n + k].abs();
        for r in k + 1..n {
            let v = a[r * n + k].abs();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(LinalgError::Singular { step: k });
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            b.swap(k, p);
        }
        let piv = a[k * n + k];
        for r in k + 1..n {
            let l = a[r * n + k] / piv;
            if l != 0.0 {
                for j in k + 1..n {
                    a[r * n + j] -= l * a[k * n + j];
                }
                b[r] -= l * b[k];
            }
        }
    }
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in k + 1..n {
            s -= a[k * n + j] * b[j];
        }
        b[k] = s / a[k * n + k];
    }
    Ok(())
}

/// Numerical rank of the row set `rows` (each of length `n`), using the
/// rank tolerance `rel_tol * max|entry|`.
pub fn rank(rows: &[Vec<f64>], rel_tol: f64) -> usize {
    orthonormal_span(rows, rel_tol).len()
}

/// Orthonormal basis of the span of `vectors` by modified Gram-Schmidt with
/// column pivoting: at each stage the remaining vector of largest residual
/// norm is taken next (ties broken by lowest index). Residual norms below
/// `rel_tol * max|entry|` count as dependent.
pub fn orthonormal_span(vectors: &[Vec<f64>], rel_tol: f64) -> Vec<Vec<f64>> {
    let scale = vectors.iter().flat_map(|v| v.iter()).fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let tol = rel_tol * scale;
    let mut work: Vec<Vec<f64>> = vectors.to_vec();
    let mut used = vec![false; work.len()];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    loop {
        let mut pick = None;
        let mut best = tol;
        for (i, v) in work.iter().enumerate() {
            if used[i] {
                continue;
            }
            let nv = sqrt(dot(v, v));
            if nv > best {
                best = nv;
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        used[i] = true;
        let q: Vec<f64> = work[i].iter().map(|x| x / best).collect();
        for (j, v) in work.iter_mut().enumerate() {
            if used[j] {
                continue;
            }
            // two passes of projection keep the basis orthogonal to round-off
            for _ in 0..2 {
                let c = dot(v, &q);
                for (x, qx) in v.iter_mut().zip(&q) {
                    *x -= c * qx;
                }
            }
        }
        basis.push(q);
    }
    basis
}

/// Orthonormal basis of the orthogonal complement of span(`span_basis`) in
/// `R^n`, built by orthogonalizing the canonical vectors e_1, e_2, ... in
/// order against everything accepted so far. `span_basis` must already be
/// orthonormal.
pub fn orthonormal_complement(span_basis: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let target = n.saturating_sub(span_basis.len());
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(target);
    let mut j = 0;
    while out.len() < target && j < n {
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        for _ in 0..2 {
            for q in span_basis.iter().chain(out.iter()) {
                let c = dot(&v, q);
                for (x, qx) in v.iter_mut().zip(q) {
                    *x -= c * qx;
                }
            }
        }
        let nv = sqrt(dot(&v, &v));
        // a canonical vector with this little left over is (numerically) in
        // the span already; the complement is found among later ones
        if nv > 1e-6 {
            v.iter_mut().for_each(|x| *x /= nv);
            out.push(v);
        }
        j += 1;
    }
    out
}

/// Banded matrix with room for the fill-in of partial pivoting.
///
/// Row `i` stores columns `i - kl ..= i + kl + ku`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
    multipliers: Vec<f64>,
    factored: bool,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
            pivots: Vec::new(),
            multipliers: Vec::new(),
            factored: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    /// Adds `v` to entry `(i, j)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<(), LinalgError> {
        if j + self.kl < i || j > i + self.ku {
            return Err(LinalgError::OutOfBand { row: i, col: j });
        }
        let k = self.idx(i, j);
        self.data[k] += v;
        Ok(())
    }

    /// Entry `(i, j)` of the matrix before factorization (zero outside the band).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            0.0
        } else {
            self.get(i, j)
        }
    }

    /// LU factorization with partial pivoting, in place.
    pub fn factor(&mut self) -> Result<(), LinalgError> {
        let n = self.n;
        let kl = self.kl;
        let reach = kl + self.ku;
        self.pivots = vec![0; n];
        self.multipliers = vec![0.0; n * kl.max(1)];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for r in k + 1..=last {
                let v = self.get(r, k).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(LinalgError::Singular { step: k });
            }
            self.pivots[k] = p;
            let jmax = (k + reach).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let piv = self.get(k, k);
            for r in k + 1..=last {
                let l = self.get(r, k) / piv;
                self.multipliers[k * kl + (r - k - 1)] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let a = self.idx(r, j);
                        self.data[a] -= l * self.get(k, j);
                    }
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves with a previously factored matrix; `b` is overwritten.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert!(self.factored, "BandMatrix::solve_in_place before factor");
        let n = self.n;
        let kl = self.kl;
        let reach = kl + self.ku;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let last = (k + kl).min(n - 1);
            let bk = b[k];
            for r in k + 1..=last {
                b[r] -= self.multipliers[k * kl + (r - k - 1)] * bk;
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + reach).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=jmax {
                s -= self.get(k, j) * b[j];
            }
            b[k] = s / self.get(k, k);
        }
    }
}

/// Sparse coordinate-list accumulator for Jacobians; duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, v: f64) {
        if v != 0.0 {
            self.entries.push((row, col, v));
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, usize, f64)> {
        self.entries.iter()
    }

    /// Packs the entries into a band matrix sized by their actual extent.
    pub fn to_band(&self, n: usize) -> BandMatrix {
        let mut kl = 0;
        let mut ku = 0;
        for &(i, j, _) in &self.entries {
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let mut m = BandMatrix::zeros(n, kl, ku);
        for &(i, j, v) in &self.entries {
            // bandwidths were taken from these very entries
            let _ = m.add(i, j, v);
        }
        m
    }

    /// Matrix-vector product, used by tests and residual checks.
    pub fn apply(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut y = vec![0.0; n];
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solve_small_system() {
        let mut a = vec![2.0, 1.0, 1.0, 3.0];
        let mut b = vec![3.0, 5.0];
        solve_dense(&mut a, 2, &mut b).unwrap();
        assert!((b[0] - 0.8).abs() < 1e-14);
        assert!((b[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn dense_solve_needs_pivoting() {
        let mut a = vec![0.0, 1.0, 1.0, 0.0];
        let mut b = vec![2.0, 3.0];
        solve_dense(&mut a, 2, &mut b).unwrap();
        assert_eq!(b, vec![3.0, 2.0]);
    }

    #[test]
    fn singular_dense_is_reported() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 1.0];
        assert!(solve_dense(&mut a, 2, &mut b).is_err());
    }

    #[test]
    fn band_solve_matches_dense() {
        // pentadiagonal-ish nonsymmetric matrix with a zero on the diagonal
        // to force pivoting
        let n = 9;
        let mut t = Triplets::new();
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d = j as isize - i as isize;
                if (-2..=1).contains(&d) {
                    let v = if d == 0 {
                        if i == 3 {
                            0.0
                        } else {
                            4.0 + i as f64
                        }
                    } else {
                        1.0 + 0.1 * (i + 2 * j) as f64 * if d < 0 { -1.0 } else { 1.0 }
                    };
                    t.push(i, j, v);
                    dense[i * n + j] = v;
                }
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        let mut m = t.to_band(n);
        assert_eq!(m.bandwidths(), (2, 1));
        m.factor().unwrap();
        let mut x = rhs.clone();
        m.solve_in_place(&mut x);
        let mut xd = rhs.clone();
        solve_dense(&mut dense, n, &mut xd).unwrap();
        for (a, b) in x.iter().zip(&xd) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let back = t.apply(&x, n);
        for (a, b) in back.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn span_and_complement_are_orthonormal() {
        let v = vec![vec![-1.0, -1.0, 1.0], vec![2.0, 2.0, -2.0]];
        let q = orthonormal_span(&v, 1e-10);
        assert_eq!(q.len(), 1);
        let c = orthonormal_complement(&q, 3);
        assert_eq!(c.len(), 2);
        for a in q.iter().chain(&c) {
            assert!((dot(a, a) - 1.0).abs() < 1e-14);
        }
        assert!(dot(&c[0], &c[1]).abs() < 1e-14);
        assert!(dot(&c[0], &q[0]).abs() < 1e-14);
    }
}
