//! Compressed-row storage and a banded LU factorization.
//!
//! The structured mesh numbers nodes row by row, so every free-dof system has
//! half-bandwidth `n1 + 2`; an unpivoted banded LU is a direct sparse
//! factorization with no fill outside the band.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Square CSR matrix whose entries carry several value arrays over one
/// sparsity pattern (mass, diffusion and advection share the same stencil).
#[derive(Debug, Clone)]
pub struct MultiCsr<T> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> MultiCsr<T> {
    /// Builds from `(row, col, [v_0, .., v_{k-1}])` triplets; duplicates are summed
    /// in `f64` before conversion.
    pub fn from_triplets(n: usize, k: usize, triplets: &[(usize, usize, Vec<f64>)]) -> Self {
        let mut rows: Vec<Vec<(usize, Vec<f64>)>> = vec![Vec::new(); n];
        for (r, c, v) in triplets {
            let row = &mut rows[*r];
            match row.iter_mut().find(|(cc, _)| cc == c) {
                Some((_, acc)) => acc.iter_mut().zip(v).for_each(|(a, b)| *a += b),
                None => row.push((*c, v.clone())),
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut values = vec![Vec::new(); k];
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|(c, _)| *c);
            for (c, v) in row {
                col.push(c);
                for (dst, x) in values.iter_mut().zip(v) {
                    dst.push(T::of(x));
                }
            }
            row_ptr.push(col.len());
        }
        MultiCsr { n, row_ptr, col, values }
    }

    #[inline]
    pub fn row(&self, r: usize) -> std::ops::Range<usize> {
        self.row_ptr[r]..self.row_ptr[r + 1]
    }

    /// `y = A_k x` for value array `k`.
    pub fn matvec(&self, k: usize, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|r| self.row(r).map(|e| self.values[k][e] * x[self.col[e]]).sum())
            .collect()
    }

    /// Dense copy of value array `k` (tests and small oracles).
    pub fn to_dense(&self, k: usize) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for r in 0..self.n {
            for e in self.row(r) {
                d[r][self.col[e]] = self.values[k][e].to_f64_lossy();
            }
        }
        d
    }
}

/// Banded matrix with `lower` sub- and `upper` super-diagonals, factored
/// in place as `L U` (unit lower `L`).
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    data: Vec<T>,
    factored: bool,
}

impl<T: Scalar> BandedLu<T> {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        let width = lower + upper + 1;
        BandedLu { n, lower, upper, width, data: vec![T::zero(); n * width], factored: false }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(c + self.lower >= r && c <= r + self.upper);
        r * self.width + (c + self.lower - r)
    }

    /// Adds `v` at `(r, c)`; the entry must lie inside the band.
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: T) {
        let i = self.idx(r, c);
        self.data[i] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        if c + self.lower < r || c > r + self.upper {
            T::zero()
        } else {
            self.data[self.idx(r, c)]
        }
    }

    /// Doolittle elimination without pivoting.
    pub fn factor(&mut self) -> Result<()> {
        let n = self.n;
        let scale = self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tiny = scale * T::epsilon() * T::of(n as f64);
        for k in 0..n {
            let pivot = self.data[self.idx(k, k)];
            if !(pivot.abs() > tiny) {
                return Err(Error::Internal(format!("zero pivot at row {k} in banded LU")));
            }
            let rmax = (k + self.lower).min(n - 1);
            let cmax = (k + self.upper).min(n - 1);
            for r in k + 1..=rmax {
                let ir = self.idx(r, k);
                let l = self.data[ir] / pivot;
                self.data[ir] = l;
                if l == T::zero() {
                    continue;
                }
                for c in k + 1..=cmax {
                    let u = self.data[self.idx(k, c)];
                    let i = self.idx(r, c);
                    self.data[i] -= l * u;
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `L U x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        assert!(self.factored, "solve on an unfactored banded matrix");
        let n = self.n;
        for r in 0..n {
            let c0 = r.saturating_sub(self.lower);
            let base = r * self.width + self.lower - r;
            let mut s = b[r];
            for c in c0..r {
                s -= self.data[base + c] * b[c];
            }
            b[r] = s;
        }
        for r in (0..n).rev() {
            let cmax = (r + self.upper).min(n - 1);
            let base = r * self.width + self.lower - r;
            let mut s = b[r];
            for c in r + 1..=cmax {
                s -= self.data[base + c] * b[c];
            }
            b[r] = s / self.data[base + r];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_solve_matches_dense() {
        // diagonally dominant nonsymmetric band matrix, half-bandwidth 2
        let n = 7;
        let mut lu = BandedLu::<f64>::zeros(n, 2, 2);
        let mut dense = vec![vec![0.0; n]; n];
        for r in 0..n {
            for c in r.saturating_sub(2)..=(r + 2).min(n - 1) {
                let v = if r == c { 6.0 } else { 0.3 * (r as f64 - 2.0 * c as f64 + 1.0).sin() };
                lu.add(r, c, v);
                dense[r][c] = v;
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut b: Vec<f64> = dense.iter().map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum()).collect();
        lu.factor().unwrap();
        lu.solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_is_reported() {
        let mut lu = BandedLu::<f64>::zeros(2, 1, 1);
        lu.add(0, 0, 1.0);
        lu.add(0, 1, 1.0);
        lu.add(1, 0, 1.0);
        lu.add(1, 1, 1.0);
        assert!(matches!(lu.factor(), Err(Error::Internal(_))));
    }
}
