//! Dense matrix functions for small non-normal matrices.
//!
//! `f(A)` is formed from the complex Schur form `A = Q T Q^*`: through the
//! eigenvector basis `V = Q Y` when `cond(V) < EIG_COND_LIMIT`, otherwise by
//! the Parlett recurrence on `T`. The exponential additionally has a
//! scaling-and-squaring Padé route that needs no spectral information.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigenvector condition number above which the Schur–Parlett route is used.
pub const EIG_COND_LIMIT: f64 = 1e6;

pub type CMatrix = DMatrix<Complex64>;

/// `A = Q T Q^*` with `T` upper triangular.
pub fn complex_schur(a: &DMatrix<f64>) -> Result<(CMatrix, CMatrix)> {
    let ac = a.map(|x| Complex64::new(x, 0.0));
    let schur = Schur::try_new(ac, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("complex Schur iteration did not converge".into()))?;
    Ok(schur.unpack())
}

/// Diagonalization `A = V diag(values) V^{-1}`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex64>,
    pub vectors: CMatrix,
    pub inverse: CMatrix,
    pub condition: f64,
}

impl Eigen {
    /// Eigenvectors from the Schur form; `None` when the eigenvector matrix is
    /// numerically singular.
    pub fn from_schur(q: &CMatrix, t: &CMatrix) -> Option<Eigen> {
        let n = t.nrows();
        let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut y = CMatrix::zeros(n, n);
        for k in 0..n {
            y[(k, k)] = Complex64::new(1.0, 0.0);
            for j in (0..k).rev() {
                let mut s = Complex64::new(0.0, 0.0);
                for l in j + 1..=k {
                    s += t[(j, l)] * y[(l, k)];
                }
                let mut d = t[(j, j)] - t[(k, k)];
                // repeated eigenvalue: perturb as LAPACK trevc does; a defective
                // matrix then shows up as a huge condition number
                let floor = f64::EPSILON * scale;
                if d.norm() < floor {
                    d = Complex64::new(floor, 0.0);
                }
                y[(j, k)] = -s / d;
            }
        }
        let mut v = q * y;
        for k in 0..n {
            let nrm = v.column(k).norm();
            v.column_mut(k).unscale_mut(nrm);
        }
        let sv = v.clone().singular_values();
        let smin = sv.min();
        let condition = if smin > 0.0 { sv.max() / smin } else { f64::INFINITY };
        let inverse = v.clone().try_inverse()?;
        Some(Eigen { values: (0..n).map(|i| t[(i, i)]).collect(), vectors: v, inverse, condition })
    }

    pub fn new(a: &DMatrix<f64>) -> Result<Option<Eigen>> {
        let (q, t) = complex_schur(a)?;
        Ok(Eigen::from_schur(&q, &t))
    }

    /// `V diag(f(values)) V^{-1}`, real part.
    pub fn apply_fn(&self, f: impl Fn(Complex64) -> Complex64) -> DMatrix<f64> {
        let mut vf = self.vectors.clone();
        for (k, lam) in self.values.iter().enumerate() {
            let fk = f(*lam);
            for r in 0..vf.nrows() {
                vf[(r, k)] *= fk;
            }
        }
        (vf * &self.inverse).map(|z| z.re)
    }
}

/// Parlett recurrence for `f(T)`, `T` upper triangular with distinct diagonal.
pub fn parlett(t: &CMatrix, f: impl Fn(Complex64) -> Complex64) -> Result<CMatrix> {
    let n = t.nrows();
    let mut fm = CMatrix::zeros(n, n);
    for i in 0..n {
        fm[(i, i)] = f(t[(i, i)]);
    }
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for p in 1..n {
        for i in 0..n - p {
            let j = i + p;
            let d = t[(j, j)] - t[(i, i)];
            if d.norm() <= 1e-14 * scale {
                return Err(Error::Numerical(format!(
                    "Schur–Parlett: repeated eigenvalue {} (blocked variant not implemented)",
                    t[(i, i)]
                )));
            }
            let mut s = t[(i, j)] * (fm[(j, j)] - fm[(i, i)]);
            for k in i + 1..j {
                s += t[(i, k)] * fm[(k, j)] - fm[(i, k)] * t[(k, j)];
            }
            fm[(i, j)] = s / d;
        }
    }
    Ok(fm)
}

/// Which route [`matrix_function`] took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Eigen,
    SchurParlett,
}

/// `f(A)` for a real matrix whose function values are real.
pub fn matrix_function(a: &DMatrix<f64>, f: impl Fn(Complex64) -> Complex64) -> Result<(DMatrix<f64>, Route)> {
    let (q, t) = complex_schur(a)?;
    if let Some(eig) = Eigen::from_schur(&q, &t) {
        if eig.condition < EIG_COND_LIMIT {
            return Ok((eig.apply_fn(f), Route::Eigen));
        }
    }
    let ft = parlett(&t, f)?;
    Ok(((&q * ft * q.adjoint()).map(|z| z.re), Route::SchurParlett))
}

/// Principal power `A^p`; every eigenvalue must lie off the closed negative real axis
/// (zero allowed only for `p >= 0`).
pub fn matrix_power(a: &DMatrix<f64>, p: f64) -> Result<DMatrix<f64>> {
    if p == 0.0 {
        return Ok(DMatrix::identity(a.nrows(), a.ncols()));
    }
    let (q, t) = complex_schur(a)?;
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for i in 0..t.nrows() {
        let z = t[(i, i)];
        if z.norm() <= 1e-14 * scale {
            if p < 0.0 {
                return Err(Error::Domain(format!("negative power {p} of a singular matrix")));
            }
        } else if z.re < 0.0 && z.im.abs() <= 1e-14 * scale {
            return Err(Error::Domain(format!("eigenvalue {z} on the branch cut")));
        }
    }
    let pow = move |z: Complex64| if z.norm() == 0.0 { Complex64::new(0.0, 0.0) } else { z.powf(p) };
    if let Some(eig) = Eigen::from_schur(&q, &t) {
        if eig.condition < EIG_COND_LIMIT {
            return Ok(eig.apply_fn(pow));
        }
    }
    let ft = parlett(&t, pow)?;
    Ok((&q * ft * q.adjoint()).map(|z| z.re))
}

/// `e^{A}` by scaling and squaring with the diagonal [6/6] Padé approximant.
pub fn expm_pade(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm1 = (0..n).map(|c| a.column(c).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let s = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let x = a / 2f64.powi(s);
    // c_k = (2q - k)! q! / ((2q)! k! (q - k)!), q = 6
    let c = [1.0, 0.5, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0];
    let id = DMatrix::<f64>::identity(n, n);
    let mut num = id.clone() * c[0];
    let mut den = id.clone() * c[0];
    let mut pow = id;
    for (k, ck) in c.iter().enumerate().skip(1) {
        pow = &pow * &x;
        num += &pow * *ck;
        den += &pow * (if k % 2 == 1 { -ck } else { *ck });
    }
    let mut e = den.lu().solve(&num).expect("Padé denominator is nonsingular for ||X||_1 <= 1/2");
    for _ in 0..s {
        e = &e * &e;
    }
    e
}

/// `e^{A}` through the eigenvector basis; `None` if not (well) diagonalizable.
pub fn expm_eigen(a: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
    Ok(Eigen::new(a)?.filter(|e| e.condition < EIG_COND_LIMIT).map(|e| e.apply_fn(|z| z.exp())))
}

/// `e^{A}`: eigen route when well conditioned, otherwise Padé.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(match expm_eigen(a)? {
        Some(e) => e,
        None => expm_pade(a),
    })
}

/// Spectral norm.
pub fn norm2(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 1 && a.ncols() == 1 {
        return a[(0, 0)].abs();
    }
    a.clone().singular_values().max()
}

/// `(I + s A)^{-1}`.
pub fn resolvent(a: &DMatrix<f64>, s: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    (DMatrix::identity(n, n) + a * s)
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular resolvent I + sA".into()))
}

pub fn apply(a: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(v)).iter().copied().collect()
}
