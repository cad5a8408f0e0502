//! Cosine (Neumann Laplacian) eigenbasis on a rectangle.

use std::f64::consts::PI;

use super::Rectangle;
use crate::quadrature::composite_gauss;

/// `e_i(x)` on `[0, len]`: `sqrt(1/len)` for `i = 0`, `sqrt(2/len) cos(i pi x / len)` otherwise.
#[inline]
pub fn cosine_mode(i: usize, len: f64, x: f64) -> f64 {
    if i == 0 {
        (1.0 / len).sqrt()
    } else {
        (2.0 / len).sqrt() * (i as f64 * PI * x / len).cos()
    }
}

/// One-dimensional Neumann eigenvalue `(i pi / len)^2`.
#[inline]
pub fn axis_eigenvalue(i: usize, len: f64) -> f64 {
    let k = i as f64 * PI / len;
    k * k
}

/// Mode table for `N1 x N2` cosine modes, index `i * N2 + j`.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub n1: usize,
    pub n2: usize,
    /// `lambda_{i,j} = (i pi / L1)^2 + (j pi / L2)^2`.
    pub lambda: Vec<f64>,
}

impl SpectralData {
    pub fn new(domain: &Rectangle, n1: usize, n2: usize) -> Self {
        let mut lambda = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                lambda.push(axis_eigenvalue(i, domain.lx) + axis_eigenvalue(j, domain.ly));
            }
        }
        SpectralData { n1, n2, lambda }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }
}

/// Matrix `E[p][i] = e_i(x_p)` for points `xs` and modes `0..modes`.
pub fn basis_matrix(xs: &[f64], modes: usize, len: f64) -> Vec<Vec<f64>> {
    xs.iter().map(|&x| (0..modes).map(|i| cosine_mode(i, len, x)).collect()).collect()
}

/// Cell-midpoint grid with `n` points on `[0, len]`; the rule with equal weights
/// `len / n` integrates products of modes `< n` exactly.
pub fn midpoint_grid(n: usize, len: f64) -> (Vec<f64>, f64) {
    let h = len / n as f64;
    ((0..n).map(|p| (p as f64 + 0.5) * h).collect(), h)
}

/// Cosine coefficients of `f` by tensor composite Gauss–Legendre quadrature
/// (4 points per panel, `max(N, 8)` panels per axis).
pub fn project(data: &SpectralData, domain: &Rectangle, f: &dyn Fn(f64, f64) -> f64) -> Vec<f64> {
    let (xs, wx) = composite_gauss(0.0, domain.lx, data.n1.max(8), 4);
    let (ys, wy) = composite_gauss(0.0, domain.ly, data.n2.max(8), 4);
    let ex = basis_matrix(&xs, data.n1, domain.lx);
    let ey = basis_matrix(&ys, data.n2, domain.ly);
    // g[p][j] = sum_r w_r e_j(y_r) f(x_p, y_r)
    let mut g = vec![vec![0.0; data.n2]; xs.len()];
    for (p, &x) in xs.iter().enumerate() {
        for (r, &y) in ys.iter().enumerate() {
            let v = wy[r] * f(x, y);
            for j in 0..data.n2 {
                g[p][j] += v * ey[r][j];
            }
        }
    }
    let mut c = vec![0.0; data.len()];
    for (p, gp) in g.iter().enumerate() {
        for i in 0..data.n1 {
            let w = wx[p] * ex[p][i];
            for j in 0..data.n2 {
                c[i * data.n2 + j] += w * gp[j];
            }
        }
    }
    c
}

/// Series value at `(x, y)`.
pub fn evaluate(data: &SpectralData, domain: &Rectangle, coeffs: &[f64], x: f64, y: f64) -> f64 {
    let ex: Vec<f64> = (0..data.n1).map(|i| cosine_mode(i, domain.lx, x)).collect();
    let ey: Vec<f64> = (0..data.n2).map(|j| cosine_mode(j, domain.ly, y)).collect();
    let mut s = 0.0;
    for i in 0..data.n1 {
        for j in 0..data.n2 {
            s += coeffs[i * data.n2 + j] * ex[i] * ey[j];
        }
    }
    s
}
