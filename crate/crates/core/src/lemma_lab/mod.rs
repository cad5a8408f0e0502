//! Dense finite-dimensional checks of the discrete smoothing and
//! discrepancy estimates behind the convergence proof.
//!
//! A [`DenseFamily`] is `A(t) = theta(t) B + k(t) I` for a fixed real matrix
//! `B`. Products of resolvents and exponentials are formed by explicit matrix
//! arithmetic; fractional powers and exponentials go through the
//! eigendecomposition of `B` when it is well conditioned and through the
//! general dense routines otherwise. Norms are spectral norms.

pub mod sweep;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::coeff::TimeFn;
use crate::dense::{self, Eigen, EIG_COND_LIMIT};
use crate::error::{config, Error, Result};

/// Grid size used for the construction checks on `[0, T]`.
const CHECK_GRID: usize = 32;

/// Substeps of the exponential midpoint oracle for the evolution operator.
pub const ORACLE_SUBSTEPS: usize = 64;

#[derive(Debug, Clone)]
pub struct DenseFamily {
    base: DMatrix<f64>,
    theta: TimeFn,
    reaction: TimeFn,
    horizon: f64,
    eigen: Option<Eigen>,
    lipschitz: f64,
    label: String,
}

impl DenseFamily {
    /// `B` is the 1D finite difference matrix on `n` interior points of `(0, 1)`:
    /// `(1/h^2) tridiag(-1, 2, -1)` plus `nu` times the central first difference,
    /// `h = 1 / (n + 1)`; `theta(t) = 1 + e^{-t}`, `k = 0`, `T = 1`.
    pub fn advection_diffusion(n: usize, nu: f64) -> Result<Self> {
        if n < 1 {
            return config("dense family dimension must be >= 1");
        }
        let h = 1.0 / (n + 1) as f64;
        let mut b = DMatrix::zeros(n, n);
        for r in 0..n {
            b[(r, r)] = 2.0 / (h * h);
            if r + 1 < n {
                b[(r, r + 1)] = -1.0 / (h * h) + nu / (2.0 * h);
                b[(r + 1, r)] = -1.0 / (h * h) - nu / (2.0 * h);
            }
        }
        let mut fam = DenseFamily::new(b, TimeFn::one_plus_decay(), TimeFn::constant(0.0), 1.0)?;
        fam.label = format!("fd(n={n},nu={nu})");
        Ok(fam)
    }

    /// Constant family `A(t) = a` in dimension one.
    pub fn scalar(a: f64) -> Result<Self> {
        let mut fam = DenseFamily::new(DMatrix::from_element(1, 1, a), TimeFn::constant(1.0), TimeFn::constant(0.0), 1.0)?;
        fam.label = format!("scalar({a})");
        Ok(fam)
    }

    /// General family; every eigenvalue of `A(t)` must have positive real part
    /// on a grid of `[0, horizon]`.
    pub fn new(base: DMatrix<f64>, theta: TimeFn, reaction: TimeFn, horizon: f64) -> Result<Self> {
        if base.nrows() != base.ncols() || base.nrows() == 0 {
            return config(format!("base matrix must be square and nonempty, got {}x{}", base.nrows(), base.ncols()));
        }
        if !(horizon > 0.0) {
            return config(format!("horizon must be positive, got {horizon}"));
        }
        let eigen = Eigen::new(&base)?.filter(|e| e.condition < EIG_COND_LIMIT);
        let mut fam = DenseFamily { base, theta, reaction, horizon, eigen, lipschitz: 0.0, label: "custom".into() };
        let grid: Vec<f64> = (0..=CHECK_GRID).map(|k| horizon * k as f64 / CHECK_GRID as f64).collect();
        for &t in &grid {
            let (_, tri) = dense::complex_schur(&fam.at(t))?;
            let min_re = (0..tri.nrows()).map(|i| tri[(i, i)].re).fold(f64::INFINITY, f64::min);
            if !(min_re > 0.0) {
                return config(format!("A({t}) has an eigenvalue with real part {min_re} <= 0"));
            }
        }
        let a0_inv = fam.at(0.0).try_inverse().ok_or_else(|| Error::Numerical("A(0) is singular".into()))?;
        let mut k1: f64 = 0.0;
        for (p, &t) in grid.iter().enumerate() {
            for &s in &grid[..p] {
                let d = (fam.at(t) - fam.at(s)) * &a0_inv;
                k1 = k1.max(dense::norm2(&d) / (t - s));
            }
        }
        fam.lipschitz = k1;
        Ok(fam)
    }

    pub fn dim(&self) -> usize {
        self.base.nrows()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Constant `K1` in `||(A(t) - A(s)) A(0)^{-1}|| <= K1 |t - s|` on the check grid.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Whether matrix functions go through the eigenbasis of `B`.
    pub fn uses_eigenbasis(&self) -> bool {
        self.eigen.is_some()
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let n = self.dim();
        &self.base * self.theta.eval(t) + DMatrix::identity(n, n) * self.reaction.eval(t)
    }

    /// `f(c_b B + c_i I)`.
    fn function_of(&self, cb: f64, ci: f64, f: impl Fn(Complex64) -> Complex64) -> Result<DMatrix<f64>> {
        match &self.eigen {
            Some(e) => Ok(e.apply_fn(|mu| f(mu * cb + ci))),
            None => {
                let n = self.dim();
                let a = &self.base * cb + DMatrix::identity(n, n) * ci;
                Ok(dense::matrix_function(&a, f)?.0)
            }
        }
    }

    /// Principal power `A(t)^p`.
    pub fn power(&self, t: f64, p: f64) -> Result<DMatrix<f64>> {
        if p == 0.0 {
            return Ok(DMatrix::identity(self.dim(), self.dim()));
        }
        match &self.eigen {
            Some(_) => self.function_of(self.theta.eval(t), self.reaction.eval(t), |z| z.powf(p)),
            None => dense::matrix_power(&self.at(t), p),
        }
    }

    /// `e^{-s A(t)}`.
    pub fn exp(&self, t: f64, s: f64) -> Result<DMatrix<f64>> {
        match &self.eigen {
            Some(_) => self.function_of(self.theta.eval(t), self.reaction.eval(t), |z| (-z * s).exp()),
            None => dense::expm(&(self.at(t) * -s)),
        }
    }

    /// `(I + dt A(t))^{-1}`.
    pub fn resolvent(&self, t: f64, dt: f64) -> Result<DMatrix<f64>> {
        dense::resolvent(&self.at(t), dt)
    }

    /// Evolution operator `U(c, a)` of `y' = -A(t) y` by `substeps` exponential midpoint steps.
    pub fn evolution(&self, a: f64, c: f64, substeps: usize) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let h = (c - a) / substeps as f64;
        let mut u = DMatrix::identity(n, n);
        for r in 0..substeps {
            let mid = a + (r as f64 + 0.5) * h;
            u = self.exp(mid, h)? * u;
        }
        Ok(u)
    }
}

/// `e^{-s A(t)} v`.
pub fn matrix_exp_apply(fam: &DenseFamily, t: f64, s: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
    if !(s >= 0.0) {
        return config(format!("exponential time must be >= 0, got {s}"));
    }
    if v.len() != fam.dim() {
        return config(format!("vector length {} != family dimension {}", v.len(), fam.dim()));
    }
    Ok(fam.exp(t, s)? * v)
}

fn steps_for(fam: &DenseFamily, dt: f64) -> Result<usize> {
    if !(dt > 0.0) {
        return config(format!("time step must be positive, got {dt}"));
    }
    let m = (fam.horizon / dt).round();
    if m < 1.0 || ((m * dt) - fam.horizon).abs() > 1e-9 * fam.horizon {
        return config(format!("dt = {dt} does not divide the horizon {}", fam.horizon));
    }
    Ok(m as usize)
}

/// Start indices and lags examined in a sweep with `M` steps: every index when
/// `M <= 64`, otherwise 33 equispaced starts and a geometric lag grid with four
/// points per octave plus the largest lag.
#[derive(Debug, Clone)]
pub struct CellGrid {
    starts: Vec<usize>,
    lags: Vec<usize>,
}

impl CellGrid {
    pub fn new(lo: usize, hi: usize) -> Self {
        let span = hi - lo;
        if span <= 64 {
            return CellGrid { starts: (lo..=hi).collect(), lags: (0..=span).collect() };
        }
        let mut starts: Vec<usize> = (0..=32).map(|k| lo + (span * k) / 32).collect();
        starts.dedup();
        let mut lags = vec![0usize];
        let mut x = 1.0f64;
        while (x as usize) <= span {
            lags.push(x as usize);
            x *= 2f64.powf(0.25);
        }
        lags.push(span);
        lags.sort_unstable();
        lags.dedup();
        CellGrid { starts, lags }
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn includes_lag(&self, lag: usize) -> bool {
        self.lags.binary_search(&lag).is_ok()
    }
}

/// `t_{m-i+1}^alpha ||A(t_k)^alpha prod_{j=i}^m (I + dt A(t_j))^{-1}||`.
pub fn smoothing_value(fam: &DenseFamily, alpha: f64, dt: f64, i: usize, m: usize, k: usize) -> Result<f64> {
    let mut p = DMatrix::identity(fam.dim(), fam.dim());
    for j in i..=m {
        p = fam.resolvent(j as f64 * dt, dt)? * p;
    }
    let lag = (m - i + 1) as f64 * dt;
    Ok(lag.powf(alpha) * dense::norm2(&(fam.power(k as f64 * dt, alpha)? * p)))
}

/// Supremum of [`smoothing_value`] over `0 <= i <= m <= M` (cell grid) and `k in {0, M}`.
pub fn smoothing_sup(fam: &DenseFamily, alpha: f64, dt: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return config(format!("alpha must lie in [0, 1), got {alpha}"));
    }
    let steps = steps_for(fam, dt)?;
    let s: Vec<DMatrix<f64>> = (0..=steps).map(|j| fam.resolvent(j as f64 * dt, dt)).collect::<Result<_>>()?;
    let ak = [fam.power(0.0, alpha)?, fam.power(steps as f64 * dt, alpha)?];
    let grid = CellGrid::new(0, steps);
    let mut best: f64 = 0.0;
    for &i in grid.starts() {
        let mut p = DMatrix::identity(fam.dim(), fam.dim());
        for (m, sm) in s.iter().enumerate().skip(i) {
            p = sm * p;
            if !grid.includes_lag(m - i) {
                continue;
            }
            let scale = ((m - i + 1) as f64 * dt).powf(alpha);
            for a in &ak {
                best = best.max(scale * dense::norm2(&(a * &p)));
            }
        }
    }
    Ok(best)
}

/// Powers `n` of the resolvent examined by [`resolvent_power_sup`].
pub const RESOLVENT_POWERS: [u32; 4] = [1, 2, 4, 8];

/// `sup (n s)^alpha ||A(t_k)^alpha (I + s A(t_j))^{-n}||` over `n > alpha` from
/// [`RESOLVENT_POWERS`] and `j, k in {0, M}`, with `s = dt`.
pub fn resolvent_power_sup(fam: &DenseFamily, alpha: f64, dt: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return config(format!("alpha must be >= 0, got {alpha}"));
    }
    let steps = steps_for(fam, dt)?;
    let ends = [0.0, steps as f64 * dt];
    let mut best: f64 = 0.0;
    for &tj in &ends {
        let r = fam.resolvent(tj, dt)?;
        for &tk in &ends {
            let ak = fam.power(tk, alpha)?;
            let mut rn = DMatrix::identity(fam.dim(), fam.dim());
            let mut n = 0;
            for &target in &RESOLVENT_POWERS {
                while n < target {
                    rn = &r * rn;
                    n += 1;
                }
                if (n as f64) > alpha {
                    best = best.max((n as f64 * dt).powf(alpha) * dense::norm2(&(&ak * &rn)));
                }
            }
        }
    }
    Ok(best)
}

/// `||A(t_k)^{-a1} (e^{-dt A(t_j)} - (I + dt A(t_j))^{-1}) A(t_j)^{-a2}|| / dt^{a1 + a2}`.
pub fn exp_resolvent_gap(fam: &DenseFamily, a1: f64, a2: f64, dt: f64, j: usize, k: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&a1) || !(0.0..=1.0).contains(&a2) {
        return config(format!("a1, a2 must lie in [0, 1], got {a1}, {a2}"));
    }
    let (tj, tk) = (j as f64 * dt, k as f64 * dt);
    let g = fam.exp(tj, dt)? - fam.resolvent(tj, dt)?;
    let x = fam.power(tk, -a1)? * g * fam.power(tj, -a2)?;
    Ok(dense::norm2(&x) / dt.powf(a1 + a2))
}

/// Supremum of [`exp_resolvent_gap`] over 17 equispaced `j` and `k in {0, j, M}`.
pub fn exp_resolvent_gap_sup(fam: &DenseFamily, a1: f64, a2: f64, dt: f64) -> Result<f64> {
    let steps = steps_for(fam, dt)?;
    let stride = (steps / 16).max(1);
    let mut best: f64 = 0.0;
    for j in (0..=steps).step_by(stride) {
        for k in [0, j, steps] {
            best = best.max(exp_resolvent_gap(fam, a1, a2, dt, j, k)?);
        }
    }
    Ok(best)
}

/// Which exact propagator is compared with the resolvent product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GapMode {
    /// Frozen exponentials `prod e^{-dt A(t_j)}`.
    ExpVsResolvent,
    /// Evolution operators `prod U(t_j, t_{j-1})`.
    EvolutionVsResolvent,
}

/// Data regularity of the product-gap estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataKind {
    /// `||(P - Q) A(0)^{-alpha/2}|| / dt^{alpha/2}`, `1 <= i <= m`.
    Smooth,
    /// `t_{m-i}^{alpha/2} ||P - Q|| / dt^{alpha/2}`, `1 <= i < m`.
    NonSmooth,
}

/// Result of [`product_gap`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductGap {
    /// Supremum of the scaled gap.
    pub scaled: f64,
    /// Supremum of the unscaled (but weighted) gap.
    pub raw: f64,
    /// Smallest unscaled gap among the examined cells.
    pub raw_min: f64,
    /// Largest per-cell error estimate of the evolution oracle (zero for frozen exponentials).
    pub oracle_error: f64,
}

/// Discrepancy between `P = prod_{j=i}^m E_j` and `Q = prod_{j=i-1}^{m-1} (I + dt A(t_j))^{-1}`.
///
/// For [`GapMode::EvolutionVsResolvent`] the evolution operators use
/// [`ORACLE_SUBSTEPS`] exponential midpoint substeps. The same products built
/// with twice as many substeps give a Richardson estimate of the oracle error
/// in every cell, which must stay at least 100x below the gap of that cell.
pub fn product_gap(fam: &DenseFamily, mode: GapMode, data: DataKind, alpha: f64, dt: f64) -> Result<ProductGap> {
    if !(0.0..=2.0).contains(&alpha) {
        return config(format!("alpha must lie in [0, 2], got {alpha}"));
    }
    let steps = steps_for(fam, dt)?;
    let n = fam.dim();
    let oracle = mode == GapMode::EvolutionVsResolvent;
    let mut e = vec![DMatrix::identity(n, n)];
    let mut e_fine = vec![DMatrix::identity(n, n)];
    for j in 1..=steps {
        let (a, c) = ((j - 1) as f64 * dt, j as f64 * dt);
        match mode {
            GapMode::ExpVsResolvent => e.push(fam.exp(c, dt)?),
            GapMode::EvolutionVsResolvent => {
                e.push(fam.evolution(a, c, ORACLE_SUBSTEPS)?);
                e_fine.push(fam.evolution(a, c, 2 * ORACLE_SUBSTEPS)?);
            }
        }
    }
    let s: Vec<DMatrix<f64>> = (0..steps).map(|j| fam.resolvent(j as f64 * dt, dt)).collect::<Result<_>>()?;
    let weight = match data {
        DataKind::Smooth => fam.power(0.0, -alpha / 2.0)?,
        DataKind::NonSmooth => DMatrix::identity(n, n),
    };
    let grid = CellGrid::new(1, steps);
    let denom = dt.powf(alpha / 2.0);
    let (mut scaled, mut raw, mut raw_min, mut oracle_error) = (0.0f64, 0.0f64, f64::INFINITY, 0.0f64);
    for &i in grid.starts() {
        let mut p = DMatrix::identity(n, n);
        let mut p_fine = DMatrix::identity(n, n);
        let mut q = DMatrix::identity(n, n);
        for m in i..=steps {
            p = &e[m] * p;
            if oracle {
                p_fine = &e_fine[m] * p_fine;
            }
            q = &s[m - 1] * q;
            if !grid.includes_lag(m - i) || (data == DataKind::NonSmooth && m == i) {
                continue;
            }
            let gap = dense::norm2(&((&p - &q) * &weight));
            if oracle {
                // second order in the substep: error of the coarse run ~ 4/3 of the difference
                let err = dense::norm2(&((&p - &p_fine) * &weight)) * 4.0 / 3.0;
                if 100.0 * err > gap {
                    return Err(Error::Numerical(format!(
                        "evolution oracle error {err:e} is not 100x below the gap {gap:e} (dt = {dt}, i = {i}, m = {m})"
                    )));
                }
                oracle_error = oracle_error.max(err);
            }
            let v = match data {
                DataKind::Smooth => gap / denom,
                DataKind::NonSmooth => ((m - i) as f64 * dt).powf(alpha / 2.0) * gap / denom,
            };
            scaled = scaled.max(v);
            raw = raw.max(gap);
            raw_min = raw_min.min(gap);
        }
    }
    Ok(ProductGap { scaled, raw, raw_min, oracle_error })
}

/// `(dt sum_{j=1}^m t_{m-j+1}^{-1+a1} t_j^{-1+a2}) / t_m^{-1+a1+a2}`.
pub fn convolution_bound_check(a1: f64, a2: f64, dt: f64, m: usize) -> Result<f64> {
    if !(a1 > 0.0 && a2 > 0.0) {
        return config(format!("a1, a2 must be positive, got {a1}, {a2}"));
    }
    if m < 1 || !(dt > 0.0) {
        return config(format!("need m >= 1 and dt > 0, got {m}, {dt}"));
    }
    let t = |k: usize| k as f64 * dt;
    let sum: f64 = (1..=m).map(|j| t(m - j + 1).powf(-1.0 + a1) * t(j).powf(-1.0 + a2)).sum();
    Ok(dt * sum / t(m).powf(-1.0 + a1 + a2))
}

/// Largest entry of `(I + dt A_{j+1})^{-1} - (I + dt A_i)^{-1} - dt (I + dt A_{j+1})^{-1} (A_i - A_{j+1}) (I + dt A_i)^{-1}`
/// relative to the largest entry of the resolvents.
pub fn resolvent_identity_residual(fam: &DenseFamily, dt: f64, i: usize, j: usize) -> Result<f64> {
    let (ti, tj) = (i as f64 * dt, (j + 1) as f64 * dt);
    let ri = fam.resolvent(ti, dt)?;
    let rj = fam.resolvent(tj, dt)?;
    let rhs = &rj * (fam.at(ti) - fam.at(tj)) * &ri * dt;
    let lhs = &rj - &ri;
    let scale = ri.amax().max(rj.amax());
    Ok((lhs - rhs).amax() / scale)
}
