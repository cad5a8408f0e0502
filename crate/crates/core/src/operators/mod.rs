//! The discrete operator family `A_h(t)` in a spectral and a P1 finite
//! element backend, with resolvent solves, fractional powers and the L2
//! projection.
//!
//! Sign convention: `A_h(t)` is the positive (coercive) operator, so the
//! implicit Euler step is `(I + dt A_h(t_m))^{-1}`. For the spectral backend
//! mode `(i, j)` carries the eigenvalue `theta(t) lambda_{i,j} + k(t) + c0`.
//! For the finite element backend the stiffness matrix is
//! `K(t) = theta(t) (K_diff + K_adv) + (k(t) + c0) M` and `A_h(t) = M^{-1} K(t)`
//! on free dofs.

pub mod fem;
pub mod sparse;
pub mod spectral;

use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coeff::{TimeFn, VectorField};
use crate::dense;
use crate::error::{config, Error, Result};
use crate::quadrature::triangle_rule;
use crate::scalar::Scalar;
use fem::{FemData, MASS};
use sparse::BandedLu;
use spectral::SpectralData;

/// Largest free-dof count for which Fem fractional powers are formed densely.
pub const FEM_FRACTIONAL_MAX_DOFS: usize = 2000;

/// Axis-aligned rectangle `[0, lx] x [0, ly]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub lx: f64,
    pub ly: f64,
}

impl Rectangle {
    pub fn new(lx: f64, ly: f64) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return config(format!("domain extents must be positive, got {lx} x {ly}"));
        }
        Ok(Rectangle { lx, ly })
    }

    pub fn unit() -> Self {
        Rectangle { lx: 1.0, ly: 1.0 }
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Backend {
    Spectral,
    Fem,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Spectral => write!(f, "spectral"),
            Backend::Fem => write!(f, "fem"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeCondition {
    NeumannHomogeneous,
    DirichletConstant(f64),
}

/// Boundary condition per edge of the rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec {
    /// `x = 0`
    pub left: EdgeCondition,
    /// `x = lx`
    pub right: EdgeCondition,
    /// `y = 0`
    pub bottom: EdgeCondition,
    /// `y = ly`
    pub top: EdgeCondition,
}

impl BoundarySpec {
    pub fn neumann() -> Self {
        let n = EdgeCondition::NeumannHomogeneous;
        BoundarySpec { left: n, right: n, bottom: n, top: n }
    }

    /// Dirichlet value `g` on `x = 0`, homogeneous Neumann elsewhere.
    pub fn dirichlet_left(g: f64) -> Self {
        BoundarySpec { left: EdgeCondition::DirichletConstant(g), ..BoundarySpec::neumann() }
    }
}

/// Coefficient vector of a function in the discrete space: cosine mode
/// coefficients (index `i * N2 + j`) or nodal values including Dirichlet nodes
/// (index `b * (n1 + 1) + a`).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T> {
    pub backend: Backend,
    /// Mode counts (Spectral) or cell counts (Fem).
    pub dims: (usize, usize),
    pub values: Vec<T>,
}

impl<T: Scalar> GridFunction<T> {
    pub fn expected_len(backend: Backend, dims: (usize, usize)) -> usize {
        match backend {
            Backend::Spectral => dims.0 * dims.1,
            Backend::Fem => (dims.0 + 1) * (dims.1 + 1),
        }
    }

    pub fn new(backend: Backend, dims: (usize, usize), values: Vec<T>) -> Result<Self> {
        let n = Self::expected_len(backend, dims);
        if values.len() != n {
            return config(format!("grid function length {} != expected {n}", values.len()));
        }
        Ok(GridFunction { backend, dims, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        GridFunction { backend: self.backend, dims: self.dims, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// `self + s * other`, shapes assumed equal.
    pub fn axpy(&self, s: T, other: &Self) -> Self {
        GridFunction {
            backend: self.backend,
            dims: self.dims,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a + s * b).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values.iter().zip(&other.values).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn cast<U: Scalar>(&self) -> GridFunction<U> {
        GridFunction { backend: self.backend, dims: self.dims, values: self.values.iter().map(|v| U::of(v.to_f64_lossy())).collect() }
    }
}

pub(crate) enum Kind<T> {
    Spectral(SpectralData),
    Fem(Box<FemData<T>>),
}

/// Prepared resolvent `(I + dt A_h(t))^{-1}` for one `(t, dt)` pair.
pub enum ResolventFactor<T> {
    Spectral { t: f64, dt: f64, multipliers: Vec<T> },
    Fem { t: f64, dt: f64, lu: BandedLu<T>, lift_load: Vec<T> },
}

impl<T> ResolventFactor<T> {
    pub fn key(&self) -> (f64, f64) {
        match self {
            ResolventFactor::Spectral { t, dt, .. } | ResolventFactor::Fem { t, dt, .. } => (*t, *dt),
        }
    }
}

type CacheSlot<T> = Mutex<Option<((u64, u64), Arc<ResolventFactor<T>>)>>;

/// Discrete non-autonomous operator family. Immutable after construction
/// apart from the one-slot factorization cache used by [`solve_resolvent`],
/// which is guarded and may be shared between threads.
///
/// [`solve_resolvent`]: OperatorFamily::solve_resolvent
pub struct OperatorFamily<T: Scalar> {
    domain: Rectangle,
    theta: TimeFn,
    reaction: TimeFn,
    garding_shift: f64,
    advection: Option<VectorField>,
    bc: BoundarySpec,
    horizon: f64,
    pub(crate) kind: Kind<T>,
    cache: CacheSlot<T>,
}

impl<T: Scalar> fmt::Debug for OperatorFamily<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorFamily")
            .field("backend", &self.backend())
            .field("dims", &self.dims())
            .field("domain", &self.domain)
            .field("theta", &self.theta)
            .field("reaction", &self.reaction)
            .field("garding_shift", &self.garding_shift)
            .field("advection", &self.advection)
            .field("bc", &self.bc)
            .finish()
    }
}

/// Time coefficients of the family: `A(t) = theta(t) L + k(t)` with `theta`
/// checked on `[0, horizon]`.
#[derive(Debug, Clone)]
pub struct TimeCoefficients {
    pub theta: TimeFn,
    pub reaction: TimeFn,
    pub horizon: f64,
}

impl TimeCoefficients {
    pub fn new(theta: TimeFn, reaction: TimeFn, horizon: f64) -> Self {
        TimeCoefficients { theta, reaction, horizon }
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return config(format!("horizon must be positive, got {}", self.horizon));
        }
        let theta_min = self.theta.sampled_min(self.horizon, 1000);
        if !(theta_min > 0.0) {
            return config(format!("theta(t) must stay positive on [0, {}]; sampled min {theta_min}", self.horizon));
        }
        Ok(())
    }
}

/// Cosine spectral family on `domain` with `n1 x n2` modes (indices `0..n1`, `0..n2`).
pub fn build_spectral_family<T: Scalar>(
    domain: Rectangle,
    modes: (usize, usize),
    coeffs: TimeCoefficients,
) -> Result<OperatorFamily<T>> {
    if modes.0 < 1 || modes.1 < 1 {
        return config(format!("mode counts must be >= 1, got {modes:?}"));
    }
    coeffs.validate()?;
    Ok(OperatorFamily {
        domain,
        theta: coeffs.theta,
        reaction: coeffs.reaction,
        garding_shift: 0.0,
        advection: None,
        bc: BoundarySpec::neumann(),
        horizon: coeffs.horizon,
        kind: Kind::Spectral(SpectralData::new(&domain, modes.0, modes.1)),
        cache: Mutex::new(None),
    })
}

/// Everything needed to assemble a finite element family.
#[derive(Debug, Clone)]
pub struct FemFamilySpec {
    pub domain: Rectangle,
    pub cells: (usize, usize),
    pub coeffs: TimeCoefficients,
    pub advection: Option<VectorField>,
    pub bc: BoundarySpec,
    pub garding_shift: f64,
}

/// P1 finite element family on the structured mesh.
pub fn build_fem_family<T: Scalar>(spec: FemFamilySpec) -> Result<OperatorFamily<T>> {
    spec.coeffs.validate()?;
    if !(spec.garding_shift >= 0.0) {
        return config(format!("Garding shift must be >= 0, got {}", spec.garding_shift));
    }
    let data = FemData::assemble(&spec.domain, spec.cells.0, spec.cells.1, spec.advection.as_ref(), &spec.bc)?;
    Ok(OperatorFamily {
        domain: spec.domain,
        theta: spec.coeffs.theta,
        reaction: spec.coeffs.reaction,
        garding_shift: spec.garding_shift,
        advection: spec.advection,
        bc: spec.bc,
        horizon: spec.coeffs.horizon,
        kind: Kind::Fem(Box::new(data)),
        cache: Mutex::new(None),
    })
}

impl<T: Scalar> OperatorFamily<T> {
    pub fn backend(&self) -> Backend {
        match self.kind {
            Kind::Spectral(_) => Backend::Spectral,
            Kind::Fem(_) => Backend::Fem,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match &self.kind {
            Kind::Spectral(s) => (s.n1, s.n2),
            Kind::Fem(f) => (f.mesh.n1, f.mesh.n2),
        }
    }

    pub fn domain(&self) -> Rectangle {
        self.domain
    }

    pub fn theta(&self) -> &TimeFn {
        &self.theta
    }

    pub fn reaction(&self) -> &TimeFn {
        &self.reaction
    }

    pub fn garding_shift(&self) -> f64 {
        self.garding_shift
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn boundary(&self) -> &BoundarySpec {
        &self.bc
    }

    pub fn spectral_data(&self) -> Option<&SpectralData> {
        match &self.kind {
            Kind::Spectral(s) => Some(s),
            Kind::Fem(_) => None,
        }
    }

    pub fn fem_data(&self) -> Option<&FemData<T>> {
        match &self.kind {
            Kind::Fem(f) => Some(f),
            Kind::Spectral(_) => None,
        }
    }

    /// Length of a grid function on this family.
    pub fn len(&self) -> usize {
        GridFunction::<T>::expected_len(self.backend(), self.dims())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Zero function (Fem: Dirichlet nodes carry their prescribed values).
    pub fn zeros(&self) -> GridFunction<T> {
        let values = match &self.kind {
            Kind::Spectral(s) => vec![T::zero(); s.len()],
            Kind::Fem(f) => f.lift.clone(),
        };
        GridFunction { backend: self.backend(), dims: self.dims(), values }
    }

    pub fn check(&self, v: &GridFunction<T>) -> Result<()> {
        if v.backend != self.backend() || v.dims != self.dims() || v.values.len() != self.len() {
            return Err(Error::BackendMismatch {
                expected: format!("{} {:?}", self.backend(), self.dims()),
                got: format!("{} {:?} (len {})", v.backend, v.dims, v.values.len()),
            });
        }
        Ok(())
    }

    /// Coefficient added to the mass term: `k(t) + c0`.
    #[inline]
    pub fn shift_at(&self, t: f64) -> f64 {
        self.reaction.eval(t) + self.garding_shift
    }

    /// Spectral eigenvalue of mode `(i, j)` at time `t`: `theta(t) lambda_{i,j} + k(t) + c0`.
    pub fn eigenvalue(&self, t: f64, i: usize, j: usize) -> Result<f64> {
        match &self.kind {
            Kind::Spectral(s) if i < s.n1 && j < s.n2 => Ok(self.theta.eval(t) * s.lambda[s.index(i, j)] + self.shift_at(t)),
            Kind::Spectral(s) => Err(Error::OutOfRange(format!("mode ({i}, {j}) outside {} x {}", s.n1, s.n2))),
            Kind::Fem(_) => Err(Error::BackendMismatch { expected: "spectral".into(), got: "fem".into() }),
        }
    }

    fn spectral_multipliers(&self, s: &SpectralData, t: f64, f: impl Fn(f64) -> f64) -> Vec<T> {
        let th = self.theta.eval(t);
        let sh = self.shift_at(t);
        s.lambda.iter().map(|&l| T::of(f(th * l + sh))).collect()
    }

    /// Operator action. Spectral: `mu_{i,j}(t) v_{i,j}`. Fem: the load vector
    /// `(K(t) v)` on free rows (Dirichlet columns included through the stored
    /// boundary values), zero on Dirichlet rows.
    pub fn apply_a(&self, t: f64, v: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.check(v)?;
        let values = match &self.kind {
            Kind::Spectral(s) => {
                let mu = self.spectral_multipliers(s, t, |m| m);
                v.values.iter().zip(mu).map(|(&a, m)| a * m).collect()
            }
            Kind::Fem(f) => {
                let th = T::of(self.theta.eval(t));
                let sh = T::of(self.shift_at(t));
                let mut out = vec![T::zero(); v.len()];
                for &r in &f.free {
                    out[r] = f.matrices.row(r).map(|e| f.combined(e, th, sh) * v.values[f.matrices.col[e]]).sum();
                }
                out
            }
        };
        Ok(GridFunction { backend: v.backend, dims: v.dims, values })
    }

    /// `M_ff^{-1}` applied to the free rows of a load vector (Dirichlet entries set to zero).
    /// Identity for the spectral backend.
    pub fn inverse_mass(&self, load: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.check(load)?;
        match &self.kind {
            Kind::Spectral(_) => Ok(load.clone()),
            Kind::Fem(f) => {
                let mut b: Vec<T> = f.free.iter().map(|&n| load.values[n]).collect();
                f.mass_free_lu.solve_in_place(&mut b);
                let mut out = vec![T::zero(); load.len()];
                for (k, &n) in f.free.iter().enumerate() {
                    out[n] = b[k];
                }
                Ok(GridFunction { backend: load.backend, dims: load.dims, values: out })
            }
        }
    }

    /// Factors `(I + dt A_h(t))` for repeated use.
    pub fn factorize(&self, t: f64, dt: f64) -> Result<ResolventFactor<T>> {
        if !(dt > 0.0 && dt.is_finite()) {
            return config(format!("time step must be positive, got {dt}"));
        }
        match &self.kind {
            Kind::Spectral(s) => Ok(ResolventFactor::Spectral {
                t,
                dt,
                multipliers: self.spectral_multipliers(s, t, |m| 1.0 / (1.0 + dt * m)),
            }),
            Kind::Fem(f) => {
                let (lu, lift_load) = f.factor_resolvent(T::of(self.theta.eval(t)), T::of(self.shift_at(t)), T::of(dt))?;
                Ok(ResolventFactor::Fem { t, dt, lu, lift_load })
            }
        }
    }

    /// Applies a prepared factor. Fem: solves `(M_ff + dt K_ff) x = M_ff rhs_f - dt K_fD g`
    /// and reinstates the Dirichlet values; the Dirichlet entries of `rhs` are ignored.
    pub fn solve_with(&self, factor: &ResolventFactor<T>, rhs: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.check(rhs)?;
        let values = match (&self.kind, factor) {
            (Kind::Spectral(_), ResolventFactor::Spectral { multipliers, .. }) => {
                rhs.values.iter().zip(multipliers).map(|(&a, &m)| a * m).collect()
            }
            (Kind::Fem(f), ResolventFactor::Fem { lu, lift_load, .. }) => {
                let mut b = f.mass_free_rows(&rhs.values);
                for (bi, li) in b.iter_mut().zip(lift_load) {
                    *bi += *li;
                }
                lu.solve_in_place(&mut b);
                let mut out = f.lift.clone();
                for (k, &n) in f.free.iter().enumerate() {
                    out[n] = b[k];
                }
                out
            }
            _ => {
                return Err(Error::BackendMismatch { expected: self.backend().to_string(), got: "factor of the other backend".into() })
            }
        };
        Ok(GridFunction { backend: rhs.backend, dims: rhs.dims, values })
    }

    /// Factor for `(t, dt)` through the one-slot cache.
    pub fn cached_factor(&self, t: f64, dt: f64) -> Result<Arc<ResolventFactor<T>>> {
        let key = (t.to_bits(), dt.to_bits());
        {
            let slot = self.cache.lock().expect("factor cache poisoned");
            if let Some((k, f)) = slot.as_ref() {
                if *k == key {
                    return Ok(Arc::clone(f));
                }
            }
        }
        let fresh = Arc::new(self.factorize(t, dt)?);
        *self.cache.lock().expect("factor cache poisoned") = Some((key, Arc::clone(&fresh)));
        Ok(fresh)
    }

    /// `(I + dt A_h(t))^{-1} rhs`.
    pub fn solve_resolvent(&self, t: f64, dt: f64, rhs: &GridFunction<T>) -> Result<GridFunction<T>> {
        let factor = self.cached_factor(t, dt)?;
        self.solve_with(&factor, rhs)
    }

    /// `A_h(t)^power v`. Fem acts on the homogeneous part `v - lift` and
    /// reinstates the lift; limited to [`FEM_FRACTIONAL_MAX_DOFS`] free dofs.
    pub fn fractional_apply(&self, t: f64, power: f64, v: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.check(v)?;
        if power == 0.0 {
            return Ok(v.clone());
        }
        match &self.kind {
            Kind::Spectral(s) => {
                let th = self.theta.eval(t);
                let sh = self.shift_at(t);
                let mut out = Vec::with_capacity(v.len());
                for (idx, (&a, &l)) in v.values.iter().zip(&s.lambda).enumerate() {
                    let mu = th * l + sh;
                    let m = if mu == 0.0 {
                        if power < 0.0 {
                            return Err(Error::Domain(format!(
                                "zero eigenvalue at mode ({}, {}) with negative power {power}",
                                idx / s.n2,
                                idx % s.n2
                            )));
                        }
                        0.0
                    } else if mu < 0.0 {
                        return Err(Error::Domain(format!("negative eigenvalue {mu} has no real power")));
                    } else {
                        mu.powf(power)
                    };
                    out.push(a * T::of(m));
                }
                Ok(GridFunction { backend: v.backend, dims: v.dims, values: out })
            }
            Kind::Fem(f) => {
                let nf = f.free.len();
                if nf > FEM_FRACTIONAL_MAX_DOFS {
                    return config(format!(
                        "fractional power needs <= {FEM_FRACTIONAL_MAX_DOFS} free dofs, family has {nf}"
                    ));
                }
                let th = T::of(self.theta.eval(t));
                let sh = T::of(self.shift_at(t));
                let mut m = DMatrix::<f64>::zeros(nf, nf);
                let mut k = DMatrix::<f64>::zeros(nf, nf);
                for (rf, &r) in f.free.iter().enumerate() {
                    for e in f.matrices.row(r) {
                        let cf = f.free_index[f.matrices.col[e]];
                        if cf != usize::MAX {
                            m[(rf, cf)] = f.matrices.values[MASS][e].to_f64_lossy();
                            k[(rf, cf)] = f.combined(e, th, sh).to_f64_lossy();
                        }
                    }
                }
                // A_h = M^{-1} K = L^{-T} S L^T with S = L^{-1} K L^{-T}, M = L L^T
                let chol = m.cholesky().ok_or_else(|| Error::Internal("mass matrix not SPD".into()))?;
                let l = chol.l();
                let linv = l.clone().try_inverse().ok_or_else(|| Error::Internal("singular Cholesky factor".into()))?;
                let s_mat = &linv * &k * linv.transpose();
                let s_pow = if f.has_advection {
                    dense::matrix_power(&s_mat, power)?
                } else {
                    let sym = (&s_mat + s_mat.transpose()) * 0.5;
                    let eig = sym.symmetric_eigen();
                    let scale = eig.eigenvalues.amax();
                    let mut d = eig.eigenvalues.clone();
                    for x in d.iter_mut() {
                        if x.abs() <= 1e-12 * scale {
                            if power < 0.0 {
                                return Err(Error::Domain(format!("zero eigenvalue with negative power {power}")));
                            }
                            *x = 0.0;
                        } else {
                            *x = x.powf(power);
                        }
                    }
                    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
                };
                let a_pow = linv.transpose() * s_pow * l.transpose();
                let homog = nalgebra::DVector::from_iterator(nf, f.free.iter().map(|&n| (v.values[n] - f.lift[n]).to_f64_lossy()));
                let res = a_pow * homog;
                let mut out = f.lift.clone();
                for (kf, &n) in f.free.iter().enumerate() {
                    out[n] = out[n] + T::of(res[kf]);
                }
                Ok(GridFunction { backend: v.backend, dims: v.dims, values: out })
            }
        }
    }

    /// L2 projection `P_h u`. Spectral: cosine coefficients by tensor Gauss
    /// quadrature. Fem: mass solve of the load `∫ u φ_i` (collapsed 4 x 4 Gauss
    /// rule per triangle); Dirichlet nodes are then reset to their prescribed values.
    pub fn project(&self, u: &dyn Fn(f64, f64) -> f64) -> GridFunction<T> {
        let values = match &self.kind {
            Kind::Spectral(s) => spectral::project(s, &self.domain, u).into_iter().map(T::of).collect(),
            Kind::Fem(f) => {
                let rule = triangle_rule(4);
                let mut load = vec![0.0f64; f.num_nodes()];
                for tri in f.mesh.triangles() {
                    let p = tri.map(|n| f.mesh.coords(n));
                    let area2 = ((p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1)).abs();
                    for &(r, s, w) in &rule {
                        let bary = [1.0 - r - s, r, s];
                        let x = bary[0] * p[0].0 + bary[1] * p[1].0 + bary[2] * p[2].0;
                        let y = bary[0] * p[0].1 + bary[1] * p[1].1 + bary[2] * p[2].1;
                        let val = u(x, y) * w * area2;
                        for k in 0..3 {
                            load[tri[k]] += val * bary[k];
                        }
                    }
                }
                let mut b: Vec<T> = load.into_iter().map(T::of).collect();
                f.mass_full_lu.solve_in_place(&mut b);
                for (n, d) in f.dirichlet.iter().enumerate() {
                    if let Some(g) = d {
                        b[n] = *g;
                    }
                }
                b
            }
        };
        GridFunction { backend: self.backend(), dims: self.dims(), values }
    }

    /// Nodal interpolation (Fem); falls back to [`project`](Self::project) for the spectral backend.
    pub fn interpolate(&self, u: &dyn Fn(f64, f64) -> f64) -> GridFunction<T> {
        match &self.kind {
            Kind::Spectral(_) => self.project(u),
            Kind::Fem(f) => {
                let values = (0..f.num_nodes())
                    .map(|n| match f.dirichlet[n] {
                        Some(g) => g,
                        None => {
                            let (x, y) = f.mesh.coords(n);
                            T::of(u(x, y))
                        }
                    })
                    .collect();
                GridFunction { backend: Backend::Fem, dims: self.dims(), values }
            }
        }
    }

    /// Point value of `v` at `(x, y)`.
    pub fn evaluate(&self, v: &GridFunction<T>, x: f64, y: f64) -> Result<f64> {
        self.check(v)?;
        Ok(match &self.kind {
            Kind::Spectral(s) => {
                let c: Vec<f64> = v.values.iter().map(|a| a.to_f64_lossy()).collect();
                spectral::evaluate(s, &self.domain, &c, x, y)
            }
            Kind::Fem(f) => {
                let (tri, bary) = f.mesh.locate(x, y);
                (0..3).map(|k| bary[k] * v.values[tri[k]].to_f64_lossy()).sum()
            }
        })
    }

    /// Squared L2 norm: Parseval sum (Spectral) or `v^T M v` (Fem).
    pub fn norm_sq(&self, v: &GridFunction<T>) -> Result<T> {
        self.check(v)?;
        Ok(match &self.kind {
            Kind::Spectral(_) => v.values.iter().map(|&a| a * a).sum(),
            Kind::Fem(f) => f.mass_norm_sq(&v.values),
        })
    }

    pub fn norm(&self, v: &GridFunction<T>) -> Result<T> {
        Ok(self.norm_sq(v)?.sqrt())
    }

    /// Physical coordinates of the points on which Nemytskii maps act:
    /// mesh nodes (Fem) or the `(N1 + 1) x (N2 + 1)` midpoint grid (Spectral).
    pub fn collocation_points(&self) -> Vec<(f64, f64)> {
        match &self.kind {
            Kind::Fem(f) => (0..f.num_nodes()).map(|n| f.mesh.coords(n)).collect(),
            Kind::Spectral(s) => {
                let (xs, _) = spectral::midpoint_grid(s.n1 + 1, self.domain.lx);
                let (ys, _) = spectral::midpoint_grid(s.n2 + 1, self.domain.ly);
                xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect()
            }
        }
    }

    /// Values on [`collocation_points`](Self::collocation_points).
    pub fn to_points(&self, v: &GridFunction<T>) -> Result<Vec<T>> {
        self.check(v)?;
        match &self.kind {
            Kind::Fem(_) => Ok(v.values.clone()),
            Kind::Spectral(s) => {
                let (xs, _) = spectral::midpoint_grid(s.n1 + 1, self.domain.lx);
                let (ys, _) = spectral::midpoint_grid(s.n2 + 1, self.domain.ly);
                let ex = spectral::basis_matrix(&xs, s.n1, self.domain.lx);
                let ey = spectral::basis_matrix(&ys, s.n2, self.domain.ly);
                // g[i][r] = sum_j c_ij e_j(y_r)
                let mut g = vec![vec![0.0; ys.len()]; s.n1];
                for i in 0..s.n1 {
                    for (r, eyr) in ey.iter().enumerate() {
                        g[i][r] = (0..s.n2).map(|j| v.values[s.index(i, j)].to_f64_lossy() * eyr[j]).sum();
                    }
                }
                let mut out = Vec::with_capacity(xs.len() * ys.len());
                for exp in &ex {
                    for r in 0..ys.len() {
                        out.push(T::of((0..s.n1).map(|i| exp[i] * g[i][r]).sum()));
                    }
                }
                Ok(out)
            }
        }
    }

    /// Inverse of [`to_points`](Self::to_points).
    pub fn from_points(&self, values: &[T]) -> Result<GridFunction<T>> {
        match &self.kind {
            Kind::Fem(_) => GridFunction::new(Backend::Fem, self.dims(), values.to_vec()),
            Kind::Spectral(s) => {
                let (xs, hx) = spectral::midpoint_grid(s.n1 + 1, self.domain.lx);
                let (ys, hy) = spectral::midpoint_grid(s.n2 + 1, self.domain.ly);
                if values.len() != xs.len() * ys.len() {
                    return config(format!("expected {} point values, got {}", xs.len() * ys.len(), values.len()));
                }
                let ex = spectral::basis_matrix(&xs, s.n1, self.domain.lx);
                let ey = spectral::basis_matrix(&ys, s.n2, self.domain.ly);
                // g[p][j] = hy sum_r u(x_p, y_r) e_j(y_r)
                let mut g = vec![vec![0.0; s.n2]; xs.len()];
                for p in 0..xs.len() {
                    for (r, eyr) in ey.iter().enumerate() {
                        let u = values[p * ys.len() + r].to_f64_lossy() * hy;
                        for j in 0..s.n2 {
                            g[p][j] += u * eyr[j];
                        }
                    }
                }
                let mut c = vec![0.0; s.len()];
                for (p, gp) in g.iter().enumerate() {
                    for i in 0..s.n1 {
                        let w = hx * ex[p][i];
                        for j in 0..s.n2 {
                            c[s.index(i, j)] += w * gp[j];
                        }
                    }
                }
                Ok(GridFunction { backend: Backend::Spectral, dims: self.dims(), values: c.into_iter().map(T::of).collect() })
            }
        }
    }

    /// `||v_h - u||_{L2}` for a Fem function against a pointwise function, by
    /// collapsed Gauss quadrature (`order x order` per triangle).
    pub fn l2_error_against(&self, v: &GridFunction<T>, u: &dyn Fn(f64, f64) -> f64, order: usize) -> Result<f64> {
        self.check(v)?;
        let f = match &self.kind {
            Kind::Fem(f) => f,
            Kind::Spectral(_) => return Err(Error::BackendMismatch { expected: "fem".into(), got: "spectral".into() }),
        };
        let rule = triangle_rule(order);
        let mut acc = 0.0;
        for tri in f.mesh.triangles() {
            let p = tri.map(|n| f.mesh.coords(n));
            let area2 = ((p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1)).abs();
            let vals = tri.map(|n| v.values[n].to_f64_lossy());
            for &(r, s, w) in &rule {
                let bary = [1.0 - r - s, r, s];
                let x = bary[0] * p[0].0 + bary[1] * p[1].0 + bary[2] * p[2].0;
                let y = bary[0] * p[0].1 + bary[1] * p[1].1 + bary[2] * p[2].1;
                let vh = bary[0] * vals[0] + bary[1] * vals[1] + bary[2] * vals[2];
                let d = vh - u(x, y);
                acc += w * area2 * d * d;
            }
        }
        Ok(acc.sqrt())
    }
}

#[cfg(test)]
mod tests;
