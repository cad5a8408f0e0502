//! Linear implicit Euler stepping
//! `X_{m+1} = (I + dt A_h(t_m))^{-1} (X_m + dt P_h F(t_m, X_m) + P_h B(t_m, X_m) dW_m)`.
//!
//! Nonlinear maps act pointwise on the collocation points of the family: the
//! mesh nodes for finite elements, the `(N1 + 1) x (N2 + 1)` midpoint grid
//! for the spectral basis (transform, apply, transform back).

use std::fmt;
use std::sync::Arc;

use crate::coeff::{ScalarField, TimeFn};
use crate::error::{config, Error, Result};
use crate::noise::{increment_field, NoisePath};
use crate::operators::{GridFunction, OperatorFamily, ResolventFactor};
use crate::scalar::Scalar;

/// Drift `F(t, u)`.
#[derive(Debug, Clone)]
pub enum Drift {
    Zero,
    /// `F(t, u) = k(t) u`.
    LinearReaction(TimeFn),
    /// `F(t, u) = -e^{-t} u / (1 + |u|)`.
    Saturating,
    Custom(ScalarField),
}

impl Drift {
    fn field(&self) -> Option<ScalarField> {
        match self {
            Drift::Zero => None,
            Drift::LinearReaction(k) => {
                let k = k.clone();
                Some(ScalarField::of_state(format!("({})*u", k.label()), move |t, u| k.eval(t) * u))
            }
            Drift::Saturating => Some(ScalarField::saturating_decay()),
            Drift::Custom(f) => Some(f.clone()),
        }
    }
}

/// Noise coefficient `B(t, u)`.
#[derive(Debug, Clone)]
pub enum Diffusion {
    /// `B = I`: the noise field is added as is.
    Additive,
    /// `(B(t, u) dW)(x) = b(t, x, u(x)) dW(x)`.
    MultiplicativeNemytskii(ScalarField),
}

impl Diffusion {
    /// `b(x, u) = u`.
    pub fn linear_multiplicative() -> Self {
        Diffusion::MultiplicativeNemytskii(ScalarField::of_state("u", |_, u| u))
    }
}

/// Initial condition `X_0`; functions are mapped with the L2 projection `P_h`.
#[derive(Clone)]
pub enum InitialData<T> {
    Zero,
    Constant(f64),
    Function(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
    Discrete(GridFunction<T>),
}

impl<T> fmt::Debug for InitialData<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialData::Zero => write!(f, "Zero"),
            InitialData::Constant(c) => write!(f, "Constant({c})"),
            InitialData::Function(_) => write!(f, "Function(..)"),
            InitialData::Discrete(g) => write!(f, "Discrete({} {:?})", g.backend, g.dims),
        }
    }
}

impl<T: Scalar> InitialData<T> {
    pub fn discretize(&self, fam: &OperatorFamily<T>) -> Result<GridFunction<T>> {
        match self {
            InitialData::Zero => Ok(fam.project(&|_, _| 0.0)),
            InitialData::Constant(c) => {
                let c = *c;
                Ok(fam.project(&move |_, _| c))
            }
            InitialData::Function(f) => Ok(fam.project(&|x, y| f(x, y))),
            InitialData::Discrete(g) => {
                fam.check(g)?;
                Ok(g.clone())
            }
        }
    }
}

/// Final time, step count, drift, noise coefficient and initial data.
#[derive(Debug, Clone)]
pub struct SchemeConfig<T> {
    pub horizon: f64,
    pub steps: usize,
    pub drift: Drift,
    pub diffusion: Diffusion,
    pub initial: InitialData<T>,
}

impl<T: Scalar> SchemeConfig<T> {
    pub fn new(horizon: f64, steps: usize, drift: Drift, diffusion: Diffusion, initial: InitialData<T>) -> Result<Self> {
        let c = SchemeConfig { horizon, steps, drift, diffusion, initial };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return config(format!("final time must be positive, got {}", self.horizon));
        }
        if self.steps < 1 {
            return config("step count must be >= 1");
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

/// Applies `f(t, x, u(x))` on the collocation points of `fam`; Fem Dirichlet nodes keep their values.
pub fn apply_nemytskii<T: Scalar>(fam: &OperatorFamily<T>, f: &ScalarField, t: f64, v: &GridFunction<T>) -> Result<GridFunction<T>> {
    let pts = fam.collocation_points();
    let vals = fam.to_points(v)?;
    let fem = fam.fem_data();
    let mut out = Vec::with_capacity(vals.len());
    for (n, (&(x, y), u)) in pts.iter().zip(vals).enumerate() {
        if fem.is_some_and(|d| !d.is_free(n)) {
            out.push(u);
            continue;
        }
        let r = f.eval(t, x, y, u.to_f64_lossy());
        if !r.is_finite() {
            return Err(Error::Numerical(format!("{} returned {r} at point {n} ({x}, {y}), u = {u}", f.label())));
        }
        out.push(T::of(r));
    }
    fam.from_points(&out)
}

/// Pointwise `b(t, x, u(x)) w(x)` on the collocation points, zero on Fem Dirichlet nodes.
fn nemytskii_product<T: Scalar>(fam: &OperatorFamily<T>, b: &ScalarField, t: f64, u: &GridFunction<T>, w: &GridFunction<T>) -> Result<GridFunction<T>> {
    let pts = fam.collocation_points();
    let uv = fam.to_points(u)?;
    let wv = fam.to_points(w)?;
    let fem = fam.fem_data();
    let mut out = Vec::with_capacity(uv.len());
    for (n, &(x, y)) in pts.iter().enumerate() {
        if fem.is_some_and(|d| !d.is_free(n)) {
            out.push(T::zero());
            continue;
        }
        let r = b.eval(t, x, y, uv[n].to_f64_lossy());
        if !r.is_finite() {
            return Err(Error::Numerical(format!("{} returned {r} at point {n} ({x}, {y})", b.label())));
        }
        out.push(T::of(r) * wv[n]);
    }
    fam.from_points(&out)
}

/// Right-hand side `X_m + dt F(t_m, X_m) + B(t_m, X_m) dW_m` before the resolvent solve.
pub fn assemble_rhs<T: Scalar>(
    fam: &OperatorFamily<T>,
    state: &GridFunction<T>,
    t: f64,
    dt: f64,
    cfg: &SchemeConfig<T>,
    noise_field: &GridFunction<T>,
) -> Result<GridFunction<T>> {
    fam.check(state)?;
    fam.check(noise_field)?;
    let mut rhs = state.clone();
    if let Some(f) = cfg.drift.field() {
        let fv = apply_nemytskii(fam, &f, t, state)?;
        let dtt = T::of(dt);
        let fem = fam.fem_data();
        for (n, (r, v)) in rhs.values.iter_mut().zip(&fv.values).enumerate() {
            if fem.is_none_or(|d| d.is_free(n)) {
                *r += dtt * *v;
            }
        }
    }
    let noise = match &cfg.diffusion {
        Diffusion::Additive => noise_field.clone(),
        Diffusion::MultiplicativeNemytskii(b) => nemytskii_product(fam, b, t, state, noise_field)?,
    };
    let fem = fam.fem_data();
    for (k, (r, n)) in rhs.values.iter_mut().zip(&noise.values).enumerate() {
        if fem.is_none_or(|d| d.is_free(k)) {
            *r += *n;
        }
    }
    Ok(rhs)
}

/// One step with a prepared factor of `(I + dt A_h(t_m))`.
pub fn step_with<T: Scalar>(
    fam: &OperatorFamily<T>,
    factor: &ResolventFactor<T>,
    state: &GridFunction<T>,
    cfg: &SchemeConfig<T>,
    noise_field: &GridFunction<T>,
) -> Result<GridFunction<T>> {
    let (t, dt) = factor.key();
    let rhs = assemble_rhs(fam, state, t, dt, cfg, noise_field)?;
    fam.solve_with(factor, &rhs)
}

/// One step from `t_m = m dt`.
pub fn step<T: Scalar>(
    fam: &OperatorFamily<T>,
    state: &GridFunction<T>,
    m: usize,
    dt: f64,
    cfg: &SchemeConfig<T>,
    noise_field: &GridFunction<T>,
) -> Result<GridFunction<T>> {
    let factor = fam.cached_factor(m as f64 * dt, dt)?;
    step_with(fam, &factor, state, cfg, noise_field)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    FinalOnly,
    AllSteps,
}

#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub final_state: GridFunction<T>,
    /// `X_0, ..., X_M` when recorded.
    pub states: Option<Vec<GridFunction<T>>>,
}

/// Runs `cfg.steps` steps on `path` from the discretized initial data.
pub fn integrate<T: Scalar>(fam: &OperatorFamily<T>, cfg: &SchemeConfig<T>, path: &NoisePath, record: Record) -> Result<Trajectory<T>> {
    cfg.validate()?;
    let dt = cfg.dt();
    if path.steps() != cfg.steps {
        return config(format!("noise path has {} steps, scheme needs {}", path.steps(), cfg.steps));
    }
    if (path.dt() - dt).abs() > 1e-12 * dt {
        return config(format!("noise path step {} differs from scheme step {dt}", path.dt()));
    }
    let mut x = cfg.initial.discretize(fam)?;
    let mut states = (record == Record::AllSteps).then(|| vec![x.clone()]);
    for m in 0..cfg.steps {
        let w = increment_field(path, m, fam)?;
        x = step(fam, &x, m, dt, cfg, &w)?;
        if let Some(s) = states.as_mut() {
            s.push(x.clone());
        }
    }
    Ok(Trajectory { final_state: x, states })
}
