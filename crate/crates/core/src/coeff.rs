//! Coefficient functions: time profiles, velocity fields and pointwise
//! nonlinearities.

use std::fmt;
use std::sync::Arc;

use crate::quadrature::adaptive_simpson;

type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Scalar function of time with an optional closed-form antiderivative.
#[derive(Clone)]
pub struct TimeFn {
    label: String,
    value: Fn1,
    primitive: Option<Fn1>,
}

impl TimeFn {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TimeFn { label: label.into(), value: Arc::new(f), primitive: None }
    }

    /// Attaches an antiderivative `P` with `P' = f`; integrals then use `P(c) - P(a)`.
    pub fn with_primitive(mut self, p: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.primitive = Some(Arc::new(p));
        self
    }

    pub fn constant(c: f64) -> Self {
        TimeFn::new(format!("{c}"), move |_| c).with_primitive(move |t| c * t)
    }

    /// `(1/10)(1 + e^{-t})`, the diffusion coefficient of the additive experiment.
    pub fn decaying_diffusion() -> Self {
        TimeFn::new("0.1*(1+exp(-t))", |t| 0.1 * (1.0 + (-t).exp()))
            .with_primitive(|t| 0.1 * (t - (-t).exp()))
    }

    /// `1 + e^{-t}`, the principal-part coefficient of the multiplicative experiment.
    pub fn one_plus_decay() -> Self {
        TimeFn::new("1+exp(-t)", |t| 1.0 + (-t).exp()).with_primitive(|t| t - (-t).exp())
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.value)(t)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_primitive(&self) -> bool {
        self.primitive.is_some()
    }

    /// `∫_a^c f(s) ds`, closed form when available, else adaptive Simpson to 1e-13.
    pub fn integral(&self, a: f64, c: f64) -> f64 {
        match &self.primitive {
            Some(p) => p(c) - p(a),
            None => adaptive_simpson(|s| self.eval(s), a, c, 1e-13, 40).unwrap_or(f64::NAN),
        }
    }

    /// Minimum over `n + 1` equispaced samples of `[0, horizon]`.
    pub fn sampled_min(&self, horizon: f64, n: usize) -> f64 {
        (0..=n)
            .map(|k| self.eval(horizon * k as f64 / n as f64))
            .fold(f64::INFINITY, f64::min)
    }
}

impl fmt::Debug for TimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TimeFn({})", self.label)
    }
}

/// Velocity field `q(x, y)`.
#[derive(Clone)]
pub struct VectorField {
    label: String,
    value: Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>,
}

impl VectorField {
    pub fn new(label: impl Into<String>, f: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static) -> Self {
        VectorField { label: label.into(), value: Arc::new(f) }
    }

    pub fn constant(qx: f64, qy: f64) -> Self {
        VectorField::new(format!("({qx},{qy})"), move |_, _| [qx, qy])
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        (self.value)(x, y)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField({})", self.label)
    }
}

/// Pointwise function `f(t, x, y, u)` used for Nemytskii operators.
#[derive(Clone)]
pub struct ScalarField {
    label: String,
    value: Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>,
}

impl ScalarField {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ScalarField { label: label.into(), value: Arc::new(f) }
    }

    /// `f(t, u)` independent of position.
    pub fn of_state(label: impl Into<String>, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::new(label, move |t, _, _, u| f(t, u))
    }

    /// `-e^{-t} u / (1 + |u|)`.
    pub fn saturating_decay() -> Self {
        ScalarField::of_state("-exp(-t)*u/(1+|u|)", |t, u| -(-t).exp() * u / (1.0 + u.abs()))
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64, y: f64, u: f64) -> f64 {
        (self.value)(t, x, y, u)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({})", self.label)
    }
}
