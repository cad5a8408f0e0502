//! Reference solutions for the strong-error harness.
//!
//! For the additive linear problem every cosine mode is an Ornstein–Uhlenbeck
//! process `dX = -b(t) X dt + sqrt(q) dbeta` with `b(t) = theta(t) lambda + k(t) + c0`,
//! solved exactly step by step. To compare with the scheme on the same
//! Brownian path, the stochastic convolution over a fine step,
//! `I = ∫ g(s) dbeta(s)` with `g(s) = exp(-∫_s^{t_{m+1}} b)`, is drawn from its
//! exact conditional law given the increment `dbeta`:
//! `I = (c / dt) dbeta + sqrt(V - c^2 / dt) Z` with `c = ∫ g`, `V = ∫ g^2` and
//! `Z` an independent standard normal from the residual stream of the mode.
//!
//! For the multiplicative problem the reference is the scheme itself at the
//! finest step.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::coeff::TimeFn;
use crate::error::{config, Error, Result};
use crate::noise::{NoisePath, NoiseSpec};
use crate::operators::{GridFunction, OperatorFamily};
use crate::quadrature::adaptive_simpson;
use crate::rng::{mode_stream, Purpose};
use crate::scheme::{integrate, Record, SchemeConfig};

/// Absolute tolerance of the within-step kernel integrals.
pub const KERNEL_TOL: f64 = 1e-12;
const KERNEL_DEPTH: u32 = 40;

/// One scalar mode with rate `b(t) = theta(t) lambda + k(t) + shift`.
#[derive(Debug, Clone)]
pub struct OuMode {
    pub lambda: f64,
    pub q: f64,
    pub theta: TimeFn,
    pub reaction: TimeFn,
    pub shift: f64,
}

impl OuMode {
    pub fn new(lambda: f64, q: f64, theta: TimeFn, reaction: TimeFn) -> Self {
        OuMode { lambda, q, theta, reaction, shift: 0.0 }
    }

    /// Mode `(i, j)` of a spectral family; `q` is zero for modes without noise.
    pub fn of_family(fam: &OperatorFamily<f64>, spec: Option<&NoiseSpec>, i: usize, j: usize) -> Result<Self> {
        let s = fam.spectral_data().ok_or_else(|| Error::BackendMismatch { expected: "spectral".into(), got: "fem".into() })?;
        if i >= s.n1 || j >= s.n2 {
            return Err(Error::OutOfRange(format!("mode ({i}, {j}) outside {} x {}", s.n1, s.n2)));
        }
        let q = match spec {
            Some(sp) if i >= 1 && j >= 1 && i <= sp.modes().0 && j <= sp.modes().1 => sp.q(i, j)?,
            _ => 0.0,
        };
        Ok(OuMode {
            lambda: s.lambda[s.index(i, j)],
            q,
            theta: fam.theta().clone(),
            reaction: fam.reaction().clone(),
            shift: fam.garding_shift(),
        })
    }

    #[inline]
    pub fn rate(&self, t: f64) -> f64 {
        self.theta.eval(t) * self.lambda + self.reaction.eval(t) + self.shift
    }

    /// `∫_a^c b(s) ds`.
    #[inline]
    pub fn rate_integral(&self, a: f64, c: f64) -> f64 {
        self.lambda * self.theta.integral(a, c) + self.reaction.integral(a, c) + self.shift * (c - a)
    }
}

/// Decay `exp(-∫ b)` and conditional variance of one exact step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMoments {
    pub decay: f64,
    pub variance: f64,
}

/// Kernel integrals of one step: `decay = g(a)`, `mean = ∫ g`, `square = ∫ g^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMoments {
    pub decay: f64,
    pub mean: f64,
    pub square: f64,
}

impl KernelMoments {
    /// Coefficients `(c / dt, sqrt(V - c^2 / dt))` of the conditional
    /// construction, `V` and `c` taken without the `q` weight.
    #[inline]
    pub fn coupling(&self, dt: f64) -> (f64, f64) {
        let a = self.mean / dt;
        let rest = (self.square - self.mean * a).max(0.0);
        (a, rest.sqrt())
    }
}

pub fn kernel_moments(mode: &OuMode, a: f64, c: f64) -> Result<KernelMoments> {
    if !(c > a) {
        return config(format!("step interval [{a}, {c}] is empty"));
    }
    let g = |s: f64| (-mode.rate_integral(s, c)).exp();
    let mean = adaptive_simpson(g, a, c, KERNEL_TOL, KERNEL_DEPTH)?;
    let square = adaptive_simpson(|s| g(s) * g(s), a, c, KERNEL_TOL, KERNEL_DEPTH)?;
    Ok(KernelMoments { decay: g(a), mean, square })
}

/// Moments of the exact step `[a, c]`: `X(c) = decay X(a) + sqrt(variance) R`.
pub fn ou_step_moments(mode: &OuMode, a: f64, c: f64) -> Result<StepMoments> {
    if !(c > a) {
        return config(format!("step interval [{a}, {c}] is empty"));
    }
    let decay = (-mode.rate_integral(a, c)).exp();
    let sq = adaptive_simpson(|s| (-2.0 * mode.rate_integral(s, c)).exp(), a, c, KERNEL_TOL, KERNEL_DEPTH)?;
    Ok(StepMoments { decay, variance: mode.q * sq })
}

/// `Var X(t)` for `X(0) = 0` by one quadrature over `[0, t]`.
pub fn whole_interval_variance(mode: &OuMode, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let sq = adaptive_simpson(|s| (-2.0 * mode.rate_integral(s, t)).exp(), 0.0, t, KERNEL_TOL * 1e-2, 50)?;
    Ok(mode.q * sq)
}

/// `Var X(t)` for `X(0) = 0` by chaining `steps` exact steps.
pub fn chained_variance(mode: &OuMode, t: f64, steps: usize) -> Result<f64> {
    let dt = t / steps as f64;
    let mut v = 0.0;
    for m in 0..steps {
        let s = ou_step_moments(mode, m as f64 * dt, (m + 1) as f64 * dt)?;
        v = s.decay * s.decay * v + s.variance;
    }
    Ok(v)
}

/// Standalone exact trajectory `X_0, ..., X_M` of every spectral mode with
/// independent normals from the `(seed, i, j)` streams.
pub fn ou_exact_path(
    fam: &OperatorFamily<f64>,
    spec: &NoiseSpec,
    initial: &GridFunction<f64>,
    steps: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<GridFunction<f64>>> {
    fam.check(initial)?;
    if steps < 1 || !(dt > 0.0) {
        return config(format!("need steps >= 1 and dt > 0, got {steps}, {dt}"));
    }
    let s = fam.spectral_data().ok_or_else(|| Error::BackendMismatch { expected: "spectral".into(), got: "fem".into() })?;
    let mut out = vec![initial.clone(); steps + 1];
    for i in 0..s.n1 {
        for j in 0..s.n2 {
            let mode = OuMode::of_family(fam, Some(spec), i, j)?;
            let mut rng = mode_stream(seed, Purpose::OuExact, i, j);
            let k = s.index(i, j);
            let mut x = initial.values[k];
            for m in 0..steps {
                let st = ou_step_moments(&mode, m as f64 * dt, (m + 1) as f64 * dt)?;
                let r: f64 = rng.sample(StandardNormal);
                x = st.decay * x + st.variance.sqrt() * r;
                out[m + 1].values[k] = x;
            }
        }
    }
    Ok(out)
}

/// Exact step driven by the increment `dbeta` of the same path.
#[inline]
pub fn coupled_step(x: f64, sqrt_q: f64, k: &KernelMoments, coupling: (f64, f64), dbeta: f64, z: f64) -> f64 {
    k.decay * x + sqrt_q * (coupling.0 * dbeta + coupling.1 * z)
}

/// Exact final state and scheme final states on one shared fine path.
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub exact: GridFunction<f64>,
    /// `(coarsening factor, scheme final state)` in the order requested.
    pub schemes: Vec<(usize, GridFunction<f64>)>,
}

/// Runs the exact OU recurrence at `fine_steps` and the scheme at each
/// `fine_steps / factor` on the coarsened path, all from `path_seed`.
pub fn coupled_exact_vs_scheme(
    fam: &OperatorFamily<f64>,
    spec: Arc<NoiseSpec>,
    cfg: &SchemeConfig<f64>,
    fine_steps: usize,
    factors: &[usize],
    path_seed: u64,
) -> Result<CoupledRun> {
    let s = fam.spectral_data().ok_or_else(|| Error::BackendMismatch { expected: "spectral".into(), got: "fem".into() })?;
    let dt = cfg.horizon / fine_steps as f64;
    let path = NoisePath::sample(Arc::clone(&spec), fine_steps, dt, path_seed)?;
    let initial = cfg.initial.discretize(fam)?;
    let mut exact = initial.clone();
    for i in 0..s.n1 {
        for j in 0..s.n2 {
            let mode = OuMode::of_family(fam, Some(&spec), i, j)?;
            let noisy = mode.q > 0.0;
            let mut resid = mode_stream(path_seed, Purpose::Residual, i, j);
            let k = s.index(i, j);
            let mut x = initial.values[k];
            for m in 0..fine_steps {
                let km = kernel_moments(&mode, m as f64 * dt, (m + 1) as f64 * dt)?;
                if noisy {
                    let z: f64 = resid.sample(StandardNormal);
                    x = coupled_step(x, mode.q.sqrt(), &km, km.coupling(dt), path.increment(m, i, j)?, z);
                } else {
                    x *= km.decay;
                }
            }
            exact.values[k] = x;
        }
    }
    let mut schemes = Vec::with_capacity(factors.len());
    for &f in factors {
        let coarse = path.coarsen(f)?;
        let c = SchemeConfig { steps: coarse.steps(), ..cfg.clone() };
        schemes.push((f, integrate(fam, &c, &coarse, Record::FinalOnly)?.final_state));
    }
    Ok(CoupledRun { exact, schemes })
}

/// Scheme run on the finest path, used as truth for the multiplicative problem.
pub fn fine_reference<T: crate::scalar::Scalar>(fam: &OperatorFamily<T>, cfg: &SchemeConfig<T>, path: &NoisePath) -> Result<GridFunction<T>> {
    Ok(integrate(fam, cfg, path, Record::FinalOnly)?.final_state)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::coeff::VectorField;
    use crate::operators::{build_fem_family, build_spectral_family, BoundarySpec, FemFamilySpec, Rectangle, TimeCoefficients};
    use crate::scheme::{Diffusion, Drift, InitialData};

    fn builtin(lambda: f64) -> OuMode {
        OuMode::new(lambda, 1.0, TimeFn::decaying_diffusion(), TimeFn::constant(1.0))
    }

    #[test]
    fn constant_rate_closed_form() {
        let m = OuMode::new(1.0, 0.3, TimeFn::constant(2.0), TimeFn::constant(0.5));
        let b: f64 = 2.5;
        let st = ou_step_moments(&m, 0.2, 0.45).unwrap();
        let d: f64 = 0.25;
        assert!((st.decay - (-b * d).exp()).abs() < 1e-15);
        assert!((st.variance - 0.3 * (1.0 - (-2.0 * b * d).exp()) / (2.0 * b)).abs() < 1e-13);
    }

    #[test]
    fn builtin_rate_integral() {
        let m = builtin(PI * PI);
        let closed = m.rate_integral(0.0, 1.0);
        let want = PI * PI / 10.0 * (2.0 - (-1f64).exp()) + 1.0;
        assert!((closed - want).abs() < 1e-13);
        assert!((closed - 2.61083).abs() < 1e-5);
        assert!(((-closed).exp() - 0.0734729).abs() < 1e-7);
        for lambda in [0.0, PI * PI, 8.0 * PI * PI] {
            let m = builtin(lambda);
            for &(a, c) in &[(0.0, 1.0), (0.5, 0.51), (1.3, 5.0)] {
                let quad = adaptive_simpson(|s| m.rate(s), a, c, 1e-13, 50).unwrap();
                assert!((m.rate_integral(a, c) - quad).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn small_step_limit() {
        let m = builtin(PI * PI);
        let d = 1e-6;
        let st = ou_step_moments(&m, 0.3, 0.3 + d).unwrap();
        assert!((st.decay - 1.0).abs() < 1e-4);
        assert!((st.variance / d - 1.0).abs() < 1e-4);
    }

    #[test]
    fn variance_increases_with_step() {
        let m = builtin(2.0 * PI * PI);
        let mut prev = 0.0;
        for k in 1..20 {
            let v = ou_step_moments(&m, 0.1, 0.1 + 0.05 * k as f64).unwrap().variance;
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn chained_matches_direct() {
        for lambda in [0.0, PI * PI, 8.0 * PI * PI] {
            for t in [0.25, 1.0] {
                let m = builtin(lambda);
                let chained = chained_variance(&m, t, 64).unwrap();
                let direct = whole_interval_variance(&m, t).unwrap();
                assert!(((chained - direct) / direct).abs() <= 1e-8, "{lambda} {t}: {chained} vs {direct}");
            }
        }
    }

    #[test]
    fn coupling_has_the_right_law() {
        let m = builtin(5.0 * PI * PI);
        let (a, c) = (0.2, 0.45);
        let k = kernel_moments(&m, a, c).unwrap();
        let st = ou_step_moments(&m, a, c).unwrap();
        let dt = c - a;
        let (ca, cb) = k.coupling(dt);
        // Var I = ca^2 dt + cb^2 and Cov(I, dbeta) = ca dt
        assert!((ca * ca * dt + cb * cb - st.variance).abs() < 1e-12);
        assert!((ca * dt - k.mean).abs() < 1e-15);
        assert!((k.decay - st.decay).abs() < 1e-15);
    }

    #[test]
    fn scalar_example() {
        // b = 1, one step of 0.1: exact e^{-0.1}, scheme 1/1.1
        let fam = build_spectral_family::<f64>(Rectangle::unit(), (2, 2), TimeCoefficients::new(TimeFn::constant(1.0), TimeFn::constant(1.0), 1.0)).unwrap();
        let spec = Arc::new(NoiseSpec::new(1.0, 0.001, (1, 1), Rectangle::unit()).unwrap());
        let init = fam.project(&|_, _| 1.0);
        assert!((init.values[0] - 1.0).abs() < 1e-14);
        let cfg = SchemeConfig::new(0.1, 1, Drift::Zero, Diffusion::Additive, InitialData::Discrete(init)).unwrap();
        // the single (0, 0) mode carries no noise
        let run = coupled_exact_vs_scheme(&fam, spec, &cfg, 1, &[1], 5).unwrap();
        let e = run.exact.values[0];
        let s = run.schemes[0].1.values[0];
        assert!((e - 0.904837).abs() < 1e-6);
        assert!((s - 0.909091).abs() < 1e-6);
        assert!(((s - e) - 0.004254).abs() < 1e-6);
    }

    #[test]
    fn exact_path_deterministic_and_q_zero_decays() {
        let fam = build_spectral_family::<f64>(Rectangle::unit(), (3, 3), TimeCoefficients::new(TimeFn::decaying_diffusion(), TimeFn::constant(1.0), 1.0)).unwrap();
        let spec = NoiseSpec::new(1.0, 0.001, (2, 2), Rectangle::unit()).unwrap();
        let init = fam.project(&|x, y| (PI * x).cos() + y);
        let a = ou_exact_path(&fam, &spec, &init, 5, 0.1, 1).unwrap();
        let b = ou_exact_path(&fam, &spec, &init, 5, 0.1, 1).unwrap();
        assert_eq!(a, b);
        // (1, 0) carries no noise
        let k = fam.spectral_data().unwrap().index(1, 0);
        let mode = OuMode::of_family(&fam, Some(&spec), 1, 0).unwrap();
        assert_eq!(mode.q, 0.0);
        let want = init.values[k] * (-mode.rate_integral(0.0, 0.5)).exp();
        assert!((a[5].values[k] - want).abs() < 1e-14);
    }

    #[test]
    fn exact_one_step_variance_monte_carlo() {
        let fam = build_spectral_family::<f64>(Rectangle::unit(), (2, 2), TimeCoefficients::new(TimeFn::decaying_diffusion(), TimeFn::constant(1.0), 1.0)).unwrap();
        let spec = NoiseSpec::new(1.0, 0.001, (1, 1), Rectangle::unit()).unwrap();
        let init = fam.zeros();
        let mode = OuMode::of_family(&fam, Some(&spec), 1, 1).unwrap();
        let want = ou_step_moments(&mode, 0.0, 0.1).unwrap().variance;
        let n = 100_000;
        let k = fam.spectral_data().unwrap().index(1, 1);
        let (mut s1, mut s2) = (0.0, 0.0);
        for seed in 0..n {
            let x = ou_exact_path(&fam, &spec, &init, 1, 0.1, seed).unwrap()[1].values[k];
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 3.0 * (want / n as f64).sqrt());
        assert!((var - want).abs() < 3.0 * want * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn deterministic_error_has_rate_one() {
        let fam = build_spectral_family::<f64>(Rectangle::unit(), (3, 3), TimeCoefficients::new(TimeFn::decaying_diffusion(), TimeFn::constant(1.0), 1.0)).unwrap();
        let init = fam.project(&|x, y| (PI * x).cos() * (PI * y).cos() + 1.0);
        let cfg = SchemeConfig::new(1.0, 1, Drift::Zero, Diffusion::Additive, InitialData::Discrete(init)).unwrap();
        // noise effectively off: q_{i,j} <= 2^{-60}
        let quiet = Arc::new(NoiseSpec::new(60.0, 0.001, (2, 2), Rectangle::unit()).unwrap());
        let run = coupled_exact_vs_scheme(&fam, quiet, &cfg, 1024, &[16, 32, 64, 128], 3).unwrap();
        let errs: Vec<f64> = run.schemes.iter().map(|(_, s)| fam.norm(&s.axpy(-1.0, &run.exact)).unwrap()).collect();
        for w in errs.windows(2) {
            let rate = (w[1] / w[0]).ln() / 2f64.ln();
            assert!((0.85..1.15).contains(&rate), "rate {rate} from {errs:?}");
        }
    }

    #[test]
    fn fine_reference_is_integrate() {
        let fam = build_fem_family::<f64>(FemFamilySpec {
            domain: Rectangle::unit(),
            cells: (3, 3),
            coeffs: TimeCoefficients::new(TimeFn::one_plus_decay(), TimeFn::constant(0.0), 1.0),
            advection: Some(VectorField::constant(1.0, 0.0)),
            bc: BoundarySpec::dirichlet_left(1.0),
            garding_shift: 0.0,
        })
        .unwrap();
        let spec = Arc::new(NoiseSpec::new(1.5, 0.001, (3, 3), Rectangle::unit()).unwrap());
        let cfg = SchemeConfig::new(1.0, 16, Drift::Saturating, Diffusion::linear_multiplicative(), InitialData::Constant(1.0)).unwrap();
        let path = NoisePath::sample(spec, 16, 1.0 / 16.0, 2).unwrap();
        let r = fine_reference(&fam, &cfg, &path).unwrap();
        assert_eq!(r, integrate(&fam, &cfg, &path, Record::FinalOnly).unwrap().final_state);
    }
}
