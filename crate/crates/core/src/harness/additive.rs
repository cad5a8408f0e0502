//! Additive experiment, one scalar recurrence per noise mode.
//!
//! With `X_0 = 0` and zero drift the spectral scheme and the exact solution
//! decouple into independent modes, and modes without noise stay zero in
//! both. Each mode is stepped exactly on the fine grid (conditional
//! construction of the stochastic convolution from the fine increment) and
//! by the implicit scheme at every ladder level on pairwise-summed
//! increments. The arithmetic matches `integrate` on `NoisePath::coarsen`
//! operation for operation.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{ExperimentConfig, SampleErrors};
use crate::coeff::TimeFn;
use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use crate::operators::{build_spectral_family, OperatorFamily, Rectangle, TimeCoefficients};
use crate::reference::{kernel_moments, OuMode};
use crate::rng::{mode_stream, Purpose};

/// Spectral family of the additive experiment: `D(t) = (1 + e^{-t}) / 10`,
/// `k = 1`, unit square, operator modes `0..=n` per axis.
pub fn additive_family(noise_modes: usize, horizon: f64) -> Result<OperatorFamily<f64>> {
    build_spectral_family(
        Rectangle::unit(),
        (noise_modes + 1, noise_modes + 1),
        TimeCoefficients::new(TimeFn::decaying_diffusion(), TimeFn::constant(1.0), horizon),
    )
}

/// Per-step exact coefficients `(decay, c / dt, sqrt(V - c^2 / dt))`.
fn exact_coefficients(mode: &OuMode, fine_steps: usize, dt: f64) -> Result<Vec<[f64; 3]>> {
    (0..fine_steps)
        .map(|m| {
            let k = kernel_moments(mode, m as f64 * dt, (m + 1) as f64 * dt)?;
            let (a, r) = k.coupling(dt);
            Ok([k.decay, a, r])
        })
        .collect()
}

/// Resolvent multipliers of one eigenvalue at every step of a level.
fn level_multipliers(fam: &OperatorFamily<f64>, lambda: f64, steps: usize, horizon: f64) -> Vec<f64> {
    let dt = horizon / steps as f64;
    (0..steps)
        .map(|m| {
            let t = m as f64 * dt;
            let mu = fam.theta().eval(t) * lambda + fam.shift_at(t);
            1.0 / (1.0 + dt * mu)
        })
        .collect()
}

/// Squared L2 errors (Parseval sum over modes) per sample and ladder level.
pub fn additive_sample_errors(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<SampleErrors>> {
    let n = cfg.resolution;
    let fam = additive_family(n, cfg.horizon)?;
    let spec = Arc::new(NoiseSpec::new(cfg.beta, cfg.delta, (n, n), Rectangle::unit())?);
    let s = fam.spectral_data().expect("spectral family");
    let fine_steps = 1usize << cfg.fine_exponent;
    let dt = cfg.horizon / fine_steps as f64;
    let sqrt_dt = dt.sqrt();
    let ladder = cfg.sorted_ladder();
    let depths: Vec<u32> = ladder.iter().map(|&e| cfg.fine_exponent - e).collect();
    let max_depth = depths.iter().copied().max().unwrap_or(0);

    // modes sharing an eigenvalue share every coefficient table
    let mut groups: BTreeMap<u64, Vec<(usize, usize)>> = BTreeMap::new();
    for i in 1..=n {
        for j in 1..=n {
            groups.entry(s.lambda[s.index(i, j)].to_bits()).or_default().push((i, j));
        }
    }
    let groups: Vec<(f64, Vec<(usize, usize)>)> = groups.into_iter().map(|(b, m)| (f64::from_bits(b), m)).collect();

    let nl = ladder.len();
    let partial: Vec<Vec<f64>> = groups
        .par_iter()
        .map(|(lambda, modes)| -> Result<Vec<f64>> {
            let (i0, j0) = modes[0];
            let ou = OuMode::of_family(&fam, Some(&spec), i0, j0)?;
            let exact = exact_coefficients(&ou, fine_steps, dt)?;
            let mults: Vec<Vec<f64>> = ladder.iter().map(|&e| level_multipliers(&fam, *lambda, 1 << e, cfg.horizon)).collect();
            let mut out = vec![0.0; seeds.len() * nl];
            let mut incs = vec![0.0; fine_steps];
            for (sample, &seed) in seeds.iter().enumerate() {
                for &(i, j) in modes {
                    let sqrt_q = spec.q(i, j)?.sqrt();
                    let mut inc_rng = mode_stream(seed, Purpose::Increment, i, j);
                    let mut res_rng = mode_stream(seed, Purpose::Residual, i, j);
                    let mut x = 0.0;
                    for (m, c) in exact.iter().enumerate() {
                        let zi: f64 = inc_rng.sample(StandardNormal);
                        let db = sqrt_dt * zi;
                        incs[m] = db;
                        let z: f64 = res_rng.sample(StandardNormal);
                        x = c[0] * x + sqrt_q * (c[1] * db + c[2] * z);
                    }
                    if !x.is_finite() {
                        return Err(Error::Sample {
                            sample,
                            seed,
                            source: Box::new(Error::Numerical(format!("non-finite exact value in mode ({i}, {j})"))),
                        });
                    }
                    // pairwise halving in place; after d rounds incs[..len] holds depth-d sums
                    let mut len = fine_steps;
                    for d in 1..=max_depth {
                        len /= 2;
                        for c in 0..len {
                            incs[c] = incs[2 * c] + incs[2 * c + 1];
                        }
                        for (l, &dl) in depths.iter().enumerate() {
                            if dl == d {
                                let mut y = 0.0;
                                for (w, mu) in incs[..len].iter().zip(&mults[l]) {
                                    y = (y + sqrt_q * w) * mu;
                                }
                                out[sample * nl + l] += (x - y) * (x - y);
                            }
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut per_sample = vec![vec![0.0; nl]; seeds.len()];
    for g in &partial {
        for (sample, row) in per_sample.iter_mut().enumerate() {
            for (l, v) in row.iter_mut().enumerate() {
                *v += g[sample * nl + l];
            }
        }
    }
    Ok(per_sample)
}
