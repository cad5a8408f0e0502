//! Lockstep Monte Carlo on a general operator family.
//!
//! All samples advance through the fine steps together, so every resolvent
//! factorization `(level, step)` is built once and shared. Each sample owns
//! its increment streams and a carry stack that forms the pairwise sums of
//! its fine increments; a level with `2^e` steps consumes the sums at depth
//! `fine - e`. Depth 0 is the reference and depth 1 the half-resolution
//! reference used for the refinement check.

use std::sync::Arc;

use rayon::prelude::*;

use super::{ExperimentConfig, ReferenceCheck, SampleErrors};
use crate::coeff::{TimeFn, VectorField};
use crate::error::{Error, Result};
use crate::noise::{weighted_field, IncrementStreams, NoiseSpec};
use crate::operators::{
    build_fem_family, BoundarySpec, FemFamilySpec, GridFunction, OperatorFamily, Rectangle, ResolventFactor,
    TimeCoefficients,
};
use crate::scheme::{step_with, Diffusion, Drift, InitialData, SchemeConfig};

/// Fem family of the multiplicative experiment: `(1 + e^{-t})(-Laplace + q . grad)`
/// with `q = (1, 0)`, `X = 1` on `x = 0` and Neumann elsewhere, unit square.
pub fn multiplicative_family(cells: usize, horizon: f64) -> Result<OperatorFamily<f64>> {
    build_fem_family(FemFamilySpec {
        domain: Rectangle::unit(),
        cells: (cells, cells),
        coeffs: TimeCoefficients::new(TimeFn::one_plus_decay(), TimeFn::constant(0.0), horizon),
        advection: Some(VectorField::constant(1.0, 0.0)),
        bc: BoundarySpec::dirichlet_left(1.0),
        garding_shift: 0.0,
    })
}

/// Scheme of the multiplicative experiment: saturating drift, `b(x, u) = u`, `X_0 = 1`.
pub fn multiplicative_scheme(horizon: f64, steps: usize) -> Result<SchemeConfig<f64>> {
    SchemeConfig::new(horizon, steps, Drift::Saturating, Diffusion::linear_multiplicative(), InitialData::Constant(1.0))
}

/// Final states of every tracked depth, per sample.
#[derive(Debug, Clone)]
pub struct LockstepOutput {
    /// Squared errors against the depth-0 reference, one entry per requested depth.
    pub errors: Vec<SampleErrors>,
    /// Squared errors of the coarsest requested depth against the depth-1 reference.
    pub half_errors: Vec<f64>,
    pub reference_check: Option<ReferenceCheck>,
}

struct SampleState {
    streams: IncrementStreams,
    /// `carry[d]` holds the first half of a pending depth-`d + 1` sum.
    carry: Vec<Option<Vec<f64>>>,
    /// State per tracked depth.
    states: Vec<GridFunction<f64>>,
    fine: Vec<f64>,
}

/// Runs the scheme of `template` on `fam` at depths `depths` (plus 0 and 1)
/// for every seed. Increments are multiplied by `noise_scale`.
pub fn lockstep_sample_errors(
    fam: &OperatorFamily<f64>,
    template: &SchemeConfig<f64>,
    spec: &Arc<NoiseSpec>,
    fine_exponent: u32,
    depths: &[u32],
    seeds: &[u64],
    noise_scale: f64,
) -> Result<LockstepOutput> {
    let fine_steps = 1usize << fine_exponent;
    let horizon = template.horizon;
    let dt = horizon / fine_steps as f64;
    // tracked[0] = reference, tracked[1] = half reference, then requested depths
    let mut tracked = vec![0u32, 1];
    tracked.extend_from_slice(depths);
    let max_depth = tracked.iter().copied().max().unwrap_or(0) as usize;
    let nm = spec.num_modes();
    let x0 = template.initial.discretize(fam)?;

    let mut samples: Vec<SampleState> = seeds
        .iter()
        .map(|&seed| SampleState {
            streams: IncrementStreams::new(spec, dt, seed),
            carry: vec![None; max_depth],
            states: vec![x0.clone(); tracked.len()],
            fine: vec![0.0; nm],
        })
        .collect();

    for mf in 0..fine_steps {
        // depths whose step completes after fine step mf, with their shared factors
        let mut due: Vec<(usize, Arc<ResolventFactor<f64>>)> = Vec::new();
        let mut built: Vec<(u32, Arc<ResolventFactor<f64>>)> = Vec::new();
        for (slot, &d) in tracked.iter().enumerate() {
            if (mf + 1) % (1 << d) == 0 {
                let factor = match built.iter().find(|(bd, _)| *bd == d) {
                    Some((_, f)) => Arc::clone(f),
                    None => {
                        let level_dt = dt * (1 << d) as f64;
                        let m = (mf + 1) / (1 << d) - 1;
                        let f = Arc::new(fam.factorize(m as f64 * level_dt, level_dt)?);
                        built.push((d, Arc::clone(&f)));
                        f
                    }
                };
                due.push((slot, factor));
            }
        }
        samples.par_iter_mut().zip(seeds.par_iter()).enumerate().try_for_each(|(sample, (st, &seed))| {
            advance(fam, template, spec, st, &tracked, &due, noise_scale).map_err(|e| Error::Sample {
                sample,
                seed,
                source: Box::new(e),
            })
        })?;
    }

    let mut errors = Vec::with_capacity(seeds.len());
    let mut half_errors = Vec::with_capacity(seeds.len());
    let coarsest = (2..tracked.len()).max_by_key(|&s| tracked[s]);
    for st in &samples {
        let reference = &st.states[0];
        let mut row = Vec::with_capacity(depths.len());
        for s in 2..tracked.len() {
            row.push(fam.norm_sq(&st.states[s].axpy(-1.0, reference))?);
        }
        if let Some(c) = coarsest {
            half_errors.push(fam.norm_sq(&st.states[c].axpy(-1.0, &st.states[1]))?);
        }
        errors.push(row);
    }
    let reference_check = coarsest.map(|c| {
        let n = seeds.len() as f64;
        let fine: f64 = errors.iter().map(|r| r[c - 2]).sum::<f64>() / n;
        let half: f64 = half_errors.iter().sum::<f64>() / n;
        ReferenceCheck {
            dt: dt * (1usize << tracked[c]) as f64,
            error_fine: fine.sqrt(),
            error_half: half.sqrt(),
        }
    });
    Ok(LockstepOutput { errors, half_errors, reference_check })
}

fn advance(
    fam: &OperatorFamily<f64>,
    template: &SchemeConfig<f64>,
    spec: &NoiseSpec,
    st: &mut SampleState,
    tracked: &[u32],
    due: &[(usize, Arc<ResolventFactor<f64>>)],
    noise_scale: f64,
) -> Result<()> {
    st.streams.next_into(&mut st.fine);
    if noise_scale != 1.0 {
        for v in &mut st.fine {
            *v *= noise_scale;
        }
    }
    // sums[d] = increment completed at depth d by this fine step
    let mut sums: Vec<Option<Vec<f64>>> = vec![None; st.carry.len() + 1];
    sums[0] = Some(st.fine.clone());
    for d in 0..st.carry.len() {
        let Some(cur) = sums[d].as_ref() else { break };
        match st.carry[d].take() {
            None => {
                st.carry[d] = Some(cur.clone());
                break;
            }
            Some(mut first) => {
                for (a, b) in first.iter_mut().zip(cur) {
                    *a += *b;
                }
                sums[d + 1] = Some(first);
            }
        }
    }
    for (slot, factor) in due {
        let inc = sums[tracked[*slot] as usize].as_ref().ok_or_else(|| Error::Internal("missing level increment".into()))?;
        let w = weighted_field(spec, fam, inc)?;
        let next = step_with(fam, factor, &st.states[*slot], template, &w)?;
        if let Some(bad) = next.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite state at node {bad} after t = {}", factor.key().0 + factor.key().1)));
        }
        st.states[*slot] = next;
    }
    Ok(())
}

/// Multiplicative experiment on `cfg.resolution` cells per axis, noise modes
/// `1..=cells` per axis.
pub(super) fn multiplicative(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<LockstepOutput> {
    let n = cfg.resolution;
    let fam = multiplicative_family(n, cfg.horizon)?;
    let spec = Arc::new(NoiseSpec::new(cfg.beta, cfg.delta, (n, n), Rectangle::unit())?);
    let template = multiplicative_scheme(cfg.horizon, 1 << cfg.fine_exponent)?;
    let depths: Vec<u32> = cfg.sorted_ladder().iter().map(|&e| cfg.fine_exponent - e).collect();
    lockstep_sample_errors(&fam, &template, &spec, cfg.fine_exponent, &depths, seeds, 1.0)
}
