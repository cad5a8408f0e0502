//! Time-step sweeps of every scaled lemma quantity over the built-in dense families.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{
    convolution_bound_check, exp_resolvent_gap_sup, product_gap, resolvent_power_sup, smoothing_sup, DataKind,
    DenseFamily, GapMode,
};
use crate::error::{config, Result};

/// Which quantity a sweep row measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum LemmaId {
    ResolventPower,
    Smoothing,
    ExpResolventGap,
    Convolution,
    ProductGapExp,
    ProductGapEvolution,
}

impl LemmaId {
    pub const ALL: [LemmaId; 6] = [
        LemmaId::ResolventPower,
        LemmaId::Smoothing,
        LemmaId::ExpResolventGap,
        LemmaId::Convolution,
        LemmaId::ProductGapExp,
        LemmaId::ProductGapEvolution,
    ];

    /// Quantities checking lemma number `n` (6 to 10).
    pub fn for_lemma(n: u32) -> Result<Vec<LemmaId>> {
        match n {
            6 => Ok(vec![LemmaId::ResolventPower]),
            7 => Ok(vec![LemmaId::Smoothing]),
            8 => Ok(vec![LemmaId::ExpResolventGap]),
            9 => Ok(vec![LemmaId::Convolution]),
            10 => Ok(vec![LemmaId::ProductGapExp, LemmaId::ProductGapEvolution]),
            other => config(format!("no sweep for lemma {other} (expected 6 to 10)")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LemmaId::ResolventPower => "resolvent_power",
            LemmaId::Smoothing => "smoothing",
            LemmaId::ExpResolventGap => "exp_resolvent_gap",
            LemmaId::Convolution => "convolution",
            LemmaId::ProductGapExp => "product_gap_exp",
            LemmaId::ProductGapEvolution => "product_gap_evolution",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    pub dims: Vec<usize>,
    pub advections: Vec<f64>,
    /// Time steps are `2^-e` for these exponents.
    pub dt_exponents: Vec<u32>,
    pub lemmas: Vec<LemmaId>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { dims: vec![8, 16], advections: vec![0.0, 1.0, 5.0], dt_exponents: (3..=10).collect(), lemmas: LemmaId::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lemma: LemmaId,
    pub dim: usize,
    pub advection: f64,
    pub dt: f64,
    pub params: String,
    pub value: f64,
}

/// Spread of one quantity across the time-step sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub lemma: LemmaId,
    pub dim: usize,
    pub advection: f64,
    pub params: String,
    pub min: f64,
    pub max: f64,
}

impl SweepSummary {
    pub fn ratio(&self) -> f64 {
        self.max / self.min
    }
}

fn family_rows(n: usize, nu: f64, e: u32, lemmas: &[LemmaId]) -> Result<Vec<SweepRow>> {
    let fam = DenseFamily::advection_diffusion(n, nu)?;
    let dt = 0.5f64.powi(e as i32);
    let steps = (fam.horizon() / dt).round() as usize;
    let mut rows = Vec::new();
    let mut push = |lemma, params: String, value| rows.push(SweepRow { lemma, dim: n, advection: nu, dt, params, value });
    let want = |id| lemmas.contains(&id);

    for alpha in [0.5, 1.0].into_iter().filter(|_| want(LemmaId::ResolventPower)) {
        push(LemmaId::ResolventPower, format!("alpha={alpha}"), resolvent_power_sup(&fam, alpha, dt)?);
    }
    for alpha in [0.5, 0.75].into_iter().filter(|_| want(LemmaId::Smoothing)) {
        push(LemmaId::Smoothing, format!("alpha={alpha}"), smoothing_sup(&fam, alpha, dt)?);
    }
    if want(LemmaId::ExpResolventGap) {
        push(LemmaId::ExpResolventGap, "a1=0.5;a2=0.5".into(), exp_resolvent_gap_sup(&fam, 0.5, 0.5, dt)?);
    }
    for (a1, a2) in [(0.5, 0.5), (0.25, 0.75)].into_iter().filter(|_| want(LemmaId::Convolution)) {
        push(LemmaId::Convolution, format!("a1={a1};a2={a2}"), convolution_bound_check(a1, a2, dt, steps)?);
    }
    let gaps = [(GapMode::ExpVsResolvent, LemmaId::ProductGapExp), (GapMode::EvolutionVsResolvent, LemmaId::ProductGapEvolution)];
    for (mode, id) in gaps.into_iter().filter(|g| want(g.1)) {
        let smooth = product_gap(&fam, mode, DataKind::Smooth, 1.0, dt)?;
        push(id, "alpha=1;smooth".into(), smooth.scaled);
        let rough = product_gap(&fam, mode, DataKind::NonSmooth, 1.0, dt)?;
        push(id, "alpha=1;nonsmooth".into(), rough.scaled);
    }
    Ok(rows)
}

/// All rows, ordered by family, then time step, then quantity.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.dims.is_empty() || cfg.advections.is_empty() || cfg.dt_exponents.is_empty() || cfg.lemmas.is_empty() {
        return config("sweep needs at least one dimension, advection, time step and lemma");
    }
    if let Some(&e) = cfg.dt_exponents.iter().find(|&&e| e > 20) {
        return config(format!("time-step exponent {e} is out of range (max 20)"));
    }
    let cells: Vec<(usize, f64, u32)> = cfg
        .dims
        .iter()
        .flat_map(|&n| cfg.advections.iter().flat_map(move |&nu| cfg.dt_exponents.iter().map(move |&e| (n, nu, e))))
        .collect();
    let chunks: Vec<Vec<SweepRow>> = cells.par_iter().map(|&(n, nu, e)| family_rows(n, nu, e, &cfg.lemmas)).collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Min and max of each quantity over the time steps.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut groups: BTreeMap<(LemmaId, usize, u64, String), (f64, f64)> = BTreeMap::new();
    for r in rows {
        let e = groups
            .entry((r.lemma, r.dim, r.advection.to_bits(), r.params.clone()))
            .or_insert((f64::INFINITY, f64::NEG_INFINITY));
        e.0 = e.0.min(r.value);
        e.1 = e.1.max(r.value);
    }
    groups
        .into_iter()
        .map(|((lemma, dim, nu, params), (min, max))| SweepSummary {
            lemma,
            dim,
            advection: f64::from_bits(nu),
            params,
            min,
            max,
        })
        .collect()
}

/// CSV with header `lemma,dim,advection,dt,params,value`.
pub fn write_csv(rows: &[SweepRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "lemma,dim,advection,dt,params,value")?;
    for r in rows {
        writeln!(out, "{},{},{},{:e},{},{:.12e}", r.lemma.name(), r.dim, r.advection, r.dt, r.params, r.value)?;
    }
    Ok(())
}
