use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use spde_core::harness::{emit, run_strong_error, ErrorReport, ExperimentConfig, Format};
use spde_core::lemma_lab::sweep::{run_sweep, summarize, write_csv, LemmaId, SweepConfig};
use spde_core::noise::NoiseSpec;
use spde_core::reference::{chained_variance, ou_step_moments, whole_interval_variance, OuMode};
use spde_core::rng::{mode_stream, sample_seed, Purpose};
use spde_core::{Error, Rectangle, Result, TimeFn};

use crate::settings::{FileSettings, List};
use crate::{AdditiveArgs, CommonConvergence, LemmaArgs, MultiplicativeArgs, OuArgs};

const CONVERGENCE_KEYS: [&str; 9] = ["beta", "delta", "samples", "seed", "t-final", "ladder", "fine-exponent", "out", "jobs"];

/// Chained and direct OU variances must agree to this relative tolerance.
const OU_TOLERANCE: f64 = 1e-8;

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("SPDE_SEED") {
        Ok(v) => v.trim().parse().map(Some).map_err(|e| Error::Config(format!("SPDE_SEED={v:?}: {e}"))),
        Err(_) => Ok(None),
    }
}

fn seed(flag: Option<u64>, file: &FileSettings) -> Result<u64> {
    Ok(match file.pick(flag, "seed")? {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    })
}

fn convergence_config(
    c: &CommonConvergence,
    file: &FileSettings,
    mut base: ExperimentConfig,
    resolution: Option<usize>,
) -> Result<ExperimentConfig> {
    base.beta = file.required(c.beta, "beta")?;
    base.delta = file.pick(c.delta, "delta")?.unwrap_or(base.delta);
    base.samples = file.pick(c.samples, "samples")?.unwrap_or(base.samples);
    base.seed = seed(c.seed, file)?;
    base.horizon = file.pick(c.t_final, "t-final")?.unwrap_or(base.horizon);
    base.ladder = file.pick(c.ladder.clone(), "ladder")?.map(|l| l.0).unwrap_or(base.ladder);
    base.fine_exponent = file.pick(c.fine_exponent, "fine-exponent")?.unwrap_or(base.fine_exponent);
    base.resolution = resolution.unwrap_or(base.resolution);
    base.output = Some(file.pick(c.out.clone(), "out")?.unwrap_or_else(|| PathBuf::from(".")));
    base.validate()?;
    Ok(base)
}

fn finish_convergence(cfg: &ExperimentConfig) -> Result<()> {
    let report = run_strong_error(cfg)?;
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let csv = dir.join(cfg.file_name(Format::Csv));
    let json = dir.join(cfg.file_name(Format::Json));
    emit(&report, Format::Csv, &csv)?;
    emit(&report, Format::Json, &json)?;
    print_report(&report, &mut std::io::stdout().lock())?;
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn print_report(r: &ErrorReport, out: &mut impl Write) -> Result<()> {
    let c = &r.config;
    writeln!(out, "{} problem, beta = {}, delta = {}, {} samples, seed {}", c.problem, c.beta, c.delta, c.samples, c.seed)?;
    writeln!(out, "{:>12} {:>8} {:>14} {:>12}", "dt", "steps", "rms_error", "std_error")?;
    for p in &r.points {
        writeln!(out, "{:>12.6e} {:>8} {:>14.6e} {:>12.3e}", p.dt, p.steps, p.rms_error, p.std_error)?;
    }
    match &r.rate {
        Some(f) => writeln!(out, "fitted rate {:.4} (log residual {:.3e}, {} points)", f.slope, f.residual, f.points_used)?,
        None => writeln!(out, "fitted rate: n/a")?,
    }
    if let Some(rc) = &r.reference_check {
        writeln!(
            out,
            "reference check at dt = {}: error {:.6e} (fine ref) vs {:.6e} (half ref), change {:.2}%",
            rc.dt,
            rc.error_fine,
            rc.error_half,
            100.0 * rc.relative_change()
        )?;
    }
    for w in &r.warnings {
        writeln!(out, "warning: {w}")?;
    }
    Ok(())
}

pub fn additive(a: &AdditiveArgs, config: Option<&Path>) -> Result<()> {
    let mut keys = CONVERGENCE_KEYS.to_vec();
    keys.push("modes");
    let file = FileSettings::load(config, &keys)?;
    let modes = file.pick(a.modes, "modes")?;
    let cfg = convergence_config(&a.common, &file, ExperimentConfig::additive(0.0), modes)?;
    finish_convergence(&cfg)
}

pub fn multiplicative(a: &MultiplicativeArgs, config: Option<&Path>) -> Result<()> {
    let mut keys = CONVERGENCE_KEYS.to_vec();
    keys.push("cells");
    let file = FileSettings::load(config, &keys)?;
    let cells = file.pick(a.cells, "cells")?;
    let cfg = convergence_config(&a.common, &file, ExperimentConfig::multiplicative(0.0), cells)?;
    finish_convergence(&cfg)
}

pub fn lemma_lab(a: &LemmaArgs, config: Option<&Path>) -> Result<()> {
    let file = FileSettings::load(config, &["lemma", "dim", "advection", "dt-exponents", "out", "jobs"])?;
    let defaults = SweepConfig::default();
    let lemma = file.pick(a.lemma.clone(), "lemma")?.unwrap_or_else(|| "all".into());
    let lemmas = match lemma.as_str() {
        "all" => LemmaId::ALL.to_vec(),
        n => LemmaId::for_lemma(n.parse().map_err(|_| Error::Config(format!("--lemma must be 6 to 10 or all, got {n:?}")))?)?,
    };
    let cfg = SweepConfig {
        dims: file.pick(a.dim.clone(), "dim")?.map(|l: List<usize>| l.0).unwrap_or(defaults.dims),
        advections: file.pick(a.advection.clone(), "advection")?.map(|l: List<f64>| l.0).unwrap_or(defaults.advections),
        dt_exponents: file.pick(a.dt_exponents.clone(), "dt-exponents")?.map(|l: List<u32>| l.0).unwrap_or(defaults.dt_exponents),
        lemmas,
    };
    let out_path = file.pick(a.out.clone(), "out")?;
    let rows = run_sweep(&cfg)?;
    if let Some(p) = &out_path {
        let mut w = BufWriter::new(File::create(p)?);
        write_csv(&rows, &mut w)?;
        w.flush()?;
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<22} {:>4} {:>6} {:<16} {:>12} {:>12} {:>8}", "quantity", "dim", "nu", "params", "min", "max", "max/min")?;
    for s in summarize(&rows) {
        writeln!(
            out,
            "{:<22} {:>4} {:>6} {:<16} {:>12.6e} {:>12.6e} {:>8.4}",
            s.lemma.name(),
            s.dim,
            s.advection,
            s.params,
            s.min,
            s.max,
            s.ratio()
        )?;
    }
    if let Some(p) = out_path {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

pub fn ou_check(a: &OuArgs, config: Option<&Path>) -> Result<()> {
    let file = FileSettings::load(
        config,
        &["mode-i", "mode-j", "samples", "seed", "beta", "delta", "t-final", "steps", "jobs"],
    )?;
    let i = file.required(a.mode_i, "mode-i")?;
    let j = file.required(a.mode_j, "mode-j")?;
    let samples = file.pick(a.samples, "samples")?.unwrap_or(10_000);
    let master = seed(a.seed, &file)?;
    let beta = file.pick(a.beta, "beta")?.unwrap_or(1.0);
    let delta = file.pick(a.delta, "delta")?.unwrap_or(0.001);
    let t = file.pick(a.t_final, "t-final")?.unwrap_or(1.0);
    let steps = file.pick(a.steps, "steps")?.unwrap_or(64);
    if i < 1 || j < 1 {
        return Err(Error::Config(format!("noise modes start at 1, got ({i}, {j})")));
    }
    if samples < 2 || steps < 1 || !(t > 0.0) {
        return Err(Error::Config("need samples >= 2, steps >= 1 and t-final > 0".into()));
    }
    let spec = NoiseSpec::new(beta, delta, (i, j), Rectangle::unit())?;
    let q = spec.q(i, j)?;
    let lambda = std::f64::consts::PI.powi(2) * (i * i + j * j) as f64;
    let mode = OuMode::new(lambda, q, TimeFn::decaying_diffusion(), TimeFn::constant(1.0));
    let chained = chained_variance(&mode, t, steps)?;
    let direct = whole_interval_variance(&mode, t)?;
    let rel = (chained - direct).abs() / direct;

    let dt = t / steps as f64;
    let moments: Vec<_> = (0..steps).map(|m| ou_step_moments(&mode, m as f64 * dt, (m + 1) as f64 * dt)).collect::<Result<_>>()?;
    let mut finals = Vec::with_capacity(samples);
    for s in 0..samples {
        let mut rng = mode_stream(sample_seed(master, s as u64), Purpose::OuExact, i, j);
        let mut x = 0.0;
        for st in &moments {
            let r: f64 = rng.sample(StandardNormal);
            x = st.decay * x + st.variance.sqrt() * r;
        }
        finals.push(x);
    }
    let n = samples as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let mc_var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mc_se = direct * (2.0 / (n - 1.0)).sqrt();

    let mut out = std::io::stdout().lock();
    writeln!(out, "mode ({i}, {j}): lambda = {lambda:.6}, q = {q:.6e}, t = {t}, {steps} steps")?;
    writeln!(out, "chained variance  {chained:.12e}")?;
    writeln!(out, "direct variance   {direct:.12e}")?;
    writeln!(out, "relative diff     {rel:.3e} (tolerance {OU_TOLERANCE:e})")?;
    writeln!(out, "sample variance   {mc_var:.6e} +- {mc_se:.2e} ({samples} samples, z = {:.2})", (mc_var - direct) / mc_se)?;
    if rel > OU_TOLERANCE {
        return Err(Error::Numerical(format!("chained and direct variances differ by {rel:e}")));
    }
    Ok(())
}
