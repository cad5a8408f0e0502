//! Monte Carlo strong-error measurement, rate fitting and report output.
//!
//! Both experiments share one fine Brownian path per sample; every ladder
//! level steps on the pairwise-summed increments of that path, so ladder
//! errors are pathwise differences against one reference.

mod additive;
mod lockstep;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::operators::Backend;

pub use additive::additive_sample_errors;
pub use lockstep::{lockstep_sample_errors, LockstepOutput};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Largest supported power of two for the fine step count.
pub const MAX_FINE_EXPONENT: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    /// Reaction–diffusion with additive noise, exact OU reference.
    AdditiveLinear,
    /// Advection–diffusion with saturating drift and multiplicative noise, fine-step reference.
    MultiplicativeAdvection,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::AdditiveLinear => "additive",
            Problem::MultiplicativeAdvection => "multiplicative",
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(Problem::AdditiveLinear),
            "multiplicative" => Ok(Problem::MultiplicativeAdvection),
            other => config(format!("unknown problem {other:?} (expected additive or multiplicative)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub beta: f64,
    pub delta: f64,
    pub backend: Backend,
    /// Noise modes per axis (spectral) or cells per axis (Fem).
    pub resolution: usize,
    pub horizon: f64,
    /// Ladder levels use `2^e` steps for each exponent `e`.
    pub ladder: Vec<u32>,
    /// The reference uses `2^fine_exponent` steps.
    pub fine_exponent: u32,
    pub samples: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults of the additive experiment: 64 x 64 noise modes, `T = 1`,
    /// steps `2^4 ..= 2^9`, reference `2^12`, 100 samples.
    pub fn additive(beta: f64) -> Self {
        ExperimentConfig {
            problem: Problem::AdditiveLinear,
            beta,
            delta: 0.001,
            backend: Backend::Spectral,
            resolution: 64,
            horizon: 1.0,
            ladder: (4..=9).collect(),
            fine_exponent: 12,
            samples: 100,
            seed: 0,
            output: None,
        }
    }

    /// Defaults of the multiplicative experiment on 64 x 64 Fem cells.
    pub fn multiplicative(beta: f64) -> Self {
        ExperimentConfig {
            problem: Problem::MultiplicativeAdvection,
            backend: Backend::Fem,
            ..ExperimentConfig::additive(beta)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return config(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return config(format!("delta must be >= 0, got {}", self.delta));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return config(format!("final time must be positive, got {}", self.horizon));
        }
        if self.samples < 1 {
            return config("samples must be >= 1");
        }
        if self.resolution < 2 {
            return config(format!("resolution must be >= 2, got {}", self.resolution));
        }
        if self.fine_exponent > MAX_FINE_EXPONENT {
            return config(format!("fine exponent {} exceeds {MAX_FINE_EXPONENT}", self.fine_exponent));
        }
        let mut sorted = self.ladder.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.ladder.len() {
            return config("ladder exponents must be distinct");
        }
        if let Some(&e) = self.ladder.iter().find(|&&e| e >= self.fine_exponent) {
            return config(format!("ladder exponent {e} must be below the fine exponent {}", self.fine_exponent));
        }
        match (self.problem, self.backend) {
            (Problem::AdditiveLinear, Backend::Fem) => {
                config("the additive experiment needs the spectral backend (its exact reference is modal)")
            }
            (Problem::MultiplicativeAdvection, Backend::Spectral) => {
                config("the multiplicative experiment needs the fem backend (Dirichlet boundary at x = 0)")
            }
            _ => Ok(()),
        }
    }

    /// Ladder exponents sorted ascending (coarsest step first).
    pub fn sorted_ladder(&self) -> Vec<u32> {
        let mut l = self.ladder.clone();
        l.sort_unstable();
        l
    }

    /// `{problem}_{beta}_{samples}.{ext}`.
    pub fn file_name(&self, format: Format) -> String {
        format!("{}_{}_{}.{}", self.problem, self.beta, self.samples, format.extension())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub dt: f64,
    pub steps: usize,
    pub rms_error: f64,
    /// Standard error of `rms_error` (delta method on the squared errors).
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the log residuals.
    pub residual: f64,
    pub points_used: usize,
}

/// Sensitivity of the coarsest-level error to refining the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub dt: f64,
    /// Error against the `2^fine` reference.
    pub error_fine: f64,
    /// Error against the `2^(fine-1)` reference.
    pub error_half: f64,
}

impl ReferenceCheck {
    pub fn relative_change(&self) -> f64 {
        (self.error_fine - self.error_half).abs() / self.error_fine
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    /// Coarsest step first.
    pub points: Vec<LadderPoint>,
    pub rate: Option<RateFit>,
    pub sample_seeds: Vec<u64>,
    pub reference_check: Option<ReferenceCheck>,
    pub warnings: Vec<String>,
}

/// Squared final-time errors of one sample, one entry per ladder level.
pub type SampleErrors = Vec<f64>;

fn point_stats(dt: f64, steps: usize, sq: &[f64]) -> LadderPoint {
    let n = sq.len() as f64;
    let mean = sq.iter().sum::<f64>() / n;
    let var = if sq.len() > 1 { sq.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let rms = mean.sqrt();
    let std_error = if rms > 0.0 { (var / n).sqrt() / (2.0 * rms) } else { 0.0 };
    LadderPoint { dt, steps, rms_error: rms, std_error }
}

/// Runs every sample and reduces the squared errors in sample order.
pub fn run_strong_error(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    cfg.validate()?;
    let ladder = cfg.sorted_ladder();
    let seeds: Vec<u64> = (0..cfg.samples as u64).map(|s| crate::rng::sample_seed(cfg.seed, s)).collect();
    let (per_sample, reference_check) = match cfg.problem {
        Problem::AdditiveLinear => (additive_sample_errors(cfg, &seeds)?, None),
        Problem::MultiplicativeAdvection => {
            let out = lockstep::multiplicative(cfg, &seeds)?;
            (out.errors, out.reference_check)
        }
    };
    let mut points = Vec::with_capacity(ladder.len());
    for (l, &e) in ladder.iter().enumerate() {
        let steps = 1usize << e;
        let sq: Vec<f64> = per_sample.iter().map(|s| s[l]).collect();
        points.push(point_stats(cfg.horizon / steps as f64, steps, &sq));
    }
    let mut warnings = Vec::new();
    for w in points.windows(2) {
        if !(w[1].rms_error < w[0].rms_error) {
            warnings.push(format!(
                "error did not decrease from dt = {} ({:e}) to dt = {} ({:e})",
                w[0].dt, w[0].rms_error, w[1].dt, w[1].rms_error
            ));
        }
    }
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.dt, p.rms_error)).collect();
    let rate = if pairs.len() >= 2 {
        match fit_rate(&pairs) {
            Ok((fit, skipped)) => {
                warnings.extend(skipped);
                Some(fit)
            }
            Err(Error::Config(msg)) => {
                warnings.push(msg);
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ErrorReport { schema_version: SCHEMA_VERSION, config: cfg.clone(), points, rate, sample_seeds: seeds, reference_check, warnings })
}

/// Least squares line through `(ln dt, ln error)`. Points with a zero (or
/// non-finite) error are skipped; their warnings are returned with the fit.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<(RateFit, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut used: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &(dt, err) in points {
        if !(dt > 0.0 && dt.is_finite()) {
            return config(format!("time step must be positive, got {dt}"));
        }
        if err > 0.0 && err.is_finite() {
            used.push((dt.ln(), err.ln()));
        } else {
            warnings.push(format!("excluded ladder point dt = {dt} with error {err} from the fit"));
        }
    }
    if used.len() < 2 {
        return config(format!("rate fit needs >= 2 points with positive error, got {}", used.len()));
    }
    // order-independent summation
    used.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = used.len() as f64;
    let mx = used.iter().map(|p| p.0).sum::<f64>() / n;
    let my = used.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = used.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return config("rate fit needs at least two distinct time steps");
    }
    let sxy: f64 = used.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (used.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok((RateFit { slope, intercept, residual, points_used: used.len() }, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// CSV (`dt,rms_error,samples,beta,problem`) or JSON of the report.
pub fn write_report(report: &ErrorReport, format: Format, mut out: impl Write) -> Result<()> {
    match format {
        Format::Csv => {
            writeln!(out, "dt,rms_error,samples,beta,problem")?;
            for p in &report.points {
                writeln!(out, "{},{},{},{},{}", p.dt, p.rms_error, report.config.samples, report.config.beta, report.config.problem)?;
            }
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, report)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Writes the report to `path`.
pub fn emit(report: &ErrorReport, format: Format, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_report(report, format, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json(r: impl std::io::Read) -> Result<ErrorReport> {
    Ok(serde_json::from_reader(r)?)
}

#[cfg(test)]
mod tests;
