//! Q-Wiener noise: covariance spectrum, per-mode Brownian increments, path
//! coarsening and increment fields on either backend.
//!
//! Noise modes are indexed from `(1, 1)`: mode `(i, j)` with `1 <= i <= n1`,
//! `1 <= j <= n2` has eigenvalue `q_{i,j} = (i^2 + j^2)^{-(beta + delta)}` and
//! eigenfunction `e_i(x) e_j(y)` of the cosine basis. Operator modes with a
//! zero index receive no noise.
//!
//! # CSV format
//!
//! [`NoisePath::write_csv`] writes one comment line
//! `# dt=<dt>,steps=<M>,seed=<seed>,n1=<n1>,n2=<n2>` followed by the header
//! `m,i,j,increment` and one row per `(m, i, j)` in ascending order. Values
//! use the shortest decimal form that round-trips.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{config, Error, Result};
use crate::operators::{spectral, Backend, GridFunction, OperatorFamily, Rectangle};
use crate::rng::{mode_stream, Purpose};
use crate::scalar::Scalar;

/// Covariance spectrum of the truncated Q-Wiener process.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    beta: f64,
    delta: f64,
    modes: (usize, usize),
    domain: Rectangle,
    q: Vec<f64>,
    trace: f64,
}

impl NoiseSpec {
    pub fn new(beta: f64, delta: f64, modes: (usize, usize), domain: Rectangle) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return config(format!("beta must be positive, got {beta}"));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return config(format!("delta must be positive, got {delta}"));
        }
        if modes.0 < 1 || modes.1 < 1 {
            return config(format!("noise mode counts must be >= 1, got {modes:?}"));
        }
        let mut q = Vec::with_capacity(modes.0 * modes.1);
        for i in 1..=modes.0 {
            for j in 1..=modes.1 {
                q.push(((i * i + j * j) as f64).powf(-(beta + delta)));
            }
        }
        let trace = q.iter().sum();
        Ok(NoiseSpec { beta, delta, modes, domain, q, trace })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn modes(&self) -> (usize, usize) {
        self.modes
    }

    pub fn domain(&self) -> Rectangle {
        self.domain
    }

    pub fn num_modes(&self) -> usize {
        self.q.len()
    }

    /// Position of mode `(i, j)` (1-based indices) in the tables.
    #[inline]
    pub fn slot(&self, i: usize, j: usize) -> usize {
        (i - 1) * self.modes.1 + (j - 1)
    }

    /// `(i, j)` of table position `k`.
    #[inline]
    pub fn mode_of(&self, k: usize) -> (usize, usize) {
        (k / self.modes.1 + 1, k % self.modes.1 + 1)
    }

    pub fn q(&self, i: usize, j: usize) -> Result<f64> {
        if i < 1 || j < 1 || i > self.modes.0 || j > self.modes.1 {
            return Err(Error::OutOfRange(format!("noise mode ({i}, {j}) outside 1..={} x 1..={}", self.modes.0, self.modes.1)));
        }
        Ok(self.q[self.slot(i, j)])
    }

    pub fn q_table(&self) -> &[f64] {
        &self.q
    }

    /// Sum of the stored eigenvalues.
    pub fn trace(&self) -> f64 {
        self.trace
    }
}

/// Per-mode generators of one Brownian sample, advanced one time step at a time.
pub struct IncrementStreams {
    rngs: Vec<ChaCha8Rng>,
    sqrt_dt: f64,
}

impl IncrementStreams {
    pub fn new(spec: &NoiseSpec, dt: f64, seed: u64) -> Self {
        let rngs = (0..spec.num_modes())
            .map(|k| {
                let (i, j) = spec.mode_of(k);
                mode_stream(seed, Purpose::Increment, i, j)
            })
            .collect();
        IncrementStreams { rngs, sqrt_dt: dt.sqrt() }
    }

    /// Next increment of every mode, written into `out` (table order).
    pub fn next_into(&mut self, out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(self.rngs.iter_mut()) {
            let z: f64 = r.sample(StandardNormal);
            *o = self.sqrt_dt * z;
        }
    }
}

/// Realized increments `dbeta_{i,j}^{(m)}`, stored step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    spec: Arc<NoiseSpec>,
    dt: f64,
    steps: usize,
    seed: u64,
    increments: Vec<f64>,
}

impl NoisePath {
    /// Draws `steps` increments of size `dt` for every mode; mode `(i, j)` uses
    /// the stream of `(seed, i, j)` only.
    pub fn sample(spec: Arc<NoiseSpec>, steps: usize, dt: f64, seed: u64) -> Result<Self> {
        check_grid(steps, dt)?;
        let nm = spec.num_modes();
        let mut increments = vec![0.0; steps * nm];
        let mut streams = IncrementStreams::new(&spec, dt, seed);
        for row in increments.chunks_exact_mut(nm) {
            streams.next_into(row);
        }
        Ok(NoisePath { spec, dt, steps, seed, increments })
    }

    pub fn zero(spec: Arc<NoiseSpec>, steps: usize, dt: f64) -> Result<Self> {
        check_grid(steps, dt)?;
        let n = steps * spec.num_modes();
        Ok(NoisePath { spec, dt, steps, seed: 0, increments: vec![0.0; n] })
    }

    /// Path from an explicit step-major increment table.
    pub fn from_increments(spec: Arc<NoiseSpec>, dt: f64, steps: usize, seed: u64, increments: Vec<f64>) -> Result<Self> {
        check_grid(steps, dt)?;
        if increments.len() != steps * spec.num_modes() {
            return config(format!(
                "increment table has {} entries, expected {} steps x {} modes",
                increments.len(),
                steps,
                spec.num_modes()
            ));
        }
        Ok(NoisePath { spec, dt, steps, seed, increments })
    }

    pub fn spec(&self) -> &Arc<NoiseSpec> {
        &self.spec
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Increments of all modes at step `m`, in table order.
    pub fn step(&self, m: usize) -> Result<&[f64]> {
        if m >= self.steps {
            return Err(Error::OutOfRange(format!("step {m} outside path of {} steps", self.steps)));
        }
        let nm = self.spec.num_modes();
        Ok(&self.increments[m * nm..(m + 1) * nm])
    }

    pub fn increment(&self, m: usize, i: usize, j: usize) -> Result<f64> {
        self.spec.q(i, j)?;
        Ok(self.step(m)?[self.spec.slot(i, j)])
    }

    /// Sums blocks of `factor` consecutive increments. Factors of two are
    /// applied as repeated pairwise halving and the remaining odd factor is
    /// summed in ascending order, so `coarsen(2^a)` followed by `coarsen(b)`
    /// equals `coarsen(2^a * b)` bitwise.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        if factor == 0 || self.steps % factor != 0 {
            return config(format!("coarsening factor {factor} does not divide {} steps", self.steps));
        }
        let mut out = self.clone();
        let mut rest = factor;
        while rest % 2 == 0 {
            out = out.sum_blocks(2);
            rest /= 2;
        }
        if rest > 1 {
            out = out.sum_blocks(rest);
        }
        Ok(out)
    }

    fn sum_blocks(&self, factor: usize) -> NoisePath {
        let nm = self.spec.num_modes();
        let coarse_steps = self.steps / factor;
        let mut out = vec![0.0; coarse_steps * nm];
        for (c, row) in out.chunks_exact_mut(nm).enumerate() {
            row.copy_from_slice(&self.increments[c * factor * nm..(c * factor + 1) * nm]);
            for f in 1..factor {
                let fine = &self.increments[(c * factor + f) * nm..(c * factor + f + 1) * nm];
                for (o, v) in row.iter_mut().zip(fine) {
                    *o += *v;
                }
            }
        }
        NoisePath { spec: Arc::clone(&self.spec), dt: self.dt * factor as f64, steps: coarse_steps, seed: self.seed, increments: out }
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let (n1, n2) = self.spec.modes;
        writeln!(w, "# dt={},steps={},seed={},n1={n1},n2={n2}", self.dt, self.steps, self.seed)?;
        writeln!(w, "m,i,j,increment")?;
        for m in 0..self.steps {
            let row = self.step(m)?;
            for (k, v) in row.iter().enumerate() {
                let (i, j) = self.spec.mode_of(k);
                writeln!(w, "{m},{i},{j},{v}")?;
            }
        }
        Ok(())
    }

    /// Reads a table written by [`write_csv`](Self::write_csv); the mode counts must match `spec`.
    pub fn read_csv(spec: Arc<NoiseSpec>, r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let meta = lines.next().ok_or_else(|| Error::Config("empty noise table".into()))??;
        let meta = meta.strip_prefix("# ").ok_or_else(|| Error::Config("missing metadata line".into()))?;
        let (mut dt, mut steps, mut seed, mut n1, mut n2) = (None, None, None, None, None);
        for kv in meta.split(',') {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("bad metadata entry {kv:?}")))?;
            let bad = |_| Error::Config(format!("bad metadata value {kv:?}"));
            match k {
                "dt" => dt = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "steps" => steps = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|e| bad(e.to_string()))?),
                "n1" => n1 = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "n2" => n2 = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                _ => return config(format!("unknown metadata key {k:?}")),
            }
        }
        let missing = || Error::Config("incomplete metadata line".into());
        let (dt, steps, seed) = (dt.ok_or_else(missing)?, steps.ok_or_else(missing)?, seed.ok_or_else(missing)?);
        if (n1.ok_or_else(missing)?, n2.ok_or_else(missing)?) != spec.modes {
            return config(format!("table mode counts differ from spec {:?}", spec.modes));
        }
        match lines.next() {
            Some(Ok(h)) if h.trim() == "m,i,j,increment" => {}
            _ => return config("missing header m,i,j,increment"),
        }
        let nm = spec.num_modes();
        let mut inc = vec![f64::NAN; steps * nm];
        let mut seen = 0usize;
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let parse_err = || Error::Config(format!("bad row {} {line:?}", ln + 3));
            if cols.len() != 4 {
                return Err(parse_err());
            }
            let m: usize = cols[0].trim().parse().map_err(|_| parse_err())?;
            let i: usize = cols[1].trim().parse().map_err(|_| parse_err())?;
            let j: usize = cols[2].trim().parse().map_err(|_| parse_err())?;
            let v: f64 = cols[3].trim().parse().map_err(|_| parse_err())?;
            if m >= steps || i < 1 || j < 1 || i > spec.modes.0 || j > spec.modes.1 {
                return Err(parse_err());
            }
            inc[m * nm + spec.slot(i, j)] = v;
            seen += 1;
        }
        if seen != steps * nm || inc.iter().any(|v| v.is_nan()) {
            return config(format!("noise table has {seen} rows, expected {}", steps * nm));
        }
        NoisePath::from_increments(spec, dt, steps, seed, inc)
    }
}

fn check_grid(steps: usize, dt: f64) -> Result<()> {
    if steps < 1 {
        return config("a noise path needs at least one step");
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return config(format!("time step must be positive, got {dt}"));
    }
    Ok(())
}

/// Field `sum_{i,j} sqrt(q_{i,j}) w_{i,j} e_{i,j}` for per-mode weights `w`
/// (table order). Spectral: mode coefficients (every noise mode must be an
/// operator mode). Fem: nodal evaluation of the truncated series, zero on
/// Dirichlet nodes.
pub fn weighted_field<T: Scalar>(spec: &NoiseSpec, fam: &OperatorFamily<T>, weights: &[f64]) -> Result<GridFunction<T>> {
    if spec.domain != fam.domain() {
        return config(format!("noise domain {:?} differs from operator domain {:?}", spec.domain, fam.domain()));
    }
    let (n1, n2) = spec.modes;
    let sq: Vec<f64> = spec.q.iter().zip(weights).map(|(q, w)| q.sqrt() * w).collect();
    match fam.backend() {
        Backend::Spectral => {
            let s = fam.spectral_data().expect("spectral backend");
            if n1 >= s.n1 || n2 >= s.n2 {
                return config(format!(
                    "noise modes 1..={n1} x 1..={n2} exceed operator modes 0..{} x 0..{}",
                    s.n1, s.n2
                ));
            }
            let mut out = fam.zeros();
            for (k, v) in sq.iter().enumerate() {
                let (i, j) = spec.mode_of(k);
                out.values[s.index(i, j)] = T::of(*v);
            }
            Ok(out)
        }
        Backend::Fem => {
            let f = fam.fem_data().expect("fem backend");
            let d = spec.domain;
            let xs: Vec<f64> = (0..=f.mesh.n1).map(|a| a as f64 * f.mesh.hx).collect();
            let ys: Vec<f64> = (0..=f.mesh.n2).map(|b| b as f64 * f.mesh.hy).collect();
            // ex[a][i-1] = e_i(x_a), ey[b][j-1] = e_j(y_b)
            let ex: Vec<Vec<f64>> = xs.iter().map(|&x| (1..=n1).map(|i| spectral::cosine_mode(i, d.lx, x)).collect()).collect();
            let ey: Vec<Vec<f64>> = ys.iter().map(|&y| (1..=n2).map(|j| spectral::cosine_mode(j, d.ly, y)).collect()).collect();
            // g[i-1][b] = sum_j c_ij e_j(y_b)
            let mut g = vec![vec![0.0; ys.len()]; n1];
            for (i, gi) in g.iter_mut().enumerate() {
                let row = &sq[i * n2..(i + 1) * n2];
                for (b, eyb) in ey.iter().enumerate() {
                    gi[b] = row.iter().zip(eyb).map(|(c, e)| c * e).sum();
                }
            }
            let mut values = vec![T::zero(); f.num_nodes()];
            for (b, _) in ys.iter().enumerate() {
                for (a, exa) in ex.iter().enumerate() {
                    let node = f.mesh.node(a, b);
                    if f.is_free(node) {
                        values[node] = T::of((0..n1).map(|i| exa[i] * g[i][b]).sum());
                    }
                }
            }
            Ok(GridFunction { backend: Backend::Fem, dims: fam.dims(), values })
        }
    }
}

/// Noise increment field `sum sqrt(q_{i,j}) dbeta_{i,j}^{(m)} e_{i,j}` for step `m`.
pub fn increment_field<T: Scalar>(path: &NoisePath, m: usize, fam: &OperatorFamily<T>) -> Result<GridFunction<T>> {
    weighted_field(&path.spec, fam, path.step(m)?)
}
