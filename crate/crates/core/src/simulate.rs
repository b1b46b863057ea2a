//! Trajectory simulation and the observed-transition dataset.
//!
//! Builds the training corpus: for every parameter value on a uniform grid,
//! `n_traj` independent trajectories are integrated over `[0, T]` and recorded
//! every `dt`, producing consecutive state pairs `(x_n, mu, x_{n+1})`.
//! Integration runs on a much finer internal step (Euler-Maruyama), or draws
//! from the analytic transition law when the model has one.
//!
//! Datasets persist in the binary `PFDS` container; CSV export is a lossy
//! human-readable view.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::codec::{csv_f64, BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::rng::{fill_standard_normal, RngSeed};
use crate::sde::{exact_conditional, sample_gaussian, sample_stationary, GaussianStats, SdeModel};

const MAGIC: &[u8; 4] = b"PFDS";
const VERSION: u16 = 1;

/// One observed transition, viewed in place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<'a> {
    pub x_n: &'a [f64],
    pub mu: &'a [f64],
    pub x_np1: &'a [f64],
}

/// Initial-condition law for trajectory starts.
#[derive(Debug, Clone, PartialEq)]
pub enum InitLaw {
    /// Componentwise uniform over an axis-aligned box.
    UniformBox { low: Vec<f64>, high: Vec<f64> },
    /// The model's stationary law for the trajectory's parameter value.
    Stationary,
}

/// How one recording step `x_n -> x_{n+1}` is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    /// Euler-Maruyama on the fine grid.
    EulerMaruyama,
    /// Direct draw from the analytic transition law (oracle models only).
    ExactTransition,
}

/// Simulation configuration; `dt` must be an integer multiple of `fine_dt`.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Parameter-grid points per axis.
    pub n_mu: usize,
    /// Trajectories per parameter value.
    pub n_traj: usize,
    /// Horizon `T`.
    pub t_final: f64,
    /// Recording step.
    pub dt: f64,
    /// Internal integration step.
    pub fine_dt: f64,
    pub init: InitLaw,
    pub sampler: SamplerKind,
}

impl SimConfig {
    fn validate(&self, model: &SdeModel) -> Result<(usize, usize)> {
        if self.n_mu == 0 || self.n_traj == 0 {
            return Err(Error::InvalidInput("n_mu and n_traj must be >= 1".into()));
        }
        if !(self.dt > 0.0 && self.fine_dt > 0.0 && self.t_final > 0.0) {
            return Err(Error::InvalidInput(
                "t_final, dt, fine_dt must be positive".into(),
            ));
        }
        let n_steps = (self.t_final / self.dt).round() as usize;
        if n_steps == 0 || (self.t_final - n_steps as f64 * self.dt).abs() > 1e-9 * self.t_final {
            return Err(Error::InvalidInput(format!(
                "t_final {} is not an integer multiple of dt {}",
                self.t_final, self.dt
            )));
        }
        let per_rec = (self.dt / self.fine_dt).round() as usize;
        if per_rec == 0 || (self.dt - per_rec as f64 * self.fine_dt).abs() > 1e-9 * self.dt {
            return Err(Error::InvalidInput(format!(
                "dt {} is not an integer multiple of fine_dt {}",
                self.dt, self.fine_dt
            )));
        }
        if let InitLaw::UniformBox { low, high } = &self.init {
            if low.len() != model.d() || high.len() != model.d() {
                return Err(Error::ShapeMismatch {
                    expected: format!("init box of dimension {}", model.d()),
                    got: format!("{}/{}", low.len(), high.len()),
                });
            }
            if low.iter().zip(high).any(|(l, h)| !(h >= l)) {
                return Err(Error::InvalidInput("init box has high < low".into()));
            }
        }
        if self.sampler == SamplerKind::ExactTransition && !model.has_oracle() {
            return Err(Error::NoAnalyticOracle(model.name().to_string()));
        }
        Ok((n_steps, per_rec))
    }
}

/// The observed dataset: `J = n_traj * n_mu * n_steps` transitions stored as
/// flat row-major blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDataset {
    d: usize,
    d_mu: usize,
    pub dt: f64,
    pub model_name: String,
    pub mu_grid: Vec<Vec<f64>>,
    /// Trajectories per parameter value (0 for hand-assembled datasets).
    pub n_traj: usize,
    /// Recording steps per trajectory (0 for hand-assembled datasets).
    pub n_steps: usize,
    xs: Vec<f64>,
    mus: Vec<f64>,
    xps: Vec<f64>,
}

impl ObservedDataset {
    /// Assembles a dataset from explicit records (primarily for tests and
    /// external data). Every `mu` must be a member of `mu_grid`.
    pub fn from_records<'a>(
        model_name: impl Into<String>,
        d: usize,
        d_mu: usize,
        dt: f64,
        mu_grid: Vec<Vec<f64>>,
        records: impl IntoIterator<Item = (&'a [f64], &'a [f64], &'a [f64])>,
    ) -> Result<Self> {
        let mut ds = Self {
            d,
            d_mu,
            dt,
            model_name: model_name.into(),
            mu_grid,
            n_traj: 0,
            n_steps: 0,
            xs: Vec::new(),
            mus: Vec::new(),
            xps: Vec::new(),
        };
        for (x, mu, xp) in records {
            ds.push(x, mu, xp)?;
        }
        ds.check_mu_membership()?;
        Ok(ds)
    }

    fn push(&mut self, x: &[f64], mu: &[f64], xp: &[f64]) -> Result<()> {
        if x.len() != self.d || xp.len() != self.d || mu.len() != self.d_mu {
            return Err(Error::ShapeMismatch {
                expected: format!("record of shape ({}, {}, {})", self.d, self.d_mu, self.d),
                got: format!("({}, {}, {})", x.len(), mu.len(), xp.len()),
            });
        }
        if x.iter().chain(mu).chain(xp).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("record contains non-finite entry".into()));
        }
        self.xs.extend_from_slice(x);
        self.mus.extend_from_slice(mu);
        self.xps.extend_from_slice(xp);
        Ok(())
    }

    fn check_mu_membership(&self) -> Result<()> {
        let grid: std::collections::HashSet<Vec<u64>> = self
            .mu_grid
            .iter()
            .map(|mu| mu.iter().map(|v| v.to_bits()).collect())
            .collect();
        for j in 0..self.len() {
            let key: Vec<u64> = self.transition(j).mu.iter().map(|v| v.to_bits()).collect();
            if !grid.contains(&key) {
                return Err(Error::InvalidInput(format!(
                    "record {j} has a parameter value outside mu_grid"
                )));
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn d_mu(&self) -> usize {
        self.d_mu
    }

    pub fn len(&self) -> usize {
        self.mus.len() / self.d_mu.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn transition(&self, j: usize) -> Transition<'_> {
        Transition {
            x_n: &self.xs[j * self.d..(j + 1) * self.d],
            mu: &self.mus[j * self.d_mu..(j + 1) * self.d_mu],
            x_np1: &self.xps[j * self.d..(j + 1) * self.d],
        }
    }

    /// Records grouped by parameter-grid block, available only for datasets
    /// built by [`simulate_dataset`] (k-major layout).
    pub fn mu_block(&self, k: usize) -> Option<std::ops::Range<usize>> {
        let block = self.n_traj * self.n_steps;
        if block == 0 || k >= self.mu_grid.len() {
            return None;
        }
        Some(k * block..(k + 1) * block)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::new(BufWriter::new(File::create(path)?));
        w.magic(MAGIC)?;
        w.u16(VERSION)?;
        w.u64(self.d as u64)?;
        w.u64(self.d_mu as u64)?;
        w.u64(self.len() as u64)?;
        w.u64(self.n_traj as u64)?;
        w.u64(self.n_steps as u64)?;
        w.u64(self.mu_grid.len() as u64)?;
        w.f64(self.dt)?;
        w.str(&self.model_name)?;
        for mu in &self.mu_grid {
            w.f64_slice(mu)?;
        }
        for j in 0..self.len() {
            let t = self.transition(j);
            w.f64_slice(t.x_n)?;
            w.f64_slice(t.mu)?;
            w.f64_slice(t.x_np1)?;
        }
        w.finish()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BinReader::new(BufReader::new(File::open(path)?), path);
        r.expect_magic(MAGIC)?;
        r.expect_version(VERSION)?;
        let d = r.count("state dimension", 1 << 16)?;
        let d_mu = r.count("parameter dimension", 1 << 16)?;
        let n = r.count("record", 1 << 40)?;
        let n_traj = r.count("trajectory", 1 << 40)?;
        let n_steps = r.count("step", 1 << 40)?;
        let n_mu = r.count("parameter grid", 1 << 24)?;
        if d == 0 || d_mu == 0 {
            return Err(r.fail("zero dimensions"));
        }
        let dt = r.f64()?;
        let model_name = r.str()?;
        let mut mu_grid = Vec::with_capacity(n_mu);
        for _ in 0..n_mu {
            mu_grid.push(r.f64_vec(d_mu)?);
        }
        let mut ds = Self {
            d,
            d_mu,
            dt,
            model_name,
            mu_grid,
            n_traj,
            n_steps,
            xs: Vec::with_capacity(n * d),
            mus: Vec::with_capacity(n * d_mu),
            xps: Vec::with_capacity(n * d),
        };
        for j in 0..n {
            let x = r.f64_vec(d)?;
            let mu = r.f64_vec(d_mu)?;
            let xp = r.f64_vec(d)?;
            ds.push(&x, &mu, &xp)
                .map_err(|_| r.fail(format!("record {j} is malformed")))?;
        }
        r.expect_eof()?;
        ds.check_mu_membership()
            .map_err(|e| Error::Format {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        Ok(ds)
    }

    /// Lossy CSV export with 17 significant digits per value.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        let mut header = Vec::new();
        header.extend((0..self.d).map(|i| format!("x_n_{i}")));
        header.extend((0..self.d_mu).map(|i| format!("mu_{i}")));
        header.extend((0..self.d).map(|i| format!("x_np1_{i}")));
        writeln!(f, "{}", header.join(","))?;
        for j in 0..self.len() {
            let t = self.transition(j);
            let row: Vec<String> = t
                .x_n
                .iter()
                .chain(t.mu)
                .chain(t.x_np1)
                .map(|&v| csv_f64(v))
                .collect();
            writeln!(f, "{}", row.join(","))?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Uniform tensor grid over the model's parameter box, `n` points per axis.
pub fn uniform_mu_grid(model: &SdeModel, n: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = model
        .mu_domain()
        .iter()
        .map(|&(lo, hi)| {
            if n == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..n)
                    .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let mut grid = vec![Vec::new()];
    for axis in &axes {
        let mut next = Vec::with_capacity(grid.len() * axis.len());
        for prefix in &grid {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        grid = next;
    }
    grid
}

fn em_step<R: Rng>(
    model: &SdeModel,
    x: &mut [f64],
    mu: &[f64],
    fine_dt: f64,
    rng: &mut R,
    drift: &mut [f64],
    diff: &mut [f64],
    noise: &mut [f64],
) {
    let (d, m) = (model.d(), model.m());
    model.drift_into(x, mu, drift);
    model.diffusion_into(x, mu, diff);
    fill_standard_normal(rng, noise);
    let sqrt_dt = fine_dt.sqrt();
    for i in 0..d {
        let mut dw = 0.0;
        for k in 0..m {
            dw += diff[i * m + k] * noise[k];
        }
        x[i] += drift[i] * fine_dt + dw * sqrt_dt;
    }
}

/// Integrates one Euler-Maruyama path
/// `X_{k+1} = X_k + a dt + b sqrt(dt) xi_k` and returns all `n_fine + 1`
/// states.
pub fn euler_maruyama_path(
    model: &SdeModel,
    x0: &[f64],
    mu: &[f64],
    fine_dt: f64,
    n_fine: usize,
    seed: RngSeed,
) -> Result<Vec<Vec<f64>>> {
    if !(fine_dt > 0.0) || n_fine == 0 {
        return Err(Error::InvalidInput(
            "fine_dt must be positive and n_fine >= 1".into(),
        ));
    }
    let mut rng = seed.rng();
    let mut x = x0.to_vec();
    let mut path = Vec::with_capacity(n_fine + 1);
    path.push(x.clone());
    let mut drift = vec![0.0; model.d()];
    let mut diff = vec![0.0; model.d() * model.m()];
    let mut noise = vec![0.0; model.m()];
    for step in 0..n_fine {
        em_step(model, &mut x, mu, fine_dt, &mut rng, &mut drift, &mut diff, &mut noise);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step });
        }
        path.push(x.clone());
    }
    Ok(path)
}

/// One draw from the analytic transition law `X_{n+1} | X_n = x` over `dt`.
pub fn exact_gaussian_transition_sample(
    model: &SdeModel,
    x: &[f64],
    mu: &[f64],
    dt: f64,
    seed: RngSeed,
) -> Result<Vec<f64>> {
    exact_transition_draw(model, x, mu, dt, &mut seed.rng())
}

fn exact_transition_draw<R: Rng>(
    model: &SdeModel,
    x: &[f64],
    mu: &[f64],
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let stats: GaussianStats = exact_conditional(model, x, mu, dt)?;
    sample_gaussian(&stats, rng)
}

fn draw_initial<R: Rng>(
    model: &SdeModel,
    init: &InitLaw,
    mu: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    match init {
        InitLaw::UniformBox { low, high } => Ok(low
            .iter()
            .zip(high)
            .map(|(&l, &h)| l + (h - l) * rng.gen::<f64>())
            .collect()),
        InitLaw::Stationary => sample_stationary(model, mu, rng),
    }
}

/// Simulates the full observed dataset. Deterministic given `(cfg, seed)`
/// regardless of worker count: every `(parameter, trajectory)` pair owns a
/// dedicated RNG substream, and records are assembled in `(k, i, n)` order.
pub fn simulate_dataset(model: &SdeModel, cfg: &SimConfig, seed: RngSeed) -> Result<ObservedDataset> {
    let (n_steps, per_rec) = cfg.validate(model)?;
    let mu_grid = uniform_mu_grid(model, cfg.n_mu);
    let n_mu = mu_grid.len();
    let (d, d_mu) = (model.d(), model.d_mu());

    let trajectories: Vec<Result<Vec<f64>>> = (0..n_mu * cfg.n_traj)
        .into_par_iter()
        .map(|flat| {
            let k = flat / cfg.n_traj;
            let mu = &mu_grid[k];
            let mut rng = seed.substream(flat as u64);
            let mut x = draw_initial(model, &cfg.init, mu, &mut rng)?;
            // Per recording step: previous state then next state, flattened.
            let mut recs = Vec::with_capacity(n_steps * 2 * d);
            match cfg.sampler {
                SamplerKind::EulerMaruyama => {
                    let mut drift = vec![0.0; d];
                    let mut diff = vec![0.0; d * model.m()];
                    let mut noise = vec![0.0; model.m()];
                    for n in 0..n_steps {
                        recs.extend_from_slice(&x);
                        for s in 0..per_rec {
                            em_step(
                                model, &mut x, mu, cfg.fine_dt, &mut rng, &mut drift, &mut diff,
                                &mut noise,
                            );
                            if x.iter().any(|v| !v.is_finite()) {
                                return Err(Error::NonFiniteState { step: n * per_rec + s });
                            }
                        }
                        recs.extend_from_slice(&x);
                    }
                }
                SamplerKind::ExactTransition => {
                    for _ in 0..n_steps {
                        recs.extend_from_slice(&x);
                        x = exact_transition_draw(model, &x, mu, cfg.dt, &mut rng)?;
                        recs.extend_from_slice(&x);
                    }
                }
            }
            Ok(recs)
        })
        .collect();

    let mut ds = ObservedDataset {
        d,
        d_mu,
        dt: cfg.dt,
        model_name: model.name().to_string(),
        mu_grid: mu_grid.clone(),
        n_traj: cfg.n_traj,
        n_steps,
        xs: Vec::with_capacity(n_mu * cfg.n_traj * n_steps * d),
        mus: Vec::with_capacity(n_mu * cfg.n_traj * n_steps * d_mu),
        xps: Vec::with_capacity(n_mu * cfg.n_traj * n_steps * d),
    };
    for (flat, recs) in trajectories.into_iter().enumerate() {
        let recs = recs?;
        let mu = &mu_grid[flat / cfg.n_traj];
        for n in 0..n_steps {
            let base = n * 2 * d;
            ds.xs.extend_from_slice(&recs[base..base + d]);
            ds.mus.extend_from_slice(mu);
            ds.xps.extend_from_slice(&recs[base + d..base + 2 * d]);
        }
    }
    debug_assert_eq!(ds.len(), n_mu * cfg.n_traj * n_steps);
    Ok(ds)
}
