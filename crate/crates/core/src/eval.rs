//! Quantitative comparison of the learned flow map against the closed-form
//! statistics of the benchmark models.
//!
//! Exact columns in every report come from the analytic oracles only; the
//! network enters through sampled one-step draws and rollouts. Reports are
//! written as CSV tables plus a long-format `(series, x, y)` file for
//! external plotting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::codec::csv_f64;
use crate::error::{Error, Result};
use crate::flowmap::{rollout_snapshots, FlowMapNet};
use crate::rng::{fill_standard_normal, RngSeed};
use crate::sde::{exact_conditional, exact_terminal, sample_gaussian, GaussianStats, SdeModel};

/// A kernel density estimate on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityCurve {
    /// Trapezoid mass of the curve over its grid.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }
}

fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
        .sum()
}

/// Gaussian-kernel density estimate. `bandwidth = None` applies Silverman's
/// rule `1.06 sigma n^{-1/5}`.
pub fn kde_1d(samples: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Result<DensityCurve> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 samples".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid must be strictly increasing".into()));
    }
    let n = samples.len() as f64;
    let h = match bandwidth {
        Some(h) if h > 0.0 => h,
        Some(h) => return Err(Error::InvalidInput(format!("bandwidth {h} must be positive"))),
        None => {
            let mean = samples.iter().sum::<f64>() / n;
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            if var == 0.0 {
                return Err(Error::InvalidInput(
                    "zero sample variance; pass an explicit bandwidth".into(),
                ));
            }
            1.06 * var.sqrt() * n.powf(-0.2)
        }
    };
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    let density: Vec<f64> = grid
        .par_iter()
        .map(|&g| {
            let mut sum = 0.0;
            for &s in samples {
                let u = (g - s) / h;
                sum += (-0.5 * u * u).exp();
            }
            sum * norm
        })
        .collect();
    Ok(DensityCurve {
        grid: grid.to_vec(),
        density,
        bandwidth: h,
    })
}

/// Standard normal pdf scaled to `N(mean, var)`.
pub fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let u = x - mean;
    (-0.5 * u * u / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Learned vs exact one-step moments at one `(x_query, mu)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub mu: Vec<f64>,
    pub learned_mean: Vec<f64>,
    pub exact_mean: Vec<f64>,
    /// Euclidean norm of the mean error.
    pub mean_abs_err: f64,
    pub learned_var: Vec<f64>,
    pub exact_var: Vec<f64>,
    /// Worst per-axis relative variance error.
    pub var_rel_err: f64,
}

/// Conditional-moment sweep over a parameter grid at one query state.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub x_query: Vec<f64>,
    pub rows: Vec<MomentRow>,
}

impl MomentReport {
    pub fn max_mean_abs_err(&self) -> f64 {
        self.rows.iter().map(|r| r.mean_abs_err).fold(0.0, f64::max)
    }

    pub fn max_var_rel_err(&self) -> f64 {
        self.rows.iter().map(|r| r.var_rel_err).fold(0.0, f64::max)
    }

    /// Worst relative mean error, measured against the exact mean norm.
    pub fn max_mean_rel_err(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let norm = r.exact_mean.iter().map(|v| v * v).sum::<f64>().sqrt();
                r.mean_abs_err / norm.max(1e-12)
            })
            .fold(0.0, f64::max)
    }
}

fn one_step_samples(
    net: &FlowMapNet,
    x_query: &[f64],
    mu: &[f64],
    n_samples: usize,
    rng_seed: RngSeed,
    stream: u64,
) -> Vec<f64> {
    let d = net.meta.d;
    let in_dim = 2 * d + net.meta.d_mu;
    let mut rng = rng_seed.substream(stream);
    let mut inputs = vec![0.0; n_samples * in_dim];
    for s in 0..n_samples {
        let row = &mut inputs[s * in_dim..(s + 1) * in_dim];
        row[..d].copy_from_slice(x_query);
        row[d..d + mu.len()].copy_from_slice(mu);
        fill_standard_normal(&mut rng, &mut row[d + mu.len()..]);
    }
    let raw: Vec<Vec<f64>> = inputs
        .par_chunks(512 * in_dim)
        .map(|chunk| {
            let n = chunk.len() / in_dim;
            let mut out = Vec::new();
            net.forward_batch_raw(chunk, n, &mut out);
            out
        })
        .collect();
    let mut samples = Vec::with_capacity(n_samples * d);
    let mut idx = 0usize;
    for block in raw {
        for v in block {
            samples.push(x_query[idx % d] + v / net.c_scale);
            idx += 1;
        }
    }
    samples
}

fn column_moments(samples: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() / d;
    let mut mean = vec![0.0; d];
    for row in samples.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for row in samples.chunks_exact(d) {
        for i in 0..d {
            let diff = row[i] - mean[i];
            var[i] += diff * diff;
        }
    }
    for v in &mut var {
        *v /= (n - 1) as f64;
    }
    (mean, var)
}

/// Sweeps the conditional mean/variance of the learned map over `mu_grid`
/// at `x_query`, paired with the oracle values.
pub fn conditional_moment_sweep(
    net: &FlowMapNet,
    model: &SdeModel,
    x_query: &[f64],
    mu_grid: &[Vec<f64>],
    dt: f64,
    n_samples: usize,
    seed: RngSeed,
) -> Result<MomentReport> {
    if n_samples < 2 {
        return Err(Error::InvalidInput("n_samples must be >= 2".into()));
    }
    if mu_grid.is_empty() {
        return Err(Error::InvalidInput("mu grid is empty".into()));
    }
    let d = model.d();
    let rows: Vec<Result<MomentRow>> = mu_grid
        .iter()
        .enumerate()
        .map(|(k, mu)| {
            let exact = exact_conditional(model, x_query, mu, dt)?;
            let samples = one_step_samples(net, x_query, mu, n_samples, seed, k as u64);
            let (learned_mean, learned_var) = column_moments(&samples, d);
            let mean_abs_err = learned_mean
                .iter()
                .zip(&exact.mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let exact_var: Vec<f64> = (0..d).map(|i| exact.var(i)).collect();
            let var_rel_err = learned_var
                .iter()
                .zip(&exact_var)
                .map(|(l, e)| (l - e).abs() / e)
                .fold(0.0, f64::max);
            Ok(MomentRow {
                mu: mu.clone(),
                learned_mean,
                exact_mean: exact.mean,
                mean_abs_err,
                learned_var,
                exact_var,
                var_rel_err,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(MomentReport {
        x_query: x_query.to_vec(),
        rows,
    })
}

/// Learned and exact conditional densities over a `value x mu` grid
/// (1-d models).
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapPair {
    pub x_query: Vec<f64>,
    pub mu_grid: Vec<Vec<f64>>,
    pub value_grid: Vec<f64>,
    /// `learned[k][v]`: density column for `mu_grid[k]`.
    pub learned: Vec<Vec<f64>>,
    pub exact: Vec<Vec<f64>>,
}

/// One KDE column per parameter value plus the matching oracle density.
pub fn heatmap_grid(
    net: &FlowMapNet,
    model: &SdeModel,
    x_query: &[f64],
    mu_grid: &[Vec<f64>],
    value_grid: &[f64],
    dt: f64,
    n_samples: usize,
    seed: RngSeed,
) -> Result<HeatmapPair> {
    if model.d() != 1 {
        return Err(Error::InvalidInput(
            "density heatmaps are defined for 1-d models".into(),
        ));
    }
    if mu_grid.is_empty() || value_grid.len() < 2 {
        return Err(Error::InvalidInput("grids must be non-empty".into()));
    }
    let mut learned = Vec::with_capacity(mu_grid.len());
    let mut exact = Vec::with_capacity(mu_grid.len());
    for (k, mu) in mu_grid.iter().enumerate() {
        let samples = one_step_samples(net, x_query, mu, n_samples, seed, k as u64);
        learned.push(kde_1d(&samples, value_grid, None)?.density);
        let stats = exact_conditional(model, x_query, mu, dt)?;
        exact.push(
            value_grid
                .iter()
                .map(|&v| gaussian_pdf(v, stats.mean[0], stats.cov[0]))
                .collect(),
        );
    }
    Ok(HeatmapPair {
        x_query: x_query.to_vec(),
        mu_grid: mu_grid.to_vec(),
        value_grid: value_grid.to_vec(),
        learned,
        exact,
    })
}

/// Learned vs exact terminal moments after an `n_steps` rollout from the
/// Gaussian initial law `N(m0, s0_cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalRow {
    pub mu: Vec<f64>,
    pub learned_mean: Vec<f64>,
    pub exact_mean: Vec<f64>,
    pub learned_std: Vec<f64>,
    pub exact_std: Vec<f64>,
}

/// Rollout terminal-distribution check at one parameter value.
pub fn terminal_check(
    net: &FlowMapNet,
    model: &SdeModel,
    m0: &[f64],
    s0_cov: &[f64],
    mu: &[f64],
    dt: f64,
    n_steps: usize,
    n_traj: usize,
    seed: RngSeed,
) -> Result<TerminalRow> {
    let d = model.d();
    let init = GaussianStats {
        mean: m0.to_vec(),
        cov: s0_cov.to_vec(),
    };
    let mut rng = seed.substream(u64::MAX);
    let mut x0s = Vec::with_capacity(n_traj * d);
    for _ in 0..n_traj {
        x0s.extend(sample_gaussian(&init, &mut rng)?);
    }
    let terminal = crate::flowmap::rollout(net, &x0s, mu, n_steps, seed)?;
    let (learned_mean, learned_var) = column_moments(&terminal, d);
    let exact = exact_terminal(model, m0, s0_cov, mu, n_steps as f64 * dt)?;
    Ok(TerminalRow {
        mu: mu.to_vec(),
        learned_mean,
        exact_mean: exact.mean.clone(),
        learned_std: learned_var.iter().map(|v| v.sqrt()).collect(),
        exact_std: (0..d).map(|i| exact.var(i).sqrt()).collect(),
    })
}

/// Ensemble variance per rollout step against the oracle variance at the
/// same physical time.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEvolution {
    pub mu: Vec<f64>,
    /// Rows of `(step, time, learned variance, exact variance)`; variances
    /// are averaged over state axes.
    pub rows: Vec<(usize, f64, f64, f64)>,
}

/// Tracks ensemble variance along a rollout from the deterministic start
/// `x0`.
pub fn variance_evolution(
    net: &FlowMapNet,
    model: &SdeModel,
    x0: &[f64],
    mu: &[f64],
    dt: f64,
    n_steps: usize,
    n_traj: usize,
    seed: RngSeed,
) -> Result<VarianceEvolution> {
    let d = model.d();
    let mut x0s = Vec::with_capacity(n_traj * d);
    for _ in 0..n_traj {
        x0s.extend_from_slice(x0);
    }
    let zero_cov = vec![0.0; d * d];
    let snapshots = rollout_snapshots(net, &x0s, mu, n_steps, seed)?;
    let mut rows = Vec::with_capacity(snapshots.len());
    for (k, ensemble) in snapshots.iter().enumerate() {
        let t = k as f64 * dt;
        let learned = if k == 0 {
            0.0
        } else {
            let (_, var) = column_moments(ensemble, d);
            var.iter().sum::<f64>() / d as f64
        };
        let exact_stats = exact_terminal(model, x0, &zero_cov, mu, t)?;
        let exact = (0..d).map(|i| exact_stats.var(i)).sum::<f64>() / d as f64;
        rows.push((k, t, learned, exact));
    }
    Ok(VarianceEvolution {
        mu: mu.to_vec(),
        rows,
    })
}

/// Everything one evaluation run produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub conditional: Vec<MomentReport>,
    pub heatmap: Option<HeatmapPair>,
    pub terminal: Vec<TerminalRow>,
    pub variance: Vec<VarianceEvolution>,
}

impl EvalReport {
    pub fn max_mean_abs_err(&self) -> f64 {
        self.conditional
            .iter()
            .map(|r| r.max_mean_abs_err())
            .fold(0.0, f64::max)
    }

    pub fn max_var_rel_err(&self) -> f64 {
        self.conditional
            .iter()
            .map(|r| r.max_var_rel_err())
            .fold(0.0, f64::max)
    }
}


fn vec_label(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Writes the report tables under `dir`:
///
/// - `conditional.csv`: per `(x_query, mu)` moments and errors.
/// - `heatmap.csv`: long format `kind, mu..., value, density`.
/// - `terminal.csv`: rollout terminal moments.
/// - `variance.csv`: variance evolution rows.
/// - `series.csv`: plot-ready `(series, x, y)` curves.
/// - `summary.csv`: scalar metrics including the max errors.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut f = BufWriter::new(File::create(dir.join("conditional.csv"))?);
    writeln!(
        f,
        "x_query,mu,learned_mean,exact_mean,mean_abs_err,learned_var,exact_var,var_rel_err"
    )?;
    for rep in &report.conditional {
        for row in &rep.rows {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{}",
                vec_label(&rep.x_query),
                vec_label(&row.mu),
                vec_label(&row.learned_mean),
                vec_label(&row.exact_mean),
                csv_f64(row.mean_abs_err),
                vec_label(&row.learned_var),
                vec_label(&row.exact_var),
                csv_f64(row.var_rel_err),
            )?;
        }
    }
    f.flush()?;

    if let Some(h) = &report.heatmap {
        let mut f = BufWriter::new(File::create(dir.join("heatmap.csv"))?);
        writeln!(f, "kind,mu,value,density")?;
        for (k, mu) in h.mu_grid.iter().enumerate() {
            for (v, &value) in h.value_grid.iter().enumerate() {
                writeln!(
                    f,
                    "learned,{},{},{}",
                    vec_label(mu),
                    csv_f64(value),
                    csv_f64(h.learned[k][v])
                )?;
                writeln!(
                    f,
                    "exact,{},{},{}",
                    vec_label(mu),
                    csv_f64(value),
                    csv_f64(h.exact[k][v])
                )?;
            }
        }
        f.flush()?;
    }

    let mut f = BufWriter::new(File::create(dir.join("terminal.csv"))?);
    writeln!(f, "mu,learned_mean,exact_mean,learned_std,exact_std")?;
    for row in &report.terminal {
        writeln!(
            f,
            "{},{},{},{},{}",
            vec_label(&row.mu),
            vec_label(&row.learned_mean),
            vec_label(&row.exact_mean),
            vec_label(&row.learned_std),
            vec_label(&row.exact_std),
        )?;
    }
    f.flush()?;

    let mut f = BufWriter::new(File::create(dir.join("variance.csv"))?);
    writeln!(f, "mu,step,t,learned_var,exact_var")?;
    for ev in &report.variance {
        for &(step, t, learned, exact) in &ev.rows {
            writeln!(
                f,
                "{},{step},{},{},{}",
                vec_label(&ev.mu),
                csv_f64(t),
                csv_f64(learned),
                csv_f64(exact)
            )?;
        }
    }
    f.flush()?;

    let mut f = BufWriter::new(File::create(dir.join("series.csv"))?);
    writeln!(f, "series,x,y")?;
    for rep in &report.conditional {
        let label = vec_label(&rep.x_query);
        for row in &rep.rows {
            writeln!(
                f,
                "learned_mean_x={label},{},{}",
                csv_f64(row.mu[0]),
                csv_f64(row.learned_mean[0])
            )?;
            writeln!(
                f,
                "exact_mean_x={label},{},{}",
                csv_f64(row.mu[0]),
                csv_f64(row.exact_mean[0])
            )?;
        }
    }
    for ev in &report.variance {
        let label = vec_label(&ev.mu);
        for &(_, t, learned, exact) in &ev.rows {
            writeln!(f, "learned_var_mu={label},{},{}", csv_f64(t), csv_f64(learned))?;
            writeln!(f, "exact_var_mu={label},{},{}", csv_f64(t), csv_f64(exact))?;
        }
    }
    f.flush()?;

    let mut f = BufWriter::new(File::create(dir.join("summary.csv"))?);
    writeln!(f, "metric,value")?;
    writeln!(f, "max_mean_abs_err,{}", csv_f64(report.max_mean_abs_err()))?;
    writeln!(f, "max_var_rel_err,{}", csv_f64(report.max_var_rel_err()))?;
    let mean_err_avg = {
        let rows: Vec<f64> = report
            .conditional
            .iter()
            .flat_map(|r| r.rows.iter().map(|row| row.mean_abs_err))
            .collect();
        if rows.is_empty() {
            0.0
        } else {
            rows.iter().sum::<f64>() / rows.len() as f64
        }
    };
    writeln!(f, "mean_mean_abs_err,{}", csv_f64(mean_err_avg))?;
    writeln!(f, "n_conditional_rows,{}", report.conditional.iter().map(|r| r.rows.len()).sum::<usize>())?;
    f.flush()?;
    Ok(())
}
