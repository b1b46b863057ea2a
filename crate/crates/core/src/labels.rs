//! Labeled-data generation through the reverse probability-flow ODE.
//!
//! For each of `M` samples: draw a query transition uniformly from the
//! observed dataset, draw a latent `z ~ N(0, I_d)`, and integrate the reverse
//! ODE from `tau = 1` to `tau = 0` with the kernel score estimator driven by
//! the query's nearest neighbors. The terminal state is the generated
//! displacement, so `x_hat = x_n + Z_0` and the quadruple
//! `(x_n, mu, z, x_hat)` is a supervised training pair for the flow-map
//! network.
//!
//! Neighbor queries are hoisted out of the `tau` loop: the query point is
//! fixed per sample, so one lookup serves all steps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::codec::{csv_f64, BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::neighbors::NeighborIndex;
use crate::rng::{fill_standard_normal, RngSeed};
use crate::score::{ScoreCache, ScoreConfig, VpSchedule};
use crate::simulate::{ObservedDataset, Transition};

const MAGIC: &[u8; 4] = b"PFLB";
const VERSION: u16 = 1;

/// One labeled quadruple, viewed in place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledSample<'a> {
    pub x_n: &'a [f64],
    pub mu: &'a [f64],
    pub z: &'a [f64],
    pub x_hat_np1: &'a [f64],
}

/// How query points are drawn from the observed dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuerySampling {
    /// Uniform over records, with replacement.
    Uniform,
    /// Round-robin over parameter blocks, uniform within a block. Useful for
    /// small `M`; requires a dataset built by `simulate_dataset`.
    StratifiedByMu,
}

/// Reverse-ODE and sampling configuration.
#[derive(Debug, Clone)]
pub struct OdeConfig {
    /// Euler steps `N_tau`.
    pub n_tau: usize,
    pub score: ScoreConfig,
    pub sched: VpSchedule,
    /// Number of labeled samples `M`.
    pub n_samples: usize,
    pub sampling: QuerySampling,
}

impl OdeConfig {
    /// Configuration with the schedule clamp tied to the step count.
    pub fn new(n_tau: usize, score: ScoreConfig, delta_reg: f64, n_samples: usize) -> Self {
        Self {
            n_tau,
            score,
            sched: VpSchedule::for_steps(n_tau, delta_reg),
            n_samples,
            sampling: QuerySampling::Uniform,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_tau < 2 {
            return Err(Error::InvalidInput("n_tau must be >= 2".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidInput("n_samples must be >= 1".into()));
        }
        self.score.validate()
    }
}

/// Integrates the reverse probability-flow ODE from `z1` at `tau = 1` down
/// to `tau = 0` and returns the terminal displacement `Z_0`.
pub fn reverse_ode_solve(
    z1: &[f64],
    query_x: &[f64],
    query_mu: &[f64],
    neighbors: &[Transition<'_>],
    cfg: &OdeConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let cache = ScoreCache::new(query_x, query_mu, neighbors, &cfg.score, &cfg.sched)?;
    let mut scratch = OdeScratch::new(z1.len(), cache.len());
    let mut z = z1.to_vec();
    integrate(&mut z, &cache, cfg, &mut scratch)?;
    Ok(z)
}

struct OdeScratch {
    logw: Vec<f64>,
    score: Vec<f64>,
}

impl OdeScratch {
    fn new(d: usize, n_neighbors: usize) -> Self {
        Self {
            logw: vec![0.0; n_neighbors],
            score: vec![0.0; d],
        }
    }
}

fn integrate(
    z: &mut [f64],
    cache: &ScoreCache,
    cfg: &OdeConfig,
    scratch: &mut OdeScratch,
) -> Result<()> {
    let n_tau = cfg.n_tau;
    let dtau = 1.0 / n_tau as f64;
    for k in (1..=n_tau).rev() {
        let tau = k as f64 / n_tau as f64;
        cache.score_into(z, tau, &mut scratch.logw, &mut scratch.score)?;
        let f = cfg.sched.drift_f(tau);
        let g2 = cfg.sched.diff_g_sq(tau);
        for (zi, si) in z.iter_mut().zip(&scratch.score) {
            *zi -= dtau * (f * *zi - 0.5 * g2 * si);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteOde { step: k });
        }
    }
    Ok(())
}

/// The augmented dataset of labeled quadruples, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    d: usize,
    d_mu: usize,
    pub model_name: String,
    xs: Vec<f64>,
    mus: Vec<f64>,
    zs: Vec<f64>,
    xhats: Vec<f64>,
}

impl LabeledDataset {
    pub fn new(d: usize, d_mu: usize, model_name: impl Into<String>) -> Self {
        Self {
            d,
            d_mu,
            model_name: model_name.into(),
            xs: Vec::new(),
            mus: Vec::new(),
            zs: Vec::new(),
            xhats: Vec::new(),
        }
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

    pub fn push(&mut self, x: &[f64], mu: &[f64], z: &[f64], x_hat: &[f64]) {
        debug_assert_eq!(x.len(), self.d);
        debug_assert_eq!(mu.len(), self.d_mu);
        debug_assert_eq!(z.len(), self.d);
        debug_assert_eq!(x_hat.len(), self.d);
        self.xs.extend_from_slice(x);
        self.mus.extend_from_slice(mu);
        self.zs.extend_from_slice(z);
        self.xhats.extend_from_slice(x_hat);
    }

    pub fn sample(&self, m: usize) -> LabeledSample<'_> {
        LabeledSample {
            x_n: &self.xs[m * self.d..(m + 1) * self.d],
            mu: &self.mus[m * self.d_mu..(m + 1) * self.d_mu],
            z: &self.zs[m * self.d..(m + 1) * self.d],
            x_hat_np1: &self.xhats[m * self.d..(m + 1) * self.d],
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::new(BufWriter::new(File::create(path)?));
        w.magic(MAGIC)?;
        w.u16(VERSION)?;
        w.u64(self.d as u64)?;
        w.u64(self.d_mu as u64)?;
        w.u64(self.len() as u64)?;
        w.str(&self.model_name)?;
        for m in 0..self.len() {
            let s = self.sample(m);
            w.f64_slice(s.x_n)?;
            w.f64_slice(s.mu)?;
            w.f64_slice(s.z)?;
            w.f64_slice(s.x_hat_np1)?;
        }
        w.finish()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BinReader::new(BufReader::new(File::open(path)?), path);
        r.expect_magic(MAGIC)?;
        r.expect_version(VERSION)?;
        let d = r.count("state dimension", 1 << 16)?;
        let d_mu = r.count("parameter dimension", 1 << 16)?;
        let n = r.count("sample", 1 << 40)?;
        if d == 0 || d_mu == 0 {
            return Err(r.fail("zero dimensions"));
        }
        let model_name = r.str()?;
        let mut ds = Self::new(d, d_mu, model_name);
        for m in 0..n {
            let x = r.f64_vec(d)?;
            let mu = r.f64_vec(d_mu)?;
            let z = r.f64_vec(d)?;
            let xh = r.f64_vec(d)?;
            if x.iter().chain(&mu).chain(&z).chain(&xh).any(|v| !v.is_finite()) {
                return Err(r.fail(format!("sample {m} contains non-finite entry")));
            }
            ds.push(&x, &mu, &z, &xh);
        }
        r.expect_eof()?;
        Ok(ds)
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        let mut header = Vec::new();
        header.extend((0..self.d).map(|i| format!("x_n_{i}")));
        header.extend((0..self.d_mu).map(|i| format!("mu_{i}")));
        header.extend((0..self.d).map(|i| format!("z_{i}")));
        header.extend((0..self.d).map(|i| format!("x_hat_np1_{i}")));
        writeln!(f, "{}", header.join(","))?;
        for m in 0..self.len() {
            let s = self.sample(m);
            let row: Vec<String> = s
                .x_n
                .iter()
                .chain(s.mu)
                .chain(s.z)
                .chain(s.x_hat_np1)
                .map(|&v| csv_f64(v))
                .collect();
            writeln!(f, "{}", row.join(","))?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Generates `M` labeled samples. Deterministic given `(ds, cfg, seed)` for
/// any worker count: sample `m` owns RNG substream `m` and outputs are
/// collected in sample order.
pub fn generate_labels(
    ds: &ObservedDataset,
    idx: &NeighborIndex,
    cfg: &OdeConfig,
    seed: RngSeed,
) -> Result<LabeledDataset> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if idx.len() != ds.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("index over {} records", ds.len()),
            got: format!("{}", idx.len()),
        });
    }
    let d = ds.d();
    let n_mu = ds.mu_grid.len();
    if cfg.sampling == QuerySampling::StratifiedByMu && ds.mu_block(0).is_none() {
        return Err(Error::InvalidInput(
            "stratified sampling requires a dataset with parameter blocks".into(),
        ));
    }

    let rows: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|m| {
            let mut rng = seed.substream(m as u64);
            let j = match cfg.sampling {
                QuerySampling::Uniform => rng.gen_range(0..ds.len()),
                QuerySampling::StratifiedByMu => {
                    let block = ds.mu_block(m % n_mu).expect("validated above");
                    rng.gen_range(block)
                }
            };
            let query = ds.transition(j);
            let mut z = vec![0.0; d];
            fill_standard_normal(&mut rng, &mut z);

            let run = || -> Result<Vec<f64>> {
                let nn = idx.k_nearest(query.x_n, query.mu, cfg.score.n_neighbors)?;
                let neigh: Vec<Transition<'_>> =
                    nn.iter().map(|&r| ds.transition(r as usize)).collect();
                let cache =
                    ScoreCache::new(query.x_n, query.mu, &neigh, &cfg.score, &cfg.sched)?;
                let mut scratch = OdeScratch::new(d, cache.len());
                let mut state = z.clone();
                integrate(&mut state, &cache, cfg, &mut scratch)?;
                Ok(state)
            };
            let z0 = run().map_err(|e| Error::LabelSample {
                sample: m,
                source: Box::new(e),
            })?;
            let x_hat: Vec<f64> = query.x_n.iter().zip(&z0).map(|(x, dz)| x + dz).collect();
            let mut row_query = Vec::with_capacity(d + ds.d_mu());
            row_query.extend_from_slice(query.x_n);
            row_query.extend_from_slice(query.mu);
            row_query.extend_from_slice(&z);
            Ok((row_query, x_hat))
        })
        .collect();

    let mut out = LabeledDataset::new(d, ds.d_mu(), ds.model_name.clone());
    for row in rows {
        let (qz, x_hat) = row?;
        let (x, rest) = qz.split_at(d);
        let (mu, z) = rest.split_at(ds.d_mu());
        out.push(x, mu, z, &x_hat);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighbors::axis_scales;
    use crate::rng::standard_normal_vec;
    use crate::sde::brownian_drift;
    use crate::simulate::{simulate_dataset, InitLaw, SamplerKind, SimConfig};

    fn base_cfg(n_tau: usize, n_neighbors: usize, n_samples: usize) -> OdeConfig {
        OdeConfig::new(
            n_tau,
            ScoreConfig {
                n_neighbors,
                nu_x: 1.0,
                nu_mu: 0.5,
            },
            crate::score::DEFAULT_DELTA,
            n_samples,
        )
    }

    struct OwnedNeighbors {
        xs: Vec<f64>,
        mus: Vec<f64>,
        xps: Vec<f64>,
        d: usize,
    }

    impl OwnedNeighbors {
        fn constant_displacement(query_x: f64, query_mu: f64, c: f64, n: usize) -> Self {
            let mut s = Self {
                xs: Vec::new(),
                mus: Vec::new(),
                xps: Vec::new(),
                d: 1,
            };
            for _ in 0..n {
                s.xs.push(query_x);
                s.mus.push(query_mu);
                s.xps.push(query_x + c);
            }
            s
        }

        fn gaussian(query_x: f64, query_mu: f64, m: f64, sd: f64, n: usize, seed: u64) -> Self {
            let mut s = Self {
                xs: Vec::new(),
                mus: Vec::new(),
                xps: Vec::new(),
                d: 1,
            };
            let mut rng = RngSeed(seed).rng();
            for _ in 0..n {
                let dx = m + sd * standard_normal_vec(&mut rng, 1)[0];
                s.xs.push(query_x);
                s.mus.push(query_mu);
                s.xps.push(query_x + dx);
            }
            s
        }

        fn views(&self) -> Vec<Transition<'_>> {
            (0..self.xs.len() / self.d)
                .map(|j| Transition {
                    x_n: &self.xs[j * self.d..(j + 1) * self.d],
                    mu: &self.mus[j..j + 1],
                    x_np1: &self.xps[j * self.d..(j + 1) * self.d],
                })
                .collect()
        }
    }

    #[test]
    fn point_mass_target_contracts_to_constant() {
        // The delta regularizer leaves a residual width sqrt(delta), and the
        // explicit Euler scheme resolves the terminal contraction only down
        // to ~|z1|/sqrt(pi n_tau), so the grid here is fine and delta small.
        let c = 0.7;
        let set = OwnedNeighbors::constant_displacement(2.0, 0.5, c, 5);
        let mut cfg = base_cfg(8000, 5, 1);
        cfg.sched = VpSchedule::for_steps(8000, 1e-6);
        for z1 in [-2.0, -1.0, -0.3, 0.0, 0.8, 2.0] {
            let z0 = reverse_ode_solve(&[z1], &[2.0], &[0.5], &set.views(), &cfg).unwrap();
            assert!(
                (z0[0] - c).abs() < 0.02,
                "z1 {z1}: Z0 {} vs {c}",
                z0[0]
            );
        }
    }

    #[test]
    fn latent_to_output_is_monotone() {
        let set = OwnedNeighbors::gaussian(2.0, -0.5, -0.05, 0.316, 400, 5);
        let cfg = base_cfg(400, 400, 1);
        let grid: Vec<f64> = (-8..=8).map(|i| i as f64 / 4.0).collect();
        let outs: Vec<f64> = grid
            .iter()
            .map(|&z1| reverse_ode_solve(&[z1], &[2.0], &[-0.5], &set.views(), &cfg).unwrap()[0])
            .collect();
        for w in outs.windows(2) {
            assert!(w[1] > w[0], "not monotone: {outs:?}");
        }
    }

    #[test]
    fn solver_is_deterministic() {
        let set = OwnedNeighbors::gaussian(1.0, 0.5, 0.1, 0.3, 100, 9);
        let cfg = base_cfg(200, 100, 1);
        let a = reverse_ode_solve(&[0.4], &[1.0], &[0.5], &set.views(), &cfg).unwrap();
        let b = reverse_ode_solve(&[0.4], &[1.0], &[0.5], &set.views(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_refinement_first_order() {
        // Rate measurement needs every run to solve the same ODE: the clamp
        // is frozen at the coarsest run's value instead of scaling with
        // n_tau, and delta is large enough that the 400-atom empirical
        // mixture stays smooth down to tau = 0 (otherwise a half-order
        // snap-to-atom component pollutes the fit). Error is RMS over a
        // batch of latents so sign crossings of individual trajectories
        // cannot fake the slope.
        let set = OwnedNeighbors::gaussian(2.0, 0.5, 0.05, 0.316, 400, 23);
        let views = set.views();
        let z1s = standard_normal_vec(&mut RngSeed(4).rng(), 24);
        let solve_all = |n_tau: usize| -> Vec<f64> {
            let mut cfg = base_cfg(n_tau, 400, 1);
            cfg.sched = VpSchedule {
                delta_reg: 3e-3,
                tau_clip: 0.004,
            };
            z1s.iter()
                .map(|&z1| reverse_ode_solve(&[z1], &[2.0], &[0.5], &views, &cfg).unwrap()[0])
                .collect()
        };
        let reference = solve_all(16_000);
        let mut points = Vec::new();
        for n_tau in [125usize, 250, 500, 1000] {
            let outs = solve_all(n_tau);
            let rms = (outs
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / outs.len() as f64)
                .sqrt();
            points.push(((1.0 / n_tau as f64).ln(), rms.ln()));
        }
        let n = points.len() as f64;
        let sx: f64 = points.iter().map(|p| p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(
            (slope - 1.0).abs() <= 0.3,
            "convergence slope {slope}, points {points:?}"
        );
    }

    fn small_dataset() -> (ObservedDataset, NeighborIndex) {
        let model = brownian_drift();
        let cfg = SimConfig {
            n_mu: 21,
            n_traj: 40,
            t_final: 1.0,
            dt: 0.1,
            fine_dt: 0.01,
            init: InitLaw::UniformBox {
                low: vec![-5.0],
                high: vec![5.0],
            },
            sampler: SamplerKind::EulerMaruyama,
        };
        let ds = simulate_dataset(&model, &cfg, RngSeed(100)).unwrap();
        let idx = NeighborIndex::build(&ds, &axis_scales(1, 1, 1.0, 0.5)).unwrap();
        (ds, idx)
    }

    #[test]
    fn single_sample_records_latent_verbatim() {
        let (ds, idx) = small_dataset();
        let cfg = base_cfg(50, 20, 1);
        let labels = generate_labels(&ds, &idx, &cfg, RngSeed(7)).unwrap();
        assert_eq!(labels.len(), 1);
        let s = labels.sample(0);
        // The recorded latent is the exact draw from substream 0.
        let mut rng = RngSeed(7).substream(0);
        let _j: usize = rng.gen_range(0..ds.len());
        let z = standard_normal_vec(&mut rng, 1);
        assert_eq!(s.z, &z[..]);
        assert!(s.x_hat_np1[0].is_finite());
    }

    #[test]
    fn label_file_deterministic() {
        let (ds, idx) = small_dataset();
        let cfg = base_cfg(30, 15, 40);
        let a = generate_labels(&ds, &idx, &cfg, RngSeed(3)).unwrap();
        let b = generate_labels(&ds, &idx, &cfg, RngSeed(3)).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let pa = dir.path().join("a.pflb");
        let pb = dir.path().join("b.pflb");
        a.save(&pa).unwrap();
        b.save(&pb).unwrap();
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
    }

    #[test]
    fn stratified_sampling_cycles_parameter_blocks() {
        let (ds, idx) = small_dataset();
        let mut cfg = base_cfg(30, 15, 42);
        cfg.sampling = QuerySampling::StratifiedByMu;
        let labels = generate_labels(&ds, &idx, &cfg, RngSeed(3)).unwrap();
        for m in 0..labels.len() {
            let expect = &ds.mu_grid[m % ds.mu_grid.len()];
            assert_eq!(labels.sample(m).mu, &expect[..]);
        }
    }

    #[test]
    fn label_mean_tracks_conditional_mean() {
        // Scaled run over a real simulated corpus; compares the generated
        // displacement mean in a parameter band against the analytic
        // conditional mean.
        let model = brownian_drift();
        let sim = SimConfig {
            n_mu: 21,
            n_traj: 300,
            t_final: 1.0,
            dt: 0.1,
            fine_dt: 0.002,
            init: InitLaw::UniformBox {
                low: vec![-5.0],
                high: vec![5.0],
            },
            sampler: SamplerKind::EulerMaruyama,
        };
        let ds = simulate_dataset(&model, &sim, RngSeed(41)).unwrap();
        let idx = NeighborIndex::build(&ds, &axis_scales(1, 1, 1.0, 0.5)).unwrap();
        let cfg = base_cfg(200, 500, 5000);
        let labels = generate_labels(&ds, &idx, &cfg, RngSeed(8)).unwrap();

        // Band edges padded one ulp-ish past the grid values 0.4 and 0.6.
        let mut disp = Vec::new();
        let mut zs = Vec::new();
        let mut sum_mu = 0.0;
        for m in 0..labels.len() {
            let s = labels.sample(m);
            if (0.399..=0.601).contains(&s.mu[0]) {
                disp.push(s.x_hat_np1[0] - s.x_n[0]);
                zs.push(s.z[0]);
                sum_mu += s.mu[0];
            }
        }
        let count = disp.len();
        assert!(count > 400, "band too sparse: {count}");
        let n = count as f64;
        let mean_disp = disp.iter().sum::<f64>() / n;
        let mean_z = zs.iter().sum::<f64>() / n;
        // The latent is a zero-mean control variate: regressing it out
        // removes most of the sqrt(dt) displacement noise without touching
        // any bias of the generator.
        let var_z = zs.iter().map(|z| (z - mean_z).powi(2)).sum::<f64>() / n;
        let cov = disp
            .iter()
            .zip(&zs)
            .map(|(d, z)| (d - mean_disp) * (z - mean_z))
            .sum::<f64>()
            / n;
        let adjusted = mean_disp - cov / var_z * mean_z;
        let expect = sum_mu / n * 0.1;
        assert!(
            (adjusted - expect).abs() < 0.01,
            "adjusted mean {adjusted} (raw {mean_disp}) vs {expect} over {count} samples"
        );
    }

    #[test]
    fn label_distribution_matches_conditional_law() {
        // True-conditional neighbors at a fixed query: the generated Z0
        // ensemble must reproduce the analytic one-step law.
        let set = OwnedNeighbors::gaussian(2.0, 0.5, 0.05, 0.1f64.sqrt(), 2000, 77);
        let views = set.views();
        let cfg = base_cfg(250, 2000, 1);
        let mut rng = RngSeed(15).rng();
        let n = 5000;
        let mut z0s = Vec::with_capacity(n);
        let cache = ScoreCache::new(&[2.0], &[0.5], &views, &cfg.score, &cfg.sched).unwrap();
        let mut scratch = OdeScratch::new(1, cache.len());
        for _ in 0..n {
            let mut z = standard_normal_vec(&mut rng, 1);
            integrate(&mut z, &cache, &cfg, &mut scratch).unwrap();
            z0s.push(z[0]);
        }
        let mean = z0s.iter().sum::<f64>() / n as f64;
        let var = z0s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((mean - 0.05).abs() < 0.02, "mean {mean}");
        assert!((var - 0.1).abs() / 0.1 < 0.05, "var {var}");
    }

    #[test]
    fn save_load_round_trip() {
        let (ds, idx) = small_dataset();
        let cfg = base_cfg(30, 15, 10);
        let labels = generate_labels(&ds, &idx, &cfg, RngSeed(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.pflb");
        labels.save(&path).unwrap();
        let back = LabeledDataset::load(&path).unwrap();
        assert_eq!(labels, back);

        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.pflb");
        std::fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(
            LabeledDataset::load(&cut),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn csv_row_count_matches() {
        let (ds, idx) = small_dataset();
        let cfg = base_cfg(30, 15, 12);
        let labels = generate_labels(&ds, &idx, &cfg, RngSeed(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        labels.export_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 13);
        assert!(text.lines().next().unwrap().contains("z_0"));
    }

}
