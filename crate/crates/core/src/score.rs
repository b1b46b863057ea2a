//! Variance-preserving diffusion schedule and the training-free score
//! estimator.
//!
//! The forward noising process scales displacements by `alpha_tau = 1 - tau`
//! and adds variance `beta_tau^2 = tau`, so the marginal at `tau = 1` is a
//! standard Gaussian. The conditional score of the noised displacement is
//! estimated without any learned component: it is a kernel-weighted average
//! of local scores over observed neighbor displacements, with one Gaussian
//! factor for the diffusion transition and one each for spatial and
//! parameter proximity. Weights are computed in log space and normalized via
//! a max shift; the plain product underflows for small `beta_tau^2`.
//!
//! Two closed-form oracles live here for testing: the exact score of a
//! Gaussian displacement law, and the softmax score of an empirical
//! point-mass mixture.

use crate::error::{Error, Result};
use crate::simulate::Transition;

/// Default regularizer added to `beta_tau^2`.
pub const DEFAULT_DELTA: f64 = 1e-4;

/// Scaling factor `alpha_tau = 1 - tau` of the noising process.
pub fn alpha(tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(1.0 - tau)
}

/// Noise variance `beta_tau^2 = tau` of the noising process.
pub fn beta_sq(tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(tau)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::TauOutOfRange(tau));
    }
    Ok(())
}

/// The variance-preserving schedule with its regularizer and the clamp that
/// keeps the reverse-ODE coefficients off the `tau = 1` singularity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpSchedule {
    /// Regularizer added to `beta_tau^2` in the local score and the
    /// diffusion kernel.
    pub delta_reg: f64,
    /// Coefficients are evaluated at `min(tau, 1 - tau_clip)`.
    pub tau_clip: f64,
}

impl Default for VpSchedule {
    fn default() -> Self {
        Self {
            delta_reg: DEFAULT_DELTA,
            tau_clip: 5e-4,
        }
    }
}

impl VpSchedule {
    /// Schedule whose clamp matches an `n_tau`-step reverse integration:
    /// `tau_clip = 1 / (2 n_tau)`, half the first Euler step.
    pub fn for_steps(n_tau: usize, delta_reg: f64) -> Self {
        Self {
            delta_reg,
            tau_clip: 0.5 / n_tau.max(1) as f64,
        }
    }

    fn clamp(&self, tau: f64) -> f64 {
        tau.clamp(0.0, 1.0 - self.tau_clip)
    }

    /// Reverse-ODE drift coefficient `f(tau) = -1 / (1 - tau)` at the
    /// clamped time.
    pub fn drift_f(&self, tau: f64) -> f64 {
        -1.0 / (1.0 - self.clamp(tau))
    }

    /// Squared diffusion coefficient `g^2(tau) = (1 + tau) / (1 - tau)` at
    /// the clamped time.
    pub fn diff_g_sq(&self, tau: f64) -> f64 {
        let t = self.clamp(tau);
        (1.0 + t) / (1.0 - t)
    }
}

/// Knobs of the kernel-weighted estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    /// Neighbors per query.
    pub n_neighbors: usize,
    /// Spatial bandwidth.
    pub nu_x: f64,
    /// Parameter bandwidth.
    pub nu_mu: f64,
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_neighbors == 0 {
            return Err(Error::InvalidInput("n_neighbors must be >= 1".into()));
        }
        if !(self.nu_x > 0.0 && self.nu_mu > 0.0) {
            return Err(Error::InvalidInput("bandwidths must be positive".into()));
        }
        Ok(())
    }
}

/// Per-query state of the estimator: neighbor displacements plus the
/// tau-independent log kernels. Building it once per query and reusing it
/// across the reverse-ODE steps gives results identical to re-deriving it at
/// every step.
pub struct ScoreCache {
    d: usize,
    /// Row-major `n x d` neighbor displacements.
    dx: Vec<f64>,
    /// Spatial + parameter log kernel per neighbor.
    log_kern: Vec<f64>,
    delta: f64,
}

impl ScoreCache {
    pub fn new(
        query_x: &[f64],
        query_mu: &[f64],
        neighbors: &[Transition<'_>],
        cfg: &ScoreConfig,
        sched: &VpSchedule,
    ) -> Result<Self> {
        cfg.validate()?;
        if neighbors.is_empty() {
            return Err(Error::InvalidInput("neighbor list is empty".into()));
        }
        let d = query_x.len();
        let mut dx = Vec::with_capacity(neighbors.len() * d);
        let mut log_kern = Vec::with_capacity(neighbors.len());
        let inv_two_nu_x2 = 0.5 / (cfg.nu_x * cfg.nu_x);
        let inv_two_nu_mu2 = 0.5 / (cfg.nu_mu * cfg.nu_mu);
        for t in neighbors {
            if t.x_n.len() != d || t.mu.len() != query_mu.len() {
                return Err(Error::ShapeMismatch {
                    expected: format!("neighbor of shape ({d}, {})", query_mu.len()),
                    got: format!("({}, {})", t.x_n.len(), t.mu.len()),
                });
            }
            for i in 0..d {
                dx.push(t.x_np1[i] - t.x_n[i]);
            }
            let mut sq_x = 0.0;
            for i in 0..d {
                let diff = query_x[i] - t.x_n[i];
                sq_x += diff * diff;
            }
            let mut sq_mu = 0.0;
            for i in 0..query_mu.len() {
                let diff = query_mu[i] - t.mu[i];
                sq_mu += diff * diff;
            }
            log_kern.push(-sq_x * inv_two_nu_x2 - sq_mu * inv_two_nu_mu2);
        }
        Ok(Self {
            d,
            dx,
            log_kern,
            delta: sched.delta_reg,
        })
    }

    pub fn len(&self) -> usize {
        self.log_kern.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_kern.is_empty()
    }

    /// Writes the estimated score at `(z, tau)` into `out`, using `logw` as
    /// scratch (length [`len`](Self::len)).
    pub fn score_into(
        &self,
        z: &[f64],
        tau: f64,
        logw: &mut [f64],
        out: &mut [f64],
    ) -> Result<()> {
        let a = alpha(tau)?;
        let b2 = tau + self.delta;
        let n = self.len();
        let d = self.d;
        let inv_two_b2 = 0.5 / b2;
        let mut max_logw = f64::NEG_INFINITY;
        for l in 0..n {
            let mut sq = 0.0;
            for i in 0..d {
                let r = z[i] - a * self.dx[l * d + i];
                sq += r * r;
            }
            let lw = -sq * inv_two_b2 + self.log_kern[l];
            logw[l] = lw;
            if lw > max_logw {
                max_logw = lw;
            }
        }
        if !max_logw.is_finite() {
            return Err(Error::DegenerateWeights);
        }
        out.fill(0.0);
        let mut w_sum = 0.0;
        for l in 0..n {
            let w = (logw[l] - max_logw).exp();
            w_sum += w;
            for i in 0..d {
                out[i] += w * (a * self.dx[l * d + i] - z[i]);
            }
        }
        let scale = 1.0 / (w_sum * b2);
        for v in out.iter_mut() {
            *v *= scale;
        }
        Ok(())
    }

    /// Normalized kernel weights at `(z, tau)`.
    pub fn weights(&self, z: &[f64], tau: f64) -> Result<Vec<f64>> {
        let a = alpha(tau)?;
        let b2 = tau + self.delta;
        let inv_two_b2 = 0.5 / b2;
        let d = self.d;
        let logw: Vec<f64> = (0..self.len())
            .map(|l| {
                let mut sq = 0.0;
                for i in 0..d {
                    let r = z[i] - a * self.dx[l * d + i];
                    sq += r * r;
                }
                -sq * inv_two_b2 + self.log_kern[l]
            })
            .collect();
        let max_logw = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max_logw.is_finite() {
            return Err(Error::DegenerateWeights);
        }
        let mut w: Vec<f64> = logw.iter().map(|&lw| (lw - max_logw).exp()).collect();
        let sum: f64 = w.iter().sum();
        for v in &mut w {
            *v /= sum;
        }
        Ok(w)
    }
}

/// Kernel-weighted Monte Carlo estimate of the conditional score at
/// `(z, tau)` for the query point `(query_x, query_mu)`.
pub fn estimate_score(
    z: &[f64],
    tau: f64,
    query_x: &[f64],
    query_mu: &[f64],
    neighbors: &[Transition<'_>],
    cfg: &ScoreConfig,
    sched: &VpSchedule,
) -> Result<Vec<f64>> {
    let cache = ScoreCache::new(query_x, query_mu, neighbors, cfg, sched)?;
    let mut logw = vec![0.0; cache.len()];
    let mut out = vec![0.0; z.len()];
    cache.score_into(z, tau, &mut logw, &mut out)?;
    Ok(out)
}

/// Closed-form score when the displacement law is the isotropic Gaussian
/// `N(m, s_sq I)`: `-(z - alpha m) / (alpha^2 s_sq + beta^2)` elementwise,
/// with the denominator floored at `delta_reg`.
pub fn exact_gaussian_score(
    z: &[f64],
    tau: f64,
    m: &[f64],
    s_sq: f64,
    sched: &VpSchedule,
) -> Result<Vec<f64>> {
    if s_sq < 0.0 {
        return Err(Error::InvalidInput(format!("negative variance {s_sq}")));
    }
    let a = alpha(tau)?;
    let b2 = beta_sq(tau)?;
    let denom = (a * a * s_sq + b2).max(sched.delta_reg);
    Ok(z.iter()
        .zip(m)
        .map(|(&zi, &mi)| -(zi - a * mi) / denom)
        .collect())
}

/// Brute-force oracle: the exact score of an empirical point-mass mixture of
/// displacements, i.e. the softmax-weighted local-score sum with only the
/// diffusion kernel. Independent of the estimator path above.
pub fn empirical_exact_score(
    z: &[f64],
    tau: f64,
    displacements: &[Vec<f64>],
    sched: &VpSchedule,
) -> Result<Vec<f64>> {
    if displacements.is_empty() {
        return Err(Error::InvalidInput("displacement list is empty".into()));
    }
    let a = alpha(tau)?;
    let b2 = tau + sched.delta_reg;
    let logw: Vec<f64> = displacements
        .iter()
        .map(|dx| {
            let sq: f64 = z
                .iter()
                .zip(dx)
                .map(|(&zi, &di)| (zi - a * di) * (zi - a * di))
                .sum();
            -sq / (2.0 * b2)
        })
        .collect();
    let max_logw = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logw.iter().map(|&lw| (lw - max_logw).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut out = vec![0.0; z.len()];
    for (w, dx) in weights.iter().zip(displacements) {
        for i in 0..z.len() {
            out[i] += w / total * (-(z[i] - a * dx[i]) / b2);
        }
    }
    Ok(out)
}
