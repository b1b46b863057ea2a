//! Parameter-dependent SDE models and their closed-form statistics.
//!
//! A model is the pair of coefficient functions of
//! `dX_t = a(X_t, mu) dt + b(X_t, mu) dW_t` together with its dimensions and
//! parameter box. Three benchmark models ship with the crate and carry
//! analytic one-step, terminal, and stationary statistics used as oracles by
//! the evaluation and test suites:
//!
//! - [`brownian_drift`]: drift `mu`, unit diffusion, `mu in [-1, 1]`.
//! - [`scalar_ou`]: drift `-mu x`, diffusion `sqrt(1 + mu^2)`, `mu in [0.5, 2]`.
//! - [`planar_ou`]: 2-d spiral sink `-A x` with `A = [[mu, -w], [w, mu]]`,
//!   isotropic diffusion `sigma I`, `mu in [0.5, 2]`.
//!
//! Custom models are constructed programmatically with [`SdeModel::custom`];
//! they simulate fine but have no analytic oracle.

use rand::Rng;

use crate::error::{Error, Result};

/// Rotation frequency of the planar benchmark.
pub const PLANAR_OMEGA: f64 = 1.0;
/// Noise amplitude of the planar benchmark.
pub const PLANAR_SIGMA: f64 = 0.5;

type CoeffFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Benchmark {
    BrownianDrift,
    ScalarOu,
    PlanarOu,
}

/// A parameter-dependent SDE: coefficient functions plus dimensions and the
/// admissible parameter box. Immutable after construction.
pub struct SdeModel {
    name: String,
    d: usize,
    m: usize,
    d_mu: usize,
    mu_domain: Vec<(f64, f64)>,
    drift: Box<CoeffFn>,
    diffusion: Box<CoeffFn>,
    benchmark: Option<Benchmark>,
}

impl SdeModel {
    /// Builds a custom model. `drift` writes a `d`-vector, `diffusion` writes
    /// a row-major `d x m` matrix.
    pub fn custom(
        name: impl Into<String>,
        d: usize,
        m: usize,
        mu_domain: Vec<(f64, f64)>,
        drift: Box<CoeffFn>,
        diffusion: Box<CoeffFn>,
    ) -> Result<Self> {
        if d == 0 || m == 0 || mu_domain.is_empty() {
            return Err(Error::InvalidInput(
                "model dimensions must be positive".into(),
            ));
        }
        for &(lo, hi) in &mu_domain {
            if !(hi > lo) {
                return Err(Error::InvalidInput(format!(
                    "mu_domain axis [{lo}, {hi}] has no positive extent"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            d,
            m,
            d_mu: mu_domain.len(),
            mu_domain,
            drift,
            diffusion,
            benchmark: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// State dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Brownian dimension.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Parameter dimension.
    pub fn d_mu(&self) -> usize {
        self.d_mu
    }

    /// Axis-aligned parameter box.
    pub fn mu_domain(&self) -> &[(f64, f64)] {
        &self.mu_domain
    }

    /// Evaluates the drift into `out` (length `d`).
    pub fn drift_into(&self, x: &[f64], mu: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.d);
        debug_assert_eq!(mu.len(), self.d_mu);
        debug_assert_eq!(out.len(), self.d);
        (self.drift)(x, mu, out);
    }

    /// Evaluates the diffusion matrix into `out` (row-major `d x m`).
    pub fn diffusion_into(&self, x: &[f64], mu: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.d * self.m);
        (self.diffusion)(x, mu, out);
    }

    pub fn drift(&self, x: &[f64], mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.drift_into(x, mu, &mut out);
        out
    }

    pub fn diffusion(&self, x: &[f64], mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d * self.m];
        self.diffusion_into(x, mu, &mut out);
        out
    }

    /// True when analytic transition statistics are available.
    pub fn has_oracle(&self) -> bool {
        self.benchmark.is_some()
    }
}

impl std::fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeModel")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("m", &self.m)
            .field("d_mu", &self.d_mu)
            .field("mu_domain", &self.mu_domain)
            .finish()
    }
}

/// Brownian motion with parameter-dependent drift: `a = mu`, `b = 1`.
pub fn brownian_drift() -> SdeModel {
    let mut model = SdeModel::custom(
        "brownian-drift",
        1,
        1,
        vec![(-1.0, 1.0)],
        Box::new(|_x, mu, out| out[0] = mu[0]),
        Box::new(|_x, _mu, out| out[0] = 1.0),
    )
    .expect("static model");
    model.benchmark = Some(Benchmark::BrownianDrift);
    model
}

/// Scalar Ornstein-Uhlenbeck process with the parameter in both
/// coefficients: `a = -mu x`, `b = sqrt(1 + mu^2)`.
pub fn scalar_ou() -> SdeModel {
    let mut model = SdeModel::custom(
        "scalar-ou",
        1,
        1,
        vec![(0.5, 2.0)],
        Box::new(|x, mu, out| out[0] = -mu[0] * x[0]),
        Box::new(|_x, mu, out| out[0] = (1.0 + mu[0] * mu[0]).sqrt()),
    )
    .expect("static model");
    model.benchmark = Some(Benchmark::ScalarOu);
    model
}

/// Planar Ornstein-Uhlenbeck process with rotation: `a = -A x` with
/// `A = [[mu, -w], [w, mu]]`, `b = sigma I_2`.
pub fn planar_ou() -> SdeModel {
    let mut model = SdeModel::custom(
        "planar-ou",
        2,
        2,
        vec![(0.5, 2.0)],
        Box::new(|x, mu, out| {
            out[0] = -(mu[0] * x[0] - PLANAR_OMEGA * x[1]);
            out[1] = -(PLANAR_OMEGA * x[0] + mu[0] * x[1]);
        }),
        Box::new(|_x, _mu, out| {
            out[0] = PLANAR_SIGMA;
            out[1] = 0.0;
            out[2] = 0.0;
            out[3] = PLANAR_SIGMA;
        }),
    )
    .expect("static model");
    model.benchmark = Some(Benchmark::PlanarOu);
    model
}

/// Registry lookup for the CLI: benchmark models by name.
pub fn by_name(name: &str) -> Option<SdeModel> {
    match name {
        "brownian-drift" => Some(brownian_drift()),
        "scalar-ou" => Some(scalar_ou()),
        "planar-ou" => Some(planar_ou()),
        _ => None,
    }
}

/// Names accepted by [`by_name`].
pub const MODEL_NAMES: [&str; 3] = ["brownian-drift", "scalar-ou", "planar-ou"];

/// Mean and covariance of a Gaussian law on the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    /// Row-major `d x d` covariance.
    pub cov: Vec<f64>,
}

impl GaussianStats {
    pub fn d(&self) -> usize {
        self.mean.len()
    }

    /// Variance along axis `i`.
    pub fn var(&self, i: usize) -> f64 {
        self.cov[i * self.d() + i]
    }

    /// Checks symmetry (1e-12) and eigenvalues >= -1e-12 for d <= 2.
    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if self.cov.len() != d * d {
            return Err(Error::ShapeMismatch {
                expected: format!("{d}x{d} covariance"),
                got: format!("{} entries", self.cov.len()),
            });
        }
        for i in 0..d {
            for j in (i + 1)..d {
                if (self.cov[i * d + j] - self.cov[j * d + i]).abs() > 1e-12 {
                    return Err(Error::InvalidInput("covariance not symmetric".into()));
                }
            }
        }
        let min_eig = match d {
            1 => self.cov[0],
            2 => {
                let (a, b, c) = (self.cov[0], self.cov[1], self.cov[3]);
                let tr = a + c;
                let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
                0.5 * (tr - disc)
            }
            _ => {
                return Err(Error::InvalidInput(
                    "covariance validation supports d <= 2".into(),
                ))
            }
        };
        if min_eig < -1e-12 {
            return Err(Error::InvalidInput(format!(
                "covariance has negative eigenvalue {min_eig}"
            )));
        }
        Ok(())
    }
}

/// `exp(-A t)` for `A = [[mu, -omega], [omega, mu]]`, row-major 2x2:
/// `e^{-mu t} [[cos wt, sin wt], [-sin wt, cos wt]]`.
pub fn matrix_exponential_2d(mu: f64, omega: f64, t: f64) -> Result<[f64; 4]> {
    if t < 0.0 {
        return Err(Error::InvalidInput(format!("negative time {t}")));
    }
    let decay = (-mu * t).exp();
    let (s, c) = (omega * t).sin_cos();
    Ok([decay * c, decay * s, -decay * s, decay * c])
}

fn mat2_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

/// One-step transition law `X_{n+1} | X_n = x` over a window `dt`.
pub fn exact_conditional(model: &SdeModel, x: &[f64], mu: &[f64], dt: f64) -> Result<GaussianStats> {
    if dt <= 0.0 {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let bench = model
        .benchmark
        .ok_or_else(|| Error::NoAnalyticOracle(model.name.clone()))?;
    match bench {
        Benchmark::BrownianDrift => Ok(GaussianStats {
            mean: vec![x[0] + mu[0] * dt],
            cov: vec![dt],
        }),
        Benchmark::ScalarOu => {
            let m = mu[0];
            let decay = (-m * dt).exp();
            let var = (1.0 + m * m) / (2.0 * m) * (1.0 - (-2.0 * m * dt).exp());
            Ok(GaussianStats {
                mean: vec![x[0] * decay],
                cov: vec![var],
            })
        }
        Benchmark::PlanarOu => {
            let e = matrix_exponential_2d(mu[0], PLANAR_OMEGA, dt)?;
            let mean = vec![e[0] * x[0] + e[1] * x[1], e[2] * x[0] + e[3] * x[1]];
            let v = PLANAR_SIGMA * PLANAR_SIGMA / (2.0 * mu[0]) * (1.0 - (-2.0 * mu[0] * dt).exp());
            Ok(GaussianStats {
                mean,
                cov: vec![v, 0.0, 0.0, v],
            })
        }
    }
}

/// Terminal law at time `t_final` from a Gaussian initial condition
/// `N(m0, s0_cov)`. `t_final = 0` returns the initial law.
pub fn exact_terminal(
    model: &SdeModel,
    m0: &[f64],
    s0_cov: &[f64],
    mu: &[f64],
    t_final: f64,
) -> Result<GaussianStats> {
    if t_final < 0.0 {
        return Err(Error::InvalidInput(format!("negative horizon {t_final}")));
    }
    let bench = model
        .benchmark
        .ok_or_else(|| Error::NoAnalyticOracle(model.name.clone()))?;
    match bench {
        Benchmark::BrownianDrift => Ok(GaussianStats {
            mean: vec![m0[0] + mu[0] * t_final],
            cov: vec![s0_cov[0] + t_final],
        }),
        Benchmark::ScalarOu => {
            let m = mu[0];
            let decay2 = (-2.0 * m * t_final).exp();
            let var = s0_cov[0] * decay2 + (1.0 + m * m) / (2.0 * m) * (1.0 - decay2);
            Ok(GaussianStats {
                mean: vec![m0[0] * (-m * t_final).exp()],
                cov: vec![var],
            })
        }
        Benchmark::PlanarOu => {
            let e = matrix_exponential_2d(mu[0], PLANAR_OMEGA, t_final)?;
            let mean = vec![e[0] * m0[0] + e[1] * m0[1], e[2] * m0[0] + e[3] * m0[1]];
            let s0: [f64; 4] = s0_cov
                .try_into()
                .map_err(|_| Error::ShapeMismatch {
                    expected: "2x2 initial covariance".into(),
                    got: format!("{} entries", s0_cov.len()),
                })?;
            let et = [e[0], e[2], e[1], e[3]];
            let mut cov = mat2_mul(&mat2_mul(&e, &s0), &et);
            let v = PLANAR_SIGMA * PLANAR_SIGMA / (2.0 * mu[0])
                * (1.0 - (-2.0 * mu[0] * t_final).exp());
            cov[0] += v;
            cov[3] += v;
            Ok(GaussianStats {
                mean,
                cov: cov.to_vec(),
            })
        }
    }
}

/// Stationary covariance: `(1 + mu^2) / (2 mu)` for the scalar OU model,
/// `sigma^2 / (2 mu) I_2` for the planar one. The drifted Brownian motion
/// has no stationary law.
pub fn stationary_variance(model: &SdeModel, mu: &[f64]) -> Result<Vec<f64>> {
    let bench = model
        .benchmark
        .ok_or_else(|| Error::NoStationaryLaw(model.name.clone()))?;
    match bench {
        Benchmark::BrownianDrift => Err(Error::NoStationaryLaw(model.name.clone())),
        Benchmark::ScalarOu => {
            let m = mu[0];
            Ok(vec![(1.0 + m * m) / (2.0 * m)])
        }
        Benchmark::PlanarOu => {
            let v = PLANAR_SIGMA * PLANAR_SIGMA / (2.0 * mu[0]);
            Ok(vec![v, 0.0, 0.0, v])
        }
    }
}

/// Draws one sample from the model's stationary law (zero-mean Gaussian with
/// [`stationary_variance`]).
pub fn sample_stationary<R: Rng>(model: &SdeModel, mu: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let cov = stationary_variance(model, mu)?;
    let mean = vec![0.0; model.d];
    sample_gaussian(&GaussianStats { mean, cov }, rng)
}

/// Draws one sample from `N(mean, cov)` via Cholesky factorization.
pub fn sample_gaussian<R: Rng>(stats: &GaussianStats, rng: &mut R) -> Result<Vec<f64>> {
    let d = stats.d();
    let chol = cholesky(&stats.cov, d)?;
    let xi = crate::rng::standard_normal_vec(rng, d);
    let mut out = stats.mean.clone();
    for i in 0..d {
        for j in 0..=i {
            out[i] += chol[i * d + j] * xi[j];
        }
    }
    Ok(out)
}

/// Lower-triangular Cholesky factor of a row-major SPD matrix. Zero diagonal
/// entries are tolerated so degenerate (zero-variance) laws sample exactly.
pub fn cholesky(cov: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = cov[i * d + j];
            for k in 0..j {
                sum -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if sum < -1e-12 {
                    return Err(Error::InvalidInput(
                        "covariance not positive semidefinite".into(),
                    ));
                }
                l[i * d + i] = sum.max(0.0).sqrt();
            } else if l[j * d + j] > 0.0 {
                l[i * d + j] = sum / l[j * d + j];
            }
        }
    }
    Ok(l)
}
