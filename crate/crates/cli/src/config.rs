//! Run configuration: one TOML file with a block per pipeline stage.
//!
//! Unknown keys are hard errors so a run is always fully described by its
//! file. Every field is validated against the stage preconditions before
//! anything executes.

use serde::{Deserialize, Serialize};

use paraflow::labels::{OdeConfig, QuerySampling};
use paraflow::score::ScoreConfig;
use paraflow::sde::SdeModel;
use paraflow::simulate::{InitLaw, SamplerKind, SimConfig};
use paraflow::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    pub simulation: SimBlock,
    pub score: ScoreBlock,
    pub train: TrainBlock,
    pub eval: EvalBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub n_mu: usize,
    pub n_traj: usize,
    pub t_final: f64,
    pub dt: f64,
    pub fine_dt: f64,
    pub init: InitBlock,
    #[serde(default = "default_sampler")]
    pub sampler: String,
    pub seed: u64,
}

fn default_sampler() -> String {
    "euler".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitBlock {
    /// "uniform" or "stationary".
    pub law: String,
    #[serde(default)]
    pub low: Vec<f64>,
    #[serde(default)]
    pub high: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreBlock {
    pub n_neighbors: usize,
    pub nu_x: f64,
    pub nu_mu: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub n_tau: usize,
    pub m_labels: usize,
    #[serde(default = "default_sampling")]
    pub query_sampling: String,
    pub seed: u64,
}

fn default_delta() -> f64 {
    paraflow::score::DEFAULT_DELTA
}

fn default_sampling() -> String {
    "uniform".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainBlock {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub max_epochs: usize,
    pub c_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalBlock {
    /// Query states for conditional sweeps.
    pub x_queries: Vec<Vec<f64>>,
    pub mu_grid: GridBlock,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub heatmap: Option<HeatmapBlock>,
    #[serde(default)]
    pub terminal: Option<TerminalBlock>,
    #[serde(default)]
    pub variance: Option<VarianceBlock>,
    #[serde(default)]
    pub thresholds: Option<Thresholds>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    /// Uniform point count over the model's parameter box, or explicit
    /// values; exactly one must be given.
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub values: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapBlock {
    pub x_query: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalBlock {
    pub m0: Vec<f64>,
    /// Diagonal of the initial covariance.
    pub s0_diag: Vec<f64>,
    pub mus: Vec<Vec<f64>>,
    pub n_steps: usize,
    pub n_traj: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceBlock {
    pub x0: Vec<f64>,
    pub mus: Vec<Vec<f64>>,
    pub n_steps: usize,
    pub n_traj: usize,
}

/// Gates applied by `evaluate`; violation exits with code 4.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default)]
    pub max_mean_abs_err: Option<f64>,
    #[serde(default)]
    pub max_var_rel_err: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        cfg.model()?;
        Ok(cfg)
    }

    pub fn model(&self) -> Result<SdeModel, Error> {
        paraflow::sde::by_name(&self.model).ok_or_else(|| {
            Error::InvalidInput(format!(
                "model: unknown model `{}` (choose one of {:?})",
                self.model,
                paraflow::sde::MODEL_NAMES
            ))
        })
    }

    pub fn sim_config(&self) -> Result<SimConfig, Error> {
        let b = &self.simulation;
        let init = match b.init.law.as_str() {
            "uniform" => InitLaw::UniformBox {
                low: b.init.low.clone(),
                high: b.init.high.clone(),
            },
            "stationary" => InitLaw::Stationary,
            other => {
                return Err(Error::InvalidInput(format!(
                    "simulation.init.law: unknown law `{other}` (uniform | stationary)"
                )))
            }
        };
        let sampler = match b.sampler.as_str() {
            "euler" => SamplerKind::EulerMaruyama,
            "exact" => SamplerKind::ExactTransition,
            other => {
                return Err(Error::InvalidInput(format!(
                    "simulation.sampler: unknown sampler `{other}` (euler | exact)"
                )))
            }
        };
        Ok(SimConfig {
            n_mu: b.n_mu,
            n_traj: b.n_traj,
            t_final: b.t_final,
            dt: b.dt,
            fine_dt: b.fine_dt,
            init,
            sampler,
        })
    }

    pub fn ode_config(&self) -> Result<OdeConfig, Error> {
        let b = &self.score;
        let sampling = match b.query_sampling.as_str() {
            "uniform" => QuerySampling::Uniform,
            "stratified" => QuerySampling::StratifiedByMu,
            other => {
                return Err(Error::InvalidInput(format!(
                    "score.query_sampling: unknown mode `{other}` (uniform | stratified)"
                )))
            }
        };
        if !(b.delta > 0.0) {
            return Err(Error::InvalidInput("score.delta must be positive".into()));
        }
        let mut cfg = OdeConfig::new(
            b.n_tau,
            ScoreConfig {
                n_neighbors: b.n_neighbors,
                nu_x: b.nu_x,
                nu_mu: b.nu_mu,
            },
            b.delta,
            b.m_labels,
        );
        cfg.sampling = sampling;
        Ok(cfg)
    }

    pub fn train_config(&self) -> paraflow::flowmap::TrainConfig {
        let b = &self.train;
        paraflow::flowmap::TrainConfig {
            learning_rate: b.learning_rate,
            batch_size: b.batch_size,
            patience: b.patience,
            val_fraction: b.val_fraction,
            max_epochs: b.max_epochs,
            seed: paraflow::RngSeed(b.seed),
        }
    }

    /// Resolves the evaluation parameter grid.
    pub fn eval_mu_grid(&self, model: &SdeModel) -> Result<Vec<Vec<f64>>, Error> {
        match (&self.eval.mu_grid.count, &self.eval.mu_grid.values) {
            (Some(n), None) => {
                if *n == 0 {
                    return Err(Error::InvalidInput("eval.mu_grid.count must be >= 1".into()));
                }
                Ok(paraflow::simulate::uniform_mu_grid(model, *n))
            }
            (None, Some(v)) if !v.is_empty() => Ok(v.clone()),
            _ => Err(Error::InvalidInput(
                "eval.mu_grid: give exactly one of `count` or non-empty `values`".into(),
            )),
        }
    }
}
