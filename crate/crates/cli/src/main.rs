//! Pipeline front end: simulate, labels, train, sample, rollout, evaluate.
//!
//! Every stage reads one TOML run configuration, writes its artifact plus a
//! `<out>.manifest.toml` echoing the resolved knobs, and is byte-reproducible
//! given the same config and seed. Exit codes: 0 success, 2 validation
//! error, 3 numeric failure, 4 acceptance-threshold violation.

use paraflow_cli::config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::RunConfig;
use paraflow::eval::{
    conditional_moment_sweep, emit_report, heatmap_grid, terminal_check, variance_evolution,
    EvalReport,
};
use paraflow::flowmap::{rollout, sample_one_step, train, FlowMapNet};
use paraflow::labels::{generate_labels, LabeledDataset};
use paraflow::neighbors::{axis_scales, NeighborIndex};
use paraflow::simulate::{simulate_dataset, ObservedDataset};
use paraflow::{Error, RngSeed};

#[derive(Parser)]
#[command(name = "paraflow", version, about = "Parameter-dependent stochastic flow maps")]
struct Cli {
    /// Worker threads (default: available cores). Never affects outputs.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,

    /// Output path.
    #[arg(long)]
    out: PathBuf,

    /// Overrides the stage's seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the observed transition dataset (.pfds).
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write a CSV copy next to the binary dataset.
        #[arg(long)]
        csv: bool,
    },
    /// Generate labeled samples via the reverse probability-flow ODE (.pflb).
    Labels {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        csv: bool,
    },
    /// Train the flow-map network on labeled samples (.pfnn).
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Draw one-step samples from a trained network (CSV).
    Sample {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Query state, comma-separated.
        #[arg(long, value_delimiter = ',')]
        x: Vec<f64>,
        /// Parameter value, comma-separated.
        #[arg(long, value_delimiter = ',')]
        mu: Vec<f64>,
        #[arg(long, short = 'n', default_value_t = 100)]
        n_samples: usize,
    },
    /// Roll the learned map forward and write terminal states (CSV).
    Rollout {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',')]
        x0: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        mu: Vec<f64>,
        #[arg(long)]
        n_steps: usize,
        #[arg(long, default_value_t = 1000)]
        n_traj: usize,
    },
    /// Produce the evaluation report directory.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NonFiniteState { .. }
        | Error::NonFiniteOde { .. }
        | Error::LabelSample { .. }
        | Error::DegenerateWeights
        | Error::Divergence { .. }
        | Error::TauOutOfRange(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // Outputs are worker-count independent by construction; this only
        // bounds parallelism.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build_global();
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    stage: &'a str,
    model: &'a str,
    seed: u64,
    inputs: Vec<String>,
    output: String,
    config: T,
}

fn write_manifest<T: Serialize>(out: &Path, manifest: &Manifest<'_, T>) -> Result<(), Error> {
    let path = out.with_extension(format!(
        "{}manifest.toml",
        out.extension()
            .map(|e| format!("{}.", e.to_string_lossy()))
            .unwrap_or_default()
    ));
    let text = toml::to_string_pretty(manifest)
        .map_err(|e| Error::InvalidInput(format!("manifest serialization: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn resolve_seed(cfg_seed: u64, flag: Option<u64>) -> u64 {
    flag.unwrap_or(cfg_seed)
}

fn check_dims(cfg: &RunConfig, d: usize, d_mu: usize, what: &str) -> Result<(), Error> {
    let model = cfg.model()?;
    if model.d() != d || model.d_mu() != d_mu {
        return Err(Error::ShapeMismatch {
            expected: format!(
                "model `{}` with d = {}, d_mu = {}",
                cfg.model,
                model.d(),
                model.d_mu()
            ),
            got: format!("{what} with d = {d}, d_mu = {d_mu}"),
        });
    }
    Ok(())
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Simulate { common, csv } => {
            let cfg = RunConfig::load(&common.config)?;
            let model = cfg.model()?;
            let sim = cfg.sim_config()?;
            let seed = resolve_seed(cfg.simulation.seed, common.seed);
            let ds = simulate_dataset(&model, &sim, RngSeed(seed))?;
            ds.save(&common.out)?;
            if csv {
                ds.export_csv(&common.out.with_extension("csv"))?;
            }
            let mut block = cfg.simulation.clone();
            block.seed = seed;
            write_manifest(
                &common.out,
                &Manifest {
                    stage: "simulate",
                    model: &cfg.model,
                    seed,
                    inputs: vec![common.config.display().to_string()],
                    output: common.out.display().to_string(),
                    config: SimulateManifest {
                        records: ds.len(),
                        simulation: block,
                    },
                },
            )?;
            println!("wrote {} records to {}", ds.len(), common.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Labels { common, dataset, csv } => {
            let cfg = RunConfig::load(&common.config)?;
            let ds = ObservedDataset::load(&dataset)?;
            check_dims(&cfg, ds.d(), ds.d_mu(), "dataset")?;
            if ds.model_name != cfg.model {
                return Err(Error::InvalidInput(format!(
                    "dataset was simulated from `{}`, config names `{}`",
                    ds.model_name, cfg.model
                )));
            }
            let ode = cfg.ode_config()?;
            let scales = axis_scales(ds.d(), ds.d_mu(), ode.score.nu_x, ode.score.nu_mu);
            let idx = NeighborIndex::build(&ds, &scales)?;
            let seed = resolve_seed(cfg.score.seed, common.seed);
            let labels = generate_labels(&ds, &idx, &ode, RngSeed(seed))?;
            labels.save(&common.out)?;
            if csv {
                labels.export_csv(&common.out.with_extension("csv"))?;
            }
            let mut block = cfg.score.clone();
            block.seed = seed;
            write_manifest(
                &common.out,
                &Manifest {
                    stage: "labels",
                    model: &cfg.model,
                    seed,
                    inputs: vec![
                        common.config.display().to_string(),
                        dataset.display().to_string(),
                    ],
                    output: common.out.display().to_string(),
                    config: block,
                },
            )?;
            println!("wrote {} labeled samples to {}", labels.len(), common.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { common, labels } => {
            let cfg = RunConfig::load(&common.config)?;
            let lb = LabeledDataset::load(&labels)?;
            check_dims(&cfg, lb.d(), lb.d_mu(), "labels")?;
            let seed = resolve_seed(cfg.train.seed, common.seed);
            let mut tc = cfg.train_config();
            tc.seed = RngSeed(seed);
            let (net, log) = train(&lb, &cfg.train.hidden, cfg.train.c_scale, &tc)?;
            net.save(&common.out)?;

            let log_path = common.out.with_extension("log.csv");
            let mut text = String::from("epoch,train_loss,val_loss\n");
            for (i, e) in log.epochs.iter().enumerate() {
                text.push_str(&format!(
                    "{},{},{}\n",
                    i + 1,
                    paraflow::codec::csv_f64(e.train_loss),
                    paraflow::codec::csv_f64(e.val_loss)
                ));
            }
            std::fs::write(&log_path, text)?;

            let mut block = cfg.train.clone();
            block.seed = seed;
            write_manifest(
                &common.out,
                &Manifest {
                    stage: "train",
                    model: &cfg.model,
                    seed,
                    inputs: vec![
                        common.config.display().to_string(),
                        labels.display().to_string(),
                    ],
                    output: common.out.display().to_string(),
                    config: TrainManifest {
                        best_epoch: log.best_epoch,
                        stopped_epoch: log.stopped_epoch,
                        best_val_loss: log.epochs[log.best_epoch - 1].val_loss,
                        train: block,
                    },
                },
            )?;
            println!(
                "trained to epoch {} (best {}), checkpoint {}",
                log.stopped_epoch,
                log.best_epoch,
                common.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sample {
            common,
            checkpoint,
            x,
            mu,
            n_samples,
        } => {
            let cfg = RunConfig::load(&common.config)?;
            let net = FlowMapNet::load(&checkpoint)?;
            check_dims(&cfg, net.meta.d, net.meta.d_mu, "checkpoint")?;
            let seed = resolve_seed(cfg.eval.seed, common.seed);
            let mut text = (0..net.meta.d)
                .map(|i| format!("x_{i}"))
                .collect::<Vec<_>>()
                .join(",")
                + "\n";
            for s in 0..n_samples {
                let draw = sample_one_step(&net, &x, &mu, RngSeed(seed ^ s as u64))?;
                let row: Vec<String> = draw.iter().map(|&v| paraflow::codec::csv_f64(v)).collect();
                text.push_str(&row.join(","));
                text.push('\n');
            }
            std::fs::write(&common.out, text)?;
            println!("wrote {n_samples} samples to {}", common.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Rollout {
            common,
            checkpoint,
            x0,
            mu,
            n_steps,
            n_traj,
        } => {
            let cfg = RunConfig::load(&common.config)?;
            let net = FlowMapNet::load(&checkpoint)?;
            check_dims(&cfg, net.meta.d, net.meta.d_mu, "checkpoint")?;
            if x0.len() != net.meta.d {
                return Err(Error::ShapeMismatch {
                    expected: format!("x0 of dimension {}", net.meta.d),
                    got: format!("{}", x0.len()),
                });
            }
            let seed = resolve_seed(cfg.eval.seed, common.seed);
            let mut x0s = Vec::with_capacity(n_traj * x0.len());
            for _ in 0..n_traj {
                x0s.extend_from_slice(&x0);
            }
            let terminal = rollout(&net, &x0s, &mu, n_steps, RngSeed(seed))?;
            let mut text = (0..net.meta.d)
                .map(|i| format!("x_{i}"))
                .collect::<Vec<_>>()
                .join(",")
                + "\n";
            for row in terminal.chunks(net.meta.d) {
                let cells: Vec<String> = row.iter().map(|&v| paraflow::codec::csv_f64(v)).collect();
                text.push_str(&cells.join(","));
                text.push('\n');
            }
            std::fs::write(&common.out, text)?;
            println!("wrote {n_traj} terminal states to {}", common.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = RunConfig::load(&common.config)?;
            let model = cfg.model()?;
            let net = FlowMapNet::load(&checkpoint)?;
            check_dims(&cfg, net.meta.d, net.meta.d_mu, "checkpoint")?;
            let seed = resolve_seed(cfg.eval.seed, common.seed);
            let mu_grid = cfg.eval_mu_grid(&model)?;
            let dt = cfg.simulation.dt;

            let mut report = EvalReport::default();
            for (qi, x_query) in cfg.eval.x_queries.iter().enumerate() {
                report.conditional.push(conditional_moment_sweep(
                    &net,
                    &model,
                    x_query,
                    &mu_grid,
                    dt,
                    cfg.eval.n_samples,
                    RngSeed(seed.wrapping_add(qi as u64)),
                )?);
            }
            if let Some(h) = &cfg.eval.heatmap {
                let value_grid: Vec<f64> = (0..h.count)
                    .map(|i| h.lo + (h.hi - h.lo) * i as f64 / (h.count.max(2) - 1) as f64)
                    .collect();
                report.heatmap = Some(heatmap_grid(
                    &net,
                    &model,
                    &h.x_query,
                    &mu_grid,
                    &value_grid,
                    dt,
                    h.n_samples,
                    RngSeed(seed ^ 0x48454154),
                )?);
            }
            if let Some(t) = &cfg.eval.terminal {
                let d = model.d();
                let mut cov = vec![0.0; d * d];
                for i in 0..d {
                    cov[i * d + i] = t.s0_diag[i];
                }
                for (i, mu) in t.mus.iter().enumerate() {
                    report.terminal.push(terminal_check(
                        &net,
                        &model,
                        &t.m0,
                        &cov,
                        mu,
                        dt,
                        t.n_steps,
                        t.n_traj,
                        RngSeed(seed.wrapping_add(0x5445524d + i as u64)),
                    )?);
                }
            }
            if let Some(v) = &cfg.eval.variance {
                for (i, mu) in v.mus.iter().enumerate() {
                    report.variance.push(variance_evolution(
                        &net,
                        &model,
                        &v.x0,
                        mu,
                        dt,
                        v.n_steps,
                        v.n_traj,
                        RngSeed(seed.wrapping_add(0x56415220 + i as u64)),
                    )?);
                }
            }
            emit_report(&report, &common.out)?;

            let mut block = cfg.eval.clone();
            block.seed = seed;
            write_manifest(
                &common.out.join("report"),
                &Manifest {
                    stage: "evaluate",
                    model: &cfg.model,
                    seed,
                    inputs: vec![
                        common.config.display().to_string(),
                        checkpoint.display().to_string(),
                    ],
                    output: common.out.display().to_string(),
                    config: block,
                },
            )?;
            println!(
                "report written to {} (max mean err {:.4}, max var rel err {:.4})",
                common.out.display(),
                report.max_mean_abs_err(),
                report.max_var_rel_err()
            );

            if let Some(th) = &cfg.eval.thresholds {
                let mut violated = Vec::new();
                if let Some(limit) = th.max_mean_abs_err {
                    if report.max_mean_abs_err() > limit {
                        violated.push(format!(
                            "max_mean_abs_err {:.6} > {limit}",
                            report.max_mean_abs_err()
                        ));
                    }
                }
                if let Some(limit) = th.max_var_rel_err {
                    if report.max_var_rel_err() > limit {
                        violated.push(format!(
                            "max_var_rel_err {:.6} > {limit}",
                            report.max_var_rel_err()
                        ));
                    }
                }
                if !violated.is_empty() {
                    eprintln!("acceptance thresholds violated: {}", violated.join("; "));
                    return Ok(ExitCode::from(4));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

#[derive(Serialize)]
struct SimulateManifest {
    records: usize,
    simulation: config::SimBlock,
}

#[derive(Serialize)]
struct TrainManifest {
    best_epoch: usize,
    stopped_epoch: usize,
    best_val_loss: f64,
    train: config::TrainBlock,
}
