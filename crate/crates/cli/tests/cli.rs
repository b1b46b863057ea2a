//! End-to-end tests of the `paraflow` binary: stage wiring, manifests,
//! reproducibility, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_paraflow")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const MICRO_CONFIG: &str = r#"
model = "brownian-drift"

[simulation]
n_mu = 3
n_traj = 5
t_final = 0.2
dt = 0.1
fine_dt = 0.01
init = { law = "uniform", low = [-2.0], high = [2.0] }
sampler = "euler"
seed = 11

[score]
n_neighbors = 10
nu_x = 1.0
nu_mu = 0.5
delta = 1e-4
n_tau = 20
m_labels = 40
query_sampling = "uniform"
seed = 12

[train]
hidden = [8]
learning_rate = 1e-3
batch_size = 16
patience = 2
val_fraction = 0.25
max_epochs = 6
c_scale = 3.0
seed = 13

[eval]
x_queries = [[0.5]]
mu_grid = { count = 3 }
n_samples = 50
seed = 14
"#;

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

fn workspace(config_text: &str) -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("run.toml");
    std::fs::write(&config, config_text).unwrap();
    Workspace {
        _dir: dir,
        root,
        config,
    }
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn micro_pipeline_end_to_end_and_idempotent() {
    let ws = workspace(MICRO_CONFIG);
    let cfg = path_str(&ws.config);
    let ds = ws.root.join("data.pfds");
    let lb = ws.root.join("labels.pflb");
    let nn = ws.root.join("model.pfnn");
    let report = ws.root.join("report");

    let full_run = || {
        assert_code(
            &run(&["simulate", "--config", cfg, "--out", path_str(&ds)]),
            0,
        );
        assert_code(
            &run(&[
                "labels",
                "--config",
                cfg,
                "--dataset",
                path_str(&ds),
                "--out",
                path_str(&lb),
            ]),
            0,
        );
        assert_code(
            &run(&[
                "train",
                "--config",
                cfg,
                "--labels",
                path_str(&lb),
                "--out",
                path_str(&nn),
            ]),
            0,
        );
        assert_code(
            &run(&[
                "evaluate",
                "--config",
                cfg,
                "--checkpoint",
                path_str(&nn),
                "--out",
                path_str(&report),
            ]),
            0,
        );
        (
            std::fs::read(&ds).unwrap(),
            std::fs::read(&lb).unwrap(),
            std::fs::read(&nn).unwrap(),
            std::fs::read(report.join("conditional.csv")).unwrap(),
        )
    };

    let first = full_run();

    // Dataset counts and manifests.
    assert_eq!(&first.0[..4], b"PFDS");
    assert_eq!(&first.1[..4], b"PFLB");
    assert_eq!(&first.2[..4], b"PFNN");
    let manifest = std::fs::read_to_string(ws.root.join("data.pfds.manifest.toml")).unwrap();
    assert!(manifest.contains("records = 30"), "{manifest}");
    assert!(manifest.contains("stage = \"simulate\""));
    // Every simulation knob appears in the manifest.
    for knob in ["n_mu", "n_traj", "t_final", "dt", "fine_dt", "seed", "law", "sampler"] {
        assert!(manifest.contains(knob), "missing {knob} in {manifest}");
    }
    let train_manifest = std::fs::read_to_string(ws.root.join("model.pfnn.manifest.toml")).unwrap();
    assert!(train_manifest.contains("stopped_epoch"));
    assert!(train_manifest.contains("best_epoch"));
    for knob in [
        "hidden",
        "learning_rate",
        "batch_size",
        "patience",
        "val_fraction",
        "max_epochs",
        "c_scale",
    ] {
        assert!(train_manifest.contains(knob), "missing {knob}");
    }
    let labels_manifest =
        std::fs::read_to_string(ws.root.join("labels.pflb.manifest.toml")).unwrap();
    for knob in ["n_neighbors", "nu_x", "nu_mu", "delta", "n_tau", "m_labels"] {
        assert!(labels_manifest.contains(knob), "missing {knob}");
    }

    // Per-epoch training log.
    let log = std::fs::read_to_string(ws.root.join("model.log.csv")).unwrap();
    assert!(log.starts_with("epoch,train_loss,val_loss"));
    assert!(log.lines().count() >= 3);

    // Reruns are byte-identical.
    let second = full_run();
    assert_eq!(first.0, second.0, "dataset bytes");
    assert_eq!(first.1, second.1, "label bytes");
    assert_eq!(first.2, second.2, "checkpoint bytes");
    assert_eq!(first.3, second.3, "report bytes");

    // Seed override changes the dataset.
    assert_code(
        &run(&[
            "simulate",
            "--config",
            cfg,
            "--out",
            path_str(&ds),
            "--seed",
            "999",
        ]),
        0,
    );
    let reseeded = std::fs::read(&ds).unwrap();
    assert_ne!(first.0, reseeded, "seed override must change the dataset");
}

#[test]
fn sample_and_rollout_commands() {
    let ws = workspace(MICRO_CONFIG);
    let cfg = path_str(&ws.config);
    let ds = ws.root.join("data.pfds");
    let lb = ws.root.join("labels.pflb");
    let nn = ws.root.join("model.pfnn");
    assert_code(&run(&["simulate", "--config", cfg, "--out", path_str(&ds)]), 0);
    assert_code(
        &run(&["labels", "--config", cfg, "--dataset", path_str(&ds), "--out", path_str(&lb)]),
        0,
    );
    assert_code(
        &run(&["train", "--config", cfg, "--labels", path_str(&lb), "--out", path_str(&nn)]),
        0,
    );

    let samples = ws.root.join("samples.csv");
    assert_code(
        &run(&[
            "sample",
            "--config",
            cfg,
            "--checkpoint",
            path_str(&nn),
            "--x",
            "0.5",
            "--mu",
            "0.0",
            "-n",
            "25",
            "--out",
            path_str(&samples),
        ]),
        0,
    );
    let text = std::fs::read_to_string(&samples).unwrap();
    assert_eq!(text.lines().count(), 26);

    let terminal = ws.root.join("terminal.csv");
    assert_code(
        &run(&[
            "rollout",
            "--config",
            cfg,
            "--checkpoint",
            path_str(&nn),
            "--x0",
            "0.0",
            "--mu",
            "0.5",
            "--n-steps",
            "3",
            "--n-traj",
            "40",
            "--out",
            path_str(&terminal),
        ]),
        0,
    );
    let text = std::fs::read_to_string(&terminal).unwrap();
    assert_eq!(text.lines().count(), 41);
}

#[test]
fn numeric_failure_exits_with_code_3() {
    // An absurd learning rate diverges; training reports it as a numeric
    // failure rather than a validation error.
    let diverging = MICRO_CONFIG.replace("learning_rate = 1e-3", "learning_rate = 1e155");
    let ws = workspace(&diverging);
    let cfg = path_str(&ws.config);
    let ds = ws.root.join("data.pfds");
    let lb = ws.root.join("labels.pflb");
    assert_code(&run(&["simulate", "--config", cfg, "--out", path_str(&ds)]), 0);
    assert_code(
        &run(&["labels", "--config", cfg, "--dataset", path_str(&ds), "--out", path_str(&lb)]),
        0,
    );
    let out = run(&[
        "train",
        "--config",
        cfg,
        "--labels",
        path_str(&lb),
        "--out",
        path_str(&ws.root.join("model.pfnn")),
    ]);
    assert_code(&out, 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = run(&["simulate", "--config", "/nonexistent.toml", "--out", "/tmp/x.pfds"]);
    assert_code(&out, 2);
}

#[test]
fn unknown_config_key_rejected() {
    let ws = workspace(&format!("{MICRO_CONFIG}\nnot_a_key = 1\n"));
    let out = run(&[
        "simulate",
        "--config",
        path_str(&ws.config),
        "--out",
        path_str(&ws.root.join("x.pfds")),
    ]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_key"));
}

#[test]
fn mismatched_dataset_dimensions_rejected() {
    let planar = MICRO_CONFIG
        .replace("brownian-drift", "planar-ou")
        .replace("low = [-2.0]", "low = [-2.0, -2.0]")
        .replace("high = [2.0]", "high = [2.0, 2.0]")
        .replace("x_queries = [[0.5]]", "x_queries = [[0.5, 0.5]]");
    let ws = workspace(&planar);
    let planar_cfg = ws.root.join("planar.toml");
    std::fs::write(&planar_cfg, &planar).unwrap();
    let ds = ws.root.join("planar.pfds");
    assert_code(
        &run(&["simulate", "--config", path_str(&planar_cfg), "--out", path_str(&ds)]),
        0,
    );

    // Scalar config, planar dataset.
    let scalar_cfg = ws.root.join("scalar.toml");
    std::fs::write(&scalar_cfg, MICRO_CONFIG).unwrap();
    let out = run(&[
        "labels",
        "--config",
        path_str(&scalar_cfg),
        "--dataset",
        path_str(&ds),
        "--out",
        path_str(&ws.root.join("labels.pflb")),
    ]);
    assert_code(&out, 2);
}

#[test]
fn violated_thresholds_exit_with_code_4() {
    let gated = format!(
        "{MICRO_CONFIG}\n[eval.thresholds]\nmax_mean_abs_err = 1e-12\n"
    );
    let ws = workspace(&gated);
    let cfg = path_str(&ws.config);
    let ds = ws.root.join("data.pfds");
    let lb = ws.root.join("labels.pflb");
    let nn = ws.root.join("model.pfnn");
    assert_code(&run(&["simulate", "--config", cfg, "--out", path_str(&ds)]), 0);
    assert_code(
        &run(&["labels", "--config", cfg, "--dataset", path_str(&ds), "--out", path_str(&lb)]),
        0,
    );
    assert_code(
        &run(&["train", "--config", cfg, "--labels", path_str(&lb), "--out", path_str(&nn)]),
        0,
    );
    let out = run(&[
        "evaluate",
        "--config",
        cfg,
        "--checkpoint",
        path_str(&nn),
        "--out",
        path_str(&ws.root.join("report")),
    ]);
    assert_code(&out, 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("thresholds violated"));
}

#[test]
fn full_scale_preset_dataset_count() {
    // The full corpus of the drifted-Brownian preset: 21 * 5000 * 10 pairs.
    let preset = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/brownian-drift.toml");
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("full.pfds");
    assert_code(
        &run(&["simulate", "--config", path_str(&preset), "--out", path_str(&ds)]),
        0,
    );
    let manifest = std::fs::read_to_string(dir.path().join("full.pfds.manifest.toml")).unwrap();
    assert!(manifest.contains("records = 1050000"), "{manifest}");
}

#[test]
fn presets_parse_and_validate() {
    for name in [
        "brownian-drift",
        "brownian-drift-scaled",
        "scalar-ou",
        "scalar-ou-scaled",
        "planar-ou",
        "planar-ou-scaled",
    ] {
        let path = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../configs")
            .join(format!("{name}.toml"));
        let cfg = paraflow_cli::config::RunConfig::load(&path)
            .unwrap_or_else(|e| panic!("preset {name}: {e}"));
        let model = cfg.model().unwrap();
        cfg.sim_config().unwrap();
        cfg.ode_config().unwrap();
        cfg.eval_mu_grid(&model).unwrap();
    }
}
