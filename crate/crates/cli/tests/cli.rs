use std::path::Path;
use std::process::Command;

use lstm_nudge_cli::sweep::{expand_sweep, run_sweep, REPORT_FILE};
use lstm_nudge_cli::{run_pipeline, run_stage, ConfigFile, ExperimentConfig, Stage};

const SMALL: &str = r#"
seed = 7

[fom]
re = 100.0
grid_intervals = 256
dt = 2e-4
t_final = 1.0
snapshot_stride = 50

[rom]
r = 4
dt = 0.01

[obs]
s_freq = 32
t_freq = 10

[train]
ensemble_size = 4
max_epochs = 15
patience = 5
hidden_dim = 8
"#;

fn small(out: &Path) -> (ConfigFile, ExperimentConfig) {
    let file = ConfigFile::parse(SMALL).unwrap();
    let mut cfg = file.experiment().unwrap();
    cfg.output_dir = out.to_path_buf();
    (file, cfg)
}

#[test]
fn full_run_lists_every_file_and_reuses_caches() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = small(dir.path());
    let first = run_pipeline(&cfg, Stage::Assimilate).unwrap();
    assert_eq!(first.stages, ["fom", "pod", "train", "assimilate"]);
    assert!(first.cache_hits.values().all(|hit| !hit));
    for f in &first.files {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    for p in first.artifacts.values() {
        assert!(p.is_file(), "{} missing", p.display());
    }
    let rmse_1 = std::fs::read(dir.path().join("rmse.csv")).unwrap();
    let second = run_pipeline(&cfg, Stage::Assimilate).unwrap();
    assert!(second.cache_hits.values().all(|hit| *hit));
    assert_eq!(std::fs::read(dir.path().join("rmse.csv")).unwrap(), rmse_1);
    assert_eq!(first.summary, second.summary);

    let header = std::fs::read_to_string(dir.path().join("a_nudged.csv")).unwrap();
    assert!(header.starts_with("t,a_1,a_2,a_3,a_4\n"));
    assert_eq!(header.lines().count(), 102);
}

#[test]
fn misaligned_config_rejected_before_any_compute() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut cfg) = small(dir.path());
    cfg.obs.t_freq = 30;
    let err = run_pipeline(&cfg, Stage::Assimilate).unwrap_err();
    assert!(format!("{err:#}").contains("not a positive multiple"));
    assert!(!cfg.cache_root().exists());
}

#[test]
fn stage_commands_need_upstream_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = small(dir.path());
    let err = run_stage(&cfg, Stage::Pod, None).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("stage fom") && msg.contains("missing upstream"), "{msg}");
    run_stage(&cfg, Stage::Fom, None).unwrap();
    run_stage(&cfg, Stage::Pod, None).unwrap();
    run_stage(&cfg, Stage::Train, None).unwrap();
    let r = run_stage(&cfg, Stage::Assimilate, None).unwrap();
    assert!(r.cache_hits.values().all(|hit| *hit));
    assert!(r.summary.final_rmse_nudged.is_some());
}

#[test]
fn checkpoint_for_another_observable_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = small(dir.path());
    let report = run_pipeline(&cfg, Stage::Train).unwrap();
    let checkpoint = report.artifacts["network.bin"].clone();

    let mut squared = cfg.clone();
    squared.obs.quantity = "velocity_squared".into();
    let err = run_stage(&squared, Stage::Assimilate, Some(&checkpoint)).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("stage assimilate") && msg.contains("velocity_squared"), "{msg}");

    // the binary reports the same failure with a nonzero exit code
    let cfg_path = dir.path().join("squared.toml");
    std::fs::write(&cfg_path, squared.to_toml()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lstm-nudge"))
        .arg("assimilate")
        .arg("--config")
        .arg(&cfg_path)
        .arg("--checkpoint")
        .arg(&checkpoint)
        .env("RUST_LOG", "off")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage assimilate"), "{stderr}");
}

#[test]
fn sensor_sweep_has_four_children() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[sweep]\n\"obs.s_freq\" = [16, 64, 128, 256]\n");
    let file = ConfigFile::parse(&text).unwrap();
    let mut cfg = file.experiment().unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    let children = expand_sweep(&file, &cfg).unwrap();
    let sensors: Vec<usize> = children
        .iter()
        .map(|c| c.config.obs_operator().unwrap().n_sensors())
        .collect();
    assert_eq!(sensors, [17, 5, 3, 2]);
}

#[test]
fn noise_sweep_report_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{SMALL}\n[sweep]\n\"noise.sigma_m\" = [0.1, 1.0]\n\"noise.sigma_b\" = [0.1, 1.0]\n"
    );
    let file = ConfigFile::parse(&text).unwrap();
    let mut cfg = file.experiment().unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    cfg.train.sigma_b = Some(1.0);
    cfg.train.sigma_m = Some(1.0);
    let reports = run_sweep(&file, &cfg).unwrap();
    assert_eq!(reports.len(), 4);
    // one trained network serves every child
    assert!(reports[1..].iter().all(|r| r.cache_hits["train"]));

    let table = std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("run,params,sigma_m,sigma_b,"));
    let pairs: Vec<(String, String)> = rows[1..]
        .iter()
        .map(|r| {
            let c: Vec<&str> = r.split(',').collect();
            (c[2].to_string(), c[3].to_string())
        })
        .collect();
    assert_eq!(
        pairs,
        [("0.1", "0.1"), ("1", "0.1"), ("0.1", "1"), ("1", "1")]
            .map(|(m, b)| (m.to_string(), b.to_string()))
    );

    let out = Command::new(env!("CARGO_BIN_EXE_lstm-nudge"))
        .args(["report", "--dir"])
        .arg(dir.path())
        .env("RUST_LOG", "off")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), table);
}
