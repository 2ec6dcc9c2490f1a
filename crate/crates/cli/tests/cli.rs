use std::path::Path;
use std::process::{Command, Output};

use nnflow_cli::commands::{self, CHECKPOINT_FILE};
use nnflow_cli::RunConfig;
use nnflow_core::coupling::init_noisy;
use nnflow_core::scenes::{load_dataset, read_cloud_auto, read_manifest};
use nnflow_core::train::smooth;
use nnflow_core::{Checkpoint, FieldConfig, NoiseConfig, VectorField};

fn nnflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnflow"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> RunConfig {
    RunConfig::load(
        None,
        &[
            format!("out_dir={}", dir.display()),
            "data.cases=2".into(),
            "data.budget.scan_points=64".into(),
            "field.hidden_widths=[8, 8]".into(),
            "train.noise_scale=0.25".into(),
        ],
    )
    .unwrap()
}

#[test]
fn make_data_rows_match_cases_and_rerun_is_identical() {
    let root = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        let out = nnflow(
            &[
                "make-data",
                "--cases",
                "4",
                "--out",
                run,
                "--set",
                "data.budget.scan_points=64",
            ],
            root.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = root.path().join("a");
    assert_eq!(read_manifest(&a).unwrap().len(), 4);
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(root.path().join("b").join(&name)).unwrap()
        );
    }
}

#[test]
fn zero_cases_give_empty_manifest() {
    let root = tempfile::tempdir().unwrap();
    let out = nnflow(&["make-data", "--cases", "0", "--out", "d"], root.path());
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(root.path().join("d/manifest.tsv")).unwrap(), "");
}

#[test]
fn zero_epochs_checkpoint_is_initialization() {
    let root = tempfile::tempdir().unwrap();
    let mut config = small_config(root.path());
    config.train.epochs = 0;
    let data = root.path().join("data");
    commands::make_data(&config, &data).unwrap();
    let ck = commands::train(&config, &data, root.path(), &mut std::io::sink()).unwrap();
    let init = VectorField::new(config.field.clone()).unwrap().init_state();
    assert_eq!(ck.state, init);
    assert_eq!(
        Checkpoint::load(&root.path().join(CHECKPOINT_FILE)).unwrap().state,
        init
    );
}

#[test]
fn untrained_completion_is_initial_cloud() {
    let root = tempfile::tempdir().unwrap();
    let mut config = small_config(root.path());
    config.train.epochs = 0;
    let data = root.path().join("data");
    commands::make_data(&config, &data).unwrap();
    commands::train(&config, &data, root.path(), &mut std::io::sink()).unwrap();
    let case = &load_dataset(&data).unwrap()[0];
    let scan = data.join(&case.entry.scan_path);
    let output = root.path().join("out.ply");
    let out = commands::complete_file(&config, &root.path().join(CHECKPOINT_FILE), &scan, &output).unwrap();
    let noise = NoiseConfig {
        scale: 0.25,
        seed: config.complete.seed,
    };
    let x0 = init_noisy(&case.scan, 10, &noise).unwrap();
    assert_eq!(out, x0);
    assert_eq!(out.len(), 10 * case.scan.len());
    let stored = read_cloud_auto(&output).unwrap();
    assert_eq!(stored.len(), out.len());
}

#[test]
fn eval_identical_files_and_aggregate() {
    let root = tempfile::tempdir().unwrap();
    let config = small_config(root.path());
    let data = root.path().join("data");
    commands::make_data(&config, &data).unwrap();
    let (_, gts) = commands::dataset_pairs(&data, &data).unwrap();
    let summary = commands::eval_pairs(&config, &gts, &gts).unwrap();
    for (_, r) in &summary.rows {
        assert_eq!(r.cd_m, 0.0);
        assert_eq!(r.jsd, 0.0);
        assert!(r.voxel_iou.iter().all(|v| v.iou == 1.0));
    }
    let preds: Vec<_> = gts.iter().rev().cloned().collect();
    let summary = commands::eval_pairs(&config, &preds, &gts).unwrap();
    let mean_cd = summary.rows.iter().map(|(_, r)| r.cd_m).sum::<f64>() / summary.rows.len() as f64;
    assert!((summary.mean.cd_m - mean_cd).abs() <= 1e-15);
    assert!(commands::eval_pairs(&config, &preds[..1], &gts).is_err());
}

#[test]
fn exit_codes() {
    let root = tempfile::tempdir().unwrap();
    let missing = nnflow(
        &["eval", "--pred", "missing.ply", "--gt", "also_missing.ply"],
        root.path(),
    );
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing.ply"));
    assert_eq!(nnflow(&["train", "--no-such-flag"], root.path()).status.code(), Some(1));
    assert_eq!(nnflow(&["frobnicate"], root.path()).status.code(), Some(1));
    assert_eq!(
        nnflow(&["complete", "--steps", "0"], root.path()).status.code(),
        Some(1)
    );
    assert_eq!(
        nnflow(&["eval", "--set", "metrics.bev_resolution=-1"], root.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(nnflow(&["--help"], root.path()).status.code(), Some(0));
    assert_eq!(
        nnflow(&["train", "--data", "nowhere"], root.path()).status.code(),
        Some(2)
    );
}

#[test]
fn config_file_and_flag_precedence() {
    let root = tempfile::tempdir().unwrap();
    std::fs::write(root.path().join("run.toml"), "[data]\ncases = 3\nseed = 4\n").unwrap();
    let out = nnflow(
        &[
            "make-data",
            "--config",
            "run.toml",
            "--set",
            "data.cases=5",
            "--cases",
            "1",
            "--out",
            "d",
        ],
        root.path(),
    );
    assert!(out.status.success());
    assert_eq!(read_manifest(&root.path().join("d")).unwrap().len(), 1);
    std::fs::write(root.path().join("bad.toml"), "[data]\ncasez = 3\n").unwrap();
    assert_eq!(
        nnflow(&["make-data", "--config", "bad.toml"], root.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn step_lines_are_machine_parsable() {
    let root = tempfile::tempdir().unwrap();
    let mut config = small_config(root.path());
    config.train.max_steps = Some(3);
    let data = root.path().join("data");
    commands::make_data(&config, &data).unwrap();
    let mut buf = Vec::new();
    commands::train(&config, &data, root.path(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text,
        std::fs::read_to_string(root.path().join(commands::TRAIN_LOG_FILE)).unwrap()
    );
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    for (i, line) in lines.iter().enumerate() {
        let fields: Vec<(&str, &str)> = line.split(' ').map(|kv| kv.split_once('=').unwrap()).collect();
        let keys: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
        assert_eq!(keys, ["step", "epoch", "loss", "nfm", "cdm", "null"]);
        assert_eq!(fields[0].1, (i + 1).to_string());
        assert!(fields[2].1.parse::<f64>().unwrap().is_finite());
    }
}

/// Toy scale: the smoothed training loss halves within 2000 steps.
#[test]
fn toy_training_halves_smoothed_loss() {
    let root = tempfile::tempdir().unwrap();
    let mut config = RunConfig::load(
        None,
        &[
            format!("out_dir={}", root.path().display()),
            "data.cases=8".into(),
            "train.noise_scale=0.25".into(),
            "train.batch_size=1".into(),
            "train.max_steps=2000".into(),
            "train.epochs=1000".into(),
        ],
    )
    .unwrap();
    config.field = FieldConfig {
        hidden_widths: vec![32, 32],
        ..FieldConfig::default()
    };
    config.checkpoint_every = 0;
    let data = root.path().join("data");
    commands::make_data(&config, &data).unwrap();
    let mut buf = Vec::new();
    commands::train(&config, &data, root.path(), &mut buf).unwrap();
    let losses: Vec<f64> = String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| {
            l.split(' ')
                .nth(2)
                .unwrap()
                .trim_start_matches("loss=")
                .parse()
                .unwrap()
        })
        .collect();
    assert_eq!(losses.len(), 2000);
    let s = smooth(&losses, 0.99);
    let first = s[0];
    let last = s[1999];
    assert!(last <= 0.5 * first, "smoothed loss {first} -> {last}");
}
