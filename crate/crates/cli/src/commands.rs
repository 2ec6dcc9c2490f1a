use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nnflow_core::metrics::{eval_all, format_table, EvalReport};
use nnflow_core::rng::derive_seed;
use nnflow_core::scenes::{
    load_dataset, make_cases, read_cloud_auto, write_cloud, write_dataset, CloudFormat, ManifestEntry,
};
use nnflow_core::{complete_scene, Checkpoint, FieldView, NoiseConfig, PointCloud, TrainPair, Trainer, Trajectory};

use crate::config::RunConfig;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train.log";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Generates `config.data.cases` scene/scan pairs into `dir`.
pub fn make_data(config: &RunConfig, dir: &Path) -> Result<Vec<ManifestEntry>> {
    let cases = make_cases(&config.data)?;
    Ok(write_dataset(dir, &config.data, &cases)?)
}

fn checkpoint_of(trainer: &Trainer, config: &RunConfig) -> Result<Checkpoint> {
    let mut ck = Checkpoint::new(
        trainer.field.config().clone(),
        trainer.state.clone(),
        trainer.optimizer.clone(),
    );
    ck.metadata = serde_json::json!({ "train": serde_json::to_value(&config.train)? });
    Ok(ck)
}

/// Trains on the dataset in `data_dir`, writing `checkpoint.json` and
/// `train.log` to `out_dir`. Every step's log line also goes to `log`.
///
/// The checkpoint is written before the first step, every
/// `checkpoint_every` steps, and at the end. A failing step leaves the
/// previous checkpoint in place.
pub fn train(config: &RunConfig, data_dir: &Path, out_dir: &Path, log: &mut dyn Write) -> Result<Checkpoint> {
    let cases = load_dataset(data_dir).with_context(|| format!("loading dataset {}", data_dir.display()))?;
    create_dir(out_dir)?;
    let pairs: Vec<TrainPair<'_>> = cases
        .iter()
        .map(|c| TrainPair {
            scan: &c.scan,
            scene: &c.scene,
        })
        .collect();
    let mut trainer = Trainer::new(config.field.clone(), config.train.clone())?;
    let ck_path = out_dir.join(CHECKPOINT_FILE);
    checkpoint_of(&trainer, config)?.save(&ck_path)?;

    let log_path = out_dir.join(TRAIN_LOG_FILE);
    let mut log_file = std::io::BufWriter::new(
        fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
    );
    let every = config.checkpoint_every;
    let mut io_error = None;
    let result = trainer.run(&pairs, |t, step| {
        let line = step.to_line();
        if let Err(e) = writeln!(log_file, "{line}").and_then(|_| writeln!(log, "{line}")) {
            io_error = Some(e);
            return Err(nnflow_core::Error::InvalidArgument("log write failed".into()));
        }
        if every > 0 && step.step % every == 0 {
            checkpoint_of(t, config)
                .map_err(|e| nnflow_core::Error::Checkpoint(e.to_string()))?
                .save(&ck_path)?;
        }
        Ok(())
    });
    log_file
        .flush()
        .with_context(|| format!("writing {}", log_path.display()))?;
    if let Some(e) = io_error {
        return Err(e).context("writing the training log");
    }
    result.with_context(|| format!("training stopped; last good checkpoint kept at {}", ck_path.display()))?;
    let ck = checkpoint_of(&trainer, config)?;
    ck.save(&ck_path)?;
    Ok(ck)
}

/// Completes one scan with the checkpoint's EMA (or raw) weights.
pub fn complete_cloud(config: &RunConfig, ck: &Checkpoint, scan: &PointCloud, noise_seed: u64) -> Result<Trajectory> {
    let field = ck.validate()?;
    let view = FieldView::new(&field, &ck.state, config.sampler.use_ema);
    let noise = NoiseConfig {
        scale: config.train.noise_scale,
        seed: noise_seed,
    };
    Ok(complete_scene(&view, scan, config.train.k, &noise, &config.sampler)?)
}

/// Writes the final cloud to `output`; with a recorded trajectory, also every
/// intermediate state as `<stem>_step<NN>.ply` next to it.
pub fn write_trajectory(traj: &Trajectory, output: &Path) -> Result<()> {
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_cloud(traj.final_state(), output, CloudFormat::for_writing(output)?)?;
    if traj.states.len() > 1 {
        let stem = output.file_stem().unwrap_or_default().to_string_lossy();
        for (i, state) in traj.states.iter().enumerate() {
            let path = output.with_file_name(format!("{stem}_step{i:02}.ply"));
            write_cloud(state, &path, CloudFormat::PlyBinary)?;
        }
    }
    Ok(())
}

pub fn complete_file(config: &RunConfig, checkpoint: &Path, scan: &Path, output: &Path) -> Result<PointCloud> {
    let ck = Checkpoint::load(checkpoint)?;
    let scan = read_cloud_auto(scan)?;
    let traj = complete_cloud(config, &ck, &scan, config.complete.seed)?;
    write_trajectory(&traj, output)?;
    Ok(traj.into_final())
}

/// Completes every scan of a dataset into `<out>/<case-id>_pred.ply`. Case
/// `i` uses noise seed `derive_seed(complete.seed, i)`.
pub fn complete_dataset(
    config: &RunConfig,
    checkpoint: &Path,
    data_dir: &Path,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let ck = Checkpoint::load(checkpoint)?;
    let cases = load_dataset(data_dir)?;
    create_dir(out_dir)?;
    let mut outputs = Vec::with_capacity(cases.len());
    for (i, case) in cases.iter().enumerate() {
        let traj = complete_cloud(config, &ck, &case.scan, derive_seed(config.complete.seed, i as u64))?;
        let path = out_dir.join(format!("{}_pred.ply", case.entry.case_id));
        write_trajectory(&traj, &path)?;
        outputs.push(path);
    }
    Ok(outputs)
}

/// Per-pair reports and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub rows: Vec<(String, EvalReport)>,
    pub mean: EvalReport,
}

impl EvalSummary {
    /// One `[name]` section of `key=value` lines per pair, then `[mean]`.
    pub fn to_report(&self) -> String {
        let mut s = String::new();
        for (name, r) in &self.rows {
            s.push_str(&format!("[{name}]\n{}\n", r.to_kv()));
        }
        s.push_str(&format!("[mean]\n{}", self.mean.to_kv()));
        s
    }

    pub fn table(&self) -> String {
        let mut rows = self.rows.clone();
        rows.push(("mean".into(), self.mean.clone()));
        format_table(&rows)
    }
}

pub fn eval_pairs(config: &RunConfig, preds: &[PathBuf], gts: &[PathBuf]) -> Result<EvalSummary> {
    if preds.len() != gts.len() {
        bail!("{} predictions but {} ground-truth files", preds.len(), gts.len());
    }
    if preds.is_empty() {
        bail!("nothing to evaluate");
    }
    let mut rows = Vec::with_capacity(preds.len());
    for (p, g) in preds.iter().zip(gts) {
        let pred = read_cloud_auto(p).with_context(|| format!("reading {}", p.display()))?;
        let gt = read_cloud_auto(g).with_context(|| format!("reading {}", g.display()))?;
        let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        rows.push((name, eval_all(&pred, &gt, &config.metrics)?));
    }
    let reports: Vec<EvalReport> = rows.iter().map(|(_, r)| r.clone()).collect();
    let mean = EvalReport::mean(&reports)?;
    Ok(EvalSummary { rows, mean })
}

/// Pairs `<pred_dir>/<case-id>_pred.ply` with each case's scene.
pub fn dataset_pairs(pred_dir: &Path, data_dir: &Path) -> Result<(Vec<PathBuf>, Vec<PathBuf>)> {
    let entries = nnflow_core::scenes::read_manifest(data_dir)?;
    Ok(entries
        .iter()
        .map(|e| {
            (
                pred_dir.join(format!("{}_pred.ply", e.case_id)),
                data_dir.join(&e.scene_path),
            )
        })
        .unzip())
}
