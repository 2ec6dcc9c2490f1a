//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod oracle;

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use nnflow_core::coupling::{draw_condition, init_noisy, nn_flow, Condition, ConditionKind, NoiseConfig};
use nnflow_core::field::{FieldConfig, FieldInput, VectorField};
use nnflow_core::geometry::{bev_histogram, chamfer_distance, nearest_neighbor_map, voxelize, BevExtent, Point3};
use nnflow_core::metrics::{eval_cd, eval_jsd_bev, eval_voxel_iou, jsd_from_counts, LogBase};
use nnflow_core::objective::{LossWeights, ObjectiveConfig};
use nnflow_core::rng::seeded_rng;
use nnflow_core::sampler::{euler_integrate, guided_field, FieldView, SamplerConfig};
use nnflow_core::scenes::{
    encode_cloud, make_cases, parse_ply, read_cloud, write_cloud, CloudFormat, DatasetConfig, SceneCase,
};
use nnflow_core::{
    AdamConfig, Checkpoint, FlowSample, OptimizerState, PointCloud, Result as CoreResult, TrainConfig, TrainPair,
    Trainer,
};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn core<T>(r: CoreResult<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(1);
    let mut worst_chamfer: f64 = 0.0;
    for pair in 0..100 {
        let n = rng.random_range(1..=256);
        let m = rng.random_range(1..=256);
        let a = oracle::random_cloud(&mut rng, n, -1.0, 1.0);
        let b = oracle::random_cloud(&mut rng, m, -1.0, 1.0);
        if core(nearest_neighbor_map(&a, &b))?.targets() != oracle::nn_map(&a, &b).as_slice() {
            return Err(format!("NN map differs on pair {pair}"));
        }
        let want = oracle::chamfer_sum(&a, &b);
        let got = core(chamfer_distance(&a, &b))?;
        worst_chamfer = worst_chamfer.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
        for res in [0.5, 0.2, 0.1] {
            let keys = core(voxelize(&a, res, [0.0; 3]))?.sorted_keys();
            if keys != oracle::voxels(&a, res, [0.0; 3]).into_iter().collect::<Vec<_>>() {
                return Err(format!("voxel set differs on pair {pair} at {res} m"));
            }
            if core(eval_voxel_iou(&a, &b, res))? != oracle::iou(&a, &b, res) {
                return Err(format!("voxel IoU differs on pair {pair} at {res} m"));
            }
        }
        let ext = BevExtent::square(1.0);
        if core(bev_histogram(&a, 0.25, ext))?.counts != oracle::bev_counts(&a, 0.25, &ext) {
            return Err(format!("BEV histogram differs on pair {pair}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_chamfer <= 1e-9 && secs < 30.0,
        format!("100 pairs; NN maps, voxel sets, IoU, BEV exact; Chamfer rel err {worst_chamfer:.1e} (<= 1e-9); {secs:.1} s (< 30 s)"),
    )
}

fn flow_algebra() -> Outcome {
    let mut rng = seeded_rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=128);
        let m = rng.random_range(1..=128);
        let x0 = oracle::random_cloud(&mut rng, n, -1.0, 1.0);
        let x1 = oracle::random_cloud(&mut rng, m, -1.0, 1.0);
        let t = rng.random_range(0.0..=1.0);
        let s = core(nn_flow(&x0, &x1, t))?;
        for i in 0..n {
            for k in 0..3 {
                worst = worst.max((s.x_t[i][k] + (1.0 - t) * s.v_target[i][k] - s.targets[i][k]).abs());
            }
        }
        for other in [0.0, 0.5, 1.0, rng.random_range(0.0..1.0)] {
            if core(nn_flow(&x0, &x1, other))?.v_target != s.v_target {
                return Err(format!("v_target changes between t = {t} and t = {other}"));
            }
        }
    }
    check(
        worst <= 1e-12,
        format!("100 triples; max |x_t + (1-t) v - target| = {worst:.1e} (<= 1e-12); v_target t-invariant"),
    )
}

fn euler_exactness() -> Outcome {
    let mut rng = seeded_rng(3);
    let mut worst_target: f64 = 0.0;
    let mut worst_spread: f64 = 0.0;
    for _ in 0..20 {
        let scan = oracle::random_cloud(&mut rng, 32, -1.0, 1.0);
        let x1 = oracle::random_cloud(&mut rng, 200, -1.5, 1.5);
        let x0 = core(init_noisy(
            &scan,
            4,
            &NoiseConfig {
                scale: 0.3,
                seed: rng.random(),
            },
        ))?;
        let frozen = core(nn_flow(&x0, &x1, 0.0))?;
        let field = |_: f64, x: &PointCloud, _: Condition<'_>| -> CoreResult<Vec<Point3>> {
            assert_eq!(x.len(), frozen.v_target.len());
            Ok(frozen.v_target.clone())
        };
        let mut finals = Vec::new();
        for steps in [1, 2, 5, 10] {
            let config = SamplerConfig {
                steps,
                guidance_weight: 1.0,
                ..SamplerConfig::default()
            };
            let out = core(euler_integrate(&field, &x0, &scan, &config))?.into_final();
            for (p, q) in out.iter().zip(frozen.targets.iter()) {
                for k in 0..3 {
                    worst_target = worst_target.max((p[k] - q[k]).abs());
                }
            }
            finals.push(out);
        }
        for f in &finals[1..] {
            for (p, q) in f.iter().zip(finals[0].iter()) {
                for k in 0..3 {
                    worst_spread = worst_spread.max((p[k] - q[k]).abs());
                }
            }
        }
    }
    check(
        worst_target <= 1e-10 && worst_spread <= 1e-12,
        format!("steps 1/2/5/10: max error to NN targets {worst_target:.1e} (<= 1e-10), max spread across step counts {worst_spread:.1e} (<= 1e-12)"),
    )
}

fn cfg_identities() -> Outcome {
    let mut rng = seeded_rng(4);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for i in 0..10 {
        let config = FieldConfig {
            hidden_widths: vec![rng.random_range(4..24), rng.random_range(4..24)],
            time_embed_dim: 2 * rng.random_range(1..8),
            zero_init_output: false,
            seed: rng.random(),
            ..FieldConfig::default()
        };
        let field = core(VectorField::new(config.clone()))?;
        let mut state = field.init_state();
        for w in &mut state.weights {
            *w += rng.random_range(-0.1..0.1);
        }
        state.ema_weights = state.weights.clone();
        let path = dir.path().join(format!("ck{i}.json"));
        core(
            Checkpoint::new(
                config,
                state,
                OptimizerState::new(AdamConfig::default(), field.n_params()),
            )
            .save(&path),
        )?;
        let ck = core(Checkpoint::load(&path))?;
        let field = core(ck.validate())?;
        let view = FieldView::new(&field, &ck.state, true);
        let x = oracle::random_cloud(&mut rng, 100, -2.0, 2.0);
        let scan = oracle::random_cloud(&mut rng, 30, -2.0, 2.0);
        let t = rng.random_range(0.0..=1.0);
        let cond = core(field.forward(&ck.state.ema_weights, t, &x, Condition::Scan(&scan)))?;
        let null = core(field.forward(&ck.state.ema_weights, t, &x, Condition::Null))?;
        if cond == null {
            return Err(format!(
                "checkpoint {i}: condition has no effect, identity check would be vacuous"
            ));
        }
        if core(guided_field(&view, t, &x, &scan, 1.0))? != cond {
            return Err(format!("checkpoint {i}: w = 1 differs from the conditioned pass"));
        }
        if core(guided_field(&view, t, &x, &scan, 0.0))? != null {
            return Err(format!("checkpoint {i}: w = 0 differs from the unconditioned pass"));
        }
    }
    Ok("10 saved/loaded random checkpoints: w = 1 and w = 0 bit-identical to single passes".into())
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let objective = ObjectiveConfig::default();
    if objective.weights != core(LossWeights::new(1.0, 0.1))? {
        return Err("default loss weights are not (1, 0.1)".into());
    }
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = seeded_rng(500 + seed);
        let field = core(VectorField::new(FieldConfig {
            hidden_widths: vec![8, 8],
            time_embed_dim: 4,
            zero_init_output: false,
            seed,
            ..FieldConfig::default()
        }))?;
        let weights = field.init_state().weights;
        let scan = oracle::random_cloud(&mut rng, 16, -1.0, 1.0);
        let scene = oracle::random_cloud(&mut rng, 64, -1.0, 1.0);
        let samples: Vec<FlowSample> = (0..2)
            .map(|i| {
                let x0 = init_noisy(
                    &scan,
                    4,
                    &NoiseConfig {
                        scale: 0.3,
                        seed: seed * 3 + i,
                    },
                )
                .unwrap();
                let kind = if i == 0 {
                    ConditionKind::Scan
                } else {
                    ConditionKind::Null
                };
                nn_flow(&x0, &scene, rng.random_range(0.0..1.0))
                    .unwrap()
                    .with_condition(kind)
            })
            .collect();
        let inputs: Vec<FieldInput<'_>> = samples
            .iter()
            .map(|s| FieldInput {
                t: s.t,
                x_t: &s.x_t,
                condition: match s.condition {
                    ConditionKind::Scan => Condition::Scan(&scan),
                    ConditionKind::Null => Condition::Null,
                },
            })
            .collect();
        worst = worst.max(oracle::gradient_check(
            &field, &weights, &inputs, &samples, &objective, 1e-6, 1e-6,
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-4 && secs < 60.0,
        format!("20 instances, 2 hidden layers, 64 points: max rel err {worst:.1e} (< 1e-4); {secs:.1} s (< 60 s)"),
    )
}

const NOISE: f64 = 0.25;
const TRAIN_STEPS: u64 = 1500;

struct ToyData {
    train: Vec<SceneCase>,
    test: Vec<SceneCase>,
}

fn toy_data() -> CoreResult<ToyData> {
    let train = make_cases(&DatasetConfig {
        cases: 32,
        seed: 1,
        ..DatasetConfig::default()
    })?;
    let test = make_cases(&DatasetConfig {
        cases: 16,
        seed: 2,
        ..DatasetConfig::default()
    })?;
    Ok(ToyData { train, test })
}

fn toy_train(data: &ToyData, weights: LossWeights) -> CoreResult<Trainer> {
    let field = FieldConfig {
        hidden_widths: vec![32, 32],
        ..FieldConfig::default()
    };
    let config = TrainConfig {
        epochs: usize::MAX,
        batch_size: 1,
        max_steps: Some(TRAIN_STEPS),
        noise_scale: NOISE,
        k: 10,
        objective: ObjectiveConfig {
            weights,
            ..ObjectiveConfig::default()
        },
        seed: 3,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(field, config)?;
    let pairs: Vec<TrainPair<'_>> = data
        .train
        .iter()
        .map(|c| TrainPair {
            scan: &c.scan,
            scene: &c.scene,
        })
        .collect();
    trainer.run(&pairs, |_, _| Ok(()))?;
    Ok(trainer)
}

#[derive(Debug, Clone, Copy)]
struct ToyScores {
    baseline_cd: f64,
    baseline_iou: f64,
    cd: f64,
    iou: f64,
}

fn toy_eval(data: &ToyData, trainer: &Trainer) -> CoreResult<ToyScores> {
    let view = FieldView::new(&trainer.field, &trainer.state, true);
    let sampler = SamplerConfig::default();
    let n = data.test.len() as f64;
    let mut s = ToyScores {
        baseline_cd: 0.0,
        baseline_iou: 0.0,
        cd: 0.0,
        iou: 0.0,
    };
    for (i, case) in data.test.iter().enumerate() {
        let x0 = init_noisy(
            &case.scan,
            10,
            &NoiseConfig {
                scale: NOISE,
                seed: 1000 + i as u64,
            },
        )?;
        let x1 = euler_integrate(&view, &x0, &case.scan, &sampler)?.into_final();
        s.baseline_cd += eval_cd(&x0, &case.scene)? / n;
        s.baseline_iou += eval_voxel_iou(&x0, &case.scene, 0.5)? / n;
        s.cd += eval_cd(&x1, &case.scene)? / n;
        s.iou += eval_voxel_iou(&x1, &case.scene, 0.5)? / n;
    }
    Ok(s)
}

fn toy_completion(scores: &ToyScores, secs: f64) -> Outcome {
    let cd_ratio = scores.cd / scores.baseline_cd;
    let iou_ratio = scores.iou / scores.baseline_iou;
    check(
        cd_ratio <= 0.5 && iou_ratio >= 1.5 && secs < 600.0,
        format!(
            "16 held-out cases, {TRAIN_STEPS} steps: CD {:.4} vs baseline {:.4} (ratio {cd_ratio:.3} <= 0.5); IoU@0.5 {:.4} vs {:.4} (ratio {iou_ratio:.2} >= 1.5); {secs:.0} s (< 600 s)",
            scores.cd, scores.baseline_cd, scores.iou, scores.baseline_iou
        ),
    )
}

fn ablation(with_cdm: &ToyScores, without_cdm: &ToyScores) -> Outcome {
    check(
        with_cdm.cd <= without_cdm.cd,
        format!(
            "CD with (1, 0.1) = {:.5} <= CD with (1, 0) = {:.5}",
            with_cdm.cd, without_cdm.cd
        ),
    )
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_nnflow"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "nnflow {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = root.path().join("run.toml");
    std::fs::write(
        &config,
        "checkpoint_every = 5\n[data]\ncases = 3\n[data.budget]\nscan_points = 128\n[field]\nhidden_widths = [16, 16]\n[train]\nmax_steps = 12\nnoise_scale = 0.25\n",
    )
    .map_err(|e| e.to_string())?;
    let cfg = config.to_str().unwrap();
    for run in ["a", "b"] {
        let dir = root.path().join(run);
        let d = dir.to_str().unwrap();
        run_cli(
            &["make-data", "--config", cfg, "--set", &format!("out_dir={d}")],
            root.path(),
        )?;
        run_cli(
            &["train", "--quiet", "--config", cfg, "--set", &format!("out_dir={d}")],
            root.path(),
        )?;
        run_cli(
            &[
                "complete",
                "--trajectory",
                "--config",
                cfg,
                "--set",
                &format!("out_dir={d}"),
            ],
            root.path(),
        )?;
    }
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    let files = files_under(&a);
    if files != files_under(&b) {
        return Err("the two runs wrote different file sets".into());
    }
    for f in &files {
        if std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap() {
            return Err(format!("{} differs between runs", f.display()));
        }
    }
    let mut rng = seeded_rng(8);
    for i in 0..50 {
        let n = rng.random_range(0..500);
        let points: Vec<Point3> = (0..n)
            .map(|_| {
                [0, 1, 2].map(|_| {
                    f32::from_bits(rng.random_range(0..0x7f80_0000) | (rng.random::<u32>() & 0x8000_0000)) as f64
                })
            })
            .collect();
        let c = core(PointCloud::new(points))?;
        let path = root.path().join(format!("rt{i}.ply"));
        core(write_cloud(&c, &path, CloudFormat::PlyBinary))?;
        let back = core(read_cloud(&path, CloudFormat::PlyBinary))?;
        let same = back.len() == c.len()
            && back
                .iter()
                .zip(c.iter())
                .all(|(p, q)| (0..3).all(|k| p[k].to_bits() == q[k].to_bits()));
        if !same || core(parse_ply(&path, &encode_cloud(&back, CloudFormat::PlyBinary)))? != c {
            return Err(format!("binary PLY round trip {i} is not bit-exact"));
        }
    }
    Ok(format!(
        "make-data/train/complete twice: {} files byte-identical; 50 binary PLY round trips bit-exact",
        files.len()
    ))
}

fn statistical_contracts() -> Outcome {
    let scan = core(PointCloud::new(vec![[0.0; 3]]))?;
    let mut rng = seeded_rng(9);
    let draws = 10_000;
    let nulls = (0..draws)
        .filter(|_| {
            matches!(
                draw_condition(&scan, 0.1, &mut rng).map(|d| d.outcome),
                Ok(Condition::Null)
            )
        })
        .count();
    let freq = nulls as f64 / draws as f64;
    let ln2 = std::f64::consts::LN_2;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(1..50);
        let mut p: Vec<u64> = (0..n).map(|_| rng.random_range(0..10)).collect();
        let mut q: Vec<u64> = (0..n).map(|_| rng.random_range(0..10)).collect();
        p[0] += 1;
        q[n - 1] += 1;
        let j = core(jsd_from_counts(&p, &q, LogBase::Natural))?;
        lo = lo.min(j);
        hi = hi.max(j);
    }
    let a = core(PointCloud::new(vec![[0.1, 0.1, 0.0], [0.2, 0.3, 1.0]]))?;
    let b = core(PointCloud::new(vec![[5.1, 5.1, 0.0], [-7.0, 2.2, 0.0]]))?;
    let disjoint = core(eval_jsd_bev(&a, &b, 0.5, BevExtent::default()))?;
    let same = core(eval_jsd_bev(&a, &a, 0.5, BevExtent::default()))?;
    check(
        (freq - 0.1).abs() <= 0.01 && lo >= 0.0 && hi <= ln2 && (disjoint - ln2).abs() <= 1e-12 && same == 0.0,
        format!(
            "null frequency {freq:.4} (0.1 +- 0.01); JSD range [{lo:.3e}, {hi:.4}] within [0, ln 2]; disjoint {disjoint:.15} (ln 2 +- 1e-12); identical 0"
        ),
    )
}

fn report(n: usize, name: &str, outcome: &Outcome, failures: &mut usize) {
    match outcome {
        Ok(detail) => println!("criterion {n} PASS {name}: {detail}"),
        Err(detail) => {
            *failures += 1;
            println!("criterion {n} FAIL {name}: {detail}");
        }
    }
}

fn main() -> ExitCode {
    let mut failures = 0;
    report(1, "oracle equivalence", &oracle_equivalence(), &mut failures);
    report(2, "flow algebra", &flow_algebra(), &mut failures);
    report(3, "Euler exactness", &euler_exactness(), &mut failures);
    report(4, "guidance identities", &cfg_identities(), &mut failures);
    report(5, "gradient correctness", &gradient_correctness(), &mut failures);

    let start = Instant::now();
    let toy = toy_data().and_then(|data| {
        let with = toy_eval(&data, &toy_train(&data, LossWeights::new(1.0, 0.1)?)?)?;
        let secs = start.elapsed().as_secs_f64();
        let without = toy_eval(&data, &toy_train(&data, LossWeights::new(1.0, 0.0)?)?)?;
        Ok((with, secs, without))
    });
    match toy {
        Ok((with, secs, without)) => {
            report(6, "toy completion", &toy_completion(&with, secs), &mut failures);
            report(7, "loss ablation direction", &ablation(&with, &without), &mut failures);
        }
        Err(e) => {
            report(6, "toy completion", &Err(e.to_string()), &mut failures);
            report(7, "loss ablation direction", &Err(e.to_string()), &mut failures);
        }
    }

    report(8, "determinism and round trip", &determinism(), &mut failures);
    report(9, "statistical contracts", &statistical_contracts(), &mut failures);
    println!("acceptance: {} of 9 criteria passed", 9 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
