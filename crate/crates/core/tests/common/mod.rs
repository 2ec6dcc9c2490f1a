//! Brute-force references for the accelerated kernels. Shared with the
//! acceptance suite of the CLI crate.
#![allow(dead_code)]

use std::collections::BTreeSet;

use nnflow_core::field::{FieldInput, VectorField};
use nnflow_core::geometry::{BevExtent, Point3, PointCloud};
use nnflow_core::objective::{total_loss_grad, ObjectiveConfig};
use nnflow_core::FlowSample;
use rand::Rng;

pub fn random_cloud(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| {
                [
                    rng.random_range(lo..hi),
                    rng.random_range(lo..hi),
                    rng.random_range(lo..hi),
                ]
            })
            .collect(),
    )
    .unwrap()
}

/// Random points on a coarse lattice, so that exact distance ties are common.
pub fn lattice_cloud(rng: &mut impl Rng, n: usize, cells: i32, step: f64) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| [0, 1, 2].map(|_| rng.random_range(-cells..=cells) as f64 * step))
            .collect(),
    )
    .unwrap()
}

fn d2(a: &Point3, b: &Point3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Exhaustive scan; the first index wins ties.
pub fn nn_index(p: &Point3, target: &PointCloud) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, q) in target.iter().enumerate() {
        let d = d2(p, q);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn nn_map(source: &PointCloud, target: &PointCloud) -> Vec<usize> {
    source.iter().map(|p| nn_index(p, target).0).collect()
}

pub fn chamfer_sum(a: &PointCloud, b: &PointCloud) -> f64 {
    let ab: f64 = a.iter().map(|p| nn_index(p, b).1).sum();
    let ba: f64 = b.iter().map(|q| nn_index(q, a).1).sum();
    ab + ba
}

pub fn chamfer_mean(a: &PointCloud, b: &PointCloud) -> f64 {
    let ab: f64 = a.iter().map(|p| nn_index(p, b).1.sqrt()).sum::<f64>() / a.len() as f64;
    let ba: f64 = b.iter().map(|q| nn_index(q, a).1.sqrt()).sum::<f64>() / b.len() as f64;
    0.5 * (ab + ba)
}

pub fn voxels(cloud: &PointCloud, res: f64, origin: Point3) -> BTreeSet<[i64; 3]> {
    cloud
        .iter()
        .map(|p| [0, 1, 2].map(|k| ((p[k] - origin[k]) / res).floor() as i64))
        .collect()
}

pub fn iou(a: &PointCloud, b: &PointCloud, res: f64) -> f64 {
    let va = voxels(a, res, [0.0; 3]);
    let vb = voxels(b, res, [0.0; 3]);
    let inter = va.intersection(&vb).count();
    let union = va.union(&vb).count();
    inter as f64 / union as f64
}

/// Cell by cell: counts the points whose floor index lands on `(i, j)`.
/// Row-major with x as the row.
pub fn bev_counts(cloud: &PointCloud, res: f64, ext: &BevExtent) -> Vec<u64> {
    let nx = ((ext.xmax - ext.xmin) / res).ceil() as i64;
    let ny = ((ext.ymax - ext.ymin) / res).ceil() as i64;
    let mut out = Vec::with_capacity((nx * ny) as usize);
    for i in 0..nx {
        for j in 0..ny {
            let c = cloud
                .iter()
                .filter(|p| p[0] >= ext.xmin && p[0] < ext.xmax && p[1] >= ext.ymin && p[1] < ext.ymax)
                .filter(|p| {
                    ((p[0] - ext.xmin) / res).floor() as i64 == i && ((p[1] - ext.ymin) / res).floor() as i64 == j
                })
                .count();
            out.push(c as u64);
        }
    }
    out
}

/// Quadratic-time farthest point sampling from a given first pick: each
/// round recomputes every distance to the selected set from scratch.
pub fn fps(cloud: &PointCloud, n: usize, first: usize) -> Vec<usize> {
    let mut picked = vec![first];
    while picked.len() < n {
        let mut best = (usize::MAX, -1.0);
        for (i, p) in cloud.iter().enumerate() {
            if picked.contains(&i) {
                continue;
            }
            let d = picked.iter().map(|&s| d2(p, &cloud[s])).fold(f64::INFINITY, f64::min);
            if d > best.1 {
                best = (i, d);
            }
        }
        picked.push(best.0);
    }
    picked
}

/// Natural-log Jensen-Shannon divergence of two count vectors.
pub fn jsd(p: &[u64], q: &[u64]) -> f64 {
    let sp: u64 = p.iter().sum();
    let sq: u64 = q.iter().sum();
    let mut out = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let pa = a as f64 / sp as f64;
        let qb = b as f64 / sq as f64;
        let m = 0.5 * (pa + qb);
        if pa > 0.0 {
            out += 0.5 * pa * (pa / m).ln();
        }
        if qb > 0.0 {
            out += 0.5 * qb * (qb / m).ln();
        }
    }
    out
}

/// Batch-averaged training loss of `field` at `weights`.
pub fn batch_loss(
    field: &VectorField,
    weights: &[f64],
    inputs: &[FieldInput<'_>],
    samples: &[FlowSample],
    cfg: &ObjectiveConfig,
) -> f64 {
    let mut total = 0.0;
    for (input, sample) in inputs.iter().zip(samples) {
        let u = field.forward(weights, input.t, input.x_t, input.condition).unwrap();
        total += total_loss_grad(sample, &u, cfg).unwrap().0.total;
    }
    total / inputs.len() as f64
}

/// Worst relative error between the analytic gradient and central
/// differences with step `h`, over every parameter. Parameters whose two
/// values are both below `floor` in magnitude are compared absolutely.
pub fn gradient_check(
    field: &VectorField,
    weights: &[f64],
    inputs: &[FieldInput<'_>],
    samples: &[FlowSample],
    cfg: &ObjectiveConfig,
    h: f64,
    floor: f64,
) -> f64 {
    let (_, analytic) = field
        .loss_and_gradient(weights, inputs, |i, u| total_loss_grad(&samples[i], u, cfg))
        .unwrap();
    let mut w = weights.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..w.len() {
        let orig = w[k];
        w[k] = orig + h;
        let plus = batch_loss(field, &w, inputs, samples, cfg);
        w[k] = orig - h;
        let minus = batch_loss(field, &w, inputs, samples, cfg);
        w[k] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let scale = analytic[k].abs().max(numeric.abs()).max(floor);
        worst = worst.max((analytic[k] - numeric).abs() / scale);
    }
    worst
}
