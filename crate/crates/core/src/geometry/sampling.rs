use rand::Rng;

use super::cloud::{dist2, PointCloud};
use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Replicates `scan` `k` times, block by block.
pub fn concat_k(scan: &PointCloud, k: usize) -> Result<PointCloud> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let mut points = Vec::with_capacity(k * scan.len());
    for _ in 0..k {
        points.extend_from_slice(scan.points());
    }
    Ok(PointCloud::from_finite(points))
}

/// Indices chosen by farthest point sampling. The first index is a seeded
/// uniform draw; every later pick maximizes the distance to the picks so far,
/// ties going to the lowest index.
pub fn farthest_point_indices(cloud: &PointCloud, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > cloud.len() {
        return Err(Error::SampleSizeExceedsCloud {
            requested: n,
            available: cloud.len(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = seeded_rng(seed);
    let first = rng.random_range(0..cloud.len());
    farthest_point_indices_from(cloud, n, first)
}

/// Farthest point sampling with a given first pick.
pub fn farthest_point_indices_from(cloud: &PointCloud, n: usize, first: usize) -> Result<Vec<usize>> {
    if n > cloud.len() {
        return Err(Error::SampleSizeExceedsCloud {
            requested: n,
            available: cloud.len(),
        });
    }
    if first >= cloud.len() {
        return Err(Error::invalid("first index out of range"));
    }
    let points = cloud.points();
    let mut picked = Vec::with_capacity(n);
    if n == 0 {
        return Ok(picked);
    }
    let mut min_d2: Vec<f64> = points.iter().map(|p| dist2(p, &points[first])).collect();
    picked.push(first);
    // Picked points have distance 0 and are never chosen again unless the
    // whole cloud is duplicates; the -1 marker rules them out explicitly.
    min_d2[first] = -1.0;
    while picked.len() < n {
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, &d) in min_d2.iter().enumerate() {
            if d > best_d2 {
                best = i;
                best_d2 = d;
            }
        }
        picked.push(best);
        min_d2[best] = -1.0;
        let anchor = points[best];
        for (i, d) in min_d2.iter_mut().enumerate() {
            if *d >= 0.0 {
                let nd = dist2(&points[i], &anchor);
                if nd < *d {
                    *d = nd;
                }
            }
        }
    }
    Ok(picked)
}

pub fn farthest_point_sample(cloud: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::invalid("farthest point sampling needs a non-empty cloud"));
    }
    let idx = farthest_point_indices(cloud, n, seed)?;
    Ok(cloud.select(&idx))
}

/// Uniform sampling of `n` points without replacement, order of the draw kept.
pub fn random_sample(cloud: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    if n > cloud.len() {
        return Err(Error::SampleSizeExceedsCloud {
            requested: n,
            available: cloud.len(),
        });
    }
    let mut rng = seeded_rng(seed);
    let idx = rand::seq::index::sample(&mut rng, cloud.len(), n).into_vec();
    Ok(cloud.select(&idx))
}
