use rand::Rng;
use serde::{Deserialize, Serialize};

use super::generate::{apply_budget, generate_scene, PointBudget, SceneCase, SceneSpec};
use crate::error::{Error, Result};
use crate::geometry::{add, scale, Point3, PointCloud};
use crate::rng::{derive_seed, seeded_rng};

/// A spinning range sensor: `elevation_channels` rings evenly spaced between
/// the two elevation limits, each with `azimuth_channels` rays over a full turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSpec {
    pub origin: Point3,
    pub azimuth_channels: usize,
    pub elevation_channels: usize,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub max_range: f64,
    /// Probability of losing a return.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            origin: [0.0, 0.0, 1.73],
            azimuth_channels: 256,
            elevation_channels: 24,
            elevation_min_deg: -60.0,
            elevation_max_deg: 5.0,
            max_range: 8.0,
            dropout: 0.05,
            seed: 0,
        }
    }
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.azimuth_channels >= 1
            && self.elevation_channels >= 1
            && self.max_range > 0.0
            && self.max_range.is_finite()
            && (0.0..=1.0).contains(&self.dropout)
            && self.elevation_min_deg <= self.elevation_max_deg
            && self.elevation_min_deg >= -90.0
            && self.elevation_max_deg <= 90.0
            && self.origin.iter().all(|c| c.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid scan spec {self:?}")))
        }
    }

    /// Unit ray directions, ring by ring.
    pub fn directions(&self) -> Vec<Point3> {
        let mut out = Vec::with_capacity(self.azimuth_channels * self.elevation_channels);
        for e in 0..self.elevation_channels {
            let el = if self.elevation_channels == 1 {
                self.elevation_min_deg
            } else {
                let f = e as f64 / (self.elevation_channels - 1) as f64;
                self.elevation_min_deg + f * (self.elevation_max_deg - self.elevation_min_deg)
            }
            .to_radians();
            for a in 0..self.azimuth_channels {
                let az = std::f64::consts::TAU * a as f64 / self.azimuth_channels as f64;
                out.push([el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]);
            }
        }
        out
    }
}

/// Casts every ray against the scene surfaces, keeps the first hit within
/// range, then drops returns with probability `dropout`.
pub fn simulate_scan(scene: &SceneSpec, spec: &ScanSpec) -> Result<PointCloud> {
    spec.validate()?;
    let surfaces = scene.surfaces()?;
    let mut rng = seeded_rng(spec.seed);
    let mut points = Vec::new();
    for dir in spec.directions() {
        let hit = surfaces
            .iter()
            .filter_map(|s| s.intersect(&spec.origin, &dir))
            .fold(f64::INFINITY, f64::min);
        if hit > spec.max_range {
            continue;
        }
        // One draw per return keeps the stream aligned across dropout values.
        let keep = rng.random::<f64>() >= spec.dropout;
        if keep {
            points.push(add(&spec.origin, &scale(&dir, hit)));
        }
    }
    PointCloud::new(points)
}

/// Generates the scene, scans it, and applies the point budget. Both clouds
/// are returned in the sensor frame (sensor at the origin), rounded to
/// single precision so that they survive a binary PLY round trip unchanged.
pub fn build_case(scene: &SceneSpec, scan: &ScanSpec, budget: &PointBudget, seed: u64) -> Result<SceneCase> {
    let full_scene = generate_scene(scene)?;
    let scan_spec = ScanSpec {
        seed: derive_seed(seed, 2),
        ..scan.clone()
    };
    let full_scan = simulate_scan(scene, &scan_spec)?;
    let (scene_cloud, scan_cloud) = apply_budget(full_scene, full_scan, budget, seed)?;
    let to_sensor = |c: PointCloud| {
        let o = scan.origin;
        PointCloud::new(
            c.iter()
                .map(|p| [0, 1, 2].map(|k| (p[k] - o[k]) as f32 as f64))
                .collect(),
        )
    };
    let (scene_cloud, scan_cloud) = (to_sensor(scene_cloud)?, to_sensor(scan_cloud)?);
    Ok(SceneCase {
        scene: scene_cloud,
        scan: scan_cloud,
        spec: scene.clone(),
        seed,
    })
}
