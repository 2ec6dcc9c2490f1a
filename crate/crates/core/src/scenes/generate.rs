use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::primitives::{Primitive, Surface};
use crate::error::{Error, Result};
use crate::geometry::{farthest_point_sample, random_sample, Point3, PointCloud};
use crate::rng::{derive_seed, seeded_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    /// Half side of the square ground plane at `z = 0`; `None` for no ground.
    pub ground_half_extent: Option<f64>,
    pub primitives: Vec<Primitive>,
    /// Surface samples per square meter.
    pub density: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.density.is_finite() && self.density > 0.0) {
            return Err(Error::invalid(format!("density must be > 0, got {}", self.density)));
        }
        if let Some(h) = self.ground_half_extent {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::DegeneratePrimitive(format!("ground half extent {h}")));
            }
            for p in &self.primitives {
                let (x, y, r) = p.footprint();
                if x.abs() + r > h || y.abs() + r > h {
                    return Err(Error::invalid(format!(
                        "primitive {p:?} lies outside the ground extent"
                    )));
                }
            }
        }
        Ok(())
    }

    /// All surface patches: ground first, then the primitives in order.
    pub fn surfaces(&self) -> Result<Vec<Surface>> {
        let mut out = Vec::new();
        if let Some(h) = self.ground_half_extent {
            out.push(Surface::rect([0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], h, h)?);
        }
        for p in &self.primitives {
            out.extend(p.surfaces()?);
        }
        Ok(out)
    }

    /// Distance from `p` to the closest surface patch.
    pub fn surface_distance(&self, p: &Point3) -> Result<f64> {
        Ok(self
            .surfaces()?
            .iter()
            .map(|s| s.distance(p))
            .fold(f64::INFINITY, f64::min))
    }
}

/// Uniform surface samples of every patch; each patch receives a
/// Poisson-distributed count with mean `density * area`.
pub fn generate_scene(spec: &SceneSpec) -> Result<PointCloud> {
    spec.validate()?;
    let surfaces = spec.surfaces()?;
    let mut rng = seeded_rng(spec.seed);
    let mut points = Vec::new();
    for s in &surfaces {
        let mean = spec.density * s.area();
        let count = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| Error::invalid(e.to_string()))?
                .sample(&mut rng) as usize
        } else {
            0
        };
        points.extend((0..count).map(|_| s.sample(&mut rng)));
    }
    PointCloud::new(points)
}

/// Random scene layouts: a ground plane with boxes and cylinders scattered in
/// a ring around the sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneFamily {
    pub ground_half_extent: f64,
    pub density: f64,
    pub boxes: [usize; 2],
    pub cylinders: [usize; 2],
    pub box_half_size: [f64; 2],
    pub box_half_height: [f64; 2],
    pub cylinder_radius: [f64; 2],
    pub cylinder_height: [f64; 2],
    /// Horizontal distance from the sensor to object centers.
    pub placement_radius: [f64; 2],
}

impl Default for SceneFamily {
    fn default() -> Self {
        Self {
            ground_half_extent: 4.0,
            density: 80.0,
            boxes: [1, 3],
            cylinders: [0, 2],
            box_half_size: [0.25, 0.6],
            box_half_height: [0.2, 0.6],
            cylinder_radius: [0.15, 0.35],
            cylinder_height: [0.4, 1.4],
            placement_radius: [1.2, 3.0],
        }
    }
}

fn range_ok(r: [f64; 2]) -> bool {
    r[0].is_finite() && r[1].is_finite() && r[0] > 0.0 && r[0] <= r[1]
}

fn draw(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

impl SceneFamily {
    pub fn validate(&self) -> Result<()> {
        let ok = self.ground_half_extent > 0.0
            && self.density > 0.0
            && self.boxes[0] <= self.boxes[1]
            && self.cylinders[0] <= self.cylinders[1]
            && [
                self.box_half_size,
                self.box_half_height,
                self.cylinder_radius,
                self.cylinder_height,
                self.placement_radius,
            ]
            .into_iter()
            .all(range_ok)
            && self.placement_radius[1] + self.box_half_size[1] * std::f64::consts::SQRT_2 <= self.ground_half_extent;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid scene family {self:?}")))
        }
    }

    pub fn sample(&self, seed: u64) -> Result<SceneSpec> {
        self.validate()?;
        let mut rng = seeded_rng(seed);
        let n_boxes = rng.random_range(self.boxes[0]..=self.boxes[1]);
        let n_cyl = rng.random_range(self.cylinders[0]..=self.cylinders[1]);
        let mut primitives = Vec::with_capacity(n_boxes + n_cyl);
        for _ in 0..n_boxes {
            let (x, y) = self.place(&mut rng);
            let hz = draw(&mut rng, self.box_half_height);
            primitives.push(Primitive::Box {
                center: [x, y, hz],
                half_extents: [
                    draw(&mut rng, self.box_half_size),
                    draw(&mut rng, self.box_half_size),
                    hz,
                ],
                yaw: rng.random_range(0.0..std::f64::consts::PI),
            });
        }
        for _ in 0..n_cyl {
            let (x, y) = self.place(&mut rng);
            primitives.push(Primitive::Cylinder {
                base: [x, y, 0.0],
                radius: draw(&mut rng, self.cylinder_radius),
                height: draw(&mut rng, self.cylinder_height),
            });
        }
        Ok(SceneSpec {
            ground_half_extent: Some(self.ground_half_extent),
            primitives,
            density: self.density,
            seed: derive_seed(seed, 1),
        })
    }

    fn place(&self, rng: &mut impl Rng) -> (f64, f64) {
        let r = draw(rng, self.placement_radius);
        let th = rng.random_range(0.0..std::f64::consts::TAU);
        (r * th.cos(), r * th.sin())
    }
}

/// Point budgets: the scan is reduced to `scan_points` by farthest point
/// sampling and the scene to `k * scan_points` by uniform sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointBudget {
    pub scan_points: usize,
    pub k: usize,
}

impl Default for PointBudget {
    fn default() -> Self {
        Self {
            scan_points: 512,
            k: 10,
        }
    }
}

impl PointBudget {
    pub fn scene_points(&self) -> usize {
        self.scan_points * self.k
    }

    pub fn validate(&self) -> Result<()> {
        if self.scan_points == 0 || self.k == 0 {
            return Err(Error::invalid("point budget must be positive"));
        }
        Ok(())
    }
}

/// A complete scene and its simulated scan.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneCase {
    pub scene: PointCloud,
    pub scan: PointCloud,
    pub spec: SceneSpec,
    pub seed: u64,
}

/// Clouds with fewer points than the budget are kept whole.
pub fn apply_budget(
    scene: PointCloud,
    scan: PointCloud,
    budget: &PointBudget,
    seed: u64,
) -> Result<(PointCloud, PointCloud)> {
    budget.validate()?;
    let scene = if scene.len() > budget.scene_points() {
        random_sample(&scene, budget.scene_points(), derive_seed(seed, 10))?
    } else {
        scene
    };
    let scan = if scan.len() > budget.scan_points {
        farthest_point_sample(&scan, budget.scan_points, derive_seed(seed, 11))?
    } else {
        scan
    };
    Ok((scene, scan))
}
