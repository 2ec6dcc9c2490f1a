//! Initial clouds and the nearest-neighbor conditional flow.
//!
//! The initial cloud is the scan replicated `k` times with a Gaussian offset on
//! every point. Each initial point then travels on a straight line toward its
//! nearest neighbor in the target cloud, at constant velocity.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{concat_k, nearest_neighbor_map, CorrespondenceMap, Point3, PointCloud};
use crate::rng::{seeded_rng, FlowRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Standard deviation of the per-axis offset, meters.
    pub scale: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { scale: 1.0, seed: 0 }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(Error::invalid(format!("noise scale must be >= 0, got {}", self.scale)));
        }
        Ok(())
    }
}

/// `concat_k(scan, k)` plus an independent `N(0, scale^2)` offset on every
/// coordinate. Offsets are drawn point by point, x then y then z.
pub fn init_noisy(scan: &PointCloud, k: usize, noise: &NoiseConfig) -> Result<PointCloud> {
    if scan.is_empty() {
        return Err(Error::EmptyScan);
    }
    noise.validate()?;
    let base = concat_k(scan, k)?;
    if noise.scale == 0.0 {
        return Ok(base);
    }
    let normal = Normal::new(0.0, noise.scale).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = seeded_rng(noise.seed);
    let points = base
        .into_points()
        .into_iter()
        .map(|p| {
            [
                p[0] + normal.sample(&mut rng),
                p[1] + normal.sample(&mut rng),
                p[2] + normal.sample(&mut rng),
            ]
        })
        .collect();
    PointCloud::new(points)
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::invalid(format!("time {t} outside [0, 1]")))
    }
}

/// Exact at both endpoints and when `x0 == x1`.
#[inline]
fn lerp(x0: &Point3, x1: &Point3, t: f64) -> Point3 {
    let d = crate::geometry::sub(x1, x0);
    if t < 0.5 {
        [x0[0] + t * d[0], x0[1] + t * d[1], x0[2] + t * d[2]]
    } else {
        let s = 1.0 - t;
        [x1[0] - s * d[0], x1[1] - s * d[1], x1[2] - s * d[2]]
    }
}

/// Straight-line transport between two points: position at `t` and the
/// constant velocity.
pub fn ot_flow(x0: &Point3, x1: &Point3, t: f64) -> Result<(Point3, Point3)> {
    check_time(t)?;
    Ok((lerp(x0, x1, t), crate::geometry::sub(x1, x0)))
}

/// Whether a training sample sees the scan or the null token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionKind {
    Scan,
    Null,
}

/// Conditioning input to the vector field.
#[derive(Debug, Clone, Copy)]
pub enum Condition<'a> {
    Null,
    Scan(&'a PointCloud),
}

impl Condition<'_> {
    pub fn kind(&self) -> ConditionKind {
        match self {
            Condition::Null => ConditionKind::Null,
            Condition::Scan(_) => ConditionKind::Scan,
        }
    }
}

/// One training tuple of the nearest-neighbor flow.
#[derive(Debug, Clone)]
pub struct FlowSample {
    pub t: f64,
    pub x0: PointCloud,
    pub x1: PointCloud,
    pub correspondence: CorrespondenceMap,
    /// `x1[m[i]]` for every initial point `i`.
    pub targets: PointCloud,
    pub x_t: PointCloud,
    pub v_target: Vec<Point3>,
    pub condition: ConditionKind,
}

impl FlowSample {
    pub fn with_condition(mut self, condition: ConditionKind) -> Self {
        self.condition = condition;
        self
    }
}

/// Builds the flow sample at time `t`: every point of `x0` moves toward its
/// nearest neighbor in `x1`.
pub fn nn_flow(x0: &PointCloud, x1: &PointCloud, t: f64) -> Result<FlowSample> {
    check_time(t)?;
    if x0.is_empty() {
        return Err(Error::invalid("empty initial cloud"));
    }
    let correspondence = nearest_neighbor_map(x0, x1)?;
    Ok(flow_from_map(x0, x1, correspondence, t))
}

/// Same as [`nn_flow`] with a precomputed correspondence (it must come from
/// `nearest_neighbor_map(x0, x1)`).
pub fn flow_from_map(x0: &PointCloud, x1: &PointCloud, correspondence: CorrespondenceMap, t: f64) -> FlowSample {
    let targets = correspondence.gather(x1);
    let x_t = x0.iter().zip(targets.iter()).map(|(a, b)| lerp(a, b, t)).collect();
    let v_target = x0
        .iter()
        .zip(targets.iter())
        .map(|(a, b)| crate::geometry::sub(b, a))
        .collect();
    FlowSample {
        t,
        x0: x0.clone(),
        x1: x1.clone(),
        correspondence,
        targets,
        x_t: PointCloud::from_finite(x_t),
        v_target,
        condition: ConditionKind::Scan,
    }
}

/// Uniform time in `[0, 1)`.
pub fn sample_time(rng: &mut FlowRng) -> f64 {
    rng.random::<f64>()
}

#[derive(Debug, Clone, Copy)]
pub struct ConditionDraw<'a> {
    pub keep_probability: f64,
    pub outcome: Condition<'a>,
}

/// Bernoulli draw between the scan and the null token; the null token comes
/// up with probability `p_null`.
pub fn draw_condition<'a>(scan: &'a PointCloud, p_null: f64, rng: &mut FlowRng) -> Result<ConditionDraw<'a>> {
    if !(0.0..=1.0).contains(&p_null) {
        return Err(Error::invalid(format!("null probability {p_null} outside [0, 1]")));
    }
    let u: f64 = rng.random();
    let outcome = if u < p_null {
        Condition::Null
    } else {
        Condition::Scan(scan)
    };
    Ok(ConditionDraw {
        keep_probability: 1.0 - p_null,
        outcome,
    })
}
