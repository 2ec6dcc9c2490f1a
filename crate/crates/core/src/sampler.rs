//! Euler integration of the learned field with classifier-free guidance.

use serde::{Deserialize, Serialize};

use crate::coupling::{init_noisy, Condition, NoiseConfig};
use crate::error::{Error, Result};
use crate::field::{ModelState, VectorField};
use crate::geometry::{is_finite, Point3, PointCloud};

/// Anything that maps `(t, X, condition)` to one vector per point.
pub trait VelocityField {
    fn velocity(&self, t: f64, x: &PointCloud, condition: Condition<'_>) -> Result<Vec<Point3>>;
}

/// A [`VectorField`] bound to one parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct FieldView<'a> {
    pub field: &'a VectorField,
    pub weights: &'a [f64],
}

impl<'a> FieldView<'a> {
    pub fn new(field: &'a VectorField, state: &'a ModelState, use_ema: bool) -> Self {
        let weights = if use_ema { &state.ema_weights } else { &state.weights };
        Self { field, weights }
    }
}

impl VelocityField for FieldView<'_> {
    fn velocity(&self, t: f64, x: &PointCloud, condition: Condition<'_>) -> Result<Vec<Point3>> {
        self.field.forward(self.weights, t, x, condition)
    }
}

impl<F> VelocityField for F
where
    F: Fn(f64, &PointCloud, Condition<'_>) -> Result<Vec<Point3>>,
{
    fn velocity(&self, t: f64, x: &PointCloud, condition: Condition<'_>) -> Result<Vec<Point3>> {
        self(t, x, condition)
    }
}

pub const DEFAULT_STEPS: usize = 10;
pub const DEFAULT_GUIDANCE: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub steps: usize,
    pub guidance_weight: f64,
    pub use_ema: bool,
    pub record_trajectory: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            guidance_weight: DEFAULT_GUIDANCE,
            use_ema: true,
            record_trajectory: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("sampler steps must be >= 1"));
        }
        if !self.guidance_weight.is_finite() {
            return Err(Error::invalid("guidance weight must be finite"));
        }
        Ok(())
    }

    pub fn step_size(&self) -> f64 {
        1.0 / self.steps as f64
    }
}

/// Guided field `u(t, X, null) + w (u(t, X, scan) - u(t, X, null))`,
/// evaluated as `(1 - w) u_null + w u_scan` so that `w = 1` and `w = 0`
/// reproduce the single forward passes exactly. Always two evaluations.
pub fn guided_field<V: VelocityField + ?Sized>(
    field: &V,
    t: f64,
    x: &PointCloud,
    scan: &PointCloud,
    w: f64,
) -> Result<Vec<Point3>> {
    let uncond = field.velocity(t, x, Condition::Null)?;
    let cond = field.velocity(t, x, Condition::Scan(scan))?;
    if uncond.len() != x.len() || cond.len() != x.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: uncond.len().min(cond.len()),
        });
    }
    let a = 1.0 - w;
    Ok(uncond
        .iter()
        .zip(&cond)
        .map(|(n, c)| [a * n[0] + w * c[0], a * n[1] + w * c[1], a * n[2] + w * c[2]])
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `0, h, 2h, ..., 1` when recorded; only the final time otherwise.
    pub times: Vec<f64>,
    pub states: Vec<PointCloud>,
}

impl Trajectory {
    pub fn final_state(&self) -> &PointCloud {
        self.states.last().expect("trajectory holds at least one state")
    }

    pub fn into_final(mut self) -> PointCloud {
        self.states.pop().expect("trajectory holds at least one state")
    }
}

/// Left-endpoint Euler from `t = 0` to `t = 1` in `config.steps` steps.
pub fn euler_integrate<V: VelocityField + ?Sized>(
    field: &V,
    x0: &PointCloud,
    scan: &PointCloud,
    config: &SamplerConfig,
) -> Result<Trajectory> {
    config.validate()?;
    let steps = config.steps;
    let h = config.step_size();
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    let mut x = x0.clone();
    for i in 0..steps {
        let t = i as f64 / steps as f64;
        let u = guided_field(field, t, &x, scan, config.guidance_weight)?;
        let mut next = x.into_points();
        for (p, v) in next.iter_mut().zip(&u) {
            p[0] += h * v[0];
            p[1] += h * v[1];
            p[2] += h * v[2];
        }
        if !next.iter().all(is_finite) {
            return Err(Error::NonFiniteState { step: i });
        }
        x = PointCloud::from_finite(next);
        if config.record_trajectory {
            times.push((i + 1) as f64 / steps as f64);
            states.push(x.clone());
        }
    }
    if !config.record_trajectory {
        times = vec![1.0];
        states = vec![x];
    }
    Ok(Trajectory { times, states })
}

/// Builds the noisy initial cloud from the scan and integrates it.
pub fn complete_scene<V: VelocityField + ?Sized>(
    field: &V,
    scan: &PointCloud,
    k: usize,
    noise: &NoiseConfig,
    config: &SamplerConfig,
) -> Result<Trajectory> {
    if scan.is_empty() {
        return Err(Error::EmptyScan);
    }
    let x0 = init_noisy(scan, k, noise)?;
    euler_integrate(field, &x0, scan, config)
}
