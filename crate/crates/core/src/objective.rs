//! Training objective: the nearest-neighbor flow matching regression, the
//! Chamfer matching term, and their weighted sum.
//!
//! Every loss here comes with its gradient with respect to the predicted
//! per-point vectors, which is what the field backpropagates.

use serde::{Deserialize, Serialize};

use crate::coupling::FlowSample;
use crate::error::{Error, Result};
use crate::geometry::{add, scale, ChamferMatches, Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_nfm: f64,
    pub lambda_cdm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_nfm: 1.0,
            lambda_cdm: 0.1,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_nfm: f64, lambda_cdm: f64) -> Result<Self> {
        let w = Self { lambda_nfm, lambda_cdm };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_nfm.is_finite()
            && self.lambda_cdm.is_finite()
            && self.lambda_nfm >= 0.0
            && self.lambda_cdm >= 0.0
            && (self.lambda_nfm > 0.0 || self.lambda_cdm > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "loss weights must be non-negative and not both zero, got ({}, {})",
                self.lambda_nfm, self.lambda_cdm
            )))
        }
    }
}

/// Which cloud the predicted field displaces inside the Chamfer term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CdmAnchor {
    /// `x0 + u`: the full predicted displacement applied to the initial cloud.
    #[default]
    Start,
    /// `x_t + (1 - t) u`: the remaining displacement applied at time `t`.
    Interpolant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NfmReduction {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CdmReduction {
    /// Chamfer sum divided by the total point count of both clouds.
    #[default]
    PerPoint,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub weights: LossWeights,
    pub cdm_anchor: CdmAnchor,
    pub nfm_reduction: NfmReduction,
    pub cdm_reduction: CdmReduction,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub nfm: f64,
    pub cdm: f64,
    pub total: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        self.nfm.is_finite() && self.cdm.is_finite() && self.total.is_finite()
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}

/// Mean squared error between predicted and target vectors.
pub fn nfm_loss(u_pred: &[Point3], v_target: &[Point3]) -> Result<f64> {
    Ok(nfm_loss_grad(u_pred, v_target)?.0)
}

/// Mean squared error and its gradient with respect to `u_pred`.
pub fn nfm_loss_grad(u_pred: &[Point3], v_target: &[Point3]) -> Result<(f64, Vec<Point3>)> {
    check_len(v_target.len(), u_pred.len())?;
    if u_pred.is_empty() {
        return Err(Error::invalid("nfm loss over zero points"));
    }
    let n = u_pred.len() as f64;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(u_pred.len());
    for (u, v) in u_pred.iter().zip(v_target) {
        let r = [u[0] - v[0], u[1] - v[1], u[2] - v[2]];
        sum += r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
        grad.push(scale(&r, 2.0 / n));
    }
    Ok((sum / n, grad))
}

/// Chamfer distance (squared, summed) between `x0 + u_pred` and `x1`.
pub fn cdm_loss(x0: &PointCloud, u_pred: &[Point3], x1: &PointCloud) -> Result<f64> {
    Ok(cdm_loss_grad(x0, u_pred, x1)?.0)
}

/// [`cdm_loss`] with its subgradient with respect to `u_pred`. Each min term
/// routes its gradient to the matched pair only, lowest index on ties.
pub fn cdm_loss_grad(x0: &PointCloud, u_pred: &[Point3], x1: &PointCloud) -> Result<(f64, Vec<Point3>)> {
    check_len(x0.len(), u_pred.len())?;
    let moved = x0.displaced(u_pred)?;
    chamfer_with_grad(&moved, x1)
}

/// Squared Chamfer sum of `(a, b)` and its gradient with respect to `a`.
fn chamfer_with_grad(a: &PointCloud, b: &PointCloud) -> Result<(f64, Vec<Point3>)> {
    let matches = ChamferMatches::compute(a, b)?;
    let mut grad = vec![[0.0; 3]; a.len()];
    for (i, n) in matches.a_to_b.iter().enumerate() {
        let q = b[n.index];
        let p = a[i];
        for k in 0..3 {
            grad[i][k] += 2.0 * (p[k] - q[k]);
        }
    }
    for (j, n) in matches.b_to_a.iter().enumerate() {
        let q = b[j];
        let p = a[n.index];
        for k in 0..3 {
            grad[n.index][k] += 2.0 * (p[k] - q[k]);
        }
    }
    Ok((matches.squared_sum(), grad))
}

/// Weighted objective for one flow sample, without gradients.
pub fn total_loss(sample: &FlowSample, u_pred: &[Point3], config: &ObjectiveConfig) -> Result<LossReport> {
    Ok(total_loss_grad(sample, u_pred, config)?.0)
}

/// Weighted objective for one flow sample and its gradient with respect to
/// `u_pred`. The reported `nfm` and `cdm` values carry the configured
/// reductions.
pub fn total_loss_grad(
    sample: &FlowSample,
    u_pred: &[Point3],
    config: &ObjectiveConfig,
) -> Result<(LossReport, Vec<Point3>)> {
    config.weights.validate()?;
    check_len(sample.v_target.len(), u_pred.len())?;
    let n = u_pred.len();

    let (mut nfm, mut nfm_grad) = nfm_loss_grad(u_pred, &sample.v_target)?;
    if config.nfm_reduction == NfmReduction::Sum {
        nfm *= n as f64;
        for g in &mut nfm_grad {
            *g = scale(g, n as f64);
        }
    }

    let (raw, mut cdm_grad) = match config.cdm_anchor {
        CdmAnchor::Start => cdm_loss_grad(&sample.x0, u_pred, &sample.x1)?,
        CdmAnchor::Interpolant => {
            let rest = 1.0 - sample.t;
            let offsets: Vec<Point3> = u_pred.iter().map(|u| scale(u, rest)).collect();
            let (value, grad) = cdm_loss_grad(&sample.x_t, &offsets, &sample.x1)?;
            (value, grad.iter().map(|g| scale(g, rest)).collect())
        }
    };
    let cdm = match config.cdm_reduction {
        CdmReduction::Sum => raw,
        CdmReduction::PerPoint => {
            let denom = (n + sample.x1.len()) as f64;
            for g in &mut cdm_grad {
                *g = scale(g, 1.0 / denom);
            }
            raw / denom
        }
    };

    let LossWeights { lambda_nfm, lambda_cdm } = config.weights;
    let total = lambda_nfm * nfm + lambda_cdm * cdm;
    let grad = nfm_grad
        .iter()
        .zip(&cdm_grad)
        .map(|(a, b)| add(&scale(a, lambda_nfm), &scale(b, lambda_cdm)))
        .collect();
    Ok((LossReport { nfm, cdm, total }, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::nn_flow;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(points.to_vec()).unwrap()
    }

    #[test]
    fn nfm_basics() {
        let v = vec![[0.3, -0.2, 1.0], [0.0, 0.0, 0.0]];
        assert_eq!(nfm_loss(&v, &v).unwrap(), 0.0);
        assert_eq!(nfm_loss(&[[1.0, 0.0, 0.0]], &[[0.0; 3]]).unwrap(), 1.0);
        assert!(matches!(
            nfm_loss(&v, &v[..1]),
            Err(Error::LengthMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn cdm_single_pair() {
        let x0 = cloud(&[[0.0; 3]]);
        let x1 = cloud(&[[1.0, 0.0, 0.0]]);
        assert_eq!(cdm_loss(&x0, &[[0.0; 3]], &x1).unwrap(), 2.0);
    }

    #[test]
    fn cdm_zero_on_bijective_transport() {
        let x0 = cloud(&[[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]]);
        let x1 = cloud(&[[0.5, 0.0, 0.0], [5.0, 1.0, 0.0]]);
        let s = nn_flow(&x0, &x1, 0.0).unwrap();
        assert_eq!(cdm_loss(&x0, &s.v_target, &x1).unwrap(), 0.0);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::new(0.0, 0.0).is_err());
        assert!(LossWeights::new(-1.0, 1.0).is_err());
        assert!(LossWeights::new(1.0, 0.0).is_ok());
        assert_eq!(
            LossWeights::default(),
            LossWeights {
                lambda_nfm: 1.0,
                lambda_cdm: 0.1
            }
        );
    }

    #[test]
    fn total_respects_weights() {
        let x0 = cloud(&[[0.0, 0.0, 0.0], [1.0, 1.0, 0.0]]);
        let x1 = cloud(&[[0.5, 0.0, 0.0], [1.0, 2.0, 0.0], [3.0, 0.0, 0.0]]);
        let s = nn_flow(&x0, &x1, 0.4).unwrap();
        let u = vec![[0.1, 0.2, 0.3], [-0.4, 0.5, 0.0]];
        let mut cfg = ObjectiveConfig::default();
        let full = total_loss(&s, &u, &cfg).unwrap();
        assert_eq!(full.total, full.nfm + 0.1 * full.cdm);

        cfg.weights = LossWeights::new(1.0, 0.0).unwrap();
        let r = total_loss(&s, &u, &cfg).unwrap();
        assert_eq!(r.total, r.nfm);
        cfg.weights = LossWeights::new(0.0, 1.0).unwrap();
        let r = total_loss(&s, &u, &cfg).unwrap();
        assert_eq!(r.total, r.cdm);
        assert_eq!(r.cdm, cdm_loss(&x0, &u, &x1).unwrap() / 5.0);
    }

    #[test]
    fn interpolant_anchor_at_zero_time_matches_start() {
        let x0 = cloud(&[[0.0, 0.0, 0.0], [1.0, 1.0, 0.0]]);
        let x1 = cloud(&[[0.5, 0.0, 0.0], [1.0, 2.0, 0.0]]);
        let s = nn_flow(&x0, &x1, 0.0).unwrap();
        let u = vec![[0.1, 0.2, 0.3], [-0.4, 0.5, 0.0]];
        let a = total_loss(&s, &u, &ObjectiveConfig::default()).unwrap();
        let cfg = ObjectiveConfig {
            cdm_anchor: CdmAnchor::Interpolant,
            ..Default::default()
        };
        let b = total_loss(&s, &u, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
