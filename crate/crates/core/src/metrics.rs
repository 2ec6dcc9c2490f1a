//! Completion metrics: Chamfer distance in meters, bird's-eye-view
//! Jensen-Shannon divergence, and voxel IoU at several resolutions.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bev_histogram, chamfer_mean_distance, voxelize, BevExtent, BevHistogram, Point3, PointCloud};

pub const DEFAULT_BEV_RESOLUTION: f64 = 0.5;
pub const DEFAULT_VOXEL_RESOLUTIONS: [f64; 3] = [0.5, 0.2, 0.1];

/// Logarithm used in the divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

impl LogBase {
    fn ln_scale(self) -> f64 {
        match self {
            LogBase::Natural => 1.0,
            LogBase::Two => std::f64::consts::LN_2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub bev_resolution: f64,
    pub bev_extent: BevExtent,
    pub voxel_resolutions: Vec<f64>,
    pub voxel_origin: Point3,
    pub log_base: LogBase,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            bev_resolution: DEFAULT_BEV_RESOLUTION,
            bev_extent: BevExtent::default(),
            voxel_resolutions: DEFAULT_VOXEL_RESOLUTIONS.to_vec(),
            voxel_origin: [0.0; 3],
            log_base: LogBase::Natural,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bev_resolution.is_finite() && self.bev_resolution > 0.0) {
            return Err(Error::InvalidResolution(self.bev_resolution));
        }
        self.bev_extent.validate()?;
        if let Some(&r) = self.voxel_resolutions.iter().find(|&&r| !(r.is_finite() && r > 0.0)) {
            return Err(Error::InvalidResolution(r));
        }
        Ok(())
    }
}

/// Symmetric mean nearest-neighbor distance, meters.
pub fn eval_cd(pred: &PointCloud, gt: &PointCloud) -> Result<f64> {
    chamfer_mean_distance(pred, gt)
}

/// Jensen-Shannon divergence between two count vectors after normalizing each
/// to a distribution. Empty bins contribute nothing (`0 log 0 = 0`).
pub fn jsd_from_counts(p: &[u64], q: &[u64], base: LogBase) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    let sp: u64 = p.iter().sum();
    let sq: u64 = q.iter().sum();
    if sp == 0 || sq == 0 {
        return Err(Error::OutOfExtent);
    }
    let (sp, sq) = (sp as f64, sq as f64);
    let mut kl_p = 0.0;
    let mut kl_q = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let pa = a as f64 / sp;
        let qb = b as f64 / sq;
        let m = 0.5 * (pa + qb);
        if pa > 0.0 {
            kl_p += pa * (pa / m).ln();
        }
        if qb > 0.0 {
            kl_q += qb * (qb / m).ln();
        }
    }
    let jsd = 0.5 * kl_p + 0.5 * kl_q;
    // Rounding can leave a tiny negative residue for identical inputs.
    Ok(jsd.max(0.0) / base.ln_scale())
}

fn histograms(
    pred: &PointCloud,
    gt: &PointCloud,
    resolution: f64,
    extent: BevExtent,
) -> Result<(BevHistogram, BevHistogram)> {
    Ok((
        bev_histogram(pred, resolution, extent)?,
        bev_histogram(gt, resolution, extent)?,
    ))
}

/// BEV Jensen-Shannon divergence, natural log.
pub fn eval_jsd_bev(pred: &PointCloud, gt: &PointCloud, resolution: f64, extent: BevExtent) -> Result<f64> {
    eval_jsd_bev_with(pred, gt, resolution, extent, LogBase::Natural)
}

pub fn eval_jsd_bev_with(
    pred: &PointCloud,
    gt: &PointCloud,
    resolution: f64,
    extent: BevExtent,
    base: LogBase,
) -> Result<f64> {
    let (hp, hq) = histograms(pred, gt, resolution, extent)?;
    jsd_from_counts(&hp.counts, &hq.counts, base)
}

/// Intersection over union of occupied voxels, grid anchored at `origin`.
pub fn eval_voxel_iou_at(pred: &PointCloud, gt: &PointCloud, resolution: f64, origin: Point3) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::invalid("empty ground truth for voxel IoU"));
    }
    let vp = voxelize(pred, resolution, origin)?;
    let vg = voxelize(gt, resolution, origin)?;
    let inter = vp.intersection_count(&vg);
    let union = vp.union_count(&vg);
    Ok(inter as f64 / union as f64)
}

/// Voxel IoU with the grid anchored at the sensor origin.
pub fn eval_voxel_iou(pred: &PointCloud, gt: &PointCloud, resolution: f64) -> Result<f64> {
    eval_voxel_iou_at(pred, gt, resolution, [0.0; 3])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelIou {
    pub resolution: f64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cd_m: f64,
    pub jsd: f64,
    pub voxel_iou: Vec<VoxelIou>,
    pub wall_time_s: f64,
}

impl EvalReport {
    pub fn iou_at(&self, resolution: f64) -> Option<f64> {
        self.voxel_iou
            .iter()
            .find(|v| v.resolution == resolution)
            .map(|v| v.iou)
    }

    /// Flat `key=value` lines with fixed key names. Values use the shortest
    /// representation that parses back to the same float.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "cd_m={}", self.cd_m).unwrap();
        writeln!(s, "jsd_bev={}", self.jsd).unwrap();
        for v in &self.voxel_iou {
            writeln!(s, "voxel_iou@{}={}", v.resolution, v.iou).unwrap();
        }
        writeln!(s, "wall_time_s={}", self.wall_time_s).unwrap();
        s
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::invalid(format!("malformed report line {line:?}"));
        let num = |v: &str, line: &str| v.trim().parse::<f64>().map_err(|_| bad(line));
        let (mut cd, mut jsd, mut wall) = (None, None, None);
        let mut voxel_iou = Vec::new();
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(line))?;
            match k {
                "cd_m" => cd = Some(num(v, line)?),
                "jsd_bev" => jsd = Some(num(v, line)?),
                "wall_time_s" => wall = Some(num(v, line)?),
                _ => {
                    let res = k.strip_prefix("voxel_iou@").ok_or_else(|| bad(line))?;
                    voxel_iou.push(VoxelIou {
                        resolution: num(res, line)?,
                        iou: num(v, line)?,
                    });
                }
            }
        }
        let missing = |k: &str| Error::invalid(format!("report is missing {k}"));
        Ok(Self {
            cd_m: cd.ok_or_else(|| missing("cd_m"))?,
            jsd: jsd.ok_or_else(|| missing("jsd_bev"))?,
            voxel_iou,
            wall_time_s: wall.ok_or_else(|| missing("wall_time_s"))?,
        })
    }

    /// Element-wise mean over reports that share the same resolutions.
    pub fn mean(reports: &[EvalReport]) -> Result<EvalReport> {
        let first = reports.first().ok_or_else(|| Error::invalid("no reports to average"))?;
        let n = reports.len() as f64;
        let mut out = EvalReport {
            cd_m: 0.0,
            jsd: 0.0,
            voxel_iou: first
                .voxel_iou
                .iter()
                .map(|v| VoxelIou {
                    resolution: v.resolution,
                    iou: 0.0,
                })
                .collect(),
            wall_time_s: 0.0,
        };
        for r in reports {
            if r.voxel_iou.len() != out.voxel_iou.len()
                || r.voxel_iou
                    .iter()
                    .zip(&out.voxel_iou)
                    .any(|(a, b)| a.resolution != b.resolution)
            {
                return Err(Error::invalid("reports use different voxel resolutions"));
            }
            out.cd_m += r.cd_m;
            out.jsd += r.jsd;
            out.wall_time_s += r.wall_time_s;
            for (o, v) in out.voxel_iou.iter_mut().zip(&r.voxel_iou) {
                o.iou += v.iou;
            }
        }
        out.cd_m /= n;
        out.jsd /= n;
        out.wall_time_s /= n;
        for o in &mut out.voxel_iou {
            o.iou /= n;
        }
        Ok(out)
    }
}

/// Column layout: name, CD[m], JSD, then IoU[%] per resolution.
pub fn format_table(rows: &[(String, EvalReport)]) -> String {
    let mut s = String::new();
    let resolutions: Vec<f64> = rows
        .first()
        .map(|(_, r)| r.voxel_iou.iter().map(|v| v.resolution).collect())
        .unwrap_or_default();
    write!(s, "{:<24} {:>9} {:>9}", "name", "CD[m]", "JSD").unwrap();
    for r in &resolutions {
        write!(s, " {:>11}", format!("IoU@{r}[%]")).unwrap();
    }
    s.push('\n');
    for (name, rep) in rows {
        write!(s, "{:<24} {:>9.4} {:>9.4}", name, rep.cd_m, rep.jsd).unwrap();
        for v in &rep.voxel_iou {
            write!(s, " {:>11.2}", 100.0 * v.iou).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn eval_all(pred: &PointCloud, gt: &PointCloud, config: &MetricsConfig) -> Result<EvalReport> {
    config.validate()?;
    let start = Instant::now();
    let cd_m = eval_cd(pred, gt)?;
    let jsd = eval_jsd_bev_with(pred, gt, config.bev_resolution, config.bev_extent, config.log_base)?;
    let voxel_iou = config
        .voxel_resolutions
        .iter()
        .map(|&resolution| {
            Ok(VoxelIou {
                resolution,
                iou: eval_voxel_iou_at(pred, gt, resolution, config.voxel_origin)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        cd_m,
        jsd,
        voxel_iou,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
