use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};

pub type VoxelKey = [i64; 3];

/// Occupied cells of a regular voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSet {
    pub resolution: f64,
    pub origin: Point3,
    pub occupied: HashSet<VoxelKey>,
}

impl VoxelSet {
    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn contains(&self, key: &VoxelKey) -> bool {
        self.occupied.contains(key)
    }

    pub fn intersection_count(&self, other: &VoxelSet) -> usize {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.occupied.iter().filter(|k| large.occupied.contains(*k)).count()
    }

    pub fn union_count(&self, other: &VoxelSet) -> usize {
        self.len() + other.len() - self.intersection_count(other)
    }

    /// Occupied cells in lexicographic order.
    pub fn sorted_keys(&self) -> Vec<VoxelKey> {
        let mut keys: Vec<_> = self.occupied.iter().copied().collect();
        keys.sort_unstable();
        keys
    }
}

#[inline]
pub fn voxel_key(p: &Point3, resolution: f64, origin: &Point3) -> VoxelKey {
    [
        ((p[0] - origin[0]) / resolution).floor() as i64,
        ((p[1] - origin[1]) / resolution).floor() as i64,
        ((p[2] - origin[2]) / resolution).floor() as i64,
    ]
}

pub fn voxelize(cloud: &PointCloud, resolution: f64, origin: Point3) -> Result<VoxelSet> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::InvalidResolution(resolution));
    }
    let occupied = cloud.iter().map(|p| voxel_key(p, resolution, &origin)).collect();
    Ok(VoxelSet {
        resolution,
        origin,
        occupied,
    })
}

/// Axis-aligned rectangle in the ground plane, `[xmin, xmax) x [ymin, ymax)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevExtent {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl BevExtent {
    pub fn square(half: f64) -> Self {
        Self {
            xmin: -half,
            xmax: half,
            ymin: -half,
            ymax: half,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.xmin, self.xmax, self.ymin, self.ymax]
            .iter()
            .all(|v| v.is_finite())
            && self.xmax > self.xmin
            && self.ymax > self.ymin;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("degenerate BEV extent {self:?}")))
        }
    }
}

impl Default for BevExtent {
    fn default() -> Self {
        Self::square(50.0)
    }
}

/// Bird's-eye-view point counts; `counts` is row-major with x as the row axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BevHistogram {
    pub resolution: f64,
    pub extent: BevExtent,
    pub nx: usize,
    pub ny: usize,
    pub counts: Vec<u64>,
    /// Points outside the extent, not counted in any cell.
    pub dropped: usize,
}

impl BevHistogram {
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.ny + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Cell of `(x, y)`, or `None` when outside the extent.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        bev_cell(x, y, self.resolution, &self.extent, self.nx, self.ny)
    }
}

fn bev_cell(x: f64, y: f64, res: f64, ext: &BevExtent, nx: usize, ny: usize) -> Option<(usize, usize)> {
    if x < ext.xmin || x >= ext.xmax || y < ext.ymin || y >= ext.ymax {
        return None;
    }
    let i = ((x - ext.xmin) / res).floor() as usize;
    let j = ((y - ext.ymin) / res).floor() as usize;
    (i < nx && j < ny).then_some((i, j))
}

pub fn bev_histogram(cloud: &PointCloud, resolution: f64, extent: BevExtent) -> Result<BevHistogram> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::InvalidResolution(resolution));
    }
    extent.validate()?;
    let nx = ((extent.xmax - extent.xmin) / resolution).ceil() as usize;
    let ny = ((extent.ymax - extent.ymin) / resolution).ceil() as usize;
    let mut counts = vec![0u64; nx * ny];
    let mut dropped = 0;
    for p in cloud {
        match bev_cell(p[0], p[1], resolution, &extent, nx, ny) {
            Some((i, j)) => counts[i * ny + j] += 1,
            None => dropped += 1,
        }
    }
    Ok(BevHistogram {
        resolution,
        extent,
        nx,
        ny,
        counts,
        dropped,
    })
}
