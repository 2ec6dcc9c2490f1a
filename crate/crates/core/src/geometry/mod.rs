//! Geometric kernels: nearest neighbors, Chamfer distance, farthest point
//! sampling, voxel occupancy and bird's-eye-view histograms.

mod chamfer;
mod cloud;
mod grid;
mod sampling;
mod spatial;

pub use chamfer::{chamfer_distance, chamfer_mean_distance, ChamferMatches};
pub use cloud::{add, cross, dist2, dot, is_finite, norm, scale, sub, Point3, PointCloud};
pub use grid::{bev_histogram, voxel_key, voxelize, BevExtent, BevHistogram, VoxelKey, VoxelSet};
pub use sampling::{
    concat_k, farthest_point_indices, farthest_point_indices_from, farthest_point_sample, random_sample,
};
pub use spatial::{nearest_neighbor_map, CorrespondenceMap, KdTree, NearestIndex, Neighbor, EXHAUSTIVE_BELOW};
