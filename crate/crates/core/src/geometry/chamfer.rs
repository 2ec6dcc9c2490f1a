use super::cloud::PointCloud;
use super::spatial::{NearestIndex, Neighbor};
use crate::error::{Error, Result};

/// Nearest-neighbor matches in both directions between two clouds.
#[derive(Debug, Clone)]
pub struct ChamferMatches {
    /// For each point of `a`, its nearest point in `b`.
    pub a_to_b: Vec<Neighbor>,
    /// For each point of `b`, its nearest point in `a`.
    pub b_to_a: Vec<Neighbor>,
}

impl ChamferMatches {
    pub fn compute(a: &PointCloud, b: &PointCloud) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::EmptyChamfer);
        }
        let index_b = NearestIndex::build(b)?;
        let index_a = NearestIndex::build(a)?;
        Ok(Self {
            a_to_b: index_b.nearest_all(a),
            b_to_a: index_a.nearest_all(b),
        })
    }

    /// Sum of squared nearest distances over both directions.
    pub fn squared_sum(&self) -> f64 {
        sum_in_order(self.a_to_b.iter().map(|n| n.dist2)) + sum_in_order(self.b_to_a.iter().map(|n| n.dist2))
    }

    /// Mean nearest distance per direction, averaged over the two directions.
    pub fn mean_distance(&self) -> f64 {
        let fwd = sum_in_order(self.a_to_b.iter().map(|n| n.dist2.sqrt())) / self.a_to_b.len() as f64;
        let bwd = sum_in_order(self.b_to_a.iter().map(|n| n.dist2.sqrt())) / self.b_to_a.len() as f64;
        0.5 * (fwd + bwd)
    }
}

// Sequential reduction in index order keeps sums reproducible.
fn sum_in_order(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |acc, v| acc + v)
}

/// Chamfer distance as the sum of squared nearest-neighbor distances in both
/// directions (not averaged).
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(ChamferMatches::compute(a, b)?.squared_sum())
}

/// Reporting variant of the Chamfer distance, in meters: the mean (unsquared)
/// nearest-neighbor distance of each direction, averaged over both.
pub fn chamfer_mean_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(ChamferMatches::compute(a, b)?.mean_distance())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(points.to_vec()).unwrap()
    }

    #[test]
    fn self_distance_is_zero() {
        let a = cloud(&[[0.0, 1.0, 2.0], [3.0, -1.0, 0.5], [0.25, 0.0, 0.0]]);
        assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer_mean_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn single_pair() {
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let b = cloud(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer_distance(&a, &b).unwrap(), 2.0);
        assert_eq!(chamfer_distance(&b, &a).unwrap(), 2.0);
        assert_eq!(chamfer_mean_distance(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn empty_errors() {
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let err = chamfer_distance(&a, &PointCloud::empty()).unwrap_err();
        assert_eq!(err.to_string(), "empty cloud in chamfer");
        assert!(chamfer_distance(&PointCloud::empty(), &a).is_err());
    }

    #[test]
    fn mean_variant_weights_directions_equally() {
        // a -> b: both points at distance 1 and 3; b -> a: distance 1.
        let a = cloud(&[[0.0, 0.0, 0.0], [-2.0, 0.0, 0.0]]);
        let b = cloud(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer_mean_distance(&a, &b).unwrap(), 0.5 * (2.0 + 1.0));
        assert_eq!(chamfer_distance(&a, &b).unwrap(), 1.0 + 9.0 + 1.0);
    }
}
