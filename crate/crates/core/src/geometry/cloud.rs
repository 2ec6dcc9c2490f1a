use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3-D point or vector in meters.
pub type Point3 = [f64; 3];

#[inline]
pub fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: &Point3, b: &Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: &Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: &Point3, b: &Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: &Point3) -> f64 {
    dot(a, a).sqrt()
}

/// Squared Euclidean distance. Every nearest-neighbor path in the crate goes
/// through this function so that accelerated and exhaustive searches compare
/// bit-identical values.
#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn is_finite(p: &Point3) -> bool {
    p.iter().all(|c| c.is_finite())
}

/// An ordered list of 3-D points with finite coordinates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point3>", into = "Vec<Point3>")]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if let Some(index) = points.iter().position(|p| !is_finite(p)) {
            return Err(Error::NonFinitePoint { index });
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Wraps points already known to be finite. Callers inside the crate use
    /// this on values derived from finite inputs.
    pub(crate) fn from_finite(points: Vec<Point3>) -> Self {
        debug_assert!(points.iter().all(is_finite));
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    /// Returns a new cloud with `offsets[i]` added to point `i`.
    pub fn displaced(&self, offsets: &[Point3]) -> Result<Self> {
        if offsets.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: offsets.len(),
            });
        }
        let points = self.points.iter().zip(offsets).map(|(p, o)| add(p, o)).collect();
        Self::new(points)
    }

    /// Picks the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self::from_finite(indices.iter().map(|&i| self.points[i]).collect())
    }
}

impl std::ops::Index<usize> for PointCloud {
    type Output = Point3;

    fn index(&self, index: usize) -> &Point3 {
        &self.points[index]
    }
}

impl<'a> IntoIterator for &'a PointCloud {
    type Item = &'a Point3;
    type IntoIter = std::slice::Iter<'a, Point3>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

impl TryFrom<Vec<Point3>> for PointCloud {
    type Error = Error;

    fn try_from(points: Vec<Point3>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<PointCloud> for Vec<Point3> {
    fn from(cloud: PointCloud) -> Self {
        cloud.points
    }
}
