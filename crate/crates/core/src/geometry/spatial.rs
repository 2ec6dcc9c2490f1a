//! Exact nearest-neighbor search.
//!
//! Small clouds are scanned exhaustively; larger ones go through a k-d tree.
//! Both paths return the lowest target index among equidistant candidates, so
//! results never depend on which path ran.

use super::cloud::{dist2, Point3, PointCloud};
use crate::error::{Error, Result};

/// Target clouds smaller than this are scanned exhaustively.
pub const EXHAUSTIVE_BELOW: usize = 32;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Neighbor {
    const NONE: Neighbor = Neighbor {
        index: usize::MAX,
        dist2: f64::INFINITY,
    };

    #[inline]
    fn offer(&mut self, index: usize, d2: f64) {
        if d2 < self.dist2 || (d2 == self.dist2 && index < self.index) {
            self.index = index;
            self.dist2 = d2;
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// A static k-d tree over a copy of the indexed points.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    original: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[Point3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        if !points.is_empty() {
            build_node(points, &mut order, 0, &mut nodes);
        }
        let sorted = order.iter().map(|&i| points[i]).collect();
        Self {
            points: sorted,
            original: order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn nearest(&self, query: &Point3) -> Option<Neighbor> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = Neighbor::NONE;
        self.search(0, query, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, query: &Point3, best: &mut Neighbor) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    best.offer(self.original[slot], dist2(query, &self.points[slot]));
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, best);
                // `<=` keeps equidistant candidates with a lower index reachable.
                if diff * diff <= best.dist2 {
                    self.search(far, query, best);
                }
            }
        }
    }
}

fn build_node(points: &[Point3], order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    if hi[axis] - lo[axis] == 0.0 {
        // All points coincide.
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }

    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let value = points[order[mid]][axis];

    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (left_half, right_half) = order.split_at_mut(mid);
    let left = build_node(points, left_half, offset, nodes);
    let right = build_node(points, right_half, offset + mid, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

/// Nearest-neighbor index over a fixed target cloud.
#[derive(Debug, Clone)]
pub enum NearestIndex {
    Exhaustive(Vec<Point3>),
    Tree(KdTree),
}

impl NearestIndex {
    pub fn build(target: &PointCloud) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::EmptyTarget);
        }
        Ok(if target.len() < EXHAUSTIVE_BELOW {
            NearestIndex::Exhaustive(target.points().to_vec())
        } else {
            NearestIndex::Tree(KdTree::build(target.points()))
        })
    }

    pub fn nearest(&self, query: &Point3) -> Neighbor {
        match self {
            NearestIndex::Exhaustive(points) => {
                let mut best = Neighbor::NONE;
                for (i, p) in points.iter().enumerate() {
                    best.offer(i, dist2(query, p));
                }
                best
            }
            NearestIndex::Tree(tree) => tree.nearest(query).expect("index is non-empty"),
        }
    }

    pub fn nearest_all(&self, queries: &PointCloud) -> Vec<Neighbor> {
        queries.iter().map(|q| self.nearest(q)).collect()
    }
}

/// Per-point index map from a source cloud into a target cloud.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrespondenceMap {
    targets: Vec<usize>,
    target_len: usize,
}

impl CorrespondenceMap {
    pub fn new(targets: Vec<usize>, target_len: usize) -> Result<Self> {
        if let Some(&bad) = targets.iter().find(|&&t| t >= target_len) {
            return Err(Error::invalid(format!(
                "correspondence index {bad} out of range for target of {target_len} points"
            )));
        }
        Ok(Self { targets, target_len })
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }

    /// The target points in source order.
    pub fn gather(&self, target: &PointCloud) -> PointCloud {
        target.select(&self.targets)
    }
}

/// For every source point, the index of its closest target point.
pub fn nearest_neighbor_map(source: &PointCloud, target: &PointCloud) -> Result<CorrespondenceMap> {
    let index = NearestIndex::build(target)?;
    let targets = source.iter().map(|p| index.nearest(p).index).collect();
    Ok(CorrespondenceMap {
        targets,
        target_len: target.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[Point3]) -> PointCloud {
        PointCloud::new(points.to_vec()).unwrap()
    }

    #[test]
    fn identity_map() {
        let c = cloud(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]);
        assert_eq!(nearest_neighbor_map(&c, &c).unwrap().targets(), &[0, 1]);
    }

    #[test]
    fn unique_closest() {
        let s = cloud(&[[0.0, 0.0, 0.0]]);
        let t = cloud(&[[5.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert_eq!(nearest_neighbor_map(&s, &t).unwrap().targets(), &[1]);
    }

    #[test]
    fn empty_target_errors() {
        let s = cloud(&[[0.0, 0.0, 0.0]]);
        let err = nearest_neighbor_map(&s, &PointCloud::empty()).unwrap_err();
        assert_eq!(err.to_string(), "empty target cloud");
    }

    #[test]
    fn empty_source_gives_empty_map() {
        let t = cloud(&[[0.0, 0.0, 0.0]]);
        assert!(nearest_neighbor_map(&PointCloud::empty(), &t).unwrap().is_empty());
    }

    #[test]
    fn ties_take_lowest_index_in_tree() {
        // 64 copies of two equidistant points; query sits exactly between them.
        let mut pts = Vec::new();
        for i in 0..32 {
            pts.push([1.0, 0.0, i as f64 * 10.0]);
            pts.push([-1.0, 0.0, i as f64 * 10.0]);
        }
        let t = cloud(&pts);
        let s = cloud(&[[0.0, 0.0, 0.0], [0.0, 0.0, 50.0]]);
        let map = nearest_neighbor_map(&s, &t).unwrap();
        assert_eq!(map.targets(), &[0, 10]);
    }

    #[test]
    fn duplicate_points_resolve_to_first() {
        let pts = vec![[0.5, 0.5, 0.5]; 100];
        let t = cloud(&pts);
        let s = cloud(&[[0.5, 0.5, 0.5], [3.0, 0.0, 0.0]]);
        assert_eq!(nearest_neighbor_map(&s, &t).unwrap().targets(), &[0, 0]);
    }

    #[test]
    fn correspondence_bounds_checked() {
        assert!(CorrespondenceMap::new(vec![0, 3], 3).is_err());
        assert!(CorrespondenceMap::new(vec![0, 2], 3).is_ok());
    }
}
