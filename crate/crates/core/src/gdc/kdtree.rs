//! Exact k-nearest-neighbor queries over 3D points.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Point3;

#[derive(Debug)]
enum Node {
    Leaf(Vec<usize>),
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

const LEAF_SIZE: usize = 16;

/// Static kd-tree; ties between equidistant points are broken by the lower index.
#[derive(Debug)]
pub struct KdTree<'a> {
    points: &'a [Point3<f64>],
    root: Node,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Point3<f64>]) -> Self {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let root = Self::build_node(points, &mut idx);
        Self { points, root }
    }

    fn build_node(points: &[Point3<f64>], idx: &mut [usize]) -> Node {
        if idx.len() <= LEAF_SIZE {
            return Node::Leaf(idx.to_vec());
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in idx.iter() {
            for a in 0..3 {
                lo[a] = lo[a].min(points[i][a]);
                hi[a] = hi[a].max(points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|a, b| (hi[*a] - lo[*a]).total_cmp(&(hi[*b] - lo[*b])))
            .unwrap_or(0);
        if hi[axis] - lo[axis] <= 0.0 {
            return Node::Leaf(idx.to_vec());
        }
        idx.sort_by(|a, b| points[*a][axis].total_cmp(&points[*b][axis]).then(a.cmp(b)));
        let mid = idx.len() / 2;
        let value = points[idx[mid]][axis];
        let (l, r) = idx.split_at_mut(mid);
        Node::Split {
            axis,
            value,
            left: Box::new(Self::build_node(points, l)),
            right: Box::new(Self::build_node(points, r)),
        }
    }

    /// The `k` nearest points to `points[query]`, excluding `query`, nearest first.
    pub fn nearest_excluding(&self, query: usize, k: usize) -> Vec<usize> {
        let q = self.points[query];
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(&self.root, &q, query, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| c.index).collect()
    }

    fn search(&self, node: &Node, q: &Point3<f64>, skip: usize, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match node {
            Node::Leaf(items) => {
                for &i in items {
                    if i == skip {
                        continue;
                    }
                    let c = Candidate {
                        dist2: (self.points[i] - q).norm_squared(),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if let Some(top) = heap.peek() {
                        if c < *top {
                            heap.pop();
                            heap.push(c);
                        }
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, skip, k, heap);
                let must_visit = heap.len() < k || heap.peek().is_some_and(|top| diff * diff <= top.dist2);
                if must_visit {
                    self.search(far, q, skip, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Point3<f64>], q: usize, k: usize) -> Vec<usize> {
        let mut c: Vec<Candidate> = (0..points.len())
            .filter(|i| *i != q)
            .map(|i| Candidate {
                dist2: (points[i] - points[q]).norm_squared(),
                index: i,
            })
            .collect();
        c.sort();
        c.truncate(k);
        c.into_iter().map(|c| c.index).collect()
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point3<f64>> = (0..500)
            .map(|_| Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0), rng.random_range(1.0..30.0)))
            .collect();
        let tree = KdTree::build(&pts);
        for q in (0..500).step_by(7) {
            assert_eq!(tree.nearest_excluding(q, 10), brute(&pts, q, 10));
        }
    }

    #[test]
    fn handles_duplicates_and_grids() {
        let mut pts = Vec::new();
        for y in 0..10 {
            for x in 0..10 {
                pts.push(Point3::new(x as f64, y as f64, 5.0));
            }
        }
        pts.push(Point3::new(3.0, 3.0, 5.0));
        let tree = KdTree::build(&pts);
        for q in 0..pts.len() {
            assert_eq!(tree.nearest_excluding(q, 8), brute(&pts, q, 8));
        }
    }
}
