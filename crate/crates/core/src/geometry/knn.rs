use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::{PointCloud, Vec3};
use crate::{Error, Result};

const LEAF_SIZE: usize = 8;

/// Row `i` lists the `k` nearest other points of point `i`, nearest first.
/// Equal distances are ordered by ascending index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    k: usize,
    indices: Vec<usize>,
}

impl NeighborGraph {
    /// Builds a graph from explicit rows. Every row must have length `k`, stay in
    /// range and exclude its own index.
    pub fn from_rows(rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if k == 0 {
            return Err(Error::InvalidArgument("neighbour rows must be nonempty".into()));
        }
        let mut indices = Vec::with_capacity(n * k);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != k || row.iter().any(|&j| j >= n || j == i) {
                return Err(Error::InvalidArgument(format!("invalid neighbour row {i}")));
            }
            indices.extend(row);
        }
        Ok(Self { k, indices })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> {
        self.indices.chunks(self.k)
    }
}

#[inline]
fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    dx * dx + dy * dy + dz * dz
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

struct KdTree<'a> {
    points: &'a [Vec3],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    fn new(points: &'a [Vec3]) -> Self {
        let mut tree = Self {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        tree.build(0, points.len());
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let slice = &mut self.order[start..end];
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in slice.iter() {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = slice.len() / 2;
        let pts = self.points;
        slice.select_nth_unstable_by(mid, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
        let value = pts[slice[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, start + mid);
        let right = self.build(start + mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    fn knn(&self, query: usize, k: usize) -> Vec<usize> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        let mut best = heap.into_vec();
        best.sort();
        best.into_iter().map(|c| c.index).collect()
    }

    fn search(&self, node: usize, query: usize, k: usize, heap: &mut BinaryHeap<Candidate>) {
        let q = &self.points[query];
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if i == query {
                        continue;
                    }
                    let c = Candidate { d2: dist2(q, &self.points[i]), index: i };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, heap);
                // `<=` keeps equal-distance candidates with a smaller index reachable.
                if heap.len() < k || diff * diff <= heap.peek().unwrap().d2 {
                    self.search(far, query, k, heap);
                }
            }
        }
    }
}

fn check_args(cloud: &PointCloud, k: usize) -> Result<()> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("k must be in 1..={}, got {k}", n - 1)));
    }
    if let Some(i) = cloud.points().iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::InvalidInput(format!("non-finite coordinate at point {i}")));
    }
    Ok(())
}

/// Exact kNN graph through a kd-tree. Output does not depend on thread count.
pub fn knn_graph(cloud: &PointCloud, k: usize) -> Result<NeighborGraph> {
    check_args(cloud, k)?;
    let tree = KdTree::new(cloud.points());
    let rows: Vec<Vec<usize>> = (0..cloud.len()).into_par_iter().map(|i| tree.knn(i, k)).collect();
    Ok(NeighborGraph {
        k,
        indices: rows.into_iter().flatten().collect(),
    })
}

/// All-pairs `O(N^2 log N)` reference implementation.
pub fn knn_graph_brute_force(cloud: &PointCloud, k: usize) -> Result<NeighborGraph> {
    check_args(cloud, k)?;
    let pts = cloud.points();
    let mut indices = Vec::with_capacity(pts.len() * k);
    for (i, p) in pts.iter().enumerate() {
        let mut all: Vec<Candidate> = pts
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, q)| Candidate { d2: dist2(p, q), index: j })
            .collect();
        all.sort();
        indices.extend(all.iter().take(k).map(|c| c.index));
    }
    Ok(NeighborGraph { k, indices })
}
