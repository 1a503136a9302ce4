/// Exact nearest-neighbour index over equal-length vectors.
///
/// Distances are squared Euclidean, summed in coordinate order, so the index
/// and [`brute_force_nearest`] produce bit-identical distances. Equal
/// distances resolve to the lowest point index.
#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    points: Vec<f64>,
    nodes: Vec<Node>,
    order: Vec<u32>,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

const LEAF_SIZE: usize = 12;

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn better(d: f64, i: usize, best: (f64, usize)) -> bool {
    d < best.0 || (d == best.0 && i < best.1)
}

/// Index and squared distance of the nearest row of `points` (row-major, `dim` wide).
pub fn brute_force_nearest(points: &[f64], dim: usize, query: &[f64]) -> Option<(usize, f64)> {
    let mut best = (f64::INFINITY, usize::MAX);
    for (i, p) in points.chunks_exact(dim).enumerate() {
        let d = squared_distance(p, query);
        if better(d, i, best) {
            best = (d, i);
        }
    }
    (best.1 != usize::MAX).then_some((best.1, best.0))
}

impl KdTree {
    pub fn build(points: Vec<f64>, dim: usize) -> Self {
        assert!(dim > 0 && points.len().is_multiple_of(dim), "points must be rows of length {dim}");
        let n = points.len() / dim;
        let mut tree = KdTree { dim, points, nodes: Vec::new(), order: (0..n as u32).collect() };
        if n > 0 {
            tree.build_node(0, n);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn row(&self, i: u32) -> &[f64] {
        &self.points[i as usize * self.dim..(i as usize + 1) * self.dim]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split on the axis of widest spread at the median
        let mut axis = 0;
        let mut widest = -1.0;
        for a in 0..self.dim {
            let (lo, hi) = self.order[start..end]
                .iter()
                .map(|&i| self.points[i as usize * self.dim + a])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if hi - lo > widest {
                widest = hi - lo;
                axis = a;
            }
        }
        if widest <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let (points, dim) = (&self.points, self.dim);
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize * dim + axis].total_cmp(&points[b as usize * dim + axis])
        });
        let value = self.points[self.order[mid] as usize * self.dim + axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, query: &[f64]) -> Option<(usize, f64)> {
        assert_eq!(query.len(), self.dim, "query dimension");
        if self.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(0, query, &mut best);
        Some((best.1, best.0))
    }

    fn search(&self, node: usize, q: &[f64], best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = squared_distance(self.row(i), q);
                    if better(d, i as usize, *best) {
                        *best = (d, i as usize);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // only a strictly larger bound is pruned, so tied points with a
                // lower index on the far side are still found
                if diff * diff <= best.0 {
                    self.search(far, q, best);
                }
            }
        }
    }
}
