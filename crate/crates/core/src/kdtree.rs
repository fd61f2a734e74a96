//! Static kd-tree over flat point arrays, for k-nearest-neighbor and range
//! counting queries under the Euclidean or max norm.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    Euclidean,
    Max,
}

impl Norm {
    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Norm::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Norm::Max => a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
        }
    }

    /// Lower bound on the distance from `q` to any point of the box.
    fn box_dist(self, q: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        let gaps = q.iter().zip(lo.iter().zip(hi)).map(|(&x, (&l, &h))| {
            if x < l {
                l - x
            } else if x > h {
                x - h
            } else {
                0.0
            }
        });
        match self {
            Norm::Euclidean => gaps.map(|g| g * g).sum::<f64>().sqrt(),
            Norm::Max => gaps.fold(0.0, f64::max),
        }
    }
}

const LEAF: usize = 16;

struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

pub struct KdTree<'a> {
    data: &'a [f64],
    dim: usize,
    norm: Norm,
    idx: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    /// Builds over `data`, read as rows of length `dim`.
    pub fn new(data: &'a [f64], dim: usize, norm: Norm) -> Self {
        assert!(dim > 0 && data.len() % dim == 0);
        let n = data.len() / dim;
        let mut tree = KdTree { data, dim, norm, idx: (0..n).collect(), nodes: Vec::new() };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let dim = self.dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &i in &self.idx[start..end] {
            for (c, &v) in self.data[i * dim..(i + 1) * dim].iter().enumerate() {
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node { lo: lo.clone(), hi: hi.clone(), start, end, children: None });
        if end - start > LEAF {
            let axis = (0..dim).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
            if hi[axis] > lo[axis] {
                let mid = start + (end - start) / 2;
                let data = self.data;
                self.idx[start..end]
                    .select_nth_unstable_by(mid - start, |&a, &b| data[a * dim + axis].total_cmp(&data[b * dim + axis]));
                let l = self.build(start, mid);
                let r = self.build(mid, end);
                self.nodes[id].children = Some((l, r));
            }
        }
        id
    }

    /// Distances to the `k` nearest points other than `skip`, ascending.
    pub fn knn(&self, q: &[f64], k: usize, skip: Option<usize>) -> Vec<f64> {
        let mut best: Vec<f64> = Vec::with_capacity(k + 1);
        if !self.nodes.is_empty() && k > 0 {
            self.knn_rec(0, q, k, skip, &mut best);
        }
        best
    }

    fn knn_rec(&self, node: usize, q: &[f64], k: usize, skip: Option<usize>, best: &mut Vec<f64>) {
        let n = &self.nodes[node];
        let bound = if best.len() == k { best[k - 1] } else { f64::INFINITY };
        if self.norm.box_dist(q, &n.lo, &n.hi) > bound {
            return;
        }
        match n.children {
            None => {
                for &i in &self.idx[n.start..n.end] {
                    if Some(i) == skip {
                        continue;
                    }
                    let dist = self.norm.dist(q, self.point(i));
                    if best.len() < k || dist < best[best.len() - 1] {
                        let pos = best.partition_point(|&b| b <= dist);
                        best.insert(pos, dist);
                        best.truncate(k);
                    }
                }
            }
            Some((l, r)) => {
                let dl = self.norm.box_dist(q, &self.nodes[l].lo, &self.nodes[l].hi);
                let dr = self.norm.box_dist(q, &self.nodes[r].lo, &self.nodes[r].hi);
                let (a, b) = if dl <= dr { (l, r) } else { (r, l) };
                self.knn_rec(a, q, k, skip, best);
                self.knn_rec(b, q, k, skip, best);
            }
        }
    }

    /// Number of points other than `skip` at distance strictly below `r`.
    pub fn count_within(&self, q: &[f64], r: f64, skip: Option<usize>) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        self.count_rec(0, q, r, skip)
    }

    fn count_rec(&self, node: usize, q: &[f64], r: f64, skip: Option<usize>) -> usize {
        let n = &self.nodes[node];
        if self.norm.box_dist(q, &n.lo, &n.hi) >= r {
            return 0;
        }
        match n.children {
            Some((a, b)) => self.count_rec(a, q, r, skip) + self.count_rec(b, q, r, skip),
            None => self.idx[n.start..n.end]
                .iter()
                .filter(|&&i| Some(i) != skip && self.norm.dist(q, self.point(i)) < r)
                .count(),
        }
    }
}
