use alloc::vec::Vec;

use super::corr::CorrelationSpec;
use super::exponent::HalfInt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub vertices: Vec<usize>,
}

impl Component {
    pub fn is_even(&self) -> bool {
        self.vertices.len() % 2 == 0
    }
}

/// One vertex per factor, one edge per pair of distinct factors sharing a
/// contraction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterGraph {
    pub m: usize,
    pub edges: Vec<(usize, usize)>,
    pub components: Vec<Component>,
}

impl ClusterGraph {
    pub fn n_even(&self) -> usize {
        self.components.iter().filter(|c| c.is_even()).count()
    }

    pub fn n_odd(&self) -> usize {
        self.components.len() - self.n_even()
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    pub fn count(&mut self) -> usize {
        (0..self.parent.len()).filter(|&i| self.find(i) == i).count()
    }
}

pub fn cluster_graph(spec: &CorrelationSpec) -> ClusterGraph {
    let m = spec.m();
    let mut edges: Vec<(usize, usize)> = spec
        .pairs
        .iter()
        .filter(|(a, b)| a.factor != b.factor)
        .map(|(a, b)| (a.factor.min(b.factor), a.factor.max(b.factor)))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    let mut uf = UnionFind::new(m);
    for &(a, b) in &edges {
        uf.union(a, b);
    }
    let mut components: Vec<Component> = Vec::new();
    let mut root_index = alloc::vec![usize::MAX; m];
    for v in 0..m {
        let r = uf.find(v);
        if root_index[r] == usize::MAX {
            root_index[r] = components.len();
            components.push(Component { vertices: Vec::new() });
        }
        components[root_index[r]].vertices.push(v);
    }
    ClusterGraph { m, edges, components }
}

/// `s_C = n_e + n_o/2 - m/2`.
pub fn conjecture_exponent(spec: &CorrelationSpec) -> HalfInt {
    let g = cluster_graph(spec);
    HalfInt::from_int(g.n_even() as i64) + HalfInt::halves(g.n_odd() as i64) - HalfInt::halves(g.m as i64)
}
