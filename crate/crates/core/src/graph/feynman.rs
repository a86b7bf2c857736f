//! Feynman diagrams of deep-linear correlation functions, their double-line
//! blow-ups and exact width exponents.

use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use super::cluster::{conjecture_exponent, UnionFind};
use super::corr::{check_depths, CorrelationSpec};
use super::exponent::HalfInt;
use super::GraphError;

pub const DEFAULT_DIAGRAM_CAP: u128 = 10_000_000;

/// Weight array of a deep-linear chain: the input layer `U`, hidden layers
/// `W(l)` for `l >= 1`, and the readout `V`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeType {
    U,
    W(usize),
    V,
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeType::U => write!(f, "U"),
            EdgeType::W(l) => write!(f, "W{l}"),
            EdgeType::V => write!(f, "V"),
        }
    }
}

/// Edge types carried by a depth-`d` chain, in order: `U, W(1), ..., W(d-1), V`.
pub fn chain_types(depth: usize) -> Vec<EdgeType> {
    let mut t = alloc::vec![EdgeType::U];
    t.extend((1..depth).map(EdgeType::W));
    t.push(EdgeType::V);
    t
}

/// One perfect matching per edge type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeynmanDiagram {
    pub depths: Vec<usize>,
    pub matchings: Vec<(EdgeType, Vec<(usize, usize)>)>,
}

impl FeynmanDiagram {
    pub fn m(&self) -> usize {
        self.depths.len()
    }

    /// Ordered types carried by vertex `i`.
    pub fn vertex_types(&self, i: usize) -> Vec<EdgeType> {
        chain_types(self.depths[i])
    }

    /// Edge count between distinct vertices `i` and `j`, summed over types.
    pub fn edges_between(&self, i: usize, j: usize) -> usize {
        self.matchings
            .iter()
            .flat_map(|(_, m)| m.iter())
            .filter(|&&(a, b)| (a == i && b == j) || (a == j && b == i))
            .count()
    }

    /// Connected components of the single-line graph.
    pub fn components(&self) -> usize {
        let mut uf = UnionFind::new(self.m());
        for (_, m) in &self.matchings {
            for &(a, b) in m {
                uf.union(a, b);
            }
        }
        uf.count()
    }
}

/// Degree-2 blow-up: vertex `(i, level)` for `level` in `1..=depth_i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DoubleLineGraph {
    pub vertices: Vec<(usize, usize)>,
    pub edges: Vec<(usize, usize)>,
    /// Loop index of each vertex.
    pub loop_of: Vec<usize>,
    pub loops: usize,
}

impl DoubleLineGraph {
    /// Loops whose vertices belong to the given single-line vertices.
    pub fn loops_within(&self, factors: &[usize]) -> usize {
        let mut seen: Vec<usize> = self
            .vertices
            .iter()
            .zip(&self.loop_of)
            .filter(|((f, _), _)| factors.contains(f))
            .map(|(_, &l)| l)
            .collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

fn level_offsets(depths: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(depths.len() + 1);
    let mut acc = 0;
    off.push(0);
    for &d in depths {
        acc += d;
        off.push(acc);
    }
    off
}

/// Level pairs linked by an edge of type `t` between vertices of depths `di`
/// and `dj`: `U` joins level 1, `W(l)` levels `l` and `l + 1`, `V` the top levels.
fn level_links(t: EdgeType, di: usize, dj: usize) -> [Option<(usize, usize)>; 2] {
    match t {
        EdgeType::U => [Some((1, 1)), None],
        EdgeType::W(l) => [Some((l, l)), Some((l + 1, l + 1))],
        EdgeType::V => [Some((di, dj)), None],
    }
}

pub fn double_line(diagram: &FeynmanDiagram) -> Result<DoubleLineGraph, GraphError> {
    let depths = &diagram.depths;
    let off = level_offsets(depths);
    let total = off[depths.len()];
    let mut vertices = Vec::with_capacity(total);
    for (i, &d) in depths.iter().enumerate() {
        vertices.extend((1..=d).map(|l| (i, l)));
    }
    let mut edges = Vec::new();
    let mut degree = alloc::vec![0usize; total];
    for (t, m) in &diagram.matchings {
        for &(a, b) in m {
            for (la, lb) in level_links(*t, depths[a], depths[b]).into_iter().flatten() {
                if la == 0 || la > depths[a] || lb == 0 || lb > depths[b] {
                    return Err(GraphError::Internal(alloc::format!(
                        "type {t} has no level {la}/{lb} on vertices {a}/{b}"
                    )));
                }
                let (u, v) = (off[a] + la - 1, off[b] + lb - 1);
                degree[u] += 1;
                degree[v] += 1;
                edges.push((u, v));
            }
        }
    }
    if let Some(bad) = degree.iter().position(|&d| d != 2) {
        return Err(GraphError::Internal(alloc::format!(
            "level vertex {:?} has degree {}",
            vertices[bad],
            degree[bad]
        )));
    }
    let mut uf = UnionFind::new(total);
    for &(u, v) in &edges {
        uf.union(u, v);
    }
    let mut loop_of = alloc::vec![usize::MAX; total];
    let mut loops = 0;
    let mut id = alloc::vec![usize::MAX; total];
    for v in 0..total {
        let r = uf.find(v);
        if id[r] == usize::MAX {
            id[r] = loops;
            loops += 1;
        }
        loop_of[v] = id[r];
    }
    Ok(DoubleLineGraph { vertices, edges, loop_of, loops })
}

/// `s_gamma = l_gamma - sum_i (k_i - 1)/2` with `k_i - 1 = depth_i`.
pub fn diagram_exponent(diagram: &FeynmanDiagram) -> Result<HalfInt, GraphError> {
    let dl = double_line(diagram)?;
    let levels: usize = diagram.depths.iter().sum();
    Ok(HalfInt::from_int(dl.loops as i64) - HalfInt::halves(levels as i64))
}

/// `v - e + f` for the component of the single-line graph containing `factors`,
/// with `e = sum k_i / 2`.
pub fn euler_characteristic(diagram: &FeynmanDiagram, dl: &DoubleLineGraph, factors: &[usize]) -> HalfInt {
    let edges: usize = factors.iter().map(|&i| diagram.depths[i] + 1).sum();
    HalfInt::from_int(factors.len() as i64) - HalfInt::halves(edges as i64)
        + HalfInt::from_int(dl.loops_within(factors) as i64)
}

/// Single-line components as vertex lists.
pub fn single_line_components(diagram: &FeynmanDiagram) -> Vec<Vec<usize>> {
    let m = diagram.m();
    let mut uf = UnionFind::new(m);
    for (_, mm) in &diagram.matchings {
        for &(a, b) in mm {
            uf.union(a, b);
        }
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut id = alloc::vec![usize::MAX; m];
    for v in 0..m {
        let r = uf.find(v);
        if id[r] == usize::MAX {
            id[r] = out.len();
            out.push(Vec::new());
        }
        out[id[r]].push(v);
    }
    out
}

/// Why a correlation function has no diagrams.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Vanishing {
    /// An edge type is carried by an odd number of vertices.
    OddType { edge_type: EdgeType, carriers: usize },
    /// A factor is contracted with itself; no matching supplies a self-edge.
    SelfContraction { factor: usize },
    /// Every candidate violates the contraction constraint.
    Constraint,
}

impl fmt::Display for Vanishing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vanishing::OddType { edge_type, carriers } => {
                write!(f, "type {edge_type} is carried by {carriers} vertices, which admit no perfect matching")
            }
            Vanishing::SelfContraction { factor } => write!(
                f,
                "factor {factor} is contracted with itself; diagrams have no self-edges, so this is unsupported"
            ),
            Vanishing::Constraint => write!(f, "no matching satisfies the contraction constraint"),
        }
    }
}

/// Exponent of a deep-linear correlation function, or the reason it vanishes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DeepLinear {
    Exponent(HalfInt),
    Vanishes(Vanishing),
}

impl DeepLinear {
    pub fn exponent(&self) -> Option<HalfInt> {
        match self {
            DeepLinear::Exponent(s) => Some(*s),
            DeepLinear::Vanishes(_) => None,
        }
    }
}

/// Result of a full enumeration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Enumeration {
    pub diagrams: Vec<FeynmanDiagram>,
    /// Product of matching counts before the contraction filter.
    pub candidates: u128,
    pub vanishing: Option<Vanishing>,
}

/// All perfect matchings of `items`.
pub fn perfect_matchings(items: &[usize]) -> Vec<Vec<(usize, usize)>> {
    fn rec(rest: &mut Vec<usize>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if rest.is_empty() {
            out.push(cur.clone());
            return;
        }
        let a = rest.remove(0);
        for k in 0..rest.len() {
            let b = rest.remove(k);
            cur.push((a, b));
            rec(rest, cur, out);
            cur.pop();
            rest.insert(k, b);
        }
        rest.insert(0, a);
    }
    let mut out = Vec::new();
    if items.len() % 2 == 0 {
        rec(&mut items.to_vec(), &mut Vec::new(), &mut out);
    }
    out
}

/// `(k - 1)!!` for even `k`, 0 for odd `k`.
pub fn matching_count(k: usize) -> u128 {
    if k % 2 == 1 {
        return 0;
    }
    (1..k).step_by(2).map(|v| v as u128).product()
}

struct Plan {
    types: Vec<(EdgeType, Vec<usize>)>,
    candidates: u128,
    vanishing: Option<Vanishing>,
}

fn plan(spec: &CorrelationSpec, depths: &[usize], cap: u128) -> Result<Plan, GraphError> {
    check_depths(spec.m(), depths)?;
    let mut types: Vec<EdgeType> = depths.iter().flat_map(|&d| chain_types(d)).collect();
    types.sort_unstable();
    types.dedup();
    let carriers: Vec<(EdgeType, Vec<usize>)> = types
        .into_iter()
        .map(|t| (t, (0..depths.len()).filter(|&i| chain_types(depths[i]).contains(&t)).collect()))
        .collect();
    let mut vanishing = spec.self_contracted().first().map(|&factor| Vanishing::SelfContraction { factor });
    if vanishing.is_none() {
        vanishing = carriers
            .iter()
            .find(|(_, c)| c.len() % 2 == 1)
            .map(|(t, c)| Vanishing::OddType { edge_type: *t, carriers: c.len() });
    }
    let mut candidates: u128 = 1;
    for (_, c) in &carriers {
        candidates = candidates.saturating_mul(matching_count(c.len()).max(1));
    }
    if vanishing.is_none() && candidates > cap {
        return Err(GraphError::Budget { count: candidates, cap });
    }
    Ok(Plan { types: carriers, candidates, vanishing })
}

/// Visit every diagram satisfying the contraction constraint.
fn for_each_diagram(
    spec: &CorrelationSpec,
    depths: &[usize],
    cap: u128,
    mut visit: impl FnMut(&FeynmanDiagram) -> Result<(), GraphError>,
) -> Result<(u128, Option<Vanishing>, usize), GraphError> {
    let plan = plan(spec, depths, cap)?;
    if let Some(v) = plan.vanishing {
        return Ok((plan.candidates, Some(v), 0));
    }
    let per_type: Vec<Vec<Vec<(usize, usize)>>> = plan.types.iter().map(|(_, c)| perfect_matchings(c)).collect();
    let required: Vec<((usize, usize), usize)> = spec.contraction_counts().into_iter().collect();
    let m = spec.m();
    let mut choice = alloc::vec![0usize; per_type.len()];
    let mut accepted = 0usize;
    let mut diagram = FeynmanDiagram {
        depths: depths.to_vec(),
        matchings: plan.types.iter().map(|(t, _)| (*t, Vec::new())).collect(),
    };
    let mut counts = alloc::vec![0usize; m * m];
    loop {
        counts.iter_mut().for_each(|c| *c = 0);
        for (k, &c) in choice.iter().enumerate() {
            for &(a, b) in &per_type[k][c] {
                counts[a.min(b) * m + a.max(b)] += 1;
            }
        }
        if required.iter().all(|&((i, j), need)| counts[i * m + j] >= need) {
            for (k, &c) in choice.iter().enumerate() {
                diagram.matchings[k].1.clone_from(&per_type[k][c]);
            }
            visit(&diagram)?;
            accepted += 1;
        }
        let mut k = 0;
        loop {
            if k == choice.len() {
                let vanishing = (accepted == 0).then_some(Vanishing::Constraint);
                return Ok((plan.candidates, vanishing, accepted));
            }
            choice[k] += 1;
            if choice[k] < per_type[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

/// Every Feynman diagram of `spec` for the given per-factor depths.
pub fn enumerate_diagrams(spec: &CorrelationSpec, depths: &[usize], cap: u128) -> Result<Enumeration, GraphError> {
    let mut diagrams = Vec::new();
    let (candidates, vanishing, _) = for_each_diagram(spec, depths, cap, |d| {
        diagrams.push(d.clone());
        Ok(())
    })?;
    Ok(Enumeration { diagrams, candidates, vanishing })
}

/// Everything the exponent queries compute in one enumeration pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExponentReport {
    pub conjecture: HalfInt,
    pub deep_linear: DeepLinear,
    /// `max_gamma c_gamma - m/2` over the enumerated diagrams.
    pub component_bound: Option<HalfInt>,
    /// `n_e + n_o/2 - m/2` from the cluster graph.
    pub cluster_bound: HalfInt,
    pub diagrams: usize,
    pub candidates: u128,
    /// Largest `v - e + f` over all single-line components seen.
    pub max_euler: Option<HalfInt>,
}

pub fn exponent_report(spec: &CorrelationSpec, depths: &[usize], cap: u128) -> Result<ExponentReport, GraphError> {
    let half_m = HalfInt::halves(spec.m() as i64);
    let mut best_s: Option<HalfInt> = None;
    let mut best_c: Option<HalfInt> = None;
    let mut max_euler: Option<HalfInt> = None;
    let (candidates, vanishing, diagrams) = for_each_diagram(spec, depths, cap, |d| {
        let dl = double_line(d)?;
        let levels: usize = d.depths.iter().sum();
        let s = HalfInt::from_int(dl.loops as i64) - HalfInt::halves(levels as i64);
        best_s = Some(best_s.map_or(s, |b| b.max(s)));
        let comps = single_line_components(d);
        let c = HalfInt::from_int(comps.len() as i64) - half_m;
        best_c = Some(best_c.map_or(c, |b| b.max(c)));
        for comp in &comps {
            let chi = euler_characteristic(d, &dl, comp);
            max_euler = Some(max_euler.map_or(chi, |b| b.max(chi)));
        }
        Ok(())
    })?;
    let conjecture = conjecture_exponent(spec);
    let deep_linear = match (vanishing, best_s) {
        (Some(v), _) => DeepLinear::Vanishes(v),
        (None, Some(s)) => DeepLinear::Exponent(s),
        (None, None) => DeepLinear::Vanishes(Vanishing::Constraint),
    };
    Ok(ExponentReport {
        conjecture,
        deep_linear,
        component_bound: best_c,
        cluster_bound: conjecture,
        diagrams,
        candidates,
        max_euler,
    })
}

/// `max_gamma s_gamma`, or the reason no diagram exists.
pub fn deep_linear_exponent(spec: &CorrelationSpec, depths: &[usize], cap: u128) -> Result<DeepLinear, GraphError> {
    Ok(exponent_report(spec, depths, cap)?.deep_linear)
}

/// Enumerated bound `max c_gamma - m/2` (absent when no diagram exists) and the
/// cluster bound `n_e + n_o/2 - m/2`.
pub fn component_bound(
    spec: &CorrelationSpec,
    depths: &[usize],
    cap: u128,
) -> Result<(Option<HalfInt>, HalfInt), GraphError> {
    let r = exponent_report(spec, depths, cap)?;
    Ok((r.component_bound, r.cluster_bound))
}
