//! Combinatorial generic rigidity: the dual graph of a crease pattern and
//! packings of edge-disjoint spanning trees in its multiplied copy.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::tangent_report;
use crate::constraints::ConstraintSystem;
use crate::linalg::RANK_REL_TOL;
use crate::model::{CreasePattern, Face};
use crate::newton::{project, NewtonOptions};

#[derive(Debug, Error, PartialEq)]
pub enum GenericityError {
    #[error("multigraph is disconnected")]
    Disconnected,
}

/// Undirected multigraph on vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Multigraph {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

impl Multigraph {
    pub fn new(n: usize, edges: Vec<[usize; 2]>) -> Self {
        Self { n, edges }
    }

    /// `k` parallel copies of every edge; copies of edge `e` are
    /// `e*k .. e*k + k`.
    pub fn multiply(&self, k: usize) -> Self {
        Self {
            n: self.n,
            edges: self.edges.iter().flat_map(|&e| std::iter::repeat_n(e, k)).collect(),
        }
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut uf = UnionFind::new(self.n);
        for &[a, b] in &self.edges {
            uf.union(a, b);
        }
        (1..self.n).all(|v| uf.find(v) == uf.find(0))
    }

    /// Same graph with vertices renamed by `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        Self {
            n: self.n,
            edges: self.edges.iter().map(|&[a, b]| [perm[a], perm[b]]).collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Crease graph H together with its planar dual H*.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternGraph {
    pub h: Multigraph,
    /// Dual vertex order: panels, then holes, then the outer face.
    pub faces: Vec<Face>,
    /// One dual edge per crease, same index as the crease.
    pub dual: Multigraph,
}

impl PatternGraph {
    pub fn multiplied(&self, k: usize) -> Multigraph {
        self.dual.multiply(k)
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph H {\n");
        for (e, &[a, b]) in self.h.edges.iter().enumerate() {
            let _ = writeln!(s, "  v{a} -- v{b} [label=\"{e}\"];");
        }
        s.push_str("}\ngraph Hdual {\n");
        for (k, f) in self.faces.iter().enumerate() {
            let name = match f {
                Face::Panel(p) => format!("panel {p}"),
                Face::Hole(h) => format!("hole {h}"),
                Face::Outer => "outer".to_string(),
            };
            let _ = writeln!(s, "  f{k} [label=\"{name}\"];");
        }
        for (e, &[a, b]) in self.dual.edges.iter().enumerate() {
            let _ = writeln!(s, "  f{a} -- f{b} [label=\"{e}\"];");
        }
        s.push_str("}\n");
        s
    }
}

pub fn dual_graph(pattern: &CreasePattern) -> PatternGraph {
    let np = pattern.panels().len();
    let nh = pattern.holes().len();
    let mut faces: Vec<Face> = (0..np).map(Face::Panel).collect();
    faces.extend((0..nh).map(Face::Hole));
    faces.push(Face::Outer);
    let index = |f: Face| match f {
        Face::Panel(p) => p,
        Face::Hole(h) => np + h,
        Face::Outer => np + nh,
    };
    let mut h_edges = Vec::new();
    let mut d_edges = Vec::new();
    for (c, crease) in pattern.creases().iter().enumerate() {
        h_edges.push(crease.vertices);
        let (l, r) = pattern.crease_panels(c);
        d_edges.push([index(l), index(r)]);
    }
    PatternGraph {
        h: Multigraph::new(pattern.vertices().len(), h_edges),
        faces,
        dual: Multigraph::new(np + nh + 1, d_edges),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreePacking {
    pub k: usize,
    /// Edge indices of each forest; spanning trees when feasible.
    pub trees: Vec<Vec<usize>>,
    pub feasible: bool,
    /// Part label for each vertex when infeasible.
    pub partition: Option<Vec<usize>>,
    /// Edges joining different parts of the partition.
    pub cross_edges: Option<usize>,
}

/// Path of forest edges from `a` to `b` in forest `f`, if connected.
fn forest_path(adj: &[Vec<(usize, usize)>], a: usize, b: usize) -> Option<Vec<usize>> {
    let n = adj.len();
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[a] = true;
    let mut q = VecDeque::from([a]);
    while let Some(u) = q.pop_front() {
        if u == b {
            let mut path = Vec::new();
            let mut x = b;
            while x != a {
                let (p, e) = prev[x].unwrap();
                path.push(e);
                x = p;
            }
            return Some(path);
        }
        for &(w, e) in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                prev[w] = Some((u, e));
                q.push_back(w);
            }
        }
    }
    None
}

struct Forests<'g> {
    g: &'g Multigraph,
    k: usize,
    owner: Vec<Option<usize>>,
    adj: Vec<Vec<Vec<(usize, usize)>>>,
}

impl<'g> Forests<'g> {
    fn new(g: &'g Multigraph, k: usize) -> Self {
        Self {
            g,
            k,
            owner: vec![None; g.edges.len()],
            adj: vec![vec![Vec::new(); g.n]; k],
        }
    }

    fn insert(&mut self, e: usize, f: usize) {
        let [a, b] = self.g.edges[e];
        self.adj[f][a].push((b, e));
        self.adj[f][b].push((a, e));
        self.owner[e] = Some(f);
    }

    fn remove(&mut self, e: usize) {
        let Some(f) = self.owner[e].take() else { return };
        let [a, b] = self.g.edges[e];
        self.adj[f][a].retain(|&(_, x)| x != e);
        self.adj[f][b].retain(|&(_, x)| x != e);
    }

    fn size(&self, f: usize) -> usize {
        self.owner.iter().filter(|&&o| o == Some(f)).count()
    }

    /// Breadth-first search over the exchange graph from `sources`. Returns
    /// an augmenting sequence when one exists, else the labeled edge set.
    fn search(&self, sources: &[usize]) -> Result<Vec<(usize, usize)>, Vec<bool>> {
        let m = self.g.edges.len();
        let mut label: Vec<Option<usize>> = vec![None; m];
        let mut seen = vec![false; m];
        let mut q = VecDeque::new();
        for &s in sources {
            seen[s] = true;
            q.push_back(s);
        }
        while let Some(x) = q.pop_front() {
            let [a, b] = self.g.edges[x];
            for f in 0..self.k {
                if self.owner[x] == Some(f) {
                    continue;
                }
                if a == b {
                    continue;
                }
                match forest_path(&self.adj[f], a, b) {
                    None => {
                        // x fits in forest f; unwind the labels.
                        let mut moves = vec![(x, f)];
                        let mut cur = x;
                        while let Some(p) = label[cur] {
                            moves.push((p, self.owner[cur].unwrap()));
                            cur = p;
                        }
                        return Ok(moves);
                    }
                    Some(cycle) => {
                        for y in cycle {
                            if !seen[y] {
                                seen[y] = true;
                                label[y] = Some(x);
                                q.push_back(y);
                            }
                        }
                    }
                }
            }
        }
        Err(seen)
    }

    fn apply(&mut self, moves: &[(usize, usize)]) {
        for &(e, _) in moves {
            self.remove(e);
        }
        for &(e, f) in moves {
            self.insert(e, f);
        }
    }
}

/// `k` edge-disjoint spanning trees of `g` by matroid-union augmentation,
/// or a vertex partition with fewer than `k (parts - 1)` crossing edges.
pub fn pack_spanning_trees(g: &Multigraph, k: usize) -> Result<TreePacking, GenericityError> {
    if !g.is_connected() {
        return Err(GenericityError::Disconnected);
    }
    let target = g.n.saturating_sub(1);
    let mut forests = Forests::new(g, k);
    for e in 0..g.edges.len() {
        if (0..k).all(|f| forests.size(f) == target) {
            break;
        }
        if let Ok(moves) = forests.search(&[e]) {
            forests.apply(&moves);
        }
    }
    let trees: Vec<Vec<usize>> = (0..k)
        .map(|f| (0..g.edges.len()).filter(|&e| forests.owner[e] == Some(f)).collect())
        .collect();
    let feasible = trees.iter().all(|t| t.len() == target);
    if feasible {
        return Ok(TreePacking {
            k,
            trees,
            feasible,
            partition: None,
            cross_edges: None,
        });
    }
    // Edges reachable from any unplaced edge span the tight parts.
    let unplaced: Vec<usize> = (0..g.edges.len()).filter(|&e| forests.owner[e].is_none()).collect();
    let labeled = match forests.search(&unplaced) {
        Err(seen) => seen,
        Ok(_) => unreachable!("maximal union admits no augmentation"),
    };
    let mut uf = UnionFind::new(g.n);
    for (e, &[a, b]) in g.edges.iter().enumerate() {
        if labeled[e] {
            uf.union(a, b);
        }
    }
    let partition = canonical_parts(&mut uf, g.n);
    let cross = count_cross(g, &partition);
    Ok(TreePacking {
        k,
        trees,
        feasible,
        partition: Some(partition),
        cross_edges: Some(cross),
    })
}

fn canonical_parts(uf: &mut UnionFind, n: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = Vec::new();
    (0..n)
        .map(|v| {
            let r = uf.find(v);
            match ids.iter().position(|&x| x == r) {
                Some(i) => i,
                None => {
                    ids.push(r);
                    ids.len() - 1
                }
            }
        })
        .collect()
}

pub fn count_cross(g: &Multigraph, partition: &[usize]) -> usize {
    g.edges.iter().filter(|&&[a, b]| partition[a] != partition[b]).count()
}

/// Independent check of a packing answer.
pub fn verify_packing(g: &Multigraph, p: &TreePacking) -> bool {
    let mut used = vec![false; g.edges.len()];
    for t in &p.trees {
        let mut uf = UnionFind::new(g.n);
        for &e in t {
            if used[e] {
                return false;
            }
            used[e] = true;
            let [a, b] = g.edges[e];
            if !uf.union(a, b) {
                return false;
            }
        }
    }
    if p.feasible {
        let need = p.k * g.n.saturating_sub(1);
        p.trees.iter().all(|t| t.len() + 1 == g.n.max(1)) && g.edges.len() >= need
    } else {
        let Some(part) = &p.partition else { return false };
        let parts = part.iter().max().map_or(0, |m| m + 1);
        count_cross(g, part) < p.k * parts.saturating_sub(1)
    }
}

/// Exhaustive search for `k` edge-disjoint spanning trees. Exponential;
/// meant for graphs with a handful of edges.
pub fn exhaustive_packing(g: &Multigraph, k: usize) -> bool {
    let m = g.edges.len();
    let need = g.n.saturating_sub(1);
    if need == 0 {
        return true;
    }
    if m < k * need || m > 24 {
        return m >= k * need && m <= 24;
    }
    // All spanning trees as bitmasks.
    let mut trees: Vec<u32> = Vec::new();
    fn rec(g: &Multigraph, start: usize, chosen: &mut Vec<usize>, need: usize, out: &mut Vec<u32>) {
        if chosen.len() == need {
            let mut uf = UnionFind::new(g.n);
            if chosen.iter().all(|&e| uf.union(g.edges[e][0], g.edges[e][1])) {
                out.push(chosen.iter().fold(0u32, |m, &e| m | (1 << e)));
            }
            return;
        }
        for e in start..g.edges.len() {
            chosen.push(e);
            rec(g, e + 1, chosen, need, out);
            chosen.pop();
        }
    }
    rec(g, 0, &mut Vec::new(), need, &mut trees);
    fn pick(trees: &[u32], from: usize, used: u32, left: usize) -> bool {
        if left == 0 {
            return true;
        }
        (from..trees.len()).any(|i| trees[i] & used == 0 && pick(trees, i + 1, used | trees[i], left - 1))
    }
    pick(&trees, 0, 0, k)
}

/// Partition criterion checked over every set partition of the vertices:
/// feasible iff each partition has at least `k (parts - 1)` crossing edges.
pub fn partition_criterion(g: &Multigraph, k: usize) -> bool {
    let n = g.n;
    let mut labels = vec![0usize; n];
    fn rec(g: &Multigraph, k: usize, v: usize, parts: usize, labels: &mut Vec<usize>) -> bool {
        if v == labels.len() {
            return count_cross(g, labels) >= k * parts.saturating_sub(1);
        }
        for l in 0..=parts {
            labels[v] = l;
            let np = if l == parts { parts + 1 } else { parts };
            if !rec(g, k, v + 1, np, labels) {
                return false;
            }
        }
        true
    }
    if n == 0 {
        return true;
    }
    rec(g, k, 1, 1, &mut labels)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DofCount {
    pub inner_vertices: usize,
    pub holes: usize,
    pub inner_creases: usize,
    /// `3 i + 6 h >= j`: fewer unknowns than constraints.
    pub count_suggests_rigid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericCheck {
    pub attempts: usize,
    pub solved: usize,
    pub first_order_rigid: usize,
    /// Majority verdict of the solved attempts; `None` when none solved.
    pub numeric_rigid: Option<bool>,
    pub agrees: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenericReport {
    pub generically_rigid: bool,
    pub dual_vertices: usize,
    pub dual_edges: usize,
    pub packing: TreePacking,
    pub count: DofCount,
    pub numeric: Option<NumericCheck>,
}

/// Verdict from six trees in five copies of the dual graph.
pub fn is_generically_rigid(pattern: &CreasePattern) -> GenericReport {
    let graph = dual_graph(pattern);
    let five = graph.multiplied(5);
    let packing = pack_spanning_trees(&five, 6).expect("dual of a valid pattern is connected");
    let i = pattern.inner_vertices().len();
    let h = pattern.holes().len();
    let j = pattern.num_inner_creases();
    GenericReport {
        generically_rigid: packing.feasible,
        dual_vertices: graph.dual.n,
        dual_edges: graph.dual.edges.len(),
        packing,
        count: DofCount {
            inner_vertices: i,
            holes: h,
            inner_creases: j,
            count_suggests_rigid: 3 * i + 6 * h >= j,
        },
        numeric: None,
    }
}

/// Adds a sampled cross-check: `attempts` realizations with jittered
/// vertex positions (when the pattern has plain coordinates) and random
/// solved states, each tested for first-order rigidity. The combinatorial
/// verdict stands; disagreement is only reported.
pub fn is_generically_rigid_checked(pattern: &CreasePattern, attempts: usize, seed: u64) -> GenericReport {
    let mut report = is_generically_rigid(pattern);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = pattern
        .creases()
        .iter()
        .map(|c| (pattern.vertices()[c.vertices[0]] - pattern.vertices()[c.vertices[1]]).norm())
        .fold(f64::INFINITY, f64::min);
    let opts = NewtonOptions {
        max_iter: 60,
        ..NewtonOptions::default()
    };
    let (mut solved, mut rigid) = (0, 0);
    for _ in 0..attempts {
        let realized = if pattern.has_sector_overrides() {
            Some(pattern.clone())
        } else {
            let mut raw = pattern.to_raw();
            for p in &mut raw.vertices {
                p[0] += rng.random_range(-0.05..0.05) * scale;
                p[1] += rng.random_range(-0.05..0.05) * scale;
            }
            raw.initial_rho = None;
            raw.validate().ok()
        };
        let Some(realized) = realized else { continue };
        let system = ConstraintSystem::build(&realized);
        let guess: Vec<f64> = (0..system.num_vars).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = project(&system, &guess, None, &opts);
        if !r.converged {
            continue;
        }
        solved += 1;
        if tangent_report(&system, &r.rho, RANK_REL_TOL, r.residual).deg == 0 {
            rigid += 1;
        }
    }
    let numeric_rigid = (solved > 0).then_some(2 * rigid > solved);
    report.numeric = Some(NumericCheck {
        attempts,
        solved,
        first_order_rigid: rigid,
        numeric_rigid,
        agrees: numeric_rigid.map(|v| v == report.generically_rigid),
    });
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::RawPattern;

    #[test]
    fn dual_counts() {
        let square = RawPattern::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
            .boundary_cycle(&[0, 1, 2, 3])
            .panel(vec![0, 1, 2, 3])
            .validate()
            .unwrap();
        let g = dual_graph(&square);
        assert_eq!(g.dual.n, 2);
        assert_eq!(g.dual.edges.len(), 4);
        let grid = dual_graph(&fixtures::quad_grid(2, 2));
        assert_eq!(grid.dual.n, 5);
        assert_eq!(grid.dual.edges.len(), 12);
        assert_eq!(grid.multiplied(5).edges.len(), 60);
        let ring = dual_graph(&fixtures::pentagon_hole(0.2));
        assert_eq!(ring.dual.n, 5 + 1 + 1);
    }

    #[test]
    fn k5_packs_two_trees() {
        let mut edges = Vec::new();
        for a in 0..5 {
            for b in (a + 1)..5 {
                edges.push([a, b]);
            }
        }
        let g = Multigraph::new(5, edges);
        let p = pack_spanning_trees(&g, 2).unwrap();
        assert!(p.feasible && verify_packing(&g, &p));
        assert!(exhaustive_packing(&g, 2));
    }

    #[test]
    fn tree_fails_with_singletons() {
        let g = Multigraph::new(4, vec![[0, 1], [1, 2], [1, 3]]);
        let p = pack_spanning_trees(&g, 2).unwrap();
        assert!(!p.feasible && verify_packing(&g, &p));
        assert_eq!(p.partition.as_deref(), Some(&[0, 1, 2, 3][..]));
    }

    #[test]
    fn disconnected_is_error() {
        let g = Multigraph::new(3, vec![[0, 1]]);
        assert_eq!(pack_spanning_trees(&g, 1), Err(GenericityError::Disconnected));
    }

    #[test]
    fn grid_is_generically_rigid() {
        let r = is_generically_rigid(&fixtures::quad_grid(2, 2));
        assert!(r.generically_rigid);
        let five = dual_graph(&fixtures::quad_grid(2, 2)).multiplied(5);
        assert!(verify_packing(&five, &r.packing));
        assert!(partition_criterion(&five, 6));
    }

    #[test]
    fn dot_mentions_outer_face() {
        let dot = dual_graph(&fixtures::fig2_vertex()).to_dot();
        assert!(dot.contains("outer") && dot.starts_with("graph H {"));
    }
}
