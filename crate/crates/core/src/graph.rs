//! Finite simple graphs: construction, girth, distances and the distance
//! profile of the stationary random walk.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

/// Largest vertex count accepted by the exact rational routines.
pub const EXACT_MODE_MAX_VERTICES: usize = 64;

/// A finite simple undirected graph with sorted adjacency lists.
#[derive(Debug)]
pub struct UndirectedGraph {
    adjacency: Vec<Vec<usize>>,
    /// Edges as `(u, v)` with `u < v`, sorted lexicographically.
    edges: Vec<(usize, usize)>,
    connected: bool,
    distances: OnceLock<DistanceTable>,
}

impl Clone for UndirectedGraph {
    fn clone(&self) -> Self {
        Self {
            adjacency: self.adjacency.clone(),
            edges: self.edges.clone(),
            connected: self.connected,
            distances: OnceLock::new(),
        }
    }
}

impl PartialEq for UndirectedGraph {
    fn eq(&self, other: &Self) -> bool {
        self.adjacency == other.adjacency
    }
}

/// All-pairs hop distances of a connected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    n: usize,
    dist: Vec<u32>,
    diameter: u32,
}

impl DistanceTable {
    pub fn get(&self, u: usize, v: usize) -> u32 {
        self.dist[u * self.n + v]
    }

    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

impl UndirectedGraph {
    /// Builds a graph from an edge list, rejecting loops, repeated edges and
    /// out-of-range endpoints.
    pub fn new(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::InvalidGraph("vertex count must be positive".into()));
        }
        let mut adjacency = vec![Vec::new(); vertex_count];
        let mut norm = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= vertex_count || v >= vertex_count {
                return Err(Error::InvalidGraph(format!("edge ({u}, {v}) out of range for {vertex_count} vertices")));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at {u}")));
            }
            norm.push((u.min(v), u.max(v)));
        }
        norm.sort_unstable();
        if let Some(w) = norm.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!("repeated edge {:?}", w[0])));
        }
        for &(u, v) in &norm {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let connected = bfs_order(&adjacency, 0).len() == vertex_count;
        Ok(Self { adjacency, edges: norm, connected, distances: OnceLock::new() })
    }

    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InfeasibleParameters("a cycle needs n >= 3".into()));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::new(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u, v));
            }
        }
        Self::new(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    pub fn petersen() -> Self {
        let mut edges = Vec::new();
        for i in 0..5 {
            edges.push((i, (i + 1) % 5));
            edges.push((i, i + 5));
            edges.push((5 + i, 5 + (i + 2) % 5));
        }
        Self::new(10, &edges).expect("petersen graph is simple")
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn min_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    pub fn require_connected(&self) -> Result<()> {
        if self.connected {
            Ok(())
        } else {
            Err(Error::Disconnected)
        }
    }

    pub fn is_adjacent(&self, u: usize, v: usize) -> bool {
        self.adjacency.get(u).is_some_and(|list| list.binary_search(&v).is_ok())
    }

    /// Index of the undirected edge `{u, v}` in [`Self::edges`].
    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        self.edges.binary_search(&(u.min(v), u.max(v))).ok()
    }

    pub fn is_bipartite(&self) -> bool {
        let n = self.vertex_count();
        let mut color = vec![u8::MAX; n];
        for s in 0..n {
            if color[s] != u8::MAX {
                continue;
            }
            color[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.adjacency[u] {
                    if color[v] == u8::MAX {
                        color[v] = 1 - color[u];
                        queue.push_back(v);
                    } else if color[v] == color[u] {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// BFS tree from `root`: parent pointers (`usize::MAX` for the root and
    /// unreachable vertices) and hop distances (`u32::MAX` if unreachable).
    pub fn bfs_tree(&self, root: usize) -> (Vec<usize>, Vec<u32>) {
        let n = self.vertex_count();
        let mut parent = vec![usize::MAX; n];
        let mut dist = vec![u32::MAX; n];
        dist[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        (parent, dist)
    }

    /// Parses the edge-list text format: a header `n m` followed by `m` lines
    /// `u v`. Lines starting with `#` and blank lines are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse { line: 0, msg: "missing header".into() })?;
        let (n, m) = parse_pair(hline, header)?;
        let mut edges = Vec::with_capacity(m);
        for (line, l) in lines {
            edges.push(parse_pair(line, l)?);
        }
        if edges.len() != m {
            return Err(Error::Parse {
                line: hline,
                msg: format!("header announces {m} edges, found {}", edges.len()),
            });
        }
        Self::new(n, &edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {}\n", self.vertex_count(), self.edge_count());
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    /// All-pairs BFS distances, computed once and cached.
    pub fn distances(&self) -> Result<&DistanceTable> {
        self.require_connected()?;
        Ok(self.distances.get_or_init(|| {
            let n = self.vertex_count();
            let mut dist = vec![0u32; n * n];
            for u in 0..n {
                let (_, d) = self.bfs_tree(u);
                dist[u * n..(u + 1) * n].copy_from_slice(&d);
            }
            let diameter = dist.iter().copied().max().unwrap_or(0);
            DistanceTable { n, dist, diameter }
        }))
    }
}

fn parse_pair(line: usize, text: &str) -> Result<(usize, usize)> {
    let mut it = text
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| Error::Parse { line, msg: format!("{t:?}: {e}") }));
    let a = it.next().transpose()?;
    let b = it.next().transpose()?;
    match (a, b, it.next()) {
        (Some(a), Some(b), None) => Ok((a, b)),
        _ => Err(Error::Parse { line, msg: "expected exactly two integers".into() }),
    }
}

fn bfs_order(adjacency: &[Vec<usize>], root: usize) -> Vec<usize> {
    let mut seen = vec![false; adjacency.len()];
    seen[root] = true;
    let mut order = vec![root];
    let mut i = 0;
    while i < order.len() {
        let u = order[i];
        i += 1;
        for &v in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                order.push(v);
            }
        }
    }
    order
}

const REGULAR_ATTEMPTS: usize = 100_000;

/// Samples a connected simple `d`-regular graph on `n` vertices with the
/// pairing model, rejecting loops, repeated edges and disconnected outcomes.
pub fn gen_random_regular(n: usize, d: usize, seed: u64) -> Result<UndirectedGraph> {
    if n == 0 || d >= n || (n * d) % 2 == 1 {
        return Err(Error::InfeasibleParameters(format!(
            "no simple {d}-regular graph on {n} vertices (need n*d even and d < n)"
        )));
    }
    let mut rng = seed::rng(seed, &[0x7265_6775]);
    let mut points: Vec<usize> = (0..n * d).map(|i| i / d).collect();
    'attempt: for _ in 0..REGULAR_ATTEMPTS {
        points.shuffle(&mut rng);
        let mut edges = Vec::with_capacity(n * d / 2);
        for pair in points.chunks_exact(2) {
            let (u, v) = (pair[0], pair[1]);
            if u == v {
                continue 'attempt;
            }
            edges.push((u.min(v), u.max(v)));
        }
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        let g = UndirectedGraph::new(n, &edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::RejectionBudgetExhausted(REGULAR_ATTEMPTS))
}

/// Length of the shortest cycle, or `None` for forests.
///
/// One BFS per vertex; a non-tree edge `{u, v}` met from root `r` closes a
/// closed walk of length `d(r,u) + d(r,v) + 1`, and the minimum over all
/// roots is the girth.
pub fn girth(g: &UndirectedGraph) -> Option<usize> {
    let n = g.vertex_count();
    let mut best = usize::MAX;
    let mut dist = vec![u32::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for root in 0..n {
        dist.fill(u32::MAX);
        parent.fill(usize::MAX);
        dist[root] = 0;
        queue.clear();
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            if 2 * dist[u] as usize >= best {
                break;
            }
            for &v in g.neighbors(u) {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    parent[v] = u;
                    queue.push_back(v);
                } else if parent[u] != v {
                    best = best.min((dist[u] + dist[v] + 1) as usize);
                }
            }
        }
    }
    (best != usize::MAX).then_some(best)
}

/// Distances of a connected graph (see [`UndirectedGraph::distances`]).
pub fn distances(g: &UndirectedGraph) -> Result<&DistanceTable> {
    g.distances()
}

/// `P_G^q(l)`: probability that `q` steps of the stationary standard walk end
/// at graph distance `l` from the start. Keys with zero mass are omitted.
pub fn distance_distribution(g: &UndirectedGraph, q: usize) -> Result<BTreeMap<usize, f64>> {
    let table = g.distances()?;
    let n = g.vertex_count();
    let two_m = 2.0 * g.edge_count() as f64;
    let mut out = vec![0.0f64; q + 1];
    let mut cur = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    for u in 0..n {
        cur.fill(0.0);
        cur[u] = 1.0;
        for _ in 0..q {
            next.fill(0.0);
            for (v, &mass) in cur.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let share = mass / g.degree(v) as f64;
                for &w in g.neighbors(v) {
                    next[w] += share;
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        let weight = g.degree(u) as f64 / two_m;
        for (v, &mass) in cur.iter().enumerate() {
            if mass > 0.0 {
                out[table.get(u, v) as usize] += weight * mass;
            }
        }
    }
    Ok(out.into_iter().enumerate().filter(|&(_, p)| p > 0.0).collect())
}

/// Exact rational version of [`distance_distribution`] for graphs with at
/// most [`EXACT_MODE_MAX_VERTICES`] vertices.
pub fn distance_distribution_exact(g: &UndirectedGraph, q: usize) -> Result<BTreeMap<usize, BigRational>> {
    if g.vertex_count() > EXACT_MODE_MAX_VERTICES {
        return Err(Error::Unsupported(format!("exact mode is limited to {EXACT_MODE_MAX_VERTICES} vertices")));
    }
    let table = g.distances()?;
    let n = g.vertex_count();
    let two_m = BigInt::from(2 * g.edge_count());
    let mut out: BTreeMap<usize, BigRational> = BTreeMap::new();
    for u in 0..n {
        let mut cur = vec![BigRational::zero(); n];
        cur[u] = BigRational::one();
        for _ in 0..q {
            let mut next = vec![BigRational::zero(); n];
            for (v, mass) in cur.iter().enumerate() {
                if mass.is_zero() {
                    continue;
                }
                let share = mass / BigRational::from_integer(BigInt::from(g.degree(v)));
                for &w in g.neighbors(v) {
                    next[w] += &share;
                }
            }
            cur = next;
        }
        let weight = BigRational::new(BigInt::from(g.degree(u)), two_m.clone());
        for (v, mass) in cur.into_iter().enumerate() {
            if !mass.is_zero() {
                *out.entry(table.get(u, v) as usize).or_insert_with(BigRational::zero) += &weight * mass;
            }
        }
    }
    Ok(out)
}

/// Report on the short-distance tail `Q_G^q = Σ_{l ≤ q/6} P_G^q(l)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TailReport {
    pub q: usize,
    pub tail: f64,
    /// `e^{-q/18}`.
    pub reference: f64,
    pub within_reference: bool,
    /// Whether the graph meets the regime the bound is quoted for
    /// (min degree ≥ 3 and `q < girth/2`).
    pub in_regime: bool,
}

pub fn short_distance_tail(g: &UndirectedGraph, q: usize) -> Result<TailReport> {
    let dist = distance_distribution(g, q)?;
    let tail: f64 = dist.iter().filter(|&(&l, _)| 6 * l <= q).map(|(_, p)| p).sum();
    let reference = (-(q as f64) / 18.0).exp();
    let in_regime = g.min_degree() >= 3 && girth(g).is_none_or(|gi| 2 * q < gi);
    let report = TailReport { q, tail, reference, within_reference: tail <= reference, in_regime };
    if in_regime && !report.within_reference {
        log::warn!("Q_G^{q} = {tail:.6} exceeds e^(-q/18) = {reference:.6}");
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive shortest-cycle search: every simple cycle is found from its
    /// smallest vertex by DFS over larger vertices.
    fn brute_force_girth(g: &UndirectedGraph) -> Option<usize> {
        fn dfs(g: &UndirectedGraph, start: usize, u: usize, len: usize, on_path: &mut Vec<bool>, best: &mut usize) {
            for &v in g.neighbors(u) {
                if v == start && len >= 3 {
                    *best = (*best).min(len);
                } else if v > start && !on_path[v] {
                    on_path[v] = true;
                    dfs(g, start, v, len + 1, on_path, best);
                    on_path[v] = false;
                }
            }
        }
        let n = g.vertex_count();
        let mut best = usize::MAX;
        for s in 0..n {
            let mut on_path = vec![false; n];
            on_path[s] = true;
            dfs(g, s, s, 1, &mut on_path, &mut best);
        }
        (best != usize::MAX).then_some(best)
    }

    #[test]
    fn k4_is_the_only_cubic_graph_on_four_vertices() {
        for seed in 0..5 {
            let g = gen_random_regular(4, 3, seed).unwrap();
            assert_eq!(g, UndirectedGraph::complete(4).unwrap());
        }
    }

    #[test]
    fn odd_degree_sum_rejected() {
        assert!(matches!(gen_random_regular(5, 3, 0), Err(Error::InfeasibleParameters(_))));
        assert!(gen_random_regular(4, 4, 0).is_err());
    }

    #[test]
    fn random_cubic_on_ten_vertices() {
        let g = gen_random_regular(10, 3, 1).unwrap();
        assert_eq!(g.edge_count(), 15);
        assert!((0..10).all(|u| g.degree(u) == 3));
        assert!(g.is_connected());
        let degree_sum: usize = (0..10).map(|u| g.degree(u)).sum();
        assert_eq!(degree_sum, 2 * g.edge_count());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_random_regular(30, 3, 42).unwrap();
        let b = gen_random_regular(30, 3, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn girth_examples() {
        assert_eq!(girth(&UndirectedGraph::cycle(5).unwrap()), Some(5));
        assert_eq!(girth(&UndirectedGraph::path(6).unwrap()), None);
        assert_eq!(girth(&UndirectedGraph::petersen()), Some(5));
        assert_eq!(brute_force_girth(&UndirectedGraph::petersen()), Some(5));
        assert_eq!(girth(&UndirectedGraph::complete(4).unwrap()), Some(3));
    }

    #[test]
    fn girth_matches_brute_force_on_small_graphs() {
        for n in 4..=12 {
            for d in [3usize, 4] {
                if (n * d) % 2 == 1 || d >= n {
                    continue;
                }
                for seed in 0..4 {
                    let g = gen_random_regular(n, d, seed).unwrap();
                    assert_eq!(girth(&g), brute_force_girth(&g), "n={n} d={d} seed={seed}");
                }
            }
        }
        for n in 3..=12 {
            let g = UndirectedGraph::cycle(n).unwrap();
            assert_eq!(girth(&g), brute_force_girth(&g));
        }
    }

    #[test]
    fn distance_examples() {
        let c5 = UndirectedGraph::cycle(5).unwrap();
        assert_eq!(distances(&c5).unwrap().get(0, 2), 2);
        assert_eq!(distances(&UndirectedGraph::complete(4).unwrap()).unwrap().diameter(), 1);
        assert_eq!(distances(&UndirectedGraph::petersen()).unwrap().diameter(), 2);
        let two = UndirectedGraph::new(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(distances(&two).unwrap_err(), Error::Disconnected);
    }

    #[test]
    fn distance_distribution_examples() {
        let c5 = UndirectedGraph::cycle(5).unwrap();
        let p1 = distance_distribution(&c5, 1).unwrap();
        assert_eq!(p1.len(), 1);
        assert!((p1[&1] - 1.0).abs() < 1e-15);
        let p2 = distance_distribution(&c5, 2).unwrap();
        assert!((p2[&0] - 0.5).abs() < 1e-15 && (p2[&2] - 0.5).abs() < 1e-15);
        let k4 = UndirectedGraph::complete(4).unwrap();
        let p = distance_distribution(&k4, 2).unwrap();
        assert!((p[&0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[&1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_and_float_profiles_agree() {
        let g = UndirectedGraph::petersen();
        for q in 0..6 {
            let exact = distance_distribution_exact(&g, q).unwrap();
            let float = distance_distribution(&g, q).unwrap();
            let total: BigRational = exact.values().cloned().sum();
            assert!(total.is_one());
            for (l, p) in &exact {
                let pf = num_traits::ToPrimitive::to_f64(p).unwrap();
                assert!((pf - float[l]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bipartite_profiles_respect_parity() {
        let c6 = UndirectedGraph::cycle(6).unwrap();
        for q in 0..8 {
            let p = distance_distribution(&c6, q).unwrap();
            let total: f64 = p.values().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for &l in p.keys() {
                assert!(l <= q && (q - l) % 2 == 0);
            }
        }
    }

    #[test]
    fn edge_list_round_trip_and_comments() {
        let text = "# petersen-ish\n3 2\n0 1\n# mid\n1 2\n";
        let g = UndirectedGraph::parse_edge_list(text).unwrap();
        assert_eq!(g.edge_count(), 2);
        let back = UndirectedGraph::parse_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(g, back);
        assert!(matches!(UndirectedGraph::parse_edge_list("3 2\n0 1\n"), Err(Error::Parse { .. })));
        assert!(UndirectedGraph::parse_edge_list("2 1\n0 0\n").is_err());
        assert!(UndirectedGraph::parse_edge_list("3 2\n0 1\n1 0\n").is_err());
    }

    #[test]
    fn tail_report_on_cubic_graph() {
        let g = gen_random_regular(40, 3, 3).unwrap();
        let r = short_distance_tail(&g, 1).unwrap();
        assert!(r.tail >= 0.0 && r.tail <= 1.0);
    }
}
