//! Undirected weighted graphs, distance tables and the sequential oracles
//! every distributed algorithm is checked against.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::fmt::Write as _;
use std::ops::Add;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;

/// Exact rational used for approximate distances.
pub type Frac = Ratio<i128>;

/// Sentinel for "no path". Sums involving it saturate back to it.
pub const INF: u64 = u64::MAX;

#[inline]
pub fn dist_add(a: u64, b: u64) -> u64 {
    a.saturating_add(b)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: NodeId, n: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(NodeId, NodeId),
    #[error("edge {0}-{1} has weight 0; weights must be positive")]
    ZeroWeight(NodeId, NodeId),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub w: u64,
}

impl Edge {
    pub fn other(&self, x: NodeId) -> NodeId {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

/// Adjacency entry: neighbor, weight, index into `edges()`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Adj {
    pub to: NodeId,
    pub w: u64,
    pub edge: usize,
}

/// Simple undirected graph with positive integer weights. Each edge is
/// stored once with `u < v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    adj: Vec<Vec<Adj>>,
    index: HashMap<(NodeId, NodeId), usize>,
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        WeightedGraph { n, edges: Vec::new(), adj: vec![Vec::new(); n], index: HashMap::new() }
    }

    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId, u64)]) -> Result<Self, GraphError> {
        let mut g = Self::new(n);
        for &(u, v, w) in edges {
            g.add_edge(u, v, w)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, u: NodeId, v: NodeId, w: u64) -> Result<usize, GraphError> {
        for x in [u, v] {
            if x >= self.n {
                return Err(GraphError::NodeOutOfRange { node: x, n: self.n });
            }
        }
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        if w == 0 {
            return Err(GraphError::ZeroWeight(u, v));
        }
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        if self.index.contains_key(&(a, b)) {
            return Err(GraphError::DuplicateEdge(a, b));
        }
        let id = self.edges.len();
        self.edges.push(Edge { u: a, v: b, w });
        self.adj[a].push(Adj { to: b, w, edge: id });
        self.adj[b].push(Adj { to: a, w, edge: id });
        self.index.insert((a, b), id);
        Ok(id)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, u: NodeId) -> &[Adj] {
        &self.adj[u]
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.adj[u].len()
    }

    pub fn edge_id(&self, u: NodeId, v: NodeId) -> Option<usize> {
        let key = if u < v { (u, v) } else { (v, u) };
        self.index.get(&key).copied()
    }

    pub fn weight(&self, u: NodeId, v: NodeId) -> Option<u64> {
        self.edge_id(u, v).map(|e| self.edges[e].w)
    }

    pub fn max_weight(&self) -> u64 {
        self.edges.iter().map(|e| e.w).max().unwrap_or(1)
    }

    pub fn is_complete(&self) -> bool {
        self.m() == self.n * self.n.saturating_sub(1) / 2
    }

    /// Same topology, new weights (indexed like `edges()`).
    pub fn reweighted(&self, weights: &[u64]) -> Result<Self, GraphError> {
        let mut g = Self::new(self.n);
        for (e, &w) in self.edges.iter().zip(weights) {
            g.add_edge(e.u, e.v, w)?;
        }
        Ok(g)
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || bfs_hops(self, 0).iter().all(|&d| d != INF)
    }

    /// Parses the "n m" header followed by m "u v w" lines.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(GraphError::Parse { line: 0, msg: "missing header".into() })?;
        let nums = parse_fields(hline, header, 2)?;
        let (n, m) = (nums[0] as usize, nums[1] as usize);
        let mut g = Self::new(n);
        let mut seen = 0;
        for (line, l) in lines {
            let f = parse_fields(line, l, 3)?;
            g.add_edge(f[0] as usize, f[1] as usize, f[2]).map_err(|e| GraphError::Parse { line, msg: e.to_string() })?;
            seen += 1;
        }
        if seen != m {
            return Err(GraphError::Parse { line: 0, msg: format!("header declares {m} edges, found {seen}") });
        }
        Ok(g)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.m());
        for e in &self.edges {
            let _ = writeln!(s, "{} {} {}", e.u, e.v, e.w);
        }
        s
    }
}

fn parse_fields(line: usize, l: &str, want: usize) -> Result<Vec<u64>, GraphError> {
    let f: Vec<&str> = l.split_whitespace().collect();
    if f.len() != want {
        return Err(GraphError::Parse { line, msg: format!("expected {want} fields, got {}", f.len()) });
    }
    f.iter()
        .map(|x| x.parse::<u64>().map_err(|e| GraphError::Parse { line, msg: format!("{x:?}: {e}") }))
        .collect()
}

/// Rows of distances, one per source, each of length n.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceTable<T = u64> {
    pub sources: Vec<NodeId>,
    pub rows: Vec<Vec<T>>,
}

impl<T: Clone> DistanceTable<T> {
    pub fn single(source: NodeId, row: Vec<T>) -> Self {
        DistanceTable { sources: vec![source], rows: vec![row] }
    }

    pub fn row_of(&self, source: NodeId) -> Option<&[T]> {
        self.sources.iter().position(|&s| s == source).map(|i| self.rows[i].as_slice())
    }

    pub fn get(&self, source: NodeId, v: NodeId) -> Option<&T> {
        self.row_of(source).map(|r| &r[v])
    }
}

/// Per-direction weights on the edges of a base graph. `fwd[e]` applies to
/// `edges()[e].u -> edges()[e].v`, `bwd[e]` to the reverse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsymWeights {
    pub fwd: Vec<u64>,
    pub bwd: Vec<u64>,
}

impl AsymWeights {
    pub fn symmetric(w: Vec<u64>) -> Self {
        AsymWeights { bwd: w.clone(), fwd: w }
    }

    pub fn get(&self, g: &WeightedGraph, edge: usize, from: NodeId) -> u64 {
        if g.edges()[edge].u == from {
            self.fwd[edge]
        } else {
            self.bwd[edge]
        }
    }
}

pub fn dijkstra(g: &WeightedGraph, source: NodeId) -> DistanceTable {
    DistanceTable::single(source, dijkstra_with(g, source, |a, _| a.w))
}

/// Dijkstra with a per-directed-edge weight function; zero weights allowed.
pub fn dijkstra_with(g: &WeightedGraph, source: NodeId, weight: impl Fn(&Adj, NodeId) -> u64) -> Vec<u64> {
    let mut dist = vec![INF; g.n()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0;
    heap.push(Reverse((0u64, source)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for a in g.neighbors(u) {
            let nd = dist_add(d, weight(a, u));
            if nd < dist[a.to] {
                dist[a.to] = nd;
                heap.push(Reverse((nd, a.to)));
            }
        }
    }
    dist
}

/// Dijkstra over an explicit adjacency list with any ordered additive
/// weight (integers or exact rationals). `None` means unreachable.
pub fn dijkstra_generic<W>(adj: &[Vec<(NodeId, W)>], source: NodeId, zero: W) -> Vec<Option<W>>
where
    W: Ord + Clone + Add<Output = W>,
{
    let mut dist: Vec<Option<W>> = vec![None; adj.len()];
    let mut done = vec![false; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = Some(zero.clone());
    heap.push(Reverse((zero, source)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for (v, w) in &adj[u] {
            let nd = d.clone() + w.clone();
            if dist[*v].as_ref().is_none_or(|cur| nd < *cur) {
                dist[*v] = Some(nd.clone());
                heap.push(Reverse((nd, *v)));
            }
        }
    }
    dist
}

pub fn apsp(g: &WeightedGraph) -> DistanceTable {
    let rows = (0..g.n()).map(|s| dijkstra_with(g, s, |a, _| a.w)).collect();
    DistanceTable { sources: (0..g.n()).collect(), rows }
}

/// Hop-limited Bellman-Ford: minimum weight over paths with at most `h` edges.
pub fn hop_bounded_distances(g: &WeightedGraph, source: NodeId, h: usize) -> DistanceTable {
    let mut cur = vec![INF; g.n()];
    cur[source] = 0;
    for _ in 0..h {
        let mut next = cur.clone();
        for e in g.edges() {
            next[e.v] = next[e.v].min(dist_add(cur[e.u], e.w));
            next[e.u] = next[e.u].min(dist_add(cur[e.v], e.w));
        }
        if next == cur {
            break;
        }
        cur = next;
    }
    DistanceTable::single(source, cur)
}

/// Unit-weight distances.
pub fn bfs_hops(g: &WeightedGraph, source: NodeId) -> Vec<u64> {
    let mut hops = vec![INF; g.n()];
    let mut q = VecDeque::from([source]);
    hops[source] = 0;
    while let Some(u) = q.pop_front() {
        for a in g.neighbors(u) {
            if hops[a.to] == INF {
                hops[a.to] = hops[u] + 1;
                q.push_back(a.to);
            }
        }
    }
    hops
}

/// For each node, the fewest edges on any shortest path from `source`.
pub fn min_hop_shortest(g: &WeightedGraph, source: NodeId) -> Vec<u64> {
    let mut best = vec![(INF, INF); g.n()];
    let mut heap = BinaryHeap::new();
    best[source] = (0, 0);
    heap.push(Reverse((0u64, 0u64, source)));
    while let Some(Reverse((d, h, u))) = heap.pop() {
        if (d, h) > best[u] {
            continue;
        }
        for a in g.neighbors(u) {
            let cand = (d + a.w, h + 1);
            if cand < best[a.to] {
                best[a.to] = cand;
                heap.push(Reverse((cand.0, cand.1, a.to)));
            }
        }
    }
    best.into_iter().map(|(_, h)| h).collect()
}

/// Smallest h such that h-hop distances equal true distances for all pairs.
pub fn shortest_path_diameter(g: &WeightedGraph) -> Result<u64, GraphError> {
    let mut spd = 0;
    for s in 0..g.n() {
        for h in min_hop_shortest(g, s) {
            if h == INF {
                return Err(GraphError::Disconnected);
            }
            spd = spd.max(h);
        }
    }
    Ok(spd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EccStats {
    pub diameter: u64,
    pub radius: u64,
    pub hop_diameter: u64,
}

pub fn eccentricity_stats(g: &WeightedGraph) -> Result<EccStats, GraphError> {
    let mut diameter = 0;
    let mut radius = INF;
    let mut hop_diameter = 0;
    for s in 0..g.n() {
        let ecc = dijkstra_with(g, s, |a, _| a.w).into_iter().max().unwrap_or(0);
        let hop = bfs_hops(g, s).into_iter().max().unwrap_or(0);
        if ecc == INF || hop == INF {
            return Err(GraphError::Disconnected);
        }
        diameter = diameter.max(ecc);
        radius = radius.min(ecc);
        hop_diameter = hop_diameter.max(hop);
    }
    Ok(EccStats { diameter, radius: if g.n() == 0 { 0 } else { radius }, hop_diameter })
}

pub fn hop_diameter(g: &WeightedGraph) -> Result<u64, GraphError> {
    let mut d = 0;
    for s in 0..g.n() {
        for h in bfs_hops(g, s) {
            if h == INF {
                return Err(GraphError::Disconnected);
            }
            d = d.max(h);
        }
    }
    Ok(d)
}

/// ceil(log2 x), with ceil(log2 1) = 0.
pub fn log2_ceil(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// ceil(sqrt x).
pub fn sqrt_ceil(x: u64) -> u64 {
    let mut r = (x as f64).sqrt() as u64;
    while r * r > x {
        r -= 1;
    }
    while r * r < x {
        r += 1;
    }
    r
}

pub fn frac(num: i128, den: i128) -> Frac {
    Ratio::new(num, den)
}
