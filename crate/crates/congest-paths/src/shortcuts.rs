//! k-nearest sets, k-lightest incident edges, and the k-shortcut graph
//! whose shortest-path diameter is below 4n/k. Ties break by node id.

use crate::graph::{dijkstra_with, Adj, NodeId, WeightedGraph, INF};

/// The k nearest other nodes of `u` as (node, distance), ordered by
/// (distance, id). Unreachable nodes are never included.
pub fn k_nearest(g: &WeightedGraph, u: NodeId, k: usize) -> Vec<(NodeId, u64)> {
    let dist = dijkstra_with(g, u, |a, _| a.w);
    let mut order: Vec<(u64, NodeId)> =
        dist.iter().enumerate().filter(|&(v, &d)| v != u && d != INF).map(|(v, &d)| (d, v)).collect();
    order.sort_unstable();
    order.into_iter().take(k).map(|(d, v)| (v, d)).collect()
}

/// The min(k, deg u) lightest incident edges, ordered by (weight, neighbor).
pub fn k_smallest_edges(g: &WeightedGraph, u: NodeId, k: usize) -> Vec<Adj> {
    let mut adj = g.neighbors(u).to_vec();
    adj.sort_unstable_by_key(|a| (a.w, a.to));
    adj.truncate(k);
    adj
}

/// Subgraph made of every node's k lightest incident edges.
pub fn union_subgraph(g: &WeightedGraph, k: usize) -> WeightedGraph {
    let mut keep = vec![false; g.m()];
    for u in 0..g.n() {
        for a in k_smallest_edges(g, u, k) {
            keep[a.edge] = true;
        }
    }
    let mut sub = WeightedGraph::new(g.n());
    for (e, _) in g.edges().iter().zip(&keep).filter(|(_, &k)| k) {
        sub.add_edge(e.u, e.v, e.w).expect("edges of a simple graph");
    }
    sub
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShortcutSet {
    pub k: usize,
    /// nearest[u] = S_k(u) with exact distances.
    pub nearest: Vec<Vec<(NodeId, u64)>>,
}

impl ShortcutSet {
    pub fn on(g: &WeightedGraph, k: usize) -> Self {
        ShortcutSet { k, nearest: (0..g.n()).map(|u| k_nearest(g, u, k)).collect() }
    }

    pub fn contains(&self, u: NodeId, v: NodeId) -> bool {
        self.nearest[u].iter().any(|&(x, _)| x == v)
    }

    /// Undirected shortcut edges (u, v, dist) with u < v, deduplicated.
    pub fn edges(&self) -> Vec<(NodeId, NodeId, u64)> {
        let mut out: Vec<(NodeId, NodeId, u64)> = self
            .nearest
            .iter()
            .enumerate()
            .flat_map(|(u, s)| s.iter().map(move |&(v, d)| (u.min(v), u.max(v), d)))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// S_k for every node, computed only from the union of the k lightest
/// incident edges. Agrees with `ShortcutSet::on` the full graph.
pub fn shortcuts_from_union(union: &WeightedGraph, k: usize) -> ShortcutSet {
    ShortcutSet::on(union, k)
}

/// Base edges plus an exact-distance edge from each node to each member of
/// its k-nearest set; parallel edges keep the minimum weight.
pub fn shortcut_graph(g: &WeightedGraph, k: usize) -> WeightedGraph {
    with_shortcuts(g, &shortcuts_from_union(&union_subgraph(g, k), k))
}

pub fn with_shortcuts(g: &WeightedGraph, set: &ShortcutSet) -> WeightedGraph {
    let mut out = g.clone();
    let mut weights: Vec<u64> = g.edges().iter().map(|e| e.w).collect();
    for (u, v, d) in set.edges() {
        match g.edge_id(u, v) {
            Some(e) => weights[e] = weights[e].min(d),
            None => {
                out.add_edge(u, v, d).expect("new shortcut edge");
                weights.push(d);
            }
        }
    }
    out.reweighted(&weights).expect("same topology")
}
