//! Algorithms for fully connected networks: exact SSSP in O(sqrt n) rounds
//! via shortcut reweighting plus Bellman-Ford, and a (2+o(1))-approximate
//! APSP built from random sources and a per-node local graph.

use rand::seq::index::sample;
use thiserror::Error;

use crate::graph::{dijkstra_generic, sqrt_ceil, DistanceTable, Frac, NodeId, WeightedGraph, INF};
use crate::rounding::{check_eps, multi_source_on_tree, RoundingError};
use crate::shortcuts::{k_smallest_edges, shortcuts_from_union, ShortcutSet};
use crate::sim::{bellman_ford, build_bfs_tree, direct_send, neighbor_exchange, SimError, Simulator};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CliqueError {
    #[error("graph is not complete")]
    NotComplete,
    #[error(transparent)]
    Rounding(#[from] RoundingError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// min(ceil(sqrt n), n - 1).
pub fn clique_k(n: usize) -> usize {
    (sqrt_ceil(n as u64) as usize).min(n.saturating_sub(1)).max(1)
}

/// ceil(4 sqrt n): Bellman-Ford rounds needed once SPD < 4n/k.
pub fn relaxation_rounds(n: usize) -> u64 {
    sqrt_ceil(16 * n as u64)
}

/// Every node broadcasts its k lightest edges, one per round; all nodes
/// then know the union and derive S_k for everyone.
fn share_light_edges(sim: &mut Simulator, g: &WeightedGraph, k: usize) -> Result<ShortcutSet, SimError> {
    let items: Vec<Vec<(u64, u64, u64)>> = (0..g.n())
        .map(|u| k_smallest_edges(g, u, k).into_iter().map(|a| (u as u64, a.to as u64, a.w)).collect())
        .collect();
    let mut union = WeightedGraph::new(g.n());
    for &(u, v, w) in items.iter().flatten() {
        let _ = union.add_edge(u as usize, v as usize, w);
    }
    neighbor_exchange(sim, g, items, "share-light-edges")?;
    Ok(shortcuts_from_union(&union, k))
}

/// w'(uv) = dist(u, v) when either endpoint has the other in its k-nearest
/// set, else w(uv).
fn shortcut_weights(g: &WeightedGraph, set: &ShortcutSet) -> Vec<u64> {
    let mut w: Vec<u64> = g.edges().iter().map(|e| e.w).collect();
    for (u, v, d) in set.edges() {
        let e = g.edge_id(u, v).expect("complete graph");
        w[e] = w[e].min(d);
    }
    w
}

#[derive(Debug, Clone)]
pub struct CliqueSssp {
    pub dist: Vec<u64>,
    pub k: usize,
    pub phase1_rounds: u64,
    pub phase2_rounds: u64,
}

pub fn clique_sssp_exact(sim: &mut Simulator, g: &WeightedGraph, source: NodeId) -> Result<CliqueSssp, CliqueError> {
    if !g.is_complete() {
        return Err(CliqueError::NotComplete);
    }
    let k = clique_k(g.n());
    let before = sim.rounds();
    let set = share_light_edges(sim, g, k)?;
    let w = shortcut_weights(g, &set);
    let phase1_rounds = sim.rounds() - before;
    let dist = bellman_ford(sim, g, &w, source, relaxation_rounds(g.n()))?;
    Ok(CliqueSssp { dist, k, phase1_rounds, phase2_rounds: sim.rounds() - before - phase1_rounds })
}

/// Everything node-local that the APSP algorithm's last step reads.
#[derive(Debug, Clone)]
pub struct CliqueLocalView {
    pub n: usize,
    pub nearest: ShortcutSet,
    /// Tightened weights, dense n x n.
    pub tightened: Vec<Vec<u64>>,
    pub sample: Vec<NodeId>,
    /// rows[j][v] = d'(sample[j], v).
    pub rows: Vec<Vec<Option<Frac>>>,
}

/// Undirected local graph of node u: u to every node at tightened weight,
/// every x to its k-nearest set at true distance, every sampled r to every
/// node at its approximate distance. Parallel edges are harmless here.
pub fn build_gu(view: &CliqueLocalView, u: NodeId) -> Vec<Vec<(NodeId, Frac)>> {
    let mut adj: Vec<Vec<(NodeId, Frac)>> = vec![Vec::new(); view.n];
    let mut add = |a: NodeId, b: NodeId, w: Frac| {
        adj[a].push((b, w));
        adj[b].push((a, w));
    };
    for v in (0..view.n).filter(|&v| v != u) {
        add(u, v, Frac::from(view.tightened[u][v] as i128));
    }
    for (x, s) in view.nearest.nearest.iter().enumerate() {
        for &(y, d) in s {
            add(x, y, Frac::from(d as i128));
        }
    }
    for (&r, row) in view.sample.iter().zip(&view.rows) {
        for (v, d) in row.iter().enumerate() {
            if let (Some(d), true) = (d, v != r) {
                add(r, v, *d);
            }
        }
    }
    adj
}

#[derive(Debug, Clone)]
pub struct CliqueApsp {
    pub table: DistanceTable<Frac>,
    pub view: CliqueLocalView,
    /// Set when some ratio exceeds 2 + 2eps + eps^2 (checked against the
    /// sequential oracle; diagnostic only).
    pub hitting_failure: bool,
}

pub fn ratio_budget(eps: Frac) -> Frac {
    Frac::from(2) + Frac::from(2) * eps + eps * eps
}

pub fn clique_apsp_approx(sim: &mut Simulator, g: &WeightedGraph, eps: Frac) -> Result<CliqueApsp, CliqueError> {
    check_eps(eps)?;
    if !g.is_complete() {
        return Err(CliqueError::NotComplete);
    }
    let n = g.n();
    let k = clique_k(n);
    let set = share_light_edges(sim, g, k)?;
    let shared: Vec<Vec<(u64, u64, u64)>> = set
        .nearest
        .iter()
        .enumerate()
        .map(|(u, s)| s.iter().map(|&(v, d)| (u as u64, v as u64, d)).collect())
        .collect();
    neighbor_exchange(sim, g, shared, "share-nearest")?;

    // Node v's bound for each u: min over z in S_k(u) of dist(u, z) + w(z, v).
    let w = |a: NodeId, b: NodeId| if a == b { 0 } else { g.weight(a, b).expect("complete graph") };
    let mut tightened = vec![vec![INF; n]; n];
    for u in 0..n {
        for v in 0..n {
            tightened[u][v] = if u == v { 0 } else { w(u, v) };
        }
        for &(z, d) in &set.nearest[u] {
            tightened[u][z] = tightened[u][z].min(d);
            for v in (0..n).filter(|&v| v != u) {
                tightened[u][v] = tightened[u][v].min(d + w(z, v));
            }
        }
    }
    // Each endpoint tells the other its bound; both keep the minimum.
    let outgoing = (0..n).map(|v| (0..n).filter(|&u| u != v).map(|u| (u, tightened[u][v])).collect()).collect();
    direct_send(sim, g, outgoing, "agree-weights")?;
    for u in 0..n {
        for v in u + 1..n {
            let m = tightened[u][v].min(tightened[v][u]);
            tightened[u][v] = m;
            tightened[v][u] = m;
        }
    }
    let weights: Vec<u64> = g.edges().iter().map(|e| tightened[e.u][e.v]).collect();
    let gw = g.reweighted(&weights).expect("positive weights");

    let size = ((n as f64).sqrt() * (n as f64).log2().max(1.0)).ceil() as usize;
    let draw = sim.next_draw();
    let mut rng = sim.node_rng(draw, 0);
    let mut picked: Vec<NodeId> = sample(&mut rng, n, size.min(n)).into_vec();
    picked.sort_unstable();

    let tree = build_bfs_tree(sim, &gw, 0)?;
    let h = relaxation_rounds(n).min(n as u64).max(1);
    let run = multi_source_on_tree(sim, &gw, &tree, &picked, h, eps)?;
    let announce: Vec<Vec<Frac>> = (0..n)
        .map(|u| run.table.rows.iter().map(|row| row[u].unwrap_or(Frac::from(-1))).collect())
        .collect();
    neighbor_exchange(sim, g, announce, "share-sample-rows")?;

    let view = CliqueLocalView { n, nearest: set, tightened, sample: picked, rows: run.table.rows };
    let rows: Vec<Vec<Frac>> = (0..n)
        .map(|u| {
            dijkstra_generic(&build_gu(&view, u), u, Frac::from(0))
                .into_iter()
                .map(|d| d.expect("u reaches every node directly"))
                .collect()
        })
        .collect();
    let exact = crate::graph::apsp(g);
    let budget = ratio_budget(eps);
    let hitting_failure = rows
        .iter()
        .zip(&exact.rows)
        .any(|(r, e)| r.iter().zip(e).any(|(&a, &d)| a > budget * Frac::from(d as i128)));
    Ok(CliqueApsp { table: DistanceTable { sources: (0..n).collect(), rows }, view, hitting_failure })
}
