//! Exact APSP by weight scaling with positive binary digits.
//!
//! Iteration i knows exact distances under w_{i+1} and turns them into a
//! per-source family of nonnegative weights whose distances are at most 2n.
//! Zero-weight components are clustered, big clusters lose their internal
//! edges so zero paths stay short, a BFS-style scheduler with random delays
//! solves the bounded multi-weight APSP, and each node patches the pruned
//! distances back together over the cluster graph.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::graph::{dijkstra_generic, dijkstra_with, log2_ceil, sqrt_ceil, AsymWeights, DistanceTable, NodeId, WeightedGraph, INF};
use crate::sim::{
    broadcast_all, build_bfs_tree, neighbor_exchange, BfsTree, CapacityPolicy, Ctx, Incoming, NodeProgram, RunOptions,
    SimError, Simulator,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExactError {
    #[error("positive binary form needs x >= 1, got {0}")]
    NotPositive(u64),
    #[error("graph is disconnected")]
    Disconnected,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Digits in {1, 2}, least significant first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositiveBinary {
    pub digits: Vec<u8>,
}

impl PositiveBinary {
    pub fn value(&self) -> u64 {
        self.suffix(0)
    }

    /// sum over j >= i of digit_j * 2^(j - i); zero past the last digit.
    pub fn suffix(&self, i: usize) -> u64 {
        self.digits.iter().skip(i).rev().fold(0, |acc, &b| 2 * acc + b as u64)
    }

    pub fn digit(&self, i: usize) -> u64 {
        self.digits.get(i).copied().unwrap_or(0) as u64
    }
}

/// Greedy: odd x takes digit 1, even x takes digit 2, then halve the rest.
pub fn positive_binary(mut x: u64) -> Result<PositiveBinary, ExactError> {
    if x == 0 {
        return Err(ExactError::NotPositive(x));
    }
    let mut digits = Vec::new();
    while x > 0 {
        let b = if x % 2 == 1 { 1 } else { 2 };
        digits.push(b);
        x = (x - b as u64) / 2;
    }
    Ok(PositiveBinary { digits })
}

/// w_i for every edge. Satisfies w_i = 2 w_{i+1} + b_i and w_0 = w.
pub fn scale_weights(g: &WeightedGraph, i: usize) -> Vec<u64> {
    g.edges().iter().map(|e| positive_binary(e.w).expect("weights are positive").suffix(i)).collect()
}

/// Largest digit index over all edge weights.
pub fn top_digit(g: &WeightedGraph) -> usize {
    g.edges().iter().map(|e| positive_binary(e.w).expect("positive").digits.len() - 1).max().unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct MultiWeightFamily {
    /// weights[s]: directed weights on the base graph's edges for source s.
    pub weights: Vec<AsymWeights>,
    pub zero_bound: u64,
    pub cap: u64,
}

/// w^s(u->v) = 2 prev(s,u) - 2 prev(s,v) + w_i(uv), where `prev` is exact
/// under w_{i+1}. Nodes learn their neighbors' rows in n rounds.
pub fn reweight_per_source(
    sim: &mut Simulator,
    g: &WeightedGraph,
    wi: &[u64],
    prev: &[Vec<u64>],
) -> Result<MultiWeightFamily, ExactError> {
    let n = g.n();
    let rows: Vec<Vec<u64>> = (0..n).map(|u| (0..n).map(|s| prev[s][u]).collect()).collect();
    neighbor_exchange(sim, g, rows, "exchange-previous")?;
    let weights = (0..n)
        .map(|s| {
            let dir = |a: NodeId, b: NodeId, w: u64| {
                let v = 2 * prev[s][a] as i128 - 2 * prev[s][b] as i128 + w as i128;
                debug_assert!(v >= 0, "previous scale must be exact");
                v.max(0) as u64
            };
            AsymWeights {
                fwd: g.edges().iter().zip(wi).map(|(e, &w)| dir(e.u, e.v, w)).collect(),
                bwd: g.edges().iter().zip(wi).map(|(e, &w)| dir(e.v, e.u, w)).collect(),
            }
        })
        .collect();
    Ok(MultiWeightFamily { weights, zero_bound: sqrt_ceil(n as u64), cap: 2 * n as u64 })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPartition {
    /// Index into `reps` for every node.
    pub cluster: Vec<usize>,
    /// Smallest node id of each cluster, ascending.
    pub reps: Vec<NodeId>,
    pub sizes: Vec<usize>,
}

impl ClusterPartition {
    pub fn from_labels(labels: &[NodeId]) -> Self {
        let mut reps: Vec<NodeId> = labels.to_vec();
        reps.sort_unstable();
        reps.dedup();
        let cluster: Vec<usize> = labels.iter().map(|l| reps.binary_search(l).expect("label is a rep")).collect();
        let mut sizes = vec![0; reps.len()];
        for &c in &cluster {
            sizes[c] += 1;
        }
        ClusterPartition { cluster, reps, sizes }
    }

    pub fn is_big(&self, c: usize, threshold: u64) -> bool {
        self.sizes[c] as u64 > threshold
    }
}

struct MinIdNode {
    label: NodeId,
    zero: Arc<Vec<u64>>,
}

impl NodeProgram for MinIdNode {
    type Msg = u64;

    fn step(&mut self, ctx: &mut Ctx<'_, u64>, inbox: &[Incoming<u64>]) {
        let best = inbox.iter().map(|m| m.msg as NodeId).min().unwrap_or(NodeId::MAX);
        if ctx.round() == 0 || best < self.label {
            self.label = self.label.min(best);
            let zero_edges: Vec<usize> = ctx.neighbors().iter().filter(|a| self.zero[a.edge] == 0).map(|a| a.edge).collect();
            for e in zero_edges {
                ctx.send_on(e, self.label as u64);
            }
        }
    }
}

/// Components of the zero-weight subgraph, found by flooding minimum ids
/// over zero edges and then announced network-wide.
pub fn cluster_zero_components(
    sim: &mut Simulator,
    g: &WeightedGraph,
    tree: &BfsTree,
    wi: &[u64],
) -> Result<ClusterPartition, ExactError> {
    let zero = Arc::new(wi.to_vec());
    let programs = (0..g.n()).map(|u| MinIdNode { label: u, zero: Arc::clone(&zero) }).collect();
    let labels: Vec<NodeId> = sim.run(g, programs, "zero-clusters")?.into_iter().map(|p| p.label).collect();
    let items: Vec<(NodeId, u64)> = labels.iter().enumerate().map(|(u, &l)| (u, l as u64)).collect();
    broadcast_all(sim, g, tree, &items)?;
    Ok(ClusterPartition::from_labels(&labels))
}

/// G without the internal edges of clusters larger than ceil(sqrt n).
#[derive(Debug, Clone)]
pub struct Pruned {
    pub graph: WeightedGraph,
    /// Base-graph edge index of every kept edge.
    pub edge_map: Vec<usize>,
}

pub fn prune_big_clusters(g: &WeightedGraph, partition: &ClusterPartition) -> Pruned {
    let threshold = sqrt_ceil(g.n() as u64);
    let mut graph = WeightedGraph::new(g.n());
    let mut edge_map = Vec::new();
    for (idx, e) in g.edges().iter().enumerate() {
        let (cu, cv) = (partition.cluster[e.u], partition.cluster[e.v]);
        if cu == cv && partition.is_big(cu, threshold) {
            continue;
        }
        graph.add_edge(e.u, e.v, e.w).expect("subset of a simple graph");
        edge_map.push(idx);
    }
    Pruned { graph, edge_map }
}

#[derive(Debug, Clone, Copy)]
struct Reach {
    source: u32,
    len: u64,
}

impl crate::sim::Payload for Reach {
    fn words(&self) -> usize {
        2
    }
}

struct ReachNode {
    starts: Arc<Vec<u64>>,
    /// weights[s][h_edge] as (forward, backward) on the pruned graph.
    weights: Arc<Vec<AsymWeights>>,
    h: Arc<WeightedGraph>,
    zero_bound: u64,
    cap: u64,
    dist: HashMap<u32, u64>,
    agenda: BTreeMap<u64, Vec<(usize, Reach)>>,
}

impl ReachNode {
    fn learn(&mut self, ctx: &mut Ctx<'_, Reach>, source: u32, len: u64) {
        if self.dist.contains_key(&source) {
            return;
        }
        self.dist.insert(source, len);
        let me = ctx.node();
        let start = self.starts[source as usize];
        for a in self.h.neighbors(me) {
            let w = self.weights[source as usize].get(&self.h, a.edge, me);
            let msg = Reach { source, len: len + w };
            if w == 0 {
                ctx.send_on(a.edge, Reach { source, len });
            } else if len + w <= self.cap {
                let at = (start + (len + w) * self.zero_bound - 1).max(ctx.round());
                if at == ctx.round() {
                    ctx.send_on(a.edge, msg);
                } else {
                    self.agenda.entry(at).or_default().push((a.edge, msg));
                    ctx.wake_at(at);
                }
            }
        }
    }
}

impl NodeProgram for ReachNode {
    type Msg = Reach;

    fn step(&mut self, ctx: &mut Ctx<'_, Reach>, inbox: &[Incoming<Reach>]) {
        let me = ctx.node();
        let start = self.starts[me];
        if ctx.round() == 0 && start > 0 {
            ctx.wake_at(start);
        }
        if ctx.round() == start {
            self.learn(ctx, me as u32, 0);
        }
        let mut firsts: BTreeMap<u32, u64> = BTreeMap::new();
        for m in inbox {
            let e = firsts.entry(m.msg.source).or_insert(m.msg.len);
            *e = (*e).min(m.msg.len);
        }
        for (s, len) in firsts {
            self.learn(ctx, s, len);
        }
        if let Some(due) = self.agenda.remove(&ctx.round()) {
            for (edge, msg) in due {
                ctx.send_on(edge, msg);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct KApsp {
    /// dist[s][u] = dist^K from s under w^s on the pruned graph, INF beyond K.
    pub dist: Vec<Vec<u64>>,
    pub used_fallback: bool,
    pub delays: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleOptions {
    /// Network rounds per scheduler step; also the per-edge message budget per step.
    pub slack: u64,
    /// Detect budget overruns and switch to aggregate-and-solve.
    pub fail_fast: bool,
}

impl ScheduleOptions {
    pub fn default_for(n: usize) -> Self {
        ScheduleOptions { slack: (log2_ceil(n as u64) as u64).max(1), fail_fast: true }
    }
}

fn local_solve(h: &Pruned, g: &WeightedGraph, family: &MultiWeightFamily, h_weights: &[AsymWeights]) -> Vec<Vec<u64>> {
    (0..g.n())
        .map(|s| {
            dijkstra_with(&h.graph, s, |a, from| h_weights[s].get(&h.graph, a.edge, from))
                .into_iter()
                .map(|d| if d <= family.cap { d } else { INF })
                .collect()
        })
        .collect()
}

/// Bounded multi-weight APSP on the pruned graph. Source s starts at a
/// random step r_s in {0..n-1}; (s, l) crosses a zero edge in one step and
/// arrives over a positive edge w at step r_s + (l + w) * zero_bound.
pub fn multi_weight_k_apsp(
    sim: &mut Simulator,
    g: &WeightedGraph,
    tree: &BfsTree,
    h: &Pruned,
    family: &MultiWeightFamily,
    opts: ScheduleOptions,
) -> Result<KApsp, ExactError> {
    let n = g.n();
    let draw = sim.next_draw();
    let delays: Vec<u64> = (0..n).map(|s| sim.node_rng(draw, s).gen_range(0..n as u64)).collect();
    let items: Vec<(NodeId, u64)> = delays.iter().copied().enumerate().collect();
    broadcast_all(sim, g, tree, &items)?;

    let h_weights: Vec<AsymWeights> = family
        .weights
        .iter()
        .map(|w| AsymWeights {
            fwd: h.edge_map.iter().map(|&e| w.fwd[e]).collect(),
            bwd: h.edge_map.iter().map(|&e| w.bwd[e]).collect(),
        })
        .collect();
    let starts = Arc::new(delays.clone());
    let shared = Arc::new(h_weights.clone());
    let hg = Arc::new(h.graph.clone());
    let programs = (0..n)
        .map(|_| ReachNode {
            starts: Arc::clone(&starts),
            weights: Arc::clone(&shared),
            h: Arc::clone(&hg),
            zero_bound: family.zero_bound.max(1),
            cap: family.cap,
            dist: HashMap::new(),
            agenda: BTreeMap::new(),
        })
        .collect();
    let run_opts = RunOptions {
        edge_capacity: 1,
        policy: if opts.fail_fast { CapacityPolicy::FailFast } else { CapacityPolicy::RecordOnly },
        round_scale: opts.slack.max(1),
    };
    match sim.run_with(&h.graph, programs, "multi-weight-apsp", run_opts) {
        Ok(done) => {
            let mut dist = vec![vec![INF; n]; n];
            for (u, p) in done.iter().enumerate() {
                for (&s, &d) in &p.dist {
                    dist[s as usize][u] = d;
                }
            }
            Ok(KApsp { dist, used_fallback: false, delays })
        }
        Err(SimError::CapacityExceeded { .. }) => {
            // Everyone learns the whole weighted graph and solves locally.
            let items: Vec<(NodeId, (u64, u64, u64))> =
                g.edges().iter().map(|e| (e.u, (e.u as u64, e.v as u64, e.w))).collect();
            broadcast_all(sim, g, tree, &items)?;
            Ok(KApsp { dist: local_solve(h, g, family, &h_weights), used_fallback: true, delays })
        }
        Err(e) => Err(e.into()),
    }
}

/// d'(s, u) = 2 prev(s, u) + dist^K(s, u).
pub fn candidate_distances(prev: &[Vec<u64>], k: &KApsp) -> Vec<Vec<u64>> {
    prev.iter()
        .zip(&k.dist)
        .map(|(p, d)| p.iter().zip(d).map(|(&a, &b)| if b == INF { INF } else { 2 * a + b }).collect())
        .collect()
}

/// Cluster-level minimum of the candidate table, symmetrised.
pub fn cluster_table(partition: &ClusterPartition, cand: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let c = partition.reps.len();
    let mut t = vec![vec![INF; c]; c];
    for (x, row) in cand.iter().enumerate() {
        for (y, &d) in row.iter().enumerate() {
            let (a, b) = (partition.cluster[x], partition.cluster[y]);
            let d = if a == b { 0 } else { d };
            t[a][b] = t[a][b].min(d);
            t[b][a] = t[b][a].min(d);
        }
    }
    t
}

/// Exact w_i distances from node u: shortest paths over the cluster graph
/// whose edges are u's own cluster to every cluster plus every big cluster
/// to every cluster.
pub fn cluster_graph_complete(u: NodeId, partition: &ClusterPartition, table: &[Vec<u64>], threshold: u64) -> Vec<u64> {
    let c = partition.reps.len();
    let own = partition.cluster[u];
    let mut adj: Vec<Vec<(usize, u64)>> = vec![Vec::new(); c];
    let mut add = |a: usize, b: usize| {
        if a != b && table[a][b] != INF {
            adj[a].push((b, table[a][b]));
            adj[b].push((a, table[a][b]));
        }
    };
    for j in 0..c {
        add(own, j);
    }
    for big in (0..c).filter(|&b| partition.is_big(b, threshold)) {
        for j in 0..c {
            add(big, j);
        }
    }
    let by_cluster = dijkstra_generic(&adj, own, 0u64);
    partition.cluster.iter().map(|&cv| by_cluster[cv].unwrap_or(INF)).collect()
}

/// Longest simple path, counted in nodes, inside the zero-weight subgraph.
/// Exhaustive within each component; components above `exhaustive_limit`
/// nodes report their size as a bound.
pub fn longest_zero_path(g: &WeightedGraph, weights: &[u64], exhaustive_limit: usize) -> u64 {
    let zero_adj: Vec<Vec<NodeId>> =
        (0..g.n()).map(|u| g.neighbors(u).iter().filter(|a| weights[a.edge] == 0).map(|a| a.to).collect()).collect();
    let mut comp = vec![usize::MAX; g.n()];
    let mut best = u64::from(g.n() > 0);
    for root in 0..g.n() {
        if comp[root] != usize::MAX {
            continue;
        }
        let mut members = vec![root];
        comp[root] = root;
        let mut i = 0;
        while i < members.len() {
            for &v in &zero_adj[members[i]] {
                if comp[v] == usize::MAX {
                    comp[v] = root;
                    members.push(v);
                }
            }
            i += 1;
        }
        if members.len() > exhaustive_limit {
            best = best.max(members.len() as u64);
            continue;
        }
        fn dfs(u: NodeId, adj: &[Vec<NodeId>], seen: &mut Vec<bool>, depth: u64, best: &mut u64) {
            *best = (*best).max(depth);
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    dfs(v, adj, seen, depth + 1, best);
                    seen[v] = false;
                }
            }
        }
        let mut seen = vec![false; g.n()];
        for &s in &members {
            seen[s] = true;
            dfs(s, &zero_adj, &mut seen, 1, &mut best);
            seen[s] = false;
        }
    }
    best
}

/// Invariant checks gathered on one scaling iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationReport {
    pub i: usize,
    pub clusters: usize,
    pub big_clusters: usize,
    pub used_fallback: bool,
    pub recurrence_holds: bool,
    pub family_nonnegative: bool,
    pub zero_equivalent: bool,
    pub max_family_distance: u64,
    pub longest_zero_path: u64,
    pub matches_oracle: bool,
}

#[derive(Debug, Clone)]
pub struct ExactRun {
    pub table: DistanceTable,
    pub iterations: Vec<IterationReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactOptions {
    pub schedule: Option<ScheduleOptions>,
    /// Record invariant checks per iteration (costs sequential oracle runs).
    pub check: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions { schedule: None, check: true }
    }
}

fn exact_under(g: &WeightedGraph, w: &[u64]) -> Vec<Vec<u64>> {
    (0..g.n()).map(|s| dijkstra_with(g, s, |a, _| w[a.edge])).collect()
}

pub fn exact_apsp(sim: &mut Simulator, g: &WeightedGraph, opts: ExactOptions) -> Result<ExactRun, ExactError> {
    if !g.is_connected() {
        return Err(ExactError::Disconnected);
    }
    let n = g.n();
    let schedule = opts.schedule.unwrap_or_else(|| ScheduleOptions::default_for(n));
    let threshold = sqrt_ceil(n as u64);
    let tree = build_bfs_tree(sim, g, 0)?;
    let digits: Vec<PositiveBinary> = g.edges().iter().map(|e| positive_binary(e.w).expect("positive")).collect();
    let top = top_digit(g);
    let mut prev = vec![vec![0u64; n]; n];
    let mut iterations = Vec::new();

    for i in (0..=top).rev() {
        let wi: Vec<u64> = digits.iter().map(|d| d.suffix(i)).collect();
        let family = reweight_per_source(sim, g, &wi, &prev)?;
        let partition = cluster_zero_components(sim, g, &tree, &wi)?;
        let pruned = prune_big_clusters(g, &partition);
        let k = multi_weight_k_apsp(sim, g, &tree, &pruned, &family, schedule)?;
        let cand = candidate_distances(&prev, &k);
        let table = cluster_table(&partition, &cand);

        sim.charge_rounds(n as u64 * threshold, "cluster-collect");
        let big: Vec<usize> = (0..partition.reps.len()).filter(|&c| partition.is_big(c, threshold)).collect();
        let items: Vec<(NodeId, (u64, u64, u64))> = big
            .iter()
            .flat_map(|&b| (0..partition.reps.len()).map(move |j| (b, j)))
            .filter(|&(b, j)| table[b][j] != INF)
            .map(|(b, j)| (partition.reps[b], (b as u64, j as u64, table[b][j])))
            .collect();
        broadcast_all(sim, g, &tree, &items)?;

        let next: Vec<Vec<u64>> = (0..n).map(|u| cluster_graph_complete(u, &partition, &table, threshold)).collect();

        if opts.check {
            let wi1: Vec<u64> = digits.iter().map(|d| d.suffix(i + 1)).collect();
            let recurrence_holds = (0..g.m()).all(|e| wi[e] == 2 * wi1[e] + digits[e].digit(i));
            let zero_equivalent = family.weights.iter().all(|f| {
                (0..g.m()).all(|e| (f.fwd[e] == 0) == (wi[e] == 0) && (f.bwd[e] == 0) == (wi[e] == 0))
            });
            let family_nonnegative = (0..n).all(|s| {
                g.edges().iter().zip(&wi).all(|(e, &w)| {
                    let f = 2 * prev[s][e.u] as i128 - 2 * prev[s][e.v] as i128 + w as i128;
                    let b = 2 * prev[s][e.v] as i128 - 2 * prev[s][e.u] as i128 + w as i128;
                    f >= 0 && b >= 0
                })
            });
            let max_family_distance = (0..n)
                .map(|s| dijkstra_with(g, s, |a, from| family.weights[s].get(g, a.edge, from)).into_iter().max().unwrap_or(0))
                .max()
                .unwrap_or(0);
            let h_zero: Vec<u64> = pruned.edge_map.iter().map(|&e| wi[e]).collect();
            iterations.push(IterationReport {
                i,
                clusters: partition.reps.len(),
                big_clusters: big.len(),
                used_fallback: k.used_fallback,
                recurrence_holds,
                family_nonnegative,
                zero_equivalent,
                max_family_distance,
                longest_zero_path: longest_zero_path(&pruned.graph, &h_zero, 24),
                matches_oracle: next == exact_under(g, &wi),
            });
        } else {
            iterations.push(IterationReport {
                i,
                clusters: partition.reps.len(),
                big_clusters: big.len(),
                used_fallback: k.used_fallback,
                recurrence_holds: true,
                family_nonnegative: true,
                zero_equivalent: true,
                max_family_distance: 0,
                longest_zero_path: 0,
                matches_oracle: true,
            });
        }
        prev = next;
    }
    Ok(ExactRun { table: DistanceTable { sources: (0..n).collect(), rows: prev }, iterations })
}
