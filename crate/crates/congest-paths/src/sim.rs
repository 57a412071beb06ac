//! Round-synchronous CONGEST engine with per-edge load metering, plus the
//! standard programs built on it: BFS tree, pipelined global broadcast,
//! tree aggregation, neighbor exchange and Bellman-Ford.
//!
//! The engine is event driven: a node is stepped in a round only if it has
//! mail or asked to be woken, but round numbers advance exactly as in the
//! lock-step model. A message sent in round r is in the inbox at round r+1.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{NodeId, WeightedGraph, INF};

pub trait Payload: Clone {
    /// Machine words this payload occupies on the wire.
    fn words(&self) -> usize {
        1
    }
}

impl Payload for u64 {}
impl Payload for (u64, u64) {
    fn words(&self) -> usize {
        2
    }
}

#[derive(Debug, Clone)]
pub struct Incoming<M> {
    pub from: NodeId,
    pub edge: usize,
    pub msg: M,
}

pub trait NodeProgram {
    type Msg: Payload;
    fn step(&mut self, ctx: &mut Ctx<'_, Self::Msg>, inbox: &[Incoming<Self::Msg>]);
}

/// What a node can see and do during one step.
pub struct Ctx<'a, M> {
    round: u64,
    node: NodeId,
    graph: &'a WeightedGraph,
    out: &'a mut Vec<(usize, M)>,
    wakes: &'a mut Vec<u64>,
    rng: &'a mut ChaCha8Rng,
}

impl<M: Clone> Ctx<'_, M> {
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    /// Local topology: incident edges and their weights.
    pub fn neighbors(&self) -> &[crate::graph::Adj] {
        self.graph.neighbors(self.node)
    }

    pub fn send(&mut self, to: NodeId, msg: M) {
        let e = self.graph.edge_id(self.node, to).unwrap_or_else(|| panic!("{} has no edge to {to}", self.node));
        self.out.push((directed(self.graph, e, self.node), msg));
    }

    pub fn send_on(&mut self, edge: usize, msg: M) {
        self.out.push((directed(self.graph, edge, self.node), msg));
    }

    pub fn broadcast(&mut self, msg: M) {
        for a in self.graph.neighbors(self.node) {
            self.out.push((directed(self.graph, a.edge, self.node), msg.clone()));
        }
    }

    /// Step this node again at `round` even without mail.
    pub fn wake_at(&mut self, round: u64) {
        assert!(round > self.round, "wake-up must be in the future");
        self.wakes.push(round);
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }
}

fn directed(g: &WeightedGraph, edge: usize, from: NodeId) -> usize {
    2 * edge + usize::from(g.edges()[edge].u != from)
}

fn endpoints(g: &WeightedGraph, dir: usize) -> (NodeId, NodeId) {
    let e = g.edges()[dir / 2];
    if dir % 2 == 0 {
        (e.u, e.v)
    } else {
        (e.v, e.u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum CapacityPolicy {
    #[default]
    RecordOnly,
    FailFast,
    Queue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub edge_capacity: u64,
    pub policy: CapacityPolicy,
    pub max_rounds: u64,
    pub seed: u64,
    pub bandwidth_words: usize,
    pub record_loads: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            edge_capacity: 1,
            policy: CapacityPolicy::RecordOnly,
            max_rounds: 1 << 40,
            seed: 0,
            bandwidth_words: 4,
            record_loads: false,
        }
    }
}

impl SimConfig {
    pub fn seeded(seed: u64) -> Self {
        SimConfig { seed, ..Self::default() }
    }
}

/// Per-run overrides; `round_scale` > 1 makes one engine round stand for
/// that many network rounds, with the edge budget scaled to match.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub edge_capacity: u64,
    pub policy: CapacityPolicy,
    pub round_scale: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("exceeded the limit of {limit} rounds")]
    MaxRoundsExceeded { limit: u64 },
    #[error("edge {from}->{to} carried {load} messages in round {round}, capacity {capacity}")]
    CapacityExceeded { round: u64, from: NodeId, to: NodeId, load: u64, capacity: u64 },
    #[error("payload of {words} words exceeds bandwidth of {limit}")]
    PayloadTooLarge { words: usize, limit: usize },
    #[error("expected one program per node ({expected}), got {got}")]
    ProgramCount { expected: usize, got: usize },
    #[error("graph is disconnected")]
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub round: u64,
    pub from: NodeId,
    pub to: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Phase {
    pub label: String,
    pub start: u64,
    pub rounds: u64,
    pub simulated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimTrace {
    pub total_rounds: u64,
    pub max_edge_load: u64,
    pub messages: u64,
    /// load value -> number of (round, directed edge) slots with that load.
    pub load_histogram: BTreeMap<u64, u64>,
    /// Only filled when `SimConfig::record_loads` is set.
    pub per_round_edge_load: Option<BTreeMap<(u64, NodeId, NodeId), u64>>,
    pub failure: Option<Failure>,
    pub seed: u64,
    pub phases: Vec<Phase>,
}

impl SimTrace {
    pub fn to_json(&self) -> serde_json::Value {
        let loads: serde_json::Map<String, serde_json::Value> =
            self.load_histogram.iter().map(|(k, v)| (k.to_string(), (*v).into())).collect();
        serde_json::json!({
            "rounds": self.total_rounds,
            "max_edge_load": self.max_edge_load,
            "loads": loads,
            "seed": self.seed,
            "failure": self.failure,
        })
    }

    fn record(&mut self, round: u64, from: NodeId, to: NodeId, load: u64) {
        self.max_edge_load = self.max_edge_load.max(load);
        *self.load_histogram.entry(load).or_default() += 1;
        if let Some(map) = self.per_round_edge_load.as_mut() {
            map.insert((round, from, to), load);
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Accumulates one trace across the phases of an algorithm.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    trace: SimTrace,
    runs: u64,
    draws: u64,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Self {
        let trace = SimTrace {
            seed: config.seed,
            per_round_edge_load: config.record_loads.then(BTreeMap::new),
            ..SimTrace::default()
        };
        Simulator { config, trace, runs: 0, draws: 0 }
    }

    pub fn seeded(seed: u64) -> Self {
        Self::new(SimConfig::seeded(seed))
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn trace(&self) -> &SimTrace {
        &self.trace
    }

    pub fn into_trace(self) -> SimTrace {
        self.trace
    }

    pub fn rounds(&self) -> u64 {
        self.trace.total_rounds
    }

    /// Rounds accounted for without simulating them message by message.
    pub fn charge_rounds(&mut self, rounds: u64, label: &str) {
        if rounds == 0 {
            return;
        }
        self.trace.phases.push(Phase { label: label.into(), start: self.trace.total_rounds, rounds, simulated: false });
        self.trace.total_rounds += rounds;
    }

    /// Opens a new family of per-node random streams.
    pub fn next_draw(&mut self) -> u64 {
        self.draws += 1;
        self.draws
    }

    /// Random stream private to `node` within draw family `draw`.
    pub fn node_rng(&self, draw: u64, node: NodeId) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(self.config.seed ^ splitmix(draw)));
        rng.set_stream(node as u64);
        rng
    }

    fn default_options(&self) -> RunOptions {
        RunOptions { edge_capacity: self.config.edge_capacity, policy: self.config.policy, round_scale: 1 }
    }

    pub fn run<P: NodeProgram>(&mut self, g: &WeightedGraph, programs: Vec<P>, label: &str) -> Result<Vec<P>, SimError> {
        let opts = self.default_options();
        self.run_with(g, programs, label, opts)
    }

    pub fn run_with<P: NodeProgram>(
        &mut self,
        g: &WeightedGraph,
        mut programs: Vec<P>,
        label: &str,
        opts: RunOptions,
    ) -> Result<Vec<P>, SimError> {
        if programs.len() != g.n() {
            return Err(SimError::ProgramCount { expected: g.n(), got: programs.len() });
        }
        self.runs += 1;
        let run_seed = splitmix(self.config.seed ^ splitmix(self.runs.wrapping_mul(0x1000_0001)));
        let mut rngs: Vec<ChaCha8Rng> = (0..g.n())
            .map(|u| {
                let mut r = ChaCha8Rng::seed_from_u64(run_seed);
                r.set_stream(u as u64);
                r
            })
            .collect();
        let offset = self.trace.total_rounds;
        let scale = opts.round_scale.max(1);
        let budget = opts.edge_capacity.max(1) * scale;

        let mut pending: Vec<VecDeque<(NodeId, P::Msg)>> = vec![VecDeque::new(); 2 * g.m()];
        let mut touched: Vec<usize> = Vec::new();
        let mut is_touched = vec![false; 2 * g.m()];
        let mut inbox: Vec<Vec<Incoming<P::Msg>>> = vec![Vec::new(); g.n()];
        let mut has_mail: Vec<NodeId> = Vec::new();
        let mut wakeups: BTreeMap<u64, Vec<NodeId>> = BTreeMap::new();
        let mut out = Vec::new();
        let mut wakes = Vec::new();
        let mut round = 0u64;
        let mut last = 0u64;
        let mut stepping: Vec<NodeId> = (0..g.n()).collect();

        let result = loop {
            for &u in &stepping {
                let mail = std::mem::take(&mut inbox[u]);
                let mut ctx = Ctx { round, node: u, graph: g, out: &mut out, wakes: &mut wakes, rng: &mut rngs[u] };
                programs[u].step(&mut ctx, &mail);
                for (dir, msg) in out.drain(..) {
                    if msg.words() > self.config.bandwidth_words {
                        return Err(SimError::PayloadTooLarge { words: msg.words(), limit: self.config.bandwidth_words });
                    }
                    pending[dir].push_back((u, msg));
                    if !is_touched[dir] {
                        is_touched[dir] = true;
                        touched.push(dir);
                    }
                }
                for r in wakes.drain(..) {
                    wakeups.entry(r).or_default().push(u);
                }
            }
            if !stepping.is_empty() {
                last = round;
            }

            touched.sort_unstable();
            let mut still = Vec::new();
            let mut failed = None;
            for &dir in &touched {
                let q = &mut pending[dir];
                let take = match opts.policy {
                    CapacityPolicy::Queue => q.len().min(budget as usize),
                    _ => q.len(),
                };
                let load = take as u64;
                let (from, to) = endpoints(g, dir);
                if opts.policy == CapacityPolicy::FailFast && load > budget && failed.is_none() {
                    failed = Some((from, to, load));
                }
                self.trace.messages += load;
                self.trace.record(offset + round * scale, from, to, load.div_ceil(scale));
                if inbox[to].is_empty() {
                    has_mail.push(to);
                }
                for (src, msg) in q.drain(..take) {
                    inbox[to].push(Incoming { from: src, edge: dir / 2, msg });
                }
                if q.is_empty() {
                    is_touched[dir] = false;
                } else {
                    still.push(dir);
                }
            }
            touched = still;
            if let Some((from, to, load)) = failed {
                let at = offset + round * scale;
                self.trace.failure = Some(Failure { round: at, from, to });
                break Err(SimError::CapacityExceeded { round: at, from, to, load, capacity: budget });
            }

            let next = if !has_mail.is_empty() || !touched.is_empty() {
                Some(round + 1)
            } else {
                wakeups.keys().next().copied()
            };
            let Some(next) = next else { break Ok(()) };
            if next > self.config.max_rounds {
                break Err(SimError::MaxRoundsExceeded { limit: self.config.max_rounds });
            }
            round = next;
            let mut set = std::mem::take(&mut has_mail);
            if let Some(w) = wakeups.remove(&round) {
                set.extend(w);
            }
            set.sort_unstable();
            set.dedup();
            for &u in &set {
                inbox[u].sort_by_key(|m| m.from);
            }
            stepping = set;
        };

        let rounds = last.max(if result.is_err() { round } else { 0 }) * scale;
        self.trace.phases.push(Phase { label: label.into(), start: offset, rounds, simulated: true });
        self.trace.total_rounds += rounds;
        result.map(|()| programs)
    }
}

/// One-shot simulation with a fresh trace.
pub fn run_simulation<P: NodeProgram>(
    g: &WeightedGraph,
    programs: Vec<P>,
    config: SimConfig,
) -> Result<(Vec<P>, SimTrace), SimError> {
    let mut sim = Simulator::new(config);
    let out = sim.run(g, programs, "run")?;
    Ok((out, sim.into_trace()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BfsTree {
    pub root: NodeId,
    pub parent: Vec<Option<NodeId>>,
    pub children: Vec<Vec<NodeId>>,
    pub hops: Vec<u64>,
    pub depth: u64,
}

#[derive(Debug, Clone, Copy)]
pub enum BfsMsg {
    Explore(u64),
    Child,
}

impl Payload for BfsMsg {}

struct BfsNode {
    root: bool,
    parent: Option<NodeId>,
    hop: u64,
    children: Vec<NodeId>,
}

impl NodeProgram for BfsNode {
    type Msg = BfsMsg;

    fn step(&mut self, ctx: &mut Ctx<'_, BfsMsg>, inbox: &[Incoming<BfsMsg>]) {
        if ctx.round() == 0 && self.root {
            self.hop = 0;
            ctx.broadcast(BfsMsg::Explore(0));
            return;
        }
        for m in inbox {
            if let BfsMsg::Child = m.msg {
                self.children.push(m.from);
            }
        }
        if self.hop != INF {
            return;
        }
        // Inbox is sorted by sender, so the first explorer has the smallest id.
        if let Some((from, d)) = inbox.iter().find_map(|m| match m.msg {
            BfsMsg::Explore(d) => Some((m.from, d)),
            _ => None,
        }) {
            self.parent = Some(from);
            self.hop = d + 1;
            let nbrs: Vec<NodeId> = ctx.neighbors().iter().map(|a| a.to).collect();
            for v in nbrs {
                ctx.send(v, if v == from { BfsMsg::Child } else { BfsMsg::Explore(self.hop) });
            }
        }
    }
}

/// Distributed BFS from `root`; rounds are charged to `sim`.
pub fn build_bfs_tree(sim: &mut Simulator, g: &WeightedGraph, root: NodeId) -> Result<BfsTree, SimError> {
    let programs = (0..g.n())
        .map(|u| BfsNode { root: u == root, parent: None, hop: INF, children: Vec::new() })
        .collect();
    let done = sim.run(g, programs, "bfs-tree")?;
    if done.iter().any(|p| p.hop == INF) {
        return Err(SimError::Disconnected);
    }
    let hops: Vec<u64> = done.iter().map(|p| p.hop).collect();
    Ok(BfsTree {
        root,
        depth: hops.iter().copied().max().unwrap_or(0),
        parent: done.iter().map(|p| p.parent).collect(),
        children: done.into_iter().map(|mut p| {
            p.children.sort_unstable();
            p.children
        }).collect(),
        hops,
    })
}

#[derive(Debug, Clone)]
pub enum TreeMsg<P> {
    Up(NodeId, P),
    Down(NodeId, P),
}

impl<P: Payload> Payload for TreeMsg<P> {
    fn words(&self) -> usize {
        match self {
            TreeMsg::Up(_, p) | TreeMsg::Down(_, p) => p.words() + 1,
        }
    }
}

struct BroadcastNode<P> {
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    own: Vec<P>,
    up: VecDeque<(NodeId, P)>,
    down: VecDeque<(NodeId, P)>,
    received: Vec<(NodeId, P)>,
}

impl<P: Payload> NodeProgram for BroadcastNode<P> {
    type Msg = TreeMsg<P>;

    fn step(&mut self, ctx: &mut Ctx<'_, TreeMsg<P>>, inbox: &[Incoming<TreeMsg<P>>]) {
        let me = ctx.node();
        for p in self.own.drain(..) {
            match self.parent {
                None => {
                    self.received.push((me, p.clone()));
                    self.down.push_back((me, p));
                }
                Some(_) => self.up.push_back((me, p)),
            }
        }
        for m in inbox {
            match &m.msg {
                TreeMsg::Up(o, p) if self.parent.is_none() => {
                    self.received.push((*o, p.clone()));
                    self.down.push_back((*o, p.clone()));
                }
                TreeMsg::Up(o, p) => self.up.push_back((*o, p.clone())),
                TreeMsg::Down(o, p) => {
                    self.received.push((*o, p.clone()));
                    for &c in &self.children {
                        ctx.send(c, TreeMsg::Down(*o, p.clone()));
                    }
                }
            }
        }
        if let Some(parent) = self.parent {
            if let Some((o, p)) = self.up.pop_front() {
                ctx.send(parent, TreeMsg::Up(o, p));
            }
        } else if let Some((o, p)) = self.down.pop_front() {
            for &c in &self.children {
                ctx.send(c, TreeMsg::Down(o, p.clone()));
            }
        }
        if !self.up.is_empty() || !self.down.is_empty() {
            ctx.wake_at(ctx.round() + 1);
        }
    }
}

#[derive(Debug, Clone)]
pub struct BroadcastOutcome<P> {
    pub rounds: u64,
    /// What each node ended up holding, as (origin, payload).
    pub received: Vec<Vec<(NodeId, P)>>,
}

/// Pipelined up-cast to the root followed by a down-cast, one item per
/// edge per round in each direction.
pub fn broadcast_all<P: Payload>(
    sim: &mut Simulator,
    g: &WeightedGraph,
    tree: &BfsTree,
    items: &[(NodeId, P)],
) -> Result<BroadcastOutcome<P>, SimError> {
    let mut own: Vec<Vec<P>> = vec![Vec::new(); g.n()];
    for (o, p) in items {
        own[*o].push(p.clone());
    }
    let programs = own
        .into_iter()
        .enumerate()
        .map(|(u, own)| BroadcastNode {
            parent: tree.parent[u],
            children: tree.children[u].clone(),
            own,
            up: VecDeque::new(),
            down: VecDeque::new(),
            received: Vec::new(),
        })
        .collect();
    let before = sim.rounds();
    let done = sim.run(g, programs, "broadcast")?;
    Ok(BroadcastOutcome { rounds: sim.rounds() - before, received: done.into_iter().map(|p| p.received).collect() })
}

struct AggregateNode<T> {
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    waiting: usize,
    acc: T,
    combine: fn(T, T) -> T,
    result: Option<T>,
}

impl<T: Payload> NodeProgram for AggregateNode<T> {
    type Msg = TreeMsg<T>;

    fn step(&mut self, ctx: &mut Ctx<'_, TreeMsg<T>>, inbox: &[Incoming<TreeMsg<T>>]) {
        for m in inbox {
            match &m.msg {
                TreeMsg::Up(_, v) => {
                    self.acc = (self.combine)(self.acc.clone(), v.clone());
                    self.waiting -= 1;
                }
                TreeMsg::Down(_, v) => {
                    self.result = Some(v.clone());
                    for &c in &self.children {
                        ctx.send(c, TreeMsg::Down(0, v.clone()));
                    }
                }
            }
        }
        let up_done = inbox.iter().any(|m| matches!(m.msg, TreeMsg::Up(..))) || ctx.round() == 0;
        if self.waiting == 0 && up_done && self.result.is_none() {
            match self.parent {
                Some(p) => ctx.send(p, TreeMsg::Up(ctx.node(), self.acc.clone())),
                None => {
                    self.result = Some(self.acc.clone());
                    for &c in &self.children {
                        ctx.send(c, TreeMsg::Down(0, self.acc.clone()));
                    }
                }
            }
        }
    }
}

/// Convergecast of `values` with `combine`, then the result is sent back
/// down so every node knows it.
pub fn aggregate<T: Payload>(
    sim: &mut Simulator,
    g: &WeightedGraph,
    tree: &BfsTree,
    values: Vec<T>,
    combine: fn(T, T) -> T,
) -> Result<T, SimError> {
    let programs = values
        .into_iter()
        .enumerate()
        .map(|(u, acc)| AggregateNode {
            parent: tree.parent[u],
            children: tree.children[u].clone(),
            waiting: tree.children[u].len(),
            acc,
            combine,
            result: None,
        })
        .collect();
    let done = sim.run(g, programs, "aggregate")?;
    Ok(done[tree.root].result.clone().expect("root holds the aggregate"))
}

struct ExchangeNode<P> {
    items: Vec<P>,
    received: Vec<(NodeId, P)>,
}

impl<P: Payload> NodeProgram for ExchangeNode<P> {
    type Msg = P;

    fn step(&mut self, ctx: &mut Ctx<'_, P>, inbox: &[Incoming<P>]) {
        self.received.extend(inbox.iter().map(|m| (m.from, m.msg.clone())));
        let r = ctx.round() as usize;
        if let Some(p) = self.items.get(r) {
            ctx.broadcast(p.clone());
            if r + 1 < self.items.len() {
                ctx.wake_at(ctx.round() + 1);
            }
        }
    }
}

/// Every node sends its own list to all neighbors, one item per round.
/// Returns what each node heard, as (neighbor, item).
pub fn neighbor_exchange<P: Payload>(
    sim: &mut Simulator,
    g: &WeightedGraph,
    items: Vec<Vec<P>>,
    label: &str,
) -> Result<Vec<Vec<(NodeId, P)>>, SimError> {
    let programs = items.into_iter().map(|items| ExchangeNode { items, received: Vec::new() }).collect();
    Ok(sim.run(g, programs, label)?.into_iter().map(|p| p.received).collect())
}

struct DirectNode<P> {
    outgoing: Vec<(NodeId, P)>,
    received: Vec<(NodeId, P)>,
}

impl<P: Payload> NodeProgram for DirectNode<P> {
    type Msg = P;

    fn step(&mut self, ctx: &mut Ctx<'_, P>, inbox: &[Incoming<P>]) {
        self.received.extend(inbox.iter().map(|m| (m.from, m.msg.clone())));
        for (to, p) in self.outgoing.drain(..) {
            ctx.send(to, p);
        }
    }
}

/// One round in which every node sends its own message to each listed
/// neighbor (at most one per neighbor).
pub fn direct_send<P: Payload>(
    sim: &mut Simulator,
    g: &WeightedGraph,
    outgoing: Vec<Vec<(NodeId, P)>>,
    label: &str,
) -> Result<Vec<Vec<(NodeId, P)>>, SimError> {
    let programs = outgoing.into_iter().map(|outgoing| DirectNode { outgoing, received: Vec::new() }).collect();
    Ok(sim.run(g, programs, label)?.into_iter().map(|p| p.received).collect())
}

struct BellmanFordNode {
    dist: u64,
    weights: Arc<Vec<u64>>,
    rounds: u64,
    changed: bool,
}

impl NodeProgram for BellmanFordNode {
    type Msg = u64;

    fn step(&mut self, ctx: &mut Ctx<'_, u64>, inbox: &[Incoming<u64>]) {
        for m in inbox {
            let cand = m.msg.saturating_add(self.weights[m.edge]);
            if cand < self.dist {
                self.dist = cand;
                self.changed = true;
            }
        }
        if ctx.round() == 0 && self.rounds > 0 {
            ctx.wake_at(self.rounds);
        }
        if self.changed && ctx.round() < self.rounds {
            ctx.broadcast(self.dist);
        }
        self.changed = false;
    }
}

/// Synchronous Bellman-Ford for a fixed number of relaxation rounds; nodes
/// send only when their value changed. The run lasts exactly `rounds`
/// rounds since nodes cannot tell when values have settled.
pub fn bellman_ford(
    sim: &mut Simulator,
    g: &WeightedGraph,
    weights: &[u64],
    source: NodeId,
    rounds: u64,
) -> Result<Vec<u64>, SimError> {
    let weights = Arc::new(weights.to_vec());
    let programs = (0..g.n())
        .map(|u| BellmanFordNode {
            dist: if u == source { 0 } else { INF },
            weights: Arc::clone(&weights),
            rounds,
            changed: u == source,
        })
        .collect();
    Ok(sim.run(g, programs, "bellman-ford")?.into_iter().map(|p| p.dist).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::bfs_hops;

    struct Idle;
    impl NodeProgram for Idle {
        type Msg = u64;
        fn step(&mut self, _: &mut Ctx<'_, u64>, _: &[Incoming<u64>]) {}
    }

    #[derive(Debug)]
    struct Flood {
        source: bool,
        first: Option<u64>,
    }
    impl NodeProgram for Flood {
        type Msg = u64;
        fn step(&mut self, ctx: &mut Ctx<'_, u64>, inbox: &[Incoming<u64>]) {
            if self.first.is_none() && (self.source || !inbox.is_empty()) {
                self.first = Some(ctx.round());
                ctx.broadcast(0);
            }
        }
    }

    /// Forwards every payload it hears to all neighbors, once per payload.
    struct Echo {
        start: bool,
        seen: Vec<u64>,
    }
    impl NodeProgram for Echo {
        type Msg = u64;
        fn step(&mut self, ctx: &mut Ctx<'_, u64>, inbox: &[Incoming<u64>]) {
            if self.start && ctx.round() == 0 {
                self.seen.push(7);
                ctx.broadcast(7);
            }
            for m in inbox {
                if !self.seen.contains(&m.msg) {
                    self.seen.push(m.msg);
                    ctx.broadcast(m.msg);
                }
            }
        }
    }

    fn path(n: usize) -> WeightedGraph {
        WeightedGraph::from_edges(n, &(0..n - 1).map(|i| (i, i + 1, 1)).collect::<Vec<_>>()).unwrap()
    }

    fn recording() -> SimConfig {
        SimConfig { record_loads: true, ..SimConfig::default() }
    }

    #[test]
    fn idle_programs_take_no_rounds() {
        let (_, t) = run_simulation(&path(3), vec![Idle, Idle, Idle], SimConfig::default()).unwrap();
        assert_eq!((t.total_rounds, t.max_edge_load), (0, 0));
    }

    #[test]
    fn flood_reaches_end_of_path_at_hop_count() {
        let progs = (0..4).map(|u| Flood { source: u == 0, first: None }).collect();
        let (out, _) = run_simulation(&path(4), progs, SimConfig::default()).unwrap();
        assert_eq!(out[3].first, Some(3));
    }

    #[test]
    fn echo_on_triangle_matches_hand_schedule() {
        let g = WeightedGraph::from_edges(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]).unwrap();
        let progs = (0..3).map(|u| Echo { start: u == 0, seen: vec![] }).collect();
        let (_, t) = run_simulation(&g, progs, recording()).unwrap();
        // Round 0: 0 sends to 1 and 2. Round 1: 1 and 2 each forward to both neighbors.
        let want: BTreeMap<(u64, NodeId, NodeId), u64> =
            [((0, 0, 1), 1), ((0, 0, 2), 1), ((1, 1, 0), 1), ((1, 1, 2), 1), ((1, 2, 0), 1), ((1, 2, 1), 1)].into();
        assert_eq!(t.per_round_edge_load.unwrap(), want);
        assert_eq!(t.total_rounds, 2);
        assert_eq!(t.messages, 6);
    }

    #[derive(Debug)]
    struct Burst(u64);
    impl NodeProgram for Burst {
        type Msg = u64;
        fn step(&mut self, ctx: &mut Ctx<'_, u64>, inbox: &[Incoming<u64>]) {
            if ctx.round() == 0 && ctx.node() == 0 {
                for i in 0..self.0 {
                    ctx.send(1, i);
                }
            }
            self.0 += inbox.len() as u64 * 100;
        }
    }

    #[test]
    fn capacity_policies() {
        let g = path(2);
        let mut cfg = SimConfig { policy: CapacityPolicy::FailFast, ..SimConfig::default() };
        let err = run_simulation(&g, vec![Burst(3), Burst(0)], cfg.clone()).unwrap_err();
        assert!(matches!(err, SimError::CapacityExceeded { round: 0, from: 0, to: 1, load: 3, .. }));
        cfg.policy = CapacityPolicy::Queue;
        let (_, t) = run_simulation(&g, vec![Burst(3), Burst(0)], cfg).unwrap();
        assert_eq!((t.total_rounds, t.max_edge_load), (3, 1));
        let (_, t) = run_simulation(&g, vec![Burst(3), Burst(0)], SimConfig::default()).unwrap();
        assert_eq!((t.total_rounds, t.max_edge_load), (1, 3));
    }

    #[test]
    fn max_rounds_cutoff() {
        let cfg = SimConfig { max_rounds: 2, ..SimConfig::default() };
        let progs = (0..5).map(|u| Flood { source: u == 0, first: None }).collect();
        assert_eq!(run_simulation(&path(5), progs, cfg).unwrap_err(), SimError::MaxRoundsExceeded { limit: 2 });
    }

    #[test]
    fn bfs_tree_examples() {
        let star = WeightedGraph::from_edges(5, &[(0, 1, 3), (0, 2, 1), (0, 3, 1), (0, 4, 9)]).unwrap();
        let mut sim = Simulator::seeded(1);
        let t = build_bfs_tree(&mut sim, &star, 0).unwrap();
        assert_eq!(t.depth, 1);
        assert!(t.parent[1..].iter().all(|&p| p == Some(0)));
        assert_eq!(t.children[0], vec![1, 2, 3, 4]);
        let t = build_bfs_tree(&mut sim, &path(4), 0).unwrap();
        assert_eq!(t.hops, vec![0, 1, 2, 3]);
        let split = WeightedGraph::from_edges(3, &[(0, 1, 1)]).unwrap();
        assert_eq!(build_bfs_tree(&mut sim, &split, 0).unwrap_err(), SimError::Disconnected);
    }

    #[test]
    fn broadcast_examples() {
        let mut sim = Simulator::seeded(1);
        let g = path(6);
        let tree = build_bfs_tree(&mut sim, &g, 0).unwrap();
        let out = broadcast_all::<u64>(&mut sim, &g, &tree, &[]).unwrap();
        assert_eq!(out.rounds, 0);
        let tree_mid = build_bfs_tree(&mut sim, &g, 5).unwrap();
        let out = broadcast_all(&mut sim, &g, &tree_mid, &[(0, 42u64)]).unwrap();
        assert!(out.rounds <= 2 * tree_mid.depth);
        assert!(out.received.iter().all(|r| r == &vec![(0, 42)]));

        let star = WeightedGraph::from_edges(5, &[(0, 1, 1), (0, 2, 1), (0, 3, 1), (0, 4, 1)]).unwrap();
        let tree = build_bfs_tree(&mut sim, &star, 0).unwrap();
        let items: Vec<(NodeId, u64)> = (0..7).map(|i| (i % 5, i as u64)).collect();
        let out = broadcast_all(&mut sim, &star, &tree, &items).unwrap();
        assert!(out.rounds <= items.len() as u64 + 2, "{}", out.rounds);
        for r in &out.received {
            let mut got: Vec<u64> = r.iter().map(|x| x.1).collect();
            got.sort_unstable();
            assert_eq!(got, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn aggregate_and_bellman_ford() {
        let g = WeightedGraph::from_edges(4, &[(0, 1, 5), (1, 2, 1), (2, 3, 1), (0, 3, 1)]).unwrap();
        let mut sim = Simulator::seeded(3);
        let tree = build_bfs_tree(&mut sim, &g, 0).unwrap();
        let max = aggregate(&mut sim, &g, &tree, vec![4u64, 9, 2, 7], |a, b| a.max(b)).unwrap();
        assert_eq!(max, 9);
        let w: Vec<u64> = g.edges().iter().map(|e| e.w).collect();
        let before = sim.rounds();
        assert_eq!(bellman_ford(&mut sim, &g, &w, 0, 3).unwrap(), vec![0, 3, 2, 1]);
        assert_eq!(sim.rounds() - before, 3);
    }

    #[test]
    fn traces_are_reproducible() {
        let g = WeightedGraph::from_edges(5, &[(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 4, 1), (0, 4, 1), (1, 3, 1)]).unwrap();
        let run = || {
            let progs = (0..5).map(|u| Echo { start: u % 2 == 0, seen: vec![] }).collect();
            run_simulation(&g, progs, recording()).unwrap().1
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn node_streams_are_independent_of_order() {
        use rand::Rng;
        let sim = Simulator::seeded(9);
        let a: u64 = sim.node_rng(1, 3).gen();
        let _: u64 = sim.node_rng(1, 2).gen();
        let b: u64 = sim.node_rng(1, 3).gen();
        assert_eq!(a, b);
        assert_ne!(a, sim.node_rng(2, 3).gen::<u64>());
    }

    proptest::proptest! {
        #[test]
        fn bfs_hops_match_unit_oracle(seed in 0u64..500, n in 2usize..30) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = WeightedGraph::new(n);
            for v in 1..n {
                g.add_edge(rng.gen_range(0..v), v, rng.gen_range(1..9)).unwrap();
            }
            for _ in 0..n {
                let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
                let _ = g.add_edge(a, b, 1);
            }
            let mut sim = Simulator::seeded(seed);
            let root = rng.gen_range(0..n);
            let t = build_bfs_tree(&mut sim, &g, root).unwrap();
            proptest::prop_assert_eq!(&t.hops, &bfs_hops(&g, root));
            let items: Vec<(NodeId, u64)> = (0..rng.gen_range(0..20)).map(|i| (rng.gen_range(0..n), i)).collect();
            let out = broadcast_all(&mut sim, &g, &t, &items).unwrap();
            proptest::prop_assert!(out.rounds <= 2 * t.depth + items.len() as u64);
            for r in &out.received {
                proptest::prop_assert_eq!(r.len(), items.len());
            }
        }
    }
}
