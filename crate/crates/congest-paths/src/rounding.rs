//! Approximate bounded-hop shortest paths by rounding weights at geometric
//! distance scales, the unit-step bounded-distance routine they run on, and
//! the random-delay scheduler for many sources at once.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_traits::{One, Zero};
use rand::Rng;
use thiserror::Error;

use crate::graph::{log2_ceil, DistanceTable, Frac, NodeId, WeightedGraph, INF};
use crate::sim::{broadcast_all, build_bfs_tree, BfsTree, Ctx, Incoming, NodeProgram, Payload, SimError, Simulator};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RoundingError {
    #[error("eps must lie in (0, 1], got {0}")]
    InvalidEps(Frac),
    #[error("hop bound must be at least 1")]
    InvalidHops,
    #[error("at least one source is required")]
    NoSources,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// 1 / max(2, ceil(log2 n)).
pub fn default_eps(n: usize) -> Frac {
    Frac::new(1, log2_ceil(n as u64).max(2) as i128)
}

pub fn check_eps(eps: Frac) -> Result<(), RoundingError> {
    if eps <= Frac::zero() || eps > Frac::one() {
        return Err(RoundingError::InvalidEps(eps));
    }
    Ok(())
}

/// Rounded weight functions for every distance scale 2^i.
#[derive(Debug, Clone)]
pub struct ScaleFamily {
    pub eps: Frac,
    pub h: u64,
    /// Distance cap: ceil((1 + 2/eps) * h).
    pub cap: u64,
    pub scales: Vec<u32>,
    weights: Vec<Arc<Vec<u64>>>,
}

impl ScaleFamily {
    pub fn new(g: &WeightedGraph, h: u64, eps: Frac) -> Result<Self, RoundingError> {
        check_eps(eps)?;
        if h == 0 {
            return Err(RoundingError::InvalidHops);
        }
        let top = log2_ceil(h.saturating_mul(g.max_weight()));
        let mut fam = ScaleFamily { eps, h, cap: distance_cap(h, eps), scales: (0..=top).collect(), weights: Vec::new() };
        fam.weights = fam
            .scales
            .iter()
            .map(|&i| Arc::new(g.edges().iter().map(|e| fam.rounded_weight(e.w, i)).collect()))
            .collect();
        Ok(fam)
    }

    /// ceil(2h * w / (eps * 2^i)).
    pub fn rounded_weight(&self, w: u64, i: u32) -> u64 {
        let (p, q) = (*self.eps.numer() as u128, *self.eps.denom() as u128);
        let num = 2 * self.h as u128 * w as u128 * q;
        num.div_ceil(p << i) as u64
    }

    pub fn weights(&self, scale_idx: usize) -> &[u64] {
        &self.weights[scale_idx]
    }

    /// Scaled back estimate: (eps * 2^i / 2h) * len.
    pub fn estimate(&self, i: u32, len: u64) -> Frac {
        let (p, q) = (*self.eps.numer(), *self.eps.denom());
        Frac::new(p * (1i128 << i) * len as i128, q * 2 * self.h as i128)
    }

    /// Minimum over scales whose clipped run reached the node.
    pub fn combine(&self, per_scale: &[u64]) -> Option<Frac> {
        per_scale
            .iter()
            .zip(&self.scales)
            .filter(|(&d, _)| d != INF)
            .map(|(&d, &i)| self.estimate(i, d))
            .min()
    }
}

/// ceil((1 + 2/eps) * x).
pub fn distance_cap(x: u64, eps: Frac) -> u64 {
    let (p, q) = (*eps.numer() as u128, *eps.denom() as u128);
    x + (2 * x as u128 * q).div_ceil(p) as u64
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Window {
    pub source: NodeId,
    pub start: u64,
    pub weights: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Hop {
    pub window: u32,
    pub len: u64,
}

impl Payload for Hop {
    // Source id, scale index and length.
    fn words(&self) -> usize {
        3
    }
}

struct BoundedNode {
    windows: Arc<Vec<Window>>,
    weights: Arc<Vec<Arc<Vec<u64>>>>,
    cap: u64,
    own: Vec<u32>,
    dist: HashMap<u32, (u64, bool)>,
    agenda: BTreeMap<u64, Vec<u32>>,
    broadcasts: HashMap<NodeId, u64>,
}

impl BoundedNode {
    fn schedule(&mut self, ctx: &mut Ctx<'_, Hop>, win: u32, at: u64) {
        self.agenda.entry(at).or_default().push(win);
        if at > ctx.round() {
            ctx.wake_at(at);
        }
    }
}

impl NodeProgram for BoundedNode {
    type Msg = Hop;

    fn step(&mut self, ctx: &mut Ctx<'_, Hop>, inbox: &[Incoming<Hop>]) {
        if ctx.round() == 0 {
            for win in std::mem::take(&mut self.own) {
                self.dist.insert(win, (0, false));
                let at = self.windows[win as usize].start;
                self.schedule(ctx, win, at);
            }
        }
        for m in inbox {
            let win = self.windows[m.msg.window as usize];
            let cand = m.msg.len + self.weights[win.weights][m.edge];
            let cur = self.dist.get(&m.msg.window).map_or(INF, |d| d.0);
            if cand <= self.cap && cand < cur {
                self.dist.insert(m.msg.window, (cand, false));
                self.schedule(ctx, m.msg.window, win.start + cand);
            }
        }
        if let Some(due) = self.agenda.remove(&ctx.round()) {
            for win in due {
                let w = self.windows[win as usize];
                let entry = self.dist.get_mut(&win).expect("scheduled windows have a distance");
                if !entry.1 && w.start + entry.0 == ctx.round() {
                    entry.1 = true;
                    *self.broadcasts.entry(w.source).or_default() += 1;
                    ctx.broadcast(Hop { window: win, len: entry.0 });
                }
            }
        }
    }
}

pub(crate) struct WindowRun {
    /// dist[window][node], INF beyond the cap.
    pub dist: Vec<Vec<u64>>,
    /// Most broadcasts any node made on behalf of one source.
    pub max_broadcasts: u64,
}

/// Runs every window as an independent bounded-distance SSSP inside one
/// simulation. Window j's source starts broadcasting at `start`; a node at
/// distance d broadcasts once, at round start + d.
pub(crate) fn run_windows(
    sim: &mut Simulator,
    g: &WeightedGraph,
    windows: Vec<Window>,
    weights: Vec<Arc<Vec<u64>>>,
    cap: u64,
    label: &str,
) -> Result<WindowRun, SimError> {
    let mut own = vec![Vec::new(); g.n()];
    for (j, w) in windows.iter().enumerate() {
        own[w.source].push(j as u32);
    }
    let windows = Arc::new(windows);
    let weights = Arc::new(weights);
    let programs = own
        .into_iter()
        .map(|own| BoundedNode {
            windows: Arc::clone(&windows),
            weights: Arc::clone(&weights),
            cap,
            own,
            dist: HashMap::new(),
            agenda: BTreeMap::new(),
            broadcasts: HashMap::new(),
        })
        .collect();
    let done = sim.run(g, programs, label)?;
    let mut dist = vec![vec![INF; g.n()]; windows.len()];
    let mut max_broadcasts = 0;
    for (u, p) in done.iter().enumerate() {
        for (&win, &(d, _)) in &p.dist {
            dist[win as usize][u] = d;
        }
        max_broadcasts = max_broadcasts.max(p.broadcasts.values().copied().max().unwrap_or(0));
    }
    Ok(WindowRun { dist, max_broadcasts })
}

/// Exact distances from `source` where they are at most `cap`, else INF.
pub fn bounded_distance_sssp(
    sim: &mut Simulator,
    g: &WeightedGraph,
    source: NodeId,
    cap: u64,
) -> Result<DistanceTable, RoundingError> {
    let weights = vec![Arc::new(g.edges().iter().map(|e| e.w).collect())];
    let run = run_windows(sim, g, vec![Window { source, start: 0, weights: 0 }], weights, cap, "bounded-distance")?;
    Ok(DistanceTable::single(source, run.dist.into_iter().next().expect("one window")))
}

#[derive(Debug, Clone)]
pub struct ApproxRun {
    pub table: DistanceTable<Option<Frac>>,
    pub family: ScaleFamily,
    /// Start offsets drawn per source (all zero for a single standalone run).
    pub delays: Vec<u64>,
    /// Most broadcasts any node made for a single source.
    pub max_broadcasts: u64,
}

/// (1+eps)-approximate h-hop distances from one source. Scales run one
/// after another in windows of cap+1 rounds.
pub fn bounded_hop_sssp(
    sim: &mut Simulator,
    g: &WeightedGraph,
    source: NodeId,
    h: u64,
    eps: Frac,
) -> Result<ApproxRun, RoundingError> {
    let family = ScaleFamily::new(g, h, eps)?;
    scheduled(sim, g, &[source], family, &[0])
}

/// Delay range used by the multi-source scheduler: ceil(k * log2 n).
pub fn delay_range(k: usize, n: usize) -> u64 {
    (k as u64) * log2_ceil(n as u64) as u64
}

/// Draws a start delay for every source from its own random stream and
/// makes the delays globally known over the BFS tree.
pub(crate) fn draw_delays(
    sim: &mut Simulator,
    g: &WeightedGraph,
    tree: &BfsTree,
    sources: &[NodeId],
    range: u64,
) -> Result<Vec<u64>, SimError> {
    let draw = sim.next_draw();
    let delays: Vec<u64> = sources.iter().map(|&s| sim.node_rng(draw, s).gen_range(0..=range)).collect();
    let items: Vec<(NodeId, u64)> = sources.iter().zip(&delays).map(|(&s, &r)| (s, r)).collect();
    broadcast_all(sim, g, tree, &items)?;
    Ok(delays)
}

/// Runs bounded_hop_sssp from every source in parallel, each shifted by a
/// random delay in {0..=ceil(k log2 n)}. Values do not depend on the delays.
pub fn multi_source_bounded_hop(
    sim: &mut Simulator,
    g: &WeightedGraph,
    sources: &[NodeId],
    h: u64,
    eps: Frac,
) -> Result<ApproxRun, RoundingError> {
    let tree = build_bfs_tree(sim, g, 0)?;
    multi_source_on_tree(sim, g, &tree, sources, h, eps)
}

pub fn multi_source_on_tree(
    sim: &mut Simulator,
    g: &WeightedGraph,
    tree: &BfsTree,
    sources: &[NodeId],
    h: u64,
    eps: Frac,
) -> Result<ApproxRun, RoundingError> {
    if sources.is_empty() {
        return Err(RoundingError::NoSources);
    }
    let family = ScaleFamily::new(g, h, eps)?;
    let delays = draw_delays(sim, g, tree, sources, delay_range(sources.len(), g.n()))?;
    scheduled(sim, g, sources, family, &delays)
}

fn scheduled(
    sim: &mut Simulator,
    g: &WeightedGraph,
    sources: &[NodeId],
    family: ScaleFamily,
    delays: &[u64],
) -> Result<ApproxRun, RoundingError> {
    let scales = family.scales.len();
    let windows = sources
        .iter()
        .zip(delays)
        .flat_map(|(&source, &r)| {
            (0..scales).map(move |j| Window { source, start: r + j as u64 * (family.cap + 1), weights: j })
        })
        .collect();
    let run = run_windows(sim, g, windows, family.weights.clone(), family.cap, "bounded-hop")?;
    let rows = (0..sources.len())
        .map(|k| {
            (0..g.n())
                .map(|u| {
                    let per_scale: Vec<u64> = (0..scales).map(|j| run.dist[k * scales + j][u]).collect();
                    family.combine(&per_scale)
                })
                .collect()
        })
        .collect();
    Ok(ApproxRun {
        table: DistanceTable { sources: sources.to_vec(), rows },
        family,
        delays: delays.to_vec(),
        max_broadcasts: run.max_broadcasts,
    })
}
