//! Sublinear-round approximate SSSP through a random landmark overlay.
//!
//! Landmarks learn approximate bounded-hop distances to each other, the
//! overlay is shortcut so few overlay hops suffice, an overlay SSSP is run
//! by simulating every overlay round with a global broadcast, and each node
//! finally combines its landmark distances with the overlay answer.

use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{dijkstra, DistanceTable, Frac, NodeId, WeightedGraph, INF};
use crate::rounding::{check_eps, multi_source_on_tree, RoundingError, ScaleFamily};
use crate::shortcuts::{shortcuts_from_union, with_shortcuts};
use crate::sim::{broadcast_all, build_bfs_tree, BfsTree, Payload, SimError, Simulator};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OverlayError {
    #[error("alpha must lie in (0, n], got {alpha} for n = {n}")]
    InvalidAlpha { alpha: u64, n: usize },
    #[error("source {0} is not an overlay member")]
    SourceNotMember(NodeId),
    #[error("landmark set is empty")]
    NoLandmarks,
    #[error(transparent)]
    Rounding(#[from] RoundingError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl Payload for Frac {
    fn words(&self) -> usize {
        2
    }
}

impl Payload for (u64, u64, u64) {
    fn words(&self) -> usize {
        3
    }
}

/// Every node joins independently with probability alpha/n; the source
/// always joins. Node u uses random stream u of `seed`.
pub fn sample_landmarks(n: usize, alpha: u64, source: NodeId, seed: u64) -> Result<Vec<NodeId>, OverlayError> {
    if alpha == 0 || alpha as usize > n {
        return Err(OverlayError::InvalidAlpha { alpha, n });
    }
    Ok((0..n)
        .filter(|&u| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u as u64);
            u == source || rng.gen_range(0..n as u64) < alpha
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlayParams {
    pub alpha: u64,
    pub beta: u64,
    /// Hop bound for landmark-to-landmark distances.
    pub h: u64,
}

/// alpha = max(1, ceil(sqrt n / hopdiam^(1/4) * log2 n)) capped at n,
/// beta = min(alpha, ceil(sqrt hopdiam)), h = ceil(n log2 n / alpha) in [1, n].
pub fn overlay_params(n: usize, hopdiam: u64) -> OverlayParams {
    let nf = n as f64;
    let log = nf.log2().max(1.0);
    let hd = (hopdiam.max(1)) as f64;
    let alpha = ((nf.sqrt() / hd.powf(0.25) * log).ceil() as u64).clamp(1, n.max(1) as u64);
    let beta = alpha.min(hd.sqrt().ceil() as u64);
    let h = ((nf * log / alpha as f64).ceil() as u64).clamp(1, n.max(1) as u64);
    OverlayParams { alpha, beta, h }
}

/// Landmarks joined by virtual edges. Virtual weights are stored as
/// integers in units of `unit` so the integer graph machinery applies.
#[derive(Debug, Clone)]
pub struct OverlayNetwork {
    pub members: Vec<NodeId>,
    pub h: u64,
    pub unit: Frac,
    /// Graph on member indices.
    pub graph: WeightedGraph,
    /// to_landmark[u][j]: estimate known at node u for its distance to members[j].
    pub to_landmark: Vec<Vec<Option<Frac>>>,
}

impl OverlayNetwork {
    pub fn index_of(&self, node: NodeId) -> Option<usize> {
        self.members.binary_search(&node).ok()
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<Frac> {
        self.graph.weight(a, b).map(|w| self.unit * Frac::from(w as i128))
    }

    /// Exact distances inside the overlay from member index `a`.
    pub fn distances_from(&self, a: usize) -> Vec<Option<Frac>> {
        dijkstra(&self.graph, a).rows[0]
            .iter()
            .map(|&d| (d != INF).then(|| self.unit * Frac::from(d as i128)))
            .collect()
    }
}

/// Runs the multi-source scheduler from the landmarks with hop bound `h`
/// and adds a virtual edge for every landmark pair with a finite estimate.
pub fn build_overlay(
    sim: &mut Simulator,
    g: &WeightedGraph,
    tree: &BfsTree,
    landmarks: &[NodeId],
    h: u64,
    eps: Frac,
) -> Result<OverlayNetwork, OverlayError> {
    if landmarks.is_empty() {
        return Err(OverlayError::NoLandmarks);
    }
    let mut members = landmarks.to_vec();
    members.sort_unstable();
    members.dedup();
    let run = multi_source_on_tree(sim, g, tree, &members, h, eps)?;
    let unit = Frac::new(1, 2 * h as i128 * *eps.denom());
    let mut graph = WeightedGraph::new(members.len());
    for a in 0..members.len() {
        for b in a + 1..members.len() {
            let est = [run.table.rows[a][members[b]], run.table.rows[b][members[a]]].into_iter().flatten().min();
            if let Some(est) = est {
                let w = est / unit;
                debug_assert!(w.is_integer());
                graph.add_edge(a, b, w.to_integer() as u64).expect("fresh overlay edge");
            }
        }
    }
    let to_landmark = (0..g.n()).map(|u| (0..members.len()).map(|j| run.table.rows[j][u]).collect()).collect();
    Ok(OverlayNetwork { members, h, unit, graph, to_landmark })
}

/// Every member announces its beta lightest virtual edges network-wide;
/// from that union each member derives the beta-nearest shortcuts locally.
pub fn reduce_overlay_spd(
    sim: &mut Simulator,
    g: &WeightedGraph,
    tree: &BfsTree,
    overlay: &OverlayNetwork,
    beta: u64,
) -> Result<OverlayNetwork, OverlayError> {
    let k = (beta.max(1) as usize).min(overlay.members.len().saturating_sub(1));
    if k == 0 {
        return Ok(overlay.clone());
    }
    let og = &overlay.graph;
    let items: Vec<(NodeId, (u64, u64, u64))> = (0..og.n())
        .flat_map(|a| {
            crate::shortcuts::k_smallest_edges(og, a, k)
                .into_iter()
                .map(move |e| (overlay.members[a], (a as u64, e.to as u64, e.w)))
        })
        .collect();
    let heard = broadcast_all(sim, g, tree, &items)?;
    let mut union = WeightedGraph::new(og.n());
    for &(_, (a, b, w)) in &heard.received[tree.root] {
        let _ = union.add_edge(a as usize, b as usize, w);
    }
    let set = shortcuts_from_union(&union, k);
    Ok(OverlayNetwork { graph: with_shortcuts(og, &set), ..overlay.clone() })
}

#[derive(Debug, Clone)]
pub struct OverlaySssp {
    /// Estimate per member index, in real distance units.
    pub estimates: Vec<Option<Frac>>,
    pub hops: u64,
    pub overlay_rounds: u64,
}

/// Bounded-hop SSSP on the overlay. Each overlay round is one global
/// broadcast of that round's messages over the BFS tree, preceded by a
/// count aggregation so nodes know how long the broadcast lasts.
pub fn sssp_on_overlay(
    sim: &mut Simulator,
    g: &WeightedGraph,
    tree: &BfsTree,
    overlay: &OverlayNetwork,
    source: NodeId,
    hops: u64,
    eps: Frac,
) -> Result<OverlaySssp, OverlayError> {
    let src = overlay.index_of(source).ok_or(OverlayError::SourceNotMember(source))?;
    let og = &overlay.graph;
    let hops = hops.max(1);
    let family = ScaleFamily::new(og, hops, eps)?;
    let count_cost = 2 * tree.depth;
    let mut per_scale = vec![vec![INF; og.n()]; family.scales.len()];
    let mut overlay_rounds = 0;
    for (j, dist) in per_scale.iter_mut().enumerate() {
        let w = family.weights(j);
        dist[src] = 0;
        let mut sent = vec![false; og.n()];
        let mut t = 0;
        while t <= family.cap {
            let speakers: Vec<usize> = (0..og.n()).filter(|&x| !sent[x] && dist[x] == t).collect();
            let items: Vec<(NodeId, (u64, u64))> =
                speakers.iter().map(|&x| (overlay.members[x], (j as u64, t))).collect();
            sim.charge_rounds(count_cost, "overlay-count");
            broadcast_all(sim, g, tree, &items)?;
            for &x in &speakers {
                sent[x] = true;
                for a in og.neighbors(x) {
                    let cand = t + w[a.edge];
                    if cand <= family.cap && cand < dist[a.to] {
                        dist[a.to] = cand;
                    }
                }
            }
            overlay_rounds += 1;
            // Overlay rounds with nobody due still pay for the count.
            let next = (0..og.n()).filter(|&x| !sent[x] && dist[x] != INF).map(|x| dist[x]).min();
            let next = next.unwrap_or(family.cap + 1).max(t + 1);
            let idle = next.min(family.cap + 1) - t - 1;
            sim.charge_rounds(idle * count_cost, "overlay-idle");
            overlay_rounds += idle;
            t = next;
        }
    }
    let estimates = (0..og.n())
        .map(|x| {
            let col: Vec<u64> = per_scale.iter().map(|d| d[x]).collect();
            family.combine(&col).map(|e| e * overlay.unit)
        })
        .collect();
    Ok(OverlaySssp { estimates, hops, overlay_rounds })
}

#[derive(Debug, Clone)]
pub struct SublinearRun {
    pub table: DistanceTable<Option<Frac>>,
    pub params: OverlayParams,
    pub landmarks: Vec<NodeId>,
    pub overlay_hops: u64,
    /// Set when some output exceeds (1+eps)^3 times the true distance. A
    /// diagnostic computed against the sequential oracle; it does not feed
    /// back into the output.
    pub hitting_failure: bool,
}

/// Full pipeline. `hopdiam` is the exact hop diameter, supplied by the caller.
pub fn sublinear_sssp(
    sim: &mut Simulator,
    g: &WeightedGraph,
    source: NodeId,
    eps: Frac,
    hopdiam: u64,
) -> Result<SublinearRun, OverlayError> {
    let params = overlay_params(g.n(), hopdiam);
    let draw = sim.next_draw();
    let seed = sim.config().seed ^ draw.wrapping_mul(0x5851_F42D_4C95_7F2D);
    let landmarks = sample_landmarks(g.n(), params.alpha, source, seed)?;
    sublinear_with_landmarks(sim, g, source, eps, params, landmarks)
}

pub fn sublinear_with_landmarks(
    sim: &mut Simulator,
    g: &WeightedGraph,
    source: NodeId,
    eps: Frac,
    params: OverlayParams,
    landmarks: Vec<NodeId>,
) -> Result<SublinearRun, OverlayError> {
    check_eps(eps)?;
    let tree = build_bfs_tree(sim, g, 0)?;
    let overlay = build_overlay(sim, g, &tree, &landmarks, params.h, eps)?;
    let beta = params.beta.min(overlay.members.len() as u64).max(1);
    let reduced = reduce_overlay_spd(sim, g, &tree, &overlay, beta)?;
    let hops = (4 * reduced.members.len() as u64).div_ceil(beta);
    let ov = sssp_on_overlay(sim, g, &tree, &reduced, source, hops, eps)?;

    let items: Vec<(NodeId, Frac)> = reduced
        .members
        .iter()
        .zip(&ov.estimates)
        .filter_map(|(&v, e)| e.map(|e| (v, e)))
        .collect();
    broadcast_all(sim, g, &tree, &items)?;

    let src = reduced.index_of(source).expect("source is a member");
    let row: Vec<Option<Frac>> = (0..g.n())
        .map(|u| {
            let direct = reduced.to_landmark[u][src];
            let via = reduced
                .to_landmark[u]
                .iter()
                .zip(&ov.estimates)
                .filter_map(|(a, b)| Some((*a)? + (*b)?))
                .min();
            [direct, via].into_iter().flatten().min()
        })
        .collect();
    let exact = &dijkstra(g, source).rows[0];
    let bound = (Frac::one() + eps).pow(3);
    let hitting_failure = row.iter().zip(exact).any(|(est, &d)| match est {
        Some(e) => *e > bound * Frac::from(d as i128),
        None => true,
    });
    Ok(SublinearRun {
        table: DistanceTable::single(source, row),
        params,
        landmarks: reduced.members.clone(),
        overlay_hops: hops,
        hitting_failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{apsp, hop_diameter, shortest_path_diameter};
    use crate::rounding::default_eps;

    fn random_graph(seed: u64, n: usize, extra: usize, wmax: u64) -> WeightedGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = WeightedGraph::new(n);
        for v in 1..n {
            g.add_edge(rng.gen_range(0..v), v, rng.gen_range(1..=wmax)).unwrap();
        }
        for _ in 0..extra {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let _ = g.add_edge(a, b, rng.gen_range(1..=wmax));
        }
        g
    }

    fn path(n: usize) -> WeightedGraph {
        WeightedGraph::from_edges(n, &(0..n - 1).map(|i| (i, i + 1, 1)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn landmark_sampling() {
        assert_eq!(sample_landmarks(10, 10, 3, 1).unwrap(), (0..10).collect::<Vec<_>>());
        for seed in 0..20 {
            assert!(sample_landmarks(50, 1, 17, seed).unwrap().contains(&17));
        }
        assert!(sample_landmarks(5, 0, 0, 0).is_err());
        assert!(sample_landmarks(5, 6, 0, 0).is_err());
    }

    #[test]
    fn landmark_count_statistics() {
        let n = 40;
        let sizes: Vec<f64> = (0..1000).map(|s| sample_landmarks(n, 20, 0, s).unwrap().len() as f64).collect();
        let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
        let expect = 1.0 + (n as f64 - 1.0) / 2.0;
        // Standard error of the mean of 1000 Binomial(39, 1/2) draws.
        let sigma = (39.0f64 * 0.25 / 1000.0).sqrt();
        assert!((mean - expect).abs() <= 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn overlay_on_all_nodes_approximates_apsp() {
        let g = random_graph(2, 14, 12, 20);
        let n = g.n();
        let eps = default_eps(n);
        let mut sim = Simulator::seeded(2);
        let tree = build_bfs_tree(&mut sim, &g, 0).unwrap();
        let all: Vec<NodeId> = (0..n).collect();
        let ov = build_overlay(&mut sim, &g, &tree, &all, n as u64, eps).unwrap();
        let exact = apsp(&g);
        for a in 0..n {
            for b in a + 1..n {
                let w = ov.weight(a, b).unwrap();
                let d = Frac::from(exact.rows[a][b] as i128);
                assert!(w >= d && w <= (Frac::one() + eps) * d);
            }
        }
    }

    #[test]
    fn endpoints_beyond_hop_bound_are_not_joined() {
        let g = path(8);
        let mut sim = Simulator::seeded(0);
        let tree = build_bfs_tree(&mut sim, &g, 0).unwrap();
        let ov = build_overlay(&mut sim, &g, &tree, &[0, 7], 3, Frac::new(1, 2)).unwrap();
        assert_eq!(ov.graph.m(), 0);
    }

    #[test]
    fn reduction_preserves_overlay_distances() {
        let g = path(16);
        let mut sim = Simulator::seeded(0);
        let tree = build_bfs_tree(&mut sim, &g, 0).unwrap();
        let all: Vec<NodeId> = (0..16).collect();
        let ov = build_overlay(&mut sim, &g, &tree, &all, 1, Frac::new(1, 4)).unwrap();
        assert_eq!(ov.graph.m(), 15);
        let red = reduce_overlay_spd(&mut sim, &g, &tree, &ov, 4).unwrap();
        assert!(shortest_path_diameter(&red.graph).unwrap() <= 8);
        assert_eq!(apsp(&red.graph), apsp(&ov.graph));
        let full = reduce_overlay_spd(&mut sim, &g, &tree, &ov, 15).unwrap();
        assert_eq!(shortest_path_diameter(&full.graph).unwrap(), 1);
    }

    #[test]
    fn overlay_sssp_examples() {
        let g = WeightedGraph::from_edges(3, &[(0, 1, 2), (1, 2, 3), (0, 2, 4)]).unwrap();
        let eps = Frac::new(1, 2);
        let mut sim = Simulator::seeded(0);
        let tree = build_bfs_tree(&mut sim, &g, 0).unwrap();
        let single = build_overlay(&mut sim, &g, &tree, &[1], 1, eps).unwrap();
        let out = sssp_on_overlay(&mut sim, &g, &tree, &single, 1, 1, eps).unwrap();
        assert_eq!(out.estimates, vec![Some(Frac::from(0))]);

        let tri = build_overlay(&mut sim, &g, &tree, &[0, 1, 2], 1, eps).unwrap();
        let out = sssp_on_overlay(&mut sim, &g, &tree, &tri, 0, 2, eps).unwrap();
        for (est, d) in out.estimates.iter().zip(tri.distances_from(0)) {
            let (e, d) = (est.unwrap(), d.unwrap());
            assert!(e >= d && e <= (Frac::one() + eps) * d);
        }
    }

    #[test]
    fn all_landmarks_within_two_factors() {
        for seed in 0..6 {
            let g = random_graph(seed, 20, 20, 40);
            let n = g.n();
            let eps = default_eps(n);
            let params = OverlayParams { alpha: n as u64, beta: 2, h: n as u64 };
            let mut sim = Simulator::seeded(seed);
            let run = sublinear_with_landmarks(&mut sim, &g, 3, eps, params, (0..n).collect()).unwrap();
            let exact = &dijkstra(&g, 3).rows[0];
            let bound = (Frac::one() + eps).pow(2);
            for (e, &d) in run.table.rows[0].iter().zip(exact) {
                let e = e.unwrap();
                assert!(e >= Frac::from(d as i128) && e <= bound * Frac::from(d as i128));
            }
        }
    }

    #[test]
    fn sublinear_never_underestimates() {
        for seed in 0..8 {
            let g = random_graph(seed + 100, 30, 30, 100);
            let eps = default_eps(g.n());
            let hd = hop_diameter(&g).unwrap();
            let mut sim = Simulator::seeded(seed);
            let run = sublinear_sssp(&mut sim, &g, 0, eps, hd).unwrap();
            let exact = &dijkstra(&g, 0).rows[0];
            for (e, &d) in run.table.rows[0].iter().zip(exact) {
                if let Some(e) = e {
                    assert!(*e >= Frac::from(d as i128));
                }
            }
        }
    }

    #[test]
    fn params_follow_formula() {
        let p = overlay_params(256, 16);
        assert_eq!(p.alpha, 64);
        assert_eq!(p.beta, 4);
        assert_eq!(p.h, 32);
        assert_eq!(overlay_params(4, 100).alpha, 2);
    }
}
