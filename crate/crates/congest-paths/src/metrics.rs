//! (1+eps)-approximate weighted diameter, radius and all-pairs distances by
//! rounding weights to a guessed scale and running bounded-distance APSP.

use std::sync::Arc;

use thiserror::Error;

use crate::graph::{log2_ceil, DistanceTable, Frac, WeightedGraph, INF};
use crate::rounding::{
    check_eps, delay_range, distance_cap, draw_delays, multi_source_on_tree, run_windows, ApproxRun, RoundingError,
    Window,
};
use crate::sim::{aggregate, bellman_ford, build_bfs_tree, BfsTree, SimError, Simulator};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("graph is disconnected")]
    Disconnected,
    #[error(transparent)]
    Rounding(#[from] RoundingError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// ceil(2n * w / (eps * scale)).
fn rescale(w: u64, n: usize, eps: Frac, scale: u64) -> u64 {
    let (p, q) = (*eps.numer() as u128, *eps.denom() as u128);
    (2 * n as u128 * w as u128 * q).div_ceil(p * scale as u128) as u64
}

/// (eps * scale / 2n) * len.
fn unscale(len: u64, n: usize, eps: Frac, scale: u64) -> Frac {
    let (p, q) = (*eps.numer(), *eps.denom());
    Frac::new(p * scale as i128 * len as i128, q * 2 * n as i128)
}

/// All-sources bounded-distance SSSP under `weights`, scheduled with random
/// delays. Returns dist[source][node].
fn bounded_apsp(
    sim: &mut Simulator,
    g: &WeightedGraph,
    tree: &BfsTree,
    weights: Vec<u64>,
    cap: u64,
) -> Result<Vec<Vec<u64>>, SimError> {
    let sources: Vec<usize> = (0..g.n()).collect();
    let delays = draw_delays(sim, g, tree, &sources, delay_range(g.n(), g.n()))?;
    let windows = sources.iter().zip(&delays).map(|(&source, &start)| Window { source, start, weights: 0 }).collect();
    Ok(run_windows(sim, g, windows, vec![Arc::new(weights)], cap, "bounded-apsp")?.dist)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricEstimate {
    pub value: Frac,
    /// The crude 2-approximation used to pick the rounding scale.
    pub guess: u64,
    pub cap: u64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Metric {
    Diameter,
    Radius,
}

fn approx_metric(sim: &mut Simulator, g: &WeightedGraph, eps: Frac, metric: Metric) -> Result<MetricEstimate, MetricsError> {
    check_eps(eps)?;
    if !g.is_connected() {
        return Err(MetricsError::Disconnected);
    }
    let n = g.n();
    let cap = distance_cap(n as u64, eps);
    if n <= 1 {
        return Ok(MetricEstimate { value: Frac::from(0), guess: 0, cap });
    }
    let tree = build_bfs_tree(sim, g, 0)?;
    let w: Vec<u64> = g.edges().iter().map(|e| e.w).collect();
    let from_root = bellman_ford(sim, g, &w, 0, n as u64 - 1)?;
    let ecc = aggregate(sim, g, &tree, from_root, u64::max)?;
    let guess = match metric {
        Metric::Diameter => 2 * ecc,
        Metric::Radius => ecc,
    };
    let weights = w.iter().map(|&x| rescale(x, n, eps, guess)).collect();
    let dist = bounded_apsp(sim, g, &tree, weights, cap)?;
    // Rows are symmetric, so node u's column is its own eccentricity row.
    let eccs: Vec<u64> = (0..n).map(|u| dist.iter().map(|row| row[u]).max().unwrap_or(0)).collect();
    let len = match metric {
        Metric::Diameter => aggregate(sim, g, &tree, eccs, u64::max)?,
        Metric::Radius => aggregate(sim, g, &tree, eccs, u64::min)?,
    };
    debug_assert!(len != INF, "scaled metric always fits under the cap");
    Ok(MetricEstimate { value: unscale(len, n, eps, guess), guess, cap })
}

pub fn approx_diameter(sim: &mut Simulator, g: &WeightedGraph, eps: Frac) -> Result<MetricEstimate, MetricsError> {
    approx_metric(sim, g, eps, Metric::Diameter)
}

pub fn approx_radius(sim: &mut Simulator, g: &WeightedGraph, eps: Frac) -> Result<MetricEstimate, MetricsError> {
    approx_metric(sim, g, eps, Metric::Radius)
}

/// Runs one bounded-distance APSP per scale 2^i, i = 0..=ceil(log2(n W)),
/// and keeps the smallest rescaled length per pair.
pub fn approx_apsp_scales(
    sim: &mut Simulator,
    g: &WeightedGraph,
    eps: Frac,
) -> Result<DistanceTable<Option<Frac>>, MetricsError> {
    check_eps(eps)?;
    if !g.is_connected() {
        return Err(MetricsError::Disconnected);
    }
    let n = g.n();
    let cap = distance_cap(n as u64, eps);
    let tree = build_bfs_tree(sim, g, 0)?;
    let mut best: Vec<Vec<Option<Frac>>> = (0..n).map(|s| (0..n).map(|u| (s == u).then(|| Frac::from(0))).collect()).collect();
    for i in 0..=log2_ceil(g.max_weight() * n as u64) {
        let scale = 1u64 << i;
        let weights = g.edges().iter().map(|e| rescale(e.w, n, eps, scale)).collect();
        let dist = bounded_apsp(sim, g, &tree, weights, cap)?;
        for (s, row) in dist.iter().enumerate() {
            for (u, &d) in row.iter().enumerate().filter(|(_, &d)| d != INF) {
                let est = unscale(d, n, eps, scale);
                if best[s][u].is_none_or(|b| est < b) {
                    best[s][u] = Some(est);
                }
            }
        }
    }
    Ok(DistanceTable { sources: (0..n).collect(), rows: best })
}

/// The multi-source scheduler with every node as a source and h = n.
pub fn apsp_linear(sim: &mut Simulator, g: &WeightedGraph, eps: Frac) -> Result<ApproxRun, MetricsError> {
    if !g.is_connected() {
        return Err(MetricsError::Disconnected);
    }
    let tree = build_bfs_tree(sim, g, 0)?;
    let sources: Vec<usize> = (0..g.n()).collect();
    Ok(multi_source_on_tree(sim, g, &tree, &sources, g.n().max(1) as u64, eps)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{apsp, eccentricity_stats};
    use crate::rounding::default_eps;
    use num_traits::One;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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

    fn within(x: Frac, exact: u64, eps: Frac) -> bool {
        let d = Frac::from(exact as i128);
        x >= d && x <= (Frac::one() + eps) * d
    }

    #[test]
    fn single_edge_metrics() {
        let g = WeightedGraph::from_edges(2, &[(0, 1, 37)]).unwrap();
        let eps = Frac::new(1, 3);
        let mut sim = Simulator::seeded(0);
        assert!(within(approx_diameter(&mut sim, &g, eps).unwrap().value, 37, eps));
        assert!(within(approx_radius(&mut sim, &g, eps).unwrap().value, 37, eps));
        let t = approx_apsp_scales(&mut sim, &g, eps).unwrap();
        assert!(within(t.rows[0][1].unwrap(), 37, eps));
    }

    #[test]
    fn path_diameter_guess() {
        let g = WeightedGraph::from_edges(3, &[(0, 1, 1), (1, 2, 1)]).unwrap();
        let eps = Frac::new(1, 2);
        let est = approx_diameter(&mut Simulator::seeded(0), &g, eps).unwrap();
        assert_eq!(est.guess, 4);
        assert!(within(est.value, 2, eps));
    }

    #[test]
    fn star_radius() {
        let g = WeightedGraph::from_edges(5, &[(0, 1, 1), (0, 2, 1), (0, 3, 1), (0, 4, 1)]).unwrap();
        let eps = Frac::new(1, 2);
        assert!(within(approx_radius(&mut Simulator::seeded(0), &g, eps).unwrap().value, 1, eps));
    }

    #[test]
    fn triangle_scales() {
        let g = WeightedGraph::from_edges(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 3)]).unwrap();
        let eps = Frac::new(1, 2);
        let t = approx_apsp_scales(&mut Simulator::seeded(0), &g, eps).unwrap();
        assert!(within(t.rows[0][2].unwrap(), 2, eps));
    }

    #[test]
    fn disconnected_is_rejected() {
        let g = WeightedGraph::from_edges(3, &[(0, 1, 1)]).unwrap();
        let eps = Frac::new(1, 2);
        assert_eq!(approx_diameter(&mut Simulator::seeded(0), &g, eps).unwrap_err(), MetricsError::Disconnected);
        assert_eq!(approx_apsp_scales(&mut Simulator::seeded(0), &g, eps).unwrap_err(), MetricsError::Disconnected);
    }

    #[test]
    fn random_graph_sandwiches_and_cross_check() {
        for seed in 0..5 {
            let g = random_graph(seed, 14, 10, 60);
            let eps = default_eps(g.n());
            let st = eccentricity_stats(&g).unwrap();
            let mut sim = Simulator::seeded(seed);
            assert!(within(approx_diameter(&mut sim, &g, eps).unwrap().value, st.diameter, eps));
            assert!(within(approx_radius(&mut sim, &g, eps).unwrap().value, st.radius, eps));
            let scales = approx_apsp_scales(&mut sim, &g, eps).unwrap();
            let linear = apsp_linear(&mut sim, &g, eps).unwrap();
            let exact = apsp(&g);
            for s in 0..g.n() {
                for u in 0..g.n() {
                    assert!(within(scales.rows[s][u].unwrap(), exact.rows[s][u], eps));
                }
            }
            // Same rounding at the same scales, so both constructions agree.
            assert_eq!(scales.rows, linear.table.rows);
        }
    }
}
