//! Cross-module properties on generated graphs.

use num_traits::One;
use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

use congest_paths::exact::{exact_apsp, ExactOptions, ScheduleOptions};
use congest_paths::graph::{apsp, Frac};
use congest_paths::harness::{generate_graph, GraphSpec, Topology, WeightDist};
use congest_paths::metrics::{approx_apsp_scales, apsp_linear};
use congest_paths::rounding::{bounded_hop_sssp, default_eps, multi_source_bounded_hop};
use congest_paths::shortcuts::shortcut_graph;
use congest_paths::sim::{SimConfig, Simulator};

fn topology(pick: u8) -> Topology {
    match pick % 6 {
        0 => Topology::Path,
        1 => Topology::Cycle,
        2 => Topology::Star,
        3 => Topology::Grid,
        4 => Topology::ErdosRenyi(0.2),
        _ => Topology::RandomGeometric(0.4),
    }
}

fn graph(pick: u8, n: usize, w_max: u64, seed: u64) -> congest_paths::graph::WeightedGraph {
    let spec = GraphSpec { topology: topology(pick), n, weights: WeightDist::Uniform, w_max };
    generate_graph(&spec, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn exact_apsp_on_generated_families(pick in 0u8..6, n in 2usize..20, w_max in 1u64..500, seed in 0u64..1000) {
        let g = graph(pick, n, w_max, seed);
        let run = exact_apsp(&mut Simulator::seeded(seed), &g, ExactOptions { schedule: None, check: false }).unwrap();
        prop_assert_eq!(run.table, apsp(&g));
    }

    #[test]
    fn single_and_multi_source_agree(pick in 0u8..6, n in 2usize..16, seed in 0u64..1000) {
        let g = graph(pick, n, 64, seed);
        let eps = default_eps(n);
        let sources: Vec<usize> = (0..n).collect();
        let multi = multi_source_bounded_hop(&mut Simulator::seeded(seed), &g, &sources, n as u64, eps).unwrap();
        for s in 0..n {
            let single = bounded_hop_sssp(&mut Simulator::seeded(seed), &g, s, n as u64, eps).unwrap();
            prop_assert_eq!(&single.table.rows[0], &multi.table.rows[s]);
        }
    }

    #[test]
    fn apsp_estimates_sandwich_true_distance(pick in 0u8..6, n in 2usize..14, seed in 0u64..1000) {
        let g = graph(pick, n, 200, seed);
        let eps = default_eps(n);
        let exact = apsp(&g);
        let linear = apsp_linear(&mut Simulator::seeded(seed), &g, eps).unwrap();
        let scales = approx_apsp_scales(&mut Simulator::seeded(seed), &g, eps).unwrap();
        prop_assert_eq!(&linear.table.rows, &scales.rows);
        for s in 0..n {
            for u in 0..n {
                let d = Frac::from(exact.rows[s][u] as i128);
                let est = linear.table.rows[s][u].unwrap();
                prop_assert!(est >= d && est <= (Frac::one() + eps) * d);
            }
        }
    }

    #[test]
    fn shortcut_graph_keeps_distances(pick in 0u8..6, n in 2usize..24, k in 1usize..24, seed in 0u64..1000) {
        let g = graph(pick, n, 100, seed);
        prop_assert_eq!(apsp(&shortcut_graph(&g, k.min(n - 1).max(1))), apsp(&g));
    }
}

#[test]
fn exact_apsp_default_slack_is_exact() {
    // Prints how often the fallback fired; only exactness is asserted.
    let (mut runs, mut fell_back) = (0, 0);
    for seed in 0..10 {
        let g = graph(4, 48, 1000, seed);
        let run = exact_apsp(&mut Simulator::seeded(seed), &g, ExactOptions::default()).unwrap();
        assert_eq!(run.table, apsp(&g));
        runs += run.iterations.len();
        fell_back += run.iterations.iter().filter(|it| it.used_fallback).count();
    }
    eprintln!("default slack: {fell_back}/{runs} iterations used the fallback");
}

#[test]
fn stress_slack_always_exact() {
    for seed in 0..5 {
        let g = graph(5, 40, 1000, seed);
        let opts = ExactOptions { schedule: Some(ScheduleOptions { slack: 1, fail_fast: true }), check: true };
        let run = exact_apsp(&mut Simulator::seeded(seed), &g, opts).unwrap();
        assert_eq!(run.table, apsp(&g));
    }
}

#[test]
fn traces_are_reproducible() {
    let g = graph(4, 20, 100, 9);
    let trace = |seed| {
        let mut sim = Simulator::new(SimConfig { record_loads: true, ..SimConfig::seeded(seed) });
        apsp_linear(&mut sim, &g, Frac::new(1, 2)).unwrap();
        sim.into_trace()
    };
    assert_eq!(trace(5), trace(5));
    assert_eq!(trace(5).to_json(), trace(5).to_json());
}
