use std::path::PathBuf;
use std::process::Command;

use congest_paths::harness::{
    generate_graph, report_csv, run_experiment, write_report, ExperimentConfig, GraphSpec, OracleCache, Topology,
    WeightDist,
};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_congest-paths"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("congest-paths-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(text: &str) -> congest_paths::harness::ExperimentReport {
    run_experiment(&ExperimentConfig::parse(text).unwrap(), &mut OracleCache::default()).unwrap()
}

fn strip_wall_time(csv: &str) -> String {
    csv.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head)).collect::<Vec<_>>().join("\n")
}

#[test]
fn erdos_renyi_degrees_match_binomial() {
    // Degree of a node in G(64, 0.1) is Binomial(63, 0.1); the mean over
    // 64 nodes and 20 graphs should sit well inside three standard errors.
    let (n, p, graphs) = (64usize, 0.1f64, 20u64);
    let spec = GraphSpec { topology: Topology::ErdosRenyi(p), n, weights: WeightDist::Unit, w_max: 1 };
    let mut total = 0usize;
    for seed in 0..graphs {
        let g = generate_graph(&spec, seed).unwrap();
        assert!(g.is_connected());
        total += 2 * g.m();
    }
    let mean = total as f64 / (n as f64 * graphs as f64);
    let expect = (n - 1) as f64 * p;
    // Edges are independent, so the mean degree has variance 4 * pairs * p(1-p) / (n * graphs)^2.
    let pairs = (n * (n - 1) / 2) as f64 * graphs as f64;
    let sd = (4.0 * pairs * p * (1.0 - p)).sqrt() / (n as f64 * graphs as f64);
    // Connectivity patches add at most n - 1 edges per graph, rarely any.
    assert!((mean - expect).abs() <= 3.0 * sd + 0.1, "mean degree {mean}, expected {expect} +- {}", 3.0 * sd);
}

#[test]
fn clique_exact_rows_flagged_exact() {
    let report = run("algorithm = clique_sssp_exact\ngraph = complete\nn = 20\nw_max = 1000\nseeds = 0..5");
    assert!(report.rows.iter().all(|r| r.exact && r.error.is_empty() && r.max_ratio == "1.000000"));
}

#[test]
fn apsp_linear_rounds_grow_with_n() {
    let mut prev = 0;
    for n in [32, 64, 128] {
        let report = run(&format!("algorithm = apsp_linear\ngraph = random_geometric(0.3)\nn = {n}\nseeds = 0,1\neps = 1/2"));
        let rounds = report.aggregates.rounds_max;
        assert!(rounds > prev, "n = {n}: {rounds} rounds after {prev}");
        prev = rounds;
    }
}

#[test]
fn ratios_respect_report_invariants() {
    for algo in ["approx_diameter", "approx_radius", "apsp_linear", "exact_apsp", "shortcut_graph", "sublinear_sssp"] {
        let report = run(&format!("algorithm = {algo}\ngraph = erdos_renyi(0.25)\nn = 14\nseeds = 0..3"));
        for row in &report.rows {
            assert!(row.error.is_empty(), "{algo}: {}", row.error);
            let ratio: f64 = row.max_ratio.parse().unwrap();
            assert!(ratio >= 1.0, "{algo}: ratio {ratio}");
            if row.exact {
                assert_eq!(row.max_ratio, "1.000000");
            }
        }
    }
}

#[test]
fn reports_are_deterministic() {
    let text = "algorithm = multi_source_bounded_hop\ngraph = grid\nn = 16\nseeds = 3,1,4\ninstances = 2";
    let a = report_csv(&run(text)).unwrap();
    let b = report_csv(&run(text)).unwrap();
    assert_eq!(strip_wall_time(&a), strip_wall_time(&b));
    let order: Vec<String> = a.lines().skip(1).map(|l| l.split(',').take(2).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(order, ["0,3", "0,1", "0,4", "1,3", "1,1", "1,4"]);
}

#[test]
fn sidecar_holds_config_and_aggregates() {
    let report = run("algorithm = dijkstra\ngraph = star\nn = 7\nseeds = 0");
    let csv = scratch("sidecar.csv");
    let sidecar = write_report(&report, &csv).unwrap();
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar).unwrap()).unwrap();
    assert_eq!(json["config"]["algorithm"], "dijkstra");
    assert_eq!(json["aggregates"]["rows"], 1);
    let header = std::fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, congest_paths::harness::CSV_COLUMNS.join(","));
}

#[test]
fn cli_gen_then_oracle() {
    let graph = scratch("path.txt");
    let status = bin().args(["gen", "--topology", "path", "--n", "4", "--weights", "unit", "-o"]).arg(&graph).status().unwrap();
    assert!(status.success());
    let out = bin().arg("oracle").arg(&graph).args(["--source", "0"]).output().unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "0: 0 1 2 3\n");
}

#[test]
fn cli_exit_codes() {
    let bad = scratch("bad.cfg");
    std::fs::write(&bad, "algorithm = dijkstra\ngraph = path\nn = 4\nseeds =\n").unwrap();
    assert_eq!(bin().arg("run").arg(&bad).output().unwrap().status.code(), Some(2));

    // A source outside the file's graph errors on every row.
    let graph = scratch("tiny.txt");
    std::fs::write(&graph, "2 1\n0 1 5\n").unwrap();
    let cfg = scratch("rows.cfg");
    std::fs::write(&cfg, format!("algorithm = clique_sssp_exact\ngraph = file:{}\nsource = 9\nseeds = 0,1\n", graph.display())).unwrap();
    let csv = scratch("rows.csv");
    let out = bin().arg("run").arg(&cfg).arg("-o").arg(&csv).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let rep = bin().arg("report").arg(&csv).output().unwrap();
    assert_eq!(rep.status.code(), Some(3));
    assert!(String::from_utf8(rep.stdout).unwrap().contains(",2,2,0,"));

    let good = scratch("good.cfg");
    std::fs::write(&good, "{\"algorithm\": \"dijkstra\", \"graph\": \"cycle\", \"n\": 5, \"seeds\": [0]}").unwrap();
    let out = bin().arg("run").arg(&good).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("instance,seed"));
}
