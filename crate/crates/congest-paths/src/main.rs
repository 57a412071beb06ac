use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use congest_paths::graph::{apsp, WeightedGraph, INF};
use congest_paths::harness::{
    aggregate_rows, generate_graph, read_report_rows, report_csv, run_experiment, write_report, ExperimentConfig,
    GraphSpec, HarnessError, OracleCache,
};

#[derive(Parser)]
#[command(name = "congest-paths", about = "Simulated CONGEST shortest-path experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a generated graph in the `n m` / `u v w` text format.
    Gen {
        /// path, cycle, star, complete, grid, erdos_renyi(p), random_geometric(r)
        #[arg(long)]
        topology: String,
        #[arg(long)]
        n: usize,
        /// unit, uniform or exponential
        #[arg(long, default_value = "uniform")]
        weights: String,
        #[arg(long, default_value_t = 100)]
        w_max: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a config file (key = value or JSON) and write CSV plus JSON sidecar.
    Run {
        config: PathBuf,
        /// Overrides the config's output path; stdout if neither is set.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print exact distances for a graph file.
    Oracle {
        graph: PathBuf,
        /// Only this source's row.
        #[arg(long)]
        source: Option<usize>,
    },
    /// Summarise one or more report CSVs, one line each.
    Report { csvs: Vec<PathBuf> },
}

const EXIT_INVALID: u8 = 2;
const EXIT_ROW_ERRORS: u8 = 3;

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), HarnessError> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|source| HarnessError::Io { path: p.to_path_buf(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_graph(path: &Path) -> Result<WeightedGraph, HarnessError> {
    WeightedGraph::parse(&read(path)?).map_err(|e| HarnessError::InvalidSpec(e.to_string()))
}

fn run(cmd: Cmd) -> Result<u8, HarnessError> {
    match cmd {
        Cmd::Gen { topology, n, weights, w_max, seed, output } => {
            let spec = GraphSpec { topology: topology.parse()?, n, weights: weights.parse()?, w_max };
            emit(&generate_graph(&spec, seed)?.to_text(), output.as_deref())?;
            Ok(0)
        }
        Cmd::Run { config, output } => {
            let cfg = ExperimentConfig::parse(&read(&config)?)?;
            let report = run_experiment(&cfg, &mut OracleCache::default())?;
            match output.or_else(|| cfg.output.clone()) {
                Some(path) => {
                    let sidecar = write_report(&report, &path)?;
                    eprintln!("wrote {} and {}", path.display(), sidecar.display());
                }
                None => print!("{}", report_csv(&report)?),
            }
            for row in report.rows.iter().filter(|r| !r.error.is_empty()) {
                eprintln!("instance {} seed {}: {}", row.instance, row.seed, row.error);
            }
            Ok(if report.aggregates.errors > 0 { EXIT_ROW_ERRORS } else { 0 })
        }
        Cmd::Oracle { graph, source } => {
            let g = load_graph(&graph)?;
            let table = apsp(&g);
            let mut out = String::new();
            for (s, row) in table.rows.iter().enumerate() {
                if source.is_some_and(|x| x != s) {
                    continue;
                }
                let cells: Vec<String> = row.iter().map(|&d| if d == INF { "inf".into() } else { d.to_string() }).collect();
                out.push_str(&format!("{s}: {}\n", cells.join(" ")));
            }
            emit(&out, None)?;
            Ok(0)
        }
        Cmd::Report { csvs } => {
            println!("file,rows,errors,exact_rows,rounds_p50,rounds_p90,rounds_max,load_max,max_ratio");
            let mut errors = 0;
            for path in csvs {
                let a = aggregate_rows(&read_report_rows(&path)?);
                errors += a.errors;
                println!(
                    "{},{},{},{},{},{},{},{},{:.6}",
                    path.display(),
                    a.rows,
                    a.errors,
                    a.exact_rows,
                    a.rounds_p50,
                    a.rounds_p90,
                    a.rounds_max,
                    a.load_max,
                    a.max_ratio
                );
            }
            Ok(if errors > 0 { EXIT_ROW_ERRORS } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                HarnessError::InvalidConfig(_) | HarnessError::InvalidSpec(_) => EXIT_INVALID,
                _ => 1,
            })
        }
    }
}
