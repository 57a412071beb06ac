//! Graph generators, experiment configs and CSV/JSON reports.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clique::{clique_apsp_approx, clique_sssp_exact};
use crate::exact::{exact_apsp, ExactOptions, ScheduleOptions};
use crate::graph::{apsp, eccentricity_stats, hop_bounded_distances, hop_diameter, sqrt_ceil, DistanceTable, Frac, NodeId, WeightedGraph, INF};
use crate::metrics::{approx_apsp_scales, apsp_linear, approx_diameter, approx_radius};
use crate::overlay::{overlay_params, sample_landmarks, sublinear_with_landmarks};
use crate::rounding::{bounded_hop_sssp, default_eps, multi_source_bounded_hop};
use crate::shortcuts::shortcut_graph;
use crate::sim::{CapacityPolicy, SimConfig, Simulator};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    Path,
    Cycle,
    Star,
    Complete,
    ErdosRenyi(f64),
    RandomGeometric(f64),
    Grid,
}

impl FromStr for Topology {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let arg = |name: &str| -> Result<Option<f64>, HarnessError> {
            let Some(rest) = s.strip_prefix(name) else { return Ok(None) };
            let inner = rest
                .strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| HarnessError::InvalidSpec(format!("{name} needs a parameter, e.g. {name}(0.1)")))?;
            let x: f64 = inner.trim().parse().map_err(|_| HarnessError::InvalidSpec(format!("bad parameter in {s}")))?;
            if !(x > 0.0 && x.is_finite()) {
                return Err(HarnessError::InvalidSpec(format!("parameter of {name} must be positive")));
            }
            Ok(Some(x))
        };
        Ok(match s {
            "path" => Topology::Path,
            "cycle" => Topology::Cycle,
            "star" => Topology::Star,
            "complete" => Topology::Complete,
            "grid" => Topology::Grid,
            _ => {
                if let Some(p) = arg("erdos_renyi")? {
                    if p > 1.0 {
                        return Err(HarnessError::InvalidSpec("edge probability above 1".into()));
                    }
                    Topology::ErdosRenyi(p)
                } else if let Some(r) = arg("random_geometric")? {
                    Topology::RandomGeometric(r)
                } else {
                    return Err(HarnessError::InvalidSpec(format!("unknown topology {s:?}")));
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightDist {
    Unit,
    Uniform,
    /// Geometric-looking tail, mean about w_max / 8, clamped to [1, w_max].
    Exponential,
}

impl FromStr for WeightDist {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "unit" => Ok(WeightDist::Unit),
            "uniform" => Ok(WeightDist::Uniform),
            "exponential" => Ok(WeightDist::Exponential),
            other => Err(HarnessError::InvalidSpec(format!("unknown weight distribution {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphSpec {
    pub topology: Topology,
    pub n: usize,
    pub weights: WeightDist,
    pub w_max: u64,
}

fn draw_weight(rng: &mut ChaCha8Rng, dist: WeightDist, w_max: u64) -> u64 {
    match dist {
        WeightDist::Unit => 1,
        WeightDist::Uniform => rng.gen_range(1..=w_max),
        WeightDist::Exponential => {
            let u: f64 = rng.gen();
            let x = 1.0 + (-(1.0 - u).ln() * w_max as f64 / 8.0).floor();
            (x as u64).clamp(1, w_max)
        }
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Builds a connected graph; missing connectivity is patched by joining
/// consecutive components with random-weight edges.
pub fn generate_graph(spec: &GraphSpec, seed: u64) -> Result<WeightedGraph, HarnessError> {
    let GraphSpec { topology, n, weights, w_max } = *spec;
    if n == 0 {
        return Err(HarnessError::InvalidSpec("n must be at least 1".into()));
    }
    if w_max == 0 {
        return Err(HarnessError::InvalidSpec("w_max must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(NodeId, NodeId)> = Vec::new();
    match topology {
        Topology::Path => pairs.extend((1..n).map(|v| (v - 1, v))),
        Topology::Cycle => {
            pairs.extend((1..n).map(|v| (v - 1, v)));
            if n >= 3 {
                pairs.push((n - 1, 0));
            }
        }
        Topology::Star => pairs.extend((1..n).map(|v| (0, v))),
        Topology::Complete => {
            for u in 0..n {
                pairs.extend((u + 1..n).map(|v| (u, v)));
            }
        }
        Topology::ErdosRenyi(p) => {
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(p) {
                        pairs.push((u, v));
                    }
                }
            }
        }
        Topology::RandomGeometric(r) => {
            let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
            for u in 0..n {
                for v in u + 1..n {
                    let (dx, dy) = (pts[u].0 - pts[v].0, pts[u].1 - pts[v].1);
                    if dx * dx + dy * dy <= r * r {
                        pairs.push((u, v));
                    }
                }
            }
        }
        Topology::Grid => {
            let cols = sqrt_ceil(n as u64) as usize;
            for u in 0..n {
                if (u + 1) % cols != 0 && u + 1 < n {
                    pairs.push((u, u + 1));
                }
                if u + cols < n {
                    pairs.push((u, u + cols));
                }
            }
        }
    }
    let mut g = WeightedGraph::new(n);
    let mut parent: Vec<usize> = (0..n).collect();
    for (u, v) in pairs {
        let w = draw_weight(&mut rng, weights, w_max);
        g.add_edge(u, v, w).map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        parent[a] = b;
    }
    let mut roots: Vec<usize> = (0..n).filter(|&u| find(&mut parent, u) == u).collect();
    roots.sort_unstable();
    for pair in roots.windows(2) {
        let w = draw_weight(&mut rng, weights, w_max);
        g.add_edge(pair[0], pair[1], w).map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
    }
    Ok(g)
}

pub fn graph_hash(g: &WeightedGraph) -> String {
    Sha256::digest(g.to_text().as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dijkstra,
    BoundedHopSssp,
    MultiSourceBoundedHop,
    SublinearSssp,
    CliqueSsspExact,
    CliqueApspApprox,
    ApproxDiameter,
    ApproxRadius,
    ApproxApspScales,
    ApspLinear,
    ExactApsp,
    ShortcutGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    #[default]
    RecordOnly,
    FailFast,
    Queue,
}

impl From<PolicyName> for CapacityPolicy {
    fn from(p: PolicyName) -> Self {
        match p {
            PolicyName::RecordOnly => CapacityPolicy::RecordOnly,
            PolicyName::FailFast => CapacityPolicy::FailFast,
            PolicyName::Queue => CapacityPolicy::Queue,
        }
    }
}

fn default_weights() -> String {
    "uniform".into()
}
fn default_w_max() -> u64 {
    100
}
fn default_instances() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    /// Topology name such as `erdos_renyi(0.1)`, or `file:<path>`.
    pub graph: String,
    #[serde(default)]
    pub n: usize,
    #[serde(default = "default_weights")]
    pub weights: String,
    #[serde(default = "default_w_max")]
    pub w_max: u64,
    /// Rational such as `1/4`; defaults to 1/max(2, ceil log2 n).
    #[serde(default)]
    pub eps: Option<String>,
    #[serde(default)]
    pub k: Option<u64>,
    #[serde(default)]
    pub h: Option<u64>,
    #[serde(default)]
    pub alpha: Option<u64>,
    #[serde(default)]
    pub beta: Option<u64>,
    #[serde(default)]
    pub slack: Option<u64>,
    #[serde(default)]
    pub source: NodeId,
    pub seeds: Vec<u64>,
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default)]
    pub policy: PolicyName,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

const NUMERIC_KEYS: &[&str] = &["n", "w_max", "k", "h", "alpha", "beta", "slack", "source", "instances"];

/// Parses `a..b` (exclusive) or a comma list.
fn parse_seeds(v: &str) -> Result<Vec<u64>, HarnessError> {
    let bad = || HarnessError::InvalidConfig(format!("bad seeds {v:?}"));
    if let Some((a, b)) = v.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        return Ok((a..b).collect());
    }
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

pub fn parse_frac(s: &str) -> Option<Frac> {
    let s = s.trim();
    let (num, den) = s.split_once('/').unwrap_or((s, "1"));
    let (num, den): (i128, i128) = (num.trim().parse().ok()?, den.trim().parse().ok()?);
    (den != 0).then(|| Frac::new(num, den))
}

impl ExperimentConfig {
    /// Accepts JSON (first non-blank char `{`) or `key = value` lines with `#` comments.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?
        } else {
            let mut map = serde_json::Map::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| HarnessError::InvalidConfig(format!("line {}: expected key = value", i + 1)))?;
                let (k, v) = (k.trim(), v.trim());
                let value = if k == "seeds" {
                    serde_json::to_value(parse_seeds(v)?)?
                } else if NUMERIC_KEYS.contains(&k) {
                    let x: u64 = v.parse().map_err(|_| HarnessError::InvalidConfig(format!("{k} must be an integer")))?;
                    x.into()
                } else {
                    v.into()
                };
                map.insert(k.to_string(), value);
            }
            serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty");
        }
        if self.instances == 0 {
            return bad("instances must be at least 1");
        }
        if let Some(eps) = &self.eps {
            match parse_frac(eps) {
                Some(e) if e > Frac::from(0) && e <= Frac::from(1) => {}
                _ => return bad("eps must be a rational in (0, 1]"),
            }
        }
        if self.graph.starts_with("file:") {
            return Ok(());
        }
        let topology: Topology = self.graph.parse()?;
        self.weights.parse::<WeightDist>()?;
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if self.w_max == 0 {
            return bad("w_max must be at least 1");
        }
        if self.source >= self.n {
            return bad("source out of range");
        }
        if matches!(self.algorithm, Algorithm::CliqueSsspExact | Algorithm::CliqueApspApprox) && topology != Topology::Complete {
            return bad("clique algorithms need graph = complete");
        }
        if [self.k, self.h, self.alpha, self.beta, self.slack].contains(&Some(0)) {
            return bad("k, h, alpha, beta and slack must be positive");
        }
        Ok(())
    }

    fn instance_graph(&self, instance: usize, seed: u64) -> Result<WeightedGraph, HarnessError> {
        if let Some(path) = self.graph.strip_prefix("file:") {
            let path = Path::new(path);
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            return WeightedGraph::parse(&text).map_err(|e| HarnessError::InvalidSpec(e.to_string()));
        }
        let spec = GraphSpec { topology: self.graph.parse()?, n: self.n, weights: self.weights.parse()?, w_max: self.w_max };
        generate_graph(&spec, seed.wrapping_mul(1_000_003).wrapping_add(instance as u64))
    }
}

enum Output {
    Table(DistanceTable<Option<Frac>>),
    Scalar(Frac),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum OracleKind {
    Apsp,
    HopBounded { source: NodeId, h: u64 },
    Diameter,
    Radius,
}

/// Sequential reference answers keyed by graph hash.
#[derive(Default)]
pub struct OracleCache {
    tables: HashMap<(String, OracleKind), Arc<DistanceTable>>,
    pub hits: u64,
}

impl OracleCache {
    fn get(&mut self, g: &WeightedGraph, kind: OracleKind) -> Result<Arc<DistanceTable>, HarnessError> {
        let key = (graph_hash(g), kind);
        if let Some(t) = self.tables.get(&key) {
            self.hits += 1;
            return Ok(Arc::clone(t));
        }
        let table = match kind {
            OracleKind::Apsp => apsp(g),
            OracleKind::HopBounded { source, h } => hop_bounded_distances(g, source, h as usize),
            OracleKind::Diameter | OracleKind::Radius => {
                let st = eccentricity_stats(g).map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
                let v = if kind == OracleKind::Diameter { st.diameter } else { st.radius };
                DistanceTable { sources: vec![0], rows: vec![vec![v]] }
            }
        };
        let t = Arc::new(table);
        self.tables.insert(key, Arc::clone(&t));
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub instance: usize,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub rounds: u64,
    pub max_edge_load: u64,
    pub messages: u64,
    /// max over compared pairs of output / oracle, as a decimal.
    pub max_ratio: String,
    pub min_ratio: String,
    pub exact: bool,
    pub error: String,
    pub wall_ms: u64,
}

/// The fixed CSV column order.
pub const CSV_COLUMNS: [&str; 12] =
    ["instance", "seed", "n", "m", "rounds", "max_edge_load", "messages", "max_ratio", "min_ratio", "exact", "error", "wall_ms"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub rows: usize,
    pub errors: usize,
    pub exact_rows: usize,
    pub rounds_p50: u64,
    pub rounds_p90: u64,
    pub rounds_max: u64,
    pub load_max: u64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    pub aggregates: Aggregates,
}

fn frac_to_f64(x: Frac) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

fn fmt_ratio(x: Option<Frac>) -> String {
    match x {
        Some(r) => format!("{:.6}", frac_to_f64(r)),
        None => "inf".into(),
    }
}

/// Nearest-rank percentile of a sorted slice.
pub fn percentile(sorted: &[u64], pct: u64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((pct * sorted.len() as u64).div_ceil(100)).max(1) as usize;
    sorted[rank - 1]
}

pub fn aggregate_rows(rows: &[ReportRow]) -> Aggregates {
    let ok: Vec<&ReportRow> = rows.iter().filter(|r| r.error.is_empty()).collect();
    let mut rounds: Vec<u64> = ok.iter().map(|r| r.rounds).collect();
    rounds.sort_unstable();
    Aggregates {
        rows: rows.len(),
        errors: rows.len() - ok.len(),
        exact_rows: ok.iter().filter(|r| r.exact).count(),
        rounds_p50: percentile(&rounds, 50),
        rounds_p90: percentile(&rounds, 90),
        rounds_max: rounds.last().copied().unwrap_or(0),
        load_max: ok.iter().map(|r| r.max_edge_load).max().unwrap_or(0),
        max_ratio: ok.iter().map(|r| r.max_ratio.parse::<f64>().unwrap_or(f64::INFINITY)).fold(0.0, f64::max),
    }
}

struct Comparison {
    max_ratio: Option<Frac>,
    min_ratio: Option<Frac>,
    exact: bool,
}

/// Ratios skip zero-distance pairs; those only affect the exactness flag.
fn compare(out: &Output, oracle: &DistanceTable) -> Comparison {
    let mut cmp = Comparison { max_ratio: Some(Frac::from(1)), min_ratio: Some(Frac::from(1)), exact: true };
    let mut note = |est: Option<Frac>, want: u64| {
        let want_f = (want != INF).then(|| Frac::from(want as i128));
        if est != want_f {
            cmp.exact = false;
        }
        match (est, want_f) {
            (Some(e), Some(w)) if want > 0 => {
                let r = e / w;
                cmp.max_ratio = cmp.max_ratio.map(|m| m.max(r));
                cmp.min_ratio = cmp.min_ratio.map(|m| m.min(r));
            }
            (None, Some(_)) => cmp.max_ratio = None,
            _ => {}
        }
    };
    match out {
        Output::Scalar(x) => note(Some(*x), oracle.rows[0][0]),
        Output::Table(t) => {
            for (i, &s) in t.sources.iter().enumerate() {
                let row = oracle.row_of(s).expect("oracle covers every source");
                for (u, &est) in t.rows[i].iter().enumerate() {
                    note(est, row[u]);
                }
            }
        }
    }
    cmp
}

fn exact_table(t: DistanceTable) -> DistanceTable<Option<Frac>> {
    let rows = t.rows.into_iter().map(|r| r.into_iter().map(|d| (d != INF).then(|| Frac::from(d as i128))).collect()).collect();
    DistanceTable { sources: t.sources, rows }
}

fn run_algorithm(cfg: &ExperimentConfig, sim: &mut Simulator, g: &WeightedGraph) -> Result<(Output, OracleKind), String> {
    let n = g.n();
    let eps = cfg.eps.as_deref().and_then(parse_frac).unwrap_or_else(|| default_eps(n));
    let source = cfg.source;
    if source >= n {
        return Err(format!("source {source} out of range"));
    }
    let h = cfg.h.unwrap_or(n as u64);
    let e = |x: &dyn std::fmt::Display| x.to_string();
    Ok(match cfg.algorithm {
        Algorithm::Dijkstra => (Output::Table(exact_table(apsp(g))), OracleKind::Apsp),
        Algorithm::BoundedHopSssp => {
            let run = bounded_hop_sssp(sim, g, source, h, eps).map_err(|x| e(&x))?;
            (Output::Table(run.table), OracleKind::HopBounded { source, h })
        }
        Algorithm::MultiSourceBoundedHop => {
            let k = cfg.k.unwrap_or(n as u64).min(n as u64) as usize;
            let sources: Vec<NodeId> = (0..k).collect();
            let run = multi_source_bounded_hop(sim, g, &sources, h, eps).map_err(|x| e(&x))?;
            // With h = n the hop bound is slack, so plain APSP is the reference.
            let kind = if h >= n as u64 { OracleKind::Apsp } else { return Err("multi_source_bounded_hop reports need h >= n".into()) };
            (Output::Table(run.table), kind)
        }
        Algorithm::SublinearSssp => {
            let hd = hop_diameter(g).map_err(|x| e(&x))?;
            let mut params = overlay_params(n, hd);
            params.alpha = cfg.alpha.unwrap_or(params.alpha);
            params.beta = cfg.beta.unwrap_or(params.beta);
            params.h = cfg.h.unwrap_or(params.h);
            let landmarks = sample_landmarks(n, params.alpha, source, sim.config().seed).map_err(|x| e(&x))?;
            let run = sublinear_with_landmarks(sim, g, source, eps, params, landmarks).map_err(|x| e(&x))?;
            (Output::Table(run.table), OracleKind::Apsp)
        }
        Algorithm::CliqueSsspExact => {
            let run = clique_sssp_exact(sim, g, source).map_err(|x| e(&x))?;
            (Output::Table(exact_table(DistanceTable::single(source, run.dist))), OracleKind::Apsp)
        }
        Algorithm::CliqueApspApprox => {
            let run = clique_apsp_approx(sim, g, eps).map_err(|x| e(&x))?;
            let rows = run.table.rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect();
            (Output::Table(DistanceTable { sources: run.table.sources, rows }), OracleKind::Apsp)
        }
        Algorithm::ApproxDiameter => {
            (Output::Scalar(approx_diameter(sim, g, eps).map_err(|x| e(&x))?.value), OracleKind::Diameter)
        }
        Algorithm::ApproxRadius => (Output::Scalar(approx_radius(sim, g, eps).map_err(|x| e(&x))?.value), OracleKind::Radius),
        Algorithm::ApproxApspScales => (Output::Table(approx_apsp_scales(sim, g, eps).map_err(|x| e(&x))?), OracleKind::Apsp),
        Algorithm::ApspLinear => (Output::Table(apsp_linear(sim, g, eps).map_err(|x| e(&x))?.table), OracleKind::Apsp),
        Algorithm::ExactApsp => {
            let schedule = cfg.slack.map(|slack| ScheduleOptions { slack, fail_fast: true });
            let run = exact_apsp(sim, g, ExactOptions { schedule, check: false }).map_err(|x| e(&x))?;
            (Output::Table(exact_table(run.table)), OracleKind::Apsp)
        }
        Algorithm::ShortcutGraph => {
            let k = cfg.k.unwrap_or(sqrt_ceil(n as u64)).clamp(1, n.saturating_sub(1).max(1) as u64) as usize;
            (Output::Table(exact_table(apsp(&shortcut_graph(g, k)))), OracleKind::Apsp)
        }
    })
}

/// Runs every (instance, seed) row in that order. Row failures are recorded, not raised.
pub fn run_experiment(cfg: &ExperimentConfig, cache: &mut OracleCache) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for instance in 0..cfg.instances {
        for &seed in &cfg.seeds {
            let started = Instant::now();
            let g = cfg.instance_graph(instance, seed)?;
            let mut sim = Simulator::new(SimConfig { policy: cfg.policy.into(), ..SimConfig::seeded(seed) });
            let mut row = ReportRow {
                instance,
                seed,
                n: g.n(),
                m: g.m(),
                rounds: 0,
                max_edge_load: 0,
                messages: 0,
                max_ratio: String::new(),
                min_ratio: String::new(),
                exact: false,
                error: String::new(),
                wall_ms: 0,
            };
            match run_algorithm(cfg, &mut sim, &g) {
                Ok((out, kind)) => {
                    let oracle = cache.get(&g, kind)?;
                    let cmp = compare(&out, &oracle);
                    row.max_ratio = fmt_ratio(cmp.max_ratio);
                    row.min_ratio = fmt_ratio(cmp.min_ratio);
                    row.exact = cmp.exact;
                }
                Err(msg) => row.error = msg,
            }
            let trace = sim.trace();
            row.rounds = trace.total_rounds;
            row.max_edge_load = trace.max_edge_load;
            row.messages = trace.messages;
            row.wall_ms = started.elapsed().as_millis() as u64;
            rows.push(row);
        }
    }
    let aggregates = aggregate_rows(&rows);
    Ok(ExperimentReport { config: cfg.clone(), rows, aggregates })
}

pub fn report_csv(report: &ExperimentReport) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &report.rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `<path>` as CSV and `<path>` with a `.json` extension as the sidecar.
pub fn write_report(report: &ExperimentReport, path: &Path) -> Result<PathBuf, HarnessError> {
    std::fs::write(path, report_csv(report)?).map_err(io_err(path))?;
    let sidecar = path.with_extension("json");
    let json = serde_json::json!({ "config": report.config, "aggregates": report.aggregates });
    std::fs::write(&sidecar, serde_json::to_string_pretty(&json)?).map_err(io_err(&sidecar))?;
    Ok(sidecar)
}

pub fn read_report_rows(path: &Path) -> Result<Vec<ReportRow>, HarnessError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    csv::Reader::from_reader(file).deserialize().map(|r| r.map_err(HarnessError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(topology: Topology, n: usize, weights: WeightDist, w_max: u64) -> GraphSpec {
        GraphSpec { topology, n, weights, w_max }
    }

    #[test]
    fn generator_examples() {
        let p = generate_graph(&spec(Topology::Path, 5, WeightDist::Unit, 1), 0).unwrap();
        assert_eq!(p.m(), 4);
        assert!(p.edges().iter().all(|e| e.w == 1));
        let a = generate_graph(&spec(Topology::Complete, 4, WeightDist::Uniform, 10), 7).unwrap();
        let b = generate_graph(&spec(Topology::Complete, 4, WeightDist::Uniform, 10), 7).unwrap();
        assert_eq!(a.m(), 6);
        assert_eq!(a, b);
        assert!(a.edges().iter().all(|e| (1..=10).contains(&e.w)));
        assert_eq!(generate_graph(&spec(Topology::Cycle, 6, WeightDist::Unit, 1), 0).unwrap().m(), 6);
        assert_eq!(generate_graph(&spec(Topology::Star, 6, WeightDist::Unit, 1), 0).unwrap().degree(0), 5);
        assert_eq!(generate_graph(&spec(Topology::Grid, 9, WeightDist::Unit, 1), 0).unwrap().m(), 12);
    }

    #[test]
    fn sparse_generators_are_connected() {
        for seed in 0..20 {
            for t in [Topology::ErdosRenyi(0.01), Topology::RandomGeometric(0.05), Topology::Grid] {
                let g = generate_graph(&spec(t, 40, WeightDist::Exponential, 1000), seed).unwrap();
                assert!(g.is_connected());
                assert!(g.edges().iter().all(|e| (1..=1000).contains(&e.w)));
            }
        }
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("erdos_renyi(0.25)".parse::<Topology>().unwrap(), Topology::ErdosRenyi(0.25));
        assert!("erdos_renyi".parse::<Topology>().is_err());
        assert!("erdos_renyi(2)".parse::<Topology>().is_err());
        assert!("torus".parse::<Topology>().is_err());
        assert!("heavy".parse::<WeightDist>().is_err());
    }

    #[test]
    fn config_formats_agree() {
        let kv = "algorithm = apsp_linear\ngraph = erdos_renyi(0.2) # sparse\nn = 12\nseeds = 0..3\neps = 1/2\n";
        let js = r#"{"algorithm":"apsp_linear","graph":"erdos_renyi(0.2)","n":12,"seeds":[0,1,2],"eps":"1/2"}"#;
        assert_eq!(ExperimentConfig::parse(kv).unwrap(), ExperimentConfig::parse(js).unwrap());
        assert!(ExperimentConfig::parse("algorithm = dijkstra\ngraph = path\nn = 4\nseeds = ").is_err());
        assert!(ExperimentConfig::parse("algorithm = nope\ngraph = path\nn = 4\nseeds = 1").is_err());
        assert!(ExperimentConfig::parse("algorithm = clique_sssp_exact\ngraph = path\nn = 4\nseeds = 1").is_err());
        assert!(ExperimentConfig::parse("algorithm = dijkstra\ngraph = path\nn = 4\nseeds = 1\ncolour = red").is_err());
    }

    #[test]
    fn percentile_examples() {
        let v = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
        assert_eq!(percentile(&v, 50), 5);
        assert_eq!(percentile(&v, 90), 9);
        assert_eq!(percentile(&v, 100), 10);
        assert_eq!(percentile(&[], 50), 0);
    }

    #[test]
    fn dijkstra_self_comparison() {
        let cfg = ExperimentConfig::parse("algorithm = dijkstra\ngraph = erdos_renyi(0.2)\nn = 15\nseeds = 0..4").unwrap();
        let mut cache = OracleCache::default();
        let report = run_experiment(&cfg, &mut cache).unwrap();
        assert!(report.rows.iter().all(|r| r.max_ratio == "1.000000" && r.exact));
    }

    #[test]
    fn oracle_cache_hits_on_repeated_graph() {
        let cfg = ExperimentConfig::parse("algorithm = dijkstra\ngraph = path\nweights = unit\nn = 6\nseeds = 0..3").unwrap();
        let mut cache = OracleCache::default();
        run_experiment(&cfg, &mut cache).unwrap();
        assert_eq!(cache.hits, 2);
    }

    #[test]
    fn hash_depends_on_weights() {
        let a = WeightedGraph::from_edges(2, &[(0, 1, 1)]).unwrap();
        let b = WeightedGraph::from_edges(2, &[(0, 1, 2)]).unwrap();
        assert_ne!(graph_hash(&a), graph_hash(&b));
        assert_eq!(graph_hash(&a).len(), 64);
    }
}
