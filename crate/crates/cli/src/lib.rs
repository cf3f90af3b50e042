//! Experiment runner: graph generation, Monte Carlo estimates, redundancy
//! sweeps, tree analytics and the row-pruned grid family, all as CSV.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use coded_gossip::estimator::{estimate, sweep_redundancy, DEFAULT_P_TOLERANCE, DEFAULT_SEED, DEFAULT_TRIALS};
use coded_gossip::graph::{gen_grid, gen_rgg, gen_tree};
use coded_gossip::oracle::{exact_expectations, ReachPolynomial, DEFAULT_ENUMERATION_LIMIT};
use coded_gossip::tree::{
    binomial_tail, tree_expected_transmissions, tree_min_p_closedform, tree_min_p_exact, tree_tau_closedform_dary,
    TreeAnalysisInput,
};
use coded_gossip::{
    CodingConfig, Graph, GridSpec, ProtocolParams, RggSpec, SearchConfig, SearchMode, SweepPoint, TreeSpec,
};

pub const DEFAULT_DELTA: f64 = 0.1;
pub const FAMILY_PERIODS: [Option<usize>; 4] = [None, Some(5), Some(10), Some(15)];

pub const SWEEP_HEADER: &str = "rho,n,p_min,tau,delta,feasible";
pub const TREE_EXACT_HEADER: &str = "rho,p_exact,p_closed,tau_exact,tau_closed";
pub const ESTIMATE_HEADER: &str = "rho,n,p,coverage,coverage_se,tau,tau_se";
pub const ORACLE_HEADER: &str = "p,n,expected_receivers,expected_coverage,expected_transmissions";
pub const ORACLE_NODE_HEADER: &str = "p,node,q,decode_probability";

#[derive(Parser, Debug)]
#[command(name = "coded-gossip", version, about = "Coded probabilistic forwarding experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a generated topology as graph JSON.
    Generate(GenerateArgs),
    /// Coverage and load at fixed forwarding probabilities.
    Estimate(EstimateArgs),
    /// Minimum forwarding probability and load for each redundancy.
    Sweep(SweepArgs),
    /// Exact and closed-form tree analysis.
    TreeExact(TreeExactArgs),
    /// Sweep over the full grid and its row-pruned variants.
    GridFamily(GridFamilyArgs),
    /// Exact reach probabilities by enumeration (small graphs only).
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub kind: GenerateKind,
}

#[derive(Subcommand, Debug)]
pub enum GenerateKind {
    Grid {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        /// Keep horizontal edges only in rows divisible by this period.
        #[arg(long)]
        row_period: Option<usize>,
    },
    Tree {
        #[arg(long, default_value_t = 2)]
        degree: usize,
        #[arg(long)]
        height: usize,
    },
    Rgg {
        #[arg(long)]
        nodes: usize,
        #[arg(long, default_value_t = 1.0)]
        width: f64,
        #[arg(long, default_value_t = 1.0)]
        height: f64,
        #[arg(long)]
        radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Flags shared by the experiment commands. Anything left unset falls back
/// to `--config`, then to the built-in default.
#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// JSON file with any of: graph, k, rho, delta, trials, p_tol, seed,
    /// threads, out, source, linear_step.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Redundancy; repeat for a list.
    #[arg(long = "rho", allow_negative_numbers = true)]
    pub rho: Vec<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long = "p-tol")]
    pub p_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for trials (default: available processors).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Step down from p = 1 instead of bisecting.
    #[arg(long)]
    pub linear_step: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Graph JSON path, or grid:RxC[:qP], tree:DxH, rgg:N:WxH:R[:SEED].
    #[arg(long)]
    pub graph: Option<String>,
    #[arg(long)]
    pub source: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub graph: Option<String>,
    #[arg(long)]
    pub source: Option<usize>,
    /// Forwarding probability; repeat for a list.
    #[arg(long = "p", required = true)]
    pub p: Vec<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct TreeExactArgs {
    #[arg(long)]
    pub height: usize,
    #[arg(long, default_value_t = 2)]
    pub degree: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct GridFamilyArgs {
    #[arg(long, default_value_t = 31)]
    pub rows: usize,
    #[arg(long, default_value_t = 31)]
    pub cols: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long)]
    pub graph: Option<String>,
    #[arg(long)]
    pub source: Option<usize>,
    #[arg(long = "p", required = true)]
    pub p: Vec<f64>,
    /// Also print one row per node.
    #[arg(long)]
    pub per_node: bool,
    /// Largest number of relays to enumerate.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_LIMIT)]
    pub limit: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    graph: Option<String>,
    k: Option<usize>,
    #[serde(default)]
    rho: Vec<f64>,
    delta: Option<f64>,
    trials: Option<usize>,
    p_tol: Option<f64>,
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    source: Option<usize>,
    linear_step: Option<f64>,
}

/// Flags merged over the config file over the defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub graph: Option<String>,
    pub source: Option<usize>,
    pub k: Option<usize>,
    pub rho: Vec<f64>,
    pub delta: f64,
    pub trials: usize,
    pub p_tolerance: f64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub linear_step: Option<f64>,
}

impl ExperimentConfig {
    pub fn resolve(common: &CommonArgs, graph: Option<&str>, source: Option<usize>) -> Result<Self> {
        let file = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str::<ConfigFile>(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ConfigFile::default(),
        };
        Ok(ExperimentConfig {
            graph: graph.map(str::to_owned).or(file.graph),
            source: source.or(file.source),
            k: common.k.or(file.k),
            rho: if common.rho.is_empty() { file.rho } else { common.rho.clone() },
            delta: common.delta.or(file.delta).unwrap_or(DEFAULT_DELTA),
            trials: common.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
            p_tolerance: common.p_tol.or(file.p_tol).unwrap_or(DEFAULT_P_TOLERANCE),
            seed: common.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            threads: common.threads.or(file.threads),
            out: common.out.clone().or(file.out),
            linear_step: common.linear_step.or(file.linear_step),
        })
    }

    pub fn k(&self) -> Result<usize> {
        self.k.context("--k is required")
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            trials: self.trials,
            p_tolerance: self.p_tolerance,
            seed: self.seed,
            mode: match self.linear_step {
                Some(step) => SearchMode::Linear { step },
                None => SearchMode::Bisection,
            },
        }
    }

    fn graph(&self) -> Result<Graph> {
        load_graph(self.graph.as_deref().context("--graph is required")?)
    }

    fn warn_if_single_trial(&self) {
        if self.trials == 1 {
            eprintln!("warning: trials = 1 gives no error estimate; results are not statistically meaningful");
        }
    }
}

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Every sweep row was infeasible.
    InfeasibleOnly,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::InfeasibleOnly => 2,
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Generate(args) => cmd_generate(&args),
        Command::Estimate(args) => {
            let config = ExperimentConfig::resolve(&args.common, args.graph.as_deref(), args.source)?;
            with_threads(config.threads, || emit(&config, &cmd_estimate(&config, &args.p)?))
        }
        Command::Sweep(args) => {
            let config = ExperimentConfig::resolve(&args.common, args.graph.as_deref(), args.source)?;
            with_threads(config.threads, || {
                let (csv, outcome) = cmd_sweep(&config)?;
                emit(&config, &csv)?;
                Ok(outcome)
            })
        }
        Command::TreeExact(args) => {
            let config = ExperimentConfig::resolve(&args.common, None, None)?;
            emit(&config, &cmd_tree_exact(args.height, args.degree, &config)?)
        }
        Command::GridFamily(args) => {
            let config = ExperimentConfig::resolve(&args.common, None, None)?;
            with_threads(config.threads, || {
                let (csv, outcome) = cmd_grid_family(args.rows, args.cols, &config)?;
                emit(&config, &csv)?;
                Ok(outcome)
            })
        }
        Command::Oracle(args) => {
            let config = ExperimentConfig::resolve(&args.common, args.graph.as_deref(), args.source)?;
            emit(&config, &cmd_oracle(&config, &args.p, args.per_node, args.limit)?)
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => bail!("--threads must be at least 1"),
        Some(t) => rayon::ThreadPoolBuilder::new().num_threads(t).build()?.install(f),
    }
}

fn emit(config: &ExperimentConfig, csv: &str) -> Result<Outcome> {
    write_output(config.out.as_deref(), csv)?;
    Ok(Outcome::Success)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<Outcome> {
    let graph = match args.kind {
        GenerateKind::Grid { rows, cols, row_period } => {
            let mut spec = GridSpec::new(rows, cols);
            spec.horizontal_row_period = row_period;
            gen_grid(&spec)?
        }
        GenerateKind::Tree { degree, height } => gen_tree(&TreeSpec { degree, height })?,
        GenerateKind::Rgg { nodes, width, height, radius, seed } => {
            gen_rgg(&RggSpec { node_count: nodes, width, height, radius, seed })?
        }
    };
    let mut json = graph.to_json()?;
    json.push('\n');
    write_output(args.out.as_deref(), &json)?;
    Ok(Outcome::Success)
}

/// Reads a graph file, or builds one from an inline spec:
/// `grid:31x31`, `grid:31x31:q5`, `tree:2x10`, `rgg:200:1x1:0.12[:seed]`.
pub fn load_graph(source: &str) -> Result<Graph> {
    let Some((kind, rest)) = source.split_once(':') else {
        return Graph::load(source).with_context(|| format!("loading graph {source}"));
    };
    let parts: Vec<&str> = rest.split(':').collect();
    let graph = match (kind, parts.as_slice()) {
        ("grid", [dims]) | ("grid", [dims, _]) => {
            let (rows, cols) = pair(dims)?;
            let mut spec = GridSpec::new(rows, cols);
            if let [_, period] = parts.as_slice() {
                let q = period.strip_prefix('q').context("row period must look like q5")?;
                spec = spec.with_row_period(q.parse().context("row period")?);
            }
            gen_grid(&spec)?
        }
        ("tree", [dims]) => {
            let (degree, height) = pair(dims)?;
            gen_tree(&TreeSpec { degree, height })?
        }
        ("rgg", [nodes, region, radius]) | ("rgg", [nodes, region, radius, _]) => {
            let (width, height) = region.split_once('x').context("rgg region must look like WxH")?;
            let seed = match parts.get(3) {
                Some(s) => s.parse().context("rgg seed")?,
                None => 0,
            };
            gen_rgg(&RggSpec {
                node_count: nodes.parse().context("rgg node count")?,
                width: width.parse().context("rgg width")?,
                height: height.parse().context("rgg height")?,
                radius: radius.parse().context("rgg radius")?,
                seed,
            })?
        }
        _ => return Graph::load(source).with_context(|| format!("{source} is neither a graph file nor a graph spec")),
    };
    Ok(graph)
}

fn pair(text: &str) -> Result<(usize, usize)> {
    let (a, b) = text.split_once('x').with_context(|| format!("expected AxB, got {text}"))?;
    Ok((a.parse().with_context(|| format!("bad number {a}"))?, b.parse().with_context(|| format!("bad number {b}"))?))
}

/// `--source`, else the graph's own hint (grid centre, tree root), else a
/// node drawn uniformly with the run seed.
pub fn pick_source(g: &Graph, explicit: Option<usize>, seed: u64) -> Result<usize> {
    let source = match explicit.or(g.source_hint()) {
        Some(s) => s,
        None => ChaCha8Rng::seed_from_u64(seed).gen_range(0..g.node_count()),
    };
    g.check_node(source)?;
    Ok(source)
}

pub fn cmd_sweep(config: &ExperimentConfig) -> Result<(String, Outcome)> {
    let g = config.graph()?;
    let source = pick_source(&g, config.source, config.seed)?;
    let k = config.k()?;
    config.warn_if_single_trial();
    let rows = sweep_redundancy(&g, source, k, &config.rho, config.delta, &config.search())?;
    let mut csv = format!("{SWEEP_HEADER}\n");
    for row in &rows {
        csv.push_str(&sweep_fields(row));
        csv.push('\n');
    }
    Ok((csv, sweep_outcome(&rows)))
}

fn sweep_fields(row: &SweepPoint) -> String {
    format!(
        "{},{},{},{},{},{}",
        fmt_g(row.rho),
        row.n,
        row.p_min.map(fmt_g).unwrap_or_default(),
        row.tau.map(|t| fmt_g(t.mean)).unwrap_or_default(),
        fmt_g(row.delta),
        row.feasible()
    )
}

fn sweep_outcome(rows: &[SweepPoint]) -> Outcome {
    if !rows.is_empty() && rows.iter().all(|r| !r.feasible()) {
        Outcome::InfeasibleOnly
    } else {
        Outcome::Success
    }
}

pub fn cmd_grid_family(rows: usize, cols: usize, config: &ExperimentConfig) -> Result<(String, Outcome)> {
    let k = config.k()?;
    config.warn_if_single_trial();
    let mut csv = format!("graph,{SWEEP_HEADER}\n");
    let mut all = Vec::new();
    for period in FAMILY_PERIODS {
        let mut spec = GridSpec::new(rows, cols);
        spec.horizontal_row_period = period;
        let g = gen_grid(&spec)?;
        let name = period.map_or_else(|| "G".to_owned(), |q| format!("G{q}"));
        let points = sweep_redundancy(&g, spec.center(), k, &config.rho, config.delta, &config.search())?;
        for row in &points {
            let _ = writeln!(csv, "{name},{}", sweep_fields(row));
        }
        all.extend(points);
    }
    Ok((csv, sweep_outcome(&all)))
}

pub fn cmd_tree_exact(height: usize, degree: usize, config: &ExperimentConfig) -> Result<String> {
    if height < 2 {
        bail!("tree-exact needs --height >= 2");
    }
    let k = config.k()? as u64;
    let mut csv = format!("{TREE_EXACT_HEADER}\n");
    for &rho in &config.rho {
        let n = CodingConfig::from_redundancy(k as usize, rho)?.n() as u64;
        let input = TreeAnalysisInput { height, k, n, delta: config.delta, degree };
        input.validate()?;
        let p_exact = tree_min_p_exact(&input)?;
        let tau_exact = tree_expected_transmissions(&input, p_exact)?;
        let p_closed = tree_min_p_closedform(height, rho)?;
        let tau_closed = match tree_tau_closedform_dary(degree, height, k, rho) {
            Ok(t) => fmt_g(t),
            Err(e) => {
                eprintln!("warning: rho = {}: closed-form tau out of range ({e})", fmt_g(rho));
                String::new()
            }
        };
        let _ =
            writeln!(csv, "{},{},{},{},{tau_closed}", fmt_g(rho), fmt_g(p_exact), fmt_g(p_closed), fmt_g(tau_exact));
    }
    Ok(csv)
}

pub fn cmd_estimate(config: &ExperimentConfig, ps: &[f64]) -> Result<String> {
    let g = config.graph()?;
    let source = pick_source(&g, config.source, config.seed)?;
    let k = config.k()?;
    config.warn_if_single_trial();
    let rhos = if config.rho.is_empty() { vec![0.0] } else { config.rho.clone() };
    let mut csv = format!("{ESTIMATE_HEADER}\n");
    for &rho in &rhos {
        let coding = CodingConfig::from_redundancy(k, rho)?;
        for &p in ps {
            let est = estimate(&g, &coding, &ProtocolParams::new(p, source)?, config.trials, config.seed)?;
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                fmt_g(rho),
                coding.n(),
                fmt_g(p),
                fmt_g(est.coverage.mean),
                fmt_g(est.coverage.std_error),
                fmt_g(est.load.mean),
                fmt_g(est.load.std_error)
            );
        }
    }
    Ok(csv)
}

pub fn cmd_oracle(config: &ExperimentConfig, ps: &[f64], per_node: bool, limit: usize) -> Result<String> {
    let g = config.graph()?;
    let source = pick_source(&g, config.source, config.seed)?;
    let k = config.k()?;
    let rho = match config.rho.as_slice() {
        [] => 0.0,
        [rho] => *rho,
        _ => bail!("oracle takes a single --rho"),
    };
    let coding = CodingConfig::from_redundancy(k, rho)?;
    let poly = ReachPolynomial::build(&g, source, limit)?;
    let nodes = g.node_count() as f64;
    let mut csv = format!("{ORACLE_HEADER}\n");
    let mut node_rows = format!("{ORACLE_NODE_HEADER}\n");
    for &p in ps {
        let profile = poly.evaluate(p)?;
        let (receivers, transmissions) = exact_expectations(&profile, &coding, &g)?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            fmt_g(p),
            coding.n(),
            fmt_g(receivers),
            fmt_g(receivers / nodes),
            fmt_g(transmissions)
        );
        for (v, &q) in profile.q.iter().enumerate() {
            let decode = binomial_tail(coding.n() as u64, q, k as u64);
            let _ = writeln!(node_rows, "{},{v},{},{}", fmt_g(p), fmt_g(q), fmt_g(decode));
        }
    }
    if per_node {
        csv.push('\n');
        csv.push_str(&node_rows);
    }
    Ok(csv)
}

/// `%g` with 6 significant digits.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{x:.*}", (5 - exp) as usize)).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
