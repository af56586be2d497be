//! `rumour`: command-line driver.
//!
//! Exit status: 0 on success, 2 on a usage or validation error (reported
//! before any work starts), 1 on a runtime failure.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rumour_core::branching::{self, SubcriticalVariant};
use rumour_core::experiments::{self, ExperimentConfig, HistogramMode, NoiseConfig, SweepTable, ThresholdReport};
use rumour_core::graph::{Graph, GraphParams};
use rumour_core::meanfield::{self, MeanFieldParams, MeanFieldReport, MeanFieldState, OdeOptions};
use rumour_core::process::{self, RunReport, SeedVertex};
use rumour_core::rng;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "rumour", version, about = "Maki-Thompson rumour process on Newman-Watts small-world graphs")]
struct Cli {
    /// Worker threads for Monte-Carlo commands (default: available parallelism).
    #[arg(long, global = true, env = "RUMOUR_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a graph and write it as JSON.
    Graph(GraphCmd),
    /// Run the rumour process once.
    Run(RunCmd),
    /// Monte-Carlo sweep over a c-grid and system sizes, written as CSV.
    Sweep(SweepCmd),
    /// Histogram of R (raw) or R/n (ratio) for one cell.
    Hist(HistCmd),
    /// Mean-field alpha, lambda and final stifler fraction.
    Meanfield(MeanfieldCmd),
    /// Branching-process thresholds, optionally with collapse estimates from a sweep.
    Thresholds(ThresholdsCmd),
    /// Dynamical vs topological noise comparison.
    Noise(NoiseCmd),
    /// Per-center blocked clusters as CSV.
    Blocked(BlockedCmd),
}

#[derive(Args, Debug, Clone)]
struct GraphArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    c: f64,
}

impl GraphArgs {
    fn params(&self) -> Result<GraphParams, Failure> {
        GraphParams::new(self.n, self.k, self.c).map_err(|e| Failure::usage("--n/--k/--c", e))
    }
}

#[derive(Args, Debug)]
struct GraphCmd {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Print degree statistics and the binomial goodness of fit instead of the graph.
    #[arg(long)]
    stats: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunCmd {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Initial spreader (0-indexed); uniform when omitted.
    #[arg(long)]
    seed_vertex: Option<usize>,
    /// Sample shortcuts in tandem with the process.
    #[arg(long)]
    coupled: bool,
    /// Write the (t, I, S, R) trajectory CSV here.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// M = 1000, L = 10, sizes 800..12800.
    Desk,
    /// M = 100000, L = 10, sizes 3200..25600.
    Full,
}

#[derive(Args, Debug)]
struct SweepCmd {
    #[arg(long)]
    k: usize,
    /// `lo:hi:step`, a comma list, or a single value.
    #[arg(long)]
    c: String,
    /// Comma-separated system sizes.
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum HistMode {
    Raw,
    Ratio,
}

#[derive(Args, Debug)]
struct HistCmd {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value_t = 1000)]
    m: usize,
    #[arg(long, default_value_t = 10)]
    l: usize,
    #[arg(long, value_enum, default_value_t = HistMode::Raw)]
    mode: HistMode,
    #[arg(long, default_value_t = experiments::DEFAULT_RATIO_BINS)]
    bins: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MeanfieldCmd {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    c: f64,
    /// Override alpha (e.g. 1/(2k+c) for a homogeneous degree).
    #[arg(long)]
    alpha: Option<f64>,
    /// Also integrate the ODE and report z at the final time.
    #[arg(long)]
    ode: bool,
    /// Initial spreader mass is 1/n_ref.
    #[arg(long, default_value_t = 1e4)]
    n_ref: f64,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Write the ODE trajectory CSV here (implies --ode).
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ThresholdsCmd {
    #[arg(long)]
    k: usize,
    /// Use the (α^{-k}+1) form of the subcritical mean.
    #[arg(long)]
    lemma_variant: bool,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Sweep CSV (single k) to estimate c1_hat and c2_hat from.
    #[arg(long)]
    sweep: Option<PathBuf>,
    #[arg(long, default_value_t = 0.10)]
    tol_lower: f64,
    #[arg(long, default_value_t = 0.05)]
    tol_upper: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NoiseCmd {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value_t = 1000)]
    m: usize,
    #[arg(long, default_value_t = 1000)]
    l: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BlockedCmd {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value_t = 1000)]
    centers: usize,
    /// Defaults to ceil(n^0.45).
    #[arg(long)]
    scan_limit: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl Failure {
    fn usage(flag: &str, msg: impl std::fmt::Display) -> Self {
        Failure::Usage(format!("{flag}: {msg}"))
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<rumour_core::Error> for Failure {
    fn from(e: rumour_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Output sink opened before any work so an unwritable path fails early.
struct Sink {
    file: Option<(PathBuf, File)>,
}

impl Sink {
    fn open(path: Option<&PathBuf>, flag: &str) -> Result<Self, Failure> {
        let file = match path {
            Some(p) => Some((
                p.clone(),
                File::create(p).map_err(|e| Failure::usage(flag, format!("cannot write {}: {e}", p.display())))?,
            )),
            None => None,
        };
        Ok(Self { file })
    }

    fn write(self, text: &str) -> anyhow::Result<()> {
        match self.file {
            Some((path, mut f)) => f
                .write_all(text.as_bytes())
                .with_context(|| format!("writing {}", path.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn check_positive(flag: &str, v: usize) -> Result<(), Failure> {
    if v == 0 {
        return Err(Failure::usage(flag, "must be at least 1"));
    }
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = |e: String| Failure::usage("--c", e);
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(format!("expected lo:hi:step, got {spec:?}")));
        }
        let nums = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|e| bad(format!("{p:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        experiments::c_grid(nums[0], nums[1], nums[2]).map_err(|e| bad(e.to_string()))
    } else {
        spec.split(',')
            .map(|p| match p.trim().parse::<f64>() {
                Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
                Ok(v) => Err(bad(format!("{v} is not a non-negative number"))),
                Err(e) => Err(bad(format!("{p:?}: {e}"))),
            })
            .collect()
    }
}

fn parse_sizes(spec: &str) -> Result<Vec<usize>, Failure> {
    spec.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| Failure::usage("--sizes", format!("{p:?}: {e}")))
        })
        .collect()
}

fn to_json<T: serde::Serialize + ?Sized>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("serializable report");
    s.push('\n');
    s
}

fn graph_cmd(cmd: GraphCmd) -> Result<(), Failure> {
    let params = cmd.graph.params()?;
    let sink = Sink::open(cmd.out.as_ref(), "--out")?;
    let seed = resolve_seed(cmd.seed);
    let graph = Graph::build(params, &mut rng::from_seed(seed))?.with_seed(seed);
    if cmd.stats {
        let stats = graph.degree_stats();
        let fit = stats.binomial_fit(&params)?;
        let report = json!({
            "n": params.n, "k": params.k, "c": params.c, "p": params.p, "seed": seed,
            "mean_degree": stats.mean,
            "variance": stats.variance,
            "mean_shortcut_degree": stats.mean_shortcut_degree(),
            "shortcuts": graph.shortcut_count(),
            "chi_square": fit.chi_square,
            "dof": fit.dof,
            "p_value": fit.p_value,
        });
        sink.write(&to_json(&report))?;
    } else {
        let mut text = graph.to_json();
        text.push('\n');
        sink.write(&text)?;
    }
    Ok(())
}

fn run_cmd(cmd: RunCmd) -> Result<(), Failure> {
    let params = cmd.graph.params()?;
    let seed_vertex = match cmd.seed_vertex {
        Some(v) if v >= params.n => return Err(Failure::usage("--seed-vertex", format!("{v} is not below n = {}", params.n))),
        Some(v) => SeedVertex::Fixed(v),
        None => SeedVertex::Uniform,
    };
    if cmd.coupled && cmd.trajectory.is_some() {
        return Err(Failure::usage("--trajectory", "not available with --coupled"));
    }
    let sink = Sink::open(cmd.out.as_ref(), "--out")?;
    let traj_sink = cmd.trajectory.as_ref().map(|p| Sink::open(Some(p), "--trajectory")).transpose()?;
    let seed = resolve_seed(cmd.seed);
    let mut rng = rng::from_seed(seed);
    let outcome = if cmd.coupled {
        process::run_coupled(params, seed_vertex, &mut rng)?.0
    } else {
        let graph = Graph::build(params, &mut rng)?;
        process::run(&graph, seed_vertex, &mut rng, traj_sink.is_some())?
    };
    if !outcome.satisfies_absorption_identity() {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "tau = {} violates tau = 2R - 1 with R = {}",
            outcome.absorption_time,
            outcome.final_removed
        )));
    }
    if let Some(t) = traj_sink {
        t.write(&outcome.trajectory_csv().expect("trajectory recorded"))?;
    }
    sink.write(&to_json(&RunReport::new(&params, &outcome, Some(seed))))?;
    Ok(())
}

fn sweep_cmd(cmd: SweepCmd) -> Result<(), Failure> {
    let grid = parse_grid(&cmd.c)?;
    let mut config = match cmd.preset {
        Preset::Desk => ExperimentConfig::desk(cmd.k, grid, 0),
        Preset::Full => ExperimentConfig::full(cmd.k, grid, 0),
    };
    if let Some(s) = &cmd.sizes {
        config.sizes = parse_sizes(s)?;
    }
    if let Some(m) = cmd.m {
        check_positive("--m", m)?;
        config.m = m;
    }
    if let Some(l) = cmd.l {
        check_positive("--l", l)?;
        config.l = l;
    }
    config
        .validate()
        .map_err(|e| Failure::usage("--k/--c/--sizes", e))?;
    let sink = Sink::open(cmd.out.as_ref(), "--out")?;
    config.master_seed = resolve_seed(cmd.seed);
    let table = experiments::monte_carlo(&config)?;
    if table.identity_failures > 0 {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "{} runs violated tau = 2R - 1",
            table.identity_failures
        )));
    }
    sink.write(&table.to_csv())?;
    Ok(())
}

fn hist_cmd(cmd: HistCmd) -> Result<(), Failure> {
    let params = cmd.graph.params()?;
    check_positive("--m", cmd.m)?;
    check_positive("--l", cmd.l)?;
    check_positive("--bins", cmd.bins)?;
    let sink = Sink::open(cmd.out.as_ref(), "--out")?;
    let seed = resolve_seed(cmd.seed);
    let config = ExperimentConfig::new(params.k, vec![params.c], vec![params.n], cmd.m, cmd.l, seed);
    let cell = experiments::sample_cell(&config, 0, 0)?;
    let mode = match cmd.mode {
        HistMode::Raw => HistogramMode::RawR,
        HistMode::Ratio => HistogramMode::ROverN,
    };
    let hist = experiments::histogram(&cell.removed, params.n, mode, cmd.bins)?;
    sink.write(&hist.to_csv())?;
    Ok(())
}

fn meanfield_cmd(cmd: MeanfieldCmd) -> Result<(), Failure> {
    if cmd.k == 0 {
        return Err(Failure::usage("--k", "must be at least 1"));
    }
    if !cmd.c.is_finite() || cmd.c < 0.0 {
        return Err(Failure::usage("--c", "must be a non-negative number"));
    }
    let params = match cmd.alpha {
        Some(a) if !(a > 0.0 && a <= 1.0) => return Err(Failure::usage("--alpha", "must lie in (0, 1]")),
        Some(a) => MeanFieldParams::with_alpha(cmd.k, cmd.c, a),
        None => MeanFieldParams::new(cmd.k, cmd.c)?,
    };
    if !(cmd.n_ref > 1.0) {
        return Err(Failure::usage("--n-ref", "must exceed 1"));
    }
    let mut opts = OdeOptions::for_params(&params);
    if let Some(dt) = cmd.dt {
        if !(dt > 0.0) {
            return Err(Failure::usage("--dt", "must be positive"));
        }
        opts.dt = dt;
    }
    if let Some(t) = cmd.t_max {
        if !(t > 0.0) {
            return Err(Failure::usage("--t-max", "must be positive"));
        }
        opts.t_max = Some(t);
    }
    let traj_sink = cmd.trajectory.as_ref().map(|p| Sink::open(Some(p), "--trajectory")).transpose()?;

    let mut report = MeanFieldReport::from(&params);
    if cmd.ode || traj_sink.is_some() {
        let traj = meanfield::integrate(&params, MeanFieldState::single_spreader(cmd.n_ref), &opts)?;
        let (t, state) = traj.last();
        report.z_ode = Some(state.z);
        report.t_max = Some(t);
        if let Some(s) = traj_sink {
            s.write(&traj.to_csv())?;
        }
    }
    print!("{}", to_json(&report));
    Ok(())
}

fn thresholds_cmd(cmd: ThresholdsCmd) -> Result<(), Failure> {
    if cmd.k == 0 {
        return Err(Failure::usage("--k", "must be at least 1"));
    }
    if !(cmd.tol > 0.0) {
        return Err(Failure::usage("--tol", "must be positive"));
    }
    let table = match &cmd.sweep {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage("--sweep", format!("cannot read {}: {e}", path.display())))?;
            let table = SweepTable::from_csv(&text).map_err(|e| Failure::usage("--sweep", e))?;
            if table.ks() != vec![cmd.k] {
                return Err(Failure::usage("--sweep", format!("table holds k = {:?}, expected {}", table.ks(), cmd.k)));
            }
            Some(table)
        }
        None => None,
    };
    let sink = Sink::open(cmd.out.as_ref(), "--out")?;
    let variant = if cmd.lemma_variant {
        SubcriticalVariant::Lemma
    } else {
        SubcriticalVariant::Cluster
    };
    let theory = branching::theory_thresholds(cmd.k, variant, cmd.tol)?;
    let other = if cmd.lemma_variant {
        SubcriticalVariant::Cluster
    } else {
        SubcriticalVariant::Lemma
    };
    let other_c1 = branching::critical_c(branching::OffspringMean::Subcritical(other), cmd.k, cmd.tol)?;
    let text = match table {
        None => to_json(&json!({
            "k": theory.k,
            "c1_theory": theory.c1_theory,
            "c2_theory": theory.c2_theory,
            "variant": theory.variant,
            "c1_theory_alternate": other_c1,
        })),
        Some(table) => {
            let est = experiments::estimate_thresholds(&table, cmd.tol_lower, cmd.tol_upper)?;
            let mut grid: Vec<f64> = table.rows.iter().map(|r| r.c).collect();
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            to_json(&ThresholdReport {
                k: cmd.k,
                c1_hat: est.c1_hat,
                c2_hat: est.c2_hat,
                c1_theory: theory.c1_theory,
                c2_theory: theory.c2_theory,
                grid,
                tol_lower: cmd.tol_lower,
                tol_upper: cmd.tol_upper,
                seed: table.rows.first().map(|r| r.seed),
            })
        }
    };
    sink.write(&text)?;
    Ok(())
}

fn noise_cmd(cmd: NoiseCmd) -> Result<(), Failure> {
    let params = cmd.graph.params()?;
    check_positive("--m", cmd.m)?;
    if cmd.l != cmd.m {
        return Err(Failure::usage("--l", format!("must equal --m ({}) for a fair comparison", cmd.m)));
    }
    let sink = Sink::open(cmd.out.as_ref(), "--out")?;
    let cfg = NoiseConfig {
        n: params.n,
        k: params.k,
        c: params.c,
        m: cmd.m,
        l: cmd.l,
        master_seed: resolve_seed(cmd.seed),
        seed_vertex: SeedVertex::Uniform,
    };
    let report = experiments::compare_noise_sources(&cfg)?;
    sink.write(&to_json(&report))?;
    Ok(())
}

fn blocked_cmd(cmd: BlockedCmd) -> Result<(), Failure> {
    let params = cmd.graph.params()?;
    check_positive("--centers", cmd.centers)?;
    let scan_limit = cmd.scan_limit.unwrap_or_else(|| branching::default_scan_limit(params.n));
    check_positive("--scan-limit", scan_limit)?;
    let sink = Sink::open(cmd.out.as_ref(), "--out")?;
    let seed = resolve_seed(cmd.seed);
    let graph = Graph::build(params, &mut rng::substream(seed, &[rng::tag::GRAPH]))?;
    let profile = branching::classify_blocking(&graph, &mut rng::substream(seed, &[rng::tag::BLOCKING]));
    let mut center_rng = rng::substream(seed, &[rng::tag::CENTERS]);
    let centers: Vec<usize> = (0..cmd.centers)
        .map(|_| rand::Rng::random_range(&mut center_rng, 0..params.n))
        .collect();
    let sample = branching::sample_clusters(&profile, centers, scan_limit)?;
    if sample.exceedances > 0 {
        eprintln!(
            "{} of {} centers exceeded the scan limit {scan_limit}",
            sample.exceedances, cmd.centers
        );
    }
    let mut text = String::from("v,j_minus,j_plus\n");
    for c in &sample.clusters {
        text.push_str(&format!("{},{},{}\n", c.center, c.j_minus, c.j_plus));
    }
    sink.write(&text)?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if let Some(w) = cli.workers {
        check_positive("--workers", w)?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Failure::Runtime(e.into()))?;
    }
    match cli.command {
        Command::Graph(c) => graph_cmd(c),
        Command::Run(c) => run_cmd(c),
        Command::Sweep(c) => sweep_cmd(c),
        Command::Hist(c) => hist_cmd(c),
        Command::Meanfield(c) => meanfield_cmd(c),
        Command::Thresholds(c) => thresholds_cmd(c),
        Command::Noise(c) => noise_cmd(c),
        Command::Blocked(c) => blocked_cmd(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
