//! Monte-Carlo harness: `M` runs on each of `L` graph realizations per
//! `(c, n)` cell, sweeps, histograms, collapse-based threshold estimates,
//! noise-source comparison and mean-field comparison.
//!
//! Every graph and every run draws from its own substream of the master
//! seed, indexed by `(c-index, n-index, graph-index[, trial-index])`. Results
//! are collected in index order and summed exactly, so a sweep is
//! bit-identical for any worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphParams, ShortcutSampler};
use crate::meanfield;
use crate::process::{verify_absorption_identity, SeedVertex, Simulator};
use crate::rng::{substream, tag};
use crate::stats::{linear_fit, Summary};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub k: usize,
    pub c_grid: Vec<f64>,
    pub sizes: Vec<usize>,
    /// Dynamics repetitions per graph.
    pub m: usize,
    /// Graph realizations per cell.
    pub l: usize,
    pub master_seed: u64,
    pub seed_vertex: SeedVertex,
    pub sampler: ShortcutSampler,
}

impl ExperimentConfig {
    pub fn new(k: usize, c_grid: Vec<f64>, sizes: Vec<usize>, m: usize, l: usize, master_seed: u64) -> Self {
        Self {
            k,
            c_grid,
            sizes,
            m,
            l,
            master_seed,
            seed_vertex: SeedVertex::Uniform,
            sampler: ShortcutSampler::default(),
        }
    }

    /// M = 10³, L = 10, n ∈ {800, …, 12800}.
    pub fn desk(k: usize, c_grid: Vec<f64>, master_seed: u64) -> Self {
        Self::new(k, c_grid, vec![800, 1600, 3200, 6400, 12800], 1_000, 10, master_seed)
    }

    /// M = 10⁵, L = 10, n ∈ {3200, …, 25600}.
    pub fn full(k: usize, c_grid: Vec<f64>, master_seed: u64) -> Self {
        Self::new(k, c_grid, vec![3200, 6400, 12800, 25600], 100_000, 10, master_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.l == 0 {
            return Err(Error::InvalidParams("M and L must be at least 1".into()));
        }
        if self.c_grid.is_empty() || self.sizes.is_empty() {
            return Err(Error::InvalidParams("c-grid and sizes must be non-empty".into()));
        }
        for &n in &self.sizes {
            for &c in &self.c_grid {
                GraphParams::new(n, self.k, c)?;
            }
        }
        Ok(())
    }
}

/// Raw samples of one `(c, n)` cell, graph-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSamples {
    pub k: usize,
    pub c: f64,
    pub n: usize,
    pub removed: Vec<u32>,
    /// Runs violating `tau = 2R - 1`; always zero for a correct simulator.
    pub identity_failures: usize,
}

fn run_on_graph(graph: &Graph, seed_vertex: SeedVertex, master: u64, stream: &[u64], trials: usize) -> Vec<(u32, bool)> {
    (0..trials)
        .into_par_iter()
        .map_init(
            || Simulator::new(graph.n()),
            |sim, t| {
                let mut path = stream.to_vec();
                path.push(t as u64);
                let mut rng = substream(master, &path);
                let out = sim
                    .run(graph, seed_vertex, &mut rng, false)
                    .expect("seed vertex validated with the graph");
                (out.final_removed as u32, verify_absorption_identity(&out))
            },
        )
        .collect()
}

/// Builds `L` graphs for cell `(c_idx, n_idx)` and runs `M` trials on each.
pub fn sample_cell(config: &ExperimentConfig, c_idx: usize, n_idx: usize) -> Result<CellSamples> {
    let (c, n, k) = (config.c_grid[c_idx], config.sizes[n_idx], config.k);
    let wrap = |e: Error| Error::Cell {
        k,
        c,
        n,
        source: Box::new(e),
    };
    let params = GraphParams::new(n, k, c).map_err(wrap)?;
    if let SeedVertex::Fixed(v) = config.seed_vertex {
        if v >= n {
            return Err(wrap(Error::VertexOutOfRange { vertex: v, n }));
        }
    }
    let mut removed = Vec::with_capacity(config.m * config.l);
    let mut identity_failures = 0;
    for g in 0..config.l {
        let cell = [c_idx as u64, n_idx as u64, g as u64];
        let mut graph_rng = substream(config.master_seed, &[tag::GRAPH, cell[0], cell[1], cell[2]]);
        let graph = Graph::build_with(params, config.sampler, &mut graph_rng).map_err(wrap)?;
        let stream = [tag::TRIAL, cell[0], cell[1], cell[2]];
        for (r, ok) in run_on_graph(&graph, config.seed_vertex, config.master_seed, &stream, config.m) {
            removed.push(r);
            identity_failures += usize::from(!ok);
        }
    }
    Ok(CellSamples {
        k,
        c,
        n,
        removed,
        identity_failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub c: f64,
    pub n: usize,
    #[serde(rename = "mean_R")]
    pub mean_r: f64,
    #[serde(rename = "std_R")]
    pub std_r: f64,
    #[serde(rename = "mean_R_over_n")]
    pub mean_r_over_n: f64,
    #[serde(rename = "std_R_over_n")]
    pub std_r_over_n: f64,
    pub samples: usize,
    pub seed: u64,
}

impl SweepRow {
    pub fn from_samples(cell: &CellSamples, seed: u64) -> Self {
        let s = Summary::from_counts(&cell.removed);
        let nf = cell.n as f64;
        Self {
            k: cell.k,
            c: cell.c,
            n: cell.n,
            mean_r: s.mean,
            std_r: s.std_dev(),
            mean_r_over_n: s.mean / nf,
            std_r_over_n: s.std_dev() / nf,
            samples: s.count,
            seed,
        }
    }

    /// Standard error of `mean_R / n`.
    pub fn ratio_std_error(&self) -> f64 {
        self.std_r_over_n / (self.samples as f64).sqrt()
    }

    pub fn std_error(&self) -> f64 {
        self.std_r / (self.samples as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub identity_failures: usize,
}

pub const SWEEP_HEADER: &str = "k,c,n,mean_R,std_R,mean_R_over_n,std_R_over_n,samples,seed";

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).expect("in-memory CSV write");
        }
        let bytes = w.into_inner().expect("in-memory CSV flush");
        if self.rows.is_empty() {
            return format!("{SWEEP_HEADER}\n");
        }
        String::from_utf8(bytes).expect("CSV is UTF-8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        if header.join(",") != SWEEP_HEADER {
            return Err(Error::Parse(format!("unexpected sweep header {header:?}")));
        }
        let rows = reader
            .deserialize()
            .collect::<std::result::Result<Vec<SweepRow>, _>>()
            .map_err(|e| Error::Parse(e.to_string()))?;
        Ok(Self {
            rows,
            identity_failures: 0,
        })
    }

    pub fn ks(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = self.rows.iter().map(|r| r.k).collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    }

    pub fn rows_for(&self, k: usize) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.k == k)
    }

    pub fn merge(&mut self, other: SweepTable) {
        self.rows.extend(other.rows);
        self.identity_failures += other.identity_failures;
    }
}

/// All cells of the sweep with their raw samples, c-major then n.
pub fn monte_carlo_cells(config: &ExperimentConfig) -> Result<Vec<CellSamples>> {
    config.validate()?;
    let mut cells = Vec::with_capacity(config.c_grid.len() * config.sizes.len());
    for c_idx in 0..config.c_grid.len() {
        for n_idx in 0..config.sizes.len() {
            cells.push(sample_cell(config, c_idx, n_idx)?);
        }
    }
    Ok(cells)
}

pub fn table_from_cells(cells: &[CellSamples], seed: u64) -> SweepTable {
    SweepTable {
        rows: cells.iter().map(|c| SweepRow::from_samples(c, seed)).collect(),
        identity_failures: cells.iter().map(|c| c.identity_failures).sum(),
    }
}

pub fn monte_carlo(config: &ExperimentConfig) -> Result<SweepTable> {
    Ok(table_from_cells(&monte_carlo_cells(config)?, config.master_seed))
}

/// `lo, lo + step, …` up to and including `hi` (with a half-step margin
/// against rounding). Values are rounded to 12 significant decimals.
pub fn c_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !lo.is_finite() || !hi.is_finite() || lo < 0.0 || hi < lo {
        return Err(Error::InvalidParams(format!("bad grid {lo}:{hi}:{step}")));
    }
    let count = ((hi - lo) / step + 0.5).floor() as usize + 1;
    Ok((0..count)
        .map(|i| {
            let v = lo + i as f64 * step;
            (v * 1e12).round() / 1e12
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramMode {
    /// Unit-width bins over the raw count `R`.
    RawR,
    /// Equal-width bins of `R / n` on `[0, 1]`.
    ROverN,
}

pub const DEFAULT_RATIO_BINS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub mode: HistogramMode,
    /// `counts.len() + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn sample_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn masses(&self) -> Vec<f64> {
        let total = self.sample_count() as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Center of the most populated bin (lowest on ties).
    pub fn mode_center(&self) -> f64 {
        let (i, _) = self
            .counts
            .iter()
            .enumerate()
            .fold((0, 0), |best, (i, &c)| if c > best.1 { (i, c) } else { best });
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    /// CSV with header `bin_lo,bin_hi,mass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,mass\n");
        for (i, m) in self.masses().iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.edges[i], self.edges[i + 1], m));
        }
        out
    }

    /// Linear fit of `ln(mass)` against bin start over occupied bins;
    /// returns `(slope, r²)`.
    pub fn log_linear_fit(&self) -> (f64, f64) {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .masses()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(i, &m)| (self.edges[i], m.ln()))
            .unzip();
        let (slope, _, r2) = linear_fit(&x, &y);
        (slope, r2)
    }
}

pub fn histogram(samples: &[u32], n: usize, mode: HistogramMode, bins: usize) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("histogram needs at least one sample"));
    }
    match mode {
        HistogramMode::RawR => {
            let lo = *samples.iter().min().expect("non-empty");
            let hi = *samples.iter().max().expect("non-empty");
            let mut counts = vec![0u64; (hi - lo + 1) as usize];
            for &s in samples {
                counts[(s - lo) as usize] += 1;
            }
            let edges = (lo..=hi + 1).map(f64::from).collect();
            Ok(Histogram { mode, edges, counts })
        }
        HistogramMode::ROverN => {
            if bins == 0 || n == 0 {
                return Err(Error::InvalidParams("ratio histogram needs bins >= 1 and n >= 1".into()));
            }
            let mut counts = vec![0u64; bins];
            for &s in samples {
                let r = s as f64 / n as f64;
                let b = ((r * bins as f64) as usize).min(bins - 1);
                counts[b] += 1;
            }
            let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
            Ok(Histogram { mode, edges, counts })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub c1_hat: f64,
    pub c2_hat: f64,
}

/// Relative spread of a per-size statistic around the smallest size:
/// `max_n |s(n) - s(n_ref)| / s(n_ref)`.
fn relative_spread(rows: &[&SweepRow], stat: impl Fn(&SweepRow) -> f64) -> f64 {
    let reference = rows.iter().min_by_key(|r| r.n).expect("non-empty");
    let base = stat(reference);
    rows.iter()
        .map(|r| (stat(r) - base).abs() / base)
        .fold(0.0, f64::max)
}

/// Collapse-based threshold estimates from a single-`k` sweep.
///
/// `c1_hat` is the largest grid `c` where the raw mean `R` agrees across
/// sizes within `tol_lower`; `c2_hat` is the smallest grid `c` where `R / n`
/// agrees within `tol_upper`.
pub fn estimate_thresholds(table: &SweepTable, tol_lower: f64, tol_upper: f64) -> Result<ThresholdEstimate> {
    let ks = table.ks();
    if ks.len() != 1 {
        return Err(Error::InvalidParams(format!("table must hold exactly one k, found {ks:?}")));
    }
    let mut grid: Vec<f64> = table.rows.iter().map(|r| r.c).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let columns: Vec<Vec<&SweepRow>> = grid
        .iter()
        .map(|&c| table.rows.iter().filter(|r| r.c == c).collect())
        .collect();
    let sizes = columns.iter().map(Vec::len).min().unwrap_or(0);
    if sizes < 3 || grid.len() < 2 {
        return Err(Error::InvalidParams(
            "need at least 3 sizes per c and 2 grid points".into(),
        ));
    }

    let raw: Vec<bool> = columns
        .iter()
        .map(|rows| relative_spread(rows, |r| r.mean_r) < tol_lower)
        .collect();
    let ratio: Vec<bool> = columns
        .iter()
        .map(|rows| relative_spread(rows, |r| r.mean_r_over_n) < tol_upper)
        .collect();

    let Some(lower) = raw.iter().rposition(|&ok| ok) else {
        return Err(Error::NoCollapse("raw R does not collapse anywhere on the grid".into()));
    };
    let Some(upper) = ratio.iter().position(|&ok| ok) else {
        return Err(Error::NoCollapse("R/n does not collapse anywhere on the grid".into()));
    };
    let estimate = ThresholdEstimate {
        c1_hat: grid[lower],
        c2_hat: grid[upper],
    };
    if estimate.c1_hat > estimate.c2_hat {
        return Err(Error::NoCollapse(format!(
            "collapse regions overlap: c1_hat = {} > c2_hat = {}",
            estimate.c1_hat, estimate.c2_hat
        )));
    }
    Ok(estimate)
}

/// JSON threshold report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub k: usize,
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub c1_theory: f64,
    pub c2_theory: Option<f64>,
    pub grid: Vec<f64>,
    pub tol_lower: f64,
    pub tol_upper: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub n: usize,
    pub k: usize,
    pub c: f64,
    pub m: usize,
    pub l: usize,
    pub master_seed: u64,
    pub seed_vertex: SeedVertex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteStats {
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl From<Summary> for RouteStats {
    fn from(s: Summary) -> Self {
        Self {
            mean: s.mean,
            variance: s.variance,
            std_error: s.std_error(),
            samples: s.count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub n: usize,
    pub k: usize,
    pub c: f64,
    /// `M` runs on one fixed graph.
    pub dynamical: RouteStats,
    /// One run on each of `L` graphs.
    pub topological: RouteStats,
    /// Topological over dynamical sample variance.
    pub variance_ratio: f64,
    /// `|Δmean| / sqrt(se_dyn² + se_topo²)`.
    pub z_score: f64,
    pub agree_within_3sigma: bool,
    pub seed: u64,
}

/// Compares the dynamical-noise and topological-noise averaging routes.
pub fn compare_noise_sources(cfg: &NoiseConfig) -> Result<NoiseReport> {
    if cfg.m == 0 || cfg.m != cfg.l {
        return Err(Error::InvalidParams(format!(
            "noise comparison needs M = L >= 1, got M = {}, L = {}",
            cfg.m, cfg.l
        )));
    }
    let params = GraphParams::new(cfg.n, cfg.k, cfg.c)?;
    let master = cfg.master_seed;

    let fixed = Graph::build(params, &mut substream(master, &[tag::GRAPH, 0, 0, 0]))?;
    let dynamical: Vec<u32> = run_on_graph(&fixed, cfg.seed_vertex, master, &[tag::TRIAL, 0, 0, 0], cfg.m)
        .into_iter()
        .map(|(r, _)| r)
        .collect();

    let topological: Vec<u32> = (0..cfg.l)
        .into_par_iter()
        .map(|g| -> Result<u32> {
            let graph = Graph::build(params, &mut substream(master, &[tag::GRAPH, 1, 0, g as u64]))?;
            let mut rng = substream(master, &[tag::TRIAL, 1, 0, g as u64, 0]);
            Ok(Simulator::new(cfg.n).run(&graph, cfg.seed_vertex, &mut rng, false)?.final_removed as u32)
        })
        .collect::<Result<_>>()?;

    let dynamical = RouteStats::from(Summary::from_counts(&dynamical));
    let topological = RouteStats::from(Summary::from_counts(&topological));
    let combined = (dynamical.std_error.powi(2) + topological.std_error.powi(2)).sqrt();
    let diff = (dynamical.mean - topological.mean).abs();
    let z_score = if combined > 0.0 {
        diff / combined
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(NoiseReport {
        n: cfg.n,
        k: cfg.k,
        c: cfg.c,
        dynamical,
        topological,
        variance_ratio: topological.variance / dynamical.variance,
        z_score,
        agree_within_3sigma: z_score <= 3.0,
        seed: master,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldGap {
    pub c: f64,
    pub n: usize,
    pub mean_r_over_n: f64,
    pub std_error: f64,
    pub z_inf: f64,
    /// `z_inf - mean_R/n`.
    pub gap: f64,
    /// `mean_R/n > z_inf + 3σ`.
    pub violation: bool,
}

/// Pairs the largest-`n` row of each `c` with `z∞(k, c)`.
pub fn meanfield_comparison(table: &SweepTable, k: usize) -> Result<Vec<MeanFieldGap>> {
    let mut best: Vec<&SweepRow> = Vec::new();
    for row in table.rows_for(k) {
        match best.iter_mut().find(|r| r.c == row.c) {
            Some(slot) if slot.n < row.n => *slot = row,
            Some(_) => {}
            None => best.push(row),
        }
    }
    if best.is_empty() {
        return Err(Error::EmptyInput("no sweep rows for this k"));
    }
    best.sort_by(|a, b| a.c.total_cmp(&b.c));
    best.into_iter()
        .map(|row| {
            let z_inf = meanfield::z_infinity(k, row.c)?;
            let se = row.ratio_std_error();
            Ok(MeanFieldGap {
                c: row.c,
                n: row.n,
                mean_r_over_n: row.mean_r_over_n,
                std_error: se,
                z_inf,
                gap: z_inf - row.mean_r_over_n,
                violation: row.mean_r_over_n > z_inf + 3.0 * se,
            })
        })
        .collect()
}
