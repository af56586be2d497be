//! Newman-Watts small-world graphs `G(n, k, p)`.
//!
//! A graph is a ring of `n` vertices where every vertex is joined to its `k`
//! nearest neighbours on each side (local edges), plus shortcut edges added
//! independently with probability `p` between every pair of vertices that are
//! not already ring neighbours. Local edges are never stored; they follow
//! arithmetically from the ring rule. Shortcuts are kept as sorted per-vertex
//! adjacency lists.
//!
//! Vertices are 0-indexed.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

use crate::error::{Error, Result};

/// Parameters of `G(n, k, p)` with `p = c / (n - 2k - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub n: usize,
    pub k: usize,
    pub c: f64,
    pub p: f64,
}

/// Probability that a given non-local pair carries a shortcut.
///
/// `n == 2k + 1` is the complete graph: it has no shortcut slots and only
/// `c == 0` is accepted there.
pub fn shortcut_probability(n: usize, k: usize, c: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    if !c.is_finite() || c < 0.0 {
        return Err(Error::InvalidParams(format!(
            "c must be finite and non-negative, got {c}"
        )));
    }
    let ring = 2 * k + 1;
    if n < ring {
        return Err(Error::InvalidParams(format!(
            "n = {n} is below 2k + 1 = {ring}"
        )));
    }
    if n == ring {
        if c == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::InvalidParams(format!(
            "n = 2k + 1 = {n} leaves no shortcut slots, c must be 0"
        )));
    }
    let p = c / (n - ring) as f64;
    if p >= 1.0 {
        return Err(Error::InvalidParams(format!(
            "shortcut probability c / (n - 2k - 1) = {p} is not below 1"
        )));
    }
    Ok(p)
}

impl GraphParams {
    pub fn new(n: usize, k: usize, c: f64) -> Result<Self> {
        if n > u32::MAX as usize {
            return Err(Error::InvalidParams(format!("n = {n} is too large")));
        }
        let p = shortcut_probability(n, k, c)?;
        Ok(Self { n, k, c, p })
    }

    /// Candidate shortcut endpoints per vertex, `n - 2k - 1`.
    pub fn shortcut_slots(&self) -> usize {
        self.n - 2 * self.k - 1
    }

    /// Number of unordered non-local pairs.
    pub fn eligible_pairs(&self) -> u64 {
        self.n as u64 * self.shortcut_slots() as u64 / 2
    }

    /// Expected total degree, `2k + c`.
    pub fn mean_degree(&self) -> f64 {
        2.0 * self.k as f64 + self.c
    }

    // Row `i` of the lexicographic pair order holds j in [i + k + 1, i + n - k - 1] ∩ [0, n).
    fn row_len(&self, i: usize) -> u64 {
        let lo = i + self.k + 1;
        let hi = (i + self.n - self.k - 1).min(self.n - 1);
        if hi >= lo {
            (hi - lo + 1) as u64
        } else {
            0
        }
    }
}

/// Circular distance between two vertices on the ring.
#[inline]
pub fn ring_distance(n: usize, i: usize, j: usize) -> usize {
    let d = i.abs_diff(j);
    d.min(n - d)
}

/// How shortcut pairs are drawn.
///
/// Both samplers realise independent Bernoulli(p) trials over the eligible
/// pairs in lexicographic order; `GeometricSkip` jumps directly between
/// successes and costs O(n + shortcuts) instead of O(n²).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShortcutSampler {
    PerPair,
    #[default]
    GeometricSkip,
}

/// Calls `hit(i, j)` (with `i < j`) for each eligible pair selected by
/// independent Bernoulli(p) trials.
pub(crate) fn sample_pairs<R: Rng + ?Sized>(
    params: &GraphParams,
    sampler: ShortcutSampler,
    rng: &mut R,
    mut hit: impl FnMut(usize, usize),
) {
    let p = params.p;
    if p <= 0.0 {
        return;
    }
    let (n, k) = (params.n, params.k);
    match sampler {
        ShortcutSampler::PerPair => {
            for i in 0..n {
                let hi = (i + n - k - 1).min(n - 1);
                for j in (i + k + 1)..=hi {
                    if rng.random::<f64>() < p {
                        hit(i, j);
                    }
                }
            }
        }
        ShortcutSampler::GeometricSkip => {
            let total = params.eligible_pairs();
            let gaps = Geometric::new(p).expect("0 < p < 1");
            let mut idx = gaps.sample(rng);
            let (mut row, mut row_start, mut row_len) = (0usize, 0u64, params.row_len(0));
            while idx < total {
                while idx >= row_start + row_len {
                    row_start += row_len;
                    row += 1;
                    row_len = params.row_len(row);
                }
                hit(row, row + k + 1 + (idx - row_start) as usize);
                idx = idx.saturating_add(1).saturating_add(gaps.sample(rng));
            }
        }
    }
}

/// Calls `hit(u)` for each candidate shortcut endpoint `u` of vertex `v`
/// (every `u` at ring distance > k) selected by independent Bernoulli(p)
/// trials, in increasing order of `u`.
pub(crate) fn sample_row<R: Rng + ?Sized>(
    params: &GraphParams,
    v: usize,
    rng: &mut R,
    mut hit: impl FnMut(usize),
) {
    let p = params.p;
    if p <= 0.0 {
        return;
    }
    let (n, k) = (params.n, params.k);
    let slots = params.shortcut_slots() as u64;
    let gaps = Geometric::new(p).expect("0 < p < 1");
    let mut idx = gaps.sample(rng);
    // Candidates are v + k + 1, ..., v + n - k - 1 (mod n), re-sorted by the caller if needed.
    while idx < slots {
        hit((v + k + 1 + idx as usize) % n);
        idx = idx.saturating_add(1).saturating_add(gaps.sample(rng));
    }
}

/// An immutable Newman-Watts graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    params: GraphParams,
    seed: Option<u64>,
    shortcuts: Vec<Vec<u32>>,
}

impl Graph {
    /// Samples `G(n, k, p)` with the default sampler.
    pub fn build<R: Rng + ?Sized>(params: GraphParams, rng: &mut R) -> Result<Self> {
        Self::build_with(params, ShortcutSampler::default(), rng)
    }

    pub fn build_with<R: Rng + ?Sized>(
        params: GraphParams,
        sampler: ShortcutSampler,
        rng: &mut R,
    ) -> Result<Self> {
        let params = GraphParams::new(params.n, params.k, params.c)?;
        let mut shortcuts = vec![Vec::new(); params.n];
        sample_pairs(&params, sampler, rng, |i, j| {
            shortcuts[i].push(j as u32);
            shortcuts[j].push(i as u32);
        });
        // Lexicographic generation already leaves every list sorted.
        debug_assert!(shortcuts.iter().all(|s| s.windows(2).all(|w| w[0] < w[1])));
        Ok(Self {
            params,
            seed: None,
            shortcuts,
        })
    }

    /// Pure ring lattice, no shortcuts.
    pub fn ring(n: usize, k: usize) -> Result<Self> {
        Self::from_shortcuts(GraphParams::new(n, k, 0.0)?, std::iter::empty())
    }

    /// Assembles a graph from explicit shortcut pairs, validating each.
    pub fn from_shortcuts(
        params: GraphParams,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let n = params.n;
        let mut shortcuts: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (a, b) in pairs {
            let (i, j) = (a.min(b), a.max(b));
            if j >= n {
                return Err(Error::VertexOutOfRange { vertex: j, n });
            }
            if ring_distance(n, i, j) <= params.k {
                return Err(Error::InvalidParams(format!(
                    "shortcut {{{i}, {j}}} duplicates a local edge or is a self-loop"
                )));
            }
            shortcuts[i].push(j as u32);
            shortcuts[j].push(i as u32);
        }
        for (v, list) in shortcuts.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidParams(format!(
                    "duplicate shortcut at vertex {v}"
                )));
            }
        }
        Ok(Self {
            params,
            seed: None,
            shortcuts,
        })
    }

    /// Internal constructor for lists already known to be valid and sorted.
    pub(crate) fn from_sorted_lists(params: GraphParams, shortcuts: Vec<Vec<u32>>) -> Self {
        Self {
            params,
            seed: None,
            shortcuts,
        }
    }

    /// Records the seed the graph was generated from (serialized with it).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn params(&self) -> &GraphParams {
        &self.params
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.params.n
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.params.k
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        2 * self.params.k + self.shortcuts[v].len()
    }

    #[inline]
    pub fn shortcut_neighbors(&self, v: usize) -> &[u32] {
        &self.shortcuts[v]
    }

    /// The `idx`-th neighbour of `v` in a fixed order: `v+1..=v+k`, then
    /// `v-1..=v-k`, then shortcuts ascending. `idx < degree(v)`.
    #[inline]
    pub fn neighbor_at(&self, v: usize, idx: usize) -> usize {
        local_or_shortcut(self.params.n, self.params.k, v, idx, &self.shortcuts[v])
    }

    /// All neighbours of `v`, local first.
    pub fn neighbors(&self, v: usize) -> Result<Vec<usize>> {
        self.check_vertex(v)?;
        Ok((0..self.degree(v)).map(|i| self.neighbor_at(v, i)).collect())
    }

    pub fn is_local_edge(&self, i: usize, j: usize) -> bool {
        let d = ring_distance(self.params.n, i, j);
        d > 0 && d <= self.params.k
    }

    pub fn has_shortcut(&self, i: usize, j: usize) -> bool {
        i < self.n() && self.shortcuts[i].binary_search(&(j as u32)).is_ok()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.is_local_edge(i, j) || self.has_shortcut(i, j)
    }

    pub fn local_edge_count(&self) -> usize {
        self.params.n * self.params.k
    }

    pub fn shortcut_count(&self) -> usize {
        self.shortcuts.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Shortcut pairs `(i, j)` with `i < j` in lexicographic order.
    pub fn shortcut_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.shortcuts.iter().enumerate().flat_map(|(i, list)| {
            list.iter()
                .map(|&j| j as usize)
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    pub fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.n() {
            return Err(Error::VertexOutOfRange {
                vertex: v,
                n: self.n(),
            });
        }
        Ok(())
    }

    pub fn degree_stats(&self) -> DegreeStats {
        let n = self.n() as f64;
        let degrees = (0..self.n()).map(|v| self.degree(v) as f64);
        let mean = degrees.clone().sum::<f64>() / n;
        let variance = degrees.map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        let max_sc = self.shortcuts.iter().map(Vec::len).max().unwrap_or(0);
        let mut shortcut_histogram = vec![0u64; max_sc + 1];
        for list in &self.shortcuts {
            shortcut_histogram[list.len()] += 1;
        }
        DegreeStats {
            mean,
            variance,
            shortcut_histogram,
        }
    }

    pub fn to_record(&self) -> GraphRecord {
        GraphRecord {
            n: self.params.n,
            k: self.params.k,
            c: self.params.c,
            p: self.params.p,
            seed: self.seed,
            shortcuts: self.shortcut_pairs().map(|(i, j)| [i, j]).collect(),
        }
    }

    pub fn from_record(record: &GraphRecord) -> Result<Self> {
        let params = GraphParams::new(record.n, record.k, record.c)?;
        if (params.p - record.p).abs() > 1e-12 * params.p.max(1.0) {
            return Err(Error::Parse(format!(
                "p = {} does not match c / (n - 2k - 1) = {}",
                record.p, params.p
            )));
        }
        if record
            .shortcuts
            .windows(2)
            .any(|w| (w[0][0], w[0][1]) >= (w[1][0], w[1][1]))
            || record.shortcuts.iter().any(|&[i, j]| i >= j)
        {
            return Err(Error::Parse(
                "shortcuts must be pairs [i, j] with i < j in strictly increasing order".into(),
            ));
        }
        let graph = Self::from_shortcuts(params, record.shortcuts.iter().map(|&[i, j]| (i, j)))?;
        Ok(match record.seed {
            Some(s) => graph.with_seed(s),
            None => graph,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("graph record serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let record: GraphRecord =
            serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_record(&record)
    }
}

#[inline]
pub(crate) fn local_or_shortcut(n: usize, k: usize, v: usize, idx: usize, shortcuts: &[u32]) -> usize {
    if idx < k {
        let u = v + idx + 1;
        if u >= n {
            u - n
        } else {
            u
        }
    } else if idx < 2 * k {
        let back = idx - k + 1;
        if v >= back {
            v - back
        } else {
            v + n - back
        }
    } else {
        shortcuts[idx - 2 * k] as usize
    }
}

/// Wire form: local edges are implicit, shortcuts are `[i, j]` with `i < j`
/// in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub n: usize,
    pub k: usize,
    pub c: f64,
    pub p: f64,
    pub seed: Option<u64>,
    pub shortcuts: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeStats {
    /// Mean total degree.
    pub mean: f64,
    /// Population variance of the total degree.
    pub variance: f64,
    /// `shortcut_histogram[d]` counts vertices with `d` shortcuts.
    pub shortcut_histogram: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodnessOfFit {
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl DegreeStats {
    pub fn mean_shortcut_degree(&self) -> f64 {
        let total: u64 = self.shortcut_histogram.iter().sum();
        let weighted: u64 = self
            .shortcut_histogram
            .iter()
            .enumerate()
            .map(|(d, &c)| d as u64 * c)
            .sum();
        weighted as f64 / total as f64
    }

    /// Pearson chi-square of the shortcut-degree histogram against
    /// Binomial(n - 2k - 1, p). Bins are pooled from the top until every
    /// pooled bin expects at least five vertices.
    pub fn binomial_fit(&self, params: &GraphParams) -> Result<GoodnessOfFit> {
        let trials = params.shortcut_slots() as u64;
        let binom = Binomial::new(params.p, trials)
            .map_err(|e| Error::InvalidParams(e.to_string()))?;
        let total: u64 = self.shortcut_histogram.iter().sum();
        let total_f = total as f64;

        let mut bins: Vec<(f64, f64)> = Vec::new();
        let (mut obs, mut exp) = (0.0, 0.0);
        let mut cdf = 0.0;
        let top = trials.min(self.shortcut_histogram.len() as u64 + 64);
        for d in 0..=top {
            let e = binom.pmf(d) * total_f;
            cdf += binom.pmf(d);
            obs += self.shortcut_histogram.get(d as usize).copied().unwrap_or(0) as f64;
            exp += e;
            if exp >= 5.0 {
                bins.push((obs, exp));
                obs = 0.0;
                exp = 0.0;
            }
        }
        // Remaining tail mass joins the last bin.
        exp += (1.0 - cdf).max(0.0) * total_f;
        obs += self
            .shortcut_histogram
            .iter()
            .skip(top as usize + 1)
            .sum::<u64>() as f64;
        match bins.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => bins.push((obs, exp)),
        }
        if bins.len() < 2 {
            return Ok(GoodnessOfFit {
                chi_square: 0.0,
                dof: 0,
                p_value: 1.0,
            });
        }
        let chi_square: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
        let dof = bins.len() - 1;
        let p_value = 1.0 - ChiSquared::new(dof as f64).expect("dof > 0").cdf(chi_square);
        Ok(GoodnessOfFit {
            chi_square,
            dof,
            p_value,
        })
    }
}
