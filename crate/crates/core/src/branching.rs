//! Blocking vertices, blocked clusters and the branching-process bounds on
//! the phase transition.
//!
//! A vertex whose first transmission attempt targets `v - 1` is a right
//! blocking vertex (rbv); one whose first attempt targets `v + 1` is a left
//! blocking vertex (lbv). The blocked cluster of `v` stretches left until `k`
//! consecutive lbv and right until `k` consecutive rbv. Its side lengths
//! converge in law to `X_k`, the number of flips of an `α`-coin needed to see
//! `k` heads in a row.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::meanfield::alpha;
use crate::poisson;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Blocking {
    #[default]
    None,
    /// First choice is `v + 1`.
    Left,
    /// First choice is `v - 1`.
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockingProfile {
    k: usize,
    flags: Vec<Blocking>,
}

impl BlockingProfile {
    pub fn new(k: usize, flags: Vec<Blocking>) -> Self {
        Self { k, flags }
    }

    pub fn n(&self) -> usize {
        self.flags.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_lbv(&self, v: usize) -> bool {
        self.flags[v] == Blocking::Left
    }

    pub fn is_rbv(&self, v: usize) -> bool {
        self.flags[v] == Blocking::Right
    }

    pub fn flags(&self) -> &[Blocking] {
        &self.flags
    }

    pub fn rbv_fraction(&self) -> f64 {
        self.flags.iter().filter(|&&b| b == Blocking::Right).count() as f64 / self.n() as f64
    }

    pub fn lbv_fraction(&self) -> f64 {
        self.flags.iter().filter(|&&b| b == Blocking::Left).count() as f64 / self.n() as f64
    }
}

/// Draws every vertex's first uniform neighbour choice.
pub fn classify_blocking<R: Rng + ?Sized>(graph: &Graph, rng: &mut R) -> BlockingProfile {
    let (n, k) = (graph.n(), graph.k());
    let flags = (0..n)
        .map(|v| {
            let u = graph.neighbor_at(v, rng.random_range(0..graph.degree(v)));
            if u == (v + 1) % n {
                Blocking::Left
            } else if u == (v + n - 1) % n {
                Blocking::Right
            } else {
                Blocking::None
            }
        })
        .collect();
    BlockingProfile { k, flags }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockedCluster {
    pub center: usize,
    pub j_minus: usize,
    pub j_plus: usize,
}

impl BlockedCluster {
    pub fn size(&self) -> usize {
        1 + self.j_minus + self.j_plus
    }

    /// Vertices `center - j_minus ..= center + j_plus`, modulo `n`.
    pub fn vertices(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        let start = (self.center + n - self.j_minus % n) % n;
        (0..self.size()).map(move |i| (start + i) % n)
    }
}

/// Default scan limit `⌈n^0.45⌉`.
pub fn default_scan_limit(n: usize) -> usize {
    ((n as f64).powf(0.45).ceil() as usize).max(1)
}

/// Scans outward from `v` for the first run of `k` consecutive lbv on the
/// left and `k` consecutive rbv on the right. The run is searched strictly
/// on its own side of `v`, so each side length is at least `k`.
pub fn blocked_cluster(profile: &BlockingProfile, v: usize, scan_limit: usize) -> Result<BlockedCluster> {
    let n = profile.n();
    if v >= n {
        return Err(Error::VertexOutOfRange { vertex: v, n });
    }
    let k = profile.k;
    let scan = |side: &'static str, step: &dyn Fn(usize) -> usize, hit: &dyn Fn(usize) -> bool| {
        let mut run = 0;
        for i in 1..=scan_limit {
            if hit(step(i)) {
                run += 1;
                if run == k {
                    return Ok(i);
                }
            } else {
                run = 0;
            }
        }
        Err(Error::ScanLimitExceeded {
            vertex: v,
            side,
            limit: scan_limit,
        })
    };
    let j_minus = scan("left", &|i| (v + n - i % n) % n, &|u| profile.is_lbv(u))?;
    let j_plus = scan("right", &|i| (v + i) % n, &|u| profile.is_rbv(u))?;
    Ok(BlockedCluster {
        center: v,
        j_minus,
        j_plus,
    })
}

/// Blocked clusters for many centers; scan-limit failures are counted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterSample {
    pub clusters: Vec<BlockedCluster>,
    pub exceedances: usize,
}

pub fn sample_clusters(
    profile: &BlockingProfile,
    centers: impl IntoIterator<Item = usize>,
    scan_limit: usize,
) -> Result<ClusterSample> {
    let mut sample = ClusterSample::default();
    for v in centers {
        match blocked_cluster(profile, v, scan_limit) {
            Ok(c) => sample.clusters.push(c),
            Err(Error::ScanLimitExceeded { .. }) => sample.exceedances += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(sample)
}

/// `E[X_k] = (α^{-k} - 1) / (1 - α)`, with the limit `k` at `α = 1`.
pub fn expected_run_length(alpha: f64, k: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if alpha == 1.0 {
        return Ok(k as f64);
    }
    Ok((alpha.powi(-(k as i32)) - 1.0) / (1.0 - alpha))
}

/// `E|B_v| = 1 + 2 E[X_k]` with `α = α(k, c)`.
pub fn expected_blocked_cluster_size(k: usize, c: f64) -> f64 {
    let a = alpha(k, c, poisson::DEFAULT_TOL);
    1.0 + 2.0 * expected_run_length(a, k).expect("alpha(k, c) lies in (0, 1/2k]")
}

/// Which form of the subcritical offspring mean to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubcriticalVariant {
    /// `E|B_0| c`, i.e. `(1 + 2 (α^{-k} - 1) / (1 - α)) c`.
    #[default]
    Cluster,
    /// `(1 + 2 (α^{-k} + 1) / (1 - α)) c`.
    Lemma,
}

/// Mean offspring of the dominating branching process.
pub fn subcritical_mean(k: usize, c: f64, variant: SubcriticalVariant) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    match variant {
        SubcriticalVariant::Cluster => expected_blocked_cluster_size(k, c) * c,
        SubcriticalVariant::Lemma => {
            let a = alpha(k, c, poisson::DEFAULT_TOL);
            (1.0 + 2.0 * (a.powi(-(k as i32)) + 1.0) / (1.0 - a)) * c
        }
    }
}

/// Mean offspring of the dominated branching process,
/// `E[X / (X+2k+1)^2] + 2 E[X (X-1) / (X+2k+1)^2]`, `X ~ Poisson(c)`.
pub fn supercritical_mean(k: usize, c: f64) -> f64 {
    let shift = (2 * k + 1) as f64;
    poisson::expectation(c, poisson::DEFAULT_TOL, |x| {
        let xf = x as f64;
        let d = (xf + shift).powi(2);
        xf / d + 2.0 * xf * (xf - 1.0).max(0.0) / d
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffspringMean {
    Subcritical(SubcriticalVariant),
    Supercritical,
}

impl OffspringMean {
    pub fn eval(self, k: usize, c: f64) -> f64 {
        match self {
            OffspringMean::Subcritical(v) => subcritical_mean(k, c, v),
            OffspringMean::Supercritical => supercritical_mean(k, c),
        }
    }
}

/// Upper end of the bracket search in [`critical_c`].
pub const DEFAULT_C_CEILING: f64 = 1.0e4;

/// Root of `mean(k, ·) = 1` by bisection on `[0, c_hi]`, doubling `c_hi`
/// (from 1) until the mean exceeds one.
pub fn critical_c(mean: OffspringMean, k: usize, tol: f64) -> Result<f64> {
    critical_c_with_ceiling(mean, k, tol, DEFAULT_C_CEILING)
}

pub fn critical_c_with_ceiling(mean: OffspringMean, k: usize, tol: f64, ceiling: f64) -> Result<f64> {
    if k == 0 || !(tol > 0.0) {
        return Err(Error::InvalidParams(format!("need k >= 1 and tol > 0, got k={k}, tol={tol}")));
    }
    let f = |c: f64| mean.eval(k, c) - 1.0;
    let mut hi = 1.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
        if hi > ceiling {
            return Err(Error::NoRoot(format!(
                "{mean:?} mean stays below 1 for k = {k} up to c = {ceiling}"
            )));
        }
    }
    bisect(f, 0.0, hi, tol)
}

/// Bisection for an increasing sign change `f(lo) <= 0 < f(hi)`, stopping
/// once the bracket is narrower than `tol`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    if f(lo) > 0.0 || f(hi) <= 0.0 {
        return Err(Error::NoRoot(format!("[{lo}, {hi}] does not bracket a root")));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// JSON summary of the theoretical thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryThresholds {
    pub k: usize,
    pub c1_theory: f64,
    /// `None` when no root exists below the search ceiling.
    pub c2_theory: Option<f64>,
    pub variant: SubcriticalVariant,
}

pub fn theory_thresholds(k: usize, variant: SubcriticalVariant, tol: f64) -> Result<TheoryThresholds> {
    let c1_theory = critical_c(OffspringMean::Subcritical(variant), k, tol)?;
    let c2_theory = match critical_c(OffspringMean::Supercritical, k, tol) {
        Ok(c) => Some(c),
        Err(Error::NoRoot(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(TheoryThresholds {
        k,
        c1_theory,
        c2_theory,
        variant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(k: usize, pattern: &str) -> BlockingProfile {
        let flags = pattern
            .chars()
            .map(|ch| match ch {
                'L' => Blocking::Left,
                'R' => Blocking::Right,
                _ => Blocking::None,
            })
            .collect();
        BlockingProfile::new(k, flags)
    }

    #[test]
    fn minimal_cluster() {
        // center 3, k = 2: vertices 1,2 are lbv and 4,5 are rbv.
        let p = profile(2, ".LL.RR..");
        let c = blocked_cluster(&p, 3, 8).unwrap();
        assert_eq!((c.j_minus, c.j_plus), (2, 2));
        assert_eq!(c.size(), 5);
        assert_eq!(c.vertices(8).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn runs_must_be_consecutive() {
        //            0123456789
        let p = profile(2, "L.LL.R.RR.");
        let c = blocked_cluster(&p, 4, 10).unwrap();
        assert_eq!(c.j_minus, 2); // vertices 2,3
        assert_eq!(c.j_plus, 4); // vertices 7,8
        // The left scan from 9 wraps past 0 to find 2,3: distance 7.
        let c = blocked_cluster(&p, 9, 10).unwrap();
        assert_eq!(c.j_minus, 7);
        assert_eq!(c.j_plus, 9);
    }

    #[test]
    fn center_itself_is_not_scanned() {
        // 0123456
        let p = profile(1, "L.RLR..");
        let c = blocked_cluster(&p, 3, 5).unwrap();
        assert_eq!((c.j_minus, c.j_plus), (3, 1));
    }

    #[test]
    fn scan_limit_reported() {
        let p = profile(1, ".....R");
        let err = blocked_cluster(&p, 2, 3).unwrap_err();
        assert!(matches!(err, Error::ScanLimitExceeded { side: "left", limit: 3, .. }));
        let sample = sample_clusters(&p, [0, 1, 2], 3).unwrap();
        assert_eq!(sample.exceedances, 3);
    }

    #[test]
    fn run_length_values() {
        assert!((expected_run_length(0.5, 1).unwrap() - 2.0).abs() < 1e-15);
        assert!((expected_run_length(0.5, 2).unwrap() - 6.0).abs() < 1e-15);
        assert_eq!(expected_run_length(1.0, 4).unwrap(), 4.0);
        assert!(expected_run_length(0.0, 1).is_err());
        assert!(expected_run_length(1.5, 1).is_err());
    }

    #[test]
    fn cluster_size_without_shortcuts() {
        assert!((expected_blocked_cluster_size(1, 0.0) - 5.0).abs() < 1e-12);
        assert!((expected_blocked_cluster_size(2, 0.0) - 41.0).abs() < 1e-12);
    }

    #[test]
    fn means_vanish_at_zero() {
        for k in 1..=4 {
            assert_eq!(subcritical_mean(k, 0.0, SubcriticalVariant::Cluster), 0.0);
            assert_eq!(subcritical_mean(k, 0.0, SubcriticalVariant::Lemma), 0.0);
            assert_eq!(supercritical_mean(k, 0.0), 0.0);
        }
    }

    #[test]
    fn small_c_is_subcritical() {
        let m = subcritical_mean(1, 0.01, SubcriticalVariant::Cluster);
        let expected = expected_blocked_cluster_size(1, 0.01) * 0.01;
        assert_eq!(m, expected);
        assert!(m > 0.0 && m < 1.0);
    }

    #[test]
    fn lemma_variant_is_larger() {
        for &c in &[0.1, 0.5, 2.0] {
            assert!(
                subcritical_mean(1, c, SubcriticalVariant::Lemma)
                    > subcritical_mean(1, c, SubcriticalVariant::Cluster)
            );
        }
    }

    #[test]
    fn bisect_rejects_bad_bracket() {
        assert!(bisect(|x| x - 5.0, 0.0, 1.0, 1e-9).is_err());
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ceiling_reports_no_root() {
        let err = critical_c_with_ceiling(OffspringMean::Supercritical, 1, 1e-9, 0.5).unwrap_err();
        assert!(matches!(err, Error::NoRoot(_)));
    }
}
