//! Library results checked against independent oracles: exhaustive Markov
//! chain enumeration, naive series, coin flips and plain Monte Carlo.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rumour_core::branching::{self, Blocking, OffspringMean, SubcriticalVariant};
use rumour_core::graph::{Graph, GraphParams};
use rumour_core::meanfield::{self, MeanFieldParams, MeanFieldState, OdeOptions};
use rumour_core::process::{self, SeedVertex, Simulator};
use rumour_core::rng;
use rumour_core::stats::{ks_critical, ks_statistic, Summary};

const IGNORANT: u8 = 0;
const SPREADER: u8 = 1;
const STIFLER: u8 = 2;

/// Exact law of the final stifler count from `state`, by recursion over
/// every (spreader, neighbour) choice.
fn exact_law(adj: &[Vec<usize>], state: Vec<u8>, memo: &mut HashMap<Vec<u8>, Vec<f64>>) -> Vec<f64> {
    if let Some(d) = memo.get(&state) {
        return d.clone();
    }
    let n = adj.len();
    let spreaders: Vec<usize> = (0..n).filter(|&v| state[v] == SPREADER).collect();
    let mut law = vec![0.0; n + 1];
    if spreaders.is_empty() {
        law[state.iter().filter(|&&s| s == STIFLER).count()] = 1.0;
    } else {
        for &s in &spreaders {
            for &u in &adj[s] {
                let mut next = state.clone();
                if next[u] == IGNORANT {
                    next[u] = SPREADER;
                } else {
                    next[s] = STIFLER;
                }
                let w = 1.0 / (spreaders.len() * adj[s].len()) as f64;
                for (acc, p) in law.iter_mut().zip(exact_law(adj, next, memo)) {
                    *acc += w * p;
                }
            }
        }
    }
    memo.insert(state, law.clone());
    law
}

fn exact_law_uniform_seed(graph: &Graph) -> Vec<f64> {
    let n = graph.n();
    let adj: Vec<Vec<usize>> = (0..n).map(|v| graph.neighbors(v).unwrap()).collect();
    let mut memo = HashMap::new();
    let mut law = vec![0.0; n + 1];
    for v in 0..n {
        let mut state = vec![IGNORANT; n];
        state[v] = SPREADER;
        for (acc, p) in law.iter_mut().zip(exact_law(&adj, state, &mut memo)) {
            *acc += p / n as f64;
        }
    }
    law
}

fn empirical_law(graph: &Graph, runs: usize, seed: u64) -> Vec<f64> {
    let mut sim = Simulator::new(graph.n());
    let mut rng = rng::from_seed(seed);
    let mut law = vec![0.0; graph.n() + 1];
    for _ in 0..runs {
        law[sim.run(graph, SeedVertex::Uniform, &mut rng, false).unwrap().final_removed] += 1.0 / runs as f64;
    }
    law
}

fn coin_flip_run<R: Rng>(p: f64, k: usize, rng: &mut R) -> usize {
    let (mut flips, mut streak) = (0, 0);
    while streak < k {
        flips += 1;
        if rng.random_bool(p) {
            streak += 1;
        } else {
            streak = 0;
        }
    }
    flips
}

/// `Σ_x P(X = x) f(x)` by forward recurrence from `x = 0`.
fn naive_poisson(c: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut term = (-c).exp();
    let mut sum = 0.0;
    for x in 0..2_000 {
        sum += term * f(x as f64);
        term *= c / (x + 1) as f64;
    }
    sum
}

#[test]
fn triangle_matches_enumeration() {
    let graph = Graph::ring(3, 1).unwrap();
    let exact = exact_law_uniform_seed(&graph);
    assert!((exact[2] - 0.25).abs() < 1e-15);
    assert!((exact[3] - 0.75).abs() < 1e-15);
    let mean: f64 = exact.iter().enumerate().map(|(r, p)| r as f64 * p).sum();
    assert!((mean - 2.75).abs() < 1e-15);

    let sim = empirical_law(&graph, 100_000, 1);
    assert!((sim[2] - 0.25).abs() < 0.01, "P(R=2) = {}", sim[2]);
}

#[test]
fn small_graph_law_matches_enumeration() {
    let params = GraphParams::new(7, 1, 1.0).unwrap();
    let graph = Graph::from_shortcuts(params, [(0, 3), (1, 5), (2, 6)]).unwrap();
    let exact = exact_law_uniform_seed(&graph);
    assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let runs = 200_000;
    let sim = empirical_law(&graph, runs, 2);
    for (r, (&p, &q)) in exact.iter().zip(&sim).enumerate() {
        let se = (p * (1.0 - p) / runs as f64).sqrt();
        assert!((p - q).abs() <= 5.0 * se + 1e-9, "R = {r}: exact {p}, simulated {q}");
    }
}

#[test]
fn coupled_run_matches_fixed_graph_law() {
    let params = GraphParams::new(200, 1, 2.0).unwrap();
    let runs = 2_000;
    let mut rng = rng::from_seed(3);
    let mut sim = Simulator::new(200);
    let plain: Vec<f64> = (0..runs)
        .map(|_| {
            let g = Graph::build(params, &mut rng).unwrap();
            sim.run(&g, SeedVertex::Uniform, &mut rng, false).unwrap().final_removed as f64
        })
        .collect();
    let coupled: Vec<f64> = (0..runs)
        .map(|_| process::run_coupled(params, SeedVertex::Uniform, &mut rng).unwrap().0.final_removed as f64)
        .collect();
    let d = ks_statistic(&plain, &coupled);
    assert!(d < ks_critical(0.001, runs, runs), "KS distance {d}");
}

#[test]
fn coupled_graph_has_binomial_shortcut_count() {
    let params = GraphParams::new(300, 2, 3.0).unwrap();
    let expected = params.eligible_pairs() as f64 * params.p;
    let mut rng = rng::from_seed(4);
    let counts: Vec<f64> = (0..400)
        .map(|_| process::run_coupled(params, SeedVertex::Uniform, &mut rng).unwrap().1.shortcut_count() as f64)
        .collect();
    let s = Summary::from_values(&counts);
    assert!((s.mean - expected).abs() < 4.0 * s.std_error(), "{} vs {expected}", s.mean);
}

#[test]
fn alpha_matches_naive_series_and_sampling() {
    for k in 1..=4 {
        for c in [0.0, 0.3, 1.0, 2.0, 5.0, 10.0, 40.0] {
            let naive = naive_poisson(c, |x| 1.0 / (x + 2.0 * k as f64));
            let a = meanfield::alpha(k, c, 1e-14);
            assert!((a - naive).abs() < 1e-12, "k={k} c={c}: {a} vs {naive}");
        }
    }
    let poisson = Poisson::new(2.0).unwrap();
    let mut rng = rng::from_seed(5);
    let draws: Vec<f64> = (0..2_000_000).map(|_| 1.0 / (poisson.sample(&mut rng) + 2.0)).collect();
    let s = Summary::from_values(&draws);
    assert!((meanfield::alpha(1, 2.0, 1e-14) - s.mean).abs() < 4.0 * s.std_error());
}

#[test]
fn alpha_decreases_in_k_and_c() {
    for k in 1..=4 {
        let values: Vec<f64> = (0..100).map(|i| meanfield::alpha(k, 0.1 * i as f64, 1e-14)).collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]));
        assert!(meanfield::alpha(k + 1, 1.0, 1e-14) < meanfield::alpha(k, 1.0, 1e-14));
    }
}

#[test]
fn supercritical_mean_matches_naive_series_and_sampling() {
    for k in 1..=3 {
        for c in [0.5, 2.0, 10.0] {
            let b = 2.0 * k as f64 + 1.0;
            let naive = naive_poisson(c, |x| (x + 2.0 * x * (x - 1.0)) / (x + b).powi(2));
            let m = branching::supercritical_mean(k, c);
            assert!((m - naive).abs() < 1e-12, "k={k} c={c}: {m} vs {naive}");
        }
    }
    let poisson = Poisson::new(10.0).unwrap();
    let mut rng = rng::from_seed(6);
    let draws: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let x: f64 = poisson.sample(&mut rng);
            (x + 2.0 * x * (x - 1.0)) / (x + 3.0).powi(2)
        })
        .collect();
    let s = Summary::from_values(&draws);
    assert!((branching::supercritical_mean(1, 10.0) - s.mean).abs() < 4.0 * s.std_error());
}

#[test]
fn run_length_matches_coin_flips() {
    let mut rng = rng::from_seed(7);
    for (p, k) in [(0.5, 1), (0.5, 2), (0.3, 2), (0.7, 3)] {
        let flips: Vec<u32> = (0..200_000).map(|_| coin_flip_run(p, k, &mut rng) as u32).collect();
        let s = Summary::from_counts(&flips);
        let exact = branching::expected_run_length(p, k).unwrap();
        assert!((exact - s.mean).abs() < 4.0 * s.std_error(), "p={p} k={k}: {exact} vs {}", s.mean);
    }
    assert_eq!(branching::expected_run_length(0.5, 2).unwrap(), 6.0);
}

#[test]
fn cluster_size_and_subcritical_mean_match_coin_flips() {
    let mut rng = rng::from_seed(8);
    for (k, c) in [(1, 0.5), (2, 1.0)] {
        let a = meanfield::alpha(k, c, 1e-14);
        let sizes: Vec<u32> = (0..200_000)
            .map(|_| (1 + coin_flip_run(a, k, &mut rng) + coin_flip_run(a, k, &mut rng)) as u32)
            .collect();
        let s = Summary::from_counts(&sizes);
        let exact = branching::expected_blocked_cluster_size(k, c);
        assert!((exact - s.mean).abs() < 4.0 * s.std_error(), "k={k} c={c}: {exact} vs {}", s.mean);
        let m = branching::subcritical_mean(k, c, SubcriticalVariant::Cluster);
        assert!((m - exact * c).abs() < 1e-12 * m.max(1.0));
    }
}

#[test]
fn critical_points_are_roots_and_ordered() {
    for k in 1..=4 {
        let c1 = branching::critical_c(OffspringMean::Subcritical(SubcriticalVariant::Cluster), k, 1e-12).unwrap();
        let lemma = branching::critical_c(OffspringMean::Subcritical(SubcriticalVariant::Lemma), k, 1e-12).unwrap();
        assert!((branching::subcritical_mean(k, c1, SubcriticalVariant::Cluster) - 1.0).abs() < 1e-6);
        assert!(lemma < c1);
        if let Ok(c2) = branching::critical_c(OffspringMean::Supercritical, k, 1e-12) {
            assert!((branching::supercritical_mean(k, c2) - 1.0).abs() < 1e-6);
            assert!(c1 < c2);
        }
    }
}

#[test]
fn blocking_fractions() {
    let n = 100_000;
    let mut rng = rng::from_seed(9);
    let cases = [
        (Graph::ring(n, 1).unwrap(), 0.5),
        (Graph::ring(n, 2).unwrap(), 0.25),
        (
            Graph::build(GraphParams::new(n, 1, 1.0).unwrap(), &mut rng).unwrap(),
            meanfield::alpha(1, 1.0, 1e-14),
        ),
    ];
    for (graph, expected) in cases {
        let profile = branching::classify_blocking(&graph, &mut rng);
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((profile.rbv_fraction() - expected).abs() < 4.5 * se, "{} vs {expected}", profile.rbv_fraction());
        assert!((profile.lbv_fraction() - expected).abs() < 4.5 * se);
    }
    let profile = branching::classify_blocking(&Graph::ring(1_000, 1).unwrap(), &mut rng);
    assert!(profile.flags().iter().all(|f| *f != Blocking::None));
}

#[test]
fn ring_clusters_follow_run_law() {
    let n = 50_000;
    let graph = Graph::ring(n, 2).unwrap();
    let mut rng = rng::from_seed(10);
    let profile = branching::classify_blocking(&graph, &mut rng);
    let centers: Vec<usize> = (0..5_000).map(|_| rng.random_range(0..n)).collect();
    let sample = branching::sample_clusters(&profile, centers, 2_000).unwrap();
    assert_eq!(sample.exceedances, 0);
    let plus: Vec<f64> = sample.clusters.iter().map(|c| c.j_plus as f64).collect();
    let minus: Vec<f64> = sample.clusters.iter().map(|c| c.j_minus as f64).collect();
    let oracle: Vec<f64> = (0..50_000).map(|_| coin_flip_run(0.25, 2, &mut rng) as f64).collect();
    let crit = ks_critical(0.001, plus.len(), oracle.len());
    assert!(ks_statistic(&plus, &oracle) < crit);
    assert!(ks_statistic(&minus, &oracle) < crit);
    assert!(plus.iter().all(|&j| j >= 2.0));
}

#[test]
fn degree_statistics() {
    let params = GraphParams::new(20_000, 2, 3.0).unwrap();
    let graph = Graph::build(params, &mut rng::from_seed(11)).unwrap();
    let stats = graph.degree_stats();
    let pairs = params.eligible_pairs() as f64;
    let expected = pairs * params.p;
    let se = (pairs * params.p * (1.0 - params.p)).sqrt();
    assert!((graph.shortcut_count() as f64 - expected).abs() < 4.0 * se);
    assert!((stats.mean - params.mean_degree()).abs() < 0.05);
    assert!((stats.mean_shortcut_degree() - 3.0).abs() < 0.05);
    let fit = stats.binomial_fit(&params).unwrap();
    assert!(fit.p_value > 1e-4, "{fit:?}");
    assert_eq!(graph.local_edge_count(), 2 * 20_000);
}

/// Damped fixed-point iteration of `z = 1 - exp(-λ z)` from `z = 1`.
fn fixed_point(lambda: f64) -> f64 {
    let mut z: f64 = 1.0;
    for _ in 0..10_000_000 {
        let next = 0.5 * z + 0.5 * (1.0 - (-lambda * z).exp());
        if (next - z).abs() < 1e-15 {
            return next;
        }
        z = next;
    }
    z
}

#[test]
fn z_infinity_matches_fixed_point() {
    for i in 1..=400 {
        let lambda = 1.0 + 0.05 * i as f64;
        let z = meanfield::z_infinity_for_lambda(lambda);
        assert!((z - fixed_point(lambda)).abs() < 1e-10, "lambda = {lambda}");
        assert!((z - (1.0 - (-lambda * z).exp())).abs() < 1e-12);
    }
    for lambda in [0.0, 0.5, 1.0] {
        assert_eq!(meanfield::z_infinity_for_lambda(lambda), 0.0);
    }
    assert!((meanfield::z_infinity_for_lambda(2.0) - 0.796812).abs() < 1e-6);
}

#[test]
fn ode_converges_to_z_infinity() {
    for (k, c) in [(1, 0.5), (1, 2.0), (2, 1.0), (3, 5.0)] {
        let p = MeanFieldParams::new(k, c).unwrap();
        let traj = meanfield::integrate(&p, MeanFieldState::single_spreader(1e4), &OdeOptions::for_params(&p)).unwrap();
        let end = traj.last().1;
        assert!((end.z - p.z_infinity()).abs() < 1e-3, "k={k} c={c}: {} vs {}", end.z, p.z_infinity());
        assert!((end.total() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn rk4_error_shrinks_fourth_order() {
    let p = MeanFieldParams::new(1, 1.0).unwrap();
    let solve = |dt: f64| {
        let opts = OdeOptions {
            dt,
            t_max: Some(2.0),
            ..OdeOptions::for_params(&p)
        };
        meanfield::integrate(&p, MeanFieldState::new(0.9, 0.1, 0.0), &opts).unwrap().last().1.z
    };
    let reference = solve(0.02 / 16.0);
    let coarse = (solve(0.02) - reference).abs();
    let fine = (solve(0.01) - reference).abs();
    let ratio = coarse / fine;
    assert!((12.0..20.0).contains(&ratio), "error ratio {ratio}");
}

#[test]
fn branching_means_are_monotone() {
    for k in 1..=4 {
        for mean in [
            OffspringMean::Subcritical(SubcriticalVariant::Cluster),
            OffspringMean::Subcritical(SubcriticalVariant::Lemma),
            OffspringMean::Supercritical,
        ] {
            assert_eq!(mean.eval(k, 0.0), 0.0);
            let values: Vec<f64> = (0..300).map(|i| mean.eval(k, 0.05 * i as f64)).collect();
            assert!(values.windows(2).all(|w| w[1] >= w[0]), "{mean:?} k={k}");
        }
    }
}
