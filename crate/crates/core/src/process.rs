//! Discrete-time Maki-Thompson dynamics.
//!
//! At each step a spreader is chosen uniformly, it contacts a uniformly chosen
//! neighbour, and either the neighbour learns the rumour (if ignorant) or the
//! caller becomes a stifler. The run ends at the first step with no spreaders.
//!
//! [`run_coupled`] grows the graph in tandem with the process: a vertex's
//! shortcuts are sampled the first time it transmits, and the remaining pairs
//! are filled in at absorption.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{local_or_shortcut, sample_pairs, sample_row, Graph, GraphParams, ShortcutSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum NodeState {
    Ignorant = 0,
    Spreader = 1,
    Stifler = 2,
}

/// Population counts `(I, S, R)` at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub ignorant: usize,
    pub spreaders: usize,
    pub removed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub final_removed: usize,
    pub final_ignorant: usize,
    pub absorption_time: usize,
    pub seed_vertex: usize,
    /// `(I, S, R)` for t = 0..=absorption_time when recorded.
    pub trajectory: Option<Vec<Counts>>,
}

impl RunOutcome {
    pub fn n(&self) -> usize {
        self.final_removed + self.final_ignorant
    }

    pub fn satisfies_absorption_identity(&self) -> bool {
        verify_absorption_identity(self)
    }

    /// Trajectory as CSV with header `t,I,S,R`.
    pub fn trajectory_csv(&self) -> Option<String> {
        let traj = self.trajectory.as_ref()?;
        let mut out = String::from("t,I,S,R\n");
        for (t, c) in traj.iter().enumerate() {
            out.push_str(&format!("{t},{},{},{}\n", c.ignorant, c.spreaders, c.removed));
        }
        Some(out)
    }
}

/// `tau = 2 R - 1`: every step either informs one vertex or removes one
/// spreader, and the run starts with one spreader.
pub fn verify_absorption_identity(outcome: &RunOutcome) -> bool {
    outcome.final_removed >= 1 && outcome.absorption_time == 2 * outcome.final_removed - 1
}

/// Choice of the initial spreader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeedVertex {
    #[default]
    Uniform,
    Fixed(usize),
}

impl SeedVertex {
    fn resolve<R: Rng + ?Sized>(self, n: usize, rng: &mut R) -> Result<usize> {
        match self {
            SeedVertex::Uniform => Ok(rng.random_range(0..n)),
            SeedVertex::Fixed(v) if v < n => Ok(v),
            SeedVertex::Fixed(v) => Err(Error::VertexOutOfRange { vertex: v, n }),
        }
    }
}

/// Uniform neighbour choice for the transmitting vertex.
trait Contacts {
    fn n(&self) -> usize;
    fn contact<R: Rng + ?Sized>(&mut self, v: usize, rng: &mut R) -> usize;
}

impl Contacts for &Graph {
    fn n(&self) -> usize {
        Graph::n(self)
    }

    #[inline]
    fn contact<R: Rng + ?Sized>(&mut self, v: usize, rng: &mut R) -> usize {
        let idx = rng.random_range(0..self.degree(v));
        self.neighbor_at(v, idx)
    }
}

/// Reusable buffers for repeated runs. Resetting costs O(R), not O(n).
#[derive(Debug, Clone)]
pub struct Simulator {
    state: Vec<NodeState>,
    spreaders: Vec<u32>,
    informed: Vec<u32>,
}

impl Simulator {
    pub fn new(n: usize) -> Self {
        Self {
            state: vec![NodeState::Ignorant; n],
            spreaders: Vec::new(),
            informed: Vec::new(),
        }
    }

    pub fn run<R: Rng + ?Sized>(
        &mut self,
        graph: &Graph,
        seed_vertex: SeedVertex,
        rng: &mut R,
        record_trajectory: bool,
    ) -> Result<RunOutcome> {
        self.simulate(graph, seed_vertex, rng, record_trajectory)
    }

    fn simulate<C: Contacts, R: Rng + ?Sized>(
        &mut self,
        mut contacts: C,
        seed_vertex: SeedVertex,
        rng: &mut R,
        record_trajectory: bool,
    ) -> Result<RunOutcome> {
        let n = contacts.n();
        if self.state.len() != n {
            *self = Self::new(n);
        }
        let seed = seed_vertex.resolve(n, rng)?;

        self.state[seed] = NodeState::Spreader;
        self.spreaders.push(seed as u32);
        self.informed.push(seed as u32);
        let (mut ignorant, mut removed) = (n - 1, 0usize);
        let mut t = 0usize;
        let mut trajectory = record_trajectory.then(|| {
            vec![Counts {
                ignorant,
                spreaders: 1,
                removed,
            }]
        });

        while !self.spreaders.is_empty() {
            let slot = rng.random_range(0..self.spreaders.len());
            let v = self.spreaders[slot] as usize;
            let u = contacts.contact(v, rng);
            if self.state[u] == NodeState::Ignorant {
                self.state[u] = NodeState::Spreader;
                self.spreaders.push(u as u32);
                self.informed.push(u as u32);
                ignorant -= 1;
            } else {
                self.state[v] = NodeState::Stifler;
                self.spreaders.swap_remove(slot);
                removed += 1;
            }
            t += 1;
            if let Some(traj) = trajectory.as_mut() {
                traj.push(Counts {
                    ignorant,
                    spreaders: self.spreaders.len(),
                    removed,
                });
            }
        }

        for &v in &self.informed {
            self.state[v as usize] = NodeState::Ignorant;
        }
        self.informed.clear();

        Ok(RunOutcome {
            final_removed: removed,
            final_ignorant: ignorant,
            absorption_time: t,
            seed_vertex: seed,
            trajectory,
        })
    }
}

/// One run on a fixed graph.
pub fn run<R: Rng + ?Sized>(
    graph: &Graph,
    seed_vertex: SeedVertex,
    rng: &mut R,
    record_trajectory: bool,
) -> Result<RunOutcome> {
    Simulator::new(graph.n()).run(graph, seed_vertex, rng, record_trajectory)
}

/// Graph whose shortcut rows are revealed on first use.
struct LazyGraph {
    params: GraphParams,
    revealed: Vec<bool>,
    lists: Vec<Vec<u32>>,
}

impl LazyGraph {
    fn new(params: GraphParams) -> Self {
        Self {
            params,
            revealed: vec![false; params.n],
            lists: vec![Vec::new(); params.n],
        }
    }

    fn reveal<R: Rng + ?Sized>(&mut self, v: usize, rng: &mut R) {
        let Self {
            params,
            revealed,
            lists,
        } = self;
        // Pairs with an already revealed endpoint were decided when it was revealed.
        sample_row(params, v, rng, |u| {
            if !revealed[u] {
                lists[v].push(u as u32);
                lists[u].push(v as u32);
            }
        });
        revealed[v] = true;
    }

    fn complete<R: Rng + ?Sized>(mut self, rng: &mut R) -> Graph {
        let Self {
            params,
            revealed,
            lists,
        } = &mut self;
        sample_pairs(params, ShortcutSampler::GeometricSkip, rng, |i, j| {
            if !revealed[i] && !revealed[j] {
                lists[i].push(j as u32);
                lists[j].push(i as u32);
            }
        });
        for list in lists.iter_mut() {
            list.sort_unstable();
        }
        Graph::from_sorted_lists(self.params, self.lists)
    }
}

impl Contacts for &mut LazyGraph {
    fn n(&self) -> usize {
        self.params.n
    }

    fn contact<R: Rng + ?Sized>(&mut self, v: usize, rng: &mut R) -> usize {
        if !self.revealed[v] {
            self.reveal(v, rng);
        }
        let k = self.params.k;
        let list = &self.lists[v];
        let idx = rng.random_range(0..2 * k + list.len());
        local_or_shortcut(self.params.n, k, v, idx, list)
    }
}

/// Runs the process while sampling the graph lazily, then completes the
/// graph so the returned pair is a faithful `(outcome, G(n, k, p))` sample.
pub fn run_coupled<R: Rng + ?Sized>(
    params: GraphParams,
    seed_vertex: SeedVertex,
    rng: &mut R,
) -> Result<(RunOutcome, Graph)> {
    let params = GraphParams::new(params.n, params.k, params.c)?;
    let mut lazy = LazyGraph::new(params);
    let outcome = Simulator::new(params.n).simulate(&mut lazy, seed_vertex, rng, false)?;
    Ok((outcome, lazy.complete(rng)))
}

/// JSON form of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub n: usize,
    pub k: usize,
    pub c: f64,
    pub seed_vertex: usize,
    #[serde(rename = "R")]
    pub removed: usize,
    pub tau: usize,
    #[serde(rename = "I_final")]
    pub ignorant: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
}

impl RunReport {
    pub fn new(params: &GraphParams, outcome: &RunOutcome, seed: Option<u64>) -> Self {
        Self {
            n: params.n,
            k: params.k,
            c: params.c,
            seed_vertex: outcome.seed_vertex,
            removed: outcome.final_removed,
            tau: outcome.absorption_time,
            ignorant: outcome.final_ignorant,
            seed,
        }
    }
}
