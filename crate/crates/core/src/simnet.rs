//! Synchronous round-based simulation of the distributed method.
//!
//! Round `t` (starting at 1) runs four barrier-separated phases: every node
//! publishes `λ^{ij}(t)`, every node solves its local problem, every node
//! publishes `μ^i(t+1)`, every node applies the update with `γ(t)`. Nodes are
//! visited in a seeded random order inside each phase; since a phase only
//! reads messages produced before its barrier, the order never changes the
//! result.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::protocol::{NodeState, ProtocolError, StepSchedule};
use crate::subproblem::{self, LocalProblemData, SubproblemError};

/// Rounds the consensus residual must stay below epsilon before stopping.
pub const CONSENSUS_PATIENCE: u64 = 10;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("instance has {agents} agents but graph has {nodes} nodes")]
    AgentCount { agents: usize, nodes: usize },
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("round {round}, node {node}: {source}")]
    Node {
        round: u64,
        node: usize,
        source: ProtocolError,
    },
    #[error("centralized oracle failed: {0}")]
    Oracle(SubproblemError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_rounds: u64,
    pub schedule: StepSchedule,
    /// Stop once the consensus residual stays below this for
    /// [`CONSENSUS_PATIENCE`] rounds; `0` disables early stopping.
    pub epsilon_consensus: f64,
    pub record_every: u64,
    pub seed: u64,
    pub compute_oracle: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_rounds: 3000,
            schedule: StepSchedule::default(),
            epsilon_consensus: 1e-6,
            record_every: 1,
            seed: 0,
            compute_oracle: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.max_rounds < 1 {
            return Err(SimError::Config("max_rounds must be at least 1".into()));
        }
        if self.record_every < 1 {
            return Err(SimError::Config("record_every must be at least 1".into()));
        }
        if self.epsilon_consensus.is_nan() || self.epsilon_consensus < 0.0 {
            return Err(SimError::Config("epsilon_consensus must be nonnegative".into()));
        }
        self.schedule.validate().map_err(|e| SimError::Config(e.to_string()))
    }
}

/// Metrics of one round, computed right after the local solves.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub rho: Vec<f64>,
    pub sum_rho: f64,
    /// `|Σρ − P*|`, present when the oracle was computed.
    pub cost_error: Option<f64>,
    pub consensus_residual: f64,
    /// `Σ_i c_s x^i_s` per slot.
    pub aggregate_profile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub rounds: u64,
    pub p_star: Option<f64>,
    /// Each node's `x^i` from the last executed round.
    pub final_x: Vec<Vec<f64>>,
    pub final_sum_rho: f64,
    pub wall_time: Duration,
}

/// What a round produced, before the update phase changed `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub t: u64,
    pub gamma: f64,
    pub rho: Vec<f64>,
    pub consensus_residual: f64,
    pub aggregate_profile: Vec<f64>,
}

impl RoundReport {
    pub fn sum_rho(&self) -> f64 {
        self.rho.iter().sum()
    }
}

/// Owns every node and drives rounds one at a time.
pub struct Simulator<'g> {
    graph: &'g Graph,
    nodes: Vec<NodeState>,
    schedule: StepSchedule,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    t: u64,
}

impl<'g> Simulator<'g> {
    pub fn new(
        instance: &[LocalProblemData],
        graph: &'g Graph,
        schedule: StepSchedule,
        seed: u64,
    ) -> Result<Self, SimError> {
        if instance.len() != graph.n_nodes() {
            return Err(SimError::AgentCount {
                agents: instance.len(),
                nodes: graph.n_nodes(),
            });
        }
        if let Some(s) = instance.first().map(LocalProblemData::slots) {
            if instance.iter().any(|d| d.slots() != s) {
                return Err(SimError::Config("agents disagree on slot count".into()));
            }
        }
        schedule.validate().map_err(|e| SimError::Config(e.to_string()))?;
        let nodes = instance
            .iter()
            .enumerate()
            .map(|(k, data)| {
                let id = k + 1;
                let nb = graph.neighbors(id).expect("node id in range");
                NodeState::new(id, data.clone(), nb)
            })
            .collect();
        Ok(Simulator {
            graph,
            nodes,
            schedule,
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..instance.len()).collect(),
            t: 0,
        })
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn graph(&self) -> &Graph {
        self.graph
    }

    /// Rounds completed so far.
    pub fn round(&self) -> u64 {
        self.t
    }

    /// Messages node `i` receives from its neighbors, built from a snapshot.
    fn inbox<F>(&self, i: usize, mut payload: F) -> BTreeMap<usize, Vec<f64>>
    where
        F: FnMut(&NodeState, usize) -> Vec<f64>,
    {
        self.graph
            .neighbors(i)
            .expect("node id in range")
            .iter()
            .map(|&j| (j, payload(&self.nodes[j - 1], i)))
            .collect()
    }

    /// Executes one full round and returns its metrics.
    pub fn step(&mut self) -> Result<RoundReport, SimError> {
        let t = self.t + 1;
        let gamma = self
            .schedule
            .step_size(t)
            .map_err(|e| SimError::Config(e.to_string()))?;

        let lambda_inboxes: Vec<_> = (1..=self.nodes.len())
            .map(|i| self.inbox(i, |from, to| from.lambda_for(to).expect("edge").to_vec()))
            .collect();
        self.order.shuffle(&mut self.rng);
        for &k in &self.order {
            self.nodes[k]
                .node_solve(&lambda_inboxes[k])
                .map_err(|source| SimError::Node {
                    round: t,
                    node: k + 1,
                    source,
                })?;
        }

        let mu_inboxes: Vec<_> = (1..=self.nodes.len())
            .map(|i| self.inbox(i, |from, _| from.last_pair().expect("solved").mu.clone()))
            .collect();
        let report = RoundReport {
            t,
            gamma,
            rho: self.nodes.iter().map(|n| n.last_pair().expect("solved").rho).collect(),
            consensus_residual: consensus_residual(&self.nodes, self.graph),
            aggregate_profile: self.aggregate_profile(),
        };

        self.order.shuffle(&mut self.rng);
        for &k in &self.order {
            self.nodes[k]
                .lambda_update(&mu_inboxes[k], gamma)
                .map_err(|source| SimError::Node {
                    round: t,
                    node: k + 1,
                    source,
                })?;
        }
        self.t = t;
        Ok(report)
    }

    fn aggregate_profile(&self) -> Vec<f64> {
        let s = self.nodes.first().map_or(0, |n| n.data().slots());
        let mut total = vec![0.0; s];
        for node in &self.nodes {
            let x = &node.last_pair().expect("solved").x;
            for (acc, v) in total.iter_mut().zip(node.data().consumption(x)) {
                *acc += v;
            }
        }
        total
    }

    pub fn current_x(&self) -> Vec<Vec<f64>> {
        self.nodes
            .iter()
            .map(|n| n.last_pair().map(|p| p.x.clone()).unwrap_or_default())
            .collect()
    }
}

/// `max_{(i,j) ∈ E} ‖μ^i − μ^j‖_∞` over solved nodes, zero without edges.
pub fn consensus_residual(nodes: &[NodeState], graph: &Graph) -> f64 {
    let mus: Vec<&[f64]> = nodes
        .iter()
        .map(|n| n.last_pair().expect("solved").mu.as_slice())
        .collect();
    mu_disagreement(&mus, graph)
}

/// Largest per-edge sup-norm gap between the vectors of adjacent nodes;
/// `mus[k]` belongs to node `k + 1`.
pub fn mu_disagreement<V: AsRef<[f64]>>(mus: &[V], graph: &Graph) -> f64 {
    graph
        .edges()
        .map(|(i, j)| {
            let a = mus[i - 1].as_ref();
            let b = mus[j - 1].as_ref();
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Runs the method to `max_rounds` or until consensus, recording metrics.
pub fn run(instance: &[LocalProblemData], graph: &Graph, config: &RunConfig) -> Result<Trace, SimError> {
    config.validate()?;
    let start = Instant::now();
    let mut sim = Simulator::new(instance, graph, config.schedule, config.seed)?;
    let p_star = if config.compute_oracle {
        Some(
            subproblem::solve_centralized(instance)
                .map_err(SimError::Oracle)?
                .p_star,
        )
    } else {
        None
    };

    let mut rows = Vec::new();
    let mut streak = 0u64;
    loop {
        let report = sim.step()?;
        let t = report.t;
        if report.consensus_residual < config.epsilon_consensus {
            streak += 1;
        } else {
            streak = 0;
        }
        let stop = t >= config.max_rounds || streak >= CONSENSUS_PATIENCE;
        let sum_rho = report.sum_rho();
        if t == 1 || t % config.record_every == 0 || stop {
            rows.push(TraceRow {
                t,
                sum_rho,
                cost_error: p_star.map(|p| (sum_rho - p).abs()),
                consensus_residual: report.consensus_residual,
                aggregate_profile: report.aggregate_profile,
                rho: report.rho,
            });
        }
        if stop {
            break;
        }
    }
    let final_sum_rho = rows.last().expect("last round is recorded").sum_rho;
    Ok(Trace {
        rows,
        rounds: sim.round(),
        p_star,
        final_x: sim.current_x(),
        final_sum_rho,
        wall_time: start.elapsed(),
    })
}

/// Formats like C's `%.{digits}g`: fixed notation for moderate exponents,
/// scientific otherwise, trailing zeros removed.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Twelve significant digits, the precision of every emitted number.
pub fn fmt12(x: f64) -> String {
    fmt_sig(x, 12)
}

/// `x` rounded to twelve significant digits.
pub fn round12(x: f64) -> f64 {
    fmt12(x).parse().unwrap_or(x)
}

/// Scalar results of a run, serialized as the JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub agents: usize,
    pub slots: usize,
    pub edges: usize,
    pub p_star: Option<f64>,
    pub final_sum_rho: f64,
    pub final_cost_error: Option<f64>,
    pub final_relative_error: Option<f64>,
    pub final_peak: f64,
    pub rounds: u64,
    /// Omitted from JSON when `None`, keeping summaries of identical runs
    /// byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
    /// How `γ(t)` lines up with rounds.
    pub step_indexing: String,
}

impl Trace {
    pub fn summary(&self, graph: &Graph) -> RunSummary {
        let last = self.rows.last();
        let cost_error = self.p_star.map(|p| (self.final_sum_rho - p).abs());
        let peak = last.map_or(0.0, |r| {
            r.aggregate_profile.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        });
        RunSummary {
            agents: graph.n_nodes(),
            slots: last.map_or(0, |r| r.aggregate_profile.len()),
            edges: graph.n_edges(),
            p_star: self.p_star.map(round12),
            final_sum_rho: round12(self.final_sum_rho),
            final_cost_error: cost_error.map(round12),
            final_relative_error: self
                .p_star
                .zip(cost_error)
                .map(|(p, e)| round12(e / p.abs().max(f64::MIN_POSITIVE))),
            final_peak: round12(peak),
            rounds: self.rounds,
            wall_time_secs: Some(round12(self.wall_time.as_secs_f64())),
            step_indexing: "round t solves with lambda(t), then updates lambda with gamma(t); t starts at 1".into(),
        }
    }

    /// `t,sum_rho,cost_error,consensus_residual,rho_1..rho_N`; `cost_error`
    /// is left empty without an oracle.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.final_x.len();
        let mut header = String::from("t,sum_rho,cost_error,consensus_residual");
        for i in 1..=n {
            header.push_str(&format!(",rho_{i}"));
        }
        writeln!(w, "{header}")?;
        for row in &self.rows {
            write!(
                w,
                "{},{},{},{}",
                row.t,
                fmt12(row.sum_rho),
                row.cost_error.map(fmt12).unwrap_or_default(),
                fmt12(row.consensus_residual)
            )?;
            for r in &row.rho {
                write!(w, ",{}", fmt12(*r))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// `slot,aggregate,agent_1..agent_N` for the final schedules; slots are
    /// 1-based and values are per-slot consumption `c_s x^i_s`.
    pub fn write_profile_csv<W: Write>(&self, instance: &[LocalProblemData], mut w: W) -> io::Result<()> {
        let n = self.final_x.len();
        let mut header = String::from("slot,aggregate");
        for i in 1..=n {
            header.push_str(&format!(",agent_{i}"));
        }
        writeln!(w, "{header}")?;
        let per_agent: Vec<Vec<f64>> = instance
            .iter()
            .zip(&self.final_x)
            .map(|(d, x)| d.consumption(x))
            .collect();
        let aggregate = subproblem::aggregate_profile(instance, &self.final_x);
        for (s, total) in aggregate.iter().enumerate() {
            write!(w, "{},{}", s + 1, fmt12(*total))?;
            for a in &per_agent {
                write!(w, ",{}", fmt12(a[s]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
