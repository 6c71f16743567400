//! Thermostatically controlled load scenarios.
//!
//! Each device follows `dT/dτ = −α (T − T_out) + Q x` with a control
//! `x ∈ [0, 1]` held constant over each slot of length `Δτ`. Sampling gives
//! `T_{s+1} = a T_s + b_u x_s + f_s`, which unrolled over the horizon makes
//! every temperature an affine function of the schedule. The comfort band
//! `T_min ≤ T_s ≤ T_max` (for `s = 1..S`) then becomes `2S` polytope rows.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subproblem::{LocalProblemData, SubproblemError};

/// Per-agent redraws before scenario generation gives up.
pub const AGENT_RETRIES: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum DsmError {
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),
    #[error("comfort band unreachable for this device")]
    InfeasibleScenario,
    #[error("agent {agent}: no feasible device after {retries} draws")]
    RetriesExhausted { agent: usize, retries: usize },
    #[error(transparent)]
    Subproblem(#[from] SubproblemError),
}

/// How the outside temperature enters the sampled dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// Exact zero-order hold: `f_s = +(1 − a) T_out,s`, so the device relaxes
    /// toward the outside temperature.
    #[default]
    ExactZoh,
    /// `f_s = −(1 − a) T_out,s`: the forcing enters with a negated sign,
    /// pushing the device away from the outside temperature.
    PaperLiteral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TclParams {
    pub alpha: f64,
    pub q: f64,
    pub delta_tau: f64,
    pub t0: f64,
    /// Outside temperature for each slot; its length is the horizon.
    pub t_out: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
}

impl TclParams {
    pub fn slots(&self) -> usize {
        self.t_out.len()
    }

    pub fn validate(&self) -> Result<(), DsmError> {
        let bad = |m: &str| Err(DsmError::InvalidParams(m.into()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return bad("Q must be positive");
        }
        if !(self.delta_tau > 0.0 && self.delta_tau.is_finite()) {
            return bad("delta_tau must be positive");
        }
        if self.t_min.partial_cmp(&self.t_max) != Some(std::cmp::Ordering::Less) {
            return bad("t_min must be below t_max");
        }
        if self.t_out.is_empty() {
            return bad("empty horizon");
        }
        if !self.t0.is_finite() || self.t_out.iter().any(|v| !v.is_finite()) {
            return bad("temperatures must be finite");
        }
        let a = (-self.alpha * self.delta_tau).exp();
        if !(a > 0.0 && a < 1.0) {
            return bad("alpha * delta_tau out of range for sampling");
        }
        Ok(())
    }
}

/// `T_{s+1} = a T_s + b_u x_s + forcing_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDynamics {
    pub a: f64,
    pub b_u: f64,
    pub forcing: Vec<f64>,
}

impl AffineDynamics {
    /// Temperatures `T_1..T_S` by stepping the recursion from `t0`.
    pub fn simulate(&self, t0: f64, x: &[f64]) -> Vec<f64> {
        let mut temp = t0;
        x.iter()
            .zip(&self.forcing)
            .map(|(u, f)| {
                temp = self.a * temp + self.b_u * u + f;
                temp
            })
            .collect()
    }

    /// `(G, h)` with `T = G x + h`; `G` is lower triangular and row `s`
    /// holds `T_{s+1}`.
    pub fn unrolled(&self, t0: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let s = self.forcing.len();
        let mut gain = vec![vec![0.0; s]; s];
        let mut offset = Vec::with_capacity(s);
        let mut free = t0;
        for k in 0..s {
            free = self.a * free + self.forcing[k];
            offset.push(free);
            if k > 0 {
                let (done, rest) = gain.split_at_mut(k);
                for (g, prev) in rest[0].iter_mut().zip(&done[k - 1]) {
                    *g = self.a * prev;
                }
            }
            gain[k][k] = self.b_u;
        }
        (gain, offset)
    }
}

pub fn discretize(p: &TclParams, convention: SignConvention) -> Result<AffineDynamics, DsmError> {
    p.validate()?;
    let a = (-p.alpha * p.delta_tau).exp();
    let b_u = (1.0 - a) * p.q / p.alpha;
    let sign = match convention {
        SignConvention::ExactZoh => 1.0,
        SignConvention::PaperLiteral => -1.0,
    };
    let forcing = p.t_out.iter().map(|t| sign * (1.0 - a) * t).collect();
    Ok(AffineDynamics { a, b_u, forcing })
}

/// Comfort-band rows `G_s x ≤ T_max − h_s` and `−G_s x ≤ h_s − T_min` for
/// every slot, interleaved per slot.
pub fn comfort_rows(dynamics: &AffineDynamics, p: &TclParams) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (gain, offset) = dynamics.unrolled(p.t0);
    let mut rows = Vec::with_capacity(2 * gain.len());
    let mut rhs = Vec::with_capacity(2 * gain.len());
    for (g, h) in gain.into_iter().zip(offset) {
        rows.push(g.iter().map(|v| -v).collect());
        rhs.push(h - p.t_min);
        rows.push(g);
        rhs.push(p.t_max - h);
    }
    (rows, rhs)
}

/// Device polytope in `[0, 1]^S` with unit per-slot consumption.
pub fn build_polytope(dynamics: &AffineDynamics, p: &TclParams) -> Result<LocalProblemData, DsmError> {
    if dynamics.forcing.len() != p.slots() {
        return Err(DsmError::InvalidParams(format!(
            "dynamics cover {} slots, parameters {}",
            dynamics.forcing.len(),
            p.slots()
        )));
    }
    let (rows, rhs) = comfort_rows(dynamics, p);
    match LocalProblemData::in_unit_box(p.slots(), rows, rhs) {
        Err(SubproblemError::EmptySet) => Err(DsmError::InfeasibleScenario),
        other => Ok(other?),
    }
}

/// Whether a forward simulation of `x` stays inside the comfort band.
pub fn schedule_is_comfortable(dynamics: &AffineDynamics, p: &TclParams, x: &[f64], tol: f64) -> bool {
    x.iter().all(|v| (-tol..=1.0 + tol).contains(v))
        && dynamics
            .simulate(p.t0, x)
            .iter()
            .all(|&t| t >= p.t_min - tol && t <= p.t_max + tol)
}

/// Sampling ranges for generated devices. Intervals are `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    /// Decay rate per unit time.
    pub alpha: (f64, f64),
    /// Steady-state heating authority `Q / α`.
    pub q_over_alpha: (f64, f64),
    pub delta_tau: f64,
    /// Outside temperature follows one cosine period over the horizon,
    /// starting at the low end.
    pub t_out: (f64, f64),
    pub t0: (f64, f64),
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            alpha: (0.1, 0.5),
            q_over_alpha: (20.0, 40.0),
            delta_tau: 1.0,
            t_out: (0.0, 15.0),
            t0: (18.0, 24.0),
            t_min: 18.0,
            t_max: 24.0,
        }
    }
}

impl ParamRanges {
    pub fn outside_temperature(&self, slots: usize) -> Vec<f64> {
        let (lo, hi) = self.t_out;
        (0..slots)
            .map(|s| lo + (hi - lo) * 0.5 * (1.0 - (2.0 * PI * s as f64 / slots as f64).cos()))
            .collect()
    }

    fn sample<R: Rng>(&self, rng: &mut R, t_out: &[f64]) -> TclParams {
        let draw = |rng: &mut R, (lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let alpha = draw(rng, self.alpha);
        let ratio = draw(rng, self.q_over_alpha);
        let t0 = draw(rng, self.t0);
        TclParams {
            alpha,
            q: alpha * ratio,
            delta_tau: self.delta_tau,
            t0,
            t_out: t_out.to_vec(),
            t_min: self.t_min,
            t_max: self.t_max,
        }
    }
}

/// Device parameters for every agent plus the shared horizon; the JSON form
/// of this struct is the scenario file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub slots: usize,
    #[serde(default)]
    pub convention: SignConvention,
    pub agents: Vec<TclParams>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), DsmError> {
        if self.agents.is_empty() {
            return Err(DsmError::InvalidParams("scenario has no agents".into()));
        }
        for (k, a) in self.agents.iter().enumerate() {
            if a.slots() != self.slots {
                return Err(DsmError::InvalidParams(format!(
                    "agent {} has {} outside temperatures, expected {}",
                    k + 1,
                    a.slots(),
                    self.slots
                )));
            }
        }
        Ok(())
    }

    /// Builds one agent's polytope.
    pub fn build_agent(&self, k: usize) -> Result<LocalProblemData, DsmError> {
        let p = &self.agents[k];
        build_polytope(&discretize(p, self.convention)?, p)
    }

    pub fn build(&self) -> Result<Vec<LocalProblemData>, DsmError> {
        self.validate()?;
        (0..self.agents.len()).map(|k| self.build_agent(k)).collect()
    }
}

/// Draws `n_agents` devices, redrawing any whose comfort band is unreachable.
/// All randomness comes from one ChaCha8 stream seeded with `seed`.
pub fn gen_scenario(
    n_agents: usize,
    slots: usize,
    ranges: &ParamRanges,
    convention: SignConvention,
    seed: u64,
) -> Result<Scenario, DsmError> {
    if n_agents == 0 || slots == 0 {
        return Err(DsmError::InvalidParams("need at least one agent and one slot".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_out = ranges.outside_temperature(slots);
    let mut agents = Vec::with_capacity(n_agents);
    for agent in 1..=n_agents {
        let mut found = None;
        for _ in 0..AGENT_RETRIES {
            let p = ranges.sample(&mut rng, &t_out);
            match build_polytope(&discretize(&p, convention)?, &p) {
                Ok(_) => {
                    found = Some(p);
                    break;
                }
                Err(DsmError::InfeasibleScenario) => continue,
                Err(e) => return Err(e),
            }
        }
        agents.push(found.ok_or(DsmError::RetriesExhausted {
            agent,
            retries: AGENT_RETRIES,
        })?);
    }
    Ok(Scenario {
        slots,
        convention,
        agents,
    })
}

pub fn gen_instance(
    n_agents: usize,
    slots: usize,
    ranges: &ParamRanges,
    seed: u64,
) -> Result<Vec<LocalProblemData>, DsmError> {
    gen_scenario(n_agents, slots, ranges, SignConvention::default(), seed)?.build()
}
