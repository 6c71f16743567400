//! Per-node state machine of the distributed peak-minimization method.
//!
//! Node `i` keeps one multiplier vector `λ^{ij} ∈ ℝ^S` per neighbor. A round
//! at node `i` is:
//!
//! 1. receive `λ^{ji}` from every neighbor and form
//!    `Δλ = Σ_j (λ^{ij} − λ^{ji})`;
//! 2. solve the local epigraph LP, obtaining `(x^i, ρ^i)` and its epigraph
//!    multipliers `μ^i`;
//! 3. receive `μ^j` from every neighbor;
//! 4. set `λ^{ij} ← λ^{ij} − γ(t) (μ^i − μ^j)`.
//!
//! `μ^i − μ^j` is the `λ^{ij}` block of a subgradient of the dual function,
//! so step 4 is a subgradient step on it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subproblem::{self, LocalProblemData, PrimalDualPair, SubproblemError};

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("step index must be at least 1, got {0}")]
    BadStepIndex(u64),
    #[error("step schedule exponent {exponent} / scale {scale} invalid: need exponent in (0.5, 1] and scale > 0")]
    BadSchedule { exponent: f64, scale: f64 },
    #[error("node {node}: no message from neighbor {neighbor}")]
    MissingNeighbor { node: usize, neighbor: usize },
    #[error("node {node}: message from non-neighbor {sender}")]
    UnexpectedSender { node: usize, sender: usize },
    #[error("node {node}: vector from {sender} has length {len}, expected {slots}")]
    Dimension {
        node: usize,
        sender: usize,
        len: usize,
        slots: usize,
    },
    #[error("node {0} has not solved its local problem yet")]
    NotSolved(usize),
    #[error("negative step size {0}")]
    NegativeStep(f64),
    #[error(transparent)]
    Subproblem(#[from] SubproblemError),
}

/// Power-law step sizes `γ(t) = scale · t^(−exponent)`.
///
/// Exponents in `(0.5, 1]` give a diminishing, non-summable and
/// square-summable sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub exponent: f64,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl StepSchedule {
    pub fn power_law(exponent: f64, scale: f64) -> Result<Self, ProtocolError> {
        let s = StepSchedule { exponent, scale };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let ok = self.exponent > 0.5 && self.exponent <= 1.0 && self.scale > 0.0 && self.scale.is_finite();
        if ok {
            Ok(())
        } else {
            Err(ProtocolError::BadSchedule {
                exponent: self.exponent,
                scale: self.scale,
            })
        }
    }

    pub fn step_size(&self, t: u64) -> Result<f64, ProtocolError> {
        if t < 1 {
            return Err(ProtocolError::BadStepIndex(t));
        }
        Ok(self.scale * (1.0 / t as f64).powf(self.exponent))
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            exponent: 0.8,
            scale: 1.0,
        }
    }
}

/// Everything node `i` remembers between rounds.
#[derive(Debug, Clone)]
pub struct NodeState {
    id: usize,
    data: LocalProblemData,
    lambda: BTreeMap<usize, Vec<f64>>,
    last_pair: Option<PrimalDualPair>,
    last_delta_lambda: Vec<f64>,
}

impl NodeState {
    /// Fresh state with `λ^{ij} = 0` for every neighbor `j`.
    pub fn new(id: usize, data: LocalProblemData, neighbors: &[usize]) -> Self {
        let s = data.slots();
        let lambda = neighbors.iter().map(|&j| (j, vec![0.0; s])).collect();
        NodeState {
            id,
            data,
            lambda,
            last_pair: None,
            last_delta_lambda: vec![0.0; s],
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn data(&self) -> &LocalProblemData {
        &self.data
    }

    pub fn neighbors(&self) -> impl Iterator<Item = usize> + '_ {
        self.lambda.keys().copied()
    }

    /// `λ^{ij}` for every neighbor `j`.
    pub fn lambda(&self) -> &BTreeMap<usize, Vec<f64>> {
        &self.lambda
    }

    /// Outgoing message to neighbor `j` (it reads this as `λ^{ji}`).
    pub fn lambda_for(&self, j: usize) -> Option<&[f64]> {
        self.lambda.get(&j).map(Vec::as_slice)
    }

    pub fn last_pair(&self) -> Option<&PrimalDualPair> {
        self.last_pair.as_ref()
    }

    /// Coupling term used by the most recent local solve.
    pub fn last_delta_lambda(&self) -> &[f64] {
        &self.last_delta_lambda
    }

    fn check_messages(&self, incoming: &BTreeMap<usize, Vec<f64>>) -> Result<(), ProtocolError> {
        let slots = self.data.slots();
        for &j in self.lambda.keys() {
            let v = incoming.get(&j).ok_or(ProtocolError::MissingNeighbor {
                node: self.id,
                neighbor: j,
            })?;
            if v.len() != slots {
                return Err(ProtocolError::Dimension {
                    node: self.id,
                    sender: j,
                    len: v.len(),
                    slots,
                });
            }
        }
        if let Some(&sender) = incoming.keys().find(|j| !self.lambda.contains_key(j)) {
            return Err(ProtocolError::UnexpectedSender { node: self.id, sender });
        }
        Ok(())
    }

    /// `Σ_j (λ^{ij} − λ^{ji})` for the given incoming `λ^{ji}`.
    pub fn delta_lambda(&self, incoming_lambda: &BTreeMap<usize, Vec<f64>>) -> Result<Vec<f64>, ProtocolError> {
        self.check_messages(incoming_lambda)?;
        let mut delta = vec![0.0; self.data.slots()];
        for (j, own) in &self.lambda {
            let theirs = &incoming_lambda[j];
            for ((d, a), b) in delta.iter_mut().zip(own).zip(theirs) {
                *d += a - b;
            }
        }
        Ok(delta)
    }

    /// Local solve for the current round; the returned `μ` is this node's
    /// block of the dual subgradient.
    pub fn node_solve(
        &mut self,
        incoming_lambda: &BTreeMap<usize, Vec<f64>>,
    ) -> Result<&PrimalDualPair, ProtocolError> {
        let delta = self.delta_lambda(incoming_lambda)?;
        let pair = subproblem::solve_local(&self.data, &delta)?;
        self.last_delta_lambda = delta;
        Ok(self.last_pair.insert(pair))
    }

    /// `λ^{ij} ← λ^{ij} − γ (μ^i − μ^j)` for every neighbor.
    pub fn lambda_update(&mut self, incoming_mu: &BTreeMap<usize, Vec<f64>>, gamma: f64) -> Result<(), ProtocolError> {
        if gamma < 0.0 {
            return Err(ProtocolError::NegativeStep(gamma));
        }
        self.check_messages(incoming_mu)?;
        let own_mu = &self.last_pair.as_ref().ok_or(ProtocolError::NotSolved(self.id))?.mu;
        for (j, lam) in self.lambda.iter_mut() {
            for ((l, mi), mj) in lam.iter_mut().zip(own_mu).zip(&incoming_mu[j]) {
                *l -= gamma * (mi - mj);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> LocalProblemData {
        LocalProblemData::in_unit_box(2, vec![vec![-1.0, -1.0]], vec![-1.0]).unwrap()
    }

    fn msgs(entries: &[(usize, Vec<f64>)]) -> BTreeMap<usize, Vec<f64>> {
        entries.iter().cloned().collect()
    }

    #[test]
    fn step_sizes() {
        let default = StepSchedule::power_law(0.8, 1.0).unwrap();
        assert_eq!(default.step_size(1).unwrap(), 1.0);
        // 32^0.8 = 2^4
        assert!((default.step_size(32).unwrap() - 0.0625).abs() < 1e-15);
        let harmonic = StepSchedule::power_law(1.0, 1.0).unwrap();
        assert!((harmonic.step_size(10).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(default.step_size(0), Err(ProtocolError::BadStepIndex(0)));
        assert!(StepSchedule::power_law(0.5, 1.0).is_err());
        assert!(StepSchedule::power_law(1.2, 1.0).is_err());
        assert!(StepSchedule::power_law(0.8, 0.0).is_err());
    }

    #[test]
    fn isolated_node_solves_uncoupled_problem() {
        let mut node = NodeState::new(1, triangle(), &[]);
        let pair = node.node_solve(&BTreeMap::new()).unwrap().clone();
        assert_eq!(pair, subproblem::solve_local(&triangle(), &[0.0, 0.0]).unwrap());
        // No neighbors: the update is a no-op.
        node.lambda_update(&BTreeMap::new(), 1.0).unwrap();
        assert!(node.lambda().is_empty());
    }

    #[test]
    fn zero_multipliers_give_uncoupled_solve() {
        let mut node = NodeState::new(1, triangle(), &[2, 3]);
        let incoming = msgs(&[(2, vec![0.0; 2]), (3, vec![0.0; 2])]);
        let pair = node.node_solve(&incoming).unwrap();
        assert!((pair.rho - 0.5).abs() < 1e-12);
        assert_eq!(node.last_delta_lambda(), &[0.0, 0.0]);
    }

    #[test]
    fn shifted_two_node_example() {
        let mut node = NodeState::new(1, triangle(), &[2]);
        node.lambda.insert(2, vec![0.3, 0.0]);
        let pair = node.node_solve(&msgs(&[(2, vec![0.0, 0.0])])).unwrap();
        assert!((pair.x[0] - 0.35).abs() < 1e-12);
        assert!((pair.x[1] - 0.65).abs() < 1e-12);
        assert!((pair.rho - 0.65).abs() < 1e-12);
    }

    #[test]
    fn update_rule() {
        let mut node = NodeState::new(1, triangle(), &[2]);
        node.last_pair = Some(PrimalDualPair {
            x: vec![0.0, 1.0],
            rho: 1.0,
            mu: vec![1.0, 0.0],
        });
        node.lambda_update(&msgs(&[(2, vec![1.0, 0.0])]), 1.0).unwrap();
        assert_eq!(node.lambda()[&2], vec![0.0, 0.0]);
        node.lambda_update(&msgs(&[(2, vec![0.0, 1.0])]), 1.0).unwrap();
        assert_eq!(node.lambda()[&2], vec![-1.0, 1.0]);
    }

    #[test]
    fn message_errors() {
        let mut node = NodeState::new(4, triangle(), &[2, 5]);
        assert_eq!(
            node.node_solve(&msgs(&[(2, vec![0.0; 2])])).unwrap_err(),
            ProtocolError::MissingNeighbor { node: 4, neighbor: 5 }
        );
        let extra = msgs(&[(2, vec![0.0; 2]), (5, vec![0.0; 2]), (7, vec![0.0; 2])]);
        assert_eq!(
            node.node_solve(&extra).unwrap_err(),
            ProtocolError::UnexpectedSender { node: 4, sender: 7 }
        );
        let short = msgs(&[(2, vec![0.0; 2]), (5, vec![0.0])]);
        assert!(matches!(node.node_solve(&short), Err(ProtocolError::Dimension { .. })));
        let ok = msgs(&[(2, vec![0.0; 2]), (5, vec![0.0; 2])]);
        assert_eq!(node.lambda_update(&ok, 1.0), Err(ProtocolError::NotSolved(4)));
        node.node_solve(&ok).unwrap();
        assert_eq!(node.lambda_update(&ok, -1.0), Err(ProtocolError::NegativeStep(-1.0)));
    }
}
