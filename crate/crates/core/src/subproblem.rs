//! Local and centralized peak problems, reduced to [`linprog`](crate::linprog).
//!
//! Every agent owns a polytope `X_i = {x ∈ [l, u] : A_i x ≤ b_i}` over `S`
//! slots and an affine per-slot consumption `g_s(x_s) = c_s x_s`. Given the
//! coupling term `Δλ_s = Σ_j (λ^{ij} − λ^{ji})_s`, the local problem is
//!
//! ```text
//!   minimize ρ   subject to  x ∈ X_i,   c_s x_s + Δλ_s ≤ ρ   (s = 1..S)
//! ```
//!
//! whose multipliers on the `S` epigraph rows form a point `μ` of the unit
//! simplex, the maximizer of `q_i(μ) + μᵀΔλ`.

use thiserror::Error;

use crate::linprog::{self, LpError, LpProblem, LpStatus};

/// Feasibility slack used when validating primal points against `X_i`.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum SubproblemError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("box bounds must be finite (slot {0})")]
    UnboundedBox(usize),
    #[error("local constraint set is empty")]
    EmptySet,
    #[error("LP reported {0:?}")]
    Status(LpStatus),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalProblemData {
    cost_coeffs: Vec<f64>,
    poly_matrix: Vec<Vec<f64>>,
    poly_rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LocalProblemData {
    /// Validates dimensions, finiteness of the box and nonemptiness of the
    /// polytope (one phase-one LP).
    pub fn new(
        cost_coeffs: Vec<f64>,
        poly_matrix: Vec<Vec<f64>>,
        poly_rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, SubproblemError> {
        let data = LocalProblemData {
            cost_coeffs,
            poly_matrix,
            poly_rhs,
            lower,
            upper,
        };
        data.check_shape()?;
        if !data.is_nonempty()? {
            return Err(SubproblemError::EmptySet);
        }
        Ok(data)
    }

    /// Polytope inside `[0, 1]^S` with unit costs.
    pub fn in_unit_box(slots: usize, poly_matrix: Vec<Vec<f64>>, poly_rhs: Vec<f64>) -> Result<Self, SubproblemError> {
        Self::new(
            vec![1.0; slots],
            poly_matrix,
            poly_rhs,
            vec![0.0; slots],
            vec![1.0; slots],
        )
    }

    fn check_shape(&self) -> Result<(), SubproblemError> {
        let s = self.cost_coeffs.len();
        if s == 0 {
            return Err(SubproblemError::Dimension("no slots".into()));
        }
        if self.lower.len() != s || self.upper.len() != s {
            return Err(SubproblemError::Dimension(format!(
                "box has {}/{} entries for {s} slots",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.poly_rhs.len() != self.poly_matrix.len() {
            return Err(SubproblemError::Dimension(format!(
                "{} polytope rows but {} right-hand sides",
                self.poly_matrix.len(),
                self.poly_rhs.len()
            )));
        }
        if let Some(r) = self.poly_matrix.iter().position(|row| row.len() != s) {
            return Err(SubproblemError::Dimension(format!(
                "polytope row {r} has {} entries for {s} slots",
                self.poly_matrix[r].len()
            )));
        }
        for k in 0..s {
            if !self.lower[k].is_finite() || !self.upper[k].is_finite() {
                return Err(SubproblemError::UnboundedBox(k));
            }
        }
        Ok(())
    }

    fn is_nonempty(&self) -> Result<bool, SubproblemError> {
        let s = self.slots();
        let mut lp = LpProblem::new(vec![0.0; s]).with_bounds(self.lower.clone(), self.upper.clone());
        for (row, &b) in self.poly_matrix.iter().zip(&self.poly_rhs) {
            lp.add_row(row.clone(), b);
        }
        Ok(linprog::solve(&lp)?.status == LpStatus::Optimal)
    }

    pub fn slots(&self) -> usize {
        self.cost_coeffs.len()
    }

    pub fn cost_coeffs(&self) -> &[f64] {
        &self.cost_coeffs
    }

    pub fn poly_matrix(&self) -> &[Vec<f64>] {
        &self.poly_matrix
    }

    pub fn poly_rhs(&self) -> &[f64] {
        &self.poly_rhs
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Per-slot consumption `c_s x_s`.
    pub fn consumption(&self, x: &[f64]) -> Vec<f64> {
        self.cost_coeffs.iter().zip(x).map(|(c, v)| c * v).collect()
    }

    /// Largest violation of the box or polytope rows at `x` (0 if inside).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for ((v, lo), hi) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(lo - v).max(v - hi);
        }
        for (row, &b) in self.poly_matrix.iter().zip(&self.poly_rhs) {
            let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            worst = worst.max(lhs - b);
        }
        worst
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.slots() && self.violation(x) <= tol
    }

    fn check_slot_vector(&self, name: &str, v: &[f64]) -> Result<(), SubproblemError> {
        if v.len() != self.slots() {
            return Err(SubproblemError::Dimension(format!(
                "{name} has length {}, expected {}",
                v.len(),
                self.slots()
            )));
        }
        Ok(())
    }
}

/// One agent's `(x, ρ)` together with the epigraph multipliers `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPair {
    pub x: Vec<f64>,
    pub rho: f64,
    pub mu: Vec<f64>,
}

/// LP over `(x_1..x_S, ρ)`; the first `S` rows are the epigraph rows
/// `c_s x_s − ρ ≤ −Δλ_s`, followed by the polytope rows.
pub fn build_local(data: &LocalProblemData, delta_lambda: &[f64]) -> Result<LpProblem, SubproblemError> {
    data.check_slot_vector("delta_lambda", delta_lambda)?;
    let s = data.slots();
    let mut objective = vec![0.0; s + 1];
    objective[s] = 1.0;
    let mut lower = data.lower.clone();
    lower.push(f64::NEG_INFINITY);
    let mut upper = data.upper.clone();
    upper.push(f64::INFINITY);
    let mut lp = LpProblem::new(objective).with_bounds(lower, upper);
    for k in 0..s {
        let mut row = vec![0.0; s + 1];
        row[k] = data.cost_coeffs[k];
        row[s] = -1.0;
        lp.add_row(row, -delta_lambda[k]);
    }
    for (row, &b) in data.poly_matrix.iter().zip(&data.poly_rhs) {
        let mut r = row.clone();
        r.push(0.0);
        lp.add_row(r, b);
    }
    Ok(lp)
}

pub fn solve_local(data: &LocalProblemData, delta_lambda: &[f64]) -> Result<PrimalDualPair, SubproblemError> {
    let s = data.slots();
    let lp = build_local(data, delta_lambda)?;
    let sol = linprog::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(SubproblemError::Status(sol.status));
    }
    let mut x = sol.primal;
    let rho = x.pop().expect("ρ column");
    Ok(PrimalDualPair {
        x,
        rho,
        mu: sol.ineq_duals[..s].to_vec(),
    })
}

/// `q_i(μ) = min_{x ∈ X_i} Σ_s μ_s c_s x_s`, with a minimizer.
pub fn eval_qi(data: &LocalProblemData, mu: &[f64]) -> Result<(f64, Vec<f64>), SubproblemError> {
    data.check_slot_vector("mu", mu)?;
    let objective = mu.iter().zip(&data.cost_coeffs).map(|(m, c)| m * c).collect();
    let mut lp = LpProblem::new(objective).with_bounds(data.lower.clone(), data.upper.clone());
    for (row, &b) in data.poly_matrix.iter().zip(&data.poly_rhs) {
        lp.add_row(row.clone(), b);
    }
    let sol = linprog::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(SubproblemError::Status(sol.status));
    }
    Ok((sol.objective_value, sol.primal))
}

/// `η_i(Δλ) = max_{μ ∈ simplex} q_i(μ) + μᵀΔλ`, evaluated as the optimal
/// `ρ` of the local LP (the two agree by LP duality).
pub fn eval_eta_i(data: &LocalProblemData, delta_lambda: &[f64]) -> Result<f64, SubproblemError> {
    Ok(solve_local(data, delta_lambda)?.rho)
}

/// `q_i(μ) + μᵀΔλ` for one simplex point.
pub fn dual_value(data: &LocalProblemData, delta_lambda: &[f64], mu: &[f64]) -> Result<f64, SubproblemError> {
    data.check_slot_vector("delta_lambda", delta_lambda)?;
    let (q, _) = eval_qi(data, mu)?;
    Ok(q + mu.iter().zip(delta_lambda).map(|(m, d)| m * d).sum::<f64>())
}

/// Evaluates `η_i` and confirms it dominates `q_i(μ) + μᵀΔλ − tol` at each of
/// the supplied simplex points. Returns `None` if some point exceeds it.
pub fn eval_eta_i_checked(
    data: &LocalProblemData,
    delta_lambda: &[f64],
    samples: &[Vec<f64>],
    tol: f64,
) -> Result<Option<f64>, SubproblemError> {
    let eta = eval_eta_i(data, delta_lambda)?;
    for mu in samples {
        if dual_value(data, delta_lambda, mu)? > eta + tol {
            return Ok(None);
        }
    }
    Ok(Some(eta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedSolution {
    /// Optimal peak `P*`.
    pub p_star: f64,
    /// One optimal schedule per agent.
    pub x_star: Vec<Vec<f64>>,
}

impl CentralizedSolution {
    pub fn aggregate(&self, instance: &[LocalProblemData]) -> Vec<f64> {
        aggregate_profile(instance, &self.x_star)
    }
}

/// Slot-wise `Σ_i c_s x^i_s`.
pub fn aggregate_profile(instance: &[LocalProblemData], xs: &[Vec<f64>]) -> Vec<f64> {
    let s = instance.first().map_or(0, |d| d.slots());
    let mut total = vec![0.0; s];
    for (data, x) in instance.iter().zip(xs) {
        for (t, v) in total.iter_mut().zip(data.consumption(x)) {
            *t += v;
        }
    }
    total
}

/// Joint epigraph LP `min P` s.t. `x^i ∈ X_i`, `Σ_i c_s x^i_s ≤ P` for every
/// slot. Variables are the stacked `x^i` followed by `P`.
pub fn solve_centralized(instance: &[LocalProblemData]) -> Result<CentralizedSolution, SubproblemError> {
    let Some(first) = instance.first() else {
        return Err(SubproblemError::Dimension("no agents".into()));
    };
    let s = first.slots();
    if let Some(i) = instance.iter().position(|d| d.slots() != s) {
        return Err(SubproblemError::Dimension(format!(
            "agent {} has {} slots, expected {s}",
            i + 1,
            instance[i].slots()
        )));
    }
    let n = instance.len();
    let nv = n * s + 1;
    let mut objective = vec![0.0; nv];
    objective[n * s] = 1.0;
    let mut lower = Vec::with_capacity(nv);
    let mut upper = Vec::with_capacity(nv);
    for d in instance {
        lower.extend_from_slice(&d.lower);
        upper.extend_from_slice(&d.upper);
    }
    lower.push(f64::NEG_INFINITY);
    upper.push(f64::INFINITY);
    let mut lp = LpProblem::new(objective).with_bounds(lower, upper);
    for k in 0..s {
        let mut row = vec![0.0; nv];
        for (i, d) in instance.iter().enumerate() {
            row[i * s + k] = d.cost_coeffs[k];
        }
        row[n * s] = -1.0;
        lp.add_row(row, 0.0);
    }
    for (i, d) in instance.iter().enumerate() {
        for (poly, &b) in d.poly_matrix.iter().zip(&d.poly_rhs) {
            let mut row = vec![0.0; nv];
            row[i * s..(i + 1) * s].copy_from_slice(poly);
            lp.add_row(row, b);
        }
    }
    let sol = linprog::solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(SubproblemError::EmptySet),
        other => return Err(SubproblemError::Status(other)),
    }
    let x_star = (0..n).map(|i| sol.primal[i * s..(i + 1) * s].to_vec()).collect();
    Ok(CentralizedSolution {
        p_star: sol.primal[n * s],
        x_star,
    })
}
