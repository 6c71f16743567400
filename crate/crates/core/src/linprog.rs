//! Dense linear programming with inequality duals.
//!
//! Problems have the form
//!
//! ```text
//!   minimize    cᵀz
//!   subject to  A z ≤ b
//!               l ≤ z ≤ u        (entries of l, u may be infinite)
//! ```
//!
//! and are solved by a two-phase primal simplex on the bounded-variable
//! standard form `A z + s = b, s ≥ 0`. Nonbasic variables rest on one of
//! their bounds (free variables rest at zero), so box constraints never
//! become tableau rows. The tableau is dense; the sizes used in this crate
//! stay well below a thousand columns.
//!
//! Row duals are read off the final basis as the reduced costs of the slack
//! columns, which makes them nonnegative and satisfies
//! `c + Aᵀλ = ν_l − ν_u` with the bound multipliers recovered from the
//! structural reduced costs.

use std::fmt;

use thiserror::Error;

/// Internal feasibility / optimality tolerance.
pub const TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const DEGENERATE_STEP: f64 = 1e-12;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERACY_LIMIT: usize = 50;
const MAX_REINVERSIONS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("variable {var}: lower bound {lower} exceeds upper bound {upper}")]
    InvalidBounds { var: usize, lower: f64, upper: f64 },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("simplex iteration limit {0} exceeded")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    /// Row-major constraint matrix; every row has `num_vars` entries.
    pub ineq_matrix: Vec<Vec<f64>>,
    pub ineq_rhs: Vec<f64>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Empty unless `status == Optimal`.
    pub primal: Vec<f64>,
    pub objective_value: f64,
    /// One nonnegative multiplier per row of `A`; empty unless optimal.
    pub ineq_duals: Vec<f64>,
}

impl LpSolution {
    fn without_point(status: LpStatus) -> Self {
        let objective_value = match status {
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        LpSolution {
            status,
            primal: Vec::new(),
            objective_value,
            ineq_duals: Vec::new(),
        }
    }
}

impl LpProblem {
    /// Problem with no rows and default bounds `[0, +∞)`.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LpProblem {
            num_vars: n,
            objective,
            ineq_matrix: Vec::new(),
            ineq_rhs: Vec::new(),
            var_lower: vec![0.0; n],
            var_upper: vec![f64::INFINITY; n],
        }
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.var_lower = lower;
        self.var_upper = upper;
        self
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, rhs: f64) {
        self.ineq_matrix.push(coeffs);
        self.ineq_rhs.push(rhs);
    }

    pub fn num_rows(&self) -> usize {
        self.ineq_matrix.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars;
        let dim = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(LpError::Dimension(format!("{what} has length {got}, expected {want}")))
            }
        };
        dim("objective", self.objective.len(), n)?;
        dim("var_lower", self.var_lower.len(), n)?;
        dim("var_upper", self.var_upper.len(), n)?;
        dim("ineq_rhs", self.ineq_rhs.len(), self.ineq_matrix.len())?;
        for (r, row) in self.ineq_matrix.iter().enumerate() {
            if row.len() != n {
                return Err(LpError::Dimension(format!(
                    "row {r} has {} columns, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(LpError::NonFinite("ineq_matrix"));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("objective"));
        }
        if self.ineq_rhs.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("ineq_rhs"));
        }
        for j in 0..n {
            let (l, u) = (self.var_lower[j], self.var_upper[j]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY || l > u {
                return Err(LpError::InvalidBounds {
                    var: j,
                    lower: l,
                    upper: u,
                });
            }
        }
        Ok(())
    }

    /// Plain-text dump for bug reports; see the `Display` impl.
    pub fn dump(&self) -> String {
        self.to_string()
    }

    /// Reduced costs `c + Aᵀλ` for a given row multiplier vector.
    pub fn reduced_costs(&self, duals: &[f64]) -> Vec<f64> {
        let mut d = self.objective.clone();
        for (row, &y) in self.ineq_matrix.iter().zip(duals) {
            if y != 0.0 {
                for (dj, a) in d.iter_mut().zip(row) {
                    *dj += y * a;
                }
            }
        }
        d
    }

    /// Lagrange dual objective `−bᵀλ + Σ_j (l_j ν_l,j − u_j ν_u,j)` where the
    /// bound multipliers are the positive and negative parts of the reduced
    /// costs. Infinite when the multipliers act on a missing bound.
    pub fn dual_objective(&self, duals: &[f64]) -> f64 {
        let d = self.reduced_costs(duals);
        let mut value: f64 = -self.ineq_rhs.iter().zip(duals).map(|(b, y)| b * y).sum::<f64>();
        for (j, &dj) in d.iter().enumerate() {
            let bound = if dj > 0.0 { self.var_lower[j] } else { self.var_upper[j] };
            // A numerically-zero multiplier on a missing bound contributes nothing.
            if dj != 0.0 && (bound.is_finite() || dj.abs() > TOL) {
                value += dj * bound;
            }
        }
        value
    }
}

impl fmt::Display for LpProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        writeln!(f, "lp vars={} rows={}", self.num_vars, self.num_rows())?;
        writeln!(f, "min: {}", join(&self.objective))?;
        writeln!(f, "lower: {}", join(&self.var_lower))?;
        writeln!(f, "upper: {}", join(&self.var_upper))?;
        for (row, b) in self.ineq_matrix.iter().zip(&self.ineq_rhs) {
            writeln!(f, "row: {} <= {b:e}", join(row))?;
        }
        Ok(())
    }
}

/// Solves `p`. Infeasible and unbounded problems are reported through
/// [`LpSolution::status`]; malformed input and the iteration cap are errors.
pub fn solve(p: &LpProblem) -> Result<LpSolution, LpError> {
    p.validate()?;
    let mut t = Tableau::new(p);
    let cap = 50 * (p.num_rows() + p.num_vars).max(1);

    if t.n_art > 0 {
        t.set_phase_one_costs();
        match t.iterate(cap)? {
            Outcome::Optimal => {}
            Outcome::Unbounded => unreachable!("phase one objective is bounded below"),
        }
        let infeasibility: f64 = (t.n + t.m..t.total).map(|j| t.value[j]).sum();
        let scale = 1.0 + p.ineq_rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if infeasibility > 1e-8 * scale {
            return Ok(LpSolution::without_point(LpStatus::Infeasible));
        }
        t.retire_artificials();
    }

    t.width = t.n + t.m;
    t.set_phase_two_costs();
    let mut reinversions = 0;
    loop {
        if let Outcome::Unbounded = t.iterate(cap)? {
            return Ok(LpSolution::without_point(LpStatus::Unbounded));
        }
        let sol = t.extract(p);
        if reinversions >= MAX_REINVERSIONS || t.residual_ok(p, &sol) {
            return Ok(sol);
        }
        reinversions += 1;
        t.reinvert();
    }
}

enum Outcome {
    Optimal,
    Unbounded,
}

/// Dense simplex tableau over columns `[structural | slack | artificial]`.
struct Tableau {
    n: usize,
    m: usize,
    n_art: usize,
    total: usize,
    /// Number of leading columns that can still enter the basis.
    width: usize,
    /// `m × total`, row-major; holds `B⁻¹ [A I ±E]`.
    rows: Vec<f64>,
    /// Original columns of the constraint system, kept for reinversion.
    original: Vec<f64>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    value: Vec<f64>,
    basis: Vec<usize>,
    /// Row holding each basic variable, `usize::MAX` when nonbasic.
    row_of: Vec<usize>,
    iterations: usize,
    structural_cost: Vec<f64>,
}

impl Tableau {
    fn new(p: &LpProblem) -> Self {
        let n = p.num_vars;
        let m = p.num_rows();
        let mut value = Vec::with_capacity(n + m);
        for j in 0..n {
            let (l, u) = (p.var_lower[j], p.var_upper[j]);
            value.push(if l.is_finite() {
                l
            } else if u.is_finite() {
                u
            } else {
                0.0
            });
        }
        let slack: Vec<f64> = p
            .ineq_matrix
            .iter()
            .zip(&p.ineq_rhs)
            .map(|(row, b)| b - row.iter().zip(&value).map(|(a, z)| a * z).sum::<f64>())
            .collect();
        let art_rows: Vec<usize> = (0..m).filter(|&r| slack[r] < 0.0).collect();
        let n_art = art_rows.len();
        let total = n + m + n_art;

        let mut original = vec![0.0; m * total];
        for r in 0..m {
            let base = r * total;
            original[base..base + n].copy_from_slice(&p.ineq_matrix[r]);
            original[base + n + r] = 1.0;
        }
        for (k, &r) in art_rows.iter().enumerate() {
            original[r * total + n + m + k] = -1.0;
        }

        let mut rows = original.clone();
        let mut basis = vec![0; m];
        let mut row_of = vec![usize::MAX; total];
        let mut lower = p.var_lower.clone();
        let mut upper = p.var_upper.clone();
        lower.extend(std::iter::repeat_n(0.0, m + n_art));
        upper.extend(std::iter::repeat_n(f64::INFINITY, m + n_art));
        value.extend(std::iter::repeat_n(0.0, m + n_art));

        let mut art_iter = art_rows.iter().enumerate().peekable();
        for r in 0..m {
            if let Some((k, _)) = art_iter.next_if(|(_, &ar)| ar == r) {
                // Artificial is basic; flip the row so its column is +e_r.
                let j = n + m + k;
                for v in &mut rows[r * total..(r + 1) * total] {
                    *v = -*v;
                }
                basis[r] = j;
                row_of[j] = r;
                value[j] = -slack[r];
            } else {
                basis[r] = n + r;
                row_of[n + r] = r;
                value[n + r] = slack[r];
            }
        }

        Tableau {
            n,
            m,
            n_art,
            total,
            width: total,
            rows,
            original,
            rhs: p.ineq_rhs.clone(),
            cost: vec![0.0; total],
            reduced: vec![0.0; total],
            lower,
            upper,
            value,
            basis,
            row_of,
            iterations: 0,
            structural_cost: p.objective.clone(),
        }
    }

    fn set_phase_one_costs(&mut self) {
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        for j in self.n + self.m..self.total {
            self.cost[j] = 1.0;
        }
        self.recompute_reduced();
    }

    fn set_phase_two_costs(&mut self) {
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        self.cost[..self.n].copy_from_slice(&self.structural_cost);
        self.recompute_reduced();
    }

    fn recompute_reduced(&mut self) {
        let total = self.total;
        self.reduced[..self.width].copy_from_slice(&self.cost[..self.width]);
        for r in 0..self.m {
            let cb = self.cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.rows[r * total..r * total + self.width];
                for (d, a) in self.reduced[..self.width].iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
        for &j in &self.basis {
            if j < self.width {
                self.reduced[j] = 0.0;
            }
        }
    }

    /// Entering column and direction (+1 increase, -1 decrease).
    fn price(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = TOL;
        for j in 0..self.width {
            if self.row_of[j] != usize::MAX {
                continue;
            }
            let d = self.reduced[j];
            let dir = if d < -TOL && self.value[j] < self.upper[j] {
                1.0
            } else if d > TOL && self.value[j] > self.lower[j] {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if d.abs() > best_score {
                best_score = d.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    fn iterate(&mut self, cap: usize) -> Result<Outcome, LpError> {
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            let Some((q, dir)) = self.price(bland) else {
                return Ok(Outcome::Optimal);
            };
            self.iterations += 1;
            if self.iterations > cap {
                return Err(LpError::IterationLimit(cap));
            }

            // Ratio test: basic r changes by -T[r][q] * dir per unit step.
            let total = self.total;
            let mut step = f64::INFINITY;
            let mut leave: Option<(usize, f64)> = None; // (row, bound hit)
            let mut leave_mag = 0.0;
            for r in 0..self.m {
                let alpha = self.rows[r * total + q];
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let rate = -alpha * dir;
                let b = self.basis[r];
                let (ratio, bound) = if rate < 0.0 {
                    if !self.lower[b].is_finite() {
                        continue;
                    }
                    (((self.value[b] - self.lower[b]) / -rate).max(0.0), self.lower[b])
                } else {
                    if !self.upper[b].is_finite() {
                        continue;
                    }
                    (((self.upper[b] - self.value[b]) / rate).max(0.0), self.upper[b])
                };
                let better = ratio < step - DEGENERATE_STEP
                    || (ratio <= step + DEGENERATE_STEP
                        && match leave {
                            None => true,
                            Some((lr, _)) if bland => b < self.basis[lr],
                            Some(_) => alpha.abs() > leave_mag,
                        });
                if better {
                    step = step.min(ratio);
                    leave = Some((r, bound));
                    leave_mag = alpha.abs();
                }
            }
            let flip = self.upper[q] - self.lower[q];
            let is_flip = flip.is_finite() && flip <= step;
            if is_flip {
                step = flip;
            } else if leave.is_none() {
                return Ok(Outcome::Unbounded);
            }

            if step < DEGENERATE_STEP {
                degenerate += 1;
                if degenerate > DEGENERACY_LIMIT {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }

            let delta = dir * step;
            if delta != 0.0 {
                for r in 0..self.m {
                    let alpha = self.rows[r * total + q];
                    if alpha != 0.0 {
                        self.value[self.basis[r]] -= alpha * delta;
                    }
                }
            }
            if is_flip {
                self.value[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                continue;
            }
            self.value[q] += delta;
            let (p_row, bound) = leave.expect("pivot row");
            let out = self.basis[p_row];
            self.value[out] = bound;
            self.pivot(p_row, q);
        }
    }

    fn pivot(&mut self, p_row: usize, q: usize) {
        let total = self.total;
        let width = self.width.max(q + 1);
        let base = p_row * total;
        let piv = self.rows[base + q];
        for v in &mut self.rows[base..base + width] {
            *v /= piv;
        }
        self.rows[base + q] = 1.0;
        let nz: Vec<usize> = (0..width).filter(|&j| self.rows[base + j] != 0.0).collect();
        let pivot_row: Vec<f64> = nz.iter().map(|&j| self.rows[base + j]).collect();
        for r in 0..self.m {
            if r == p_row {
                continue;
            }
            let f = self.rows[r * total + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.rows[r * total..r * total + width];
            for (&j, &a) in nz.iter().zip(&pivot_row) {
                row[j] -= f * a;
            }
            row[q] = 0.0;
        }
        let f = self.reduced[q];
        if f != 0.0 {
            for (&j, &a) in nz.iter().zip(&pivot_row) {
                if j < self.reduced.len() {
                    self.reduced[j] -= f * a;
                }
            }
        }
        self.reduced[q] = 0.0;

        let out = self.basis[p_row];
        self.row_of[out] = usize::MAX;
        self.basis[p_row] = q;
        self.row_of[q] = p_row;
    }

    /// Pivots zero-level artificials out of the basis where possible and
    /// pins every artificial to zero.
    fn retire_artificials(&mut self) {
        let art_start = self.n + self.m;
        let total = self.total;
        for r in 0..self.m {
            let b = self.basis[r];
            if b < art_start {
                continue;
            }
            let mut best = None;
            let mut mag = 1e-9;
            for j in 0..art_start {
                if self.row_of[j] == usize::MAX && self.rows[r * total + j].abs() > mag {
                    mag = self.rows[r * total + j].abs();
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                self.value[b] = 0.0;
                self.pivot(r, j);
            }
        }
        for j in art_start..total {
            self.lower[j] = 0.0;
            self.upper[j] = 0.0;
            if self.row_of[j] == usize::MAX {
                self.value[j] = 0.0;
            }
        }
    }

    fn extract(&self, p: &LpProblem) -> LpSolution {
        let primal = self.value[..self.n].to_vec();
        let ineq_duals: Vec<f64> = (0..self.m)
            .map(|r| {
                let j = self.n + r;
                if self.row_of[j] != usize::MAX {
                    0.0
                } else {
                    self.reduced[j].max(0.0)
                }
            })
            .collect();
        let objective_value = p.objective.iter().zip(&primal).map(|(c, z)| c * z).sum();
        LpSolution {
            status: LpStatus::Optimal,
            primal,
            objective_value,
            ineq_duals,
        }
    }

    fn residual_ok(&self, p: &LpProblem, sol: &LpSolution) -> bool {
        let scale = 1.0 + p.ineq_rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let primal_ok = p.ineq_matrix.iter().zip(&p.ineq_rhs).all(|(row, b)| {
            let lhs: f64 = row.iter().zip(&sol.primal).map(|(a, z)| a * z).sum();
            lhs <= b + TOL * scale
        });
        primal_ok && check_kkt(p, sol, 1e-8 * scale)
    }

    /// Rebuilds `B⁻¹ [A I ±E]`, the basic values and the reduced costs from
    /// the original data and the current basis.
    fn reinvert(&mut self) {
        let (m, total) = (self.m, self.total);
        let mut t = self.original.clone();
        let mut rhs = self.rhs.clone();
        // Fold nonbasic values into the right-hand side.
        for r in 0..m {
            for j in 0..total {
                if self.row_of[j] == usize::MAX {
                    rhs[r] -= t[r * total + j] * self.value[j];
                }
            }
        }
        let basis = self.basis.clone();
        let mut assigned = vec![false; m];
        let mut new_basis = vec![usize::MAX; m];
        for &col in &basis {
            let mut best = None;
            let mut mag = 0.0;
            for r in 0..m {
                if !assigned[r] && t[r * total + col].abs() > mag {
                    mag = t[r * total + col].abs();
                    best = Some(r);
                }
            }
            let Some(pr) = best else { continue };
            assigned[pr] = true;
            new_basis[pr] = col;
            let piv = t[pr * total + col];
            for j in 0..total {
                t[pr * total + j] /= piv;
            }
            rhs[pr] /= piv;
            for r in 0..m {
                if r == pr {
                    continue;
                }
                let f = t[r * total + col];
                if f != 0.0 {
                    for j in 0..total {
                        t[r * total + j] -= f * t[pr * total + j];
                    }
                    rhs[r] -= f * rhs[pr];
                }
            }
        }
        if new_basis.contains(&usize::MAX) {
            // Singular basis: keep the incrementally updated tableau.
            return;
        }
        self.rows = t;
        self.basis = new_basis;
        for (r, &b) in self.basis.iter().enumerate() {
            self.row_of[b] = r;
            self.value[b] = rhs[r];
        }
        self.recompute_reduced();
    }
}

/// KKT conditions of `p` at `s` within `tol`: primal feasibility, dual
/// feasibility, stationarity with sign-consistent bound multipliers, and
/// complementary slackness on the rows.
pub fn check_kkt(p: &LpProblem, s: &LpSolution, tol: f64) -> bool {
    if s.status != LpStatus::Optimal || s.primal.len() != p.num_vars || s.ineq_duals.len() != p.num_rows() {
        return false;
    }
    for j in 0..p.num_vars {
        let z = s.primal[j];
        if z < p.var_lower[j] - tol || z > p.var_upper[j] + tol {
            return false;
        }
    }
    for ((row, b), &y) in p.ineq_matrix.iter().zip(&p.ineq_rhs).zip(&s.ineq_duals) {
        let slack = b - row.iter().zip(&s.primal).map(|(a, z)| a * z).sum::<f64>();
        if slack < -tol || y < -tol || (y * slack).abs() > tol {
            return false;
        }
    }
    let d = p.reduced_costs(&s.ineq_duals);
    for (j, &dj) in d.iter().enumerate() {
        let z = s.primal[j];
        let at_lower = z - p.var_lower[j] <= tol;
        let at_upper = p.var_upper[j] - z <= tol;
        let ok = match (at_lower, at_upper) {
            (true, true) => true,
            (true, false) => dj >= -tol,
            (false, true) => dj <= tol,
            (false, false) => dj.abs() <= tol,
        };
        if !ok {
            return false;
        }
    }
    let gap = (s.objective_value - p.dual_objective(&s.ineq_duals)).abs();
    gap <= tol * s.objective_value.abs().max(1.0)
}
