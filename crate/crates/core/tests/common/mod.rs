//! Test-only oracles that share no code path with the library solvers.
#![allow(dead_code)]

use peakdual::linprog::LpProblem;
use rand::Rng;

/// Minimum of `cᵀz` over `{A z ≤ b, l ≤ z ≤ u}` by enumerating every basic
/// point (all `n`-subsets of constraints taken as equalities). Requires
/// finite bounds. Returns `None` when no feasible vertex exists.
pub fn vertex_enumeration_min(p: &LpProblem) -> Option<f64> {
    let n = p.num_vars;
    let mut rows: Vec<(Vec<f64>, f64)> = p.ineq_matrix.iter().cloned().zip(p.ineq_rhs.iter().copied()).collect();
    for j in 0..n {
        assert!(p.var_lower[j].is_finite() && p.var_upper[j].is_finite());
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), p.var_upper[j]));
        e[j] = -1.0;
        rows.push((e, -p.var_lower[j]));
    }
    let feasible = |z: &[f64]| {
        rows.iter().all(|(a, b)| {
            let lhs: f64 = a.iter().zip(z).map(|(x, y)| x * y).sum();
            lhs <= b + 1e-9
        })
    };
    let mut best: Option<f64> = None;
    for_each_subset(rows.len(), n, &mut |idx| {
        let a: Vec<Vec<f64>> = idx.iter().map(|&k| rows[k].0.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&k| rows[k].1).collect();
        if let Some(z) = gauss_solve(a, b) {
            if feasible(&z) {
                let obj: f64 = p.objective.iter().zip(&z).map(|(c, x)| c * x).sum();
                best = Some(best.map_or(obj, |v: f64| v.min(obj)));
            }
        }
    });
    best
}

fn for_each_subset(len: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, len: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..len {
            if len - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, len, k, cur, f);
            cur.pop();
        }
    }
    rec(0, len, k, &mut Vec::with_capacity(k), f);
}

/// Dense Gaussian elimination with partial pivoting; `None` if singular.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut z = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * z[c]).sum();
        z[r] = (b[r] - s) / a[r][r];
    }
    Some(z)
}

/// Random bounded LP with at most 6 variables and 8 rows.
pub fn random_small_lp<R: Rng>(rng: &mut R) -> LpProblem {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(0..=8);
    let objective = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..0.5)).collect();
    let upper = lower.iter().map(|l| l + rng.gen_range(0.1..3.0)).collect();
    let mut p = LpProblem::new(objective).with_bounds(lower, upper);
    for _ in 0..m {
        let row = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        p.add_row(row, rng.gen_range(-1.0..2.0));
    }
    p
}

/// Uniform sample from the unit simplex of dimension `s`.
pub fn simplex_sample<R: Rng>(rng: &mut R, s: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..s).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Random nonempty polytope in `[0,1]^s`: rows are drawn around a random
/// interior point so the set is never empty. Costs are positive.
pub fn random_local_data<R: Rng>(rng: &mut R, s: usize, rows: usize) -> peakdual::subproblem::LocalProblemData {
    let anchor: Vec<f64> = (0..s).map(|_| rng.gen_range(0.1..0.9)).collect();
    let mut matrix = Vec::with_capacity(rows);
    let mut rhs = Vec::with_capacity(rows);
    for _ in 0..rows {
        let row: Vec<f64> = (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let at: f64 = row.iter().zip(&anchor).map(|(a, x)| a * x).sum();
        rhs.push(at + rng.gen_range(0.0..0.3));
        matrix.push(row);
    }
    let costs = (0..s).map(|_| rng.gen_range(0.5..2.0)).collect();
    peakdual::subproblem::LocalProblemData::new(costs, matrix, rhs, vec![0.0; s], vec![1.0; s]).unwrap()
}
