//! Dense two-phase simplex for small equality-form linear programs.
//!
//! Problems here are tiny (a handful of rows, at most a few thousand
//! columns), so a full-tableau method with Bland's rule is the right
//! trade: deterministic, terminating under degeneracy, no sparse machinery.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const RCOST_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal,
    /// Phase 1 could not drive the artificials to zero; the residual is the
    /// remaining L1 infeasibility.
    Infeasible { residual: f64 },
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub basis: Vec<usize>,
    pub status: LpStatus,
    /// Some basic variable sat at zero during the solve.
    pub degenerate: bool,
}

/// Maximizes `c . x` subject to `A x = b`, `x >= 0`.
///
/// Returns a basic optimal solution: at most `A.len()` entries of `x` are
/// nonzero. With Bland's rule both the entering and leaving choices take the
/// smallest admissible index, so ties resolve to the lexicographically
/// smallest basis.
pub fn solve_standard(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<LpSolution> {
    let m = a.len();
    let n = c.len();
    if b.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidSpec("inconsistent LP dimensions".into()));
    }

    // tableau with artificial columns appended; flip rows so rhs >= 0
    let mut t = vec![vec![0.0f64; n + m]; m];
    let mut rhs = vec![0.0f64; m];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[i][j];
        }
        t[i][n + i] = 1.0;
        rhs[i] = sign * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut degenerate = false;

    // phase 1: minimize the artificial mass
    let mut c1 = vec![0.0f64; n + m];
    for j in n..n + m {
        c1[j] = -1.0;
    }
    run_simplex(&mut t, &mut rhs, &mut basis, &c1, n + m, &mut degenerate)?;
    let residual: f64 = basis
        .iter()
        .zip(&rhs)
        .filter(|(&j, _)| j >= n)
        .map(|(_, &v)| v.max(0.0))
        .sum();
    if residual > 1e-8 {
        let x = extract(&basis, &rhs, n);
        let objective = dot(c, &x);
        return Ok(LpSolution { x, objective, basis, status: LpStatus::Infeasible { residual }, degenerate });
    }

    // drive leftover zero-level artificials out of the basis where possible
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > 1e-8) {
                pivot(&mut t, &mut rhs, &mut basis, i, j);
            }
        }
    }

    // phase 2: real objective, artificials barred from entering
    let mut c2 = vec![0.0f64; n + m];
    c2[..n].copy_from_slice(c);
    let status = run_simplex(&mut t, &mut rhs, &mut basis, &c2, n, &mut degenerate)?;
    let x = extract(&basis, &rhs, n);
    let objective = dot(c, &x);
    Ok(LpSolution { x, objective, basis, status, degenerate })
}

/// Phase-1 feasibility only: least-L1-residual nonnegative solution of
/// `A x = b`. Returns the point and the residual (0 when feasible).
pub fn feasibility(a: &[Vec<f64>], b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = a.first().map(|r| r.len()).unwrap_or(0);
    let sol = solve_standard(a, b, &vec![0.0; n])?;
    let residual = match sol.status {
        LpStatus::Infeasible { residual } => residual,
        _ => 0.0,
    };
    Ok((sol.x, residual))
}

fn run_simplex(
    t: &mut [Vec<f64>],
    rhs: &mut [f64],
    basis: &mut [usize],
    c: &[f64],
    enter_limit: usize,
    degenerate: &mut bool,
) -> Result<LpStatus> {
    let m = t.len();
    let max_iters = 200 * (t[0].len() + m) + 1000;
    for _ in 0..max_iters {
        // reduced costs; Bland: take the first improving column
        let mut entering = None;
        for j in 0..enter_limit {
            if basis.contains(&j) {
                continue;
            }
            let mut rc = c[j];
            for i in 0..m {
                rc -= c[basis[i]] * t[i][j];
            }
            if rc > RCOST_TOL {
                entering = Some(j);
                break;
            }
        }
        let j = match entering {
            Some(j) => j,
            None => return Ok(LpStatus::Optimal),
        };
        // ratio test; ties to the smallest basis index (Bland)
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][j] > PIVOT_TOL {
                let ratio = rhs[i] / t[i][j];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - PIVOT_TOL
                            || (ratio < lr + PIVOT_TOL && basis[i] < basis[li])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let (r, ratio) = match leave {
            Some(x) => x,
            None => return Ok(LpStatus::Unbounded),
        };
        if ratio < PIVOT_TOL {
            *degenerate = true;
        }
        pivot(t, rhs, basis, r, j);
    }
    Err(Error::MaxIterations { max_iters, residual: f64::NAN })
}

fn pivot(t: &mut [Vec<f64>], rhs: &mut [f64], basis: &mut [usize], r: usize, j: usize) {
    let m = t.len();
    let ncols = t[0].len();
    let piv = t[r][j];
    for col in 0..ncols {
        t[r][col] /= piv;
    }
    rhs[r] /= piv;
    for i in 0..m {
        if i != r && t[i][j].abs() > 0.0 {
            let factor = t[i][j];
            for col in 0..ncols {
                t[i][col] -= factor * t[r][col];
            }
            rhs[i] -= factor * rhs[r];
        }
    }
    basis[r] = j;
}

fn extract(basis: &[usize], rhs: &[f64], n: usize) -> Vec<f64> {
    let mut x = vec![0.0f64; n];
    for (i, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = rhs[i].max(0.0);
        }
    }
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
