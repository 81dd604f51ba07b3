//! Concave envelopes over the belief simplex via grid linear programming,
//! plus Caratheodory reduction of convex combinations.

use crate::belief::{Belief, SignalStructure};
use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::lp::{self, LpStatus};
use crate::value::BeliefFn;
use serde::{Deserialize, Serialize};

/// Default grid resolution per state-space dimension.
pub const DEFAULT_GRID_D: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpOutcome {
    Optimal,
    DegenerateResolved,
}

/// Result of one concavification: the envelope value at the prior and a
/// Bayes-plausible structure with at most |X| atoms achieving it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CavResult {
    pub value: f64,
    pub structure: SignalStructure,
    pub grid_resolution: u32,
    pub lp_status: LpOutcome,
}

/// Computes the concave envelope of `w` at `mu` on the grid of resolution `d`:
/// the best expected value of `w` over Bayes-plausible distributions with
/// posteriors restricted to grid points.
///
/// The LP `max sum p_g w(g)` subject to `sum p_g g = mu`, `p >= 0` has |X|
/// equality rows, so a basic optimal solution carries at most |X| atoms.
pub fn concavify(w: &dyn BeliefFn, mu: &Belief, d: u32) -> Result<CavResult> {
    let grid = SimplexGrid::new(mu.dim(), d)?;
    concavify_on(&grid, w, mu)
}

/// Same as [`concavify`] with a caller-supplied grid (avoids rebuilding the
/// grid in inner loops).
pub fn concavify_on(grid: &SimplexGrid, w: &dyn BeliefFn, mu: &Belief) -> Result<CavResult> {
    if grid.resolution() < 2 {
        return Err(Error::InvalidSpec("grid resolution must be at least 2".into()));
    }
    if mu.dim() != grid.dim() {
        return Err(Error::InvalidBelief("prior dimension does not match grid".into()));
    }
    let dim = grid.dim();
    let npts = grid.len();
    let mut a = vec![vec![0.0f64; npts]; dim];
    let mut c = vec![0.0f64; npts];
    for (j, g) in grid.points().iter().enumerate() {
        for i in 0..dim {
            a[i][j] = g.get(i);
        }
        c[j] = w.eval(g);
    }
    let b: Vec<f64> = mu.probs().to_vec();
    let sol = lp::solve_standard(&a, &b, &c)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible { residual } => {
            return Err(Error::InfeasiblePrior(format!(
                "phase-1 residual {residual:.3e} for prior {:?}",
                mu.probs()
            )));
        }
        LpStatus::Unbounded => {
            return Err(Error::InfeasiblePrior("unbounded envelope LP".into()));
        }
    }
    let atoms: Vec<(f64, Belief)> = sol
        .x
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 1e-12)
        .map(|(j, &p)| (p, grid.point(j).clone()))
        .collect();
    let structure = SignalStructure::new(atoms)?;
    debug_assert!(structure.support_size() <= dim);
    Ok(CavResult {
        value: sol.objective,
        structure,
        grid_resolution: grid.resolution(),
        lp_status: if sol.degenerate { LpOutcome::DegenerateResolved } else { LpOutcome::Optimal },
    })
}

/// Rewrites a convex combination in R^m using at most m+1 atoms with the same
/// barycenter, by iterated affine-dependence pivoting: find a nontrivial
/// affine dependence among the points, shift weights along it until one hits
/// zero, drop it, repeat.
pub fn caratheodory_reduce(
    atoms: &[(f64, Vec<f64>)],
    target: &[f64],
) -> Result<Vec<(f64, Vec<f64>)>> {
    let m = target.len();
    let mut work: Vec<(f64, Vec<f64>)> = atoms
        .iter()
        .filter(|(w, _)| *w > 1e-14)
        .cloned()
        .collect();
    for (_, p) in &work {
        if p.len() != m {
            return Err(Error::InvalidSpec("atom dimension mismatch".into()));
        }
    }
    check_barycenter(&work, target)?;

    while work.len() > m + 1 {
        let dep = affine_dependence(&work)?;
        // shift weights along the dependence direction until a weight hits zero
        let mut t = f64::INFINITY;
        for (i, (w, _)) in work.iter().enumerate() {
            if dep[i] > 1e-13 {
                t = t.min(w / dep[i]);
            }
        }
        if !t.is_finite() {
            return Err(Error::NumericalRankFailure {
                tol: 1e-10,
                detail: "dependence direction has no positive component".into(),
            });
        }
        for (i, (w, _)) in work.iter_mut().enumerate() {
            *w -= t * dep[i];
        }
        // drop exactly the zeroed atoms
        work.retain(|(w, _)| *w > 1e-12);
    }
    check_barycenter(&work, target)?;
    Ok(work)
}

fn check_barycenter(atoms: &[(f64, Vec<f64>)], target: &[f64]) -> Result<()> {
    let m = target.len();
    let mut bc = vec![0.0f64; m];
    let mut total = 0.0;
    for (w, p) in atoms {
        total += w;
        for i in 0..m {
            bc[i] += w * p[i];
        }
    }
    let scale = 1.0 + target.iter().map(|x| x.abs()).fold(0.0, f64::max);
    for i in 0..m {
        if (bc[i] - target[i]).abs() > 1e-9 * scale {
            return Err(Error::InvalidSpec(format!(
                "barycenter drifted: coordinate {i} off by {:.3e}",
                (bc[i] - target[i]).abs()
            )));
        }
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSpec(format!("weights sum to {total}")));
    }
    Ok(())
}

/// A nontrivial c with sum_i c_i x_i = 0 and sum_i c_i = 0, found by Gaussian
/// elimination on the (m+1) x k homogeneous system.
fn affine_dependence(atoms: &[(f64, Vec<f64>)]) -> Result<Vec<f64>> {
    let k = atoms.len();
    let m = atoms[0].1.len();
    let rows = m + 1;
    let mut mat = vec![vec![0.0f64; k]; rows];
    for (j, (_, p)) in atoms.iter().enumerate() {
        for i in 0..m {
            mat[i][j] = p[i];
        }
        mat[m][j] = 1.0;
    }
    let tol = 1e-10;
    // forward elimination with partial pivoting
    let mut pivot_col_of_row = vec![usize::MAX; rows];
    let mut is_pivot_col = vec![false; k];
    let mut r = 0usize;
    for col in 0..k {
        if r >= rows {
            break;
        }
        let (best, bestval) = (r..rows)
            .map(|i| (i, mat[i][col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if bestval < tol {
            continue;
        }
        mat.swap(r, best);
        let piv = mat[r][col];
        for j in 0..k {
            mat[r][j] /= piv;
        }
        for i in 0..rows {
            if i != r && mat[i][col].abs() > 0.0 {
                let f = mat[i][col];
                for j in 0..k {
                    mat[i][j] -= f * mat[r][j];
                }
            }
        }
        pivot_col_of_row[r] = col;
        is_pivot_col[col] = true;
        r += 1;
    }
    let free = (0..k).find(|&j| !is_pivot_col[j]).ok_or(Error::NumericalRankFailure {
        tol,
        detail: "no free column in affine-dependence system".into(),
    })?;
    let mut c = vec![0.0f64; k];
    c[free] = 1.0;
    for (row, &pc) in pivot_col_of_row.iter().enumerate() {
        if pc != usize::MAX {
            c[pc] = -mat[row][free];
        }
    }
    // verify the dependence actually closes
    let mut err: f64 = 0.0;
    for i in 0..m {
        let s: f64 = atoms.iter().enumerate().map(|(j, (_, p))| c[j] * p[i]).sum();
        err = err.max(s.abs());
    }
    let s: f64 = c.iter().sum();
    err = err.max(s.abs());
    let scale = c.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
    if err > 1e-8 * scale {
        return Err(Error::NumericalRankFailure {
            tol,
            detail: format!("dependence residual {err:.3e}"),
        });
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::ValueFunction;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn indicator_split_matches_formula() {
        // Pr(x1)=0.3 prior, indicator threshold 0.6: split between 0 and 0.6
        let w = ValueFunction::indicator(0.6, 1);
        let mu = Belief::binary(0.3).unwrap();
        let r = concavify(&w, &mu, 10).unwrap();
        assert!((r.value - 0.5).abs() < 1e-9);
        assert_eq!(r.structure.support_size(), 2);
        let mut atoms: Vec<_> = r.structure.atoms().to_vec();
        atoms.sort_by(|a, b| a.1.get(1).partial_cmp(&b.1.get(1)).unwrap());
        assert!((atoms[0].0 - 0.5).abs() < 1e-9 && atoms[0].1.get(1).abs() < 1e-12);
        assert!((atoms[1].0 - 0.5).abs() < 1e-9 && (atoms[1].1.get(1) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn concave_function_needs_no_mixing() {
        let w = ValueFunction::entropy();
        for p1 in [0.15, 0.3, 0.55, 0.8] {
            let mu = Belief::binary(p1).unwrap();
            let r = concavify(&w, &mu, 20).unwrap();
            assert!((r.value - mu.entropy()).abs() < 1e-9);
            assert_eq!(r.structure.support_size(), 1);
        }
    }

    #[test]
    fn convex_function_splits_to_vertices() {
        let w = ValueFunction::pwl(vec![(0.0, 0.5), (0.5, 0.0), (1.0, 0.5)]);
        let mu = Belief::binary(0.3).unwrap();
        let r = concavify(&w, &mu, 10).unwrap();
        assert!((r.value - 0.5).abs() < 1e-9);
        let mut atoms: Vec<_> = r.structure.atoms().to_vec();
        atoms.sort_by(|a, b| a.1.get(1).partial_cmp(&b.1.get(1)).unwrap());
        assert!((atoms[0].0 - 0.7).abs() < 1e-9);
        assert!((atoms[1].0 - 0.3).abs() < 1e-9);
        assert!(atoms[0].1.get(1).abs() < 1e-12 && (atoms[1].1.get(1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_dominates_and_refines_monotonically() {
        // peak off-grid so refinement genuinely improves; prior on every grid
        let w = ValueFunction::pwl(vec![(0.0, 0.0), (0.37, 1.0), (1.0, 0.2)]);
        let mu = Belief::binary(0.2).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for d in [5u32, 10, 20, 40] {
            let r = concavify(&w, &mu, d).unwrap();
            assert!(r.value >= w.eval(&mu) - 1e-9);
            assert!(r.value >= prev - 1e-9, "refinement decreased the envelope");
            prev = r.value;
        }
    }

    #[test]
    fn support_bound_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [2usize, 3] {
            for _ in 0..5 {
                let payoffs: Vec<Vec<f64>> = (0..3)
                    .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect();
                let w = ValueFunction::decision(payoffs);
                let mu = {
                    let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.05..1.0)).collect();
                    Belief::new(raw).unwrap()
                };
                let r = concavify(&w, &mu, 12).unwrap();
                assert!(r.structure.support_size() <= dim);
                assert!(r.structure.barycenter().sup_dist(&mu) < 1e-9);
            }
        }
    }

    #[test]
    fn oracle_equivalence_binary() {
        // exhaustive two-point search on the same grid
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let bp: Vec<(f64, f64)> = vec![
                (0.0, rng.gen_range(-1.0..1.0)),
                (0.25, rng.gen_range(-1.0..1.0)),
                (0.5, rng.gen_range(-1.0..1.0)),
                (0.75, rng.gen_range(-1.0..1.0)),
                (1.0, rng.gen_range(-1.0..1.0)),
            ];
            let w = ValueFunction::pwl(bp);
            let d = 12u32;
            let mu = Belief::binary(rng.gen_range(1..d) as f64 / d as f64).unwrap();
            let r = concavify(&w, &mu, d).unwrap();
            let oracle = two_point_oracle(&w, &mu, d);
            assert!((r.value - oracle).abs() < 1e-9, "lp {} vs oracle {}", r.value, oracle);
        }
    }

    fn two_point_oracle(w: &ValueFunction, mu: &Belief, d: u32) -> f64 {
        let pts: Vec<f64> = (0..=d).map(|k| k as f64 / d as f64).collect();
        let target = mu.get(1);
        let mut best = f64::NEG_INFINITY;
        for (ia, &a) in pts.iter().enumerate() {
            for &b in &pts[ia..] {
                let (wa, wb) = if (b - a).abs() < 1e-15 {
                    if (a - target).abs() > 1e-12 {
                        continue;
                    }
                    (1.0, 0.0)
                } else {
                    if target < a - 1e-12 || target > b + 1e-12 {
                        continue;
                    }
                    let wb = (target - a) / (b - a);
                    (1.0 - wb, wb)
                };
                let val = wa * w.eval(&Belief::binary(a).unwrap())
                    + wb * w.eval(&Belief::binary(b).unwrap());
                best = best.max(val);
            }
        }
        best
    }

    #[test]
    fn caratheodory_collinear() {
        let atoms = vec![
            (0.25, vec![0.2]),
            (0.25, vec![0.4]),
            (0.25, vec![0.6]),
            (0.25, vec![0.8]),
        ];
        let out = caratheodory_reduce(&atoms, &[0.5]).unwrap();
        assert!(out.len() <= 2);
        let mean: f64 = out.iter().map(|(w, p)| w * p[0]).sum();
        assert!((mean - 0.5).abs() < 1e-9);
    }

    #[test]
    fn caratheodory_noop_when_small() {
        let atoms = vec![(0.5, vec![0.0, 0.0]), (0.5, vec![1.0, 1.0])];
        let out = caratheodory_reduce(&atoms, &[0.5, 0.5]).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn caratheodory_random_planar() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let pts: Vec<Vec<f64>> = (0..5)
                .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect();
            let raw: Vec<f64> = (0..5).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let target: Vec<f64> = (0..2)
                .map(|i| pts.iter().zip(&weights).map(|(p, w)| w * p[i]).sum())
                .collect();
            let atoms: Vec<(f64, Vec<f64>)> =
                weights.into_iter().zip(pts).collect();
            let out = caratheodory_reduce(&atoms, &target).unwrap();
            assert!(out.len() <= 3);
            for i in 0..2 {
                let bc: f64 = out.iter().map(|(w, p)| w * p[i]).sum();
                assert!((bc - target[i]).abs() < 1e-9);
            }
        }
    }
}
