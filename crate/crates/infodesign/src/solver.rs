//! Constrained optimization over the possibility set: generic dense search,
//! conditional-gradient iteration for smooth objectives, multiplier-direction
//! search for slack constraints, and a dual bisection for quasiconcave
//! sublevel constraints.

use crate::belief::{Belief, SignalStructure};
use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::objective::{validate_gradient, Objective};
use crate::posset::{
    affine_basis, approximate_set, caratheodory_structure, default_directions, dot, norm,
    support_point, SetApprox,
};
use crate::value::{expected_values, ValueFunction};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Uniform tolerance for constraint feasibility checks.
pub const FEAS_TOL: f64 = 1e-6;
/// Stationarity certificate for the conditional-gradient path.
pub const FW_GAP_TOL: f64 = 1e-7;

/// Constraint on the expectation vector.
pub enum Constraint {
    None,
    /// Last `m` coordinates must be nonnegative; the objective must ignore
    /// them.
    NonnegTail { m: usize },
    /// g(v) >= 0 for a differentiable (ideally quasiconcave) g.
    Sublevel { g: Box<dyn Objective> },
    /// Arbitrary membership predicate; only the generic solver handles this.
    ExplicitSet { predicate: Box<dyn Fn(&[f64]) -> bool + Sync + Send> },
}

impl Constraint {
    /// Violation magnitude at `v` (0 when satisfied; predicates report 1).
    pub fn violation(&self, v: &[f64]) -> f64 {
        match self {
            Constraint::None => 0.0,
            Constraint::NonnegTail { m } => v[v.len() - m..]
                .iter()
                .map(|&x| (-x).max(0.0))
                .fold(0.0, f64::max),
            Constraint::Sublevel { g } => (-g.eval(v)).max(0.0),
            Constraint::ExplicitSet { predicate } => {
                if predicate(v) {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn satisfied(&self, v: &[f64], tol: f64) -> bool {
        self.violation(v) <= tol
    }
}

/// Input to every solver entry point.
pub struct ProblemSpec {
    pub mu: Belief,
    pub vfuncs: Vec<ValueFunction>,
    pub objective: Box<dyn Objective>,
    pub constraint: Constraint,
    /// Caller-asserted curvature flags used by the dual path.
    pub f_quasiconcave: bool,
    pub g_quasiconcave: bool,
}

impl ProblemSpec {
    pub fn new(mu: Belief, vfuncs: Vec<ValueFunction>, objective: Box<dyn Objective>) -> Result<Self> {
        if vfuncs.is_empty() {
            return Err(Error::InvalidSpec("need at least one value function".into()));
        }
        for v in &vfuncs {
            v.validate(mu.dim())?;
        }
        validate_gradient(objective.as_ref(), vfuncs.len())?;
        Ok(ProblemSpec {
            mu,
            vfuncs,
            objective,
            constraint: Constraint::None,
            f_quasiconcave: false,
            g_quasiconcave: false,
        })
    }

    pub fn with_constraint(mut self, c: Constraint) -> Self {
        self.constraint = c;
        self
    }

    pub fn n(&self) -> usize {
        self.vfuncs.len()
    }
}

/// Lagrange data attached to a solution. `lambda` lives on the unit sphere;
/// paths without a sublevel constraint report `gamma = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Multipliers {
    pub lambda: Vec<f64>,
    pub eta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub stationarity_gap: f64,
    pub feasibility_residual: f64,
    pub sandwich_gap: f64,
    /// True when a dual path gave up and the generic solver produced the
    /// answer instead.
    pub fallback: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    pub value: f64,
    pub v_star: Vec<f64>,
    pub structure: SignalStructure,
    pub multipliers: Option<Multipliers>,
    pub diagnostics: Diagnostics,
}

fn check_solution(sol: &Solution, spec: &ProblemSpec, mu: &Belief) {
    debug_assert!(sol.structure.support_size() <= (spec.n() + 1) * mu.dim());
    debug_assert!(sol.structure.barycenter().sup_dist(mu) < 1e-9);
}

// ---------------------------------------------------------------------------
// generic dense search
// ---------------------------------------------------------------------------

/// Maximizes f over (inner polytope) ∩ D by dense evaluation on a grid of the
/// polytope's affine hull plus a Nelder-Mead polish, then implements the
/// argmax as a signal structure.
pub fn solve_generic(spec: &ProblemSpec, directions: usize, d: u32) -> Result<Solution> {
    solve_generic_at(spec, &spec.mu, directions, d)
}

fn solve_generic_at(
    spec: &ProblemSpec,
    mu: &Belief,
    directions: usize,
    d: u32,
) -> Result<Solution> {
    let n = spec.n();
    let count = directions.max(default_directions(n)).max(n + 1);
    let approx = approximate_set(mu, &spec.vfuncs, count, d)?;

    let candidates = hull_candidates(&approx);
    let f = spec.objective.as_ref();
    let scored: Vec<(f64, &Vec<f64>)> = candidates
        .par_iter()
        .filter(|v| spec.constraint.satisfied(v, FEAS_TOL))
        .map(|v| (f.eval(v), v))
        .collect();
    let best = scored
        .iter()
        .cloned()
        .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .ok_or_else(|| {
            Error::InfeasibleProblem(
                "no achievable expectation vector satisfies the constraint".into(),
            )
        })?;

    // polish inside the affine hull with the feasibility LP as a barrier
    let (origin, basis) = affine_basis(&approx.inner_vertices, 1e-7);
    let mut v_final = best.1.clone();
    let mut f_final = best.0;
    if !basis.is_empty() {
        let t0 = to_hull_coords(&v_final, &origin, &basis);
        let penalized = |t: &[f64]| -> f64 {
            let v = from_hull_coords(t, &origin, &basis);
            let res = approx.inner_residual(&v).map(|(_, r)| r).unwrap_or(f64::INFINITY);
            if res > 1e-6 {
                return f64::NEG_INFINITY;
            }
            let viol = spec.constraint.violation(&v);
            if viol > FEAS_TOL {
                return f64::NEG_INFINITY;
            }
            f.eval(&v)
        };
        let span = hull_extent(&approx.inner_vertices, &origin, &basis);
        let t_opt = nelder_mead(&penalized, &t0, span / 50.0, 150 * basis.len());
        let v_opt = from_hull_coords(&t_opt, &origin, &basis);
        let f_opt = penalized(&t_opt);
        if f_opt > f_final {
            v_final = v_opt;
            f_final = f_opt;
        }
    }

    // prefer the uninformative structure whenever it ties the optimum: it
    // implements its point exactly
    let v0 = approx.no_info_point();
    if spec.constraint.satisfied(&v0, FEAS_TOL) && f.eval(&v0) >= f_final - 1e-12 {
        let structure = SignalStructure::degenerate(mu.clone());
        let sol = Solution {
            value: f.eval(&v0),
            v_star: v0,
            structure,
            multipliers: None,
            diagnostics: Diagnostics {
                iterations: candidates.len(),
                feasibility_residual: 0.0,
                sandwich_gap: approx.sandwich_gap(64)?,
                ..Default::default()
            },
        };
        check_solution(&sol, spec, mu);
        return Ok(sol);
    }

    // The polish tolerates a hair of infeasibility, so snap the argmax onto
    // the inner polytope before implementing it as a structure.
    if let Ok((alpha, residual)) = approx.inner_residual(&v_final) {
        if residual > 0.0 && residual <= 1e-5 {
            let mut snapped = vec![0.0; v_final.len()];
            for (a, vertex) in alpha.iter().zip(&approx.inner_vertices) {
                for (s, x) in snapped.iter_mut().zip(vertex) {
                    *s += a * x;
                }
            }
            v_final = snapped;
        }
    }
    let structure = approx.implement_point(&v_final)?;
    let v_star = expected_values(&structure, &spec.vfuncs);
    let sol = Solution {
        value: f.eval(&v_star),
        v_star: v_star.clone(),
        structure,
        multipliers: None,
        diagnostics: Diagnostics {
            iterations: candidates.len(),
            feasibility_residual: spec.constraint.violation(&v_star),
            sandwich_gap: approx.sandwich_gap(64)?,
            ..Default::default()
        },
    };
    check_solution(&sol, spec, mu);
    Ok(sol)
}

/// Dense candidate points: inner vertices, the no-information point, and a
/// regular grid over the affine hull filtered to the inner polytope.
fn hull_candidates(approx: &SetApprox) -> Vec<Vec<f64>> {
    let mut out = approx.inner_vertices.clone();
    out.push(approx.no_info_point());
    let (origin, basis) = affine_basis(&approx.inner_vertices, 1e-7);
    let r = basis.len();
    if r == 0 {
        return out;
    }
    // per-axis resolution keeps the total candidate count tractable
    let steps = match r {
        1 | 2 => 50usize,
        3 => 20,
        _ => 10,
    };
    let coords: Vec<Vec<f64>> = approx
        .inner_vertices
        .iter()
        .map(|v| to_hull_coords(v, &origin, &basis))
        .collect();
    let lo: Vec<f64> = (0..r)
        .map(|k| coords.iter().map(|t| t[k]).fold(f64::INFINITY, f64::min))
        .collect();
    let hi: Vec<f64> = (0..r)
        .map(|k| coords.iter().map(|t| t[k]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut idx = vec![0usize; r];
    let mut grid_pts = Vec::new();
    loop {
        let t: Vec<f64> = (0..r)
            .map(|k| lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / steps as f64)
            .collect();
        grid_pts.push(from_hull_coords(&t, &origin, &basis));
        // odometer increment
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] <= steps {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == r {
                break;
            }
        }
        if k == r {
            break;
        }
    }
    let inside: Vec<Vec<f64>> = grid_pts
        .into_par_iter()
        .filter(|v| approx.inner_residual(v).map(|(_, res)| res <= 1e-7).unwrap_or(false))
        .collect();
    out.extend(inside);
    out
}

fn to_hull_coords(v: &[f64], origin: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let diff: Vec<f64> = v.iter().zip(origin).map(|(a, b)| a - b).collect();
    basis.iter().map(|e| dot(&diff, e)).collect()
}

fn from_hull_coords(t: &[f64], origin: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut v = origin.to_vec();
    for (tk, e) in t.iter().zip(basis) {
        for (vi, ei) in v.iter_mut().zip(e) {
            *vi += tk * ei;
        }
    }
    v
}

fn hull_extent(verts: &[Vec<f64>], origin: &[f64], basis: &[Vec<f64>]) -> f64 {
    verts
        .iter()
        .map(|v| norm(&to_hull_coords(v, origin, basis)))
        .fold(0.0, f64::max)
        .max(1e-6)
}

/// Derivative-free downhill-simplex maximization; deterministic.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], scale: f64, max_iters: usize) -> Vec<f64> {
    let r = x0.len();
    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(r + 1);
    simplex.push((f(x0), x0.to_vec()));
    for k in 0..r {
        let mut x = x0.to_vec();
        x[k] += scale;
        simplex.push((f(&x), x));
    }
    for _ in 0..max_iters {
        // sort descending: best first (maximization)
        simplex.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].0;
        let worst = simplex[r].0;
        if best.is_finite() && worst.is_finite() && (best - worst).abs() < 1e-12 {
            break;
        }
        let centroid: Vec<f64> = (0..r)
            .map(|k| simplex[..r].iter().map(|(_, x)| x[k]).sum::<f64>() / r as f64)
            .collect();
        let reflect: Vec<f64> = (0..r)
            .map(|k| centroid[k] + (centroid[k] - simplex[r].1[k]))
            .collect();
        let fr = f(&reflect);
        if fr > simplex[0].0 {
            let expand: Vec<f64> = (0..r)
                .map(|k| centroid[k] + 2.0 * (centroid[k] - simplex[r].1[k]))
                .collect();
            let fe = f(&expand);
            simplex[r] = if fe > fr { (fe, expand) } else { (fr, reflect) };
        } else if fr > simplex[r - 1].0 {
            simplex[r] = (fr, reflect);
        } else {
            let contract: Vec<f64> = (0..r)
                .map(|k| centroid[k] + 0.5 * (simplex[r].1[k] - centroid[k]))
                .collect();
            let fc = f(&contract);
            if fc > simplex[r].0 {
                simplex[r] = (fc, contract);
            } else {
                // shrink toward the best vertex
                let anchor = simplex[0].1.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = entry
                        .1
                        .iter()
                        .zip(&anchor)
                        .map(|(xi, ai)| ai + 0.5 * (xi - ai))
                        .collect();
                    *entry = (f(&x), x);
                }
            }
        }
    }
    simplex
        .into_iter()
        .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap()
        .1
}

// ---------------------------------------------------------------------------
// conditional gradient
// ---------------------------------------------------------------------------

struct FwRun {
    v: Vec<f64>,
    gap: f64,
    iters: usize,
    converged: bool,
    /// (weight, point, witness) of the active vertices.
    atoms: Vec<(f64, Vec<f64>, SignalStructure)>,
}

/// Conditional-gradient maximization of a smooth concave objective over the
/// possibility set, with a fully corrective reweighting of the collected
/// support points after each oracle call. The correction step is what lets
/// the duality gap actually reach `tol` instead of decaying like 1/k.
fn frank_wolfe(
    eval: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    mu: &Belief,
    vfuncs: &[ValueFunction],
    grid: &SimplexGrid,
    max_iters: usize,
    tol: f64,
) -> Result<FwRun> {
    let v0: Vec<f64> = vfuncs.iter().map(|f| f.eval(mu)).collect();
    let delta = SignalStructure::degenerate(mu.clone());
    let mut points: Vec<Vec<f64>> = vec![v0.clone()];
    let mut witnesses: Vec<SignalStructure> = vec![delta];
    let mut weights: Vec<f64> = vec![1.0];
    let mut v = v0;
    let mut gap = f64::INFINITY;
    let mut stalls = 0usize;
    let mut iters = 0usize;

    for k in 0..max_iters {
        iters = k + 1;
        let g = grad(&v);
        if norm(&g) < 1e-13 {
            gap = 0.0;
            break;
        }
        let (_, s, wit) = support_point(&g, mu, vfuncs, grid)?;
        gap = dot(&g, &s) - dot(&g, &v);
        if gap <= tol {
            break;
        }
        let dup = points
            .iter()
            .any(|p| p.iter().zip(&s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < 1e-9);
        if dup {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
            points.push(s);
            witnesses.push(wit);
            weights.push(0.0);
        }
        correct_weights(eval, grad, &points, &mut weights, 500);
        // Drop inactive vertices so the correction subproblem stays small and
        // well conditioned; the oracle re-adds any vertex that matters.
        if weights.iter().any(|&w| w <= 1e-12) && points.len() > 1 {
            let mut kept_points = Vec::with_capacity(points.len());
            let mut kept_wits = Vec::with_capacity(points.len());
            let mut kept_weights = Vec::with_capacity(points.len());
            for ((p, wit), &w) in points.drain(..).zip(witnesses.drain(..)).zip(&weights) {
                if w > 1e-12 {
                    kept_points.push(p);
                    kept_wits.push(wit);
                    kept_weights.push(w);
                }
            }
            let total: f64 = kept_weights.iter().sum();
            for w in &mut kept_weights {
                *w /= total;
            }
            points = kept_points;
            witnesses = kept_wits;
            weights = kept_weights;
        }
        v = combine(&points, &weights);
    }

    let atoms = points
        .into_iter()
        .zip(witnesses)
        .zip(&weights)
        .map(|((p, w), &a)| (a, p, w))
        .collect();
    Ok(FwRun { v, gap, iters, converged: gap <= tol, atoms })
}

fn combine(points: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let n = points[0].len();
    let mut v = vec![0.0; n];
    for (p, &w) in points.iter().zip(weights) {
        for i in 0..n {
            v[i] += w * p[i];
        }
    }
    v
}

/// Maximizes the objective over convex weights on the active vertices by
/// repeatedly shifting mass from the worst active vertex to the best one,
/// with an exact (golden-section) line search along each shift. The pairwise
/// direction avoids the zig-zagging that plain projected gradient suffers on
/// ill-conditioned curvature, so the hull optimum is reached to near machine
/// precision even when only a handful of vertices are active.
fn correct_weights(
    eval: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    points: &[Vec<f64>],
    weights: &mut Vec<f64>,
    max_steps: usize,
) {
    if points.len() < 2 {
        return;
    }
    for _ in 0..max_steps {
        let v = combine(points, weights);
        let g = grad(&v);
        let gw: Vec<f64> = points.iter().map(|p| dot(&g, p)).collect();
        let best = gw
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let worst = gw
            .iter()
            .enumerate()
            .filter(|&(i, _)| weights[i] > 0.0)
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if best == worst || gw[best] - gw[worst] <= 1e-14 {
            break;
        }
        let t_max = weights[worst];
        let shifted = |t: f64| {
            let mut w = weights.clone();
            w[worst] -= t;
            w[best] += t;
            w
        };
        let t = golden_max(&|t| eval(&combine(points, &shifted(t))), 0.0, t_max);
        if t <= 0.0 {
            break;
        }
        let f0 = eval(&v);
        let w_new = shifted(t);
        if eval(&combine(points, &w_new)) <= f0 {
            break;
        }
        *weights = w_new;
    }
}

/// Golden-section search for the maximizer of a unimodal function on [lo, hi].
fn golden_max(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..90 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (a + b);
    // The boundary may beat the interior when the maximizer sits on an edge.
    let candidates = [lo, mid, hi];
    candidates
        .into_iter()
        .max_by(|&s, &t| f(s).partial_cmp(&f(t)).unwrap())
        .unwrap()
}

fn structure_from_atoms(
    atoms: &[(f64, Vec<f64>, SignalStructure)],
    target: &[f64],
) -> Result<SignalStructure> {
    let live: Vec<(f64, Vec<f64>)> = atoms
        .iter()
        .filter(|(w, _, _)| *w > 1e-12)
        .map(|(w, p, _)| (*w, p.clone()))
        .collect();
    let witnesses: Vec<(&Vec<f64>, &SignalStructure)> =
        atoms.iter().map(|(_, p, s)| (p, s)).collect();
    caratheodory_structure(&live, target, &witnesses)
}

/// Conditional-gradient solve for differentiable objectives without
/// constraints; the terminal duality gap certifies stationarity.
pub fn solve_smooth(spec: &ProblemSpec, max_iters: usize, d: u32) -> Result<Solution> {
    if !matches!(spec.constraint, Constraint::None) {
        return Err(Error::InvalidSpec(
            "the conditional-gradient path handles unconstrained problems only".into(),
        ));
    }
    let grid = SimplexGrid::new(spec.mu.dim(), d)?;
    let f = spec.objective.as_ref();
    let run = frank_wolfe(
        &|v| f.eval(v),
        &|v| f.grad(v),
        &spec.mu,
        &spec.vfuncs,
        &grid,
        max_iters,
        FW_GAP_TOL,
    )?;
    if !run.converged {
        return Err(Error::MaxIterations { max_iters, residual: run.gap });
    }
    let structure = structure_from_atoms(&run.atoms, &run.v)?;
    let v_star = expected_values(&structure, &spec.vfuncs);
    let sol = Solution {
        value: f.eval(&v_star),
        v_star,
        structure,
        multipliers: None,
        diagnostics: Diagnostics {
            iterations: run.iters,
            stationarity_gap: run.gap,
            ..Default::default()
        },
    };
    check_solution(&sol, spec, &spec.mu);
    Ok(sol)
}

// ---------------------------------------------------------------------------
// slack constraints via multiplier directions
// ---------------------------------------------------------------------------

/// Optimizes an objective that ignores the last `m` coordinates subject to
/// those coordinates being nonnegative, by searching multiplier directions on
/// the unit sphere: each direction yields one support point, and feasible
/// ones compete on objective value. Complementary slackness is enforced as a
/// refinement: multiplier components on strictly slack constraints are zeroed
/// when doing so costs nothing.
pub fn solve_with_slack(spec: &ProblemSpec, directions: usize, d: u32) -> Result<Solution> {
    let m = match spec.constraint {
        Constraint::NonnegTail { m } => m,
        _ => {
            return Err(Error::InvalidSpec(
                "slack path requires a nonnegative-tail constraint".into(),
            ))
        }
    };
    let nt = spec.n();
    if m >= nt {
        return Err(Error::InvalidSpec("more slack coordinates than value functions".into()));
    }
    let f = spec.objective.as_ref();

    // the objective must genuinely ignore the slack coordinates
    let probe = vec![0.3; nt];
    for i in nt - m..nt {
        let mut p = probe.clone();
        p[i] += 0.37;
        if (f.eval(&p) - f.eval(&probe)).abs() > 1e-12 {
            return Err(Error::InvalidSpec(format!(
                "objective varies in slack coordinate v{}",
                i + 1
            )));
        }
    }

    let count = directions.max(default_directions(nt));
    let grid = SimplexGrid::new(spec.mu.dim(), d)?;
    let dirs = crate::posset::sample_directions(nt, count);
    let evaluated: Vec<(Vec<f64>, Vec<f64>, SignalStructure)> = dirs
        .par_iter()
        .map(|lam| {
            support_point(lam, &spec.mu, &spec.vfuncs, &grid)
                .map(|(_, v, w)| (lam.clone(), v, w))
        })
        .collect::<Result<Vec<_>>>()?;
    let tail_ok = |v: &[f64]| v[nt - m..].iter().all(|&x| x >= -FEAS_TOL);
    let close =
        |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) < 1e-10;

    // every evaluated support point is a vertex of the possibility set; keep
    // them all, feasible or not, to mix over the optimal face later
    let mut pool: Vec<(Vec<f64>, SignalStructure)> = Vec::new();
    for (_, v, w) in &evaluated {
        if !pool.iter().any(|(q, _)| close(q, v)) {
            pool.push((v.clone(), w.clone()));
        }
    }
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, SignalStructure)> = None;
    for (lam, v, w) in evaluated {
        if !tail_ok(&v) {
            continue;
        }
        let fv = f.eval(&v);
        if best.as_ref().map(|b| fv > b.0 + 1e-12).unwrap_or(true) {
            best = Some((fv, lam, v, w));
        }
    }
    let (mut f_best, mut lam_best, mut v_best, mut w_best) = best.ok_or_else(|| {
        Error::InfeasibleProblem("no sampled support point satisfies the slack constraints".into())
    })?;

    // coordinate-descent refinement of the direction, shrinking step sizes
    let mut step = 0.25;
    let mut iters = 0usize;
    while step >= 1e-4 {
        let mut improved = false;
        for i in 0..nt {
            for sign in [1.0, -1.0] {
                let mut lam = lam_best.clone();
                lam[i] += sign * step;
                if norm(&lam) < 1e-9 {
                    continue;
                }
                iters += 1;
                let (_, v, w) = support_point(&lam, &spec.mu, &spec.vfuncs, &grid)?;
                if !pool.iter().any(|(q, _)| close(q, &v)) {
                    pool.push((v.clone(), w.clone()));
                }
                if tail_ok(&v) {
                    let fv = f.eval(&v);
                    if fv > f_best + 1e-12 {
                        f_best = fv;
                        lam_best = lam;
                        v_best = v;
                        w_best = w;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    // complementary slackness: zero the multiplier on strictly slack
    // constraints when that loses nothing
    let mut lam_cs = lam_best.clone();
    let mut changed = false;
    for i in nt - m..nt {
        if v_best[i] > 1e-4 && lam_cs[i].abs() > 0.0 {
            lam_cs[i] = 0.0;
            changed = true;
        }
    }
    if changed && norm(&lam_cs) > 1e-9 {
        let (_, v, w) = support_point(&lam_cs, &spec.mu, &spec.vfuncs, &grid)?;
        if tail_ok(&v) && f.eval(&v) >= f_best - 1e-9 {
            lam_best = lam_cs;
            f_best = f.eval(&v);
            v_best = v;
            w_best = w;
        }
    }

    // the optimum may sit strictly inside the optimal face (tail constraint
    // binding between vertices): reweight the pooled vertices to maximize f
    // with an escalating penalty on negative slack coordinates
    let points: Vec<Vec<f64>> = pool.iter().map(|(p, _)| p.clone()).collect();
    let mut weights = vec![0.0; points.len()];
    let j_best = points
        .iter()
        .position(|q| close(q, &v_best))
        .expect("best vertex is pooled");
    weights[j_best] = 1.0;
    for rho in [1e2, 1e4, 1e6] {
        let pen_eval = |v: &[f64]| {
            f.eval(v) - rho * v[nt - m..].iter().map(|&x| x.min(0.0).powi(2)).sum::<f64>()
        };
        let pen_grad = |v: &[f64]| {
            let mut g = f.grad(v);
            for i in nt - m..nt {
                if v[i] < 0.0 {
                    g[i] -= 2.0 * rho * v[i];
                }
            }
            g
        };
        correct_weights(&pen_eval, &pen_grad, &points, &mut weights, 400);
    }
    let v_mix = combine(&points, &weights);
    let structure = if tail_ok(&v_mix) && f.eval(&v_mix) > f_best {
        let live: Vec<(f64, Vec<f64>)> = points
            .iter()
            .zip(&weights)
            .filter(|(_, &w)| w > 1e-12)
            .map(|(p, &w)| (w, p.clone()))
            .collect();
        let wits: Vec<(&Vec<f64>, &SignalStructure)> = pool.iter().map(|(p, s)| (p, s)).collect();
        caratheodory_structure(&live, &v_mix, &wits)?
    } else {
        w_best
    };

    let nl = norm(&lam_best);
    let lambda: Vec<f64> = lam_best.iter().map(|x| x / nl).collect();
    let v_star = expected_values(&structure, &spec.vfuncs);
    let sol = Solution {
        value: f.eval(&v_star),
        v_star: v_star.clone(),
        structure,
        multipliers: Some(Multipliers { lambda, eta: 1.0, gamma: 0.0 }),
        diagnostics: Diagnostics {
            iterations: iters,
            feasibility_residual: spec.constraint.violation(&v_star),
            ..Default::default()
        },
    };
    check_solution(&sol, spec, &spec.mu);
    Ok(sol)
}

// ---------------------------------------------------------------------------
// quasiconcave sublevel constraints via dual bisection
// ---------------------------------------------------------------------------

/// Maximizes quasiconcave f subject to g(v) >= 0 by bisecting the penalty
/// multiplier gamma: each trial maximizes f + gamma*g with the conditional
/// gradient, and gamma moves until the constraint binds or goes slack. Falls
/// back to the generic solver when the bracket or inner solves fail.
pub fn solve_convex_constrained(spec: &ProblemSpec, d: u32) -> Result<Solution> {
    let g = match &spec.constraint {
        Constraint::Sublevel { g } => g.as_ref(),
        _ => {
            return Err(Error::InvalidSpec(
                "dual path requires a sublevel constraint g(v) >= 0".into(),
            ))
        }
    };
    let f = spec.objective.as_ref();
    match convex_dual_inner(spec, f, g, d) {
        Ok(sol) => Ok(sol),
        Err(Error::NonConvergence(_)) | Err(Error::MaxIterations { .. }) => {
            let mut sol = solve_generic(spec, default_directions(spec.n()) * 2, d)?;
            sol.diagnostics.fallback = true;
            Ok(sol)
        }
        Err(e) => Err(e),
    }
}

fn convex_dual_inner(
    spec: &ProblemSpec,
    f: &dyn Objective,
    g: &dyn Objective,
    d: u32,
) -> Result<Solution> {
    let grid = SimplexGrid::new(spec.mu.dim(), d)?;
    let mu = &spec.mu;
    let vfuncs = &spec.vfuncs;
    let run_at = |gamma: f64| -> Result<FwRun> {
        frank_wolfe(
            &|v| f.eval(v) + gamma * g.eval(v),
            &|v| {
                let mut gr = f.grad(v);
                for (a, b) in gr.iter_mut().zip(g.grad(v)) {
                    *a += gamma * b;
                }
                gr
            },
            mu,
            vfuncs,
            &grid,
            400,
            1e-8,
        )
    };

    // is the constraint achievable at all?
    let gmax_run = frank_wolfe(
        &|v| g.eval(v),
        &|v| g.grad(v),
        mu,
        vfuncs,
        &grid,
        400,
        1e-8,
    )?;
    if g.eval(&gmax_run.v) < -FEAS_TOL {
        return Err(Error::InfeasibleProblem(format!(
            "max g over the possibility set is {:.3e} < 0",
            g.eval(&gmax_run.v)
        )));
    }

    let mut pool: Vec<(Vec<f64>, SignalStructure)> = Vec::new();
    let absorb = |run: &FwRun, pool: &mut Vec<(Vec<f64>, SignalStructure)>| {
        for (_, p, w) in &run.atoms {
            let dup = pool.iter().any(|(q, _)| {
                q.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < 1e-10
            });
            if !dup {
                pool.push((p.clone(), w.clone()));
            }
        }
    };

    let run0 = run_at(0.0)?;
    if !run0.converged {
        return Err(Error::NonConvergence("penalty-free inner solve stalled".into()));
    }
    absorb(&run0, &mut pool);
    let mut iters = run0.iters;
    let mut gamma = 0.0;
    let mut best_run = run0;

    if g.eval(&best_run.v) < -1e-7 {
        // bracket a gamma whose penalized optimum is feasible
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        let mut hi_run = None;
        for _ in 0..40 {
            let run = run_at(hi)?;
            iters += run.iters;
            if !run.converged {
                return Err(Error::NonConvergence("penalized inner solve stalled".into()));
            }
            absorb(&run, &mut pool);
            if g.eval(&run.v) >= -1e-7 {
                hi_run = Some(run);
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        let mut hi_run = hi_run
            .ok_or_else(|| Error::NonConvergence("no finite multiplier enforces the constraint".into()))?;
        for _ in 0..60 {
            if hi - lo <= 1e-12 * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let run = run_at(mid)?;
            iters += run.iters;
            absorb(&run, &mut pool);
            let gv = g.eval(&run.v);
            if gv >= -1e-7 {
                hi = mid;
                hi_run = run;
                if gv.abs() <= 1e-9 {
                    break;
                }
            } else {
                lo = mid;
            }
        }
        gamma = hi;
        best_run = hi_run;
    }

    // polish: reweight the pooled vertices to maximize f directly, keeping g
    // feasible via an escalating penalty — recovers optima interior to the
    // optimal face when f + gamma*g has a flat maximum set
    let points: Vec<Vec<f64>> = pool.iter().map(|(p, _)| p.clone()).collect();
    let mut weights = vec![0.0; points.len()];
    for (w, p, _) in &best_run.atoms {
        if let Some(j) = points.iter().position(|q| {
            q.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < 1e-10
        }) {
            weights[j] += *w;
        }
    }
    let mut v_final = best_run.v.clone();
    let f_final = f.eval(&v_final);
    for rho in [1e2, 1e4, 1e6] {
        let pen_eval = |v: &[f64]| f.eval(v) - rho * g.eval(v).min(0.0).powi(2);
        let pen_grad = |v: &[f64]| {
            let mut gr = f.grad(v);
            let gv = g.eval(v);
            if gv < 0.0 {
                for (a, b) in gr.iter_mut().zip(g.grad(v)) {
                    *a -= 2.0 * rho * gv * b;
                }
            }
            gr
        };
        correct_weights(&pen_eval, &pen_grad, &points, &mut weights, 400);
    }
    let v_try = combine(&points, &weights);
    if g.eval(&v_try) >= -FEAS_TOL && f.eval(&v_try) > f_final {
        v_final = v_try;
    } else {
        // restore the bisection weights for structure building
        weights = vec![0.0; points.len()];
        for (w, p, _) in &best_run.atoms {
            if let Some(j) = points.iter().position(|q| {
                q.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < 1e-10
            }) {
                weights[j] += *w;
            }
        }
    }

    // multipliers: lambda is the normalized gradient of the penalized
    // objective at the optimum, so the stationarity identity holds exactly
    let mut lam_raw = f.grad(&v_final);
    for (a, b) in lam_raw.iter_mut().zip(g.grad(&v_final)) {
        *a += gamma * b;
    }
    let s = norm(&lam_raw);
    let (lambda, eta, gamma_out) = if s > 1e-12 {
        (lam_raw.iter().map(|x| x / s).collect(), 1.0 / s, gamma / s)
    } else {
        (vec![0.0; spec.n()], 1.0, gamma)
    };

    let atoms: Vec<(f64, Vec<f64>, SignalStructure)> = points
        .iter()
        .zip(&weights)
        .map(|(p, &w)| {
            let wit = pool
                .iter()
                .find(|(q, _)| {
                    q.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < 1e-10
                })
                .unwrap()
                .1
                .clone();
            (w, p.clone(), wit)
        })
        .collect();
    let structure = structure_from_atoms(&atoms, &v_final)?;
    let v_star = expected_values(&structure, &spec.vfuncs);
    let sol = Solution {
        value: f.eval(&v_star),
        v_star: v_star.clone(),
        structure,
        multipliers: Some(Multipliers { lambda, eta, gamma: gamma_out }),
        diagnostics: Diagnostics {
            iterations: iters,
            stationarity_gap: best_run.gap,
            feasibility_residual: (-g.eval(&v_star)).max(0.0),
            ..Default::default()
        },
    };
    check_solution(&sol, spec, &spec.mu);
    Ok(sol)
}

// ---------------------------------------------------------------------------
// value profiles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub mu: Belief,
    pub value: Option<f64>,
    pub error: Option<String>,
}

/// Runs the generic solver at each prior; per-prior failures are recorded,
/// not fatal. Feeds continuity measurements of the optimal value.
pub fn value_profile(
    spec: &ProblemSpec,
    priors: &[Belief],
    directions: usize,
    d: u32,
) -> Vec<ProfilePoint> {
    priors
        .iter()
        .map(|mu| match solve_generic_at(spec, mu, directions, d) {
            Ok(sol) => ProfilePoint { mu: mu.clone(), value: Some(sol.value), error: None },
            Err(e) => ProfilePoint { mu: mu.clone(), value: None, error: Some(e.to_string()) },
        })
        .collect()
}
