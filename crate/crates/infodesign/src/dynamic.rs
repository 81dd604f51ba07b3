//! Dynamic information acquisition: a Bellman operator over tabulated value
//! functions, synchronous value iteration to its unique fixed point, and the
//! scalar fixed point of the rational-inattention problem with nonlinear
//! information costs.

use crate::belief::{Belief, SignalStructure};
use crate::concavify::concavify_on;
use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::posset::{sample_directions, support_point};
use crate::value::{BeliefFn, ValueFunction};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Scalar information-cost function with derivative; all kinds map
/// nonnegative information to nonnegative cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostFn {
    Zero,
    Linear { slope: f64 },
    /// coef * x^2
    Quadratic { coef: f64 },
    /// coef * x^exponent with exponent >= 1 (keeps the cost convex)
    Power { coef: f64, exponent: f64 },
}

impl CostFn {
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        match self {
            CostFn::Zero => 0.0,
            CostFn::Linear { slope } => slope * x,
            CostFn::Quadratic { coef } => coef * x * x,
            CostFn::Power { coef, exponent } => coef * x.powf(*exponent),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        match self {
            CostFn::Zero => 0.0,
            CostFn::Linear { slope } => *slope,
            CostFn::Quadratic { coef } => 2.0 * coef * x,
            CostFn::Power { coef, exponent } => coef * exponent * x.powf(exponent - 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            CostFn::Zero => true,
            CostFn::Linear { slope } => *slope >= 0.0,
            CostFn::Quadratic { coef } => *coef >= 0.0,
            CostFn::Power { coef, exponent } => *coef >= 0.0 && *exponent >= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec("cost function must be nonnegative and convex".into()))
        }
    }
}

/// Dynamic acquisition problem: stop for `stopping`, or buy information about
/// the state at cost `cost` per unit of expected entropy reduction, capped by
/// `capacity` per period, discounting the continuation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicSpec {
    pub stopping: ValueFunction,
    /// Uncertainty measure whose expected reduction is the information
    /// bought; entropy unless overridden.
    #[serde(default = "ValueFunction::entropy")]
    pub entropy: ValueFunction,
    pub cost: CostFn,
    pub discount: f64,
    /// Per-period information cap; infinite when absent.
    #[serde(default = "default_capacity")]
    pub capacity: f64,
    pub grid_d: u32,
    pub dim: usize,
}

fn default_capacity() -> f64 {
    f64::INFINITY
}

impl DynamicSpec {
    pub fn new(
        stopping: ValueFunction,
        cost: CostFn,
        discount: f64,
        capacity: f64,
        dim: usize,
        grid_d: u32,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidSpec("discount must lie in (0, 1)".into()));
        }
        if capacity < 0.0 {
            return Err(Error::InvalidSpec("capacity must be nonnegative".into()));
        }
        stopping.validate(dim)?;
        cost.validate()?;
        Ok(DynamicSpec {
            stopping,
            entropy: ValueFunction::entropy(),
            cost,
            discount,
            capacity,
            grid_d,
            dim,
        })
    }

    pub fn grid(&self) -> Result<SimplexGrid> {
        SimplexGrid::new(self.dim, self.grid_d)
    }
}

/// A value function tabulated on a simplex grid with barycentric
/// interpolation between grid points.
#[derive(Debug, Clone)]
pub struct ValueTable {
    grid: Arc<SimplexGrid>,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn new(grid: Arc<SimplexGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidSpec(format!(
                "table has {} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        Ok(ValueTable { grid, values })
    }

    /// Tabulates an arbitrary belief function on the grid.
    pub fn tabulate(grid: Arc<SimplexGrid>, f: &dyn BeliefFn) -> Self {
        let values = grid.points().iter().map(|p| f.eval(p)).collect();
        ValueTable { grid, values }
    }

    pub fn grid(&self) -> &SimplexGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, mu: &Belief) -> Result<f64> {
        self.grid.interpolate(&self.values, mu)
    }

    pub fn sup_dist(&self, other: &ValueTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// True when F(g) <= value(g) <= cav F(g) + tol at every grid point: the
    /// invariant band that the Bellman operator preserves.
    pub fn in_band(&self, spec: &DynamicSpec, tol: f64) -> Result<bool> {
        for (p, &v) in self.grid.points().iter().zip(&self.values) {
            let lo = spec.stopping.eval(p);
            let hi = concavify_on(&self.grid, &spec.stopping, p)?.value;
            if v < lo - tol || v > hi + tol {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// CSV rows: grid point coordinates then the value.
    pub fn csv(&self) -> String {
        let dim = self.grid.dim();
        let mut out = String::new();
        for i in 0..dim {
            out.push_str(&format!("p{},", i + 1));
        }
        out.push_str("value\n");
        for (p, v) in self.grid.points().iter().zip(&self.values) {
            for x in p.probs() {
                out.push_str(&format!("{x:.12},"));
            }
            out.push_str(&format!("{v:.12}\n"));
        }
        out
    }
}

/// Directions used to trace the achievable (continuation, entropy) polygon
/// at each grid point.
const POLYGON_DIRECTIONS: usize = 32;
/// Interior samples per polygon edge when maximizing the continuation
/// objective along the boundary.
const EDGE_SAMPLES: usize = 24;

/// One application of the Bellman operator: per grid point, the better of
/// stopping now and the best admissible one-period experiment.
pub fn bellman_operator(v: &ValueTable, spec: &DynamicSpec) -> Result<ValueTable> {
    let grid = v.grid.clone();
    let vtab = ValueFunction::table(&grid, v.values.to_vec());
    let vfuncs = vec![vtab, spec.entropy.clone()];
    let dirs = sample_directions(2, POLYGON_DIRECTIONS);
    let values: Vec<f64> = grid
        .points()
        .par_iter()
        .map(|mu| point_update(mu, v, spec, &grid, &vfuncs, &dirs))
        .collect::<Result<Vec<f64>>>()?;
    ValueTable::new(grid, values)
}

fn point_update(
    mu: &Belief,
    v: &ValueTable,
    spec: &DynamicSpec,
    grid: &SimplexGrid,
    vfuncs: &[ValueFunction],
    dirs: &[Vec<f64>],
) -> Result<f64> {
    let f_here = spec.stopping.eval(mu);
    let h_here = spec.entropy.eval(mu);
    let objective = |v1: f64, v2: f64| -> f64 {
        // information bought is the expected entropy drop; clamp tiny
        // negative values from interpolation noise
        let info = (h_here - v2).max(0.0);
        spec.discount * v1 - spec.cost.eval(info)
    };

    if spec.capacity == 0.0 {
        // only the uninformative experiment is admissible
        let stay = objective(v.eval(mu)?, h_here);
        return Ok(f_here.max(stay));
    }

    // zero or linear cost: the whole inner sup is one exact linear program
    // over the grid atoms, which keeps the operator an exact contraction on
    // the tabulated values
    if let Some(slope) = match spec.cost {
        CostFn::Zero => Some(0.0),
        CostFn::Linear { slope } => Some(slope),
        _ => None,
    } {
        return Ok(f_here.max(linear_inner_sup(mu, v, spec, grid, h_here, slope)?));
    }

    // trace the achievable (E[V], E[H]) polygon at this prior; directions
    // come in angular order, so consecutive points bound the hull edges
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(dirs.len());
    for lam in dirs {
        let (_, p, _) = support_point(lam, mu, vfuncs, grid)?;
        pts.push((p[0], p[1]));
    }

    let cap_ok = |v2: f64| h_here - v2 <= spec.capacity + 1e-9;
    // the uninformative point is always admissible
    let mut best_pt = (v.eval(mu)?, h_here);
    let mut best = objective(best_pt.0, best_pt.1);
    let consider = |p: (f64, f64), best: &mut f64, best_pt: &mut (f64, f64)| {
        if cap_ok(p.1) {
            let val = objective(p.0, p.1);
            if val > *best {
                *best = val;
                *best_pt = p;
            }
        }
    };
    for k in 0..pts.len() {
        let (a1, a2) = pts[k];
        let (b1, b2) = pts[(k + 1) % pts.len()];
        consider((a1, a2), &mut best, &mut best_pt);
        for s in 1..EDGE_SAMPLES {
            let t = s as f64 / EDGE_SAMPLES as f64;
            consider((a1 + t * (b1 - a1), a2 + t * (b2 - a2)), &mut best, &mut best_pt);
        }
        // exact crossing of the capacity line, if the edge straddles it
        let ia = h_here - a2 - spec.capacity;
        let ib = h_here - b2 - spec.capacity;
        if ia * ib < 0.0 {
            let t = ia / (ia - ib);
            consider((a1 + t * (b1 - a1), a2 + t * (b2 - a2)), &mut best, &mut best_pt);
        }
    }

    // gradient-guided refinement: the fixed fan can miss the supporting
    // vertex of the objective's own slope, so follow that slope directly and
    // line-search the (concave) objective along the connecting segment
    for _ in 0..8 {
        let info = (h_here - best_pt.1).max(0.0);
        let lam = vec![spec.discount, spec.cost.deriv(info)];
        let (_, p, _) = support_point(&lam, mu, vfuncs, grid)?;
        let a = best_pt;
        let b = (p[0], p[1]);
        let dv2 = b.1 - a.1;
        let mut tmax = 1.0;
        if !cap_ok(b.1) {
            if dv2.abs() < 1e-15 {
                break;
            }
            tmax = ((h_here - a.1 - spec.capacity) / dv2).clamp(0.0, 1.0);
        }
        let phi = |t: f64| objective(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
        let (mut lo, mut hi) = (0.0f64, tmax);
        for _ in 0..60 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if phi(m1) < phi(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        let t = if phi(tmax) >= phi(0.5 * (lo + hi)) { tmax } else { 0.5 * (lo + hi) };
        let cand = (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
        let val = objective(cand.0, cand.1);
        if val <= best + 1e-13 {
            break;
        }
        best = val;
        best_pt = cand;
    }
    Ok(f_here.max(best))
}

/// Exact inner sup for costs linear in information: maximize
/// discount*E[V] + slope*E[H] over Bayes-plausible weights on the grid
/// atoms, with the capacity bound as one extra LP row.
fn linear_inner_sup(
    mu: &Belief,
    v: &ValueTable,
    spec: &DynamicSpec,
    grid: &SimplexGrid,
    h_here: f64,
    slope: f64,
) -> Result<f64> {
    let n = grid.len();
    let dim = mu.dim();
    let cap_row = spec.capacity.is_finite();
    let rows = dim + usize::from(cap_row);
    let cols = n + usize::from(cap_row);
    let mut a = vec![vec![0.0f64; cols]; rows];
    let mut b = vec![0.0f64; rows];
    let mut c = vec![0.0f64; cols];
    for (j, g) in grid.points().iter().enumerate() {
        for i in 0..dim {
            a[i][j] = g.get(i);
        }
        if cap_row {
            a[dim][j] = g.entropy();
        }
        c[j] = spec.discount * v.values[j] + slope * g.entropy();
    }
    for i in 0..dim {
        b[i] = mu.get(i);
    }
    if cap_row {
        // E[H(nu)] >= H(mu) - C
        a[dim][n] = -1.0;
        b[dim] = h_here - spec.capacity;
    }
    let sol = crate::lp::solve_standard(&a, &b, &c)?;
    match sol.status {
        crate::lp::LpStatus::Optimal => Ok(sol.objective - slope * h_here),
        other => Err(Error::NonConvergence(format!("inner LP ended as {other:?}"))),
    }
}

/// Output of value iteration: the fixed-point table plus per-sweep step
/// norms for convergence diagnostics.
pub struct IterationResult {
    pub table: ValueTable,
    pub iterations: usize,
    pub step_norms: Vec<f64>,
}

/// Iterates the Bellman operator from the stopping payoff until the sup-norm
/// step falls below `tol`.
pub fn value_iterate(spec: &DynamicSpec, tol: f64, max_iters: usize) -> Result<IterationResult> {
    let grid = Arc::new(spec.grid()?);
    let start = ValueTable::tabulate(grid, &spec.stopping);
    value_iterate_from(spec, start, tol, max_iters)
}

/// Value iteration from a caller-supplied start table (used to confirm the
/// fixed point does not depend on the initial guess).
pub fn value_iterate_from(
    spec: &DynamicSpec,
    start: ValueTable,
    tol: f64,
    max_iters: usize,
) -> Result<IterationResult> {
    if tol <= 0.0 {
        return Err(Error::InvalidSpec("tolerance must be positive".into()));
    }
    let mut current = start;
    let mut step_norms = Vec::new();
    for k in 0..max_iters {
        let next = bellman_operator(&current, spec)?;
        let step = next.sup_dist(&current);
        step_norms.push(step);
        current = next;
        if step <= tol {
            return Ok(IterationResult { table: current, iterations: k + 1, step_norms });
        }
    }
    Err(Error::MaxIterations {
        max_iters,
        residual: step_norms.last().copied().unwrap_or(f64::NAN),
    })
}

/// Rational-inattention solution: the optimal one-shot experiment under a
/// convex information cost, found as a scalar fixed point of the marginal
/// cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiSolution {
    /// E[F] - f(information)
    pub value: f64,
    /// realized expected entropy reduction
    pub info: f64,
    /// marginal-cost multiplier t with t = f'(info)
    pub multiplier: f64,
    pub structure: SignalStructure,
    /// true when the damped iteration stalled and bisection produced the
    /// answer instead
    pub used_bisection: bool,
}

/// Solves max_P E_P[F(nu)] - f(E_P[H(mu) - H(nu)]) by iterating on the
/// marginal cost t: each trial concavifies F - t*H, reads off the realized
/// information, and resets t to the marginal cost there. Damped averaging,
/// with a bisection fallback justified by the monotonicity of both f' and
/// the realized information in t.
pub fn ri_solve(
    stopping: &ValueFunction,
    cost: &CostFn,
    mu: &Belief,
    d: u32,
    max_iters: usize,
) -> Result<RiSolution> {
    cost.validate()?;
    stopping.validate(mu.dim())?;
    let grid = SimplexGrid::new(mu.dim(), d)?;
    let h = ValueFunction::entropy();
    let h_here = h.eval(mu);

    let trial = |t: f64| -> Result<(SignalStructure, f64)> {
        let w = |b: &Belief| stopping.eval(b) - t * b.entropy();
        let cav = concavify_on(&grid, &w, mu)?;
        let info = (h_here - cav.structure.expect(|b| b.entropy())).max(0.0);
        Ok((cav.structure, info))
    };

    let finish = |structure: SignalStructure, info: f64, t: f64, used_bisection: bool| {
        let value = structure.expect(|b| stopping.eval(b)) - cost.eval(info);
        debug_assert!(structure.support_size() <= 2 * mu.dim());
        RiSolution { value, info, multiplier: t, structure, used_bisection }
    };

    let mut t = cost.deriv(0.5 * h_here);
    for _ in 0..max_iters {
        let (structure, info) = trial(t)?;
        let target = cost.deriv(info);
        if (t - target).abs() <= 1e-6 {
            return Ok(finish(structure, info, t, false));
        }
        t = 0.5 * t + 0.5 * target;
    }

    // bisection on phi(t) = t - f'(info(t)), which is nondecreasing: info
    // shrinks as the marginal price rises and f' is nondecreasing
    let mut lo = cost.deriv(0.0);
    let mut hi = cost.deriv(h_here).max(lo + 1e-12);
    let mut best: Option<(f64, SignalStructure, f64, f64)> = None;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let (structure, info) = trial(mid)?;
        let phi = mid - cost.deriv(info);
        let gap = phi.abs();
        if best.as_ref().map(|b| gap < b.0).unwrap_or(true) {
            best = Some((gap, structure, info, mid));
        }
        if gap <= 1e-9 || hi - lo <= 1e-13 {
            break;
        }
        if phi < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, structure, info, t) = best.ok_or_else(|| {
        Error::NoRoot { lo, hi }
    })?;
    Ok(finish(structure, info, t, true))
}
