//! The information possibility set: all jointly achievable expectation
//! vectors (E_P[V^1], ..., E_P[V^n]) over Bayes-plausible structures,
//! approximated by a polytope sandwich built from support-function samples.

use crate::belief::{mix_many, Belief, SignalStructure};
use crate::concavify::{caratheodory_reduce, concavify_on};
use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::lp;
use crate::value::{expected_values, ValueFunction, WeightedSum};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Uniform boundary tolerance for membership and implementation queries.
pub const BOUNDARY_TOL: f64 = 1e-6;

/// Default direction count for a set in R^n.
pub fn default_directions(n: usize) -> usize {
    (2 * n + 2).max(16)
}

/// One sampled support direction with its certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetSample {
    pub direction: Vec<f64>,
    pub h: f64,
    pub point: Vec<f64>,
    pub witness: SignalStructure,
}

/// Inner-polytope vertices plus outer halfspaces sandwiching the set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetApprox {
    pub mu: Belief,
    pub vfuncs: Vec<ValueFunction>,
    pub samples: Vec<SetSample>,
    pub inner_vertices: Vec<Vec<f64>>,
    pub outer_halfspaces: Vec<(Vec<f64>, f64)>,
    pub grid_resolution: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Membership {
    Inside,
    Outside,
    Boundary(f64),
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn unit(a: &[f64]) -> Result<Vec<f64>> {
    let n = norm(a);
    if n <= 0.0 {
        return Err(Error::InvalidSpec("zero direction vector".into()));
    }
    Ok(a.iter().map(|x| x / n).collect())
}

/// Deterministic direction sampler on the unit sphere in R^n.
///
/// n=1 alternates +1/-1; n=2 walks equal angles; n>=3 draws a fixed
/// ChaCha-seeded gaussian sequence, so direction sets for growing counts are
/// nested prefixes of one another.
pub fn sample_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        0 => Vec::new(),
        1 => (0..count).map(|k| vec![if k % 2 == 0 { 1.0 } else { -1.0 }]).collect(),
        2 => (0..count)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                vec![theta.cos(), theta.sin()]
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(2024);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let v: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
                let nv = norm(&v);
                if nv > 1e-9 {
                    out.push(v.iter().map(|x| x / nv).collect());
                }
            }
            out
        }
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Support function sample of the possibility set in direction `lambda`:
/// one concavification of the scalarized payoff sum_i lambda_i V^i.
///
/// Returns (h, v, witness) with h = lambda . v and the witness achieving v
/// with at most |X| atoms.
pub fn support_point(
    lambda: &[f64],
    mu: &Belief,
    vfuncs: &[ValueFunction],
    grid: &SimplexGrid,
) -> Result<(f64, Vec<f64>, SignalStructure)> {
    if vfuncs.is_empty() {
        return Err(Error::InvalidSpec("need at least one value function".into()));
    }
    if lambda.len() != vfuncs.len() {
        return Err(Error::InvalidSpec("direction dimension mismatch".into()));
    }
    let lam = unit(lambda)?;
    let w = WeightedSum { weights: lam.clone(), vfuncs };
    let cav = concavify_on(grid, &w, mu)?;
    let v = expected_values(&cav.structure, vfuncs);
    Ok((cav.value, v, cav.structure))
}

/// Samples the set from `count` directions and assembles the sandwich.
pub fn approximate_set(
    mu: &Belief,
    vfuncs: &[ValueFunction],
    count: usize,
    d: u32,
) -> Result<SetApprox> {
    let n = vfuncs.len();
    if count < n + 1 {
        return Err(Error::InvalidSpec(format!(
            "need at least n+1 = {} directions, got {count}",
            n + 1
        )));
    }
    let grid = SimplexGrid::new(mu.dim(), d)?;
    let dirs = sample_directions(n, count);
    let samples: Vec<SetSample> = dirs
        .par_iter()
        .map(|lam| {
            support_point(lam, mu, vfuncs, &grid).map(|(h, point, witness)| SetSample {
                direction: lam.clone(),
                h,
                point,
                witness,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let inner_vertices = samples.iter().map(|s| s.point.clone()).collect();
    let outer_halfspaces = samples.iter().map(|s| (s.direction.clone(), s.h)).collect();
    Ok(SetApprox {
        mu: mu.clone(),
        vfuncs: vfuncs.to_vec(),
        samples,
        inner_vertices,
        outer_halfspaces,
        grid_resolution: d,
    })
}

impl SetApprox {
    pub fn n(&self) -> usize {
        self.vfuncs.len()
    }

    /// Expectation vector of the no-information structure at the prior.
    pub fn no_info_point(&self) -> Vec<f64> {
        self.vfuncs.iter().map(|v| v.eval(&self.mu)).collect()
    }

    /// Largest violation of the stored halfspaces at `v` (negative = slack).
    pub fn outer_violation(&self, v: &[f64]) -> f64 {
        self.outer_halfspaces
            .iter()
            .map(|(lam, h)| dot(lam, v) - h)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// L1 residual of expressing `v` as a convex combination of inner
    /// vertices, along with the basic weights found.
    pub fn inner_residual(&self, v: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = self.n();
        let k = self.inner_vertices.len();
        let mut a = vec![vec![0.0f64; k]; n + 1];
        for (j, vert) in self.inner_vertices.iter().enumerate() {
            for i in 0..n {
                a[i][j] = vert[i];
            }
            a[n][j] = 1.0;
        }
        let mut b = v.to_vec();
        b.push(1.0);
        lp::feasibility(&a, &b)
    }

    pub fn membership(&self, v: &[f64]) -> Result<Membership> {
        if self.outer_violation(v) > BOUNDARY_TOL {
            return Ok(Membership::Outside);
        }
        let (_, residual) = self.inner_residual(v)?;
        if residual <= BOUNDARY_TOL {
            return Ok(Membership::Inside);
        }
        // not expressible from inner vertices but respects every sampled
        // halfspace: either near the boundary or in the sandwich gap
        if self.outer_violation(v) > -BOUNDARY_TOL {
            return Ok(Membership::Boundary(BOUNDARY_TOL));
        }
        Err(Error::Indeterminate { gap: residual, tol: BOUNDARY_TOL })
    }

    /// Builds a structure implementing `v`: convex weights over at most n+1
    /// inner vertices (cross-checked by Caratheodory reduction), then the mix
    /// of their witnesses. Support is at most (n+1)|X|.
    pub fn implement_point(&self, v: &[f64]) -> Result<SignalStructure> {
        match self.membership(v)? {
            Membership::Outside => {
                return Err(Error::NotInSet(format!("outer violation {:.3e}", self.outer_violation(v))))
            }
            Membership::Inside | Membership::Boundary(_) => {}
        }
        let (alpha, residual) = self.inner_residual(v)?;
        if residual > BOUNDARY_TOL {
            return Err(Error::NotInSet(format!("inner residual {residual:.3e}")));
        }
        let atoms: Vec<(f64, Vec<f64>)> = alpha
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 1e-12)
            .map(|(j, &w)| (w, self.inner_vertices[j].clone()))
            .collect();
        let reduced = caratheodory_reduce(&atoms, v).unwrap_or(atoms);
        debug_assert!(reduced.len() <= self.n() + 1);
        let parts: Vec<(f64, &SignalStructure)> = reduced
            .iter()
            .map(|(w, point)| {
                // map the reduced vertex back to its witness
                let j = self
                    .inner_vertices
                    .iter()
                    .position(|iv| {
                        iv.iter().zip(point).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < 1e-9
                    })
                    .expect("reduced atom is an inner vertex");
                (*w, &self.samples[j].witness)
            })
            .collect();
        mix_many(&parts)
    }

    /// Support value of the inner polytope in direction `lam`.
    pub fn inner_support(&self, lam: &[f64]) -> f64 {
        self.inner_vertices
            .iter()
            .map(|v| dot(lam, v))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Support value of the outer polytope in direction `lam` (LP over the
    /// stored halfspaces); infinite when the sampled halfspaces do not bound
    /// that direction.
    pub fn outer_support(&self, lam: &[f64]) -> Result<f64> {
        let n = self.n();
        let m = self.outer_halfspaces.len();
        // free v split into v+ - v-, one slack per halfspace
        let cols = 2 * n + m;
        let mut a = vec![vec![0.0f64; cols]; m];
        let mut b = vec![0.0f64; m];
        for (i, (dir, h)) in self.outer_halfspaces.iter().enumerate() {
            for j in 0..n {
                a[i][j] = dir[j];
                a[i][n + j] = -dir[j];
            }
            a[i][2 * n + i] = 1.0;
            b[i] = *h;
        }
        let mut c = vec![0.0f64; cols];
        for j in 0..n {
            c[j] = lam[j];
            c[n + j] = -lam[j];
        }
        let sol = lp::solve_standard(&a, &b, &c)?;
        match sol.status {
            lp::LpStatus::Optimal => Ok(sol.objective),
            lp::LpStatus::Unbounded => Ok(f64::INFINITY),
            lp::LpStatus::Infeasible { residual } => Err(Error::InfeasibleProblem(format!(
                "outer polytope empty (residual {residual:.3e})"
            ))),
        }
    }

    /// Worst-case gap between outer and inner support values over a fixed
    /// probe set: the honest error metric of the sandwich.
    pub fn sandwich_gap(&self, probe_count: usize) -> Result<f64> {
        let probes = sample_directions(self.n(), probe_count);
        let mut gap: f64 = 0.0;
        for lam in &probes {
            let hi = self.outer_support(lam)?;
            let lo = self.inner_support(lam);
            gap = gap.max(hi - lo);
        }
        Ok(gap)
    }

    /// CSV rows for plotting: direction components, h, support point.
    pub fn csv(&self) -> String {
        let n = self.n();
        let mut out = String::new();
        for i in 0..n {
            out.push_str(&format!("lambda{},", i + 1));
        }
        out.push_str("h,");
        out.push_str(
            &(0..n).map(|i| format!("v{}", i + 1)).collect::<Vec<_>>().join(","),
        );
        out.push('\n');
        for s in &self.samples {
            for x in &s.direction {
                out.push_str(&format!("{x:.12},"));
            }
            out.push_str(&format!("{:.12},", s.h));
            out.push_str(
                &s.point.iter().map(|x| format!("{x:.12}")).collect::<Vec<_>>().join(","),
            );
            out.push('\n');
        }
        out
    }
}

/// Reduces weighted points hitting `target` to an affinely independent
/// subset, then mixes the witnesses matched (by point) to the survivors.
/// Falls back to the unreduced atoms if the reduction is numerically shaky.
pub fn caratheodory_structure(
    atoms: &[(f64, Vec<f64>)],
    target: &[f64],
    witnesses: &[(&Vec<f64>, &SignalStructure)],
) -> Result<SignalStructure> {
    let reduced = caratheodory_reduce(atoms, target).unwrap_or_else(|_| atoms.to_vec());
    let parts: Vec<(f64, &SignalStructure)> = reduced
        .iter()
        .map(|(w, point)| {
            let wit = witnesses
                .iter()
                .find(|(p, _)| {
                    p.iter().zip(point).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < 1e-9
                })
                .map(|(_, s)| *s)
                .expect("reduced atom matches a witness");
            (*w, wit)
        })
        .collect();
    mix_many(&parts)
}

/// Approximate Hausdorff distance between two convex polytopes given by their
/// vertices: max over probe directions of the support-value difference.
pub fn polytope_hausdorff(a: &[Vec<f64>], b: &[Vec<f64>], probe_count: usize) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let n = a[0].len();
    let probes = sample_directions(n, probe_count);
    let mut dist: f64 = 0.0;
    for lam in &probes {
        let ha = a.iter().map(|v| dot(lam, v)).fold(f64::NEG_INFINITY, f64::max);
        let hb = b.iter().map(|v| dot(lam, v)).fold(f64::NEG_INFINITY, f64::max);
        dist = dist.max((ha - hb).abs());
    }
    dist
}

/// Hausdorff distances between consecutive inner approximations along a prior
/// path; feeds the continuity acceptance test.
pub fn continuity_probe(
    mu_seq: &[Belief],
    vfuncs: &[ValueFunction],
    count: usize,
    d: u32,
) -> Result<Vec<f64>> {
    let approxes: Vec<SetApprox> = mu_seq
        .par_iter()
        .map(|mu| approximate_set(mu, vfuncs, count, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(approxes
        .windows(2)
        .map(|w| polytope_hausdorff(&w[0].inner_vertices, &w[1].inner_vertices, 64))
        .collect())
}

/// Rank-detected affine hull of a point cloud: origin plus an orthonormal
/// basis of the spanned directions. Keeps degenerate (segment or point) sets
/// honest instead of treating them as full-dimensional.
pub fn affine_basis(points: &[Vec<f64>], tol: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let origin = points[0].clone();
    let n = origin.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for p in &points[1..] {
        let mut v: Vec<f64> = p.iter().zip(&origin).map(|(a, b)| a - b).collect();
        for e in &basis {
            let proj = dot(&v, e);
            for (vi, ei) in v.iter_mut().zip(e) {
                *vi -= proj * ei;
            }
        }
        let nv = norm(&v);
        if nv > tol {
            basis.push(v.iter().map(|x| x / nv).collect());
            if basis.len() == n {
                break;
            }
        }
    }
    (origin, basis)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance_a() -> (Belief, Vec<ValueFunction>) {
        (
            Belief::binary(0.3).unwrap(),
            vec![ValueFunction::indicator(0.6, 1), ValueFunction::entropy()],
        )
    }

    #[test]
    fn support_point_indicator() {
        let mu = Belief::binary(0.3).unwrap();
        let vs = vec![ValueFunction::indicator(0.6, 1)];
        let grid = SimplexGrid::new(2, 10).unwrap();
        let (h, v, w) = support_point(&[1.0], &mu, &vs, &grid).unwrap();
        assert!((h - 0.5).abs() < 1e-9);
        assert!((v[0] - 0.5).abs() < 1e-9);
        assert!(w.support_size() <= 2);
    }

    #[test]
    fn support_point_entropy_direction() {
        let (mu, vs) = instance_a();
        let grid = SimplexGrid::new(2, 10).unwrap();
        let (h, v, w) = support_point(&[0.0, 1.0], &mu, &vs, &grid).unwrap();
        assert!((h - mu.entropy()).abs() < 1e-9);
        assert!((v[1] - mu.entropy()).abs() < 1e-9);
        assert_eq!(w.support_size(), 1);
    }

    #[test]
    fn support_point_instance_a_first_axis() {
        let (mu, vs) = instance_a();
        let grid = SimplexGrid::new(2, 10).unwrap();
        let (_, v, _) = support_point(&[1.0, 0.0], &mu, &vs, &grid).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-9);
        // witness atoms at Pr(x1)=0 and 0.6: expected entropy
        let want = 0.5 * 0.0 + 0.5 * Belief::binary(0.6).unwrap().entropy();
        assert!((v[1] - want).abs() < 1e-9);
        assert!((want - 0.33654).abs() < 1e-4);
    }

    #[test]
    fn one_dimensional_interval() {
        let mu = Belief::binary(0.3).unwrap();
        let vs = vec![ValueFunction::indicator(0.6, 1)];
        let approx = approximate_set(&mu, &vs, 2, 10).unwrap();
        let mut vals: Vec<f64> = approx.inner_vertices.iter().map(|v| v[0]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(vals[0].abs() < 1e-9, "min achievable indicator value is 0");
        assert!((vals[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn sandwich_and_membership() {
        let (mu, vs) = instance_a();
        let approx = approximate_set(&mu, &vs, 16, 20).unwrap();
        // inner vertices satisfy all halfspaces
        for v in &approx.inner_vertices {
            assert!(approx.outer_violation(v) <= 1e-8);
        }
        // no-info point is a member
        let p0 = approx.no_info_point();
        assert_eq!(approx.membership(&p0).unwrap(), Membership::Inside);
        // wildly out of range
        assert_eq!(approx.membership(&[2.0, 0.0]).unwrap(), Membership::Outside);
        // midpoint of two support points
        let a = &approx.samples[0].point;
        let b = &approx.samples[5].point;
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        assert_eq!(approx.membership(&mid).unwrap(), Membership::Inside);
    }

    #[test]
    fn witnesses_reproduce_support_points() {
        let (mu, vs) = instance_a();
        let approx = approximate_set(&mu, &vs, 16, 20).unwrap();
        for s in &approx.samples {
            let ev = expected_values(&s.witness, &vs);
            for (a, b) in ev.iter().zip(&s.point) {
                assert!((a - b).abs() < 1e-8);
            }
            assert!((dot(&s.direction, &s.point) - s.h).abs() < 1e-8);
            assert!(s.witness.support_size() <= 2);
            assert!(s.witness.barycenter().sup_dist(&mu) < 1e-9);
        }
    }

    #[test]
    fn implement_point_support_bound() {
        let (mu, vs) = instance_a();
        let approx = approximate_set(&mu, &vs, 32, 40).unwrap();
        let v = vec![0.25, 0.47];
        assert!(matches!(
            approx.membership(&v).unwrap(),
            Membership::Inside | Membership::Boundary(_)
        ));
        let p = approx.implement_point(&v).unwrap();
        assert!(p.support_size() <= 6, "support {} > (n+1)|X|", p.support_size());
        let ev = expected_values(&p, &vs);
        assert!((ev[0] - 0.25).abs() < 1e-6 && (ev[1] - 0.47).abs() < 1e-6);
        assert!(p.barycenter().sup_dist(&mu) < 1e-9);
    }

    #[test]
    fn implement_support_point_returns_witness() {
        let (mu, vs) = instance_a();
        let approx = approximate_set(&mu, &vs, 16, 20).unwrap();
        let s = &approx.samples[3];
        let p = approx.implement_point(&s.point).unwrap();
        assert!(p.support_size() <= 2);
    }

    #[test]
    fn doubling_directions_shrinks_gap() {
        let (mu, vs) = instance_a();
        let mut prev = f64::INFINITY;
        for count in [8usize, 16, 32] {
            let approx = approximate_set(&mu, &vs, count, 20).unwrap();
            let gap = approx.sandwich_gap(64).unwrap();
            assert!(gap <= prev + 1e-12, "gap grew from {prev} to {gap}");
            prev = gap;
        }
    }

    #[test]
    fn degenerate_diagonal_set() {
        // identical coordinates: the set is a segment on the diagonal
        let mu = Belief::binary(0.3).unwrap();
        let v = ValueFunction::indicator(0.6, 1);
        let vs = vec![v.clone(), v];
        let approx = approximate_set(&mu, &vs, 16, 10).unwrap();
        for p in &approx.inner_vertices {
            assert!((p[0] - p[1]).abs() < 1e-9);
        }
        let (_, basis) = affine_basis(&approx.inner_vertices, 1e-7);
        assert_eq!(basis.len(), 1, "diagonal segment should have a 1-d hull");
        // membership on the segment still works
        assert_eq!(approx.membership(&[0.25, 0.25]).unwrap(), Membership::Inside);
    }

    #[test]
    fn continuity_probe_constant_sequence() {
        let (mu, vs) = instance_a();
        let seq = vec![mu.clone(), mu.clone(), mu];
        let dists = continuity_probe(&seq, &vs, 8, 10).unwrap();
        assert!(dists.iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn continuity_probe_distances_shrink_with_step() {
        let (_, vs) = instance_a();
        let make_seq = |step: f64| -> Vec<Belief> {
            let mut seq = Vec::new();
            let mut p = 0.2;
            while p <= 0.4 + 1e-12 {
                seq.push(Belief::binary(p).unwrap());
                p += step;
            }
            seq
        };
        let coarse = continuity_probe(&make_seq(0.05), &vs, 16, 40).unwrap();
        let fine = continuity_probe(&make_seq(0.025), &vs, 16, 40).unwrap();
        let max_c = coarse.iter().cloned().fold(0.0, f64::max);
        let max_f = fine.iter().cloned().fold(0.0, f64::max);
        assert!(max_f <= max_c + 1e-12);
        assert!(max_c > 0.0);
    }

    #[test]
    fn graph_convexity_via_mixing() {
        let (_, vs) = instance_a();
        let mu1 = Belief::binary(0.2).unwrap();
        let mu2 = Belief::binary(0.5).unwrap();
        let a1 = approximate_set(&mu1, &vs, 8, 20).unwrap();
        let a2 = approximate_set(&mu2, &vs, 8, 20).unwrap();
        let alpha = 0.6;
        let p1 = &a1.samples[1].witness;
        let p2 = &a2.samples[2].witness;
        let mixed = p1.mix(p2, alpha).unwrap();
        let mu_mix = mu1.convex(&mu2, alpha);
        assert!(mixed.barycenter().sup_dist(&mu_mix) < 1e-9);
        let ev = expected_values(&mixed, &vs);
        let e1 = expected_values(p1, &vs);
        let e2 = expected_values(p2, &vs);
        for i in 0..vs.len() {
            assert!((ev[i] - (alpha * e1[i] + (1.0 - alpha) * e2[i])).abs() < 1e-9);
        }
    }
}
