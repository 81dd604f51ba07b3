//! Regular grids on the belief simplex and barycentric interpolation.

use crate::belief::Belief;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// All beliefs over `dim` states whose coordinates are integer multiples of
/// `1/resolution`. Points are ordered lexicographically by their integer
/// composition, which fixes tie-breaking everywhere downstream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimplexGrid {
    dim: usize,
    resolution: u32,
    #[serde(skip)]
    points: Vec<Belief>,
    #[serde(skip)]
    index: HashMap<Vec<u32>, usize>,
}

impl SimplexGrid {
    pub fn new(dim: usize, resolution: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpec("state space must be non-empty".into()));
        }
        if resolution == 0 {
            return Err(Error::InvalidSpec("grid resolution must be positive".into()));
        }
        let mut comps = Vec::new();
        let mut cur = vec![0u32; dim];
        enumerate_compositions(resolution, dim, 0, &mut cur, &mut comps);
        let mut points = Vec::with_capacity(comps.len());
        let mut index = HashMap::with_capacity(comps.len());
        for (i, c) in comps.iter().enumerate() {
            let probs = c.iter().map(|&k| k as f64 / resolution as f64).collect();
            points.push(Belief::new(probs)?);
            index.insert(c.clone(), i);
        }
        Ok(Self { dim, resolution, points, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn points(&self) -> &[Belief] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> &Belief {
        &self.points[i]
    }

    /// Index of the grid point with the given integer composition, if present.
    pub fn index_of(&self, comp: &[u32]) -> Option<usize> {
        self.index.get(comp).copied()
    }

    /// Barycentric coordinates of `mu` in the standard (Kuhn) triangulation of
    /// the grid: a list of (grid index, weight) with weights on the simplex
    /// whose vertex beliefs average back to `mu` exactly.
    ///
    /// Works through cumulative-sum coordinates, where the simplex becomes the
    /// order polytope 0 <= u_1 <= ... <= u_{dim-1} <= d and the cube
    /// triangulation respects the ordering constraints, so every returned
    /// vertex is a valid grid point.
    pub fn barycentric(&self, mu: &Belief) -> Result<Vec<(usize, f64)>> {
        if mu.dim() != self.dim {
            return Err(Error::InvalidBelief(format!(
                "belief dim {} does not match grid dim {}",
                mu.dim(),
                self.dim
            )));
        }
        let d = self.resolution as f64;
        let k = self.dim - 1;
        if k == 0 {
            return Ok(vec![(0, 1.0)]);
        }
        // cumulative sums of the first k coordinates, scaled by d
        let mut u = vec![0.0f64; k];
        let mut acc = 0.0;
        for i in 0..k {
            acc += mu.get(i);
            u[i] = (acc * d).clamp(0.0, d);
        }
        // enforce ordering against rounding noise
        for i in 1..k {
            if u[i] < u[i - 1] {
                u[i] = u[i - 1];
            }
        }
        let mut base: Vec<i64> = u.iter().map(|&x| x.floor() as i64).collect();
        let mut frac: Vec<f64> = u
            .iter()
            .zip(&base)
            .map(|(&x, &b)| x - b as f64)
            .collect();
        // a coordinate sitting exactly on the top lattice line belongs to the
        // lower cell
        for i in 0..k {
            if base[i] as u32 >= self.resolution {
                base[i] = self.resolution as i64 - 1;
                frac[i] = 1.0;
            }
        }
        // Kuhn simplex: add 1 to coordinates in order of decreasing fractional
        // part. Ties go to the higher index first so cumulative coordinates
        // stay sorted and every vertex remains inside the simplex.
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| frac[b].partial_cmp(&frac[a]).unwrap().then(b.cmp(&a)));

        let mut verts: Vec<Vec<i64>> = Vec::with_capacity(k + 1);
        let mut cur = base.clone();
        verts.push(cur.clone());
        for &j in &order {
            cur[j] += 1;
            verts.push(cur.clone());
        }
        let mut weights = Vec::with_capacity(k + 1);
        weights.push(1.0 - frac[order[0]]);
        for t in 0..k {
            let next = if t + 1 < k { frac[order[t + 1]] } else { 0.0 };
            weights.push(frac[order[t]] - next);
        }

        let mut out = Vec::with_capacity(k + 1);
        for (v, w) in verts.iter().zip(weights) {
            if w <= 1e-14 {
                continue;
            }
            // map cumulative lattice point back to a composition
            let mut comp = vec![0u32; self.dim];
            let mut prev = 0i64;
            let mut ok = true;
            for i in 0..k {
                let diff = v[i] - prev;
                if diff < 0 {
                    ok = false;
                    break;
                }
                comp[i] = diff as u32;
                prev = v[i];
            }
            let last = self.resolution as i64 - prev;
            if !ok || last < 0 {
                return Err(Error::InvalidBelief(
                    "barycentric cell fell outside the simplex".into(),
                ));
            }
            comp[k] = last as u32;
            let idx = self
                .index_of(&comp)
                .ok_or_else(|| Error::InvalidBelief("grid index lookup failed".into()))?;
            out.push((idx, w));
        }
        Ok(out)
    }

    /// Interpolates tabulated values at `mu` using `barycentric`.
    pub fn interpolate(&self, values: &[f64], mu: &Belief) -> Result<f64> {
        let bc = self.barycentric(mu)?;
        Ok(bc.iter().map(|&(i, w)| w * values[i]).sum())
    }
}

fn enumerate_compositions(left: u32, dim: usize, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos == dim - 1 {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for k in 0..=left {
        cur[pos] = k;
        enumerate_compositions(left - k, dim, pos + 1, cur, out);
    }
}

/// C(n, k) in f64, for grid-size checks.
pub fn binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_count_matches_binomial() {
        for (dim, d) in [(2usize, 10u32), (3, 7), (4, 5)] {
            let g = SimplexGrid::new(dim, d).unwrap();
            let expect = binomial((d as usize + dim - 1) as u64, (dim - 1) as u64);
            assert_eq!(g.len() as f64, expect);
        }
    }

    #[test]
    fn vertices_included() {
        let g = SimplexGrid::new(3, 5).unwrap();
        for i in 0..3 {
            let v = Belief::degenerate(3, i);
            assert!(g.points().iter().any(|p| p.sup_dist(&v) < 1e-15));
        }
    }

    #[test]
    fn refinement_nesting() {
        let g1 = SimplexGrid::new(3, 4).unwrap();
        let g2 = SimplexGrid::new(3, 12).unwrap();
        for p in g1.points() {
            assert!(
                g2.points().iter().any(|q| q.sup_dist(p) < 1e-12),
                "coarse point missing from fine grid"
            );
        }
    }

    #[test]
    fn barycentric_reproduces_point() {
        let g = SimplexGrid::new(3, 9).unwrap();
        let mu = Belief::new(vec![0.21, 0.33, 0.46]).unwrap();
        let bc = g.barycentric(&mu).unwrap();
        let wsum: f64 = bc.iter().map(|&(_, w)| w).sum();
        assert!((wsum - 1.0).abs() < 1e-12);
        for j in 0..3 {
            let x: f64 = bc.iter().map(|&(i, w)| w * g.point(i).get(j)).sum();
            assert!((x - mu.get(j)).abs() < 1e-12, "coordinate {j} not reproduced");
        }
    }

    #[test]
    fn barycentric_exact_at_grid_points() {
        let g = SimplexGrid::new(4, 6).unwrap();
        for (i, p) in g.points().iter().enumerate() {
            let bc = g.barycentric(p).unwrap();
            let total: f64 = bc.iter().map(|&(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-12);
            for &(j, w) in &bc {
                if j != i {
                    assert!(w < 1e-9, "grid point {i} leaked weight {w} onto {j}");
                }
            }
        }
    }

    #[test]
    fn interpolation_exact_for_linear_functions() {
        let g = SimplexGrid::new(3, 8).unwrap();
        let coef = [0.3, -1.2, 2.5];
        let values: Vec<f64> = g
            .points()
            .iter()
            .map(|p| p.probs().iter().zip(&coef).map(|(x, c)| x * c).sum())
            .collect();
        for mu in [
            Belief::new(vec![0.1, 0.5, 0.4]).unwrap(),
            Belief::new(vec![0.7, 0.05, 0.25]).unwrap(),
            Belief::degenerate(3, 1),
        ] {
            let got = g.interpolate(&values, &mu).unwrap();
            let want: f64 = mu.probs().iter().zip(&coef).map(|(x, c)| x * c).sum();
            assert!((got - want).abs() < 1e-12);
        }
    }
}
