//! Beliefs over a finite state set and finite-support distributions over beliefs.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Sum tolerance for probability vectors.
pub const SUM_TOL: f64 = 1e-12;
/// Entries below this are rejected as genuinely negative.
pub const NEG_TOL: f64 = -1e-9;
/// Posteriors closer than this (sup norm) are merged into one atom.
pub const MERGE_TOL: f64 = 1e-10;

/// A probability vector over the finite state set X.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief {
    probs: Vec<f64>,
}

impl Belief {
    /// Builds a belief, renormalizing so the entries sum to exactly 1.
    /// Entries below `NEG_TOL` are rejected; tiny negative noise is clamped to 0.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidBelief("empty probability vector".into()));
        }
        let mut p = probs;
        for (i, x) in p.iter_mut().enumerate() {
            if !x.is_finite() {
                return Err(Error::InvalidBelief(format!("entry {i} is not finite")));
            }
            if *x < NEG_TOL {
                return Err(Error::InvalidBelief(format!("entry {i} = {x} is negative")));
            }
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let sum: f64 = p.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidBelief("mass sums to zero".into()));
        }
        for x in p.iter_mut() {
            *x /= sum;
        }
        Ok(Self { probs: p })
    }

    /// Point mass on state `i` in a space of `n` states.
    pub fn degenerate(n: usize, i: usize) -> Self {
        let mut p = vec![0.0; n];
        p[i] = 1.0;
        Self { probs: p }
    }

    /// Uniform belief over `n` states.
    pub fn uniform(n: usize) -> Self {
        Self { probs: vec![1.0 / n as f64; n] }
    }

    /// Binary-state belief from Pr(x1).
    pub fn binary(p1: f64) -> Result<Self> {
        Self::new(vec![1.0 - p1, p1])
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Shannon entropy in nats, with the convention 0 ln 0 = 0.
    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
            .sum()
    }

    pub fn sup_dist(&self, other: &Belief) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Convex combination `a*self + (1-a)*other`.
    pub fn convex(&self, other: &Belief, a: f64) -> Belief {
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(x, y)| a * x + (1.0 - a) * y)
            .collect();
        Belief { probs }
    }
}

/// A finite-support distribution over posteriors: the computational stand-in
/// for a Borel measure on the belief simplex.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalStructure {
    atoms: Vec<(f64, Belief)>,
}

impl SignalStructure {
    /// Builds a structure from (weight, posterior) pairs. Weights are
    /// renormalized to sum to 1; atoms with nonpositive weight are dropped;
    /// posteriors within `MERGE_TOL` of each other are merged.
    pub fn new(atoms: Vec<(f64, Belief)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidStructure("no atoms".into()));
        }
        let dim = atoms[0].1.dim();
        for (w, b) in &atoms {
            if b.dim() != dim {
                return Err(Error::InvalidStructure("mixed state-space dimensions".into()));
            }
            if !w.is_finite() || *w < -SUM_TOL {
                return Err(Error::InvalidStructure(format!("bad weight {w}")));
            }
        }
        let mut merged: Vec<(f64, Belief)> = Vec::new();
        for (w, b) in atoms {
            if w <= 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(_, m)| m.sup_dist(&b) <= MERGE_TOL) {
                Some((mw, _)) => *mw += w,
                None => merged.push((w, b)),
            }
        }
        if merged.is_empty() {
            return Err(Error::InvalidStructure("all atoms had zero weight".into()));
        }
        let total: f64 = merged.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidStructure(format!("weights sum to {total}")));
        }
        for (w, _) in merged.iter_mut() {
            *w /= total;
        }
        Ok(Self { atoms: merged })
    }

    /// Degenerate structure: the point mass on one posterior (no information).
    pub fn degenerate(posterior: Belief) -> Self {
        Self { atoms: vec![(1.0, posterior)] }
    }

    pub fn atoms(&self) -> &[(f64, Belief)] {
        &self.atoms
    }

    pub fn support_size(&self) -> usize {
        self.atoms.len()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].1.dim()
    }

    /// The mean posterior: E_P[nu]. A Bayes-plausible structure returns the prior.
    pub fn barycenter(&self) -> Belief {
        let dim = self.dim();
        let mut probs = vec![0.0; dim];
        for (w, b) in &self.atoms {
            for (acc, p) in probs.iter_mut().zip(b.probs()) {
                *acc += w * p;
            }
        }
        Belief { probs }
    }

    /// Expectation of a scalar function of the posterior.
    pub fn expect<F: Fn(&Belief) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|(w, b)| w * f(b)).sum()
    }

    /// Convex combination of two structures: weight `beta` on `self`.
    /// Expectations mix linearly under this operation.
    pub fn mix(&self, other: &SignalStructure, beta: f64) -> Result<SignalStructure> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidStructure("mixed state-space dimensions".into()));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidStructure(format!("mix weight {beta} outside [0,1]")));
        }
        let mut atoms = Vec::with_capacity(self.atoms.len() + other.atoms.len());
        for (w, b) in &self.atoms {
            atoms.push((beta * w, b.clone()));
        }
        for (w, b) in &other.atoms {
            atoms.push(((1.0 - beta) * w, b.clone()));
        }
        SignalStructure::new(atoms)
    }
}

/// Mixes a weighted family of structures into one.
pub fn mix_many(parts: &[(f64, &SignalStructure)]) -> Result<SignalStructure> {
    let mut atoms = Vec::new();
    for (pi, s) in parts {
        if *pi <= 0.0 {
            continue;
        }
        for (w, b) in s.atoms() {
            atoms.push((pi * w, b.clone()));
        }
    }
    SignalStructure::new(atoms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn belief_renormalizes() {
        let b = Belief::new(vec![2.0, 6.0]).unwrap();
        assert!((b.get(0) - 0.25).abs() < 1e-15);
        assert!((b.probs().iter().sum::<f64>() - 1.0).abs() < SUM_TOL);
    }

    #[test]
    fn belief_rejects_negative() {
        assert!(Belief::new(vec![-0.1, 1.1]).is_err());
        // tiny negative noise is clamped
        let b = Belief::new(vec![-1e-12, 1.0]).unwrap();
        assert_eq!(b.get(0), 0.0);
    }

    #[test]
    fn entropy_convention_at_vertices() {
        assert_eq!(Belief::degenerate(2, 0).entropy(), 0.0);
        let h = Belief::binary(0.3).unwrap().entropy();
        assert!((h - 0.6108643020548935).abs() < 1e-12);
    }

    #[test]
    fn barycenter_affine_average() {
        let p = SignalStructure::new(vec![
            (0.5, Belief::new(vec![0.2, 0.8]).unwrap()),
            (0.5, Belief::new(vec![0.6, 0.4]).unwrap()),
        ])
        .unwrap();
        let mu = p.barycenter();
        assert!((mu.get(0) - 0.4).abs() < 1e-15);
        assert!((mu.get(1) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn barycenter_degenerate() {
        let mu = Belief::binary(0.37).unwrap();
        let p = SignalStructure::degenerate(mu.clone());
        assert!(p.barycenter().sup_dist(&mu) < 1e-15);
    }

    #[test]
    fn barycenter_full_info() {
        let p = SignalStructure::new(vec![
            (0.5, Belief::degenerate(2, 0)),
            (0.5, Belief::degenerate(2, 1)),
        ])
        .unwrap();
        assert!((p.barycenter().get(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn duplicate_posteriors_merge() {
        let b = Belief::binary(0.4).unwrap();
        let p = SignalStructure::new(vec![(0.5, b.clone()), (0.5, b)]).unwrap();
        assert_eq!(p.support_size(), 1);
    }

    #[test]
    fn mix_endpoints_and_idempotence() {
        let p1 = SignalStructure::degenerate(Belief::degenerate(2, 0));
        let p2 = SignalStructure::degenerate(Belief::degenerate(2, 1));
        let m = p1.mix(&p2, 0.3).unwrap();
        assert_eq!(m.support_size(), 2);
        assert!((m.barycenter().get(0) - 0.3).abs() < 1e-15);

        let full = p1.mix(&p2, 1.0).unwrap();
        assert_eq!(full.support_size(), 1);

        let same = p1.mix(&p1, 0.42).unwrap();
        assert_eq!(same.support_size(), 1);
    }
}
