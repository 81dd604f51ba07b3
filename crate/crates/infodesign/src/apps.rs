//! Applications of the possibility-set machinery: persuading a voting
//! coalition under costly participation, and screening heterogeneous
//! receivers with a menu of information structures.

use crate::belief::{Belief, SignalStructure};
use crate::concavify::concavify_on;
use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::lp::{solve_standard, LpStatus};
use crate::value::{ValueFunction, WeightedSum};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Slack allowed on a voter's participation constraint.
const PARTICIPATION_TOL: f64 = 1e-8;
/// Residual demanded of the critical-belief root.
const ROOT_TOL: f64 = 1e-10;
/// Allowed disagreement between the closed-form voter solution and the
/// brute-force two-point search.
const CROSS_CHECK_TOL: f64 = 1e-6;
/// Weights below this are dropped when assembling menu structures.
const WEIGHT_FLOOR: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Voter persuasion
// ---------------------------------------------------------------------------

/// One voter in a binary-state referendum: a payoff from participating,
/// a participation cost, and the belief threshold above which they vote yes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Voter {
    /// Participation payoff as a function of the posterior (binary states).
    pub utility: ValueFunction,
    /// Cost of participating; the voter joins only if expected utility under
    /// the offered information covers it.
    pub cost: f64,
    /// Votes yes exactly when the realized posterior Pr(x1) reaches this.
    pub threshold: f64,
}

/// A referendum instance: the electorate, the quorum of yes votes needed,
/// and the common prior Pr(x1).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoterSpec {
    pub voters: Vec<Voter>,
    /// Number of simultaneous yes votes required to win.
    pub quorum: usize,
    /// Prior probability of the high state x1.
    pub prior: f64,
}

impl VoterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.voters.is_empty() {
            return Err(Error::InvalidSpec("no voters".into()));
        }
        if self.quorum == 0 || self.quorum > self.voters.len() {
            return Err(Error::InvalidSpec(format!(
                "quorum {} outside 1..={}",
                self.quorum,
                self.voters.len()
            )));
        }
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return Err(Error::InvalidBelief(format!(
                "prior {} must lie strictly inside (0, 1)",
                self.prior
            )));
        }
        for (i, v) in self.voters.iter().enumerate() {
            v.utility.validate(2)?;
            if !(0.0..=1.0).contains(&v.threshold) {
                return Err(Error::InvalidSpec(format!(
                    "voter {} threshold {} outside [0, 1]",
                    i, v.threshold
                )));
            }
            if v.cost < 0.0 {
                return Err(Error::InvalidSpec(format!("voter {} has negative cost", i)));
            }
        }
        Ok(())
    }
}

/// Expected participation payoff of `voter` under the two-point structure
/// that splits the prior between posterior 0 and posterior `nu`.
fn split_payoff(voter: &Voter, prior: f64, nu: f64) -> f64 {
    if nu <= prior {
        // No high posterior to split towards: the degenerate (no-information)
        // limit pays the utility at the prior.
        return voter.utility.eval(&Belief::binary(prior).expect("prior in (0,1)"));
    }
    let w_hi = prior / nu;
    (1.0 - w_hi) * voter.utility.eval(&Belief::binary(0.0).expect("valid"))
        + w_hi * voter.utility.eval(&Belief::binary(nu).expect("nu in (0,1]"))
}

/// Largest posterior `nu` at which voter `i` still participates when offered
/// the two-point split between 0 and `nu`: the root of
/// `((nu - mu)/nu) F(0) + (mu/nu) F(nu) = c` on `(mu, 1]`.
///
/// If participation holds at every candidate posterior the critical belief is
/// 1 by convention (this covers zero-cost voters). If it holds nowhere the
/// equation has no root and the voter can never be recruited via such splits.
pub fn critical_belief(spec: &VoterSpec, i: usize) -> Result<f64> {
    spec.validate()?;
    let voter = spec
        .voters
        .get(i)
        .ok_or_else(|| Error::InvalidSpec(format!("voter index {} out of range", i)))?;
    let roots = participation_boundaries(voter, spec.prior);
    if roots.is_empty() {
        let psi = |x: f64| split_payoff(voter, spec.prior, x) - voter.cost;
        return if psi(1.0) >= 0.0 {
            // Participation holds at every candidate posterior.
            Ok(1.0)
        } else {
            Err(Error::NoRoot { lo: spec.prior, hi: 1.0 })
        };
    }
    // The largest crossing is the outermost boundary of the participation
    // region; for monotone participation it is the unique root.
    Ok(*roots.last().unwrap())
}

/// Every posterior in (mu, 1] at which the voter's participation payoff under
/// the zero-or-`nu` split crosses their cost, refined by bisection to a
/// residual below `ROOT_TOL`. Empty when participation never switches.
fn participation_boundaries(voter: &Voter, mu: f64) -> Vec<f64> {
    let psi = |x: f64| split_payoff(voter, mu, x) - voter.cost;
    const SCAN: usize = 400;
    let mut roots = Vec::new();
    let mut prev_x = mu;
    let mut prev_f = psi(mu);
    for k in 1..=SCAN {
        let x = mu + (1.0 - mu) * k as f64 / SCAN as f64;
        let f_x = psi(x);
        if prev_f == 0.0 {
            roots.push(prev_x);
        } else if f_x != 0.0 && f_x.signum() != prev_f.signum() {
            let (mut lo, mut hi) = (prev_x, x);
            let mut f_lo = prev_f;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let f_mid = psi(mid);
                if f_mid.signum() == f_lo.signum() {
                    lo = mid;
                    f_lo = f_mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-15 {
                    break;
                }
            }
            let root = 0.5 * (lo + hi);
            if psi(root).abs() <= ROOT_TOL {
                roots.push(root);
            }
        }
        prev_x = x;
        prev_f = f_x;
    }
    if prev_f == 0.0 {
        roots.push(prev_x);
    }
    roots
}

/// Result of the referendum persuasion problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoterOutcome {
    /// Probability the referendum passes under the optimal signal.
    pub value: f64,
    /// The high posterior of the optimal split (equals the prior when no
    /// information is needed).
    pub mu_star: f64,
    /// Voters who participate and vote yes at the high posterior.
    pub selected: Vec<usize>,
    /// The optimal signal structure.
    pub structure: SignalStructure,
}

/// Voters (by index) who, offered `structure`, cover their participation cost
/// in expectation.
fn participants(spec: &VoterSpec, structure: &SignalStructure) -> Vec<usize> {
    spec.voters
        .iter()
        .enumerate()
        .filter(|(_, v)| structure.expect(|b| v.utility.eval(b)) >= v.cost - PARTICIPATION_TOL)
        .map(|(i, _)| i)
        .collect()
}

/// Number of yes votes `structure` secures at posterior `nu` counting only
/// participating voters.
fn yes_votes(spec: &VoterSpec, participating: &[usize], nu: f64) -> Vec<usize> {
    participating
        .iter()
        .copied()
        .filter(|&i| spec.voters[i].threshold <= nu + 1e-12)
        .collect()
}

/// Success probability of an arbitrary structure: mass on posteriors where at
/// least `quorum` participating voters vote yes.
fn structure_value(spec: &VoterSpec, structure: &SignalStructure) -> f64 {
    let ins = participants(spec, structure);
    structure
        .atoms()
        .iter()
        .filter(|(_, b)| yes_votes(spec, &ins, b.get(1)).len() >= spec.quorum)
        .map(|(w, _)| w)
        .sum()
}

fn two_point(prior: f64, nu: f64) -> Result<SignalStructure> {
    if nu <= prior {
        return Ok(SignalStructure::degenerate(Belief::binary(prior)?));
    }
    let w_hi = prior / nu;
    SignalStructure::new(vec![
        (1.0 - w_hi, Belief::binary(0.0)?),
        (w_hi, Belief::binary(nu)?),
    ])
}

/// Best achievable pass probability over all two-point structures with
/// posteriors on a grid of `d` steps augmented with the voters' thresholds.
/// Used to cross-validate the closed-form solution.
fn brute_force_value(spec: &VoterSpec, d: usize) -> Result<f64> {
    let mu = spec.prior;
    let mut points: Vec<f64> = (0..=d).map(|k| k as f64 / d as f64).collect();
    points.push(mu);
    for v in &spec.voters {
        points.push(v.threshold);
        points.extend(participation_boundaries(v, mu));
    }
    points.retain(|x| (0.0..=1.0).contains(x));
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let lows: Vec<f64> = points.iter().copied().filter(|&x| x <= mu).collect();
    let highs: Vec<f64> = points.iter().copied().filter(|&x| x >= mu).collect();
    let mut best = 0.0f64;
    for &a in &lows {
        for &b in &highs {
            let s = if (b - a).abs() < 1e-12 {
                if (a - mu).abs() > 1e-12 {
                    continue;
                }
                SignalStructure::degenerate(Belief::binary(mu)?)
            } else {
                let w_hi = (mu - a) / (b - a);
                SignalStructure::new(vec![
                    (1.0 - w_hi, Belief::binary(a)?),
                    (w_hi, Belief::binary(b)?),
                ])?
            };
            best = best.max(structure_value(spec, &s));
        }
    }
    Ok(best)
}

/// Solves the referendum persuasion problem: find the cheapest split posterior
/// `mu_star` at which a quorum of voters both participates and votes yes, and
/// pool all remaining mass at posterior 0.
///
/// The resulting value `prior / mu_star` is cross-validated against a
/// brute-force search over two-point structures on a 200-step grid; a
/// disagreement beyond 1e-6 is reported as an error rather than silently ignored.
pub fn voters_solve(spec: &VoterSpec) -> Result<VoterOutcome> {
    spec.validate()?;
    let mu = spec.prior;

    // Candidate high posteriors: the success probability mu/nu falls in nu,
    // so the optimum is the smallest nu at which the participating-yes count
    // reaches the quorum. That count changes only where a voter's threshold
    // is crossed or their participation switches, so those points (plus the
    // prior itself, for the no-information case) exhaust the candidates.
    let mut candidates: Vec<f64> = spec.voters.iter().map(|v| v.threshold).collect();
    for v in &spec.voters {
        candidates.extend(participation_boundaries(v, mu));
    }
    candidates.push(mu);
    candidates.retain(|&x| x >= mu - 1e-12);
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut found: Option<(f64, Vec<usize>, SignalStructure)> = None;
    for &nu in &candidates {
        let structure = two_point(mu, nu)?;
        let ins = participants(spec, &structure);
        let votes = yes_votes(spec, &ins, nu.max(mu));
        if votes.len() >= spec.quorum {
            found = Some((nu.max(mu), votes, structure));
            break;
        }
    }
    let (mu_star, selected, structure) =
        found.ok_or(Error::Unpersuadable { m: spec.quorum })?;
    let value = if mu_star <= mu { 1.0 } else { mu / mu_star };

    let oracle = brute_force_value(spec, 200)?;
    if (oracle - value).abs() > CROSS_CHECK_TOL {
        return Err(Error::NonConvergence(format!(
            "closed-form value {:.9} disagrees with exhaustive two-point search {:.9}",
            value, oracle
        )));
    }

    Ok(VoterOutcome { value, mu_star, selected, structure })
}

// ---------------------------------------------------------------------------
// Screening with menus of information structures
// ---------------------------------------------------------------------------

/// One receiver type in the screening problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenType {
    /// Population weight of the type.
    pub weight: f64,
    /// The receiver's own payoff from a posterior; drives self-selection.
    pub utility: ValueFunction,
    /// The designer's payoff from this type holding a posterior.
    pub payoff: ValueFunction,
}

/// Screening instance: a common prior and the type distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenSpec {
    pub prior: Belief,
    pub types: Vec<ScreenType>,
}

impl ScreenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.types.is_empty() {
            return Err(Error::InvalidSpec("no receiver types".into()));
        }
        let n = self.prior.dim();
        let mut total = 0.0;
        for (k, t) in self.types.iter().enumerate() {
            if t.weight < 0.0 {
                return Err(Error::InvalidSpec(format!("type {} has negative weight", k)));
            }
            total += t.weight;
            t.utility.validate(n)?;
            t.payoff.validate(n)?;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "type weights sum to {}, expected 1",
                total
            )));
        }
        Ok(())
    }

    pub fn n_types(&self) -> usize {
        self.types.len()
    }
}

/// A menu of information structures, one per type, incentive compatible:
/// every type weakly prefers its own structure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Menu {
    /// structures[k] is offered to (and chosen by) type k.
    pub structures: Vec<SignalStructure>,
    /// Designer's expected payoff across types.
    pub value: f64,
    /// ic_slack[k][l] = E over structures[k] of utility_k minus E over
    /// structures[l] of utility_k; nonnegative up to tolerance.
    pub ic_slack: Vec<Vec<f64>>,
}

fn ic_matrix(spec: &ScreenSpec, structures: &[SignalStructure]) -> Vec<Vec<f64>> {
    let n = spec.n_types();
    (0..n)
        .map(|k| {
            let own = structures[k].expect(|b| spec.types[k].utility.eval(b));
            (0..n)
                .map(|l| own - structures[l].expect(|b| spec.types[k].utility.eval(b)))
                .collect()
        })
        .collect()
}

/// Solves the joint menu LP for fixed per-type atom sets (grid indices):
/// maximize the designer's payoff over all weight assignments subject to
/// per-type Bayes plausibility and all pairwise self-selection constraints.
/// Returns the optimal value and per-type `(grid index, weight)` lists, or
/// `None` when the atom sets cannot support an incentive-compatible menu.
fn menu_lp(
    spec: &ScreenSpec,
    grid: &SimplexGrid,
    sets: &[Vec<usize>],
) -> Result<Option<(f64, Vec<Vec<(usize, f64)>>)>> {
    let n_types = spec.n_types();
    let dim = spec.prior.dim();
    let offsets: Vec<usize> = sets
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.len();
            Some(o)
        })
        .collect();
    let n_weights: usize = sets.iter().map(|s| s.len()).sum();
    let n_slack = n_types * (n_types - 1);
    let n_cols = n_weights + n_slack;
    let n_rows = n_types * dim + n_slack;

    let mut a = vec![vec![0.0; n_cols]; n_rows];
    let mut b = vec![0.0; n_rows];
    let mut c = vec![0.0; n_cols];

    for (k, set) in sets.iter().enumerate() {
        for (j, &g) in set.iter().enumerate() {
            let col = offsets[k] + j;
            let point = grid.point(g);
            for coord in 0..dim {
                a[k * dim + coord][col] = point.get(coord);
            }
            c[col] = spec.types[k].weight * spec.types[k].payoff.eval(point);
        }
        for coord in 0..dim {
            b[k * dim + coord] = spec.prior.get(coord);
        }
    }
    // Self-selection rows: own expected utility minus the utility type k
    // would get from type l's structure, less a slack, equals zero.
    let mut row = n_types * dim;
    let mut slack = n_weights;
    for k in 0..n_types {
        for l in 0..n_types {
            if l == k {
                continue;
            }
            for (j, &g) in sets[k].iter().enumerate() {
                a[row][offsets[k] + j] = spec.types[k].utility.eval(grid.point(g));
            }
            for (j, &g) in sets[l].iter().enumerate() {
                a[row][offsets[l] + j] -= spec.types[k].utility.eval(grid.point(g));
            }
            a[row][slack] = -1.0;
            row += 1;
            slack += 1;
        }
    }

    let sol = solve_standard(&a, &b, &c)?;
    match sol.status {
        LpStatus::Optimal => {
            let weights = sets
                .iter()
                .enumerate()
                .map(|(k, set)| {
                    set.iter()
                        .enumerate()
                        .map(|(j, &g)| (g, sol.x[offsets[k] + j]))
                        .filter(|&(_, w)| w > WEIGHT_FLOOR)
                        .collect()
                })
                .collect();
            Ok(Some((sol.objective, weights)))
        }
        _ => Ok(None),
    }
}

fn structures_from_weights(
    grid: &SimplexGrid,
    weights: &[Vec<(usize, f64)>],
) -> Result<Vec<SignalStructure>> {
    weights
        .iter()
        .map(|per_type| {
            let total: f64 = per_type.iter().map(|&(_, w)| w).sum();
            SignalStructure::new(
                per_type
                    .iter()
                    .map(|&(g, w)| (w / total, grid.point(g).clone()))
                    .collect(),
            )
        })
        .collect()
}

/// Grid indices spanned by the support of a concave-envelope structure.
fn support_indices(grid: &SimplexGrid, s: &SignalStructure) -> Vec<usize> {
    s.atoms()
        .iter()
        .filter_map(|(_, b)| {
            (0..grid.len()).find(|&i| grid.point(i).sup_dist(b) < 1e-9)
        })
        .collect()
}

/// Designs an incentive-compatible menu of information structures, one per
/// receiver type, maximizing the designer's expected payoff with posteriors
/// restricted to a simplex grid of resolution `d`.
///
/// For fixed per-type atom sets the optimal weights solve a single linear
/// program (Bayes plausibility plus all self-selection constraints), so the
/// search is over atom sets only: 16 deterministic multi-start local searches
/// that add, drop, or swap atoms and keep improvements. `atoms_cap` bounds the
/// support of each menu item and defaults to `(n_types + 2) * dim`.
///
/// A menu where every type receives the pooled-optimal structure is always
/// incentive compatible, so the search starts feasible and only improves.
pub fn screening_solve(spec: &ScreenSpec, d: u32, atoms_cap: Option<usize>) -> Result<Menu> {
    spec.validate()?;
    let n_types = spec.n_types();
    let dim = spec.prior.dim();
    let cap = atoms_cap.unwrap_or((n_types + 2) * dim).max(dim);
    let grid = SimplexGrid::new(dim, d)?;

    // Seed atom sets: the supports of the pooled concave envelope (identical
    // menus are always self-selecting) and of each type's own envelope.
    let lambdas: Vec<f64> = spec.types.iter().map(|t| t.weight).collect();
    let payoffs: Vec<ValueFunction> = spec.types.iter().map(|t| t.payoff.clone()).collect();
    let pooled = WeightedSum { weights: lambdas.clone(), vfuncs: &payoffs };
    let pooled_cav = concavify_on(&grid, &pooled, &spec.prior)?;
    let pooled_support = support_indices(&grid, &pooled_cav.structure);
    let own_supports: Vec<Vec<usize>> = spec
        .types
        .iter()
        .map(|t| -> Result<Vec<usize>> {
            Ok(support_indices(&grid, &concavify_on(&grid, &t.payoff, &spec.prior)?.structure))
        })
        .collect::<Result<_>>()?;
    // Carrier simplex of the prior: including it keeps every atom set able to
    // average back to the prior, so the LP stays feasible under random moves.
    let carrier: Vec<usize> = grid.barycentric(&spec.prior)?.iter().map(|&(i, _)| i).collect();

    let seed_sets = |start: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<usize>> {
        (0..n_types)
            .map(|k| {
                let mut s = carrier.clone();
                match start {
                    0 => s.extend(pooled_support.iter().copied()),
                    1 => {
                        s.extend(own_supports[k].iter().copied());
                        s.extend(pooled_support.iter().copied());
                    }
                    _ => {
                        while s.len() < cap {
                            s.push(rng.gen_range(0..grid.len()));
                        }
                    }
                }
                s.sort_unstable();
                s.dedup();
                while s.len() > cap {
                    let drop = rng.gen_range(0..s.len());
                    s.remove(drop);
                }
                s
            })
            .collect()
    };

    const STARTS: u64 = 16;
    const MOVES: usize = 150;
    let results: Vec<(usize, f64, Vec<Vec<(usize, f64)>>)> = (0..STARTS)
        .into_par_iter()
        .filter_map(|start| {
            let mut rng = ChaCha8Rng::seed_from_u64(start);
            let mut sets = seed_sets(start as usize, &mut rng);
            let mut best = menu_lp(spec, &grid, &sets).ok().flatten()?;
            for _ in 0..MOVES {
                let k = rng.gen_range(0..n_types);
                let mut trial = sets.clone();
                let s = &mut trial[k];
                if s.len() < cap && rng.gen_bool(0.5) {
                    s.push(rng.gen_range(0..grid.len()));
                } else {
                    let pos = rng.gen_range(0..s.len());
                    s[pos] = rng.gen_range(0..grid.len());
                }
                s.sort_unstable();
                s.dedup();
                if let Ok(Some(cand)) = menu_lp(spec, &grid, &trial) {
                    if cand.0 > best.0 + 1e-12 {
                        best = cand;
                        sets = trial;
                    }
                }
            }
            Some((start as usize, best.0, best.1))
        })
        .collect();

    let (_, value, weights) = results
        .into_iter()
        .min_by(|a, b| {
            // highest value wins; ties go to the lowest start index
            b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0))
        })
        .ok_or_else(|| Error::NonConvergence("no menu search start was feasible".into()))?;

    let structures = structures_from_weights(&grid, &weights)?;
    let ic_slack = ic_matrix(spec, &structures);
    let worst_ic = ic_slack
        .iter()
        .flatten()
        .fold(f64::INFINITY, |acc, &x| acc.min(x));
    if worst_ic < -PARTICIPATION_TOL {
        // Fall back to the always-self-selecting identical menu.
        let same = vec![pooled_cav.structure.clone(); n_types];
        let ic_slack = ic_matrix(spec, &same);
        return Ok(Menu { value: pooled_cav.value, structures: same, ic_slack });
    }
    Ok(Menu { structures, value, ic_slack })
}

/// Exhaustive reference search for two-type screening: enumerates every pair
/// of per-type atom sets with at most `cap` grid atoms and solves the joint
/// menu linear program for each. Exponential in the grid size — use only at
/// validation scale (small `d`, `cap` <= 3).
pub fn screening_exhaustive(spec: &ScreenSpec, d: u32, cap: usize) -> Result<f64> {
    spec.validate()?;
    if spec.n_types() != 2 {
        return Err(Error::InvalidSpec("exhaustive search supports exactly two types".into()));
    }
    let grid = SimplexGrid::new(spec.prior.dim(), d)?;
    let n = grid.len();
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        subsets.push(vec![i]);
        for j in (i + 1)..n {
            if cap >= 2 {
                subsets.push(vec![i, j]);
            }
            for k in (j + 1)..n {
                if cap >= 3 {
                    subsets.push(vec![i, j, k]);
                }
            }
        }
    }
    if cap > 3 {
        return Err(Error::InvalidSpec("exhaustive search caps atom sets at 3".into()));
    }
    let best = subsets
        .par_iter()
        .map(|sa| {
            let mut best = f64::NEG_INFINITY;
            for sb in &subsets {
                if let Ok(Some((v, _))) = menu_lp(spec, &grid, &[sa.clone(), sb.clone()]) {
                    best = best.max(v);
                }
            }
            best
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::InfeasibleProblem("no atom-set pair supports a menu".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concavify::concavify;

    /// Concave, increasing participation payoff min(2p, 1) of Pr(x1).
    fn ramp() -> ValueFunction {
        ValueFunction::pwl(vec![(0.0, 0.0), (0.5, 1.0), (1.0, 1.0)])
    }

    /// Three voters with critical beliefs 0.8, 0.6, 0.5 and thresholds
    /// 0.4, 0.55, 0.7 at prior 0.2.
    fn referendum() -> VoterSpec {
        VoterSpec {
            voters: vec![
                Voter { utility: ramp(), cost: 0.25, threshold: 0.4 },
                Voter { utility: ramp(), cost: 1.0 / 3.0, threshold: 0.55 },
                Voter {
                    // kinked so expected payoff per unit of posterior is
                    // strictly decreasing where the root lives
                    utility: ValueFunction::pwl(vec![
                        (0.0, 0.0),
                        (0.25, 0.5),
                        (1.0, 0.875),
                    ]),
                    cost: 0.25,
                    threshold: 0.7,
                },
            ],
            quorum: 2,
            prior: 0.2,
        }
    }

    #[test]
    fn critical_beliefs_of_reference_electorate() {
        let spec = referendum();
        let roots: Vec<f64> =
            (0..3).map(|i| critical_belief(&spec, i).unwrap()).collect();
        assert!((roots[0] - 0.8).abs() < 1e-9, "roots = {:?}", roots);
        assert!((roots[1] - 0.6).abs() < 1e-9, "roots = {:?}", roots);
        assert!((roots[2] - 0.5).abs() < 1e-9, "roots = {:?}", roots);
        for (i, &r) in roots.iter().enumerate() {
            let v = &spec.voters[i];
            let residual = split_payoff(v, spec.prior, r) - v.cost;
            assert!(residual.abs() <= 1e-10, "voter {} residual {:e}", i, residual);
        }
    }

    #[test]
    fn free_participation_pins_critical_belief_at_one() {
        let mut spec = referendum();
        spec.voters[0].cost = 0.0;
        assert_eq!(critical_belief(&spec, 0).unwrap(), 1.0);
    }

    #[test]
    fn no_root_when_cost_exceeds_any_split_payoff() {
        let mut spec = referendum();
        spec.voters[0].cost = 2.0;
        assert!(matches!(critical_belief(&spec, 0), Err(Error::NoRoot { .. })));
    }

    #[test]
    fn reference_electorate_outcome() {
        let out = voters_solve(&referendum()).unwrap();
        assert!((out.mu_star - 0.55).abs() < 1e-12);
        assert!((out.value - 0.2 / 0.55).abs() < 1e-12);
        assert_eq!(out.selected, vec![0, 1]);
        // exactly two atoms, one degenerate on the low state
        assert_eq!(out.structure.support_size(), 2);
        let atoms = out.structure.atoms();
        assert!(atoms[0].1.get(1).abs() < 1e-15);
        assert!((atoms[0].0 - (0.55 - 0.2) / 0.55).abs() < 1e-12);
        // the selected voters' participation constraints hold under the
        // returned structure
        for &i in &out.selected {
            let v = &spec_voter(&referendum(), i);
            let e = out.structure.expect(|b| v.utility.eval(b));
            assert!(e >= v.cost - PARTICIPATION_TOL, "voter {} gets {}", i, e);
        }
    }

    fn spec_voter(spec: &VoterSpec, i: usize) -> Voter {
        spec.voters[i].clone()
    }

    #[test]
    fn zero_costs_reduce_to_classic_threshold_persuasion() {
        let spec = VoterSpec {
            voters: vec![Voter { utility: ramp(), cost: 0.0, threshold: 0.6 }],
            quorum: 1,
            prior: 0.3,
        };
        let out = voters_solve(&spec).unwrap();
        assert!((out.mu_star - 0.6).abs() < 1e-12);
        assert!((out.value - 0.5).abs() < 1e-12);
        let lo_mass = out.structure.atoms()[0].0;
        assert!((lo_mass - 0.5).abs() < 1e-12);
    }

    #[test]
    fn prior_above_every_needed_threshold_wins_without_information() {
        let spec = VoterSpec {
            voters: vec![Voter { utility: ramp(), cost: 0.0, threshold: 0.4 }],
            quorum: 1,
            prior: 0.6,
        };
        let out = voters_solve(&spec).unwrap();
        assert_eq!(out.value, 1.0);
        assert_eq!(out.structure.support_size(), 1);
        assert!((out.structure.atoms()[0].1.get(1) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn impossible_quorum_is_reported() {
        let mut spec = referendum();
        for v in &mut spec.voters {
            v.cost = 2.0;
        }
        assert!(matches!(voters_solve(&spec), Err(Error::Unpersuadable { m: 2 })));
    }

    #[test]
    fn enlarging_the_electorate_never_hurts() {
        let base = referendum();
        let base_value = voters_solve(&base).unwrap().value;
        let mut bigger = base.clone();
        bigger.voters.push(Voter { utility: ramp(), cost: 0.1, threshold: 0.5 });
        let bigger_value = voters_solve(&bigger).unwrap().value;
        assert!(
            bigger_value >= base_value - 1e-12,
            "{} < {}",
            bigger_value,
            base_value
        );
    }

    #[test]
    fn convex_utility_optimum_sits_at_participation_boundary() {
        // max(1-2p, 2p-1): the voter values information itself, so the split
        // must be wide enough before participating pays; expected payoff of
        // the {0, nu} split is 1.4 - 0.4/nu past nu = 0.5, crossing cost 0.8
        // at nu = 2/3 — not a vote threshold.
        let spec = VoterSpec {
            voters: vec![Voter {
                utility: ValueFunction::pwl(vec![(0.0, 1.0), (0.5, 0.0), (1.0, 1.0)]),
                cost: 0.8,
                threshold: 0.3,
            }],
            quorum: 1,
            prior: 0.2,
        };
        let root = critical_belief(&spec, 0).unwrap();
        assert!((root - 2.0 / 3.0).abs() < 1e-9, "root = {root}");
        let out = voters_solve(&spec).unwrap();
        assert!((out.mu_star - 2.0 / 3.0).abs() < 1e-9);
        assert!((out.value - 0.3).abs() < 1e-9);
    }

    #[test]
    fn slack_participation_everywhere_pins_critical_belief_at_one_for_convex_utility() {
        let spec = VoterSpec {
            voters: vec![Voter {
                utility: ValueFunction::pwl(vec![(0.0, 1.0), (0.5, 0.0), (1.0, 1.0)]),
                cost: 0.55,
                threshold: 0.3,
            }],
            quorum: 1,
            prior: 0.2,
        };
        // the split payoff never drops below 0.6, so 0.55 is always covered
        assert_eq!(critical_belief(&spec, 0).unwrap(), 1.0);
    }

    // -- screening --

    fn tent() -> ValueFunction {
        ValueFunction::pwl(vec![(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)])
    }

    fn vee() -> ValueFunction {
        ValueFunction::pwl(vec![(0.0, 1.0), (0.5, 0.0), (1.0, 1.0)])
    }

    fn conflicted() -> ScreenSpec {
        ScreenSpec {
            prior: Belief::binary(0.5).unwrap(),
            types: vec![
                ScreenType {
                    weight: 0.5,
                    utility: vee(),
                    payoff: ValueFunction::indicator(0.75, 1),
                },
                ScreenType {
                    weight: 0.5,
                    utility: tent(),
                    payoff: ValueFunction::indicator(0.75, 0),
                },
            ],
        }
    }

    #[test]
    fn single_type_menu_is_the_concave_envelope() {
        let spec = ScreenSpec {
            prior: Belief::binary(0.4).unwrap(),
            types: vec![ScreenType {
                weight: 1.0,
                utility: tent(),
                payoff: ValueFunction::indicator(0.6, 1),
            }],
        };
        let menu = screening_solve(&spec, 20, None).unwrap();
        let cav = concavify(
            &ValueFunction::indicator(0.6, 1),
            &spec.prior,
            20,
        )
        .unwrap();
        assert!((menu.value - cav.value).abs() < 1e-9);
        assert_eq!(menu.structures.len(), 1);
    }

    #[test]
    fn identical_types_duplicate_the_single_type_solution() {
        let one = ScreenSpec {
            prior: Belief::binary(0.4).unwrap(),
            types: vec![ScreenType {
                weight: 1.0,
                utility: vee(),
                payoff: ValueFunction::indicator(0.7, 1),
            }],
        };
        let two = ScreenSpec {
            prior: one.prior.clone(),
            types: vec![
                ScreenType {
                    weight: 0.5,
                    utility: vee(),
                    payoff: ValueFunction::indicator(0.7, 1),
                },
                ScreenType {
                    weight: 0.5,
                    utility: vee(),
                    payoff: ValueFunction::indicator(0.7, 1),
                },
            ],
        };
        let v1 = screening_solve(&one, 16, None).unwrap().value;
        let v2 = screening_solve(&two, 16, None).unwrap().value;
        assert!((v1 - v2).abs() < 1e-6, "{} vs {}", v1, v2);
    }

    #[test]
    fn conflicting_types_match_exhaustive_search() {
        let spec = conflicted();
        let menu = screening_solve(&spec, 8, Some(3)).unwrap();
        let oracle = screening_exhaustive(&spec, 8, 3).unwrap();
        assert!(
            (menu.value - oracle).abs() < 1e-4,
            "search {} vs exhaustive {}",
            menu.value,
            oracle
        );
        for row in &menu.ic_slack {
            for &s in row {
                assert!(s >= -1e-8, "self-selection violated: {}", s);
            }
        }
        for s in &menu.structures {
            assert!(s.barycenter().sup_dist(&spec.prior) < 1e-9);
            assert!(s.support_size() <= 3);
        }
    }

    #[test]
    fn menu_beats_pooling_everyone_on_one_structure() {
        let spec = conflicted();
        let menu = screening_solve(&spec, 8, Some(3)).unwrap();
        let lambdas: Vec<f64> = spec.types.iter().map(|t| t.weight).collect();
        let payoffs: Vec<ValueFunction> =
            spec.types.iter().map(|t| t.payoff.clone()).collect();
        let pooled = concavify(
            &WeightedSum { weights: lambdas.clone(), vfuncs: &payoffs },
            &spec.prior,
            8,
        )
        .unwrap();
        assert!(menu.value >= pooled.value - 1e-9);
    }

    #[test]
    fn menu_supports_respect_the_cap() {
        let spec = conflicted();
        let cap = (spec.n_types() + 2) * spec.prior.dim();
        let menu = screening_solve(&spec, 12, None).unwrap();
        for s in &menu.structures {
            assert!(s.support_size() <= cap);
        }
    }

    #[test]
    fn screening_is_deterministic() {
        let spec = conflicted();
        let a = screening_solve(&spec, 10, None).unwrap();
        let b = screening_solve(&spec, 10, None).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        for (x, y) in a.structures.iter().zip(&b.structures) {
            assert_eq!(x.support_size(), y.support_size());
            for ((wx, px), (wy, py)) in x.atoms().iter().zip(y.atoms()) {
                assert_eq!(wx.to_bits(), wy.to_bits());
                assert_eq!(px.sup_dist(py), 0.0);
            }
        }
    }
}
