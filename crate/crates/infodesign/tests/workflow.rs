//! End-to-end workflow: one small advisory economy pushed through the whole
//! stack — envelope, possibility set, constrained solve, dynamics, and the
//! referendum application — with the cross-module consistency checks a real
//! consumer would rely on.

use infodesign::{
    approximate_set, bellman_operator, concavify, ri_solve, solve_generic, solve_with_slack,
    value_iterate, Belief, Constraint, CostFn, DynamicSpec, ObjectiveSpec, ProblemSpec,
    ValueFunction, Voter, VoterSpec,
};

fn advisor_payoff() -> ValueFunction {
    // advisor is paid when the client is confident enough to act
    ValueFunction::indicator(0.6, 1)
}

fn client_utility() -> ValueFunction {
    // client's decision utility over act/wait with state-dependent payoffs
    ValueFunction::decision(vec![vec![0.0, 1.0], vec![0.35, 0.35]])
}

#[test]
fn envelope_matches_unconstrained_solver() {
    let mu = Belief::new(vec![0.7, 0.3]).unwrap();
    let cav = concavify(&advisor_payoff(), &mu, 24).unwrap();
    // a one-dimensional linear objective reduces the solver to the envelope
    let spec = ProblemSpec::new(
        mu.clone(),
        vec![advisor_payoff()],
        Box::new(
            ObjectiveSpec::Linear { weights: vec![1.0], constant: 0.0 }
                .compile(1)
                .unwrap(),
        ),
    )
    .unwrap();
    let sol = solve_generic(&spec, 8, 24).unwrap();
    assert!((sol.value - cav.value).abs() <= 1e-8);
    assert!(sol.structure.barycenter().sup_dist(&mu) <= 1e-9);
}

#[test]
fn participation_floor_costs_the_advisor_something() {
    let mu = Belief::new(vec![0.7, 0.3]).unwrap();
    let vfuncs = vec![advisor_payoff(), client_utility()];

    // unconstrained revenue
    let free = ProblemSpec::new(
        mu.clone(),
        vfuncs.clone(),
        Box::new(
            ObjectiveSpec::Linear { weights: vec![1.0, 0.0], constant: 0.0 }
                .compile(2)
                .unwrap(),
        ),
    )
    .unwrap();
    let free_sol = solve_generic(&free, 32, 40).unwrap();

    // revenue subject to the client clearing an expected-utility floor,
    // encoded as a nonnegative slack coordinate
    let floor = 0.36;
    let slack = ValueFunction::decision(vec![vec![-floor, 1.0 - floor], vec![0.35 - floor, 0.35 - floor]]);
    let constrained = ProblemSpec::new(
        mu.clone(),
        vec![advisor_payoff(), slack],
        Box::new(
            ObjectiveSpec::Linear { weights: vec![1.0, 0.0], constant: 0.0 }
                .compile(2)
                .unwrap(),
        ),
    )
    .unwrap()
    .with_constraint(Constraint::NonnegTail { m: 1 });
    let tight_sol = solve_with_slack(&constrained, 64, 40).unwrap();

    assert!(tight_sol.value <= free_sol.value + 1e-8, "a constraint cannot help");
    // the floor is satisfied at the reported optimum
    assert!(tight_sol.v_star[1] >= -1e-6);
    // and the generic solver agrees on the constrained problem
    let generic = solve_generic(&constrained, 64, 40).unwrap();
    assert!((tight_sol.value - generic.value).abs() <= 1e-3);
}

#[test]
fn set_approximation_contains_every_solver_answer() {
    let mu = Belief::new(vec![0.7, 0.3]).unwrap();
    let vfuncs = vec![advisor_payoff(), client_utility()];
    let approx = approximate_set(&mu, &vfuncs, 32, 40).unwrap();
    let spec = ProblemSpec::new(
        mu,
        vfuncs,
        Box::new(
            ObjectiveSpec::Quadratic {
                constant: 0.0,
                linear: vec![1.0, 0.5],
                quad: vec![vec![-0.3, 0.0], vec![0.0, -0.3]],
            }
            .compile(2)
            .unwrap(),
        ),
    )
    .unwrap();
    let sol = solve_generic(&spec, 32, 40).unwrap();
    assert!(approx.outer_violation(&sol.v_star) <= 1e-7);
}

#[test]
fn repeated_advice_converges_and_beats_one_shot_at_no_cost() {
    let spec = DynamicSpec::new(advisor_payoff(), CostFn::Zero, 0.95, f64::INFINITY, 20, 2).unwrap();
    let iter = value_iterate(&spec, 1e-9, 5000).unwrap();
    assert!(*iter.step_norms.last().unwrap() <= 1e-9);
    // with free information the continuation value weakly dominates stopping
    for (p, &v) in iter.table.grid().points().to_vec().iter().zip(iter.table.values()) {
        assert!(v + 1e-7 >= spec.stopping.eval(p));
    }
    // applying the operator once more moves nothing: it is a fixed point
    let again = bellman_operator(&iter.table, &spec).unwrap();
    let drift = again
        .values()
        .iter()
        .zip(iter.table.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(drift <= 1e-7);

    // costly attention at a single prior never beats the costless envelope
    let mu = Belief::new(vec![0.7, 0.3]).unwrap();
    let costless = concavify(&advisor_payoff(), &mu, 40).unwrap();
    let costly = ri_solve(&advisor_payoff(), &CostFn::Linear { slope: 0.2 }, &mu, 40, 200).unwrap();
    assert!(costly.value <= costless.value + 1e-9);
}

#[test]
fn referendum_solution_is_implementable() {
    let ramp = ValueFunction::pwl(vec![(0.0, 0.0), (0.5, 1.0), (1.0, 1.0)]);
    let spec = VoterSpec {
        prior: 0.2,
        quorum: 1,
        voters: vec![
            Voter { utility: ramp.clone(), cost: 0.25, threshold: 0.4 },
            Voter { utility: ramp, cost: 1.0 / 3.0, threshold: 0.55 },
        ],
    };
    let out = infodesign::voters_solve(&spec).unwrap();
    // the winning structure is Bayes-plausible at the scalar prior
    let bary = out.structure.barycenter();
    assert!((bary.get(1) - 0.2).abs() <= 1e-9);
    // with quorum 1 only the easiest voter must be persuaded
    assert!((out.mu_star - 0.4).abs() <= 1e-9);
    assert!((out.value - 0.2 / 0.4).abs() <= 1e-9);
}
