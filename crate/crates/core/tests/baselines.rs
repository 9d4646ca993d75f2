mod common;

use flexload::agent::evaluate_policy;
use flexload::oracle::{oracle_evaluation, random_policy_eval, unoptimized_evaluation};
use flexload::{AgentRng, Method, Objective, Problem, RandomPolicy, RewardCoefficients};
use rand::SeedableRng;

#[test]
fn random_baseline_error_shrinks_with_trials() {
    let (_, test) = common::split(Problem::PeakReduction);
    let coeff = RewardCoefficients::default();
    let few = random_policy_eval(&test, &coeff, &mut AgentRng::seed_from_u64(1), 4).unwrap();
    let many = random_policy_eval(&test, &coeff, &mut AgentRng::seed_from_u64(1), 64).unwrap();
    assert_eq!(many.trials, 64);
    assert!(many.peak.sem < few.peak.sem);
    assert!((many.peak.sem - many.peak.std / 8.0).abs() < 1e-12);
    assert!(random_policy_eval(&test, &coeff, &mut AgentRng::seed_from_u64(1), 0).is_err());
}

#[test]
fn disabled_devices_leave_every_policy_at_the_baseline() {
    let (_, test) = common::split(Problem::CostMinimization);
    let mut fixed = test.clone();
    fixed.config.devices.ac.enabled = false;
    fixed.config.devices.ev.enabled = false;
    fixed.config.devices.dw.enabled = false;
    let coeff = RewardCoefficients::default();
    let base = unoptimized_evaluation(&fixed).unwrap();
    let random = evaluate_policy(&fixed, Method::Random, || RandomPolicy, &coeff, 9, 1).unwrap();
    let oracle = oracle_evaluation(&fixed, Objective::Cost).unwrap();
    for eval in [&random, &oracle] {
        for (a, b) in eval.days.iter().zip(&base.days) {
            assert_eq!(a.optimized_net_load, b.optimized_net_load);
            assert!((a.optimized_cost - b.optimized_cost).abs() < 1e-12);
        }
    }
}

#[test]
fn oracle_bounds_the_random_policy() {
    let (_, test) = common::split(Problem::PeakReduction);
    let coeff = RewardCoefficients::default();
    let oracle = oracle_evaluation(&test, Objective::Peak).unwrap();
    let random = evaluate_policy(&test, Method::Random, || RandomPolicy, &coeff, 2, 1).unwrap();
    for (o, r) in oracle.days.iter().zip(&random.days) {
        assert!(o.optimized_peak() <= r.optimized_peak() + 1e-9);
    }
}

#[test]
fn evaluation_does_not_depend_on_thread_count() {
    let (_, test) = common::split(Problem::PeakReduction);
    let coeff = RewardCoefficients::default();
    let one = evaluate_policy(&test, Method::Random, || RandomPolicy, &coeff, 4, 1).unwrap();
    let four = evaluate_policy(&test, Method::Random, || RandomPolicy, &coeff, 4, 4).unwrap();
    assert_eq!(one.days, four.days);
}
