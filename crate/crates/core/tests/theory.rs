use proptest::prelude::*;

use policy_lab::theory::{
    check_gravity_condition, domino_bound, run_domino, run_domino_with, run_unlearning, write_theory_csv,
    FlipCriterion, StepSchedule, TheoryRow,
};
use policy_lab::updates::expected_actor_update;
use policy_lab::{ParamKind, PolicyParams, RuleKind, Table};

const ESCORT: RuleKind = RuleKind::PgEs { p: 2.0 };

#[test]
fn constant_step_bounds_hold_on_the_grid() {
    for rule in [RuleKind::PgSm, ESCORT, RuleKind::Di, RuleKind::Ce, RuleKind::Mce] {
        for eta in [0.1, 0.5, 1.0, 2.0] {
            for n in [10, 100, 1_000, 10_000] {
                let r = run_unlearning(rule, StepSchedule::Constant { eta }, n).unwrap();
                assert!(!r.violated, "{rule} eta={eta} n={n}: {:?} vs {:?}", r.n_prime, r.bound);
            }
        }
    }
}

#[test]
fn direct_recovery_is_exact() {
    for eta in [0.1, 0.5, 1.0, 2.0] {
        for n in [10, 100, 1_000] {
            let r = run_unlearning(RuleKind::Di, StepSchedule::Constant { eta }, n).unwrap();
            let expected = (n as f64).min((1.0 / eta).round().max(1.0)) as u64;
            assert_eq!(r.n_prime, Some(expected), "eta={eta} n={n}");
        }
    }
}

#[test]
fn decaying_step_bounds_hold() {
    for rule in [RuleKind::PgSm, RuleKind::Di, RuleKind::Ce, RuleKind::Mce] {
        for eta1 in [0.5, 1.0] {
            for n in [100, 10_000] {
                let r = run_unlearning(rule, StepSchedule::Decaying { eta1 }, n).unwrap();
                assert!(!r.violated, "{rule} eta1={eta1} n={n}: {:?} vs {:?}", r.n_prime, r.bound);
            }
        }
    }
}

fn softmax_step(theta: &[f64], q: &[f64], eta: f64) -> Vec<f64> {
    let params = PolicyParams::new(Table::from_rows(vec![theta.to_vec()]), ParamKind::Softmax).unwrap();
    expected_actor_update(RuleKind::PgSm, &params, 0, q, eta).unwrap().row(0).to_vec()
}

/// Replaying the recorded forward steps backwards, negated, retraces the
/// policy sequence and lands back on the start.
#[test]
fn softmax_gradient_retraces_its_path() {
    let q = [1.0, 0.0];
    for eta in [0.1, 0.5, 1.0, 2.0] {
        for n in [10u64, 100, 1000] {
            let mut theta = vec![0.0, 0.0];
            let mut steps = Vec::new();
            for _ in 0..n {
                let next = softmax_step(&theta, &q, eta);
                steps.push([next[0] - theta[0], next[1] - theta[1]]);
                theta = next;
            }
            for step in steps.iter().rev() {
                theta = vec![theta[0] - step[0], theta[1] - step[1]];
            }
            assert!(theta.iter().all(|x| x.abs() < 1e-9), "eta={eta} n={n}: {theta:?}");

            let r = run_unlearning(RuleKind::PgSm, StepSchedule::Constant { eta }, n).unwrap();
            let k = r.n_prime.unwrap();
            assert!(k >= n && k <= n + 10, "eta={eta} n={n}: n'={k}");
        }
    }
}

#[test]
fn domino_bounds_hold_for_short_chains() {
    for len in 2..=12 {
        for rule in [RuleKind::PgSm, RuleKind::Di, RuleKind::Ce, RuleKind::Mce] {
            for eta in [0.5, 1.0, 2.0] {
                let r = run_domino(rule, eta, len).unwrap();
                assert!(!r.violated, "{rule} eta={eta} |S|={len}: {:?} vs {:?}", r.steps_to_solve, r.bound);
            }
        }
        // Enough budget to witness the exponential lower bound, not to finish.
        let floor = 1u64 << (len - 1);
        let r = run_domino_with(ESCORT, 1.0, len, FlipCriterion::Recovered, floor + 1).unwrap();
        assert!(!r.violated, "pg-es |S|={len}: {:?}", r.steps_to_solve);
    }
}

#[test]
fn direct_domino_is_one_step_per_state() {
    for len in 2..=12 {
        assert_eq!(run_domino(RuleKind::Di, 1.0, len).unwrap().steps_to_solve, Some(len as u64));
        let strict = run_domino_with(RuleKind::Di, 1.0, len, FlipCriterion::Strict, 1000).unwrap();
        assert_eq!(strict.steps_to_solve, Some(2 * len as u64 - 1));
    }
}

#[test]
fn cross_entropy_bound_needs_three_states() {
    assert!(domino_bound(RuleKind::Mce, 1.0, 2).is_none());
    assert!(domino_bound(RuleKind::Mce, 1.0, 3).is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn direct_and_modified_cross_entropy_respect_gravity(
        raw in prop::collection::vec(0.0..1.0f64, 2..=6),
        q in prop::collection::vec(0.0..1.0f64, 6),
        log_eta in -2.0..2.0f64,
    ) {
        let n = raw.len();
        let q = &q[..n];
        let eta = 10f64.powf(log_eta);
        let z: f64 = raw.iter().sum::<f64>() + 1e-9;
        let simplex: Vec<f64> = raw.iter().map(|x| (x + 1e-9 / n as f64) / z).collect();
        prop_assert!(check_gravity_condition(RuleKind::Di, &simplex, q, eta).unwrap());
        let logits: Vec<f64> = raw.iter().map(|x| 10.0 * x - 5.0).collect();
        prop_assert!(check_gravity_condition(RuleKind::Mce, &logits, q, eta).unwrap());
    }
}

#[test]
fn softmax_gradient_can_fall_into_a_gravity_well() {
    let theta = [-5.0, 5.0, 0.0];
    let q = [1.0, 0.9, 0.0];
    assert!(!check_gravity_condition(RuleKind::PgSm, &theta, &q, 1.0).unwrap());
    let start = PolicyParams::new(Table::from_rows(vec![theta.to_vec()]), ParamKind::Softmax).unwrap();
    let next = expected_actor_update(RuleKind::PgSm, &start, 0, &q, 1.0).unwrap();
    assert!(next.policy_row(0).unwrap()[0] < start.policy_row(0).unwrap()[0]);
}

#[test]
fn theory_csv_layout() {
    let rows = vec![
        TheoryRow::from(&run_unlearning(RuleKind::Di, StepSchedule::Constant { eta: 0.5 }, 10).unwrap()),
        TheoryRow::from(&run_domino(RuleKind::Mce, 1.0, 2).unwrap()),
    ];
    let mut out = Vec::new();
    write_theory_csv(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "setting,rule,eta,n_or_S,measured,bound,violated");
    assert_eq!(lines[1], "unlearn-constant,di,0.5,10,2,2.0,false");
    assert!(lines[2].starts_with("domino,mce,1.0,2,"));
    assert!(lines[2].ends_with(",,false"));
}
