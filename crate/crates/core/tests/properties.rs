use std::sync::Arc;

use proptest::prelude::*;

use ope_core::cb::{self, cv_objective, fit_emp, fit_reg, RegCriterion};
use ope_core::qmodel::TabularQ;
use ope_core::terms::{control_variate_f, cumulative_ratio, PreparedData};
use ope_core::{LoggedDataset, QModel, State, Step, TabularPolicy, Trajectory};

fn normalise(row: Vec<f64>) -> Vec<f64> {
    let s: f64 = row.iter().sum();
    row.into_iter().map(|p| p / s).collect()
}

prop_compose! {
    fn policy_row(n_actions: usize)(raw in prop::collection::vec(0.01f64..1.0, n_actions)) -> Vec<f64> {
        normalise(raw)
    }
}

prop_compose! {
    /// Two-state, three-action bandit logs with rewards in `[0, 1]`.
    fn bandit_case()(
        b0 in policy_row(3), b1 in policy_row(3),
        e0 in policy_row(3), e1 in policy_row(3),
        q in prop::collection::vec(0.0f64..1.0, 6),
        rounds in prop::collection::vec((0usize..2, 0.0f64..1.0, 0.0f64..1.0), 3..60),
    ) -> (LoggedDataset, TabularPolicy, TabularQ) {
        let pi_b = TabularPolicy::new(vec![b0, b1]).unwrap();
        let samples = rounds
            .into_iter()
            .map(|(s, u, r)| {
                Step::new(State::discrete(s), ope_core::policy::sample_index(&pi_b.rows()[s], u), r)
            })
            .collect();
        let data = LoggedDataset::from_bandit(samples, Arc::new(pi_b), 1.0).unwrap();
        let q = TabularQ { n_actions: 3, table: q, clip: None };
        (data, TabularPolicy::new(vec![e0, e1]).unwrap(), q)
    }
}

proptest! {
    #[test]
    fn f_has_zero_mean_under_the_behavior_policy(
        pb in policy_row(4),
        pe in policy_row(4),
        m in prop::collection::vec(-5.0f64..5.0, 4),
    ) {
        let pi_b = TabularPolicy::new(vec![pb.clone()]).unwrap();
        let pi_e = TabularPolicy::new(vec![pe]).unwrap();
        let s = State::discrete(0);
        let mean: f64 = (0..4)
            .map(|a| pb[a] * control_variate_f(&s, a, |_, b| m[b], &pi_e, &pi_b).unwrap())
            .sum();
        prop_assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn identical_policies_give_unit_ratios(
        row in policy_row(3),
        actions in prop::collection::vec(0usize..3, 1..10),
    ) {
        let pi = TabularPolicy::new(vec![row]).unwrap();
        let traj = Trajectory::new(actions.iter().map(|&a| Step::new(State::discrete(0), a, 0.0)).collect());
        let w = cumulative_ratio(&traj, &pi, &pi, 0, actions.len() - 1).unwrap();
        prop_assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn snis_stays_within_the_logged_rewards((data, pi_e, _) in bandit_case()) {
        let est = cb::snis_estimate(&data, &pi_e).unwrap().estimate;
        let rewards: Vec<f64> = data.trajectories().iter().map(|t| t.steps[0].reward).collect();
        let lo = rewards.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(est >= lo - 1e-12 && est <= hi + 1e-12);
    }

    #[test]
    fn emp_weights_form_a_distribution((data, pi_e, q) in bandit_case()) {
        let qs: [&dyn QModel; 1] = [&q];
        let p = PreparedData::new(&data, &pi_e, &qs).unwrap();
        // Without 0 in the convex hull of the design rows there is no
        // finite solution; the solver then reports an error.
        if let Ok(fit) = fit_emp(&p, 0) {
            prop_assert!(fit.weights.iter().all(|w| *w > 0.0));
            prop_assert!((fit.weights.sum() - 1.0).abs() < 1e-8);
            prop_assert!(fit.estimate >= -1e-9 && fit.estimate <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn reg_is_no_worse_than_is_or_dr((data, pi_e, q) in bandit_case()) {
        let qs: [&dyn QModel; 1] = [&q];
        let p = PreparedData::new(&data, &pi_e, &qs).unwrap();
        let crit = RegCriterion::SecondMoment;
        let fit = fit_reg(&p, 0, crit);
        let best = cv_objective(&p, 0, &fit.zeta, crit);
        let zero = nalgebra::DVector::zeros(2);
        let dr = nalgebra::DVector::from_vec(vec![0.0, 1.0]);
        prop_assert!(best <= cv_objective(&p, 0, &zero, crit) + 1e-10);
        prop_assert!(best <= cv_objective(&p, 0, &dr, crit) + 1e-10);
    }

    #[test]
    fn estimators_agree_when_policies_coincide((data, _, q) in bandit_case()) {
        // With π_e = π_b every ratio is 1: IS, SNIS and the sample mean coincide.
        let pi = TabularPolicy::new(vec![
            data.behavior().probs(&State::discrete(0)),
            data.behavior().probs(&State::discrete(1)),
        ]).unwrap();
        let mean = data.trajectories().iter().map(|t| t.steps[0].reward).sum::<f64>() / data.n() as f64;
        let is = cb::is_estimate(&data, &pi).unwrap().estimate;
        let snis = cb::snis_estimate(&data, &pi).unwrap().estimate;
        let dr = cb::dr_estimate(&data, &q, &pi).unwrap().estimate;
        prop_assert!((is - mean).abs() < 1e-12);
        prop_assert!((snis - mean).abs() < 1e-12);
        prop_assert!(dr.is_finite());
    }
}
