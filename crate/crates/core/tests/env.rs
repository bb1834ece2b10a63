use std::sync::Arc;

use rmvvc::actionspace::ActionBox;
use rmvvc::env::{evaluate_action, violation_rate, State, VoltageLimits, VvcEnv, DEFAULT_VIOLATION_PENALTY};
use rmvvc::gridflow::{solve_power_flow, CaseId, Injections};
use rmvvc::refopt::{solve_dispatch, DispatchProblem};
use rmvvc::scenario::generate_profiles;
use rmvvc::Error;

fn case33_env(days: usize) -> VvcEnv {
    let net = CaseId::Case33.network().unwrap();
    let scenario = generate_profiles(&net, &net.devices, days, 1).unwrap();
    VvcEnv::new(Arc::new(net), Arc::new(scenario), VoltageLimits::default(), DEFAULT_VIOLATION_PENALTY).unwrap()
}

#[test]
fn reward_matches_independent_evaluation() {
    let env = case33_env(1);
    let net = env.network().clone();
    let a = [0.5, -0.2, 0.9, 1.4];
    let (r, _) = env.evaluate(0, 70, &a).unwrap();
    let mut inj = env.exogenous(0, 70);
    for (d, q) in net.devices.iter().zip(a) {
        inj.q[net.bus_index(d.bus).unwrap()] += q;
    }
    let sol = solve_power_flow(&net, &inj).unwrap();
    let viol: f64 = sol.v.iter().map(|v| (v - 1.05).max(0.0) + (0.95 - v).max(0.0)).sum();
    assert!((r.r_p + sol.loss).abs() < 1e-12);
    assert!((r.r_v + viol).abs() < 1e-12);
    assert!((r.r - (r.r_p + 50.0 * r.r_v)).abs() < 1e-12);
}

#[test]
fn episode_runs_one_day_and_tracks_setpoints() {
    let mut env = case33_env(2);
    let s0 = env.reset(1).unwrap();
    assert_eq!(s0.q_c, vec![0.0; 4]);
    assert_eq!(s0.features(env.network()).len(), State::feature_dim(33, 4));
    assert_eq!(State::feature_dim(33, 4), 103);
    let a = env.action_box().center();
    let mut done_at = None;
    for t in 0..96 {
        let out = env.step(&a).unwrap();
        assert_eq!(out.next_state.q_c, a);
        if out.done {
            done_at = Some(t);
            break;
        }
        let expect = env.observe(1, t + 1, &a).unwrap();
        assert_eq!(out.next_state, expect);
    }
    assert_eq!(done_at, Some(95));
}

#[test]
fn reset_clears_previous_setpoints() {
    let mut env = case33_env(1);
    env.reset(0).unwrap();
    env.step(&[1.0, 1.0, 1.0, 2.0]).unwrap();
    let s = env.reset(0).unwrap();
    assert_eq!(s.q_c, vec![0.0; 4]);
    assert!(env.reset(1).is_err());
}

#[test]
fn out_of_box_action_is_a_contract_error() {
    let mut env = case33_env(1);
    env.reset(0).unwrap();
    assert!(matches!(env.step(&[0.0, 0.0, 0.0, -0.1]), Err(Error::Contract(_))));
    assert!(matches!(env.step(&[0.0, 0.0, 0.0]), Err(Error::Contract(_))));
}

#[test]
fn optimized_action_beats_doing_nothing() {
    let env = case33_env(1);
    let net = env.network();
    let exo = env.exogenous(0, 76);
    let sol = solve_dispatch(&DispatchProblem {
        model: net,
        action_box: ActionBox::from_devices(&net.devices).unwrap(),
        exogenous: exo.clone(),
        limits: VoltageLimits::default(),
        c_v: DEFAULT_VIOLATION_PENALTY,
        seed: 0,
    })
    .unwrap();
    let (best, _) = env.evaluate(0, 76, &sol.action).unwrap();
    let (idle, _) = env.evaluate(0, 76, &[0.0; 4]).unwrap();
    assert!(best.r >= idle.r);
    assert!(idle.r_v < 0.0, "peak load violates limits without support");
}

#[test]
fn violation_rate_counts_both_sides() {
    let lim = VoltageLimits::default();
    assert_eq!(violation_rate(&[1.0; 5], &lim), 0.0);
    assert!((violation_rate(&[0.9, 1.1], &lim) + 0.1).abs() < 1e-12);
}

#[test]
fn base_case_reward_equals_negative_loss_plus_penalty() {
    let net = CaseId::Case33.network().unwrap();
    let lim = VoltageLimits::default();
    let (r, sol) = evaluate_action(&net, &Injections::base_loads(&net), &[0.0; 4], &lim, 50.0).unwrap();
    assert_eq!(r.r_p, -sol.loss);
    assert_eq!(r.r_v, violation_rate(&sol.v, &lim));
}
