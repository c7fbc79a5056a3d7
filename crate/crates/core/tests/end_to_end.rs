use qoshare::analysis::{slater_margin, stability_membership, throughput_bound, PairLoad};
use qoshare::policy::mdp_decide;
use qoshare::{
    check_linearized_feasible, run_scenario, ArrivalModel, ArrivalProcess, BernoulliVector, NetworkTopology, Policy,
    PolicyConfig, PolicyKind, PriorMode, QosSpec, QueueState, RunConfig, Scenario, SchedulePrior, UtilityFunction,
};

/// Two InPs, two clients, one class. Client 0 carries a QoS flow with
/// K·T_s·γ·q = 4.8 > λ = 4; client 1 is best effort.
fn small() -> Scenario {
    let topo = NetworkTopology::full_mesh(&[0.9, 0.8], 2, 1, 1.0).unwrap();
    let spec = QosSpec::new(&topo, 20, vec![0.15, 0.0], vec![0.8, 0.0]).unwrap();
    let arrivals = ArrivalModel::new(
        vec![
            Some(ArrivalProcess::Poisson { rate: 4.0 }),
            Some(ArrivalProcess::Poisson { rate: 3.0 }),
        ],
        40,
    )
    .unwrap();
    let f = UtilityFunction::alpha_fair(vec![0.5], vec![0.5], vec![true, true]).unwrap();
    Scenario::new(topo, spec, arrivals, f).unwrap()
}

fn stationary(s: &Scenario, prior: SchedulePrior, horizon: u64) -> Policy {
    Policy::new(
        &PolicyConfig::new(PolicyKind::Stationary(prior)),
        &s.topology,
        &s.qos,
        &s.utility,
        horizon,
    )
    .unwrap()
}

/// A prior with strict margin in every QoS row and 10% headroom over λ.
fn interior_prior(s: &Scenario) -> SchedulePrior {
    let lambda: Vec<f64> = s.arrivals.rates().iter().map(|l| 1.1 * l).collect();
    let est = slater_margin(&s.topology, &s.qos, &s.arrivals, Some(&lambda), PriorMode::FrameConstant).unwrap();
    assert!(est.assumption_holds);
    est.witness.unwrap()
}

#[test]
fn stationary_prior_in_exact_domain_meets_delay_and_throughput_bounds() {
    let s = small();
    let prior = interior_prior(&s);
    // membership in the exact domain, by the Poisson-binomial tail
    let capacity = 40.0;
    let tail = BernoulliVector::new(prior.success_probs(&s.topology, 0))
        .unwrap()
        .tail_exceeds(capacity * s.qos.gamma(0));
    assert!(tail >= s.qos.reliability(0));

    let horizon = 2000;
    let mut pol = stationary(&s, prior.clone(), horizon);
    let res = run_scenario(&s, &mut pol, &RunConfig::new(horizon, 5)).unwrap();
    let pair = &res.summary.pairs[0];
    let bound = PairLoad::of(0, &s.topology, &s.qos, &s.arrivals)
        .delay_bound(s.qos.gamma(0) * s.qos.reliability(0))
        .unwrap();
    assert!(pair.mean_delay.unwrap() <= bound, "{:?} > {bound}", pair.mean_delay);

    let floor = throughput_bound(&s.qos, &s.topology)[0];
    let (mean, var) = BernoulliVector::new(prior.success_probs(&s.topology, 0)).unwrap().mean_var();
    assert!(mean >= floor);
    let se = (var / horizon as f64).sqrt();
    assert!(pair.mean_service >= floor - 3.0 * se, "{} < {floor}", pair.mean_service);
    assert!(pair.reliability >= s.qos.reliability(0) - 3.0 * (0.8 * 0.2 / horizon as f64).sqrt());
}

#[test]
fn stability_witness_keeps_backlog_sublinear() {
    let s = small();
    let m = stability_membership(&s.arrivals.rates(), &s.topology, &s.qos, PriorMode::FrameConstant).unwrap();
    assert!(m.member);
    let witness = m.witness.unwrap();
    assert!(check_linearized_feasible(&witness, &s.topology, &s.qos).unwrap()[&0] >= -1e-9);
    let horizon = 2000;
    let mut pol = stationary(&s, witness, horizon);
    let res = run_scenario(&s, &mut pol, &RunConfig::new(horizon, 9)).unwrap();
    let slope = res.summary.final_total_backlog as f64 / horizon as f64;
    assert!(slope < 0.05 * 7.0, "backlog/T = {slope}");
}

#[test]
fn membership_is_monotone_in_arrival_rates() {
    let s = small();
    let mut lambda = vec![0.0, 0.0];
    let mut was_member = true;
    for step in 0..40 {
        lambda[0] = 0.5 * step as f64;
        lambda[1] = 0.7 * step as f64;
        let m = stability_membership(&lambda, &s.topology, &s.qos, PriorMode::FrameConstant).unwrap();
        assert!(was_member || !m.member, "non-member became member at {lambda:?}");
        was_member = m.member;
    }
    assert!(!was_member);
}

#[test]
fn scheduler_output_meets_reliability_exactly() {
    let s = small();
    for (t, backlog) in [vec![0, 0], vec![40, 3], vec![0, 90], vec![7, 7]].into_iter().enumerate() {
        let q = QueueState::from_backlog(backlog, t as u64);
        for mode in [PriorMode::FrameConstant, PriorMode::PerSlot] {
            let prior = mdp_decide(&q, &s.topology, &s.qos, &s.utility, 10.0, mode).unwrap();
            let tail = BernoulliVector::new(prior.success_probs(&s.topology, 0))
                .unwrap()
                .tail_exceeds(40.0 * s.qos.gamma(0));
            assert!(tail >= s.qos.reliability(0), "{tail}");
        }
    }
}

#[test]
fn uniform_prior_on_single_server_beats_reliability_target() {
    let topo = NetworkTopology::full_mesh(&[0.8], 101, 1, 1.0).unwrap();
    let spec = QosSpec::new(&topo, 300, vec![6.72e-3; 101], vec![2e-4; 101]).unwrap();
    let arrivals = ArrivalModel::new(vec![Some(ArrivalProcess::Poisson { rate: 1.0 }); 101], 10).unwrap();
    let f = UtilityFunction::alpha_fair(vec![1.0], vec![0.5], vec![true; 101]).unwrap();
    let s = Scenario::new(topo, spec, arrivals, f).unwrap();
    let prior = SchedulePrior::uniform(PriorMode::FrameConstant, &s.topology, 300);
    let mut pol = stationary(&s, prior, 200);
    let res = run_scenario(&s, &mut pol, &RunConfig::new(200, 3)).unwrap();
    for (pair, p) in res.summary.pairs.iter().enumerate() {
        assert!(p.reliability > 2e-4, "pair {pair}: {}", p.reliability);
    }
}

#[test]
fn constrained_run_keeps_slack_every_frame() {
    let s = small();
    let mut pol = Policy::new(&PolicyConfig::new(PolicyKind::Mdp), &s.topology, &s.qos, &s.utility, 300).unwrap();
    let config = RunConfig {
        debug_slack: true,
        ..RunConfig::new(300, 2)
    };
    let res = run_scenario(&s, &mut pol, &config).unwrap();
    assert!(res.frames.iter().all(|f| f.min_slack.unwrap() >= -1e-6));
    assert!(res.summary.pairs[0].reliability >= 0.8 - 3.0 * (0.8 * 0.2 / 300.0f64).sqrt());
}
