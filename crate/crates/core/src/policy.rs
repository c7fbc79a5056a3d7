//! Per-frame scheduling policies: the QoS-constrained drift-plus-penalty
//! scheduler, the same scheduler without QoS rows, and fixed priors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NetworkTopology, PriorMode, QosSpec, QueueState, SchedulePrior};
use crate::robust::{build_linearized_polyhedron, LinearizedDomain};
use crate::solve::{ConditionalGradient, DriftObjective, SolveOptions, SolveStatus, UtilityFunction};

/// The penalty weight V, either fixed or `coefficient · T^exponent` for a
/// horizon of T frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VRule {
    Fixed { value: f64 },
    Power { coefficient: f64, exponent: f64 },
}

impl Default for VRule {
    fn default() -> Self {
        Self::Power {
            coefficient: 5.0,
            exponent: 1.0 / 3.0,
        }
    }
}

impl VRule {
    pub fn resolve(&self, horizon: u64) -> Result<f64> {
        let v = match *self {
            Self::Fixed { value } => value,
            Self::Power {
                coefficient,
                exponent,
            } => coefficient * (horizon as f64).powf(exponent),
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("V = {v} must be finite and >= 0")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    Mdp,
    DpNoQos,
    Stationary(SchedulePrior),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub v: VRule,
    pub mode: PriorMode,
    pub solve: SolveOptions,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            v: VRule::default(),
            mode: PriorMode::FrameConstant,
            solve: SolveOptions::default(),
        }
    }
}

/// Solver outcome attached to an optimized decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverTrace {
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
    pub reached_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub prior: SchedulePrior,
    pub solver: Option<SolverTrace>,
}

#[derive(Debug, Clone)]
enum Inner {
    Optimizing {
        domain: LinearizedDomain,
        solver: Box<ConditionalGradient>,
        utility: UtilityFunction,
        opts: SolveOptions,
    },
    Stationary(SchedulePrior),
}

/// A policy instance; owns its solver state, so use one per run.
#[derive(Debug, Clone)]
pub struct Policy {
    topo: NetworkTopology,
    v: f64,
    inner: Inner,
}

impl Policy {
    /// Builds the policy for a run of `horizon` frames. Fails with
    /// [`Error::QosUnsupportable`] when the constrained domain is empty.
    pub fn new(
        config: &PolicyConfig,
        topo: &NetworkTopology,
        spec: &QosSpec,
        utility: &UtilityFunction,
        horizon: u64,
    ) -> Result<Self> {
        let v = config.v.resolve(horizon)?;
        let inner = match &config.kind {
            PolicyKind::Stationary(prior) => {
                prior.validate(topo)?;
                if prior.frame_slots() != spec.frame_slots() {
                    return Err(Error::Prior(format!(
                        "prior covers {} slots, frames have {}",
                        prior.frame_slots(),
                        spec.frame_slots()
                    )));
                }
                Inner::Stationary(prior.renormalized(topo)?)
            }
            kind => {
                let effective = match kind {
                    PolicyKind::DpNoQos => spec.without_requirements(),
                    _ => spec.clone(),
                };
                let domain = build_linearized_polyhedron(topo, &effective, config.mode)?;
                let solver = ConditionalGradient::new(domain.polyhedron())?;
                Inner::Optimizing {
                    domain,
                    solver: Box::new(solver),
                    utility: utility.clone(),
                    opts: config.solve,
                }
            }
        };
        Ok(Self {
            topo: topo.clone(),
            v,
            inner,
        })
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn decide(&mut self, queue: &QueueState) -> Result<Decision> {
        match &mut self.inner {
            Inner::Stationary(prior) => Ok(Decision {
                prior: prior.clone(),
                solver: None,
            }),
            Inner::Optimizing {
                domain,
                solver,
                utility,
                opts,
            } => {
                let obj = DriftObjective::new(queue, self.v, utility, domain.service_map())?;
                let report = solver.maximize(&obj, opts)?;
                let prior = domain.prior_from_point(&self.topo, &report.point)?;
                Ok(Decision {
                    prior,
                    solver: Some(SolverTrace {
                        objective: report.objective,
                        gap: report.gap,
                        iterations: report.iterations,
                        reached_tolerance: report.status != SolveStatus::MaxIterations,
                    }),
                })
            }
        }
    }
}

/// One-shot constrained decision (no warm start).
pub fn mdp_decide(
    queue: &QueueState,
    topo: &NetworkTopology,
    spec: &QosSpec,
    utility: &UtilityFunction,
    v: f64,
    mode: PriorMode,
) -> Result<SchedulePrior> {
    let mut config = PolicyConfig::new(PolicyKind::Mdp);
    config.v = VRule::Fixed { value: v };
    config.mode = mode;
    Ok(Policy::new(&config, topo, spec, utility, 1)?.decide(queue)?.prior)
}

/// One-shot decision over the domain without QoS rows.
pub fn dp_noqos_decide(
    queue: &QueueState,
    topo: &NetworkTopology,
    spec: &QosSpec,
    utility: &UtilityFunction,
    v: f64,
    mode: PriorMode,
) -> Result<SchedulePrior> {
    mdp_decide(queue, topo, &spec.without_requirements(), utility, v, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Link;
    use crate::robust::check_linearized_feasible;

    fn two_inp() -> NetworkTopology {
        let links = vec![
            Link { inp: 0, client: 0, success: 0.9 },
            Link { inp: 0, client: 1, success: 0.5 },
            Link { inp: 1, client: 1, success: 0.7 },
        ];
        NetworkTopology::new(2, 2, 1, links, vec![2.0, 2.0]).unwrap()
    }

    #[test]
    fn v_rule_matches_cube_root_schedule() {
        let v = VRule::default().resolve(3000).unwrap();
        assert!((v - 5.0 * 3000f64.cbrt()).abs() < 1e-9);
        assert_eq!(VRule::Fixed { value: 2.0 }.resolve(10).unwrap(), 2.0);
        assert!(VRule::Fixed { value: -1.0 }.resolve(10).is_err());
    }

    #[test]
    fn max_weight_without_utility() {
        let topo = two_inp();
        let spec = QosSpec::unconstrained(&topo, 3).unwrap();
        let f = UtilityFunction::alpha_fair(vec![1.0], vec![0.5], vec![true, true]).unwrap();
        // only client 1 backlogged: InP 0 serves it even though r = 0.5 < 0.9
        let q = QueueState::from_backlog(vec![0, 5], 0);
        for mode in [PriorMode::PerSlot, PriorMode::FrameConstant] {
            let p = mdp_decide(&q, &topo, &spec, &f, 0.0, mode).unwrap();
            for slot in 0..p.stored_slots() {
                assert_eq!(p.get(slot, 0, 0), 0.0);
                assert_eq!(p.get(slot, 1, 0), 1.0);
                assert_eq!(p.get(slot, 2, 0), 1.0);
            }
            assert_eq!(p, dp_noqos_decide(&q, &topo, &spec, &f, 0.0, mode).unwrap());
        }
    }

    #[test]
    fn constrained_decision_is_feasible_and_no_better_than_unconstrained() {
        let topo = NetworkTopology::full_mesh(&[0.8, 0.9], 3, 2, 1.0).unwrap();
        let spec = QosSpec::new(
            &topo,
            10,
            vec![0.1, 0.0, 0.0, 0.0, 0.05, 0.0],
            vec![0.9, 0.0, 0.0, 0.0, 0.5, 0.0],
        )
        .unwrap();
        let f = UtilityFunction::alpha_fair(vec![0.1, 0.5], vec![0.5, 0.875], vec![true; 6]).unwrap();
        let q = QueueState::from_backlog(vec![0, 30, 1, 7, 0, 2], 4);
        let mdp = mdp_decide(&q, &topo, &spec, &f, 5.0, PriorMode::FrameConstant).unwrap();
        let slack = check_linearized_feasible(&mdp, &topo, &spec).unwrap();
        assert!(slack.values().all(|&s| s >= -1e-7), "{slack:?}");
        let dp = dp_noqos_decide(&q, &topo, &spec, &f, 5.0, PriorMode::FrameConstant).unwrap();
        let h = |p: &SchedulePrior| {
            let x = p.expected_service(&topo);
            let drift: f64 = x.iter().zip(q.backlog()).map(|(a, b)| a * *b as f64).sum();
            drift + 5.0 * f.value(&x)
        };
        assert!(h(&dp) >= h(&mdp) * (1.0 - 1e-4));
        assert!(check_linearized_feasible(&dp, &topo, &spec).unwrap()[&0] < 0.0);
    }

    #[test]
    fn infeasible_spec_fails_at_construction() {
        let topo = NetworkTopology::full_mesh(&[0.5], 1, 1, 1.0).unwrap();
        let spec = QosSpec::new(&topo, 2, vec![0.99], vec![0.5]).unwrap();
        let f = UtilityFunction::Linear { coeffs: vec![1.0] };
        let err = Policy::new(&PolicyConfig::new(PolicyKind::Mdp), &topo, &spec, &f, 10).unwrap_err();
        assert_eq!(err, Error::QosUnsupportable);
        assert!(Policy::new(&PolicyConfig::new(PolicyKind::DpNoQos), &topo, &spec, &f, 10).is_ok());
    }

    #[test]
    fn stationary_returns_its_prior() {
        let topo = two_inp();
        let spec = QosSpec::unconstrained(&topo, 4).unwrap();
        let f = UtilityFunction::Linear { coeffs: vec![1.0, 1.0] };
        let prior = SchedulePrior::uniform(PriorMode::FrameConstant, &topo, 4);
        let mut pol = Policy::new(
            &PolicyConfig::new(PolicyKind::Stationary(prior.clone())),
            &topo,
            &spec,
            &f,
            10,
        )
        .unwrap();
        for t in 0..3 {
            let d = pol.decide(&QueueState::from_backlog(vec![t, 2 * t], t)).unwrap();
            assert_eq!(d.prior, prior);
            assert!(d.solver.is_none());
        }
        let bad = SchedulePrior::zeros(PriorMode::FrameConstant, &topo, 4);
        assert!(Policy::new(&PolicyConfig::new(PolicyKind::Stationary(bad)), &topo, &spec, &f, 10).is_err());
    }
}
