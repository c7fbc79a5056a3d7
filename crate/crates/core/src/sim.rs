//! Frame-level simulator: each frame the policy emits a prior, every InP
//! draws one (client, class) per slot from it, each activation succeeds with
//! its link probability, then arrivals are drawn and queues update.
//!
//! Randomness comes from independent ChaCha streams keyed by the run seed:
//! one for arrivals, and per InP one for activations and one for successes.
//! Every slot consumes exactly one activation draw and one success draw per
//! InP, so two policies run with the same seed see identical arrivals and
//! identical uniform variates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ArrivalModel, NetworkTopology, QosSpec, QueueState, SchedulePrior};
use crate::policy::{Policy, SolverTrace};
use crate::robust::check_linearized_feasible;
use crate::solve::UtilityFunction;

/// Slack below which a debug-mode check reports a violation.
pub const SLACK_TOL: f64 = 1e-6;

/// Everything a run needs besides the policy.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: NetworkTopology,
    pub qos: QosSpec,
    pub arrivals: ArrivalModel,
    pub utility: UtilityFunction,
}

impl Scenario {
    pub fn new(
        topology: NetworkTopology,
        qos: QosSpec,
        arrivals: ArrivalModel,
        utility: UtilityFunction,
    ) -> Result<Self> {
        if arrivals.pair_count() != topology.pair_count() {
            return Err(Error::Dimension {
                expected: topology.pair_count(),
                got: arrivals.pair_count(),
            });
        }
        Ok(Self {
            topology,
            qos,
            arrivals,
            utility,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Record {
    #[default]
    PerFrame,
    Summary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub horizon: u64,
    pub seed: u64,
    pub record: Record,
    /// Re-check the linearized slack of every prior; a negative slack aborts.
    pub debug_slack: bool,
}

impl RunConfig {
    pub fn new(horizon: u64, seed: u64) -> Self {
        Self {
            horizon,
            seed,
            record: Record::PerFrame,
            debug_slack: false,
        }
    }
}

/// Named random streams for one run.
#[derive(Debug, Clone)]
pub struct RunStreams {
    arrivals: ChaCha8Rng,
    activation: Vec<ChaCha8Rng>,
    success: Vec<ChaCha8Rng>,
}

impl RunStreams {
    pub fn new(seed: u64, inp_count: usize) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        let k = inp_count as u64;
        Self {
            arrivals: stream(0),
            activation: (0..k).map(|j| stream(1 + j)).collect(),
            success: (0..k).map(|j| stream(1 + k + j)).collect(),
        }
    }

    pub fn arrivals(&mut self) -> &mut ChaCha8Rng {
        &mut self.arrivals
    }
}

/// One link activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Activation {
    pub slot: usize,
    pub inp: usize,
    pub link: usize,
    pub class: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameService {
    /// μ per pair.
    pub service: Vec<u64>,
    /// Activations per pair, successful or not.
    pub attempts: Vec<u64>,
}

/// Plays one frame of `prior`. Pass `log` to receive every activation.
pub fn run_frame(
    prior: &SchedulePrior,
    topo: &NetworkTopology,
    streams: &mut RunStreams,
    mut log: Option<&mut Vec<Activation>>,
) -> FrameService {
    let classes = topo.class_count();
    let mut service = vec![0; topo.pair_count()];
    let mut attempts = vec![0; topo.pair_count()];
    let mut cdf = Vec::new();
    for k in 0..topo.inp_count() {
        let links = topo.inp_links(k);
        let mut cached_slot = usize::MAX;
        for slot in 0..prior.frame_slots() {
            let stored = slot.min(prior.stored_slots() - 1);
            if stored != cached_slot {
                cdf.clear();
                let mut acc = 0.0;
                for &l in links {
                    for c in 0..classes {
                        acc += prior.get(stored, l, c);
                        cdf.push(acc);
                    }
                }
                cached_slot = stored;
            }
            let total = *cdf.last().unwrap();
            let u = streams.activation[k].random::<f64>() * total;
            let pick = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            let link = links[pick / classes];
            let class = pick % classes;
            let pair = topo.pair_index(topo.links()[link].client, class);
            let success = streams.success[k].random::<f64>() < topo.links()[link].success;
            attempts[pair] += 1;
            if success {
                service[pair] += 1;
            }
            if let Some(log) = log.as_deref_mut() {
                log.push(Activation {
                    slot,
                    inp: k,
                    link,
                    class,
                    success,
                });
            }
        }
    }
    FrameService { service, attempts }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameMetrics {
    pub frame: u64,
    pub arrivals: Vec<u64>,
    pub service: Vec<u64>,
    /// Backlog at the end of the frame, Q(t+1).
    pub backlog: Vec<u64>,
    pub delivery_ratio: Vec<f64>,
    pub qos_met: Vec<bool>,
    pub expected_service: Vec<f64>,
    pub utility: f64,
    pub solver: Option<SolverTrace>,
    /// Smallest linearized slack, when debug checks are on.
    pub min_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSummary {
    pub client: usize,
    pub class: usize,
    pub lambda: f64,
    pub active: bool,
    pub gamma: f64,
    pub q: f64,
    /// Fraction of frames whose delivery ratio exceeded γ.
    pub reliability: f64,
    pub mean_service: f64,
    pub mean_backlog: f64,
    /// Little's-law delay in frames; absent without traffic.
    pub mean_delay: Option<f64>,
    pub final_backlog: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct SolverStats {
    pub mean_gap: f64,
    pub max_gap: f64,
    pub mean_iterations: f64,
    pub max_iterations: usize,
    pub frames_short_of_tolerance: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub frames: u64,
    pub seed: u64,
    pub v: f64,
    pub time_average_utility: f64,
    pub final_total_backlog: u64,
    pub pairs: Vec<PairSummary>,
    pub solver: Option<SolverStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub frames: Vec<FrameMetrics>,
    pub summary: RunSummary,
    pub final_queue: QueueState,
}

/// Runs `config.horizon` frames of `policy` on `scenario`.
pub fn run_scenario(scenario: &Scenario, policy: &mut Policy, config: &RunConfig) -> Result<RunResult> {
    if config.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least one frame".into()));
    }
    let topo = &scenario.topology;
    let spec = &scenario.qos;
    let pairs = topo.pair_count();
    let capacity = (topo.inp_count() * spec.frame_slots()) as f64;
    let mut streams = RunStreams::new(config.seed, topo.inp_count());
    let mut queue = QueueState::empty(pairs);

    let mut frames = Vec::new();
    let mut met = vec![0u64; pairs];
    let mut served = vec![0u64; pairs];
    let mut backlog_sum = vec![0u64; pairs];
    let mut utility_sum = 0.0;
    let mut traces = Vec::new();

    for t in 0..config.horizon {
        let decision = policy.decide(&queue)?;
        let prior = decision.prior;
        let min_slack = if config.debug_slack {
            let slack = check_linearized_feasible(&prior, topo, spec)?;
            if let Some((&pair, &s)) = slack.iter().find(|(_, s)| **s < -SLACK_TOL) {
                return Err(Error::SlackViolation {
                    frame: t,
                    pair,
                    slack: s,
                });
            }
            Some(slack.values().copied().fold(f64::INFINITY, f64::min))
        } else {
            None
        };
        let outcome = run_frame(&prior, topo, &mut streams, None);
        let arrivals = scenario.arrivals.sample(streams.arrivals());
        for (acc, q) in backlog_sum.iter_mut().zip(queue.backlog()) {
            *acc += q;
        }
        let next = queue.update(&arrivals, &outcome.service)?;

        let expected = prior.expected_service(topo);
        let utility = scenario.utility.value(&expected);
        utility_sum += utility;
        let ratio: Vec<f64> = outcome.service.iter().map(|&m| m as f64 / capacity).collect();
        let qos_met: Vec<bool> = ratio.iter().enumerate().map(|(p, &r)| r > spec.gamma(p)).collect();
        for (p, ok) in qos_met.iter().enumerate() {
            met[p] += *ok as u64;
            served[p] += outcome.service[p];
        }
        if let Some(trace) = decision.solver {
            traces.push(trace);
        }
        if config.record == Record::PerFrame {
            frames.push(FrameMetrics {
                frame: t,
                arrivals,
                service: outcome.service,
                backlog: next.backlog().to_vec(),
                delivery_ratio: ratio,
                qos_met,
                expected_service: expected,
                utility,
                solver: decision.solver,
                min_slack,
            });
        }
        queue = next;
    }

    let horizon = config.horizon as f64;
    let lambda = scenario.arrivals.rates();
    let pair_summaries = (0..pairs)
        .map(|p| {
            let (client, class) = topo.pair_of(p);
            let mean_backlog = backlog_sum[p] as f64 / horizon;
            PairSummary {
                client,
                class,
                lambda: lambda[p],
                active: spec.is_active(p),
                gamma: spec.gamma(p),
                q: spec.reliability(p),
                reliability: met[p] as f64 / horizon,
                mean_service: served[p] as f64 / horizon,
                mean_backlog,
                mean_delay: (lambda[p] > 0.0).then(|| mean_backlog / lambda[p]),
                final_backlog: queue.backlog()[p],
            }
        })
        .collect();
    let solver = (!traces.is_empty()).then(|| {
        let n = traces.len() as f64;
        SolverStats {
            mean_gap: traces.iter().map(|t| t.gap).sum::<f64>() / n,
            max_gap: traces.iter().map(|t| t.gap).fold(0.0, f64::max),
            mean_iterations: traces.iter().map(|t| t.iterations as f64).sum::<f64>() / n,
            max_iterations: traces.iter().map(|t| t.iterations).max().unwrap_or(0),
            frames_short_of_tolerance: traces.iter().filter(|t| !t.reached_tolerance).count() as u64,
        }
    });
    Ok(RunResult {
        frames,
        summary: RunSummary {
            frames: config.horizon,
            seed: config.seed,
            v: policy.v(),
            time_average_utility: utility_sum / horizon,
            final_total_backlog: queue.total(),
            pairs: pair_summaries,
            solver,
        },
        final_queue: queue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArrivalProcess, PriorMode};
    use crate::pbdist::BernoulliVector;
    use crate::policy::{PolicyConfig, PolicyKind};

    fn small() -> Scenario {
        let topo = NetworkTopology::full_mesh(&[0.8, 0.6], 2, 2, 2.0).unwrap();
        let spec = QosSpec::new(&topo, 5, vec![0.1, 0.0, 0.05, 0.0], vec![0.5, 0.0, 0.3, 0.0]).unwrap();
        let arrivals = ArrivalModel::new(
            vec![
                Some(ArrivalProcess::Poisson { rate: 1.5 }),
                Some(ArrivalProcess::Constant { rate: 1 }),
                Some(ArrivalProcess::Poisson { rate: 0.8 }),
                None,
            ],
            10,
        )
        .unwrap();
        let f = UtilityFunction::alpha_fair(vec![0.1, 0.5], vec![0.5, 0.75], vec![true, true, true, false]).unwrap();
        Scenario::new(topo, spec, arrivals, f).unwrap()
    }

    #[test]
    fn point_mass_with_certain_success_is_deterministic() {
        let topo = NetworkTopology::full_mesh(&[0.999_999_999_999], 2, 1, 1.0).unwrap();
        let mut prior = SchedulePrior::zeros(PriorMode::FrameConstant, &topo, 7);
        prior.set(0, 1, 0, 1.0);
        let mut streams = RunStreams::new(3, 1);
        let mut log = Vec::new();
        let out = run_frame(&prior, &topo, &mut streams, Some(&mut log));
        assert_eq!(out.attempts, vec![0, 7]);
        assert_eq!(out.service, vec![0, 7]);
        assert_eq!(log.len(), 7);
        assert!(log.iter().all(|a| a.link == 1 && a.success));
    }

    #[test]
    fn conservation_per_frame() {
        let s = small();
        let prior = SchedulePrior::uniform(PriorMode::PerSlot, &s.topology, 5);
        let mut streams = RunStreams::new(11, 2);
        for _ in 0..200 {
            let out = run_frame(&prior, &s.topology, &mut streams, None);
            assert_eq!(out.attempts.iter().sum::<u64>(), 2 * 5);
            assert!(out.service.iter().zip(&out.attempts).all(|(m, a)| m <= a));
        }
    }

    #[test]
    fn monte_carlo_mean_matches_expected_service() {
        let s = small();
        let values = vec![0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.4, 0.1];
        let prior = SchedulePrior::from_values(PriorMode::FrameConstant, &s.topology, 5, values).unwrap();
        let expected = prior.expected_service(&s.topology);
        let mut streams = RunStreams::new(5, 2);
        let n = 10_000;
        let mut sums = [0.0; 4];
        for _ in 0..n {
            let out = run_frame(&prior, &s.topology, &mut streams, None);
            for (acc, m) in sums.iter_mut().zip(&out.service) {
                *acc += *m as f64;
            }
        }
        for p in 0..4 {
            // μ is a sum of independent Bernoulli(r·p) over links and slots
            let (_, var) = BernoulliVector::new(prior.success_probs(&s.topology, p)).unwrap().mean_var();
            let se = (var / n as f64).sqrt();
            let mean = sums[p] / n as f64;
            assert!((mean - expected[p]).abs() < 3.0 * se, "pair {p}: {mean} vs {}", expected[p]);
        }
    }

    #[test]
    fn reruns_are_identical_and_replay_through_queue_updates() {
        let s = small();
        let cfg = RunConfig {
            debug_slack: true,
            ..RunConfig::new(40, 9)
        };
        let run = |s: &Scenario| {
            let mut pol = Policy::new(&PolicyConfig::new(PolicyKind::Mdp), &s.topology, &s.qos, &s.utility, 40).unwrap();
            run_scenario(s, &mut pol, &cfg).unwrap()
        };
        let a = run(&s);
        let b = run(&s);
        assert_eq!(a, b);
        let mut q = QueueState::empty(4);
        for f in &a.frames {
            q = q.update(&f.arrivals, &f.service).unwrap();
            assert_eq!(q.backlog(), &f.backlog[..]);
            assert!(f.min_slack.unwrap() >= -SLACK_TOL);
            assert!(f.service.iter().sum::<u64>() <= 10);
        }
        assert_eq!(q, a.final_queue);
    }

    #[test]
    fn policies_share_arrivals_under_one_seed() {
        let s = small();
        let cfg = RunConfig::new(30, 4);
        let mut mdp = Policy::new(&PolicyConfig::new(PolicyKind::Mdp), &s.topology, &s.qos, &s.utility, 30).unwrap();
        let mut dp = Policy::new(&PolicyConfig::new(PolicyKind::DpNoQos), &s.topology, &s.qos, &s.utility, 30).unwrap();
        let a = run_scenario(&s, &mut mdp, &cfg).unwrap();
        let b = run_scenario(&s, &mut dp, &cfg).unwrap();
        for (x, y) in a.frames.iter().zip(&b.frames) {
            assert_eq!(x.arrivals, y.arrivals);
        }
    }

    #[test]
    fn zero_arrivals_keep_queues_empty() {
        let mut s = small();
        s.arrivals = ArrivalModel::new(vec![None; 4], 5).unwrap();
        let prior = SchedulePrior::uniform(PriorMode::FrameConstant, &s.topology, 5);
        let mut pol = Policy::new(&PolicyConfig::new(PolicyKind::Stationary(prior)), &s.topology, &s.qos, &s.utility, 20).unwrap();
        let r = run_scenario(&s, &mut pol, &RunConfig::new(20, 1)).unwrap();
        assert_eq!(r.summary.final_total_backlog, 0);
        assert!(r.summary.pairs.iter().all(|p| p.mean_delay.is_none() && p.mean_backlog == 0.0));
        assert!(r.summary.solver.is_none());
    }

    #[test]
    fn stationary_prior_above_arrival_rates_is_stable() {
        let s = small();
        let prior = SchedulePrior::uniform(PriorMode::FrameConstant, &s.topology, 5);
        let x = prior.expected_service(&s.topology);
        let lambda = s.arrivals.rates();
        assert!(x.iter().zip(&lambda).all(|(a, l)| a > l));
        let mut pol = Policy::new(&PolicyConfig::new(PolicyKind::Stationary(prior)), &s.topology, &s.qos, &s.utility, 2000).unwrap();
        let cfg = RunConfig {
            record: Record::Summary,
            ..RunConfig::new(2000, 17)
        };
        let r = run_scenario(&s, &mut pol, &cfg).unwrap();
        assert!(r.frames.is_empty());
        assert!((r.summary.final_total_backlog as f64) / 2000.0 < 0.01);
    }
}
