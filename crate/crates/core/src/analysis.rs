//! Closed-form guarantees (throughput, delay, sufficient γq), stability-region
//! membership, and the Slater margin with the constants derived from it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{min_load_factor, ArrivalModel, NetworkTopology, PriorMode, QosSpec, SchedulePrior};
use crate::polyhedron::RowKind;
use crate::robust::{build_linearized_polyhedron, protection_levels, theory_constants, LinearizedDomain, TheoryConstants};
use crate::solve::{lp_solve, LpStatus};

/// K·T_s·γ·q per pair.
pub fn throughput_bound(spec: &QosSpec, topo: &NetworkTopology) -> Vec<f64> {
    let scale = (topo.inp_count() * spec.frame_slots()) as f64;
    (0..topo.pair_count())
        .map(|p| scale * spec.gamma(p) * spec.reliability(p))
        .collect()
}

/// Parameters of one pair that enter the delay formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLoad {
    pub lambda: f64,
    pub second_moment: f64,
    pub rate_cap: f64,
    pub frame_slots: usize,
    pub inp_count: usize,
}

impl PairLoad {
    pub fn of(pair: usize, topo: &NetworkTopology, spec: &QosSpec, arrivals: &ArrivalModel) -> Self {
        let (client, _) = topo.pair_of(pair);
        Self {
            lambda: arrivals.rates()[pair],
            second_moment: arrivals.second_moments()[pair],
            rate_cap: topo.rate_cap(client),
            frame_slots: spec.frame_slots(),
            inp_count: topo.inp_count(),
        }
    }

    /// E[a²] + T_s²U² + T_s·U.
    fn moment_terms(&self) -> f64 {
        let ts = self.frame_slots as f64;
        let u = self.rate_cap;
        self.second_moment + ts * ts * u * u + ts * u
    }

    fn capacity(&self) -> f64 {
        (self.inp_count * self.frame_slots) as f64
    }

    /// Average-delay bound in frames for guaranteed service level `gamma_q`;
    /// `None` unless K·T_s·γq > λ > 0.
    pub fn delay_bound(&self, gamma_q: f64) -> Option<f64> {
        let guaranteed = self.capacity() * gamma_q;
        if !(self.lambda > 0.0 && guaranteed > self.lambda) {
            return None;
        }
        let num = self.moment_terms() - 2.0 * self.lambda * guaranteed;
        Some(num / (2.0 * self.lambda * (guaranteed - self.lambda)))
    }

    /// Smallest γq for which the delay bound is at most `w_star`.
    pub fn sufficient_gamma_q(&self, w_star: f64) -> Result<f64> {
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidArgument("sufficient γq needs λ > 0".into()));
        }
        if !(w_star > 0.0) {
            return Err(Error::InvalidArgument(format!("delay target {w_star} must be > 0")));
        }
        let l = self.lambda;
        Ok((self.moment_terms() + 2.0 * l * l * w_star) / (2.0 * l * self.capacity() * (w_star + 1.0)))
    }
}

/// Delay bound per pair (absent where undefined).
pub fn delay_bound(spec: &QosSpec, topo: &NetworkTopology, arrivals: &ArrivalModel) -> Vec<Option<f64>> {
    (0..topo.pair_count())
        .map(|p| PairLoad::of(p, topo, spec, arrivals).delay_bound(spec.gamma(p) * spec.reliability(p)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub member: bool,
    pub witness: Option<SchedulePrior>,
}

/// Adds `Σ r·p ≥ λ` for every pair with traffic.
fn add_rate_rows(domain: &mut LinearizedDomain, lambda: &[f64]) {
    let map = domain.service_map().clone();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); map.pair_count()];
    for &(var, pair, a) in map.entries() {
        rows[pair].push((var, a));
    }
    for (pair, coeffs) in rows.into_iter().enumerate() {
        if lambda[pair] > 0.0 {
            domain
                .polyhedron_mut()
                .add_row(coeffs, RowKind::Ge, lambda[pair], "rate");
        }
    }
}

/// Is λ inside the linearized stability region? Decided by one feasibility LP.
pub fn stability_membership(
    lambda: &[f64],
    topo: &NetworkTopology,
    spec: &QosSpec,
    mode: PriorMode,
) -> Result<Membership> {
    if lambda.len() != topo.pair_count() {
        return Err(Error::Dimension {
            expected: topo.pair_count(),
            got: lambda.len(),
        });
    }
    if let Some(l) = lambda.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::InvalidArgument(format!("arrival rate {l} must be >= 0")));
    }
    let mut domain = build_linearized_polyhedron(topo, spec, mode)?;
    add_rate_rows(&mut domain, lambda);
    let sol = lp_solve(&vec![0.0; domain.polyhedron().num_vars()], domain.polyhedron());
    match sol.status {
        LpStatus::Optimal => Ok(Membership {
            member: true,
            witness: Some(domain.prior_from_point(topo, &sol.x)?),
        }),
        LpStatus::Infeasible => Ok(Membership {
            member: false,
            witness: None,
        }),
        other => Err(Error::Solver(format!("membership LP ended with {other:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlaterEstimate {
    /// Largest uniform extra delivery ratio every QoS row can absorb;
    /// infinite when no pair is active.
    pub zeta: f64,
    #[serde(skip)]
    pub witness: Option<SchedulePrior>,
    pub assumption_holds: bool,
    pub k1: f64,
    pub k2: Option<f64>,
    pub delta_min: Option<f64>,
    pub k4: Option<f64>,
    pub epsilon: Option<f64>,
}

impl SlaterEstimate {
    /// ‖Q‖∞·K·T_s/ζ + V(f_max − f_min)/ζ for a given backlog level.
    pub fn k3(&self, backlog_inf: f64, v: f64, f_range: (f64, f64), capacity: f64) -> Option<f64> {
        (self.zeta.is_finite() && self.zeta > 0.0)
            .then(|| backlog_inf * capacity / self.zeta + v * (f_range.1 - f_range.0) / self.zeta)
    }
}

/// Values of ζ at or below this count as "no strict margin".
pub const MARGIN_TOL: f64 = 1e-9;

/// Maximizes ζ subject to `K·T_s(γ + ζ) ≤ Σ r·p − B` on every active pair,
/// plus `Σ r·p ≥ λ` when arrival rates are supplied.
pub fn slater_margin(
    topo: &NetworkTopology,
    spec: &QosSpec,
    arrivals: &ArrivalModel,
    lambda: Option<&[f64]>,
    mode: PriorMode,
) -> Result<SlaterEstimate> {
    let constants = theory_constants(topo, spec, arrivals);
    let mut domain = build_linearized_polyhedron(topo, spec, mode)?;
    if let Some(l) = lambda {
        add_rate_rows(&mut domain, l);
    }
    let capacity = (topo.inp_count() * spec.frame_slots()) as f64;
    let blocks = domain.blocks().to_vec();
    let poly = domain.polyhedron_mut();
    let zeta = poly.add_var(0.0, 1.0);
    for b in &blocks {
        poly.rows_mut()[b.row].coeffs.push((zeta, -capacity));
    }
    let mut costs = vec![0.0; poly.num_vars()];
    costs[zeta] = 1.0;
    let sol = lp_solve(&costs, poly);
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::QosUnsupportable),
        other => return Err(Error::Solver(format!("margin LP ended with {other:?}"))),
    }
    let witness = Some(domain.prior_from_point(topo, &sol.x)?);
    if blocks.is_empty() {
        return Ok(SlaterEstimate {
            zeta: f64::INFINITY,
            witness,
            assumption_holds: true,
            k1: constants.k1,
            k2: None,
            delta_min: None,
            k4: None,
            epsilon: None,
        });
    }
    let z = sol.x[zeta];
    let holds = z > MARGIN_TOL;
    let k2 = holds.then(|| (topo.client_count() * topo.class_count() * topo.inp_count()) as f64 * constants.k1 / z);
    let delta_min = min_load_factor(&arrivals.rates(), topo, spec.frame_slots()).ok();
    let k4 = match (k2, delta_min) {
        (Some(k2), Some(d)) => Some(2.0 * k2 / (topo.inp_count() as f64 * d)),
        _ => None,
    };
    Ok(SlaterEstimate {
        zeta: z,
        witness,
        assumption_holds: holds,
        k1: constants.k1,
        k2,
        delta_min,
        k4,
        epsilon: k4.map(|k4| k4 / (spec.frame_slots() as f64).sqrt()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairGuarantee {
    pub client: usize,
    pub class: usize,
    pub active: bool,
    pub gamma: f64,
    pub q: f64,
    pub protection_level: f64,
    pub lambda: f64,
    pub throughput_bound: f64,
    pub delay_bound: Option<f64>,
    pub delay_target: Option<f64>,
    pub sufficient_gamma_q: Option<f64>,
    /// γq ≥ the sufficient threshold for the delay target.
    pub meets_delay_target: Option<bool>,
    /// K·T_s·γq > λ.
    pub covers_arrival_rate: bool,
    pub frame_condition: Option<bool>,
    pub frame_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuaranteeReport {
    pub pairs: Vec<PairGuarantee>,
    pub constants: TheoryConstants,
}

/// Bounds for every pair; `delay_targets[pair]` is an optional W*.
pub fn guarantee_report(
    topo: &NetworkTopology,
    spec: &QosSpec,
    arrivals: &ArrivalModel,
    delay_targets: &[Option<f64>],
) -> Result<GuaranteeReport> {
    let constants = theory_constants(topo, spec, arrivals);
    let levels = protection_levels(topo, spec)?;
    let throughput = throughput_bound(spec, topo);
    let pairs = (0..topo.pair_count())
        .map(|p| {
            let (client, class) = topo.pair_of(p);
            let load = PairLoad::of(p, topo, spec, arrivals);
            let gq = spec.gamma(p) * spec.reliability(p);
            let target = delay_targets.get(p).copied().flatten();
            let sufficient = match target {
                Some(w) if load.lambda > 0.0 => Some(load.sufficient_gamma_q(w)?),
                _ => None,
            };
            let cond = constants.conditions.iter().find(|c| c.pair == p);
            Ok(PairGuarantee {
                client,
                class,
                active: spec.is_active(p),
                gamma: spec.gamma(p),
                q: spec.reliability(p),
                protection_level: levels[p],
                lambda: load.lambda,
                throughput_bound: throughput[p],
                delay_bound: load.delay_bound(gq),
                delay_target: target,
                sufficient_gamma_q: sufficient,
                meets_delay_target: sufficient.map(|s| gq >= s),
                covers_arrival_rate: throughput[p] > load.lambda,
                frame_condition: cond.map(|c| c.satisfied),
                frame_threshold: cond.map(|c| c.threshold),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GuaranteeReport { pairs, constants })
}
