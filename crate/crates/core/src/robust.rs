//! Robust linearization of the per-frame reliability constraints.
//!
//! The chance constraint `P(μ > K·T_s·γ) ≥ q` on a sum of independent
//! Bernoulli trials is replaced by the deterministic row
//! `K·T_s·γ ≤ Σ r·p − B(Γ, p)`, where `B` charges the Γ most adverse trials.
//! [`LinearizedDomain`] writes that set as an explicit polyhedron by
//! dualizing `B`, so the scheduler only ever deals with linear rows.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{ArrivalModel, NetworkTopology, PriorMode, QosSpec, SchedulePrior};
use crate::polyhedron::{Polyhedron, RowKind};
use crate::solve::ServiceMap;

/// Adverse-outcome weight of a trial with success probability `rp`.
pub fn p_hat(rp: f64) -> f64 {
    rp.max(1.0 - rp)
}

/// Sum of the ⌊Γ⌋ largest entries plus frac(Γ) times the next largest.
pub fn protection_b(p_hat: &[f64], gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0 && gamma <= p_hat.len() as f64) {
        return Err(Error::ProtectionLevel {
            gamma,
            len: p_hat.len(),
        });
    }
    let mut sorted = p_hat.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(protection_sorted(&sorted, gamma))
}

fn protection_sorted(desc: &[f64], gamma: f64) -> f64 {
    let whole = gamma.floor() as usize;
    let frac = gamma - whole as f64;
    let head: f64 = desc[..whole].iter().sum();
    match desc.get(whole) {
        Some(next) if frac > 0.0 => head + frac * next,
        _ => head,
    }
}

/// Γ = sqrt(2·K·T_s·ln(1/(1−q))).
pub fn gamma_level(inp_count: usize, frame_slots: usize, q: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Reliability(q));
    }
    let n = (inp_count * frame_slots) as f64;
    Ok((2.0 * n * (-(-q).ln_1p())).sqrt())
}

/// Γ per pair (0 outside the active set).
pub fn protection_levels(topo: &NetworkTopology, spec: &QosSpec) -> Result<Vec<f64>> {
    (0..topo.pair_count())
        .map(|p| {
            if spec.is_active(p) {
                gamma_level(topo.inp_count(), spec.frame_slots(), spec.reliability(p))
            } else {
                Ok(0.0)
            }
        })
        .collect()
}

/// `B` extended past the trial count: for Γ > n the vector is padded with
/// copies of its largest entry, i.e. `Σ p̂ + (Γ − n)·max p̂`. Plain capping
/// at n would lose the `B ≥ Γ/2` property the reliability guarantee needs.
pub fn protection_extended(p_hat: &[f64], gamma: f64) -> Result<f64> {
    let n = p_hat.len() as f64;
    if gamma <= n {
        return protection_b(p_hat, gamma);
    }
    let top = p_hat.iter().copied().fold(0.0, f64::max);
    Ok(p_hat.iter().sum::<f64>() + (gamma - n) * top)
}

/// Primal slack `Σ r·p − B(Γ, p) − K·T_s·γ` for every active pair.
pub fn check_linearized_feasible(
    prior: &SchedulePrior,
    topo: &NetworkTopology,
    spec: &QosSpec,
) -> Result<BTreeMap<usize, f64>> {
    let levels = protection_levels(topo, spec)?;
    let target_scale = (topo.inp_count() * spec.frame_slots()) as f64;
    let mut out = BTreeMap::new();
    for pair in spec.active_pairs() {
        let probs = prior.success_probs(topo, pair);
        let hats: Vec<f64> = probs.iter().map(|&rp| p_hat(rp)).collect();
        let b = protection_extended(&hats, levels[pair])?;
        let mean: f64 = probs.iter().sum();
        out.insert(pair, mean - b - target_scale * spec.gamma(pair));
    }
    Ok(out)
}

/// Variable and row indices of one pair's QoS block.
#[derive(Debug, Clone, PartialEq)]
pub struct QosBlock {
    pub pair: usize,
    pub gamma: f64,
    /// Bernoulli trials per frame, |N(i)|·T_s.
    pub trials: usize,
    pub s_var: usize,
    /// First `v` variable; one per (link, slot), or per link when frame-constant.
    pub v_start: usize,
    pub v_len: usize,
    /// Variable standing for max p̂ when Γ exceeds the trial count.
    pub overflow_var: Option<usize>,
    pub row: usize,
}

/// The linearized domain as a polyhedron over `(p, s, v)`.
///
/// The first `p_count` variables are the prior entries, in the same
/// `(slot, link, class)` layout as [`SchedulePrior::values`].
#[derive(Debug, Clone)]
pub struct LinearizedDomain {
    poly: Polyhedron,
    mode: PriorMode,
    frame_slots: usize,
    p_count: usize,
    blocks: Vec<QosBlock>,
    service: ServiceMap,
}

pub const TAG_SIMPLEX: &str = "simplex";
pub const TAG_CAP: &str = "cap";
pub const TAG_QOS: &str = "qos";
pub const TAG_DUAL: &str = "dual";

pub fn build_linearized_polyhedron(
    topo: &NetworkTopology,
    spec: &QosSpec,
    mode: PriorMode,
) -> Result<LinearizedDomain> {
    let ts = spec.frame_slots();
    let classes = topo.class_count();
    let links = topo.link_count();
    let stored = match mode {
        PriorMode::PerSlot => ts,
        PriorMode::FrameConstant => 1,
    };
    let replicate = match mode {
        PriorMode::PerSlot => 1.0,
        PriorMode::FrameConstant => ts as f64,
    };
    let p_var = |slot: usize, link: usize, class: usize| (slot * links + link) * classes + class;

    let mut poly = Polyhedron::new();
    let p_count = stored * links * classes;
    for _ in 0..p_count {
        poly.add_var(0.0, 1.0);
    }
    for slot in 0..stored {
        for k in 0..topo.inp_count() {
            let coeffs = topo
                .inp_links(k)
                .iter()
                .flat_map(|&l| (0..classes).map(move |c| (p_var(slot, l, c), 1.0)))
                .collect();
            poly.add_row(coeffs, RowKind::Eq, 1.0, TAG_SIMPLEX);
        }
        for i in 0..topo.client_count() {
            let coeffs = topo
                .client_links(i)
                .iter()
                .flat_map(|&l| (0..classes).map(move |c| (p_var(slot, l, c), 1.0)))
                .collect();
            poly.add_row(coeffs, RowKind::Le, topo.rate_cap(i), TAG_CAP);
        }
    }

    let mut service = ServiceMap::new(topo.pair_count());
    for slot in 0..stored {
        for (l, link) in topo.links().iter().enumerate() {
            for c in 0..classes {
                service.push(
                    p_var(slot, l, c),
                    topo.pair_index(link.client, c),
                    replicate * link.success,
                );
            }
        }
    }

    let levels = protection_levels(topo, spec)?;
    let target_scale = (topo.inp_count() * ts) as f64;
    let mut blocks = Vec::new();
    for pair in spec.active_pairs() {
        let (client, class) = topo.pair_of(pair);
        let client_links = topo.client_links(client);
        let trials = client_links.len() * ts;
        let gamma = levels[pair];
        let excess = gamma - trials as f64;
        // s, v and w never need to exceed 1 since every p̂ ≤ 1
        let s_var = poly.add_var(0.0, 1.0);
        let v_start = poly.num_vars();
        let v_len = client_links.len() * stored;
        for _ in 0..v_len {
            poly.add_var(0.0, 1.0);
        }
        let overflow_var = (excess > 0.0).then(|| poly.add_var(0.0, 1.0));
        let mut qos = Vec::with_capacity(2 * v_len + 2);
        for (j, &l) in client_links.iter().enumerate() {
            let r = topo.links()[l].success;
            for slot in 0..stored {
                let p = p_var(slot, l, class);
                let v = v_start + j * stored + slot;
                qos.push((p, replicate * r));
                qos.push((v, -replicate));
                // s + v ≥ r·p and s + v ≥ 1 − r·p
                poly.add_row(vec![(s_var, 1.0), (v, 1.0), (p, -r)], RowKind::Ge, 0.0, TAG_DUAL);
                poly.add_row(vec![(s_var, 1.0), (v, 1.0), (p, r)], RowKind::Ge, 1.0, TAG_DUAL);
                if let Some(w) = overflow_var {
                    poly.add_row(vec![(w, 1.0), (p, -r)], RowKind::Ge, 0.0, TAG_DUAL);
                    poly.add_row(vec![(w, 1.0), (p, r)], RowKind::Ge, 1.0, TAG_DUAL);
                }
            }
        }
        qos.push((s_var, -gamma.min(trials as f64)));
        if let Some(w) = overflow_var {
            qos.push((w, -excess));
        }
        let row = poly.num_rows();
        poly.add_row(qos, RowKind::Ge, target_scale * spec.gamma(pair), TAG_QOS);
        blocks.push(QosBlock {
            pair,
            gamma,
            trials,
            s_var,
            v_start,
            v_len,
            overflow_var,
            row,
        });
    }

    Ok(LinearizedDomain {
        poly,
        mode,
        frame_slots: ts,
        p_count,
        blocks,
        service,
    })
}

impl LinearizedDomain {
    pub fn polyhedron(&self) -> &Polyhedron {
        &self.poly
    }

    /// Mutable access for callers that append rows or columns (margins,
    /// arrival-rate rows).
    pub fn polyhedron_mut(&mut self) -> &mut Polyhedron {
        &mut self.poly
    }

    pub fn mode(&self) -> PriorMode {
        self.mode
    }

    pub fn p_count(&self) -> usize {
        self.p_count
    }

    pub fn blocks(&self) -> &[QosBlock] {
        &self.blocks
    }

    pub fn service_map(&self) -> &ServiceMap {
        &self.service
    }

    /// Reads the prior off a solver point, clamping round-off and rescaling
    /// each InP's mass back to 1.
    pub fn prior_from_point(&self, topo: &NetworkTopology, z: &[f64]) -> Result<SchedulePrior> {
        let values = z[..self.p_count].iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let raw = SchedulePrior::from_values(self.mode, topo, self.frame_slots, values)?;
        raw.renormalized(topo)
    }

    /// Lifts a prior into the polyhedron, choosing the auxiliaries that
    /// attain `B` exactly: `s` is the (⌊Γ⌋+1)-th largest p̂ and
    /// `v = (p̂ − s)⁺` (and the overflow variable at max p̂).
    pub fn point_for_prior(&self, topo: &NetworkTopology, prior: &SchedulePrior) -> Result<Vec<f64>> {
        if prior.mode() != self.mode || prior.frame_slots() != self.frame_slots {
            return Err(Error::Prior("prior layout does not match the domain".into()));
        }
        let mut z = vec![0.0; self.poly.num_vars()];
        z[..self.p_count].copy_from_slice(prior.values());
        for block in &self.blocks {
            let (client, class) = topo.pair_of(block.pair);
            let links = topo.client_links(client);
            let stored = block.v_len / links.len();
            let copies = self.frame_slots / stored;
            let mut hats = Vec::with_capacity(block.v_len);
            for &l in links {
                let r = topo.links()[l].success;
                for slot in 0..stored {
                    hats.push(p_hat(r * prior.get(slot, l, class)));
                }
            }
            let mut desc: Vec<f64> = hats
                .iter()
                .flat_map(|&h| std::iter::repeat_n(h, copies))
                .collect();
            desc.sort_by(|a, b| b.total_cmp(a));
            let s = desc.get(block.gamma.floor() as usize).copied().unwrap_or(0.0);
            z[block.s_var] = s;
            if let Some(w) = block.overflow_var {
                z[w] = desc.first().copied().unwrap_or(0.0);
            }
            for (j, h) in hats.iter().enumerate() {
                z[block.v_start + j] = (h - s).max(0.0);
            }
        }
        Ok(z)
    }
}

/// Satisfaction of the frame-length condition for one active pair.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FrameCondition {
    pub pair: usize,
    pub threshold: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TheoryConstants {
    pub k1: f64,
    /// K₁/√T_s, the gap between the linearized and exact domains.
    pub k1_gap: f64,
    pub conditions: Vec<FrameCondition>,
    pub b1: f64,
    pub epsilon_margin: Option<f64>,
}

impl TheoryConstants {
    pub fn all_conditions_hold(&self) -> bool {
        self.conditions.iter().all(|c| c.satisfied)
    }
}

/// Squared constant of the frame-length condition.
pub const FRAME_CONDITION_CONSTANT: f64 = 0.795 * 0.795;

/// K₁, the per-pair frame-length thresholds and B₁.
pub fn theory_constants(topo: &NetworkTopology, spec: &QosSpec, arrivals: &ArrivalModel) -> TheoryConstants {
    let k = topo.inp_count() as f64;
    let ts = spec.frame_slots() as f64;
    let qmax = spec.max_reliability();
    let k1 = (2.0 * -(-qmax).ln_1p()).sqrt() / k.sqrt()
        + 2.0 * (topo.u_max() * std::f64::consts::PI * 3f64.exp()).sqrt() / k;
    let r_max = topo.r_max();
    let conditions = spec
        .active_pairs()
        .into_iter()
        .map(|pair| {
            let g = spec.gamma(pair);
            let q = spec.reliability(pair);
            let threshold = FRAME_CONDITION_CONSTANT / ((1.0 - r_max) * k * g * q.powi(3));
            FrameCondition {
                pair,
                threshold,
                satisfied: ts > threshold,
            }
        })
        .collect();
    let a_max = arrivals.a_max() as f64;
    let b1 = (topo.client_count() * topo.class_count()) as f64 * a_max * a_max + ts * ts * k * k;
    TheoryConstants {
        k1,
        k1_gap: k1 / ts.sqrt(),
        conditions,
        b1,
        epsilon_margin: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pbdist::BernoulliVector;
    use crate::solve::{lp_solve, LpStatus};
    use proptest::prelude::*;

    /// Brute force: best subset of size ⌊Γ⌋ plus one extra index.
    fn brute_b(p: &[f64], gamma: f64) -> f64 {
        let n = p.len();
        let whole = gamma.floor() as usize;
        let frac = gamma - whole as f64;
        let mut best = 0.0_f64;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != whole {
                continue;
            }
            let head: f64 = (0..n).filter(|j| mask >> j & 1 == 1).map(|j| p[j]).sum();
            let extra = (0..n)
                .filter(|j| mask >> j & 1 == 0)
                .map(|j| frac * p[j])
                .fold(0.0, f64::max);
            best = best.max(head + extra);
        }
        best
    }

    /// min Γs + Σv  s.t. s + v_j ≥ p̂_j, s, v ≥ 0, by the simplex.
    fn dual_b(p: &[f64], gamma: f64) -> f64 {
        let mut poly = Polyhedron::new();
        let s = poly.add_var(0.0, f64::INFINITY);
        let mut costs = vec![-gamma];
        for &h in p {
            let v = poly.add_var(0.0, f64::INFINITY);
            poly.add_row(vec![(s, 1.0), (v, 1.0)], RowKind::Ge, h, "dual");
            costs.push(-1.0);
        }
        let sol = lp_solve(&costs, &poly);
        assert_eq!(sol.status, LpStatus::Optimal);
        -sol.objective
    }

    fn single_server() -> (NetworkTopology, QosSpec) {
        let topo = NetworkTopology::full_mesh(&[0.8], 101, 1, 1.0).unwrap();
        let spec = QosSpec::new(&topo, 300, vec![6.72e-3; 101], vec![2e-4; 101]).unwrap();
        (topo, spec)
    }

    #[test]
    fn protection_examples() {
        let p = [0.9, 0.6, 0.55];
        assert!((protection_b(&p, 1.5).unwrap() - 1.2).abs() < 1e-15);
        assert!((brute_b(&p, 1.5) - 1.2).abs() < 1e-15);
        assert_eq!(protection_b(&p, 0.0).unwrap(), 0.0);
        assert!((protection_b(&p, 3.0).unwrap() - 2.05).abs() < 1e-15);
        assert!(protection_b(&p, 3.5).is_err());
        assert!(protection_b(&p, -0.1).is_err());
        assert_eq!(protection_b(&[], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn gamma_examples() {
        let g = gamma_level(10, 300, 0.99).unwrap();
        let hand = (6000.0 * 100f64.ln()).sqrt();
        assert!((g - hand).abs() < 1e-9, "{g}");
        assert!((g - 166.2258).abs() < 1e-4, "{g}");
        assert!(((-g * g / 6000.0).exp() - 0.01).abs() < 1e-12);
        let two = gamma_level(1, 2, 1.0 - (-1.0f64).exp()).unwrap();
        assert!((two - 2.0).abs() < 1e-12);
        assert_eq!(gamma_level(5, 5, 0.0).unwrap(), 0.0);
        assert!(gamma_level(1, 1, 1e-12).unwrap() < 1e-5);
        assert!(gamma_level(1, 1, 1.0).is_err());
    }

    #[test]
    fn inverse_of_the_chernoff_exponent() {
        for &q in &[1e-4, 0.3, 0.7, 0.99, 0.999999] {
            let g = gamma_level(3, 40, q).unwrap();
            assert!((1.0 - (-g * g / 240.0).exp() - q).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_active_set_has_only_structural_rows() {
        let topo = NetworkTopology::full_mesh(&[0.8, 0.9], 3, 2, 1.0).unwrap();
        let spec = QosSpec::unconstrained(&topo, 4).unwrap();
        let dom = build_linearized_polyhedron(&topo, &spec, PriorMode::PerSlot).unwrap();
        assert!(dom.blocks().is_empty());
        assert_eq!(dom.polyhedron().num_vars(), 4 * 6 * 2);
        assert!(dom
            .polyhedron()
            .rows()
            .iter()
            .all(|r| r.tag == TAG_SIMPLEX || r.tag == TAG_CAP));
        let prior = SchedulePrior::uniform(PriorMode::PerSlot, &topo, 4);
        assert!(check_linearized_feasible(&prior, &topo, &spec).unwrap().is_empty());
    }

    #[test]
    fn variable_count_matches_layout() {
        let topo = NetworkTopology::full_mesh(&[0.8, 0.9, 0.7], 2, 2, 1.0).unwrap();
        let spec = QosSpec::new(&topo, 5, vec![0.01, 0.0, 0.02, 0.0], vec![0.5, 0.0, 0.9, 0.0]).unwrap();
        let dom = build_linearized_polyhedron(&topo, &spec, PriorMode::PerSlot).unwrap();
        assert_eq!(dom.polyhedron().num_vars(), 5 * 6 * 2 + 2 + 2 * 3 * 5);
        let fc = build_linearized_polyhedron(&topo, &spec, PriorMode::FrameConstant).unwrap();
        assert_eq!(fc.polyhedron().num_vars(), 6 * 2 + 2 + 2 * 3);
    }

    #[test]
    fn single_server_uniform_prior_is_feasible() {
        let (topo, spec) = single_server();
        for mode in [PriorMode::FrameConstant, PriorMode::PerSlot] {
            let prior = SchedulePrior::uniform(mode, &topo, 300);
            let slack = check_linearized_feasible(&prior, &topo, &spec).unwrap();
            assert_eq!(slack.len(), 101);
            assert!(slack.values().all(|&s| s >= 0.0), "{slack:?}");
        }
        let dom = build_linearized_polyhedron(&topo, &spec, PriorMode::FrameConstant).unwrap();
        let prior = SchedulePrior::uniform(PriorMode::FrameConstant, &topo, 300);
        let z = dom.point_for_prior(&topo, &prior).unwrap();
        assert!(dom.polyhedron().max_violation(&z) < 1e-9);
    }

    #[test]
    fn two_trial_instance_is_infeasible() {
        let topo = NetworkTopology::full_mesh(&[0.5], 1, 1, 1.0).unwrap();
        let spec = QosSpec::new(&topo, 2, vec![0.99], vec![0.5]).unwrap();
        let gamma = gamma_level(1, 2, 0.5).unwrap();
        // grid search over p ∈ [0,1]²: best Σ r·p − B stays below K·T_s·γ
        let mut best = f64::NEG_INFINITY;
        for a in 0..=100 {
            for b in 0..=100 {
                let rp = [0.5 * a as f64 / 100.0, 0.5 * b as f64 / 100.0];
                let hats: Vec<f64> = rp.iter().map(|&v| p_hat(v)).collect();
                best = best.max(rp[0] + rp[1] - protection_b(&hats, gamma).unwrap());
            }
        }
        assert!(best < 2.0 * 0.99);
        let dom = build_linearized_polyhedron(&topo, &spec, PriorMode::PerSlot).unwrap();
        let sol = lp_solve(&vec![0.0; dom.polyhedron().num_vars()], dom.polyhedron());
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn frame_constant_matches_expanded_form() {
        let topo = NetworkTopology::full_mesh(&[0.8, 0.6], 3, 2, 1.0).unwrap();
        let spec = QosSpec::new(&topo, 7, vec![0.05; 6], vec![0.6, 0.0, 0.3, 0.9, 0.0, 0.5]).unwrap();
        let fc = build_linearized_polyhedron(&topo, &spec, PriorMode::FrameConstant).unwrap();
        let ps = build_linearized_polyhedron(&topo, &spec, PriorMode::PerSlot).unwrap();
        let values = vec![
            0.1, 0.3, 0.05, 0.15, 0.2, 0.2, // InP 0
            0.25, 0.25, 0.1, 0.1, 0.2, 0.1, // InP 1
        ];
        let prior = SchedulePrior::from_values(PriorMode::FrameConstant, &topo, 7, values).unwrap();
        let slack_fc = check_linearized_feasible(&prior, &topo, &spec).unwrap();
        let slack_ps = check_linearized_feasible(&prior.to_per_slot(), &topo, &spec).unwrap();
        for (pair, s) in &slack_fc {
            assert!((s - slack_ps[pair]).abs() < 1e-12);
        }
        let zf = fc.point_for_prior(&topo, &prior).unwrap();
        let zp = ps.point_for_prior(&topo, &prior.to_per_slot()).unwrap();
        for (bf, bp) in fc.blocks().iter().zip(ps.blocks()) {
            let rf = fc.polyhedron().rows()[bf.row].activity(&zf) - fc.polyhedron().rows()[bf.row].rhs;
            let rp = ps.polyhedron().rows()[bp.row].activity(&zp) - ps.polyhedron().rows()[bp.row].rhs;
            assert!((rf - slack_fc[&bf.pair]).abs() < 1e-9);
            assert!((rp - slack_fc[&bp.pair]).abs() < 1e-9);
        }
        assert_eq!(fc.service_map().apply(&zf), prior.expected_service(&topo));
    }

    #[test]
    fn protection_beyond_trial_count() {
        let p = [0.9, 0.6];
        assert!((protection_extended(&p, 1.5).unwrap() - 1.2).abs() < 1e-15);
        assert!((protection_extended(&p, 2.0).unwrap() - 1.5).abs() < 1e-15);
        assert!((protection_extended(&p, 3.5).unwrap() - (1.5 + 1.5 * 0.9)).abs() < 1e-15);

        // one link, one slot: Γ² = 2 ln(1/(1−q)) > 1 for q = 0.9
        let topo = NetworkTopology::full_mesh(&[0.9], 1, 1, 1.0).unwrap();
        let spec = QosSpec::new(&topo, 1, vec![0.0], vec![0.9]).unwrap();
        let dom = build_linearized_polyhedron(&topo, &spec, PriorMode::PerSlot).unwrap();
        let block = &dom.blocks()[0];
        assert!(block.gamma > 1.0 && block.overflow_var.is_some());
        let prior = SchedulePrior::uniform(PriorMode::PerSlot, &topo, 1);
        let slack = check_linearized_feasible(&prior, &topo, &spec).unwrap()[&0];
        let z = dom.point_for_prior(&topo, &prior).unwrap();
        let row = &dom.polyhedron().rows()[block.row];
        assert!((row.activity(&z) - row.rhs - slack).abs() < 1e-12);
        assert!(dom.polyhedron().max_violation_tagged(&z, TAG_DUAL) < 1e-12);
        // P(μ > 0) = 0.9 meets q but the linearized row rightly refuses it
        assert!(slack < 0.0);
    }

    #[test]
    fn theory_constants_examples() {
        let topo = NetworkTopology::full_mesh(&[0.9; 10], 20, 3, 1.0).unwrap();
        let mut gamma = vec![0.0; 60];
        let mut q = vec![0.0; 60];
        gamma[0] = 0.0204;
        q[0] = 0.99;
        let spec = QosSpec::new(&topo, 300, gamma, q).unwrap();
        let arrivals = ArrivalModel::new(vec![None; 60], 100).unwrap();
        let tc = theory_constants(&topo, &spec, &arrivals);
        let hand = (2.0 * (1.0f64 / 0.01).ln()).sqrt() / 10f64.sqrt()
            + 2.0 * (std::f64::consts::PI * 3f64.exp()).sqrt() / 10.0;
        assert!((tc.k1 - hand).abs() < 1e-12);
        assert!((tc.k1 - 2.548).abs() < 1e-3);
        assert_eq!(tc.conditions.len(), 1);
        assert!((tc.conditions[0].threshold - 31.93).abs() < 0.01);
        assert!(tc.all_conditions_hold());
        assert_eq!(tc.b1, 60.0 * 100.0 * 100.0 + 300.0 * 300.0 * 100.0);

        let mut q = vec![0.0; 60];
        q[0] = 1e-9;
        let weak = QosSpec::new(&topo, 300, vec![0.0204; 60], q).unwrap();
        assert!(!theory_constants(&topo, &weak, &arrivals).all_conditions_hold());
    }

    proptest! {
        #[test]
        fn sorting_matches_brute_force(
            p in prop::collection::vec(0.5f64..=1.0, 0..=8),
            t in 0.0f64..=1.0,
        ) {
            let gamma = t * p.len() as f64;
            prop_assert!((protection_b(&p, gamma).unwrap() - brute_b(&p, gamma)).abs() < 1e-12);
        }

        #[test]
        fn primal_equals_dual(
            p in prop::collection::vec(0.5f64..=1.0, 1..=12),
            t in 0.0f64..=1.0,
        ) {
            let gamma = t * p.len() as f64;
            prop_assert!((protection_b(&p, gamma).unwrap() - dual_b(&p, gamma)).abs() < 1e-8);
        }

        #[test]
        fn monotone_homogeneous_and_symmetric(
            p in prop::collection::vec(0.5f64..=1.0, 1..=10),
            t in 0.0f64..=1.0,
            dt in 0.0f64..=1.0,
            scale in 0.1f64..=4.0,
            bump in 0.0f64..=0.5,
        ) {
            let n = p.len() as f64;
            let g = t * n;
            let b = protection_b(&p, g).unwrap();
            let g2 = (g + dt).min(n);
            prop_assert!(protection_b(&p, g2).unwrap() + 1e-12 >= b);
            let scaled: Vec<f64> = p.iter().map(|v| v * scale).collect();
            prop_assert!((protection_b(&scaled, g).unwrap() - scale * b).abs() < 1e-9);
            let mut rev = p.clone();
            rev.reverse();
            prop_assert!((protection_b(&rev, g).unwrap() - b).abs() < 1e-12);
            let mut up = p.clone();
            up[0] += bump;
            prop_assert!(protection_b(&up, g).unwrap() + 1e-12 >= b);
        }

        #[test]
        fn nonnegative_slack_implies_reliability(
            succ in prop::collection::vec(0.3f64..0.95, 1..=3),
            raw in prop::collection::vec(0.01f64..1.0, 12),
            ts in 1usize..=6,
            q in 0.05f64..0.95,
            frac in 0.0f64..1.0,
        ) {
            let k = succ.len();
            let topo = NetworkTopology::full_mesh(&succ, 2, 1, k as f64).unwrap();
            // one frame-constant prior per InP split over two clients
            let mut values = Vec::new();
            for j in 0..k {
                let a = raw[2 * j];
                let b = raw[2 * j + 1];
                values.push(a / (a + b));
                values.push(b / (a + b));
            }
            let prior = SchedulePrior::from_values(PriorMode::FrameConstant, &topo, ts, values).unwrap();
            let probe = QosSpec::new(&topo, ts, vec![0.0, 0.0], vec![q, 0.0]).unwrap();
            let margin = check_linearized_feasible(&prior, &topo, &probe).unwrap()[&0];
            prop_assume!(margin >= 0.0);
            // tightest γ the prior supports, scaled back by `frac`
            let gamma = (frac * margin / (k * ts) as f64).min(0.999);
            let spec = QosSpec::new(&topo, ts, vec![gamma, 0.0], vec![q, 0.0]).unwrap();
            let slack = check_linearized_feasible(&prior, &topo, &spec).unwrap()[&0];
            prop_assert!(slack >= -1e-12);
            let tail = BernoulliVector::new(prior.success_probs(&topo, 0)).unwrap()
                .tail_exceeds((k * ts) as f64 * gamma);
            prop_assert!(tail >= q, "tail {} < q {}", tail, q);
        }
    }
}
